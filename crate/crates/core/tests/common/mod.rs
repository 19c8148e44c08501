#![allow(dead_code)]

use parastitch::geometry::{symmetric_transfer_error, FeatureMatch, Homography, Point2};
use parastitch::multifit::{ModelSet, OUTLIER};
use parastitch::synthscene::Scene;

/// Noise-free correspondences on every `step`-th target pixel where `plane`
/// is visible in both images.
pub fn plane_correspondences(scene: &Scene, plane: usize, step: usize) -> Vec<FeatureMatch> {
    let w = scene.target.width() as usize;
    let h = &scene.gt.homographies[plane];
    (0..scene.gt.target_plane.len())
        .step_by(step)
        .filter(|&i| scene.gt.target_plane[i] as usize == plane && scene.gt.visible_in_reference[i])
        .map(|i| {
            let p = Point2::new((i % w) as f64, (i / w) as f64);
            FeatureMatch::new(p, h.map(p).unwrap())
        })
        .collect()
}

pub fn mean_ste(h: &Homography, matches: &[FeatureMatch]) -> f64 {
    matches.iter().map(|m| symmetric_transfer_error(h, m)).sum::<f64>() / matches.len() as f64
}

/// Label (1-based) of the model that best explains each ground-truth plane.
pub fn label_per_plane(scene: &Scene, models: &ModelSet) -> Vec<usize> {
    (0..scene.gt.homographies.len())
        .map(|k| {
            let corr = plane_correspondences(scene, k, 97);
            (1..=models.len())
                .min_by(|&a, &b| {
                    mean_ste(models.model(a).unwrap(), &corr).total_cmp(&mean_ste(models.model(b).unwrap(), &corr))
                })
                .unwrap()
        })
        .collect()
}

/// Ground-truth plane most common among each model's inlier supporters;
/// `None` for models supported only by injected outliers.
pub fn majority_plane(labels: &[usize], planes: &[Option<usize>], models: usize, plane_count: usize) -> Vec<Option<usize>> {
    (1..=models)
        .map(|l| {
            let mut votes = vec![0usize; plane_count];
            for (&lab, p) in labels.iter().zip(planes) {
                if let (true, Some(p)) = (lab == l, p) {
                    votes[*p] += 1;
                }
            }
            let (best, n) = votes.iter().enumerate().max_by_key(|(_, n)| **n).unwrap();
            (*n > 0).then_some(best)
        })
        .collect()
}

/// Inlier matches placed on a model whose supporters mostly come from another plane.
pub fn cross_plane_mislabels(labels: &[usize], planes: &[Option<usize>], models: usize, plane_count: usize) -> usize {
    let major = majority_plane(labels, planes, models, plane_count);
    labels
        .iter()
        .zip(planes)
        .filter(|(&l, p)| l != OUTLIER && p.is_some() && major[l - 1] != **p)
        .count()
}

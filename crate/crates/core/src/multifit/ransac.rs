use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{EnergyParams, ModelSet, MIN_MODEL_SUPPORT};
use crate::error::{Error, Result};
use crate::geometry::{estimate_homography_dlt, fit_homography, symmetric_transfer_error, FeatureMatch, Homography};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacOptions {
    /// Inlier threshold on the symmetric transfer error (pixels).
    pub threshold: f64,
    pub confidence: f64,
    pub max_trials: usize,
}

impl Default for RansacOptions {
    fn default() -> Self {
        Self { threshold: 3.0, confidence: 0.995, max_trials: 2000 }
    }
}

fn inliers_of(h: &Homography, matches: &[FeatureMatch], pool: &[usize], threshold: f64) -> Vec<usize> {
    pool.iter()
        .copied()
        .filter(|&i| symmetric_transfer_error(h, &matches[i]) < threshold)
        .collect()
}

fn trials_needed(inlier_ratio: f64, confidence: f64, cap: usize) -> usize {
    let w4 = inlier_ratio.powi(4);
    if w4 >= 1.0 {
        return 1;
    }
    if w4 <= 0.0 {
        return cap;
    }
    let n = (1.0 - confidence).ln() / (1.0 - w4).ln();
    if n.is_finite() {
        (n.ceil() as usize).clamp(1, cap)
    } else {
        cap
    }
}

/// One 4-point RANSAC round on `pool`, followed by refit-and-regrow on the consensus set.
fn ransac_round(
    matches: &[FeatureMatch],
    pool: &[usize],
    opts: &RansacOptions,
    rng: &mut ChaCha8Rng,
) -> Option<(Homography, Vec<usize>)> {
    if pool.len() < 4 {
        return None;
    }
    let mut best: Vec<usize> = Vec::new();
    let mut needed = opts.max_trials;
    let mut trial = 0;
    while trial < needed.min(opts.max_trials) {
        trial += 1;
        let sample_idx = sample(rng, pool.len(), 4);
        let minimal: Vec<FeatureMatch> = sample_idx.iter().map(|k| matches[pool[k]]).collect();
        let Ok(h) = estimate_homography_dlt(&minimal) else { continue };
        let inl = inliers_of(&h, matches, pool, opts.threshold);
        if inl.len() > best.len() {
            best = inl;
            needed = trials_needed(best.len() as f64 / pool.len() as f64, opts.confidence, opts.max_trials);
        }
    }
    if best.len() < MIN_MODEL_SUPPORT {
        return None;
    }
    let mut consensus = best;
    let mut model = None;
    for _ in 0..3 {
        let subset: Vec<FeatureMatch> = consensus.iter().map(|&i| matches[i]).collect();
        let Ok(h) = fit_homography(&subset) else { break };
        let grown = inliers_of(&h, matches, pool, opts.threshold);
        let stable = grown == consensus;
        if grown.len() < consensus.len() && model.is_some() {
            break;
        }
        model = Some(h);
        if grown.len() >= MIN_MODEL_SUPPORT {
            consensus = grown;
        }
        if stable {
            break;
        }
    }
    let h = model?;
    (consensus.len() >= MIN_MODEL_SUPPORT).then_some((h, consensus))
}

/// Initial model set by sequential RANSAC with default options.
pub fn init_models_iterative_ransac(matches: &[FeatureMatch], params: &EnergyParams, seed: u64) -> Result<ModelSet> {
    init_models_with(matches, params, &RansacOptions::default(), seed)
}

/// Sequential RANSAC: each round claims the consensus set of the best
/// homography, refined by DLT + LM, until fewer than `min_remaining`
/// matches are left or a round finds fewer than eight inliers.
pub fn init_models_with(
    matches: &[FeatureMatch],
    params: &EnergyParams,
    opts: &RansacOptions,
    seed: u64,
) -> Result<ModelSet> {
    if matches.len() < 4 {
        return Err(Error::InsufficientMatches { needed: 4, got: matches.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut remaining: Vec<usize> = (0..matches.len()).collect();
    let mut models = Vec::new();
    while let Some((h, inliers)) = ransac_round(matches, &remaining, opts, &mut rng) {
        log::debug!("ransac round {}: {} inliers", models.len() + 1, inliers.len());
        models.push(h);
        let claimed: std::collections::HashSet<usize> = inliers.into_iter().collect();
        remaining.retain(|i| !claimed.contains(i));
        if remaining.len() < params.min_remaining.max(4) {
            break;
        }
    }
    if models.is_empty() {
        return Err(Error::NoModelFound);
    }
    Ok(ModelSet::new(models))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point2;

    #[test]
    fn trials_formula() {
        assert_eq!(trials_needed(1.0, 0.995, 2000), 1);
        assert_eq!(trials_needed(0.0, 0.995, 2000), 2000);
        // 50% inliers: ln(0.005)/ln(1-1/16) = 82.1
        assert_eq!(trials_needed(0.5, 0.995, 2000), 83);
    }

    #[test]
    fn single_plane_one_model() {
        let h = Homography::from_rows([[1.01, 0.02, 5.0], [-0.01, 0.99, 3.0], [1e-5, 2e-5, 1.0]]).unwrap();
        let matches: Vec<_> = (0..60)
            .map(|i| {
                let p = Point2::new((i * 37 % 200) as f64 + 0.5, (i * 53 % 150) as f64 + 0.25);
                FeatureMatch::new(p, h.map(p).unwrap())
            })
            .collect();
        let models = init_models_iterative_ransac(&matches, &EnergyParams::default(), 7).unwrap();
        assert_eq!(models.len(), 1);
        for m in &matches {
            assert!(symmetric_transfer_error(&models.models[0], m) < 1e-6);
        }
    }

    #[test]
    fn too_few_matches() {
        let m = FeatureMatch::new(Point2::new(0.0, 0.0), Point2::new(0.0, 0.0));
        assert!(matches!(
            init_models_iterative_ransac(&[m; 3], &EnergyParams::default(), 0),
            Err(Error::InsufficientMatches { .. })
        ));
    }
}

//! Plain-text match files: one `x_t y_t x_r y_r` per line, `#` starts a comment line.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{FeatureMatch, MatchSet, Point2};

pub fn parse_matches(text: &str) -> Result<MatchSet> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = || Error::Decode(format!("match file line {}: expected four numbers", n + 1));
        let v: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        if v.len() != 4 || v.iter().any(|x| !x.is_finite()) {
            return Err(bad());
        }
        out.push(FeatureMatch::new(Point2::new(v[0], v[1]), Point2::new(v[2], v[3])));
    }
    // an empty file is a fitting problem, a malformed one is an input problem
    MatchSet::new(out).map_err(|e| match e {
        Error::EmptyResult => Error::InsufficientMatches { needed: 4, got: 0 },
        Error::DegenerateConfiguration(msg) => Error::Decode(format!("match file: {msg}")),
        other => other,
    })
}

/// Shortest round-trip float formatting, so reading back is exact.
pub fn format_matches(matches: &[FeatureMatch]) -> String {
    let mut s = String::from("# x_t y_t x_r y_r\n");
    for m in matches {
        let _ = writeln!(s, "{} {} {} {}", m.target_pt.x, m.target_pt.y, m.ref_pt.x, m.ref_pt.y);
    }
    s
}

pub fn read_matches(path: &Path) -> Result<MatchSet> {
    parse_matches(&std::fs::read_to_string(path)?)
}

pub fn write_matches(path: &Path, matches: &[FeatureMatch]) -> Result<()> {
    std::fs::write(path, format_matches(matches))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_exact() {
        let m = vec![
            FeatureMatch::new(Point2::new(0.1, 2.0 / 3.0), Point2::new(1e-7, 399.999)),
            FeatureMatch::new(Point2::new(5.0, 6.0), Point2::new(7.25, 8.0)),
        ];
        let back = parse_matches(&format_matches(&m)).unwrap();
        assert_eq!(back.as_slice(), &m[..]);
    }

    #[test]
    fn comments_and_errors() {
        let ok = parse_matches("# header\n\n  # indented comment\n1 2 3 4\n").unwrap();
        assert_eq!(ok.len(), 1);
        assert!(matches!(parse_matches("1 2 3\n"), Err(Error::Decode(_))));
        assert!(matches!(parse_matches("1 2 3 x\n"), Err(Error::Decode(_))));
        assert!(matches!(parse_matches("# nothing\n"), Err(Error::InsufficientMatches { .. })));
        assert!(matches!(parse_matches("1 2 3 4\n1 2 3 4\n"), Err(Error::Decode(_))));
    }
}

use super::{EpisodeResult, EvalError};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub sr: f64,
    pub spl: f64,
    pub episodes: usize,
}

/// `S * L / max(P, L)`, taken as `S` when both lengths are zero.
pub fn spl_contribution(success: bool, path_length: f64, shortest_length: f64) -> f64 {
    if !success {
        return 0.0;
    }
    let denom = path_length.max(shortest_length);
    if denom <= 0.0 {
        1.0
    } else {
        (shortest_length / denom).clamp(0.0, 1.0)
    }
}

pub fn compute_metrics(results: &[EpisodeResult]) -> Result<Metrics, EvalError> {
    if results.is_empty() {
        return Err(EvalError::Empty);
    }
    let n = results.len() as f64;
    let successes = results.iter().filter(|r| r.success).count() as f64;
    let spl_sum: f64 = results.iter().map(EpisodeResult::spl).sum();
    Ok(Metrics {
        sr: successes / n,
        spl: spl_sum / n,
        episodes: results.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        let all = vec![EpisodeResult::scored(true, 4.0, 4.0); 3];
        let m = compute_metrics(&all).unwrap();
        assert_eq!((m.sr, m.spl), (1.0, 1.0));

        let m = compute_metrics(&[EpisodeResult::scored(true, 10.0, 5.0)]).unwrap();
        assert_eq!((m.sr, m.spl), (1.0, 0.5));

        let m = compute_metrics(&[EpisodeResult::scored(false, 3.0, 5.0), EpisodeResult::scored(false, 0.0, 1.0)]).unwrap();
        assert_eq!((m.sr, m.spl), (0.0, 0.0));

        assert!(matches!(compute_metrics(&[]), Err(EvalError::Empty)));
        assert_eq!(spl_contribution(true, 0.0, 0.0), 1.0);
    }

    proptest! {
        #[test]
        fn spl_bounded_by_sr(eps in proptest::collection::vec((any::<bool>(), 0.0f64..50.0, 0.0f64..50.0), 1..30)) {
            let rs: Vec<EpisodeResult> = eps.iter().map(|&(s, p, l)| EpisodeResult::scored(s, p, l)).collect();
            let m = compute_metrics(&rs).unwrap();
            prop_assert!(0.0 <= m.spl && m.spl <= m.sr + 1e-15 && m.sr <= 1.0);
            for r in &rs {
                prop_assert!((0.0..=1.0).contains(&r.spl()));
            }
        }
    }
}

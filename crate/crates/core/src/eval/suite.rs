use super::{compute_metrics, run_episode, AblationConfig, EpisodeResult, EpisodeSpec, EvalError, SystemConfig};
use crate::advisor::Advisor;
use crate::scene::{generate_scene, GeneratorConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::sync::Arc;

/// A generated benchmark: `episodes` scenes drawn from one generator configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSpec {
    pub generator: GeneratorConfig,
    pub episodes: usize,
    pub seed: u64,
    pub max_steps: u32,
    pub success_distance: f64,
}

/// Seed of the `index`-th scene of a suite.
pub fn episode_seed(suite_seed: u64, index: usize) -> u64 {
    suite_seed.wrapping_mul(1_000_003).wrapping_add(index as u64)
}

pub fn build_suite(spec: &SuiteSpec) -> Result<Vec<EpisodeSpec>, EvalError> {
    (0..spec.episodes)
        .map(|i| {
            let seed = episode_seed(spec.seed, i);
            let g = generate_scene(&spec.generator, seed)?;
            EpisodeSpec::new(Arc::new(g.scene), g.target_category, spec.max_steps, spec.success_distance, seed)
        })
        .collect()
}

/// Runs every episode, on up to `threads` workers. Results are in episode order whatever
/// the schedule, so serial and parallel runs agree exactly.
pub fn run_suite(
    episodes: &[EpisodeSpec],
    ablation: &AblationConfig,
    system: &SystemConfig,
    advisor: &dyn Advisor,
    threads: usize,
) -> Vec<EpisodeResult> {
    let one = |e: &EpisodeSpec| run_episode(e, ablation, system, advisor);
    if threads <= 1 || episodes.len() <= 1 {
        return episodes.iter().map(one).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(|| episodes.par_iter().map(one).collect()),
        Err(e) => {
            log::warn!("could not start {threads} workers ({e}); running serially");
            episodes.iter().map(one).collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub sr: f64,
    pub spl: f64,
    pub episodes: usize,
    pub successes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn row(&self, k: usize) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.k == k)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,sr,spl,episodes,successes\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{},{}", r.k, r.sr, r.spl, r.episodes, r.successes);
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sweep table serializes")
    }
}

/// Re-runs the same suite once per memory capacity in `ks`, in the given order.
pub fn sweep_k(
    episodes: &[EpisodeSpec],
    ks: &[usize],
    base: &AblationConfig,
    system: &SystemConfig,
    advisor: &dyn Advisor,
    threads: usize,
) -> Result<SweepTable, EvalError> {
    if ks.is_empty() {
        return Err(EvalError::NoCapacities);
    }
    let mut rows = Vec::with_capacity(ks.len());
    for &k in ks {
        let ablation = AblationConfig {
            memory_capacity: k,
            ..base.clone()
        };
        let results = run_suite(episodes, &ablation, system, advisor, threads);
        let m = compute_metrics(&results)?;
        log::info!("K = {k}: SR {:.3}, SPL {:.3}", m.sr, m.spl);
        rows.push(SweepRow {
            k,
            sr: m.sr,
            spl: m.spl,
            episodes: m.episodes,
            successes: results.iter().filter(|r| r.success).count(),
        });
    }
    Ok(SweepTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::advisor::ScriptedAdvisor;
    use crate::scene::Template;

    fn small_suite(n: usize) -> Vec<EpisodeSpec> {
        build_suite(&SuiteSpec {
            generator: GeneratorConfig::with_template(Template::Rooms),
            episodes: n,
            seed: 5,
            max_steps: 8,
            success_distance: 1.0,
        })
        .unwrap()
    }

    #[test]
    fn single_k_matches_direct_run() {
        let eps = small_suite(2);
        let adv = ScriptedAdvisor::new(0);
        let sys = SystemConfig::default();
        let base = AblationConfig::default();
        let table = sweep_k(&eps, &[10], &base, &sys, &adv, 1).unwrap();
        let direct = compute_metrics(&run_suite(&eps, &base, &sys, &adv, 1)).unwrap();
        assert_eq!(table.rows.len(), 1);
        assert_eq!((table.rows[0].sr, table.rows[0].spl), (direct.sr, direct.spl));
        assert!(table.to_csv().starts_with("k,sr,spl"));
        assert!(matches!(sweep_k(&eps, &[], &base, &sys, &adv, 1), Err(EvalError::NoCapacities)));
    }

    #[test]
    fn parallel_equals_serial() {
        let eps = small_suite(3);
        let adv = ScriptedAdvisor::new(0);
        let sys = SystemConfig::default();
        let base = AblationConfig::default();
        assert_eq!(run_suite(&eps, &base, &sys, &adv, 1), run_suite(&eps, &base, &sys, &adv, 3));
    }
}

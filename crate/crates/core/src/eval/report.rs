use super::{compute_metrics, EpisodeResult, EvalError, StepRecord};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub index: usize,
    pub scene: String,
    pub target_category: String,
    pub seed: u64,
    pub success: bool,
    pub stop_issued: bool,
    pub steps_used: u32,
    pub path_length: f64,
    pub shortest_length: Option<f64>,
    pub spl: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub config: serde_json::Value,
    #[serde(rename = "SR")]
    pub sr: f64,
    #[serde(rename = "SPL")]
    pub spl: f64,
    pub episodes: usize,
    pub per_episode: Vec<EpisodeSummary>,
}

impl SummaryReport {
    pub fn new(config: serde_json::Value, results: &[EpisodeResult]) -> Result<Self, EvalError> {
        let m = compute_metrics(results)?;
        let per_episode = results
            .iter()
            .enumerate()
            .map(|(index, r)| EpisodeSummary {
                index,
                scene: r.scene.clone(),
                target_category: r.target_category.clone(),
                seed: r.seed,
                success: r.success,
                stop_issued: r.stop_issued,
                steps_used: r.steps_used,
                path_length: r.path_length,
                shortest_length: r.shortest_length,
                spl: r.spl(),
                error: r.error.clone(),
            })
            .collect();
        Ok(Self {
            config,
            sr: m.sr,
            spl: m.spl,
            episodes: m.episodes,
            per_episode,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,scene,target,seed,success,stop_issued,steps_used,path_length,shortest_length,spl\n");
        for e in &self.per_episode {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                e.index,
                e.scene,
                e.target_category,
                e.seed,
                e.success,
                e.stop_issued,
                e.steps_used,
                e.path_length,
                e.shortest_length.map_or(String::new(), |l| l.to_string()),
                e.spl
            );
        }
        out
    }
}

#[derive(Serialize)]
struct LogLine<'a> {
    episode: usize,
    scene: &'a str,
    target_category: &'a str,
    #[serde(flatten)]
    record: &'a StepRecord,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EvalError + '_ {
    move |source| EvalError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// One JSON object per executed step, episodes in order.
pub fn write_episode_log(path: &Path, results: &[EpisodeResult]) -> Result<(), EvalError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = std::io::BufWriter::new(file);
    for (episode, r) in results.iter().enumerate() {
        for record in &r.step_records {
            let line = LogLine {
                episode,
                scene: &r.scene,
                target_category: &r.target_category,
                record,
            };
            serde_json::to_writer(&mut w, &line).map_err(|e| io_err(path)(e.into()))?;
            w.write_all(b"\n").map_err(io_err(path))?;
        }
    }
    w.flush().map_err(io_err(path))
}

/// Writes `episodes.jsonl`, `summary.json` and `summary.csv` into `dir`.
pub fn write_run_outputs(
    dir: &Path,
    config: serde_json::Value,
    results: &[EpisodeResult],
) -> Result<SummaryReport, EvalError> {
    let report = SummaryReport::new(config, results)?;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_episode_log(&dir.join("episodes.jsonl"), results)?;
    let summary = dir.join("summary.json");
    fs::write(&summary, report.to_json()).map_err(io_err(&summary))?;
    let csv = dir.join("summary.csv");
    fs::write(&csv, report.to_csv()).map_err(io_err(&csv))?;
    Ok(report)
}

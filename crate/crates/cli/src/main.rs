mod config;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use config::RunConfig;
use objnav_core::advisor::{Advisor, RemoteAdvisor, ScriptedAdvisor};
use objnav_core::eval::{
    build_suite, run_suite, sweep_k, write_run_outputs, AdvisorKind, EpisodeSpec, SuiteSpec, SummaryReport,
};
use objnav_core::scene::{generate_scene, GeneratorConfig, Scene, Template};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Parser)]
#[command(name = "objnav", version, about = "Object-goal navigation with episodic memory and rethinking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate scene files and an episode manifest.
    GenScenes(GenArgs),
    /// Run every episode of a configuration and write logs plus a summary report.
    Run(RunArgs),
    /// Re-run a configuration once per memory capacity.
    Sweep(SweepArgs),
    /// Print a summary report written by `run`.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Optional config; its [suite.generator] section supplies the generator settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "rooms")]
    template: String,
    /// Number of scenes.
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    parallel: Option<usize>,
    #[arg(long)]
    no_mode_a: bool,
    #[arg(long)]
    no_mode_b: bool,
    /// Memory capacity K.
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Overrides,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Overrides,
    /// Comma-separated memory capacities, e.g. 0,5,8,10,12,15.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    ks: Vec<usize>,
}

#[derive(Args)]
struct ReportArgs {
    /// Output directory of a previous `run`.
    dir: PathBuf,
}

/// Index of generated scenes, stored next to them as `episodes.json`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    generator: GeneratorConfig,
    seed: u64,
    episodes: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestEntry {
    /// Scene file, relative to the manifest.
    scene: PathBuf,
    target_category: String,
    seed: u64,
}

const MANIFEST: &str = "episodes.json";

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = dispatch(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenScenes(a) => gen_scenes(&a),
        Command::Run(a) => run(&a.common),
        Command::Sweep(a) => sweep(&a),
        Command::Report(a) => report(&a.dir),
    }
}

fn gen_scenes(a: &GenArgs) -> Result<()> {
    if a.n == 0 {
        bail!("--n must be at least 1");
    }
    let template: Template = a.template.parse()?;
    let mut generator = match &a.config {
        Some(path) => {
            let cfg = RunConfig::load(path)?;
            let base = cfg.suite.as_ref().map(|s| s.generator.clone()).unwrap_or_default();
            cfg.generator(&base)
        }
        None => GeneratorConfig::default(),
    };
    generator.template = template;

    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut episodes = Vec::with_capacity(a.n);
    for i in 0..a.n {
        let seed = objnav_core::eval::episode_seed(a.seed, i);
        let g = generate_scene(&generator, seed)?;
        let file = PathBuf::from(format!("{i:04}_{}.json", g.scene.name));
        write(&a.out.join(&file), &g.scene.to_json())?;
        episodes.push(ManifestEntry {
            scene: file,
            target_category: g.target_category,
            seed,
        });
    }
    let manifest = Manifest {
        generator,
        seed: a.seed,
        episodes,
    };
    write(&a.out.join(MANIFEST), &serde_json::to_string_pretty(&manifest)?)?;
    println!("wrote {} scenes and {} to {}", a.n, MANIFEST, a.out.display());
    Ok(())
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Loads the config, applies command-line overrides and validates the result.
fn resolve(o: &Overrides) -> Result<(RunConfig, PathBuf)> {
    let mut cfg = RunConfig::load(&o.config)?;
    if let Some(seed) = o.seed {
        cfg.seed = Some(seed);
    }
    if let Some(out) = &o.out {
        cfg.out = Some(out.clone());
    }
    if let Some(p) = o.parallel {
        cfg.parallel = p;
    }
    if o.no_mode_a {
        cfg.enable_mode_a = false;
    }
    if o.no_mode_b {
        cfg.enable_mode_b = false;
    }
    if let Some(k) = o.k {
        cfg.memory_capacity = k;
    }
    cfg.validate()?;
    let out = cfg
        .out
        .clone()
        .context("no output directory: set `out` in the config or pass --out")?;
    Ok((cfg, out))
}

fn load_episodes(cfg: &RunConfig) -> Result<Vec<EpisodeSpec>> {
    if let Some(suite) = &cfg.suite {
        return Ok(build_suite(&SuiteSpec {
            generator: cfg.generator(&suite.generator),
            episodes: suite.episodes,
            seed: cfg.seed(),
            max_steps: cfg.max_steps,
            success_distance: cfg.success_distance,
        })?);
    }
    let path = &cfg.scenes.as_ref().expect("validated config lists episodes").manifest;
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let manifest: Manifest = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if manifest.episodes.is_empty() {
        bail!("{} lists no episodes", path.display());
    }
    let base = path.parent().unwrap_or(Path::new("."));
    manifest
        .episodes
        .iter()
        .map(|e| {
            let file = base.join(&e.scene);
            let text = std::fs::read_to_string(&file).with_context(|| format!("reading scene {}", file.display()))?;
            let scene = Scene::from_json(&text, cfg.agent_radius).with_context(|| format!("loading scene {}", file.display()))?;
            Ok(EpisodeSpec::new(
                Arc::new(scene),
                e.target_category.clone(),
                cfg.max_steps,
                cfg.success_distance,
                e.seed,
            )?)
        })
        .collect()
}

fn advisor(cfg: &RunConfig) -> Result<Box<dyn Advisor>> {
    Ok(match cfg.advisor.kind {
        AdvisorKind::Scripted => Box::new(ScriptedAdvisor::with_policy(cfg.seed(), cfg.advisor.policy)),
        AdvisorKind::Remote => Box::new(RemoteAdvisor::from_env(cfg.advisor.remote.clone())?),
    })
}

fn run(o: &Overrides) -> Result<()> {
    let (cfg, out) = resolve(o)?;
    let episodes = load_episodes(&cfg)?;
    let advisor = advisor(&cfg)?;
    let results = run_suite(&episodes, &cfg.ablation(), &cfg.system()?, advisor.as_ref(), cfg.parallel);
    let report = write_run_outputs(&out, serde_json::to_value(&cfg)?, &results)?;
    println!(
        "{} episodes: SR {:.3}  SPL {:.3}  -> {}",
        report.episodes,
        report.sr,
        report.spl,
        out.display()
    );
    Ok(())
}

/// Drops repeated capacities, keeping first occurrences in order.
fn dedup_ks(ks: &[usize]) -> Vec<usize> {
    let mut unique = Vec::with_capacity(ks.len());
    for &k in ks {
        if unique.contains(&k) {
            log::warn!("memory capacity {k} listed more than once; running it once");
        } else {
            unique.push(k);
        }
    }
    unique
}

fn sweep(a: &SweepArgs) -> Result<()> {
    if a.ks.is_empty() {
        bail!("--ks needs at least one memory capacity");
    }
    let ks = dedup_ks(&a.ks);
    let (cfg, out) = resolve(&a.common)?;
    let episodes = load_episodes(&cfg)?;
    let advisor = advisor(&cfg)?;
    let table = sweep_k(&episodes, &ks, &cfg.ablation(), &cfg.system()?, advisor.as_ref(), cfg.parallel)?;
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    write(&out.join("sweep.csv"), &table.to_csv())?;
    write(&out.join("sweep.json"), &table.to_json())?;
    print!("{}", table.to_csv());
    Ok(())
}

fn report(dir: &Path) -> Result<()> {
    let path = dir.join("summary.json");
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let rep: SummaryReport = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    println!("episodes {}  SR {:.3}  SPL {:.3}", rep.episodes, rep.sr, rep.spl);
    println!("{:>5}  {:<24} {:<14} {:>7} {:>5} {:>8} {:>8} {:>6}", "#", "scene", "target", "success", "steps", "P", "L", "SPL");
    for e in &rep.per_episode {
        println!(
            "{:>5}  {:<24} {:<14} {:>7} {:>5} {:>8.2} {:>8} {:>6.3}",
            e.index,
            e.scene,
            e.target_category,
            e.success,
            e.steps_used,
            e.path_length,
            e.shortest_length.map_or("-".to_string(), |l| format!("{l:.2}")),
            e.spl
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dedup_keeps_first_occurrence() {
        assert_eq!(dedup_ks(&[10, 0, 10, 5, 0]), vec![10, 0, 5]);
    }
}

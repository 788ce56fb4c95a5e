use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{coverage, generate_world_with, SimChat, SimError, SimFetch, SimSearch, SyntheticWorld, WorldParams};
use super::chat::Rubric;
use crate::config::{RunConfig, Variant};
use crate::evidence::EvidenceBank;
use crate::orchestrator::{Engine, Providers};
use crate::providers::{HashEmbedder, PromptLibrary};

/// World shape, scoring coefficients and loop settings for the ablation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub world: WorldParams,
    pub rubric: Rubric,
    pub run: RunConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { world: WorldParams::default(), rubric: Rubric::default(), run: RunConfig::default() }
    }
}

impl SimConfig {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let c: Self = toml::from_str(text).map_err(|e| SimError::Input(e.to_string()))?;
        c.run.validate().map_err(|e| SimError::Input(e.to_string()))?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub variant: Variant,
    pub termination_iteration: usize,
    pub stopped: bool,
    /// Coverage after bootstrap (index 0) and after each loop iteration.
    pub coverage: Vec<f64>,
}

impl RunMetrics {
    /// Coverage at iteration `t`, holding the last value once the run ended.
    pub fn coverage_at(&self, t: usize) -> f64 {
        self.coverage.get(t).or(self.coverage.last()).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSummary {
    pub seeds: usize,
    pub mean_termination_dualgraph: f64,
    pub mean_termination_outline_only: f64,
    pub mean_coverage_dualgraph: Vec<f64>,
    pub mean_coverage_outline_only: Vec<f64>,
    /// Paired seeds where the dual variant covers strictly more at iteration 2.
    pub pairs_dualgraph_ahead_at_2: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub runs: Vec<RunMetrics>,
    pub summary: AblationSummary,
}

/// Truth coverage of everything a perfect extractor reads out of the bank.
pub fn coverage_of_bank(world: &SyntheticWorld, bank: &EvidenceBank) -> f64 {
    let kg = world.extract(bank.units().iter().map(|u| u.summary.as_str()));
    coverage(&kg, &world.truth_kg)
}

pub fn sim_providers(world: &Arc<SyntheticWorld>, cfg: &RunConfig, rubric: &Rubric) -> Providers {
    Providers {
        chat: Arc::new(SimChat::new(world.clone(), rubric.clone(), cfg.og_query_budget, cfg.kg_query_budget)),
        search: Arc::new(SimSearch::new(world.clone())),
        fetch: Arc::new(SimFetch::new(world.clone())),
        embed: Arc::new(HashEmbedder::new(64, world.seed)),
    }
}

/// One run of `variant` on `world` until it stops or exhausts its budget.
pub fn simulate_run(world: &Arc<SyntheticWorld>, variant: Variant, run: &RunConfig, rubric: &Rubric) -> Result<RunMetrics, SimError> {
    let cfg = RunConfig { variant, seed: world.seed, ..run.clone() };
    let mut engine = Engine::new(cfg.clone(), sim_providers(world, &cfg, rubric), PromptLibrary::builtin());
    let mut s = engine.init_run(&world.root_query())?;
    let mut curve = vec![coverage_of_bank(world, &s.bank)];
    while !s.is_finished() && s.iteration < cfg.max_iter {
        s = engine.run_iteration(&s)?;
        curve.push(coverage_of_bank(world, &s.bank));
    }
    let stopped = s.early_stop_history.last().is_some_and(|r| r.stop);
    Ok(RunMetrics { seed: world.seed, variant, termination_iteration: s.iteration, stopped, coverage: curve })
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 { 0.0 } else { sum / n as f64 }
}

/// Both variants on one world per seed; seeds run on separate threads and
/// results come back in seed order.
pub fn run_ablation(seeds: &[u64], cfg: &SimConfig) -> Result<AblationResult, SimError> {
    if seeds.len() < 5 {
        return Err(SimError::Input(format!("the ablation needs at least 5 seeds, got {}", seeds.len())));
    }
    cfg.run.validate().map_err(|e| SimError::Input(e.to_string()))?;
    let per_seed: Vec<Result<[RunMetrics; 2], SimError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| {
                scope.spawn(move || -> Result<[RunMetrics; 2], SimError> {
                    let world = Arc::new(generate_world_with(seed, &cfg.world)?);
                    let dual = simulate_run(&world, Variant::DualGraph, &cfg.run, &cfg.rubric)?;
                    let outline = simulate_run(&world, Variant::OutlineOnly, &cfg.run, &cfg.rubric)?;
                    Ok([dual, outline])
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("simulation thread panicked")).collect()
    });
    let mut runs = Vec::new();
    for r in per_seed {
        runs.extend(r?);
    }
    let of = |v: Variant| runs.iter().filter(move |r| r.variant == v);
    let horizon = runs.iter().map(|r| r.coverage.len()).max().unwrap_or(0);
    let curve = |v: Variant| (0..horizon).map(|t| mean(of(v).map(|r| r.coverage_at(t)))).collect::<Vec<_>>();
    let ahead = runs.chunks(2).filter(|p| p[0].coverage_at(2) > p[1].coverage_at(2)).count();
    let summary = AblationSummary {
        seeds: seeds.len(),
        mean_termination_dualgraph: mean(of(Variant::DualGraph).map(|r| r.termination_iteration as f64)),
        mean_termination_outline_only: mean(of(Variant::OutlineOnly).map(|r| r.termination_iteration as f64)),
        mean_coverage_dualgraph: curve(Variant::DualGraph),
        mean_coverage_outline_only: curve(Variant::OutlineOnly),
        pairs_dualgraph_ahead_at_2: ahead,
    };
    Ok(AblationResult { runs, summary })
}

impl AblationResult {
    /// One row per run: seed, variant, termination, stop flag, curve.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("seed\tvariant\ttermination_iteration\tstopped\tcoverage\n");
        for r in &self.runs {
            let curve: Vec<String> = r.coverage.iter().map(|c| format!("{c:.6}")).collect();
            let _ = writeln!(out, "{}\t{}\t{}\t{}\t{}", r.seed, r.variant, r.termination_iteration, r.stopped, curve.join(","));
        }
        out
    }

    /// Long-format plot data.
    pub fn to_curves_csv(&self) -> String {
        let mut out = String::from("iteration,coverage,variant,seed\n");
        for r in &self.runs {
            for (t, c) in r.coverage.iter().enumerate() {
                let _ = writeln!(out, "{t},{c:.6},{},{}", r.variant, r.seed);
            }
        }
        out
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary).expect("summary serializes") + "\n"
    }

    /// `metrics.tsv`, `summary.json` and `curves.csv` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), SimError> {
        let io = |e: std::io::Error| SimError::Io(format!("{}: {e}", dir.display()));
        std::fs::create_dir_all(dir).map_err(io)?;
        std::fs::write(dir.join("metrics.tsv"), self.to_tsv()).map_err(io)?;
        std::fs::write(dir.join("summary.json"), self.summary_json()).map_err(io)?;
        std::fs::write(dir.join("curves.csv"), self.to_curves_csv()).map_err(io)?;
        Ok(())
    }
}

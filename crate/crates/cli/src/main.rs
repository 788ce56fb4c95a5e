use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gapgraph_core::config::{ProviderKind, RunConfig, Variant};
use gapgraph_core::orchestrator::rundir::RunDir;
use gapgraph_core::orchestrator::{Engine, OrchestratorError, Providers, RunState};
use gapgraph_core::providers::PromptLibrary;
use gapgraph_core::sim::{run_ablation, SimConfig, SimError};

#[derive(Parser)]
#[command(name = "gapgraph", version, about = "Outline/knowledge graph co-evolution for deep research runs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Start a run and write its run directory.
    Run {
        #[arg(long)]
        query: String,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        variant: Option<Variant>,
        #[arg(long, value_parser = parse_providers)]
        providers: Option<ProviderKind>,
        /// Run directory to create.
        #[arg(long, default_value = "gapgraph-run")]
        run_dir: PathBuf,
        /// Replace an existing run directory.
        #[arg(long)]
        force: bool,
    },
    /// Continue a run from its last checkpoint.
    Resume {
        #[arg(long)]
        run_dir: PathBuf,
    },
    /// Print the knowledge graph at an iteration (default: latest).
    InspectKg {
        #[arg(long)]
        run_dir: PathBuf,
        #[arg(long)]
        iter: Option<usize>,
    },
    /// Print the outline at an iteration (default: latest).
    InspectOg {
        #[arg(long)]
        run_dir: PathBuf,
        #[arg(long)]
        iter: Option<usize>,
    },
    /// Print the search chains built from the graph of an iteration.
    Chains {
        #[arg(long)]
        run_dir: PathBuf,
        #[arg(long)]
        iter: usize,
    },
    /// Run both variants on synthetic worlds and write metrics.
    Simulate {
        #[arg(long)]
        seeds: usize,
        #[arg(long)]
        out: PathBuf,
        /// Optional simulation config (world, rubric and run sections).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        first_seed: u64,
    },
}

fn parse_providers(s: &str) -> Result<ProviderKind, String> {
    match s {
        "mock" => Ok(ProviderKind::Mock),
        "live" => Ok(ProviderKind::Live),
        other => Err(format!("unknown providers {other:?}; expected mock or live")),
    }
}

/// A one-line diagnostic and the process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }
}

impl From<OrchestratorError> for Failure {
    fn from(e: OrchestratorError) -> Self {
        Self { code: e.exit_code() as u8, message: e.to_string() }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Run(e) => e.into(),
            other => Self::usage(other.to_string()),
        }
    }
}

/// Mock fixtures may record the variant their script was written for.
fn check_fixture_variant(cfg: &RunConfig) -> Result<(), Failure> {
    if cfg.providers != ProviderKind::Mock {
        return Ok(());
    }
    let Some(dir) = &cfg.fixture_dir else { return Ok(()) };
    let manifest = dir.join("manifest.json");
    let Ok(text) = std::fs::read_to_string(&manifest) else { return Ok(()) };
    let v: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Failure::usage(format!("{}: {e}", manifest.display())))?;
    if let Some(want) = v.get("variant").and_then(|x| x.as_str()) {
        if want != cfg.variant.to_string() {
            return Err(Failure::usage(format!(
                "variant {} does not match the mock fixture, which was recorded for {want}",
                cfg.variant
            )));
        }
    }
    Ok(())
}

fn drive(dir: &RunDir, mut engine: Engine, state: RunState) -> Result<PathBuf, Failure> {
    let (_, report) = engine.run_to_end(state, &mut |s, e| dir.checkpoint(s, e.transcript()))?;
    Ok(dir.write_report(&report)?)
}

fn run(
    query: &str,
    config: &Path,
    variant: Option<Variant>,
    providers: Option<ProviderKind>,
    run_dir: &Path,
    force: bool,
) -> Result<PathBuf, Failure> {
    let mut cfg = RunConfig::from_file(config).map_err(|e| Failure::usage(e.to_string()))?;
    if let Some(v) = variant {
        cfg.variant = v;
    }
    if let Some(p) = providers {
        cfg.providers = p;
    }
    for d in [&mut cfg.fixture_dir, &mut cfg.prompt_dir].into_iter().flatten() {
        *d = std::fs::canonicalize(&*d).map_err(|e| Failure::usage(format!("{}: {e}", d.display())))?;
    }
    cfg.validate().map_err(|e| Failure::usage(e.to_string()))?;
    check_fixture_variant(&cfg)?;
    let prompts = load_prompts(&cfg)?;
    let providers = Providers::from_config(&cfg)?;
    let dir = RunDir::create(run_dir, force)?;
    dir.write_config(&cfg)?;
    let mut engine = Engine::new(cfg, providers, prompts);
    let state = engine.init_run(query)?;
    dir.checkpoint(&state, engine.transcript())?;
    drive(&dir, engine, state)
}

fn load_prompts(cfg: &RunConfig) -> Result<PromptLibrary, Failure> {
    match &cfg.prompt_dir {
        Some(d) => PromptLibrary::builtin().with_overrides(d).map_err(|e| Failure::usage(e.to_string())),
        None => Ok(PromptLibrary::builtin()),
    }
}

fn resume(run_dir: &Path) -> Result<PathBuf, Failure> {
    let dir = RunDir::open(run_dir)?;
    let cfg = dir.read_config()?;
    let state = dir.read_state()?;
    if dir.is_reported()? {
        return Ok(dir.root.join("report.md"));
    }
    let transcript = dir.read_transcript()?;
    let prompts = load_prompts(&cfg)?;
    let providers = Providers::from_config(&cfg)?;
    let engine = Engine::resume(cfg, providers, prompts, transcript, &state);
    drive(&dir, engine, state)
}

fn pick_iter(dir: &RunDir, iter: Option<usize>) -> Result<usize, Failure> {
    let last = dir.last_iteration()?;
    match iter {
        Some(n) if n > last => Err(Failure::usage(format!("iteration {n} not reached; last is {last}"))),
        Some(n) => Ok(n),
        None => Ok(last),
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { query, config, variant, providers, run_dir, force } => {
            let report = run(&query, &config, variant, providers, &run_dir, force)?;
            println!("{}", report.display());
        }
        Command::Resume { run_dir } => println!("{}", resume(&run_dir)?.display()),
        Command::InspectKg { run_dir, iter } => {
            let dir = RunDir::open(&run_dir)?;
            print!("{}", dir.read_kg(pick_iter(&dir, iter)?)?);
        }
        Command::InspectOg { run_dir, iter } => {
            let dir = RunDir::open(&run_dir)?;
            print!("{}", dir.read_outline(pick_iter(&dir, iter)?)?);
        }
        Command::Chains { run_dir, iter } => {
            let dir = RunDir::open(&run_dir)?;
            let chains = dir.read_chains(pick_iter(&dir, Some(iter))?)?;
            println!("chain_id\tkind\tsource\trelation\ttarget\tscore\tbasis");
            for c in chains {
                println!("{c}");
            }
        }
        Command::Simulate { seeds, out, config, first_seed } => {
            let cfg = match config {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| Failure::usage(format!("{}: {e}", p.display())))?;
                    SimConfig::from_toml(&text)?
                }
                None => SimConfig::default(),
            };
            let seeds: Vec<u64> = (first_seed..first_seed + seeds as u64).collect();
            let result = run_ablation(&seeds, &cfg)?;
            result.write(&out)?;
            println!("{}", out.join("summary.json").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message.lines().next().unwrap_or(""));
            ExitCode::from(f.code)
        }
    }
}

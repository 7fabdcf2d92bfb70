use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use devograph::env::EnvKind;
use devograph::experiment::{
    default_out_dir, gen_targets, report, run_battery, ExperimentConfig, Family,
};
use devograph::fitness::{
    EnvFitnessConfig, GenomeObjective, Objective, PenaltyConfig, TargetSpec,
};
use devograph::graph::ExportFormat;
use devograph::{grow_traced, Error, Genome, Result};

#[derive(Parser)]
#[command(name = "devograph", version, about = "Grow, evolve and evaluate developmental graph genomes")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Seed override (run-seed sequence, target seed or episode seed).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Experiment configuration file (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads (all cores by default).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Develop a genome and print or save its graph.
    Grow {
        genome: PathBuf,
        /// Comma-separated iteration numbers to dump the field at.
        #[arg(long, value_delimiter = ',')]
        trace: Vec<u32>,
        /// Graph format: edge-json or dot.
        #[arg(long, default_value = "edge-json")]
        export: String,
    },
    /// Generate random (nodes, edges, sources) targets.
    GenTargets,
    /// Run a graph-targeting battery.
    EvolveTarget {
        /// Runs per target.
        #[arg(long)]
        runs: Option<usize>,
        /// Single explicit target as N,E,S.
        #[arg(long)]
        target: Option<String>,
    },
    /// Run a control-environment battery.
    EvolveEnv {
        #[arg(long)]
        runs: Option<usize>,
        /// Enable the connection-count penalty with default settings.
        #[arg(long)]
        penalty: bool,
    },
    /// Score a genome against an objective.
    Eval {
        genome: PathBuf,
        /// `target:N,E,S`, `cartpole` or `cartpole-min`.
        #[arg(long)]
        objective: String,
    },
    /// Rebuild summary.csv of a finished run directory.
    Report { run_dir: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let base = match &cli.config {
        Some(path) => Some(ExperimentConfig::load(path)?),
        None => None,
    };
    match cli.command {
        Command::Grow {
            ref genome,
            ref trace,
            ref export,
        } => cmd_grow(genome, trace, export, cli.out.as_deref()),
        Command::GenTargets => {
            let mut cfg = base.unwrap_or_default().target_generation;
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            let targets = gen_targets(&cfg)?;
            let text = serde_json::to_string_pretty(&targets)?;
            emit(&text, cli.out.as_deref(), "targets.json")
        }
        Command::EvolveTarget { runs, ref target } => {
            let mut cfg = base.unwrap_or_default();
            cfg.family = Family::GraphTarget;
            if let Some(t) = target {
                cfg.targets = Some(vec![parse_target(t)?]);
            }
            battery(cfg, runs, &cli)
        }
        Command::EvolveEnv { runs, penalty } => {
            let mut cfg = base.unwrap_or_else(ExperimentConfig::control);
            cfg.family = Family::EnvControl;
            if penalty && cfg.env.penalty.is_none() {
                cfg.env.penalty = Some(PenaltyConfig::default());
            }
            battery(cfg, runs, &cli)
        }
        Command::Eval {
            ref genome,
            ref objective,
        } => {
            let genome = load_genome(genome)?;
            let objective = parse_objective(objective, base.as_ref(), cli.seed)?;
            objective.validate()?;
            let e = objective.evaluate(&genome);
            println!("{}", serde_json::to_string(&e)?);
            Ok(())
        }
        Command::Report { ref run_dir } => {
            for row in report(run_dir)? {
                println!(
                    "target {} (N={} E={} S={}): success_rate={} mean_best={} std_best={}",
                    row.target_id.map_or("-".into(), |t| t.to_string()),
                    opt(row.nodes),
                    opt(row.edges),
                    opt(row.sources),
                    row.success_rate,
                    row.mean_best,
                    row.std_best
                );
            }
            Ok(())
        }
    }
}

fn opt(v: Option<usize>) -> String {
    v.map_or("-".into(), |v| v.to_string())
}

fn load_genome(path: &Path) -> Result<Genome> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    Genome::from_json(&text)
}

fn emit(text: &str, out: Option<&Path>, file: &str) -> Result<()> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(file), text)?;
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn cmd_grow(genome: &Path, trace: &[u32], export: &str, out: Option<&Path>) -> Result<()> {
    let format: ExportFormat = export.parse()?;
    let genome = load_genome(genome)?;
    let (graph, snapshots) = grow_traced(&genome, trace);
    if !snapshots.is_empty() {
        let dir = out.unwrap_or(Path::new("."));
        fs::create_dir_all(dir)?;
        for s in &snapshots {
            fs::write(dir.join(format!("trace_{:04}.txt", s.step)), s.dump_string())?;
        }
    }
    let file = match format {
        ExportFormat::EdgeJson => "graph.json",
        ExportFormat::Dot => "graph.dot",
    };
    emit(&graph.export(format), out, file)
}

fn parse_target(text: &str) -> Result<TargetSpec> {
    let parts: Vec<usize> = text
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("target `{text}` is not N,E,S")))?;
    match parts[..] {
        [n, e, s] => {
            let t = TargetSpec::new(n, e, s);
            t.validate()?;
            Ok(t)
        }
        _ => Err(Error::Config(format!("target `{text}` is not N,E,S"))),
    }
}

fn parse_objective(
    text: &str,
    base: Option<&ExperimentConfig>,
    seed: Option<u64>,
) -> Result<GenomeObjective> {
    let defaults = ExperimentConfig::default();
    let base = base.unwrap_or(&defaults);
    if let Some(target) = text.strip_prefix("target:") {
        return Ok(GenomeObjective::Target {
            target: parse_target(target)?,
            config: base.target_fitness,
        });
    }
    let (name, penalised) = match text.strip_suffix("-min") {
        Some(name) => (name, true),
        None => (text, false),
    };
    let env: EnvKind = name.parse()?;
    let mut cfg = EnvFitnessConfig {
        env,
        ..base.env
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if penalised && cfg.penalty.is_none() {
        cfg.penalty = Some(PenaltyConfig::default());
    }
    Ok(GenomeObjective::Env(cfg))
}

fn battery(mut cfg: ExperimentConfig, runs: Option<usize>, cli: &Cli) -> Result<()> {
    if let Some(r) = runs {
        cfg.runs = r;
    }
    if let Some(seed) = cli.seed {
        cfg.seed_runs = seed;
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    let out = cli.out.clone().unwrap_or_else(|| default_out_dir(cfg.family));
    let report = run_battery(&cfg, &out)?;
    for rec in &report.records {
        println!(
            "run {:>3} seed {:>20} best {:.6} gens {:>4} {:<9} N={} E={} S={}{}",
            rec.index,
            rec.seed,
            rec.best_fitness,
            rec.generations,
            rec.termination.as_str(),
            rec.nodes,
            rec.edges,
            rec.sources,
            rec.mean_reward
                .map_or(String::new(), |r| format!(" reward={r}"))
        );
    }
    for row in &report.summary {
        println!(
            "target {}: success_rate={} mean_best={:.6} std_best={:.6}",
            row.target_id.map_or("-".into(), |t| t.to_string()),
            row.success_rate,
            row.mean_best,
            row.std_best
        );
    }
    println!("results written to {}", out.display());
    Ok(())
}

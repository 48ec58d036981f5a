use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use evolab::eval::{evaluate_run, write_report, Protocol};
use evolab::evolve::{run_evolution, EvolutionConfig};
use evolab::gateway::Gateway;
use evolab::genotype::{preset, preset_names, validate, MemoryGenotype};
use evolab::inner::{
    read_tasks, run_batch, synth_pool, write_tasks, Agent, LlmAgent, PoolConfig, RunConfig, RunMode, SimAgent,
    TaskBatch,
};

#[derive(Parser)]
#[command(name = "evolab", version, about = "Self-evolving agent memory experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inspect the built-in architecture presets.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
    /// Work with genotype files.
    Genotype {
        #[command(subcommand)]
        action: GenotypeAction,
    },
    /// Evaluate one architecture on a task file.
    Run {
        /// Genotype file, or a preset name.
        #[arg(long)]
        genotype: String,
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long, default_value = "online")]
        mode: RunMode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Passes over the task list (for pass@k).
        #[arg(long, default_value_t = 1)]
        attempts: usize,
        /// `sim` (scripted) or `llm` (gateway-backed).
        #[arg(long, default_value = "sim")]
        agent: String,
    },
    /// Run the bilevel evolution.
    Evolve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a finished run and print pass@1..k.
    Eval {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value = "exact")]
        protocol: Protocol,
        #[arg(long, default_value_t = 1)]
        passk: usize,
    },
    /// Write CSV tables and a markdown summary for a run.
    Report {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate task pools.
    Tasks {
        #[command(subcommand)]
        action: TasksAction,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    List,
    Show { name: String },
}

#[derive(Subcommand)]
enum GenotypeAction {
    Validate { file: PathBuf },
}

#[derive(Subcommand)]
enum TasksAction {
    /// Write a synthetic lookup-task pool.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        families: usize,
        #[arg(long, default_value_t = 8)]
        per_family: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load_genotype(arg: &str) -> Result<MemoryGenotype> {
    let path = Path::new(arg);
    if path.exists() {
        return Ok(MemoryGenotype::load(path)?);
    }
    preset(arg).with_context(|| format!("{arg} is neither a genotype file nor a preset"))
}

fn agent_for(name: &str, seed: u64) -> Result<Box<dyn Agent>> {
    match name {
        "sim" => Ok(Box::new(SimAgent::new(seed))),
        "llm" => Ok(Box::new(LlmAgent::default())),
        other => bail!("unknown agent {other:?} (expected sim or llm)"),
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Presets { action: PresetAction::List } => {
            for name in preset_names() {
                println!("{name}");
            }
        }
        Command::Presets { action: PresetAction::Show { name } } => print!("{}", preset(&name)?.to_json()),
        Command::Genotype { action: GenotypeAction::Validate { file } } => {
            let g = MemoryGenotype::load(&file)?;
            let violations = validate(&g);
            if !violations.is_empty() {
                for v in &violations {
                    eprintln!("{v}");
                }
                bail!("{} has {} violation(s)", file.display(), violations.len());
            }
            println!("ok {}", g.name);
        }
        Command::Run { genotype, tasks, mode, seed, out, attempts, agent } => {
            let g = load_genotype(&genotype)?;
            let tasks = read_tasks(&tasks)?;
            let batch = TaskBatch { iteration: 0, new_tasks: tasks, reused_tasks: vec![] };
            let gateway = Gateway::from_env()?;
            let agent = agent_for(&agent, seed)?;
            let config = RunConfig { mode, seed, attempts, ..Default::default() };
            let r = run_batch(&g, &batch, agent.as_ref(), &gateway, &config, None, Some(&out))?;
            println!(
                "{}: perf {:.2} cost {:.2} delay {:.2} over {} episodes",
                g.name, r.summary.perf_mean, r.summary.cost_mean, r.summary.delay_mean, r.summary.n
            );
        }
        Command::Evolve { config, tasks, out } => {
            let cfg = EvolutionConfig::load(&config)?;
            let initial = cfg.initial_genotype(config.parent())?;
            let pool = read_tasks(&tasks)?;
            let gateway = Gateway::from_env()?;
            let agent = SimAgent::new(cfg.seed);
            let state = run_evolution(cfg, initial, &pool, &agent, &gateway, &out)?;
            println!(
                "{} candidates, {} episodes; champion {}",
                state.candidates_evaluated(),
                state.episodes_run(),
                state.champion().map_or("none", |c| c.genotype.name.as_str())
            );
        }
        Command::Eval { run, protocol, passk } => {
            if passk == 0 {
                bail!("--passk must be at least 1");
            }
            let gateway = Gateway::from_env()?;
            let rows = evaluate_run(&run, protocol, passk, &gateway)?;
            let header: Vec<String> = (1..=passk).map(|k| format!("pass@{k}")).collect();
            println!("candidate\tname\t{}\twarnings", header.join("\t"));
            for r in &rows {
                let cells: Vec<String> = r.pass_at.iter().map(|v| format!("{v:.2}")).collect();
                println!("{}\t{}\t{}\t{}", r.label, r.name, cells.join("\t"), r.warnings);
            }
            let path = run.join(format!("eval-{protocol}.json"));
            std::fs::write(&path, serde_json::to_string_pretty(&rows)? + "\n")
                .with_context(|| path.display().to_string())?;
        }
        Command::Report { run, out } => {
            let tables = write_report(&run, &out)?;
            println!("{} candidates -> {}", tables.rows.len(), out.display());
        }
        Command::Tasks { action: TasksAction::Synth { out, families, per_family, seed } } => {
            let pool = synth_pool(&PoolConfig { families, tasks_per_family: per_family, seed, ..Default::default() });
            write_tasks(&out, &pool)?;
            println!("{} tasks -> {}", pool.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

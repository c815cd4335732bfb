use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use uavroute::config::{load_config_over, render_config};
use uavroute::experiments::{export, run_experiment, Dumps, ExperimentSpec, Load, PolicyKind, Sweep};
use uavroute::ippo::{read_header, write_curve_csv, Trainer};
use uavroute::{Error, Result, SimConfig, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "uavroute", version, about = "Multi-hop UAV routing simulator and IPPO trainer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run seeded evaluation episodes and export metrics and arrival curves.
    Simulate(SimulateArgs),
    /// Train the shared actor and critic and write a checkpoint.
    Train(TrainArgs),
    /// Print a checkpoint's header.
    InspectCheckpoint { path: PathBuf },
}

#[derive(Debug, Args)]
struct ScaleArgs {
    /// Config file; keys it omits come from the selected preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// 8 UAVs, 3 s horizon, N = 4, 300 training episodes.
    #[arg(long, conflicts_with = "paper_scale")]
    desk_scale: bool,
    /// Full-scale defaults (the default preset).
    #[arg(long)]
    paper_scale: bool,
}

impl ScaleArgs {
    fn resolve(&self) -> Result<(SimConfig, TrainConfig)> {
        let (sim, train) = if self.desk_scale {
            (SimConfig::desk_scale(), TrainConfig::desk_scale())
        } else {
            (SimConfig::paper_scale(), TrainConfig::default())
        };
        match &self.config {
            Some(path) => load_config_over(path, &sim, &train),
            None => Ok((sim, train)),
        }
    }
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    policy: PolicyKind,
    #[command(flatten)]
    scale: ScaleArgs,
    /// Base seed; run i uses seed + i.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 50)]
    runs: usize,
    #[arg(long)]
    out: PathBuf,
    /// `uavs=8,16,24,35` or `n=2..8`.
    #[arg(long)]
    sweep: Option<Sweep>,
    #[arg(long)]
    load: Option<Load>,
    /// Trained checkpoint, required for ippo-dm.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value = "scenario")]
    scenario: String,
    /// Write the event log of the first run of each scenario.
    #[arg(long)]
    dump_events: bool,
    /// Write per-slot link tables of the first run of each scenario.
    #[arg(long)]
    dump_links: bool,
    /// Write UAV trajectories of the first run of each scenario.
    #[arg(long)]
    dump_trajectory: bool,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    scale: ScaleArgs,
    /// Total episodes; defaults to the config's `episodes`.
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Continue from `OUT/checkpoint.bin` if it exists.
    #[arg(long)]
    resume: bool,
    /// Also checkpoint every this many episodes.
    #[arg(long)]
    checkpoint_every: Option<usize>,
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Experiment(format!("cannot create {}: {e}", dir.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::Experiment(format!("cannot write {}: {e}", path.display())))
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let (sim, train) = args.scale.resolve()?;
    let mut spec = ExperimentSpec::new(args.scenario, sim.clone(), args.policy);
    spec.runs = args.runs;
    spec.seed_base = args.seed;
    spec.load = args.load;
    spec.sweep = args.sweep;
    spec.checkpoint = args.checkpoint;
    spec.dumps = Dumps {
        events: args.dump_events,
        links: args.dump_links,
        trajectory: args.dump_trajectory,
    };
    create_dir(&args.out)?;
    let (results, artifacts) = run_experiment(&spec)?;
    export(&args.out, &results, &artifacts)?;
    write_file(&args.out.join("config.toml"), render_config(&sim, &train).as_bytes())?;
    println!("{:<28} {:>6} {:>10} {:>10}", "scenario", "runs", "eta_pack", "phi_loss");
    for r in &results {
        println!(
            "{:<28} {:>6} {:>10.4} {:>10.4}",
            r.scenario,
            r.runs.len(),
            r.aggregate.on_time_ratio,
            r.aggregate.loss_ratio
        );
    }
    Ok(())
}

fn train(args: TrainArgs) -> Result<()> {
    let (sim, cfg) = args.scale.resolve()?;
    let episodes = args.episodes.unwrap_or(cfg.episodes);
    create_dir(&args.out)?;
    let ckpt = args.out.join("checkpoint.bin");
    let mut trainer = if args.resume && ckpt.is_file() {
        let t = Trainer::load(&ckpt)?;
        eprintln!("resuming at episode {}", t.episode());
        t
    } else {
        Trainer::new(&sim, &cfg, args.seed)?
    };
    write_file(
        &args.out.join("config.toml"),
        render_config(trainer.sim_config(), trainer.train_config()).as_bytes(),
    )?;
    while trainer.episode() < episodes {
        let row = trainer.train_episode()?;
        eprintln!(
            "episode {:>5}  reward {:>9.5}  actor {:>9.5}  critic {:>9.5}  entropy {:>8.4}",
            row.episode, row.mean_reward, row.actor_loss, row.critic_loss, row.entropy
        );
        if args.checkpoint_every.is_some_and(|k| k > 0 && trainer.episode() % k == 0) {
            trainer.save(&ckpt)?;
        }
    }
    trainer.save(&ckpt)?;
    let mut curve = Vec::new();
    write_curve_csv(trainer.curve(), &mut curve)?;
    write_file(&args.out.join("training_curve.csv"), &curve)?;
    println!("{}", ckpt.display());
    Ok(())
}

fn inspect(path: &Path) -> Result<()> {
    let h = read_header(path)?;
    println!("version        {}", h.version);
    println!("master_seed    {}", h.master_seed);
    println!("episodes_done  {}", h.episode);
    println!("num_uavs       {}", h.sim.num_uavs);
    println!("max_neighbors  {}", h.sim.max_neighbors);
    println!("actor_params   {}", h.actor_params);
    println!("critic_params  {}", h.critic_params);
    println!("optimizer_step {}", h.actor_opt.step);
    if let Some(last) = h.curve.last() {
        println!("last_reward    {}", last.mean_reward);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Train(a) => train(a),
        Command::InspectCheckpoint { path } => inspect(&path),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

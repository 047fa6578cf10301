//! `rftrojan`: synthesize data, train and poison models, and run the
//! attack and defense experiments from the command line.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rftrojan::attack::{poison_dataset, save_poison_index, PoisonAmount, PoisonIndex};
use rftrojan::harness::{
    dataset_spec_from_toml, emit_reports, normalize_dataset, run_binary_experiment, run_defense_suite,
    run_poison_sweep, seed_derivation, DefenseConfig, ExperimentConfig, RunReport,
};
use rftrojan::nn::{save_model, train, NetworkConfig};
use rftrojan::sigsynth::{generate_dataset, load_dataset, save_dataset};
use rftrojan::Error;

#[derive(Parser, Debug)]
#[command(name = "rftrojan", version, about = "Trojan attacks and defenses for raw-I/Q modulation classifiers")]
struct Cli {
    /// TOML experiment configuration, layered over the built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the configuration file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the configuration file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for independent repetitions.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Start from the eight-scheme, full SNR grid, deep-network defaults.
    #[arg(long, global = true)]
    full_scale: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a dataset file from a dataset spec.
    Synth {
        /// TOML file with dataset spec fields at top level; defaults to the
        /// `[dataset]` table of the configuration.
        spec: Option<PathBuf>,
        /// Defaults to `<out>/dataset.rftj`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Train a classifier on a dataset file.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Defaults to `<out>/model.rftm`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Poison a dataset file; writes the poisoned dataset and a sidecar index.
    Poison {
        #[arg(long)]
        data: PathBuf,
        /// Fraction of each source label to poison.
        #[arg(long, conflicts_with = "count")]
        ratio: Option<f64>,
        /// Frames to poison from each source label.
        #[arg(long)]
        count: Option<usize>,
        /// Trigger angle in degrees.
        #[arg(long)]
        theta: Option<f64>,
        /// Defaults to `<out>/poisoned.rftj`; the index goes next to it with extension `rftp`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Clean vs poisoned model at the configured poison amount.
    EvalAttack,
    /// Attack scores over the configured poison amounts and angles.
    Sweep,
    /// Run one defense.
    Defend {
        #[arg(long, value_enum)]
        method: Method,
    },
    /// Re-render tables and plots from a stored summary.
    Report {
        /// Defaults to `<out>/summary.json`.
        #[arg(long)]
        from: Option<PathBuf>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Method {
    Mad,
    TsneSvm,
    Augment,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        e if e.is_validation() => 2,
        Error::Io { .. } | Error::Format(_) => 4,
        _ => 3,
    }
}

fn resolve(cli: &Cli) -> rftrojan::Result<ExperimentConfig> {
    let base = if cli.full_scale { ExperimentConfig::full_scale() } else { ExperimentConfig::default() };
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path, &base)?,
        None => base,
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(threads) = cli.threads {
        cfg.threads = threads;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_reports(report: &RunReport, dir: &Path) -> rftrojan::Result<()> {
    for path in emit_reports(report, dir)? {
        log::info!("wrote {}", path.display());
    }
    for (stage, secs) in &report.timings {
        log::info!("{stage}: {secs:.1}s");
    }
    Ok(())
}

fn run(cli: &Cli) -> rftrojan::Result<()> {
    let cfg = resolve(cli)?;
    let out = cfg.output_dir.clone();
    let ensure_out = || std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e));
    match &cli.command {
        Command::Synth { spec, output } => {
            let mut ds_spec = match spec {
                Some(path) => {
                    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                    dataset_spec_from_toml(&text, &cfg.dataset)?
                }
                None => cfg.dataset.clone(),
            };
            if let Some(seed) = cli.seed {
                ds_spec.seed = seed;
            }
            let ds = generate_dataset(&ds_spec)?;
            ensure_out()?;
            let path = output.clone().unwrap_or_else(|| out.join("dataset.rftj"));
            save_dataset(&ds, &path)?;
            println!("{} frames -> {}", ds.len(), path.display());
        }
        Command::Train { data, output } => {
            let mut ds = load_dataset(data)?;
            if cfg.normalize_received {
                ds = normalize_dataset(&ds)?;
            }
            let net = match &cfg.network {
                Some(n) => n.clone(),
                None => NetworkConfig::desk_scale(ds.labels()),
            };
            let tc = rftrojan::nn::TrainConfig { seed: seed_derivation(cfg.seed, "cli.train", 0), ..cfg.training.clone() };
            let model = train(&ds, &net, &tc)?;
            ensure_out()?;
            let path = output.clone().unwrap_or_else(|| out.join("model.rftm"));
            save_model(&model, &path)?;
            println!(
                "final loss {:.4}, training accuracy {:.3} -> {}",
                model.loss_history.last().copied().unwrap_or(f64::NAN),
                model.accuracy(&ds)?,
                path.display()
            );
        }
        Command::Poison { data, ratio, count, theta, output } => {
            let ds = load_dataset(data)?;
            let amount = match (ratio, count) {
                (Some(r), _) => PoisonAmount::Ratio(*r),
                (None, Some(n)) => PoisonAmount::Count(*n),
                (None, None) => cfg.attack.amount,
            };
            let theta = theta.unwrap_or(cfg.attack.theta_degrees);
            let spec = cfg.attack.spec(amount, theta, seed_derivation(cfg.seed, "cli.poison", 0));
            let pd = poison_dataset(&ds, &spec)?;
            ensure_out()?;
            let path = output.clone().unwrap_or_else(|| out.join("poisoned.rftj"));
            save_dataset(&pd.dataset, &path)?;
            let sidecar = path.with_extension("rftp");
            save_poison_index(&PoisonIndex::from(&pd), &sidecar)?;
            println!(
                "{} of {} frames poisoned -> {} (index {})",
                pd.poisoned_indices.len(),
                pd.dataset.len(),
                path.display(),
                sidecar.display()
            );
        }
        Command::EvalAttack => {
            let report = run_binary_experiment(&cfg)?;
            write_reports(&report, &out)?;
            for a in &report.attack_summary {
                println!(
                    "snr {:>5.1} dB: clean/clean {:.3}  clean/poisoned {:.3}  attack success {:.3}",
                    a.snr_db, a.acc_clean_cleanmodel.mean, a.acc_clean_poisonedmodel.mean, a.attack_success.mean
                );
            }
        }
        Command::Sweep => {
            let report = run_poison_sweep(&cfg)?;
            write_reports(&report, &out)?;
            println!("{} cells -> {}", report.attack_summary.len(), out.display());
        }
        Command::Defend { method } => {
            // The configured suite if present, otherwise its defaults.
            let (d, all) = (cfg.defenses.clone(), DefenseConfig::all());
            let defenses = match method {
                Method::Augment => DefenseConfig { augment: d.augment.or(all.augment), ..Default::default() },
                Method::Mad => DefenseConfig { mad: d.mad.or(all.mad), ..Default::default() },
                Method::TsneSvm => DefenseConfig { tsne: d.tsne.or(all.tsne), ..Default::default() },
            };
            let cfg = ExperimentConfig { defenses, ..cfg };
            let report = run_defense_suite(&cfg)?;
            write_reports(&report, &out)?;
            println!("{method:?} -> {}", out.display());
        }
        Command::Report { from } => {
            let path = from.clone().unwrap_or_else(|| out.join("summary.json"));
            let report = RunReport::load(&path)?;
            write_reports(&report, &out)?;
            println!("re-rendered {} -> {}", path.display(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RFTJ_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

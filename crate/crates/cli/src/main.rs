//! `fddmimo`: dataset generation, GAN training, single-user estimation,
//! Monte-Carlo sweeps and generator diagnostics.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use fddmimo_core::channel::{downlink_channel_full, downlink_pilots, synth_downlink, synth_uplink, uplink_channel, SystemConfig};
use fddmimo_core::dataset::{self, perturb_gains, Dataset};
use fddmimo_core::estimators::dl_phase::dl_phase_estimate;
use fddmimo_core::estimators::up_gan::up_gan_estimate;
use fddmimo_core::estimators::EstimateReport;
use fddmimo_core::experiments::sweep::{mean_path_energy, pilot_power};
use fddmimo_core::experiments::{nmse_db, parse_scenarios, run_sweep, write_csv, Axis, Execution, ExperimentConfig, SweepContext};
use fddmimo_core::gan::{diagnostics, feature_matrix, train_with, GanModel};
use fddmimo_core::linalg::{SimRng, CVec};
use serde_json::json;

#[derive(Parser)]
#[command(name = "fddmimo", version, about = "FDD massive-MIMO downlink channel estimation with a generative prior")]
struct Cli {
    /// Flat `key = value` configuration file; defaults apply when omitted.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic population, or import one from CSV.
    GenData {
        /// Output JSONL path; a `.meta.json` sidecar is written next to it.
        #[arg(long, short)]
        out: PathBuf,
        /// Import path parameters from this CSV instead of generating them.
        #[arg(long)]
        import: Option<PathBuf>,
    },
    /// Train the generator, encoder and discriminator.
    TrainGan {
        #[command(flatten)]
        data: DataArg,
        /// Output checkpoint (JSON).
        #[arg(long, short)]
        out: PathBuf,
        /// Per-epoch loss history (CSV).
        #[arg(long)]
        history: Option<PathBuf>,
        /// Rewrite the checkpoint every this many epochs.
        #[arg(long)]
        checkpoint_every: Option<usize>,
    },
    /// Estimate uplink and downlink channels of one test user.
    Estimate {
        #[command(flatten)]
        data: DataArg,
        #[arg(long, short)]
        model: PathBuf,
        /// Position in the test split.
        #[arg(long, default_value_t = 0)]
        user: usize,
        /// Defaults to the configured sweep SNR.
        #[arg(long)]
        snr_db: Option<f64>,
    },
    /// Run a Monte-Carlo sweep and write the results CSV.
    Sweep {
        #[command(flatten)]
        data: DataArg,
        /// Required by the generator-based scenarios.
        #[arg(long, short)]
        model: Option<PathBuf>,
        #[arg(long, short)]
        out: PathBuf,
        /// Overrides `axis`.
        #[arg(long)]
        axis: Option<Axis>,
        /// Overrides `values`, comma-separated.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        /// Overrides `scenarios`, comma-separated.
        #[arg(long)]
        scenarios: Option<String>,
        /// Overrides `trials`.
        #[arg(long)]
        trials: Option<usize>,
        /// Run trials on the calling thread only.
        #[arg(long)]
        sequential: bool,
    },
    /// Discriminator accuracy, sample diversity and feature histograms of a trained generator.
    Diagnose {
        #[command(flatten)]
        data: DataArg,
        #[arg(long, short)]
        model: PathBuf,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 20)]
        bins: usize,
    },
}

#[derive(Args)]
struct DataArg {
    /// Dataset JSONL; generated from the configuration when omitted.
    #[arg(long, short)]
    data: Option<PathBuf>,
}

impl DataArg {
    fn load(&self, cfg: &ExperimentConfig) -> Result<Dataset> {
        match &self.data {
            Some(p) => dataset::load(p).with_context(|| format!("loading dataset {}", p.display())),
            None => Ok(dataset::generate(&cfg.scenario)?),
        }
    }
}

fn load_model(path: &Path) -> Result<GanModel> {
    GanModel::load_checkpoint(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("reading config {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    match cli.command {
        Command::GenData { out, import } => gen_data(&cfg, &out, import.as_deref()),
        Command::TrainGan { data, out, history, checkpoint_every } => {
            train_gan(&cfg, &data.load(&cfg)?, &out, history.as_deref(), checkpoint_every)
        }
        Command::Estimate { data, model, user, snr_db } => {
            estimate(&cfg, &data.load(&cfg)?, &load_model(&model)?, user, snr_db.unwrap_or(cfg.sweep.snr_db))
        }
        Command::Sweep { data, model, out, axis, values, scenarios, trials, sequential } => {
            let mut spec = cfg.sweep.clone();
            if let Some(a) = axis {
                spec.axis = a;
                if values.is_none() {
                    spec.values = a.default_values();
                }
            }
            if let Some(v) = values {
                spec.values = v;
            }
            if let Some(s) = scenarios {
                spec.scenarios = parse_scenarios(&s)?;
            }
            if let Some(t) = trials {
                spec.trials = t;
            }
            let ds = data.load(&cfg)?;
            let model = model.as_deref().map(load_model).transpose()?;
            let ctx = SweepContext {
                system: &cfg.system,
                dataset: &ds,
                model: model.as_ref(),
                estimators: &cfg.estimators,
                alpha_dl_rel_err: cfg.scenario.alpha_dl_rel_err,
            };
            let exec = if sequential { Execution::Sequential } else { Execution::Parallel };
            let rows = run_sweep(&spec, ctx, exec)?;
            write_csv(&rows, BufWriter::new(File::create(&out)?))?;
            log::info!("wrote {} rows to {}", rows.len(), out.display());
            Ok(())
        }
        Command::Diagnose { data, model, samples, bins } => {
            let ds = data.load(&cfg)?;
            let model = load_model(&model)?;
            let rows: Vec<Vec<f64>> = ds.test_records().map(|r| ds.scaler.to_features(r)).collect::<Result<_, _>>()?;
            let held = feature_matrix(&rows)?;
            let report = diagnostics(&model, &held, samples, bins, &mut SimRng::new(cfg.seed).child("diagnose"))?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
    }
}

fn gen_data(cfg: &ExperimentConfig, out: &Path, import: Option<&Path>) -> Result<()> {
    let ds = match import {
        Some(p) => dataset::import_csv(p, cfg.system.t_s(), cfg.scenario.seed)
            .with_context(|| format!("importing {}", p.display()))?,
        None => dataset::generate(&cfg.scenario)?,
    };
    dataset::save(&ds, out)?;
    log::info!(
        "wrote {} users ({} train, {} test) to {}",
        ds.records.len(),
        ds.train.len(),
        ds.test.len(),
        out.display()
    );
    Ok(())
}

fn train_gan(cfg: &ExperimentConfig, ds: &Dataset, out: &Path, history: Option<&Path>, every: Option<usize>) -> Result<()> {
    let data = feature_matrix(&ds.train_features()?)?;
    let gan = cfg.gan.clone();
    if gan.n != data.nrows() {
        bail!("dataset has {} features per user but the configuration expects n = {}", data.nrows(), gan.n);
    }
    gan.validate()?;
    let model = train_with(&data, &gan, Some(ds.scaler.clone()), |m| {
        let epoch = m.history.len();
        if every.is_some_and(|e| e > 0 && epoch % e == 0) {
            m.save_checkpoint(out)?;
        }
        Ok(())
    })?;
    model.save_checkpoint(out)?;
    if let Some(h) = history {
        model.write_history_csv(h)?;
    }
    if let Some(last) = model.history.last() {
        log::info!("epoch {}: T_D {:.4} T_G {:.4} T_E {:.4} D accuracy {:.3}", last.epoch, last.t_d, last.t_g, last.t_e, last.d_accuracy);
    }
    Ok(())
}

fn summary(r: &EstimateReport, truth: &[CVec]) -> Result<serde_json::Value> {
    Ok(json!({
        "nmse_db": nmse_db(truth, &r.channels)?,
        "objective": r.objective(),
        "iterations": r.iterations,
        "seconds": r.seconds,
        "unidentifiable": r.unidentifiable,
        "alpha": r.alpha,
        "tau": r.tau,
        "theta": r.theta,
        "phi_up": r.phi_up,
        "phi_dl": r.phi_dl,
    }))
}

fn estimate(cfg: &ExperimentConfig, ds: &Dataset, model: &GanModel, user: usize, snr_db: f64) -> Result<()> {
    let Some(x) = ds.test_records().nth(user) else {
        bail!("test split has {} users, asked for {user}", ds.test.len());
    };
    let energy = mean_path_energy(ds.train_records())?;
    let sys = SystemConfig { p_t: pilot_power(snr_db, cfg.system.sigma_n2, energy, cfg.system.p_t), ..cfg.system.clone() };
    let mut rng = SimRng::new(cfg.seed).child("estimate");
    let mut x_dl = x.clone();
    x_dl.alpha = perturb_gains(&x.alpha, cfg.scenario.alpha_dl_rel_err, &mut rng);

    let obs_up = synth_uplink(x, &sys, &mut rng);
    let up = up_gan_estimate(&obs_up, model, &sys, &cfg.estimators.up_gan.with_seed(cfg.seed))?;
    let pilots = downlink_pilots(&sys, &mut rng);
    let obs_dl = synth_downlink(&x_dl, &sys, &pilots, &mut rng)?;
    let dl = dl_phase_estimate(&obs_dl, &up.alpha, &up.tau, &up.theta, &sys, &cfg.estimators.dl_phase.with_seed(cfg.seed))?;

    let up_truth: Vec<CVec> = up.subcarriers.iter().map(|&k| uplink_channel(x, &sys, k)).collect();
    let dl_truth: Vec<CVec> = dl.subcarriers.iter().map(|&k| downlink_channel_full(&x_dl, &sys, k)).collect();
    let report = json!({
        "user": user,
        "snr_db": snr_db,
        "uplink": summary(&up, &up_truth)?,
        "downlink": summary(&dl, &dl_truth)?,
    });
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
    Ok(())
}

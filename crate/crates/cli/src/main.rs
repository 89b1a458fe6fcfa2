use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use snapdiff::pipeline::{
    self, load_json, Method, ReconstructConfig, RunConfig, SweepConfig,
};
use snapdiff::{Error, Result};

/// Snapshot difference imaging: simulation, reconstruction and noise analysis.
#[derive(Parser, Debug)]
#[command(name = "snapdiff", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON configuration document.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (speed only; results do not depend on it).
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate difference frames and write them with a manifest.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Recover both well images from frames.
    Reconstruct {
        #[command(flatten)]
        common: Common,
        /// Frame directory or single frame file.
        #[arg(long)]
        frames: Option<PathBuf>,
        /// Moment estimator: m1, m2 or m3.
        #[arg(long)]
        method: Option<Method>,
        /// Label image (PGM) for m2.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Directory written by dark-calibrate.
        #[arg(long)]
        dark: Option<PathBuf>,
        /// Treat the read-noise variance as zero.
        #[arg(long)]
        ignore_read_noise: bool,
        /// Ground-truth plus well (PFM).
        #[arg(long)]
        truth_plus: Option<PathBuf>,
        /// Ground-truth minus well (PFM).
        #[arg(long)]
        truth_minus: Option<PathBuf>,
        #[arg(long)]
        sigma_range: Option<f64>,
        #[arg(long)]
        sigma_domain: Option<f64>,
        #[arg(long)]
        window_radius: Option<usize>,
    },
    /// Variance-vs-intensity sweep of snapshot and sequential captures.
    NoiseSweep {
        #[command(flatten)]
        common: Common,
    },
    /// Export a scene's source images, labels and expected wells.
    SceneGen {
        #[command(flatten)]
        common: Common,
    },
    /// Offset and read-noise estimate from dark frames.
    DarkCalibrate {
        #[command(flatten)]
        common: Common,
        /// Dark frame directory.
        #[arg(long)]
        frames: PathBuf,
    },
}

fn out_dir(common: &Common, configured: Option<&Path>) -> Result<PathBuf> {
    common
        .out
        .clone()
        .or_else(|| configured.map(Path::to_path_buf))
        .ok_or_else(|| Error::usage("--out: an output directory is required"))
}

fn run_config(common: &Common) -> Result<RunConfig> {
    let path = common
        .config
        .as_deref()
        .ok_or_else(|| Error::usage("--config: a run configuration is required"))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { common } => {
            let cfg = run_config(&common)?;
            let out = out_dir(&common, cfg.out.as_deref())?;
            let m = pipeline::simulate(&cfg, &out)?;
            println!("wrote {} frames to {}", m.frame_count, out.display());
        }
        Command::Reconstruct {
            common,
            frames,
            method,
            labels,
            dark,
            ignore_read_noise,
            truth_plus,
            truth_minus,
            sigma_range,
            sigma_domain,
            window_radius,
        } => {
            let mut cfg = match (&common.config, frames.clone(), method) {
                (Some(p), _, _) => ReconstructConfig::load(p)?,
                (None, Some(f), Some(m)) => ReconstructConfig::new(f, m),
                (None, None, _) => return Err(Error::usage("--frames: a frame directory is required")),
                (None, _, None) => return Err(Error::usage("--method: one of m1, m2, m3 is required")),
            };
            if let Some(f) = frames {
                cfg.frames = f;
            }
            if let Some(m) = method {
                cfg.method = m;
            }
            cfg.labels = labels.or(cfg.labels);
            cfg.dark = dark.or(cfg.dark);
            cfg.ignore_read_noise |= ignore_read_noise;
            cfg.truth_plus = truth_plus.or(cfg.truth_plus);
            cfg.truth_minus = truth_minus.or(cfg.truth_minus);
            cfg.bilateral.sigma_range = sigma_range.or(cfg.bilateral.sigma_range);
            cfg.bilateral.sigma_domain = sigma_domain.or(cfg.bilateral.sigma_domain);
            cfg.bilateral.window_radius = window_radius.or(cfg.bilateral.window_radius);
            let out = out_dir(&common, None)?;
            let m = pipeline::reconstruct(&cfg, &out)?;
            println!(
                "{} valid pixels of {}, {} clamped",
                m.valid_pixels, m.total_pixels, m.clamped
            );
            if let Some(r) = m.rmse {
                println!("relative RMSE {:.4} (plus {:.4}, minus {:.4})", r.joint, r.plus, r.minus);
            }
        }
        Command::NoiseSweep { common } => {
            let mut cfg: SweepConfig = match &common.config {
                Some(p) => load_json(p)?,
                None => SweepConfig::default(),
            };
            if let Some(seed) = common.seed {
                cfg.seed = seed;
            }
            let out = out_dir(&common, None)?;
            let report = pipeline::noise_sweep(&cfg, &out)?;
            match (report.ratio.ratio, report.ratio.uncertainty) {
                (Some(r), Some(u)) => println!("post/pre ratio at zero intensity: {r:.3} ± {u:.3}"),
                _ => println!(
                    "post/pre ratio undefined: {}",
                    report.ratio.diagnostic.as_deref().unwrap_or("")
                ),
            }
        }
        Command::SceneGen { common } => {
            let cfg = run_config(&common)?;
            let out = out_dir(&common, cfg.out.as_deref())?;
            let files = pipeline::scene_gen(&cfg, &out)?;
            println!("wrote {} files to {}", files.len(), out.display());
        }
        Command::DarkCalibrate { common, frames } => {
            let out = out_dir(&common, None)?;
            let s = pipeline::dark_calibrate(&frames, &out)?;
            println!(
                "{} dark frames: read variance {:.4}, mean offset {:.4}",
                s.frames, s.read_variance, s.mean_offset
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let threads = match &cli.command {
        Command::Simulate { common }
        | Command::Reconstruct { common, .. }
        | Command::NoiseSweep { common }
        | Command::SceneGen { common }
        | Command::DarkCalibrate { common, .. } => common.threads,
    };
    if let Some(n) = threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(3);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

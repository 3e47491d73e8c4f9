//! `kjoint`: corpus generation, training, evaluation and diagnostics.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use kspace_joint::config::ExperimentConfig;
use kspace_joint::gradcheck::{run_all, GradcheckConfig};
use kspace_joint::io::{encode_pgm, write_atomic};
use kspace_joint::landscape::{scan, write_csv, LandscapeConfig};
use kspace_joint::model::Example;
use kspace_joint::phantom::{make_corpus, Corpus};
use kspace_joint::rng::Rng;
use kspace_joint::train::{evaluate, noise_for, train, write_history};
use kspace_joint::{Error, ModelState, NetParams, Strategy, ThetaParams};

#[derive(Parser)]
#[command(name = "kjoint", version, about = "Joint k-space sampling and reconstruction experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config (`key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Override a config entry, e.g. `--set epochs=5`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic phantom corpus.
    Phantom {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output directory (default: `corpus_dir` from the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one strategy; writes `checkpoint/` and `history.csv`.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        strategy: Option<String>,
        /// Checkpoint to initialize the network from.
        #[arg(long)]
        init: Option<PathBuf>,
        /// Output directory (default: `out_dir` from the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// PSNR/SSIM table of a checkpoint over one split.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference checks of every derivative; exit 0 iff all pass.
    Gradcheck {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Optional CSV report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Test loss over a grid of offsets of two trainable locations.
    Landscape {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        i: usize,
        #[arg(long)]
        j: usize,
        /// Points per axis.
        #[arg(long, default_value_t = 100)]
        grid: usize,
        /// Largest offset, in cycles.
        #[arg(long, default_value_t = 0.02)]
        half_range: f64,
        /// Number of test images averaged (default: all).
        #[arg(long)]
        images: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Joint training at several noise levels; learned patterns plus summary.
    NoiseSweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Comma-separated noise levels.
        #[arg(long, value_delimiter = ',', required = true)]
        sigmas: Vec<f64>,
        #[arg(long)]
        init: Option<PathBuf>,
        /// Network-only epochs at each noise level before the joint run.
        #[arg(long, default_value_t = 0)]
        pretrain_epochs: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a checkpoint's sampling pattern as a binary P5 image.
    ExportMask {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(args: &ConfigArgs) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_file(&args.config)?;
    for o in &args.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{o}` is not KEY=VALUE")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_corpus(cfg: &ExperimentConfig) -> anyhow::Result<Corpus<f64>> {
    let corpus = Corpus::read(&cfg.corpus_dir)
        .with_context(|| format!("reading corpus {}", cfg.corpus_dir.display()))?;
    let c = &corpus.config;
    if (c.rows, c.cols, c.num_coils) != (cfg.rows, cfg.cols, cfg.coils) {
        bail!(Error::Config(format!(
            "corpus is {}x{} with {} coils but the config asks for {}x{} with {}",
            c.rows, c.cols, c.num_coils, cfg.rows, cfg.cols, cfg.coils
        )));
    }
    Ok(corpus)
}

// Derived-seed tags for initialization.
const TAG_THETA: u64 = 21;
const TAG_PHI: u64 = 22;

fn initial_state(cfg: &ExperimentConfig, init: Option<&Path>) -> anyhow::Result<ModelState<f64>> {
    let theta = ThetaParams::init_variable_density(
        &mut Rng::derive(cfg.seed, &[TAG_THETA]),
        cfg.mode,
        cfg.counts(),
        (cfg.rows, cfg.cols),
        &cfg.density(),
    )?;
    let mut state = match init {
        Some(dir) => {
            let prior = ModelState::read(dir).with_context(|| format!("reading checkpoint {}", dir.display()))?;
            if (prior.phi.depth(), prior.phi.width()) != (cfg.net_depth, cfg.net_width) {
                bail!(Error::Config(format!(
                    "checkpoint network is {}x{}, config asks for {}x{}",
                    prior.phi.depth(),
                    prior.phi.width(),
                    cfg.net_depth,
                    cfg.net_width
                )));
            }
            // Only the network carries over; the pattern and optimizers restart.
            ModelState::new(theta, prior.phi, cfg.k, cfg.arch, cfg.strategy)?
        }
        None => {
            let phi = NetParams::he_init(cfg.net_depth, cfg.net_width, &mut Rng::derive(cfg.seed, &[TAG_PHI]))?;
            ModelState::new(theta, phi, cfg.k, cfg.arch, cfg.strategy)?
        }
    };
    state.k = cfg.k;
    state.arch = cfg.arch;
    state.strategy = cfg.strategy;
    state.cg = cfg.cg();
    Ok(state)
}

fn run_training(cfg: &ExperimentConfig, init: Option<&Path>, out: &Path) -> anyhow::Result<ModelState<f64>> {
    let corpus = load_corpus(cfg)?;
    let mut state = initial_state(cfg, init)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut tc = cfg.train_config();
    tc.checkpoint_on_divergence = Some(out.join("diverged"));
    let history = train(&mut state, &corpus.coils, &corpus.train, &corpus.val, &tc)?;
    state.write(&out.join("checkpoint"), cfg.seed)?;
    write_history(&out.join("history.csv"), &history)?;
    Ok(state)
}

fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> anyhow::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| anyhow!(e.to_string()))
}

fn num(x: f64) -> String {
    x.to_string()
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Phantom { cfg, out } => {
            let cfg = load_config(&cfg)?;
            let dir = out.unwrap_or_else(|| cfg.corpus_dir.clone());
            let corpus: Corpus<f64> = make_corpus(&cfg.corpus())?;
            corpus.write(&dir)?;
            println!("wrote corpus to {}", dir.display());
        }
        Command::Train { cfg, strategy, init, out } => {
            let mut cfg = load_config(&cfg)?;
            if let Some(s) = strategy {
                cfg.strategy = Strategy::parse(&s).map_err(|_| Error::Config(format!("unknown strategy `{s}`")))?;
            }
            let init = init.or_else(|| cfg.init_from.clone());
            let out = out.unwrap_or_else(|| cfg.out_dir.clone());
            run_training(&cfg, init.as_deref(), &out)?;
            println!("wrote {}", out.display());
        }
        Command::Eval { cfg, checkpoint, split, out } => {
            let cfg = load_config(&cfg)?;
            let corpus = load_corpus(&cfg)?;
            let state = ModelState::read(&checkpoint)?;
            let images = match split.as_str() {
                "train" => &corpus.train,
                "val" => &corpus.val,
                "test" => &corpus.test,
                _ => bail!(Error::Config(format!("unknown split `{split}`"))),
            };
            let report = evaluate(&state, &corpus.coils, images, cfg.sigma, cfg.seed)?;
            let mut rows: Vec<Vec<String>> = report
                .per_image
                .iter()
                .enumerate()
                .map(|(i, r)| vec![i.to_string(), num(r.0), num(r.1), num(r.2)])
                .collect();
            rows.push(vec!["mean".into(), num(report.mse), num(report.psnr), num(report.ssim)]);
            write_atomic(&out, &csv_bytes(&["image", "mse", "psnr", "ssim"], &rows)?)?;
            println!("psnr {:.3} dB, ssim {:.4}", report.psnr, report.ssim);
        }
        Command::Gradcheck { seed, out } => {
            let results = run_all(&GradcheckConfig {
                seed,
                ..GradcheckConfig::default()
            })?;
            let mut ok = true;
            let mut rows = Vec::new();
            for r in &results {
                ok &= r.passed();
                println!(
                    "{:<20} {:>4} checked  max rel {:.3e}  tol {:.0e}  {}",
                    r.name,
                    r.checked,
                    r.max_rel,
                    r.tol,
                    if r.passed() { "pass" } else { "FAIL" }
                );
                rows.push(vec![
                    r.name.to_string(),
                    r.checked.to_string(),
                    num(r.max_rel),
                    num(r.tol),
                    r.passed().to_string(),
                ]);
            }
            if let Some(path) = out {
                write_atomic(&path, &csv_bytes(&["suite", "checked", "max_rel", "tol", "passed"], &rows)?)?;
            }
            return Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE });
        }
        Command::Landscape {
            cfg,
            checkpoint,
            i,
            j,
            grid,
            half_range,
            images,
            out,
        } => {
            let cfg = load_config(&cfg)?;
            let corpus = load_corpus(&cfg)?;
            let state = ModelState::read(&checkpoint)?;
            let s = state.theta.realize()?.sampler;
            let (mv, mh) = s.kspace_shape();
            let n = images.unwrap_or(corpus.test.len()).min(corpus.test.len());
            let examples = corpus.test[..n]
                .iter()
                .enumerate()
                .map(|(idx, t)| {
                    let mut rng = Rng::derive(cfg.seed, &[31, idx as u64]);
                    Ok(Example {
                        truth: t.clone(),
                        noise: noise_for(cfg.sigma, &[cfg.coils, mv, mh], &mut rng)?,
                    })
                })
                .collect::<kspace_joint::Result<Vec<_>>>()?;
            let points = scan(
                &state,
                &corpus.coils,
                &examples,
                &LandscapeConfig {
                    i,
                    j,
                    n: grid,
                    half_range,
                },
            )?;
            write_csv(&out, &points)?;
            println!("wrote {} points to {}", points.len(), out.display());
        }
        Command::NoiseSweep {
            cfg,
            sigmas,
            init,
            pretrain_epochs,
            out,
        } => {
            let mut cfg = load_config(&cfg)?;
            cfg.strategy = Strategy::Joint;
            let init = init.or_else(|| cfg.init_from.clone());
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let corpus = load_corpus(&cfg)?;
            let mut rows = Vec::new();
            for (idx, &sigma) in sigmas.iter().enumerate() {
                let mut run_cfg = cfg.clone();
                run_cfg.sigma = sigma;
                let dir = out.join(format!("sigma_{idx:02}"));
                let start = if pretrain_epochs > 0 {
                    let pre_cfg = ExperimentConfig {
                        strategy: Strategy::PhiAlone,
                        epochs: pretrain_epochs,
                        ..run_cfg.clone()
                    };
                    run_training(&pre_cfg, init.as_deref(), &dir.join("pretrain"))?;
                    Some(dir.join("pretrain").join("checkpoint"))
                } else {
                    init.clone()
                };
                let state = run_training(&run_cfg, start.as_deref(), &dir)?;
                state.theta.write(&out, &format!("pattern_sigma_{idx:02}"))?;
                let report = evaluate(&state, &corpus.coils, &corpus.test, sigma, cfg.seed)?;
                rows.push(vec![
                    num(sigma),
                    num(state.theta.mean_free_distance_from_dc()),
                    num(report.psnr),
                    num(report.ssim),
                    format!("pattern_sigma_{idx:02}.txt"),
                ]);
            }
            write_atomic(
                &out.join("summary.csv"),
                &csv_bytes(&["sigma", "mean_distance_from_dc", "test_psnr", "test_ssim", "pattern"], &rows)?,
            )?;
            println!("wrote {} noise levels to {}", rows.len(), out.display());
        }
        Command::ExportMask { checkpoint, out } => {
            let theta: ThetaParams<f64> = ThetaParams::read(&checkpoint, "theta")?;
            let (rows, cols, pixels) = theta.mask()?;
            write_atomic(&out, &encode_pgm(cols, rows, &pixels)?)?;
            println!("wrote {}x{} mask to {}", rows, cols, out.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            let kind = e.downcast_ref::<Error>().map_or("runtime", Error::kind);
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error kind={kind} message={msg:?}");
            if kind == "config" {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

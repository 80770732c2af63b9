use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use harness::config::{DictConfig, Experiment, ExperimentConfig, InpaintConfig, RecoveryConfig};
use harness::experiments::{run_dict_recovery, run_inpaint, run_recovery};
use harness::io::{
    read_mask, read_matrix, read_pgm, write_key_values, write_matrix, write_pgm, write_scaled_pgm, write_text, Pgm,
};
use harness::{HarnessError, Result};
use jointsparse::baselines::{solve_gl, tv_inpaint, GlOptions, TvOptions};
use jointsparse::jbp::{solve, JbpProblem, SolveStatus, SolverOptions};
use jointsparse::learning::{learn, Inference, LearnConfig, PatchBatch, TrainingSet};
use jointsparse::model::{block_dict, delta_estimate, normalize_pair, synthesize, RipMode};
use jointsparse::rng::{self, Purpose};
use jointsparse::theory::{constant_c, recovery_bound, BoundInputs};
use jointsparse::{DictionaryPair, Matrix, Vector};

#[derive(Parser)]
#[command(
    name = "jointsparse",
    version,
    about = "Joint intensity/depth sparse coding experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment configuration file (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides the configuration file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a planted dictionary pair and one joint-sparse signal pair.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 64)]
        rows: usize,
        #[arg(long, default_value_t = 128)]
        atoms: usize,
        #[arg(long, default_value_t = 10)]
        sparsity: usize,
        #[arg(long, default_value_t = 0.25)]
        gamma: f64,
        #[arg(long, default_value_t = 20.0)]
        snr: f64,
    },
    /// Joint basis pursuit on one signal pair.
    SolveJbp {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: SolveInput,
        /// Intensity ball radius.
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        /// Depth ball radius; defaults to `--eps`.
        #[arg(long)]
        eps_d: Option<f64>,
        /// Magnitude bound on both coefficient vectors.
        #[arg(long, default_value_t = 1.0)]
        u: f64,
    },
    /// Group lasso on one signal pair.
    SolveGl {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: SolveInput,
        #[arg(long)]
        lambda: f64,
    },
    /// Total-variation inpainting of a depth image.
    InpaintTv {
        #[command(flatten)]
        common: Common,
        /// Depth image (PGM).
        #[arg(long)]
        depth: PathBuf,
        /// Observation mask (PGM with pixels 0 or 1).
        #[arg(long)]
        mask: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        weight: f64,
        #[arg(long, default_value_t = 2000)]
        iters: usize,
    },
    /// Learn a dictionary pair from matched patch matrices.
    Learn {
        #[command(flatten)]
        common: Common,
        /// Intensity patches, one per column (MAT1).
        #[arg(long)]
        y_i: PathBuf,
        /// Depth patches, one per column (MAT1).
        #[arg(long)]
        y_d: PathBuf,
        #[arg(long, default_value_t = 32)]
        atoms: usize,
        #[arg(long, default_value_t = 20)]
        iterations: usize,
        #[arg(long, default_value_t = 500)]
        batch: usize,
        #[arg(long, value_enum, default_value_t = Method::Jbp)]
        inference: Method,
        #[arg(long, default_value_t = 0.1)]
        eta: f64,
        #[arg(long, default_value_t = 0.3)]
        lambda: f64,
        #[arg(long, default_value_t = 1e-3)]
        rho: f64,
    },
    /// Model recovery experiment: JBP and GL coefficient error against SNR.
    ExpRecovery(Common),
    /// Dictionary recovery experiment: recovered atoms against sparsity.
    ExpDict(Common),
    /// Depth inpainting experiment: JBP, GL and TV against ground truth.
    ExpInpaint(Common),
    /// Evaluate the coefficient recovery bound.
    Bound {
        #[arg(long, default_value_t = 0.1)]
        eta: f64,
        #[arg(long, default_value_t = 0.25)]
        gamma: f64,
        #[arg(long, default_value_t = 10)]
        t0: usize,
        #[arg(long, default_value_t = 25)]
        m: usize,
        /// Isometry constant at order M; estimated when omitted.
        #[arg(long)]
        delta_m: Option<f64>,
        /// Isometry constant at order M + |T0|; estimated when omitted.
        #[arg(long)]
        delta_m_t0: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        f0: f64,
        /// Dictionary rows used for the estimate.
        #[arg(long, default_value_t = 64)]
        rows: usize,
        /// Dictionary atoms used for the estimate.
        #[arg(long, default_value_t = 128)]
        atoms: usize,
        #[arg(long, value_enum, default_value_t = Mode::Mean)]
        mode: Mode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args, Clone)]
struct SolveInput {
    #[arg(long)]
    phi_i: PathBuf,
    #[arg(long)]
    phi_d: PathBuf,
    /// Intensity signal as a single-column MAT1 file.
    #[arg(long)]
    y_i: PathBuf,
    #[arg(long)]
    y_d: PathBuf,
}

#[derive(ValueEnum, Clone, Copy)]
enum Method {
    Jbp,
    Gl,
}

#[derive(ValueEnum, Clone, Copy)]
enum Mode {
    Worst,
    Mean,
}

fn out_dir(common: &Common, fallback: Option<&PathBuf>) -> Result<PathBuf> {
    let dir = common
        .out
        .clone()
        .or_else(|| fallback.cloned())
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir).map_err(|e| HarnessError::Io {
        path: dir.clone(),
        source: e,
    })?;
    Ok(dir)
}

fn column(path: &Path) -> Result<Vector> {
    let m = read_matrix(path)?;
    if m.ncols() != 1 {
        return Err(HarnessError::parse(path, 1, "expected a single column"));
    }
    Ok(m.column(0).into_owned())
}

fn dictionaries(input: &SolveInput) -> Result<DictionaryPair> {
    Ok(DictionaryPair::new(
        read_matrix(&input.phi_i)?,
        read_matrix(&input.phi_d)?,
    )?)
}

fn write_code(dir: &Path, a: &Vector, b: &Vector) -> Result<()> {
    write_matrix(&dir.join("a.mat"), &Matrix::from_column_slice(a.len(), 1, a.as_slice()))?;
    write_matrix(&dir.join("b.mat"), &Matrix::from_column_slice(b.len(), 1, b.as_slice()))
}

fn experiment(common: &Common, name: &str, default: Experiment) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig {
            experiment: default,
            seed: 0,
            out: None,
        },
    };
    if cfg.name() != name {
        return Err(HarnessError::Config(format!(
            "configuration is for `{}`, not `{name}`",
            cfg.name()
        )));
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn write_run(dir: &Path, cfg: &ExperimentConfig, hash: &str, csv: &str) -> Result<()> {
    write_text(&dir.join(format!("{}.csv", cfg.name())), csv)?;
    let text = format!("# config_hash = {hash}\nseed = {}\n{}", cfg.seed, cfg.canonical());
    write_text(&dir.join("config.txt"), &text)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            common,
            rows,
            atoms,
            sparsity,
            gamma,
            snr,
        } => {
            let seed = common.seed.unwrap_or(0);
            let dir = out_dir(&common, None)?;
            let dicts = DictionaryPair::gaussian(rows, rows, atoms, rng::derive_seed(seed, Purpose::Dictionary, 0));
            let (raw, gt) = synthesize(&dicts, sparsity, gamma, snr, rng::derive_seed(seed, Purpose::Trial, 0))?;
            let (pair, si, sd) = normalize_pair(&raw)?;
            let gt = gt.rescaled(1.0 / si, 1.0 / sd);
            write_matrix(&dir.join("phi_i.mat"), &dicts.phi_i)?;
            write_matrix(&dir.join("phi_d.mat"), &dicts.phi_d)?;
            write_matrix(
                &dir.join("y_i.mat"),
                &Matrix::from_column_slice(rows, 1, pair.y_i.as_slice()),
            )?;
            write_matrix(
                &dir.join("y_d.mat"),
                &Matrix::from_column_slice(rows, 1, pair.y_d.as_slice()),
            )?;
            write_matrix(
                &dir.join("a0.mat"),
                &Matrix::from_column_slice(atoms, 1, gt.a0.as_slice()),
            )?;
            write_matrix(
                &dir.join("b0.mat"),
                &Matrix::from_column_slice(atoms, 1, gt.b0.as_slice()),
            )?;
            let support = gt.support.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(",");
            write_key_values(
                &dir.join("synth.txt"),
                &[
                    ("seed", seed.to_string()),
                    ("support", support),
                    ("gamma", gt.gamma.to_string()),
                    ("snr_db", snr.to_string()),
                    ("noise_i", gt.noise_i.norm().to_string()),
                    ("noise_d", gt.noise_d.norm().to_string()),
                ],
            )
        }
        Command::SolveJbp {
            common,
            input,
            eps,
            eps_d,
            u,
        } => {
            let dir = out_dir(&common, None)?;
            let dicts = dictionaries(&input)?;
            let (yi, yd) = (column(&input.y_i)?, column(&input.y_d)?);
            let mut p = JbpProblem::new(&yi, &yd, &dicts.phi_i, &dicts.phi_d, eps, u);
            p.eps_d = eps_d.unwrap_or(eps);
            let sol = solve(&p, &SolverOptions::default())?;
            let status = match sol.status {
                SolveStatus::Optimal => "optimal",
                SolveStatus::Infeasible => "infeasible",
                SolveStatus::MaxIter => "max_iter",
            };
            write_key_values(
                &dir.join("solve.txt"),
                &[
                    ("status", status.to_string()),
                    ("objective", format!("{:.16e}", sol.objective)),
                    ("gap", format!("{:.6e}", sol.gap)),
                    ("newton_steps", sol.newton_steps.to_string()),
                ],
            )?;
            match sol.status {
                SolveStatus::Infeasible => Err(jointsparse::Error::Infeasible { slack: sol.gap }.into()),
                _ => write_code(&dir, &sol.code.a, &sol.code.b),
            }
        }
        Command::SolveGl { common, input, lambda } => {
            let dir = out_dir(&common, None)?;
            let dicts = dictionaries(&input)?;
            let (yi, yd) = (column(&input.y_i)?, column(&input.y_d)?);
            let r = solve_gl(&yi, &yd, &dicts, &GlOptions::new(lambda), None)?;
            write_key_values(
                &dir.join("solve.txt"),
                &[
                    ("objective", format!("{:.16e}", r.objective)),
                    ("iterations", r.iterations.to_string()),
                    ("converged", r.converged.to_string()),
                ],
            )?;
            write_code(&dir, &r.a, &r.b)
        }
        Command::InpaintTv {
            common,
            depth,
            mask,
            weight,
            iters,
        } => {
            let dir = out_dir(&common, None)?;
            let img = read_pgm(&depth)?;
            let m = read_mask(&mask)?;
            let opts = TvOptions {
                weight,
                max_iter: iters,
                ..TvOptions::default()
            };
            let u = tv_inpaint(&img.pixels, &m, &opts)?;
            write_matrix(&dir.join("depth_tv.mat"), &u)?;
            write_pgm(
                &dir.join("depth_tv.pgm"),
                &Pgm {
                    pixels: u,
                    maxval: img.maxval,
                },
            )
        }
        Command::Learn {
            common,
            y_i,
            y_d,
            atoms,
            iterations,
            batch,
            inference,
            eta,
            lambda,
            rho,
        } => {
            let dir = out_dir(&common, None)?;
            let data = PatchBatch::from_signals(read_matrix(&y_i)?, read_matrix(&y_d)?)?;
            let cfg = LearnConfig {
                atoms,
                batch_size: batch,
                n_iterations: iterations,
                eta,
                rho,
                gl_lambda: lambda,
                inference: match inference {
                    Method::Jbp => Inference::Jbp,
                    Method::Gl => Inference::Gl,
                },
                seed: common.seed.unwrap_or(0),
                ..LearnConfig::default()
            };
            let (dicts, history) = learn(&TrainingSet::Signals(&data), &cfg)?;
            write_matrix(&dir.join("phi_i.mat"), &dicts.phi_i)?;
            write_matrix(&dir.join("phi_d.mat"), &dicts.phi_d)?;
            let mut csv = String::from("iteration,residual,activity,atom_change,failures\n");
            for (k, r) in history.records.iter().enumerate() {
                csv.push_str(&format!(
                    "{k},{:.9e},{:.9e},{:.9e},{}\n",
                    r.residual, r.activity, r.atom_change, r.failures
                ));
            }
            write_text(&dir.join("history.csv"), &csv)
        }
        Command::ExpRecovery(common) => {
            let cfg = experiment(&common, "recovery", Experiment::Recovery(RecoveryConfig::default()))?;
            let Experiment::Recovery(c) = &cfg.experiment else {
                unreachable!()
            };
            let hash = cfg.hash();
            let table = run_recovery(c, cfg.seed, &hash)?;
            let dir = out_dir(&common, cfg.out.as_ref())?;
            write_run(&dir, &cfg, &hash, &table.render())
        }
        Command::ExpDict(common) => {
            let cfg = experiment(&common, "dict", Experiment::Dict(DictConfig::default()))?;
            let Experiment::Dict(c) = &cfg.experiment else {
                unreachable!()
            };
            let hash = cfg.hash();
            let table = run_dict_recovery(c, cfg.seed, &hash)?;
            let dir = out_dir(&common, cfg.out.as_ref())?;
            write_run(&dir, &cfg, &hash, &table.render())
        }
        Command::ExpInpaint(common) => {
            let cfg = experiment(&common, "inpaint", Experiment::Inpaint(InpaintConfig::default()))?;
            let Experiment::Inpaint(c) = &cfg.experiment else {
                unreachable!()
            };
            let hash = cfg.hash();
            let o = run_inpaint(c, cfg.seed, &hash)?;
            let dir = out_dir(&common, cfg.out.as_ref())?;
            write_run(&dir, &cfg, &hash, &o.table.render())?;
            let (lo, hi) = (o.depth.min(), o.depth.max());
            for (name, img) in [
                ("depth_truth", &o.depth),
                ("depth_jbp", &o.jbp),
                ("depth_gl", &o.gl),
                ("depth_tv", &o.tv),
            ] {
                write_scaled_pgm(&dir.join(format!("{name}.pgm")), img, lo, hi)?;
            }
            let mask = o.mask.map(|m| if m { 1.0 } else { 0.0 });
            write_pgm(
                &dir.join("mask.pgm"),
                &Pgm {
                    pixels: mask,
                    maxval: 1,
                },
            )
        }
        Command::Bound {
            eta,
            gamma,
            t0,
            m,
            delta_m,
            delta_m_t0,
            f0,
            rows,
            atoms,
            mode,
            seed,
        } => {
            let (delta_m, delta_m_t0) = match (delta_m, delta_m_t0) {
                (Some(a), Some(b)) => (a, b),
                (a, b) => {
                    let dicts =
                        DictionaryPair::gaussian(rows, rows, atoms, rng::derive_seed(seed, Purpose::Dictionary, 0));
                    let block = block_dict(&dicts);
                    let mode = match mode {
                        Mode::Worst => RipMode::Worst,
                        Mode::Mean => RipMode::Mean,
                    };
                    let a = match a {
                        Some(a) => a,
                        None => delta_estimate(&block, m, mode)?.delta,
                    };
                    let b = match b {
                        Some(b) => b,
                        None => delta_estimate(&block, m + t0, mode)?.delta,
                    };
                    (a, b)
                }
            };
            let inputs = BoundInputs {
                eta,
                gamma,
                t0,
                m,
                delta_m,
                delta_m_t0,
                f0,
            };
            let c = constant_c(&inputs)?;
            let bound = recovery_bound(&inputs)?;
            println!("delta_m = {delta_m:.6e}\ndelta_m_t0 = {delta_m_t0:.6e}\nC = {c:.9e}\nbound = {bound:.9e}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

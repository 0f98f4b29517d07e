use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use gsp_fdi::detector::{calibrate_dc, detect_dc};
use gsp_fdi::experiment::{self, resolve_case};
use gsp_fdi::powerflow::{solve_ac_detailed, StateFile};
use gsp_fdi::{
    calibrate, detect, grid_laplacians, solve_dc, ComplexState, DetectorModel, ExperimentConfig, GridCase,
    LaplacianMode, Verdict,
};

#[derive(Parser)]
#[command(name = "gsp-fdi", version, about = "Graph-signal detection of false data injection in grid states")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Grid case utilities.
    Case {
        #[command(subcommand)]
        action: CaseAction,
    },
    /// Solve the power flow and print the state as JSON.
    Powerflow {
        /// Case file, or a bundled case name (ieee14, ieee30).
        case: String,
        /// Linearized DC flow (unit magnitudes).
        #[arg(long)]
        dc: bool,
    },
    /// Calibrate a detector on seeded historic states.
    Calibrate {
        case: String,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Single-term model on DC voltage angles.
        #[arg(long)]
        dc: bool,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run a calibrated detector on a state file. Exits 2 when an attack is flagged.
    Detect {
        model: PathBuf,
        state: PathBuf,
    },
    /// Run one of the Monte Carlo experiments and write its result files.
    Experiment {
        #[arg(value_enum)]
        which: Which,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Print the spectra, filters and thresholds of a model.
    Inspect {
        model: PathBuf,
    },
}

#[derive(Subcommand)]
enum CaseAction {
    /// Parse and validate a case file.
    Validate { file: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    Tc1,
    Tc2,
    Tc3,
    Tc4,
    Compare,
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::from_path(p).with_context(|| format!("reading config {}", p.display())),
        None => Ok(ExperimentConfig::default()),
    }
}

fn load_case(name: &str) -> Result<GridCase> {
    resolve_case(name).with_context(|| format!("loading case {name}"))
}

fn validate_case(file: &Path) -> Result<()> {
    let case = GridCase::from_path(file).with_context(|| format!("validating {}", file.display()))?;
    println!(
        "{}: {} buses, {} lines, slack bus {}",
        file.display(),
        case.bus_count(),
        case.lines.len(),
        case.slack_index() + 1
    );
    Ok(())
}

fn powerflow(name: &str, dc: bool) -> Result<()> {
    let case = load_case(name)?;
    let state = if dc {
        let angles = solve_dc(&case)?;
        ComplexState::from_polar(&vec![1.0; angles.len()], &angles)
    } else {
        let sol = solve_ac_detailed(&case, &Default::default())?;
        log::info!("converged in {} iterations, mismatch {:e}", sol.iterations, sol.mismatch);
        sol.state
    };
    println!("{}", serde_json::to_string_pretty(&StateFile { buses: state.to_records() })?);
    Ok(())
}

fn calibrate_model(name: &str, config: Option<&Path>, dc: bool, output: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    let case = load_case(name)?;
    let historic = cfg.historic(&case)?;
    let params = cfg.params(cfg.alpha_sigma);
    let model = if dc {
        let pair = grid_laplacians(&case, LaplacianMode::Dc)?;
        let angles: Vec<Vec<f64>> = historic.iter().map(|s| s.angles()).collect();
        calibrate_dc(&pair.yr, &angles, &params)?
    } else {
        calibrate(&grid_laplacians(&case, LaplacianMode::Ac)?, &historic, &params)?
    };
    model.save(output).with_context(|| format!("writing {}", output.display()))?;
    log::info!("calibrated on {} historic states, model written to {}", model.n_historic, output.display());
    Ok(())
}

fn run_detect(model: &Path, state: &Path) -> Result<Verdict> {
    let model = DetectorModel::load(model).with_context(|| format!("loading model {}", model.display()))?;
    let text = std::fs::read_to_string(state).with_context(|| format!("reading state {}", state.display()))?;
    let file: StateFile = serde_json::from_str(&text)?;
    let state = ComplexState::from_records(&file.buses)?;
    let report = match model.mode {
        LaplacianMode::Ac => detect(&model, &state)?,
        LaplacianMode::Dc => detect_dc(&model, &state.angles())?,
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(report.verdict)
}

fn run_experiment(which: Which, config: Option<&Path>, output: Option<&Path>) -> Result<()> {
    let cfg = load_config(config)?;
    let dir = output
        .map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.clone())
        .context("no output directory: pass -o or set output_dir in the config")?;
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    match which {
        Which::Tc1 => experiment::write_tc1(&experiment::run_tc1(&cfg)?, &dir)?,
        Which::Tc2 => experiment::write_tc2(&experiment::run_tc2(&cfg)?, &dir)?,
        Which::Tc3 => experiment::write_tc3(&experiment::run_tc3(&cfg)?, &dir)?,
        Which::Tc4 => {
            let result = experiment::run_tc4(&cfg)?;
            experiment::write_tc4(&result, &dir)?;
            if !result.attacked.verdict.is_attack() {
                log::warn!("the multi-bus attack was not flagged");
            }
        }
        Which::Compare => experiment::write_compare(&experiment::run_compare(&cfg)?, &dir)?,
    }
    println!("results written to {}", dir.display());
    Ok(())
}

fn fmt_list(values: impl IntoIterator<Item = f64>) -> String {
    values.into_iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(" ")
}

fn inspect(path: &Path) -> Result<()> {
    let model = DetectorModel::load(path).with_context(|| format!("loading model {}", path.display()))?;
    println!(
        "mode {:?}, {} buses, {} historic states, alpha {} (smoothness {}), rule {:?}, min terms {}",
        model.mode,
        model.dim(),
        model.n_historic,
        model.params.alpha_sigma,
        model.params.alpha_sigma_s,
        model.params.rule,
        model.params.min_terms
    );
    for t in &model.terms {
        let d = &t.design;
        println!("\n[{}]", t.term);
        println!("  eigenvalues   {}", fmt_list(t.basis.eigenvalues.iter().copied()));
        println!("  normalized    {}", fmt_list(t.basis.normalized_frequencies()));
        println!("  response      {}", fmt_list(d.response.iter().copied()));
        println!("  cutoff        index {} of {}, lambda {:.6}", d.cutoff_index, t.basis.dim(), d.cutoff_lambda);
        match d.poly_coeffs() {
            Some(c) => println!("  polynomial    {}", c.iter().map(|v| format!("{v:.4e}")).collect::<Vec<_>>().join(" ")),
            None => println!("  polynomial    none (spectral path only)"),
        }
        println!(
            "  threshold     {:.6e} (mean {:.6e}, sd {:.6e}, max {:.6e})",
            t.threshold, t.stats.mean, t.stats.std, t.stats.max
        );
    }
    for s in &model.smoothness {
        println!(
            "\nsmoothness {:?}: threshold {:.6e} (mean {:.6e}, sd {:.6e})",
            s.part, s.threshold, s.stats.mean, s.stats.std
        );
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Case { action: CaseAction::Validate { file } } => validate_case(&file)?,
        Command::Powerflow { case, dc } => powerflow(&case, dc)?,
        Command::Calibrate { case, config, dc, output } => calibrate_model(&case, config.as_deref(), dc, &output)?,
        Command::Detect { model, state } => {
            return Ok(match run_detect(&model, &state)? {
                Verdict::H0 => ExitCode::SUCCESS,
                Verdict::H1 => ExitCode::from(2),
            })
        }
        Command::Experiment { which, config, output } => run_experiment(which, config.as_deref(), output.as_deref())?,
        Command::Inspect { model } => inspect(&model)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

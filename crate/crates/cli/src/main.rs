use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tcpm_core::data_io::{
    self, builtin_model, generate_interaction_sim, load_bundled_dataset, read_csv_path, render_text,
    write_report, ReportFormat, SimSpec,
};
use tcpm_core::engine::{fit_report, run_estimation, Table};
use tcpm_core::model::{has_errors, parse_model_config, validate_model, EstimationConfig, Mode, ModelSpec};
use tcpm_core::{Dataset, Error};

#[derive(Parser)]
#[command(name = "tcpm", version, about = "Latent variable path modelling with resultants and oblique projections")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate a model and print the fit report.
    Estimate(EstimateArgs),
    /// Estimate for every resultant order 0..=k-max and compare.
    Sweep {
        #[command(flatten)]
        run: EstimateArgs,
        #[arg(long, default_value_t = 4)]
        k_max: u32,
    },
    /// Write the simulated interaction dataset as CSV.
    Simulate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        n: usize,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a model configuration against a dataset.
    Validate(InputArgs),
}

#[derive(Args)]
struct InputArgs {
    /// Bundled dataset name (senegal, dakar_rent) or path to a CSV file.
    #[arg(long)]
    data: String,
    /// builtin:NAME or path to a JSON model; defaults to the bundled dataset's model.
    #[arg(long)]
    model: Option<String>,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_parser = ["lohmoller", "tcpm"])]
    mode: Option<String>,
    #[arg(long)]
    k: Option<u32>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    skip_external: bool,
    #[arg(long)]
    interactions: bool,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Write CSV tables to this directory instead of printing.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failures mapped to exit codes: bad input is a usage error (2),
/// failures inside estimation are 1.
enum Failure {
    Usage(String),
    Estimation(String),
}

impl Failure {
    fn usage(e: Error) -> Self {
        Failure::Usage(e.to_string())
    }

    fn estimation(e: Error) -> Self {
        Failure::Estimation(e.to_string())
    }
}

fn load_data(spec: &str) -> Result<(Dataset, Option<(ModelSpec, EstimationConfig)>), Failure> {
    if data_io::BUNDLED_DATASETS.contains(&spec) {
        let b = load_bundled_dataset(spec).map_err(Failure::usage)?;
        return Ok((b.dataset, Some((b.default_model, b.default_config))));
    }
    let path = Path::new(spec);
    if !path.exists() {
        return Err(Failure::Usage(format!(
            "--data {spec:?} is neither a bundled dataset ({}) nor an existing file",
            data_io::BUNDLED_DATASETS.join(", ")
        )));
    }
    Ok((read_csv_path(path).map_err(Failure::usage)?, None))
}

fn load_inputs(input: &InputArgs) -> Result<(Dataset, ModelSpec, EstimationConfig), Failure> {
    let (data, default) = load_data(&input.data)?;
    let (spec, cfg) = match (&input.model, default) {
        (Some(m), _) => match m.strip_prefix("builtin:") {
            Some(name) => builtin_model(name).map_err(Failure::usage)?,
            None => {
                let text = std::fs::read_to_string(m)
                    .map_err(|e| Failure::Usage(format!("cannot read {m:?}: {e}")))?;
                parse_model_config(&text).map_err(Failure::usage)?
            }
        },
        (None, Some(default)) => default,
        (None, None) => {
            return Err(Failure::Usage("--model is required for CSV data".into()));
        }
    };
    Ok((data, spec, cfg))
}

fn apply_overrides(args: &EstimateArgs, mut cfg: EstimationConfig) -> Result<EstimationConfig, Failure> {
    if let Some(m) = &args.mode {
        cfg.mode = m.parse::<Mode>().map_err(Failure::usage)?;
    }
    if let Some(k) = args.k {
        cfg.resultant_order_k = k;
    }
    if let Some(a) = args.alpha {
        cfg.alpha = a;
    }
    if args.skip_external {
        cfg.skip_external = true;
    }
    if args.interactions {
        cfg.with_interactions = true;
    }
    if let Some(t) = args.tol {
        cfg.tolerance = t;
    }
    if let Some(m) = args.max_iter {
        cfg.max_iter = m;
    }
    cfg.check().map_err(Failure::usage)?;
    Ok(cfg)
}

fn emit(tables: &[Table], out: &Option<PathBuf>) -> Result<(), Failure> {
    match out {
        Some(dir) => write_report(tables, ReportFormat::Csv, dir)
            .map_err(|e| Failure::Usage(format!("cannot write report: {e}"))),
        None => {
            print!("{}", render_text(tables));
            Ok(())
        }
    }
}

fn estimate(args: &EstimateArgs) -> Result<(), Failure> {
    let (data, spec, cfg) = load_inputs(&args.input)?;
    let cfg = apply_overrides(args, cfg)?;
    let result = run_estimation(&spec, &data, &cfg).map_err(Failure::estimation)?;
    emit(&fit_report(&result, &spec), &args.out)
}

fn sweep(args: &EstimateArgs, k_max: u32) -> Result<(), Failure> {
    let (data, spec, cfg) = load_inputs(&args.input)?;
    let cfg = apply_overrides(args, cfg)?;
    let mut header = vec!["S operator".to_string()];
    header.extend(spec.equations.iter().map(|e| format!("R² {}", e.dependent)));
    header.push("iterations".into());
    header.push("converged".into());
    let mut table = Table::new("sweep", "Adjustment quality by resultant order", header);
    for k in 0..=k_max {
        let cfg = EstimationConfig {
            resultant_order_k: k,
            ..cfg.clone()
        };
        let r = run_estimation(&spec, &data, &cfg).map_err(Failure::estimation)?;
        let mut row = vec![format!("S_{k}")];
        row.extend(r.equations.iter().map(|e| format!("{:.3}", e.r_squared)));
        row.push(r.iterations.to_string());
        row.push(r.converged.to_string());
        table.push(row);
    }
    emit(&[table], &args.out)
}

fn simulate(seed: u64, n: usize, out: &Option<PathBuf>) -> Result<(), Failure> {
    let spec = SimSpec {
        seed,
        n,
        ..SimSpec::default()
    };
    let data = generate_interaction_sim(&spec).map_err(Failure::usage)?;
    let mut table = Table::new("simulation", "", data.column_names().to_vec());
    for row in data.values().rows() {
        // Shortest round-trip representation keeps the file bit-exact.
        table.push(row.iter().map(|v| format!("{v:?}")).collect());
    }
    let result = match out {
        Some(path) => std::fs::File::create(path)
            .map_err(Error::from)
            .and_then(|f| data_io::write_table_csv(&table, f)),
        None => data_io::write_table_csv(&table, std::io::stdout().lock()),
    };
    result.map_err(|e| Failure::Usage(format!("cannot write simulation: {e}")))
}

fn validate(input: &InputArgs) -> Result<(), Failure> {
    let (data, spec, cfg) = load_inputs(input)?;
    let issues = validate_model(&spec, &cfg, &data);
    if issues.is_empty() {
        println!("ok");
    }
    for issue in &issues {
        println!("{issue}");
    }
    if has_errors(&issues) {
        return Err(Failure::Estimation(format!(
            "{} problem(s) found",
            issues.iter().filter(|i| i.severity == tcpm_core::model::Severity::Error).count()
        )));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Estimate(args) => estimate(args),
        Command::Sweep { run, k_max } => sweep(run, *k_max),
        Command::Simulate { seed, n, out } => simulate(*seed, *n, out),
        Command::Validate(input) => validate(input),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Estimation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("usage: tcpm <estimate|sweep|simulate|validate> --help");
            ExitCode::from(2)
        }
    }
}

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ndarray::{Array1, Array2};

use grip_cli::config::{
    profile_config, ExperimentConfig, KnockoffKind, Method, Profile,
};
use grip_cli::pipeline::{self, derive_stream, ResultRecord};
use grip_cli::report;
use grip_cli::PipelineError;
use grip_core::grip;
use grip_core::ingest;
use grip_core::knockoffs;
use grip_core::{datagen, linalg};

#[derive(Parser)]
#[command(
    name = "grip",
    version,
    about = "Knockoff feature selection with regularization-persistence statistics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthetic-profile Monte Carlo sweep over correlation strengths
    Simulate(SimulateArgs),
    /// Semi-real benchmark: inject a nonlinear signal into CSV covariates
    Inject(InjectArgs),
    /// One-shot selection on X.csv / y.csv
    Select(SelectArgs),
    /// Emit knockoff copies of a design matrix as CSV
    Knockoffs(KnockoffsArgs),
    /// Calibrate the lambda range and block size for a dataset
    Calibrate(CalibrateArgs),
    /// Multi-method comparison emitting the metrics CSV
    Benchmark(BenchmarkArgs),
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Experiment config file (TOML or JSON); other flags override it
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed for all derived random streams
    #[arg(long)]
    seed: Option<u64>,
    /// Number of independent trials
    #[arg(long)]
    trials: Option<usize>,
    /// Comma-separated target FDR levels, ascending
    #[arg(long, value_delimiter = ',')]
    q: Option<Vec<f64>>,
    /// Worker threads for trial execution
    #[arg(long, default_value_t = default_workers())]
    workers: usize,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn default_workers() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

#[derive(Args, Clone)]
struct NetOverrides {
    /// Total optimizer steps
    #[arg(long)]
    steps: Option<usize>,
    /// Steps per regularization block
    #[arg(long)]
    block: Option<usize>,
    /// Hidden width
    #[arg(long)]
    width: Option<usize>,
    /// Hidden-to-hidden layer count
    #[arg(long)]
    depth: Option<usize>,
    /// Minibatch rows
    #[arg(long)]
    batch: Option<usize>,
    /// Unregularized warm-up steps
    #[arg(long)]
    warmup: Option<usize>,
    /// Lower end of the lambda prior
    #[arg(long)]
    lambda_min: Option<f64>,
    /// Upper end of the lambda prior
    #[arg(long)]
    lambda_max: Option<f64>,
    /// Derive the lambda range from gradient ratios instead of the preset
    #[arg(long)]
    calibrate: bool,
}

impl NetOverrides {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(v) = self.steps {
            cfg.bss.total_steps = v;
        }
        if let Some(v) = self.block {
            cfg.bss.block_size = v;
        }
        if let Some(v) = self.width {
            cfg.bss.net.width = v;
        }
        if let Some(v) = self.depth {
            cfg.bss.net.depth = v;
        }
        if let Some(v) = self.batch {
            cfg.bss.batch_size = v;
        }
        if let Some(v) = self.warmup {
            cfg.bss.warmup_steps = v;
        }
        if let Some(v) = self.lambda_min {
            cfg.bss.prior.lambda_min = v;
        }
        if let Some(v) = self.lambda_max {
            cfg.bss.prior.lambda_max = v;
        }
        if self.calibrate {
            cfg.calibrate_lambda = true;
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated AR(1) correlations to sweep
    #[arg(long, value_delimiter = ',', default_value = "0.0,0.4,0.8")]
    rho: Vec<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    /// Support spacing (signals at 0, spacing, 2*spacing, ...)
    #[arg(long)]
    spacing: Option<usize>,
    #[arg(long)]
    snr: Option<f64>,
    #[arg(long, value_enum, default_value_t = Method::Grip2)]
    method: Method,
    #[command(flatten)]
    net: NetOverrides,
}

#[derive(Args)]
struct InjectArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Covariate CSV with a header row
    #[arg(long)]
    x: PathBuf,
    /// Missing-value sentinel (empty cells always count)
    #[arg(long, default_value = "NA")]
    missing: String,
    #[arg(long, value_enum, default_value_t = Method::Grip2)]
    method: Method,
    #[arg(long, value_enum, default_value_t = KnockoffKind::Copula)]
    knockoffs: KnockoffKind,
    /// Injected support size as a fraction of p
    #[arg(long)]
    support_frac: Option<f64>,
    /// Injected signal-to-noise ratio
    #[arg(long)]
    snr: Option<f64>,
    #[command(flatten)]
    net: NetOverrides,
}

#[derive(Args)]
struct SelectArgs {
    /// Covariate CSV with a header row
    #[arg(long)]
    x: PathBuf,
    /// Response CSV (single column, or name one with --y-column)
    #[arg(long)]
    y: PathBuf,
    #[arg(long)]
    y_column: Option<String>,
    #[arg(long, value_enum, default_value_t = KnockoffKind::Fixedx)]
    knockoffs: KnockoffKind,
    #[arg(long, value_enum, default_value_t = Method::Grip2)]
    method: Method,
    /// Target FDR
    #[arg(long, default_value_t = 0.05)]
    q: f64,
    /// Training preset supplying the network settings
    #[arg(long, value_enum, default_value_t = Profile::Real)]
    profile: Profile,
    /// Log-transform the response before standardizing
    #[arg(long)]
    log_y: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value = "NA")]
    missing: String,
    #[command(flatten)]
    net: NetOverrides,
}

#[derive(Args)]
struct KnockoffsArgs {
    /// Design CSV with a header row (numeric columns)
    #[arg(long)]
    x: PathBuf,
    #[arg(long, value_enum, default_value_t = KnockoffKind::Copula)]
    kind: KnockoffKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value = "NA")]
    missing: String,
    /// Extra covariance shrinkage for estimated-covariance kinds
    #[arg(long, default_value_t = 0.1)]
    extra_shrink: f64,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Covariate CSV; omit to calibrate on a synthetic instance
    #[arg(long)]
    x: Option<PathBuf>,
    /// Response CSV (required with --x)
    #[arg(long)]
    y: Option<PathBuf>,
    #[arg(long)]
    y_column: Option<String>,
    #[arg(long, default_value = "NA")]
    missing: String,
    #[arg(long, value_enum, default_value_t = KnockoffKind::Copula)]
    knockoffs: KnockoffKind,
    /// Synthetic fallback dimensions
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    p: usize,
    #[arg(long, default_value_t = 0.4)]
    rho: f64,
    #[arg(long, default_value_t = 1.0)]
    snr: f64,
    /// Training preset supplying the network settings
    #[arg(long, value_enum, default_value_t = Profile::Synthetic)]
    profile: Profile,
    /// Gradient-ratio band for the lambda range
    #[arg(long, default_value_t = 0.01)]
    r_min: f64,
    #[arg(long, default_value_t = 0.20)]
    r_max: f64,
    /// Settling threshold for block-size calibration
    #[arg(long, default_value_t = 1e-3)]
    delta: f64,
    /// Candidate block sizes, ascending
    #[arg(long, value_delimiter = ',', default_value = "10,25,50,100")]
    candidates: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    net: NetOverrides,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Methods to compare
    #[arg(long, value_delimiter = ',', value_enum, default_values_t = vec![Method::Grip2, Method::Gr, Method::Lapa, Method::Mald])]
    methods: Vec<Method>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    snr: Option<f64>,
    #[command(flatten)]
    net: NetOverrides,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Inject(args) => cmd_inject(args),
        Command::Select(args) => cmd_select(args),
        Command::Knockoffs(args) => cmd_knockoffs(args),
        Command::Calibrate(args) => cmd_calibrate(args),
        Command::Benchmark(args) => cmd_benchmark(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn load_base(common: &CommonArgs, fallback: Profile) -> Result<ExperimentConfig, PipelineError> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => profile_config(fallback),
    };
    if let Some(seed) = common.seed {
        cfg.base_seed = seed;
        cfg.synthetic.beta_seed = seed;
        cfg.synthetic.noise_seed = seed;
        cfg.synthetic.design_seed = seed;
        cfg.injection.seed = seed;
    }
    if let Some(trials) = common.trials {
        cfg.trials = trials;
    }
    if let Some(q) = &common.q {
        cfg.q_grid = q.clone();
    }
    Ok(cfg)
}

fn ensure_out(dir: &Path) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| PipelineError::Io(format!("creating {}: {e}", dir.display())))
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), PipelineError> {
    let mut cfg = load_base(&args.common, Profile::Synthetic)?;
    cfg.profile = Profile::Synthetic;
    cfg.method = args.method;
    if let Some(v) = args.n {
        cfg.synthetic.n = v;
    }
    if let Some(v) = args.p {
        cfg.synthetic.p = v;
    }
    if let Some(v) = args.spacing {
        cfg.synthetic.support_spacing = v;
    }
    if let Some(v) = args.snr {
        cfg.synthetic.snr = v;
    }
    args.net.apply(&mut cfg);
    ensure_out(&args.common.out)?;

    let mut sweep_rows = Vec::new();
    let mut sweep_trials = Vec::new();
    let mut records: Vec<ResultRecord> = Vec::new();
    for &rho in &args.rho {
        let mut run_cfg = cfg.clone();
        run_cfg.synthetic.rho = rho;
        eprintln!(
            "simulate: rho={rho}, method={}, trials={}",
            run_cfg.method.name(),
            run_cfg.trials
        );
        let record = pipeline::run_experiment(&run_cfg, args.common.workers)?;
        for s in &record.aggregates {
            sweep_rows.push((rho.to_string(), s.clone()));
        }
        sweep_trials.push((rho, record.trials.clone()));
        records.push(record);
    }

    if args.rho.len() == 1 {
        report::write_results_csv(&args.common.out.join("results.csv"), &records[0].aggregates)?;
        report::write_trials_csv(&args.common.out.join("trials.csv"), &records[0].trials)?;
    } else {
        std::fs::write(
            args.common.out.join("results.csv"),
            report::sweep_csv_string("rho", &sweep_rows),
        )
        .map_err(|e| PipelineError::Io(e.to_string()))?;
        let mut trials_text = String::new();
        for (rho, trials) in &sweep_trials {
            trials_text.push_str(&format!("# rho={rho}\n"));
            trials_text.push_str(&report::trials_csv_string(trials));
        }
        std::fs::write(args.common.out.join("trials.csv"), trials_text)
            .map_err(|e| PipelineError::Io(e.to_string()))?;
    }
    report::write_record_json(&args.common.out.join("record.json"), &records)?;
    for row in report::results_csv_string(
        &records
            .iter()
            .flat_map(|r| r.aggregates.clone())
            .collect::<Vec<_>>(),
    )
    .lines()
    {
        println!("{row}");
    }
    Ok(())
}

fn cmd_inject(args: InjectArgs) -> Result<(), PipelineError> {
    let mut cfg = load_base(&args.common, Profile::Semireal)?;
    cfg.profile = Profile::Semireal;
    cfg.method = args.method;
    cfg.knockoff_kind = args.knockoffs;
    cfg.data.x_csv = Some(args.x.clone());
    cfg.data.missing_sentinel = args.missing.clone();
    if let Some(v) = args.support_frac {
        cfg.injection.support_frac = v;
    }
    if let Some(v) = args.snr {
        cfg.injection.snr = v;
    }
    args.net.apply(&mut cfg);
    ensure_out(&args.common.out)?;
    let record = pipeline::run_experiment(&cfg, args.common.workers)?;
    report::write_results_csv(&args.common.out.join("results.csv"), &record.aggregates)?;
    report::write_trials_csv(&args.common.out.join("trials.csv"), &record.trials)?;
    report::write_record_json(&args.common.out.join("record.json"), &[record.clone()])?;
    print!("{}", report::results_csv_string(&record.aggregates));
    Ok(())
}

fn cmd_select(args: SelectArgs) -> Result<(), PipelineError> {
    let mut cfg = profile_config(args.profile);
    cfg.profile = Profile::Real;
    cfg.method = args.method;
    cfg.knockoff_kind = args.knockoffs;
    cfg.q_grid = vec![args.q];
    cfg.trials = 1;
    cfg.log_response = args.log_y;
    cfg.data.x_csv = Some(args.x.clone());
    cfg.data.y_csv = Some(args.y.clone());
    cfg.data.y_column = args.y_column.clone();
    cfg.data.missing_sentinel = args.missing.clone();
    if let Some(seed) = args.seed {
        cfg.base_seed = seed;
    }
    args.net.apply(&mut cfg);
    ensure_out(&args.out)?;
    let (selection, names) = pipeline::select_once(&cfg, 0)?;
    let json = selection.to_json_string();
    std::fs::write(args.out.join("selection.json"), &json)
        .map_err(|e| PipelineError::Io(e.to_string()))?;
    println!(
        "selected {} of {} features at q={} (threshold {})",
        selection.selected.len(),
        selection.stats.w.len(),
        args.q,
        if selection.threshold.is_finite() {
            selection.threshold.to_string()
        } else {
            "inf".to_string()
        }
    );
    for &j in &selection.selected {
        match &names {
            Some(ns) => println!("  {} ({})", j + 1, ns[j]),
            None => println!("  {}", j + 1),
        }
    }
    Ok(())
}

/// Numeric matrix from a CSV table: missing values imputed with the column
/// median, categorical columns rejected.
fn numeric_matrix(
    table: &ingest::TabularDataset,
) -> Result<(Array2<f64>, Vec<String>), PipelineError> {
    let n = table.n_rows;
    let mut x = Array2::<f64>::zeros((n, table.columns.len()));
    let mut names = Vec::with_capacity(table.columns.len());
    for (j, col) in table.columns.iter().enumerate() {
        let vals = match &col.values {
            ingest::ColumnValues::Numeric(v) => v,
            ingest::ColumnValues::Categorical(_) => {
                return Err(PipelineError::Config(format!(
                    "column {} is categorical; this command needs numeric input",
                    col.name
                )))
            }
        };
        let mut present: Vec<f64> = vals.iter().filter_map(|v| *v).collect();
        present.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let fill = if present.is_empty() {
            0.0
        } else {
            present[present.len() / 2]
        };
        for i in 0..n {
            x[[i, j]] = vals[i].unwrap_or(fill);
        }
        names.push(col.name.clone());
    }
    Ok((x, names))
}

fn cmd_knockoffs(args: KnockoffsArgs) -> Result<(), PipelineError> {
    let table = ingest::read_design_csv(&args.x, &args.missing)?;
    let (x, names) = numeric_matrix(&table)?;
    let mut rng = derive_stream(args.seed, None, "knockoff");
    let x_tilde = match args.kind {
        KnockoffKind::Copula => knockoffs::copula_knockoffs(&x.view(), args.extra_shrink, &mut rng)?,
        KnockoffKind::Fixedx => knockoffs::fixedx_knockoffs(&x.view(), &mut rng)?,
        KnockoffKind::Gaussian => {
            let means = x.mean_axis(ndarray::Axis(0)).unwrap();
            let mut centered = x.clone();
            for mut row in centered.rows_mut() {
                row -= &means;
            }
            let (sigma, _) = linalg::ledoit_wolf(&centered.view(), args.extra_shrink)?;
            let model = knockoffs::build_gaussian_model(sigma)?;
            let mut xt = knockoffs::sample_gaussian_knockoffs(&centered.view(), &model, &mut rng)?;
            for mut row in xt.rows_mut() {
                row += &means;
            }
            xt
        }
    };
    ensure_out(&args.out)?;
    let path = args.out.join("x_tilde.csv");
    let mut text = names.join(",");
    text.push('\n');
    for row in x_tilde.rows() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    std::fs::write(&path, text).map_err(|e| PipelineError::Io(e.to_string()))?;
    println!(
        "wrote {} knockoff rows for {} features to {}",
        x_tilde.nrows(),
        x_tilde.ncols(),
        path.display()
    );
    Ok(())
}

fn cmd_calibrate(args: CalibrateArgs) -> Result<(), PipelineError> {
    let mut cfg = profile_config(args.profile);
    args.net.apply(&mut cfg);
    let data = match (&args.x, &args.y) {
        (Some(x_path), Some(y_path)) => {
            let table = ingest::read_design_csv(x_path, &args.missing)?;
            let (x, _) = numeric_matrix(&table)?;
            let y_raw = ingest::read_response_csv(y_path, args.y_column.as_deref())?;
            let y: Vec<f64> = y_raw.iter().map(|v| v.unwrap_or(0.0)).collect();
            let mut rng = derive_stream(args.seed, None, "knockoff");
            let x_tilde = match args.knockoffs {
                KnockoffKind::Copula => knockoffs::copula_knockoffs(&x.view(), 0.1, &mut rng)?,
                KnockoffKind::Fixedx => knockoffs::fixedx_knockoffs(&x.view(), &mut rng)?,
                KnockoffKind::Gaussian => {
                    let (sigma, _) = linalg::ledoit_wolf(&x.view(), 0.1)?;
                    knockoffs::sample_gaussian_knockoffs(
                        &x.view(),
                        &knockoffs::build_gaussian_model(sigma)?,
                        &mut rng,
                    )?
                }
            };
            knockoffs::augment(x, x_tilde, Array1::from_vec(y))?
        }
        (None, None) => {
            let mut design_rng = derive_stream(args.seed, None, "design");
            let (x, sigma) = datagen::ar1_design(args.n, args.p, args.rho, &mut design_rng);
            let support = datagen::support_grid(args.p, 5);
            let (y, _, _) = datagen::single_index_response(
                &x.view(),
                &support,
                &mut derive_stream(args.seed, None, "beta"),
                &mut derive_stream(args.seed, None, "noise"),
                args.snr,
            )?;
            let model = knockoffs::build_gaussian_model(sigma)?;
            let x_tilde = knockoffs::sample_gaussian_knockoffs(
                &x.view(),
                &model,
                &mut derive_stream(args.seed, None, "knockoff"),
            )?;
            knockoffs::augment(x, x_tilde, y)?
        }
        _ => {
            return Err(PipelineError::Config(
                "calibrate needs both --x and --y, or neither (synthetic)".into(),
            ))
        }
    };

    let mut bss = cfg.bss.clone();
    bss.net.input_dim = 2 * data.p();
    bss.batch_size = bss.batch_size.min(data.n());
    let mut rng = derive_stream(args.seed, None, "calibrate");
    let (lmin, lmax) = grip::calibrate_lambda_range(
        &data,
        &bss.net,
        args.r_min,
        args.r_max,
        bss.warmup_steps,
        &mut rng,
    )?;
    bss.prior.lambda_min = lmin;
    bss.prior.lambda_max = lmax;
    let block = grip::calibrate_block_size(&data, &bss, args.delta, &args.candidates, &mut rng)?;
    println!("lambda_min = {lmin:e}");
    println!("lambda_max = {lmax:e}");
    println!("block_size = {block}");
    if let Some(dir) = &args.out {
        ensure_out(dir)?;
        let json = serde_json::json!({
            "lambda_min": lmin,
            "lambda_max": lmax,
            "block_size": block,
            "r_min": args.r_min,
            "r_max": args.r_max,
            "delta": args.delta,
        });
        std::fs::write(
            dir.join("calibration.json"),
            serde_json::to_string_pretty(&json).expect("json"),
        )
        .map_err(|e| PipelineError::Io(e.to_string()))?;
    }
    Ok(())
}

fn cmd_benchmark(args: BenchmarkArgs) -> Result<(), PipelineError> {
    let mut cfg = load_base(&args.common, Profile::Synthetic)?;
    if let Some(v) = args.n {
        cfg.synthetic.n = v;
    }
    if let Some(v) = args.p {
        cfg.synthetic.p = v;
    }
    if let Some(v) = args.rho {
        cfg.synthetic.rho = v;
    }
    if let Some(v) = args.snr {
        cfg.synthetic.snr = v;
    }
    args.net.apply(&mut cfg);
    ensure_out(&args.common.out)?;

    let mut all_aggregates = Vec::new();
    let mut all_trials = Vec::new();
    let mut records = Vec::new();
    for &method in &args.methods {
        let mut run_cfg = cfg.clone();
        run_cfg.method = method;
        eprintln!(
            "benchmark: method={}, trials={}",
            method.name(),
            run_cfg.trials
        );
        let record = pipeline::run_experiment(&run_cfg, args.common.workers)?;
        all_aggregates.extend(record.aggregates.clone());
        all_trials.extend(record.trials.clone());
        records.push(record);
    }
    report::write_results_csv(&args.common.out.join("results.csv"), &all_aggregates)?;
    report::write_trials_csv(&args.common.out.join("trials.csv"), &all_trials)?;
    report::write_record_json(&args.common.out.join("record.json"), &records)?;
    print!("{}", report::results_csv_string(&all_aggregates));
    Ok(())
}

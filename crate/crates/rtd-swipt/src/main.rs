//! Command-line front end: model fitting and evaluation, feasibility and
//! rate queries, rate-power region / baseline / Monte Carlo sweeps, and pdf
//! export. All outputs are plain key=value lines or CSV files; every
//! subcommand is deterministic given its flags and seed.
//!
//! Exit codes: 0 success (including a valid infeasible verdict), 1 numeric
//! failure, 2 input error.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rtd_swipt::channel::{effective_amplitude_cap, LinkBudget, SPEED_OF_LIGHT};
use rtd_swipt::distributions::truncated_gaussian_pdf;
use rtd_swipt::eh_fitting::{detect_breakpoints, fit_model, read_transfer_csv, FitError, FitOptions};
use rtd_swipt::eh_model::{EhError, EhModel, RhoUnit};
use rtd_swipt::information::InfoError;
use rtd_swipt::rate_power::{
    check_feasibility, monte_carlo_region, solve_rate, sweep_baseline, sweep_region,
    write_baseline_csv, write_mc_csv, write_region_csv, McMode, ProblemInstance, SolveError,
};
use rtd_swipt::units::{parse_gain_linear, parse_power_watts};
use rtd_swipt::DEFAULT_GRID_M;

#[derive(Parser)]
#[command(
    name = "rtd-swipt",
    version,
    about = "Rate-power tradeoff analysis for RTD-based THz SWIPT receivers",
    long_about = "Computes achievable information rates under peak-amplitude and harvested-power \
                  constraints for a receiver with a piecewise non-linear energy-harvesting \
                  transfer function. Powers accept W/mW/dBm suffixes, gains accept linear or dB."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit an EH model to a rho,p_h transfer CSV
    Ehfit(EhfitArgs),
    /// Evaluate the EH transfer function at one received power
    Eheval(EhevalArgs),
    /// Check whether a required harvested power is achievable
    Feasible(InstanceArgs),
    /// Solve the rate maximization for one instance
    Rate(InstanceArgs),
    /// Sweep the rate-power region boundary into a CSV
    Region(RegionArgs),
    /// Sweep the truncated-Gaussian baseline into a CSV
    Baseline(BaselineArgs),
    /// Average region sweeps over Rician fading realizations
    Montecarlo(McArgs),
    /// Export an optimal or baseline pdf as x,density CSV
    ExportPdf(ExportArgs),
}

/// Channel description: either direct (--abar + --hmag) or through the link
/// budget (--amplitude + --gtx/--grx/--fc/--dist). The effective amplitude
/// is always capped so the peak received power stays below breakdown.
#[derive(Args, Clone)]
struct ChannelOpts {
    /// Peak amplitude bound in volts, used with --hmag (bypasses link budget)
    #[arg(long, conflicts_with = "amplitude")]
    abar: Option<f64>,
    /// Channel amplitude gain |h| (linear), used with --abar
    #[arg(long)]
    hmag: Option<f64>,
    /// Transmit peak amplitude A in volts, used with the link budget flags
    #[arg(long)]
    amplitude: Option<f64>,
    /// TX antenna gain, linear or with dB suffix (e.g. 100 or 20dB)
    #[arg(long)]
    gtx: Option<String>,
    /// RX antenna gain, linear or with dB suffix
    #[arg(long)]
    grx: Option<String>,
    /// Carrier frequency in Hz
    #[arg(long)]
    fc: Option<f64>,
    /// TX-RX distance in meters
    #[arg(long)]
    dist: Option<f64>,
    /// Propagation speed in m/s
    #[arg(long, default_value_t = SPEED_OF_LIGHT)]
    light_speed: f64,
    /// Fixed small-scale fading magnitude multiplier on the link budget gain
    #[arg(long, default_value_t = 1.0)]
    hhat: f64,
}

impl ChannelOpts {
    fn resolve(&self, rho_max_w: f64) -> Result<(f64, f64), CliError> {
        let (a, h_mag) = if let Some(abar) = self.abar {
            let hmag = self.hmag.ok_or_else(|| input("--abar requires --hmag"))?;
            (abar, hmag)
        } else {
            let a = self.amplitude.ok_or_else(|| input("provide --abar or --amplitude"))?;
            let gtx = parse_gain_linear(
                self.gtx.as_deref().ok_or_else(|| input("--amplitude requires --gtx"))?,
            )
            .map_err(|e| input(&e.to_string()))?;
            let grx = parse_gain_linear(
                self.grx.as_deref().ok_or_else(|| input("--amplitude requires --grx"))?,
            )
            .map_err(|e| input(&e.to_string()))?;
            let fc = self.fc.ok_or_else(|| input("--amplitude requires --fc"))?;
            let dist = self.dist.ok_or_else(|| input("--amplitude requires --dist"))?;
            let lb = LinkBudget {
                g_tx: gtx,
                g_rx: grx,
                f_c: fc,
                d: dist,
                c_l: self.light_speed,
                rician_k: 1.0,
            };
            lb.validate().map_err(|e| input(&e.to_string()))?;
            (a, lb.large_scale_gain() * self.hhat)
        };
        if !(a > 0.0) || !(h_mag > 0.0) {
            return Err(input("amplitude and channel gain must be positive"));
        }
        Ok((effective_amplitude_cap(a, h_mag, rho_max_w), h_mag))
    }
}

#[derive(Args)]
struct EhfitArgs {
    /// Input transfer CSV with header rho,p_h (comments start with #)
    #[arg(long)]
    input: PathBuf,
    /// "auto" or a comma-separated list of breakpoints in model rho units
    #[arg(long, default_value = "auto")]
    breakpoints: String,
    /// Breakdown bound in model rho units
    #[arg(long)]
    rho_max: f64,
    /// Unit of the rho column: mW or W
    #[arg(long, default_value = "mW")]
    rho_unit: String,
    /// Smoothing window for breakpoint detection (odd, >= 3)
    #[arg(long, default_value_t = 5)]
    window: usize,
    /// Output model JSON path
    #[arg(long)]
    output: PathBuf,
    /// Fit report CSV path (default: <output>.report.csv)
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct EhevalArgs {
    /// Model JSON path
    #[arg(long)]
    model: PathBuf,
    /// Received power (W/mW/dBm suffix; bare numbers are watts)
    #[arg(long, allow_hyphen_values = true)]
    rho: String,
}

#[derive(Args)]
struct InstanceArgs {
    /// Model JSON path
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    channel: ChannelOpts,
    /// Output noise variance (W/mW/dBm suffix)
    #[arg(long, allow_hyphen_values = true)]
    sigma2: String,
    /// Required average harvested power (W/mW/dBm suffix)
    #[arg(long, allow_hyphen_values = true)]
    preq: String,
    /// Grid size for densities (odd)
    #[arg(long, default_value_t = DEFAULT_GRID_M)]
    grid_size: usize,
}

#[derive(Args)]
struct RegionArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    channel: ChannelOpts,
    #[arg(long, allow_hyphen_values = true)]
    sigma2: String,
    /// Number of sweep points
    #[arg(long, default_value_t = 50)]
    points: usize,
    #[arg(long, default_value_t = DEFAULT_GRID_M)]
    grid_size: usize,
    /// Output CSV path
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    channel: ChannelOpts,
    #[arg(long, allow_hyphen_values = true)]
    sigma2: String,
    /// Comma-separated transmit standard deviations in volts; default is a
    /// 20-point geometric sweep over [0.01, 3] x abar
    #[arg(long)]
    sigma_s: Option<String>,
    #[arg(long, default_value_t = 20)]
    sigma_s_count: usize,
    #[arg(long, default_value_t = DEFAULT_GRID_M)]
    grid_size: usize,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct McArgs {
    #[arg(long)]
    model: PathBuf,
    /// Transmit peak amplitude A in volts
    #[arg(long)]
    amplitude: f64,
    #[arg(long)]
    gtx: String,
    #[arg(long)]
    grx: String,
    #[arg(long)]
    fc: f64,
    #[arg(long)]
    dist: f64,
    #[arg(long, default_value_t = SPEED_OF_LIGHT)]
    light_speed: f64,
    /// Rician factor K
    #[arg(long, default_value_t = 1.0)]
    rician_k: f64,
    #[arg(long, allow_hyphen_values = true)]
    sigma2: String,
    #[arg(long, default_value_t = 1000)]
    realizations: usize,
    #[arg(long, default_value_t = 25)]
    points: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// "relative" (fading, per-realization power fractions) or "fixed-abar"
    #[arg(long, default_value = "relative")]
    mode: String,
    /// Peak amplitude for fixed-abar mode, volts
    #[arg(long)]
    abar: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_GRID_M)]
    grid_size: usize,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    channel: ChannelOpts,
    #[arg(long, allow_hyphen_values = true)]
    sigma2: String,
    #[arg(long)]
    preq: String,
    /// Which pdf to export: fx (output), fs (transmit), or tg
    /// (truncated-Gaussian baseline; needs --sigma-s)
    #[arg(long, default_value = "fx")]
    which: String,
    /// Baseline standard deviation in volts (for --which tg)
    #[arg(long)]
    sigma_s: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_GRID_M)]
    grid_size: usize,
    #[arg(long)]
    output: PathBuf,
}

// ---------------------------------------------------------------------------
// error-to-exit-code mapping
// ---------------------------------------------------------------------------

struct CliError {
    message: String,
    code: u8,
}

fn input(msg: &str) -> CliError {
    CliError { message: msg.to_string(), code: 2 }
}

fn numeric(msg: &str) -> CliError {
    CliError { message: msg.to_string(), code: 1 }
}

impl From<EhError> for CliError {
    fn from(e: EhError) -> Self {
        match e {
            EhError::Schema(_) | EhError::Io(_) | EhError::Invariant(_) => input(&e.to_string()),
            _ => numeric(&e.to_string()),
        }
    }
}

impl From<FitError> for CliError {
    fn from(e: FitError) -> Self {
        match e {
            FitError::NonConvergence { .. } => numeric(&e.to_string()),
            FitError::Model(ref m) => match m {
                EhError::Invariant(_) => numeric(&e.to_string()),
                _ => input(&e.to_string()),
            },
            _ => input(&e.to_string()),
        }
    }
}

impl From<SolveError> for CliError {
    fn from(e: SolveError) -> Self {
        match e {
            SolveError::Invalid(_) => input(&e.to_string()),
            _ => numeric(&e.to_string()),
        }
    }
}

impl From<InfoError> for CliError {
    fn from(e: InfoError) -> Self {
        numeric(&e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        input(&e.to_string())
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Ehfit(a) => cmd_ehfit(a),
        Command::Eheval(a) => cmd_eheval(a),
        Command::Feasible(a) => cmd_feasible(a),
        Command::Rate(a) => cmd_rate(a),
        Command::Region(a) => cmd_region(a),
        Command::Baseline(a) => cmd_baseline(a),
        Command::Montecarlo(a) => cmd_montecarlo(a),
        Command::ExportPdf(a) => cmd_export_pdf(a),
    }
}

fn load_model(path: &Path) -> Result<EhModel, CliError> {
    EhModel::load(path).map_err(CliError::from)
}

fn power(text: &str) -> Result<f64, CliError> {
    parse_power_watts(text).map_err(|e| input(&e.to_string()))
}

fn cmd_ehfit(a: EhfitArgs) -> Result<(), CliError> {
    let samples = read_transfer_csv(&a.input)?;
    let rho_unit = RhoUnit::parse(&a.rho_unit)?;
    let breakpoints: Vec<f64> = if a.breakpoints.trim() == "auto" {
        detect_breakpoints(&samples, a.window)?
    } else {
        a.breakpoints
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| input(&format!("bad --breakpoints list: {e}")))?
    };
    let opts = FitOptions { restarts: a.restarts, seed: a.seed, ..Default::default() };
    let report = fit_model(&samples, &breakpoints, a.rho_max, rho_unit, &opts)?;
    report.model.save(&a.output)?;
    let report_path = a
        .report
        .unwrap_or_else(|| PathBuf::from(format!("{}.report.csv", a.output.display())));
    let mut w = BufWriter::new(File::create(&report_path)?);
    writeln!(w, "segment,rmse,iterations")?;
    for (i, r) in report.per_segment_rmse.iter().enumerate() {
        writeln!(w, "{},{},{}", i + 1, r, report.iterations)?;
    }
    println!("segments={}", report.per_segment_rmse.len());
    println!("breakpoints={breakpoints:?}");
    println!("rmse_W={}", report.rmse);
    println!("model={}", a.output.display());
    println!("report={}", report_path.display());
    Ok(())
}

fn cmd_eheval(a: EhevalArgs) -> Result<(), CliError> {
    let model = load_model(&a.model)?;
    let rho_w = power(&a.rho)?;
    let p_h = model.eval_watts(rho_w)?;
    println!("rho_W={rho_w}");
    println!("p_h_W={p_h}");
    Ok(())
}

fn cmd_feasible(a: InstanceArgs) -> Result<(), CliError> {
    let model = load_model(&a.model)?;
    let sigma2 = power(&a.sigma2)?;
    let p_req = power(&a.preq)?;
    let (a_bar, h_mag) = a.channel.resolve(model.rho_max_watts())?;
    let inst = ProblemInstance::new(a_bar, h_mag, sigma2, p_req, &model)?;
    let feas = check_feasibility(&inst);
    println!("abar_V={a_bar}");
    println!("h_mag={h_mag}");
    println!("p_req_W={p_req}");
    println!("p_max_W={}", feas.p_max_bar());
    println!("feasible={}", feas.is_feasible());
    Ok(())
}

fn cmd_rate(a: InstanceArgs) -> Result<(), CliError> {
    let model = load_model(&a.model)?;
    let sigma2 = power(&a.sigma2)?;
    let p_req = power(&a.preq)?;
    let (a_bar, h_mag) = a.channel.resolve(model.rho_max_watts())?;
    let inst = ProblemInstance::new(a_bar, h_mag, sigma2, p_req, &model)?;
    let sol = solve_rate(&inst, a.grid_size)?;
    println!("regime={}", sol.regime);
    println!("j_star_nats={}", sol.j_star);
    println!("mu0={}", sol.mu0.map_or("none".to_string(), |v| v.to_string()));
    println!("mu2={}", sol.mu2.map_or("none".to_string(), |v| v.to_string()));
    println!("p_req_W={p_req}");
    println!("p_harv_W={}", sol.p_harv_realized);
    println!("p_max_W={}", sol.p_max_bar);
    println!("abar_V={a_bar}");
    println!("h_mag={h_mag}");
    Ok(())
}

fn cmd_region(a: RegionArgs) -> Result<(), CliError> {
    let model = load_model(&a.model)?;
    let sigma2 = power(&a.sigma2)?;
    let (a_bar, h_mag) = a.channel.resolve(model.rho_max_watts())?;
    let points = sweep_region(&model, a_bar, h_mag, sigma2, a.points, a.grid_size)?;
    let mut w = BufWriter::new(File::create(&a.output)?);
    write_region_csv(&points, &mut w)?;
    w.flush()?;
    println!("rows={}", points.len());
    println!("output={}", a.output.display());
    Ok(())
}

fn cmd_baseline(a: BaselineArgs) -> Result<(), CliError> {
    let model = load_model(&a.model)?;
    let sigma2 = power(&a.sigma2)?;
    let (a_bar, h_mag) = a.channel.resolve(model.rho_max_watts())?;
    let sigmas: Vec<f64> = match &a.sigma_s {
        Some(list) => list
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| input(&format!("bad --sigma-s list: {e}")))?,
        None => {
            let n = a.sigma_s_count.max(2);
            let (lo, hi) = (0.01 * a_bar, 3.0 * a_bar);
            (0..n)
                .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
                .collect()
        }
    };
    let points = sweep_baseline(&model, a_bar, h_mag, sigma2, &sigmas, a.grid_size)?;
    let mut w = BufWriter::new(File::create(&a.output)?);
    write_baseline_csv(&points, &mut w)?;
    w.flush()?;
    println!("rows={}", points.len());
    println!("output={}", a.output.display());
    Ok(())
}

fn cmd_montecarlo(a: McArgs) -> Result<(), CliError> {
    let model = load_model(&a.model)?;
    let sigma2 = power(&a.sigma2)?;
    let lb = LinkBudget {
        g_tx: parse_gain_linear(&a.gtx).map_err(|e| input(&e.to_string()))?,
        g_rx: parse_gain_linear(&a.grx).map_err(|e| input(&e.to_string()))?,
        f_c: a.fc,
        d: a.dist,
        c_l: a.light_speed,
        rician_k: a.rician_k,
    };
    lb.validate().map_err(|e| input(&e.to_string()))?;
    let mode = match a.mode.as_str() {
        "relative" => McMode::Relative,
        "fixed-abar" => {
            let abar = a.abar.ok_or_else(|| input("--mode fixed-abar requires --abar"))?;
            McMode::FixedAbar(abar)
        }
        other => return Err(input(&format!("unknown --mode \"{other}\""))),
    };
    let table = monte_carlo_region(
        &lb,
        a.amplitude,
        sigma2,
        &model,
        a.realizations,
        a.points,
        a.seed,
        mode,
        a.grid_size,
    )?;
    let mut w = BufWriter::new(File::create(&a.output)?);
    write_mc_csv(&table, &mut w)?;
    w.flush()?;
    println!("rows={}", table.points.len());
    println!("realizations={}", table.n_realizations);
    println!("seed={}", table.seed);
    println!("output={}", a.output.display());
    Ok(())
}

fn cmd_export_pdf(a: ExportArgs) -> Result<(), CliError> {
    let model = load_model(&a.model)?;
    let sigma2 = power(&a.sigma2)?;
    let p_req = power(&a.preq)?;
    let (a_bar, h_mag) = a.channel.resolve(model.rho_max_watts())?;
    let pdf = match a.which.as_str() {
        "tg" => {
            let sigma_s = a.sigma_s.ok_or_else(|| input("--which tg requires --sigma-s"))?;
            truncated_gaussian_pdf(a_bar, sigma_s, a.grid_size).map_err(SolveError::Pdf)?
        }
        which @ ("fx" | "fs") => {
            let inst = ProblemInstance::new(a_bar, h_mag, sigma2, p_req, &model)?;
            let sol = solve_rate(&inst, a.grid_size)?;
            let pdf = if which == "fx" { sol.fx } else { sol.fs };
            pdf.ok_or_else(|| numeric("instance is infeasible: no pdf to export"))?
        }
        other => return Err(input(&format!("unknown --which \"{other}\" (fx, fs, tg)"))),
    };
    let mut w = BufWriter::new(File::create(&a.output)?);
    pdf.write_csv(&mut w)?;
    w.flush()?;
    println!("rows={}", pdf.node_count());
    println!("output={}", a.output.display());
    Ok(())
}

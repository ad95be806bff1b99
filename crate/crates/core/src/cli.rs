//! Command-line front end.
//!
//! Every subcommand reads and validates all of its inputs before it writes
//! anything, and every output file is written atomically. Exit codes: 0 on
//! success, 1 on a runtime or data error, 2 on a usage error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::benchmark::{records_csv, run_benchmark, BenchmarkConfig, BenchmarkReport};
use crate::emissions::{estimate_emissions, OpModeRateTable, Pollutant, VspParams};
use crate::error::{Error, Result};
use crate::io_util::write_atomic;
use crate::qp::QpSettings;
use crate::smoother::{Smoother, DEFAULT_LAMBDA};
use crate::speed_field::{load_field_with_units, synthesize_field, SpeedField, WaveScenario};
use crate::trajectory::{resample_1hz, seed_schedule, Integrator, Trajectory, DEFAULT_STEP};
use crate::units::{miles_to_meters, mph_to_mps, Unit};

/// Marker present in a benchmark output directory while a run is in progress.
pub const INCOMPLETE_MARKER: &str = "run.incomplete";

#[derive(Debug, Parser)]
#[command(
    name = "wavesmooth",
    version,
    about = "Stop-and-go wave smoothing and emission benchmark"
)]
pub struct Cli {
    /// TOML file with [smoother], [benchmark] and [vsp] sections.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic speed field.
    Synth(SynthArgs),
    /// Seed and integrate vehicle trajectories through a speed field.
    Trajectories(TrajectoriesArgs),
    /// Compute the smoothed benchmark for one trajectory.
    Smooth(SmoothArgs),
    /// Estimate emissions for one trajectory.
    Emit(EmitArgs),
    /// Run the gap-budget benchmark over a manifest of days.
    Benchmark(BenchmarkArgs),
    /// Turn a benchmark report into plot-ready CSV tables.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of waves, one per equal time slot.
    #[arg(long)]
    pub waves: usize,
    /// Free-flow speed, m/s.
    #[arg(long)]
    pub base: f64,
    /// Seconds.
    #[arg(long)]
    pub duration: f64,
    /// Meters.
    #[arg(long)]
    pub length: f64,
    /// Wave depth, m/s.
    #[arg(long, default_value_t = 0.0)]
    pub amplitude: f64,
    /// Wave time scale, seconds.
    #[arg(long, default_value_t = 60.0)]
    pub width_t: f64,
    /// Wave space scale, meters.
    #[arg(long, default_value_t = 400.0)]
    pub width_x: f64,
    /// Wave speed, m/s; negative travels upstream.
    #[arg(long, default_value_t = -4.5, allow_hyphen_values = true)]
    pub propagation: f64,
    /// Free-flow speed noise std, m/s; fades inside waves.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Seeds wave placement and noise.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Lane label stored in the header.
    #[arg(long, default_value_t = 1)]
    pub lane: i64,
    /// Date label stored in the header.
    #[arg(long, default_value = "synthetic")]
    pub date: String,
    /// Grid file to write.
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrajectoriesArgs {
    pub field: PathBuf,
    /// Seconds between seeded vehicles.
    #[arg(long, default_value_t = 4.0)]
    pub interval: f64,
    /// Directory for `traj_NNNNN.txt` files.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Speed unit of the field file.
    #[arg(long, default_value = "m/s")]
    pub units: Unit,
    /// Internal integration step, seconds.
    #[arg(long, default_value_t = DEFAULT_STEP)]
    pub step: f64,
}

#[derive(Debug, Args, Default)]
pub struct SolverArgs {
    /// Smoothness weight on squared acceleration [default: 10].
    #[arg(long)]
    pub lambda: Option<f64>,
    /// ADMM iteration cap.
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Absolute residual tolerance in scaled positions.
    #[arg(long)]
    pub eps_abs: Option<f64>,
    /// Initial ADMM step size.
    #[arg(long)]
    pub rho: Option<f64>,
    /// Over-relaxation factor in (0, 2).
    #[arg(long)]
    pub alpha: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SmoothArgs {
    pub trajectory: PathBuf,
    /// Maximum gap, miles.
    #[arg(long, conflicts_with = "gap_m", required_unless_present = "gap_m")]
    pub gap_mi: Option<f64>,
    /// Maximum gap, meters.
    #[arg(long)]
    pub gap_m: Option<f64>,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Benchmark trajectory file to write.
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct EmitArgs {
    pub trajectory: PathBuf,
    /// Rate table CSV; the bundled synthetic table when omitted.
    #[arg(long)]
    pub rates: Option<PathBuf>,
    /// JSON output file; standard output when omitted.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// TOML manifest listing `[[day]]` entries.
    pub manifest: PathBuf,
    /// Receives report.json and trajectories.csv.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Rate table CSV; the bundled synthetic table when omitted.
    #[arg(long)]
    pub rates: Option<PathBuf>,
    /// Comma-separated gap budgets, miles.
    #[arg(long, value_delimiter = ',')]
    pub gap_mi: Option<Vec<f64>>,
    /// Trajectories at or above this mean speed are skipped [default: 50].
    #[arg(long)]
    pub speed_filter_mph: Option<f64>,
    /// Seconds between seeded vehicles [default: 4].
    #[arg(long)]
    pub seed_interval: Option<f64>,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// `report.json` written by `benchmark`.
    pub report: PathBuf,
    /// Receives tradeoff.csv, cells.csv and bands.csv.
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// Contents of the `--config` file. Keys carry their unit.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub smoother: SmootherSection,
    pub benchmark: BenchmarkSection,
    pub vsp: VspParams,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmootherSection {
    pub lambda: Option<f64>,
    pub rho: Option<f64>,
    pub sigma: Option<f64>,
    pub alpha: Option<f64>,
    pub eps_abs: Option<f64>,
    pub eps_rel: Option<f64>,
    pub max_iter: Option<usize>,
    pub polish: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkSection {
    pub gap_budgets_mi: Option<Vec<f64>>,
    pub speed_filter_mph: Option<f64>,
    pub seed_interval_s: Option<f64>,
    pub lanes: Option<Vec<i64>>,
    pub quantiles: Option<Vec<f64>>,
    pub cell_mean_speed_width_mph: Option<f64>,
    pub cell_speed_std_width_mph: Option<f64>,
    pub focus_gap_mi: Option<f64>,
    pub integration_step_s: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    fn lambda(&self, flag: Option<f64>) -> f64 {
        flag.or(self.smoother.lambda).unwrap_or(DEFAULT_LAMBDA)
    }

    fn solver(&self, flags: &SolverArgs) -> QpSettings {
        let s = &self.smoother;
        let d = QpSettings::default();
        QpSettings {
            rho: flags.rho.or(s.rho).unwrap_or(d.rho),
            sigma: s.sigma.unwrap_or(d.sigma),
            alpha: flags.alpha.or(s.alpha).unwrap_or(d.alpha),
            eps_abs: flags.eps_abs.or(s.eps_abs).unwrap_or(d.eps_abs),
            eps_rel: s.eps_rel.unwrap_or(d.eps_rel),
            max_iter: flags.max_iter.or(s.max_iter).unwrap_or(d.max_iter),
            polish: s.polish.unwrap_or(d.polish),
            ..d
        }
    }

    fn benchmark(&self, args: &BenchmarkArgs) -> BenchmarkConfig {
        let b = &self.benchmark;
        let d = BenchmarkConfig::default();
        let miles = |v: &Vec<f64>| v.iter().map(|&g| miles_to_meters(g)).collect();
        BenchmarkConfig {
            lambda: self.lambda(args.solver.lambda),
            gap_budgets: args
                .gap_mi
                .as_ref()
                .or(b.gap_budgets_mi.as_ref())
                .map_or(d.gap_budgets, miles),
            speed_filter: args
                .speed_filter_mph
                .or(b.speed_filter_mph)
                .map_or(d.speed_filter, mph_to_mps),
            seed_interval: args
                .seed_interval
                .or(b.seed_interval_s)
                .unwrap_or(d.seed_interval),
            lanes: b.lanes.clone().unwrap_or(d.lanes),
            quantile_bands: b.quantiles.clone().unwrap_or(d.quantile_bands),
            cell_mean_speed_width: b
                .cell_mean_speed_width_mph
                .map_or(d.cell_mean_speed_width, mph_to_mps),
            cell_speed_std_width: b
                .cell_speed_std_width_mph
                .map_or(d.cell_speed_std_width, mph_to_mps),
            focus_gap: b.focus_gap_mi.map_or(d.focus_gap, miles_to_meters),
            integration_step: b.integration_step_s.unwrap_or(d.integration_step),
            solver: self.solver(&args.solver),
        }
    }
}

/// `[[day]]` entries; relative paths resolve against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub day: Vec<ManifestDay>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestDay {
    pub field: PathBuf,
    /// Overrides the lane in the field header.
    pub lane: Option<i64>,
    /// Overrides the date in the field header.
    pub date: Option<String>,
    /// Speed unit of the file, `m/s` by default.
    pub units: Option<String>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Loads every field, failing on the first bad entry.
    pub fn load_fields(&self, base: &Path) -> Result<Vec<SpeedField>> {
        let mut keys = std::collections::BTreeSet::new();
        let mut out = Vec::with_capacity(self.day.len());
        for d in &self.day {
            let units: Unit = d.units.as_deref().unwrap_or("m/s").parse()?;
            let mut field = load_field_with_units(base.join(&d.field), units)?;
            if let Some(lane) = d.lane {
                field.lane = lane;
            }
            if let Some(date) = &d.date {
                field.date_label = date.clone();
            }
            if !keys.insert((field.date_label.clone(), field.lane)) {
                return Err(Error::Config(format!(
                    "manifest lists day {:?} lane {} twice",
                    field.date_label, field.lane
                )));
            }
            out.push(field);
        }
        Ok(out)
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let config = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Trajectories(a) => trajectories(a),
        Command::Smooth(a) => smooth(a, &config),
        Command::Emit(a) => emit(a, &config),
        Command::Benchmark(a) => benchmark(a, &config),
        Command::Report(a) => report(a),
    }
}

fn synth(a: &SynthArgs) -> Result<()> {
    let scenario = WaveScenario {
        base_speed: a.base,
        wave_count: a.waves,
        wave_amplitude: a.amplitude,
        wave_width_t: a.width_t,
        wave_width_x: a.width_x,
        wave_propagation_speed: a.propagation,
        free_flow_noise: a.noise,
        seed: a.seed,
    };
    let field =
        synthesize_field(&scenario, a.duration, a.length)?.with_metadata(a.lane, a.date.clone());
    field.save(&a.output)?;
    let (n_t, n_x) = field.extent();
    println!("wrote {} ({n_t} x {n_x} grid)", a.output.display());
    Ok(())
}

fn trajectories(a: &TrajectoriesArgs) -> Result<()> {
    let field = load_field_with_units(&a.field, a.units)?;
    let integrator = Integrator {
        step: a.step,
        max_duration: None,
    };
    let mut out = Vec::new();
    let mut degenerate = 0;
    for (t, x) in seed_schedule(&field, a.interval)? {
        match integrator
            .integrate(&field, t, x)
            .and_then(|raw| resample_1hz(&raw))
        {
            Ok(traj) => out.push(traj.with_lane(field.lane)),
            Err(Error::DegenerateTrajectory(_)) => degenerate += 1,
            Err(e) => return Err(e),
        }
    }
    fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
    for (i, traj) in out.iter().enumerate() {
        traj.save(a.out_dir.join(format!("traj_{i:05}.txt")))?;
    }
    println!(
        "{} trajectories written to {} ({degenerate} too short)",
        out.len(),
        a.out_dir.display()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct SmoothStats<'a> {
    status: crate::qp::QpStatus,
    iterations: usize,
    objective: f64,
    reference_objective: f64,
    primal_residual: f64,
    dual_residual: f64,
    polished: bool,
    lambda: f64,
    gap_budget_m: f64,
    preprocess_correction_m: f64,
    settings: &'a QpSettings,
}

fn smooth(a: &SmoothArgs, config: &FileConfig) -> Result<()> {
    let reference = Trajectory::load(&a.trajectory)?;
    let gap = match (a.gap_m, a.gap_mi) {
        (Some(m), _) => m,
        (None, Some(mi)) => miles_to_meters(mi),
        (None, None) => return Err(Error::InvalidInput("a gap budget is required".into())),
    };
    let settings = config.solver(&a.solver);
    let smoother = Smoother::new(config.lambda(a.solver.lambda)).with_settings(settings);
    let result = smoother.smooth(&reference, gap)?;
    if result.preprocess_correction > 0.0 {
        eprintln!(
            "note: reference reversed; replaced by its running maximum (largest correction {:.3} m)",
            result.preprocess_correction
        );
    }
    let problem = crate::smoother::build_problem(
        &crate::trajectory::preprocess_reference(&reference).trajectory,
        smoother.lambda,
        gap,
    )?;
    result.trajectory.save(&a.output)?;
    let s = &result.solution;
    let stats = SmoothStats {
        status: s.status,
        iterations: s.iterations,
        objective: s.objective,
        reference_objective: problem.objective_value(&problem.x_ref)?,
        primal_residual: s.primal_residual,
        dual_residual: s.dual_residual,
        polished: s.polished,
        lambda: smoother.lambda,
        gap_budget_m: gap,
        preprocess_correction_m: result.preprocess_correction,
        settings: &settings,
    };
    println!("{}", serde_json::to_string_pretty(&stats)?);
    Ok(())
}

fn load_table(path: Option<&Path>) -> Result<OpModeRateTable> {
    path.map_or_else(|| Ok(OpModeRateTable::synthetic()), OpModeRateTable::load)
}

fn emit(a: &EmitArgs, config: &FileConfig) -> Result<()> {
    config.vsp.validate()?;
    let traj = Trajectory::load(&a.trajectory)?;
    let table = load_table(a.rates.as_deref())?;
    let result = estimate_emissions(&traj, &config.vsp, &table)?;
    let json = serde_json::to_string_pretty(&result)?;
    match &a.output {
        Some(p) => write_atomic(p, format!("{json}\n").as_bytes())?,
        None => println!("{json}"),
    }
    Ok(())
}

fn benchmark(a: &BenchmarkArgs, config: &FileConfig) -> Result<()> {
    let bench = config.benchmark(a);
    bench.validate()?;
    config.vsp.validate()?;
    let table = load_table(a.rates.as_deref())?;
    let manifest = Manifest::load(&a.manifest)?;
    let base = a.manifest.parent().unwrap_or(Path::new("."));
    let fields = manifest.load_fields(base)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;

    fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
    let marker = a.out_dir.join(INCOMPLETE_MARKER);
    write_atomic(
        &marker,
        b"benchmark run in progress; outputs in this directory are not final\n",
    )?;
    let (report, fragments) =
        pool.install(|| run_benchmark(&fields, &bench, &config.vsp, &table))?;
    write_atomic(
        &a.out_dir.join("trajectories.csv"),
        &records_csv(&fragments)?,
    )?;
    write_atomic(
        &a.out_dir.join("report.json"),
        format!("{}\n", serde_json::to_string_pretty(&report)?).as_bytes(),
    )?;
    fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;

    for d in &report.days {
        println!(
            "{} lane {}: {} seeds, {} eligible, {} filtered, {} too short",
            d.day, d.lane, d.seeds, d.eligible, d.filtered, d.degenerate
        );
    }
    if report.infeasible > 0 {
        eprintln!(
            "warning: {} solves reported infeasibility on feasible references; see the status column in trajectories.csv",
            report.infeasible
        );
    }
    Ok(())
}

fn report(a: &ReportArgs) -> Result<()> {
    let text = fs::read_to_string(&a.report).map_err(|e| Error::io(&a.report, e))?;
    let report: BenchmarkReport = serde_json::from_str(&text)?;
    let opt = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());

    let mut tradeoff = csv::Writer::from_writer(Vec::new());
    tradeoff.write_record([
        "lane",
        "pollutant",
        "gap_budget_m",
        "mean_reduction_pct",
        "count",
    ])?;
    for c in &report.tradeoff {
        for p in &c.points {
            tradeoff.write_record([
                c.lane.to_string(),
                c.pollutant.to_string(),
                p.gap_budget.to_string(),
                p.mean_reduction.to_string(),
                p.count.to_string(),
            ])?;
        }
    }

    let mut cells = csv::Writer::from_writer(Vec::new());
    cells.write_record([
        "mean_speed_lo_mps",
        "speed_std_lo_mps",
        "count",
        "mean_co2_reduction_pct",
    ])?;
    for c in &report.cells {
        cells.write_record([
            c.mean_speed_lo.to_string(),
            c.speed_std_lo.to_string(),
            c.count.to_string(),
            c.mean_reduction.to_string(),
        ])?;
    }

    let mut bands = csv::Writer::from_writer(Vec::new());
    let mut header = vec![
        "day".to_string(),
        "lane".into(),
        "gap_budget_m".into(),
        "pollutant".into(),
        "processed".into(),
        "mean".into(),
    ];
    header.extend(report.config.quantile_bands.iter().map(|q| format!("q{q}")));
    bands.write_record(&header)?;
    for d in &report.days {
        for g in &d.gaps {
            for p in Pollutant::ALL {
                let b = g.bands.get(p);
                let mut row = vec![
                    d.day.clone(),
                    d.lane.to_string(),
                    g.gap_budget.to_string(),
                    p.to_string(),
                    g.processed.to_string(),
                    opt(b.as_ref().map(|b| b.mean)),
                ];
                row.extend(
                    (0..report.config.quantile_bands.len())
                        .map(|i| opt(b.as_ref().and_then(|b| b.quantiles.get(i)).map(|q| q.1))),
                );
                bands.write_record(&row)?;
            }
        }
    }

    let finish =
        |w: csv::Writer<Vec<u8>>| w.into_inner().map_err(|e| Error::Internal(e.to_string()));
    let (tradeoff, cells, bands) = (finish(tradeoff)?, finish(cells)?, finish(bands)?);
    fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
    write_atomic(&a.out_dir.join("tradeoff.csv"), &tradeoff)?;
    write_atomic(&a.out_dir.join("cells.csv"), &cells)?;
    write_atomic(&a.out_dir.join("bands.csv"), &bands)?;
    println!(
        "wrote tradeoff.csv, cells.csv, bands.csv to {}",
        a.out_dir.display()
    );
    Ok(())
}

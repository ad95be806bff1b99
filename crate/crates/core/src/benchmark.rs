//! Batch experiments over speed-field days.
//!
//! For every day (one speed field, one lane) vehicles are seeded at the
//! upstream edge, resampled to 1 Hz, filtered to congested trips, smoothed
//! across an ascending sweep of gap budgets and scored for emissions. The
//! report aggregates per-trajectory reductions into day means, quantile
//! bands, per-lane trade-off curves and (mean speed, speed std) cells.
//!
//! Per-trajectory work runs on the current rayon pool. Results are collected
//! in seed order and every reduction is accumulated sequentially, so the
//! output does not depend on the number of threads.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::emissions::{
    emission_delta, estimate_emissions, OpModeRateTable, PerPollutant, Pollutant, VspParams,
};
use crate::error::{Error, Result};
use crate::qp::{QpSettings, QpStatus};
use crate::smoother::{build_problem, Smoother, DEFAULT_LAMBDA};
use crate::speed_field::SpeedField;
use crate::trajectory::{
    kinematics, preprocess_reference, resample_1hz, seed_schedule, Integrator, DEFAULT_STEP,
};
use crate::units::{miles_to_meters, mph_to_mps};

/// Gap sweep in miles.
pub const DEFAULT_GAPS_MILES: [f64; 6] = [0.01, 0.02, 0.05, 0.1, 0.2, 0.5];
pub const DEFAULT_SPEED_FILTER_MPH: f64 = 50.0;
pub const DEFAULT_FOCUS_GAP_MILES: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub lambda: f64,
    /// Meters, strictly increasing.
    pub gap_budgets: Vec<f64>,
    /// Trajectories with mean speed at or above this are not eligible, m/s.
    pub speed_filter: f64,
    /// Seconds between seeded vehicles.
    pub seed_interval: f64,
    /// Lanes to process; empty means all.
    pub lanes: Vec<i64>,
    pub quantile_bands: Vec<f64>,
    /// Cell widths for the (mean speed, speed std) grid, m/s.
    pub cell_mean_speed_width: f64,
    pub cell_speed_std_width: f64,
    /// Gap budget whose CO2 reductions fill the cell grid, meters. The
    /// closest configured budget is used.
    pub focus_gap: f64,
    /// Internal integration step, seconds.
    pub integration_step: f64,
    pub solver: QpSettings,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            gap_budgets: DEFAULT_GAPS_MILES
                .iter()
                .map(|&g| miles_to_meters(g))
                .collect(),
            speed_filter: mph_to_mps(DEFAULT_SPEED_FILTER_MPH),
            seed_interval: 4.0,
            lanes: Vec::new(),
            quantile_bands: vec![0.05, 0.25, 0.75, 0.95],
            cell_mean_speed_width: mph_to_mps(5.0),
            cell_speed_std_width: mph_to_mps(2.0),
            focus_gap: miles_to_meters(DEFAULT_FOCUS_GAP_MILES),
            integration_step: DEFAULT_STEP,
            solver: QpSettings::default(),
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if self.gap_budgets.is_empty() {
            return bad("at least one gap budget is required".into());
        }
        if self
            .gap_budgets
            .iter()
            .any(|g| !(*g >= 0.0 && g.is_finite()))
        {
            return bad("gap budgets must be finite and >= 0".into());
        }
        if self.gap_budgets.windows(2).any(|w| !(w[1] > w[0])) {
            return bad("gap budgets must be strictly increasing".into());
        }
        if !(self.speed_filter > 0.0) {
            return bad(format!(
                "speed filter must be positive, got {}",
                self.speed_filter
            ));
        }
        if !(self.seed_interval > 0.0) {
            return bad(format!(
                "seed interval must be positive, got {}",
                self.seed_interval
            ));
        }
        if self.quantile_bands.iter().any(|q| !(*q > 0.0 && *q < 1.0))
            || self.quantile_bands.windows(2).any(|w| !(w[1] > w[0]))
        {
            return bad("quantile levels must lie in (0, 1) and be sorted".into());
        }
        if !(self.cell_mean_speed_width > 0.0 && self.cell_speed_std_width > 0.0) {
            return bad("cell widths must be positive".into());
        }
        if !(self.integration_step > 0.0) {
            return bad("integration step must be positive".into());
        }
        self.solver.validate()
    }

    /// Index of the configured budget closest to `focus_gap`.
    pub fn focus_index(&self) -> usize {
        let d = |g: f64| (g - self.focus_gap).abs();
        (0..self.gap_budgets.len())
            .min_by(|&a, &b| d(self.gap_budgets[a]).total_cmp(&d(self.gap_budgets[b])))
            .unwrap_or(0)
    }
}

/// Outcome of one gap budget for one eligible trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapOutcome {
    pub gap_budget: f64,
    pub status: QpStatus,
    pub iterations: usize,
    pub objective: f64,
    /// Objective divided by the solver's position scale squared.
    pub scaled_objective: f64,
    /// Grams; present when the solve was optimal.
    pub benchmark: Option<PerPollutant<f64>>,
    /// Percent; per pollutant `None` when the empirical total is zero.
    pub reduction: Option<PerPollutant<Option<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub day: String,
    pub lane: i64,
    pub seed_time: f64,
    pub samples: usize,
    pub mean_speed: f64,
    pub speed_std: f64,
    pub preprocess_correction: f64,
    /// Grams.
    pub empirical: PerPollutant<f64>,
    pub gaps: Vec<GapOutcome>,
}

/// Trajectories from one field, in seed order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayFragment {
    pub day: String,
    pub lane: i64,
    pub seeds: usize,
    /// Too short to smooth.
    pub degenerate: usize,
    /// Mean speed at or above the filter.
    pub filtered: usize,
    pub records: Vec<TrajectoryRecord>,
}

impl DayFragment {
    pub fn eligible(&self) -> usize {
        self.records.len()
    }
}

enum SeedOutcome {
    Degenerate,
    Filtered,
    Eligible(Box<TrajectoryRecord>),
}

pub fn run_day(
    field: &SpeedField,
    config: &BenchmarkConfig,
    vsp: &VspParams,
    table: &OpModeRateTable,
) -> Result<DayFragment> {
    config.validate()?;
    vsp.validate()?;
    let seeds = seed_schedule(field, config.seed_interval)?;
    let integrator = Integrator {
        step: config.integration_step,
        max_duration: None,
    };
    let smoother = Smoother::new(config.lambda).with_settings(config.solver);
    let outcomes: Vec<Result<SeedOutcome>> = seeds
        .par_iter()
        .map(|&(t, x)| {
            let raw = match integrator.integrate(field, t, x) {
                Err(Error::DegenerateTrajectory(_)) => return Ok(SeedOutcome::Degenerate),
                other => other?,
            };
            let traj = match resample_1hz(&raw) {
                Err(Error::DegenerateTrajectory(_)) => return Ok(SeedOutcome::Degenerate),
                other => other?,
            }
            .with_lane(field.lane);
            let kin = kinematics(&traj)?;
            if kin.mean_speed >= config.speed_filter {
                return Ok(SeedOutcome::Filtered);
            }
            let pre = preprocess_reference(&traj);
            let reference = &pre.trajectory;
            let empirical = estimate_emissions(reference, vsp, table)?;
            let solutions = smoother.sweep(reference, &config.gap_budgets)?;
            let mut gaps = Vec::with_capacity(solutions.len());
            for (&gap, sol) in config.gap_budgets.iter().zip(solutions) {
                let scale = build_problem(reference, config.lambda, gap)?.scale();
                let (benchmark, reduction) = if sol.status == QpStatus::Optimal {
                    let bench = smoother.finish(reference, &sol, gap)?;
                    let e = estimate_emissions(&bench, vsp, table)?;
                    (Some(e.totals), Some(emission_delta(&empirical, &e)))
                } else {
                    (None, None)
                };
                gaps.push(GapOutcome {
                    gap_budget: gap,
                    status: sol.status,
                    iterations: sol.iterations,
                    objective: sol.objective,
                    scaled_objective: sol.objective / (scale * scale),
                    benchmark,
                    reduction,
                });
            }
            Ok(SeedOutcome::Eligible(Box::new(TrajectoryRecord {
                day: field.date_label.clone(),
                lane: field.lane,
                seed_time: t,
                samples: reference.positions.len(),
                mean_speed: kin.mean_speed,
                speed_std: kin.speed_std,
                preprocess_correction: pre.max_correction,
                empirical: empirical.totals,
                gaps,
            })))
        })
        .collect();

    let mut fragment = DayFragment {
        day: field.date_label.clone(),
        lane: field.lane,
        seeds: seeds.len(),
        degenerate: 0,
        filtered: 0,
        records: Vec::new(),
    };
    for o in outcomes {
        match o? {
            SeedOutcome::Degenerate => fragment.degenerate += 1,
            SeedOutcome::Filtered => fragment.filtered += 1,
            SeedOutcome::Eligible(r) => fragment.records.push(*r),
        }
    }
    Ok(fragment)
}

/// Linear-interpolation quantiles (type 7) and the mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileBands {
    pub mean: f64,
    /// `(level, value)` pairs in configured order.
    pub quantiles: Vec<(f64, f64)>,
}

/// `None` for an empty sample.
pub fn aggregate_quantiles(values: &[f64], levels: &[f64]) -> Option<QuantileBands> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let quantile = |q: f64| {
        let h = (n - 1) as f64 * q;
        let lo = h.floor() as usize;
        let hi = (lo + 1).min(n - 1);
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    };
    Some(QuantileBands {
        mean: values.iter().sum::<f64>() / n as f64,
        quantiles: levels.iter().map(|&q| (q, quantile(q))).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub gap_budget: f64,
    pub mean_reduction: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffCurve {
    pub lane: i64,
    pub pollutant: Pollutant,
    /// Ascending gap budget.
    pub points: Vec<CurvePoint>,
}

/// (gap budget, reduction sum, count), keyed by the budget's bits.
type GapSums = BTreeMap<u64, (f64, f64, usize)>;

/// Mean reduction per lane, pollutant and gap budget, pooled over days.
pub fn sweep_tradeoff(fragments: &[DayFragment]) -> Vec<TradeoffCurve> {
    let mut acc: BTreeMap<(i64, Pollutant), GapSums> = BTreeMap::new();
    for f in fragments {
        for r in &f.records {
            for g in &r.gaps {
                let Some(red) = &g.reduction else { continue };
                for p in Pollutant::ALL {
                    if let Some(v) = *red.get(p) {
                        let e = acc
                            .entry((f.lane, p))
                            .or_default()
                            .entry(g.gap_budget.to_bits())
                            .or_insert((g.gap_budget, 0.0, 0));
                        e.1 += v;
                        e.2 += 1;
                    }
                }
            }
        }
    }
    acc.into_iter()
        .map(|((lane, pollutant), pts)| {
            let mut points: Vec<CurvePoint> = pts
                .into_values()
                .map(|(gap_budget, sum, count)| CurvePoint {
                    gap_budget,
                    mean_reduction: sum / count as f64,
                    count,
                })
                .collect();
            points.sort_by(|a, b| a.gap_budget.total_cmp(&b.gap_budget));
            TradeoffCurve {
                lane,
                pollutant,
                points,
            }
        })
        .collect()
}

/// One cell of the (mean speed, speed std) grid. Bin `i` covers
/// `[i * width, (i + 1) * width)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub mean_speed_bin: i64,
    pub speed_std_bin: i64,
    pub mean_speed_lo: f64,
    pub speed_std_lo: f64,
    pub count: usize,
    pub mean_reduction: f64,
}

/// Groups `(mean_speed, speed_std, reduction)` triples into rectangular
/// cells, sorted by bin indices.
pub fn hexbin_reduction(
    records: &[(f64, f64, f64)],
    mean_speed_width: f64,
    speed_std_width: f64,
) -> Vec<Cell> {
    let mut acc: BTreeMap<(i64, i64), (f64, usize)> = BTreeMap::new();
    for &(m, s, r) in records {
        let key = (
            (m / mean_speed_width).floor() as i64,
            (s / speed_std_width).floor() as i64,
        );
        let e = acc.entry(key).or_insert((0.0, 0));
        e.0 += r;
        e.1 += 1;
    }
    acc.into_iter()
        .map(|((i, j), (sum, count))| Cell {
            mean_speed_bin: i,
            speed_std_bin: j,
            mean_speed_lo: i as f64 * mean_speed_width,
            speed_std_lo: j as f64 * speed_std_width,
            count,
            mean_reduction: sum / count as f64,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSummary {
    pub gap_budget: f64,
    pub processed: usize,
    /// Non-optimal solves by status.
    pub skipped: BTreeMap<String, usize>,
    /// Mean of per-trajectory reductions, percent.
    pub mean_reduction: PerPollutant<Option<f64>>,
    /// Reduction of the summed grams over processed trajectories, percent.
    pub aggregate_reduction: PerPollutant<Option<f64>>,
    pub bands: PerPollutant<Option<QuantileBands>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaySummary {
    pub day: String,
    pub lane: i64,
    pub seeds: usize,
    pub degenerate: usize,
    pub filtered: usize,
    pub eligible: usize,
    pub gaps: Vec<GapSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    /// RFC 3339; the only field that differs between identical runs.
    pub generated_at: String,
    pub config: BenchmarkConfig,
    pub vsp: VspParams,
    pub rate_table_metadata: BTreeMap<String, String>,
    pub days: Vec<DaySummary>,
    pub tradeoff: Vec<TradeoffCurve>,
    /// Budget used for `cells`, meters.
    pub cell_gap_budget: f64,
    pub cells: Vec<Cell>,
    /// Solves that returned an infeasibility certificate. The reference is
    /// always feasible, so anything above zero is a solver failure.
    pub infeasible: usize,
}

fn summarize_gap(
    records: &[TrajectoryRecord],
    index: usize,
    gap_budget: f64,
    levels: &[f64],
) -> GapSummary {
    let mut skipped = BTreeMap::new();
    let mut processed = Vec::new();
    for r in records {
        let g = &r.gaps[index];
        match (&g.benchmark, &g.reduction) {
            (Some(b), Some(red)) => processed.push((r, b, red)),
            _ => {
                *skipped
                    .entry(status_name(g.status).to_string())
                    .or_insert(0) += 1
            }
        }
    }
    let values = |p: Pollutant| -> Vec<f64> {
        processed
            .iter()
            .filter_map(|(_, _, red)| *red.get(p))
            .collect()
    };
    GapSummary {
        gap_budget,
        processed: processed.len(),
        skipped,
        mean_reduction: PerPollutant::from_fn(|p| {
            aggregate_quantiles(&values(p), &[]).map(|b| b.mean)
        }),
        aggregate_reduction: PerPollutant::from_fn(|p| {
            let e: f64 = processed.iter().map(|(r, _, _)| *r.empirical.get(p)).sum();
            let b: f64 = processed.iter().map(|(_, b, _)| *b.get(p)).sum();
            (e > 0.0).then(|| 100.0 * (e - b) / e)
        }),
        bands: PerPollutant::from_fn(|p| aggregate_quantiles(&values(p), levels)),
    }
}

fn status_name(s: QpStatus) -> &'static str {
    match s {
        QpStatus::Optimal => "optimal",
        QpStatus::MaxIterations => "max_iterations",
        QpStatus::Infeasible => "infeasible",
    }
}

pub fn build_report(
    fragments: &[DayFragment],
    config: &BenchmarkConfig,
    vsp: &VspParams,
    table: &OpModeRateTable,
    generated_at: String,
) -> BenchmarkReport {
    let days = fragments
        .iter()
        .map(|f| DaySummary {
            day: f.day.clone(),
            lane: f.lane,
            seeds: f.seeds,
            degenerate: f.degenerate,
            filtered: f.filtered,
            eligible: f.eligible(),
            gaps: (config.gap_budgets.iter().enumerate())
                .map(|(i, &g)| summarize_gap(&f.records, i, g, &config.quantile_bands))
                .collect(),
        })
        .collect();
    let focus = config.focus_index();
    let points: Vec<(f64, f64, f64)> = fragments
        .iter()
        .flat_map(|f| &f.records)
        .filter_map(|r| {
            let red = r.gaps[focus].reduction.as_ref()?.co2?;
            Some((r.mean_speed, r.speed_std, red))
        })
        .collect();
    let infeasible = fragments
        .iter()
        .flat_map(|f| &f.records)
        .flat_map(|r| &r.gaps)
        .filter(|g| g.status == QpStatus::Infeasible)
        .count();
    BenchmarkReport {
        generated_at,
        config: config.clone(),
        vsp: *vsp,
        rate_table_metadata: table.metadata.clone(),
        days,
        tradeoff: sweep_tradeoff(fragments),
        cell_gap_budget: config.gap_budgets[focus],
        cells: hexbin_reduction(
            &points,
            config.cell_mean_speed_width,
            config.cell_speed_std_width,
        ),
        infeasible,
    }
}

/// Runs every field whose lane is selected, in input order.
pub fn run_benchmark(
    fields: &[SpeedField],
    config: &BenchmarkConfig,
    vsp: &VspParams,
    table: &OpModeRateTable,
) -> Result<(BenchmarkReport, Vec<DayFragment>)> {
    config.validate()?;
    let mut fragments = Vec::new();
    for field in fields {
        if config.lanes.is_empty() || config.lanes.contains(&field.lane) {
            fragments.push(run_day(field, config, vsp, table)?);
        }
    }
    let report = build_report(
        &fragments,
        config,
        vsp,
        table,
        chrono::Utc::now().to_rfc3339(),
    );
    Ok((report, fragments))
}

/// Flat per-trajectory table: one row per trajectory and gap budget.
pub fn records_csv(fragments: &[DayFragment]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = [
        "day",
        "lane",
        "seed_time",
        "mean_speed",
        "speed_std",
        "gap_budget",
        "status",
    ]
    .map(String::from)
    .to_vec();
    for prefix in ["empirical_g", "benchmark_g", "reduction_pct"] {
        header.extend(Pollutant::ALL.iter().map(|p| format!("{prefix}_{p}")));
    }
    w.write_record(&header)?;
    let opt = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
    for f in fragments {
        for r in &f.records {
            for g in &r.gaps {
                let mut row = vec![
                    r.day.clone(),
                    r.lane.to_string(),
                    r.seed_time.to_string(),
                    r.mean_speed.to_string(),
                    r.speed_std.to_string(),
                    g.gap_budget.to_string(),
                    status_name(g.status).to_string(),
                ];
                row.extend(
                    Pollutant::ALL
                        .iter()
                        .map(|&p| r.empirical.get(p).to_string()),
                );
                row.extend(
                    Pollutant::ALL
                        .iter()
                        .map(|&p| opt(g.benchmark.map(|b| *b.get(p)))),
                );
                row.extend(
                    Pollutant::ALL
                        .iter()
                        .map(|&p| opt(g.reduction.and_then(|x| *x.get(p)))),
                );
                w.write_record(&row)?;
            }
        }
    }
    w.into_inner().map_err(|e| Error::Internal(e.to_string()))
}

//! Experiment orchestration: kappa_d measurement with start-time sampling,
//! viscosity sweeps with slope fits, the transport-comparison check, and the
//! comparison of measurements against the theory calculators.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::bounds::{
    self, decay_threshold, transport_distance_bound, trivial_kappa_bound, BoundReport, MixingCase,
};
use crate::error::{Error, Result};
use crate::flows::VelocityField;
use crate::grid::{Grid, ScalarField};
use crate::mixing::{linear_fit, RateFunction};
use crate::record::{format_float, InitSpec, RunMeta, RunRecord, SCHEMA_VERSION};
use crate::solver::{simulate, DtPolicy, RecorderConfig, Solver, SolverConfig, SolverState};
use crate::spectral::{grad_lp_norm, LAMBDA_1};
use crate::transport::transport_solve;

/// Everything needed to run one experiment family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub grid_d: usize,
    pub grid_n: usize,
    pub flow: VelocityField,
    pub p: f64,
    /// Viscosities, positive and sorted descending.
    pub nu_list: Vec<f64>,
    /// Start-time samples within one flow period (the sup-over-s surrogate).
    pub s_list: Vec<f64>,
    /// Absolute horizon cap; each run also stops at 1.2x the trivial bound.
    pub t_max: f64,
    pub beta: f64,
    pub init: InitSpec,
    pub dt_policy: DtPolicy,
    pub eps_g: f64,
    pub dt_max: f64,
    /// Worker threads for independent (nu, s) runs.
    pub workers: usize,
    /// Optional mixing-rate hypothesis for the theory columns.
    pub rate: Option<RateFunction>,
    pub alpha: f64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let grid = Grid::new(self.grid_d, self.grid_n)?;
        if self.nu_list.is_empty() {
            return Err(Error::param("nu_list", "need at least one viscosity"));
        }
        if self.nu_list.iter().any(|&nu| !(nu > 0.0)) {
            return Err(Error::param("nu_list", "viscosities must be positive"));
        }
        if self.nu_list.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::param("nu_list", "viscosities must be sorted descending"));
        }
        if self.s_list.is_empty() {
            return Err(Error::param("s_list", "need at least one start time"));
        }
        let period = self.flow.period().unwrap_or(f64::INFINITY);
        if self
            .s_list
            .iter()
            .any(|&s| s < 0.0 || (period.is_finite() && s >= period))
        {
            return Err(Error::param("s_list", "start times must lie within one flow period"));
        }
        if self.s_list.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::param("s_list", "start times must be strictly increasing"));
        }
        if !(self.t_max > 0.0) {
            return Err(Error::param("t_max", "horizon must be positive"));
        }
        if !(self.beta > 0.0) {
            return Err(Error::param("beta", "mixing norm order must be positive"));
        }
        if self.workers == 0 {
            return Err(Error::param("workers", "need at least one worker"));
        }
        self.solver_config(grid, self.nu_list[0])?.validate()
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.grid_d, self.grid_n)
    }

    fn solver_config(&self, grid: Grid, nu: f64) -> Result<SolverConfig> {
        Ok(SolverConfig {
            grid,
            flow: self.flow,
            nu,
            p: self.p,
            dt_policy: self.dt_policy,
            eps_g: self.eps_g,
            dt_max: self.dt_max,
        })
    }

    /// Recorder cadence: 1/200 of the trivial dissipation-time bound.
    fn cadence(&self, nu: f64) -> f64 {
        trivial_kappa_bound(nu, self.p, LAMBDA_1).unwrap_or(1.0) / 200.0
    }

    fn horizon(&self, nu: f64, s: f64) -> f64 {
        let trivial = trivial_kappa_bound(nu, self.p, LAMBDA_1).unwrap_or(self.t_max);
        (s + 1.2 * trivial).min(self.t_max.max(s + self.cadence(nu)))
    }
}

pub fn build_initial(grid: Grid, init: &InitSpec) -> Result<ScalarField> {
    match init {
        InitSpec::SingleMode { k, cos_amp, sin_amp } => {
            ScalarField::single_mode(grid, *k, *cos_amp, *sin_amp)
        }
        InitSpec::RandomBand { band, seed } => {
            ScalarField::random_band_limited(grid, *band, *seed, true)
        }
    }
}

/// One (nu, s) measurement.
#[derive(Clone, Debug, Serialize)]
pub struct KappaRun {
    pub nu: f64,
    pub s: f64,
    /// first time the threshold is crossed (absolute), if reached
    pub crossing: Option<f64>,
    /// crossing - s, or the horizon length when not reached
    pub kappa: f64,
    pub reached: bool,
    pub record: RunRecord,
}

/// kappa_d(nu): max over sampled start times.
#[derive(Clone, Debug, Serialize)]
pub struct KappaPoint {
    pub nu: f64,
    pub kappa: f64,
    /// some start time never crossed; kappa is only a lower bound
    pub lower_bound_only: bool,
    pub runs: Vec<KappaRun>,
}

#[derive(Clone, Debug, Serialize)]
pub struct KappaMeasurement {
    pub points: Vec<KappaPoint>,
}

/// Measures the nonlinear dissipation time for every configured viscosity:
/// the s = 0 trajectory is continued to each sampled start time, and each
/// start state is run until its own threshold crossing.
pub fn measure_kappa(config: &ExperimentConfig) -> Result<KappaMeasurement> {
    config.validate()?;
    let grid = config.grid()?;
    let theta00 = build_initial(grid, &config.init)?;
    if theta00.l2_norm() == 0.0 {
        return Err(Error::param("init", "zero initial datum never crosses its threshold"));
    }

    // assemble run specs: chain the s = 0 trajectory through the s samples
    struct Spec {
        nu: f64,
        s: f64,
        start: ScalarField,
    }
    let mut specs: Vec<Spec> = Vec::new();
    for &nu in &config.nu_list {
        let cfg = config.solver_config(grid, nu)?;
        let rec = RecorderConfig {
            cadence: config.cadence(nu),
            beta: config.beta,
            threshold: None,
            stop_at_crossing: false,
        };
        let mut chain_state = SolverState::new(theta00.clone(), 0.0);
        for &s in &config.s_list {
            if s > chain_state.time {
                let seg = simulate(&cfg, &chain_state.field, chain_state.time, s, &rec)?;
                chain_state = seg.final_state;
            }
            specs.push(Spec {
                nu,
                s,
                start: chain_state.field.clone(),
            });
        }
    }

    // independent measurement runs, parallel up to the worker count
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<(usize, Result<KappaRun>)>> = Mutex::new(Vec::with_capacity(specs.len()));
    let workers = config.workers.min(specs.len()).max(1);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= specs.len() {
                    break;
                }
                let spec = &specs[i];
                let out = run_measurement(config, grid, spec.nu, spec.s, &spec.start);
                results.lock().unwrap().push((i, out));
            });
        }
    });
    let mut collected = results.into_inner().unwrap();
    collected.sort_by_key(|(i, _)| *i);

    let mut points: Vec<KappaPoint> = Vec::new();
    for (i, out) in collected {
        let run = out?;
        let nu = specs[i].nu;
        if points.last().map(|p: &KappaPoint| p.nu) != Some(nu) {
            points.push(KappaPoint {
                nu,
                kappa: 0.0,
                lower_bound_only: false,
                runs: Vec::new(),
            });
        }
        let point = points.last_mut().unwrap();
        if run.kappa > point.kappa {
            point.kappa = run.kappa;
        }
        point.lower_bound_only |= !run.reached;
        point.runs.push(run);
    }
    Ok(KappaMeasurement { points })
}

fn run_measurement(
    config: &ExperimentConfig,
    grid: Grid,
    nu: f64,
    s: f64,
    start: &ScalarField,
) -> Result<KappaRun> {
    let cfg = config.solver_config(grid, nu)?;
    let norm0 = start.l2_norm();
    let threshold = decay_threshold(norm0, config.p)?;
    let t_end = config.horizon(nu, s);
    let rec = RecorderConfig {
        cadence: config.cadence(nu),
        beta: config.beta,
        threshold: Some(threshold),
        stop_at_crossing: true,
    };
    let sim = simulate(&cfg, start, s, t_end, &rec)?;
    let reached = sim.crossing.is_some();
    let kappa = sim.crossing.map_or(t_end - s, |c| c - s);
    let record = RunRecord {
        schema_version: SCHEMA_VERSION,
        meta: RunMeta {
            grid_d: config.grid_d,
            grid_n: config.grid_n,
            flow: config.flow,
            nu,
            p: config.p,
            dt_policy: config.dt_policy,
            eps_g: config.eps_g,
            dt_max: config.dt_max,
            init: config.init.clone(),
            s,
            t_end,
            cadence: rec.cadence,
            beta: config.beta,
        },
        threshold,
        crossing: sim.crossing,
        status: sim.status,
        samples: sim.samples,
    };
    Ok(KappaRun {
        nu,
        s,
        crossing: sim.crossing,
        kappa,
        reached,
        record,
    })
}

/// Least-squares slope with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub std_error: f64,
    pub r_squared: f64,
}

fn slope_with_error(xs: &[f64], ys: &[f64]) -> SlopeFit {
    let (slope, _, r2) = linear_fit(xs, ys);
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let my = ys.iter().sum::<f64>() / n;
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let ss_res = (syy - slope * slope * sxx).max(0.0);
    let dof = (n - 2.0).max(1.0);
    SlopeFit {
        slope,
        std_error: (ss_res / dof / sxx).sqrt(),
        r_squared: r2.clamp(0.0, 1.0),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub nu: f64,
    pub kappa: f64,
    pub reached: bool,
    pub trivial_bound: f64,
    pub rate_factor: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// log-log slope over the reached rows; None when the grid is degenerate
    pub slope: Option<SlopeFit>,
    pub slope_rejected: Option<String>,
    pub measurement: KappaMeasurement,
}

/// Runs the measurement over the nu grid and fits the scaling exponent.
pub fn nu_sweep(config: &ExperimentConfig) -> Result<SweepResult> {
    let measurement = measure_kappa(config)?;
    let mut rows = Vec::new();
    for point in &measurement.points {
        let trivial = trivial_kappa_bound(point.nu, config.p, LAMBDA_1)?;
        let rate_factor = match &config.rate {
            Some(h) => {
                let inputs = bounds::BoundInputs {
                    p: config.p,
                    nu: point.nu,
                    alpha: config.alpha,
                    beta: config.beta,
                    d: config.grid_d,
                    grad_u_sup: config.flow.grad_sup_norm(),
                    theta0_l2: 1.0,
                    h: h.clone(),
                    lambda_1: LAMBDA_1,
                    weyl_c: crate::spectral::weyl_constant(config.grid_d, 1.0, 0.01)?,
                };
                if inputs.grad_u_sup > 0.0 {
                    bounds::enhanced_rate_factor(&inputs, MixingCase::Strong)
                        .ok()
                        .map(|r| r.rate_factor)
                } else {
                    None
                }
            }
            None => None,
        };
        rows.push(SweepRow {
            nu: point.nu,
            kappa: point.kappa,
            reached: !point.lower_bound_only,
            trivial_bound: trivial,
            rate_factor,
        });
    }
    let usable: Vec<&SweepRow> = rows.iter().filter(|r| r.reached).collect();
    let (slope, slope_rejected) = if usable.len() < 3 {
        (None, Some(format!("need at least 3 reached viscosities, have {}", usable.len())))
    } else {
        let lo = usable.iter().map(|r| r.nu).fold(f64::INFINITY, f64::min);
        let hi = usable.iter().map(|r| r.nu).fold(0.0, f64::max);
        if hi / lo < 10.0 {
            (None, Some(format!("nu grid spans {:.2} decades, need at least one", (hi / lo).log10())))
        } else {
            let xs: Vec<f64> = usable.iter().map(|r| r.nu.ln()).collect();
            let ys: Vec<f64> = usable.iter().map(|r| r.kappa.ln()).collect();
            (Some(slope_with_error(&xs, &ys)), None)
        }
    };
    Ok(SweepResult {
        rows,
        slope,
        slope_rejected,
        measurement,
    })
}

/// Numerical check of the transport comparison estimate over one run.
#[derive(Clone, Debug, Serialize)]
pub struct TransportComparisonReport {
    pub nu: f64,
    pub times: Vec<f64>,
    pub distances_sq: Vec<f64>,
    pub bounds: Vec<f64>,
    /// same bound with D_p replaced by 1 (mutation control)
    pub mutated_bounds: Vec<f64>,
    pub max_ratio: f64,
    pub max_mutated_ratio: f64,
    pub passes: bool,
    pub negative_control_fails: bool,
}

/// Runs the viscous equation and the inviscid transport from the same datum
/// and compares their L2 distance against the closed-form bound at every
/// recorded time in (s, s + horizon].
pub fn verify_transport_comparison(config: &ExperimentConfig, nu: f64, horizon: f64) -> Result<TransportComparisonReport> {
    config.validate()?;
    let grid = config.grid()?;
    let theta0 = build_initial(grid, &config.init)?;
    let g_sup = config.flow.positive_grad_sup_norm()?;
    let grad_p = grad_lp_norm(&theta0, config.p)?;
    let cfg = config.solver_config(grid, nu)?;
    let cadence = horizon / 40.0;

    let mut solver = Solver::new(cfg)?;
    let mut state = SolverState::new(theta0.clone(), 0.0);
    let mut times = Vec::new();
    let mut distances_sq = Vec::new();
    let mut bounds_col = Vec::new();
    let mut mutated = Vec::new();
    let mut last_record = 0.0;
    while state.time < horizon {
        let dt = solver
            .suggest_dt(&state)
            .min(horizon - state.time)
            .min(cadence);
        let (next, _, _) = solver.step(&state, dt)?;
        state = next;
        if state.time - last_record >= cadence * (1.0 - 1e-9) || state.time >= horizon {
            last_record = state.time;
            let phi = transport_solve(&config.flow, &theta0, 0.0, state.time)?;
            let dist2 = state.field.l2_distance(&phi).powi(2);
            let bound = transport_distance_bound(config.grid_d, config.p, nu, g_sup, grad_p, state.time)?;
            let bound_mut = bound / bounds::d_p_constant(config.p)?;
            times.push(state.time);
            distances_sq.push(dist2);
            bounds_col.push(bound);
            mutated.push(bound_mut);
        }
    }
    let max_ratio = distances_sq
        .iter()
        .zip(&bounds_col)
        .map(|(d, b)| d / b)
        .fold(0.0, f64::max);
    let max_mutated_ratio = distances_sq
        .iter()
        .zip(&mutated)
        .map(|(d, b)| d / b)
        .fold(0.0, f64::max);
    Ok(TransportComparisonReport {
        nu,
        times,
        distances_sq,
        bounds: bounds_col,
        mutated_bounds: mutated,
        max_ratio,
        max_mutated_ratio,
        passes: max_ratio <= 1.0,
        negative_control_fails: max_mutated_ratio > 1.0,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub nu: f64,
    pub kappa: f64,
    pub reached: bool,
    pub trivial_bound: f64,
    pub strong_rate_factor: Option<f64>,
    pub weak_rate_factor: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
    pub measured_slope: Option<SlopeFit>,
    pub strong_delta: Option<f64>,
    pub weak_delta: Option<f64>,
}

/// Joins a sweep with per-nu theory reports; the viscosity grids must match.
/// Entries are optional because the thresholds are undefined (enhancement
/// inactive) at large viscosities.
pub fn compare_bounds(
    sweep: &SweepResult,
    strong: &[Option<BoundReport>],
    weak: &[Option<BoundReport>],
) -> Result<ComparisonReport> {
    for reports in [strong, weak] {
        if reports.len() != sweep.rows.len() {
            return Err(Error::param("reports", "viscosity grids do not match the sweep"));
        }
        if reports
            .iter()
            .zip(&sweep.rows)
            .any(|(r, row)| r.as_ref().is_some_and(|r| (r.nu - row.nu).abs() > 1e-12 * row.nu))
        {
            return Err(Error::param("reports", "viscosity grids do not match the sweep"));
        }
    }
    let rows = sweep
        .rows
        .iter()
        .enumerate()
        .map(|(i, row)| ComparisonRow {
            nu: row.nu,
            kappa: row.kappa,
            reached: row.reached,
            trivial_bound: row.trivial_bound,
            strong_rate_factor: strong[i].as_ref().map(|r| r.rate_factor),
            weak_rate_factor: weak[i].as_ref().map(|r| r.rate_factor),
        })
        .collect();
    Ok(ComparisonReport {
        rows,
        measured_slope: sweep.slope,
        strong_delta: strong.iter().flatten().next().and_then(|r| r.delta),
        weak_delta: weak.iter().flatten().next().and_then(|r| r.delta),
    })
}

/// `<base>/<experiment>/<nu>/<s>.jsonl`
pub fn record_path(base: &Path, experiment: &str, nu: f64, s: f64) -> PathBuf {
    base.join(experiment)
        .join(format_float(nu))
        .join(format!("{}.jsonl", format_float(s)))
}

/// Writes every run of a measurement into the store layout, with CSV
/// projections alongside.
pub fn persist_measurement(
    measurement: &KappaMeasurement,
    base: &Path,
    experiment: &str,
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for point in &measurement.points {
        for run in &point.runs {
            let path = record_path(base, experiment, run.nu, run.s);
            run.record.persist(&path)?;
            run.record.write_csv(&path.with_extension("csv"))?;
            written.push(path);
        }
    }
    Ok(written)
}

/// CSV projection of a sweep table.
pub fn write_sweep_csv(sweep: &SweepResult, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Persist(e.to_string()))?;
    w.write_record(["nu", "kappa", "reached", "trivial_bound", "rate_factor"])
        .map_err(|e| Error::Persist(e.to_string()))?;
    for row in &sweep.rows {
        w.write_record(&[
            format_float(row.nu),
            format_float(row.kappa),
            (row.reached as u8).to_string(),
            format_float(row.trivial_bound),
            row.rate_factor.map_or(String::new(), format_float),
        ])
        .map_err(|e| Error::Persist(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

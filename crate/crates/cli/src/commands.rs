//! Subcommand implementations. Each returns () on success; failures map to
//! the documented exit codes in main.

use std::path::{Path, PathBuf};

use plapmix::bounds::{enhanced_rate_factor, BoundInputs, BoundReport, MixingCase};
use plapmix::error::Error as CoreError;
use plapmix::flows::VelocityField;
use plapmix::grid::Grid;
use plapmix::lab::{
    self, build_initial, measure_kappa, nu_sweep, persist_measurement, verify_transport_comparison,
    ExperimentConfig,
};
use plapmix::mixing::{fit_rate, mixing_series, verify_strong, FitLaw, RateFunction, VerifyPlan};
use plapmix::record::format_float;
use plapmix::solver::{simulate, RecorderConfig, SolverConfig};
use plapmix::spectral::{
    weyl_constant, weyl_counting_check, EigenTable, LAMBDA_1,
};

use crate::config::Config;
use crate::plot::{emit_plot, write_series_csv, PlotStyle, Series};
use crate::CliError;

fn solver_config(exp: &ExperimentConfig, nu: f64) -> Result<SolverConfig, CoreError> {
    Ok(SolverConfig {
        grid: exp.grid()?,
        flow: exp.flow,
        nu,
        p: exp.p,
        dt_policy: exp.dt_policy,
        eps_g: exp.eps_g,
        dt_max: exp.dt_max,
    })
}

pub fn simulate_cmd(cfg: &Config, exp: &ExperimentConfig, out: &Path, verbose: bool) -> Result<(), CliError> {
    let nu = exp.nu_list[0];
    let grid = exp.grid()?;
    let theta0 = build_initial(grid, &exp.init)?;
    let trivial = plapmix::bounds::trivial_kappa_bound(nu, exp.p, LAMBDA_1)?;
    let horizon = cfg.f64_or("run.horizon", 1.2 * trivial);
    let threshold = plapmix::bounds::decay_threshold(theta0.l2_norm().max(1e-300), exp.p)?;
    let rec = RecorderConfig {
        cadence: trivial / 200.0,
        beta: exp.beta,
        threshold: Some(threshold),
        stop_at_crossing: false,
    };
    if verbose {
        eprintln!("simulate: nu={nu}, horizon={horizon}, threshold={threshold:.6}");
    }
    let scfg = solver_config(exp, nu)?;
    let sim = simulate(&scfg, &theta0, 0.0, horizon, &rec)?;
    let record = plapmix::record::RunRecord {
        schema_version: plapmix::record::SCHEMA_VERSION,
        meta: plapmix::record::RunMeta {
            grid_d: exp.grid_d,
            grid_n: exp.grid_n,
            flow: exp.flow,
            nu,
            p: exp.p,
            dt_policy: exp.dt_policy,
            eps_g: exp.eps_g,
            dt_max: exp.dt_max,
            init: exp.init.clone(),
            s: 0.0,
            t_end: horizon,
            cadence: rec.cadence,
            beta: exp.beta,
        },
        threshold,
        crossing: sim.crossing,
        status: sim.status.clone(),
        samples: sim.samples.clone(),
    };
    let base = out.join("simulate");
    record.persist(&base.join("run.jsonl"))?;
    record.write_csv(&base.join("run.csv"))?;
    let series = vec![Series {
        label: "l2".into(),
        points: sim.samples.iter().map(|s| (s.t, s.l2)).collect(),
    }];
    emit_plot(&series, PlotStyle::default(), "t", "L2 norm", &base.join("l2.svg")).map_err(CliError::plot)?;
    println!(
        "simulated nu={nu} to t={horizon:.4}: {} samples, crossing {}",
        sim.samples.len(),
        sim.crossing.map_or("not reached".into(), |c| format!("{c:.6}")),
    );
    println!("wrote {}", base.display());
    Ok(())
}

pub fn measure_kappa_cmd(exp: &ExperimentConfig, out: &Path, verbose: bool) -> Result<(), CliError> {
    if verbose {
        eprintln!("measuring kappa_d over {} viscosities, {} start times", exp.nu_list.len(), exp.s_list.len());
    }
    let m = measure_kappa(exp)?;
    persist_measurement(&m, out, "kappa")?;
    println!("{:<12} {:<14} {:<14} {:<10}", "nu", "kappa_d", "trivial", "reached");
    for p in &m.points {
        let trivial = plapmix::bounds::trivial_kappa_bound(p.nu, exp.p, LAMBDA_1)?;
        println!(
            "{:<12} {:<14.6} {:<14.6} {:<10}",
            format_float(p.nu),
            p.kappa,
            trivial,
            if p.lower_bound_only { "no (lower bound)" } else { "yes" }
        );
    }
    let summary = serde_json::to_string_pretty(&m).map_err(|e| CliError::Config(e.to_string()))?;
    std::fs::write(out.join("kappa").join("summary.json"), summary).map_err(CoreError::Io)?;
    println!("wrote {}", out.join("kappa").display());
    Ok(())
}

pub fn sweep_cmd(exp: &ExperimentConfig, out: &Path, verbose: bool) -> Result<(), CliError> {
    if verbose {
        eprintln!("sweeping {} viscosities", exp.nu_list.len());
    }
    let sweep = nu_sweep(exp)?;
    let dir = out.join("sweep");
    std::fs::create_dir_all(&dir).map_err(CoreError::Io)?;
    lab::write_sweep_csv(&sweep, &dir.join("sweep.csv"))?;
    let mut series = vec![
        Series {
            label: "measured".into(),
            points: sweep.rows.iter().map(|r| (r.nu, r.kappa)).collect(),
        },
        Series {
            label: "trivial bound".into(),
            points: sweep.rows.iter().map(|r| (r.nu, r.trivial_bound)).collect(),
        },
    ];
    if sweep.rows.iter().any(|r| r.rate_factor.is_some()) {
        series.push(Series {
            label: "rate factor".into(),
            points: sweep
                .rows
                .iter()
                .filter_map(|r| r.rate_factor.map(|f| (r.nu, f)))
                .collect(),
        });
    }
    emit_plot(
        &series,
        PlotStyle { log_x: true, log_y: true },
        "nu",
        "kappa_d",
        &dir.join("sweep.svg"),
    )
    .map_err(CliError::plot)?;
    write_series_csv(&series, "nu", "kappa", &dir.join("sweep_plot.csv")).map_err(CliError::plot)?;
    match (&sweep.slope, &sweep.slope_rejected) {
        (Some(fit), _) => println!(
            "log-log slope: {:.4} +/- {:.4} (R^2 = {:.4})",
            fit.slope, fit.std_error, fit.r_squared
        ),
        (None, Some(reason)) => println!("slope fit rejected: {reason}"),
        _ => {}
    }
    for row in &sweep.rows {
        println!(
            "nu={:<10} kappa={:<12.6} trivial={:<12.6}{}",
            format_float(row.nu),
            row.kappa,
            row.trivial_bound,
            if row.reached { "" } else { "  (not reached)" }
        );
    }
    println!("wrote {}", dir.display());
    Ok(())
}

pub fn mixing_rate_cmd(cfg: &Config, exp: &ExperimentConfig, out: &Path, verbose: bool) -> Result<(), CliError> {
    let grid = exp.grid()?;
    let theta0 = build_initial(grid, &exp.init)?;
    let horizon = cfg.f64_or("mixing.horizon", 10.0);
    let samples = cfg.usize_or("mixing.samples", 41).max(9);
    let times: Vec<f64> = (0..samples)
        .map(|i| horizon * i as f64 / (samples - 1) as f64)
        .collect();
    if verbose {
        eprintln!("mixing series over [0,{horizon}] with {samples} samples");
    }
    let series = mixing_series(&exp.flow, &theta0, &times, exp.beta)?;
    let fit = fit_rate(&series.times, &series.values, FitLaw::Exponential)?;
    let dir = out.join("mixing");
    std::fs::create_dir_all(&dir).map_err(CoreError::Io)?;
    let plot = vec![Series {
        label: "H^-beta norm".into(),
        points: series.times.iter().zip(&series.values).map(|(&t, &v)| (t, v)).collect(),
    }];
    emit_plot(&plot, PlotStyle { log_x: false, log_y: true }, "t", "mixing norm", &dir.join("series.svg"))
        .map_err(CliError::plot)?;
    write_series_csv(&plot, "t", "h_neg", &dir.join("series.csv")).map_err(CliError::plot)?;
    let report = serde_json::json!({
        "times": series.times,
        "norms": series.values,
        "resolution_flags": series.resolution_flags,
        "fit": fit.rate,
        "r_squared": fit.r_squared,
    });
    std::fs::write(
        dir.join("report.json"),
        serde_json::to_string_pretty(&report).map_err(|e| CliError::Config(e.to_string()))?,
    )
    .map_err(CoreError::Io)?;
    match &fit.rate {
        RateFunction::Exponential { c1, c2 } => {
            println!("fitted exponential rate: c1 = {c1:.6}, c2 = {c2:.6}, R^2 = {:.4}", fit.r_squared)
        }
        other => println!("fitted rate: {other:?}, R^2 = {:.4}", fit.r_squared),
    }
    if series.resolution_flags.iter().any(|&f| f) {
        println!("warning: late-time entries are resolution-limited (filaments below 4 cells)");
    }
    println!("note: the fitted rate is a finite-horizon empirical estimate, not a uniform-in-time guarantee");
    println!("wrote {}", dir.display());
    Ok(())
}

pub fn bounds_cmd(cfg: &Config, exp: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let h = exp
        .rate
        .clone()
        .ok_or_else(|| CliError::Config("bounds needs a rate hypothesis: set [rate] law/params".into()))?;
    let grad_u_sup = exp.flow.positive_grad_sup_norm()?;
    let nus = cfg.bounds_nu_list().unwrap_or_else(|| exp.nu_list.clone());
    let weyl_c = weyl_constant(exp.grid_d, 1.0, 0.01)?;
    let mut reports: Vec<(f64, Option<BoundReport>, Option<BoundReport>)> = Vec::new();
    let mut any_infeasible = false;
    for &nu in &nus {
        let inputs = BoundInputs {
            p: exp.p,
            nu,
            alpha: exp.alpha,
            beta: exp.beta,
            d: exp.grid_d,
            grad_u_sup,
            theta0_l2: 1.0,
            h: h.clone(),
            lambda_1: LAMBDA_1,
            weyl_c,
        };
        // infeasible threshold or an out-of-range companion argument both
        // mean the theorem is vacuous at this viscosity
        let mut row = |case: MixingCase| -> Result<Option<BoundReport>, CliError> {
            match enhanced_rate_factor(&inputs, case) {
                Ok(r) => Ok(Some(r)),
                Err(CoreError::EnhancementInfeasible { .. }) | Err(CoreError::RateOutOfRange { .. }) => {
                    any_infeasible = true;
                    Ok(None)
                }
                Err(e) => Err(e.into()),
            }
        };
        let strong = row(MixingCase::Strong)?;
        let weak = row(MixingCase::Weak)?;
        reports.push((nu, strong, weak));
    }
    println!(
        "{:<10} {:<14} {:<12} {:<14} {:<12} {:<14} {:<10}",
        "nu", "trivial", "H1", "strong factor", "H2", "weak factor", "delta(strong)"
    );
    let mut rows = Vec::new();
    for (nu, strong, weak) in &reports {
        let trivial = plapmix::bounds::trivial_kappa_bound(*nu, exp.p, LAMBDA_1)?;
        let fmt = |r: &Option<BoundReport>, f: fn(&BoundReport) -> String| {
            r.as_ref().map_or("inactive".to_string(), f)
        };
        println!(
            "{:<10} {:<14.6e} {:<12} {:<14} {:<12} {:<14} {:<10}",
            format_float(*nu),
            trivial,
            fmt(strong, |r| format!("{:.5e}", r.h_value)),
            fmt(strong, |r| format!("{:.5e}", r.rate_factor)),
            fmt(weak, |r| format!("{:.5e}", r.h_value)),
            fmt(weak, |r| format!("{:.5e}", r.rate_factor)),
            strong
                .as_ref()
                .and_then(|r| r.delta)
                .map_or("-".to_string(), |d| format!("{d:.5}")),
        );
        rows.push(serde_json::json!({
            "nu": nu,
            "trivial_bound": trivial,
            "strong": strong,
            "weak": weak,
        }));
    }
    let dir = out.join("bounds");
    std::fs::create_dir_all(&dir).map_err(CoreError::Io)?;
    std::fs::write(
        dir.join("bounds.json"),
        serde_json::to_string_pretty(&rows).map_err(|e| CliError::Config(e.to_string()))?,
    )
    .map_err(CoreError::Io)?;
    let mut csv = String::from("nu,trivial_bound,h1,strong_factor,h2,weak_factor\n");
    for (nu, strong, weak) in &reports {
        let trivial = plapmix::bounds::trivial_kappa_bound(*nu, exp.p, LAMBDA_1)?;
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            format_float(*nu),
            format_float(trivial),
            strong.as_ref().map_or(String::new(), |r| format_float(r.h_value)),
            strong.as_ref().map_or(String::new(), |r| format_float(r.rate_factor)),
            weak.as_ref().map_or(String::new(), |r| format_float(r.h_value)),
            weak.as_ref().map_or(String::new(), |r| format_float(r.rate_factor)),
        ));
    }
    std::fs::write(dir.join("bounds.csv"), csv).map_err(CoreError::Io)?;
    println!("wrote {}", dir.display());
    if any_infeasible {
        return Err(CliError::Numerical(
            "some viscosities sit above the enhancement feasibility boundary (H threshold undefined); \
             the table marks them `inactive`"
                .into(),
        ));
    }
    Ok(())
}

pub fn verify_cmd(suite: &str, exp: &ExperimentConfig, verbose: bool) -> Result<(), CliError> {
    let fail = |msg: String| Err(CliError::Verification(msg));
    match suite {
        "f-iteration" => {
            if let Err(msg) = plapmix::bounds::f_iteration_check(10_000, 20210121) {
                return fail(msg);
            }
            println!("f-iteration suite: 10000 tuples, composition identity and domination hold");
            Ok(())
        }
        "identities" => {
            use plapmix::bounds::{decay_threshold, gronwall_decay, trivial_kappa_bound};
            for &nu in &[1e-2, 1e-3, 1e-4] {
                for &p in &[2.5, 3.0, 4.0] {
                    let trivial = trivial_kappa_bound(nu, p, LAMBDA_1)?;
                    let env = gronwall_decay(nu, p, LAMBDA_1, 1.0, trivial)?;
                    let thr = decay_threshold(1.0, p)?;
                    if (env - thr).abs() > 1e-12 {
                        return fail(format!("Gronwall/threshold identity broke at nu={nu}, p={p}: {env} vs {thr}"));
                    }
                }
            }
            println!("identities suite: Gronwall envelope at the trivial bound equals the threshold");
            Ok(())
        }
        "weyl" => {
            let grid = exp.grid()?;
            let table = EigenTable::new(grid);
            let check = weyl_counting_check(&table, 0.01, 0)?;
            if verbose {
                eprintln!(
                    "weyl: d={} max ratio {:.5}, bound holds from distinct index {}",
                    exp.grid_d, check.max_ratio, check.first_holding_index
                );
            }
            let tail = weyl_counting_check(&table, 0.01, check.first_holding_index)?;
            if !tail.holds {
                return fail(format!(
                    "counting bound does not hold from its own certified index {}",
                    check.first_holding_index
                ));
            }
            println!(
                "weyl suite: N(lambda) <= (1+eps) Weyl limit from distinct index {} on (d = {})",
                check.first_holding_index, exp.grid_d
            );
            Ok(())
        }
        "mixing-controls" => {
            let grid = Grid::new(exp.grid_d, 64.min(exp.grid_n))?;
            let still = VelocityField::zero(exp.grid_d);
            let mut plan = VerifyPlan::for_flow(&still, grid.n(), 3, 11);
            plan.times = (0..=16).map(|i| i as f64 * 8.0).collect();
            let vanishing = RateFunction::exponential(1.0, 0.5)?;
            let report = verify_strong(&still, grid, &vanishing, exp.alpha, exp.beta, &plan)?;
            if report.passes {
                return fail("zero flow passed a vanishing-rate mixing check".into());
            }
            let slack = RateFunction::exponential(1e6, 1e-3)?;
            let report = verify_strong(&still, grid, &slack, exp.alpha, exp.beta, &plan)?;
            if !report.passes {
                return fail(format!("slack rate failed the mixing check (worst {})", report.worst_ratio));
            }
            println!("mixing-controls suite: negative and positive controls behave");
            Ok(())
        }
        "transport-comparison" => {
            let nu = *exp.nu_list.last().unwrap();
            let report = verify_transport_comparison(exp, nu, 2.0)?;
            if !report.passes {
                return fail(format!(
                    "transport comparison bound violated: max ratio {}",
                    report.max_ratio
                ));
            }
            println!(
                "transport-comparison suite: distance below bound at all {} samples (max ratio {:.3e})",
                report.times.len(),
                report.max_ratio
            );
            Ok(())
        }
        other => Err(CliError::Config(format!(
            "unknown suite `{other}`; available: f-iteration, identities, weyl, mixing-controls, transport-comparison"
        ))),
    }
}

pub fn plot_cmd(input: &Path, out: &Path, logx: bool, logy: bool) -> Result<(), CliError> {
    let text = std::fs::read_to_string(input)
        .map_err(|e| CliError::Config(format!("missing file `{}`: {e}", input.display())))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| CliError::Config("empty csv".into()))?
        .split(',')
        .collect();
    if header.len() < 2 {
        return Err(CliError::Config("csv needs at least two columns".into()));
    }
    // first column = x; remaining numeric columns become series
    let mut series: Vec<Series> = header[1..]
        .iter()
        .map(|name| Series { label: name.to_string(), points: Vec::new() })
        .collect();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        let x: f64 = match cells[0].parse() {
            Ok(v) => v,
            Err(_) => continue,
        };
        for (i, s) in series.iter_mut().enumerate() {
            if let Some(Ok(y)) = cells.get(i + 1).map(|c| c.parse::<f64>()) {
                s.points.push((x, y));
            }
        }
    }
    series.retain(|s| !s.points.is_empty());
    let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("plot");
    let path = out.join(format!("{stem}.svg"));
    emit_plot(&series, PlotStyle { log_x: logx, log_y: logy }, header[0], "value", &path)
        .map_err(CliError::plot)?;
    write_series_csv(&series, header[0], "value", &out.join(format!("{stem}_plot.csv")))
        .map_err(CliError::plot)?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn default_out(out: &Option<PathBuf>) -> PathBuf {
    out.clone().unwrap_or_else(|| PathBuf::from("out"))
}

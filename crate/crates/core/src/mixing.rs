//! Mixing-rate measurement under the inviscid flow: negative-Sobolev decay
//! series, rate-function fits, and the strong/weak mixing inequalities
//! sampled over random band-limited function pairs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flows::VelocityField;
use crate::grid::ScalarField;
use crate::spectral::sobolev_norm;
use crate::transport::transport_solve;

/// A strictly decreasing mixing rate function h with a well-defined inverse.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum RateFunction {
    /// h(t) = c / t^q.
    Power { c: f64, q: f64 },
    /// h(t) = c1 exp(-c2 t).
    Exponential { c1: f64, c2: f64 },
    /// Piecewise-linear through strictly decreasing positive samples starting
    /// at t = 0; extended beyond the last sample by the exponential ray
    /// through the final two points.
    Tabulated { samples: Vec<(f64, f64)> },
}

impl RateFunction {
    pub fn power(c: f64, q: f64) -> Result<RateFunction> {
        if !(c > 0.0 && q > 0.0) {
            return Err(Error::param("power", format!("c, q must be positive, got c={c}, q={q}")));
        }
        Ok(RateFunction::Power { c, q })
    }

    pub fn exponential(c1: f64, c2: f64) -> Result<RateFunction> {
        if !(c1 > 0.0 && c2 > 0.0) {
            return Err(Error::param("exponential", format!("c1, c2 must be positive, got c1={c1}, c2={c2}")));
        }
        Ok(RateFunction::Exponential { c1, c2 })
    }

    pub fn tabulated(samples: Vec<(f64, f64)>) -> Result<RateFunction> {
        if samples.len() < 2 {
            return Err(Error::param("samples", "need at least two samples"));
        }
        if samples[0].0 != 0.0 {
            return Err(Error::param("samples", "first sample must sit at t = 0"));
        }
        for w in samples.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::param("samples", "times must be strictly increasing"));
            }
            if !(w[1].1 < w[0].1) {
                return Err(Error::param("samples", "values must be strictly decreasing"));
            }
        }
        if samples.iter().any(|&(_, v)| !(v > 0.0)) {
            return Err(Error::param("samples", "values must be positive"));
        }
        Ok(RateFunction::Tabulated { samples })
    }

    /// h(t) for t >= 0. The power law diverges at t = 0.
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            RateFunction::Power { c, q } => {
                if t <= 0.0 {
                    f64::INFINITY
                } else {
                    c / t.powf(*q)
                }
            }
            RateFunction::Exponential { c1, c2 } => c1 * (-c2 * t).exp(),
            RateFunction::Tabulated { samples } => {
                let last = samples.len() - 1;
                if t >= samples[last].0 {
                    let (t0, v0) = samples[last - 1];
                    let (t1, v1) = samples[last];
                    let rate = (v0 / v1).ln() / (t1 - t0);
                    return v1 * (-rate * (t - t1)).exp();
                }
                let i = samples.partition_point(|&(ti, _)| ti <= t).max(1) - 1;
                let (t0, v0) = samples[i];
                let (t1, v1) = samples[i + 1];
                v0 + (v1 - v0) * (t - t0) / (t1 - t0)
            }
        }
    }

    /// h(0): the top of the range (infinite for the power law).
    pub fn sup_value(&self) -> f64 {
        match self {
            RateFunction::Power { .. } => f64::INFINITY,
            RateFunction::Exponential { c1, .. } => *c1,
            RateFunction::Tabulated { samples } => samples[0].1,
        }
    }

    /// The inverse h^{-1}(y); `y` must lie in the range of h.
    pub fn inverse(&self, y: f64) -> Result<f64> {
        if !(y > 0.0) || !y.is_finite() {
            return Err(Error::RateOutOfRange { value: y });
        }
        match self {
            RateFunction::Power { c, q } => Ok((c / y).powf(1.0 / q)),
            RateFunction::Exponential { c1, c2 } => {
                if y > *c1 {
                    return Err(Error::RateOutOfRange { value: y });
                }
                Ok((c1 / y).ln() / c2)
            }
            RateFunction::Tabulated { samples } => {
                if y > samples[0].1 {
                    return Err(Error::RateOutOfRange { value: y });
                }
                let last = samples.len() - 1;
                if y < samples[last].1 {
                    let (t0, v0) = samples[last - 1];
                    let (t1, v1) = samples[last];
                    let rate = (v0 / v1).ln() / (t1 - t0);
                    return Ok(t1 + (v1 / y).ln() / rate);
                }
                // values descend; find the segment containing y
                let i = samples.partition_point(|&(_, v)| v > y).max(1) - 1;
                let (t0, v0) = samples[i];
                let (t1, v1) = samples[i + 1];
                if v0 == v1 {
                    return Ok(t0);
                }
                Ok(t0 + (t1 - t0) * (y - v0) / (v1 - v0))
            }
        }
    }
}

/// H^{-beta} norms of the transported datum along a time grid, with a
/// per-entry resolution flag (set when >10% of spectral mass sits above half
/// the Nyquist band).
#[derive(Clone, Debug, Serialize)]
pub struct MixingSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub resolution_flags: Vec<bool>,
}

pub fn mixing_series(
    flow: &VelocityField,
    f: &ScalarField,
    times: &[f64],
    beta: f64,
) -> Result<MixingSeries> {
    if !(beta > 0.0) {
        return Err(Error::param("beta", format!("order must be positive, got {beta}")));
    }
    f.ensure_mean_zero()?;
    let cut = f.grid().nyquist() / 2;
    let mut values = Vec::with_capacity(times.len());
    let mut flags = Vec::with_capacity(times.len());
    for &t in times {
        let g = transport_solve(flow, f, 0.0, t)?;
        values.push(sobolev_norm(&g, -beta)?);
        flags.push(g.spectral_mass_above(cut) > 0.10);
    }
    Ok(MixingSeries {
        times: times.to_vec(),
        values,
        resolution_flags: flags,
    })
}

/// Which closed-form family to fit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitLaw {
    Power,
    Exponential,
}

/// A fitted rate function with its goodness of fit (clamped to `[0,1]`).
#[derive(Clone, Debug, Serialize)]
pub struct FittedRate {
    pub rate: RateFunction,
    pub r_squared: f64,
}

/// Least squares in log space: log h against log t (power) or against t
/// (exponential). Requires at least 8 positive samples.
pub fn fit_rate(times: &[f64], values: &[f64], law: FitLaw) -> Result<FittedRate> {
    if times.len() != values.len() {
        return Err(Error::param("series", "times and values differ in length"));
    }
    let pairs: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|&(&t, _)| law == FitLaw::Exponential || t > 0.0)
        .map(|(&t, &v)| (t, v))
        .collect();
    if pairs.len() < 8 {
        return Err(Error::param("series", format!("need at least 8 usable samples, got {}", pairs.len())));
    }
    if pairs.iter().any(|&(_, v)| !(v > 0.0)) {
        return Err(Error::param("series", "all values must be positive"));
    }
    let xs: Vec<f64> = pairs
        .iter()
        .map(|&(t, _)| match law {
            FitLaw::Power => t.ln(),
            FitLaw::Exponential => t,
        })
        .collect();
    let ys: Vec<f64> = pairs.iter().map(|&(_, v)| v.ln()).collect();
    let (slope, intercept, r2) = linear_fit(&xs, &ys);
    let rate = match law {
        FitLaw::Power => RateFunction::power(intercept.exp(), -slope)?,
        FitLaw::Exponential => RateFunction::exponential(intercept.exp(), -slope)?,
    };
    Ok(FittedRate {
        rate,
        r_squared: r2.clamp(0.0, 1.0),
    })
}

/// Ordinary least squares; returns (slope, intercept, R^2).
pub(crate) fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res = syy - slope * sxy;
    let r2 = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    (slope, intercept, r2)
}

/// Sampling plan for the mixing-inequality checks.
#[derive(Clone, Debug)]
pub struct VerifyPlan {
    pub sample_count: usize,
    pub times: Vec<f64>,
    pub band: i64,
    pub seed: u64,
}

impl VerifyPlan {
    /// Sixteen times over [0, 10T] (T = switching period, or 1 for steady
    /// flows), band limit n/4, fixed seed.
    pub fn for_flow(flow: &VelocityField, grid_n: usize, sample_count: usize, seed: u64) -> VerifyPlan {
        let period = flow.period().unwrap_or(1.0);
        let horizon = 10.0 * period;
        let times = (0..=16).map(|i| horizon * i as f64 / 16.0).collect();
        VerifyPlan {
            sample_count,
            times,
            band: (grid_n as i64 / 4).max(1),
            seed,
        }
    }
}

/// Outcome of a strong or weak mixing verification.
#[derive(Clone, Debug, Serialize)]
pub struct MixingReport {
    pub alpha: f64,
    pub beta: f64,
    pub sample_count: usize,
    pub times: Vec<f64>,
    /// max over pairs of the per-time inequality ratio
    pub worst_per_time: Vec<f64>,
    pub worst_ratio: f64,
    pub passes: bool,
    /// resolution guard tripped on some transported sample
    pub inconclusive: bool,
}

/// Checks |<f o phi_{0,t}, g>| <= h(t) |f|_{H^alpha} |g|_{H^beta} over random
/// band-limited pairs; reports the worst ratio.
pub fn verify_strong(
    flow: &VelocityField,
    grid: crate::grid::Grid,
    h: &RateFunction,
    alpha: f64,
    beta: f64,
    plan: &VerifyPlan,
) -> Result<MixingReport> {
    verify_mixing(flow, grid, h, alpha, beta, plan, false)
}

/// Time-averaged version: ((1/t) \int_0^t |<f o phi_{0,r}, g>|^2 dr)^{1/2}
/// <= h(t) |f|_{H^alpha} |g|_{H^beta}, trapezoid quadrature in r over the
/// plan's time grid.
pub fn verify_weak(
    flow: &VelocityField,
    grid: crate::grid::Grid,
    h: &RateFunction,
    alpha: f64,
    beta: f64,
    plan: &VerifyPlan,
) -> Result<MixingReport> {
    verify_mixing(flow, grid, h, alpha, beta, plan, true)
}

fn verify_mixing(
    flow: &VelocityField,
    grid: crate::grid::Grid,
    h: &RateFunction,
    alpha: f64,
    beta: f64,
    plan: &VerifyPlan,
    weak: bool,
) -> Result<MixingReport> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::param("alpha", format!("order must lie in (0,1], got {alpha}")));
    }
    if !(beta > 0.0) {
        return Err(Error::param("beta", format!("order must be positive, got {beta}")));
    }
    if plan.times.len() < 2 || plan.sample_count == 0 {
        return Err(Error::param("plan", "need at least two times and one sample pair"));
    }
    let cut = grid.nyquist() / 2;
    let mut worst_per_time = vec![0.0f64; plan.times.len()];
    let mut inconclusive = false;
    for pair in 0..plan.sample_count {
        let f = ScalarField::random_band_limited(grid, plan.band, plan.seed + 2 * pair as u64, true)?;
        let g = ScalarField::random_band_limited(grid, plan.band, plan.seed + 2 * pair as u64 + 1, true)?;
        let fa = sobolev_norm(&f, alpha)?;
        let gb = sobolev_norm(&g, beta)?;
        let denom_scale = fa * gb;
        let mut ips = Vec::with_capacity(plan.times.len());
        for &t in &plan.times {
            let moved = transport_solve(flow, &f, 0.0, t)?;
            if moved.spectral_mass_above(cut) > 0.10 {
                inconclusive = true;
            }
            ips.push(moved.inner_product(&g).abs());
        }
        for (j, &t) in plan.times.iter().enumerate() {
            let lhs = if weak {
                if j == 0 {
                    continue;
                }
                // trapezoid average of ip^2 over [times[0], times[j]]
                let mut acc = 0.0;
                for w in 0..j {
                    let dt = plan.times[w + 1] - plan.times[w];
                    acc += 0.5 * dt * (ips[w] * ips[w] + ips[w + 1] * ips[w + 1]);
                }
                (acc / (t - plan.times[0])).sqrt()
            } else {
                ips[j]
            };
            let hv = h.eval(t);
            let ratio = if hv.is_infinite() { 0.0 } else { lhs / (hv * denom_scale) };
            if ratio > worst_per_time[j] {
                worst_per_time[j] = ratio;
            }
        }
    }
    let worst_ratio = worst_per_time.iter().copied().fold(0.0, f64::max);
    Ok(MixingReport {
        alpha,
        beta,
        sample_count: plan.sample_count,
        times: plan.times.clone(),
        worst_per_time,
        worst_ratio,
        passes: worst_ratio <= 1.0,
        inconclusive,
    })
}

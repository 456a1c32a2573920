//! Laplacian eigenvalue bookkeeping, homogeneous Sobolev norms, spectral
//! differentiation, low-mode projection and the Weyl counting constant.
//!
//! Convention fixed once for the whole crate: on `[0,1]^d` the eigenvalues of
//! -Laplace are 4 pi^2 |k|^2 over integer wave vectors k != 0, so
//! lambda_1 = 4 pi^2.

use rustfft::num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField};

use std::f64::consts::PI;

/// Principal eigenvalue of -Laplace on the unit torus.
pub const LAMBDA_1: f64 = 4.0 * PI * PI;

/// lambda = 4 pi^2 m with m = |k|^2.
fn lambda_of_m(m: i64) -> f64 {
    4.0 * PI * PI * m as f64
}

/// One representable spectral mode: a wave vector together with |k|^2.
#[derive(Clone, Copy, Debug)]
pub struct Mode {
    pub k: [i64; 2],
    pub m: i64,
}

impl Mode {
    pub fn lambda(&self) -> f64 {
        lambda_of_m(self.m)
    }
}

/// Sorted eigenvalue table of -Laplace for a grid.
///
/// Two enumerations live here. `modes` lists the grid-representable wave
/// vectors (FFT frequency cube), sorted by (|k|^2, k) with lexicographic
/// tie-breaking; this is the basis ordering used by [`project_low`]. The
/// distinct-eigenvalue counting list is enumerated over the closed symmetric
/// cube |k_i| <= n/2, which gives the exact lattice count N(lambda) for all
/// lambda up to 4 pi^2 (n/2)^2.
pub struct EigenTable {
    d: usize,
    modes: Vec<Mode>,
    /// (m = |k|^2, multiplicity, cumulative count), sorted by m.
    distinct: Vec<(i64, usize, usize)>,
}

impl EigenTable {
    pub fn new(grid: Grid) -> EigenTable {
        let n = grid.n() as i64;
        let kmax = n / 2;
        let d = grid.dim();

        let mut modes = Vec::with_capacity(grid.len() - 1);
        for idx in 0..grid.len() {
            let k = grid.wave_vector(idx);
            if k[0] == 0 && k[1] == 0 {
                continue;
            }
            modes.push(Mode {
                k,
                m: k[0] * k[0] + k[1] * k[1],
            });
        }
        modes.sort_by_key(|mode| (mode.m, mode.k[0], mode.k[1]));

        let mut counts = std::collections::BTreeMap::new();
        let k2_range = if d == 1 { 0..=0 } else { -kmax..=kmax };
        for k2 in k2_range {
            for k1 in -kmax..=kmax {
                if k1 == 0 && k2 == 0 {
                    continue;
                }
                *counts.entry(k1 * k1 + k2 * k2).or_insert(0usize) += 1;
            }
        }
        let mut distinct = Vec::with_capacity(counts.len());
        let mut cum = 0usize;
        for (m, mult) in counts {
            cum += mult;
            distinct.push((m, mult, cum));
        }

        EigenTable { d, modes, distinct }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Grid-representable modes sorted by (eigenvalue, lexicographic wave vector).
    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn lambda_1(&self) -> f64 {
        LAMBDA_1
    }

    /// Number of distinct eigenvalues in the table.
    pub fn distinct_len(&self) -> usize {
        self.distinct.len()
    }

    /// i-th distinct eigenvalue (0-based).
    pub fn distinct_lambda(&self, i: usize) -> f64 {
        lambda_of_m(self.distinct[i].0)
    }

    /// Counting function N(lambda) = #{ j : lambda_j <= lambda }, with multiplicity.
    ///
    /// Exact for lambda <= 4 pi^2 (n/2)^2; beyond that the enumeration cube
    /// clips the lattice ball and the count is a lower bound.
    pub fn counting(&self, lambda: f64) -> usize {
        let pos = self
            .distinct
            .partition_point(|&(m, _, _)| lambda_of_m(m) <= lambda);
        if pos == 0 {
            0
        } else {
            self.distinct[pos - 1].2
        }
    }

    /// Largest tabulated eigenvalue <= `bound`, if any.
    pub fn largest_at_most(&self, bound: f64) -> Option<f64> {
        let pos = self
            .distinct
            .partition_point(|&(m, _, _)| lambda_of_m(m) <= bound);
        if pos == 0 {
            None
        } else {
            Some(lambda_of_m(self.distinct[pos - 1].0))
        }
    }
}

/// Largest eigenvalue of -Laplace on the unit torus that is <= `bound`,
/// independent of any grid truncation. For d = 1 eigenvalues are 4 pi^2 j^2;
/// for d = 2 they are 4 pi^2 m with m a sum of two squares.
pub fn largest_torus_eigenvalue_at_most(d: usize, bound: f64) -> Option<f64> {
    if bound < LAMBDA_1 {
        return None;
    }
    let m_max = (bound / (4.0 * PI * PI)).floor() as i64;
    match d {
        1 => {
            let j = (m_max as f64).sqrt().floor() as i64;
            (j >= 1).then(|| lambda_of_m(j * j))
        }
        2 => {
            let mut m = m_max;
            while m >= 1 {
                if is_sum_of_two_squares(m) {
                    return Some(lambda_of_m(m));
                }
                m -= 1;
            }
            None
        }
        _ => None,
    }
}

fn is_sum_of_two_squares(m: i64) -> bool {
    let mut a = 0i64;
    while a * a * 2 <= m {
        let rest = m - a * a;
        let b = (rest as f64).sqrt().round() as i64;
        if b * b == rest {
            return true;
        }
        a += 1;
    }
    false
}

/// Homogeneous Sobolev norm of order alpha: (sum_k lambda_k^alpha |fhat_k|^2)^{1/2}.
///
/// Negative orders are allowed; the zero mode must vanish, so the field is
/// rejected if its mean exceeds the mean-zero tolerance.
pub fn sobolev_norm(f: &ScalarField, alpha: f64) -> Result<f64> {
    f.ensure_mean_zero()?;
    let grid = f.grid();
    let mut acc = 0.0;
    for (idx, c) in f.spectrum().iter().enumerate() {
        let k = grid.wave_vector(idx);
        let m = k[0] * k[0] + k[1] * k[1];
        if m == 0 {
            continue;
        }
        let e = c.norm_sqr();
        if e == 0.0 {
            continue;
        }
        acc += lambda_of_m(m).powf(alpha) * e;
    }
    Ok(acc.sqrt())
}

/// Projection onto the span of the first `nmodes` eigenfunctions in the
/// table's (eigenvalue, lexicographic wave vector) order.
///
/// Each wave vector pair {k, -k} carries one cosine and one sine
/// eigenfunction; the lexicographically larger representative carries the
/// cosine. Self-conjugate (Nyquist) vectors carry a single cosine mode. The
/// resulting operator is an orthogonal projection and keeps fields real.
pub fn project_low(f: &ScalarField, table: &EigenTable, nmodes: usize) -> Result<ScalarField> {
    if nmodes > table.modes().len() {
        return Err(Error::param(
            "nmodes",
            format!("{nmodes} exceeds the {} tabulated modes", table.modes().len()),
        ));
    }
    let grid = f.grid();
    let spec = f.spectrum();
    let mut out = vec![Complex64::new(0.0, 0.0); spec.len()];
    for mode in &table.modes()[..nmodes] {
        let idx = grid.spectrum_index(mode.k);
        let conj_idx = grid.spectrum_index([-mode.k[0], -mode.k[1]]);
        if idx == conj_idx {
            // self-conjugate Nyquist vector: single real (cosine) mode
            out[idx] = Complex64::new(spec[idx].re, 0.0);
            continue;
        }
        let rep = grid.wave_vector(idx);
        let partner = grid.wave_vector(conj_idx);
        let own_is_cos = (rep[0], rep[1]) > (partner[0], partner[1]);
        let (p, m) = if own_is_cos { (idx, conj_idx) } else { (conj_idx, idx) };
        let a = spec[p];
        if own_is_cos {
            out[p] += Complex64::new(a.re, 0.0);
            out[m] += Complex64::new(a.re, 0.0);
        } else {
            out[p] += Complex64::new(0.0, a.im);
            out[m] -= Complex64::new(0.0, a.im);
        }
    }
    Ok(ScalarField::from_spectrum(grid, out))
}

/// Spectral gradient: component i is the derivative along x_i. Nyquist
/// columns are zeroed to keep the derivative of a real field real.
pub fn gradient(f: &ScalarField) -> Vec<ScalarField> {
    let grid = f.grid();
    let n = grid.n() as i64;
    let spec = f.spectrum();
    let mut out = Vec::with_capacity(grid.dim());
    for axis in 0..grid.dim() {
        let mut g = vec![Complex64::new(0.0, 0.0); spec.len()];
        for (idx, c) in spec.iter().enumerate() {
            let k = grid.wave_vector(idx)[axis];
            if k == -n / 2 {
                continue;
            }
            g[idx] = Complex64::new(0.0, 2.0 * PI * k as f64) * c;
        }
        out.push(ScalarField::from_spectrum(grid, g));
    }
    out
}

/// (integral |grad f|^p dx)^{1/p} by grid quadrature; no domain check.
pub(crate) fn lp_norm_of_gradient(f: &ScalarField, p: f64) -> f64 {
    let comps = gradient(f);
    let len = f.grid().len();
    let mut acc = 0.0;
    for i in 0..len {
        let mut sq = 0.0;
        for c in &comps {
            let v = c.values()[i];
            sq += v * v;
        }
        acc += sq.sqrt().powf(p);
    }
    (acc / len as f64).powf(1.0 / p)
}

/// L^p norm of the gradient magnitude for p > 2 (the dissipation exponent range).
pub fn grad_lp_norm(f: &ScalarField, p: f64) -> Result<f64> {
    if !(p > 2.0) {
        return Err(Error::param("p", format!("exponent must exceed 2, got {p}")));
    }
    Ok(lp_norm_of_gradient(f, p))
}

/// Weyl constant c = (1+eps) Vol(T^d) / ((4 pi)^{d/2} Gamma(d/2+1)): the
/// asymptotic value of (1+eps) N(lambda) / lambda^{d/2}.
pub fn weyl_constant(d: usize, vol: f64, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::param("eps", format!("margin must be positive, got {eps}")));
    }
    if !(vol > 0.0) {
        return Err(Error::param("vol", format!("volume must be positive, got {vol}")));
    }
    // (4 pi)^{d/2} Gamma(d/2 + 1) = pi for d = 1, 4 pi for d = 2
    let denom = match d {
        1 => PI,
        2 => 4.0 * PI,
        _ => return Err(Error::param("d", format!("dimension must be 1 or 2, got {d}"))),
    };
    Ok((1.0 + eps) * vol / denom)
}

/// Empirical counting check N(lambda) <= c lambda^{d/2} over the tabulated
/// distinct eigenvalues starting at `start_index` (0-based).
#[derive(Clone, Debug, Serialize)]
pub struct WeylCheck {
    pub constant: f64,
    pub start_index: usize,
    pub max_ratio: f64,
    pub worst_lambda: f64,
    pub holds: bool,
    /// Smallest distinct index from which the bound holds for the whole tail.
    pub first_holding_index: usize,
}

pub fn weyl_counting_check(table: &EigenTable, eps: f64, start_index: usize) -> Result<WeylCheck> {
    let c = weyl_constant(table.dim(), 1.0, eps)?;
    let half = table.dim() as f64 / 2.0;
    let mut max_ratio = 0.0;
    let mut worst_lambda = 0.0;
    let mut last_violation: Option<usize> = None;
    for i in 0..table.distinct_len() {
        let lambda = table.distinct_lambda(i);
        let ratio = table.counting(lambda) as f64 / (c * lambda.powf(half));
        if ratio > 1.0 {
            last_violation = Some(i);
        }
        if i >= start_index && ratio > max_ratio {
            max_ratio = ratio;
            worst_lambda = lambda;
        }
    }
    Ok(WeylCheck {
        constant: c,
        start_index,
        max_ratio,
        worst_lambda,
        holds: max_ratio <= 1.0,
        first_holding_index: last_violation.map_or(0, |i| i + 1),
    })
}

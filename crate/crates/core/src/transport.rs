//! Semi-Lagrangian solution of the inviscid transport equation
//!
//!   d(phi)/dt + u . grad phi = 0,  phi(s) = f0,
//!
//! realized as f0 composed with the backward characteristic map. The map is
//! assembled piecewise over the flow's constant phases, chronologically:
//! later phases act on the already-transported field. Shear and translation
//! phases are applied as exact spectral shifts (unitary on the grid, no
//! interpolation loss); general steady fields fall back to RK4 tracing with
//! quintic Lagrange interpolation.

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::flows::{FlowMap, Phase, VelocityField};
use crate::grid::{fft_rows, Grid, ScalarField};

use std::f64::consts::PI;

const TWO_PI: f64 = 2.0 * PI;

/// Reusable buffers for repeated transport applications (one per solver).
pub(crate) struct TransportScratch {
    row: Vec<Complex64>,
    factors: Vec<Complex64>,
    flip: Vec<f64>,
}

impl TransportScratch {
    pub(crate) fn new(grid: Grid) -> TransportScratch {
        let n = grid.n();
        TransportScratch {
            row: vec![Complex64::default(); n],
            factors: vec![Complex64::default(); n],
            flip: vec![0.0; grid.len()],
        }
    }
}

/// Exact transport of phi_s(t) = f0 composed with the flow map.
///
/// `t == s` returns `f0` unchanged. The RK4 step of the general path is
/// chosen automatically; see [`transport_solve_with_step`] to override it.
pub fn transport_solve(flow: &VelocityField, f0: &ScalarField, s: f64, t: f64) -> Result<ScalarField> {
    transport_solve_with_step(flow, f0, s, t, default_trace_step(flow, t - s))
}

/// As [`transport_solve`] with an explicit RK4 trace step for the general path.
pub fn transport_solve_with_step(
    flow: &VelocityField,
    f0: &ScalarField,
    s: f64,
    t: f64,
    step: f64,
) -> Result<ScalarField> {
    if t < s {
        return Err(Error::param("t", format!("end time {t} precedes start time {s}")));
    }
    if t == s {
        return Ok(f0.clone());
    }
    let grid = f0.grid();
    if exact_path_available(flow, s, t) {
        let mut values = f0.values().to_vec();
        let mut scratch = TransportScratch::new(grid);
        apply_exact(flow, grid, &mut values, s, t, &mut scratch);
        return ScalarField::from_values(grid, values);
    }
    general_path(flow, f0, s, t, step)
}

pub(crate) fn default_trace_step(flow: &VelocityField, span: f64) -> f64 {
    let speed = flow.max_speed().max(1.0);
    let mut step = 2e-3 / speed;
    if let Some(period) = flow.period() {
        step = step.min(period / 16.0);
    }
    if span > 0.0 {
        step = step.min(span);
    }
    step
}

fn exact_path_available(flow: &VelocityField, s: f64, t: f64) -> bool {
    flow.phase_pieces(s, t)
        .iter()
        .all(|(_, _, phase)| !matches!(phase, Phase::General))
}

/// Whether transport over [s, t] reduces to exact spectral shifts.
pub(crate) fn exact_over(flow: &VelocityField, s: f64, t: f64) -> bool {
    exact_path_available(flow, s, t)
}

/// In-place transport over [s, t] when every phase admits a spectral shift.
pub(crate) fn apply_exact(
    flow: &VelocityField,
    grid: Grid,
    values: &mut [f64],
    s: f64,
    t: f64,
    scratch: &mut TransportScratch,
) {
    for (a, b, phase) in flow.phase_pieces(s, t) {
        let dur = b - a;
        match phase {
            Phase::Zero => {}
            Phase::Translation(v) => {
                shift_axis(grid, values, 0, |_| -v[0] * dur, scratch);
                if grid.dim() == 2 && v[1] != 0.0 {
                    shift_axis(grid, values, 1, |_| -v[1] * dur, scratch);
                }
            }
            Phase::SinShear { axis, amplitude } => {
                let n = grid.n() as f64;
                shift_axis(
                    grid,
                    values,
                    axis,
                    |transverse_idx| -amplitude * (TWO_PI * transverse_idx as f64 / n).sin() * dur,
                    scratch,
                );
            }
            Phase::General => unreachable!("exact path requires shiftable phases"),
        }
    }
}

/// Shifts the field along `axis` by a displacement that may depend on the
/// transverse index: out(x) = f(x + delta e_axis). Spectral, hence exact for
/// band-limited data and an L2 isometry up to the Nyquist column.
fn shift_axis(
    grid: Grid,
    values: &mut [f64],
    axis: usize,
    delta: impl Fn(usize) -> f64,
    scratch: &mut TransportScratch,
) {
    let n = grid.n();
    let TransportScratch { row, factors, flip } = scratch;
    if grid.dim() == 1 {
        shift_row(n, values, delta(0), row, factors);
        return;
    }
    if axis == 0 {
        for j in 0..n {
            shift_row(n, &mut values[j * n..(j + 1) * n], delta(j), row, factors);
        }
    } else {
        // columns: transpose, shift rows, transpose back
        for j in 0..n {
            for i in 0..n {
                flip[i * n + j] = values[j * n + i];
            }
        }
        for i in 0..n {
            shift_row(n, &mut flip[i * n..(i + 1) * n], delta(i), row, factors);
        }
        for j in 0..n {
            for i in 0..n {
                values[j * n + i] = flip[i * n + j];
            }
        }
    }
}

/// 1D spectral shift of a contiguous row: f(x) -> f(x + delta).
fn shift_row(n: usize, row: &mut [f64], delta: f64, buf: &mut [Complex64], factors: &mut [Complex64]) {
    if delta == 0.0 {
        return;
    }
    for (b, &v) in buf.iter_mut().zip(row.iter()) {
        *b = Complex64::new(v, 0.0);
    }
    fft_rows(n, buf, false);
    // factors e^{2 pi i k delta}; the self-conjugate Nyquist column gets the
    // real factor cos(pi n delta) to keep the shifted field real
    let w = Complex64::from_polar(1.0, TWO_PI * delta);
    factors[0] = Complex64::new(1.0, 0.0);
    for k in 1..n / 2 {
        factors[k] = factors[k - 1] * w;
    }
    factors[n / 2] = Complex64::new((PI * n as f64 * delta).cos(), 0.0);
    for i in n / 2 + 1..n {
        factors[i] = factors[n - i].conj();
    }
    for (b, f) in buf.iter_mut().zip(factors.iter()) {
        *b *= *f;
    }
    fft_rows(n, buf, true);
    let scale = 1.0 / n as f64;
    for (v, b) in row.iter_mut().zip(buf.iter()) {
        *v = b.re * scale;
    }
}

fn general_path(
    flow: &VelocityField,
    f0: &ScalarField,
    s: f64,
    t: f64,
    step: f64,
) -> Result<ScalarField> {
    let grid = f0.grid();
    let n = grid.n();
    if n < 6 {
        return Err(Error::param("grid", "quintic interpolation needs at least 6 points per axis"));
    }
    let map = FlowMap::new(*flow, step)?;
    let points: Vec<[f64; 2]> = (0..grid.len()).map(|idx| grid.point(idx)).collect();
    let traced = map.trace(s, t, &points)?;
    let src = f0.values();
    let mut out = Vec::with_capacity(grid.len());
    match grid.dim() {
        1 => {
            for p in &traced {
                out.push(interp1(src, n, p[0]));
            }
        }
        _ => {
            for p in &traced {
                out.push(interp2(src, n, p[0], p[1]));
            }
        }
    }
    ScalarField::from_values(grid, out)
}

/// Quintic Lagrange weights on the 6-point stencil {-2,..,3} at offset u in [0,1).
fn quintic_weights(u: f64) -> [f64; 6] {
    let mut w = [0.0; 6];
    for (m, wm) in w.iter_mut().enumerate() {
        let xm = m as f64 - 2.0;
        let mut prod = 1.0;
        for l in 0..6 {
            if l == m {
                continue;
            }
            let xl = l as f64 - 2.0;
            prod *= (u - xl) / (xm - xl);
        }
        *wm = prod;
    }
    w
}

fn interp1(src: &[f64], n: usize, x: f64) -> f64 {
    let xs = x.rem_euclid(1.0) * n as f64;
    let i0 = xs.floor() as isize;
    let w = quintic_weights(xs - i0 as f64);
    let mut acc = 0.0;
    for (m, wm) in w.iter().enumerate() {
        let i = (i0 + m as isize - 2).rem_euclid(n as isize) as usize;
        acc += wm * src[i];
    }
    acc
}

fn interp2(src: &[f64], n: usize, x: f64, y: f64) -> f64 {
    let xs = x.rem_euclid(1.0) * n as f64;
    let ys = y.rem_euclid(1.0) * n as f64;
    let i0 = xs.floor() as isize;
    let j0 = ys.floor() as isize;
    let wx = quintic_weights(xs - i0 as f64);
    let wy = quintic_weights(ys - j0 as f64);
    let mut acc = 0.0;
    for (mj, wj) in wy.iter().enumerate() {
        let j = (j0 + mj as isize - 2).rem_euclid(n as isize) as usize;
        let row = &src[j * n..(j + 1) * n];
        let mut rowacc = 0.0;
        for (mi, wi) in wx.iter().enumerate() {
            let i = (i0 + mi as isize - 2).rem_euclid(n as isize) as usize;
            rowacc += wi * row[i];
        }
        acc += wj * rowacc;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flows::FlowKind;
    use crate::spectral::sobolev_norm;

    #[test]
    fn identity_at_equal_times_is_bit_equal() {
        let grid = Grid::new(2, 32).unwrap();
        let f = ScalarField::random_band_limited(grid, 5, 2, true).unwrap();
        let u = VelocityField::new(2, FlowKind::Cellular { amplitude: 1.0 }).unwrap();
        let g = transport_solve(&u, &f, 0.5, 0.5).unwrap();
        assert_eq!(f.values(), g.values());
    }

    #[test]
    fn full_revolution_of_rigid_translation_is_identity() {
        let grid = Grid::new(2, 64).unwrap();
        let f = ScalarField::random_band_limited(grid, 8, 3, true).unwrap();
        let u = VelocityField::new(2, FlowKind::Translation { velocity: [1.0, 0.0] }).unwrap();
        let g = transport_solve(&u, &f, 0.0, 1.0).unwrap();
        let err = f
            .values()
            .iter()
            .zip(g.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-8, "revolution error {err}");
    }

    #[test]
    fn translation_shifts_a_sine_exactly() {
        let grid = Grid::new(1, 64).unwrap();
        let f = ScalarField::single_mode(grid, [1, 0], 0.0, 1.0).unwrap();
        let u = VelocityField::new(1, FlowKind::Translation { velocity: [0.25, 0.0] }).unwrap();
        // phi(x) = x - 0.25 t; at t=1: sin(2 pi (x - 0.25))
        let g = transport_solve(&u, &f, 0.0, 1.0).unwrap();
        for i in 0..64 {
            let x = i as f64 / 64.0;
            let expect = std::f64::consts::SQRT_2 * (TWO_PI * (x - 0.25)).sin();
            assert!((g.values()[i] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn shear_transport_preserves_l2_exactly() {
        let grid = Grid::new(2, 256).unwrap();
        let f = ScalarField::single_mode(grid, [1, 0], 0.0, 1.0).unwrap();
        let u = VelocityField::new(2, FlowKind::AlternatingShear { amplitude: 1.0, period: 1.0 }).unwrap();
        // ten switching periods
        let g = transport_solve(&u, &f, 0.0, 10.0).unwrap();
        let ratio = g.l2_norm() / f.l2_norm();
        assert!(
            (0.99..=1.0 + 1e-12).contains(&ratio),
            "transport isometry ratio {ratio}"
        );
    }

    #[test]
    fn shear_matches_pointwise_composition() {
        let grid = Grid::new(2, 128).unwrap();
        let f = ScalarField::single_mode(grid, [1, 0], 0.3, 0.8).unwrap();
        let amplitude = 1.0;
        let u = VelocityField::new(2, FlowKind::AlternatingShear { amplitude, period: 1.0 }).unwrap();
        let tau = 0.3; // inside the first phase
        let g = transport_solve(&u, &f, 0.0, tau).unwrap();
        let n = 128;
        for j in (0..n).step_by(7) {
            for i in (0..n).step_by(7) {
                let x1 = i as f64 / n as f64;
                let x2 = j as f64 / n as f64;
                let src = x1 - amplitude * (TWO_PI * x2).sin() * tau;
                let ph = TWO_PI * src;
                let expect = std::f64::consts::SQRT_2 * (0.3 * ph.cos() + 0.8 * ph.sin());
                let got = g.values()[j * n + i];
                assert!((got - expect).abs() < 1e-10, "at ({i},{j}): {got} vs {expect}");
            }
        }
    }

    #[test]
    fn cellular_transport_conserves_l2_within_interpolation_tolerance() {
        let grid = Grid::new(2, 128).unwrap();
        let f = ScalarField::random_band_limited(grid, 4, 11, true).unwrap();
        let u = VelocityField::new(2, FlowKind::Cellular { amplitude: 1.0 }).unwrap();
        let g = transport_solve(&u, &f, 0.0, 1.0).unwrap();
        let ratio = g.l2_norm() / f.l2_norm();
        assert!((0.99..=1.0 + 1e-9).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn transport_rejects_reversed_times() {
        let grid = Grid::new(1, 16).unwrap();
        let f = ScalarField::single_mode(grid, [1, 0], 1.0, 0.0).unwrap();
        let u = VelocityField::zero(1);
        assert!(transport_solve(&u, &f, 1.0, 0.0).is_err());
    }

    #[test]
    fn zero_flow_keeps_negative_norms_constant() {
        let grid = Grid::new(2, 64).unwrap();
        let f = ScalarField::random_band_limited(grid, 6, 4, true).unwrap();
        let u = VelocityField::zero(2);
        let base = sobolev_norm(&f, -1.0).unwrap();
        for t in [0.5, 1.0, 5.0] {
            let g = transport_solve(&u, &f, 0.0, t).unwrap();
            assert!((sobolev_norm(&g, -1.0).unwrap() - base).abs() < 1e-14);
        }
    }
}

//! Incompressible velocity fields on the torus and the particle flow map
//! integrating d(phi)/dt = -u(t, phi), phi(s) = x.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use std::f64::consts::PI;

const TWO_PI: f64 = 2.0 * PI;

/// The velocity-field zoo. All kinds are divergence free and 1-periodic.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FlowKind {
    /// u = 0.
    Zero,
    /// Constant velocity; integrates exactly.
    Translation { velocity: [f64; 2] },
    /// u = (U sin(2 pi x2), 0).
    SteadyShear { amplitude: f64 },
    /// (U sin(2 pi x2), 0) on [kT, kT+T/2), (0, U sin(2 pi x1)) on [kT+T/2, (k+1)T).
    AlternatingShear { amplitude: f64, period: f64 },
    /// Stream function (U / 2 pi) sin(2 pi x1) sin(2 pi x2).
    Cellular { amplitude: f64 },
}

/// A velocity field together with its spatial dimension.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VelocityField {
    d: usize,
    #[serde(flatten)]
    kind: FlowKind,
}

/// What the field looks like on a maximal time interval of constancy.
/// Shear and translation phases admit exact transport by spectral shifts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Phase {
    Zero,
    Translation([f64; 2]),
    /// Motion along `axis` with profile amplitude * sin(2 pi x_transverse).
    SinShear { axis: usize, amplitude: f64 },
    General,
}

impl VelocityField {
    pub fn new(d: usize, kind: FlowKind) -> Result<VelocityField> {
        if d != 1 && d != 2 {
            return Err(Error::param("d", format!("dimension must be 1 or 2, got {d}")));
        }
        match kind {
            FlowKind::Zero => {}
            FlowKind::Translation { velocity } => {
                if d == 1 && velocity[1] != 0.0 {
                    return Err(Error::param("velocity", "second component must vanish when d = 1"));
                }
            }
            FlowKind::SteadyShear { .. } | FlowKind::Cellular { .. } => {
                if d != 2 {
                    return Err(Error::param("kind", "shear and cellular flows require d = 2"));
                }
            }
            FlowKind::AlternatingShear { period, .. } => {
                if d != 2 {
                    return Err(Error::param("kind", "shear flows require d = 2"));
                }
                if !(period > 0.0) {
                    return Err(Error::param("period", format!("switching period must be positive, got {period}")));
                }
            }
        }
        Ok(VelocityField { d, kind })
    }

    pub fn zero(d: usize) -> VelocityField {
        VelocityField { d, kind: FlowKind::Zero }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn kind(&self) -> FlowKind {
        self.kind
    }

    /// Time period of the switching pattern, if the field is time dependent.
    pub fn period(&self) -> Option<f64> {
        match self.kind {
            FlowKind::AlternatingShear { period, .. } => Some(period),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, FlowKind::Zero)
    }

    /// u(t, x); coordinates are wrapped into `[0,1)^d`.
    pub fn evaluate(&self, t: f64, x: [f64; 2]) -> [f64; 2] {
        self.eval_phase(self.phase_at(t).0, x)
    }

    /// Velocity of a frozen phase (pieces are half-open in time, so stepping
    /// across a switch must not re-resolve the phase at the endpoint).
    pub(crate) fn eval_phase(&self, phase: Phase, x: [f64; 2]) -> [f64; 2] {
        let x = [x[0].rem_euclid(1.0), x[1].rem_euclid(1.0)];
        match phase {
            Phase::Zero => [0.0, 0.0],
            Phase::Translation(v) => v,
            Phase::SinShear { axis, amplitude } => {
                let transverse = x[1 - axis];
                let mut u = [0.0, 0.0];
                u[axis] = amplitude * (TWO_PI * transverse).sin();
                u
            }
            Phase::General => match self.kind {
                FlowKind::Cellular { amplitude } => [
                    amplitude * (TWO_PI * x[0]).sin() * (TWO_PI * x[1]).cos(),
                    -amplitude * (TWO_PI * x[0]).cos() * (TWO_PI * x[1]).sin(),
                ],
                _ => unreachable!("general phase only arises for cellular flows"),
            },
        }
    }

    /// Velocity gradient entries `grad[i][j] = d u_i / d x_j`.
    pub fn velocity_gradient(&self, t: f64, x: [f64; 2]) -> [[f64; 2]; 2] {
        let x = [x[0].rem_euclid(1.0), x[1].rem_euclid(1.0)];
        match self.phase_at(t).0 {
            Phase::Zero | Phase::Translation(_) => [[0.0; 2]; 2],
            Phase::SinShear { axis, amplitude } => {
                let transverse = x[1 - axis];
                let mut g = [[0.0; 2]; 2];
                g[axis][1 - axis] = TWO_PI * amplitude * (TWO_PI * transverse).cos();
                g
            }
            Phase::General => match self.kind {
                FlowKind::Cellular { amplitude } => {
                    let (s1, c1) = (TWO_PI * x[0]).sin_cos();
                    let (s2, c2) = (TWO_PI * x[1]).sin_cos();
                    let a = TWO_PI * amplitude;
                    [[a * c1 * c2, -a * s1 * s2], [a * s1 * s2, -a * c1 * c2]]
                }
                _ => unreachable!(),
            },
        }
    }

    pub fn divergence(&self, t: f64, x: [f64; 2]) -> f64 {
        let g = self.velocity_gradient(t, x);
        g[0][0] + g[1][1]
    }

    /// Essential sup over space and time of the max-abs entry of grad u
    /// (closed form per kind).
    pub fn grad_sup_norm(&self) -> f64 {
        match self.kind {
            FlowKind::Zero | FlowKind::Translation { .. } => 0.0,
            FlowKind::SteadyShear { amplitude }
            | FlowKind::AlternatingShear { amplitude, .. }
            | FlowKind::Cellular { amplitude } => TWO_PI * amplitude.abs(),
        }
    }

    /// As [`VelocityField::grad_sup_norm`], but rejects flows with vanishing gradient,
    /// for bounds that divide by the sup norm.
    pub fn positive_grad_sup_norm(&self) -> Result<f64> {
        let g = self.grad_sup_norm();
        if g > 0.0 {
            Ok(g)
        } else {
            Err(Error::ZeroGradientFlow)
        }
    }

    /// Sup of |u| over space and time.
    pub fn max_speed(&self) -> f64 {
        match self.kind {
            FlowKind::Zero => 0.0,
            FlowKind::Translation { velocity } => (velocity[0].powi(2) + velocity[1].powi(2)).sqrt(),
            FlowKind::SteadyShear { amplitude }
            | FlowKind::AlternatingShear { amplitude, .. }
            | FlowKind::Cellular { amplitude } => amplitude.abs(),
        }
    }

    /// The active phase at time t and the next switching time (infinity for
    /// steady kinds).
    pub(crate) fn phase_at(&self, t: f64) -> (Phase, f64) {
        match self.kind {
            FlowKind::Zero => (Phase::Zero, f64::INFINITY),
            FlowKind::Translation { velocity } => (Phase::Translation(velocity), f64::INFINITY),
            FlowKind::SteadyShear { amplitude } => {
                (Phase::SinShear { axis: 0, amplitude }, f64::INFINITY)
            }
            FlowKind::Cellular { .. } => (Phase::General, f64::INFINITY),
            FlowKind::AlternatingShear { amplitude, period } => {
                let half = period / 2.0;
                // nudge off the boundary so that t = k*half lands in interval k
                let k = ((t + half * 1e-12) / half).floor();
                let axis = if (k as i64).rem_euclid(2) == 0 { 0 } else { 1 };
                (Phase::SinShear { axis, amplitude }, (k + 1.0) * half)
            }
        }
    }

    /// Chronological decomposition of [s, t] into maximal constant phases.
    pub(crate) fn phase_pieces(&self, s: f64, t: f64) -> Vec<(f64, f64, Phase)> {
        let mut out = Vec::new();
        let mut a = s;
        let span = (t - s).max(0.0);
        while a < t {
            let (phase, switch) = self.phase_at(a);
            let mut b = switch.min(t);
            // swallow slivers produced by accumulated rounding
            if t - b < span * 1e-12 {
                b = t;
            }
            if b > a {
                out.push((a, b, phase));
            }
            if b >= t {
                break;
            }
            a = b;
        }
        out
    }
}

/// Particle tracer for the map phi_{s,t} defined by d(phi)/dt = -u(t, phi).
#[derive(Clone, Copy, Debug)]
pub struct FlowMap {
    flow: VelocityField,
    step: f64,
}

impl FlowMap {
    /// `step` is the nominal RK4 step; for alternating flows it must resolve
    /// the switching, step <= T/8.
    pub fn new(flow: VelocityField, step: f64) -> Result<FlowMap> {
        if !(step > 0.0) {
            return Err(Error::param("step", format!("step must be positive, got {step}")));
        }
        if let Some(period) = flow.period() {
            if step > period / 8.0 {
                return Err(Error::param(
                    "step",
                    format!("step {step} must not exceed T/8 = {} for switching flows", period / 8.0),
                ));
            }
        }
        Ok(FlowMap { flow, step })
    }

    pub fn flow(&self) -> &VelocityField {
        &self.flow
    }

    /// Advances points from time s to time t >= s under the -u dynamics with
    /// a classical fixed-step RK4 scheme, splitting at phase switches.
    /// Positions are wrapped into `[0,1)^d`.
    pub fn trace(&self, s: f64, t: f64, points: &[[f64; 2]]) -> Result<Vec<[f64; 2]>> {
        if t < s {
            return Err(Error::param("t", format!("end time {t} precedes start time {s}")));
        }
        let mut pts: Vec<[f64; 2]> = points.to_vec();
        for (a, b, phase) in self.flow.phase_pieces(s, t) {
            let len = b - a;
            let nsteps = (len / self.step).ceil().max(1.0) as usize;
            let h = len / nsteps as f64;
            for p in &mut pts {
                let mut y = *p;
                for _ in 0..nsteps {
                    y = self.rk4_step(phase, y, h);
                }
                *p = [y[0].rem_euclid(1.0), y[1].rem_euclid(1.0)];
            }
        }
        Ok(pts)
    }

    fn rk4_step(&self, phase: Phase, y: [f64; 2], h: f64) -> [f64; 2] {
        let f = |yy: [f64; 2]| -> [f64; 2] {
            let u = self.flow.eval_phase(phase, yy);
            [-u[0], -u[1]]
        };
        let k1 = f(y);
        let k2 = f([y[0] + h / 2.0 * k1[0], y[1] + h / 2.0 * k1[1]]);
        let k3 = f([y[0] + h / 2.0 * k2[0], y[1] + h / 2.0 * k2[1]]);
        let k4 = f([y[0] + h * k3[0], y[1] + h * k3[1]]);
        [
            y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ]
    }
}

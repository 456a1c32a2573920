//! Periodic grid and mean-zero scalar fields with cached Fourier spectra.
//!
//! The domain is the unit torus `[0,1]^d` with d = 1 or 2. Discrete L2 inner
//! products carry the quadrature weight 1/n^d, so `l2_norm` approximates the
//! continuum norm and Parseval holds against the normalized spectrum.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the mean of a field (mean-zero class).
pub const MEAN_ZERO_TOL: f64 = 1e-12;

/// Uniform periodic grid on `[0,1]^d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    d: usize,
    n: usize,
}

impl Grid {
    /// `d` must be 1 or 2; `n` a power of two with n >= 8.
    pub fn new(d: usize, n: usize) -> Result<Grid> {
        if d != 1 && d != 2 {
            return Err(Error::param("d", format!("dimension must be 1 or 2, got {d}")));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::param(
                "n",
                format!("points per dimension must be a power of two >= 8, got {n}"),
            ));
        }
        Ok(Grid { d, n })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Total number of grid points, n^d.
    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Grid spacing 1/n.
    pub fn spacing(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Largest representable wavenumber magnitude per axis (Nyquist), n/2.
    pub fn nyquist(&self) -> i64 {
        (self.n / 2) as i64
    }

    /// Coordinates of the grid point with flat index `idx` (x2 = 0 when d = 1).
    pub fn point(&self, idx: usize) -> [f64; 2] {
        let n = self.n;
        match self.d {
            1 => [idx as f64 / n as f64, 0.0],
            _ => [(idx % n) as f64 / n as f64, (idx / n) as f64 / n as f64],
        }
    }

    /// Signed frequency of axis index `i` under the FFT layout: 0..n/2-1, -n/2..-1.
    pub fn freq(&self, i: usize) -> i64 {
        freq_of_index(self.n, i)
    }

    /// Flat spectrum index of the wave vector `k` (components wrapped mod n).
    pub fn spectrum_index(&self, k: [i64; 2]) -> usize {
        let n = self.n as i64;
        let i = k[0].rem_euclid(n) as usize;
        match self.d {
            1 => i,
            _ => k[1].rem_euclid(n) as usize * self.n + i,
        }
    }

    /// Wave vector of the flat spectrum index (k2 = 0 when d = 1).
    pub fn wave_vector(&self, idx: usize) -> [i64; 2] {
        match self.d {
            1 => [freq_of_index(self.n, idx), 0],
            _ => [
                freq_of_index(self.n, idx % self.n),
                freq_of_index(self.n, idx / self.n),
            ],
        }
    }
}

pub(crate) fn freq_of_index(n: usize, i: usize) -> i64 {
    if i < n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

type PlanCache = Mutex<HashMap<(usize, bool), Arc<dyn Fft<f64>>>>;

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    static CACHE: OnceLock<PlanCache> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().unwrap();
    map.entry((n, inverse))
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            if inverse {
                planner.plan_fft_inverse(n)
            } else {
                planner.plan_fft_forward(n)
            }
        })
        .clone()
}

/// In-place FFT of every contiguous row of an n x n buffer.
pub(crate) fn fft_rows(n: usize, data: &mut [Complex64], inverse: bool) {
    let fft = plan(n, inverse);
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    for row in data.chunks_exact_mut(n) {
        fft.process_with_scratch(row, &mut scratch);
    }
}

pub(crate) fn transpose(n: usize, data: &[Complex64], out: &mut [Complex64]) {
    for j in 0..n {
        for i in 0..n {
            out[i * n + j] = data[j * n + i];
        }
    }
}

/// Forward transform normalized by 1/n^d, so coefficients match the continuum
/// convention f(x) = sum_k fhat_k e^{2 pi i k.x}.
pub(crate) fn forward_transform(grid: Grid, values: &[f64]) -> Vec<Complex64> {
    let n = grid.n();
    let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    match grid.dim() {
        1 => {
            let fft = plan(n, false);
            fft.process(&mut buf);
        }
        _ => {
            fft_rows(n, &mut buf, false);
            let mut t = vec![Complex64::default(); buf.len()];
            transpose(n, &buf, &mut t);
            fft_rows(n, &mut t, false);
            transpose(n, &t, &mut buf);
        }
    }
    let scale = 1.0 / grid.len() as f64;
    for v in &mut buf {
        *v *= scale;
    }
    buf
}

/// Inverse of [`forward_transform`]; returns the real part.
pub(crate) fn inverse_transform(grid: Grid, mut spectrum: Vec<Complex64>) -> Vec<f64> {
    let n = grid.n();
    match grid.dim() {
        1 => {
            let fft = plan(n, true);
            fft.process(&mut spectrum);
        }
        _ => {
            fft_rows(n, &mut spectrum, true);
            let mut t = vec![Complex64::default(); spectrum.len()];
            transpose(n, &spectrum, &mut t);
            fft_rows(n, &mut t, true);
            transpose(n, &t, &mut spectrum);
        }
    }
    spectrum.iter().map(|c| c.re).collect()
}

/// Mean-zero real scalar field on a periodic grid with a lazily cached spectrum.
///
/// Fields are immutable after construction and safe to share across threads.
#[derive(Debug)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
    spectrum: OnceLock<Vec<Complex64>>,
}

impl Clone for ScalarField {
    fn clone(&self) -> Self {
        let spectrum = OnceLock::new();
        if let Some(s) = self.spectrum.get() {
            let _ = spectrum.set(s.clone());
        }
        ScalarField {
            grid: self.grid,
            values: self.values.clone(),
            spectrum,
        }
    }
}

impl ScalarField {
    /// Builds a field from point samples, re-centering to mean zero.
    pub fn from_values(grid: Grid, mut values: Vec<f64>) -> Result<ScalarField> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        if mean != 0.0 {
            for v in &mut values {
                *v -= mean;
            }
        }
        Ok(ScalarField {
            grid,
            values,
            spectrum: OnceLock::new(),
        })
    }

    /// Samples without re-centering; for exercising the mean-zero rejection paths.
    #[cfg(test)]
    pub(crate) fn from_values_raw(grid: Grid, values: Vec<f64>) -> ScalarField {
        ScalarField {
            grid,
            values,
            spectrum: OnceLock::new(),
        }
    }

    /// Builds a field from a Hermitian-symmetric spectrum (zero mode is cleared).
    pub(crate) fn from_spectrum(grid: Grid, mut spectrum: Vec<Complex64>) -> ScalarField {
        debug_assert_eq!(spectrum.len(), grid.len());
        spectrum[0] = Complex64::new(0.0, 0.0);
        let values = inverse_transform(grid, spectrum.clone());
        let field = ScalarField {
            grid,
            values,
            spectrum: OnceLock::new(),
        };
        let _ = field.spectrum.set(spectrum);
        field
    }

    pub fn zero(grid: Grid) -> ScalarField {
        ScalarField {
            grid,
            values: vec![0.0; grid.len()],
            spectrum: OnceLock::new(),
        }
    }

    /// cos_amp * sqrt(2) cos(2 pi k.x) + sin_amp * sqrt(2) sin(2 pi k.x);
    /// each basis function has unit L2 norm.
    pub fn single_mode(grid: Grid, k: [i64; 2], cos_amp: f64, sin_amp: f64) -> Result<ScalarField> {
        if k[0] == 0 && k[1] == 0 {
            return Err(Error::param("k", "zero wave vector is not in the mean-zero class"));
        }
        if k[0].abs() > grid.nyquist() || k[1].abs() > grid.nyquist() || (grid.dim() == 1 && k[1] != 0) {
            return Err(Error::param("k", format!("wave vector {k:?} not representable on the grid")));
        }
        let sq2 = std::f64::consts::SQRT_2;
        let mut values = Vec::with_capacity(grid.len());
        for idx in 0..grid.len() {
            let x = grid.point(idx);
            let phase = 2.0 * std::f64::consts::PI * (k[0] as f64 * x[0] + k[1] as f64 * x[1]);
            values.push(sq2 * (cos_amp * phase.cos() + sin_amp * phase.sin()));
        }
        ScalarField::from_values(grid, values)
    }

    /// Random band-limited field: independent N(0,1) amplitudes on every
    /// cos/sin eigenfunction with 0 < |k|_inf <= band, optionally normalized
    /// to unit L2 norm. Deterministic in `seed`.
    pub fn random_band_limited(grid: Grid, band: i64, seed: u64, normalize: bool) -> Result<ScalarField> {
        if band < 1 || band >= grid.nyquist() {
            return Err(Error::param(
                "band",
                format!("band limit must be in [1, {}), got {band}", grid.nyquist()),
            ));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut spectrum = vec![Complex64::new(0.0, 0.0); grid.len()];
        let mut sum_sq = 0.0;
        let kmax2 = if grid.dim() == 1 { 0 } else { band };
        for k2 in -kmax2..=kmax2 {
            for k1 in -band..=band {
                let k = [k1, k2];
                if !lex_positive(k) {
                    continue;
                }
                let c: f64 = StandardNormal.sample(&mut rng);
                let s: f64 = StandardNormal.sample(&mut rng);
                sum_sq += c * c + s * s;
                // sqrt(2) cos -> (c/sqrt2) at +-k; sqrt(2) sin -> -i s/sqrt2 at +k, conj at -k
                let half = Complex64::new(c, -s) / std::f64::consts::SQRT_2;
                let plus = grid.spectrum_index(k);
                let minus = grid.spectrum_index([-k1, -k2]);
                spectrum[plus] += half;
                spectrum[minus] += half.conj();
            }
        }
        let mut field = ScalarField::from_spectrum(grid, spectrum);
        if normalize && sum_sq > 0.0 {
            let norm = field.l2_norm();
            field = field.scaled(1.0 / norm);
        }
        Ok(field)
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Fourier coefficients under f = sum_k fhat_k e^{2 pi i k.x} (lazily computed).
    pub fn spectrum(&self) -> &[Complex64] {
        self.spectrum
            .get_or_init(|| forward_transform(self.grid, &self.values))
    }

    /// Coefficient of the wave vector `k`.
    pub fn coefficient(&self, k: [i64; 2]) -> Complex64 {
        self.spectrum()[self.grid.spectrum_index(k)]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub(crate) fn ensure_mean_zero(&self) -> Result<()> {
        let mean = self.mean();
        if mean.abs() > MEAN_ZERO_TOL {
            return Err(Error::NotMeanZero {
                mean,
                tol: MEAN_ZERO_TOL,
            });
        }
        Ok(())
    }

    /// Quadrature L2 norm, (1/n^d sum v_i^2)^{1/2}.
    pub fn l2_norm(&self) -> f64 {
        let s: f64 = self.values.iter().map(|v| v * v).sum();
        (s / self.values.len() as f64).sqrt()
    }

    /// L2 distance to another field on the same grid.
    pub fn l2_distance(&self, other: &ScalarField) -> f64 {
        assert_eq!(self.grid, other.grid, "fields on different grids");
        let s: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        (s / self.values.len() as f64).sqrt()
    }

    /// Inner product <f, g> = 1/n^d sum f_i g_i.
    pub fn inner_product(&self, other: &ScalarField) -> f64 {
        assert_eq!(self.grid, other.grid, "fields on different grids");
        let s: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        s / self.values.len() as f64
    }

    pub fn scaled(&self, factor: f64) -> ScalarField {
        let values = self.values.iter().map(|v| v * factor).collect();
        ScalarField::from_values(self.grid, values).expect("same grid")
    }

    pub fn add_scaled(&self, other: &ScalarField, factor: f64) -> ScalarField {
        assert_eq!(self.grid, other.grid, "fields on different grids");
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + factor * b)
            .collect();
        ScalarField::from_values(self.grid, values).expect("same grid")
    }

    /// Fraction of spectral energy carried by modes with |k|_inf > cut.
    pub fn spectral_mass_above(&self, cut: i64) -> f64 {
        let spec = self.spectrum();
        let mut hi = 0.0;
        let mut total = 0.0;
        for (idx, c) in spec.iter().enumerate() {
            let k = self.grid.wave_vector(idx);
            if k[0] == 0 && k[1] == 0 {
                continue;
            }
            let e = c.norm_sqr();
            total += e;
            if k[0].abs().max(k[1].abs()) > cut {
                hi += e;
            }
        }
        if total == 0.0 {
            0.0
        } else {
            hi / total
        }
    }
}

/// First nonzero component positive: picks one representative per {k, -k} pair.
pub(crate) fn lex_positive(k: [i64; 2]) -> bool {
    if k[0] != 0 {
        k[0] > 0
    } else {
        k[1] > 0
    }
}

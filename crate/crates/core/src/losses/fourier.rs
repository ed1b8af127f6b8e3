use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Points per axis of the reconstruction test grid.
const TEST_GRID: usize = 201;
/// Minimum number of samples per period for the coefficient quadrature.
const MIN_SAMPLES: usize = 8192;
/// Tail slope of `log A_h` against `log h` above which `Σ A_h` is flagged.
const DIVERGENCE_SLOPE: f64 = -1.05;

/// Truncated Fourier embedding of a translation-invariant loss
/// `Δ(z, y) = v(z − y)` on the box `[−B, B]`.
///
/// `v` is expanded as a `P`-periodic series
/// `v(u) ≈ a₀ + Σ_h a_h cos(ω_h u) + b_h sin(ω_h u)` with `ω_h = 2πh/P`. With
/// `A_h = √(a_h² + b_h²)` and `S² = |a₀| + Σ A_h`,
///
/// ```text
/// φ_h(y) = √A_h (cos ω_h y, sin ω_h y) / S
/// ψ_h(z) = S / √A_h (a_h cos ω_h z + b_h sin ω_h z, a_h sin ω_h z − b_h cos ω_h z)
/// ```
///
/// so `‖φ‖ = 1` and `‖ψ‖ = S² = |a₀| + Σ A_h`, the discrete analogue of
/// `∫|v̂(ω)| dω`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FourierEmbedding {
    period: f64,
    half_width: f64,
    truncation: usize,
    constant: f64,
    cos_coeffs: Vec<f64>,
    sin_coeffs: Vec<f64>,
    /// Harmonics with nonzero amplitude, in increasing order.
    active: Vec<usize>,
    scale: f64,
    closs_estimate: f64,
    reconstruction_error: f64,
    divergence_warning: bool,
}

/// Fourier embedding of `v` from a dense trapezoidal quadrature over one period.
pub fn fourier_embedding(
    profile: impl Fn(f64) -> f64,
    period: f64,
    half_width: f64,
    truncation: usize,
) -> Result<FourierEmbedding> {
    validate(period, half_width, truncation)?;
    let samples = MIN_SAMPLES.max(8 * truncation);
    let values: Vec<(f64, f64)> = (0..samples)
        .map(|k| {
            let u = -0.5 * period + period * k as f64 / samples as f64;
            (u, profile(u))
        })
        .collect();
    if let Some((u, v)) = values.iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::Numeric(format!("profile is {v} at u = {u}")));
    }
    let constant = values.iter().map(|(_, v)| v).sum::<f64>() / samples as f64;
    let mut cos_coeffs = Vec::with_capacity(truncation);
    let mut sin_coeffs = Vec::with_capacity(truncation);
    for h in 1..=truncation {
        let w = std::f64::consts::TAU * h as f64 / period;
        let (mut a, mut b) = (0.0, 0.0);
        for &(u, v) in &values {
            let (s, c) = (w * u).sin_cos();
            a += v * c;
            b += v * s;
        }
        cos_coeffs.push(2.0 * a / samples as f64);
        sin_coeffs.push(2.0 * b / samples as f64);
    }
    FourierEmbedding::from_coefficients(constant, cos_coeffs, sin_coeffs, period, half_width, profile)
}

fn validate(period: f64, half_width: f64, truncation: usize) -> Result<()> {
    if !(period > 0.0 && period.is_finite()) {
        return Err(Error::Parameter(format!("period must be positive, got {period}")));
    }
    if !(half_width > 0.0 && half_width.is_finite()) {
        return Err(Error::Parameter(format!("box half-width must be positive, got {half_width}")));
    }
    if truncation == 0 {
        return Err(Error::Parameter("truncation must be at least 1".into()));
    }
    Ok(())
}

impl FourierEmbedding {
    /// Builds the embedding from known series coefficients; `profile` is only
    /// used to measure the reconstruction error.
    pub fn from_coefficients(
        constant: f64,
        cos_coeffs: Vec<f64>,
        sin_coeffs: Vec<f64>,
        period: f64,
        half_width: f64,
        profile: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        validate(period, half_width, cos_coeffs.len())?;
        if cos_coeffs.len() != sin_coeffs.len() {
            return Err(Error::Input("cosine and sine coefficient counts differ".into()));
        }
        if !constant.is_finite() || cos_coeffs.iter().chain(&sin_coeffs).any(|c| !c.is_finite()) {
            return Err(Error::Numeric("non-finite Fourier coefficient".into()));
        }
        let amplitudes: Vec<f64> = cos_coeffs.iter().zip(&sin_coeffs).map(|(a, b)| a.hypot(*b)).collect();
        let active: Vec<usize> = (0..amplitudes.len()).filter(|&h| amplitudes[h] > 0.0).collect();
        let closs_estimate = constant.abs() + amplitudes.iter().sum::<f64>();
        let mut emb = FourierEmbedding {
            period,
            half_width,
            truncation: cos_coeffs.len(),
            constant,
            cos_coeffs,
            sin_coeffs,
            active,
            scale: closs_estimate.sqrt(),
            closs_estimate,
            reconstruction_error: 0.0,
            divergence_warning: tail_diverges(&amplitudes, closs_estimate),
        };
        emb.reconstruction_error = emb.measure_error(profile);
        Ok(emb)
    }

    fn dim(&self) -> usize {
        if self.scale == 0.0 {
            0
        } else {
            1 + 2 * self.active.len()
        }
    }

    fn frequency(&self, h: usize) -> f64 {
        std::f64::consts::TAU * (h + 1) as f64 / self.period
    }

    pub fn psi(&self, z: f64) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        if self.scale == 0.0 {
            return out;
        }
        let s = self.scale;
        out[0] = s * self.constant.signum() * self.constant.abs().sqrt();
        for (k, &h) in self.active.iter().enumerate() {
            let (a, b) = (self.cos_coeffs[h], self.sin_coeffs[h]);
            let amp = a.hypot(b);
            let (sn, cs) = (self.frequency(h) * z).sin_cos();
            let f = s / amp.sqrt();
            out[1 + 2 * k] = f * (a * cs + b * sn);
            out[2 + 2 * k] = f * (a * sn - b * cs);
        }
        out
    }

    pub fn phi(&self, y: f64) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        if self.scale == 0.0 {
            return out;
        }
        let s = self.scale;
        out[0] = self.constant.abs().sqrt() / s;
        for (k, &h) in self.active.iter().enumerate() {
            let amp = self.cos_coeffs[h].hypot(self.sin_coeffs[h]);
            let (sn, cs) = (self.frequency(h) * y).sin_cos();
            out[1 + 2 * k] = amp.sqrt() * cs / s;
            out[2 + 2 * k] = amp.sqrt() * sn / s;
        }
        out
    }

    /// `⟨ψ_Q(z), φ_Q(y)⟩`.
    pub fn eval(&self, z: f64, y: f64) -> f64 {
        self.psi(z).dot(&self.phi(y))
    }

    fn measure_error(&self, profile: impl Fn(f64) -> f64) -> f64 {
        let grid: Vec<f64> = (0..TEST_GRID)
            .map(|k| -self.half_width + 2.0 * self.half_width * k as f64 / (TEST_GRID - 1) as f64)
            .collect();
        let d = self.dim();
        let mut psi = DMatrix::zeros(TEST_GRID, d);
        let mut phi = DMatrix::zeros(TEST_GRID, d);
        for (i, &t) in grid.iter().enumerate() {
            psi.set_row(i, &self.psi(t).transpose());
            phi.set_row(i, &self.phi(t).transpose());
        }
        let recon = psi * phi.transpose();
        let mut worst = 0.0_f64;
        for (i, &z) in grid.iter().enumerate() {
            for (j, &y) in grid.iter().enumerate() {
                worst = worst.max((recon[(i, j)] - profile(z - y)).abs());
            }
        }
        worst
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    /// `|a₀| + Σ A_h`, which equals `sup ‖ψ_Q‖`.
    pub fn closs_estimate(&self) -> f64 {
        self.closs_estimate
    }

    /// Sup error of `⟨ψ_Q(z), φ_Q(y)⟩ − v(z − y)` on a 201 × 201 grid of the box.
    pub fn reconstruction_error(&self) -> f64 {
        self.reconstruction_error
    }

    /// Set when the coefficient tail does not look summable.
    pub fn divergence_warning(&self) -> bool {
        self.divergence_warning
    }

    /// `(ω_h, A_h)` for the kept harmonics, plus `(0, |a₀|)`.
    pub fn spectrum(&self) -> Vec<(f64, f64)> {
        let mut out = vec![(0.0, self.constant.abs())];
        out.extend(
            self.active
                .iter()
                .map(|&h| (self.frequency(h), self.cos_coeffs[h].hypot(self.sin_coeffs[h]))),
        );
        out
    }
}

/// Fewest harmonics for which the tail slope is judged at all; geometric
/// decay looks polynomial over short windows.
const MIN_TAIL_HARMONICS: usize = 64;

/// Least-squares slope of `log A_h` over the upper half of the harmonics.
fn tail_diverges(amplitudes: &[f64], total: f64) -> bool {
    if amplitudes.len() < MIN_TAIL_HARMONICS {
        return false;
    }
    let start = amplitudes.len() / 2;
    let pts: Vec<(f64, f64)> = amplitudes
        .iter()
        .enumerate()
        .skip(start)
        .filter(|(_, &a)| a > 1e-12 * total.max(f64::MIN_POSITIVE))
        .map(|(h, &a)| (((h + 1) as f64).ln(), a.ln()))
        .collect();
    if pts.len() < 4 {
        return false;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxx > 0.0 && sxy / sxx > DIVERGENCE_SLOPE
}

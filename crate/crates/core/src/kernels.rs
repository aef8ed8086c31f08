//! Time-dependent rates, Lamb shift and their Markovian limits.
//!
//! ```text
//! γ±(t)   = (2/π) ∫_0^t dτ [cos(ω_q τ) C(τ) ± sin(ω_q τ) S(τ)]
//! ω_LS(t) = (2/π) ∫_0^t dτ  sin(ω_q τ) C(τ)
//! ```
//!
//! No coupling factor is applied here; the group `κ = e²η²` multiplies the
//! rates once, in the propagator.

use std::f64::consts::{FRAC_2_PI, PI};
use std::sync::Arc;

use nalgebra::Matrix2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bathspec::{BathSpectrum, Kernel, KERNEL_TOLERANCE};
use crate::error::{Error, Result};
use crate::quad::{self, gl20, Neumaier, Tolerance};

/// `γ₊`, `γ₋`, `ω_LS` at one time, without `κ`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Rates {
    pub gamma_plus: f64,
    pub gamma_minus: f64,
    pub lamb_shift: f64,
}

impl Rates {
    pub fn canonical(&self) -> (f64, f64) {
        canonical_rates(self.gamma_plus, self.gamma_minus, self.lamb_shift)
    }
}

/// Anything that can report rates at arbitrary times in `[0, t_max]`.
pub trait RateSource: Send + Sync {
    fn rates(&self, t: f64) -> Result<Rates>;
    fn t_max(&self) -> f64;
    fn omega_q(&self) -> f64;
}

/// Time-independent rates, e.g. Markovian limits or a δ-correlated bath.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantRates {
    pub rates: Rates,
    pub omega_q: f64,
}

impl ConstantRates {
    pub fn new(gamma_plus: f64, gamma_minus: f64, lamb_shift: f64, omega_q: f64) -> Self {
        Self {
            rates: Rates {
                gamma_plus,
                gamma_minus,
                lamb_shift,
            },
            omega_q,
        }
    }

    /// White noise, `C(τ) = D δ(τ)`, `S ≡ 0`. Half the δ mass lies inside
    /// `[0, t]`, so `γ₊ = γ₋ = D/π` for every `t > 0` and `ω_LS ≡ 0`.
    pub fn delta_correlated(strength: f64, omega_q: f64) -> Self {
        let g = strength / PI;
        Self::new(g, g, 0.0, omega_q)
    }
}

impl RateSource for ConstantRates {
    fn rates(&self, t: f64) -> Result<Rates> {
        if t < 0.0 || t.is_nan() {
            return Err(Error::Domain(format!("time {t} must be >= 0")));
        }
        Ok(self.rates)
    }

    fn t_max(&self) -> f64 {
        f64::INFINITY
    }

    fn omega_q(&self) -> f64 {
        self.omega_q
    }
}

/// Eigenvalues `γ̃₁ ≥ γ̃₂` of the decoherence matrix:
/// `m ± √(m² + ((γ₊−γ₋)/2)² + ω_LS²)`, `m = (γ₊+γ₋)/2`.
pub fn canonical_rates(gamma_plus: f64, gamma_minus: f64, lamb_shift: f64) -> (f64, f64) {
    let mean = 0.5 * (gamma_plus + gamma_minus);
    let half_diff = 0.5 * (gamma_plus - gamma_minus);
    let root = mean.hypot(half_diff).hypot(lamb_shift);
    let g1 = mean + root;
    if g1 == 0.0 {
        return (0.0, mean - root);
    }
    // γ̃₁ γ̃₂ = det d, which avoids cancellation in m − root
    let det = gamma_plus * gamma_minus - mean * mean - lamb_shift * lamb_shift;
    (g1, det / g1)
}

/// `d = [[γ₊, -(γ₊+γ₋)/2 - iω_LS], [c.c., γ₋]]`.
pub fn decoherence_matrix(gamma_plus: f64, gamma_minus: f64, lamb_shift: f64) -> Matrix2<Complex64> {
    let off = Complex64::new(-0.5 * (gamma_plus + gamma_minus), -lamb_shift);
    Matrix2::new(
        Complex64::new(gamma_plus, 0.0),
        off,
        off.conj(),
        Complex64::new(gamma_minus, 0.0),
    )
}

/// Asymptotic rates and Lamb shift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkovianLimits {
    pub gamma_plus: f64,
    pub gamma_minus: f64,
    pub lamb_shift: f64,
    /// Size of the last extrapolation correction; bounds the residual error.
    pub lamb_shift_error: f64,
}

impl MarkovianLimits {
    pub fn as_rates(&self, omega_q: f64) -> ConstantRates {
        ConstantRates::new(self.gamma_plus, self.gamma_minus, self.lamb_shift, omega_q)
    }

    /// Coherence time `2 / (κ (γ₊ + γ₋))`.
    pub fn t2(&self, kappa: f64) -> f64 {
        2.0 / (kappa * (self.gamma_plus + self.gamma_minus))
    }
}

/// Excision radii, in units of `ω_q`, for the principal-value integral.
pub const PV_EXCISION: [f64; 3] = [0.1, 0.05, 0.025];

const PV_TOLERANCE: Tolerance = Tolerance {
    abs: 1e-14,
    rel: 1e-12,
    max_panels: 400_000,
};

/// `γ±^M = S̄(ω_q) ± J(ω_q)` and
/// `ω_LS^M = (2/π) P∫_0^∞ dω S̄(ω) ω_q/(ω_q² − ω²)`.
pub fn markovian_limits(spec: &BathSpectrum, omega_q: f64) -> Result<MarkovianLimits> {
    if !(omega_q > 0.0 && omega_q.is_finite()) {
        return Err(Error::Domain(format!("ω_q must be > 0, got {omega_q}")));
    }
    let j = spec.spectral_density(omega_q)?;
    let sbar = spec.symmetrized_psd(omega_q)?;

    let levels: Vec<f64> = PV_EXCISION
        .iter()
        .map(|&d| excised_integral(spec, omega_q, d * omega_q))
        .collect::<Result<_>>()?;
    // I(δ) = PV + c₁δ + c₃δ³ + O(δ⁵)
    let r1a = 2.0 * levels[1] - levels[0];
    let r1b = 2.0 * levels[2] - levels[1];
    let pv = (8.0 * r1b - r1a) / 7.0;
    let err = (pv - r1b).abs();
    if !pv.is_finite() {
        return Err(Error::Numerical {
            stage: "principal value".into(),
            detail: "non-finite extrapolation".into(),
            estimate: err,
        });
    }
    Ok(MarkovianLimits {
        gamma_plus: sbar + j,
        gamma_minus: sbar - j,
        lamb_shift: FRAC_2_PI * omega_q * pv,
        lamb_shift_error: FRAC_2_PI * omega_q * err,
    })
}

fn excised_integral(spec: &BathSpectrum, wq: f64, delta: f64) -> Result<f64> {
    let f = |w: f64| -> f64 {
        if w <= 0.0 {
            return 0.0;
        }
        let s = spec.symmetrized_psd(w).unwrap_or(0.0);
        s / ((wq - w) * (wq + w))
    };
    let breaks = spec.breakpoints();
    let a = wq - delta;
    let lower = match spec.kernel_endpoint_exponent() {
        Some(_) if spec.ir_cutoff().is_none() => {
            let alpha = match spec.model() {
                crate::bathspec::SpectrumModel::OneOverF { alpha, .. } => *alpha,
                _ => 0.0,
            };
            quad::integrate_power_singular(f, a, -alpha, PV_TOLERANCE)?
        }
        _ => quad::integrate_panels(f, &quad::panels(0.0, a, 0.05 * wq, &breaks), PV_TOLERANCE)?,
    };
    let b = wq + delta;
    let far = 8.0 * wq;
    let mid = quad::integrate_panels(f, &quad::panels(b, far, 0.05 * wq, &breaks), PV_TOLERANCE)?;
    let tail = quad::integrate_to_infinity(f, far, PV_TOLERANCE)?;
    Ok(lower.value + mid.value + tail.value)
}

/// Integrand of `γ₊`, `γ₋`, `ω_LS` at `τ` (with the `2/π` factor).
#[inline]
fn integrand(kernel: &dyn Kernel, wq: f64, tau: f64) -> [f64; 3] {
    let (c, s) = kernel.eval(tau);
    let (sn, cs) = (wq * tau).sin_cos();
    [
        FRAC_2_PI * (cs * c + sn * s),
        FRAC_2_PI * (cs * c - sn * s),
        FRAC_2_PI * sn * c,
    ]
}

/// Integral of the three integrands over `[a, b]` by a fixed rule, or
/// adaptively from an endpoint singularity at 0.
fn rule_integral(kernel: &dyn Kernel, wq: f64, a: f64, b: f64) -> [f64; 3] {
    let rule = gl20();
    let mut acc = [0.0; 3];
    if b <= a {
        return acc;
    }
    match kernel.endpoint_exponent() {
        // the substituted integrand is only Hölder-smooth at u = 0, so a fixed
        // rule is not accurate enough here
        Some(p) if a == 0.0 => {
            for (i, slot) in acc.iter_mut().enumerate() {
                let f = |tau: f64| integrand(kernel, wq, tau)[i];
                *slot = quad::integrate_power_singular(f, b, p, RATE_TOLERANCE)
                    .map(|r| r.value)
                    .unwrap_or(f64::NAN);
            }
        }
        _ => {
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for (x, w) in rule.nodes().iter().zip(rule.weights()) {
                let v = integrand(kernel, wq, mid + half * x);
                for i in 0..3 {
                    acc[i] += w * half * v[i];
                }
            }
        }
    }
    acc
}

/// Adaptive integral of one integrand component over `[a, b]`.
fn adaptive_component(
    kernel: &dyn Kernel,
    wq: f64,
    a: f64,
    b: f64,
    which: usize,
    tol: Tolerance,
) -> Result<f64> {
    let f = |tau: f64| integrand(kernel, wq, tau)[which];
    match kernel.endpoint_exponent() {
        Some(p) if a == 0.0 => Ok(quad::integrate_power_singular(f, b, p, tol)?.value),
        _ => Ok(quad::integrate(f, a, b, f64::INFINITY, tol)?.value),
    }
}

/// Panel boundaries on `[0, t_max]`: at most `π/(4ω_q)` wide and at most
/// half the local kernel time scale.
fn panel_nodes(kernel: &dyn Kernel, wq: f64, t_max: f64) -> Vec<f64> {
    let osc = PI / (4.0 * wq);
    let floor = 1e-3 * osc;
    let mut nodes = vec![0.0];
    let mut t = 0.0;
    while t < t_max {
        let w = if t == 0.0 && kernel.endpoint_exponent().is_some() {
            osc
        } else {
            (0.5 * kernel.timescale(t)).clamp(floor, osc)
        };
        t = (t + w).min(t_max);
        if t_max - t < 1e-9 * w {
            t = t_max;
        }
        nodes.push(t);
    }
    nodes
}

fn outer_integral(kernel: &dyn Kernel, wq: f64, t: f64, tol: Tolerance) -> Result<[f64; 3]> {
    if t < 0.0 || t.is_nan() {
        return Err(Error::Domain(format!("time {t} must be >= 0")));
    }
    let nodes = panel_nodes(kernel, wq, t);
    let parts: Vec<[f64; 3]> = nodes
        .par_windows(2)
        .map(|w| -> Result<[f64; 3]> {
            let mut v = [0.0; 3];
            for (i, slot) in v.iter_mut().enumerate() {
                *slot = adaptive_component(kernel, wq, w[0], w[1], i, tol)?;
            }
            Ok(v)
        })
        .collect::<Result<_>>()
        .map_err(|e| e.at_time(t))?;
    let mut sums = [Neumaier::new(0.0); 3];
    for p in parts {
        for i in 0..3 {
            sums[i].add(p[i]);
        }
    }
    Ok([sums[0].sum(), sums[1].sum(), sums[2].sum()])
}

/// `(γ₊(t), γ₋(t))` by direct adaptive quadrature.
pub fn gamma_pm(spec: &BathSpectrum, omega_q: f64, t: f64) -> Result<(f64, f64)> {
    let kernel = spec.kernel(t, KERNEL_TOLERANCE)?;
    let v = outer_integral(kernel.as_ref(), omega_q, t, RATE_TOLERANCE)?;
    Ok((v[0], v[1]))
}

/// `ω_LS(t)` by direct adaptive quadrature.
pub fn lamb_shift(spec: &BathSpectrum, omega_q: f64, t: f64) -> Result<f64> {
    let kernel = spec.kernel(t, KERNEL_TOLERANCE)?;
    Ok(outer_integral(kernel.as_ref(), omega_q, t, RATE_TOLERANCE)?[2])
}

/// Per-panel tolerance for outer rate integrals.
pub const RATE_TOLERANCE: Tolerance = Tolerance {
    abs: 1e-14,
    rel: 1e-12,
    max_panels: 10_000,
};

/// Options for [`RateTable::build_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateTableOptions {
    pub tolerance: Tolerance,
    pub kernel_tolerance: Tolerance,
    /// Longest τ for which quadrature-only kernel parts are sampled.
    pub kernel_horizon: f64,
}

impl Default for RateTableOptions {
    fn default() -> Self {
        Self {
            tolerance: RATE_TOLERANCE,
            kernel_tolerance: KERNEL_TOLERANCE,
            kernel_horizon: 200.0,
        }
    }
}

/// Rates sampled on a user grid, backed by cumulative panel integrals that
/// give exact values at any `t ∈ [0, t_max]`.
#[derive(Debug, Clone)]
pub struct RateTable {
    omega_q: f64,
    kappa: f64,
    kernel: Arc<dyn Kernel>,
    nodes: Vec<f64>,
    cumulative: Vec<[f64; 3]>,
    t: Vec<f64>,
    samples: Vec<Rates>,
}

impl RateTable {
    /// Tabulates on `n_points` equally spaced times in `[0, t_max]`. `κ` is
    /// recorded, not applied.
    pub fn build(
        spec: &BathSpectrum,
        omega_q: f64,
        t_max: f64,
        n_points: usize,
        kappa: f64,
    ) -> Result<Self> {
        Self::build_with(spec, omega_q, t_max, n_points, kappa, RateTableOptions::default())
    }

    pub fn build_with(
        spec: &BathSpectrum,
        omega_q: f64,
        t_max: f64,
        n_points: usize,
        kappa: f64,
        opts: RateTableOptions,
    ) -> Result<Self> {
        if !(t_max > 0.0 && t_max.is_finite()) {
            return Err(Error::Domain(format!("t_max must be > 0, got {t_max}")));
        }
        if n_points < 2 {
            return Err(Error::Domain("n_points must be >= 2".into()));
        }
        let kernel = spec.kernel(t_max.min(opts.kernel_horizon), opts.kernel_tolerance)?;
        let grid: Vec<f64> = (0..n_points)
            .map(|k| t_max * k as f64 / (n_points - 1) as f64)
            .collect();
        Self::from_kernel(kernel, omega_q, &grid, kappa, opts.tolerance)
    }

    /// Tabulates on an explicit increasing grid starting at 0.
    pub fn from_kernel(
        kernel: Arc<dyn Kernel>,
        omega_q: f64,
        grid: &[f64],
        kappa: f64,
        tol: Tolerance,
    ) -> Result<Self> {
        if !(omega_q > 0.0 && omega_q.is_finite()) {
            return Err(Error::Domain(format!("ω_q must be > 0, got {omega_q}")));
        }
        if grid.first() != Some(&0.0) || grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Grid("time grid must start at 0 and increase strictly".into()));
        }
        let t_max = grid[grid.len() - 1];
        let nodes = panel_nodes(kernel.as_ref(), omega_q, t_max);
        let k = kernel.as_ref();
        let parts: Vec<[f64; 3]> = nodes
            .par_windows(2)
            .map(|w| -> Result<[f64; 3]> {
                let mut v = [0.0; 3];
                for (i, slot) in v.iter_mut().enumerate() {
                    *slot = adaptive_component(k, omega_q, w[0], w[1], i, tol)
                        .map_err(|e| e.at_time(w[1]))?;
                }
                Ok(v)
            })
            .collect::<Result<_>>()?;
        let mut cumulative = Vec::with_capacity(nodes.len());
        let mut sums = [Neumaier::new(0.0); 3];
        cumulative.push([0.0; 3]);
        for p in &parts {
            for i in 0..3 {
                sums[i].add(p[i]);
            }
            cumulative.push([sums[0].sum(), sums[1].sum(), sums[2].sum()]);
        }
        let mut table = Self {
            omega_q,
            kappa,
            kernel,
            nodes,
            cumulative,
            t: grid.to_vec(),
            samples: Vec::new(),
        };
        let samples: Vec<Rates> = grid
            .par_iter()
            .map(|&t| table.rates(t))
            .collect::<Result<_>>()?;
        table.samples = samples;
        Ok(table)
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }

    pub fn samples(&self) -> &[Rates] {
        &self.samples
    }

    pub fn gamma_plus(&self) -> Vec<f64> {
        self.samples.iter().map(|r| r.gamma_plus).collect()
    }

    pub fn gamma_minus(&self) -> Vec<f64> {
        self.samples.iter().map(|r| r.gamma_minus).collect()
    }

    pub fn lamb_shift(&self) -> Vec<f64> {
        self.samples.iter().map(|r| r.lamb_shift).collect()
    }

    /// `(γ̃₁, γ̃₂)` on the grid.
    pub fn canonical(&self) -> Vec<(f64, f64)> {
        self.samples.iter().map(Rates::canonical).collect()
    }

    /// Number of integration panels backing the table.
    pub fn panel_count(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn kernel(&self) -> &Arc<dyn Kernel> {
        &self.kernel
    }
}

impl RateSource for RateTable {
    fn rates(&self, t: f64) -> Result<Rates> {
        let t_max = self.nodes[self.nodes.len() - 1];
        if t.is_nan() || t < 0.0 || t > t_max * (1.0 + 1e-12) {
            return Err(Error::Range { t, t_max });
        }
        let t = t.min(t_max);
        let k = self.nodes.partition_point(|&x| x <= t) - 1;
        let base = self.cumulative[k];
        let start = self.nodes[k];
        let v = if t == start {
            base
        } else {
            let add = rule_integral(self.kernel.as_ref(), self.omega_q, start, t);
            [base[0] + add[0], base[1] + add[1], base[2] + add[2]]
        };
        Ok(Rates {
            gamma_plus: v[0],
            gamma_minus: v[1],
            lamb_shift: v[2],
        })
    }

    fn t_max(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    fn omega_q(&self) -> f64 {
        self.omega_q
    }
}

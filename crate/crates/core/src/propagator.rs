//! The dynamical map of the qubit.
//!
//! With `|0⟩` the `σ_z = +1` ground state, populations and coherences evolve
//! as
//!
//! ```text
//! ⟨σ_z(t)⟩ = Z(t) + e^{-Γ(t)} ⟨σ_z(0)⟩
//! ρ₀₁(t)   = e^{-Γ/2} e^{iφ} (ρ₀₁(0) x₊ + ρ₁₀(0) x₋)
//! ```
//!
//! where `Γ = κ∫(γ₊+γ₋)`, `Z = κ e^{-Γ} ∫ e^{Γ}(γ₊−γ₋)`,
//! `φ = ω_q t + κ∫ω_LS`, and the coherence functions obey
//! `ẋ± = κ(−iω_LS − (γ₊+γ₋)/2) e^{-2iφ} x∓*`, `x₊(0) = 1`, `x₋(0) = 0`.
//!
//! The solver carries `g± = e^{-Γ} ∫ e^{Γ} γ±` instead of the unbounded
//! integrals `f± = ∫ e^{Γ} γ±`; `Z`, `1 − e^{-Γ}` and the complete-positivity
//! margin are all bilinear in `g±`.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{RateSource, Rates};
use crate::ode::{self, OdeStats, StepControl};
use crate::quad::{self, Tolerance};

/// Tolerance on `|x₊|² − |x₋|² − 1`.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-6;
/// Eigenvalue floor for CP and PSD tests.
pub const CP_TOLERANCE: f64 = 1e-10;

const C0: Complex64 = Complex64::new(0.0, 0.0);
const C1: Complex64 = Complex64::new(1.0, 0.0);

pub fn pauli_x() -> Matrix2<Complex64> {
    Matrix2::new(C0, C1, C1, C0)
}

pub fn pauli_y() -> Matrix2<Complex64> {
    let i = Complex64::i();
    Matrix2::new(C0, -i, i, C0)
}

pub fn pauli_z() -> Matrix2<Complex64> {
    Matrix2::new(C1, C0, C0, -C1)
}

/// Qubit density matrix in the `|0⟩, |1⟩` basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QubitState {
    rho: Matrix2<Complex64>,
}

impl QubitState {
    /// Validates Hermiticity and unit trace (1e-12) and positivity (−1e-10).
    pub fn new(rho: Matrix2<Complex64>) -> Result<Self> {
        let s = Self { rho };
        s.check()?;
        Ok(s)
    }

    pub fn from_matrix_unchecked(rho: Matrix2<Complex64>) -> Self {
        Self { rho }
    }

    /// `½(I + x σ_x + y σ_y + z σ_z)`; requires `x² + y² + z² ≤ 1`.
    pub fn from_bloch(x: f64, y: f64, z: f64) -> Result<Self> {
        if x * x + y * y + z * z > 1.0 + 1e-12 {
            return Err(Error::Domain(format!("Bloch vector ({x}, {y}, {z}) is longer than 1")));
        }
        let c = |v: f64| Complex64::new(v, 0.0);
        let rho = (Matrix2::identity() + pauli_x() * c(x) + pauli_y() * c(y) + pauli_z() * c(z))
            * c(0.5);
        Ok(Self { rho })
    }

    pub fn ground() -> Self {
        Self {
            rho: Matrix2::new(C1, C0, C0, C0),
        }
    }

    pub fn excited() -> Self {
        Self {
            rho: Matrix2::new(C0, C0, C0, C1),
        }
    }

    pub fn maximally_mixed() -> Self {
        Self {
            rho: Matrix2::identity() * Complex64::new(0.5, 0.0),
        }
    }

    pub fn matrix(&self) -> &Matrix2<Complex64> {
        &self.rho
    }

    pub fn rho01(&self) -> Complex64 {
        self.rho[(0, 1)]
    }

    pub fn rho10(&self) -> Complex64 {
        self.rho[(1, 0)]
    }

    /// `(⟨σ_x⟩, ⟨σ_y⟩, ⟨σ_z⟩)`.
    pub fn bloch(&self) -> [f64; 3] {
        let r = &self.rho;
        [
            2.0 * r[(0, 1)].re,
            -2.0 * r[(0, 1)].im,
            (r[(0, 0)] - r[(1, 1)]).re,
        ]
    }

    pub fn expectation(&self, op: &Matrix2<Complex64>) -> Complex64 {
        (op * self.rho).trace()
    }

    /// Ascending eigenvalues of the Hermitian part.
    pub fn eigenvalues(&self) -> [f64; 2] {
        let a = self.rho[(0, 0)].re;
        let d = self.rho[(1, 1)].re;
        let b = 0.5 * (self.rho[(0, 1)] + self.rho[(1, 0)].conj());
        let mean = 0.5 * (a + d);
        let r = (0.5 * (a - d)).hypot(b.norm());
        [mean - r, mean + r]
    }

    pub fn hermiticity_error(&self) -> f64 {
        let diff = self.rho - self.rho.adjoint();
        diff.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn trace_error(&self) -> f64 {
        (self.rho.trace() - C1).norm()
    }

    pub fn check(&self) -> Result<()> {
        let h = self.hermiticity_error();
        if h > 1e-12 {
            return Err(Error::Invariant(format!("state not Hermitian (deviation {h:e})")));
        }
        let t = self.trace_error();
        if t > 1e-12 {
            return Err(Error::Invariant(format!("state trace off by {t:e}")));
        }
        let lo = self.eigenvalues()[0];
        if lo < -CP_TOLERANCE {
            return Err(Error::Invariant(format!("state has negative eigenvalue {lo:e}")));
        }
        Ok(())
    }
}

/// Map parameters at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagatorState {
    pub t: f64,
    pub kappa: f64,
    /// `Γ(t)`.
    pub decay: f64,
    /// `Z(t)`.
    pub relaxation: f64,
    /// `φ(t)`.
    pub phase: f64,
    pub x_plus: Complex64,
    pub x_minus: Complex64,
    /// `e^{-Γ} f₊`.
    pub g_plus: f64,
    /// `e^{-Γ} f₋`.
    pub g_minus: f64,
}

impl PropagatorState {
    pub fn identity(kappa: f64) -> Self {
        Self {
            t: 0.0,
            kappa,
            decay: 0.0,
            relaxation: 0.0,
            phase: 0.0,
            x_plus: C1,
            x_minus: C0,
            g_plus: 0.0,
            g_minus: 0.0,
        }
    }

    /// `f± = ∫_0^t e^{Γ(s)} γ±(s) ds`.
    pub fn f_plus(&self) -> f64 {
        self.decay.exp() * self.g_plus
    }

    pub fn f_minus(&self) -> f64 {
        self.decay.exp() * self.g_minus
    }

    pub fn normalization_error(&self) -> f64 {
        (self.x_plus.norm_sqr() - self.x_minus.norm_sqr() - 1.0).abs()
    }

    pub fn choi(&self) -> Matrix4<Complex64> {
        choi_matrix(self)
    }
}

/// Choi matrix with row/column index `a ↔ (j₁, j₂)` in the order
/// `(0,0), (0,1), (1,0), (1,1)`, so that `ρ(t) = Σ_ab C_ab τ_a ρ₀ τ_b†`
/// with `τ_a = |j₁⟩⟨j₂|`.
pub fn choi_matrix(ps: &PropagatorState) -> Matrix4<Complex64> {
    let e = (-ps.decay).exp();
    let z = ps.relaxation;
    let rot = Complex64::from_polar((-0.5 * ps.decay).exp(), ps.phase);
    let xp = rot * ps.x_plus;
    let xm = rot * ps.x_minus;
    let re = |v: f64| Complex64::new(v, 0.0);
    let mut c = Matrix4::zeros();
    c[(0, 0)] = re(0.5 * (1.0 + z + e));
    c[(1, 1)] = re(0.5 * (1.0 + z - e));
    c[(2, 2)] = re(0.5 * (1.0 - z - e));
    c[(3, 3)] = re(0.5 * (1.0 - z + e));
    c[(0, 3)] = xp;
    c[(3, 0)] = xp.conj();
    c[(1, 2)] = xm;
    c[(2, 1)] = xm.conj();
    c
}

/// `ρ(t)[i,k] = Σ C_{(i,m),(k,n)} ρ₀[m,n]`.
pub fn apply_map(choi: &Matrix4<Complex64>, rho0: &QubitState) -> QubitState {
    let r = rho0.matrix();
    let mut out = Matrix2::zeros();
    for i in 0..2 {
        for k in 0..2 {
            let mut acc = C0;
            for m in 0..2 {
                for n in 0..2 {
                    acc += choi[(2 * i + m, 2 * k + n)] * r[(m, n)];
                }
            }
            out[(i, k)] = acc;
        }
    }
    QubitState::from_matrix_unchecked(out)
}

/// Eigenvalues of the Choi matrix and the two complete-positivity tests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CpReport {
    pub t: f64,
    /// `λ₁ ≥ λ₂` from the `x₊` block, `λ₃ ≥ λ₄` from the `x₋` block.
    pub lambda: [f64; 4],
    /// `Γ ≥ −1e-10`.
    pub necessary_ok: bool,
    /// `κ² g₊ g₋ − e^{-Γ}|x₋|² ≥ −1e-10`, which has the sign of
    /// `κ² e^{-Γ} f₊ f₋ − |x₋|²`.
    pub sufficient_ok: bool,
    pub sufficient_margin: f64,
}

/// Complete-positivity certificate at one time.
///
/// `λ₂` and `λ₄` are formed from `λ₁λ₂ = λ₃λ₄ = κ² g₊ g₋ − e^{-Γ}|x₋|²`, which
/// is free of the cancellation in the direct formulas.
pub fn cp_certificate(ps: &PropagatorState) -> CpReport {
    let e = (-ps.decay).exp();
    let one_minus_e = -(-ps.decay).exp_m1();
    let z = ps.relaxation;
    let ap = ps.x_plus.norm_sqr();
    let am = ps.x_minus.norm_sqr();
    let k2 = ps.kappa * ps.kappa;
    let product = k2 * ps.g_plus * ps.g_minus - e * am;
    let l1 = 0.5 * (1.0 + e + z.hypot(2.0 * (e * ap).sqrt()));
    let l3 = 0.5 * (one_minus_e + z.hypot(2.0 * (e * am).sqrt()));
    let l2 = product / l1;
    let l4 = if l3 > 0.0 { product / l3 } else { 0.0 };
    // Same sign as κ²e^{-Γ}f₊f₋ − |x₋|², but bounded as Γ grows.
    let margin = product;
    CpReport {
        t: ps.t,
        lambda: [l1, l2, l3, l4],
        necessary_ok: ps.decay >= -CP_TOLERANCE,
        sufficient_ok: margin >= -CP_TOLERANCE,
        sufficient_margin: margin,
    }
}

/// How the coherence functions are propagated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CoherenceMode {
    /// The full non-secular equations.
    #[default]
    Full,
    /// Secular approximation: `x₊ ≡ 1`, `x₋ ≡ 0`.
    Secular,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub mode: CoherenceMode,
    pub control: StepControl,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            mode: CoherenceMode::Full,
            control: StepControl::with_tolerances(1e-10, 1e-13),
        }
    }
}

impl SolveOptions {
    pub fn secular() -> Self {
        Self {
            mode: CoherenceMode::Secular,
            ..Self::default()
        }
    }

    /// Multiplies both solver tolerances.
    pub fn scaled(mut self, factor: f64) -> Self {
        self.control.rtol *= factor;
        self.control.atol *= factor;
        self
    }
}

/// Map parameters along a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<PropagatorState>,
    pub stats: OdeStats,
    /// Largest `||x₊|² − |x₋|² − 1|` over all accepted steps.
    pub max_normalization_error: f64,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.t).collect()
    }
}

/// Integrates `Γ`, `φ`, `x±` and `g±` in one pass and samples them on `grid`.
///
/// The step size is capped at `π/(8ω_q)` so the `e^{-2iφ}` factor is
/// resolved. `|x₊|² − |x₋|² = 1` is re-checked after every accepted step.
pub fn solve_coherence(
    rates: &dyn RateSource,
    kappa: f64,
    grid: &[f64],
    opts: &SolveOptions,
) -> Result<Trajectory> {
    if grid.first().is_some_and(|&t| t < 0.0) || grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Grid("time grid must be nondecreasing and >= 0".into()));
    }
    if let Some(&last) = grid.last() {
        if last > rates.t_max() * (1.0 + 1e-12) {
            return Err(Error::Range {
                t: last,
                t_max: rates.t_max(),
            });
        }
    }
    let wq = rates.omega_q();
    let secular = opts.mode == CoherenceMode::Secular;
    let t_cap = rates.t_max();
    let failure = std::cell::Cell::new(None::<Error>);
    let rhs = |t: f64, y: &[f64; 8], dy: &mut [f64; 8]| {
        let r = match rates.rates(t.min(t_cap)) {
            Ok(r) => r,
            Err(e) => {
                failure.set(Some(e));
                Rates::default()
            }
        };
        let sum = r.gamma_plus + r.gamma_minus;
        dy[4] = kappa * sum;
        dy[5] = kappa * r.lamb_shift;
        dy[6] = r.gamma_plus - kappa * sum * y[6];
        dy[7] = r.gamma_minus - kappa * sum * y[7];
        if secular {
            dy[..4].fill(0.0);
            return;
        }
        let phi = wq * t + y[5];
        let coef = Complex64::new(-0.5 * sum, -r.lamb_shift)
            * Complex64::from_polar(kappa, -2.0 * phi);
        let xp_c = Complex64::new(y[0], -y[1]);
        let xm_c = Complex64::new(y[2], -y[3]);
        let dxp = coef * xm_c;
        let dxm = coef * xp_c;
        dy[0] = dxp.re;
        dy[1] = dxp.im;
        dy[2] = dxm.re;
        dy[3] = dxm.im;
    };
    let ctl = opts.control.with_h_max(opts.control.h_max.min(PI / (8.0 * wq)));
    let mut max_norm = 0.0f64;
    let y0 = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    let (ys, stats) = ode::dopri5(&rhs, 0.0, y0, grid, &ctl, |t, y| {
        if let Some(e) = failure.take() {
            return Err(e.at_time(t));
        }
        let n = (y[0] * y[0] + y[1] * y[1] - y[2] * y[2] - y[3] * y[3] - 1.0).abs();
        max_norm = max_norm.max(n);
        if n > NORMALIZATION_TOLERANCE {
            return Err(Error::Invariant(format!(
                "|x+|^2 - |x-|^2 - 1 = {n:e} at t = {t}"
            )));
        }
        Ok(())
    })?;
    if let Some(e) = failure.take() {
        return Err(e);
    }
    let states = grid
        .iter()
        .zip(&ys)
        .map(|(&t, y)| PropagatorState {
            t,
            kappa,
            decay: y[4],
            relaxation: kappa * (y[6] - y[7]),
            phase: wq * t + y[5],
            x_plus: Complex64::new(y[0], y[1]),
            x_minus: Complex64::new(y[2], y[3]),
            g_plus: y[6],
            g_minus: y[7],
        })
        .collect();
    Ok(Trajectory {
        states,
        stats,
        max_normalization_error: max_norm,
    })
}

const FUNCTION_TOLERANCE: Tolerance = Tolerance {
    abs: 1e-13,
    rel: 1e-11,
    max_panels: 2_000_000,
};

fn rate_integral(
    rates: &dyn RateSource,
    t: f64,
    pick: impl Fn(&Rates) -> f64,
) -> Result<f64> {
    if t < 0.0 || t.is_nan() {
        return Err(Error::Domain(format!("time {t} must be >= 0")));
    }
    if t > rates.t_max() * (1.0 + 1e-12) {
        return Err(Error::Range {
            t,
            t_max: rates.t_max(),
        });
    }
    let failure = std::cell::Cell::new(None::<Error>);
    let width = PI / (4.0 * rates.omega_q());
    let r = quad::integrate(
        |s| match rates.rates(s.min(rates.t_max())) {
            Ok(r) => pick(&r),
            Err(e) => {
                failure.set(Some(e));
                0.0
            }
        },
        0.0,
        t,
        width,
        FUNCTION_TOLERANCE,
    )?;
    if let Some(e) = failure.take() {
        return Err(e);
    }
    Ok(r.value)
}

/// `Γ(t) = κ ∫_0^t (γ₊ + γ₋) ds`.
pub fn decay_function(rates: &dyn RateSource, kappa: f64, t: f64) -> Result<f64> {
    Ok(kappa * rate_integral(rates, t, |r| r.gamma_plus + r.gamma_minus)?)
}

/// `φ(t) = ω_q t + κ ∫_0^t ω_LS ds`.
pub fn phase_function(rates: &dyn RateSource, kappa: f64, omega_q: f64, t: f64) -> Result<f64> {
    Ok(omega_q * t + kappa * rate_integral(rates, t, |r| r.lamb_shift)?)
}

/// `Z(t) = κ e^{-Γ(t)} ∫_0^t e^{Γ(s)} (γ₊ − γ₋) ds`, from its own small ODE
/// `Ż = κ(γ₊ − γ₋) − κ(γ₊ + γ₋) Z`.
pub fn relaxation_function(rates: &dyn RateSource, kappa: f64, t: f64) -> Result<f64> {
    if t < 0.0 || t.is_nan() {
        return Err(Error::Domain(format!("time {t} must be >= 0")));
    }
    if t > rates.t_max() * (1.0 + 1e-12) {
        return Err(Error::Range {
            t,
            t_max: rates.t_max(),
        });
    }
    let failure = std::cell::Cell::new(None::<Error>);
    let rhs = |s: f64, y: &[f64; 1], dy: &mut [f64; 1]| {
        let r = rates.rates(s.min(rates.t_max())).unwrap_or_else(|e| {
            failure.set(Some(e));
            Rates::default()
        });
        dy[0] = kappa * (r.gamma_plus - r.gamma_minus)
            - kappa * (r.gamma_plus + r.gamma_minus) * y[0];
    };
    let ctl = StepControl::with_tolerances(1e-11, 1e-14)
        .with_h_max(PI / (8.0 * rates.omega_q()));
    let (ys, _) = ode::dopri5(&rhs, 0.0, [0.0], &[t], &ctl, |_, _| Ok(()))?;
    if let Some(e) = failure.take() {
        return Err(e);
    }
    Ok(ys[0][0])
}

/// Constant-rate secular map at time `t`.
pub fn markovian_propagator(
    gamma_plus: f64,
    gamma_minus: f64,
    lamb_shift: f64,
    kappa: f64,
    omega_q: f64,
    t: f64,
) -> Result<PropagatorState> {
    if t < 0.0 || t.is_nan() {
        return Err(Error::Domain(format!("time {t} must be >= 0")));
    }
    let sum = gamma_plus + gamma_minus;
    let decay = kappa * sum * t;
    // (1 - e^{-κΣt}) / (κΣ), → t as κΣ → 0
    let weight = if decay == 0.0 {
        t
    } else {
        -(-decay).exp_m1() / (kappa * sum)
    };
    let g_plus = gamma_plus * weight;
    let g_minus = gamma_minus * weight;
    Ok(PropagatorState {
        t,
        kappa,
        decay,
        relaxation: kappa * (g_plus - g_minus),
        phase: (omega_q + kappa * lamb_shift) * t,
        x_plus: C1,
        x_minus: C0,
        g_plus,
        g_minus,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::ConstantRates;
    use approx::assert_relative_eq;

    fn max_dev(a: &Matrix2<Complex64>, b: &Matrix2<Complex64>) -> f64 {
        (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn identity_channel_at_zero() {
        let ps = PropagatorState::identity(1e-3);
        let c = choi_matrix(&ps);
        assert_eq!(c[(0, 0)], C1);
        assert_eq!(c[(3, 3)], C1);
        assert_eq!(c[(0, 3)], C1);
        assert_eq!(c[(3, 0)], C1);
        let mut ev: Vec<f64> = c.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        assert_relative_eq!(ev[3], 2.0, epsilon = 1e-14);
        for v in &ev[..3] {
            assert!(v.abs() < 1e-14);
        }
        let rep = cp_certificate(&ps);
        assert!(rep.necessary_ok && rep.sufficient_ok);
        assert_eq!(rep.lambda, [2.0, 0.0, 0.0, 0.0]);
        let rho = QubitState::from_bloch(0.3, -0.2, 0.5).unwrap();
        assert!(max_dev(apply_map(&c, &rho).matrix(), rho.matrix()) < 1e-15);
    }

    #[test]
    fn maximally_mixed_maps_to_diagonal() {
        let ps = PropagatorState {
            t: 1.0,
            kappa: 0.1,
            decay: 0.4,
            relaxation: 0.3,
            phase: 1.2,
            x_plus: Complex64::new(1.0, 0.1),
            x_minus: Complex64::new(0.1, 0.0),
            g_plus: 3.0,
            g_minus: 0.0,
        };
        let out = apply_map(&choi_matrix(&ps), &QubitState::maximally_mixed());
        let want = Matrix2::new(
            Complex64::new(0.65, 0.0),
            C0,
            C0,
            Complex64::new(0.35, 0.0),
        );
        assert!(max_dev(out.matrix(), &want) < 1e-15);
    }

    #[test]
    fn noiseless_precession() {
        let rates = ConstantRates::new(0.0, 0.0, 0.0, 1.0);
        let grid: Vec<f64> = (0..50).map(|k| 0.3 * k as f64).collect();
        let traj = solve_coherence(&rates, 0.0, &grid, &SolveOptions::default()).unwrap();
        let rho = QubitState::from_bloch(1.0, 0.0, 0.0).unwrap();
        for ps in &traj.states {
            let out = apply_map(&ps.choi(), &rho);
            let want = rho.rho01() * Complex64::from_polar(1.0, ps.t);
            assert!((out.rho01() - want).norm() < 1e-12);
            assert_relative_eq!(out.bloch()[0], ps.t.cos(), epsilon = 1e-12);
        }
    }

    #[test]
    fn constant_rates_match_closed_forms() {
        let (gp, gm, ls, kappa) = (1.3, 0.4, -0.6, 0.01);
        let rates = ConstantRates::new(gp, gm, ls, 1.0);
        let grid: Vec<f64> = (0..=40).map(|k| 2.5 * k as f64).collect();
        let traj = solve_coherence(&rates, kappa, &grid, &SolveOptions::secular()).unwrap();
        for ps in &traj.states {
            let m = markovian_propagator(gp, gm, ls, kappa, 1.0, ps.t).unwrap();
            assert_relative_eq!(ps.decay, m.decay, epsilon = 1e-12);
            assert_relative_eq!(ps.relaxation, m.relaxation, epsilon = 1e-10);
            assert_relative_eq!(ps.phase, m.phase, epsilon = 1e-10);
            assert_relative_eq!(ps.g_plus, m.g_plus, epsilon = 1e-8);
            let z = (gp - gm) / (gp + gm) * (1.0 - (-m.decay).exp());
            assert_relative_eq!(m.relaxation, z, epsilon = 1e-14);
            assert_eq!(ps.x_plus, C1);
            assert_eq!(ps.x_minus, C0);
        }
        let t = 37.0;
        assert_relative_eq!(decay_function(&rates, kappa, t).unwrap(), kappa * (gp + gm) * t, epsilon = 1e-12);
        assert_relative_eq!(
            phase_function(&rates, kappa, 1.0, t).unwrap(),
            (1.0 + kappa * ls) * t,
            epsilon = 1e-12
        );
        let z = (gp - gm) / (gp + gm) * (1.0 - (-kappa * (gp + gm) * t).exp());
        assert_relative_eq!(relaxation_function(&rates, kappa, t).unwrap(), z, epsilon = 1e-10);
    }

    #[test]
    fn zero_temperature_relaxes_to_ground() {
        let m = markovian_propagator(2.0, 0.0, 0.0, 1.0, 1.0, 40.0).unwrap();
        assert_relative_eq!(m.relaxation, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn non_secular_markovian_map_violates_cp_at_zero_temperature() {
        let rates = ConstantRates::new(1.6, 0.0, -0.7, 1.0);
        let kappa = 1e-2;
        let grid: Vec<f64> = (1..=20).map(|k| 0.5 * k as f64).collect();
        let traj = solve_coherence(&rates, kappa, &grid, &SolveOptions::default()).unwrap();
        assert!(traj.max_normalization_error < 1e-9);
        let fails = traj
            .states
            .iter()
            .filter(|ps| !cp_certificate(ps).sufficient_ok)
            .count();
        assert!(fails > 0);
        for ps in &traj.states {
            let rep = cp_certificate(ps);
            assert!(rep.necessary_ok);
            let mut ev: Vec<f64> = ps.choi().symmetric_eigenvalues().iter().copied().collect();
            ev.sort_by(f64::total_cmp);
            let mut an = rep.lambda;
            an.sort_by(f64::total_cmp);
            for (a, b) in ev.iter().zip(an) {
                assert_relative_eq!(*a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn range_errors() {
        let rates = ConstantRates::new(1.0, 0.0, 0.0, 1.0);
        assert!(solve_coherence(&rates, 1.0, &[1.0, 0.5], &SolveOptions::default()).is_err());
        assert!(markovian_propagator(1.0, 0.0, 0.0, 1.0, 1.0, -1.0).is_err());
    }
}

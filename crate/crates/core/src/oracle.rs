//! Independent reference computations.
//!
//! * [`integrate_master_equation`] integrates the time-local master equation
//!   for the full density matrix with the Cash–Karp pair, in the frame
//!   rotating at `ω_q`. It shares only the rate source with the propagator.
//! * [`quadrature_crosscheck`] compares closed-form kernels with brute-force
//!   quadrature; `1/f^α` kernels are checked against exponentially
//!   regularized integrals extrapolated to zero regulator.
//! * [`lamb_shift_by_subtraction`] evaluates the Markovian Lamb shift without
//!   excision, using `P∫_0^∞ dω/(ω_q² − ω²) = 0`.

use std::f64::consts::{FRAC_2_PI, PI};

use nalgebra::Matrix2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bathspec::{ohmic_kernel, power_law_kernel, BathSpectrum, SpectrumModel};
use crate::error::{Error, Result};
use crate::kernels::{RateSource, Rates};
use crate::ode::{self, StepControl};
use crate::propagator::{apply_map, pauli_z, QubitState, Trajectory};
use crate::quad::{self, Tolerance};

/// Outcome of one verification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub name: String,
    pub max_deviation: f64,
    /// Abscissa (time or τ) of the largest deviation.
    pub location: f64,
    pub tolerance: f64,
    pub checks: Vec<(String, bool)>,
}

impl OracleReport {
    pub fn new(name: impl Into<String>, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            max_deviation: 0.0,
            location: f64::NAN,
            tolerance,
            checks: Vec::new(),
        }
    }

    fn observe(&mut self, deviation: f64, at: f64) {
        if deviation > self.max_deviation || self.location.is_nan() {
            self.max_deviation = self.max_deviation.max(deviation);
            self.location = at;
        }
    }

    pub fn passed(&self) -> bool {
        self.max_deviation <= self.tolerance && self.checks.iter().all(|c| c.1)
    }
}

const C0: Complex64 = Complex64::new(0.0, 0.0);
const C1: Complex64 = Complex64::new(1.0, 0.0);

fn sigma_plus() -> Matrix2<Complex64> {
    Matrix2::new(C0, C1, C0, C0)
}

fn sigma_minus() -> Matrix2<Complex64> {
    Matrix2::new(C0, C0, C1, C0)
}

fn unpack(y: &[f64; 8]) -> Matrix2<Complex64> {
    Matrix2::new(
        Complex64::new(y[0], y[1]),
        Complex64::new(y[2], y[3]),
        Complex64::new(y[4], y[5]),
        Complex64::new(y[6], y[7]),
    )
}

fn pack(m: &Matrix2<Complex64>, y: &mut [f64; 8]) {
    let v = [m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]];
    for (k, z) in v.iter().enumerate() {
        y[2 * k] = z.re;
        y[2 * k + 1] = z.im;
    }
}

/// Generator of the master equation without the bare `ω_q` precession:
/// `−i[H_LS, ρ] + κ Σ_kl d_kl (σ_k ρ σ_l† − ½{σ_l† σ_k, ρ})`,
/// `H_LS = −½ κ ω_LS σ_z`.
fn generator(r: &Rates, kappa: f64, rho: &Matrix2<Complex64>) -> Matrix2<Complex64> {
    let ops = [sigma_plus(), sigma_minus()];
    let c = Complex64::new(-0.5 * (r.gamma_plus + r.gamma_minus), -r.lamb_shift);
    let d = [
        [Complex64::new(r.gamma_plus, 0.0), c],
        [c.conj(), Complex64::new(r.gamma_minus, 0.0)],
    ];
    let h = pauli_z() * Complex64::new(-0.5 * kappa * r.lamb_shift, 0.0);
    let i = Complex64::i();
    let mut out = -(h * rho - rho * h) * i;
    for k in 0..2 {
        for l in 0..2 {
            let lk = &ops[k];
            let ll = ops[l].adjoint();
            let anti = ll * lk;
            let term = lk * rho * ll - (anti * rho + rho * anti) * Complex64::new(0.5, 0.0);
            out += term * (d[k][l] * kappa);
        }
    }
    out
}

/// `ρ(t)` on `grid` from direct integration of the master equation.
pub fn integrate_master_equation(
    rates: &dyn RateSource,
    kappa: f64,
    rho0: &QubitState,
    grid: &[f64],
    control: &StepControl,
) -> Result<Vec<QubitState>> {
    if let Some(&last) = grid.last() {
        if last > rates.t_max() * (1.0 + 1e-12) {
            return Err(Error::Range {
                t: last,
                t_max: rates.t_max(),
            });
        }
    }
    let wq = rates.omega_q();
    let frame = |t: f64| {
        let half = 0.5 * wq * t;
        Matrix2::new(
            Complex64::from_polar(1.0, half),
            C0,
            C0,
            Complex64::from_polar(1.0, -half),
        )
    };
    let failure = std::cell::Cell::new(None::<Error>);
    let rhs = |t: f64, y: &[f64; 8], dy: &mut [f64; 8]| {
        let r = rates.rates(t.min(rates.t_max())).unwrap_or_else(|e| {
            failure.set(Some(e));
            Rates::default()
        });
        let u = frame(t);
        let rho = u * unpack(y) * u.adjoint();
        let lab = generator(&r, kappa, &rho);
        pack(&(u.adjoint() * lab * u), dy);
    };
    let mut y0 = [0.0; 8];
    pack(rho0.matrix(), &mut y0);
    let ctl = control.with_h_max(control.h_max.min(PI / (8.0 * wq)));
    let (ys, _) = ode::cash_karp(&rhs, 0.0, y0, grid, &ctl)?;
    if let Some(e) = failure.take() {
        return Err(e);
    }
    Ok(grid
        .iter()
        .zip(&ys)
        .map(|(&t, y)| {
            let u = frame(t);
            QubitState::from_matrix_unchecked(u * unpack(y) * u.adjoint())
        })
        .collect())
}

/// Largest entrywise `|Δρ|` between the Choi-map states and the oracle.
pub fn compare_map_to_oracle(
    rates: &dyn RateSource,
    trajectory: &Trajectory,
    rho0: &QubitState,
    control: &StepControl,
    tolerance: f64,
) -> Result<OracleReport> {
    let kappa = trajectory.states.first().map_or(0.0, |s| s.kappa);
    let grid = trajectory.times();
    let direct = integrate_master_equation(rates, kappa, rho0, &grid, control)?;
    let mut rep = OracleReport::new("map vs master equation", tolerance);
    let mut psd = true;
    let mut trace = 0.0f64;
    for (ps, oracle) in trajectory.states.iter().zip(&direct) {
        let mapped = apply_map(&ps.choi(), rho0);
        let dev = (mapped.matrix() - oracle.matrix())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        rep.observe(dev, ps.t);
        psd &= oracle.eigenvalues()[0] >= -crate::propagator::CP_TOLERANCE;
        trace = trace.max(oracle.trace_error());
    }
    rep.checks.push(("oracle state PSD".into(), psd));
    rep.checks.push(("oracle trace drift < 1e-10".into(), trace < 1e-10));
    Ok(rep)
}

const BRUTE_TOLERANCE: Tolerance = Tolerance {
    abs: 1e-13,
    rel: 1e-11,
    max_panels: 2_000_000,
};

/// `∫_0^∞ J(ω) cos ωτ` and `∫_0^∞ J(ω) sin ωτ` for a zero-temperature Ohmic
/// bath by plain panel quadrature.
pub fn ohmic_kernel_quadrature(r: f64, omega_c: f64, tau: f64) -> Result<(f64, f64)> {
    let j = |w: f64| r * w * (-w / omega_c).exp();
    let upper = 60.0 * omega_c;
    let width = if tau > 0.0 { PI / (4.0 * tau) } else { f64::INFINITY }.min(0.25 * omega_c);
    let cuts = quad::panels(0.0, upper, width, &[]);
    let c = quad::integrate_panels(|w| j(w) * (w * tau).cos(), &cuts, BRUTE_TOLERANCE)?;
    let s = quad::integrate_panels(|w| j(w) * (w * tau).sin(), &cuts, BRUTE_TOLERANCE)?;
    Ok((c.value, s.value))
}

/// Regulator ratios `ε/τ` for the `1/f^α` oracle.
pub const REGULATORS: [f64; 4] = [0.08, 0.04, 0.02, 0.01];

/// `lim_{ε→0} ∫_0^∞ A ω^{-α} e^{-εω} (cos, sin)(ωτ) dω` by quadrature at
/// each regulator in [`REGULATORS`] and Richardson extrapolation in `ε`.
pub fn power_law_kernel_regularized(amplitude: f64, alpha: f64, tau: f64) -> Result<(f64, f64)> {
    if !(tau > 0.0) {
        return Err(Error::Domain("regularized oracle needs τ > 0".into()));
    }
    // in u = ωτ: τ^{α-1} ∫ u^{-α} e^{-(ε/τ)u} (cos, sin) u du
    let level = |r: f64| -> Result<(f64, f64)> {
        let upper = 45.0 / r;
        let f = |u: f64, trig: fn(f64) -> f64| u.powf(-alpha) * (-r * u).exp() * trig(u);
        let head_c = quad::integrate_power_singular(|u| f(u, f64::cos), 1.0, -alpha, BRUTE_TOLERANCE)?;
        let head_s = quad::integrate_power_singular(|u| f(u, f64::sin), 1.0, -alpha, BRUTE_TOLERANCE)?;
        let cuts = quad::panels(1.0, upper, PI / 4.0, &[]);
        let body_c = quad::integrate_panels(|u| f(u, f64::cos), &cuts, BRUTE_TOLERANCE)?;
        let body_s = quad::integrate_panels(|u| f(u, f64::sin), &cuts, BRUTE_TOLERANCE)?;
        Ok((head_c.value + body_c.value, head_s.value + body_s.value))
    };
    let levels: Vec<(f64, f64)> = REGULATORS.iter().map(|&r| level(r)).collect::<Result<_>>()?;
    let c = richardson_halving(&levels.iter().map(|l| l.0).collect::<Vec<_>>());
    let s = richardson_halving(&levels.iter().map(|l| l.1).collect::<Vec<_>>());
    let scale = amplitude * tau.powf(alpha - 1.0);
    Ok((scale * c, scale * s))
}

/// Extrapolates `v(h), v(h/2), v(h/4), …` assuming a power series in `h`.
fn richardson_halving(values: &[f64]) -> f64 {
    let mut row = values.to_vec();
    let mut factor = 2.0;
    while row.len() > 1 {
        row = row
            .windows(2)
            .map(|w| (factor * w[1] - w[0]) / (factor - 1.0))
            .collect();
        factor *= 2.0;
    }
    row[0]
}

/// Relative deviation `|a − b| / max(|b|, floor)`.
fn rel_dev(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / b.abs().max(floor)
}

/// Closed-form kernels vs brute-force quadrature on `taus`. Deviations are
/// relative to `max(|C|, |S|)` at each τ.
pub fn quadrature_crosscheck(spec: &BathSpectrum, taus: &[f64], tolerance: f64) -> Result<OracleReport> {
    if !spec.is_zero_temperature() || spec.ir_cutoff().is_some() {
        return Err(Error::Domain(
            "closed-form crosscheck is defined for zero-temperature Ohmic and 1/f^alpha baths".into(),
        ));
    }
    if taus.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::Grid("τ grid must be positive".into()));
    }
    let mut rep = OracleReport::new(format!("kernel quadrature ({spec})"), tolerance);
    for &tau in taus {
        let (closed, brute) = match spec.model() {
            SpectrumModel::Ohmic { r, omega_c } => (
                ohmic_kernel(*r, *omega_c, tau),
                ohmic_kernel_quadrature(*r, *omega_c, tau)?,
            ),
            SpectrumModel::OneOverF { amplitude, alpha } => (
                power_law_kernel(*amplitude, *alpha, tau),
                power_law_kernel_regularized(*amplitude, *alpha, tau)?,
            ),
            _ => {
                return Err(Error::Domain("no closed form for this spectrum".into()));
            }
        };
        let scale = closed.0.abs().max(closed.1.abs());
        let dev = rel_dev(closed.0, brute.0, scale).max(rel_dev(closed.1, brute.1, scale));
        rep.observe(dev, tau);
    }
    Ok(rep)
}

/// `ω_LS^M = (2/π) ω_q ∫_0^∞ [S̄(ω) − S̄(ω_q)] / (ω_q² − ω²) dω`.
pub fn lamb_shift_by_subtraction(spec: &BathSpectrum, omega_q: f64) -> Result<f64> {
    let s0 = spec.symmetrized_psd(omega_q)?;
    let f = |w: f64| -> f64 {
        if w <= 0.0 {
            return 0.0;
        }
        let d = (omega_q - w) * (omega_q + w);
        if d == 0.0 {
            return 0.0;
        }
        (spec.symmetrized_psd(w).unwrap_or(0.0) - s0) / d
    };
    let lo = 0.5 * omega_q;
    let head = match spec.kernel_endpoint_exponent() {
        Some(_) if spec.ir_cutoff().is_none() => {
            quad::integrate_power_singular(f, lo, -alpha_of(spec), BRUTE_TOLERANCE)?
        }
        _ => quad::integrate_panels(f, &quad::panels(0.0, lo, 0.05 * omega_q, &spec.breakpoints()), BRUTE_TOLERANCE)?,
    };
    let far = 10.0 * omega_q;
    let body = quad::integrate_panels(
        f,
        &quad::panels(lo, far, 0.05 * omega_q, &[omega_q]),
        BRUTE_TOLERANCE,
    )?;
    let tail = quad::integrate_to_infinity(f, far, BRUTE_TOLERANCE)?;
    Ok(FRAC_2_PI * omega_q * (head.value + body.value + tail.value))
}

fn alpha_of(spec: &BathSpectrum) -> f64 {
    match spec.model() {
        SpectrumModel::OneOverF { alpha, .. } => *alpha,
        _ => 0.0,
    }
}

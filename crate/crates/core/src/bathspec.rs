//! Bath spectral densities `J(ω)`, the symmetrized noise spectrum, and the
//! time-domain kernels
//!
//! ```text
//! C(τ) = ∫_0^∞ dω S̄(ω) cos ωτ,     S(τ) = ∫_0^∞ dω J(ω) sin ωτ,
//! ```
//!
//! which are the inner frequency integrals of the rate and Lamb-shift
//! formulas. Frequencies are in units of the qubit frequency and times in
//! units of its inverse.
//!
//! Zero-temperature Ohmic and `1/f^α` kernels have closed forms. Everything
//! else goes through oscillation-aware adaptive quadrature; for rate
//! integration such kernels are pre-sampled on a τ grid ([`KernelSamples`])
//! and interpolated by cubic splines.

use std::f64::consts::PI;
use std::fmt;
use std::io::BufRead;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::quad::{self, Tolerance};

/// Default quadrature targets for kernel transforms.
pub const KERNEL_TOLERANCE: Tolerance = Tolerance {
    abs: 1e-10,
    rel: 1e-8,
    max_panels: 400_000,
};

/// Lumped impedance `Z(ω)` of the environment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "element", rename_all = "kebab-case")]
pub enum Impedance {
    Resistor { r: f64 },
    Inductor { l: f64 },
    Capacitor { c: f64 },
    SeriesRl { r: f64, l: f64 },
    ParallelRc { r: f64, c: f64 },
}

impl Impedance {
    pub fn at(&self, omega: f64) -> Complex64 {
        let i = Complex64::i();
        match *self {
            Impedance::Resistor { r } => Complex64::new(r, 0.0),
            Impedance::Inductor { l } => i * omega * l,
            Impedance::Capacitor { c } => 1.0 / (i * omega * c),
            Impedance::SeriesRl { r, l } => r + i * omega * l,
            Impedance::ParallelRc { r, c } => r / (1.0 + i * omega * r * c),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Impedance::Resistor { r } => r >= 0.0,
            Impedance::Inductor { l } => l >= 0.0,
            Impedance::Capacitor { c } => c > 0.0,
            Impedance::SeriesRl { r, l } => r >= 0.0 && l >= 0.0,
            Impedance::ParallelRc { r, c } => r >= 0.0 && c >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid impedance element {self:?}")))
        }
    }
}

/// `J(ω) = Im[ iωZ / (1 + iω C̃ Z) ]` with `C̃ = C_e + C_e²/(C_J + C_e + C_g)`.
pub fn impedance_to_spectral_density<Z>(
    z: Z,
    c_e: f64,
    c_j: f64,
    c_g: f64,
    omega: f64,
) -> Result<f64>
where
    Z: Fn(f64) -> Complex64,
{
    if omega < 0.0 || !omega.is_finite() {
        return Err(Error::Domain(format!("frequency {omega} must be >= 0")));
    }
    if c_e < 0.0 || c_j < 0.0 || c_g < 0.0 {
        return Err(Error::Domain("capacitances must be >= 0".into()));
    }
    let total = c_j + c_e + c_g;
    if total <= 0.0 {
        return Err(Error::Domain("C_J + C_e + C_g must be > 0".into()));
    }
    let c_eff = c_e + c_e * c_e / total;
    let zw = z(omega);
    let i = Complex64::i();
    let num = i * omega * zw;
    if num == Complex64::new(0.0, 0.0) {
        return Ok(0.0);
    }
    let den = 1.0 + i * omega * c_eff * zw;
    if den.norm() < 1e-12 * (1.0 + (omega * c_eff * zw).norm()) {
        return Err(Error::Numerical {
            stage: "impedance".into(),
            detail: format!("resonant pole at ω = {omega}"),
            estimate: den.norm(),
        });
    }
    Ok((num / den).im)
}

/// Spectral density sampled on a frequency grid.
///
/// Interpolation is linear in `ln ω`; the density is zero outside the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedSpectrum {
    omega: Vec<f64>,
    j: Vec<f64>,
}

impl TabulatedSpectrum {
    pub fn new(omega: Vec<f64>, j: Vec<f64>) -> Result<Self> {
        if omega.len() != j.len() || omega.len() < 2 {
            return Err(Error::Domain(
                "tabulated spectrum needs at least two (ω, J) pairs".into(),
            ));
        }
        if omega.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::Domain("tabulated frequencies must be > 0".into()));
        }
        if omega.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain(
                "tabulated frequencies must be strictly increasing".into(),
            ));
        }
        if j.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(Error::Domain("tabulated J must be finite and >= 0".into()));
        }
        Ok(Self { omega, j })
    }

    /// Two-column CSV `(ω, J)` with a one-line header.
    pub fn from_csv_reader<R: BufRead>(reader: R) -> Result<Self> {
        let mut omega = Vec::new();
        let mut j = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            if n == 0 {
                continue;
            }
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut cols = line.split(',');
            let parse = |s: Option<&str>| -> Result<f64> {
                s.map(str::trim)
                    .ok_or_else(|| Error::Parse(format!("line {}: expected two columns", n + 1)))?
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", n + 1)))
            };
            omega.push(parse(cols.next())?);
            j.push(parse(cols.next())?);
        }
        Self::new(omega, j)
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_csv_reader(std::io::BufReader::new(f))
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn values(&self) -> &[f64] {
        &self.j
    }

    pub fn at(&self, w: f64) -> f64 {
        let (lo, hi) = (self.omega[0], self.omega[self.omega.len() - 1]);
        if w < lo || w > hi {
            return 0.0;
        }
        let k = match self.omega.partition_point(|&x| x <= w) {
            0 => 0,
            n if n >= self.omega.len() => self.omega.len() - 2,
            n => n - 1,
        };
        let (w0, w1) = (self.omega[k], self.omega[k + 1]);
        let s = (w.ln() - w0.ln()) / (w1.ln() - w0.ln());
        self.j[k] + s * (self.j[k + 1] - self.j[k])
    }
}

/// Spectral density families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SpectrumModel {
    /// `J(ω) = R ω e^{-ω/ω_c}`.
    Ohmic { r: f64, omega_c: f64 },
    /// `J(ω) = A / ω^α`, `0 < α < 1`.
    OneOverF { amplitude: f64, alpha: f64 },
    /// Circuit-derived density, regularized by `e^{-ω/cutoff}`.
    Impedance {
        load: Impedance,
        c_e: f64,
        c_j: f64,
        c_g: f64,
        cutoff: f64,
    },
    Tabulated(TabulatedSpectrum),
}

/// Which route produced a kernel value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelMethod {
    ClosedForm,
    Quadrature,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelValue {
    pub c: f64,
    pub s: f64,
    pub method: KernelMethod,
}

/// A bath model: spectral density plus inverse temperature.
///
/// Immutable after construction. `beta = ∞` is zero temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct BathSpectrum {
    model: SpectrumModel,
    beta: f64,
    ir_cutoff: Option<f64>,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be finite and > 0, got {v}")))
    }
}

fn nonnegative(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be finite and >= 0, got {v}")))
    }
}

impl BathSpectrum {
    pub fn new(model: SpectrumModel) -> Result<Self> {
        match &model {
            SpectrumModel::Ohmic { r, omega_c } => {
                nonnegative("R", *r)?;
                positive("omega_c", *omega_c)?;
            }
            SpectrumModel::OneOverF { amplitude, alpha } => {
                nonnegative("A", *amplitude)?;
                if !(*alpha > 0.0 && *alpha < 1.0) {
                    return Err(Error::Domain(format!("alpha must lie in (0, 1), got {alpha}")));
                }
            }
            SpectrumModel::Impedance {
                load,
                c_e,
                c_j,
                c_g,
                cutoff,
            } => {
                load.validate()?;
                nonnegative("C_e", *c_e)?;
                nonnegative("C_J", *c_j)?;
                nonnegative("C_g", *c_g)?;
                if c_e + c_j + c_g <= 0.0 {
                    return Err(Error::Domain("C_J + C_e + C_g must be > 0".into()));
                }
                positive("cutoff", *cutoff)?;
            }
            SpectrumModel::Tabulated(_) => {}
        }
        Ok(Self {
            model,
            beta: f64::INFINITY,
            ir_cutoff: None,
        })
    }

    pub fn ohmic(r: f64, omega_c: f64) -> Result<Self> {
        Self::new(SpectrumModel::Ohmic { r, omega_c })
    }

    pub fn one_over_f(amplitude: f64, alpha: f64) -> Result<Self> {
        Self::new(SpectrumModel::OneOverF { amplitude, alpha })
    }

    pub fn tabulated(spectrum: TabulatedSpectrum) -> Self {
        Self {
            model: SpectrumModel::Tabulated(spectrum),
            beta: f64::INFINITY,
            ir_cutoff: None,
        }
    }

    /// Sets the inverse temperature. Finite `β` on a `1/f^α` bath requires an
    /// infrared cutoff, since `coth(βω/2) ω^{-α}` is not integrable at 0.
    pub fn with_beta(mut self, beta: f64) -> Result<Self> {
        if !(beta > 0.0) || beta.is_nan() {
            return Err(Error::Domain(format!("beta must be > 0 (or infinite), got {beta}")));
        }
        self.beta = beta;
        self.check_infrared()?;
        Ok(self)
    }

    /// Zeroes `J` below `omega_ir`.
    pub fn with_ir_cutoff(mut self, omega_ir: f64) -> Result<Self> {
        positive("ir_cutoff", omega_ir)?;
        self.ir_cutoff = Some(omega_ir);
        Ok(self)
    }

    fn check_infrared(&self) -> Result<()> {
        if matches!(self.model, SpectrumModel::OneOverF { .. })
            && self.beta.is_finite()
            && self.ir_cutoff.is_none()
        {
            return Err(Error::Domain(
                "finite-temperature 1/f^alpha bath needs an explicit ir_cutoff > 0".into(),
            ));
        }
        Ok(())
    }

    pub fn model(&self) -> &SpectrumModel {
        &self.model
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn ir_cutoff(&self) -> Option<f64> {
        self.ir_cutoff
    }

    pub fn is_zero_temperature(&self) -> bool {
        self.beta.is_infinite()
    }

    /// Short model name used in metadata.
    pub fn kind_name(&self) -> &'static str {
        match self.model {
            SpectrumModel::Ohmic { .. } => "ohmic",
            SpectrumModel::OneOverF { .. } => "one-over-f",
            SpectrumModel::Impedance { .. } => "impedance",
            SpectrumModel::Tabulated(_) => "tabulated",
        }
    }

    /// `J(ω)` without argument checks; `ω > 0` assumed.
    pub(crate) fn density(&self, w: f64) -> f64 {
        if let Some(ir) = self.ir_cutoff {
            if w < ir {
                return 0.0;
            }
        }
        match &self.model {
            SpectrumModel::Ohmic { r, omega_c } => r * w * (-w / omega_c).exp(),
            SpectrumModel::OneOverF { amplitude, alpha } => amplitude * w.powf(-alpha),
            SpectrumModel::Impedance {
                load,
                c_e,
                c_j,
                c_g,
                cutoff,
            } => {
                let j = impedance_to_spectral_density(|x| load.at(x), *c_e, *c_j, *c_g, w)
                    .unwrap_or(0.0);
                j.max(0.0) * (-w / cutoff).exp()
            }
            SpectrumModel::Tabulated(t) => t.at(w),
        }
    }

    pub fn spectral_density(&self, omega: f64) -> Result<f64> {
        if omega < 0.0 || omega.is_nan() {
            return Err(Error::Domain(format!("frequency {omega} must be >= 0")));
        }
        match &self.model {
            SpectrumModel::OneOverF { .. } if omega == 0.0 => {
                if self.ir_cutoff.is_some() {
                    Ok(0.0)
                } else {
                    Err(Error::Domain("1/f^alpha density diverges at ω = 0".into()))
                }
            }
            SpectrumModel::Impedance {
                load,
                c_e,
                c_j,
                c_g,
                cutoff,
            } => {
                if self.ir_cutoff.is_some_and(|ir| omega < ir) {
                    return Ok(0.0);
                }
                let j = impedance_to_spectral_density(|x| load.at(x), *c_e, *c_j, *c_g, omega)?;
                Ok(j.max(0.0) * (-omega / cutoff).exp())
            }
            _ if omega == 0.0 => Ok(0.0),
            _ => Ok(self.density(omega)),
        }
    }

    /// `coth(βω/2)·J(ω)`.
    pub fn symmetrized_psd(&self, omega: f64) -> Result<f64> {
        if !(omega > 0.0) {
            return Err(Error::Domain(format!("frequency {omega} must be > 0")));
        }
        let j = self.spectral_density(omega)?;
        Ok(coth_half(self.beta, omega) * j)
    }

    /// `2 n(ω) J(ω) = (coth(βω/2) - 1) J(ω)`, the thermal excess of `S̄`.
    fn thermal_excess(&self, w: f64) -> f64 {
        if self.beta.is_infinite() || w <= 0.0 {
            return 0.0;
        }
        let x = self.beta * w;
        // 2/(e^x - 1)
        2.0 / x.exp_m1() * self.density(w)
    }

    /// Whether the zero-temperature part of the kernel is available in closed form.
    pub fn has_closed_form_kernel(&self) -> bool {
        matches!(
            self.model,
            SpectrumModel::Ohmic { .. } | SpectrumModel::OneOverF { .. }
        )
    }

    /// `C, S ~ τ^p` as `τ → 0`, when the kernels are singular there.
    pub fn kernel_endpoint_exponent(&self) -> Option<f64> {
        match self.model {
            SpectrumModel::OneOverF { alpha, .. } => Some(alpha - 1.0),
            _ => None,
        }
    }

    /// Upper frequency beyond which `J` is negligible, with a width for
    /// resolving its features.
    fn support(&self) -> (f64, f64) {
        match &self.model {
            SpectrumModel::Ohmic { omega_c, .. } => (omega_c * 50.0, omega_c * 0.5),
            SpectrumModel::OneOverF { .. } => (f64::INFINITY, 0.5),
            SpectrumModel::Impedance { cutoff, .. } => (cutoff * 45.0, cutoff.min(1.0) * 0.25),
            SpectrumModel::Tabulated(t) => {
                let w = t.omega();
                let min_gap = w
                    .windows(2)
                    .map(|p| p[1] - p[0])
                    .fold(f64::INFINITY, f64::min);
                (w[w.len() - 1], (w[w.len() - 1] / 64.0).max(min_gap))
            }
        }
    }

    pub(crate) fn breakpoints(&self) -> Vec<f64> {
        let mut b = Vec::new();
        if let Some(ir) = self.ir_cutoff {
            b.push(ir);
        }
        if let SpectrumModel::Tabulated(t) = &self.model {
            b.push(t.omega()[0]);
        }
        b
    }

    /// `(C(τ), S(τ))` at a single time.
    pub fn kernel_transforms(&self, tau: f64) -> Result<KernelValue> {
        self.kernel_transforms_with(tau, KERNEL_TOLERANCE)
    }

    pub fn kernel_transforms_with(&self, tau: f64, tol: Tolerance) -> Result<KernelValue> {
        if tau < 0.0 || tau.is_nan() {
            return Err(Error::Domain(format!("time {tau} must be >= 0")));
        }
        if tau == 0.0 && self.kernel_endpoint_exponent().is_some() {
            return Err(Error::Domain(
                "1/f^alpha kernels diverge at τ = 0; use τ > 0".into(),
            ));
        }
        let (mut c, mut s, method) = match self.closed_form_zero_temperature(tau) {
            Some((c, s)) => (c, s, KernelMethod::ClosedForm),
            None => {
                let (c, s) = self.quadrature_zero_temperature(tau, tol)?;
                (c, s, KernelMethod::Quadrature)
            }
        };
        if let Some((dc, ds)) = self.infrared_correction(tau, tol)? {
            c -= dc;
            s -= ds;
        }
        if !self.is_zero_temperature() {
            c += self.thermal_cosine(tau, tol)?;
        }
        Ok(KernelValue { c, s, method })
    }

    fn closed_form_zero_temperature(&self, tau: f64) -> Option<(f64, f64)> {
        match self.model {
            SpectrumModel::Ohmic { r, omega_c } => Some(ohmic_kernel(r, omega_c, tau)),
            SpectrumModel::OneOverF { amplitude, alpha } => {
                Some(power_law_kernel(amplitude, alpha, tau))
            }
            _ => None,
        }
    }

    /// For `1/f^α` with an infrared cutoff: the part `∫_0^{ω_ir}` that the
    /// closed form includes but the cut density does not.
    fn infrared_correction(&self, tau: f64, tol: Tolerance) -> Result<Option<(f64, f64)>> {
        let (SpectrumModel::OneOverF { amplitude, alpha }, Some(ir)) = (&self.model, self.ir_cutoff)
        else {
            return Ok(None);
        };
        let dc = quad::integrate_power_singular(
            |w| amplitude * w.powf(-alpha) * (w * tau).cos(),
            ir,
            -alpha,
            tol,
        )?;
        let ds = quad::integrate_power_singular(
            |w| amplitude * w.powf(-alpha) * (w * tau).sin(),
            ir,
            -alpha,
            tol,
        )?;
        Ok(Some((dc.value, ds.value)))
    }

    fn quadrature_zero_temperature(&self, tau: f64, tol: Tolerance) -> Result<(f64, f64)> {
        let (upper, feature) = self.support();
        let width = oscillation_width(tau).min(feature);
        let cuts = quad::panels(0.0, upper, width, &self.breakpoints());
        let c = quad::integrate_panels(|w| self.density(w) * (w * tau).cos(), &cuts, tol)?;
        let s = quad::integrate_panels(|w| self.density(w) * (w * tau).sin(), &cuts, tol)?;
        Ok((c.value, s.value))
    }

    fn thermal_cosine(&self, tau: f64, tol: Tolerance) -> Result<f64> {
        let (upper, feature) = self.support();
        let thermal_upper = (60.0 / self.beta).min(upper);
        let lower = self.ir_cutoff.unwrap_or(0.0);
        if thermal_upper <= lower {
            return Ok(0.0);
        }
        let width = oscillation_width(tau).min(feature).min(0.5 / self.beta.max(1e-300) + feature);
        let cuts = quad::panels(lower, thermal_upper, width, &self.breakpoints());
        let r = quad::integrate_panels(|w| self.thermal_excess(w) * (w * tau).cos(), &cuts, tol)?;
        Ok(r.value)
    }

    /// Builds the kernel used by the rate integrals, valid on `[0, horizon]`.
    ///
    /// Closed forms are used directly; any quadrature component is sampled
    /// on a uniform grid and spline-interpolated. Sampled components are
    /// taken as zero beyond the horizon.
    pub fn kernel(&self, horizon: f64, tol: Tolerance) -> Result<Arc<dyn Kernel>> {
        let closed: Option<Box<dyn Kernel>> = match self.model {
            SpectrumModel::Ohmic { r, omega_c } => Some(Box::new(OhmicKernel { r, omega_c })),
            SpectrumModel::OneOverF { amplitude, alpha } => {
                Some(Box::new(PowerLawKernel::new(amplitude, alpha)))
            }
            _ => None,
        };
        let needs_samples = closed.is_none() || !self.is_zero_temperature() || self.ir_cutoff.is_some();
        if !needs_samples {
            let k: Arc<dyn Kernel> = match closed {
                Some(k) => Arc::from(k),
                None => unreachable!(),
            };
            return Ok(k);
        }
        let (upper, feature) = self.support();
        let zero_t = self.is_zero_temperature();
        let samples = if closed.is_none() {
            let lower = self.breakpoints().into_iter().fold(0.0, f64::max);
            let dtau = (PI / (16.0 * upper.max(1.0))).min(0.05);
            let cos_weight = |w: f64| coth_half(self.beta, w) * self.density(w);
            let sin_weight = |w: f64| self.density(w);
            fourier_samples(lower, upper, feature, horizon, dtau, &cos_weight, Some(&sin_weight))?
        } else {
            let lower = self.ir_cutoff.unwrap_or(0.0);
            let mut bandwidth = if upper.is_finite() { upper } else { 1.0 };
            if !zero_t {
                bandwidth = bandwidth.min(60.0 / self.beta).max(lower);
            }
            let dtau = (PI / (16.0 * bandwidth.max(1.0))).min(0.05);
            let thermal_upper = (60.0 / self.beta).min(upper);
            let mut samples = if !zero_t && thermal_upper > lower {
                let excess = |w: f64| self.thermal_excess(w);
                fourier_samples(lower, thermal_upper, feature, horizon, dtau, &excess, None)?
            } else {
                let horizon = horizon.max(dtau * 4.0);
                let n = (horizon / dtau).ceil() as usize + 1;
                KernelSamples {
                    tau: (0..n).map(|k| k as f64 * dtau).collect(),
                    c: vec![0.0; n],
                    s: vec![0.0; n],
                    method: KernelMethod::Quadrature,
                }
            };
            if self.ir_cutoff.is_some() {
                let corrections: Vec<(f64, f64)> = samples
                    .tau
                    .par_iter()
                    .map(|&tau| Ok(self.infrared_correction(tau, tol)?.unwrap_or((0.0, 0.0))))
                    .collect::<Result<_>>()?;
                for (k, (dc, ds)) in corrections.into_iter().enumerate() {
                    samples.c[k] -= dc;
                    samples.s[k] -= ds;
                }
            }
            samples
        };
        Ok(Arc::new(CompositeKernel {
            closed,
            sampled: Some(SampledKernel::new(samples)?),
        }))
    }
}

type Weight<'a> = &'a (dyn Fn(f64) -> f64 + Sync);

/// `∫ cos_weight(ω) cos ωτ dω` and `∫ sin_weight(ω) sin ωτ dω` over
/// `[lower, upper]` on a uniform τ grid covering `[0, horizon]` with spacing
/// at most `dtau_max`.
///
/// The frequency range is cut into equal panels of width `h` with
/// Gauss-Legendre nodes. For one node index the sum over panels at
/// `τ_k = k·dτ` is a DFT once `h·dτ = 2π/M`, so the whole grid costs one FFT
/// per node index instead of one quadrature per τ. Both weights must be
/// smooth on each panel up to the `feature` scale.
fn fourier_samples(
    lower: f64,
    upper: f64,
    feature: f64,
    horizon: f64,
    dtau_max: f64,
    cos_weight: Weight,
    sin_weight: Option<Weight>,
) -> Result<KernelSamples> {
    if !(upper.is_finite() && upper > lower) {
        return Err(Error::Domain("density has no finite support to sample".into()));
    }
    let horizon = horizon.max(4.0 * dtau_max);
    // hτ/2 ≤ 8 keeps the 20-point rule exact to ~1e-12 on every panel; the
    // span cap bounds the O(h²) error of kinks in tabulated densities.
    // Narrow panels are cheap: the FFT length is set by dτ, not by h.
    let width = feature.min(16.0 / horizon).min((upper - lower) / 4096.0);
    let panels = ((upper - lower) / width).ceil() as usize;
    let h = (upper - lower) / panels as f64;
    let m = panels
        .max((2.0 * PI / (h * dtau_max)).ceil() as usize)
        .next_power_of_two();
    let dtau = 2.0 * PI / (m as f64 * h);
    let n = (horizon / dtau).ceil() as usize + 1;
    let fft = rustfft::FftPlanner::new().plan_fft_inverse(m);
    let rule = quad::gl20();
    // Σ_p a_p e^{iω τ_k} for the nodes ω = offset + p·h of one node index
    let transform = |weight: Weight, offset: f64, scale: f64| -> Vec<Complex64> {
        let mut buf = vec![Complex64::default(); m];
        for (p, slot) in buf.iter_mut().take(panels).enumerate() {
            *slot = (scale * weight(offset + p as f64 * h)).into();
        }
        fft.process(&mut buf);
        (0..n)
            .map(|k| {
                let (sn, cs) = (offset * k as f64 * dtau).sin_cos();
                buf[k % m] * Complex64::new(cs, sn)
            })
            .collect()
    };
    let parts: Vec<(Vec<f64>, Vec<f64>)> = rule
        .nodes()
        .par_iter()
        .zip(rule.weights())
        .map(|(&u, &w)| {
            let offset = lower + 0.5 * h * (1.0 + u);
            let scale = 0.5 * h * w;
            let c = transform(cos_weight, offset, scale).iter().map(|z| z.re).collect();
            let s = match sin_weight {
                Some(f) => transform(f, offset, scale).iter().map(|z| z.im).collect(),
                None => vec![0.0; n],
            };
            (c, s)
        })
        .collect();
    let mut c = vec![0.0; n];
    let mut s = vec![0.0; n];
    for (pc, ps) in parts {
        for k in 0..n {
            c[k] += pc[k];
            s[k] += ps[k];
        }
    }
    Ok(KernelSamples {
        tau: (0..n).map(|k| k as f64 * dtau).collect(),
        c,
        s,
        method: KernelMethod::Quadrature,
    })
}

impl fmt::Display for BathSpectrum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.model {
            SpectrumModel::Ohmic { r, omega_c } => write!(f, "ohmic(R={r}, ω_c={omega_c})")?,
            SpectrumModel::OneOverF { amplitude, alpha } => {
                write!(f, "1/f^α(A={amplitude}, α={alpha})")?
            }
            SpectrumModel::Impedance { load, cutoff, .. } => {
                write!(f, "impedance({load:?}, cutoff={cutoff})")?
            }
            SpectrumModel::Tabulated(t) => write!(f, "tabulated({} points)", t.omega().len())?,
        }
        if self.beta.is_finite() {
            write!(f, " β={}", self.beta)?;
        }
        Ok(())
    }
}

fn coth_half(beta: f64, w: f64) -> f64 {
    if beta.is_infinite() {
        return 1.0;
    }
    let x = beta * w;
    // coth(x/2) = 1 + 2/(e^x - 1)
    1.0 + 2.0 / x.exp_m1()
}

fn oscillation_width(tau: f64) -> f64 {
    if tau > 0.0 {
        PI / (4.0 * tau)
    } else {
        f64::INFINITY
    }
}

/// Closed-form zero-temperature Ohmic kernels, `x = ω_c τ`:
/// `C = R ω_c² (1 - x²)/(1 + x²)²`, `S = 2 R ω_c² x/(1 + x²)²`.
pub fn ohmic_kernel(r: f64, omega_c: f64, tau: f64) -> (f64, f64) {
    let x = omega_c * tau;
    let d = 1.0 + x * x;
    let scale = r * omega_c * omega_c / (d * d);
    (scale * (1.0 - x * x), scale * 2.0 * x)
}

/// Closed-form zero-temperature `1/f^α` kernels:
/// `C = A Γ(1-α) sin(πα/2) τ^{α-1}`, `S = A Γ(1-α) cos(πα/2) τ^{α-1}`.
pub fn power_law_kernel(amplitude: f64, alpha: f64, tau: f64) -> (f64, f64) {
    let p = amplitude * gamma(1.0 - alpha) * tau.powf(alpha - 1.0);
    let half = 0.5 * PI * alpha;
    (p * half.sin(), p * half.cos())
}

/// Sampled `C(τ)` and `S(τ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSamples {
    pub tau: Vec<f64>,
    pub c: Vec<f64>,
    pub s: Vec<f64>,
    pub method: KernelMethod,
}

/// Evaluates the kernel transforms on `taus` in parallel.
pub fn sample_kernel(spec: &BathSpectrum, taus: &[f64], tol: Tolerance) -> Result<KernelSamples> {
    if taus.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Grid("τ grid must be strictly increasing".into()));
    }
    let vals: Vec<KernelValue> = taus
        .par_iter()
        .map(|&t| spec.kernel_transforms_with(t, tol))
        .collect::<Result<_>>()?;
    let method = vals.first().map_or(KernelMethod::ClosedForm, |v| v.method);
    Ok(KernelSamples {
        tau: taus.to_vec(),
        c: vals.iter().map(|v| v.c).collect(),
        s: vals.iter().map(|v| v.s).collect(),
        method,
    })
}

/// Time-domain kernel feeding the outer rate integrals.
pub trait Kernel: Send + Sync + fmt::Debug {
    /// `(C(τ), S(τ))`; `τ > 0` when the kernel is endpoint-singular.
    fn eval(&self, tau: f64) -> (f64, f64);

    /// Exponent `p` with `C, S ~ τ^p` near 0, if singular.
    fn endpoint_exponent(&self) -> Option<f64> {
        None
    }

    /// Local time scale over which the kernel changes appreciably.
    fn timescale(&self, tau: f64) -> f64;
}

#[derive(Debug, Clone, Copy)]
pub struct OhmicKernel {
    pub r: f64,
    pub omega_c: f64,
}

impl Kernel for OhmicKernel {
    fn eval(&self, tau: f64) -> (f64, f64) {
        ohmic_kernel(self.r, self.omega_c, tau)
    }

    fn timescale(&self, tau: f64) -> f64 {
        1.0 / self.omega_c + tau
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PowerLawKernel {
    alpha: f64,
    pref_c: f64,
    pref_s: f64,
}

impl PowerLawKernel {
    pub fn new(amplitude: f64, alpha: f64) -> Self {
        let p = amplitude * gamma(1.0 - alpha);
        let half = 0.5 * PI * alpha;
        Self {
            alpha,
            pref_c: p * half.sin(),
            pref_s: p * half.cos(),
        }
    }
}

impl Kernel for PowerLawKernel {
    fn eval(&self, tau: f64) -> (f64, f64) {
        let x = tau.powf(self.alpha - 1.0);
        (self.pref_c * x, self.pref_s * x)
    }

    fn endpoint_exponent(&self) -> Option<f64> {
        Some(self.alpha - 1.0)
    }

    fn timescale(&self, tau: f64) -> f64 {
        tau
    }
}

/// Cubic splines through uniformly spaced kernel samples; zero past the last
/// sample.
#[derive(Debug, Clone)]
pub struct SampledKernel {
    t0: f64,
    dt: f64,
    c: Vec<f64>,
    s: Vec<f64>,
    c2: Vec<f64>,
    s2: Vec<f64>,
}

impl SampledKernel {
    pub fn new(samples: KernelSamples) -> Result<Self> {
        let n = samples.tau.len();
        if n < 3 {
            return Err(Error::Grid("need at least three kernel samples".into()));
        }
        let dt = samples.tau[1] - samples.tau[0];
        let uniform = samples
            .tau
            .windows(2)
            .all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-9 * dt.abs().max(1.0));
        if !uniform || dt <= 0.0 {
            return Err(Error::Grid("kernel samples must be uniformly spaced".into()));
        }
        let c2 = spline_second_derivatives(&samples.c, dt, samples.tau[0] == 0.0);
        let s2 = spline_second_derivatives(&samples.s, dt, false);
        Ok(Self {
            t0: samples.tau[0],
            dt,
            c: samples.c,
            s: samples.s,
            c2,
            s2,
        })
    }

    fn horizon(&self) -> f64 {
        self.t0 + self.dt * (self.c.len() - 1) as f64
    }
}

/// Cubic-spline second derivatives, zero at the far end. With `even_start`
/// the data are mirrored about the first node (`y₋₁ = y₁`, `m₋₁ = m₁`), as
/// for `C(τ)` sampled from `τ = 0`; otherwise the start is natural too, which
/// is already the mirror condition for the odd `S(τ)`.
fn spline_second_derivatives(y: &[f64], h: f64, even_start: bool) -> Vec<f64> {
    let n = y.len();
    let mut m = vec![0.0; n];
    let start = if even_start { 0 } else { 1 };
    // tridiagonal rows a·m[i-1] + b·m[i] + c·m[i+1] = r over the free nodes
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    for i in start..n - 1 {
        let (a, c, r) = if i == 0 {
            (0.0, 2.0, 12.0 * (y[1] - y[0]) / (h * h))
        } else {
            (1.0, 1.0, 6.0 * (y[i + 1] - 2.0 * y[i] + y[i - 1]) / (h * h))
        };
        let (cprev, dprev) = if i > start { (cp[i - 1], dp[i - 1]) } else { (0.0, 0.0) };
        let denom = 4.0 - a * cprev;
        cp[i] = c / denom;
        dp[i] = (r - a * dprev) / denom;
    }
    for i in (start..n - 1).rev() {
        m[i] = dp[i] - cp[i] * m[i + 1];
    }
    m
}

fn spline_eval(y: &[f64], m: &[f64], t0: f64, h: f64, t: f64) -> f64 {
    let x = (t - t0) / h;
    let k = (x.floor() as usize).min(y.len() - 2);
    let a = (k + 1) as f64 - x;
    let b = x - k as f64;
    a * y[k] + b * y[k + 1] + ((a * a * a - a) * m[k] + (b * b * b - b) * m[k + 1]) * h * h / 6.0
}

impl Kernel for SampledKernel {
    fn eval(&self, tau: f64) -> (f64, f64) {
        if tau < self.t0 || tau > self.horizon() {
            return (0.0, 0.0);
        }
        (
            spline_eval(&self.c, &self.c2, self.t0, self.dt, tau),
            spline_eval(&self.s, &self.s2, self.t0, self.dt, tau),
        )
    }

    fn timescale(&self, _tau: f64) -> f64 {
        4.0 * self.dt
    }
}

/// Closed-form part plus a sampled remainder.
#[derive(Debug)]
pub struct CompositeKernel {
    closed: Option<Box<dyn Kernel>>,
    sampled: Option<SampledKernel>,
}

impl Kernel for CompositeKernel {
    fn eval(&self, tau: f64) -> (f64, f64) {
        let (mut c, mut s) = (0.0, 0.0);
        if let Some(k) = &self.closed {
            let v = k.eval(tau);
            c += v.0;
            s += v.1;
        }
        if let Some(k) = &self.sampled {
            let v = k.eval(tau);
            c += v.0;
            s += v.1;
        }
        (c, s)
    }

    fn endpoint_exponent(&self) -> Option<f64> {
        self.closed.as_ref().and_then(|k| k.endpoint_exponent())
    }

    fn timescale(&self, tau: f64) -> f64 {
        let a = self.closed.as_ref().map_or(f64::INFINITY, |k| k.timescale(tau));
        let b = self.sampled.as_ref().map_or(f64::INFINITY, |k| {
            if tau <= k.horizon() {
                k.timescale(tau)
            } else {
                f64::INFINITY
            }
        });
        a.min(b)
    }
}

//! Observable signatures: Bloch components, precession spectra and the
//! Ramsey X/Y probability difference.

use std::f64::consts::PI;

use nalgebra::Matrix2;
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::propagator::{apply_map, PropagatorState, QubitState};

/// `(⟨σ_x⟩, ⟨σ_y⟩, ⟨σ_z⟩)` along a trajectory from the map parameters.
pub fn sigma_expectations(states: &[PropagatorState], rho0: &QubitState) -> Vec<[f64; 3]> {
    let (r01, r10) = (rho0.rho01(), rho0.rho10());
    let z0 = rho0.bloch()[2];
    states
        .iter()
        .map(|ps| {
            let c = Complex64::from_polar((-0.5 * ps.decay).exp(), ps.phase)
                * (r01 * ps.x_plus + r10 * ps.x_minus);
            [
                2.0 * c.re,
                -2.0 * c.im,
                ps.relaxation + (-ps.decay).exp() * z0,
            ]
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Window {
    #[default]
    Hann,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumOptions {
    pub window: Window,
    /// Total transform length as a multiple of the record length.
    pub zero_padding: usize,
    pub omega_q: f64,
    /// Shortest accepted record, in precession periods.
    pub min_periods: f64,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        Self {
            window: Window::Hann,
            zero_padding: 8,
            omega_q: 1.0,
            min_periods: 20.0,
        }
    }
}

/// One-sided magnitude spectrum on an angular-frequency axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub omega: Vec<f64>,
    pub magnitude: Vec<f64>,
}

impl Spectrum {
    /// Frequency of the largest magnitude in `[lo, hi]`.
    pub fn peak_in(&self, lo: f64, hi: f64) -> Option<(f64, f64)> {
        self.omega
            .iter()
            .zip(&self.magnitude)
            .filter(|(w, _)| **w >= lo && **w <= hi)
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(w, m)| (*w, *m))
    }

    /// Largest magnitude in `[lo, hi]`.
    pub fn max_in(&self, lo: f64, hi: f64) -> f64 {
        self.peak_in(lo, hi).map_or(0.0, |p| p.1)
    }

    pub fn bin_width(&self) -> f64 {
        self.omega.get(1).copied().unwrap_or(0.0)
    }
}

/// `|Σ w_n x_n e^{-iω t_n}| Δt` for `ω = 2πk/(N Δt)`, `k = 0..N/2`.
pub fn precession_spectrum(t: &[f64], values: &[f64], opts: &SpectrumOptions) -> Result<Spectrum> {
    let n = t.len();
    if n != values.len() || n < 4 {
        return Err(Error::Grid("need at least four samples of matching length".into()));
    }
    let dt = (t[n - 1] - t[0]) / (n - 1) as f64;
    if !(dt > 0.0) || t.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-9 * dt) {
        return Err(Error::Grid("spectrum needs a uniform time grid".into()));
    }
    let periods = (t[n - 1] - t[0]) * opts.omega_q / (2.0 * PI);
    if periods < opts.min_periods {
        return Err(Error::Grid(format!(
            "record spans {periods:.2} periods, fewer than {}",
            opts.min_periods
        )));
    }
    if opts.zero_padding == 0 {
        return Err(Error::Domain("zero_padding must be >= 1".into()));
    }
    let len = n * opts.zero_padding;
    let mut buf: Vec<Complex64> = values
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let w = match opts.window {
                Window::Hann => 0.5 - 0.5 * (2.0 * PI * k as f64 / (n - 1) as f64).cos(),
                Window::None => 1.0,
            };
            Complex64::new(v * w, 0.0)
        })
        .collect();
    buf.resize(len, Complex64::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    let dw = 2.0 * PI / (len as f64 * dt);
    let half = len / 2 + 1;
    Ok(Spectrum {
        omega: (0..half).map(|k| k as f64 * dw).collect(),
        magnitude: buf[..half].iter().map(|z| z.norm() * dt).collect(),
    })
}

/// Frame in which the Ramsey delay is described.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Frame {
    /// The free precession `ω_q t` is kept in `φ`.
    #[default]
    Lab,
    /// `φ − ω_q t`: the second pulse is referenced to the qubit frequency.
    Rotating,
}

fn frame_phase(ps: &PropagatorState, omega_q: f64, frame: Frame) -> f64 {
    match frame {
        Frame::Lab => ps.phase,
        Frame::Rotating => ps.phase - omega_q * ps.t,
    }
}

/// `Δp = p(0|YY) − p(0|XX) = e^{-Γ/2} Re[e^{iφ} x₋]`.
pub fn ramsey_delta_p(ps: &PropagatorState) -> f64 {
    ramsey_delta_p_in(ps, 1.0, Frame::Lab)
}

pub fn ramsey_delta_p_in(ps: &PropagatorState, omega_q: f64, frame: Frame) -> f64 {
    let phi = frame_phase(ps, omega_q, frame);
    (-0.5 * ps.decay).exp() * (phi.cos() * ps.x_minus.re - phi.sin() * ps.x_minus.im)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RamseyAxis {
    X,
    Y,
}

/// `e^{-iθσ/2}` about the given axis.
pub fn rotation(axis: RamseyAxis, theta: f64) -> Matrix2<Complex64> {
    let c = Complex64::new((0.5 * theta).cos(), 0.0);
    let s = (0.5 * theta).sin();
    match axis {
        RamseyAxis::X => Matrix2::new(c, Complex64::new(0.0, -s), Complex64::new(0.0, -s), c),
        RamseyAxis::Y => Matrix2::new(c, Complex64::new(-s, 0.0), Complex64::new(s, 0.0), c),
    }
}

/// Ground-state probability after pulse, delay and inverse pulse.
///
/// Y: `R_y(π/2)` then `R_y(−π/2)`; X: `R_x(−π/2)` then `R_x(π/2)`, so both
/// variants prepare `|0⟩ + |1⟩` and `|0⟩ + i|1⟩` respectively.
pub fn ramsey_protocol_direct(ps: &PropagatorState, axis: RamseyAxis) -> f64 {
    ramsey_protocol_direct_in(ps, axis, 1.0, Frame::Lab)
}

pub fn ramsey_protocol_direct_in(
    ps: &PropagatorState,
    axis: RamseyAxis,
    omega_q: f64,
    frame: Frame,
) -> f64 {
    let theta = match axis {
        RamseyAxis::Y => PI / 2.0,
        RamseyAxis::X => -PI / 2.0,
    };
    let prep = rotation(axis, theta);
    let undo = rotation(axis, -theta);
    let ground = QubitState::ground();
    let rho0 = QubitState::from_matrix_unchecked(prep * ground.matrix() * prep.adjoint());
    let mut map = *ps;
    map.phase = frame_phase(ps, omega_q, frame);
    let rho = apply_map(&map.choi(), &rho0);
    let out = undo * rho.matrix() * undo.adjoint();
    out[(0, 0)].re
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Trace,
    Spectrum,
    Ramsey,
}

/// Named columns over a strictly increasing abscissa, plus metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub kind: ExperimentKind,
    pub abscissa_name: String,
    pub abscissa: Vec<f64>,
    pub columns: Vec<(String, Vec<f64>)>,
    /// Free-form metadata text, emitted as `#`-prefixed header lines.
    pub metadata: String,
}

impl ExperimentResult {
    pub fn new(kind: ExperimentKind, abscissa_name: &str, abscissa: Vec<f64>) -> Result<Self> {
        if abscissa.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Grid(format!("{abscissa_name} must be strictly increasing")));
        }
        Ok(Self {
            kind,
            abscissa_name: abscissa_name.to_string(),
            abscissa,
            columns: Vec::new(),
            metadata: String::new(),
        })
    }

    pub fn push_column(&mut self, name: &str, values: Vec<f64>) -> Result<()> {
        if values.len() != self.abscissa.len() {
            return Err(Error::Grid(format!(
                "column {name} has {} values for {} rows",
                values.len(),
                self.abscissa.len()
            )));
        }
        self.columns.push((name.to_string(), values));
        Ok(())
    }

    pub fn with_metadata(mut self, metadata: impl Into<String>) -> Self {
        self.metadata = metadata.into();
        self
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    /// CSV with `#` metadata lines, a header row and 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for line in self.metadata.lines() {
            s.push_str("# ");
            s.push_str(line);
            s.push('\n');
        }
        s.push_str(&self.abscissa_name);
        for (name, _) in &self.columns {
            s.push(',');
            s.push_str(name);
        }
        s.push('\n');
        for (i, x) in self.abscissa.iter().enumerate() {
            s.push_str(&format_number(*x));
            for (_, col) in &self.columns {
                s.push(',');
                s.push_str(&format_number(col[i]));
            }
            s.push('\n');
        }
        s
    }
}

/// 17 significant digits in scientific notation.
pub fn format_number(x: f64) -> String {
    format!("{x:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::ConstantRates;
    use crate::propagator::{markovian_propagator, solve_coherence, SolveOptions};
    use approx::assert_relative_eq;

    #[test]
    fn rotation_conventions() {
        let g = nalgebra::Vector2::new(Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
        let y = rotation(RamseyAxis::Y, PI / 2.0) * g;
        assert_relative_eq!(y[0].re, y[1].re, epsilon = 1e-15);
        assert!(y[1].im.abs() < 1e-15);
        let x = rotation(RamseyAxis::X, -PI / 2.0) * g;
        assert_relative_eq!(x[1].im, x[0].re, epsilon = 1e-15);
        assert!(x[1].re.abs() < 1e-15);
    }

    #[test]
    fn noiseless_ramsey() {
        for td in [0.0, 0.7, 2.0 * PI, 5.3] {
            let ps = markovian_propagator(0.0, 0.0, 0.0, 0.0, 1.0, td).unwrap();
            for axis in [RamseyAxis::X, RamseyAxis::Y] {
                let lab = ramsey_protocol_direct(&ps, axis);
                assert_relative_eq!(lab, (0.5 * td).cos().powi(2), epsilon = 1e-14);
                let rot = ramsey_protocol_direct_in(&ps, axis, 1.0, Frame::Rotating);
                assert_relative_eq!(rot, 1.0, epsilon = 1e-14);
            }
            assert_eq!(ramsey_delta_p(&ps), 0.0);
        }
    }

    #[test]
    fn direct_protocol_matches_closed_form() {
        let rates = ConstantRates::new(1.6, 0.1, -0.7, 1.0);
        let grid: Vec<f64> = (0..50).map(|k| 0.37 * k as f64).collect();
        let traj = solve_coherence(&rates, 0.05, &grid, &SolveOptions::default()).unwrap();
        for ps in &traj.states {
            let d = ramsey_protocol_direct(ps, RamseyAxis::Y) - ramsey_protocol_direct(ps, RamseyAxis::X);
            assert!((d - ramsey_delta_p(ps)).abs() < 1e-12);
        }
        assert!(traj.states.iter().any(|ps| ramsey_delta_p(ps).abs() > 1e-4));
    }

    #[test]
    fn expectations_match_map() {
        let rates = ConstantRates::new(1.6, 0.1, -0.7, 1.0);
        let grid: Vec<f64> = (0..30).map(|k| 0.5 * k as f64).collect();
        let traj = solve_coherence(&rates, 0.05, &grid, &SolveOptions::default()).unwrap();
        let rho = QubitState::from_bloch(0.4, -0.3, 0.6).unwrap();
        let s = sigma_expectations(&traj.states, &rho);
        for (ps, v) in traj.states.iter().zip(&s) {
            let out = apply_map(&ps.choi(), &rho);
            let b = out.bloch();
            for i in 0..3 {
                assert!((b[i] - v[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn spectrum_peak_of_damped_cosine() {
        let dt = 0.1;
        let t: Vec<f64> = (0..4000).map(|k| k as f64 * dt).collect();
        let w0 = 1.013;
        let x: Vec<f64> = t.iter().map(|&s| (-s / 300.0).exp() * (w0 * s).cos()).collect();
        let sp = precession_spectrum(&t, &x, &SpectrumOptions::default()).unwrap();
        let (w, _) = sp.peak_in(0.5, 2.0).unwrap();
        assert!((w - w0).abs() <= sp.bin_width());
        let short: Vec<f64> = t[..100].to_vec();
        assert!(precession_spectrum(&short, &x[..100], &SpectrumOptions::default()).is_err());
        let mut bad = t.clone();
        bad[7] += 0.01;
        assert!(precession_spectrum(&bad, &x, &SpectrumOptions::default()).is_err());
    }

    #[test]
    fn csv_layout() {
        let mut r = ExperimentResult::new(ExperimentKind::Trace, "t", vec![0.0, 1.0]).unwrap();
        r.push_column("x", vec![1.0, 0.5]).unwrap();
        let r = r.with_metadata("a = 1");
        let csv = r.to_csv();
        assert!(csv.starts_with("# a = 1\nt,x\n0.0000000000000000e0,1.0000000000000000e0\n"));
        assert!(ExperimentResult::new(ExperimentKind::Trace, "t", vec![1.0, 1.0]).is_err());
    }
}

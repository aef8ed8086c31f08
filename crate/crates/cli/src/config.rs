//! Run configuration: TOML schema, validation and resolution into model objects.
//!
//! Frequencies are in units of `ω_q` and times in `1/ω_q`.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use nmq_core::bathspec::{BathSpectrum, Impedance, SpectrumModel, TabulatedSpectrum};
use nmq_core::circuit::{coupling_eta, qubit_frequency, TransmonCircuit};
use nmq_core::experiments::{Frame, Window};
use nmq_core::kernels::{markovian_limits, MarkovianLimits, RateTableOptions, RATE_TOLERANCE};
use nmq_core::bathspec::KERNEL_TOLERANCE;
use nmq_core::ode::StepControl;
use nmq_core::propagator::{CoherenceMode, SolveOptions};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Rates,
    Evolve,
    CpCheck,
    Spectrum,
    Ramsey,
    Verify,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Rates => "rates",
            Experiment::Evolve => "evolve",
            Experiment::CpCheck => "cp-check",
            Experiment::Spectrum => "spectrum",
            Experiment::Ramsey => "ramsey",
            Experiment::Verify => "verify",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub bath: BathConfig,
    pub coupling: CouplingConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub circuit: Option<CircuitConfig>,
    pub grid: GridConfig,
    #[serde(default)]
    pub ramsey: RamseyConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub initial_state: InitialState,
}

/// Bath block. `kind` selects which of the optional parameters apply.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathConfig {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Inverse temperature; absent means zero temperature.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ir_cutoff: Option<f64>,
    /// Two-column `(ω, J)` CSV for tabulated baths.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub load: Option<Impedance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_e: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_j: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_g: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<f64>,
}

/// Exactly one of the four groups must be given.
///
/// `g_o = κ R e^{-ω_q/ω_c}` (Ohmic), `g_f = κ A / ω_q^{α+1}` (1/f^α),
/// `kappa = e²η²` directly, or `e_squared` combined with the circuit's `η`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_o: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_f: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e_squared: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitConfig {
    pub e_c: f64,
    pub e_j: f64,
    pub c_e: f64,
    pub c_j: f64,
    pub c_g: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Horizon in `1/ω_q`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    /// Horizon in units of the Markovian `T₂`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max_t2: Option<f64>,
    pub n_points: usize,
    /// Size of the rate-table grid; defaults to `min(n_points, 2001)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_points: Option<usize>,
    #[serde(default)]
    pub fft: FftConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FftConfig {
    #[serde(default)]
    pub window: Window,
    #[serde(default = "default_zero_padding")]
    pub zero_padding: usize,
    /// Largest frequency written to the spectrum file.
    #[serde(default = "default_omega_max")]
    pub omega_max: f64,
}

fn default_zero_padding() -> usize {
    8
}

fn default_omega_max() -> f64 {
    5.0
}

impl Default for FftConfig {
    fn default() -> Self {
        Self {
            window: Window::Hann,
            zero_padding: default_zero_padding(),
            omega_max: default_omega_max(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RamseyConfig {
    #[serde(default)]
    pub frame: Frame,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default)]
    pub mode: CoherenceMode,
    pub rtol: f64,
    pub atol: f64,
    pub rate_abs: f64,
    pub rate_rel: f64,
    pub kernel_abs: f64,
    pub kernel_rel: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let ode = SolveOptions::default().control;
        Self {
            mode: CoherenceMode::Full,
            rtol: ode.rtol,
            atol: ode.atol,
            rate_abs: RATE_TOLERANCE.abs,
            rate_rel: RATE_TOLERANCE.rel,
            kernel_abs: KERNEL_TOLERANCE.abs,
            kernel_rel: KERNEL_TOLERANCE.rel,
        }
    }
}

impl SolverConfig {
    pub fn scaled(self, factor: f64) -> Self {
        Self {
            rtol: self.rtol * factor,
            atol: self.atol * factor,
            rate_abs: self.rate_abs * factor,
            rate_rel: self.rate_rel * factor,
            kernel_abs: self.kernel_abs * factor,
            kernel_rel: self.kernel_rel * factor,
            ..self
        }
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            mode: self.mode,
            control: StepControl::with_tolerances(self.rtol, self.atol),
        }
    }

    pub fn table_options(&self) -> RateTableOptions {
        let mut o = RateTableOptions::default();
        o.tolerance.abs = self.rate_abs;
        o.tolerance.rel = self.rate_rel;
        o.kernel_tolerance.abs = self.kernel_abs;
        o.kernel_tolerance.rel = self.kernel_rel;
        o
    }
}

/// Initial Bloch vector; the default `(1, 0, 0)` has `ρ₀₁ = ρ₁₀ = ½`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    pub bloch: [f64; 3],
}

impl Default for InitialState {
    fn default() -> Self {
        Self {
            bloch: [1.0, 0.0, 0.0],
        }
    }
}

/// A validated configuration with its model objects built.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: RunConfig,
    pub spectrum: BathSpectrum,
    pub kappa: f64,
    pub markov: Option<MarkovianLimits>,
    pub t_max: f64,
    pub circuit: Option<CircuitReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CircuitReport {
    pub omega_q: f64,
    pub eta: f64,
    pub warnings: Vec<String>,
}

fn config_err(field: &str, message: impl Into<String>) -> CliError {
    CliError::Config {
        field: field.to_string(),
        message: message.into(),
    }
}

fn require(v: Option<f64>, field: &str, kind: &str) -> Result<f64, CliError> {
    v.ok_or_else(|| config_err(field, format!("required for bath kind `{kind}`")))
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config always serializes")
    }

    /// Checks field combinations and builds the bath, coupling and horizon.
    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let spectrum = self.bath.build()?;
        let circuit = match &self.circuit {
            Some(c) => {
                let tc = TransmonCircuit::new(c.e_c, c.e_j, c.c_e, c.c_j, c.c_g)
                    .map_err(|e| config_err("circuit", e.to_string()))?;
                Some(CircuitReport {
                    omega_q: qubit_frequency(&tc).map_err(|e| config_err("circuit", e.to_string()))?,
                    eta: coupling_eta(&tc).map_err(|e| config_err("circuit", e.to_string()))?,
                    warnings: tc.warnings(),
                })
            }
            None => None,
        };
        let kappa = self.coupling_kappa(circuit.as_ref())?;
        // Markovian limits need J at ω_q; tabulated grids may not cover it.
        let markov = markovian_limits(&spectrum, 1.0).ok();
        let t_max = match (self.grid.t_max, self.grid.t_max_t2) {
            (Some(t), None) => t,
            (None, Some(m)) => {
                let lim = markov.ok_or_else(|| {
                    config_err("grid.t_max_t2", "the Markovian T₂ is undefined for this bath")
                })?;
                let t2 = lim.t2(kappa);
                if !t2.is_finite() {
                    return Err(config_err("grid.t_max_t2", "the Markovian T₂ is infinite"));
                }
                m * t2
            }
            _ => {
                return Err(config_err(
                    "grid.t_max",
                    "give exactly one of grid.t_max and grid.t_max_t2",
                ))
            }
        };
        if !(t_max > 0.0 && t_max.is_finite()) {
            return Err(config_err("grid.t_max", format!("must be > 0, got {t_max}")));
        }
        if self.grid.n_points < 2 {
            return Err(config_err("grid.n_points", "must be >= 2"));
        }
        if self.grid.rate_points.is_some_and(|n| n < 2) {
            return Err(config_err("grid.rate_points", "must be >= 2"));
        }
        if self.grid.fft.zero_padding < 1 {
            return Err(config_err("grid.fft.zero_padding", "must be >= 1"));
        }
        if !(self.grid.fft.omega_max > 0.0) {
            return Err(config_err("grid.fft.omega_max", "must be > 0"));
        }
        let s = &self.solver;
        for (name, v) in [
            ("solver.rtol", s.rtol),
            ("solver.atol", s.atol),
            ("solver.rate_abs", s.rate_abs),
            ("solver.rate_rel", s.rate_rel),
            ("solver.kernel_abs", s.kernel_abs),
            ("solver.kernel_rel", s.kernel_rel),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(config_err(name, format!("tolerances must be > 0, got {v}")));
            }
        }
        let [x, y, z] = self.initial_state.bloch;
        if x * x + y * y + z * z > 1.0 + 1e-12 {
            return Err(config_err("initial_state.bloch", "Bloch vector longer than 1"));
        }
        Ok(Resolved {
            config: self.clone(),
            spectrum,
            kappa,
            markov,
            t_max,
            circuit,
        })
    }

    fn coupling_kappa(&self, circuit: Option<&CircuitReport>) -> Result<f64, CliError> {
        let c = &self.coupling;
        let given = [c.g_o, c.g_f, c.kappa, c.e_squared]
            .iter()
            .filter(|v| v.is_some())
            .count();
        if given != 1 {
            return Err(config_err(
                "coupling",
                "give exactly one of g_o, g_f, kappa, e_squared",
            ));
        }
        let check = |field: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(v)
            } else {
                Err(config_err(field, format!("must be finite and >= 0, got {v}")))
            }
        };
        if let Some(g) = c.g_o {
            check("coupling.g_o", g)?;
            if self.bath.kind != "ohmic" {
                return Err(config_err("coupling.g_o", "only defined for an ohmic bath"));
            }
            let r = self.bath.r.unwrap_or(0.0);
            let wc = self.bath.omega_c.unwrap_or(1.0);
            if r <= 0.0 {
                return Err(config_err("coupling.g_o", "needs bath.r > 0"));
            }
            return Ok(g * (1.0 / wc).exp() / r);
        }
        if let Some(g) = c.g_f {
            check("coupling.g_f", g)?;
            if self.bath.kind != "one-over-f" {
                return Err(config_err("coupling.g_f", "only defined for a one-over-f bath"));
            }
            let a = self.bath.amplitude.unwrap_or(0.0);
            if a <= 0.0 {
                return Err(config_err("coupling.g_f", "needs bath.amplitude > 0"));
            }
            return Ok(g / a);
        }
        if let Some(k) = c.kappa {
            return check("coupling.kappa", k);
        }
        let e2 = check("coupling.e_squared", c.e_squared.unwrap_or_default())?;
        let circuit = circuit
            .ok_or_else(|| config_err("coupling.e_squared", "needs a [circuit] block"))?;
        Ok(e2 * circuit.eta * circuit.eta)
    }
}

impl BathConfig {
    fn present(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        let mut mark = |name, set: bool| {
            if set {
                v.push(name)
            }
        };
        mark("r", self.r.is_some());
        mark("omega_c", self.omega_c.is_some());
        mark("amplitude", self.amplitude.is_some());
        mark("alpha", self.alpha.is_some());
        mark("beta", self.beta.is_some());
        mark("ir_cutoff", self.ir_cutoff.is_some());
        mark("path", self.path.is_some());
        mark("load", self.load.is_some());
        mark("c_e", self.c_e.is_some());
        mark("c_j", self.c_j.is_some());
        mark("c_g", self.c_g.is_some());
        mark("cutoff", self.cutoff.is_some());
        v
    }

    pub fn build(&self) -> Result<BathSpectrum, CliError> {
        let kind = self.kind.as_str();
        let allowed: &[&str] = match kind {
            "ohmic" => &["r", "omega_c", "beta"],
            "one-over-f" => &["amplitude", "alpha", "beta", "ir_cutoff"],
            "impedance" => &["load", "c_e", "c_j", "c_g", "cutoff", "beta"],
            "tabulated" => &["path", "beta"],
            other => {
                return Err(config_err(
                    "bath.kind",
                    format!(
                        "unknown bath kind `{other}` (expected ohmic, one-over-f, impedance or tabulated)"
                    ),
                ))
            }
        };
        if let Some(extra) = self.present().into_iter().find(|f| !allowed.contains(f)) {
            return Err(config_err(
                &format!("bath.{extra}"),
                format!("not a parameter of bath kind `{kind}`"),
            ));
        }
        let model = match kind {
            "ohmic" => SpectrumModel::Ohmic {
                r: require(self.r, "bath.r", kind)?,
                omega_c: require(self.omega_c, "bath.omega_c", kind)?,
            },
            "one-over-f" => SpectrumModel::OneOverF {
                amplitude: require(self.amplitude, "bath.amplitude", kind)?,
                alpha: require(self.alpha, "bath.alpha", kind)?,
            },
            "impedance" => SpectrumModel::Impedance {
                load: self
                    .load
                    .ok_or_else(|| config_err("bath.load", "required for bath kind `impedance`"))?,
                c_e: require(self.c_e, "bath.c_e", kind)?,
                c_j: require(self.c_j, "bath.c_j", kind)?,
                c_g: require(self.c_g, "bath.c_g", kind)?,
                cutoff: require(self.cutoff, "bath.cutoff", kind)?,
            },
            _ => {
                let path = self
                    .path
                    .as_ref()
                    .ok_or_else(|| config_err("bath.path", "required for bath kind `tabulated`"))?;
                let table = TabulatedSpectrum::from_csv_path(path)
                    .map_err(|e| config_err("bath.path", e.to_string()))?;
                SpectrumModel::Tabulated(table)
            }
        };
        let mut spec = BathSpectrum::new(model).map_err(|e| config_err("bath", e.to_string()))?;
        if let Some(w) = self.ir_cutoff {
            spec = spec
                .with_ir_cutoff(w)
                .map_err(|e| config_err("bath.ir_cutoff", e.to_string()))?;
        }
        if let Some(b) = self.beta {
            spec = spec
                .with_beta(b)
                .map_err(|e| config_err("bath.beta", e.to_string()))?;
        }
        Ok(spec)
    }
}

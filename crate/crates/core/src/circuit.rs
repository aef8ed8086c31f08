//! Lumped transmon parameters: qubit frequency and the dimensionless
//! qubit–bath coupling `η`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ratio `E_J/E_C` below which the two-level transmon picture is doubtful.
pub const TRANSMON_RATIO_WARNING: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransmonCircuit {
    pub e_c: f64,
    pub e_j: f64,
    pub c_e: f64,
    pub c_j: f64,
    pub c_g: f64,
}

impl TransmonCircuit {
    pub fn new(e_c: f64, e_j: f64, c_e: f64, c_j: f64, c_g: f64) -> Result<Self> {
        let c = Self {
            e_c,
            e_j,
            c_e,
            c_j,
            c_g,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("E_C", self.e_c),
            ("E_J", self.e_j),
            ("C_e", self.c_e),
            ("C_J", self.c_j),
            ("C_g", self.c_g),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.total_capacitance() <= 0.0 {
            return Err(Error::Domain("C_J + C_g + C_e must be > 0".into()));
        }
        Ok(())
    }

    pub fn total_capacitance(&self) -> f64 {
        self.c_j + self.c_g + self.c_e
    }

    /// Warnings about the operating regime; empty when none apply.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.e_c > 0.0 && self.e_j / self.e_c < TRANSMON_RATIO_WARNING {
            w.push(format!(
                "E_J/E_C = {:.3} is below {TRANSMON_RATIO_WARNING}; outside the transmon regime",
                self.e_j / self.e_c
            ));
        }
        w
    }
}

/// `ω_q = √(8 E_C E_J) − E_C`.
pub fn qubit_frequency(c: &TransmonCircuit) -> Result<f64> {
    if !(c.e_c >= 0.0 && c.e_j >= 0.0) {
        return Err(Error::Domain("E_C and E_J must be >= 0".into()));
    }
    Ok((8.0 * c.e_c * c.e_j).sqrt() - c.e_c)
}

/// `η = (2 C_e / (C_J + C_g + C_e)) · (E_J / 4E_C)^{1/4}`.
pub fn coupling_eta(c: &TransmonCircuit) -> Result<f64> {
    c.validate()?;
    if c.e_c <= 0.0 {
        return Err(Error::Domain("E_C must be > 0".into()));
    }
    Ok(2.0 * c.c_e / c.total_capacitance() * (c.e_j / (4.0 * c.e_c)).powf(0.25))
}

//! Built-in parameter sets for the figure-style runs.

use crate::config::{
    BathConfig, CouplingConfig, Experiment, FftConfig, GridConfig, InitialState, RamseyConfig,
    RunConfig, SolverConfig,
};

/// One named run of a preset.
#[derive(Debug, Clone, PartialEq)]
pub struct Case {
    pub label: String,
    pub config: RunConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    pub cases: Vec<Case>,
}

fn ohmic(omega_c: f64) -> BathConfig {
    BathConfig {
        kind: "ohmic".into(),
        r: Some(1.0),
        omega_c: Some(omega_c),
        ..BathConfig::default()
    }
}

fn one_over_f(alpha: f64) -> BathConfig {
    BathConfig {
        kind: "one-over-f".into(),
        amplitude: Some(1.0),
        alpha: Some(alpha),
        ..BathConfig::default()
    }
}

fn g_o(g: f64) -> CouplingConfig {
    CouplingConfig {
        g_o: Some(g),
        ..CouplingConfig::default()
    }
}

fn g_f(g: f64) -> CouplingConfig {
    CouplingConfig {
        g_f: Some(g),
        ..CouplingConfig::default()
    }
}

fn grid(t_max: Option<f64>, t_max_t2: Option<f64>, n_points: usize) -> GridConfig {
    GridConfig {
        t_max,
        t_max_t2,
        n_points,
        rate_points: None,
        fft: FftConfig::default(),
    }
}

fn case(label: &str, experiment: Experiment, bath: BathConfig, coupling: CouplingConfig, grid: GridConfig) -> Case {
    Case {
        label: label.into(),
        config: RunConfig {
            experiment,
            output_dir: None,
            bath,
            coupling,
            circuit: None,
            grid,
            ramsey: RamseyConfig::default(),
            solver: SolverConfig::default(),
            initial_state: InitialState::default(),
        },
    }
}

/// Five precession periods.
const RAMSEY_SPAN: f64 = 10.0 * std::f64::consts::PI;

/// All presets, sorted by name.
pub fn presets() -> Vec<Preset> {
    let mut v = vec![
        Preset {
            name: "fig2-f",
            description: "canonical rates, 1/f bath, alpha = 0.95, g_f = 1e-4, over 20 T2",
            cases: vec![case(
                "fig2-f",
                Experiment::Rates,
                one_over_f(0.95),
                g_f(1e-4),
                grid(None, Some(20.0), 20001),
            )],
        },
        Preset {
            name: "fig2-ohmic",
            description: "canonical rates, Ohmic bath, omega_c = 5, g_O = 1e-4, over 20 T2",
            cases: vec![case(
                "fig2-ohmic",
                Experiment::Rates,
                ohmic(5.0),
                g_o(1e-4),
                grid(None, Some(20.0), 20001),
            )],
        },
        Preset {
            name: "fig3",
            description: "decay function over time, Ohmic omega_c = 3 and 1/f alpha = 0.95, g = 1e-4",
            cases: vec![
                case("fig3-f", Experiment::Evolve, one_over_f(0.95), g_f(1e-4), grid(Some(60.0), None, 601)),
                case("fig3-ohmic", Experiment::Evolve, ohmic(3.0), g_o(1e-4), grid(Some(60.0), None, 601)),
            ],
        },
        Preset {
            name: "fig4a",
            description: "precession spectrum, 1/f bath, alpha = 0.95, g_f = 1e-3",
            cases: vec![case(
                "fig4a",
                Experiment::Spectrum,
                one_over_f(0.95),
                g_f(1e-3),
                grid(None, Some(5.0), 50001),
            )],
        },
        Preset {
            name: "fig4b",
            description: "precession spectrum, Ohmic bath, omega_c = 5, g_O = 1e-3",
            cases: vec![case(
                "fig4b",
                Experiment::Spectrum,
                ohmic(5.0),
                g_o(1e-3),
                grid(None, Some(5.0), 50001),
            )],
        },
        Preset {
            name: "fig5",
            description: "Ramsey X/Y difference, Ohmic omega_c = 3 and 1/f alpha = 0.95, g = 1e-4",
            cases: vec![
                case("fig5-f", Experiment::Ramsey, one_over_f(0.95), g_f(1e-4), grid(Some(RAMSEY_SPAN), None, 5001)),
                case("fig5-ohmic", Experiment::Ramsey, ohmic(3.0), g_o(1e-4), grid(Some(RAMSEY_SPAN), None, 5001)),
            ],
        },
    ];
    v.sort_by_key(|p| p.name);
    v
}

pub fn find(name: &str) -> Option<Preset> {
    presets().into_iter().find(|p| p.name == name)
}

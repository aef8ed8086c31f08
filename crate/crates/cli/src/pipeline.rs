//! Executes one resolved configuration and renders its output files.

use std::f64::consts::PI;

use serde::Serialize;

use nmq_core::bathspec::SpectrumModel;
use nmq_core::experiments::{
    precession_spectrum, ramsey_delta_p_in, ramsey_protocol_direct_in, sigma_expectations,
    ExperimentKind, ExperimentResult, RamseyAxis, SpectrumOptions,
};
use nmq_core::kernels::{MarkovianLimits, RateTable};
use nmq_core::oracle::{compare_map_to_oracle, lamb_shift_by_subtraction, quadrature_crosscheck, OracleReport};
use nmq_core::propagator::{
    cp_certificate, markovian_propagator, solve_coherence, PropagatorState, QubitState, Trajectory,
    CP_TOLERANCE, NORMALIZATION_TOLERANCE,
};

use crate::config::{Experiment, Resolved};
use crate::CliError;

/// One file produced by a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub file_name: String,
    pub contents: String,
}

/// Files written plus lines for the terminal.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOutcome {
    pub outputs: Vec<Output>,
    pub messages: Vec<String>,
    /// False only when `verify` found a failing check.
    pub passed: bool,
}

fn numerical(stage: &str) -> impl Fn(nmq_core::Error) -> CliError + '_ {
    move |source| CliError::Numerical {
        stage: stage.to_string(),
        source,
    }
}

fn uniform_grid(t_max: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| t_max * k as f64 / (n - 1) as f64).collect()
}

/// Header text: provenance comments followed by the config as TOML, so that
/// stripping the leading `# ` from every header line yields a loadable config.
pub fn metadata(r: &Resolved, label: &str) -> String {
    let mut s = format!("# generated by nmq {}\n# case: {label}\n", nmq_core::VERSION);
    s.push_str(&format!("# bath: {}\n", r.spectrum));
    s.push_str(&format!("# kappa = {:e}\n# t_max = {:e}\n", r.kappa, r.t_max));
    if let Some(m) = &r.markov {
        s.push_str(&format!(
            "# markovian: gamma_plus = {:e}, gamma_minus = {:e}, lamb_shift = {:e}, T2 = {:e}\n",
            m.gamma_plus,
            m.gamma_minus,
            m.lamb_shift,
            m.t2(r.kappa)
        ));
    }
    if let Some(c) = &r.circuit {
        s.push_str(&format!("# circuit: omega_q = {:e}, eta = {:e}\n", c.omega_q, c.eta));
        for w in &c.warnings {
            s.push_str(&format!("# warning: {w}\n"));
        }
    }
    s.push_str(&r.config.to_toml());
    s
}

struct Context<'a> {
    r: &'a Resolved,
    label: &'a str,
}

impl Context<'_> {
    fn rate_points(&self) -> usize {
        self.r
            .config
            .grid
            .rate_points
            .unwrap_or(self.r.config.grid.n_points.min(2001))
    }

    fn table(&self, n: usize) -> Result<RateTable, CliError> {
        RateTable::build_with(
            &self.r.spectrum,
            1.0,
            self.r.t_max,
            n,
            self.r.kappa,
            self.r.config.solver.table_options(),
        )
        .map_err(numerical("rate table"))
    }

    fn trajectory(&self, table: &RateTable) -> Result<Trajectory, CliError> {
        let grid = uniform_grid(self.r.t_max, self.r.config.grid.n_points);
        solve_coherence(table, self.r.kappa, &grid, &self.r.config.solver.solve_options())
            .map_err(numerical("coherence integration"))
    }

    fn markov(&self) -> Result<MarkovianLimits, CliError> {
        self.r.markov.ok_or_else(|| CliError::Numerical {
            stage: "markovian limits".into(),
            source: nmq_core::Error::Domain("spectral density undefined at the qubit frequency".into()),
        })
    }

    fn rho0(&self) -> Result<QubitState, CliError> {
        let [x, y, z] = self.r.config.initial_state.bloch;
        QubitState::from_bloch(x, y, z).map_err(|e| CliError::Config {
            field: "initial_state.bloch".into(),
            message: e.to_string(),
        })
    }

    fn csv(&self, result: ExperimentResult, suffix: &str) -> Output {
        let result = result.with_metadata(metadata(self.r, self.label));
        Output {
            file_name: format!("{}-{suffix}.csv", self.label),
            contents: result.to_csv(),
        }
    }
}

fn result(kind: ExperimentKind, name: &str, abscissa: Vec<f64>) -> Result<ExperimentResult, CliError> {
    ExperimentResult::new(kind, name, abscissa).map_err(numerical("output assembly"))
}

fn push(res: &mut ExperimentResult, name: &str, values: Vec<f64>) -> Result<(), CliError> {
    res.push_column(name, values).map_err(numerical("output assembly"))
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Runs `experiment` for one resolved configuration.
pub fn run(r: &Resolved, experiment: Experiment, label: &str) -> Result<RunOutcome, CliError> {
    let cx = Context { r, label };
    match experiment {
        Experiment::Rates => rates(&cx),
        Experiment::Evolve => evolve(&cx),
        Experiment::CpCheck => cp_check(&cx),
        Experiment::Spectrum => spectrum(&cx),
        Experiment::Ramsey => ramsey(&cx),
        Experiment::Verify => verify(&cx),
    }
}

fn rates(cx: &Context) -> Result<RunOutcome, CliError> {
    let table = cx.table(cx.r.config.grid.n_points)?;
    let canonical = table.canonical();
    let mut res = result(ExperimentKind::Trace, "t", table.t().to_vec())?;
    push(&mut res, "gamma_plus", table.gamma_plus())?;
    push(&mut res, "gamma_minus", table.gamma_minus())?;
    push(&mut res, "lamb_shift", table.lamb_shift())?;
    push(&mut res, "gamma_tilde_1", canonical.iter().map(|c| c.0).collect())?;
    push(&mut res, "gamma_tilde_2", canonical.iter().map(|c| c.1).collect())?;
    // Normalized by the Markovian γ₊ + γ₋; κ cancels.
    if let Some(m) = &cx.r.markov {
        let norm = m.gamma_plus + m.gamma_minus;
        push(&mut res, "gamma_tilde_1_normalized", canonical.iter().map(|c| c.0 / norm).collect())?;
        push(&mut res, "gamma_tilde_2_normalized", canonical.iter().map(|c| c.1 / norm).collect())?;
    }
    let positive = canonical.iter().skip(1).filter(|c| c.1 > 0.0).count();
    Ok(RunOutcome {
        outputs: vec![cx.csv(res, "rates")],
        messages: vec![format!(
            "{}: gamma_tilde_2 > 0 at {positive} of {} sampled times t > 0",
            cx.label,
            canonical.len() - 1
        )],
        passed: true,
    })
}

fn certificate_columns(res: &mut ExperimentResult, states: &[PropagatorState]) -> Result<(usize, usize), CliError> {
    let reports: Vec<_> = states.iter().map(cp_certificate).collect();
    for i in 0..4 {
        push(res, &format!("lambda_{}", i + 1), reports.iter().map(|c| c.lambda[i]).collect())?;
    }
    push(res, "necessary_ok", reports.iter().map(|c| flag(c.necessary_ok)).collect())?;
    push(res, "sufficient_ok", reports.iter().map(|c| flag(c.sufficient_ok)).collect())?;
    push(res, "sufficient_margin", reports.iter().map(|c| c.sufficient_margin).collect())?;
    Ok((
        reports.iter().filter(|c| c.necessary_ok).count(),
        reports.iter().filter(|c| c.sufficient_ok).count(),
    ))
}

fn evolve(cx: &Context) -> Result<RunOutcome, CliError> {
    let table = cx.table(cx.rate_points())?;
    let traj = cx.trajectory(&table)?;
    let s = &traj.states;
    let rho0 = cx.rho0()?;
    let bloch = sigma_expectations(s, &rho0);
    let mut res = result(ExperimentKind::Trace, "t", traj.times())?;
    push(&mut res, "decay", s.iter().map(|p| p.decay).collect())?;
    push(&mut res, "relaxation", s.iter().map(|p| p.relaxation).collect())?;
    push(&mut res, "phase", s.iter().map(|p| p.phase).collect())?;
    push(&mut res, "re_x_plus", s.iter().map(|p| p.x_plus.re).collect())?;
    push(&mut res, "im_x_plus", s.iter().map(|p| p.x_plus.im).collect())?;
    push(&mut res, "re_x_minus", s.iter().map(|p| p.x_minus.re).collect())?;
    push(&mut res, "im_x_minus", s.iter().map(|p| p.x_minus.im).collect())?;
    certificate_columns(&mut res, s)?;
    push(&mut res, "sigma_x", bloch.iter().map(|b| b[0]).collect())?;
    push(&mut res, "sigma_y", bloch.iter().map(|b| b[1]).collect())?;
    push(&mut res, "sigma_z", bloch.iter().map(|b| b[2]).collect())?;
    if let Some(m) = &cx.r.markov {
        // Γ(t)/t over the Markovian rate; the t → 0 limit is 0.
        let rate = cx.r.kappa * (m.gamma_plus + m.gamma_minus);
        push(
            &mut res,
            "decay_over_t_normalized",
            s.iter()
                .map(|p| if p.t > 0.0 { p.decay / p.t / rate } else { 0.0 })
                .collect(),
        )?;
    }
    Ok(RunOutcome {
        outputs: vec![cx.csv(res, "evolve")],
        messages: vec![format!(
            "{}: max normalization error {:.3e}",
            cx.label, traj.max_normalization_error
        )],
        passed: true,
    })
}

fn cp_check(cx: &Context) -> Result<RunOutcome, CliError> {
    let table = cx.table(cx.rate_points())?;
    let traj = cx.trajectory(&table)?;
    let mut res = result(ExperimentKind::Trace, "t", traj.times())?;
    let (nec, suf) = certificate_columns(&mut res, &traj.states)?;
    let n = traj.states.len();
    let verdict = if nec == n && suf == n { "CP" } else { "NOT CP" };
    Ok(RunOutcome {
        outputs: vec![cx.csv(res, "cp-check")],
        messages: vec![format!(
            "{}: necessary ok at {nec}/{n}, sufficient ok at {suf}/{n}: {verdict}",
            cx.label
        )],
        passed: true,
    })
}

fn spectrum(cx: &Context) -> Result<RunOutcome, CliError> {
    let m = cx.markov()?;
    let table = cx.table(cx.rate_points())?;
    let traj = cx.trajectory(&table)?;
    let t = traj.times();
    let rho0 = cx.rho0()?;
    let sx: Vec<f64> = sigma_expectations(&traj.states, &rho0).iter().map(|b| b[0]).collect();
    let markov_states: Vec<PropagatorState> = t
        .iter()
        .map(|&ti| markovian_propagator(m.gamma_plus, m.gamma_minus, m.lamb_shift, cx.r.kappa, 1.0, ti))
        .collect::<Result<_, _>>()
        .map_err(numerical("markovian propagator"))?;
    let sx_m: Vec<f64> = sigma_expectations(&markov_states, &rho0).iter().map(|b| b[0]).collect();
    let fft = &cx.r.config.grid.fft;
    let opts = SpectrumOptions {
        window: fft.window,
        zero_padding: fft.zero_padding,
        ..SpectrumOptions::default()
    };
    let nm = precession_spectrum(&t, &sx, &opts).map_err(numerical("fft"))?;
    let mk = precession_spectrum(&t, &sx_m, &opts).map_err(numerical("fft"))?;
    let keep = nm.omega.iter().take_while(|&&w| w <= fft.omega_max).count();
    let mut res = result(ExperimentKind::Spectrum, "omega", nm.omega[..keep].to_vec())?;
    push(&mut res, "magnitude_non_markovian", nm.magnitude[..keep].to_vec())?;
    push(&mut res, "magnitude_markovian", mk.magnitude[..keep].to_vec())?;
    let peak = nm.peak_in(0.5, 1.5).map_or(f64::NAN, |p| p.0);
    Ok(RunOutcome {
        outputs: vec![cx.csv(res, "spectrum")],
        messages: vec![format!("{}: precession peak at omega = {peak:.6}", cx.label)],
        passed: true,
    })
}

fn ramsey(cx: &Context) -> Result<RunOutcome, CliError> {
    let m = cx.markov()?;
    let table = cx.table(cx.rate_points())?;
    let traj = cx.trajectory(&table)?;
    let frame = cx.r.config.ramsey.frame;
    let s = &traj.states;
    let period = 2.0 * PI;
    let mut res = result(
        ExperimentKind::Ramsey,
        "t_d_over_period",
        s.iter().map(|p| p.t / period).collect(),
    )?;
    push(&mut res, "t_d", traj.times())?;
    push(&mut res, "delta_p", s.iter().map(|p| ramsey_delta_p_in(p, 1.0, frame)).collect())?;
    push(
        &mut res,
        "p_yy",
        s.iter().map(|p| ramsey_protocol_direct_in(p, RamseyAxis::Y, 1.0, frame)).collect(),
    )?;
    push(
        &mut res,
        "p_xx",
        s.iter().map(|p| ramsey_protocol_direct_in(p, RamseyAxis::X, 1.0, frame)).collect(),
    )?;
    let markov: Vec<f64> = s
        .iter()
        .map(|p| {
            markovian_propagator(m.gamma_plus, m.gamma_minus, m.lamb_shift, cx.r.kappa, 1.0, p.t)
                .map(|ps| ramsey_delta_p_in(&ps, 1.0, frame))
        })
        .collect::<Result<_, _>>()
        .map_err(numerical("markovian propagator"))?;
    push(&mut res, "delta_p_markovian", markov)?;
    let max = res
        .column("delta_p")
        .unwrap_or_default()
        .iter()
        .fold(0.0f64, |a, v| a.max(v.abs()));
    Ok(RunOutcome {
        outputs: vec![cx.csv(res, "ramsey")],
        messages: vec![format!("{}: max |delta_p| = {max:.3e}", cx.label)],
        passed: true,
    })
}

#[derive(Debug, Serialize)]
struct VerifyReport<'a> {
    case: &'a str,
    version: &'a str,
    passed: bool,
    reports: &'a [OracleReport],
}

/// Fixed initial states for the map-versus-oracle comparison.
const ORACLE_STATES: [[f64; 3]; 5] = [
    [1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, 0.0, 1.0],
    [0.0, 0.0, -1.0],
    [0.5, 0.3, -0.6],
];

fn verify(cx: &Context) -> Result<RunOutcome, CliError> {
    let mut reports = Vec::new();
    let spec = &cx.r.spectrum;
    let closed = spec.has_closed_form_kernel() && spec.is_zero_temperature() && spec.ir_cutoff().is_none();
    if closed {
        let tol = match spec.model() {
            SpectrumModel::Ohmic { .. } => 1e-6,
            _ => 1e-5,
        };
        let taus: Vec<f64> = (0..=60)
            .map(|k| 1e-3 * (50.0f64 / 1e-3).powf(k as f64 / 60.0))
            .collect();
        reports.push(quadrature_crosscheck(spec, &taus, tol).map_err(numerical("kernel crosscheck"))?);
        if let Some(m) = &cx.r.markov {
            let pv = lamb_shift_by_subtraction(spec, 1.0).map_err(numerical("principal value"))?;
            let mut rep = OracleReport::new("markovian Lamb shift vs subtraction", 1e-4);
            rep.max_deviation = (m.lamb_shift - pv).abs() / pv.abs().max(f64::MIN_POSITIVE);
            rep.location = 1.0;
            reports.push(rep);
        }
    }

    let table = cx.table(cx.rate_points())?;
    let mut rep = OracleReport::new("canonical rates", 1e-10);
    let mut sign_ok = true;
    for (t, r) in table.t().iter().zip(table.samples()) {
        let (g1, g2) = r.canonical();
        let scale = r.gamma_plus.abs() + r.gamma_minus.abs() + r.lamb_shift.abs();
        let dev = (g1 + g2 - r.gamma_plus - r.gamma_minus).abs() / scale.max(f64::MIN_POSITIVE);
        rep.max_deviation = rep.max_deviation.max(dev);
        if rep.location.is_nan() || dev >= rep.max_deviation {
            rep.location = *t;
        }
        sign_ok &= g2 <= 0.0 && g1 >= 0.0;
    }
    rep.checks.push(("gamma_tilde_1 >= 0 >= gamma_tilde_2".into(), sign_ok));
    reports.push(rep);

    let traj = cx.trajectory(&table)?;
    let mut rep = OracleReport::new("coherence normalization", NORMALIZATION_TOLERANCE);
    rep.max_deviation = traj.max_normalization_error;
    rep.location = cx.r.t_max;
    reports.push(rep);

    let mut rep = OracleReport::new("complete positivity", CP_TOLERANCE);
    let (mut nec, mut suf) = (true, true);
    for ps in &traj.states {
        let c = cp_certificate(ps);
        let worst = 0.0 - c.lambda.iter().fold(0.0f64, |a, &l| a.min(l));
        if rep.location.is_nan() || worst > rep.max_deviation {
            rep.max_deviation = rep.max_deviation.max(worst);
            rep.location = ps.t;
        }
        nec &= c.necessary_ok;
        suf &= c.sufficient_ok;
    }
    rep.checks.push(("necessary condition".into(), nec));
    rep.checks.push(("sufficient condition".into(), suf));
    reports.push(rep);

    let control = cx.r.config.solver.solve_options().control;
    for (i, b) in ORACLE_STATES.iter().enumerate() {
        let rho0 = QubitState::from_bloch(b[0], b[1], b[2]).map_err(numerical("oracle"))?;
        let mut rep = compare_map_to_oracle(&table, &traj, &rho0, &control, 1e-6)
            .map_err(numerical("master-equation oracle"))?;
        rep.name = format!("{} (state {})", rep.name, i + 1);
        reports.push(rep);
    }

    let passed = reports.iter().all(OracleReport::passed);
    let json = serde_json::to_string_pretty(&VerifyReport {
        case: cx.label,
        version: nmq_core::VERSION,
        passed,
        reports: &reports,
    })
    .expect("report serializes");
    let mut messages: Vec<String> = reports
        .iter()
        .map(|r| {
            format!(
                "{}: {} {} (max deviation {:.3e}, tolerance {:.1e})",
                cx.label,
                if r.passed() { "PASS" } else { "FAIL" },
                r.name,
                r.max_deviation,
                r.tolerance
            )
        })
        .collect();
    messages.push(format!("{}: verify {}", cx.label, if passed { "passed" } else { "FAILED" }));
    Ok(RunOutcome {
        outputs: vec![Output {
            file_name: format!("{}-verify.json", cx.label),
            contents: json + "\n",
        }],
        messages,
        passed,
    })
}

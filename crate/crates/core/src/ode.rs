//! Embedded explicit Runge–Kutta integrators for small real state vectors.
//!
//! [`dopri5`] is the Dormand–Prince 5(4) pair with its 4th-order continuous
//! extension; outputs between accepted steps come from the dense
//! interpolant. [`cash_karp`] is the Cash–Karp 5(4) pair and lands exactly on
//! every requested output time instead. The two share step-size control but
//! no coefficients, so they serve as independent routes for cross-checks.

use crate::error::{Error, Result};

/// Right-hand side `dy/dt = f(t, y)` on `N` real components.
pub trait OdeSystem<const N: usize> {
    fn rhs(&self, t: f64, y: &[f64; N], dy: &mut [f64; N]);
}

impl<F, const N: usize> OdeSystem<N> for F
where
    F: Fn(f64, &[f64; N], &mut [f64; N]),
{
    fn rhs(&self, t: f64, y: &[f64; N], dy: &mut [f64; N]) {
        self(t, y, dy)
    }
}

/// Step-size control shared by both integrators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    pub h_min: f64,
    pub h_init: Option<f64>,
    pub max_steps: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            h_max: f64::INFINITY,
            h_min: 1e-14,
            h_init: None,
            max_steps: 50_000_000,
        }
    }
}

impl StepControl {
    pub fn with_tolerances(rtol: f64, atol: f64) -> Self {
        Self {
            rtol,
            atol,
            ..Self::default()
        }
    }

    pub fn with_h_max(mut self, h_max: f64) -> Self {
        self.h_max = h_max;
        self
    }
}

/// Counters from one integration.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

fn error_norm<const N: usize>(err: &[f64; N], y0: &[f64; N], y1: &[f64; N], ctl: &StepControl) -> f64 {
    let mut acc = 0.0;
    for i in 0..N {
        let scale = ctl.atol + ctl.rtol * y0[i].abs().max(y1[i].abs());
        let r = err[i] / scale;
        acc += r * r;
    }
    (acc / N as f64).sqrt()
}

fn initial_step<const N: usize>(y: &[f64; N], f: &[f64; N], span: f64, ctl: &StepControl) -> f64 {
    if let Some(h) = ctl.h_init {
        return h.min(ctl.h_max).min(span);
    }
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for i in 0..N {
        let sc = ctl.atol + ctl.rtol * y[i].abs();
        d0 += (y[i] / sc).powi(2);
        d1 += (f[i] / sc).powi(2);
    }
    let d0 = (d0 / N as f64).sqrt();
    let d1 = (d1 / N as f64).sqrt();
    let h = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    h.min(ctl.h_max).min(span).max(ctl.h_min)
}

fn check_outputs(t0: f64, t_out: &[f64]) -> Result<()> {
    if t_out.iter().any(|t| !t.is_finite()) {
        return Err(Error::Grid("non-finite output time".into()));
    }
    if t_out.first().is_some_and(|&t| t < t0) {
        return Err(Error::Grid(format!("output time before start {t0}")));
    }
    if t_out.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Grid("output times must be nondecreasing".into()));
    }
    Ok(())
}

fn next_factor(err: f64) -> f64 {
    if err == 0.0 {
        5.0
    } else {
        (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
    }
}

// Dormand–Prince 5(4) coefficients.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Dormand–Prince 5(4) with dense output.
///
/// Returns the state at each `t_out` (nondecreasing, `>= t0`). `on_step` is
/// called after every accepted step with the new time and state; an error
/// from it aborts the integration.
pub fn dopri5<S, O, const N: usize>(
    sys: &S,
    t0: f64,
    y0: [f64; N],
    t_out: &[f64],
    ctl: &StepControl,
    mut on_step: O,
) -> Result<(Vec<[f64; N]>, OdeStats)>
where
    S: OdeSystem<N> + ?Sized,
    O: FnMut(f64, &[f64; N]) -> Result<()>,
{
    check_outputs(t0, t_out)?;
    let mut out = Vec::with_capacity(t_out.len());
    let mut stats = OdeStats::default();
    let Some(&t_end) = t_out.last() else {
        return Ok((out, stats));
    };
    let mut next = 0;
    while next < t_out.len() && t_out[next] <= t0 {
        out.push(y0);
        next += 1;
    }
    if t_end <= t0 {
        return Ok((out, stats));
    }

    let mut t = t0;
    let mut y = y0;
    let mut k1 = [0.0; N];
    sys.rhs(t, &y, &mut k1);
    stats.evaluations += 1;
    let mut h = initial_step(&y, &k1, t_end - t0, ctl);
    let mut last_rejected = false;
    let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) =
        ([0.0; N], [0.0; N], [0.0; N], [0.0; N], [0.0; N], [0.0; N]);
    let mut tmp = [0.0; N];
    let mut y1 = [0.0; N];
    let mut err = [0.0; N];

    while t < t_end {
        if stats.accepted + stats.rejected >= ctl.max_steps {
            return Err(Error::Numerical {
                stage: "ode".into(),
                detail: format!("step budget {} exhausted at t = {t}", ctl.max_steps),
                estimate: h,
            });
        }
        h = h.min(ctl.h_max);
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }

        for i in 0..N {
            tmp[i] = y[i] + h * A21 * k1[i];
        }
        sys.rhs(t + C2 * h, &tmp, &mut k2);
        for i in 0..N {
            tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        sys.rhs(t + C3 * h, &tmp, &mut k3);
        for i in 0..N {
            tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        sys.rhs(t + C4 * h, &tmp, &mut k4);
        for i in 0..N {
            tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        sys.rhs(t + C5 * h, &tmp, &mut k5);
        for i in 0..N {
            tmp[i] = y[i]
                + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        let t_new = if last { t_end } else { t + h };
        sys.rhs(t_new, &tmp, &mut k6);
        for i in 0..N {
            y1[i] = y[i]
                + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        sys.rhs(t_new, &y1, &mut k7);
        stats.evaluations += 6;
        for i in 0..N {
            err[i] = h
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let e = error_norm(&err, &y, &y1, ctl);
        if !e.is_finite() {
            return Err(Error::Numerical {
                stage: "ode".into(),
                detail: format!("non-finite state at t = {t}"),
                estimate: e,
            });
        }

        if e <= 1.0 {
            stats.accepted += 1;
            // dense output on (t, t_new]
            while next < t_out.len() && t_out[next] <= t_new {
                let theta = ((t_out[next] - t) / h).clamp(0.0, 1.0);
                let mut ys = [0.0; N];
                for i in 0..N {
                    let r2 = y1[i] - y[i];
                    let r3 = h * k1[i] - r2;
                    let r4 = r2 - h * k7[i] - r3;
                    let r5 = h
                        * (D1 * k1[i]
                            + D3 * k3[i]
                            + D4 * k4[i]
                            + D5 * k5[i]
                            + D6 * k6[i]
                            + D7 * k7[i]);
                    ys[i] = y[i]
                        + theta * (r2 + (1.0 - theta) * (r3 + theta * (r4 + (1.0 - theta) * r5)));
                }
                if t_out[next] == t_new {
                    ys = y1;
                }
                out.push(ys);
                next += 1;
            }
            t = t_new;
            y = y1;
            k1 = k7;
            on_step(t, &y)?;
            let mut fac = next_factor(e);
            if last_rejected {
                fac = fac.min(1.0);
            }
            last_rejected = false;
            h *= fac;
        } else {
            stats.rejected += 1;
            last_rejected = true;
            h *= next_factor(e).min(1.0);
            if h < ctl.h_min {
                return Err(Error::Stiffness { t, h });
            }
        }
    }
    while out.len() < t_out.len() {
        out.push(y);
    }
    Ok((out, stats))
}

// Cash–Karp 5(4) coefficients.
const CK_C: [f64; 6] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 3.0 / 5.0, 1.0, 7.0 / 8.0];
const CK_A: [[f64; 5]; 6] = [
    [0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0],
    [3.0 / 10.0, -9.0 / 10.0, 6.0 / 5.0, 0.0, 0.0],
    [-11.0 / 54.0, 5.0 / 2.0, -70.0 / 27.0, 35.0 / 27.0, 0.0],
    [
        1631.0 / 55296.0,
        175.0 / 512.0,
        575.0 / 13824.0,
        44275.0 / 110592.0,
        253.0 / 4096.0,
    ],
];
const CK_B5: [f64; 6] = [
    37.0 / 378.0,
    0.0,
    250.0 / 621.0,
    125.0 / 594.0,
    0.0,
    512.0 / 1771.0,
];
const CK_B4: [f64; 6] = [
    2825.0 / 27648.0,
    0.0,
    18575.0 / 48384.0,
    13525.0 / 55296.0,
    277.0 / 14336.0,
    1.0 / 4.0,
];

/// Cash–Karp 5(4); steps are clipped so that every output time is hit exactly.
pub fn cash_karp<S, const N: usize>(
    sys: &S,
    t0: f64,
    y0: [f64; N],
    t_out: &[f64],
    ctl: &StepControl,
) -> Result<(Vec<[f64; N]>, OdeStats)>
where
    S: OdeSystem<N> + ?Sized,
{
    check_outputs(t0, t_out)?;
    let mut out = Vec::with_capacity(t_out.len());
    let mut stats = OdeStats::default();
    let mut t = t0;
    let mut y = y0;
    let mut k = [[0.0; N]; 6];
    let mut tmp = [0.0; N];
    let mut h = {
        let mut f0 = [0.0; N];
        sys.rhs(t, &y, &mut f0);
        stats.evaluations += 1;
        let span = t_out.last().map_or(1.0, |&e| (e - t0).max(1e-300));
        initial_step(&y, &f0, span, ctl)
    };
    let mut last_rejected = false;
    for &target in t_out {
        while t < target {
            if stats.accepted + stats.rejected >= ctl.max_steps {
                return Err(Error::Numerical {
                    stage: "ode".into(),
                    detail: format!("step budget {} exhausted at t = {t}", ctl.max_steps),
                    estimate: h,
                });
            }
            let h_try = h.min(ctl.h_max);
            let hit = t + h_try >= target;
            let step = if hit { target - t } else { h_try };
            for s in 0..6 {
                for i in 0..N {
                    let mut acc = 0.0;
                    for (j, kj) in k.iter().enumerate().take(s) {
                        acc += CK_A[s][j] * kj[i];
                    }
                    tmp[i] = y[i] + step * acc;
                }
                let (head, tail) = k.split_at_mut(s);
                let _ = head;
                sys.rhs(t + CK_C[s] * step, &tmp, &mut tail[0]);
            }
            stats.evaluations += 6;
            let mut y1 = [0.0; N];
            let mut err = [0.0; N];
            for i in 0..N {
                let mut hi = 0.0;
                let mut lo = 0.0;
                for s in 0..6 {
                    hi += CK_B5[s] * k[s][i];
                    lo += CK_B4[s] * k[s][i];
                }
                y1[i] = y[i] + step * hi;
                err[i] = step * (hi - lo);
            }
            let e = error_norm(&err, &y, &y1, ctl);
            if !e.is_finite() {
                return Err(Error::Numerical {
                    stage: "ode".into(),
                    detail: format!("non-finite state at t = {t}"),
                    estimate: e,
                });
            }
            if e <= 1.0 {
                stats.accepted += 1;
                t = if hit { target } else { t + step };
                y = y1;
                let mut fac = next_factor(e);
                if last_rejected {
                    fac = fac.min(1.0);
                }
                last_rejected = false;
                // a clipped step says nothing about the natural step size
                if !hit || step >= h_try {
                    h = h_try * fac;
                }
            } else {
                stats.rejected += 1;
                last_rejected = true;
                h = step * next_factor(e).min(1.0);
                if h < ctl.h_min {
                    return Err(Error::Stiffness { t, h });
                }
            }
        }
        out.push(y);
    }
    Ok((out, stats))
}

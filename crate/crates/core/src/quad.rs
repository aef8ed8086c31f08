//! Gauss–Legendre panels with global adaptive bisection.
//!
//! Every integral in the crate (kernel transforms, outer rate integrals,
//! principal values) goes through [`integrate`]. Callers seed the initial
//! panel set with [`panels`] so that oscillatory integrands start out with
//! panels no wider than a fraction of their local period, and use
//! [`integrate_power_singular`] for integrable `x^p` endpoint singularities.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Builds the `n`-point rule by Newton iteration on `P_n`.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = (n + 1) / 2;
        for i in 0..m {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Fixed-rule estimate of `∫_a^b f`.
    #[inline]
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for j in 2..=n {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Shared 10-point rule used by the adaptive driver.
pub fn gl10() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(10))
}

/// Shared 20-point rule for fixed high-order panels.
pub fn gl20() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(20))
}

/// Absolute and relative error targets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    /// Upper bound on the number of panels kept alive during refinement.
    pub max_panels: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            abs: 1e-10,
            rel: 1e-8,
            max_panels: 200_000,
        }
    }
}

impl Tolerance {
    pub fn new(abs: f64, rel: f64) -> Self {
        Self {
            abs,
            rel,
            ..Self::default()
        }
    }

    /// Scales both targets, keeping the panel budget.
    pub fn scaled(self, factor: f64) -> Self {
        Self {
            abs: self.abs * factor,
            rel: self.rel * factor,
            ..self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn estimate<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let rule = gl10();
    let m = 0.5 * (a + b);
    let whole = rule.integrate(&mut *f, a, b);
    let halves = rule.integrate(&mut *f, a, m) + rule.integrate(&mut *f, m, b);
    (halves, (whole - halves).abs())
}

/// Splits `[a, b]` into panels no wider than `max_width`, honoring `breaks`.
pub fn panels(a: f64, b: f64, max_width: f64, breaks: &[f64]) -> Vec<f64> {
    let mut cuts = vec![a];
    let mut stops: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
    stops.sort_by(f64::total_cmp);
    stops.push(b);
    let mut left = a;
    for stop in stops {
        let span = stop - left;
        if span <= 0.0 {
            continue;
        }
        let n = if max_width.is_finite() && max_width > 0.0 {
            (span / max_width).ceil().max(1.0) as usize
        } else {
            1
        };
        for k in 1..n {
            cuts.push(left + span * k as f64 / n as f64);
        }
        cuts.push(stop);
        left = stop;
    }
    cuts
}

/// Globally adaptive integration over consecutive panels `cuts[i]..cuts[i+1]`.
///
/// The worst panel (largest estimated error) is bisected until the summed
/// error estimate meets `max(tol.abs, tol.rel * |value|)`.
pub fn integrate_panels<F: FnMut(f64) -> f64>(
    mut f: F,
    cuts: &[f64],
    tol: Tolerance,
) -> Result<QuadResult> {
    let per_estimate = 3 * gl10().len();
    let mut heap = BinaryHeap::with_capacity(cuts.len() * 2);
    let mut evaluations = 0;
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let (value, error) = estimate(&mut f, a, b);
        evaluations += per_estimate;
        heap.push(Panel { a, b, value, error });
    }
    let (mut value, mut error) = totals(&heap);
    loop {
        if !value.is_finite() || !error.is_finite() {
            return Err(Error::Numerical {
                stage: "quadrature".into(),
                detail: "non-finite integrand".into(),
                estimate: error,
            });
        }
        if error <= tol.abs.max(tol.rel * value.abs()) {
            return Ok(QuadResult {
                value,
                error,
                evaluations,
            });
        }
        if heap.len() >= tol.max_panels {
            return Err(Error::Numerical {
                stage: "quadrature".into(),
                detail: format!("no convergence within {} panels", tol.max_panels),
                estimate: error,
            });
        }
        let Some(worst) = heap.pop() else {
            return Ok(QuadResult {
                value,
                error,
                evaluations,
            });
        };
        let m = 0.5 * (worst.a + worst.b);
        if m <= worst.a || m >= worst.b {
            // Panel cannot be split further in floating point; accept it as is.
            heap.push(Panel { error: 0.0, ..worst });
            let t = totals(&heap);
            value = t.0;
            error = t.1 + worst.error;
            if heap.iter().all(|p| p.error == 0.0) {
                return Err(Error::Numerical {
                    stage: "quadrature".into(),
                    detail: "panel width underflow".into(),
                    estimate: error,
                });
            }
            continue;
        }
        let (lv, le) = estimate(&mut f, worst.a, m);
        let (rv, re) = estimate(&mut f, m, worst.b);
        evaluations += 2 * per_estimate;
        heap.push(Panel {
            a: worst.a,
            b: m,
            value: lv,
            error: le,
        });
        heap.push(Panel {
            a: m,
            b: worst.b,
            value: rv,
            error: re,
        });
        if heap.len() % 64 == 0 {
            let t = totals(&heap);
            value = t.0;
            error = t.1;
        } else {
            value += lv + rv - worst.value;
            error += le + re - worst.error;
        }
    }
}

fn totals(heap: &BinaryHeap<Panel>) -> (f64, f64) {
    let mut v = Neumaier::default();
    let mut e = 0.0;
    for p in heap.iter() {
        v.add(p.value);
        e += p.error;
    }
    (v.sum(), e)
}

/// Adaptive integral of `f` over `[a, b]` with initial panels of width at most `max_width`.
pub fn integrate<F: FnMut(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    max_width: f64,
    tol: Tolerance,
) -> Result<QuadResult> {
    if b == a {
        return Ok(QuadResult {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    }
    if b < a {
        let r = integrate(f, b, a, max_width, tol)?;
        return Ok(QuadResult {
            value: -r.value,
            ..r
        });
    }
    integrate_panels(f, &panels(a, b, max_width, &[]), tol)
}

/// `∫_0^b f(x) dx` where `f(x) ~ x^p` as `x → 0`, with `p > -1`.
///
/// Substituting `x = u^(1/q)`, `q = 1 + p`, turns the integrand into
/// `f(u^(1/q)) u^(1/q - 1) / q`, which is bounded at `u = 0`.
pub fn integrate_power_singular<F: FnMut(f64) -> f64>(
    mut f: F,
    b: f64,
    p: f64,
    tol: Tolerance,
) -> Result<QuadResult> {
    let q = 1.0 + p;
    if q <= 0.0 {
        return Err(Error::Domain(format!(
            "endpoint exponent {p} is not integrable"
        )));
    }
    let upper = b.powf(q);
    let inv = 1.0 / q;
    integrate(
        |u: f64| {
            if u <= 0.0 {
                return 0.0;
            }
            let x = u.powf(inv);
            f(x) * x / u * inv
        },
        0.0,
        upper,
        f64::INFINITY,
        tol,
    )
}

/// `∫_a^∞ f` through the map `x = a + u / (1 - u)`.
pub fn integrate_to_infinity<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    tol: Tolerance,
) -> Result<QuadResult> {
    integrate(
        |u: f64| {
            if u >= 1.0 {
                return 0.0;
            }
            let s = 1.0 - u;
            f(a + u / s) / (s * s)
        },
        0.0,
        1.0,
        0.125,
        tol,
    )
}

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
pub struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub fn new(start: f64) -> Self {
        Self {
            sum: start,
            comp: 0.0,
        }
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn sum(&self) -> f64 {
        self.sum + self.comp
    }
}

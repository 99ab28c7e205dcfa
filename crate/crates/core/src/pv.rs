//! Principal-value quadrature for oscillatory integrands with a simple pole.
//!
//! Computes P int f(u) / (u - pole) du over a finite interval, the half line
//! [0, inf) or the whole line. Frequencies are measured in units of omega0.
//!
//! The pole is handled by folding a symmetric window [pole - h, pole + h]
//! onto itself, int_0^h (F(pole + s) - F(pole - s)) / s ds, which has a
//! smooth integrand. Infinite ranges carry integrands that grow like a
//! polynomial times sin/cos, so they only exist as distributional limits:
//! the integrand is multiplied by exp(-(eps u)^2), integrated until the
//! regulator is negligible, and the results for a decreasing sequence of eps
//! are extrapolated to eps = 0 as a polynomial in eps^2. The regulated value
//! differs from the limit by a power series in eps^2 plus terms of order
//! exp(-x^2 / 4 eps^2), x being the oscillation frequency. On the half line
//! the endpoint at u = 0 adds an asymptotic series in (eps / x)^2 with
//! factorially growing coefficients, so the largest eps is kept below
//! x / EPS_PER_OSCILLATION.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre_cached;

/// ln(1e18): the regulator exp(-(eps u)^2) is dropped once below 1e-18.
const REGULATOR_EXPONENT: f64 = 41.5;

/// Largest regulator width allowed is oscillation / EPS_PER_OSCILLATION.
const EPS_PER_OSCILLATION: f64 = 40.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PvQuadratureSpec {
    /// Upper frequency limit for cutoff integrals, in units of omega0. For
    /// the regulated infinite ranges this is the minimum truncation point.
    pub cutoff: f64,
    /// Regulator widths, strictly decreasing.
    pub epsilon_sequence: Vec<f64>,
    /// Gauss-Legendre nodes per period of the integrand's oscillation.
    pub nodes_per_oscillation: usize,
    /// Half-width of the folded window around the pole, in units of omega0.
    pub singularity_halfwidth: f64,
    /// Largest accepted extrapolation residual, relative to max(|value|, 1).
    pub residual_tolerance: f64,
}

impl Default for PvQuadratureSpec {
    fn default() -> Self {
        PvQuadratureSpec {
            cutoff: 40.0,
            epsilon_sequence: vec![0.04, 0.02, 0.01],
            nodes_per_oscillation: 16,
            singularity_halfwidth: 0.2,
            residual_tolerance: 1e-6,
        }
    }
}

impl PvQuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.cutoff >= 10.0) || !self.cutoff.is_finite() {
            return Err(Error::validation(format!(
                "cutoff must be at least 10 omega0, got {}",
                self.cutoff
            )));
        }
        let eps = &self.epsilon_sequence;
        if eps.len() < 3 {
            return Err(Error::validation("epsilon sequence needs at least three values"));
        }
        if eps.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
            return Err(Error::validation("epsilon values must be positive"));
        }
        if eps.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::validation("epsilon sequence must be strictly decreasing"));
        }
        if self.nodes_per_oscillation < 8 {
            return Err(Error::validation("nodes_per_oscillation must be at least 8"));
        }
        if !(self.singularity_halfwidth > 0.0 && self.singularity_halfwidth < 1.0) {
            return Err(Error::validation("singularity half-width must lie in (0, 1) omega0"));
        }
        if !(self.residual_tolerance > 0.0) {
            return Err(Error::validation("residual tolerance must be positive"));
        }
        Ok(())
    }

    /// Same settings with cutoff and node density doubled.
    pub fn refined(&self) -> Self {
        PvQuadratureSpec {
            cutoff: 2.0 * self.cutoff,
            nodes_per_oscillation: 2 * self.nodes_per_oscillation,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PvRange {
    /// (-inf, inf), regulated.
    Line,
    /// [0, inf), regulated.
    HalfLine,
    /// [lower, upper], integrated as is.
    Interval { lower: f64, upper: f64 },
}

impl PvRange {
    fn is_infinite(self) -> bool {
        !matches!(self, PvRange::Interval { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PvValue {
    pub value: f64,
    /// Extrapolation residual (regulated ranges) or change under node
    /// doubling (finite intervals).
    pub residual: f64,
    /// Regulator widths actually used; empty for finite intervals.
    pub epsilons: Vec<f64>,
}

/// P int f(u) / (u - pole) du over `range`.
///
/// `oscillation` is the angular frequency of f in u (0 if f does not
/// oscillate); it sets the panel length. A pole outside the range just gives
/// an ordinary integral.
pub fn pv_integral(
    f: impl Fn(f64) -> f64,
    pole: f64,
    range: PvRange,
    oscillation: f64,
    spec: &PvQuadratureSpec,
) -> Result<PvValue> {
    let [v] = pv_integral_n(|u| [f(u)], pole, range, oscillation, spec)?;
    Ok(v)
}

/// Vector-valued variant of [`pv_integral`]: every component shares nodes.
pub fn pv_integral_n<const K: usize>(
    f: impl Fn(f64) -> [f64; K],
    pole: f64,
    range: PvRange,
    oscillation: f64,
    spec: &PvQuadratureSpec,
) -> Result<[PvValue; K]> {
    spec.validate()?;
    if !(oscillation >= 0.0) || !oscillation.is_finite() {
        return Err(Error::Domain(format!("oscillation frequency must be >= 0, got {oscillation}")));
    }
    if !pole.is_finite() {
        return Err(Error::Domain("pole must be finite".into()));
    }
    let (lo, hi) = match range {
        PvRange::Line => (f64::NEG_INFINITY, f64::INFINITY),
        PvRange::HalfLine => (0.0, f64::INFINITY),
        PvRange::Interval { lower, upper } => {
            if !(lower < upper) || !lower.is_finite() || !upper.is_finite() {
                return Err(Error::validation(format!("empty interval [{lower}, {upper}]")));
            }
            (lower, upper)
        }
    };
    if pole == lo || pole == hi {
        return Err(Error::Domain("principal value undefined with the pole at an endpoint".into()));
    }

    if !range.is_infinite() {
        let rule = Rule { f: &f, pole, oscillation, nodes: spec.nodes_per_oscillation, halfwidth: spec.singularity_halfwidth };
        let coarse = rule.integrate(lo, hi, None);
        let fine = Rule { nodes: 2 * spec.nodes_per_oscillation, ..rule }.integrate(lo, hi, None);
        return Ok(std::array::from_fn(|k| PvValue {
            value: fine[k],
            residual: (fine[k] - coarse[k]).abs(),
            epsilons: Vec::new(),
        }));
    }

    if oscillation == 0.0 {
        return Err(Error::Domain(
            "a non-oscillating integrand over an infinite range has no regulated limit".into(),
        ));
    }
    let eps_max = spec.epsilon_sequence[0];
    let scale = (oscillation / (EPS_PER_OSCILLATION * eps_max)).min(1.0);
    let epsilons: Vec<f64> = spec.epsilon_sequence.iter().map(|e| e * scale).collect();

    let rule = Rule { f: &f, pole, oscillation, nodes: spec.nodes_per_oscillation, halfwidth: spec.singularity_halfwidth };
    let samples: Vec<[f64; K]> = epsilons
        .iter()
        .map(|&eps| {
            let reach = (REGULATOR_EXPONENT.sqrt() / eps).max(spec.cutoff).max(pole.abs() + 2.0);
            let lo_eff = if lo.is_finite() { lo } else { -reach };
            rule.integrate(lo_eff, reach, Some(eps))
        })
        .collect();

    let t: Vec<f64> = epsilons.iter().map(|e| e * e).collect();
    let mut out: [PvValue; K] = std::array::from_fn(|_| PvValue { value: 0.0, residual: 0.0, epsilons: epsilons.clone() });
    for (k, slot) in out.iter_mut().enumerate() {
        let y: Vec<f64> = samples.iter().map(|s| s[k]).collect();
        let all = neville_at_zero(&t, &y);
        let reduced = neville_at_zero(&t[1..], &y[1..]);
        let residual = (all - reduced).abs();
        if !all.is_finite() || residual > spec.residual_tolerance * all.abs().max(1.0) {
            return Err(Error::Convergence {
                context: format!("principal-value integral (component {k}, pole {pole})"),
                residual,
                tolerance: spec.residual_tolerance * all.abs().max(1.0),
            });
        }
        slot.value = all;
        slot.residual = residual;
    }
    Ok(out)
}

/// Value at t = 0 of the interpolating polynomial through (t_i, y_i).
pub fn neville_at_zero(t: &[f64], y: &[f64]) -> f64 {
    let mut p = y.to_vec();
    let n = p.len();
    for m in 1..n {
        for i in 0..n - m {
            p[i] = (t[i] * p[i + 1] - t[i + m] * p[i]) / (t[i] - t[i + m]);
        }
    }
    p[0]
}

struct Rule<'a, F> {
    f: &'a F,
    pole: f64,
    oscillation: f64,
    nodes: usize,
    halfwidth: f64,
}

impl<F> Clone for Rule<'_, F> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<F> Copy for Rule<'_, F> {}

impl<'a, const K: usize, F: Fn(f64) -> [f64; K]> Rule<'a, F> {
    fn period(&self) -> f64 {
        if self.oscillation > 0.0 {
            2.0 * PI / self.oscillation
        } else {
            f64::INFINITY
        }
    }

    fn regulated(&self, u: f64, eps: Option<f64>) -> [f64; K] {
        let v = (self.f)(u);
        match eps {
            Some(e) => {
                let r = (-(e * u) * (e * u)).exp();
                v.map(|x| x * r)
            }
            None => v,
        }
    }

    /// Integral of F(u) / (u - pole) over [lo, hi] with the pole folded.
    fn integrate(&self, lo: f64, hi: f64, eps: Option<f64>) -> [f64; K] {
        let mut acc = [0.0; K];
        let p = self.pole;
        if p > lo && p < hi {
            let h = self.halfwidth.min(p - lo).min(hi - p);
            self.fold(h, eps, &mut acc);
            self.march(p + h, hi, eps, &mut acc);
            self.march(p - h, lo, eps, &mut acc);
        } else if p <= lo {
            self.march(lo, hi, eps, &mut acc);
        } else {
            self.march(hi, lo, eps, &mut acc);
        }
        acc
    }

    /// int_0^h (F(p + s) - F(p - s)) / s ds.
    fn fold(&self, h: f64, eps: Option<f64>, acc: &mut [f64; K]) {
        let rule = gauss_legendre_cached(self.nodes);
        let (x, w) = (&rule.0, &rule.1);
        let panels = (h / self.period()).ceil().max(1.0) as usize;
        let len = h / panels as f64;
        for i in 0..panels {
            let a = i as f64 * len;
            for (xn, wn) in x.iter().zip(w) {
                let s = a + 0.5 * len * (xn + 1.0);
                let up = self.regulated(self.pole + s, eps);
                let down = self.regulated(self.pole - s, eps);
                let ws = 0.5 * len * wn / s;
                for k in 0..K {
                    acc[k] += ws * (up[k] - down[k]);
                }
            }
        }
    }

    /// Composite Gauss-Legendre from `from` to `to` (either direction) for
    /// F(u) / (u - pole). Panels never exceed one oscillation period, grow
    /// geometrically away from the pole, and stay below half the regulator
    /// width.
    fn march(&self, from: f64, to: f64, eps: Option<f64>, acc: &mut [f64; K]) {
        if from == to {
            return;
        }
        let rule = gauss_legendre_cached(self.nodes);
        let (x, w) = (&rule.0, &rule.1);
        let dir = (to - from).signum();
        let period = self.period();
        let reg_len = eps.map_or(f64::INFINITY, |e| 0.5 / e);
        let mut u = from;
        let mut sum = [0.0; K];
        while (to - u) * dir > 0.0 {
            let dist = (u - self.pole).abs();
            let len = period
                .min(reg_len)
                .min(self.halfwidth.max(0.5 * dist))
                .min((to - u).abs());
            let a = u.min(u + dir * len);
            for (xn, wn) in x.iter().zip(w) {
                let t = a + 0.5 * len * (xn + 1.0);
                let v = self.regulated(t, eps);
                let wt = 0.5 * len * wn / (t - self.pole);
                for k in 0..K {
                    sum[k] += wt * v[k];
                }
            }
            u += dir * len;
            if (to - u).abs() < 1e-14 * to.abs().max(1.0) {
                break;
            }
        }
        for k in 0..K {
            acc[k] += sum[k];
        }
    }
}

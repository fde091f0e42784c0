use serde::{Deserialize, Serialize};

use super::gamma::{lower_gamma, scaled_upper_gamma};
use super::quad::{integrate, QuadOptions};
use super::{SupportPolicy, EPS_SURV};
use crate::error::{Error, Result};

/// Weibull baseline survival `exp(-(λt)^p)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeibullBaseline {
    pub lambda: f64,
    pub p: f64,
}

impl WeibullBaseline {
    pub fn new(lambda: f64, p: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite() && p > 0.0 && p.is_finite()) {
            return Err(Error::Config(format!(
                "Weibull baseline needs lambda > 0 and p > 0, got lambda={lambda}, p={p}"
            )));
        }
        Ok(Self { lambda, p })
    }

    pub fn survival(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        (-(self.lambda * t).powf(self.p)).exp()
    }
}

/// Right-continuous step survival curve, e.g. a Breslow baseline.
///
/// `values[k]` holds on `[times[k], times[k+1])`; before `times[0]` the
/// survival is 1. Integrals stop at `horizon`, the largest observed time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepBaseline {
    times: Vec<f64>,
    values: Vec<f64>,
    horizon: f64,
}

impl StepBaseline {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let horizon = times.last().copied().unwrap_or(0.0);
        Self::with_horizon(times, values, horizon)
    }

    pub fn with_horizon(times: Vec<f64>, values: Vec<f64>, horizon: f64) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: times.len(),
                got: values.len(),
            });
        }
        if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::InvalidArgument("step times must be finite and nonnegative".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("step times must be strictly increasing".into()));
        }
        let mut prev = 1.0;
        for &v in &values {
            if !(0.0..=prev).contains(&v) {
                return Err(Error::InvalidArgument(
                    "step values must lie in [0,1] and be nonincreasing".into(),
                ));
            }
            prev = v;
        }
        let last = times.last().copied().unwrap_or(0.0);
        if !(horizon.is_finite() && horizon >= last) {
            return Err(Error::InvalidArgument(format!(
                "step horizon {horizon} precedes the last step time {last}"
            )));
        }
        Ok(Self {
            times,
            values,
            horizon,
        })
    }

    /// A curve that never drops: survival 1 everywhere.
    pub fn constant_one() -> Self {
        Self {
            times: Vec::new(),
            values: Vec::new(),
            horizon: 0.0,
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Index of the last step at or before `t`.
    fn index_at(&self, t: f64) -> Option<usize> {
        let k = self.times.partition_point(|&s| s <= t);
        k.checked_sub(1)
    }

    pub fn survival(&self, t: f64) -> f64 {
        self.index_at(t).map_or(1.0, |k| self.values[k])
    }
}

/// Survival that falls linearly from 1 at `lower` to 0 at `upper`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformBaseline {
    pub lower: f64,
    pub upper: f64,
}

impl UniformBaseline {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower >= 0.0 && upper > lower && upper.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "uniform baseline needs 0 <= lower < upper, got [{lower}, {upper}]"
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn survival(&self, t: f64) -> f64 {
        if t < self.lower {
            1.0
        } else if t >= self.upper {
            0.0
        } else {
            (self.upper - t) / (self.upper - self.lower)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Baseline {
    Weibull(WeibullBaseline),
    Step(StepBaseline),
    Uniform(UniformBaseline),
}

impl Baseline {
    pub fn survival(&self, t: f64) -> f64 {
        match self {
            Baseline::Weibull(w) => w.survival(t),
            Baseline::Step(s) => s.survival(t),
            Baseline::Uniform(u) => u.survival(t),
        }
    }
}

/// Proportional-hazards survival model `S(t|x) = S₀(t)^{exp(x·β)}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxModel {
    pub baseline: Baseline,
    pub beta: Vec<f64>,
}

impl CoxModel {
    pub fn new(baseline: Baseline, beta: Vec<f64>) -> Self {
        Self { baseline, beta }
    }

    pub fn weibull(lambda: f64, p: f64, beta: Vec<f64>) -> Result<Self> {
        Ok(Self::new(Baseline::Weibull(WeibullBaseline::new(lambda, p)?), beta))
    }

    pub fn dim(&self) -> usize {
        self.beta.len()
    }

    /// Relative risk `exp(x·β)`.
    pub fn risk(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.beta.len() {
            return Err(Error::DimensionMismatch {
                expected: self.beta.len(),
                got: x.len(),
            });
        }
        let eta: f64 = x.iter().zip(&self.beta).map(|(a, b)| a * b).sum();
        let r = eta.exp();
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::Config(format!(
                "linear predictor {eta} gives a non-finite relative risk"
            )));
        }
        Ok(r)
    }

    pub fn survival(&self, x: &[f64], t: f64) -> Result<f64> {
        let r = self.risk(x)?;
        Ok(pow_survival(self.baseline.survival(t), r))
    }

    /// Freezes the model at covariate `x` for repeated evaluation.
    pub fn conditional(&self, x: &[f64]) -> Result<ConditionalSurvival<'_>> {
        let risk = self.risk(x)?;
        Ok(match &self.baseline {
            Baseline::Weibull(w) => ConditionalSurvival::Weibull { base: *w, risk },
            Baseline::Uniform(u) => ConditionalSurvival::Uniform { base: *u, risk },
            Baseline::Step(s) => ConditionalSurvival::Step(StepCurve::new(s, risk)),
        })
    }
}

fn pow_survival(s: f64, r: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else if r == 1.0 {
        s
    } else {
        (r * s.ln()).exp()
    }
}

/// A step survival curve raised to a fixed relative risk, with cached
/// tail integrals so that repeated queries cost `O(log m)`.
#[derive(Debug, Clone)]
pub struct StepCurve<'a> {
    times: &'a [f64],
    surv: Vec<f64>,
    // tail[k] = ∫_{times[k]}^{horizon} S(t) dt
    tail: Vec<f64>,
    horizon: f64,
}

impl<'a> StepCurve<'a> {
    fn new(base: &'a StepBaseline, risk: f64) -> Self {
        let m = base.times.len();
        let surv: Vec<f64> = base.values.iter().map(|&v| pow_survival(v, risk)).collect();
        let mut tail = vec![0.0; m];
        let mut acc = 0.0;
        for k in (0..m).rev() {
            let end = if k + 1 < m { base.times[k + 1] } else { base.horizon };
            acc += (end - base.times[k]) * surv[k];
            tail[k] = acc;
        }
        Self {
            times: &base.times,
            surv,
            tail,
            horizon: base.horizon,
        }
    }

    fn index_at(&self, t: f64) -> Option<usize> {
        self.times.partition_point(|&s| s <= t).checked_sub(1)
    }

    pub fn survival(&self, t: f64) -> f64 {
        self.index_at(t).map_or(1.0, |k| self.surv[k])
    }

    /// ∫_c^horizon S(t) dt.
    pub fn tail_from(&self, c: f64) -> f64 {
        let c = c.max(0.0);
        if c >= self.horizon {
            return 0.0;
        }
        match self.index_at(c) {
            None => {
                let first = self.times.first().copied().unwrap_or(self.horizon);
                (first - c) + self.tail.first().copied().unwrap_or(0.0)
            }
            Some(k) => {
                let next_tail = if k + 1 < self.times.len() { self.tail[k + 1] } else { 0.0 };
                let end = if k + 1 < self.times.len() { self.times[k + 1] } else { self.horizon };
                (end - c) * self.surv[k] + next_tail
            }
        }
    }
}

/// A survival model evaluated at a fixed covariate vector.
#[derive(Debug, Clone)]
pub enum ConditionalSurvival<'a> {
    Weibull { base: WeibullBaseline, risk: f64 },
    Uniform { base: UniformBaseline, risk: f64 },
    Step(StepCurve<'a>),
}

impl ConditionalSurvival<'_> {
    pub fn survival(&self, t: f64) -> f64 {
        match self {
            Self::Weibull { base, risk } => {
                if t <= 0.0 {
                    1.0
                } else {
                    (-risk * (base.lambda * t).powf(base.p)).exp()
                }
            }
            Self::Uniform { base, risk } => pow_survival(base.survival(t), *risk),
            Self::Step(c) => c.survival(t),
        }
    }

    /// ∫_c^∞ S(t) dt (step curves stop at their horizon).
    pub fn tail_from(&self, c: f64) -> f64 {
        let c = c.max(0.0);
        match self {
            Self::Weibull { base, risk } => {
                let a = 1.0 / base.p;
                let z = risk * (base.lambda * c).powf(base.p);
                let scale = 1.0 / (base.p * base.lambda * risk.powf(a));
                scale * scaled_upper_gamma(a, z) * (-z).exp()
            }
            Self::Uniform { base, risk } => uniform_tail(base, *risk, c),
            Self::Step(curve) => curve.tail_from(c),
        }
    }

    /// ∫_0^upper S(t) dt; `upper` may be infinite.
    pub fn restricted_mean(&self, upper: f64) -> f64 {
        match self {
            Self::Weibull { base, risk } if upper.is_finite() => {
                let a = 1.0 / base.p;
                let z = risk * (base.lambda * upper).powf(base.p);
                lower_gamma(a, z) / (base.p * base.lambda * risk.powf(a))
            }
            _ => {
                let total = self.tail_from(0.0);
                if upper.is_finite() {
                    total - self.tail_from(upper)
                } else {
                    total
                }
            }
        }
    }

    /// Mean residual form `Q(c) = E[Y | Y > c] = c + ∫_c^∞ S / S(c)`.
    ///
    /// Evaluated without a survival floor: the ratio is computed in a form
    /// that stays finite as `S(c) → 0`. When no mass remains beyond `c`
    /// the value collapses to `c`.
    pub fn tail_mean(&self, c: f64) -> f64 {
        let c = c.max(0.0);
        match self {
            Self::Weibull { base, risk } => {
                let a = 1.0 / base.p;
                let z = risk * (base.lambda * c).powf(base.p);
                c + scaled_upper_gamma(a, z) / (base.p * base.lambda * risk.powf(a))
            }
            Self::Uniform { base, risk } => {
                if c >= base.upper {
                    c
                } else if c < base.lower {
                    c + uniform_tail(base, *risk, c)
                } else {
                    c + (base.upper - c) / (risk + 1.0)
                }
            }
            Self::Step(curve) => {
                let s = curve.survival(c);
                if s <= 0.0 {
                    c
                } else {
                    c + curve.tail_from(c) / s
                }
            }
        }
    }

    /// Stieltjes integral `∫_{[0, y]} q(c) / S(c)² dF(c)` where `F = 1 − S`
    /// is the law this curve describes (the censoring law when used as Ḡ).
    ///
    /// `include_endpoint` decides whether an atom exactly at `y` counts.
    pub fn censoring_correction<Q: Fn(f64) -> f64>(
        &self,
        q: Q,
        y: f64,
        include_endpoint: bool,
        policy: SupportPolicy,
    ) -> Result<f64> {
        if y <= 0.0 && !include_endpoint {
            return Ok(0.0);
        }
        let floor = EPS_SURV;
        let denom = |s: f64| -> Result<f64> {
            if s >= floor {
                Ok(s * s)
            } else {
                match policy {
                    SupportPolicy::Strict => Err(Error::Support {
                        what: "censoring survival inside the correction integral".into(),
                        value: s,
                        floor,
                    }),
                    SupportPolicy::Clamp => Ok(floor * floor),
                }
            }
        };
        match self {
            Self::Step(curve) => {
                let end = if include_endpoint {
                    curve.times.partition_point(|&t| t <= y)
                } else {
                    curve.times.partition_point(|&t| t < y)
                };
                let mut total = 0.0;
                let mut prev = 1.0;
                for k in 0..end {
                    let s = curve.surv[k];
                    let mass = prev - s;
                    prev = s;
                    if mass <= 0.0 {
                        continue;
                    }
                    let c = curve.times[k];
                    total += q(c) * mass / denom(s)?;
                }
                Ok(total)
            }
            Self::Weibull { base, risk } => {
                if policy == SupportPolicy::Strict {
                    denom(self.survival(y))?;
                }
                // substitute v = (λc)^p so that dG = r e^{-rv} dv is smooth
                let upper_v = (base.lambda * y.max(0.0)).powf(base.p);
                let inv_p = 1.0 / base.p;
                let integrand = |v: f64| {
                    let g = (-risk * v).exp();
                    let c = v.powf(inv_p) / base.lambda;
                    let d = if g >= floor { g * g } else { floor * floor };
                    q(c) * risk * g / d
                };
                Ok(integrate(integrand, 0.0, upper_v, QuadOptions::default()))
            }
            Self::Uniform { base, risk } => {
                if policy == SupportPolicy::Strict {
                    denom(self.survival(y))?;
                }
                let hi = y.min(base.upper);
                if hi <= base.lower {
                    return Ok(0.0);
                }
                let width = base.upper - base.lower;
                let integrand = |c: f64| {
                    let frac = (base.upper - c) / width;
                    let s = pow_survival(frac, *risk);
                    let density = risk * pow_survival(frac, risk - 1.0) / width;
                    let d = if s >= floor { s * s } else { floor * floor };
                    q(c) * density / d
                };
                Ok(integrate(integrand, base.lower, hi, QuadOptions::default()))
            }
        }
    }
}

fn uniform_tail(base: &UniformBaseline, risk: f64, c: f64) -> f64 {
    let width = base.upper - base.lower;
    let from_lower = width / (risk + 1.0);
    if c < base.lower {
        (base.lower - c) + from_lower
    } else if c >= base.upper {
        0.0
    } else {
        let rem = base.upper - c;
        rem * pow_survival(rem / width, risk) / (risk + 1.0)
    }
}

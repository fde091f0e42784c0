//! Survival-function primitives: Cox models with Weibull, step or uniform
//! baselines, partial-likelihood fitting, and the integrals the signals need.

pub mod fit;
pub mod gamma;
mod model;
pub mod quad;

use serde::{Deserialize, Serialize};

pub use fit::{breslow_baseline, fit_cox, partial_log_likelihood, CoxFit, CoxFitOptions};
pub use model::{
    Baseline, ConditionalSurvival, CoxModel, StepBaseline, StepCurve, UniformBaseline,
    WeibullBaseline,
};

use crate::error::{Error, Result};

/// Floor applied to survival values that end up in a denominator.
pub const EPS_SURV: f64 = 1e-4;

/// What to do when a survival denominator drops below [`EPS_SURV`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportPolicy {
    /// Raise a support error.
    Strict,
    /// Replace the value by the floor and carry on.
    #[default]
    Clamp,
}

/// `S(t|x) = S₀(t)^{exp(x·β)}`.
pub fn cox_survival(model: &CoxModel, x: &[f64], t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("time must be nonnegative, got {t}")));
    }
    model.survival(x, t)
}

/// Exact inverse of the Weibull-baseline survival: returns `t` with `S(t|x) = u`.
pub fn sample_event_time(model: &CoxModel, x: &[f64], u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::InvalidArgument(format!("u must lie in (0,1), got {u}")));
    }
    let r = model.risk(x)?;
    match &model.baseline {
        Baseline::Weibull(w) => Ok((-u.ln() / r).powf(1.0 / w.p) / w.lambda),
        Baseline::Uniform(b) => {
            // S = ((hi - t)/(hi - lo))^r on the support
            let frac = u.powf(1.0 / r);
            Ok(b.upper - frac * (b.upper - b.lower))
        }
        Baseline::Step(_) => Err(Error::InvalidArgument(
            "inverse-transform sampling needs a continuous baseline".into(),
        )),
    }
}

/// `∫₀^upper S(t|x) dt`. Step baselines stop at their horizon.
pub fn restricted_mean(model: &CoxModel, x: &[f64], upper: f64) -> Result<f64> {
    if !(upper > 0.0) {
        return Err(Error::InvalidArgument(format!("upper limit must be positive, got {upper}")));
    }
    Ok(model.conditional(x)?.restricted_mean(upper))
}

/// `Q(c) = c + ∫_c^∞ S(t|x) dt / S(c|x)`, the mean event time given survival past `c`.
pub fn conditional_tail_mean(model: &CoxModel, x: &[f64], c: f64) -> Result<f64> {
    if !(c >= 0.0) {
        return Err(Error::InvalidArgument(format!("c must be nonnegative, got {c}")));
    }
    let cond = model.conditional(x)?;
    let s = cond.survival(c);
    if s < EPS_SURV {
        return Err(Error::Support {
            what: format!("survival at c={c}"),
            value: s,
            floor: EPS_SURV,
        });
    }
    Ok(cond.tail_mean(c))
}

/// `∫_{[0, ỹ]} q(c) / Ḡ(c|x)² dG(c|x)` for the censoring model `g_model`.
///
/// Atoms at `ỹ` itself are included; Ḡ values under the floor raise a
/// support error. See [`ConditionalSurvival::censoring_correction`] for the
/// configurable form.
pub fn correction_integral<Q: Fn(f64) -> f64>(
    g_model: &CoxModel,
    q_fn: Q,
    x: &[f64],
    y_tilde: f64,
) -> Result<f64> {
    if !(y_tilde >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "observed time must be nonnegative, got {y_tilde}"
        )));
    }
    g_model
        .conditional(x)?
        .censoring_correction(q_fn, y_tilde, true, SupportPolicy::Strict)
}

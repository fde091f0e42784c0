//! Instance-wise signals whose conditional mean vanishes when the trial and
//! the observational study agree on the conditional treatment effect.

mod regress;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use regress::{BoostParams, BoostedTrees, LinearRegressor, MeanOutcomeRegressor, RegressorSpec};

use crate::dataset::{Cohort, SubjectRecord};
use crate::error::{Error, Result};
use crate::nuisance::NuisanceSet;
use crate::survival::{SupportPolicy, EPS_SURV};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    #[default]
    Cdr,
    Ipcw,
    IpwYtilde,
    DrYtilde,
    IpwY,
    DrY,
}

impl SignalKind {
    pub const ALL: [SignalKind; 6] = [
        SignalKind::Cdr,
        SignalKind::Ipcw,
        SignalKind::IpwYtilde,
        SignalKind::DrYtilde,
        SignalKind::IpwY,
        SignalKind::DrY,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SignalKind::Cdr => "cdr",
            SignalKind::Ipcw => "ipcw",
            SignalKind::IpwYtilde => "ipw_ytilde",
            SignalKind::DrYtilde => "dr_ytilde",
            SignalKind::IpwY => "ipw_y",
            SignalKind::DrY => "dr_y",
        }
    }

    /// Kinds evaluated on uncensored records only.
    pub fn uncensored_only(&self) -> bool {
        matches!(self, SignalKind::IpwY | SignalKind::DrY)
    }

    pub fn needs_regressors(&self) -> bool {
        matches!(self, SignalKind::DrYtilde | SignalKind::DrY)
    }
}

impl fmt::Display for SignalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SignalKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        SignalKind::ALL
            .into_iter()
            .find(|k| k.as_str() == norm)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown signal kind {s:?}")))
    }
}

/// Per-record signal values aligned with their covariate rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalVector {
    pub psi: Vec<f64>,
    pub x_rows: Array2<f64>,
    pub kind: SignalKind,
    /// Row indices into the cohort the signals were computed from.
    pub kept_indices: Vec<usize>,
    /// Denominators raised to the survival floor.
    pub clamped: usize,
}

impl SignalVector {
    pub fn len(&self) -> usize {
        self.psi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psi.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.psi.iter().sum::<f64>() / self.psi.len().max(1) as f64
    }

    /// CSV with columns `index, psi` followed by the covariates.
    pub fn write_csv<W: Write>(&self, covariate_names: &[String], writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["index".to_string(), "psi".to_string()];
        header.extend(covariate_names.iter().cloned());
        wtr.write_record(&header)?;
        for (k, (&idx, &psi)) in self.kept_indices.iter().zip(&self.psi).enumerate() {
            let mut row = vec![idx.to_string(), psi.to_string()];
            row.extend(self.x_rows.row(k).iter().map(|v| v.to_string()));
            wtr.write_record(&row)?;
        }
        wtr.flush().map_err(|e| Error::io("<signal csv>", e))?;
        Ok(())
    }
}

/// Mean-outcome regressors indexed `[s][a]`.
#[derive(Debug)]
pub struct OutcomeModels {
    models: [[Box<dyn MeanOutcomeRegressor>; 2]; 2],
}

impl OutcomeModels {
    pub fn new(models: [[Box<dyn MeanOutcomeRegressor>; 2]; 2]) -> Self {
        Self { models }
    }

    /// Trains one regressor per `(s, a)` stratum of `cohort` on `Ỹ`.
    pub fn fit(cohort: &Cohort, spec: &RegressorSpec) -> Result<Self> {
        let mut fitted: Vec<Box<dyn MeanOutcomeRegressor>> = Vec::with_capacity(4);
        for s in 0..2u8 {
            for a in 0..2u8 {
                let idx = cohort.stratum(s, a);
                if idx.is_empty() {
                    return Err(Error::Stratum {
                        model: "mean-outcome regressor".into(),
                        s,
                        a,
                        reason: "stratum is empty".into(),
                    });
                }
                let y: Vec<f64> = idx.iter().map(|&i| cohort.records[i].y_obs).collect();
                fitted.push(spec.fit(cohort.design(&idx).view(), &y)?);
            }
        }
        let mut it = fitted.into_iter();
        let mut next = || it.next().expect("four regressors");
        let m00 = next();
        let m01 = next();
        let m10 = next();
        let m11 = next();
        Ok(Self::new([[m00, m01], [m10, m11]]))
    }

    pub fn predict(&self, s: u8, a: u8, x: &[f64]) -> f64 {
        self.models[usize::from(s)][usize::from(a)].predict(x)
    }
}

/// Inputs beyond the nuisance set that some signal kinds need.
#[derive(Debug, Clone, Copy, Default)]
pub struct SignalExtras<'a> {
    /// Regressors for the doubly-robust baselines.
    pub regressors: Option<&'a OutcomeModels>,
    pub policy: SupportPolicy,
}

fn sign(s: u8, a: u8) -> f64 {
    let ss = if s == 1 { 1.0 } else { -1.0 };
    let sa = if a == 1 { 1.0 } else { -1.0 };
    ss * sa
}

fn check_score(what: &str, p: f64) -> Result<f64> {
    if p > 0.0 && p < 1.0 {
        Ok(p)
    } else {
        Err(Error::InvalidArgument(format!(
            "{what} score {p} outside (0,1); trim the cohort first"
        )))
    }
}

/// Divides by a survival value, flooring it per `policy`.
fn survival_ratio(num: f64, surv: f64, policy: SupportPolicy, clamped: &mut usize, what: &str) -> Result<f64> {
    if surv >= EPS_SURV {
        return Ok(num / surv);
    }
    match policy {
        SupportPolicy::Strict => Err(Error::Support {
            what: what.to_string(),
            value: surv,
            floor: EPS_SURV,
        }),
        SupportPolicy::Clamp => {
            *clamped += 1;
            Ok(num / EPS_SURV)
        }
    }
}

/// The censoring-unbiased transform of the outcome for a record in stratum
/// `(s, a)`: events are reweighted by `1/Ḡ(Y)`, censored records are imputed
/// by `Q(C)/Ḡ(C)`, and the augmentation integral is subtracted.
pub fn rubin_signal(record: &SubjectRecord, nuisances: &NuisanceSet, s: u8, a: u8) -> Result<f64> {
    let mut clamped = 0;
    rubin_inner(record, nuisances, s, a, SupportPolicy::Strict, &mut clamped)
}

fn rubin_inner(
    record: &SubjectRecord,
    nuisances: &NuisanceSet,
    s: u8,
    a: u8,
    policy: SupportPolicy,
    clamped: &mut usize,
) -> Result<f64> {
    if record.s != s || record.a != a {
        return Err(Error::InvalidArgument(format!(
            "record in stratum ({}, {}) evaluated as ({s}, {a})",
            record.s, record.a
        )));
    }
    let x = &record.x;
    let f = nuisances.f_bar(s, a).conditional(x)?;
    let g = nuisances.g_bar(s, a).conditional(x)?;
    let t = record.y_obs;
    let head = if record.event() {
        survival_ratio(t, g.survival(t), policy, clamped, "censoring survival at the event time")?
    } else {
        survival_ratio(f.tail_mean(t), g.survival(t), policy, clamped, "censoring survival at the censoring time")?
    };
    // atoms of G at the censoring time count for censored records only
    let correction = g.censoring_correction(|c| f.tail_mean(c), t, !record.event(), policy)?;
    Ok(head - correction)
}

/// Censoring-doubly-robust difference of transported treatment effects.
pub fn cdr_signal(record: &SubjectRecord, nuisances: &NuisanceSet) -> Result<f64> {
    let mut clamped = 0;
    cdr_inner(record, nuisances, SupportPolicy::Strict, &mut clamped)
}

fn cdr_inner(record: &SubjectRecord, nuisances: &NuisanceSet, policy: SupportPolicy, clamped: &mut usize) -> Result<f64> {
    let x = &record.x;
    let s = record.s;
    let p_s = check_score("selection", nuisances.p_study(s, x))?;
    let star = rubin_inner(record, nuisances, s, record.a, policy, clamped)?;
    let mut total = 0.0;
    for a in 0..2u8 {
        let mu = nuisances.f_bar(s, a).conditional(x)?.restricted_mean(f64::INFINITY);
        let mut inner = mu;
        if record.a == a {
            let p_a = check_score("propensity", nuisances.p_arm(s, a, x))?;
            inner += (star - mu) / p_a;
        }
        total += sign(s, a) * inner / p_s;
    }
    Ok(total)
}

/// Inverse-propensity difference built on the observed time `Ỹ`.
pub fn ipw_ytilde_signal(record: &SubjectRecord, nuisances: &NuisanceSet) -> Result<f64> {
    let x = &record.x;
    let p_s = check_score("selection", nuisances.p_study(record.s, x))?;
    let p_a = check_score("propensity", nuisances.p_arm(record.s, record.a, x))?;
    Ok(sign(record.s, record.a) * record.y_obs / (p_s * p_a))
}

/// Augmented inverse-propensity difference on `Ỹ` with regressors `μ̃`.
pub fn dr_ytilde_signal(record: &SubjectRecord, nuisances: &NuisanceSet, regressors: &OutcomeModels) -> Result<f64> {
    let x = &record.x;
    let s = record.s;
    let p_s = check_score("selection", nuisances.p_study(s, x))?;
    let mut total = 0.0;
    for a in 0..2u8 {
        let mu = regressors.predict(s, a, x);
        let mut inner = mu;
        if record.a == a {
            let p_a = check_score("propensity", nuisances.p_arm(s, a, x))?;
            inner += (record.y_obs - mu) / p_a;
        }
        total += sign(s, a) * inner / p_s;
    }
    Ok(total)
}

/// Inverse-probability-of-censoring weighted difference; censored records give 0.
pub fn ipcw_signal(record: &SubjectRecord, nuisances: &NuisanceSet) -> Result<f64> {
    let mut clamped = 0;
    ipcw_inner(record, nuisances, SupportPolicy::Strict, &mut clamped)
}

fn ipcw_inner(record: &SubjectRecord, nuisances: &NuisanceSet, policy: SupportPolicy, clamped: &mut usize) -> Result<f64> {
    if !record.event() {
        return Ok(0.0);
    }
    let x = &record.x;
    let (s, a) = (record.s, record.a);
    let p_s = check_score("selection", nuisances.p_study(s, x))?;
    let p_a = check_score("propensity", nuisances.p_arm(s, a, x))?;
    let g = nuisances.g_bar(s, a).conditional(x)?.survival(record.y_obs);
    let weighted = survival_ratio(record.y_obs, g, policy, clamped, "censoring survival at the event time")?;
    Ok(sign(s, a) * weighted / (p_s * p_a))
}

/// Applies the per-record rule of `kind` to every record of `cohort`.
///
/// The uncensored-only kinds keep just the `Δ = 1` rows and expect
/// `nuisances` (and regressors) fitted on that subset; see
/// [`uncensored_only_signals`].
pub fn compute_signals(
    cohort: &Cohort,
    nuisances: &NuisanceSet,
    kind: SignalKind,
    extras: &SignalExtras<'_>,
) -> Result<SignalVector> {
    if cohort.is_empty() {
        return Err(Error::InvalidArgument("cannot compute signals on an empty cohort".into()));
    }
    nuisances.check_dim(cohort.dim())?;
    let kept: Vec<usize> = if kind.uncensored_only() {
        cohort.indices_where(|r| r.event())
    } else {
        (0..cohort.len()).collect()
    };
    if kept.is_empty() {
        return Err(Error::InvalidArgument(format!("no records qualify for the {kind} signal")));
    }
    if kind.needs_regressors() && extras.regressors.is_none() {
        return Err(Error::InvalidArgument(format!("{kind} signal needs trained outcome regressors")));
    }
    let policy = extras.policy;
    let values: Vec<(f64, usize)> = kept
        .par_iter()
        .map(|&i| {
            let r = &cohort.records[i];
            let mut clamped = 0;
            let v = match kind {
                SignalKind::Cdr => cdr_inner(r, nuisances, policy, &mut clamped)?,
                SignalKind::Ipcw => ipcw_inner(r, nuisances, policy, &mut clamped)?,
                SignalKind::IpwYtilde | SignalKind::IpwY => ipw_ytilde_signal(r, nuisances)?,
                SignalKind::DrYtilde | SignalKind::DrY => {
                    dr_ytilde_signal(r, nuisances, extras.regressors.expect("checked above"))?
                }
            };
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    kind: kind.to_string(),
                    index: i,
                });
            }
            Ok((v, clamped))
        })
        .collect::<Result<_>>()?;
    Ok(SignalVector {
        psi: values.iter().map(|v| v.0).collect(),
        clamped: values.iter().map(|v| v.1).sum(),
        x_rows: cohort.design(&kept),
        kind,
        kept_indices: kept,
    })
}

/// The `Δ = 1` baselines: IPW or AIPW on event times, with scores (and
/// regressors) that were refit on the uncensored records only.
pub fn uncensored_only_signals(
    cohort: &Cohort,
    nuisances_delta1: &NuisanceSet,
    kind: SignalKind,
    regressors: Option<&OutcomeModels>,
) -> Result<SignalVector> {
    if !kind.uncensored_only() {
        return Err(Error::InvalidArgument(format!("{kind} is not an uncensored-only signal")));
    }
    let extras = SignalExtras {
        regressors,
        policy: SupportPolicy::Strict,
    };
    compute_signals(cohort, nuisances_delta1, kind, &extras)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nuisance::{Provenance, ScoreModel};
    use crate::survival::{Baseline, CoxModel, StepBaseline};

    fn no_censoring(f: CoxModel) -> NuisanceSet {
        let one = CoxModel::new(Baseline::Step(StepBaseline::constant_one()), vec![0.0; f.dim()]);
        NuisanceSet {
            selection: ScoreModel::Constant { p: 0.4 },
            propensity: [ScoreModel::Constant { p: 0.5 }, ScoreModel::Constant { p: 0.3 }],
            f_bar: [[f.clone(), f.clone()], [f.clone(), f]],
            g_bar: [[one.clone(), one.clone()], [one.clone(), one]],
            provenance: Provenance::Oracle,
        }
    }

    fn rec(s: u8, a: u8, y: f64, delta: u8) -> SubjectRecord {
        SubjectRecord {
            x: vec![0.2],
            a,
            s,
            y_obs: y,
            delta,
        }
    }

    #[test]
    fn rubin_without_censoring_is_identity() {
        let n = no_censoring(CoxModel::weibull(1.0, 1.0, vec![0.3]).unwrap());
        assert_eq!(rubin_signal(&rec(1, 0, 2.5, 1), &n, 1, 0).unwrap(), 2.5);
        assert!(rubin_signal(&rec(1, 0, 2.5, 1), &n, 0, 0).is_err());
    }

    #[test]
    fn rubin_half_censoring_doubles() {
        let mut n = no_censoring(CoxModel::weibull(1.0, 1.0, vec![0.0]).unwrap());
        // Ḡ drops to 0.5 exactly at the event time
        n.g_bar[0][1] = CoxModel::new(
            Baseline::Step(StepBaseline::new(vec![3.0], vec![0.5]).unwrap()),
            vec![0.0],
        );
        assert!((rubin_signal(&rec(0, 1, 3.0, 1), &n, 0, 1).unwrap() - 6.0).abs() < 1e-15);
    }

    #[test]
    fn ipcw_and_ipw_basics() {
        let n = no_censoring(CoxModel::weibull(1.0, 1.0, vec![0.0]).unwrap());
        assert_eq!(ipcw_signal(&rec(1, 1, 2.0, 0), &n).unwrap(), 0.0);
        assert_eq!(ipw_ytilde_signal(&rec(0, 0, 0.0, 1), &n).unwrap(), 0.0);
        // s=1, a=1: +y / (0.4 · 0.3)
        let v = ipcw_signal(&rec(1, 1, 2.0, 1), &n).unwrap();
        assert!((v - 2.0 / 0.12).abs() < 1e-12);
        assert_eq!(v, ipw_ytilde_signal(&rec(1, 1, 2.0, 1), &n).unwrap());
    }

    #[test]
    fn kind_parsing() {
        for k in SignalKind::ALL {
            assert_eq!(k.as_str().parse::<SignalKind>().unwrap(), k);
        }
        assert_eq!("IPW-Ytilde".parse::<SignalKind>().unwrap(), SignalKind::IpwYtilde);
        assert!("nope".parse::<SignalKind>().is_err());
    }
}

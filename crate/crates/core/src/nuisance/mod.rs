//! Selection and propensity scores, the survival nuisance bundle, trimming,
//! and oracle or deliberately misspecified variants for ablations.

mod logistic;

use serde::{Deserialize, Serialize};

pub use logistic::{fit_logistic, logistic_log_likelihood, sigmoid, LogisticModel, LogisticOptions};

use crate::dataset::{Cohort, CovariateLaw, DGPConfig, LatentRecord, PropensitySpec};
use crate::error::{Error, Result};
use crate::survival::{fit_cox, Baseline, CoxFitOptions, CoxModel, StepBaseline, UniformBaseline};

/// A probability as a function of covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScoreModel {
    Logistic(LogisticModel),
    Constant { p: f64 },
    /// Linear-logistic score whose slopes act on the full covariate vector.
    Sigmoid { beta: Vec<f64>, offset: f64 },
    /// `P(S=1|x)` by Bayes rule from independent per-study covariate laws.
    /// `skip` leading columns (an intercept) carry no information.
    CovariateBayes {
        rct: Vec<CovariateLaw>,
        os: Vec<CovariateLaw>,
        prior_os: f64,
        skip: usize,
    },
}

impl ScoreModel {
    pub fn prob(&self, x: &[f64]) -> f64 {
        match self {
            ScoreModel::Logistic(m) => m.predict(x),
            ScoreModel::Constant { p } => *p,
            ScoreModel::Sigmoid { beta, offset } => {
                sigmoid(x.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>() + offset)
            }
            ScoreModel::CovariateBayes {
                rct,
                os,
                prior_os,
                skip,
            } => {
                let mut log_ratio = (prior_os / (1.0 - prior_os)).ln();
                for ((v, l0), l1) in x[*skip..].iter().zip(rct).zip(os) {
                    log_ratio += l1.density(*v).ln() - l0.density(*v).ln();
                }
                sigmoid(log_ratio)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Fitted,
    Oracle,
    MissF,
    MissGp,
}

/// Everything the signals need: `P(S=1|X)`, `P(A=1|X,S=s)`, and the event
/// and censoring survival curves of each `(s, a)` stratum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceSet {
    pub selection: ScoreModel,
    /// Indexed by study.
    pub propensity: [ScoreModel; 2],
    /// Event-time survival, indexed `[s][a]`.
    pub f_bar: [[CoxModel; 2]; 2],
    /// Censoring-time survival, indexed `[s][a]`.
    pub g_bar: [[CoxModel; 2]; 2],
    pub provenance: Provenance,
}

impl NuisanceSet {
    /// `P(S=s | x)`.
    pub fn p_study(&self, s: u8, x: &[f64]) -> f64 {
        let p1 = self.selection.prob(x);
        if s == 1 {
            p1
        } else {
            1.0 - p1
        }
    }

    /// `P(A=a | x, S=s)`.
    pub fn p_arm(&self, s: u8, a: u8, x: &[f64]) -> f64 {
        let p1 = self.propensity[usize::from(s)].prob(x);
        if a == 1 {
            p1
        } else {
            1.0 - p1
        }
    }

    pub fn f_bar(&self, s: u8, a: u8) -> &CoxModel {
        &self.f_bar[usize::from(s)][usize::from(a)]
    }

    pub fn g_bar(&self, s: u8, a: u8) -> &CoxModel {
        &self.g_bar[usize::from(s)][usize::from(a)]
    }

    /// Checks every survival model against covariate dimension `d`.
    pub fn check_dim(&self, d: usize) -> Result<()> {
        for row in self.f_bar.iter().chain(self.g_bar.iter()) {
            for m in row {
                if m.dim() != d {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        got: m.dim(),
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct NuisanceOptions {
    pub logistic: LogisticOptions,
    pub cox: CoxFitOptions,
    /// Use `Ḡ ≡ 1` for a stratum with no censored records instead of failing.
    #[serde(default)]
    pub allow_uncensored: bool,
}

/// Fits all twelve components on `cohort`.
pub fn fit_nuisances(cohort: &Cohort, opts: &NuisanceOptions) -> Result<NuisanceSet> {
    if cohort.is_empty() {
        return Err(Error::InvalidArgument("cannot fit nuisances on an empty cohort".into()));
    }
    let d = cohort.dim();
    let (selection, propensity) = fit_scores(cohort, &opts.logistic)?;

    let mut f_bar = Vec::with_capacity(4);
    let mut g_bar = Vec::with_capacity(4);
    for s in 0..2u8 {
        for a in 0..2u8 {
            let idx = cohort.stratum(s, a);
            if idx.is_empty() {
                return Err(Error::Stratum {
                    model: "F̄".into(),
                    s,
                    a,
                    reason: "stratum is empty".into(),
                });
            }
            let xs = cohort.design(&idx);
            let time: Vec<f64> = idx.iter().map(|&i| cohort.records[i].y_obs).collect();
            let events: Vec<bool> = idx.iter().map(|&i| cohort.records[i].delta == 1).collect();
            let censored: Vec<bool> = events.iter().map(|e| !e).collect();
            let n_events = events.iter().filter(|&&e| e).count();
            let n_censored = idx.len() - n_events;
            if n_events < 2 {
                return Err(Error::Stratum {
                    model: "F̄".into(),
                    s,
                    a,
                    reason: format!("needs at least 2 events, found {n_events}"),
                });
            }
            let f = fit_cox(xs.view(), &time, &events, &opts.cox).map_err(|e| Error::Stratum {
                model: "F̄".into(),
                s,
                a,
                reason: e.to_string(),
            })?;
            f_bar.push(f.model);
            let g = if n_censored == 0 && opts.allow_uncensored {
                CoxModel::new(Baseline::Step(StepBaseline::constant_one()), vec![0.0; d])
            } else if n_censored < 2 {
                return Err(Error::Stratum {
                    model: "Ḡ".into(),
                    s,
                    a,
                    reason: format!("needs at least 2 censored records, found {n_censored}"),
                });
            } else {
                fit_cox(xs.view(), &time, &censored, &opts.cox)
                    .map_err(|e| Error::Stratum {
                        model: "Ḡ".into(),
                        s,
                        a,
                        reason: e.to_string(),
                    })?
                    .model
            };
            g_bar.push(g);
        }
    }
    Ok(NuisanceSet {
        selection,
        propensity,
        f_bar: into_grid(f_bar),
        g_bar: into_grid(g_bar),
        provenance: Provenance::Fitted,
    })
}

/// Logistic selection score and per-study propensity scores.
fn fit_scores(cohort: &Cohort, opts: &LogisticOptions) -> Result<(ScoreModel, [ScoreModel; 2])> {
    let all: Vec<usize> = (0..cohort.len()).collect();
    let x = cohort.design(&all);
    let s_labels: Vec<bool> = cohort.records.iter().map(|r| r.s == 1).collect();
    let selection = fit_logistic(x.view(), &s_labels, opts)?;
    let mut propensity = Vec::with_capacity(2);
    for s in 0..2u8 {
        let idx = cohort.indices_where(|r| r.s == s);
        if idx.is_empty() {
            return Err(Error::Stratum {
                model: "propensity".into(),
                s,
                a: 0,
                reason: "study has no records".into(),
            });
        }
        let xs = cohort.design(&idx);
        let labels: Vec<bool> = idx.iter().map(|&i| cohort.records[i].a == 1).collect();
        propensity.push(ScoreModel::Logistic(fit_logistic(xs.view(), &labels, opts)?));
    }
    Ok((ScoreModel::Logistic(selection), into_pair(propensity)))
}

/// Copy of `base` whose selection and propensity scores are refit on
/// `cohort`; the survival models are kept. Used for the `Δ = 1` baselines.
pub fn refit_scores(base: &NuisanceSet, cohort: &Cohort, opts: &LogisticOptions) -> Result<NuisanceSet> {
    if cohort.is_empty() {
        return Err(Error::InvalidArgument("cannot fit scores on an empty cohort".into()));
    }
    base.check_dim(cohort.dim())?;
    let (selection, propensity) = fit_scores(cohort, opts)?;
    Ok(NuisanceSet {
        selection,
        propensity,
        ..base.clone()
    })
}

/// The true nuisance functions of a simulation config.
///
/// Only defined when the observed covariates are the simulated ones and
/// censoring is independent of the event time.
pub fn oracle_nuisances(config: &DGPConfig) -> Result<NuisanceSet> {
    config.validate()?;
    if !config.concealed.is_empty() {
        return Err(Error::Config(
            "oracle nuisances are undefined when covariates are concealed".into(),
        ));
    }
    if config.global_censoring.is_some() {
        return Err(Error::Config(
            "oracle censoring survival is undefined under global censoring".into(),
        ));
    }
    let (n0, n1) = (config.n.rct as f64, config.n.os as f64);
    let selection = ScoreModel::CovariateBayes {
        rct: config.covariates.iter().map(|c| c.rct.clone()).collect(),
        os: config.covariates.iter().map(|c| c.os.clone()).collect(),
        prior_os: n1 / (n0 + n1),
        skip: usize::from(config.intercept),
    };
    let propensity = [0u8, 1].map(|s| match config.propensity.get(s) {
        PropensitySpec::Constant { p } => ScoreModel::Constant { p: *p },
        PropensitySpec::Sigmoid { beta, offset } => ScoreModel::Sigmoid {
            beta: beta.clone(),
            offset: *offset,
        },
    });
    let d = config.full_dim();
    let mut f_bar = Vec::with_capacity(4);
    let mut g_bar = Vec::with_capacity(4);
    for s in 0..2u8 {
        for a in 0..2u8 {
            f_bar.push(config.event_model(s, a)?);
            g_bar.push(match config.censoring_model(s, a)? {
                Some(m) => m,
                None => CoxModel::new(Baseline::Step(StepBaseline::constant_one()), vec![0.0; d]),
            });
        }
    }
    Ok(NuisanceSet {
        selection,
        propensity,
        f_bar: into_grid(f_bar),
        g_bar: into_grid(g_bar),
        provenance: Provenance::Oracle,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Misspecification {
    /// Uniform event-time survival with no covariate effect.
    MissF,
    /// Uniform censoring survival and an OS propensity of 0.5.
    MissGp,
}

/// `(min, max)` time per stratum, indexed `[s][a]`.
pub type TimeRanges = [[(f64, f64); 2]; 2];

impl Misspecification {
    fn what(self) -> &'static str {
        match self {
            Misspecification::MissF => "event",
            Misspecification::MissGp => "censoring",
        }
    }
}

fn ranges_from<I>(items: I, mode: Misspecification) -> Result<TimeRanges>
where
    I: IntoIterator<Item = (u8, u8, f64)>,
{
    let mut out = [[(f64::INFINITY, f64::NEG_INFINITY); 2]; 2];
    for (s, a, t) in items {
        let r = &mut out[usize::from(s)][usize::from(a)];
        *r = (r.0.min(t), r.1.max(t));
    }
    for s in 0..2u8 {
        for a in 0..2u8 {
            let (lo, hi) = out[usize::from(s)][usize::from(a)];
            if !(hi > lo) {
                let what = mode.what();
                return Err(Error::Stratum {
                    model: format!("uniform {what} law"),
                    s,
                    a,
                    reason: format!("needs two distinct {what} times"),
                });
            }
        }
    }
    Ok(out)
}

/// Ranges of the observed event (`MissF`) or censoring (`MissGp`) times.
pub fn observed_ranges(cohort: &Cohort, mode: Misspecification) -> Result<TimeRanges> {
    let want_event = mode == Misspecification::MissF;
    ranges_from(
        cohort
            .records
            .iter()
            .filter(|r| r.event() == want_event)
            .map(|r| (r.s, r.a, r.y_obs)),
        mode,
    )
}

/// Ranges of the simulated event (`MissF`) or censoring (`MissGp`) times,
/// censored or not.
pub fn latent_ranges(latents: &[LatentRecord], mode: Misspecification) -> Result<TimeRanges> {
    ranges_from(
        latents.iter().map(|l| {
            let t = match mode {
                Misspecification::MissF => l.y,
                Misspecification::MissGp => l.c,
            };
            (l.s, l.a, t)
        }),
        mode,
    )
}

/// Replaces part of `nuisances` with deliberately wrong models fitted only
/// to the range of observed times in each stratum of `cohort`.
pub fn misspecify(nuisances: &NuisanceSet, mode: Misspecification, cohort: &Cohort) -> Result<NuisanceSet> {
    misspecify_with_ranges(nuisances, mode, &observed_ranges(cohort, mode)?, cohort.dim())
}

/// [`misspecify`] with explicit per-stratum uniform supports.
pub fn misspecify_with_ranges(
    nuisances: &NuisanceSet,
    mode: Misspecification,
    ranges: &TimeRanges,
    dim: usize,
) -> Result<NuisanceSet> {
    let mut out = nuisances.clone();
    for s in 0..2 {
        for a in 0..2 {
            let (lo, hi) = ranges[s][a];
            let model = CoxModel::new(Baseline::Uniform(UniformBaseline::new(lo, hi)?), vec![0.0; dim]);
            match mode {
                Misspecification::MissF => out.f_bar[s][a] = model,
                Misspecification::MissGp => out.g_bar[s][a] = model,
            }
        }
    }
    if mode == Misspecification::MissGp {
        out.propensity[1] = ScoreModel::Constant { p: 0.5 };
    }
    out.provenance = match mode {
        Misspecification::MissF => Provenance::MissF,
        Misspecification::MissGp => Provenance::MissGp,
    };
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrimConfig {
    pub lower: f64,
    pub upper: f64,
}

impl Default for TrimConfig {
    fn default() -> Self {
        Self {
            lower: 0.05,
            upper: 0.95,
        }
    }
}

impl TrimConfig {
    pub fn validate(&self) -> Result<()> {
        if 0.0 <= self.lower && self.lower < self.upper && self.upper <= 1.0 {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "trim bounds need 0 <= lower < upper <= 1, got [{}, {}]",
                self.lower, self.upper
            )))
        }
    }

    fn admits(&self, p: f64) -> bool {
        p >= self.lower && p <= self.upper
    }
}

/// Indices of records whose selection score and own-study propensity both
/// lie in `[lower, upper]`, in their original order.
pub fn trim_indices(cohort: &Cohort, nuisances: &NuisanceSet, config: &TrimConfig) -> Result<Vec<usize>> {
    config.validate()?;
    let kept: Vec<usize> = cohort.indices_where(|r| {
        config.admits(nuisances.selection.prob(&r.x)) && config.admits(nuisances.p_arm(r.s, 1, &r.x))
    });
    if kept.is_empty() && !cohort.is_empty() {
        return Err(Error::AllTrimmed);
    }
    Ok(kept)
}

pub fn trim(cohort: &Cohort, nuisances: &NuisanceSet, config: &TrimConfig) -> Result<Cohort> {
    Ok(cohort.subset(&trim_indices(cohort, nuisances, config)?))
}

fn into_pair<T>(v: Vec<T>) -> [T; 2] {
    let mut it = v.into_iter();
    let a = it.next().expect("two entries");
    let b = it.next().expect("two entries");
    [a, b]
}

fn into_grid<T>(v: Vec<T>) -> [[T; 2]; 2] {
    let mut it = v.into_iter();
    let mut row = || {
        let a = it.next().expect("four entries");
        let b = it.next().expect("four entries");
        [a, b]
    };
    let r0 = row();
    let r1 = row();
    [r0, r1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::SubjectRecord;

    fn flat_set(d: usize) -> NuisanceSet {
        let one = CoxModel::new(Baseline::Step(StepBaseline::constant_one()), vec![0.0; d]);
        let grid = [[one.clone(), one.clone()], [one.clone(), one]];
        NuisanceSet {
            selection: ScoreModel::Constant { p: 0.5 },
            propensity: [ScoreModel::Constant { p: 0.5 }, ScoreModel::Constant { p: 0.5 }],
            f_bar: grid.clone(),
            g_bar: grid,
            provenance: Provenance::Oracle,
        }
    }

    fn toy_cohort() -> Cohort {
        let recs = (0..5)
            .map(|i| SubjectRecord {
                x: vec![i as f64],
                a: (i % 2) as u8,
                s: u8::from(i > 2),
                y_obs: 1.0 + i as f64,
                delta: 1,
            })
            .collect();
        Cohort::new(recs, vec!["x".into()]).unwrap()
    }

    #[test]
    fn trim_identity_when_scores_are_half() {
        let c = toy_cohort();
        assert_eq!(trim(&c, &flat_set(1), &TrimConfig::default()).unwrap(), c);
    }

    #[test]
    fn trim_drops_extreme_selection() {
        let mut c = toy_cohort();
        for (r, v) in c.records.iter_mut().zip([0.0, 0.1, -0.1, 0.2, 10.0]) {
            r.x = vec![v];
        }
        // sigmoid(-0.1·ln(99)·x) is 0.01 at x = 10 and near 0.5 elsewhere
        let n = NuisanceSet {
            selection: ScoreModel::Sigmoid {
                beta: vec![-0.1 * 99f64.ln()],
                offset: 0.0,
            },
            ..flat_set(1)
        };
        assert!((n.selection.prob(&[10.0]) - 0.01).abs() < 1e-12);
        assert_eq!(trim_indices(&c, &n, &TrimConfig::default()).unwrap(), vec![0, 1, 2, 3]);
        let wide = TrimConfig { lower: 0.0, upper: 1.0 };
        assert_eq!(trim_indices(&c, &n, &wide).unwrap().len(), 5);
    }

    #[test]
    fn all_trimmed_is_an_error() {
        let c = toy_cohort();
        let n = NuisanceSet {
            selection: ScoreModel::Constant { p: 0.01 },
            ..flat_set(1)
        };
        assert!(matches!(trim(&c, &n, &TrimConfig::default()), Err(Error::AllTrimmed)));
    }
}

//! Replicated experiments: simulate, fit, trim, compute signals, test, and
//! tabulate rejection rates.

mod prop2;
pub mod presets;
mod report;

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use prop2::{prop2_oracle_check, Allocation, Estimate, Prop2Report};
pub use report::{config_hash, emit_report, read_report, ReportFormat};

use crate::dataset::{simulate, Cohort, DGPConfig, LatentRecord};
use crate::error::{Error, Result};
use crate::mmr::{gram, run_test_with_gram, Bandwidth, Gram, KernelSpec, TestResult};
use crate::nuisance::{
    fit_nuisances, latent_ranges, misspecify_with_ranges, observed_ranges, oracle_nuisances, refit_scores,
    trim_indices, Misspecification, NuisanceOptions, NuisanceSet, TrimConfig,
};
use crate::rng::{stream_rng, Stream};
use crate::signals::{compute_signals, OutcomeModels, RegressorSpec, SignalExtras, SignalKind, SignalVector};
use crate::survival::SupportPolicy;

/// Where the nuisance functions come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NuisanceMode {
    #[default]
    Fitted,
    Oracle,
    /// Oracle nuisances with a uniform, covariate-free event law.
    MissF,
    /// Oracle nuisances with a uniform censoring law and a flat OS propensity.
    MissGp,
}

/// Everything downstream of the cohort: nuisances, trimming, signals and
/// the test itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub signal_kinds: Vec<SignalKind>,
    #[serde(default)]
    pub nuisance_mode: NuisanceMode,
    #[serde(default)]
    pub trim: TrimConfig,
    #[serde(default)]
    pub kernel: KernelSpec,
    #[serde(default = "default_bootstrap")]
    pub bootstrap_b: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Number of cross-fitting folds; 0 fits and evaluates on the same data.
    #[serde(default)]
    pub cross_fit_folds: usize,
    #[serde(default)]
    pub regressor: RegressorSpec,
    #[serde(default)]
    pub policy: SupportPolicy,
    #[serde(default)]
    pub nuisance_options: NuisanceOptions,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            signal_kinds: vec![SignalKind::Cdr],
            nuisance_mode: NuisanceMode::Fitted,
            trim: TrimConfig::default(),
            kernel: KernelSpec::median_heuristic(),
            bootstrap_b: default_bootstrap(),
            alpha: default_alpha(),
            cross_fit_folds: 0,
            regressor: RegressorSpec::default(),
            policy: SupportPolicy::Clamp,
            nuisance_options: NuisanceOptions::default(),
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        if self.signal_kinds.is_empty() {
            return Err(Error::Config("at least one signal kind is required".into()));
        }
        if self.bootstrap_b == 0 {
            return Err(Error::Config("bootstrap_b must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0,1), got {}", self.alpha)));
        }
        if self.cross_fit_folds == 1 {
            return Err(Error::Config("cross_fit_folds must be 0 or at least 2".into()));
        }
        if let Bandwidth::Fixed(s) = self.kernel.bandwidth {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Config(format!("bandwidth must be positive, got {s}")));
            }
        }
        let ridges = [self.nuisance_options.cox.ridge, self.nuisance_options.logistic.ridge];
        if let Some(r) = ridges.into_iter().flatten().find(|r| !(*r >= 0.0 && r.is_finite())) {
            return Err(Error::Config(format!("ridge must be finite and non-negative, got {r}")));
        }
        self.trim.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Row label in the rejection table.
    pub label: String,
    pub dgp: DGPConfig,
    #[serde(flatten)]
    pub analysis: AnalysisConfig,
    pub replications: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub output_path: Option<PathBuf>,
}

fn default_bootstrap() -> usize {
    100
}

fn default_alpha() -> f64 {
    0.05
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        self.analysis.validate()?;
        self.dgp.validate()?;
        if self.analysis.nuisance_mode != NuisanceMode::Fitted {
            // surfaces concealment / global-censoring conflicts before any replication runs
            oracle_nuisances(&self.dgp)?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Outcome of one signal kind in one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum KindOutcome {
    Tested {
        result: TestResult,
        /// Denominators raised to the support floor.
        clamped: usize,
    },
    Failed {
        reason: String,
    },
}

impl KindOutcome {
    pub fn result(&self) -> Option<&TestResult> {
        match self {
            KindOutcome::Tested { result, .. } => Some(result),
            KindOutcome::Failed { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub index: usize,
    pub seed: u64,
    /// Records left after trimming (summed over folds).
    pub n_trimmed: usize,
    pub outcomes: BTreeMap<SignalKind, KindOutcome>,
}

/// Nuisances and evaluation data for one cross-fitting fold.
struct Fold {
    eval: Cohort,
    /// Positions of `eval` rows in the simulated cohort.
    eval_rows: Vec<usize>,
    nuisances: NuisanceSet,
    regressors: Option<OutcomeModels>,
    delta1: Option<Delta1Fold>,
}

struct Delta1Fold {
    nuisances: NuisanceSet,
    regressors: Option<OutcomeModels>,
}

/// What the oracle-based nuisance modes may read about the simulation.
#[derive(Debug, Clone, Copy)]
pub struct Truth<'a> {
    pub dgp: &'a DGPConfig,
    /// Latent times aligned with the cohort rows. The misspecified modes take
    /// their uniform supports from these when present, otherwise from the
    /// observed times.
    pub latents: Option<&'a [LatentRecord]>,
}

fn base_nuisances(
    config: &AnalysisConfig,
    truth: Option<Truth<'_>>,
    train: &Cohort,
    train_idx: &[usize],
) -> Result<NuisanceSet> {
    let truth = match (config.nuisance_mode, truth) {
        (NuisanceMode::Fitted, _) => return fit_nuisances(train, &config.nuisance_options),
        (_, Some(t)) => t,
        (mode, None) => {
            return Err(Error::Config(format!("nuisance mode {mode:?} needs the simulation config")));
        }
    };
    let oracle = oracle_nuisances(truth.dgp)?;
    let mode = match config.nuisance_mode {
        NuisanceMode::MissF => Misspecification::MissF,
        NuisanceMode::MissGp => Misspecification::MissGp,
        _ => return Ok(oracle),
    };
    let ranges = match truth.latents {
        Some(latents) => {
            let rows: Vec<LatentRecord> = train_idx.iter().map(|&i| latents[i].clone()).collect();
            latent_ranges(&rows, mode)?
        }
        None => observed_ranges(train, mode)?,
    };
    misspecify_with_ranges(&oracle, mode, &ranges, train.dim())
}

fn build_fold(
    config: &AnalysisConfig,
    truth: Option<Truth<'_>>,
    cohort: &Cohort,
    train_idx: &[usize],
    eval_idx: &[usize],
) -> Result<Fold> {
    let train = cohort.subset(train_idx);
    let nuisances = base_nuisances(config, truth, &train, train_idx)?;
    let eval_all = cohort.subset(eval_idx);
    let kept = trim_indices(&eval_all, &nuisances, &config.trim)?;
    let eval = eval_all.subset(&kept);
    let eval_rows: Vec<usize> = kept.iter().map(|&k| eval_idx[k]).collect();

    // regressors and Δ = 1 scores learn from the trimmed training data
    let same_data = train_idx == eval_idx;
    let train_trimmed = if same_data {
        eval.clone()
    } else {
        let k = trim_indices(&train, &nuisances, &config.trim)?;
        train.subset(&k)
    };
    let kinds = &config.signal_kinds;
    let regressors = if kinds.contains(&SignalKind::DrYtilde) {
        Some(OutcomeModels::fit(&train_trimmed, &config.regressor)?)
    } else {
        None
    };
    let delta1 = if kinds.iter().any(|k| k.uncensored_only()) {
        let d1 = train_trimmed.subset(&train_trimmed.indices_where(|r| r.event()));
        let nuisances = refit_scores(&nuisances, &d1, &config.nuisance_options.logistic)?;
        let regressors = if kinds.contains(&SignalKind::DrY) {
            Some(OutcomeModels::fit(&d1, &config.regressor)?)
        } else {
            None
        };
        Some(Delta1Fold { nuisances, regressors })
    } else {
        None
    };
    Ok(Fold {
        eval,
        eval_rows,
        nuisances,
        regressors,
        delta1,
    })
}

/// `(train, eval)` index pairs. Without cross-fitting both are everything.
fn fold_plan(n: usize, folds: usize, seed: u64) -> Vec<(Vec<usize>, Vec<usize>)> {
    let all: Vec<usize> = (0..n).collect();
    if folds < 2 {
        return vec![(all.clone(), all)];
    }
    let mut order = all;
    order.shuffle(&mut stream_rng(seed, Stream::CrossFit));
    (0..folds)
        .map(|k| {
            let mut eval: Vec<usize> = order.iter().skip(k).step_by(folds).copied().collect();
            eval.sort_unstable();
            let mut train: Vec<usize> = order
                .iter()
                .enumerate()
                .filter(|(pos, _)| pos % folds != k)
                .map(|(_, &i)| i)
                .collect();
            train.sort_unstable();
            (train, eval)
        })
        .collect()
}

fn signals_for(config: &AnalysisConfig, folds: &[Fold], kind: SignalKind) -> Result<SignalVector> {
    let mut parts = Vec::with_capacity(folds.len());
    for fold in folds {
        let (nuisances, regressors, policy) = if kind.uncensored_only() {
            let d1 = fold.delta1.as_ref().expect("Δ = 1 models are built when requested");
            (&d1.nuisances, d1.regressors.as_ref(), SupportPolicy::Strict)
        } else {
            (&fold.nuisances, fold.regressors.as_ref(), config.policy)
        };
        let extras = SignalExtras { regressors, policy };
        let mut sv = compute_signals(&fold.eval, nuisances, kind, &extras)?;
        sv.kept_indices = sv.kept_indices.iter().map(|&k| fold.eval_rows[k]).collect();
        parts.push(sv);
    }
    if parts.len() == 1 {
        return Ok(parts.pop().expect("one part"));
    }
    let views: Vec<_> = parts.iter().map(|p| p.x_rows.view()).collect();
    let x_rows = ndarray::concatenate(ndarray::Axis(0), &views).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(SignalVector {
        psi: parts.iter().flat_map(|p| p.psi.iter().copied()).collect(),
        x_rows,
        kind,
        kept_indices: parts.iter().flat_map(|p| p.kept_indices.iter().copied()).collect(),
        clamped: parts.iter().map(|p| p.clamped).sum(),
    })
}

/// Runs the analysis pipeline on an observed cohort: nuisances, trimming,
/// every requested signal kind, and one test per kind.
///
/// `truth` is only consulted by the oracle-based nuisance modes. `seed`
/// drives fold assignment and the bootstrap.
pub fn analyze_cohort(
    config: &AnalysisConfig,
    truth: Option<Truth<'_>>,
    cohort: &Cohort,
    seed: u64,
) -> Result<(usize, BTreeMap<SignalKind, KindOutcome>)> {
    let plan = fold_plan(cohort.len(), config.cross_fit_folds, seed);
    let folds: Vec<Fold> = plan
        .iter()
        .map(|(train, eval)| build_fold(config, truth, cohort, train, eval))
        .collect::<Result<_>>()?;
    let n_trimmed = folds.iter().map(|f| f.eval.len()).sum();

    // rows are identical across kinds sharing the censoring filter, so one
    // Gram serves each group
    let mut grams: [Option<(Gram, KernelSpec)>; 2] = [None, None];
    let mut outcomes = BTreeMap::new();
    for &kind in &config.signal_kinds {
        if outcomes.contains_key(&kind) {
            continue;
        }
        let outcome = (|| -> Result<KindOutcome> {
            let sv = signals_for(config, &folds, kind)?;
            let slot = &mut grams[usize::from(kind.uncensored_only())];
            if slot.is_none() {
                let g = gram(sv.x_rows.view(), &config.kernel)?;
                let resolved = KernelSpec {
                    bandwidth: Bandwidth::Fixed(g.sigma),
                    ..config.kernel
                };
                *slot = Some((g, resolved));
            }
            let (g, resolved) = slot.as_ref().expect("filled above");
            let result = run_test_with_gram(
                &sv.psi,
                g.matrix.view(),
                *resolved,
                config.bootstrap_b,
                config.alpha,
                seed,
            )?;
            Ok(KindOutcome::Tested {
                result,
                clamped: sv.clamped,
            })
        })()
        .unwrap_or_else(|e| KindOutcome::Failed { reason: e.to_string() });
        outcomes.insert(kind, outcome);
    }
    Ok((n_trimmed, outcomes))
}

/// Signal vector of one kind on an observed cohort, built exactly as in
/// [`analyze_cohort`].
pub fn cohort_signals(
    config: &AnalysisConfig,
    truth: Option<Truth<'_>>,
    cohort: &Cohort,
    kind: SignalKind,
    seed: u64,
) -> Result<SignalVector> {
    let config = AnalysisConfig {
        signal_kinds: vec![kind],
        ..config.clone()
    };
    let folds: Vec<Fold> = fold_plan(cohort.len(), config.cross_fit_folds, seed)
        .iter()
        .map(|(train, eval)| build_fold(&config, truth, cohort, train, eval))
        .collect::<Result<_>>()?;
    signals_for(&config, &folds, kind)
}

/// One replication of the configured experiment.
///
/// Errors before the signal stage fail the whole replication; a signal kind
/// that fails on its own is recorded in [`Replication::outcomes`].
pub fn run_single(config: &ExperimentConfig, replication_index: usize) -> Result<Replication> {
    let seed = config.base_seed.wrapping_add(replication_index as u64);
    let sim = simulate(&config.dgp, seed)?;
    let (n_trimmed, outcomes) = analyze_cohort(
        &config.analysis,
        Some(Truth {
            dgp: &config.dgp,
            latents: Some(&sim.latents),
        }),
        &sim.cohort,
        seed,
    )?;
    Ok(Replication {
        index: replication_index,
        seed,
        n_trimmed,
        outcomes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionRow {
    pub setup: String,
    pub signal: SignalKind,
    /// `rejections / replications`.
    pub rejection_rate: f64,
    pub rejections: usize,
    /// Replications that produced a test result.
    pub replications: usize,
    pub failures: usize,
    pub mean_p_value: f64,
    pub mean_statistic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub index: usize,
    pub signal: Option<SignalKind>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionTable {
    pub config_hash: String,
    pub base_seed: u64,
    pub rows: Vec<RejectionRow>,
    #[serde(default)]
    pub failures: Vec<Failure>,
}

impl RejectionTable {
    pub fn row(&self, setup: &str, signal: SignalKind) -> Option<&RejectionRow> {
        self.rows.iter().find(|r| r.setup == setup && r.signal == signal)
    }

    pub fn rate(&self, signal: SignalKind) -> Option<f64> {
        self.rows.iter().find(|r| r.signal == signal).map(|r| r.rejection_rate)
    }
}

/// Folds replication outcomes into per-kind rows.
///
/// Fails with [`Error::TooManyFailures`] once any kind lost more than 20% of
/// its replications.
pub fn aggregate(config: &ExperimentConfig, runs: &[Result<Replication>]) -> Result<RejectionTable> {
    let total = runs.len();
    let mut failures = Vec::new();
    let mut rows = Vec::new();
    let mut kinds: Vec<SignalKind> = Vec::new();
    for k in &config.analysis.signal_kinds {
        if !kinds.contains(k) {
            kinds.push(*k);
        }
    }
    for (i, run) in runs.iter().enumerate() {
        match run {
            Err(e) => failures.push(Failure {
                index: i,
                signal: None,
                reason: e.to_string(),
            }),
            Ok(rep) => {
                for (kind, o) in &rep.outcomes {
                    if let KindOutcome::Failed { reason } = o {
                        failures.push(Failure {
                            index: rep.index,
                            signal: Some(*kind),
                            reason: reason.clone(),
                        });
                    }
                }
            }
        }
    }
    for kind in kinds {
        let results: Vec<&TestResult> = runs
            .iter()
            .filter_map(|r| r.as_ref().ok())
            .filter_map(|rep| rep.outcomes.get(&kind).and_then(KindOutcome::result))
            .collect();
        let ok = results.len();
        let failed = total - ok;
        if failed * 5 > total {
            let first_reason = failures
                .iter()
                .find(|f| f.signal.is_none() || f.signal == Some(kind))
                .map(|f| f.reason.clone())
                .unwrap_or_default();
            return Err(Error::TooManyFailures {
                failed,
                total,
                first_reason: format!("{kind}: {first_reason}"),
            });
        }
        let rejections = results.iter().filter(|r| r.reject).count();
        let mean = |f: fn(&TestResult) -> f64| results.iter().map(|r| f(r)).sum::<f64>() / ok as f64;
        rows.push(RejectionRow {
            setup: config.label.clone(),
            signal: kind,
            rejection_rate: rejections as f64 / ok as f64,
            rejections,
            replications: ok,
            failures: failed,
            mean_p_value: mean(|r| r.p_value),
            mean_statistic: mean(|r| r.statistic),
        });
    }
    Ok(RejectionTable {
        config_hash: config_hash(config)?,
        base_seed: config.base_seed,
        rows,
        failures,
    })
}

/// Runs every replication, at most `jobs` at a time (all cores if `None`).
pub fn run_replications_with(config: &ExperimentConfig, jobs: Option<usize>) -> Result<RejectionTable> {
    config.validate()?;
    let work = || -> Vec<Result<Replication>> {
        (0..config.replications)
            .into_par_iter()
            .map(|i| run_single(config, i))
            .collect()
    };
    let runs = match jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(work),
        None => work(),
    };
    aggregate(config, &runs)
}

pub fn run_replications(config: &ExperimentConfig) -> Result<RejectionTable> {
    run_replications_with(config, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        let mut c = presets::preset("setup1").unwrap();
        c.dgp.n.rct = 150;
        c.dgp.n.os = 200;
        // enough censored records per stratum at this size
        if let Some(cens) = c.dgp.censoring.as_mut() {
            for arm in [&mut cens.rct, &mut cens.os] {
                arm.control.lambda = 0.3;
                arm.treated.lambda = 0.3;
            }
        }
        c.analysis.bootstrap_b = 20;
        c.replications = 3;
        c.analysis.signal_kinds = vec![SignalKind::Cdr, SignalKind::Ipcw];
        c
    }

    #[test]
    fn fold_plan_partitions() {
        let plan = fold_plan(23, 3, 5);
        let mut seen: Vec<usize> = plan.iter().flat_map(|(_, e)| e.clone()).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..23).collect::<Vec<_>>());
        for (train, eval) in &plan {
            assert_eq!(train.len() + eval.len(), 23);
            assert!(eval.iter().all(|i| !train.contains(i)));
        }
    }

    #[test]
    fn replications_use_their_own_seed() {
        let c = small();
        let a = run_single(&c, 0).unwrap();
        let b = run_single(&c, 1).unwrap();
        assert_eq!(a.seed + 1, b.seed);
        let sa = a.outcomes[&SignalKind::Cdr].result().unwrap().statistic;
        let sb = b.outcomes[&SignalKind::Cdr].result().unwrap().statistic;
        assert_ne!(sa, sb);
        assert_eq!(a, run_single(&c, 0).unwrap());
    }

    #[test]
    fn oracle_without_censoring_gives_a_valid_p_value() {
        let mut c = small();
        c.dgp.censoring = None;
        c.analysis.nuisance_mode = NuisanceMode::Oracle;
        c.analysis.signal_kinds = vec![SignalKind::Cdr];
        let rep = run_single(&c, 0).unwrap();
        let r = rep.outcomes[&SignalKind::Cdr].result().unwrap();
        assert!(r.statistic.is_finite());
        assert!(r.p_value > 0.0 && r.p_value <= 1.0);
    }

    #[test]
    fn cross_fitting_keeps_every_trimmed_row_once() {
        let mut c = small();
        c.analysis.cross_fit_folds = 2;
        c.analysis.signal_kinds = vec![SignalKind::Cdr];
        let rep = run_single(&c, 0).unwrap();
        let r = rep.outcomes[&SignalKind::Cdr].result().unwrap();
        assert_eq!(r.n, rep.n_trimmed);
    }

    #[test]
    fn forced_rejection_rate_is_one() {
        let c = ExperimentConfig {
            replications: 1,
            ..small()
        };
        let result = TestResult {
            statistic: 1.0,
            null_samples: vec![0.0; 19],
            p_value: 0.05,
            alpha: 0.1,
            reject: true,
            n: 10,
            kernel: KernelSpec::fixed(1.0),
            seed: 0,
        };
        let mut outcomes = BTreeMap::new();
        for k in &c.analysis.signal_kinds {
            outcomes.insert(
                *k,
                KindOutcome::Tested {
                    result: result.clone(),
                    clamped: 0,
                },
            );
        }
        let rep = Replication {
            index: 0,
            seed: 0,
            n_trimmed: 10,
            outcomes,
        };
        let t = aggregate(&c, &[Ok(rep)]).unwrap();
        assert!(t.rows.iter().all(|r| r.rejection_rate == 1.0 && r.replications == 1));
    }

    #[test]
    fn too_many_failures_abort() {
        let c = ExperimentConfig {
            replications: 4,
            ..small()
        };
        let runs: Vec<Result<Replication>> = (0..4)
            .map(|i| {
                if i < 1 {
                    run_single(&c, i)
                } else {
                    Err(Error::AllTrimmed)
                }
            })
            .collect();
        match aggregate(&c, &runs) {
            Err(Error::TooManyFailures { failed, total, .. }) => assert_eq!((failed, total), (3, 4)),
            other => panic!("expected abort, got {other:?}"),
        }
    }

    #[test]
    fn thread_count_does_not_matter() {
        let c = small();
        let one = run_replications_with(&c, Some(1)).unwrap();
        let two = run_replications_with(&c, Some(2)).unwrap();
        assert_eq!(one, two);
    }

    #[test]
    fn config_errors_are_config_errors() {
        let mut c = small();
        c.replications = 0;
        assert!(c.validate().unwrap_err().is_config());
        let mut c = small();
        c.analysis.signal_kinds.clear();
        assert!(c.validate().unwrap_err().is_config());
    }
}

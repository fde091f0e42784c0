//! Monte Carlo check of the two discrete counterexample worlds: with
//! global censoring, the imputation-IPW signal and the CDR signal both have
//! nonzero mean even though mean exchangeability holds.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::SubjectRecord;
use crate::error::{Error, Result};
use crate::nuisance::{NuisanceSet, Provenance, ScoreModel};
use crate::rng::{stream_rng, Stream};
use crate::signals::{cdr_signal, ipw_ytilde_signal};
use crate::survival::{Baseline, CoxModel, StepBaseline};

/// How draws are spread over the four `(s, a)` strata.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Allocation {
    /// Draw `i` goes to stratum `i mod 4`: stratum frequencies are exact.
    #[default]
    Balanced,
    /// `S` and `A` are independent fair coins.
    Iid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub label: String,
    pub mean: f64,
    pub std_error: f64,
    pub target: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Estimate {
    fn new(label: &str, acc: &Accumulator, target: f64, tolerance: f64) -> Self {
        Self::with_error(label, acc.mean(), acc.std_error(), target, tolerance)
    }

    fn with_error(label: &str, mean: f64, std_error: f64, target: f64, tolerance: f64) -> Self {
        Self {
            label: label.to_string(),
            mean,
            std_error,
            target,
            tolerance,
            pass: (mean - target).abs() <= tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prop2Report {
    pub draws: usize,
    pub seed: u64,
    pub allocation: Allocation,
    pub ipw_ytilde: Estimate,
    /// Per-stratum means `E[Ỹ | S=s, A=a]`, ordered (0,0), (0,1), (1,0), (1,1).
    pub stratum_means: Vec<Estimate>,
    pub cdr: Estimate,
    pub pass: bool,
}

#[derive(Default)]
struct Accumulator {
    n: usize,
    sum: f64,
    sum_sq: f64,
}

impl Accumulator {
    fn push(&mut self, v: f64) {
        self.n += 1;
        self.sum += v;
        self.sum_sq += v * v;
    }

    fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }

    fn variance(&self) -> f64 {
        if self.n < 2 {
            return f64::NAN;
        }
        let n = self.n as f64;
        ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0)
    }

    fn std_error(&self) -> f64 {
        (self.variance() / self.n as f64).sqrt()
    }
}

/// Overall mean of per-draw signals and its standard error. Balanced
/// allocation fixes the stratum counts, so only within-stratum spread counts.
fn pooled(strata: &[Accumulator; 4], allocation: Allocation) -> (f64, f64) {
    let n: usize = strata.iter().map(|a| a.n).sum();
    let sum: f64 = strata.iter().map(|a| a.sum).sum();
    let nf = n as f64;
    let se = match allocation {
        Allocation::Balanced => (strata.iter().map(|a| a.n as f64 * a.variance()).sum::<f64>()).sqrt() / nf,
        Allocation::Iid => {
            let sum_sq: f64 = strata.iter().map(|a| a.sum_sq).sum();
            (((sum_sq - sum * sum / nf) / (nf - 1.0)).max(0.0) / nf).sqrt()
        }
    };
    (sum / nf, se)
}

pub const IPW_TARGET: f64 = -59.0 / 60.0;
pub const CDR_TARGET: f64 = -2.0;
pub const STRATUM_TARGETS: [f64; 4] = [7.0 / 5.0, 13.0 / 10.0, 11.0 / 6.0, 3.0 / 4.0];

const IPW_TOL: f64 = 0.01;
const CDR_TOL: f64 = 0.02;
const STRATUM_TOL: f64 = 0.01;

fn stratum_of<R: Rng>(i: usize, allocation: Allocation, rng: &mut R) -> (u8, u8) {
    match allocation {
        Allocation::Balanced => ((i % 4 / 2) as u8, (i % 2) as u8),
        Allocation::Iid => (u8::from(rng.random::<bool>()), u8::from(rng.random::<bool>())),
    }
}

/// Draw from a finite law given as `(value, probability)` pairs.
fn discrete<R: Rng>(rng: &mut R, support: &[(f64, f64)]) -> f64 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for &(value, w) in support {
        acc += w;
        if u < acc {
            return value;
        }
    }
    support.last().expect("nonempty support").0
}

fn ipw_world_event<R: Rng>(s: u8, a: u8, rng: &mut R) -> f64 {
    let fifth = 0.2;
    let third = 1.0 / 3.0;
    match (s, a) {
        (0, 0) => discrete(rng, &[(1.0, fifth), (2.0, fifth), (3.0, fifth), (4.0, fifth), (5.0, fifth)]),
        (0, 1) => discrete(rng, &[(2.0, fifth), (3.0, fifth), (4.0, fifth), (5.0, fifth), (6.0, fifth)]),
        (1, 0) => discrete(rng, &[(2.0, third), (3.0, third), (4.0, third)]),
        _ => discrete(rng, &[(2.0, 1.0 / 6.0), (4.0, 0.5), (5.0, third)]),
    }
}

fn cdr_world_event<R: Rng>(s: u8, a: u8, rng: &mut R) -> f64 {
    match (s, a) {
        (0, 1) => 2.0,
        (1, 1) => {
            if rng.random::<bool>() {
                4.0
            } else {
                0.0
            }
        }
        _ => 0.0,
    }
}

/// `C = 10` below 3.5 and `C = 1/2` above, for every stratum.
fn censor(y: f64) -> f64 {
    if y < 3.5 {
        10.0
    } else {
        0.5
    }
}

fn observe(s: u8, a: u8, y: f64) -> SubjectRecord {
    let c = censor(y);
    SubjectRecord {
        x: vec![],
        a,
        s,
        y_obs: y.min(c),
        delta: u8::from(y <= c),
    }
}

fn step(times: Vec<f64>, values: Vec<f64>) -> CoxModel {
    CoxModel::new(
        Baseline::Step(StepBaseline::new(times, values).expect("valid step law")),
        vec![],
    )
}

/// Exact event and censoring survival laws of the CDR world, with fair
/// selection and treatment coins. The imputation-IPW signal only reads the
/// coins, so both worlds share this set.
fn cdr_world_nuisances() -> NuisanceSet {
    let point = |t: f64| step(vec![t], vec![0.0]);
    let half = ScoreModel::Constant { p: 0.5 };
    NuisanceSet {
        selection: half.clone(),
        propensity: [half.clone(), half],
        f_bar: [
            [point(0.0), point(2.0)],
            [point(0.0), step(vec![0.0, 4.0], vec![0.5, 0.0])],
        ],
        g_bar: [
            [point(10.0), point(10.0)],
            [point(10.0), step(vec![0.5, 10.0], vec![0.5, 0.0])],
        ],
        provenance: Provenance::Oracle,
    }
}

pub fn prop2_oracle_check(draws: usize, seed: u64, allocation: Allocation) -> Result<Prop2Report> {
    if draws < 4 {
        return Err(Error::InvalidArgument("at least four draws are required".into()));
    }
    let nuisances = cdr_world_nuisances();
    let mut rng = stream_rng(seed, Stream::Cohort);

    let mut ipw: [Accumulator; 4] = Default::default();
    let mut strata: [Accumulator; 4] = Default::default();
    for i in 0..draws {
        let (s, a) = stratum_of(i, allocation, &mut rng);
        let r = observe(s, a, ipw_world_event(s, a, &mut rng));
        let k = usize::from(2 * s + a);
        ipw[k].push(ipw_ytilde_signal(&r, &nuisances)?);
        strata[k].push(r.y_obs);
    }

    let mut cdr: [Accumulator; 4] = Default::default();
    for i in 0..draws {
        let (s, a) = stratum_of(i, allocation, &mut rng);
        let r = observe(s, a, cdr_world_event(s, a, &mut rng));
        cdr[usize::from(2 * s + a)].push(cdr_signal(&r, &nuisances)?);
    }

    let labels = ["s0_a0", "s0_a1", "s1_a0", "s1_a1"];
    let stratum_means: Vec<Estimate> = strata
        .iter()
        .zip(labels)
        .zip(STRATUM_TARGETS)
        .map(|((acc, l), t)| Estimate::new(l, acc, t, STRATUM_TOL))
        .collect();
    let (m, se) = pooled(&ipw, allocation);
    let ipw_ytilde = Estimate::with_error("ipw_ytilde", m, se, IPW_TARGET, IPW_TOL);
    let (m, se) = pooled(&cdr, allocation);
    let cdr = Estimate::with_error("cdr", m, se, CDR_TARGET, CDR_TOL);
    let pass = ipw_ytilde.pass && cdr.pass && stratum_means.iter().all(|e| e.pass);
    Ok(Prop2Report {
        draws,
        seed,
        allocation,
        ipw_ytilde,
        stratum_means,
        cdr,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn targets_are_consistent() {
        let [m00, m01, m10, m11] = STRATUM_TARGETS;
        assert!(((m11 - m10) - (m01 - m00) - IPW_TARGET).abs() < 1e-15);
    }

    #[test]
    fn cdr_record_values() {
        let n = cdr_world_nuisances();
        // a censored (1,1) record and its uncensored twin
        let censored = observe(1, 1, 4.0);
        assert_eq!((censored.y_obs, censored.delta), (0.5, 0));
        let zero = observe(1, 1, 0.0);
        let (c1, c0) = (cdr_signal(&censored, &n).unwrap(), cdr_signal(&zero, &n).unwrap());
        // ψ* = 0 in both cases, μ₁₁ = 2, μ₁₀ = 0
        assert!((c1 - 2.0 * ((0.0 - 2.0) / 0.5 + 2.0)).abs() < 1e-12);
        assert!((c0 - c1).abs() < 1e-12);
        // S = 0 records: sign −1, μ₀₁ = 2, μ₀₀ = 0
        assert!((cdr_signal(&observe(0, 1, 2.0), &n).unwrap() + 4.0).abs() < 1e-12);
        assert!((cdr_signal(&observe(0, 0, 0.0), &n).unwrap() + 4.0).abs() < 1e-12);
    }

    #[test]
    fn small_run_is_close() {
        let r = prop2_oracle_check(100_000, 1, Allocation::Balanced).unwrap();
        assert!((r.cdr.mean - CDR_TARGET).abs() < 1e-9);
        assert!((r.ipw_ytilde.mean - IPW_TARGET).abs() < 0.05);
        let iid = prop2_oracle_check(100_000, 1, Allocation::Iid).unwrap();
        assert!((iid.cdr.mean - CDR_TARGET).abs() < 0.1);
    }
}

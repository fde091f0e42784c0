use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::config::{CensorRule, CovariateLaw, DGPConfig};
use super::{Cohort, LatentRecord};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::survival::{sample_event_time, CoxModel};

/// A simulated cohort together with the latent records it was observed from.
/// `latents[i]` is the source of `cohort.records[i]`.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub cohort: Cohort,
    pub latents: Vec<LatentRecord>,
}

/// Draws `n.rct` trial subjects followed by `n.os` observational subjects.
pub fn generate_cohort(config: &DGPConfig, seed: u64) -> Result<(Cohort, Vec<LatentRecord>)> {
    config.validate()?;
    let mut rng = stream_rng(seed, Stream::Cohort);
    let dim = config.full_dim();
    let mut models: Vec<(CoxModel, Option<CoxModel>)> = Vec::with_capacity(4);
    for s in 0..2u8 {
        for a in 0..2u8 {
            models.push((config.event_model(s, a)?, config.censoring_model(s, a)?));
        }
    }
    let mut latents = Vec::with_capacity(config.n.rct + config.n.os);
    for s in 0..2u8 {
        for _ in 0..*config.n.get(s) {
            let mut x = Vec::with_capacity(dim);
            if config.intercept {
                x.push(1.0);
            }
            for cov in &config.covariates {
                x.push(draw_covariate(cov.law(s), &mut rng));
            }
            let p = config.propensity.get(s).prob(&x);
            let a = u8::from(rng.random::<f64>() < p);
            let (event, censor) = &models[usize::from(2 * s + a)];
            let y = sample_event_time(event, &x, open_unit(&mut rng)).map_err(overflow)?;
            let c = match censor {
                Some(m) => sample_event_time(m, &x, open_unit(&mut rng)).map_err(overflow)?,
                None => f64::INFINITY,
            };
            latents.push(LatentRecord { x, a, s, y, c });
        }
    }
    let cohort = observe_all(&latents, config)?;
    Ok((cohort, latents))
}

/// Applies global censoring, then selection bias, as the config requests.
pub fn simulate(config: &DGPConfig, seed: u64) -> Result<Simulation> {
    let (mut cohort, mut latents) = generate_cohort(config, seed)?;
    if let Some(g) = &config.global_censoring {
        latents = apply_global_censoring(&latents, g.tau, g.rule, seed)?;
        cohort = observe_all(&latents, config)?;
    }
    if config.selection_bias > 0.0 {
        let keep = selection_bias_keep(&cohort, config.selection_bias, seed)?;
        cohort = cohort.subset(&keep);
        latents = keep.iter().map(|&i| latents[i].clone()).collect();
    }
    Ok(Simulation { cohort, latents })
}

/// Builds the observed cohort, dropping concealed covariates.
pub(crate) fn observe_all(latents: &[LatentRecord], config: &DGPConfig) -> Result<Cohort> {
    let keep = config.observed_columns();
    let records = latents.iter().map(|l| l.observe(&keep)).collect();
    Cohort::new(records, config.observed_names())
}

/// Replaces censoring times so that censoring depends on the event time but
/// not on the study: subjects with `y ≤ τ` are never censored and the rest
/// are censored below `τ` by `rule`.
pub fn apply_global_censoring(
    latents: &[LatentRecord],
    tau: f64,
    rule: CensorRule,
    seed: u64,
) -> Result<Vec<LatentRecord>> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidArgument(format!("threshold must be positive, got {tau}")));
    }
    rule.validate()?;
    let mut rng = stream_rng(seed, Stream::GlobalCensoring);
    let mut out = latents.to_vec();
    for l in &mut out {
        if l.y <= tau {
            l.c = tau + 1.0;
        } else {
            let frac = match rule {
                CensorRule::UniformFraction { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
                CensorRule::FixedFraction { fraction } => fraction,
            };
            l.c = frac * tau;
            if l.c >= tau {
                return Err(Error::InvalidArgument(format!(
                    "censoring rule produced c = {} at or above the threshold {tau}",
                    l.c
                )));
            }
        }
    }
    Ok(out)
}

/// Indices kept after removing `⌊f·m⌋` of the `m` trial-control records with
/// an observed event, chosen uniformly at random.
pub fn selection_bias_keep(cohort: &Cohort, f: f64, seed: u64) -> Result<Vec<usize>> {
    if !(0.0..1.0).contains(&f) {
        return Err(Error::InvalidArgument(format!("fraction {f} outside [0,1)")));
    }
    let eligible = cohort.indices_where(|r| r.s == 0 && r.a == 0 && r.delta == 1);
    let m = eligible.len();
    let k = (f * m as f64).floor() as usize;
    let mut drop = vec![false; cohort.len()];
    if k > 0 {
        let mut rng = stream_rng(seed, Stream::SelectionBias);
        for pos in sample(&mut rng, m, k) {
            drop[eligible[pos]] = true;
        }
    }
    Ok((0..cohort.len()).filter(|&i| !drop[i]).collect())
}

pub fn apply_selection_bias(cohort: &Cohort, f: f64, seed: u64) -> Result<Cohort> {
    let keep = selection_bias_keep(cohort, f, seed)?;
    Ok(cohort.subset(&keep))
}

fn draw_covariate<R: Rng>(law: &CovariateLaw, rng: &mut R) -> f64 {
    match *law {
        CovariateLaw::Gaussian { mean, var } => {
            Normal::new(mean, var.sqrt()).expect("validated variance").sample(rng)
        }
        CovariateLaw::Bernoulli { rate } => f64::from(u8::from(rng.random::<f64>() < rate)),
    }
}

fn open_unit<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

fn overflow(e: Error) -> Error {
    match e {
        Error::Config(msg) => Error::Config(msg),
        other => Error::Config(format!("cannot sample event time: {other}")),
    }
}

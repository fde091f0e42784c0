//! Named experiment configurations on a synthetic ten-covariate design
//! modelled on the infant-health trial covariates (names kept, values
//! simulated).

use super::{AnalysisConfig, ExperimentConfig, NuisanceMode};
use crate::dataset::{
    CensorRule, CovariateLaw, CovariateSpec, DGPConfig, GlobalCensoring, PerArm, PerStudy, PropensitySpec,
    WeibullCoxSpec,
};
use crate::error::{Error, Result};
use crate::signals::SignalKind;

pub const N_RCT: usize = 985;
pub const N_OS_LARGE: usize = 2955;
pub const N_OS_SMALL: usize = 985;

const COVARIATES: [&str; 10] = [
    "twin", "b.head", "preterm", "momage", "bw", "b.marr", "nnhealth", "birth.o", "momhisp", "sex",
];
const NNHEALTH: usize = 6;
const SEX: usize = 9;

/// Event-time log hazard ratios shared by every stratum in the null design.
const BETA_EVENT: [f64; 10] = [0.2, -0.3, 0.3, -0.2, -0.3, 0.2, 0.4, 0.1, -0.2, 1.0];
const BETA_CENSOR_RCT: [f64; 10] = [0.0, 0.1, 0.0, 0.0, -0.1, 0.0, 0.0, 0.1, 0.0, 0.0];
const BETA_CENSOR_OS: [f64; 10] = [0.0, 0.0, 0.2, -0.2, 0.2, 0.0, 0.1, 0.0, 0.2, 0.0];

const SHAPE: f64 = 2.0;
/// Censoring times are exponential (Weibull shape 1), so their survival
/// decays more slowly than the event law's.
const CENSOR_SHAPE: f64 = 1.0;
const LAMBDA_CONTROL: f64 = 1.0;
const LAMBDA_TREATED: f64 = 0.7;
/// Light trial censoring; the OS censors its control arm heavily and its
/// treated arm barely, so outcome-only contrasts on `Ỹ` are biased.
const CENSOR_RCT: f64 = 0.05;
const CENSOR_OS_CONTROL: f64 = 0.5;
const CENSOR_OS_TREATED: f64 = 0.02;
/// Offset `C` of the OS propensity; the sex coefficient is `-2C`.
const DEFAULT_CONFOUNDING: f64 = 0.5;

/// Every preset name accepted by [`preset`].
pub const PRESET_NAMES: [&str; 28] = [
    "setup1",
    "setup2",
    "setup3",
    "setup4",
    "setup5",
    "setup1_n985",
    "setup2_n985",
    "setup3_n985",
    "setup4_n985",
    "setup5_n985",
    "evv_0",
    "evv_0.2",
    "evv_0.5",
    "evv_1",
    "uc_1",
    "uc_1.5",
    "uc_2",
    "uc_2.5",
    "gc_null",
    "gc_evv",
    "gc_uc",
    "miss_f_setup1",
    "miss_f_setup3",
    "miss_gp_setup1",
    "miss_gp_setup3",
    "sb_0",
    "sb_0.1",
    "sb_0.25",
];

fn covariates() -> Vec<CovariateSpec> {
    COVARIATES
        .iter()
        .map(|&name| {
            let law = match name {
                "twin" => CovariateLaw::Bernoulli { rate: 0.05 },
                "b.marr" => CovariateLaw::Bernoulli { rate: 0.5 },
                "momhisp" => CovariateLaw::Bernoulli { rate: 0.15 },
                "sex" => CovariateLaw::Bernoulli { rate: 0.5 },
                _ => CovariateLaw::Gaussian { mean: 0.0, var: 1.0 },
            };
            CovariateSpec::shared(name, law)
        })
        .collect()
}

fn weibull(lambda: f64, beta: &[f64]) -> WeibullCoxSpec {
    WeibullCoxSpec {
        lambda,
        p: SHAPE,
        beta: beta.to_vec(),
    }
}

fn exponential(lambda: f64, beta: &[f64]) -> WeibullCoxSpec {
    WeibullCoxSpec {
        lambda,
        p: CENSOR_SHAPE,
        beta: beta.to_vec(),
    }
}

/// OS treatment depends on sex only: `sigmoid(C - 2C·sex)`.
fn os_propensity(c: f64) -> PropensitySpec {
    let mut beta = vec![0.0; COVARIATES.len()];
    beta[SEX] = -2.0 * c;
    PropensitySpec::Sigmoid { beta, offset: c }
}

/// Null design: identical covariate laws and event models in both studies,
/// study-specific censoring.
pub fn null_dgp(n_os: usize) -> DGPConfig {
    let event = PerArm {
        control: weibull(LAMBDA_CONTROL, &BETA_EVENT),
        treated: weibull(LAMBDA_TREATED, &BETA_EVENT),
    };
    DGPConfig {
        n: PerStudy { rct: N_RCT, os: n_os },
        intercept: false,
        covariates: covariates(),
        propensity: PerStudy {
            rct: PropensitySpec::Constant { p: 0.5 },
            os: os_propensity(DEFAULT_CONFOUNDING),
        },
        event: PerStudy::same(event),
        censoring: Some(PerStudy {
            rct: PerArm {
                control: exponential(CENSOR_RCT, &BETA_CENSOR_RCT),
                treated: exponential(CENSOR_RCT, &BETA_CENSOR_RCT),
            },
            os: PerArm {
                control: exponential(CENSOR_OS_CONTROL, &BETA_CENSOR_OS),
                treated: exponential(CENSOR_OS_TREATED, &BETA_CENSOR_OS),
            },
        }),
        concealed: vec![],
        global_censoring: None,
        selection_bias: 0.0,
    }
}

/// External-validity violation: the OS treated arm's `nnhealth` effect is
/// shifted by `delta`.
pub fn evv_dgp(n_os: usize, delta: f64) -> DGPConfig {
    let mut d = null_dgp(n_os);
    d.event.os.treated.beta[NNHEALTH] += delta;
    d
}

/// Unobserved confounding: `sex` drives OS treatment with coefficient
/// magnitude `beta_prop` and is hidden from the analysis.
pub fn uc_dgp(n_os: usize, beta_prop: f64) -> DGPConfig {
    let mut d = null_dgp(n_os);
    d.propensity.os = os_propensity(beta_prop / 2.0);
    d.concealed = vec!["sex".into()];
    d
}

/// Replaces the censoring models by a study-free rule: events after `tau`
/// are censored at a uniform fraction of `tau`.
pub fn with_global_censoring(mut d: DGPConfig) -> DGPConfig {
    d.censoring = None;
    d.global_censoring = Some(GlobalCensoring {
        tau: 1.2,
        rule: CensorRule::UniformFraction { lo: 0.25, hi: 0.75 },
    });
    d
}

pub fn experiment(label: &str, dgp: DGPConfig) -> ExperimentConfig {
    ExperimentConfig {
        label: label.to_string(),
        dgp,
        analysis: AnalysisConfig {
            signal_kinds: SignalKind::ALL.to_vec(),
            ..AnalysisConfig::default()
        },
        replications: 40,
        base_seed: 1000,
        output_path: None,
    }
}

fn setup(k: usize, n_os: usize) -> DGPConfig {
    match k {
        1 => null_dgp(n_os),
        2 => evv_dgp(n_os, 0.2),
        3 => evv_dgp(n_os, 1.0),
        4 => uc_dgp(n_os, 1.0),
        _ => uc_dgp(n_os, 2.5),
    }
}

fn misspecified(label: &str, k: usize, mode: NuisanceMode) -> ExperimentConfig {
    let mut c = experiment(label, setup(k, N_OS_LARGE));
    c.analysis.nuisance_mode = mode;
    c.analysis.signal_kinds = vec![SignalKind::Cdr];
    c
}

fn parse_level(name: &str, prefix: &str) -> Option<f64> {
    name.strip_prefix(prefix).and_then(|v| v.parse().ok())
}

/// Looks up a bundled configuration by name.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    if !PRESET_NAMES.contains(&name) {
        return Err(Error::Config(format!(
            "unknown preset {name:?}; known presets: {}",
            PRESET_NAMES.join(", ")
        )));
    }
    let config = match name {
        "gc_null" => experiment(name, with_global_censoring(null_dgp(N_OS_LARGE))),
        "gc_evv" => experiment(name, with_global_censoring(evv_dgp(N_OS_LARGE, 1.0))),
        "gc_uc" => experiment(name, with_global_censoring(uc_dgp(N_OS_LARGE, 2.5))),
        "miss_f_setup1" => misspecified(name, 1, NuisanceMode::MissF),
        "miss_f_setup3" => misspecified(name, 3, NuisanceMode::MissF),
        "miss_gp_setup1" => misspecified(name, 1, NuisanceMode::MissGp),
        "miss_gp_setup3" => misspecified(name, 3, NuisanceMode::MissGp),
        _ => {
            if let Some(rest) = name.strip_prefix("setup") {
                let (k, n_os) = match rest.split_once("_n") {
                    Some((k, _)) => (k, N_OS_SMALL),
                    None => (rest, N_OS_LARGE),
                };
                let k: usize = k.parse().expect("listed preset");
                experiment(name, setup(k, n_os))
            } else if let Some(delta) = parse_level(name, "evv_") {
                experiment(name, evv_dgp(N_OS_LARGE, delta))
            } else if let Some(b) = parse_level(name, "uc_") {
                experiment(name, uc_dgp(N_OS_LARGE, b))
            } else if let Some(f) = parse_level(name, "sb_") {
                let mut d = null_dgp(N_OS_LARGE);
                d.selection_bias = f;
                let mut c = experiment(name, d);
                c.analysis.signal_kinds = vec![SignalKind::Cdr, SignalKind::Ipcw];
                c
            } else {
                unreachable!("every listed preset is handled")
            }
        }
    };
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_validates() {
        for name in PRESET_NAMES {
            let c = preset(name).unwrap();
            assert_eq!(c.label, name);
        }
        assert!(preset("nope").unwrap_err().is_config());
    }

    #[test]
    fn stated_parameters() {
        let c = preset("setup3").unwrap();
        assert_eq!((c.dgp.n.rct, c.dgp.n.os), (985, 2955));
        assert_eq!(c.analysis.alpha, 0.05);
        let shift = c.dgp.event.os.treated.beta[NNHEALTH] - c.dgp.event.rct.treated.beta[NNHEALTH];
        assert!((shift - 1.0).abs() < 1e-12);
        assert_eq!(preset("setup2_n985").unwrap().dgp.n.os, 985);
        let uc = preset("setup5").unwrap();
        match &uc.dgp.propensity.os {
            PropensitySpec::Sigmoid { beta, .. } => assert_eq!(beta[SEX].abs(), 2.5),
            other => panic!("unexpected propensity {other:?}"),
        }
        assert_eq!(uc.dgp.concealed, vec!["sex".to_string()]);
    }
}

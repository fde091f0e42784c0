//! Independent reference computations for the numerical property suite.
//! Nothing here calls the routine it checks.

#![allow(dead_code)]

use falsify_core::dataset::{CovariateLaw, CovariateSpec, DGPConfig, PerArm, PerStudy, PropensitySpec, WeibullCoxSpec};
use falsify_core::mmr::{bootstrap_null, gram, mmr_statistic, p_value, KernelSpec};
use falsify_core::nuisance::{logistic_log_likelihood, trim_indices, NuisanceSet, TrimConfig};
use falsify_core::survival::{partial_log_likelihood, sample_event_time};
use falsify_core::{Cohort, CoxModel, SubjectRecord};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const GRADIENT_TOL: f64 = 1e-5;
pub const EXACT_TOL: f64 = 1e-12;

/// Central difference of `f` along every coordinate of `beta`.
fn numeric_gradient<F: Fn(&[f64]) -> f64>(f: F, beta: &[f64]) -> Vec<f64> {
    (0..beta.len())
        .map(|j| {
            let h = 1e-6 * beta[j].abs().max(1.0);
            let mut up = beta.to_vec();
            let mut down = beta.to_vec();
            up[j] += h;
            down[j] -= h;
            (f(&up) - f(&down)) / (2.0 * h)
        })
        .collect()
}

/// `max_j |g_j − ĝ_j| / max(‖g‖∞, 1)`.
fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = analytic.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
        / scale
}

pub fn random_design(n: usize, d: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((n, d), |_| rng.random_range(-1.5..1.5))
}

pub fn cox_gradient_error(x: &Array2<f64>, time: &[f64], event: &[bool], beta: &[f64]) -> f64 {
    let (_, grad, _) = partial_log_likelihood(x.view(), time, event, beta).unwrap();
    let numeric = numeric_gradient(|b| partial_log_likelihood(x.view(), time, event, b).unwrap().0, beta);
    relative_error(&grad, &numeric)
}

pub fn logistic_gradient_error(x: &Array2<f64>, labels: &[bool], beta: &[f64]) -> f64 {
    let (_, grad) = logistic_log_likelihood(x.view(), labels, beta).unwrap();
    let numeric = numeric_gradient(|b| logistic_log_likelihood(x.view(), labels, b).unwrap().0, beta);
    relative_error(&grad, &numeric)
}

/// Kolmogorov–Smirnov distance between `n` inverse-transform draws and the
/// closed-form CDF `1 − exp(−(λt)^p e^{xβ})`, with the 99% band `1.63/√n`.
pub fn sampler_ks(lambda: f64, p: f64, beta: &[f64], x: &[f64], n: usize, seed: u64) -> (f64, f64) {
    let model = CoxModel::weibull(lambda, p, beta.to_vec()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws: Vec<f64> = (0..n)
        .map(|_| {
            let u: f64 = rng.random_range(f64::EPSILON..1.0);
            sample_event_time(&model, x, u).unwrap()
        })
        .collect();
    draws.sort_by(f64::total_cmp);
    let risk = beta.iter().zip(x).map(|(b, v)| b * v).sum::<f64>().exp();
    let cdf = |t: f64| 1.0 - (-(lambda * t).powf(p) * risk).exp();
    let nf = n as f64;
    let d = draws
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let f = cdf(t);
            (f - i as f64 / nf).abs().max(((i + 1) as f64 / nf - f).abs())
        })
        .fold(0.0, f64::max);
    (d, 1.63 / nf.sqrt())
}

/// Double-loop statistic with a Gaussian kernel at bandwidth `sigma` on the
/// raw rows, against the library statistic on the library Gram matrix.
pub fn statistic_gap(psi: &[f64], x: &Array2<f64>, sigma: f64) -> f64 {
    let n = psi.len();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let d2: f64 = x.row(i).iter().zip(x.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            total += psi[i] * psi[j] * (-d2 / (2.0 * sigma * sigma)).exp();
        }
    }
    let brute = total / (n * (n - 1)) as f64;
    let g = gram(x.view(), &KernelSpec::fixed(sigma)).unwrap();
    let lib = mmr_statistic(psi, g.matrix.view()).unwrap();
    (lib - brute).abs()
}

/// The p-value lies in `[1/(B+1), 1]` and is a multiple of `1/(B+1)`.
pub fn p_value_in_bounds(psi: &[f64], x: &Array2<f64>, b: usize, seed: u64) -> bool {
    let g = gram(x.view(), &KernelSpec::median_heuristic()).unwrap();
    let stat = mmr_statistic(psi, g.matrix.view()).unwrap();
    let null = bootstrap_null(psi, g.matrix.view(), b, seed).unwrap();
    let p = p_value(stat, &null);
    let scaled = p * (b + 1) as f64;
    (1.0 / (b + 1) as f64..=1.0).contains(&p) && (scaled - scaled.round()).abs() < 1e-9
}

/// Indices kept by trimming, and those kept when trimming the result again.
pub fn trim_twice(cohort: &Cohort, nuisances: &NuisanceSet, config: &TrimConfig) -> (Vec<usize>, Vec<usize>) {
    let once = trim_indices(cohort, nuisances, config).unwrap();
    let trimmed = cohort.subset(&once);
    let again = trim_indices(&trimmed, nuisances, config).unwrap();
    let twice = again.iter().map(|&k| once[k]).collect();
    (once, twice)
}

/// Small uncensored design with two covariates and stratum-specific
/// Weibull event laws.
pub fn uncensored_dgp(seed: u64) -> DGPConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weibull = || WeibullCoxSpec {
        lambda: rng.random_range(0.5..2.0),
        p: rng.random_range(0.7..3.0),
        beta: vec![rng.random_range(-0.8..0.8), rng.random_range(-0.8..0.8)],
    };
    let event = PerStudy {
        rct: PerArm {
            control: weibull(),
            treated: weibull(),
        },
        os: PerArm {
            control: weibull(),
            treated: weibull(),
        },
    };
    DGPConfig {
        n: PerStudy { rct: 60, os: 90 },
        intercept: false,
        covariates: vec![
            CovariateSpec {
                name: "z".into(),
                rct: CovariateLaw::Gaussian { mean: 0.0, var: 1.0 },
                os: CovariateLaw::Gaussian { mean: 0.3, var: 1.5 },
            },
            CovariateSpec::shared("b", CovariateLaw::Bernoulli { rate: 0.4 }),
        ],
        propensity: PerStudy {
            rct: PropensitySpec::Constant { p: 0.5 },
            os: PropensitySpec::Sigmoid {
                beta: vec![0.6, -0.4],
                offset: 0.1,
            },
        },
        event,
        censoring: None,
        concealed: vec![],
        global_censoring: None,
        selection_bias: 0.0,
    }
}

fn gaussian_density(v: f64, mean: f64, var: f64) -> f64 {
    (-(v - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

fn law_density(law: &CovariateLaw, v: f64) -> f64 {
    match *law {
        CovariateLaw::Gaussian { mean, var } => gaussian_density(v, mean, var),
        CovariateLaw::Bernoulli { rate } => {
            if v == 1.0 {
                rate
            } else {
                1.0 - rate
            }
        }
    }
}

/// Augmented inverse-propensity CATE difference for an uncensored record,
/// written from the model definitions: Weibull means in closed form, the
/// selection score by Bayes rule, the propensity from its logistic form.
pub fn aipw_difference(record: &SubjectRecord, dgp: &DGPConfig) -> f64 {
    let x = &record.x;
    let (n0, n1) = (dgp.n.rct as f64, dgp.n.os as f64);
    let dens = |s: u8| -> f64 {
        dgp.covariates
            .iter()
            .zip(x)
            .map(|(c, &v)| law_density(if s == 0 { &c.rct } else { &c.os }, v))
            .product()
    };
    let os = n1 * dens(1);
    let p_os = os / (os + n0 * dens(0));
    let p_s = if record.s == 1 { p_os } else { 1.0 - p_os };
    let treat = match dgp.propensity.get(record.s) {
        PropensitySpec::Constant { p } => *p,
        PropensitySpec::Sigmoid { beta, offset } => {
            let eta: f64 = offset + beta.iter().zip(x).map(|(b, v)| b * v).sum::<f64>();
            1.0 / (1.0 + (-eta).exp())
        }
    };
    let mean = |a: u8| -> f64 {
        let w = dgp.event.get(record.s).get(a);
        let risk = w.beta.iter().zip(x).map(|(b, v)| b * v).sum::<f64>().exp();
        statrs::function::gamma::gamma(1.0 + 1.0 / w.p) / (w.lambda * risk.powf(1.0 / w.p))
    };
    let (m1, m0) = (mean(1), mean(0));
    let y = record.y_obs;
    let cate = if record.a == 1 {
        m1 - m0 + (y - m1) / treat
    } else {
        m1 - m0 - (y - m0) / (1.0 - treat)
    };
    let sign = if record.s == 1 { 1.0 } else { -1.0 };
    sign * cate / p_s
}

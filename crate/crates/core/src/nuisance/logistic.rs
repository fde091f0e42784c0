//! Logistic regression by iteratively reweighted least squares.

use nalgebra::{DMatrix, DVector};
use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `P(label = 1 | x) = sigmoid(beta[0] + x·beta[1..])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub beta: Vec<f64>,
}

impl LogisticModel {
    pub fn zeros(dim: usize) -> Self {
        Self {
            beta: vec![0.0; dim + 1],
        }
    }

    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        self.beta[0] + x.iter().zip(&self.beta[1..]).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        sigmoid(self.linear_predictor(x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticOptions {
    pub max_iter: usize,
    /// Tolerance on the sup-norm of the score divided by `n`.
    pub tol: f64,
    /// L2 penalty `r/2·‖β‖²` on the slopes; the intercept is free.
    pub ridge: Option<f64>,
    /// Coefficient norm beyond which separation is reported.
    pub max_norm: f64,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-8,
            ridge: None,
            max_norm: 50.0,
        }
    }
}

/// Bernoulli log-likelihood and its gradient at `beta` (intercept first).
pub fn logistic_log_likelihood(
    features: ArrayView2<f64>,
    labels: &[bool],
    beta: &[f64],
) -> Result<(f64, Vec<f64>)> {
    if features.nrows() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: features.nrows(),
            got: labels.len(),
        });
    }
    if beta.len() != features.ncols() + 1 {
        return Err(Error::DimensionMismatch {
            expected: features.ncols() + 1,
            got: beta.len(),
        });
    }
    let model = LogisticModel { beta: beta.to_vec() };
    let mut ll = 0.0;
    let mut grad = vec![0.0; beta.len()];
    for (row, &y) in features.rows().into_iter().zip(labels) {
        let x = row.to_vec();
        let eta = model.linear_predictor(&x);
        let p = sigmoid(eta);
        // log(1 + e^eta) without overflow
        let softplus = if eta > 0.0 { eta + (-eta).exp().ln_1p() } else { eta.exp().ln_1p() };
        ll += if y { eta - softplus } else { -softplus };
        let r = f64::from(u8::from(y)) - p;
        grad[0] += r;
        for (g, v) in grad[1..].iter_mut().zip(&x) {
            *g += r * v;
        }
    }
    Ok((ll, grad))
}

/// Maximum-likelihood logistic fit. Constant feature columns are held at 0.
pub fn fit_logistic(
    features: ArrayView2<f64>,
    labels: &[bool],
    opts: &LogisticOptions,
) -> Result<LogisticModel> {
    let n = features.nrows();
    if n != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: labels.len(),
        });
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 || positives == n {
        return Err(Error::InvalidArgument(
            "logistic fit needs at least one example of each label".into(),
        ));
    }
    let d = features.ncols();
    let active: Vec<usize> = (0..d)
        .filter(|&j| {
            let col = features.column(j);
            col.iter().any(|&v| v != col[0])
        })
        .collect();
    let k = active.len() + 1;
    let design = DMatrix::from_fn(n, k, |i, j| if j == 0 { 1.0 } else { features[(i, active[j - 1])] });
    let y = DVector::from_iterator(n, labels.iter().map(|&l| f64::from(u8::from(l))));

    let ridge = opts.ridge.unwrap_or(0.0);
    let loglik = |b: &DVector<f64>| -> f64 {
        let eta = &design * b;
        eta.iter()
            .zip(y.iter())
            .map(|(&e, &t)| {
                let sp = if e > 0.0 { e + (-e).exp().ln_1p() } else { e.exp().ln_1p() };
                t * e - sp
            })
            .sum::<f64>()
            - 0.5 * ridge * b.iter().skip(1).map(|v| v * v).sum::<f64>()
    };

    let mut beta = DVector::<f64>::zeros(k);
    let mut ll = loglik(&beta);
    let mut iterations = 0;
    loop {
        let eta = &design * &beta;
        let p = eta.map(sigmoid);
        let mut grad = design.tr_mul(&(&y - &p));
        for a in 1..k {
            grad[a] -= ridge * beta[a];
        }
        let gnorm = grad.amax() / n as f64;
        // unpenalized, a perfect classifier has no finite maximizer; keep pushing until the norm bound trips
        let separated =
            ridge == 0.0 && eta.iter().zip(y.iter()).all(|(&e, &t)| (2.0 * t - 1.0) * e > 0.0);
        if gnorm < opts.tol && !separated {
            break;
        }
        if iterations >= opts.max_iter {
            return Err(Error::Convergence {
                what: "logistic regression".into(),
                iterations,
                grad_norm: gnorm,
            });
        }
        iterations += 1;
        let w = p.map(|v| v * (1.0 - v));
        let mut info = DMatrix::<f64>::zeros(k, k);
        for i in 0..n {
            let wi = w[i];
            if wi == 0.0 {
                continue;
            }
            for a in 0..k {
                let xa = design[(i, a)] * wi;
                for b in 0..=a {
                    info[(a, b)] += xa * design[(i, b)];
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                info[(b, a)] = info[(a, b)];
            }
            if a > 0 {
                info[(a, a)] += ridge;
            }
        }
        let Some(chol) = info.cholesky() else {
            if separated {
                return Err(Error::Separation {
                    norm: beta.norm(),
                    bound: opts.max_norm,
                });
            }
            return Err(Error::Singular {
                what: "logistic regression".into(),
            });
        };
        let step = chol.solve(&grad);
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            let cand = &beta + &step * t;
            let cl = loglik(&cand);
            if cl.is_finite() && cl >= ll - 1e-12 * ll.abs().max(1.0) {
                beta = cand;
                ll = cl;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        let norm = beta.norm();
        if norm > opts.max_norm {
            return Err(Error::Separation {
                norm,
                bound: opts.max_norm,
            });
        }
        if !moved {
            return Err(Error::Convergence {
                what: "logistic regression (line search stalled)".into(),
                iterations,
                grad_norm: gnorm,
            });
        }
    }

    let mut out = vec![0.0; d + 1];
    out[0] = beta[0];
    for (slot, &j) in active.iter().enumerate() {
        out[j + 1] = beta[slot + 1];
    }
    Ok(LogisticModel { beta: out })
}

//! Cox partial-likelihood fitting with a Breslow baseline.

use nalgebra::{DMatrix, DVector};
use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::model::{Baseline, CoxModel, StepBaseline};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoxFitOptions {
    pub max_iter: usize,
    /// Tolerance on the sup-norm of the score divided by the event count.
    pub tol: f64,
    /// L2 penalty `r/2·‖β‖²` subtracted from the log partial likelihood.
    pub ridge: Option<f64>,
    /// Spacing used to separate tied observation times.
    pub jitter: f64,
}

impl Default for CoxFitOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-8,
            ridge: None,
            jitter: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxFit {
    pub model: CoxModel,
    pub iterations: usize,
    pub log_likelihood: f64,
    pub grad_norm: f64,
    pub n_events: usize,
}

/// Log partial likelihood (Breslow form, ties broken by input order) with
/// its gradient and Hessian at `beta`.
pub fn partial_log_likelihood(
    x: ArrayView2<f64>,
    time: &[f64],
    event: &[bool],
    beta: &[f64],
) -> Result<(f64, Vec<f64>, Vec<Vec<f64>>)> {
    check_shapes(x, time, event)?;
    if beta.len() != x.ncols() {
        return Err(Error::DimensionMismatch {
            expected: x.ncols(),
            got: beta.len(),
        });
    }
    let order = sorted_order(time);
    let rows: Vec<Vec<f64>> = order.iter().map(|&i| x.row(i).to_vec()).collect();
    let events: Vec<bool> = order.iter().map(|&i| event[i]).collect();
    let (ll, g, h) = evaluate(&rows, &events, beta);
    let hess = (0..beta.len())
        .map(|a| (0..beta.len()).map(|b| -h[(a, b)]).collect())
        .collect();
    Ok((ll, g.iter().copied().collect(), hess))
}

/// Fits `β` by Newton–Raphson and the baseline survival by Breslow.
///
/// Columns that are constant over the sample carry no information in the
/// partial likelihood; their coefficients are fixed at zero.
pub fn fit_cox(
    x: ArrayView2<f64>,
    time: &[f64],
    event: &[bool],
    opts: &CoxFitOptions,
) -> Result<CoxFit> {
    check_shapes(x, time, event)?;
    if time.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::InvalidArgument(
            "survival times must be finite and nonnegative".into(),
        ));
    }
    let n_events = event.iter().filter(|&&e| e).count();
    if n_events < 2 {
        return Err(Error::InvalidArgument(format!(
            "Cox fit needs at least 2 events, got {n_events}"
        )));
    }
    let d = x.ncols();
    let order = sorted_order(time);

    // keep non-constant columns, centered for conditioning
    let active: Vec<usize> = (0..d)
        .filter(|&j| {
            let col = x.column(j);
            let first = col[0];
            col.iter().any(|&v| v != first)
        })
        .collect();
    let means: Vec<f64> = active
        .iter()
        .map(|&j| x.column(j).mean().unwrap_or(0.0))
        .collect();
    let rows: Vec<Vec<f64>> = order
        .iter()
        .map(|&i| active.iter().zip(&means).map(|(&j, m)| x[(i, j)] - m).collect())
        .collect();
    let events: Vec<bool> = order.iter().map(|&i| event[i]).collect();

    let k = active.len();
    let mut beta_active = vec![0.0; k];
    let mut iterations = 0;
    let ridge = opts.ridge.unwrap_or(0.0);
    let penalized = |b: &[f64]| {
        let (l, mut g, mut h) = evaluate(&rows, &events, b);
        for (a, v) in b.iter().enumerate() {
            g[a] -= ridge * v;
            h[(a, a)] += ridge;
        }
        (l - 0.5 * ridge * b.iter().map(|v| v * v).sum::<f64>(), g, h)
    };
    let (mut ll, mut grad, mut neg_hess) = penalized(&beta_active);
    let scale = n_events as f64;
    let mut gnorm = sup_norm(&grad) / scale;
    while k > 0 && gnorm >= opts.tol {
        if iterations >= opts.max_iter {
            return Err(Error::Convergence {
                what: "Cox partial likelihood".into(),
                iterations,
                grad_norm: gnorm,
            });
        }
        iterations += 1;
        let step = neg_hess
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Singular {
                what: "Cox partial likelihood".into(),
            })?
            .solve(&grad);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand: Vec<f64> = beta_active
                .iter()
                .zip(step.iter())
                .map(|(b, s)| b + t * s)
                .collect();
            let (cl, cg, ch) = penalized(&cand);
            if cl.is_finite() && cl >= ll - 1e-12 * ll.abs().max(1.0) {
                beta_active = cand;
                ll = cl;
                grad = cg;
                neg_hess = ch;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        gnorm = sup_norm(&grad) / scale;
        if !accepted {
            return Err(Error::Convergence {
                what: "Cox partial likelihood (line search stalled)".into(),
                iterations,
                grad_norm: gnorm,
            });
        }
    }

    let mut beta = vec![0.0; d];
    for (slot, &j) in active.iter().enumerate() {
        beta[j] = beta_active[slot];
    }
    let baseline = breslow(x, time, event, &beta, &order, opts.jitter)?;
    Ok(CoxFit {
        model: CoxModel::new(Baseline::Step(baseline), beta),
        iterations,
        log_likelihood: ll,
        grad_norm: gnorm,
        n_events,
    })
}

/// Breslow estimate of the baseline survival `exp(-H₀)` for a fixed `β`.
pub fn breslow_baseline(
    x: ArrayView2<f64>,
    time: &[f64],
    event: &[bool],
    beta: &[f64],
    jitter: f64,
) -> Result<StepBaseline> {
    check_shapes(x, time, event)?;
    let order = sorted_order(time);
    breslow(x, time, event, beta, &order, jitter)
}

fn breslow(
    x: ArrayView2<f64>,
    time: &[f64],
    event: &[bool],
    beta: &[f64],
    order: &[usize],
    jitter: f64,
) -> Result<StepBaseline> {
    let n = order.len();
    let risk: Vec<f64> = order
        .iter()
        .map(|&i| x.row(i).iter().zip(beta).map(|(a, b)| a * b).sum::<f64>().exp())
        .collect();
    let jittered = jittered_times(time, order, jitter);
    // risk-set sums from the back
    let mut at_risk = vec![0.0; n];
    let mut acc = 0.0;
    for k in (0..n).rev() {
        acc += risk[k];
        at_risk[k] = acc;
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut hazard = 0.0;
    for k in 0..n {
        if event[order[k]] {
            hazard += 1.0 / at_risk[k];
            times.push(jittered[k]);
            values.push((-hazard).exp());
        }
    }
    let horizon = jittered.last().copied().unwrap_or(0.0);
    StepBaseline::with_horizon(times, values, horizon)
}

/// Sorted times with tied runs spread by `rank · jitter`.
fn jittered_times(time: &[f64], order: &[usize], jitter: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(order.len());
    let mut rank = 0usize;
    for (k, &i) in order.iter().enumerate() {
        if k > 0 && time[i] == time[order[k - 1]] {
            rank += 1;
        } else {
            rank = 0;
        }
        let mut t = time[i] + rank as f64 * jitter;
        if let Some(&prev) = out.last() {
            if t <= prev {
                t = f64::from_bits(next_up(prev));
            }
        }
        out.push(t);
    }
    out
}

// smallest double above `v` (v ≥ 0)
fn next_up(v: f64) -> u64 {
    if v == 0.0 {
        1
    } else {
        v.to_bits() + 1
    }
}

fn sorted_order(time: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..time.len()).collect();
    order.sort_by(|&a, &b| time[a].total_cmp(&time[b]).then(a.cmp(&b)));
    order
}

fn check_shapes(x: ArrayView2<f64>, time: &[f64], event: &[bool]) -> Result<()> {
    if x.nrows() != time.len() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            got: time.len(),
        });
    }
    if event.len() != time.len() {
        return Err(Error::DimensionMismatch {
            expected: time.len(),
            got: event.len(),
        });
    }
    Ok(())
}

fn sup_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Log-likelihood, score and negative Hessian over rows sorted by time.
fn evaluate(rows: &[Vec<f64>], events: &[bool], beta: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>) {
    let n = rows.len();
    let k = beta.len();
    let eta: Vec<f64> = rows
        .iter()
        .map(|r| r.iter().zip(beta).map(|(a, b)| a * b).sum())
        .collect();
    let shift = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let shift = if shift.is_finite() { shift } else { 0.0 };

    let mut s0 = 0.0;
    let mut s1 = vec![0.0; k];
    let mut s2 = DMatrix::<f64>::zeros(k, k);
    let mut ll = 0.0;
    let mut grad = DVector::<f64>::zeros(k);
    let mut neg_hess = DMatrix::<f64>::zeros(k, k);
    for idx in (0..n).rev() {
        let w = (eta[idx] - shift).exp();
        let r = &rows[idx];
        s0 += w;
        for a in 0..k {
            s1[a] += w * r[a];
            for b in 0..=a {
                s2[(a, b)] += w * r[a] * r[b];
            }
        }
        if events[idx] {
            ll += eta[idx] - (s0.ln() + shift);
            for a in 0..k {
                let ma = s1[a] / s0;
                grad[a] += r[a] - ma;
                for b in 0..=a {
                    neg_hess[(a, b)] += s2[(a, b)] / s0 - ma * s1[b] / s0;
                }
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            neg_hess[(b, a)] = neg_hess[(a, b)];
        }
    }
    (ll, grad, neg_hess)
}

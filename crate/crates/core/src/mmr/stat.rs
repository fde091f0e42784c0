use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::kernel::{gram, Bandwidth, KernelSpec};
use crate::error::{Error, Result};
use crate::rng::{indexed_rng, Stream};
use crate::signals::SignalVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub null_samples: Vec<f64>,
    pub p_value: f64,
    pub alpha: f64,
    pub reject: bool,
    pub n: usize,
    /// Kernel with the bandwidth that was actually used.
    pub kernel: KernelSpec,
    pub seed: u64,
}

fn check_square(psi: &[f64], k: ArrayView2<f64>) -> Result<()> {
    if k.nrows() != k.ncols() || k.nrows() != psi.len() {
        return Err(Error::DimensionMismatch {
            expected: psi.len(),
            got: k.nrows(),
        });
    }
    Ok(())
}

/// `(1/(n(n-1))) Σ_{i≠j} ψ_i K_ij ψ_j`.
pub fn mmr_statistic(psi: &[f64], k: ArrayView2<f64>) -> Result<f64> {
    check_square(psi, k)?;
    let n = psi.len();
    if n < 2 {
        return Err(Error::InvalidArgument("the statistic needs at least two signals".into()));
    }
    let mut total = 0.0;
    for i in 0..n {
        let row = k.row(i);
        let mut acc = 0.0;
        for j in 0..n {
            if j != i {
                acc += row[j] * psi[j];
            }
        }
        total += psi[i] * acc;
    }
    Ok(total / (n as f64 * (n as f64 - 1.0)))
}

/// Multinomial(n, 1/n) counts for bootstrap replicate `index`.
pub fn bootstrap_weights(n: usize, seed: u64, index: u64) -> Vec<f64> {
    let mut rng = indexed_rng(seed, Stream::Bootstrap, index);
    let mut w = vec![0.0; n];
    for _ in 0..n {
        w[rng.random_range(0..n)] += 1.0;
    }
    w
}

/// Null draws `(1/n²) Σ_{i≠j} (w_i−1)ψ_i K_ij ψ_j (w_j−1)` for the given
/// weight vectors, evaluated together as one matrix product.
pub fn null_from_weights(psi: &[f64], k: ArrayView2<f64>, weights: &[Vec<f64>]) -> Result<Vec<f64>> {
    check_square(psi, k)?;
    let n = psi.len();
    let b = weights.len();
    let mut v = Array2::<f64>::zeros((n, b));
    for (col, w) in weights.iter().enumerate() {
        if w.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: w.len(),
            });
        }
        for i in 0..n {
            v[(i, col)] = (w[i] - 1.0) * psi[i];
        }
    }
    let kv = k.dot(&v);
    let n2 = (n * n) as f64;
    Ok((0..b)
        .map(|col| {
            let mut quad = 0.0;
            let mut diag = 0.0;
            for i in 0..n {
                let vi = v[(i, col)];
                quad += vi * kv[(i, col)];
                diag += vi * vi * k[(i, i)];
            }
            (quad - diag) / n2
        })
        .collect())
}

/// `B` bootstrap draws of the statistic under the null, reusing `K`.
pub fn bootstrap_null(psi: &[f64], k: ArrayView2<f64>, b: usize, seed: u64) -> Result<Vec<f64>> {
    if b == 0 {
        return Err(Error::InvalidArgument("at least one bootstrap draw is required".into()));
    }
    check_square(psi, k)?;
    let weights: Vec<Vec<f64>> = (0..b as u64).map(|i| bootstrap_weights(psi.len(), seed, i)).collect();
    null_from_weights(psi, k, &weights)
}

/// `(#{statistic ≤ null} + 1) / (B + 1)`.
pub fn p_value(statistic: f64, null: &[f64]) -> f64 {
    let exceed = null.iter().filter(|&&v| statistic <= v).count();
    (exceed + 1) as f64 / (null.len() + 1) as f64
}

/// Test on a precomputed Gram matrix. `kernel` is recorded as given.
pub fn run_test_with_gram(
    psi: &[f64],
    k: ArrayView2<f64>,
    kernel: KernelSpec,
    b: usize,
    alpha: f64,
    seed: u64,
) -> Result<TestResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0,1), got {alpha}")));
    }
    let statistic = mmr_statistic(psi, k)?;
    let null_samples = bootstrap_null(psi, k, b, seed)?;
    let p = p_value(statistic, &null_samples);
    Ok(TestResult {
        statistic,
        null_samples,
        p_value: p,
        alpha,
        reject: p < alpha,
        n: psi.len(),
        kernel,
        seed,
    })
}

/// Builds the Gram matrix for `signal` and runs the bootstrap test.
pub fn run_test(signal: &SignalVector, kernel: &KernelSpec, b: usize, alpha: f64, seed: u64) -> Result<TestResult> {
    let g = gram(signal.x_rows.view(), kernel)?;
    let resolved = KernelSpec {
        bandwidth: Bandwidth::Fixed(g.sigma),
        ..*kernel
    };
    run_test_with_gram(&signal.psi, g.matrix.view(), resolved, b, alpha, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn statistic_examples() {
        let k = array![[1.0, 0.3], [0.3, 1.0]];
        assert_eq!(mmr_statistic(&[0.0, 0.0], k.view()).unwrap(), 0.0);
        let (a, b) = (1.5, -2.0);
        assert!((mmr_statistic(&[a, b], k.view()).unwrap() - a * b * 0.3).abs() < 1e-15);
        let ones = Array2::from_elem((3, 3), 1.0);
        assert_eq!(mmr_statistic(&[1.0; 3], ones.view()).unwrap(), 1.0);
    }

    #[test]
    fn unit_weights_give_zero() {
        let k = array![[1.0, 0.3, 0.1], [0.3, 1.0, 0.2], [0.1, 0.2, 1.0]];
        let null = null_from_weights(&[1.0, -2.0, 0.5], k.view(), &[vec![1.0; 3]]).unwrap();
        assert_eq!(null, vec![0.0]);
    }

    #[test]
    fn multinomial_counts_sum_to_n() {
        let w = bootstrap_weights(57, 9, 3);
        assert_eq!(w.iter().sum::<f64>(), 57.0);
        assert_eq!(w, bootstrap_weights(57, 9, 3));
        assert_ne!(w, bootstrap_weights(57, 9, 4));
    }

    #[test]
    fn p_value_extremes() {
        assert_eq!(p_value(10.0, &[1.0, 2.0, 3.0]), 0.25);
        assert_eq!(p_value(-10.0, &[1.0, 2.0, 3.0]), 1.0);
    }

    #[test]
    fn zero_signal_never_rejects() {
        let k = Array2::from_elem((4, 4), 0.5);
        let r = run_test_with_gram(&[0.0; 4], k.view(), KernelSpec::fixed(1.0), 50, 0.5, 1).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert!(!r.reject);
    }
}

//! Kernel-weighted signal average highlighting where the studies disagree.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use super::kernel::{gram, Bandwidth, Heuristic, KernelSpec, Standardizer};
use crate::error::{Error, Result};
use crate::signals::SignalVector;

/// Axis-aligned box over covariate space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoundingBox {
    /// Bounding box of `x` widened by `inflate` times its width on each axis
    /// (half on either side); flat axes get unit width.
    pub fn around(x: ArrayView2<f64>, inflate: f64) -> Self {
        let mut lower = Vec::with_capacity(x.ncols());
        let mut upper = Vec::with_capacity(x.ncols());
        for col in x.columns() {
            let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let pad = if hi > lo { 0.5 * inflate * (hi - lo) } else { 0.5 };
            lower.push(lo - pad);
            upper.push(hi + pad);
        }
        Self { lower, upper }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessEvaluator {
    psi: Vec<f64>,
    /// Reference covariates after standardization.
    z_rows: Vec<Vec<f64>>,
    standardizer: Standardizer,
    sigma: f64,
    kernel: KernelSpec,
    /// Multiplier making the witness integrate to one over `domain`.
    pub normalization: f64,
    pub domain: BoundingBox,
}

impl WitnessEvaluator {
    /// Unnormalized witness (`C = 1`) over the reference signal.
    pub fn unnormalized(signal: &SignalVector, kernel: &KernelSpec) -> Result<Self> {
        if signal.is_empty() {
            return Err(Error::InvalidArgument("witness needs at least one signal".into()));
        }
        let x = signal.x_rows.view();
        let standardizer = if kernel.standardize {
            Standardizer::fit(x)
        } else {
            Standardizer::identity(x.ncols())
        };
        let sigma = match kernel.bandwidth {
            Bandwidth::Fixed(s) if s > 0.0 => s,
            Bandwidth::Fixed(s) => return Err(Error::Config(format!("bandwidth must be positive, got {s}"))),
            Bandwidth::Rule(Heuristic::MedianHeuristic) => {
                if x.nrows() < 2 {
                    return Err(Error::InvalidArgument("median heuristic needs two rows".into()));
                }
                gram(x, kernel)?.sigma
            }
        };
        let z_rows = x.rows().into_iter().map(|r| standardizer.apply_row(&r.to_vec())).collect();
        Ok(Self {
            psi: signal.psi.clone(),
            z_rows,
            standardizer,
            sigma,
            kernel: *kernel,
            normalization: 1.0,
            domain: BoundingBox::around(x, 0.1),
        })
    }

    /// Witness scaled to integrate to one over the reference bounding box
    /// inflated by 10%.
    pub fn new(signal: &SignalVector, kernel: &KernelSpec) -> Result<Self> {
        let mut w = Self::unnormalized(signal, kernel)?;
        let integral = w.raw_integral(&w.domain.clone());
        if !(integral.abs() > 1e-300) || !integral.is_finite() {
            return Err(Error::InvalidArgument(
                "witness integrates to zero over its domain and cannot be normalized".into(),
            ));
        }
        w.normalization = 1.0 / integral;
        Ok(w)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        let z = self.standardizer.apply_row(x);
        let n = self.psi.len() as f64;
        let sum: f64 = self
            .psi
            .iter()
            .zip(&self.z_rows)
            .map(|(p, zi)| {
                let d2: f64 = zi.iter().zip(&z).map(|(a, b)| (a - b) * (a - b)).sum();
                p * self.kernel.eval(self.sigma, d2)
            })
            .sum();
        self.normalization * sum / n
    }

    /// Exact integral of the unnormalized witness over `domain`: each RBF
    /// bump factorizes into one-dimensional Gaussian integrals.
    fn raw_integral(&self, domain: &BoundingBox) -> f64 {
        let n = self.psi.len() as f64;
        let mut total = 0.0;
        for (p, zi) in self.psi.iter().zip(&self.z_rows) {
            let mut prod = 1.0;
            for j in 0..zi.len() {
                let (lo, hi) = (domain.lower[j], domain.upper[j]);
                let scale = self.standardizer.scale[j];
                if scale > 0.0 {
                    // bump centre and width in original units
                    let centre = self.standardizer.mean[j] + zi[j] * scale;
                    let s = self.sigma * scale;
                    let c = s * (std::f64::consts::PI / 2.0).sqrt();
                    prod *= c * (erf((hi - centre) / (s * 2f64.sqrt())) - erf((lo - centre) / (s * 2f64.sqrt())));
                } else {
                    // standardized coordinate is constant: the bump is flat on this axis
                    prod *= hi - lo;
                }
            }
            total += p * prod;
        }
        total / n
    }
}

/// Witness values at each query row.
pub fn witness(evaluator: &WitnessEvaluator, x_query: ArrayView2<f64>) -> Vec<f64> {
    x_query.rows().into_iter().map(|r| evaluator.evaluate(&r.to_vec())).collect()
}

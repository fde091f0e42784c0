use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    #[default]
    GaussianRbf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Heuristic {
    #[default]
    MedianHeuristic,
}

/// Either a fixed positive bandwidth or a rule resolved from the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Bandwidth {
    Fixed(f64),
    Rule(Heuristic),
}

impl Default for Bandwidth {
    fn default() -> Self {
        Bandwidth::Rule(Heuristic::MedianHeuristic)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KernelSpec {
    #[serde(default)]
    pub family: KernelFamily,
    #[serde(default)]
    pub bandwidth: Bandwidth,
    /// z-score covariate columns before computing distances.
    #[serde(default = "yes")]
    pub standardize: bool,
}

fn yes() -> bool {
    true
}

impl KernelSpec {
    pub fn median_heuristic() -> Self {
        Self {
            family: KernelFamily::GaussianRbf,
            bandwidth: Bandwidth::Rule(Heuristic::MedianHeuristic),
            standardize: true,
        }
    }

    pub fn fixed(sigma: f64) -> Self {
        Self {
            family: KernelFamily::GaussianRbf,
            bandwidth: Bandwidth::Fixed(sigma),
            standardize: false,
        }
    }

    /// The bandwidth once resolved, if it is fixed.
    pub fn sigma(&self) -> Option<f64> {
        match self.bandwidth {
            Bandwidth::Fixed(s) => Some(s),
            Bandwidth::Rule(_) => None,
        }
    }

    pub fn eval(&self, sigma: f64, sq_dist: f64) -> f64 {
        match self.family {
            KernelFamily::GaussianRbf => (-sq_dist / (2.0 * sigma * sigma)).exp(),
        }
    }
}

/// Column means and standard deviations; constant columns get scale 0 and
/// are mapped to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: ArrayView2<f64>) -> Self {
        let n = x.nrows().max(1) as f64;
        let mean: Vec<f64> = x.mean_axis(Axis(0)).map(|m| m.to_vec()).unwrap_or_else(|| vec![0.0; x.ncols()]);
        let scale = (0..x.ncols())
            .map(|j| {
                let var = x.column(j).iter().map(|v| (v - mean[j]).powi(2)).sum::<f64>() / n;
                var.sqrt()
            })
            .collect();
        Self { mean, scale }
    }

    pub fn identity(d: usize) -> Self {
        Self {
            mean: vec![0.0; d],
            scale: vec![1.0; d],
        }
    }

    pub fn apply_row(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| if *s > 0.0 { (v - m) / s } else { 0.0 })
            .collect()
    }

    pub fn apply(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            let z = self.apply_row(row.as_slice().expect("owned rows are contiguous"));
            row.assign(&Array1::from(z));
        }
        out
    }
}

/// Kernel matrix together with the bandwidth and scaling that produced it.
#[derive(Debug, Clone)]
pub struct Gram {
    pub matrix: Array2<f64>,
    pub sigma: f64,
    pub standardizer: Standardizer,
}

/// Squared Euclidean distances through one matrix product.
pub fn squared_distances(x: ArrayView2<f64>) -> Array2<f64> {
    let norms: Vec<f64> = x.rows().into_iter().map(|r| r.dot(&r)).collect();
    let mut d = x.dot(&x.t());
    let n = x.nrows();
    for i in 0..n {
        for j in 0..n {
            let v = norms[i] + norms[j] - 2.0 * d[(i, j)];
            d[(i, j)] = if i == j { 0.0 } else { v.max(0.0) };
        }
    }
    // exact symmetry
    for i in 0..n {
        for j in 0..i {
            d[(j, i)] = d[(i, j)];
        }
    }
    d
}

/// Median of the positive pairwise Euclidean distances.
pub fn median_heuristic(sq_dist: &Array2<f64>) -> Result<f64> {
    let n = sq_dist.nrows();
    let mut positive: Vec<f64> = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = sq_dist[(i, j)];
            if v > 0.0 {
                positive.push(v);
            }
        }
    }
    if positive.is_empty() {
        return Err(Error::InvalidArgument(
            "all pairwise distances are zero; set an explicit bandwidth".into(),
        ));
    }
    let m = positive.len();
    let mid = m / 2;
    let (_, upper, _) = positive.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = upper.sqrt();
    if m % 2 == 1 {
        return Ok(upper);
    }
    let lower = positive[..mid].iter().cloned().fold(f64::NEG_INFINITY, f64::max).sqrt();
    Ok(0.5 * (lower + upper))
}

/// `K[i][j] = k(x_i, x_j)`, resolving the bandwidth if needed.
pub fn gram(x_rows: ArrayView2<f64>, kernel: &KernelSpec) -> Result<Gram> {
    if x_rows.nrows() < 2 {
        return Err(Error::InvalidArgument("a Gram matrix needs at least two rows".into()));
    }
    let standardizer = if kernel.standardize {
        Standardizer::fit(x_rows)
    } else {
        Standardizer::identity(x_rows.ncols())
    };
    let z = standardizer.apply(x_rows);
    let mut d = squared_distances(z.view());
    let sigma = match kernel.bandwidth {
        Bandwidth::Fixed(s) if s > 0.0 && s.is_finite() => s,
        Bandwidth::Fixed(s) => return Err(Error::Config(format!("bandwidth must be positive, got {s}"))),
        Bandwidth::Rule(Heuristic::MedianHeuristic) => median_heuristic(&d)?,
    };
    d.mapv_inplace(|v| kernel.eval(sigma, v));
    Ok(Gram {
        matrix: d,
        sigma,
        standardizer,
    })
}

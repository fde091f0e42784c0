//! Censored two-study cohorts: records, simulation and CSV persistence.

mod config;
mod generate;
mod io;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub use config::{
    CensorRule, CovariateLaw, CovariateSpec, DGPConfig, GlobalCensoring, PerArm, PerStudy,
    PropensitySpec, WeibullCoxSpec,
};
pub use generate::{
    apply_global_censoring, apply_selection_bias, generate_cohort, selection_bias_keep, simulate,
    Simulation,
};
pub use io::{load_csv, read_csv, save_csv, write_csv};

/// One observed unit: covariates, treatment, study and the censored outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub x: Vec<f64>,
    pub a: u8,
    /// 0 = randomized trial, 1 = observational study.
    pub s: u8,
    pub y_obs: f64,
    pub delta: u8,
}

impl SubjectRecord {
    pub fn event(&self) -> bool {
        self.delta == 1
    }
}

/// A simulated unit before censoring is applied. `x` holds every covariate,
/// including those later concealed from the observed record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentRecord {
    pub x: Vec<f64>,
    pub a: u8,
    pub s: u8,
    pub y: f64,
    pub c: f64,
}

impl LatentRecord {
    /// `Ỹ = min(Y, C)` and `Δ = 1[Y ≤ C]`, keeping the covariate columns in `keep`.
    pub fn observe(&self, keep: &[usize]) -> SubjectRecord {
        SubjectRecord {
            x: keep.iter().map(|&j| self.x[j]).collect(),
            a: self.a,
            s: self.s,
            y_obs: self.y.min(self.c),
            delta: u8::from(self.y <= self.c),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cohort {
    pub records: Vec<SubjectRecord>,
    pub covariate_names: Vec<String>,
}

impl Cohort {
    pub fn new(records: Vec<SubjectRecord>, covariate_names: Vec<String>) -> crate::Result<Self> {
        let d = covariate_names.len();
        for r in &records {
            if r.x.len() != d {
                return Err(crate::Error::DimensionMismatch {
                    expected: d,
                    got: r.x.len(),
                });
            }
        }
        Ok(Self {
            records,
            covariate_names,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn count_study(&self, s: u8) -> usize {
        self.records.iter().filter(|r| r.s == s).count()
    }

    /// Indices of records in stratum `(s, a)`.
    pub fn stratum(&self, s: u8, a: u8) -> Vec<usize> {
        self.indices_where(|r| r.s == s && r.a == a)
    }

    pub fn indices_where<F: Fn(&SubjectRecord) -> bool>(&self, pred: F) -> Vec<usize> {
        self.records
            .iter()
            .enumerate()
            .filter(|(_, r)| pred(r))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Cohort {
        Cohort {
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            covariate_names: self.covariate_names.clone(),
        }
    }

    /// Covariate rows for `indices` as an `n × d` matrix.
    pub fn design(&self, indices: &[usize]) -> Array2<f64> {
        let d = self.dim();
        let mut m = Array2::zeros((indices.len(), d));
        for (row, &i) in indices.iter().enumerate() {
            for (j, v) in self.records[i].x.iter().enumerate() {
                m[(row, j)] = *v;
            }
        }
        m
    }

    pub fn x_matrix(&self) -> Array2<f64> {
        let all: Vec<usize> = (0..self.len()).collect();
        self.design(&all)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn observe_takes_minimum() {
        let l = LatentRecord {
            x: vec![1.0, 2.0, 3.0],
            a: 1,
            s: 0,
            y: 2.0,
            c: 1.5,
        };
        let r = l.observe(&[0, 2]);
        assert_eq!(r.x, vec![1.0, 3.0]);
        assert_eq!(r.y_obs, 1.5);
        assert_eq!(r.delta, 0);
        let tie = LatentRecord { c: 2.0, ..l };
        assert_eq!(tie.observe(&[]).delta, 1);
    }

    #[test]
    fn cohort_rejects_ragged_rows() {
        let r = SubjectRecord {
            x: vec![1.0],
            a: 0,
            s: 0,
            y_obs: 1.0,
            delta: 1,
        };
        assert!(Cohort::new(vec![r], vec!["a".into(), "b".into()]).is_err());
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::survival::CoxModel;

/// A value keyed by study, mirroring the `rct`/`os` layout of config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerStudy<T> {
    pub rct: T,
    pub os: T,
}

impl<T> PerStudy<T> {
    pub fn get(&self, s: u8) -> &T {
        if s == 0 {
            &self.rct
        } else {
            &self.os
        }
    }

    pub fn get_mut(&mut self, s: u8) -> &mut T {
        if s == 0 {
            &mut self.rct
        } else {
            &mut self.os
        }
    }

    pub fn same(v: T) -> Self
    where
        T: Clone,
    {
        Self { rct: v.clone(), os: v }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerArm<T> {
    pub control: T,
    pub treated: T,
}

impl<T> PerArm<T> {
    pub fn get(&self, a: u8) -> &T {
        if a == 0 {
            &self.control
        } else {
            &self.treated
        }
    }

    pub fn get_mut(&mut self, a: u8) -> &mut T {
        if a == 0 {
            &mut self.control
        } else {
            &mut self.treated
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum CovariateLaw {
    Gaussian { mean: f64, var: f64 },
    Bernoulli { rate: f64 },
}

impl CovariateLaw {
    /// Density (or mass) at `v`.
    pub fn density(&self, v: f64) -> f64 {
        match *self {
            CovariateLaw::Gaussian { mean, var } => {
                let z = (v - mean) * (v - mean) / var;
                (-0.5 * z).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
            }
            CovariateLaw::Bernoulli { rate } => {
                if v == 1.0 {
                    rate
                } else if v == 0.0 {
                    1.0 - rate
                } else {
                    0.0
                }
            }
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        match *self {
            CovariateLaw::Gaussian { mean, var } if mean.is_finite() && var > 0.0 && var.is_finite() => Ok(()),
            CovariateLaw::Bernoulli { rate } if (0.0..=1.0).contains(&rate) => Ok(()),
            _ => Err(Error::Config(format!("covariate {name}: invalid law {self:?}"))),
        }
    }
}

/// One covariate column with its law in each study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub name: String,
    pub rct: CovariateLaw,
    pub os: CovariateLaw,
}

impl CovariateSpec {
    pub fn shared(name: &str, law: CovariateLaw) -> Self {
        Self {
            name: name.to_string(),
            rct: law.clone(),
            os: law,
        }
    }

    pub fn law(&self, s: u8) -> &CovariateLaw {
        if s == 0 {
            &self.rct
        } else {
            &self.os
        }
    }
}

/// Treatment assignment `P(A=1 | X, S=s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PropensitySpec {
    Constant { p: f64 },
    /// `sigmoid(x·beta + offset)` over the full covariate vector.
    Sigmoid { beta: Vec<f64>, offset: f64 },
}

impl PropensitySpec {
    pub fn prob(&self, x: &[f64]) -> f64 {
        match self {
            PropensitySpec::Constant { p } => *p,
            PropensitySpec::Sigmoid { beta, offset } => {
                let eta: f64 = x.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>() + offset;
                crate::nuisance::sigmoid(eta)
            }
        }
    }
}

/// Cox model with Weibull baseline; an empty `beta` means all zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeibullCoxSpec {
    pub lambda: f64,
    pub p: f64,
    #[serde(default)]
    pub beta: Vec<f64>,
}

impl WeibullCoxSpec {
    pub fn model(&self, dim: usize) -> Result<CoxModel> {
        let beta = if self.beta.is_empty() {
            vec![0.0; dim]
        } else {
            self.beta.clone()
        };
        CoxModel::weibull(self.lambda, self.p, beta)
    }
}

/// How censoring times are drawn for subjects beyond the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CensorRule {
    /// `c = u·τ`, `u ~ Uniform(lo, hi)`.
    UniformFraction { lo: f64, hi: f64 },
    /// `c = fraction·τ`.
    FixedFraction { fraction: f64 },
}

impl Default for CensorRule {
    fn default() -> Self {
        CensorRule::UniformFraction { lo: 0.25, hi: 0.75 }
    }
}

impl CensorRule {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            CensorRule::UniformFraction { lo, hi } => 0.0 <= lo && lo <= hi && hi < 1.0,
            CensorRule::FixedFraction { fraction } => (0.0..1.0).contains(&fraction),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "censoring rule {self:?} must place censoring strictly below the threshold"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlobalCensoring {
    pub tau: f64,
    #[serde(default)]
    pub rule: CensorRule,
}

/// Full description of a simulated RCT/OS pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DGPConfig {
    pub n: PerStudy<usize>,
    /// Prepend a constant column named `intercept`.
    #[serde(default)]
    pub intercept: bool,
    pub covariates: Vec<CovariateSpec>,
    pub propensity: PerStudy<PropensitySpec>,
    pub event: PerStudy<PerArm<WeibullCoxSpec>>,
    /// `None` leaves every event time uncensored.
    #[serde(default)]
    pub censoring: Option<PerStudy<PerArm<WeibullCoxSpec>>>,
    /// Covariates dropped from the observed records after simulation.
    #[serde(default)]
    pub concealed: Vec<String>,
    #[serde(default)]
    pub global_censoring: Option<GlobalCensoring>,
    #[serde(default)]
    pub selection_bias: f64,
}

impl DGPConfig {
    /// Names of every simulated covariate, intercept first when present.
    pub fn full_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.full_dim());
        if self.intercept {
            names.push("intercept".to_string());
        }
        names.extend(self.covariates.iter().map(|c| c.name.clone()));
        names
    }

    pub fn full_dim(&self) -> usize {
        self.covariates.len() + usize::from(self.intercept)
    }

    /// Column indices (into the full vector) that stay observed.
    pub fn observed_columns(&self) -> Vec<usize> {
        self.full_names()
            .iter()
            .enumerate()
            .filter(|(_, n)| !self.concealed.contains(n))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn observed_names(&self) -> Vec<String> {
        let names = self.full_names();
        self.observed_columns().into_iter().map(|i| names[i].clone()).collect()
    }

    pub fn event_model(&self, s: u8, a: u8) -> Result<CoxModel> {
        self.event.get(s).get(a).model(self.full_dim())
    }

    pub fn censoring_model(&self, s: u8, a: u8) -> Result<Option<CoxModel>> {
        match &self.censoring {
            None => Ok(None),
            Some(c) => c.get(s).get(a).model(self.full_dim()).map(Some),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.full_dim();
        if self.n.rct == 0 || self.n.os == 0 {
            return Err(Error::Config("both studies need at least one subject".into()));
        }
        for c in &self.covariates {
            c.rct.validate(&c.name)?;
            c.os.validate(&c.name)?;
        }
        let names = self.full_names();
        for name in &self.concealed {
            if !names.contains(name) {
                return Err(Error::Config(format!("concealed covariate {name} does not exist")));
            }
        }
        for s in 0..2u8 {
            match self.propensity.get(s) {
                PropensitySpec::Constant { p } if !(0.0..=1.0).contains(p) => {
                    return Err(Error::Config(format!("propensity constant {p} outside [0,1]")));
                }
                PropensitySpec::Sigmoid { beta, offset } => {
                    if beta.len() != d {
                        return Err(Error::Config(format!(
                            "propensity beta has {} entries, expected {d}",
                            beta.len()
                        )));
                    }
                    if !offset.is_finite() || beta.iter().any(|b| !b.is_finite()) {
                        return Err(Error::Config("propensity parameters must be finite".into()));
                    }
                }
                _ => {}
            }
            for a in 0..2u8 {
                let mut specs = vec![("event", self.event.get(s).get(a))];
                if let Some(c) = &self.censoring {
                    specs.push(("censoring", c.get(s).get(a)));
                }
                for (what, spec) in specs {
                    if !spec.beta.is_empty() && spec.beta.len() != d {
                        return Err(Error::Config(format!(
                            "{what} beta for (s={s}, a={a}) has {} entries, expected {d}",
                            spec.beta.len()
                        )));
                    }
                    if !(spec.lambda > 0.0 && spec.lambda.is_finite() && spec.p > 0.0 && spec.p.is_finite()) {
                        return Err(Error::Config(format!(
                            "{what} Weibull for (s={s}, a={a}) needs lambda > 0 and p > 0"
                        )));
                    }
                }
            }
        }
        if let Some(g) = &self.global_censoring {
            if !(g.tau > 0.0 && g.tau.is_finite()) {
                return Err(Error::Config(format!("global censoring threshold {} must be positive", g.tau)));
            }
            g.rule.validate()?;
        }
        if !(0.0..1.0).contains(&self.selection_bias) {
            return Err(Error::Config(format!(
                "selection-bias fraction {} outside [0,1)",
                self.selection_bias
            )));
        }
        Ok(())
    }
}

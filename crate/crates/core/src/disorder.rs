//! Disorder: the per-realisation parameter `omega'` and the hypothesis rate
//! functions `K, L, K̄, L̄` it induces.

use rand::Rng;
use rand_distr::{Cauchy, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{derive_seed, NoiseStreamKey, StreamKind};

/// Nonnegative function of time, constant on `[breaks[i], breaks[i+1])`, with
/// the last value extending to infinity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PiecewiseConstant {
    breaks: Vec<f64>,
    values: Vec<f64>,
}

impl PiecewiseConstant {
    pub fn constant(value: f64) -> Self {
        Self {
            breaks: vec![0.0],
            values: vec![value.max(0.0)],
        }
    }

    pub fn new(breaks: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breaks.is_empty() || breaks.len() != values.len() || breaks[0] != 0.0 {
            return Err(Error::Domain(
                "piecewise-constant rate needs matching breaks starting at 0".into(),
            ));
        }
        if breaks.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Domain("rate breakpoints must increase".into()));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Domain(format!("rate values must be finite and >= 0, got {v}")));
        }
        Ok(Self { breaks, values })
    }

    pub fn value(&self, t: f64) -> f64 {
        let i = self.breaks.partition_point(|&b| b <= t).saturating_sub(1);
        self.values[i]
    }

    /// Exact `int_0^t value(s) ds`.
    pub fn integral(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let mut total = 0.0;
        for i in 0..self.values.len() {
            let lo = self.breaks[i];
            if lo >= t {
                break;
            }
            let hi = self.breaks.get(i + 1).copied().unwrap_or(f64::INFINITY).min(t);
            total += self.values[i] * (hi - lo);
        }
        total
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            breaks: self.breaks.clone(),
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    /// Pointwise sum of two rates on the union of their breakpoints.
    pub fn plus(&self, other: &Self) -> Self {
        let mut breaks: Vec<f64> = self.breaks.iter().chain(&other.breaks).copied().collect();
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let values = breaks.iter().map(|&b| self.value(b) + other.value(b)).collect();
        Self { breaks, values }
    }
}

/// Rate functions of the monotonicity and growth hypotheses.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rates {
    pub k: PiecewiseConstant,
    pub l: PiecewiseConstant,
    pub k_bar: PiecewiseConstant,
    pub l_bar: PiecewiseConstant,
}

impl Rates {
    pub fn constant(k: f64, l: f64, k_bar: f64, l_bar: f64) -> Self {
        Self {
            k: PiecewiseConstant::constant(k),
            l: PiecewiseConstant::constant(l),
            k_bar: PiecewiseConstant::constant(k_bar),
            l_bar: PiecewiseConstant::constant(l_bar),
        }
    }

    pub fn zero() -> Self {
        Self::constant(0.0, 0.0, 0.0, 0.0)
    }
}

/// One draw of the disorder.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisorderSample {
    pub index: u64,
    pub omega: Vec<f64>,
    /// Seed of everything simulated under this draw.
    pub seed: u64,
}

impl DisorderSample {
    /// The degenerate draw used when no disorder is configured.
    pub fn fixed(seed: u64) -> Self {
        Self {
            index: 0,
            omega: Vec::new(),
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "distribution", rename_all = "lowercase", deny_unknown_fields)]
#[derive(Default)]
pub enum DisorderLaw {
    #[default]
    None,
    Normal {
        #[serde(default)]
        mean: f64,
        #[serde(default = "one")]
        sd: f64,
        #[serde(default = "one_usize")]
        dim: usize,
    },
    Uniform {
        low: f64,
        high: f64,
        #[serde(default = "one_usize")]
        dim: usize,
    },
    /// Heavy tailed; `E exp(c |omega'|)` is infinite for every `c > 0`.
    Cauchy {
        #[serde(default)]
        location: f64,
        #[serde(default = "one")]
        scale: f64,
        #[serde(default = "one_usize")]
        dim: usize,
    },
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}


impl DisorderLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            DisorderLaw::None => Ok(()),
            DisorderLaw::Normal { mean, sd, .. } => {
                if !(mean.is_finite() && sd.is_finite() && sd >= 0.0) {
                    return Err(Error::config("disorder.sd", "needs finite mean and sd >= 0"));
                }
                Ok(())
            }
            DisorderLaw::Uniform { low, high, .. } => {
                if !(low.is_finite() && high.is_finite() && low < high) {
                    return Err(Error::config("disorder.high", "needs finite low < high"));
                }
                Ok(())
            }
            DisorderLaw::Cauchy { location, scale, .. } => {
                if !(location.is_finite() && scale.is_finite() && scale > 0.0) {
                    return Err(Error::config("disorder.scale", "needs finite location and scale > 0"));
                }
                Ok(())
            }
        }
    }

    pub fn dim(&self) -> usize {
        match *self {
            DisorderLaw::None => 0,
            DisorderLaw::Normal { dim, .. }
            | DisorderLaw::Uniform { dim, .. }
            | DisorderLaw::Cauchy { dim, .. } => dim,
        }
    }

    /// Draw `index` under `run_seed`, from stream `(disorder, replica = index)`.
    pub fn sample(&self, run_seed: u64, index: u64) -> DisorderSample {
        let key = NoiseStreamKey::new(run_seed, StreamKind::Disorder, 0, 0, index);
        let mut rng = key.rng(0);
        let dim = self.dim();
        let omega = match *self {
            DisorderLaw::None => Vec::new(),
            DisorderLaw::Normal { mean, sd, .. } => {
                let d = Normal::new(mean, sd).expect("validated normal law");
                (0..dim).map(|_| d.sample(&mut rng)).collect()
            }
            DisorderLaw::Uniform { low, high, .. } => {
                (0..dim).map(|_| rng.random_range(low..high)).collect()
            }
            DisorderLaw::Cauchy { location, scale, .. } => {
                let d = Cauchy::new(location, scale).expect("validated Cauchy law");
                (0..dim).map(|_| d.sample(&mut rng)).collect()
            }
        };
        DisorderSample {
            index,
            omega,
            seed: derive_seed(run_seed, StreamKind::Disorder, index),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn piecewise_integral_is_exact() {
        let r = PiecewiseConstant::new(vec![0.0, 1.0, 2.5], vec![2.0, 0.0, 4.0]).unwrap();
        assert_eq!(r.integral(0.5), 1.0);
        assert_eq!(r.integral(2.0), 2.0);
        assert_eq!(r.integral(3.0), 4.0);
        assert_eq!(r.value(2.5), 4.0);
        assert_eq!(r.value(0.99), 2.0);
        assert!(PiecewiseConstant::new(vec![0.0], vec![-1.0]).is_err());
    }

    #[test]
    fn plus_and_scale() {
        let a = PiecewiseConstant::new(vec![0.0, 1.0], vec![1.0, 3.0]).unwrap();
        let b = PiecewiseConstant::constant(2.0);
        let s = a.plus(&b).scaled(2.0);
        assert_eq!(s.integral(2.0), 2.0 * (3.0 + 5.0));
    }

    #[test]
    fn samples_are_reproducible() {
        let law = DisorderLaw::Normal {
            mean: 0.0,
            sd: 1.0,
            dim: 3,
        };
        let a = law.sample(7, 2);
        assert_eq!(a, law.sample(7, 2));
        assert_ne!(a.omega, law.sample(7, 3).omega);
        assert_eq!(a.omega.len(), 3);
        assert!(DisorderLaw::None.sample(7, 0).omega.is_empty());
    }
}

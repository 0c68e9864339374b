//! Scalar cubic `dX = (-X^3/3 + X) dt + sigma dW`, the FitzHugh–Nagumo
//! voltage drift on its own.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::disorder::Rates;
use crate::error::{Error, Result};
use crate::grid::{PathSegment, Segment, TimeGrid};
use crate::layout::Site;
use crate::model::{Dims, Model};
use crate::noise::StreamRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CubicParams {
    pub sigma: f64,
    pub x0: f64,
    pub x0_sd: f64,
}

impl Default for CubicParams {
    fn default() -> Self {
        Self {
            sigma: 0.5,
            x0: 0.0,
            x0_sd: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CubicModel {
    p: CubicParams,
}

impl CubicModel {
    pub fn new(p: CubicParams) -> Result<Self> {
        if !(p.sigma.is_finite() && p.x0.is_finite()) {
            return Err(Error::config("model.sigma", "parameters must be finite"));
        }
        if !(p.x0_sd.is_finite() && p.x0_sd >= 0.0) {
            return Err(Error::config("model.x0_sd", "must be finite and >= 0"));
        }
        Ok(Self { p })
    }
}

impl Model for CubicModel {
    fn id(&self) -> &str {
        "cubic"
    }

    fn dims(&self) -> Dims {
        Dims {
            state: 1,
            brownian: 1,
            pop_brownian: 0,
        }
    }

    fn drift(&self, _t: f64, _site: &Site, seg: &Segment<'_>, _omega: &[f64], out: &mut [f64]) {
        let x = seg.last()[0];
        out[0] = -x * x * x / 3.0 + x;
    }

    fn diffusion(&self, _t: f64, _site: &Site, _seg: &Segment<'_>, _omega: &[f64], out: &mut [f64]) {
        out[0] = self.p.sigma;
    }

    fn initial_path(&self, _site: &Site, grid: &TimeGrid, rng: &mut StreamRng) -> PathSegment {
        let z: f64 = StandardNormal.sample(rng);
        PathSegment::constant(grid.window(), &[self.p.x0 + self.p.x0_sd * z])
    }

    fn initial_second_moment(&self, _site: &Site) -> f64 {
        self.p.x0 * self.p.x0 + self.p.x0_sd * self.p.x0_sd
    }

    fn rates(&self, _omega: &[f64]) -> Rates {
        // d/dx (-x^3/3 + x) <= 1, doubled by the inner-product form;
        // 2x f(x) = -2x^4/3 + 2x^2.
        Rates::constant((self.p.sigma * self.p.sigma).max(2.0), 2.0, 0.0, 0.0)
    }
}

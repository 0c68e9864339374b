//! `dX = X^2 dt` declared with `L = K = 0`. Neither the monotonicity nor the
//! growth condition holds; the checkers must report it.

use rand_distr::{Distribution, StandardNormal};

use crate::disorder::Rates;
use crate::grid::{PathSegment, Segment, TimeGrid};
use crate::layout::Site;
use crate::model::{Dims, Model};
use crate::noise::StreamRng;

#[derive(Debug, Clone, Default)]
pub struct SquareDrift;

impl Model for SquareDrift {
    fn id(&self) -> &str {
        "counterexample"
    }

    fn dims(&self) -> Dims {
        Dims {
            state: 1,
            brownian: 0,
            pop_brownian: 0,
        }
    }

    fn drift(&self, _t: f64, _site: &Site, seg: &Segment<'_>, _omega: &[f64], out: &mut [f64]) {
        let x = seg.last()[0];
        out[0] = x * x;
    }

    fn diffusion(&self, _t: f64, _site: &Site, _seg: &Segment<'_>, _omega: &[f64], _out: &mut [f64]) {}

    fn initial_path(&self, _site: &Site, grid: &TimeGrid, rng: &mut StreamRng) -> PathSegment {
        let z: f64 = StandardNormal.sample(rng);
        PathSegment::constant(grid.window(), &[0.1 * z])
    }

    fn initial_second_moment(&self, _site: &Site) -> f64 {
        0.01
    }

    fn rates(&self, _omega: &[f64]) -> Rates {
        Rates::zero()
    }
}

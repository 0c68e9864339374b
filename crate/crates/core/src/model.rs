//! Coefficient sets. A [`Model`] bundles the local coefficients `f, g, h`, the
//! jump mark law, the initial law and the declared hypothesis rates; its
//! optional [`Interaction`] carries the synaptic coefficients `theta, beta, eta`.
//!
//! All coefficient functions overwrite `out`.

use crate::disorder::Rates;
use crate::grid::{PathSegment, Segment, TimeGrid};
use crate::layout::Site;
use crate::noise::StreamRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct Dims {
    /// State dimension `d`.
    pub state: usize,
    /// Dimension `m` of the local Brownian motion.
    pub brownian: usize,
    /// Dimension `n` of the synaptic Brownian motions.
    pub pop_brownian: usize,
}

pub trait Model: Send + Sync {
    fn id(&self) -> &str;

    fn dims(&self) -> Dims;

    /// Total jump intensity `nu(U)`.
    fn nu_total(&self) -> f64 {
        0.0
    }

    /// A mark drawn from `nu / nu(U)`.
    fn sample_mark(&self, _rng: &mut StreamRng) -> f64 {
        1.0
    }

    fn drift(&self, t: f64, site: &Site, seg: &Segment<'_>, omega: &[f64], out: &mut [f64]);

    /// Row-major `d x m` matrix.
    fn diffusion(&self, t: f64, site: &Site, seg: &Segment<'_>, omega: &[f64], out: &mut [f64]);

    /// Whether `h` is non-zero; local jump streams are skipped otherwise.
    fn has_local_jumps(&self) -> bool {
        false
    }

    fn jump(
        &self,
        _t: f64,
        _site: &Site,
        _seg: &Segment<'_>,
        _omega: &[f64],
        _mark: f64,
        out: &mut [f64],
    ) {
        out.fill(0.0);
    }

    /// `int_U h dnu`.
    fn jump_compensator(
        &self,
        _t: f64,
        _site: &Site,
        _seg: &Segment<'_>,
        _omega: &[f64],
        out: &mut [f64],
    ) {
        out.fill(0.0);
    }

    /// Analytic `int_U |h(a) - h(b)|^2 dnu` (with `h(b) = 0` when `b` is absent).
    fn jump_square(
        &self,
        _t: f64,
        _a: (&Site, &Segment<'_>),
        _b: Option<(&Site, &Segment<'_>)>,
        _omega: &[f64],
    ) -> Option<f64> {
        if self.has_local_jumps() {
            None
        } else {
            Some(0.0)
        }
    }

    /// True when `f, g, h` read the delay window rather than only the current
    /// state; the hypotheses are then checked in their path-dependent form.
    fn local_uses_history(&self) -> bool {
        false
    }

    /// Initial path `z` on `[-tau, 0]` for a neuron at `site`.
    fn initial_path(&self, site: &Site, grid: &TimeGrid, rng: &mut StreamRng) -> PathSegment;

    /// `sup_u E|z_u|^2` of the initial law at `site`.
    fn initial_second_moment(&self, site: &Site) -> f64;

    /// Declared hypothesis rates under disorder `omega`.
    fn rates(&self, omega: &[f64]) -> Rates;

    /// Within-cell variation `epsilon` of the coefficients (0 for cell-constant models).
    fn cell_epsilon(&self) -> f64 {
        0.0
    }

    fn interaction(&self) -> Option<&dyn Interaction> {
        None
    }
}

/// Synaptic coefficients. `site` receives from `source`; `x` is the
/// receiver's current state and `y` the source's delay window.
pub trait Interaction: Send + Sync {
    #[allow(clippy::too_many_arguments)]
    fn theta(
        &self,
        t: f64,
        site: &Site,
        source: &Site,
        x: &[f64],
        y: &Segment<'_>,
        omega: &[f64],
        out: &mut [f64],
    );

    fn has_diffusion(&self) -> bool {
        false
    }

    /// Row-major `d x n` matrix.
    #[allow(clippy::too_many_arguments)]
    fn beta(
        &self,
        _t: f64,
        _site: &Site,
        _source: &Site,
        _x: &[f64],
        _y: &Segment<'_>,
        _omega: &[f64],
        out: &mut [f64],
    ) {
        out.fill(0.0);
    }

    fn has_jumps(&self) -> bool {
        false
    }

    #[allow(clippy::too_many_arguments)]
    fn eta(
        &self,
        _t: f64,
        _site: &Site,
        _source: &Site,
        _x: &[f64],
        _y: &Segment<'_>,
        _omega: &[f64],
        _mark: f64,
        out: &mut [f64],
    ) {
        out.fill(0.0);
    }

    /// `int_U eta dnu`.
    #[allow(clippy::too_many_arguments)]
    fn eta_compensator(
        &self,
        _t: f64,
        _site: &Site,
        _source: &Site,
        _x: &[f64],
        _y: &Segment<'_>,
        _omega: &[f64],
        out: &mut [f64],
    ) {
        out.fill(0.0);
    }

    /// Analytic `int_U |eta(a) - eta(b)|^2 dnu`, each argument being
    /// `(receiver, source, x, y)`; `eta(b) = 0` when `b` is absent.
    fn eta_square(
        &self,
        _t: f64,
        _a: Arg<'_>,
        _b: Option<Arg<'_>>,
        _omega: &[f64],
    ) -> Option<f64> {
        if self.has_jumps() {
            None
        } else {
            Some(0.0)
        }
    }

    fn separable(&self) -> Option<&dyn Separable> {
        None
    }
}

/// Argument tuple of an interaction coefficient.
#[derive(Clone, Copy)]
pub struct Arg<'a> {
    pub site: &'a Site,
    pub source: &'a Site,
    pub x: &'a [f64],
    pub y: Segment<'a>,
}

/// Interactions whose weighted sum over the sources of one cell depends on the
/// sources only through `W = sum w` and `F = sum w phi(y)`, for a fixed feature
/// map `phi`. This allows `O(N)` evaluation through per-cell aggregates.
///
/// Each `*_sum` must equal the corresponding weighted sum of the pointwise
/// coefficient over any set of sources in `source_cell` with those aggregates.
pub trait Separable: Send + Sync {
    fn feature_len(&self) -> usize;

    fn features(&self, t: f64, source: &Site, y: &Segment<'_>, omega: &[f64], out: &mut [f64]);

    #[allow(clippy::too_many_arguments)]
    fn theta_sum(
        &self,
        t: f64,
        site: &Site,
        source_cell: usize,
        x: &[f64],
        weight: f64,
        features: &[f64],
        omega: &[f64],
        out: &mut [f64],
    );

    #[allow(clippy::too_many_arguments)]
    fn beta_sum(
        &self,
        _t: f64,
        _site: &Site,
        _source_cell: usize,
        _x: &[f64],
        _weight: f64,
        _features: &[f64],
        _omega: &[f64],
        out: &mut [f64],
    ) {
        out.fill(0.0);
    }

    #[allow(clippy::too_many_arguments)]
    fn eta_sum(
        &self,
        _t: f64,
        _site: &Site,
        _source_cell: usize,
        _x: &[f64],
        _weight: f64,
        _features: &[f64],
        _omega: &[f64],
        _mark: f64,
        out: &mut [f64],
    ) {
        out.fill(0.0);
    }

    #[allow(clippy::too_many_arguments)]
    fn eta_compensator_sum(
        &self,
        _t: f64,
        _site: &Site,
        _source_cell: usize,
        _x: &[f64],
        _weight: f64,
        _features: &[f64],
        _omega: &[f64],
        out: &mut [f64],
    ) {
        out.fill(0.0);
    }
}

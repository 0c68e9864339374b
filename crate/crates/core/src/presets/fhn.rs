//! FitzHugh–Nagumo neurons with electrical synapses and jump-noise
//! conductances. State `(V, w)`:
//!
//! ```text
//! dV = (-V^3/3 + V - w + l1) dt + l2 dW
//!      - sum_alpha 1/S sum_r' (V - V'(t - tau)) [A1 dt + A2 dB^alpha + int e0 xi dÑ^alpha]
//! dw = l3 (V + l4 - l5 w) dt
//! ```
//!
//! Couplings carry an optional cell-pair gain; `l1` may vary per cell, with
//! the disorder `omega'_0` and linearly inside a cell (`spread`).

use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::disorder::{PiecewiseConstant, Rates};
use crate::error::{Error, Result};
use crate::grid::{DelayMeasure, PathSegment, Segment, TimeGrid};
use crate::layout::{Site, SpatialLayout};
use crate::model::{Arg, Dims, Interaction, Model, Separable};
use crate::noise::StreamRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FhnParams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
    pub lambda5: f64,
    /// Per-cell override of `lambda1`.
    pub lambda1_cells: Option<Vec<f64>>,
    /// `lambda1` varies by `spread * (u - 1/2)` across a cell, `u` the
    /// relative position.
    pub spread: f64,
    /// `lambda1 += disorder_scale * omega'_0`.
    pub disorder_scale: f64,
    pub a1: f64,
    pub a2: f64,
    /// Jump conductance `eta(xi) = eta0 * xi`.
    pub eta0: f64,
    pub mark_mean: f64,
    pub mark_sd: f64,
    /// Cell-pair gain `G[c][c']` multiplying `A1`, `A2` and `eta0`.
    pub cell_gain: Option<Vec<Vec<f64>>>,
    pub v0_mean: f64,
    pub v0_sd: f64,
    pub w0_mean: f64,
    pub w0_sd: f64,
}

impl Default for FhnParams {
    fn default() -> Self {
        Self {
            lambda1: 0.7,
            lambda2: 0.3,
            lambda3: 0.08,
            lambda4: 0.7,
            lambda5: 0.8,
            lambda1_cells: None,
            spread: 0.0,
            disorder_scale: 0.0,
            a1: 1.0,
            a2: 0.5,
            eta0: 0.2,
            mark_mean: 1.0,
            mark_sd: 0.5,
            cell_gain: None,
            v0_mean: 0.0,
            v0_sd: 0.5,
            w0_mean: 0.0,
            w0_sd: 0.2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FhnModel {
    p: FhnParams,
    nu_total: f64,
    lambda1: Vec<f64>,
    gain: Vec<Vec<f64>>,
    mark: Normal<f64>,
    // Constants of the hypothesis rates that do not depend on the disorder.
    l: f64,
    bar: f64,
    id: String,
}

impl FhnModel {
    pub fn new(p: FhnParams, nu_total: f64, lambda: &DelayMeasure, layout: &SpatialLayout) -> Result<Self> {
        let finite = [
            ("model.lambda1", p.lambda1),
            ("model.lambda2", p.lambda2),
            ("model.lambda4", p.lambda4),
            ("model.spread", p.spread),
            ("model.disorder_scale", p.disorder_scale),
            ("model.a1", p.a1),
            ("model.a2", p.a2),
            ("model.eta0", p.eta0),
            ("model.mark_mean", p.mark_mean),
            ("model.v0_mean", p.v0_mean),
            ("model.w0_mean", p.w0_mean),
        ];
        for (key, v) in finite {
            if !v.is_finite() {
                return Err(Error::config(key, "must be finite"));
            }
        }
        for (key, v) in [
            ("model.lambda3", p.lambda3),
            ("model.lambda5", p.lambda5),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(key, format!("must be positive, got {v}")));
            }
        }
        for (key, v) in [
            ("model.mark_sd", p.mark_sd),
            ("model.v0_sd", p.v0_sd),
            ("model.w0_sd", p.w0_sd),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(key, "must be finite and >= 0"));
            }
        }
        if !(nu_total.is_finite() && nu_total >= 0.0) {
            return Err(Error::config("noise.nu_total", "must be finite and >= 0"));
        }
        let cells = layout.cells().len();
        let lambda1 = match &p.lambda1_cells {
            None => vec![p.lambda1; cells],
            Some(v) if v.len() == cells && v.iter().all(|x| x.is_finite()) => v.clone(),
            Some(v) => {
                return Err(Error::config(
                    "model.lambda1_cells",
                    format!("need {cells} finite values, got {}", v.len()),
                ))
            }
        };
        let gain = match &p.cell_gain {
            None => vec![vec![1.0; cells]; cells],
            Some(g) if g.len() == cells && g.iter().all(|row| row.len() == cells && row.iter().all(|x| x.is_finite())) => {
                g.clone()
            }
            Some(_) => {
                return Err(Error::config(
                    "model.cell_gain",
                    format!("need a finite {cells} x {cells} matrix"),
                ))
            }
        };
        let coupled = p.a1 != 0.0 || p.a2 != 0.0 || (p.eta0 != 0.0 && nu_total > 0.0);
        let w_lag = lambda.weight_at_lag();
        if coupled && w_lag <= 0.0 {
            return Err(Error::config(
                "delay_measure.offsets",
                "the FitzHugh-Nagumo coupling reads V(t - tau) and needs an atom at -tau",
            ));
        }
        // One-sided Lipschitz constant: the cubic only helps, the rest is the
        // largest eigenvalue of [[2, l3 - 1], [l3 - 1, -2 l3 l5]].
        let (q11, q12, q22) = (2.0, p.lambda3 - 1.0, -2.0 * p.lambda3 * p.lambda5);
        let mut l = 0.5 * (q11 + q22) + (0.25 * (q11 - q22) * (q11 - q22) + q12 * q12).sqrt();
        if p.spread != 0.0 {
            // 2 dV dl1 <= dV^2 + dl1^2 with |dl1| < spread <= epsilon.
            l += 1.0;
        }
        let gmax = gain.iter().flatten().fold(0.0f64, |m, g| m.max(g.abs()));
        let c = p.a1 * p.a1
            + p.a2 * p.a2
            + p.eta0 * p.eta0 * nu_total * (p.mark_mean * p.mark_mean + p.mark_sd * p.mark_sd);
        let bar = if coupled {
            2.0 * c * gmax * gmax * (1.0f64).max(1.0 / w_lag)
        } else {
            0.0
        };
        Ok(Self {
            mark: Normal::new(p.mark_mean, p.mark_sd).expect("validated mark law"),
            p,
            nu_total,
            lambda1,
            gain,
            l,
            bar,
            id: "fhn".into(),
        })
    }

    pub fn params(&self) -> &FhnParams {
        &self.p
    }

    pub fn with_id(mut self, id: &str) -> Self {
        self.id = id.into();
        self
    }

    /// `lambda1` at `site` under disorder `omega`.
    pub fn lambda1(&self, site: &Site, omega: &[f64]) -> f64 {
        let mut l1 = self.lambda1[site.cell];
        if self.p.spread != 0.0 {
            l1 += self.p.spread * (site.relative[0] - 0.5);
        }
        if let Some(w) = omega.first() {
            l1 += self.p.disorder_scale * w;
        }
        l1
    }

    fn gain(&self, site: &Site, source_cell: usize) -> f64 {
        self.gain[site.cell][source_cell]
    }
}

impl Model for FhnModel {
    fn id(&self) -> &str {
        &self.id
    }

    fn dims(&self) -> Dims {
        Dims {
            state: 2,
            brownian: 1,
            pop_brownian: 1,
        }
    }

    fn nu_total(&self) -> f64 {
        self.nu_total
    }

    fn sample_mark(&self, rng: &mut StreamRng) -> f64 {
        self.mark.sample(rng)
    }

    fn drift(&self, _t: f64, site: &Site, seg: &Segment<'_>, omega: &[f64], out: &mut [f64]) {
        let x = seg.last();
        let (v, w) = (x[0], x[1]);
        out[0] = -v * v * v / 3.0 + v - w + self.lambda1(site, omega);
        out[1] = self.p.lambda3 * (v + self.p.lambda4 - self.p.lambda5 * w);
    }

    fn diffusion(&self, _t: f64, _site: &Site, _seg: &Segment<'_>, _omega: &[f64], out: &mut [f64]) {
        out[0] = self.p.lambda2;
        out[1] = 0.0;
    }

    fn initial_path(&self, _site: &Site, grid: &TimeGrid, rng: &mut StreamRng) -> PathSegment {
        let zv: f64 = StandardNormal.sample(rng);
        let zw: f64 = StandardNormal.sample(rng);
        PathSegment::constant(
            grid.window(),
            &[self.p.v0_mean + self.p.v0_sd * zv, self.p.w0_mean + self.p.w0_sd * zw],
        )
    }

    fn initial_second_moment(&self, _site: &Site) -> f64 {
        let p = &self.p;
        p.v0_mean * p.v0_mean + p.v0_sd * p.v0_sd + p.w0_mean * p.w0_mean + p.w0_sd * p.w0_sd
    }

    fn rates(&self, omega: &[f64]) -> Rates {
        let p = &self.p;
        let shift = omega.first().map_or(0.0, |w| p.disorder_scale * w);
        let l1 = self
            .lambda1
            .iter()
            .fold(0.0f64, |m, l| m.max((l + shift).abs()))
            + 0.5 * p.spread.abs();
        let q = (p.lambda3 - 1.0).abs();
        let k = (p.lambda2 * p.lambda2 + l1 + p.lambda3 * p.lambda4.abs())
            .max(2.0 + q + l1)
            .max(q + p.lambda3 * p.lambda4.abs() - 2.0 * p.lambda3 * p.lambda5)
            .max(0.0);
        Rates {
            k: PiecewiseConstant::constant(k),
            l: PiecewiseConstant::constant(self.l),
            k_bar: PiecewiseConstant::constant(self.bar),
            l_bar: PiecewiseConstant::constant(self.bar),
        }
    }

    fn cell_epsilon(&self) -> f64 {
        self.p.spread.abs()
    }

    fn interaction(&self) -> Option<&dyn Interaction> {
        Some(self)
    }
}

impl Interaction for FhnModel {
    fn theta(&self, _t: f64, site: &Site, source: &Site, x: &[f64], y: &Segment<'_>, _omega: &[f64], out: &mut [f64]) {
        out[0] = -(x[0] - y.first()[0]) * self.p.a1 * self.gain(site, source.cell);
        out[1] = 0.0;
    }

    fn has_diffusion(&self) -> bool {
        self.p.a2 != 0.0
    }

    fn beta(&self, _t: f64, site: &Site, source: &Site, x: &[f64], y: &Segment<'_>, _omega: &[f64], out: &mut [f64]) {
        out[0] = -(x[0] - y.first()[0]) * self.p.a2 * self.gain(site, source.cell);
        out[1] = 0.0;
    }

    fn has_jumps(&self) -> bool {
        self.p.eta0 != 0.0 && self.nu_total > 0.0
    }

    fn eta(
        &self,
        _t: f64,
        site: &Site,
        source: &Site,
        x: &[f64],
        y: &Segment<'_>,
        _omega: &[f64],
        mark: f64,
        out: &mut [f64],
    ) {
        out[0] = -(x[0] - y.first()[0]) * self.p.eta0 * mark * self.gain(site, source.cell);
        out[1] = 0.0;
    }

    fn eta_compensator(
        &self,
        _t: f64,
        site: &Site,
        source: &Site,
        x: &[f64],
        y: &Segment<'_>,
        _omega: &[f64],
        out: &mut [f64],
    ) {
        out[0] = -(x[0] - y.first()[0]) * self.p.eta0 * self.nu_total * self.p.mark_mean * self.gain(site, source.cell);
        out[1] = 0.0;
    }

    fn eta_square(&self, _t: f64, a: Arg<'_>, b: Option<Arg<'_>>, _omega: &[f64]) -> Option<f64> {
        let amp = |g: Arg<'_>| (g.x[0] - g.y.first()[0]) * self.gain(g.site, g.source.cell);
        let delta = amp(a) - b.map_or(0.0, amp);
        let m2 = self.p.mark_mean * self.p.mark_mean + self.p.mark_sd * self.p.mark_sd;
        Some(delta * delta * self.p.eta0 * self.p.eta0 * self.nu_total * m2)
    }

    fn separable(&self) -> Option<&dyn Separable> {
        Some(self)
    }
}

impl Separable for FhnModel {
    fn feature_len(&self) -> usize {
        1
    }

    fn features(&self, _t: f64, _source: &Site, y: &Segment<'_>, _omega: &[f64], out: &mut [f64]) {
        out[0] = y.first()[0];
    }

    fn theta_sum(
        &self,
        _t: f64,
        site: &Site,
        source_cell: usize,
        x: &[f64],
        weight: f64,
        f: &[f64],
        _omega: &[f64],
        out: &mut [f64],
    ) {
        out[0] = -(x[0] * weight - f[0]) * self.p.a1 * self.gain(site, source_cell);
        out[1] = 0.0;
    }

    fn beta_sum(
        &self,
        _t: f64,
        site: &Site,
        source_cell: usize,
        x: &[f64],
        weight: f64,
        f: &[f64],
        _omega: &[f64],
        out: &mut [f64],
    ) {
        out[0] = -(x[0] * weight - f[0]) * self.p.a2 * self.gain(site, source_cell);
        out[1] = 0.0;
    }

    fn eta_sum(
        &self,
        _t: f64,
        site: &Site,
        source_cell: usize,
        x: &[f64],
        weight: f64,
        f: &[f64],
        _omega: &[f64],
        mark: f64,
        out: &mut [f64],
    ) {
        out[0] = -(x[0] * weight - f[0]) * self.p.eta0 * mark * self.gain(site, source_cell);
        out[1] = 0.0;
    }

    fn eta_compensator_sum(
        &self,
        _t: f64,
        site: &Site,
        source_cell: usize,
        x: &[f64],
        weight: f64,
        f: &[f64],
        _omega: &[f64],
        out: &mut [f64],
    ) {
        out[0] = -(x[0] * weight - f[0]) * self.p.eta0 * self.nu_total * self.p.mark_mean * self.gain(site, source_cell);
        out[1] = 0.0;
    }
}

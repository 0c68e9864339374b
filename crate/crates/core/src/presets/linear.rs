//! Scalar linear jump-diffusion with closed-form moments, used as an oracle:
//!
//! `dX = (-a X + b X(t - tau)) dt + sigma dW + int c xi dÑ`, with `xi ≡ 1`,
//!
//! optionally coupled through `theta = k_delay y(-tau) + k_pull (y(0) - x)`.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::disorder::Rates;
use crate::error::{Error, Result};
use crate::grid::{DelayMeasure, PathSegment, Segment, TimeGrid};
use crate::layout::Site;
use crate::model::{Arg, Dims, Interaction, Model, Separable};
use crate::noise::StreamRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearParams {
    pub a: f64,
    pub b_delay: f64,
    pub sigma: f64,
    pub c_jump: f64,
    /// Initial value; paths are constant on `[-tau, 0]`.
    pub x0: f64,
    /// Standard deviation of the initial value.
    pub x0_sd: f64,
    /// Coupling to the delayed presynaptic value.
    pub k_delay: f64,
    /// Electrical-type coupling `y(0) - x`.
    pub k_pull: f64,
}

impl Default for LinearParams {
    fn default() -> Self {
        Self {
            a: 1.0,
            b_delay: 0.0,
            sigma: 1.0,
            c_jump: 1.0,
            x0: 1.0,
            x0_sd: 0.0,
            k_delay: 0.0,
            k_pull: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LinearModel {
    p: LinearParams,
    nu_total: f64,
    rates: Rates,
    coupled: bool,
}

impl LinearModel {
    pub fn new(p: LinearParams, nu_total: f64, lambda: &DelayMeasure) -> Result<Self> {
        if !(p.a.is_finite() && p.a > 0.0) {
            return Err(Error::config("model.a", format!("must be positive, got {}", p.a)));
        }
        for (key, v) in [
            ("model.b_delay", p.b_delay),
            ("model.sigma", p.sigma),
            ("model.c_jump", p.c_jump),
            ("model.x0", p.x0),
            ("model.k_delay", p.k_delay),
            ("model.k_pull", p.k_pull),
        ] {
            if !v.is_finite() {
                return Err(Error::config(key, "must be finite"));
            }
        }
        if !(p.x0_sd.is_finite() && p.x0_sd >= 0.0) {
            return Err(Error::config("model.x0_sd", "must be finite and >= 0"));
        }
        if !(nu_total.is_finite() && nu_total >= 0.0) {
            return Err(Error::config("noise.nu_total", "must be finite and >= 0"));
        }
        let w_lag = lambda.weight_at_lag();
        let w_now = lambda.weight_at_present();
        // Mass needed at an atom to absorb a term `coef * |y_s|^2`.
        let per = |coef: f64, w: f64, what: &str| -> Result<f64> {
            if coef <= 0.0 {
                Ok(0.0)
            } else if w > 0.0 {
                Ok(coef / w)
            } else {
                Err(Error::config(
                    "delay_measure.offsets",
                    format!("the linear model needs an atom at {what}"),
                ))
            }
        };
        let noise = p.sigma * p.sigma + p.c_jump * p.c_jump * nu_total;
        let b = p.b_delay.abs();
        let (k, l) = if b != 0.0 {
            let lag = per(b, w_lag, "-tau")?;
            let now = per(b - 2.0 * p.a, w_now, "0")?;
            (noise.max(lag).max(now), lag.max(now))
        } else {
            (noise, 0.0)
        };
        let (kd, kp) = (p.k_delay * p.k_delay, p.k_pull * p.k_pull);
        let kb = 3.0 * kp.max(per(kd, w_lag, "-tau")?).max(per(kp, w_now, "0")?);
        let coupled = p.k_delay != 0.0 || p.k_pull != 0.0;
        Ok(Self {
            rates: Rates::constant(k, l, kb, kb),
            p,
            nu_total,
            coupled,
        })
    }

    pub fn params(&self) -> &LinearParams {
        &self.p
    }

    /// `E X_t` for the uncoupled or mean-field equation: the delay ODE
    /// `m' = -a m + (b + k_delay) m(t - tau)`, `m = x0` on `[-tau, 0]`,
    /// integrated with Runge-Kutta steps of size `tau / substeps`; delayed
    /// values at half steps are linearly interpolated, so the error is
    /// `O((tau / substeps)^2)`.
    pub fn mean_oracle(&self, tau: f64, t: f64, substeps: usize) -> f64 {
        let a = self.p.a;
        let c = self.p.b_delay + self.p.k_delay;
        if t <= 0.0 {
            return self.p.x0;
        }
        let h = tau / substeps as f64;
        let steps = (t / h).ceil() as usize;
        let h = t / steps as f64;
        // Delayed values are needed at half steps: keep a fine history.
        let lag = (tau / h).round() as usize;
        let mut hist = vec![self.p.x0; lag + 1];
        let mut half = vec![self.p.x0; lag + 1];
        for _ in 0..steps {
            let m = *hist.last().unwrap();
            let d0 = hist[hist.len() - 1 - lag];
            let dh = half[half.len() - lag];
            let d1 = hist[hist.len() - lag];
            let k1 = -a * m + c * d0;
            let k2 = -a * (m + 0.5 * h * k1) + c * dh;
            let k3 = -a * (m + 0.5 * h * k2) + c * dh;
            let k4 = -a * (m + h * k3) + c * d1;
            let next = m + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            half.push(0.5 * (m + next));
            hist.push(next);
        }
        *hist.last().unwrap()
    }

    /// Exact `Var X_t` of the uncoupled equation when `b = 0`.
    pub fn variance_oracle(&self, t: f64) -> Option<f64> {
        if self.p.b_delay != 0.0 || self.coupled {
            return None;
        }
        let a = self.p.a;
        let q = self.p.sigma * self.p.sigma + self.p.c_jump * self.p.c_jump * self.nu_total;
        let e = (-2.0 * a * t).exp();
        Some(q * (1.0 - e) / (2.0 * a) + self.p.x0_sd * self.p.x0_sd * e)
    }
}

impl Model for LinearModel {
    fn id(&self) -> &str {
        "linear"
    }

    fn dims(&self) -> Dims {
        Dims {
            state: 1,
            brownian: 1,
            pop_brownian: 0,
        }
    }

    fn nu_total(&self) -> f64 {
        self.nu_total
    }

    fn drift(&self, _t: f64, _site: &Site, seg: &Segment<'_>, _omega: &[f64], out: &mut [f64]) {
        out[0] = -self.p.a * seg.last()[0] + self.p.b_delay * seg.first()[0];
    }

    fn diffusion(&self, _t: f64, _site: &Site, _seg: &Segment<'_>, _omega: &[f64], out: &mut [f64]) {
        out[0] = self.p.sigma;
    }

    fn has_local_jumps(&self) -> bool {
        self.p.c_jump != 0.0 && self.nu_total > 0.0
    }

    fn jump(&self, _t: f64, _site: &Site, _seg: &Segment<'_>, _omega: &[f64], mark: f64, out: &mut [f64]) {
        out[0] = self.p.c_jump * mark;
    }

    fn jump_compensator(&self, _t: f64, _site: &Site, _seg: &Segment<'_>, _omega: &[f64], out: &mut [f64]) {
        out[0] = self.p.c_jump * self.nu_total;
    }

    fn jump_square(
        &self,
        _t: f64,
        _a: (&Site, &Segment<'_>),
        b: Option<(&Site, &Segment<'_>)>,
        _omega: &[f64],
    ) -> Option<f64> {
        Some(match b {
            Some(_) => 0.0,
            None => self.p.c_jump * self.p.c_jump * self.nu_total,
        })
    }

    fn local_uses_history(&self) -> bool {
        self.p.b_delay != 0.0
    }

    fn initial_path(&self, _site: &Site, grid: &TimeGrid, rng: &mut StreamRng) -> PathSegment {
        let z: f64 = StandardNormal.sample(rng);
        PathSegment::constant(grid.window(), &[self.p.x0 + self.p.x0_sd * z])
    }

    fn initial_second_moment(&self, _site: &Site) -> f64 {
        self.p.x0 * self.p.x0 + self.p.x0_sd * self.p.x0_sd
    }

    fn rates(&self, _omega: &[f64]) -> Rates {
        self.rates.clone()
    }

    fn interaction(&self) -> Option<&dyn Interaction> {
        if self.coupled {
            Some(self)
        } else {
            None
        }
    }
}

impl Interaction for LinearModel {
    fn theta(
        &self,
        _t: f64,
        _site: &Site,
        _source: &Site,
        x: &[f64],
        y: &Segment<'_>,
        _omega: &[f64],
        out: &mut [f64],
    ) {
        out[0] = self.p.k_delay * y.first()[0] + self.p.k_pull * (y.last()[0] - x[0]);
    }

    fn eta_square(&self, _t: f64, _a: Arg<'_>, _b: Option<Arg<'_>>, _omega: &[f64]) -> Option<f64> {
        Some(0.0)
    }

    fn separable(&self) -> Option<&dyn Separable> {
        Some(self)
    }
}

impl Separable for LinearModel {
    fn feature_len(&self) -> usize {
        2
    }

    fn features(&self, _t: f64, _source: &Site, y: &Segment<'_>, _omega: &[f64], out: &mut [f64]) {
        out[0] = y.first()[0];
        out[1] = y.last()[0];
    }

    fn theta_sum(
        &self,
        _t: f64,
        _site: &Site,
        _source_cell: usize,
        x: &[f64],
        weight: f64,
        f: &[f64],
        _omega: &[f64],
        out: &mut [f64],
    ) {
        out[0] = self.p.k_delay * f[0] + self.p.k_pull * (f[1] - weight * x[0]);
    }
}

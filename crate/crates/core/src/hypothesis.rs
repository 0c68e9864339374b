//! Randomised audits of a model's declared rates `K, L, K̄, L̄` against the
//! monotonicity and growth conditions they are meant to certify.
//!
//! Each trial draws a time, positions inside a random cell, states and delay
//! windows at one of several scales, and reports the normalised violation
//! `(lhs - rhs) / (1 + |rhs|)`; a non-positive maximum means no violation was
//! found.

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::grid::{delay_integral, DelayMeasure, Segment, TimeGrid};
use crate::layout::{Site, SpatialLayout};
use crate::model::{Arg, Interaction, Model};
use crate::noise::StreamRng;

const SCALES: [f64; 4] = [0.1, 1.0, 10.0, 100.0];
/// Marks per Monte Carlo estimate of a jump second moment.
const MC_MARKS: usize = 256;
/// Relative slack for rounding in the two sides.
const ROUNDING: f64 = 1e-10;

/// One randomly drawn argument of the conditions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sample {
    pub t: f64,
    pub site: Site,
    pub other_site: Site,
    pub x: Vec<f64>,
    pub x_other: Vec<f64>,
    pub omega: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub condition: String,
    pub trials: usize,
    /// Trials with a positive normalised violation.
    pub violations: usize,
    pub max_violation: f64,
    pub worst: Option<Sample>,
    /// Largest Monte Carlo SE of a jump term, when any was estimated.
    pub mc_se: Option<f64>,
}

impl ConditionReport {
    fn new(condition: &str) -> Self {
        Self {
            condition: condition.to_string(),
            trials: 0,
            violations: 0,
            max_violation: f64::NEG_INFINITY,
            worst: None,
            mc_se: None,
        }
    }

    fn record(&mut self, lhs: f64, rhs: f64, sample: impl FnOnce() -> Sample) {
        self.trials += 1;
        let slack = ROUNDING * (lhs.abs() + rhs.abs());
        let v = if lhs.is_finite() && rhs.is_finite() {
            (lhs - rhs - slack) / (1.0 + rhs.abs())
        } else {
            f64::INFINITY
        };
        if v > 0.0 {
            self.violations += 1;
        }
        if v > self.max_violation {
            self.max_violation = v;
            self.worst = Some(sample());
        }
    }

    fn note_se(&mut self, se: Option<f64>) {
        if let Some(se) = se {
            self.mc_se = Some(self.mc_se.unwrap_or(0.0).max(se));
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Sampling setup shared by both audits.
#[derive(Clone, Copy)]
pub struct AuditSetup<'a> {
    pub grid: &'a TimeGrid,
    pub lambda: &'a DelayMeasure,
    pub layout: &'a SpatialLayout,
    /// Disorder values, used in turn.
    pub omegas: &'a [Vec<f64>],
    pub trials: usize,
    pub seed: u64,
}

struct Draw {
    t: f64,
    site: Site,
    other: Site,
    source: Site,
    other_source: Site,
    /// Delay windows of the receiver (two versions) and of the source (two versions).
    seg: Vec<f64>,
    seg_other: Vec<f64>,
    src: Vec<f64>,
    src_other: Vec<f64>,
    omega: Vec<f64>,
}

impl Draw {
    fn sample(&self, d: usize) -> Sample {
        let last = |v: &[f64]| v[v.len() - d..].to_vec();
        Sample {
            t: self.t,
            site: self.site.clone(),
            other_site: self.other.clone(),
            x: last(&self.seg),
            x_other: last(&self.seg_other),
            omega: self.omega.clone(),
        }
    }
}

/// A position drawn uniformly inside `cell`.
fn site_in(layout: &SpatialLayout, cell: usize, index: usize, rng: &mut StreamRng) -> Site {
    let c = &layout.cells()[cell];
    let point: Vec<f64> = c
        .lower
        .iter()
        .zip(&c.upper)
        .map(|(lo, hi)| lo + (hi - lo) * rng.random::<f64>())
        .collect();
    Site {
        index,
        population: c.population,
        cell,
        relative: c.relative(&point),
        point,
    }
}

fn window(len: usize, scale: f64, rng: &mut StreamRng) -> Vec<f64> {
    (0..len).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Half of the trials compare nearby arguments, half unrelated ones.
fn perturb(base: &[f64], scale: f64, near: bool, rng: &mut StreamRng) -> Vec<f64> {
    if near {
        base.iter()
            .map(|v| v + 1e-3 * scale * rng.sample::<f64, _>(StandardNormal))
            .collect()
    } else {
        window(base.len(), scale, rng)
    }
}

fn draws(model: &dyn Model, setup: &AuditSetup<'_>) -> Vec<Draw> {
    let mut rng = StreamRng::seed_from_u64(setup.seed);
    let d = model.dims().state;
    let len = setup.grid.window() * d;
    let cells = setup.layout.cells().len();
    (0..setup.trials)
        .map(|i| {
            let scale = SCALES[i % SCALES.len()];
            let near = (i / SCALES.len()).is_multiple_of(2);
            let cell = rng.random_range(0..cells);
            let src_cell = rng.random_range(0..cells);
            let site = site_in(setup.layout, cell, 0, &mut rng);
            let other = site_in(setup.layout, cell, 1, &mut rng);
            let source = site_in(setup.layout, src_cell, 2, &mut rng);
            let other_source = site_in(setup.layout, src_cell, 3, &mut rng);
            let seg = window(len, scale, &mut rng);
            let seg_other = perturb(&seg, scale, near, &mut rng);
            let src = window(len, scale, &mut rng);
            let src_other = perturb(&src, scale, near, &mut rng);
            let omega = if setup.omegas.is_empty() {
                Vec::new()
            } else {
                setup.omegas[i % setup.omegas.len()].clone()
            };
            Draw {
                t: rng.random::<f64>() * setup.grid.horizon(),
                site,
                other,
                source,
                other_source,
                seg,
                seg_other,
                src,
                src_other,
                omega,
            }
        })
        .collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

fn sq_norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum()
}

/// `int |h(a) - h(b)|^2 dnu`, analytic when the model supplies it, else
/// `nu(U)` times a mark average (with its SE).
fn local_jump_square(
    model: &dyn Model,
    t: f64,
    a: (&Site, &Segment<'_>),
    b: Option<(&Site, &Segment<'_>)>,
    omega: &[f64],
    rng: &mut StreamRng,
) -> (f64, Option<f64>) {
    if !model.has_local_jumps() {
        return (0.0, None);
    }
    if let Some(v) = model.jump_square(t, a, b, omega) {
        return (v, None);
    }
    let d = model.dims().state;
    let (mut ha, mut hb) = (vec![0.0; d], vec![0.0; d]);
    let values: Vec<f64> = (0..MC_MARKS)
        .map(|_| {
            let mark = model.sample_mark(rng);
            model.jump(t, a.0, a.1, omega, mark, &mut ha);
            match b {
                Some((s, seg)) => {
                    model.jump(t, s, seg, omega, mark, &mut hb);
                    sq_dist(&ha, &hb)
                }
                None => sq_norm(&ha),
            }
        })
        .collect();
    let (m, se) = crate::stats::mean_se(&values);
    let nu = model.nu_total();
    (nu * m, Some(nu * se))
}

fn eta_square(
    model: &dyn Model,
    inter: &dyn Interaction,
    t: f64,
    a: Arg<'_>,
    b: Option<Arg<'_>>,
    omega: &[f64],
    rng: &mut StreamRng,
) -> (f64, Option<f64>) {
    if !inter.has_jumps() {
        return (0.0, None);
    }
    if let Some(v) = inter.eta_square(t, a, b, omega) {
        return (v, None);
    }
    let d = model.dims().state;
    let (mut ea, mut eb) = (vec![0.0; d], vec![0.0; d]);
    let values: Vec<f64> = (0..MC_MARKS)
        .map(|_| {
            let mark = model.sample_mark(rng);
            inter.eta(t, a.site, a.source, a.x, &a.y, omega, mark, &mut ea);
            match &b {
                Some(b) => {
                    inter.eta(t, b.site, b.source, b.x, &b.y, omega, mark, &mut eb);
                    sq_dist(&ea, &eb)
                }
                None => sq_norm(&ea),
            }
        })
        .collect();
    let (m, se) = crate::stats::mean_se(&values);
    let nu = model.nu_total();
    (nu * m, Some(nu * se))
}

struct Local {
    f: Vec<f64>,
    g: Vec<f64>,
}

fn local(model: &dyn Model, t: f64, site: &Site, seg: &Segment<'_>, omega: &[f64]) -> Local {
    let dims = model.dims();
    let mut f = vec![0.0; dims.state];
    let mut g = vec![0.0; dims.state * dims.brownian];
    model.drift(t, site, seg, omega, &mut f);
    if dims.brownian > 0 {
        model.diffusion(t, site, seg, omega, &mut g);
    }
    Local { f, g }
}

/// `sum |theta|^2 + |beta|^2` at `a`, or of the differences `a - b`.
fn synaptic_square(model: &dyn Model, inter: &dyn Interaction, t: f64, a: &Arg<'_>, b: Option<&Arg<'_>>, omega: &[f64]) -> f64 {
    let dims = model.dims();
    let (d, nb) = (dims.state, dims.pop_brownian);
    let mut total = 0.0;
    let (mut u, mut v) = (vec![0.0; d], vec![0.0; d]);
    inter.theta(t, a.site, a.source, a.x, &a.y, omega, &mut u);
    total += match b {
        Some(b) => {
            inter.theta(t, b.site, b.source, b.x, &b.y, omega, &mut v);
            sq_dist(&u, &v)
        }
        None => sq_norm(&u),
    };
    if inter.has_diffusion() && nb > 0 {
        let (mut u, mut v) = (vec![0.0; d * nb], vec![0.0; d * nb]);
        inter.beta(t, a.site, a.source, a.x, &a.y, omega, &mut u);
        total += match b {
            Some(b) => {
                inter.beta(t, b.site, b.source, b.x, &b.y, omega, &mut v);
                sq_dist(&u, &v)
            }
            None => sq_norm(&u),
        };
    }
    total
}

/// Monotonicity: (H1), or its path-dependent form
/// `... <= L DI(y - ỹ)` when the local coefficients read the history;
/// (H3) for the interaction; and the same-cell forms (H1') and (H4') with the
/// model's cell tolerance.
pub fn check_monotonicity(model: &dyn Model, setup: &AuditSetup<'_>) -> Vec<ConditionReport> {
    let d = model.dims().state;
    let history = model.local_uses_history();
    let eps = model.cell_epsilon();
    let mut rng = StreamRng::seed_from_u64(setup.seed ^ 0x6d6f6e6f);
    let mut local_r = ConditionReport::new(if history { "C1" } else { "H1" });
    let mut cell_r = ConditionReport::new("H1'");
    let mut inter_r = ConditionReport::new("H3");
    let mut inter_cell_r = ConditionReport::new("H4'");
    for draw in draws(model, setup) {
        let rates = model.rates(&draw.omega);
        let (l, lb) = (rates.l.value(draw.t), rates.l_bar.value(draw.t));
        let om = &draw.omega;
        let (ya, yb) = (Segment::contiguous(&draw.seg, d), Segment::contiguous(&draw.seg_other, d));
        let (x, xo) = (ya.last(), yb.last());
        let dx2 = sq_dist(x, xo);
        let di_local = delay_integral(&ya, Some(&yb), setup.lambda).unwrap_or(f64::INFINITY);
        let sample = || draw.sample(d);

        // Same position, then two positions of one cell.
        for (other, report) in [(&draw.site, &mut local_r), (&draw.other, &mut cell_r)] {
            let a = local(model, draw.t, &draw.site, &ya, om);
            let b = local(model, draw.t, other, &yb, om);
            let dot: f64 = x.iter().zip(xo).zip(a.f.iter().zip(&b.f)).map(|((p, q), (u, v))| (p - q) * (u - v)).sum();
            let (jump, se) = local_jump_square(model, draw.t, (&draw.site, &ya), Some((other, &yb)), om, &mut rng);
            let lhs = 2.0 * dot + sq_dist(&a.g, &b.g) + jump;
            let base = if history { di_local } else { dx2 };
            let rhs = if std::ptr::eq(other, &draw.site) {
                l * base
            } else {
                l * (base + eps * (1.0 + sq_norm(x)))
            };
            report.record(lhs, rhs, sample);
            report.note_se(se);
        }

        if let Some(inter) = model.interaction() {
            let (sa, sb) = (Segment::contiguous(&draw.src, d), Segment::contiguous(&draw.src_other, d));
            let di = delay_integral(&sa, Some(&sb), setup.lambda).unwrap_or(f64::INFINITY);
            let a = Arg {
                site: &draw.site,
                source: &draw.source,
                x,
                y: sa,
            };
            for (other, other_source, report) in [
                (&draw.site, &draw.source, &mut inter_r),
                (&draw.other, &draw.other_source, &mut inter_cell_r),
            ] {
                let b = Arg {
                    site: other,
                    source: other_source,
                    x: xo,
                    y: sb,
                };
                let (jump, se) = eta_square(model, inter, draw.t, a, Some(b), om, &mut rng);
                let lhs = synaptic_square(model, inter, draw.t, &a, Some(&b), om) + jump;
                let mut rhs = lb * (dx2 + di);
                if !std::ptr::eq(other, &draw.site) {
                    let di0 = delay_integral(&sa, None, setup.lambda).unwrap_or(f64::INFINITY);
                    rhs += lb * eps * (1.0 + sq_norm(x) + di0);
                }
                report.record(lhs, rhs, sample);
                report.note_se(se);
            }
        }
    }
    let mut out = vec![local_r, cell_r];
    if model.interaction().is_some() {
        out.push(inter_r);
        out.push(inter_cell_r);
    }
    out
}

/// Growth: (H2), or `... <= K (1 + DI(y))` for history-dependent local
/// coefficients, and (H4) for the interaction.
pub fn check_growth(model: &dyn Model, setup: &AuditSetup<'_>) -> Vec<ConditionReport> {
    let d = model.dims().state;
    let history = model.local_uses_history();
    let mut rng = StreamRng::seed_from_u64(setup.seed ^ 0x67726f77);
    let mut local_r = ConditionReport::new(if history { "C2" } else { "H2" });
    let mut inter_r = ConditionReport::new("H4");
    for draw in draws(model, setup) {
        let rates = model.rates(&draw.omega);
        let (k, kb) = (rates.k.value(draw.t), rates.k_bar.value(draw.t));
        let om = &draw.omega;
        let y = Segment::contiguous(&draw.seg, d);
        let x = y.last();
        let sample = || draw.sample(d);
        let a = local(model, draw.t, &draw.site, &y, om);
        let dot: f64 = x.iter().zip(&a.f).map(|(p, u)| p * u).sum();
        let (jump, se) = local_jump_square(model, draw.t, (&draw.site, &y), None, om, &mut rng);
        let lhs = 2.0 * dot + sq_norm(&a.g) + jump;
        let rhs = if history {
            k * (1.0 + delay_integral(&y, None, setup.lambda).unwrap_or(f64::INFINITY))
        } else {
            k * (1.0 + sq_norm(x))
        };
        local_r.record(lhs, rhs, sample);
        local_r.note_se(se);

        if let Some(inter) = model.interaction() {
            let src = Segment::contiguous(&draw.src, d);
            let arg = Arg {
                site: &draw.site,
                source: &draw.source,
                x,
                y: src,
            };
            let (jump, se) = eta_square(model, inter, draw.t, arg, None, om, &mut rng);
            let lhs = synaptic_square(model, inter, draw.t, &arg, None, om) + jump;
            let di = delay_integral(&src, None, setup.lambda).unwrap_or(f64::INFINITY);
            inter_r.record(lhs, kb * (1.0 + sq_norm(x) + di), sample);
            inter_r.note_se(se);
        }
    }
    let mut out = vec![local_r];
    if model.interaction().is_some() {
        out.push(inter_r);
    }
    out
}

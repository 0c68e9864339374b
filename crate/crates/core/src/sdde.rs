//! Single-path Euler scheme for jump-diffusion delay equations.
//!
//! Coefficients are frozen at the left end of each grid step and read the
//! delay window ending there; all noise of the step is applied at its end.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{History, PathSegment, Segment, TimeGrid};
use crate::layout::Site;
use crate::model::Model;
use crate::noise::{compensated_jump_sum, fill_brownian, fill_jump_events, JumpEvent, NoiseStreamKey, StreamKind};

/// Default blow-up radius.
pub const DEFAULT_GUARD: f64 = 1e6;

/// Stream keys of one neuron: `W^r`, `N^r`, `B^{r,alpha}`, `N^{r,alpha}` and
/// its initial path share `(run_seed, particle, replica)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ParticleKeys {
    pub run_seed: u64,
    pub particle: u64,
    pub replica: u64,
}

impl ParticleKeys {
    pub fn new(run_seed: u64, particle: u64, replica: u64) -> Self {
        Self {
            run_seed,
            particle,
            replica,
        }
    }

    /// Keys of the neuron identified by `key` (its kind and population are ignored).
    pub fn from_key(key: &NoiseStreamKey) -> Self {
        Self::new(key.run_seed, key.particle, key.replica)
    }

    pub fn key(&self, kind: StreamKind, population: usize) -> NoiseStreamKey {
        NoiseStreamKey::new(self.run_seed, kind, self.particle, population as u64, self.replica)
    }

    pub fn initial_path(&self, model: &dyn Model, site: &Site, grid: &TimeGrid) -> PathSegment {
        let mut rng = self.key(StreamKind::Init, 0).rng(0);
        model.initial_path(site, grid, &mut rng)
    }
}

/// Scratch buffers for one particle update.
#[derive(Debug, Clone)]
pub(crate) struct LocalScratch {
    g: Vec<f64>,
    dw: Vec<f64>,
    buf: Vec<f64>,
    comp: Vec<f64>,
    pub(crate) events: Vec<JumpEvent>,
}

impl LocalScratch {
    pub(crate) fn new(model: &dyn Model) -> Self {
        let dims = model.dims();
        Self {
            g: vec![0.0; dims.state * dims.brownian],
            dw: vec![0.0; dims.brownian],
            buf: vec![0.0; dims.state],
            comp: vec![0.0; dims.state],
            events: Vec::new(),
        }
    }
}

/// `f dt + g dW + sum h - (int h dnu) dt` for forward step `k`, written to `inc`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn local_increment(
    model: &dyn Model,
    grid: &TimeGrid,
    k: usize,
    site: &Site,
    seg: &Segment<'_>,
    omega: &[f64],
    keys: &ParticleKeys,
    s: &mut LocalScratch,
    inc: &mut [f64],
) {
    let dims = model.dims();
    let (d, m) = (dims.state, dims.brownian);
    let t = grid.step_time(k);
    let dt = grid.dt();

    model.drift(t, site, seg, omega, inc);
    for v in inc.iter_mut() {
        *v *= dt;
    }
    if m > 0 {
        model.diffusion(t, site, seg, omega, &mut s.g);
        fill_brownian(&keys.key(StreamKind::LocalBrownian, 0), k as u64, dt, &mut s.dw);
        for i in 0..d {
            let row = &s.g[i * m..(i + 1) * m];
            inc[i] += row.iter().zip(&s.dw).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    if model.has_local_jumps() {
        fill_jump_events(
            &keys.key(StreamKind::LocalJumps, 0),
            k as u64,
            t,
            dt,
            model.nu_total(),
            |r| model.sample_mark(r),
            &mut s.events,
        );
        model.jump_compensator(t, site, seg, omega, &mut s.comp);
        s.buf.fill(0.0);
        compensated_jump_sum(
            &s.events,
            |mark, out| model.jump(t, site, seg, omega, mark, out),
            &s.comp,
            dt,
            &mut s.buf,
        );
        for (v, b) in inc.iter_mut().zip(&s.buf) {
            *v += b;
        }
    }
}

/// `x + inc`, refusing non-finite values and states beyond the guard radius.
pub(crate) fn commit(x: &[f64], inc: &[f64], out: &mut [f64], guard: f64, particle: usize, step: usize) -> Result<()> {
    let mut norm2 = 0.0;
    for ((o, a), b) in out.iter_mut().zip(x).zip(inc) {
        *o = a + b;
        norm2 += *o * *o;
    }
    let norm = norm2.sqrt();
    if !norm.is_finite() || norm > guard {
        return Err(Error::BlowUp {
            particle,
            step,
            norm,
        });
    }
    Ok(())
}

/// State of one path: its delay window and the number of steps taken.
#[derive(Debug, Clone)]
pub struct SddeState {
    history: History,
    step: usize,
    grid: TimeGrid,
}

impl SddeState {
    pub fn new(grid: TimeGrid, init: &PathSegment) -> Result<Self> {
        if init.len() != grid.window() {
            return Err(Error::Shape(format!(
                "initial path has {} slots, the grid window has {}",
                init.len(),
                grid.window()
            )));
        }
        Ok(Self {
            history: History::from_path(init),
            step: 0,
            grid,
        })
    }

    pub fn current(&self) -> &[f64] {
        self.history.current()
    }

    pub fn segment(&self) -> Segment<'_> {
        self.history.segment()
    }

    /// Forward steps taken so far.
    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn time(&self) -> f64 {
        self.grid.step_time(self.step)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }
}

/// Workspace for repeated [`euler_step`] calls on one thread.
#[derive(Debug, Clone)]
pub struct Stepper {
    scratch: LocalScratch,
    inc: Vec<f64>,
    next: Vec<f64>,
    guard: f64,
}

impl Stepper {
    pub fn new(model: &dyn Model, guard: f64) -> Self {
        let d = model.dims().state;
        Self {
            scratch: LocalScratch::new(model),
            inc: vec![0.0; d],
            next: vec![0.0; d],
            guard,
        }
    }
}

/// Advances `state` by one grid step.
pub fn euler_step(
    state: &mut SddeState,
    model: &dyn Model,
    site: &Site,
    omega: &[f64],
    keys: &ParticleKeys,
    stepper: &mut Stepper,
) -> Result<()> {
    let k = state.step;
    {
        let seg = state.history.segment();
        local_increment(model, &state.grid, k, site, &seg, omega, keys, &mut stepper.scratch, &mut stepper.inc);
        commit(seg.last(), &stepper.inc, &mut stepper.next, stepper.guard, keys.particle as usize, k)?;
    }
    state.history.push(&stepper.next);
    state.step += 1;
    Ok(())
}

/// Values of one path at every grid time of `[-tau, T]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub dim: usize,
    pub values: Vec<f64>,
}

impl Trajectory {
    pub fn at(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }
}

/// Runs one path and calls `visit(grid_index, value)` for every grid time.
pub fn run_path<F>(
    model: &dyn Model,
    grid: &TimeGrid,
    site: &Site,
    omega: &[f64],
    keys: &ParticleKeys,
    guard: f64,
    stepper: &mut Stepper,
    mut visit: F,
) -> Result<()>
where
    F: FnMut(usize, &[f64]),
{
    let init = keys.initial_path(model, site, grid);
    let mut state = SddeState::new(*grid, &init)?;
    for j in 0..grid.window() {
        visit(j, init.view().get(j));
    }
    stepper.guard = guard;
    for k in 0..grid.forward_steps() {
        euler_step(&mut state, model, site, omega, keys, stepper)?;
        visit(grid.n() + k + 1, state.current());
    }
    Ok(())
}

/// Full trajectory of the path keyed by `key`.
pub fn simulate_sdde(
    model: &dyn Model,
    grid: &TimeGrid,
    site: &Site,
    omega: &[f64],
    key: &NoiseStreamKey,
    guard: f64,
) -> Result<Trajectory> {
    let d = model.dims().state;
    let mut values = vec![0.0; grid.len() * d];
    let mut stepper = Stepper::new(model, guard);
    run_path(model, grid, site, omega, &ParticleKeys::from_key(key), guard, &mut stepper, |i, x| {
        values[i * d..(i + 1) * d].copy_from_slice(x)
    })?;
    Ok(Trajectory {
        grid: *grid,
        dim: d,
        values,
    })
}

/// Per-grid-time power sums of an ensemble, enough for means, variances,
/// second moments and their standard errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentTrack {
    pub grid: TimeGrid,
    pub dim: usize,
    pub count: usize,
    sum: Vec<f64>,
    sum2: Vec<f64>,
    sum3: Vec<f64>,
    sum4: Vec<f64>,
    norm2: Vec<f64>,
    norm4: Vec<f64>,
}

impl MomentTrack {
    pub fn new(grid: TimeGrid, dim: usize) -> Self {
        let n = grid.len();
        Self {
            grid,
            dim,
            count: 0,
            sum: vec![0.0; n * dim],
            sum2: vec![0.0; n * dim],
            sum3: vec![0.0; n * dim],
            sum4: vec![0.0; n * dim],
            norm2: vec![0.0; n],
            norm4: vec![0.0; n],
        }
    }

    pub fn add(&mut self, i: usize, x: &[f64]) {
        let mut q = 0.0;
        for (c, &v) in x.iter().enumerate() {
            let j = i * self.dim + c;
            let v2 = v * v;
            self.sum[j] += v;
            self.sum2[j] += v2;
            self.sum3[j] += v2 * v;
            self.sum4[j] += v2 * v2;
            q += v2;
        }
        self.norm2[i] += q;
        self.norm4[i] += q * q;
    }

    /// Adds `other`'s sums; callers merge in a fixed order for reproducibility.
    pub fn merge(&mut self, other: &MomentTrack) {
        self.count += other.count;
        for (a, b) in [
            (&mut self.sum, &other.sum),
            (&mut self.sum2, &other.sum2),
            (&mut self.sum3, &other.sum3),
            (&mut self.sum4, &other.sum4),
            (&mut self.norm2, &other.norm2),
            (&mut self.norm4, &other.norm4),
        ] {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    fn n(&self) -> f64 {
        self.count as f64
    }

    pub fn mean(&self, i: usize, c: usize) -> f64 {
        self.sum[i * self.dim + c] / self.n()
    }

    pub fn mean_se(&self, i: usize, c: usize) -> f64 {
        (self.variance(i, c) / self.n()).sqrt()
    }

    /// Unbiased sample variance of component `c`.
    pub fn variance(&self, i: usize, c: usize) -> f64 {
        let n = self.n();
        let j = i * self.dim + c;
        let m = self.sum[j] / n;
        ((self.sum2[j] - n * m * m) / (n - 1.0)).max(0.0)
    }

    /// Standard error of the sample variance of component `c`, from the
    /// fourth central moment.
    pub fn variance_se(&self, i: usize, c: usize) -> f64 {
        let n = self.n();
        let j = i * self.dim + c;
        let (m1, m2, m3, m4) = (
            self.sum[j] / n,
            self.sum2[j] / n,
            self.sum3[j] / n,
            self.sum4[j] / n,
        );
        let var = m2 - m1 * m1;
        let mu4 = m4 - 4.0 * m1 * m3 + 6.0 * m1 * m1 * m2 - 3.0 * m1.powi(4);
        ((mu4 - var * var).max(0.0) / n).sqrt()
    }

    /// `E|X_t|^2` at grid index `i`.
    pub fn second_moment(&self, i: usize) -> f64 {
        self.norm2[i] / self.n()
    }

    pub fn second_moment_se(&self, i: usize) -> f64 {
        let n = self.n();
        let m = self.norm2[i] / n;
        let var = (self.norm4[i] / n - m * m).max(0.0) * n / (n - 1.0);
        (var / n).sqrt()
    }
}

/// Paths per work unit of [`sdde_ensemble`]; fixed so results do not depend
/// on the thread count.
const CHUNK: usize = 256;

/// Moments of `paths` independent paths; path `p` uses replica index `p`.
pub fn sdde_ensemble(
    model: &dyn Model,
    grid: &TimeGrid,
    site: &Site,
    omega: &[f64],
    run_seed: u64,
    paths: usize,
    guard: f64,
) -> Result<MomentTrack> {
    let d = model.dims().state;
    let chunks: Vec<Result<MomentTrack>> = (0..paths.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut track = MomentTrack::new(*grid, d);
            let mut stepper = Stepper::new(model, guard);
            for p in c * CHUNK..((c + 1) * CHUNK).min(paths) {
                let keys = ParticleKeys::new(run_seed, 0, p as u64);
                run_path(model, grid, site, omega, &keys, guard, &mut stepper, |i, x| track.add(i, x))?;
                track.count += 1;
            }
            Ok(track)
        })
        .collect();
    let mut total = MomentTrack::new(*grid, d);
    for c in chunks {
        total.merge(&c?);
    }
    Ok(total)
}

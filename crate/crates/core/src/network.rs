//! Finite network of interacting neurons, and the ensemble stepper shared with
//! the mean-field engine.
//!
//! Each step is Jacobi-style: every particle reads the frozen delay windows of
//! the previous grid time, new values go to a buffer and are committed
//! together, so the result does not depend on the update order or on the
//! number of threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{PathSegment, Segment, TimeGrid};
use crate::layout::{Site, SpatialLayout};
use crate::model::{Interaction, Model, Separable};
use crate::noise::{fill_brownian, fill_jump_events, JumpEvent, StreamKind};
use crate::sdde::{commit, local_increment, LocalScratch, ParticleKeys, DEFAULT_GUARD};

/// Full trajectories of an ensemble, particle-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStore {
    grid: TimeGrid,
    dim: usize,
    particles: usize,
    data: Vec<f64>,
}

impl TrajectoryStore {
    pub fn new(grid: TimeGrid, dim: usize, inits: &[PathSegment]) -> Result<Self> {
        let row = grid.len() * dim;
        let mut data = vec![0.0; row * inits.len()];
        for (p, init) in inits.iter().enumerate() {
            if init.len() != grid.window() || init.dim() != dim {
                return Err(Error::Shape(format!(
                    "initial path {p} is {}x{}, expected {}x{dim}",
                    init.len(),
                    init.dim(),
                    grid.window()
                )));
            }
            data[p * row..p * row + init.values().len()].copy_from_slice(init.values());
        }
        Ok(Self {
            grid,
            dim,
            particles: inits.len(),
            data,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn particles(&self) -> usize {
        self.particles
    }

    fn row_len(&self) -> usize {
        self.grid.len() * self.dim
    }

    /// Value of particle `p` at grid index `i`.
    pub fn value(&self, p: usize, i: usize) -> &[f64] {
        let start = p * self.row_len() + i * self.dim;
        &self.data[start..start + self.dim]
    }

    /// Whole trajectory of particle `p`.
    pub fn row(&self, p: usize) -> &[f64] {
        &self.data[p * self.row_len()..(p + 1) * self.row_len()]
    }

    /// Delay window of particle `p` at the start of forward step `k`.
    pub fn segment(&self, p: usize, k: usize) -> Segment<'_> {
        let start = p * self.row_len() + k * self.dim;
        Segment::contiguous(&self.data[start..start + self.grid.window() * self.dim], self.dim)
    }

    fn write(&mut self, i: usize, next: &[f64]) {
        let (d, row) = (self.dim, self.row_len());
        for p in 0..self.particles {
            self.data[p * row + i * d..p * row + (i + 1) * d].copy_from_slice(&next[p * d..(p + 1) * d]);
        }
    }
}

/// Weighted presynaptic ensemble: the network itself (weights `1/S_alpha`)
/// or mean-field copies (weights `R(cell) / M_cell`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SourceSet {
    pub sites: Vec<Site>,
    pub weights: Vec<f64>,
    populations: usize,
    by_population: Vec<Vec<usize>>,
    by_cell: Vec<Vec<usize>>,
    cells_of_population: Vec<Vec<usize>>,
}

impl SourceSet {
    fn build(populations: usize, cell_population: &[usize], sites: Vec<Site>, weights: Vec<f64>) -> Self {
        let mut by_population = vec![Vec::new(); populations];
        let mut by_cell = vec![Vec::new(); cell_population.len()];
        for (i, s) in sites.iter().enumerate() {
            by_population[s.population].push(i);
            by_cell[s.cell].push(i);
        }
        let mut cells_of_population = vec![Vec::new(); populations];
        for (c, &a) in cell_population.iter().enumerate() {
            cells_of_population[a].push(c);
        }
        Self {
            sites,
            weights,
            populations,
            by_population,
            by_cell,
            cells_of_population,
        }
    }

    pub fn network(layout: &SpatialLayout) -> Self {
        let sites = layout.sites().to_vec();
        let weights = sites.iter().map(|s| 1.0 / layout.weights()[s.population]).collect();
        let cell_population: Vec<_> = layout.cells().iter().map(|c| c.population).collect();
        Self::build(layout.populations(), &cell_population, sites, weights)
    }

    /// `copies` copies per population, split over cells in proportion to
    /// their mass (largest remainder) and placed at cell midpoints.
    pub fn copies(layout: &SpatialLayout, copies: usize) -> Result<Self> {
        let mut sites = Vec::new();
        let mut weights = Vec::new();
        for alpha in 0..layout.populations() {
            let cells: Vec<_> = layout.cells_of(alpha).collect();
            let quotas: Vec<f64> = cells.iter().map(|c| c.mass * copies as f64).collect();
            let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
            let mut order: Vec<usize> = (0..cells.len()).collect();
            order.sort_by(|&a, &b| {
                let (ra, rb) = (quotas[a] - quotas[a].floor(), quotas[b] - quotas[b].floor());
                rb.total_cmp(&ra).then(a.cmp(&b))
            });
            let assigned: usize = counts.iter().sum();
            for &i in order.iter().take(copies.saturating_sub(assigned)) {
                counts[i] += 1;
            }
            for (cell, &count) in cells.iter().zip(&counts) {
                if cell.mass > 0.0 && count < 2 {
                    return Err(Error::config(
                        "run.copies",
                        format!(
                            "cell {} has mass {} but only {count} copies; at least 2 are needed",
                            cell.id, cell.mass
                        ),
                    ));
                }
                for _ in 0..count {
                    sites.push(cell.representative(sites.len()));
                    weights.push(cell.mass / count as f64);
                }
            }
        }
        let cell_population: Vec<_> = layout.cells().iter().map(|c| c.population).collect();
        Ok(Self::build(layout.populations(), &cell_population, sites, weights))
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn populations(&self) -> usize {
        self.populations
    }

    pub fn in_population(&self, alpha: usize) -> &[usize] {
        &self.by_population[alpha]
    }

    pub fn in_cell(&self, cell: usize) -> &[usize] {
        &self.by_cell[cell]
    }
}

/// Per-cell aggregates `W_c = sum w` and `F_c = sum w phi(y)` at one step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellAggregates {
    pub feature_len: usize,
    pub weight: Vec<f64>,
    pub features: Vec<f64>,
}

impl CellAggregates {
    /// Aggregates over `sources` at forward step `k`, summed in index order.
    pub fn compute(
        sep: &dyn Separable,
        sources: &SourceSet,
        store: &TrajectoryStore,
        t: f64,
        k: usize,
        omega: &[f64],
    ) -> Self {
        let fl = sep.feature_len();
        let cells = sources.by_cell.len();
        let mut weight = vec![0.0; cells];
        let mut features = vec![0.0; cells * fl];
        let mut phi = vec![0.0; fl];
        for c in 0..cells {
            for &s in &sources.by_cell[c] {
                let w = sources.weights[s];
                sep.features(t, &sources.sites[s], &store.segment(s, k), omega, &mut phi);
                weight[c] += w;
                for (f, p) in features[c * fl..(c + 1) * fl].iter_mut().zip(&phi) {
                    *f += w * p;
                }
            }
        }
        Self {
            feature_len: fl,
            weight,
            features,
        }
    }
}

/// How presynaptic sums are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    /// Per-cell aggregates when the interaction is separable, direct sums otherwise.
    #[default]
    Auto,
    /// `O(N)` pairwise sums per particle.
    Direct,
    /// `O(1)` per particle from per-cell aggregates; errors on non-separable models.
    Fast,
}

impl Reduction {
    /// Resolves to the separable view when the aggregated path is used.
    pub fn resolve<'a>(&self, model: &'a dyn Model) -> Result<Option<&'a dyn Separable>> {
        let sep = model.interaction().and_then(|i| i.separable());
        match self {
            Reduction::Direct => Ok(None),
            Reduction::Auto => Ok(sep),
            Reduction::Fast => match model.interaction() {
                None => Ok(None),
                Some(_) => sep.map(Some).ok_or_else(|| Error::NotSeparable(model.id().to_string())),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunOptions {
    pub guard: f64,
    pub reduction: Reduction,
    /// Evaluate both reductions and record their largest relative deviation.
    pub audit: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            guard: DEFAULT_GUARD,
            reduction: Reduction::Auto,
            audit: false,
        }
    }
}

/// The presynaptic field seen by receivers at one step.
#[derive(Clone, Copy)]
pub struct Field<'a> {
    pub inter: &'a dyn Interaction,
    pub sources: &'a SourceSet,
    pub store: &'a TrajectoryStore,
    /// Present when sums are taken from aggregates.
    pub fast: Option<(&'a dyn Separable, &'a CellAggregates)>,
    /// Also evaluate direct sums and measure the deviation.
    pub audit: bool,
    /// Index of the receiver among the sources, when it must be left out.
    pub exclude: Option<usize>,
}

#[derive(Clone, Copy)]
enum Coef {
    Theta,
    Beta,
    Eta(f64),
    Compensator,
}

/// Interaction sums for one receiver at one step: drift summed over
/// populations, and per population the diffusion matrix and compensator.
#[derive(Debug, Clone)]
pub struct InteractionTerms {
    pub drift: Vec<f64>,
    pub diffusion: Vec<Vec<f64>>,
    pub compensator: Vec<Vec<f64>>,
}

/// Scratch buffers for the interaction part of one update.
#[derive(Debug, Clone)]
pub struct InteractionScratch {
    pub terms: InteractionTerms,
    sum: Vec<f64>,
    direct: Vec<f64>,
    scale: Vec<f64>,
    tmp: Vec<f64>,
    phi: Vec<f64>,
    db: Vec<f64>,
    jump: Vec<f64>,
    events: Vec<JumpEvent>,
}

impl InteractionScratch {
    pub fn new(model: &dyn Model, populations: usize) -> Self {
        let dims = model.dims();
        let (d, nb) = (dims.state, dims.pop_brownian);
        let width = d * nb.max(1);
        let fl = model
            .interaction()
            .and_then(|i| i.separable())
            .map_or(0, |s| s.feature_len());
        Self {
            terms: InteractionTerms {
                drift: vec![0.0; d],
                diffusion: vec![vec![0.0; d * nb]; populations],
                compensator: vec![vec![0.0; d]; populations],
            },
            sum: vec![0.0; width],
            direct: vec![0.0; width],
            scale: vec![0.0; width],
            tmp: vec![0.0; width],
            phi: vec![0.0; fl],
            db: vec![0.0; nb],
            jump: vec![0.0; d],
            events: Vec::new(),
        }
    }
}

struct Receiver<'a> {
    t: f64,
    k: usize,
    site: &'a Site,
    x: &'a [f64],
    omega: &'a [f64],
}

impl<'a> Field<'a> {
    fn eval(&self, coef: Coef, r: &Receiver<'_>, source: usize, y: &Segment<'_>, out: &mut [f64]) {
        let s = &self.sources.sites[source];
        match coef {
            Coef::Theta => self.inter.theta(r.t, r.site, s, r.x, y, r.omega, out),
            Coef::Beta => self.inter.beta(r.t, r.site, s, r.x, y, r.omega, out),
            Coef::Eta(m) => self.inter.eta(r.t, r.site, s, r.x, y, r.omega, m, out),
            Coef::Compensator => self.inter.eta_compensator(r.t, r.site, s, r.x, y, r.omega, out),
        }
    }

    fn direct_sum(&self, coef: Coef, r: &Receiver<'_>, alpha: usize, out: &mut [f64], scale: &mut [f64], tmp: &mut [f64]) {
        out.fill(0.0);
        scale.fill(0.0);
        for &s in self.sources.in_population(alpha) {
            if self.exclude == Some(s) {
                continue;
            }
            let w = self.sources.weights[s];
            self.eval(coef, r, s, &self.store.segment(s, r.k), tmp);
            for ((o, sc), v) in out.iter_mut().zip(scale.iter_mut()).zip(tmp.iter()) {
                *o += w * v;
                *sc += (w * v).abs();
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn fast_sum(
        &self,
        sep: &dyn Separable,
        agg: &CellAggregates,
        coef: Coef,
        r: &Receiver<'_>,
        alpha: usize,
        out: &mut [f64],
        tmp: &mut [f64],
        phi: &mut [f64],
    ) {
        out.fill(0.0);
        let fl = agg.feature_len;
        let own = self.exclude.map(|s| (s, &self.sources.sites[s]));
        for &c in &self.sources.cells_of_population[alpha] {
            if self.sources.by_cell[c].is_empty() {
                continue;
            }
            let mut w = agg.weight[c];
            let f = &agg.features[c * fl..(c + 1) * fl];
            let feats: &[f64] = match own {
                Some((s, site)) if site.cell == c => {
                    let ws = self.sources.weights[s];
                    sep.features(r.t, site, &self.store.segment(s, r.k), r.omega, phi);
                    for (p, fc) in phi.iter_mut().zip(f) {
                        *p = fc - ws * *p;
                    }
                    w -= ws;
                    phi
                }
                _ => f,
            };
            match coef {
                Coef::Theta => sep.theta_sum(r.t, r.site, c, r.x, w, feats, r.omega, tmp),
                Coef::Beta => sep.beta_sum(r.t, r.site, c, r.x, w, feats, r.omega, tmp),
                Coef::Eta(m) => sep.eta_sum(r.t, r.site, c, r.x, w, feats, r.omega, m, tmp),
                Coef::Compensator => sep.eta_compensator_sum(r.t, r.site, c, r.x, w, feats, r.omega, tmp),
            }
            for (o, v) in out.iter_mut().zip(tmp.iter()) {
                *o += v;
            }
        }
    }

    /// Writes `sum_{sources in alpha} w * coef` to `s.sum` and returns the
    /// audit deviation (0 when not auditing).
    fn population_sum(&self, coef: Coef, r: &Receiver<'_>, alpha: usize, width: usize, s: &mut InteractionScratch) -> f64 {
        let sum = &mut s.sum[..width];
        let tmp = &mut s.tmp[..width];
        match self.fast {
            Some((sep, agg)) => {
                self.fast_sum(sep, agg, coef, r, alpha, sum, tmp, &mut s.phi);
                if !self.audit {
                    return 0.0;
                }
                let (direct, scale) = (&mut s.direct[..width], &mut s.scale[..width]);
                self.direct_sum(coef, r, alpha, direct, scale, tmp);
                sum.iter()
                    .zip(direct.iter())
                    .zip(scale.iter())
                    .map(|((a, b), sc)| {
                        let diff = (a - b).abs();
                        if *sc > 0.0 {
                            diff / sc
                        } else {
                            diff
                        }
                    })
                    .fold(0.0, f64::max)
            }
            None => {
                let scale = &mut s.scale[..width];
                self.direct_sum(coef, r, alpha, sum, scale, tmp);
                0.0
            }
        }
    }
}

/// Interaction drift, diffusion and compensator for receiver `site` with
/// current state `x` at forward step `k`; returns the audit deviation.
pub fn interaction_terms(
    field: &Field<'_>,
    grid: &TimeGrid,
    k: usize,
    site: &Site,
    x: &[f64],
    omega: &[f64],
    s: &mut InteractionScratch,
) -> f64 {
    let r = Receiver {
        t: grid.step_time(k),
        k,
        site,
        x,
        omega,
    };
    let d = x.len();
    let mut dev = 0.0f64;
    s.terms.drift.fill(0.0);
    for alpha in 0..field.sources.populations() {
        dev = dev.max(field.population_sum(Coef::Theta, &r, alpha, d, s));
        for (a, b) in s.terms.drift.iter_mut().zip(&s.sum[..d]) {
            *a += b;
        }
        if field.inter.has_diffusion() {
            let width = s.terms.diffusion[alpha].len();
            dev = dev.max(field.population_sum(Coef::Beta, &r, alpha, width, s));
            s.terms.diffusion[alpha].copy_from_slice(&s.sum[..width]);
        }
        if field.inter.has_jumps() {
            dev = dev.max(field.population_sum(Coef::Compensator, &r, alpha, d, s));
            s.terms.compensator[alpha].copy_from_slice(&s.sum[..d]);
        }
    }
    dev
}

/// Adds `theta dt + sum_alpha [beta dB^alpha + sum eta - comp dt]` to `inc`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn interaction_increment(
    field: &Field<'_>,
    model: &dyn Model,
    grid: &TimeGrid,
    k: usize,
    site: &Site,
    x: &[f64],
    omega: &[f64],
    keys: &ParticleKeys,
    s: &mut InteractionScratch,
    inc: &mut [f64],
) -> f64 {
    let dt = grid.dt();
    let t = grid.step_time(k);
    let d = x.len();
    let nb = model.dims().pop_brownian;
    let mut dev = interaction_terms(field, grid, k, site, x, omega, s);
    for (v, th) in inc.iter_mut().zip(&s.terms.drift) {
        *v += th * dt;
    }
    for alpha in 0..field.sources.populations() {
        if field.inter.has_diffusion() && nb > 0 {
            fill_brownian(&keys.key(StreamKind::PopulationBrownian, alpha), k as u64, dt, &mut s.db);
            let b = &s.terms.diffusion[alpha];
            for i in 0..d {
                inc[i] += b[i * nb..(i + 1) * nb].iter().zip(&s.db).map(|(a, w)| a * w).sum::<f64>();
            }
        }
        if field.inter.has_jumps() {
            let mut events = std::mem::take(&mut s.events);
            fill_jump_events(
                &keys.key(StreamKind::PopulationJumps, alpha),
                k as u64,
                t,
                dt,
                model.nu_total(),
                |rng| model.sample_mark(rng),
                &mut events,
            );
            let r = Receiver {
                t,
                k,
                site,
                x,
                omega,
            };
            s.jump.fill(0.0);
            for ev in &events {
                dev = dev.max(field.population_sum(Coef::Eta(ev.mark), &r, alpha, d, s));
                for (j, v) in s.jump.iter_mut().zip(&s.sum[..d]) {
                    *j += v;
                }
            }
            for (j, c) in s.jump.iter_mut().zip(&s.terms.compensator[alpha]) {
                *j -= c * dt;
            }
            for (v, j) in inc.iter_mut().zip(&s.jump) {
                *v += j;
            }
            s.events = events;
        }
    }
    dev
}

/// Where an ensemble takes its interaction from.
#[derive(Clone, Copy)]
pub enum Coupling<'a> {
    /// No interaction.
    None,
    /// Receivers interact among themselves; they are also the sources.
    Itself { sources: &'a SourceSet, exclude_self: bool },
    /// Receivers read a fixed, fully simulated source ensemble.
    External {
        sources: &'a SourceSet,
        store: &'a TrajectoryStore,
        /// Precomputed aggregates per forward step (fast path).
        law: Option<&'a [CellAggregates]>,
    },
}

/// Result of an ensemble run.
#[derive(Debug, Clone)]
pub struct EnsembleRun {
    pub store: TrajectoryStore,
    pub keys: Vec<ParticleKeys>,
    /// Largest relative deviation between aggregated and direct sums, when audited.
    pub audit_deviation: Option<f64>,
}

struct Scratch {
    local: LocalScratch,
    inter: InteractionScratch,
    inc: Vec<f64>,
}

/// Advances `receivers` (with keys `keys`) over the whole grid.
pub fn run_ensemble(
    model: &dyn Model,
    grid: &TimeGrid,
    omega: &[f64],
    receivers: &[Site],
    keys: &[ParticleKeys],
    coupling: Coupling<'_>,
    opts: &RunOptions,
) -> Result<EnsembleRun> {
    if receivers.len() != keys.len() {
        return Err(Error::Shape("one key per receiver is required".into()));
    }
    let d = model.dims().state;
    let inits: Vec<PathSegment> = receivers
        .iter()
        .zip(keys)
        .map(|(site, key)| key.initial_path(model, site, grid))
        .collect();
    let mut store = TrajectoryStore::new(*grid, d, &inits)?;
    let inter = model.interaction();
    let sep = match (inter, coupling) {
        (Some(_), Coupling::Itself { .. }) | (Some(_), Coupling::External { law: None, .. }) => {
            opts.reduction.resolve(model)?
        }
        _ => None,
    };
    let populations = match coupling {
        Coupling::Itself { sources, .. } | Coupling::External { sources, .. } => sources.populations(),
        Coupling::None => 0,
    };
    let mut next = vec![0.0; receivers.len() * d];
    let mut audit = 0.0f64;
    for k in 0..grid.forward_steps() {
        let t = grid.step_time(k);
        let own_agg;
        let (sources, field_store, agg, exclude_self) = match coupling {
            Coupling::None => (None, &store, None, false),
            Coupling::Itself { sources, exclude_self } => {
                own_agg = sep.map(|s| CellAggregates::compute(s, sources, &store, t, k, omega));
                (Some(sources), &store, own_agg.as_ref(), exclude_self)
            }
            Coupling::External { sources, store: ext, law } => {
                own_agg = match law {
                    Some(_) => None,
                    None => sep.map(|s| CellAggregates::compute(s, sources, ext, t, k, omega)),
                };
                let agg = law.map(|l| &l[k]).or(own_agg.as_ref());
                (Some(sources), ext, agg, false)
            }
        };
        let field_sep = match coupling {
            Coupling::External { law: Some(_), .. } => inter.and_then(|i| i.separable()),
            _ => sep,
        };
        let store_ref = &store;
        let results: Vec<Result<f64>> = next
            .par_chunks_mut(d)
            .enumerate()
            .map_init(
                || Scratch {
                    local: LocalScratch::new(model),
                    inter: InteractionScratch::new(model, populations),
                    inc: vec![0.0; d],
                },
                |sc, (p, out)| {
                    let seg = store_ref.segment(p, k);
                    let site = &receivers[p];
                    local_increment(model, grid, k, site, &seg, omega, &keys[p], &mut sc.local, &mut sc.inc);
                    let mut dev = 0.0;
                    if let (Some(inter), Some(sources)) = (inter, sources) {
                        let field = Field {
                            inter,
                            sources,
                            store: field_store,
                            fast: field_sep.zip(agg),
                            audit: opts.audit,
                            exclude: if exclude_self { Some(p) } else { None },
                        };
                        dev = interaction_increment(
                            &field,
                            model,
                            grid,
                            k,
                            site,
                            seg.last(),
                            omega,
                            &keys[p],
                            &mut sc.inter,
                            &mut sc.inc,
                        );
                    }
                    commit(seg.last(), &sc.inc, out, opts.guard, p, k)?;
                    Ok(dev)
                },
            )
            .collect();
        for r in results {
            audit = audit.max(r?);
        }
        store.write(grid.n() + k + 1, &next);
    }
    Ok(EnsembleRun {
        store,
        keys: keys.to_vec(),
        audit_deviation: if opts.audit { Some(audit) } else { None },
    })
}

/// Simulates the network on `layout`; particle `r` uses keys `(run_seed, r, replica)`.
pub fn simulate_network(
    model: &dyn Model,
    layout: &SpatialLayout,
    grid: &TimeGrid,
    omega: &[f64],
    run_seed: u64,
    replica: u64,
    opts: &RunOptions,
) -> Result<EnsembleRun> {
    let sources = SourceSet::network(layout);
    let keys: Vec<_> = (0..layout.len())
        .map(|r| ParticleKeys::new(run_seed, r as u64, replica))
        .collect();
    let coupling = if model.interaction().is_some() {
        Coupling::Itself {
            sources: &sources,
            exclude_self: layout.exclude_self(),
        }
    } else {
        Coupling::None
    };
    run_ensemble(model, grid, omega, layout.sites(), &keys, coupling, opts)
}

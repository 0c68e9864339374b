//! Particle approximation of the McKean–Vlasov limit.
//!
//! The law entering the interaction is represented by `M` copies per
//! population, placed at cell midpoints with weights `R(cell) / M_cell`, which
//! interact through their own empirical law. Representatives `X̄^r` are then
//! driven by that fixed copy ensemble, without feeding back into it, and by
//! the noise keys of network particle `r`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::disorder::Rates;
use crate::grid::{Segment, TimeGrid};
use crate::layout::{Site, SpatialLayout};
use crate::model::Model;
use crate::network::{run_ensemble, CellAggregates, Coupling, EnsembleRun, RunOptions, SourceSet, TrajectoryStore};
use crate::noise::{derive_seed, StreamKind};
use crate::sdde::ParticleKeys;

/// The simulated copy ensemble of one disorder draw.
#[derive(Debug, Clone)]
pub struct CopyEnsemble {
    pub sources: SourceSet,
    pub run: EnsembleRun,
    /// Per-step cell aggregates, present for separable interactions.
    pub law: Option<Vec<CellAggregates>>,
}

impl CopyEnsemble {
    pub fn store(&self) -> &TrajectoryStore {
        &self.run.store
    }
}

/// Seed of the copy ensemble belonging to `run_seed`.
pub fn copy_seed(run_seed: u64) -> u64 {
    derive_seed(run_seed, StreamKind::Copy, 0)
}

/// Simulates `copies` copies per population; copy `i` uses keys
/// `(copy_seed(run_seed), i, 0)`.
pub fn simulate_copies(
    model: &dyn Model,
    layout: &SpatialLayout,
    grid: &TimeGrid,
    omega: &[f64],
    copies: usize,
    run_seed: u64,
    opts: &RunOptions,
) -> Result<CopyEnsemble> {
    let sources = SourceSet::copies(layout, copies)?;
    let seed = copy_seed(run_seed);
    let keys: Vec<_> = (0..sources.len()).map(|i| ParticleKeys::new(seed, i as u64, 0)).collect();
    let coupling = if model.interaction().is_some() {
        Coupling::Itself {
            sources: &sources,
            exclude_self: false,
        }
    } else {
        Coupling::None
    };
    let run = run_ensemble(model, grid, omega, &sources.sites, &keys, coupling, opts)?;
    let law = opts.reduction.resolve(model)?.map(|sep| (0..grid.forward_steps())
                .map(|k| CellAggregates::compute(sep, &sources, &run.store, grid.step_time(k), k, omega))
                .collect());
    Ok(CopyEnsemble { sources, run, law })
}

/// Representatives at `sites` with keys `keys`, driven by `copies`.
pub fn simulate_representatives(
    model: &dyn Model,
    grid: &TimeGrid,
    omega: &[f64],
    copies: &CopyEnsemble,
    sites: &[Site],
    keys: &[ParticleKeys],
    opts: &RunOptions,
) -> Result<EnsembleRun> {
    let coupling = if model.interaction().is_some() {
        Coupling::External {
            sources: &copies.sources,
            store: &copies.run.store,
            law: copies.law.as_deref(),
        }
    } else {
        Coupling::None
    };
    run_ensemble(model, grid, omega, sites, keys, coupling, opts)
}

#[derive(Debug, Clone)]
pub struct MeanFieldRun {
    pub copies: CopyEnsemble,
    /// `X̄^r` for every `r` in the layout, keyed like the network run.
    pub representatives: EnsembleRun,
}

/// Copies and representatives for every position of `layout`; representative
/// `r` uses keys `(run_seed, r, replica)`, the keys of network particle `r`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_mean_field(
    model: &dyn Model,
    layout: &SpatialLayout,
    grid: &TimeGrid,
    copies: usize,
    omega: &[f64],
    run_seed: u64,
    replica: u64,
    opts: &RunOptions,
) -> Result<MeanFieldRun> {
    let copies = simulate_copies(model, layout, grid, omega, copies, run_seed, opts)?;
    let keys: Vec<_> = (0..layout.len())
        .map(|r| ParticleKeys::new(run_seed, r as u64, replica))
        .collect();
    let representatives = simulate_representatives(model, grid, omega, &copies, layout.sites(), &keys, opts)?;
    Ok(MeanFieldRun {
        copies,
        representatives,
    })
}

/// `sum_{cells of alpha} R(cell) * mean over the cell's copies of
/// functional(copy site, copy window)` at forward step `k`.
pub fn empirical_expectation<F>(
    sources: &SourceSet,
    store: &TrajectoryStore,
    k: usize,
    alpha: usize,
    mut functional: F,
) -> f64
where
    F: FnMut(&Site, &Segment<'_>) -> f64,
{
    sources
        .in_population(alpha)
        .iter()
        .map(|&s| sources.weights[s] * functional(&sources.sites[s], &store.segment(s, k)))
        .sum()
}

fn check_nonneg(name: &str, v: f64) -> Result<()> {
    if !(v >= 0.0) || !v.is_finite() {
        return Err(Error::Domain(format!("{name} must be finite and >= 0, got {v}")));
    }
    Ok(())
}

/// `C_1(t) = (sup E|z|^2 + 1) exp(int_0^t (K + 3 P K̄ + P) ds)`.
pub fn moment_bound_c1(t: f64, populations: usize, init_sup_second_moment: f64, rates: &Rates) -> Result<f64> {
    check_nonneg("t", t)?;
    check_nonneg("initial second moment", init_sup_second_moment)?;
    let p = populations as f64;
    let integral = rates.k.integral(t) + 3.0 * p * rates.k_bar.integral(t) + p * t;
    Ok((init_sup_second_moment + 1.0) * integral.exp())
}

/// `C_2(t) = exp(int_0^t (L + P L̄ + P) ds) (1 + 3 C_1(t))`.
pub fn continuity_bound_c2(t: f64, populations: usize, rates: &Rates, c1: f64) -> Result<f64> {
    check_nonneg("t", t)?;
    check_nonneg("C_1", c1)?;
    let p = populations as f64;
    let integral = rates.l.integral(t) + p * rates.l_bar.integral(t) + p * t;
    Ok(integral.exp() * (1.0 + 3.0 * c1))
}

/// One row of the bound audit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRow {
    pub t: f64,
    /// Empirical `E|X̄_t|^2` over the copies.
    pub second_moment: f64,
    pub se: f64,
    /// `sup_{s <= t}` of the empirical second moment, and the SE at the argmax.
    pub running_sup: f64,
    pub running_sup_se: f64,
    pub c1: f64,
    /// `C_2(t) * epsilon`.
    pub c2_eps: f64,
    pub pass: bool,
}

/// Moment-bound audit of a copy ensemble: `sup_{s<=t} E|X̄_s|^2 <= C_1(t) + 3 SE`
/// at every grid time `t >= 0`.
pub fn bound_table(
    model: &dyn Model,
    copies: &CopyEnsemble,
    populations: usize,
    omega: &[f64],
) -> Result<Vec<BoundRow>> {
    let store = copies.store();
    let grid = *store.grid();
    let rates = model.rates(omega);
    let init_sup = copies
        .sources
        .sites
        .iter()
        .map(|s| model.initial_second_moment(s))
        .fold(0.0, f64::max);
    let eps = model.cell_epsilon();
    let m = store.particles() as f64;
    let mut rows = Vec::new();
    let (mut sup, mut sup_se) = (f64::NEG_INFINITY, 0.0);
    for i in 0..grid.len() {
        let (mut s1, mut s2) = (0.0, 0.0);
        for p in 0..store.particles() {
            let q: f64 = store.value(p, i).iter().map(|v| v * v).sum();
            s1 += q;
            s2 += q * q;
        }
        let mean = s1 / m;
        let se = ((s2 / m - mean * mean).max(0.0) / (m - 1.0)).sqrt();
        if mean > sup {
            sup = mean;
            sup_se = se;
        }
        let t = grid.time(i);
        if t < 0.0 {
            continue;
        }
        let t = t.max(0.0);
        let c1 = moment_bound_c1(t, populations, init_sup, &rates)?;
        let c2 = continuity_bound_c2(t, populations, &rates, c1)?;
        rows.push(BoundRow {
            t,
            second_moment: mean,
            se,
            running_sup: sup,
            running_sup_se: sup_se,
            c1,
            c2_eps: c2 * eps,
            pass: sup <= c1 + 3.0 * sup_se,
        });
    }
    Ok(rows)
}

/// One row of the spatial-continuity audit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContinuityRow {
    pub t: f64,
    /// Empirical `E|X̄^r_t - X̄^{r'}_t|^2` over pairs and replicas.
    pub gap: f64,
    pub se: f64,
    /// `C_2(t) * epsilon`.
    pub bound: f64,
    pub pass: bool,
}

/// Spatial continuity of representatives: for each pair `(r, r')` of sites
/// and each replica, both are driven by the same noise and initial path (the
/// keys of pair index `i`), so their gap measures only the dependence on the
/// position.
#[allow(clippy::too_many_arguments)]
pub fn continuity_audit(
    model: &dyn Model,
    grid: &TimeGrid,
    omega: &[f64],
    copies: &CopyEnsemble,
    pairs: &[(Site, Site)],
    populations: usize,
    run_seed: u64,
    replicas: usize,
    opts: &RunOptions,
) -> Result<Vec<ContinuityRow>> {
    if pairs.is_empty() || replicas == 0 {
        return Err(Error::Replicas("the continuity audit needs pairs and replicas".into()));
    }
    let mut sites = Vec::with_capacity(2 * pairs.len());
    let mut keys = Vec::with_capacity(2 * pairs.len());
    let mut s1 = vec![0.0; grid.len()];
    let mut s2 = vec![0.0; grid.len()];
    for rep in 0..replicas as u64 {
        sites.clear();
        keys.clear();
        for (i, (a, b)) in pairs.iter().enumerate() {
            let key = ParticleKeys::new(run_seed, i as u64, rep);
            sites.push(a.clone());
            sites.push(b.clone());
            keys.push(key);
            keys.push(key);
        }
        let run = simulate_representatives(model, grid, omega, copies, &sites, &keys, opts)?;
        for i in 0..grid.len() {
            for pair in 0..pairs.len() {
                let (x, y) = (run.store.value(2 * pair, i), run.store.value(2 * pair + 1, i));
                let q: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                s1[i] += q;
                s2[i] += q * q;
            }
        }
    }
    let n = (replicas * pairs.len()) as f64;
    let rates = model.rates(omega);
    let init_sup = sites.iter().map(|s| model.initial_second_moment(s)).fold(0.0, f64::max);
    let eps = model.cell_epsilon();
    let mut rows = Vec::new();
    for i in grid.n()..grid.len() {
        let t = grid.time(i).max(0.0);
        let gap = s1[i] / n;
        let se = if n > 1.0 {
            ((s2[i] / n - gap * gap).max(0.0) / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let c1 = moment_bound_c1(t, populations, init_sup, &rates)?;
        let bound = continuity_bound_c2(t, populations, &rates, c1)? * eps;
        rows.push(ContinuityRow {
            t,
            gap,
            se,
            bound,
            pass: gap <= bound + 3.0 * se,
        });
    }
    Ok(rows)
}

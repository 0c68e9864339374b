//! Coupled network / mean-field runs and the convergence of their gap in N.
//!
//! Network particle `r` and representative `X̄^r` share every noise stream
//! and the initial path, so `E|X^r_t - X̄^r_t|^2` measures only the
//! interaction error.

use serde::Serialize;

use crate::disorder::{DisorderLaw, Rates};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::layout::SpatialLayout;
use crate::meanfield::{continuity_bound_c2, moment_bound_c1, simulate_copies, simulate_representatives};
use crate::model::Model;
use crate::network::{simulate_network, EnsembleRun, RunOptions};
use crate::stats::{fit_line, mean_se, LineFit};

/// Squared gaps of coupled runs summed over replicas, per grid index and particle.
#[derive(Debug, Clone, PartialEq)]
pub struct GapAccumulator {
    grid: TimeGrid,
    particles: usize,
    replicas: usize,
    sum: Vec<f64>,
    sum2: Vec<f64>,
}

impl GapAccumulator {
    pub fn new(grid: TimeGrid, particles: usize) -> Self {
        let n = grid.len() * particles;
        Self {
            grid,
            particles,
            replicas: 0,
            sum: vec![0.0; n],
            sum2: vec![0.0; n],
        }
    }

    pub fn replicas(&self) -> usize {
        self.replicas
    }

    /// Adds one replica of coupled runs.
    pub fn add(&mut self, network: &EnsembleRun, meanfield: &EnsembleRun) -> Result<()> {
        let gaps = coupled_gap(network, meanfield)?;
        if gaps.len() != self.sum.len() {
            return Err(Error::Coupling("replica has a different grid or particle count".into()));
        }
        for ((s, s2), g) in self.sum.iter_mut().zip(self.sum2.iter_mut()).zip(&gaps) {
            *s += g;
            *s2 += g * g;
        }
        self.replicas += 1;
        Ok(())
    }

    /// Replica mean of `|X^r_t - X̄^r_t|^2` at grid index `i`.
    pub fn mean(&self, i: usize, r: usize) -> f64 {
        self.sum[i * self.particles + r] / self.replicas as f64
    }

    pub fn se(&self, i: usize, r: usize) -> f64 {
        let n = self.replicas as f64;
        if self.replicas < 2 {
            return 0.0;
        }
        let j = i * self.particles + r;
        let m = self.sum[j] / n;
        ((self.sum2[j] / n - m * m).max(0.0) / (n - 1.0)).sqrt()
    }

    /// `sup_{t, r}` of the replica mean, with the SE at the argmax.
    pub fn sup(&self) -> (f64, f64) {
        let mut best = (0.0, 0.0);
        for i in 0..self.grid.len() {
            for r in 0..self.particles {
                let m = self.mean(i, r);
                if m > best.0 {
                    best = (m, self.se(i, r));
                }
            }
        }
        best
    }

    /// Largest replica mean on `[-tau, 0]`; zero for correctly coupled runs.
    pub fn initial_window_max(&self) -> f64 {
        (0..self.grid.window())
            .flat_map(|i| (0..self.particles).map(move |r| (i, r)))
            .map(|(i, r)| self.mean(i, r))
            .fold(0.0, f64::max)
    }
}

/// `|X^r_t - X̄^r_t|^2` for every grid index `i` and particle `r`, at
/// `i * particles + r`. Both runs must use the same grid and identical keys.
pub fn coupled_gap(network: &EnsembleRun, meanfield: &EnsembleRun) -> Result<Vec<f64>> {
    let (a, b) = (&network.store, &meanfield.store);
    if a.grid() != b.grid() || a.dim() != b.dim() || a.particles() != b.particles() {
        return Err(Error::Coupling("runs differ in grid, dimension or size".into()));
    }
    if network.keys != meanfield.keys {
        return Err(Error::Coupling("runs do not share their noise keys".into()));
    }
    let n = a.particles();
    let mut out = vec![0.0; a.grid().len() * n];
    for r in 0..n {
        for i in 0..a.grid().len() {
            out[i * n + r] = a
                .value(r, i)
                .iter()
                .zip(b.value(r, i))
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
        }
    }
    Ok(out)
}

/// Settings of a convergence study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudySpec {
    pub grid: TimeGrid,
    pub populations: usize,
    pub cells_per_population: usize,
    /// Increasing network sizes.
    pub sizes: Vec<usize>,
    pub copies: usize,
    pub replicas: usize,
    pub draws: usize,
    pub exclude_self: bool,
    pub slope_band: (f64, f64),
}

impl StudySpec {
    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() || self.sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("study.sizes", "must be a non-empty increasing list"));
        }
        if self.replicas < 2 {
            return Err(Error::Replicas(format!(
                "{} replicas; at least 2 are needed for standard errors",
                self.replicas
            )));
        }
        if self.draws == 0 {
            return Err(Error::config("study.draws", "must be at least 1"));
        }
        if self.slope_band.0 > self.slope_band.1 {
            return Err(Error::config("study.slope_band", "lower end exceeds upper end"));
        }
        Ok(())
    }

    pub fn layout(&self, n: usize) -> Result<SpatialLayout> {
        Ok(SpatialLayout::lattice(self.populations, n, self.cells_per_population)?.with_exclude_self(self.exclude_self))
    }
}

/// The explicit right-hand side of the coupling estimate for one disorder
/// value: `36 sum_alpha (#/S^2 + eps #^2/S^2 + cell term) C_2(T) exp(int (L + 6 L̄ w + P))`.
pub fn gap_bound(layout: &SpatialLayout, rates: &Rates, epsilon: f64, horizon: f64, init_sup: f64) -> Result<f64> {
    let p = layout.populations();
    let mut sum = 0.0;
    for alpha in 0..p {
        let n = layout.population_count(alpha) as f64;
        let s2 = layout.weights()[alpha].powi(2);
        sum += n / s2 + epsilon * n * n / s2 + layout.cell_ratio_term(alpha);
    }
    let c1 = moment_bound_c1(horizon, p, init_sup, rates)?;
    let c2 = continuity_bound_c2(horizon, p, rates, c1)?;
    let w = layout.weight_sum();
    let exponent = rates.l.integral(horizon) + 6.0 * w * rates.l_bar.integral(horizon) + p as f64 * horizon;
    Ok(36.0 * sum * c2 * exponent.exp())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChaosEntry {
    pub n: usize,
    /// `S_alpha` per population.
    pub s: Vec<f64>,
    pub copies: usize,
    pub draws: usize,
    pub replicas: usize,
    /// Mean over draws of `sup_{t,r}` of the replica-mean squared gap.
    pub gap: f64,
    pub se: f64,
    pub per_draw: Vec<f64>,
    /// Mean over draws of the explicit bound.
    pub bound: f64,
    pub bound_pass: bool,
    pub c1: f64,
    pub c2: f64,
    pub weight_sum: f64,
    pub ratio_deviation: f64,
    pub initial_window_max: f64,
    pub audit_deviation: Option<f64>,
}

/// Paired comparison of consecutive sizes over the same disorder draws.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecreaseTest {
    pub n_small: usize,
    pub n_large: usize,
    pub difference: f64,
    pub se: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChaosReport {
    pub model: String,
    pub spec: StudySpec,
    pub entries: Vec<ChaosEntry>,
    pub fit: Option<LineFit>,
    pub slope_pass: bool,
    pub decrease: Vec<DecreaseTest>,
    pub integrability: IntegrabilityAudit,
}

impl ChaosReport {
    pub fn decreasing(&self) -> bool {
        self.decrease.iter().all(|d| d.pass)
    }

    pub fn bounds_hold(&self) -> bool {
        self.entries.iter().all(|e| e.bound_pass)
    }

    pub fn passed(&self) -> bool {
        self.decreasing() && self.slope_pass && self.bounds_hold()
    }
}

/// Differences `a_j - b_j` over paired draws: mean, and an SE from their spread
/// (or from the two independent SEs when there is one draw).
fn paired(a: &ChaosEntry, b: &ChaosEntry) -> (f64, f64) {
    let diffs: Vec<f64> = a.per_draw.iter().zip(&b.per_draw).map(|(x, y)| x - y).collect();
    let (mean, se) = mean_se(&diffs);
    if diffs.len() < 2 {
        (mean, (a.se * a.se + b.se * b.se).sqrt())
    } else {
        (mean, se)
    }
}

/// Runs the full study: per disorder draw one copy ensemble, shared by all
/// sizes and replicas; per size and replica a network run and the matching
/// representatives with the same keys.
pub fn convergence_study(
    model: &dyn Model,
    spec: &StudySpec,
    disorder: &DisorderLaw,
    run_seed: u64,
    opts: &RunOptions,
) -> Result<ChaosReport> {
    spec.validate()?;
    let grid = &spec.grid;
    let layouts: Vec<SpatialLayout> = spec.sizes.iter().map(|&n| spec.layout(n)).collect::<Result<_>>()?;
    let mut per_draw = vec![Vec::with_capacity(spec.draws); spec.sizes.len()];
    let mut inner_se = vec![Vec::with_capacity(spec.draws); spec.sizes.len()];
    let mut bounds = vec![Vec::with_capacity(spec.draws); spec.sizes.len()];
    let mut c1s = Vec::with_capacity(spec.draws);
    let mut c2s = Vec::with_capacity(spec.draws);
    let mut window_max = vec![0.0f64; spec.sizes.len()];
    let mut audit: Vec<Option<f64>> = vec![None; spec.sizes.len()];
    let mut rates_by_draw = Vec::with_capacity(spec.draws);
    let eps = model.cell_epsilon();
    for d in 0..spec.draws {
        let sample = disorder.sample(run_seed, d as u64);
        let omega = &sample.omega;
        let rates = model.rates(omega);
        let copies = simulate_copies(model, &layouts[0], grid, omega, spec.copies, sample.seed, opts)?;
        for (j, layout) in layouts.iter().enumerate() {
            let init_sup = layout
                .sites()
                .iter()
                .map(|s| model.initial_second_moment(s))
                .fold(0.0, f64::max);
            let mut acc = GapAccumulator::new(*grid, layout.len());
            for rep in 0..spec.replicas as u64 {
                let net = simulate_network(model, layout, grid, omega, sample.seed, rep, opts)?;
                let reps = simulate_representatives(model, grid, omega, &copies, layout.sites(), &net.keys, opts)?;
                acc.add(&net, &reps)?;
                if let Some(dev) = net.audit_deviation {
                    audit[j] = Some(audit[j].unwrap_or(0.0).max(dev));
                }
            }
            let (sup, se) = acc.sup();
            per_draw[j].push(sup);
            inner_se[j].push(se);
            window_max[j] = window_max[j].max(acc.initial_window_max());
            bounds[j].push(gap_bound(layout, &rates, eps, grid.horizon(), init_sup)?);
            if j == 0 {
                let c1 = moment_bound_c1(grid.horizon(), layout.populations(), init_sup, &rates)?;
                c1s.push(c1);
                c2s.push(continuity_bound_c2(grid.horizon(), layout.populations(), &rates, c1)?);
            }
        }
        rates_by_draw.push(rates);
    }
    let mut entries = Vec::with_capacity(spec.sizes.len());
    for (j, layout) in layouts.iter().enumerate() {
        let (gap, between_se) = mean_se(&per_draw[j]);
        let se = if spec.draws < 2 { inner_se[j][0] } else { between_se };
        let bound = mean_se(&bounds[j]).0;
        entries.push(ChaosEntry {
            n: layout.len(),
            s: layout.weights().to_vec(),
            copies: spec.copies,
            draws: spec.draws,
            replicas: spec.replicas,
            gap,
            se,
            per_draw: per_draw[j].clone(),
            bound,
            bound_pass: gap <= bound + 3.0 * se,
            c1: mean_se(&c1s).0,
            c2: mean_se(&c2s).0,
            weight_sum: layout.weight_sum(),
            ratio_deviation: layout.max_ratio_deviation(),
            initial_window_max: window_max[j],
            audit_deviation: audit[j],
        });
    }
    let decrease = entries
        .windows(2)
        .map(|w| {
            let (difference, se) = paired(&w[0], &w[1]);
            DecreaseTest {
                n_small: w[0].n,
                n_large: w[1].n,
                difference,
                se,
                pass: difference > 2.0 * se,
            }
        })
        .collect();
    let fit = if entries.len() >= 2 && entries.iter().all(|e| e.gap > 0.0) {
        let x: Vec<f64> = entries.iter().map(|e| (e.n as f64).ln()).collect();
        let y: Vec<f64> = entries.iter().map(|e| e.gap.ln()).collect();
        Some(fit_line(&x, &y)?)
    } else {
        None
    };
    let slope_pass = fit.is_some_and(|f| f.slope >= spec.slope_band.0 && f.slope <= spec.slope_band.1);
    let weight_sup = layouts.iter().map(|l| l.weight_sum()).fold(0.0, f64::max);
    let integrability = integrability_audit(&rates_by_draw, spec.populations, weight_sup, grid.horizon());
    Ok(ChaosReport {
        model: model.id().to_string(),
        spec: spec.clone(),
        entries,
        fit,
        slope_pass,
        decrease,
        integrability,
    })
}

/// Monte Carlo estimate of the disorder expectation of
/// `exp(int_0^T [2L + L̄ (P + 6 w) + K + 3 P K̄] ds)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegrabilityAudit {
    pub draws: usize,
    pub estimate: f64,
    pub se: f64,
    /// Largest single draw's share of the sum.
    pub max_share: f64,
    /// Non-finite estimate, or one draw dominating a sample of 16 or more.
    pub divergent: bool,
}

/// Draws needed before a dominating term counts as a divergence symptom.
const DOMINANCE_MIN_DRAWS: usize = 16;
const DOMINANCE_SHARE: f64 = 0.25;

pub fn integrability_exponent(rates: &Rates, populations: usize, weight_sup: f64, horizon: f64) -> f64 {
    let p = populations as f64;
    2.0 * rates.l.integral(horizon)
        + (p + 6.0 * weight_sup) * rates.l_bar.integral(horizon)
        + rates.k.integral(horizon)
        + 3.0 * p * rates.k_bar.integral(horizon)
}

/// One term per disorder draw in `rates`.
pub fn integrability_audit(rates: &[Rates], populations: usize, weight_sup: f64, horizon: f64) -> IntegrabilityAudit {
    let terms: Vec<f64> = rates
        .iter()
        .map(|r| integrability_exponent(r, populations, weight_sup, horizon).exp())
        .collect();
    let (estimate, se) = mean_se(&terms);
    let total: f64 = terms.iter().sum();
    let max_share = if total > 0.0 && total.is_finite() {
        terms.iter().fold(0.0, |m: f64, t| m.max(*t)) / total
    } else if total.is_finite() {
        0.0
    } else {
        1.0
    };
    let divergent =
        !estimate.is_finite() || (terms.len() >= DOMINANCE_MIN_DRAWS && max_share > DOMINANCE_SHARE);
    IntegrabilityAudit {
        draws: terms.len(),
        estimate,
        se,
        max_share,
        divergent,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disorder::PiecewiseConstant;

    #[test]
    fn deterministic_rates_have_no_spread() {
        let r = Rates::constant(1.0, 0.5, 0.0, 0.0);
        let a = integrability_audit(&vec![r; 5], 1, 1.0, 2.0);
        assert!((a.estimate - 4.0f64.exp()).abs() < 1e-9);
        assert_eq!(a.se, 0.0);
        assert!(!a.divergent);
    }

    #[test]
    fn gap_bound_of_a_homogeneous_lattice() {
        let l = SpatialLayout::lattice(1, 10, 1).unwrap();
        let r = Rates::zero();
        // 36 * (1/10) * C_2(1) * e, with C_1(1) = e and C_2(1) = e (1 + 3e).
        let e = 1f64.exp();
        let want = 3.6 * e * (1.0 + 3.0 * e) * e;
        assert!((gap_bound(&l, &r, 0.0, 1.0, 0.0).unwrap() - want).abs() < 1e-9 * want);
    }

    #[test]
    fn unordered_sizes_are_rejected() {
        let spec = StudySpec {
            grid: TimeGrid::new(0.1, 2, 0.2).unwrap(),
            populations: 1,
            cells_per_population: 1,
            sizes: vec![8, 4],
            copies: 8,
            replicas: 2,
            draws: 1,
            exclude_self: false,
            slope_band: (-1.3, -0.7),
        };
        assert!(spec.validate().is_err());
        let spec = StudySpec {
            sizes: vec![4, 8],
            replicas: 1,
            ..spec
        };
        assert!(matches!(spec.validate(), Err(Error::Replicas(_))));
    }

    #[test]
    fn piecewise_rates_integrate_exactly() {
        let k = PiecewiseConstant::new(vec![0.0, 1.0], vec![1.0, 3.0]).unwrap();
        let r = Rates {
            k,
            ..Rates::zero()
        };
        assert!((integrability_exponent(&r, 1, 0.0, 2.0) - 4.0).abs() < 1e-12);
    }
}

//! Spatial structure: subpopulations, their refinement cells (axis-aligned
//! boxes carrying mass of the limiting spatial measure), neuron positions and
//! the interaction normalisations `S_alpha`.

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    pub id: usize,
    pub population: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Mass of the limiting spatial measure on this cell.
    pub mass: f64,
}

impl Cell {
    /// Half-open box membership `lower <= p < upper`.
    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.lower.len()
            && p
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (lo, hi))| *x >= *lo && *x < *hi)
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| 0.5 * (lo + hi))
            .collect()
    }

    /// Coordinates of `p` rescaled to `[0, 1)` inside the box.
    pub fn relative(&self, p: &[f64]) -> Vec<f64> {
        p.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(x, (lo, hi))| (x - lo) / (hi - lo))
            .collect()
    }

    /// The site a quadrature representative of this cell sits at.
    pub fn representative(&self, index: usize) -> Site {
        let point = self.midpoint();
        Site {
            index,
            population: self.population,
            cell: self.id,
            relative: self.relative(&point),
            point,
        }
    }
}

/// A neuron position tagged with its subpopulation and refinement cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Site {
    pub index: usize,
    pub population: usize,
    pub cell: usize,
    pub point: Vec<f64>,
    /// Position inside the cell box, in `[0, 1)^k`.
    pub relative: Vec<f64>,
}

impl Site {
    /// A site with no spatial extent, for single-path runs.
    pub fn origin(index: usize) -> Self {
        Self {
            index,
            population: 0,
            cell: 0,
            point: vec![0.5],
            relative: vec![0.5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpatialLayout {
    populations: usize,
    cells: Vec<Cell>,
    sites: Vec<Site>,
    weights: Vec<f64>,
    population_counts: Vec<usize>,
    cell_counts: Vec<usize>,
    exclude_self: bool,
}

impl SpatialLayout {
    /// Builds a layout from explicit cells and points. Each point must fall in
    /// exactly one cell. `weights` overrides the default `S_alpha = #(A_N ∩ Γ_alpha)`.
    pub fn new(
        populations: usize,
        cells: Vec<Cell>,
        points: &[Vec<f64>],
        weights: Option<Vec<f64>>,
    ) -> Result<Self> {
        if populations == 0 {
            return Err(Error::config("layout.populations", "must be at least 1"));
        }
        for (i, c) in cells.iter().enumerate() {
            if c.id != i {
                return Err(Error::config("layout.cells", "cell ids must be 0..count"));
            }
            if c.population >= populations {
                return Err(Error::config(
                    "layout.cells.population",
                    format!("cell {i} refers to population {}", c.population),
                ));
            }
            if c.lower.is_empty()
                || c.lower.len() != c.upper.len()
                || c.lower.iter().zip(&c.upper).any(|(lo, hi)| !(lo < hi))
            {
                return Err(Error::config(
                    "layout.cells",
                    format!("cell {i} is not a non-empty box"),
                ));
            }
            if !(c.mass.is_finite() && c.mass >= 0.0) {
                return Err(Error::config(
                    "layout.cells.mass",
                    format!("cell {i} has mass {}", c.mass),
                ));
            }
        }
        for alpha in 0..populations {
            let cells_alpha: Vec<_> = cells.iter().filter(|c| c.population == alpha).collect();
            if cells_alpha.is_empty() {
                return Err(Error::config(
                    "layout.cells",
                    format!("population {alpha} has no cells"),
                ));
            }
            let total: f64 = cells_alpha.iter().map(|c| c.mass).sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::config(
                    "layout.cells.mass",
                    format!("cell masses of population {alpha} sum to {total}, expected 1"),
                ));
            }
        }

        let mut sites = Vec::with_capacity(points.len());
        for (index, p) in points.iter().enumerate() {
            let mut hits = cells.iter().filter(|c| c.contains(p));
            let cell = hits.next().ok_or_else(|| {
                Error::config("layout.positions", format!("position {index} {p:?} lies in no cell"))
            })?;
            if hits.next().is_some() {
                return Err(Error::config(
                    "layout.positions",
                    format!("position {index} {p:?} lies in more than one cell"),
                ));
            }
            sites.push(Site {
                index,
                population: cell.population,
                cell: cell.id,
                point: p.clone(),
                relative: cell.relative(p),
            });
        }

        let mut population_counts = vec![0usize; populations];
        let mut cell_counts = vec![0usize; cells.len()];
        for s in &sites {
            population_counts[s.population] += 1;
            cell_counts[s.cell] += 1;
        }
        let weights = match weights {
            Some(w) => {
                if w.len() != populations {
                    return Err(Error::config(
                        "layout.weights",
                        format!("expected {populations} weights, got {}", w.len()),
                    ));
                }
                w
            }
            None => population_counts.iter().map(|&c| c as f64).collect(),
        };
        if let Some((alpha, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(w.is_finite() && **w != 0.0))
        {
            return Err(Error::config(
                "layout.weights",
                format!("S for population {alpha} must be finite and nonzero, got {w}"),
            ));
        }
        Ok(Self {
            populations,
            cells,
            sites,
            weights,
            population_counts,
            cell_counts,
            exclude_self: false,
        })
    }

    /// Deterministic lattice: population `alpha` occupies `[alpha, alpha + 1)`
    /// split into `cells_per_population` equal cells of equal mass; the
    /// `particles` neurons are shared evenly between populations and cells and
    /// placed at cell-local lattice midpoints.
    pub fn lattice(populations: usize, particles: usize, cells_per_population: usize) -> Result<Self> {
        if cells_per_population == 0 {
            return Err(Error::config("layout.cells_per_population", "must be at least 1"));
        }
        if populations == 0 {
            return Err(Error::config("layout.populations", "must be at least 1"));
        }
        let width = 1.0 / cells_per_population as f64;
        let mut cells = Vec::new();
        for alpha in 0..populations {
            for m in 0..cells_per_population {
                let lo = alpha as f64 + m as f64 * width;
                let hi = if m + 1 == cells_per_population {
                    alpha as f64 + 1.0
                } else {
                    lo + width
                };
                cells.push(Cell {
                    id: cells.len(),
                    population: alpha,
                    lower: vec![lo],
                    upper: vec![hi],
                    mass: 1.0 / cells_per_population as f64,
                });
            }
        }
        let mut points = Vec::with_capacity(particles);
        for alpha in 0..populations {
            let n_alpha = share(particles, populations, alpha);
            for m in 0..cells_per_population {
                let cell = &cells[alpha * cells_per_population + m];
                let n_cell = share(n_alpha, cells_per_population, m);
                let (lo, hi) = (cell.lower[0], cell.upper[0]);
                for i in 0..n_cell {
                    points.push(vec![lo + (hi - lo) * (i as f64 + 0.5) / n_cell as f64]);
                }
            }
        }
        Self::new(populations, cells, &points, None)
    }

    pub fn with_exclude_self(mut self, exclude_self: bool) -> Self {
        self.exclude_self = exclude_self;
        self
    }

    pub fn with_weights(self, weights: Vec<f64>) -> Result<Self> {
        let points: Vec<_> = self.sites.iter().map(|s| s.point.clone()).collect();
        let exclude = self.exclude_self;
        Ok(Self::new(self.populations, self.cells, &points, Some(weights))?.with_exclude_self(exclude))
    }

    pub fn populations(&self) -> usize {
        self.populations
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    /// `S_alpha` per population.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn exclude_self(&self) -> bool {
        self.exclude_self
    }

    pub fn population_count(&self, alpha: usize) -> usize {
        self.population_counts[alpha]
    }

    pub fn cell_count(&self, cell: usize) -> usize {
        self.cell_counts[cell]
    }

    pub fn cells_of(&self, alpha: usize) -> impl Iterator<Item = &Cell> {
        self.cells.iter().filter(move |c| c.population == alpha)
    }

    /// Per-cell `#(A_N ∩ Γ_alpha^m) / S_alpha - R(Γ_alpha^m)`.
    pub fn ratio_deviations(&self) -> Vec<f64> {
        self.cells
            .iter()
            .map(|c| self.cell_counts[c.id] as f64 / self.weights[c.population] - c.mass)
            .collect()
    }

    pub fn max_ratio_deviation(&self) -> f64 {
        self.ratio_deviations()
            .into_iter()
            .fold(0.0, |m, d| m.max(d.abs()))
    }

    /// `sum_alpha (#(A_N ∩ Γ_alpha))^2 / S_alpha^2`.
    pub fn weight_sum(&self) -> f64 {
        (0..self.populations)
            .map(|a| {
                let r = self.population_counts[a] as f64 / self.weights[a];
                r * r
            })
            .sum()
    }

    /// `M_alpha sum_m (#(A_N ∩ Γ_alpha^m)/S_alpha - R(Γ_alpha^m))^2` for one population.
    pub fn cell_ratio_term(&self, alpha: usize) -> f64 {
        let devs = self.ratio_deviations();
        let cells: Vec<_> = self.cells_of(alpha).map(|c| c.id).collect();
        cells.len() as f64 * cells.iter().map(|&c| devs[c] * devs[c]).sum::<f64>()
    }

    /// Stable digest of cells, positions and weights.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("layout serialises");
        hex::encode(Sha256::digest(&canonical))
    }
}

/// Even split of `total` into `parts`, remainder to the first parts.
fn share(total: usize, parts: usize, i: usize) -> usize {
    total / parts + usize::from(i < total % parts)
}

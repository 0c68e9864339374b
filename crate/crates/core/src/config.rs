//! TOML run configuration.
//!
//! ```toml
//! [grid]           # tau, n, horizon
//! [delay_measure]  # offsets, weights (default: unit mass at -tau)
//! [layout]         # populations, particles, cells_per_population | cells + positions, weights, exclude_self
//! [model]          # id and preset parameters
//! [noise]          # seed, nu_total
//! [disorder]       # distribution and its parameters
//! [run]            # mode, paths, copies, replicas, draws, reduction, audit, guard, record, output, continuity_*
//! [study]          # sizes, replicas, draws, copies, slope_band, exclude_self
//! [audit]          # trials, draws
//! ```
//!
//! Every section rejects unknown keys; errors name the offending key.

use std::path::Path;
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::chaos::StudySpec;
use crate::disorder::DisorderLaw;
use crate::error::{Error, Result};
use crate::grid::{DelayMeasure, TimeGrid};
use crate::layout::{Cell, SpatialLayout};
use crate::model::Model;
use crate::network::{Reduction, RunOptions};
use crate::presets;
use crate::sdde::DEFAULT_GUARD;

const SECTIONS: [&str; 9] = [
    "grid",
    "delay_measure",
    "layout",
    "model",
    "noise",
    "disorder",
    "run",
    "study",
    "audit",
];

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSection {
    tau: f64,
    n: usize,
    horizon: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct DelaySection {
    offsets: Vec<f64>,
    weights: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct CellSpec {
    population: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    mass: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct LayoutSection {
    populations: usize,
    particles: Option<usize>,
    cells_per_population: usize,
    cells: Option<Vec<CellSpec>>,
    positions: Option<Vec<Vec<f64>>>,
    weights: Option<Vec<f64>>,
    exclude_self: bool,
}

impl Default for LayoutSection {
    fn default() -> Self {
        Self {
            populations: 1,
            particles: None,
            cells_per_population: 1,
            cells: None,
            positions: None,
            weights: None,
            exclude_self: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub seed: u64,
    pub nu_total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Sdde,
    Network,
    Meanfield,
    ChaosStudy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Record {
    /// Ensemble moments only.
    #[default]
    Moments,
    /// Moments and every trajectory.
    Trajectories,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub mode: Option<Mode>,
    /// Independent paths of the single-equation mode.
    pub paths: usize,
    /// Mean-field copies per population.
    pub copies: usize,
    pub replicas: usize,
    /// Disorder draws.
    pub draws: usize,
    pub reduction: Reduction,
    pub audit: bool,
    pub guard: f64,
    pub record: Record,
    /// Stem of the output files.
    pub output: String,
    /// Same-cell representative pairs for the continuity audit (0 disables it).
    pub continuity_pairs: usize,
    pub continuity_replicas: usize,
    /// Only times up to this value enter the continuity audit.
    pub continuity_horizon: Option<f64>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            mode: None,
            paths: 1000,
            copies: 1024,
            replicas: 1,
            draws: 1,
            reduction: Reduction::Auto,
            audit: false,
            guard: DEFAULT_GUARD,
            record: Record::Moments,
            output: "run".into(),
            continuity_pairs: 0,
            continuity_replicas: 16,
            continuity_horizon: None,
        }
    }
}

impl RunSection {
    pub fn options(&self) -> RunOptions {
        RunOptions {
            guard: self.guard,
            reduction: self.reduction,
            audit: self.audit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudySection {
    pub sizes: Vec<usize>,
    pub replicas: usize,
    pub draws: usize,
    /// Defaults to eight times the largest size.
    pub copies: Option<usize>,
    pub slope_band: [f64; 2],
    pub exclude_self: bool,
}

impl Default for StudySection {
    fn default() -> Self {
        Self {
            sizes: vec![8, 16, 32, 64],
            replicas: 64,
            draws: 8,
            copies: None,
            slope_band: [-1.3, -0.7],
            exclude_self: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditSection {
    pub trials: usize,
    /// Disorder draws cycled through by the hypothesis audit and averaged by
    /// the integrability audit.
    pub draws: usize,
}

impl Default for AuditSection {
    fn default() -> Self {
        Self {
            trials: 10_000,
            draws: 16,
        }
    }
}

/// A validated configuration.
#[derive(Debug, Clone)]
pub struct Config {
    /// The text it was parsed from.
    pub source: String,
    pub grid: TimeGrid,
    pub lambda: DelayMeasure,
    pub layout: SpatialLayout,
    pub layout_populations: usize,
    pub cells_per_population: usize,
    pub model_id: String,
    pub model_params: toml::Table,
    pub noise: NoiseSection,
    pub disorder: DisorderLaw,
    pub run: RunSection,
    pub study: StudySection,
    pub audit: AuditSection,
}

fn section<T: DeserializeOwned + Default>(root: &toml::Table, name: &str) -> Result<T> {
    match root.get(name) {
        None => Ok(T::default()),
        Some(v) => required(v, name),
    }
}

fn required<T: DeserializeOwned>(v: &toml::Value, name: &str) -> Result<T> {
    v.clone()
        .try_into()
        .map_err(|e: toml::de::Error| Error::config(name, e.message().trim().to_string()))
}

fn finite(key: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(key, format!("must be finite, got {v}")))
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let root: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config("config", e.message().trim().to_string()))?;
        if let Some(k) = root.keys().find(|k| !SECTIONS.contains(&k.as_str())) {
            return Err(Error::config(k.as_str(), "unknown section"));
        }

        let g: GridSection = required(
            root.get("grid").ok_or_else(|| Error::config("grid", "section is required"))?,
            "grid",
        )?;
        let grid = TimeGrid::new(g.tau, g.n, g.horizon)?;

        let lambda = match root.get("delay_measure") {
            None => DelayMeasure::point(&grid, -grid.tau())?,
            Some(v) => {
                let d: DelaySection = required(v, "delay_measure")?;
                DelayMeasure::new(&grid, &d.offsets, &d.weights)?
            }
        };

        let l: LayoutSection = section(&root, "layout")?;
        let layout = match (&l.cells, &l.positions) {
            (Some(cells), Some(points)) => {
                if l.particles.is_some() {
                    return Err(Error::config(
                        "layout.particles",
                        "give either particles (lattice) or cells and positions",
                    ));
                }
                let cells = cells
                    .iter()
                    .enumerate()
                    .map(|(id, c)| Cell {
                        id,
                        population: c.population,
                        lower: c.lower.clone(),
                        upper: c.upper.clone(),
                        mass: c.mass,
                    })
                    .collect();
                SpatialLayout::new(l.populations, cells, points, l.weights.clone())?
            }
            (None, None) => {
                let lattice = SpatialLayout::lattice(l.populations, l.particles.unwrap_or(1), l.cells_per_population)?;
                match &l.weights {
                    Some(w) => lattice.with_weights(w.clone())?,
                    None => lattice,
                }
            }
            (Some(_), None) => return Err(Error::config("layout.positions", "required with layout.cells")),
            (None, Some(_)) => return Err(Error::config("layout.cells", "required with layout.positions")),
        }
        .with_exclude_self(l.exclude_self);

        let mut model_params = match root.get("model") {
            Some(toml::Value::Table(t)) => t.clone(),
            Some(_) => return Err(Error::config("model", "must be a table")),
            None => return Err(Error::config("model", "section is required")),
        };
        let model_id = match model_params.remove("id") {
            Some(toml::Value::String(s)) => s,
            Some(_) => return Err(Error::config("model.id", "must be a string")),
            None => return Err(Error::config("model.id", "is required")),
        };

        let noise: NoiseSection = section(&root, "noise")?;
        if !(noise.nu_total.is_finite() && noise.nu_total >= 0.0) {
            return Err(Error::config("noise.nu_total", "must be finite and >= 0"));
        }
        let disorder: DisorderLaw = section(&root, "disorder")?;
        disorder.validate()?;

        let run: RunSection = section(&root, "run")?;
        if !(run.guard > 0.0) {
            return Err(Error::config("run.guard", "must be positive"));
        }
        for (key, v) in [
            ("run.paths", run.paths),
            ("run.replicas", run.replicas),
            ("run.draws", run.draws),
            ("run.continuity_replicas", run.continuity_replicas),
        ] {
            if v == 0 {
                return Err(Error::config(key, "must be at least 1"));
            }
        }
        if run.output.is_empty() || run.output.contains(['/', '\\']) {
            return Err(Error::config("run.output", "must be a plain file stem"));
        }
        if let Some(h) = run.continuity_horizon {
            finite("run.continuity_horizon", h)?;
        }

        let study: StudySection = section(&root, "study")?;
        for v in study.slope_band {
            finite("study.slope_band", v)?;
        }
        let audit: AuditSection = section(&root, "audit")?;
        if audit.trials == 0 || audit.draws == 0 {
            return Err(Error::config("audit.trials", "trials and draws must be at least 1"));
        }

        let cfg = Self {
            source: text.to_string(),
            grid,
            lambda,
            layout_populations: l.populations,
            cells_per_population: l.cells_per_population,
            layout,
            model_id,
            model_params,
            noise,
            disorder,
            run,
            study,
            audit,
        };
        // Surface model errors at load time.
        cfg.model()?;
        Ok(cfg)
    }

    pub fn model(&self) -> Result<Arc<dyn Model>> {
        presets::build(
            &self.model_id,
            &self.model_params,
            self.noise.nu_total,
            &self.lambda,
            &self.layout,
        )
    }

    /// The study described by `[study]`, on lattices shaped like `[layout]`.
    pub fn study_spec(&self) -> StudySpec {
        let max_n = self.study.sizes.iter().copied().max().unwrap_or(1);
        StudySpec {
            grid: self.grid,
            populations: self.layout_populations,
            cells_per_population: self.cells_per_population,
            sizes: self.study.sizes.clone(),
            copies: self.study.copies.unwrap_or(8 * max_n),
            replicas: self.study.replicas,
            draws: self.study.draws,
            exclude_self: self.study.exclude_self,
            slope_band: (self.study.slope_band[0], self.study.slope_band[1]),
        }
    }

    /// Disorder draws `0..count` under the configured seed.
    pub fn omegas(&self, count: usize) -> Vec<Vec<f64>> {
        (0..count as u64)
            .map(|d| self.disorder.sample(self.noise.seed, d).omega)
            .collect()
    }
}

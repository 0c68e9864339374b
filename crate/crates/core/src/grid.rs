//! Time discretisation: the uniform grid tied to the delay window, the
//! grid-freezing map `kappa`, path segments over `[-tau, 0]` and the delay
//! measure used by the interaction hypotheses.

use serde::Serialize;

use crate::error::{Error, Result};

/// Relative tolerance used to decide that a real time sits on a grid point.
const GRID_SNAP: f64 = 1e-9;

/// Uniform grid with `n` steps per delay window, covering `[-tau, horizon]`.
///
/// Grid index `i` corresponds to time `(i - n) * dt`, so index `n` is `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeGrid {
    tau: f64,
    n: usize,
    horizon: f64,
    dt: f64,
    forward_steps: usize,
}

impl TimeGrid {
    pub fn new(tau: f64, n: usize, horizon: f64) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::config("grid.tau", format!("must be positive, got {tau}")));
        }
        if n == 0 {
            return Err(Error::config("grid.n", "must be at least 1"));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::config(
                "grid.horizon",
                format!("must be positive, got {horizon}"),
            ));
        }
        let dt = tau / n as f64;
        let q = horizon / dt;
        let forward_steps = match snap_to_integer(q) {
            Some(k) => k,
            None => q.ceil() as usize,
        };
        Ok(Self {
            tau,
            n,
            horizon,
            dt,
            forward_steps,
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Steps per delay window.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of grid points in a delay window, `n + 1`.
    pub fn window(&self) -> usize {
        self.n + 1
    }

    /// Euler steps taken on `[0, T]`.
    pub fn forward_steps(&self) -> usize {
        self.forward_steps
    }

    /// Grid intervals on `[-tau, T]`, i.e. `ceil((T + tau) / dt)`.
    pub fn num_steps(&self) -> usize {
        self.n + self.forward_steps
    }

    /// Grid points on `[-tau, T]`.
    pub fn len(&self) -> usize {
        self.num_steps() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Time of grid index `i` (index `n` is `t = 0`).
    pub fn time(&self, i: usize) -> f64 {
        (i as f64 - self.n as f64) * self.dt
    }

    /// Time at the start of forward step `k`.
    pub fn step_time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    /// Offset in `[-tau, 0]` of window slot `j`.
    pub fn offset(&self, j: usize) -> f64 {
        (j as f64 - self.n as f64) * self.dt
    }

    /// Window slot of an offset in `[-tau, 0]`, if it lies on the grid.
    pub fn offset_index(&self, s: f64) -> Option<usize> {
        if !(s.is_finite() && s <= GRID_SNAP * self.tau && s >= -self.tau * (1.0 + GRID_SNAP)) {
            return None;
        }
        let q = (s + self.tau) / self.dt;
        snap_to_integer(q).filter(|&j| j <= self.n)
    }

    /// `kappa(n, t) = k tau / n` for `t` in `(k tau / n, (k + 1) tau / n]`.
    ///
    /// Times within a relative `1e-9` of a grid point are treated as that grid
    /// point, so `kappa(k dt) = (k - 1) dt` despite rounding in `k dt`.
    pub fn kappa(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::Domain(format!(
                "kappa is defined for t > 0 (t = 0 is initial data), got {t}"
            )));
        }
        let q = t / self.dt;
        let k = match snap_to_integer(q) {
            Some(j) => j - 1,
            None => q.ceil() as usize - 1,
        };
        Ok(k as f64 * self.tau / self.n as f64)
    }
}

fn snap_to_integer(q: f64) -> Option<usize> {
    let r = q.round();
    if r >= 0.0 && (q - r).abs() <= GRID_SNAP * r.max(1.0) {
        Some(r as usize)
    } else {
        None
    }
}

/// Read-only view of a delay window: `len` grid values of dimension `dim`,
/// stored either contiguously or in a ring starting at `head`.
///
/// Slot `j` holds `y((j dt - tau)^-)`; the right limit at slot `j` is slot
/// `j + 1`, and at the last slot it is the last value itself.
#[derive(Debug, Clone, Copy)]
pub struct Segment<'a> {
    data: &'a [f64],
    head: usize,
    len: usize,
    dim: usize,
}

impl<'a> Segment<'a> {
    pub fn contiguous(data: &'a [f64], dim: usize) -> Self {
        debug_assert!(dim > 0 && data.len().is_multiple_of(dim));
        Self {
            data,
            head: 0,
            len: data.len() / dim,
            dim,
        }
    }

    pub fn ring(data: &'a [f64], head: usize, dim: usize) -> Self {
        let len = data.len() / dim;
        debug_assert!(head < len);
        Self {
            data,
            head,
            len,
            dim,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, j: usize) -> &'a [f64] {
        let mut slot = self.head + j;
        if slot >= self.len {
            slot -= self.len;
        }
        &self.data[slot * self.dim..(slot + 1) * self.dim]
    }

    /// Value at offset `-tau`.
    #[inline]
    pub fn first(&self) -> &'a [f64] {
        self.get(0)
    }

    /// Value at offset `0^-`, the current state.
    #[inline]
    pub fn last(&self) -> &'a [f64] {
        self.get(self.len - 1)
    }

    #[inline]
    pub fn right_limit(&self, j: usize) -> &'a [f64] {
        self.get((j + 1).min(self.len - 1))
    }

    pub fn to_path(&self) -> PathSegment {
        let mut values = Vec::with_capacity(self.len * self.dim);
        for j in 0..self.len {
            values.extend_from_slice(self.get(j));
        }
        PathSegment {
            dim: self.dim,
            values,
        }
    }
}

/// Owned path segment on `[-tau, 0]` sampled at grid resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSegment {
    dim: usize,
    values: Vec<f64>,
}

impl PathSegment {
    pub fn new(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || values.is_empty() || !values.len().is_multiple_of(dim) {
            return Err(Error::Shape(format!(
                "{} values do not form a segment of dimension {dim}",
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite path value {bad}")));
        }
        Ok(Self { dim, values })
    }

    /// Path that is constant in time.
    pub fn constant(window: usize, value: &[f64]) -> Self {
        let mut values = Vec::with_capacity(window * value.len());
        for _ in 0..window {
            values.extend_from_slice(value);
        }
        Self {
            dim: value.len(),
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn view(&self) -> Segment<'_> {
        Segment::contiguous(&self.values, self.dim)
    }
}

/// Discrete probability measure on `[-tau, 0]` whose atoms sit on grid offsets.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelayMeasure {
    window: usize,
    atoms: Vec<Atom>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Atom {
    pub slot: usize,
    pub offset: f64,
    pub weight: f64,
}

impl DelayMeasure {
    pub fn new(grid: &TimeGrid, offsets: &[f64], weights: &[f64]) -> Result<Self> {
        if offsets.len() != weights.len() || offsets.is_empty() {
            return Err(Error::config(
                "delay_measure.weights",
                format!(
                    "need one weight per offset ({} offsets, {} weights)",
                    offsets.len(),
                    weights.len()
                ),
            ));
        }
        let mut atoms = Vec::with_capacity(offsets.len());
        for (&offset, &weight) in offsets.iter().zip(weights) {
            if !(weight.is_finite() && weight > 0.0) {
                return Err(Error::config(
                    "delay_measure.weights",
                    format!("weights must be positive, got {weight}"),
                ));
            }
            if !(offset >= -grid.tau() * (1.0 + GRID_SNAP) && offset <= GRID_SNAP * grid.tau()) {
                return Err(Error::config(
                    "delay_measure.offsets",
                    format!("offset {offset} lies outside [-tau, 0]"),
                ));
            }
            let slot = grid.offset_index(offset).ok_or_else(|| {
                Error::config(
                    "delay_measure.offsets",
                    format!("offset {offset} is not a grid point (dt = {})", grid.dt()),
                )
            })?;
            atoms.push(Atom {
                slot,
                offset: grid.offset(slot),
                weight,
            });
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::config(
                "delay_measure.weights",
                format!("weights must sum to 1, got {total}"),
            ));
        }
        Ok(Self {
            window: grid.window(),
            atoms,
        })
    }

    /// Unit mass at offset `s`.
    pub fn point(grid: &TimeGrid, s: f64) -> Result<Self> {
        Self::new(grid, &[s], &[1.0])
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Total mass on window slot `j`.
    pub fn weight_at(&self, slot: usize) -> f64 {
        self.atoms
            .iter()
            .filter(|a| a.slot == slot)
            .map(|a| a.weight)
            .sum()
    }

    /// Mass at offset `0`.
    pub fn weight_at_present(&self) -> f64 {
        self.weight_at(self.window - 1)
    }

    /// Mass at offset `-tau`.
    pub fn weight_at_lag(&self) -> f64 {
        self.weight_at(0)
    }
}

/// `int (|y_s - z_s|^2 + 1_{s<0} |y_{s+} - z_{s+}|^2) lambda(ds)`, with `z = 0`
/// when `other` is `None`.
pub fn delay_integral(
    seg: &Segment<'_>,
    other: Option<&Segment<'_>>,
    lambda: &DelayMeasure,
) -> Result<f64> {
    if seg.len() != lambda.window() {
        return Err(Error::Shape(format!(
            "segment has {} slots but the delay measure expects {}",
            seg.len(),
            lambda.window()
        )));
    }
    if let Some(o) = other {
        if o.len() != seg.len() || o.dim() != seg.dim() {
            return Err(Error::Shape(format!(
                "segments differ in shape: {}x{} vs {}x{}",
                seg.len(),
                seg.dim(),
                o.len(),
                o.dim()
            )));
        }
    }
    let last = seg.len() - 1;
    let sq = |j: usize, right: bool| -> f64 {
        let a = if right { seg.right_limit(j) } else { seg.get(j) };
        match other {
            None => a.iter().map(|v| v * v).sum(),
            Some(o) => {
                let b = if right { o.right_limit(j) } else { o.get(j) };
                a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
            }
        }
    };
    let mut total = 0.0;
    for atom in lambda.atoms() {
        let mut term = sq(atom.slot, false);
        if atom.slot < last {
            term += sq(atom.slot, true);
        }
        total += atom.weight * term;
    }
    Ok(total)
}

/// Ring buffer holding the last `n + 1` grid values of one path.
#[derive(Debug, Clone)]
pub struct History {
    dim: usize,
    window: usize,
    data: Vec<f64>,
    head: usize,
}

impl History {
    pub fn from_path(init: &PathSegment) -> Self {
        Self {
            dim: init.dim(),
            window: init.len(),
            data: init.values().to_vec(),
            head: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Appends a new grid value, dropping the oldest.
    pub fn push(&mut self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.dim);
        let slot = self.head;
        self.data[slot * self.dim..(slot + 1) * self.dim].copy_from_slice(x);
        self.head = (self.head + 1) % self.window;
    }

    pub fn segment(&self) -> Segment<'_> {
        Segment::ring(&self.data, self.head, self.dim)
    }

    pub fn current(&self) -> &[f64] {
        self.segment().last()
    }
}

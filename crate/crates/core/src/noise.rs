//! Counter-based noise streams.
//!
//! Every random quantity is a pure function of a [`NoiseStreamKey`] and a step
//! counter, so particles can be advanced in any order or on any number of
//! threads without changing a single bit of the result.
//!
//! Key derivation (stable, so external tools can regenerate the noise):
//!
//! * the 256-bit ChaCha8 key is four consecutive SplitMix64 outputs seeded
//!   with `run_seed`, written little-endian;
//! * the ChaCha stream id is `mix(mix(mix(mix(code(kind) + G) ^ particle·C1) ^
//!   population·C2) ^ replica·C3)` with `mix` the SplitMix64 finaliser;
//! * step `k` starts at 32-bit word `k << 20` of that stream.
//!
//! Normals are drawn with `rand_distr::StandardNormal`, Poisson counts with
//! `rand_distr::Poisson`, uniforms with `Rng::random::<f64>()`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};

pub type StreamRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const STEP_SHIFT: u32 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum StreamKind {
    /// `W^r`, the local Brownian motion of a neuron.
    LocalBrownian,
    /// `B^{r,alpha}`, synaptic Brownian motion per presynaptic population.
    PopulationBrownian,
    /// `N^r`, local Poisson measure.
    LocalJumps,
    /// `N^{r,alpha}`, synaptic Poisson measure per presynaptic population.
    PopulationJumps,
    /// Initial path `z^r`.
    Init,
    /// Disorder draws and per-draw seeds.
    Disorder,
    /// Namespace of the mean-field copy ensemble.
    Copy,
}

impl StreamKind {
    fn code(self) -> u64 {
        match self {
            StreamKind::LocalBrownian => 1,
            StreamKind::PopulationBrownian => 2,
            StreamKind::LocalJumps => 3,
            StreamKind::PopulationJumps => 4,
            StreamKind::Init => 5,
            StreamKind::Disorder => 6,
            StreamKind::Copy => 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct NoiseStreamKey {
    pub run_seed: u64,
    pub kind: StreamKind,
    pub particle: u64,
    pub population: u64,
    pub replica: u64,
}

impl NoiseStreamKey {
    pub fn new(run_seed: u64, kind: StreamKind, particle: u64, population: u64, replica: u64) -> Self {
        Self {
            run_seed,
            kind,
            particle,
            population,
            replica,
        }
    }

    pub fn stream_id(&self) -> u64 {
        let mut h = mix(self.kind.code().wrapping_add(GOLDEN));
        h = mix(h ^ self.particle.wrapping_mul(0xD1B5_4A32_D192_ED03));
        h = mix(h ^ self.population.wrapping_mul(0xAEF1_7502_108E_F2D9));
        mix(h ^ self.replica.wrapping_mul(0xF135_7AEA_2E62_A9C5))
    }

    /// Generator positioned at the start of step `step` of this stream.
    pub fn rng(&self, step: u64) -> StreamRng {
        let mut rng = ChaCha8Rng::from_seed(seed_bytes(self.run_seed));
        rng.set_stream(self.stream_id());
        rng.set_word_pos((step as u128) << STEP_SHIFT);
        rng
    }
}

/// Child seed for a sub-experiment (a disorder draw, the copy ensemble, ...).
pub fn derive_seed(seed: u64, kind: StreamKind, index: u64) -> u64 {
    mix(mix(seed ^ mix(kind.code().wrapping_mul(GOLDEN))) ^ index.wrapping_mul(GOLDEN))
}

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn seed_bytes(seed: u64) -> [u8; 32] {
    let mut out = [0u8; 32];
    let mut s = seed;
    for chunk in out.chunks_exact_mut(8) {
        s = s.wrapping_add(GOLDEN);
        chunk.copy_from_slice(&mix(s).to_le_bytes());
    }
    out
}

/// Brownian increment over one grid step: `dim` i.i.d. `N(0, dt)` values.
pub fn brownian_increment(key: &NoiseStreamKey, step: u64, dim: usize, dt: f64) -> Result<Vec<f64>> {
    if dim == 0 {
        return Err(Error::Shape("Brownian dimension must be positive".into()));
    }
    let mut out = vec![0.0; dim];
    fill_brownian(key, step, dt, &mut out);
    Ok(out)
}

pub fn fill_brownian(key: &NoiseStreamKey, step: u64, dt: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    let mut rng = key.rng(step);
    let sd = dt.sqrt();
    for v in out.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *v = sd * z;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JumpEvent {
    pub time: f64,
    pub mark: f64,
}

/// Events of a Poisson measure with intensity `dt ⊗ nu` during the step
/// `(t0, t0 + dt]`; marks come from the normalised mark law.
pub fn jump_events<F>(
    key: &NoiseStreamKey,
    step: u64,
    t0: f64,
    dt: f64,
    nu_total: f64,
    sample_mark: F,
) -> Vec<JumpEvent>
where
    F: Fn(&mut StreamRng) -> f64,
{
    let mut out = Vec::new();
    fill_jump_events(key, step, t0, dt, nu_total, sample_mark, &mut out);
    out
}

pub fn fill_jump_events<F>(
    key: &NoiseStreamKey,
    step: u64,
    t0: f64,
    dt: f64,
    nu_total: f64,
    sample_mark: F,
    out: &mut Vec<JumpEvent>,
) where
    F: Fn(&mut StreamRng) -> f64,
{
    out.clear();
    let mean = nu_total * dt;
    if !(mean > 0.0) {
        return;
    }
    let mut rng = key.rng(step);
    let count = Poisson::new(mean)
        .expect("positive finite Poisson mean")
        .sample(&mut rng) as usize;
    for _ in 0..count {
        let u: f64 = rng.random();
        let time = t0 + dt * (1.0 - u);
        let mark = sample_mark(&mut rng);
        out.push(JumpEvent { time, mark });
    }
}

/// `sum_events integrand(mark) - compensator * dt`, accumulated into `out`.
pub fn compensated_jump_sum<F>(
    events: &[JumpEvent],
    mut integrand: F,
    compensator: &[f64],
    dt: f64,
    out: &mut [f64],
) where
    F: FnMut(f64, &mut [f64]),
{
    let mut buf = vec![0.0; out.len()];
    for ev in events {
        buf.iter_mut().for_each(|v| *v = 0.0);
        integrand(ev.mark, &mut buf);
        for (o, b) in out.iter_mut().zip(&buf) {
            *o += b;
        }
    }
    for (o, c) in out.iter_mut().zip(compensator) {
        *o -= c * dt;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(particle: u64) -> NoiseStreamKey {
        NoiseStreamKey::new(42, StreamKind::LocalBrownian, particle, 0, 0)
    }

    #[test]
    fn brownian_is_deterministic() {
        let a = brownian_increment(&key(3), 17, 4, 0.01).unwrap();
        let b = brownian_increment(&key(3), 17, 4, 0.01).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, brownian_increment(&key(3), 18, 4, 0.01).unwrap());
        assert!(brownian_increment(&key(3), 0, 0, 0.01).is_err());
    }

    #[test]
    fn brownian_variance() {
        let dt = 0.01;
        let n = 1_000_000u64;
        let k = key(0);
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        let mut buf = [0.0; 10];
        for step in 0..n / 10 {
            fill_brownian(&k, step, dt, &mut buf);
            for v in buf {
                sum += v;
                sum2 += v * v;
            }
        }
        let mean = sum / n as f64;
        let var = sum2 / n as f64 - mean * mean;
        let tol = 3.0 * (2.0 * dt * dt / n as f64).sqrt();
        assert!((var - dt).abs() < tol, "var {var} vs {dt} ± {tol}");
    }

    #[test]
    fn distinct_particles_are_uncorrelated() {
        let n = 100_000u64;
        let (a, b) = (key(0), key(1));
        let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
        let mut x = [0.0];
        let mut y = [0.0];
        for step in 0..n {
            fill_brownian(&a, step, 1.0, &mut x);
            fill_brownian(&b, step, 1.0, &mut y);
            sab += x[0] * y[0];
            saa += x[0] * x[0];
            sbb += y[0] * y[0];
        }
        let rho = sab / (saa * sbb).sqrt();
        assert!(rho.abs() < 0.01, "rho = {rho}");
    }

    #[test]
    fn zero_intensity_has_no_events() {
        let k = NoiseStreamKey::new(1, StreamKind::LocalJumps, 0, 0, 0);
        for step in 0..100 {
            assert!(jump_events(&k, step, 0.0, 0.1, 0.0, |_| 1.0).is_empty());
        }
    }

    #[test]
    fn jump_events_are_deterministic_and_in_step() {
        let k = NoiseStreamKey::new(9, StreamKind::PopulationJumps, 2, 1, 5);
        for step in 0..200 {
            let t0 = step as f64 * 0.5;
            let a = jump_events(&k, step, t0, 0.5, 4.0, |r| r.random::<f64>());
            let b = jump_events(&k, step, t0, 0.5, 4.0, |r| r.random::<f64>());
            assert_eq!(a, b);
            assert!(a.iter().all(|e| e.time > t0 && e.time <= t0 + 0.5));
        }
    }

    #[test]
    fn poisson_mean_count() {
        // nu = 2, T = 1, dt = 0.01, averaged over 10^4 replicas.
        let reps = 10_000u64;
        let mut total = 0usize;
        for r in 0..reps {
            let k = NoiseStreamKey::new(5, StreamKind::LocalJumps, 0, 0, r);
            for step in 0..100 {
                total += jump_events(&k, step, step as f64 * 0.01, 0.01, 2.0, |_| 1.0).len();
            }
        }
        let mean = total as f64 / reps as f64;
        assert!((mean - 2.0).abs() < 0.05, "mean count {mean}");
    }

    #[test]
    fn compensated_sum_examples() {
        let mut out = [0.0; 2];
        compensated_jump_sum(&[], |_, _| {}, &[1.0, -2.0], 0.1, &mut out);
        assert_eq!(out, [-0.1, 0.2]);

        let events = [JumpEvent { time: 0.5, mark: 3.0 }];
        let mut out = [0.0];
        compensated_jump_sum(&events, |_, o| o[0] = 0.0, &[0.0], 0.1, &mut out);
        assert_eq!(out, [0.0]);
    }

    #[test]
    fn compensated_sum_is_mean_zero() {
        let (c, nu, dt) = (1.5, 3.0, 0.01);
        let n = 100_000u64;
        let k = NoiseStreamKey::new(11, StreamKind::LocalJumps, 0, 0, 0);
        let mut total = 0.0;
        for step in 0..n {
            let ev = jump_events(&k, step, 0.0, dt, nu, |_| 1.0);
            let mut out = [0.0];
            compensated_jump_sum(&ev, |_, o| o[0] = c, &[c * nu], dt, &mut out);
            total += out[0];
        }
        let mean = total / n as f64;
        let tol = 3.0 * c * (nu * dt / n as f64).sqrt();
        assert!(mean.abs() < tol, "mean {mean} tol {tol}");
    }

    #[test]
    fn derived_seeds_differ() {
        let a = derive_seed(1, StreamKind::Disorder, 0);
        let b = derive_seed(1, StreamKind::Disorder, 1);
        let c = derive_seed(1, StreamKind::Copy, 0);
        assert!(a != b && a != c && b != c);
    }
}

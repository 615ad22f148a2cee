//! Equilibrium statistics: temperature conventions, time-averaged
//! observables, single-orbit Gibbs thermodynamics and mean-field
//! self-consistency.
//!
//! With dissipation `theta` and noise `sigma` the stationary law on each
//! orbit is `exp(-beta h) / Z` with `beta = 2 theta / sigma^2`, i.e. the
//! temperature is `T = sigma^2 / (2 theta)`.
//!
//! Monte-Carlo estimators split their samples into fixed-size chunks, each
//! drawn from its own keyed stream. Chunk sums are combined in chunk order,
//! so the result depends only on the seed, never on threading.

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::integrate::Trajectory;

type V3 = Vector3<f64>;

/// Samples per Monte-Carlo chunk.
pub const CHUNK: usize = 4096;

/// Inverse temperature for dissipation `theta` and noise `sigma`.
pub fn beta_from_noise(theta: f64, sigma: f64) -> f64 {
    2.0 * theta / (sigma * sigma)
}

/// Noise amplitude giving temperature `t` at dissipation `theta`.
pub fn sigma_for_temperature(theta: f64, t: f64) -> f64 {
    (2.0 * theta * t).sqrt()
}

/// Time-averaged observables over the post-burn-in window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observables {
    /// Time average of the node-averaged order-parameter field.
    pub magnetisation: V3,
    /// Norm of `magnetisation`.
    pub magnitude: f64,
    /// Time average of the componentwise absolute order parameter. Unlike
    /// `magnetisation` it survives sign flips and slow rotations of the
    /// ordered direction in finite systems.
    pub abs_magnetisation: V3,
    pub energy_mean: f64,
    pub energy_var: f64,
    /// Samples inside the window.
    pub samples: usize,
    /// Samples discarded as burn-in.
    pub burn_in: usize,
}

/// Streaming version of [`observables_from_trajectory`].
#[derive(Debug, Clone)]
pub struct ObservableAccumulator {
    skip: usize,
    seen: usize,
    count: usize,
    m_sum: V3,
    abs_sum: V3,
    e_mean: f64,
    e_m2: f64,
}

impl ObservableAccumulator {
    /// `total` is the number of samples that will be pushed; the first
    /// `floor(burn_in * total)` are discarded.
    pub fn new(total: usize, burn_in: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&burn_in) {
            return Err(Error::InvalidConfig(format!("burn-in fraction must lie in [0, 1), got {burn_in}")));
        }
        let skip = (burn_in * total as f64).floor() as usize;
        Ok(ObservableAccumulator { skip, seen: 0, count: 0, m_sum: V3::zeros(), abs_sum: V3::zeros(), e_mean: 0.0, e_m2: 0.0 })
    }

    pub fn push(&mut self, magnetisation: V3, energy: f64) {
        self.seen += 1;
        if self.seen <= self.skip {
            return;
        }
        self.count += 1;
        self.m_sum += magnetisation;
        self.abs_sum += magnetisation.abs();
        let delta = energy - self.e_mean;
        self.e_mean += delta / self.count as f64;
        self.e_m2 += delta * (energy - self.e_mean);
    }

    pub fn finish(&self) -> Result<Observables> {
        if self.count == 0 {
            return Err(Error::EmptyWindow);
        }
        let m = self.m_sum / self.count as f64;
        Ok(Observables {
            magnetisation: m,
            magnitude: m.norm(),
            abs_magnetisation: self.abs_sum / self.count as f64,
            energy_mean: self.e_mean,
            energy_var: self.e_m2 / self.count as f64,
            samples: self.count,
            burn_in: self.skip.min(self.seen),
        })
    }
}

/// Averages a stored trajectory after discarding the leading `burn_in`
/// fraction of its samples.
pub fn observables_from_trajectory(traj: &Trajectory, burn_in: f64) -> Result<Observables> {
    let mut acc = ObservableAccumulator::new(traj.len(), burn_in)?;
    for (m, e) in traj.magnetisation.iter().zip(&traj.energies) {
        acc.push(*m, *e);
    }
    acc.finish()
}

/// Gibbs thermodynamics of a single free body on the sphere `|Pi| = r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitThermo {
    pub partition: f64,
    pub log_partition: f64,
    pub mean_energy: f64,
    /// Energy variance, `<E^2> - <E>^2`.
    pub energy_var: f64,
    /// `log Z + beta <E>`.
    pub entropy: f64,
    pub log_partition_stderr: f64,
    pub mean_energy_stderr: f64,
    pub energy_var_stderr: f64,
    pub entropy_stderr: f64,
}

fn unit_sphere<R: Rng>(rng: &mut R) -> V3 {
    let z: f64 = rng.random_range(-1.0..1.0);
    let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let s = (1.0 - z * z).sqrt();
    V3::new(s * phi.cos(), s * phi.sin(), z)
}

fn chunk_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn chunk_sizes(samples: usize) -> Vec<usize> {
    let full = samples / CHUNK;
    let mut sizes = vec![CHUNK; full];
    if samples % CHUNK != 0 {
        sizes.push(samples % CHUNK);
    }
    sizes
}

/// Monte-Carlo estimate of `Z`, `<E>`, the energy variance and the entropy
/// of one body with inertia `inertia` on the sphere of radius `radius`, for
/// `h = 1/2 Pi . I^-1 Pi`. Standard errors follow from the delta method.
pub fn orbit_thermo_single(
    inertia: &Matrix3<f64>,
    radius: f64,
    beta: f64,
    samples: usize,
    seed: u64,
    execution: Execution,
) -> Result<OrbitThermo> {
    if !(radius > 0.0 && beta.is_finite() && beta > 0.0) {
        return Err(Error::InvalidConfig("radius and beta must be positive".into()));
    }
    if samples < 2 {
        return Err(Error::InvalidConfig("need at least two samples".into()));
    }
    let inv = inertia
        .try_inverse()
        .ok_or_else(|| Error::InvalidTensor("inertia tensor is singular".into()))?;
    // Lowest energy on the sphere, used to keep the weights in range.
    let h_min = 0.5 * radius * radius * nalgebra::SymmetricEigen::new(inv).eigenvalues.min();
    let sizes = chunk_sizes(samples);

    // Raw sums of w^a h^b: [w, wh, wh2, w2, w2h, w2h2, w2h3, w2h4].
    let partials = exec::map_indices(execution, sizes.len(), |c| {
        let mut rng = chunk_rng(seed, c as u64);
        let mut s = [0.0f64; 8];
        for _ in 0..sizes[c] {
            let p = unit_sphere(&mut rng) * radius;
            let h = 0.5 * p.dot(&(inv * p));
            let w = (-beta * (h - h_min)).exp();
            let w2 = w * w;
            s[0] += w;
            s[1] += w * h;
            s[2] += w * h * h;
            s[3] += w2;
            s[4] += w2 * h;
            s[5] += w2 * h * h;
            s[6] += w2 * h * h * h;
            s[7] += w2 * h * h * h * h;
        }
        s
    });
    let mut s = [0.0f64; 8];
    for p in &partials {
        for k in 0..8 {
            s[k] += p[k];
        }
    }
    let n = samples as f64;
    let area = 4.0 * std::f64::consts::PI * radius * radius;
    let mean_w = s[0] / n;
    let log_z = area.ln() + mean_w.ln() - beta * h_min;
    let e = s[1] / s[0];
    let var = s[2] / s[0] - e * e;

    let var_w = (s[3] / n - mean_w * mean_w).max(0.0);
    let se_log_z = (var_w / n).sqrt() / mean_w;
    // Ratio estimators: se = sqrt(sum w^2 (g - <g>)^2) / sum w.
    let se_e = (s[5] - 2.0 * e * s[4] + e * e * s[3]).max(0.0).sqrt() / s[0];
    // g = (h - e)^2 - var, expanded in raw powers of h.
    let (e2, e3, e4) = (e * e, e * e * e, e * e * e * e);
    let sum_dev4 = s[7] - 4.0 * e * s[6] + 6.0 * e2 * s[5] - 4.0 * e3 * s[4] + e4 * s[3];
    let sum_dev2 = s[5] - 2.0 * e * s[4] + e2 * s[3];
    let se_var = (sum_dev4 - 2.0 * var * sum_dev2 + var * var * s[3]).max(0.0).sqrt() / s[0];

    Ok(OrbitThermo {
        partition: log_z.exp(),
        log_partition: log_z,
        mean_energy: e,
        energy_var: var,
        entropy: log_z + beta * e,
        log_partition_stderr: se_log_z,
        mean_energy_stderr: se_e,
        energy_var_stderr: se_var,
        entropy_stderr: se_log_z + beta * se_e,
    })
}

/// Fixed-point iteration settings shared by the mean-field solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldConfig {
    pub samples: usize,
    /// Weight of the new iterate, in `(0, 1]`.
    pub damping: f64,
    /// Convergence threshold on `|F(m) - m|`, relative to the orbit radius.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for MeanFieldConfig {
    fn default() -> Self {
        MeanFieldConfig { samples: 200_000, damping: 0.5, tolerance: 1e-7, max_iterations: 2000, seed: 0 }
    }
}

impl MeanFieldConfig {
    fn validate(&self) -> Result<()> {
        if self.samples < 2 {
            return Err(Error::InvalidConfig("mean field needs at least two samples".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidConfig(format!("damping must lie in (0, 1], got {}", self.damping)));
        }
        if !(self.tolerance > 0.0) || self.max_iterations == 0 {
            return Err(Error::InvalidConfig("tolerance and iteration cap must be positive".into()));
        }
        Ok(())
    }
}

/// Self-consistent order parameter started from one symmetry-broken guess.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldBranch {
    /// Body axis of the initial guess.
    pub axis: usize,
    pub order: V3,
    pub converged: bool,
    pub iterations: usize,
    /// Standard error of each component of the fixed point, propagating
    /// the Monte-Carlo noise of the map through its linearisation.
    pub stderr: V3,
}

/// Result of a mean-field solve: the branch of largest magnitude plus all
/// three branches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldSolution {
    pub temperature: f64,
    pub order: V3,
    pub converged: bool,
    pub iterations: usize,
    pub stderr: V3,
    pub branches: Vec<MeanFieldBranch>,
}

/// Fixed sample set reused for every evaluation of the self-consistency map
/// (common random numbers): order-parameter vectors with log importance
/// weights, split into chunks.
struct SampleSet {
    chunks: Vec<Vec<(V3, f64)>>,
}

/// Weighted moments of one evaluation of the self-consistency map.
struct MapMoments {
    value: V3,
    /// Monte-Carlo covariance of `value`.
    noise: Matrix3<f64>,
    /// Covariance of the sampled vectors under the tilted weights.
    spread: Matrix3<f64>,
}

impl SampleSet {
    /// `F(m) = sum w x e^{beta x.Jm} / sum w e^{beta x.Jm}` with its
    /// Monte-Carlo covariance and the tilted covariance of `x`.
    fn map(&self, field: &V3, beta: f64, execution: Execution) -> MapMoments {
        let max_log = self
            .chunks
            .iter()
            .flatten()
            .map(|(x, lw)| lw + beta * x.dot(field))
            .fold(f64::NEG_INFINITY, f64::max);
        // Per chunk: sum w, sum w x, sum w x x^T, sum w^2, sum w^2 x, sum w^2 x x^T.
        let partials = exec::map_slice(execution, &self.chunks, |chunk| {
            let mut acc = (0.0, V3::zeros(), Matrix3::zeros(), 0.0, V3::zeros(), Matrix3::zeros());
            for (x, lw) in chunk {
                let w = (lw + beta * x.dot(field) - max_log).exp();
                let xx = x * x.transpose();
                acc.0 += w;
                acc.1 += x * w;
                acc.2 += xx * w;
                acc.3 += w * w;
                acc.4 += x * (w * w);
                acc.5 += xx * (w * w);
            }
            acc
        });
        let mut t = (0.0, V3::zeros(), Matrix3::zeros(), 0.0, V3::zeros(), Matrix3::zeros());
        for p in partials {
            t.0 += p.0;
            t.1 += p.1;
            t.2 += p.2;
            t.3 += p.3;
            t.4 += p.4;
            t.5 += p.5;
        }
        let (sw, swx, swxx, sw2, sw2x, sw2xx) = t;
        let f = swx / sw;
        let ff = f * f.transpose();
        let noise = (sw2xx - sw2x * f.transpose() - f * sw2x.transpose() + ff * sw2) / (sw * sw);
        let spread = swxx / sw - ff;
        MapMoments { value: f, noise, spread }
    }
}

/// Standard error of a fixed point `m = F(m)` when `F` carries Monte-Carlo
/// noise: `(I - DF)^-1 noise (I - DF)^-T` with `DF = beta spread J`.
fn fixed_point_stderr(moments: &MapMoments, coupling: &Matrix3<f64>, beta: f64) -> V3 {
    let gain = Matrix3::identity() - moments.spread * coupling * beta;
    match gain.try_inverse() {
        Some(inv) => {
            let cov = inv * moments.noise * inv.transpose();
            V3::from_fn(|k, _| cov[(k, k)].max(0.0).sqrt())
        }
        None => V3::repeat(f64::INFINITY),
    }
}

fn solve(
    set: &SampleSet,
    coupling: &Matrix3<f64>,
    radius: f64,
    temperature: f64,
    cfg: &MeanFieldConfig,
    execution: Execution,
) -> MeanFieldSolution {
    let beta = 1.0 / temperature;
    let branches: Vec<MeanFieldBranch> = (0..3)
        .map(|axis| {
            let mut m = V3::zeros();
            m[axis] = 0.9 * radius;
            let mut converged = false;
            let mut iterations = 0;
            for it in 1..=cfg.max_iterations {
                let f = set.map(&(coupling * m), beta, execution).value;
                iterations = it;
                let step = f - m;
                m += step * cfg.damping;
                if step.norm() < cfg.tolerance * radius {
                    converged = true;
                    break;
                }
            }
            let stderr = fixed_point_stderr(&set.map(&(coupling * m), beta, execution), coupling, beta);
            MeanFieldBranch { axis, order: m, converged, iterations, stderr }
        })
        .collect();
    let best = branches
        .iter()
        .copied()
        .reduce(|a, b| if b.order.norm() > a.order.norm() * (1.0 + 1e-9) { b } else { a })
        .expect("three branches");
    MeanFieldSolution {
        temperature,
        order: best.order,
        converged: best.converged,
        iterations: best.iterations,
        stderr: best.stderr,
        branches,
    }
}

fn check_temperature(t: f64) -> Result<()> {
    if t.is_finite() && t > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("temperature must be positive, got {t}")))
    }
}

/// Mean-field order parameter `<Pi>` of the rigid-body network: each body
/// on the sphere `|Pi| = radius` feels `h = 1/2 Pi.I^-1 Pi - Pi.J<Pi>`.
pub fn meanfield_rb(
    inertia: &Matrix3<f64>,
    coupling: &Matrix3<f64>,
    radius: f64,
    temperature: f64,
    cfg: &MeanFieldConfig,
    execution: Execution,
) -> Result<MeanFieldSolution> {
    cfg.validate()?;
    check_temperature(temperature)?;
    if !(radius > 0.0) {
        return Err(Error::InvalidConfig("radius must be positive".into()));
    }
    let inv = inertia
        .try_inverse()
        .ok_or_else(|| Error::InvalidTensor("inertia tensor is singular".into()))?;
    let beta = 1.0 / temperature;
    let sizes = chunk_sizes(cfg.samples);
    let chunks = exec::map_indices(execution, sizes.len(), |c| {
        let mut rng = chunk_rng(cfg.seed, 2 * c as u64);
        (0..sizes[c])
            .map(|_| {
                let p = unit_sphere(&mut rng) * radius;
                (p, -beta * 0.5 * p.dot(&(inv * p)))
            })
            .collect()
    });
    Ok(solve(&SampleSet { chunks }, coupling, radius, temperature, cfg, execution))
}

/// Mean-field order parameter `<Gamma>` of the heavy-top network on the
/// orbit `Pi.Gamma = c1`, `|Gamma|^2 = c2`, with `h = 1/2 Pi.I^-1 Pi -
/// Gamma.J<Gamma>`.
///
/// The orbit is sampled as `Gamma` uniform on its sphere and
/// `Pi = (c1/c2) Gamma + v`, with `v` a Gaussian in the plane orthogonal to
/// `Gamma` of variance `T * I_max` per direction, importance-reweighted to
/// the flat measure on the fibre.
pub fn meanfield_ht(
    inertia: &Matrix3<f64>,
    coupling: &Matrix3<f64>,
    c1: f64,
    c2: f64,
    temperature: f64,
    cfg: &MeanFieldConfig,
    execution: Execution,
) -> Result<MeanFieldSolution> {
    cfg.validate()?;
    check_temperature(temperature)?;
    if !(c2 > 0.0) || !c1.is_finite() {
        return Err(Error::InvalidConfig("need c2 > 0 and finite c1".into()));
    }
    let inv = inertia
        .try_inverse()
        .ok_or_else(|| Error::InvalidTensor("inertia tensor is singular".into()))?;
    let i_max = nalgebra::SymmetricEigen::new(*inertia).eigenvalues.max();
    let beta = 1.0 / temperature;
    let s = (temperature * i_max).sqrt();
    let radius = c2.sqrt();
    let ratio = c1 / c2;
    let sizes = chunk_sizes(cfg.samples);
    let chunks = exec::map_indices(execution, sizes.len(), |c| {
        let mut dir_rng = chunk_rng(cfg.seed, 2 * c as u64);
        let mut fibre_rng = chunk_rng(cfg.seed, 2 * c as u64 + 1);
        (0..sizes[c])
            .map(|_| {
                let u = unit_sphere(&mut dir_rng);
                let helper = if u.x.abs() < 0.9 { V3::x() } else { V3::y() };
                let e1 = u.cross(&helper).normalize();
                let e2 = u.cross(&e1);
                let z1: f64 = StandardNormal.sample(&mut fibre_rng);
                let z2: f64 = StandardNormal.sample(&mut fibre_rng);
                let v = (e1 * z1 + e2 * z2) * s;
                let gamma = u * radius;
                let pi = gamma * ratio + v;
                let lw = -beta * 0.5 * pi.dot(&(inv * pi)) + 0.5 * (z1 * z1 + z2 * z2);
                (gamma, lw)
            })
            .collect()
    });
    Ok(solve(&SampleSet { chunks }, coupling, radius, temperature, cfg, execution))
}

//! Temperature sweeps over independent (or annealed) simulation cells,
//! transition detection and tabular export.
//!
//! Every cell `(temperature, replica)` derives its own seed from the base
//! seed and its grid position, so results do not depend on scheduling.

use std::io::Write;
use std::time::Instant;

use nalgebra::Vector3;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::graph::Network;
use crate::integrate::{IntegratorConfig, run_observed};
use crate::model::{self, CasimirLevels, Coupling, LatticeState};
use crate::statmech::{MeanFieldSolution, ObservableAccumulator, Observables, sigma_for_temperature};

type V3 = Vector3<f64>;

/// Temperatures to visit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TemperatureGrid {
    List { values: Vec<f64> },
    Geometric { min: f64, max: f64, count: usize },
    Linear { min: f64, max: f64, count: usize },
}

impl TemperatureGrid {
    pub fn values(&self) -> Result<Vec<f64>> {
        let out = match self {
            TemperatureGrid::List { values } => values.clone(),
            TemperatureGrid::Geometric { min, max, count } => {
                check_range(*min, *max, *count)?;
                if *count == 1 {
                    vec![*min]
                } else {
                    let r = (max / min).powf(1.0 / (*count as f64 - 1.0));
                    (0..*count).map(|k| min * r.powi(k as i32)).collect()
                }
            }
            TemperatureGrid::Linear { min, max, count } => {
                check_range(*min, *max, *count)?;
                if *count == 1 {
                    vec![*min]
                } else {
                    let h = (max - min) / (*count as f64 - 1.0);
                    (0..*count).map(|k| min + h * k as f64).collect()
                }
            }
        };
        if out.is_empty() || out.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::InvalidConfig("temperatures must be positive and finite".into()));
        }
        Ok(out)
    }
}

fn check_range(min: f64, max: f64, count: usize) -> Result<()> {
    if count == 0 || !(min > 0.0 && max >= min && max.is_finite()) {
        return Err(Error::InvalidConfig(format!("bad temperature range [{min}, {max}] with {count} points")));
    }
    Ok(())
}

/// How each cell's initial state is produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    /// Independent uniformly random directions on each node's orbit.
    RandomOnOrbit,
    /// All nodes aligned with `axis`, then `nodes` randomly chosen nodes (all
    /// of them when absent) tilted by a random vector of relative size
    /// `perturbation`.
    NearFerro {
        axis: [f64; 3],
        #[serde(default)]
        perturbation: f64,
        #[serde(default)]
        nodes: Option<usize>,
    },
    /// A fixed state, used as is.
    Given { state: LatticeState },
}

/// Per-node orbit sizes for generated initial states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitLevels {
    /// Rigid body: `|Pi_i|`.
    #[serde(default = "one")]
    pub radius: f64,
    /// Heavy top: `Pi_i . Gamma_i`.
    #[serde(default = "one")]
    pub c1: f64,
    /// Heavy top: `|Gamma_i|^2`.
    #[serde(default = "one")]
    pub c2: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for OrbitLevels {
    fn default() -> Self {
        OrbitLevels { radius: 1.0, c1: 1.0, c2: 1.0 }
    }
}

fn random_unit<R: Rng>(rng: &mut R) -> V3 {
    let z: f64 = rng.random_range(-1.0..1.0);
    let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let s = (1.0 - z * z).sqrt();
    V3::new(s * phi.cos(), s * phi.sin(), z)
}

/// Builds an initial state for `net`.
pub fn initial_state(
    net: &Network,
    coupling: Coupling,
    initial: &InitialCondition,
    levels: &OrbitLevels,
    seed: u64,
) -> Result<LatticeState> {
    let n = net.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let directions: Vec<V3> = match initial {
        InitialCondition::Given { state } => {
            if state.coupling() != coupling {
                return Err(Error::StateMismatch("initial state has the wrong coupling".into()));
            }
            state.check(net)?;
            return Ok(state.clone());
        }
        InitialCondition::RandomOnOrbit => (0..n).map(|_| random_unit(&mut rng)).collect(),
        InitialCondition::NearFerro { axis, perturbation, nodes } => {
            let a = V3::new(axis[0], axis[1], axis[2]);
            if !(a.norm() > 0.0) || !perturbation.is_finite() || *perturbation < 0.0 {
                return Err(Error::InvalidConfig("near-ferro axis must be nonzero, perturbation non-negative".into()));
            }
            let a = a.normalize();
            let mut dirs = vec![a; n];
            let mut chosen: Vec<usize> = (0..n).collect();
            if let Some(k) = nodes {
                // Partial Fisher-Yates: the first k entries are a random subset.
                for i in 0..(*k).min(n) {
                    let j = rng.random_range(i..n);
                    chosen.swap(i, j);
                }
                chosen.truncate((*k).min(n));
            }
            for &i in &chosen {
                let kick = V3::new(
                    StandardNormal.sample(&mut rng),
                    StandardNormal.sample(&mut rng),
                    StandardNormal.sample(&mut rng),
                );
                let d = a + kick * (*perturbation / 3f64.sqrt());
                dirs[i] = if d.norm() > 0.0 { d.normalize() } else { a };
            }
            dirs
        }
    };
    Ok(match coupling {
        Coupling::Momentum => {
            if !(levels.radius > 0.0) {
                return Err(Error::InvalidConfig("orbit radius must be positive".into()));
            }
            LatticeState::Momentum { pi: directions.iter().map(|d| d * levels.radius).collect() }
        }
        Coupling::Position => {
            if !(levels.c2 > 0.0) || !levels.c1.is_finite() {
                return Err(Error::InvalidConfig("need c2 > 0 and finite c1".into()));
            }
            let gamma: Vec<V3> = directions.iter().map(|d| d * levels.c2.sqrt()).collect();
            let pi = gamma.iter().map(|g| g * (levels.c1 / levels.c2)).collect();
            LatticeState::HeavyTop { pi, gamma }
        }
    })
}

/// Order in which an annealed sweep visits temperatures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anneal {
    Cooling,
    Heating,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub coupling: Coupling,
    pub temperatures: TemperatureGrid,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    pub theta: f64,
    pub dt: f64,
    pub steps: usize,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    /// Leading fraction of samples discarded before averaging.
    #[serde(default = "default_burn_in")]
    pub burn_in: f64,
    /// Projection back onto the Casimir levels after each step. On by
    /// default: long noisy runs drift off the orbit otherwise.
    #[serde(default = "default_true")]
    pub projection: bool,
    #[serde(default)]
    pub seed: u64,
    pub initial: InitialCondition,
    #[serde(default)]
    pub levels: OrbitLevels,
    /// Warm-start each temperature from the previous one instead of running
    /// independent cells.
    #[serde(default)]
    pub anneal: Option<Anneal>,
    /// Cells whose relative Casimir drift exceeds this are flagged.
    #[serde(default = "default_drift_threshold")]
    pub drift_threshold: f64,
}

fn default_replicas() -> usize {
    1
}
fn default_record_every() -> usize {
    100
}
fn default_burn_in() -> f64 {
    0.5
}
fn default_true() -> bool {
    true
}
fn default_drift_threshold() -> f64 {
    1e-6
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        self.temperatures.values()?;
        if self.replicas == 0 {
            return Err(Error::InvalidConfig("need at least one replica".into()));
        }
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(Error::InvalidConfig("sweeps need positive dissipation theta".into()));
        }
        if !(0.0..1.0).contains(&self.burn_in) {
            return Err(Error::InvalidConfig("burn-in fraction must lie in [0, 1)".into()));
        }
        self.integrator(1.0, 0).validate()
    }

    fn integrator(&self, temperature: f64, seed: u64) -> IntegratorConfig {
        IntegratorConfig {
            dt: self.dt,
            steps: self.steps,
            theta: self.theta,
            sigma: sigma_for_temperature(self.theta, temperature),
            seed,
            record_every: self.record_every,
            projection: self.projection,
        }
    }
}

/// Seed of cell `(t_index, replica)` derived from the base seed.
pub fn cell_seed(base: u64, t_index: usize, replica: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(((t_index as u64) << 32) | replica as u64);
    rng.next_u64()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "message", rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Failed(String),
}

/// Outcome of one `(temperature, replica)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub temperature: f64,
    pub t_index: usize,
    pub replica: usize,
    pub seed: u64,
    pub status: CellStatus,
    pub observables: Option<Observables>,
    /// Largest relative per-node Casimir drift at the end of the run.
    pub casimir_drift: f64,
    pub drift_flagged: bool,
    pub wall_time_s: f64,
}

/// Replica statistics at one temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepAggregate {
    pub temperature: f64,
    pub replicas_ok: usize,
    pub mean_magnetisation: V3,
    pub std_magnetisation: V3,
    pub mean_abs_magnetisation: V3,
    pub mean_magnitude: f64,
    pub std_magnitude: f64,
    pub median_magnitude: f64,
    pub mean_energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub temperatures: Vec<f64>,
    pub rows: Vec<SweepRow>,
    pub aggregates: Vec<SweepAggregate>,
}

struct CellOutput {
    row: SweepRow,
    final_state: Option<LatticeState>,
}

fn run_cell(net: &Network, cfg: &SweepConfig, temps: &[f64], t_index: usize, replica: usize, start: Option<&LatticeState>) -> CellOutput {
    let clock = Instant::now();
    let temperature = temps[t_index];
    let seed = cell_seed(cfg.seed, t_index, replica);
    let fail = |msg: String, clock: Instant| CellOutput {
        row: SweepRow {
            temperature,
            t_index,
            replica,
            seed,
            status: CellStatus::Failed(msg),
            observables: None,
            casimir_drift: f64::NAN,
            drift_flagged: false,
            wall_time_s: clock.elapsed().as_secs_f64(),
        },
        final_state: None,
    };
    let s0 = match start {
        Some(s) => s.clone(),
        None => match initial_state(net, cfg.coupling, &cfg.initial, &cfg.levels, seed ^ 0x5eed_1417) {
            Ok(s) => s,
            Err(e) => return fail(e.to_string(), clock),
        },
    };
    let icfg = cfg.integrator(temperature, seed);
    let mut acc = match ObservableAccumulator::new(icfg.sample_count(), cfg.burn_in) {
        Ok(a) => a,
        Err(e) => return fail(e.to_string(), clock),
    };
    let levels = CasimirLevels::of(&s0);
    let result = run_observed(net, &s0, &icfg, |s| acc.push(s.state.magnetisation(), model::energy(net, s.state)));
    match result.and_then(|fin| acc.finish().map(|obs| (fin, obs))) {
        Ok((fin, obs)) => {
            let drift = CasimirLevels::of(&fin).max_relative_drift(&levels);
            CellOutput {
                row: SweepRow {
                    temperature,
                    t_index,
                    replica,
                    seed,
                    status: CellStatus::Ok,
                    observables: Some(obs),
                    casimir_drift: drift,
                    drift_flagged: drift > cfg.drift_threshold,
                    wall_time_s: clock.elapsed().as_secs_f64(),
                },
                final_state: Some(fin),
            }
        }
        Err(e) => fail(e.to_string(), clock),
    }
}

/// Runs every `(temperature, replica)` cell and aggregates over replicas.
///
/// Independent cells run in parallel. In annealed mode each replica walks
/// the grid in order, starting from the previous temperature's final state,
/// and only replicas run in parallel. A failed cell is recorded and does not
/// stop the sweep.
pub fn run_sweep(net: &Network, cfg: &SweepConfig, execution: Execution) -> Result<SweepResult> {
    cfg.validate()?;
    let temps = cfg.temperatures.values()?;
    let nt = temps.len();
    let mut rows: Vec<SweepRow> = match cfg.anneal {
        None => exec::map_indices(execution, nt * cfg.replicas, |k| run_cell(net, cfg, &temps, k / cfg.replicas, k % cfg.replicas, None).row),
        Some(direction) => {
            let order: Vec<usize> = match direction {
                Anneal::Cooling => (0..nt).rev().collect(),
                Anneal::Heating => (0..nt).collect(),
            };
            exec::map_indices(execution, cfg.replicas, |replica| {
                let mut state: Option<LatticeState> = None;
                let mut out = Vec::with_capacity(nt);
                for &t in &order {
                    let cell = run_cell(net, cfg, &temps, t, replica, state.as_ref());
                    if cell.final_state.is_some() {
                        state = cell.final_state;
                    }
                    out.push(cell.row);
                }
                out
            })
            .into_iter()
            .flatten()
            .collect()
        }
    };
    rows.sort_by_key(|r| (r.t_index, r.replica));
    let aggregates = temps.iter().enumerate().map(|(t, &temp)| aggregate(temp, rows.iter().filter(|r| r.t_index == t))).collect();
    Ok(SweepResult { temperatures: temps, rows, aggregates })
}

fn aggregate<'a>(temperature: f64, rows: impl Iterator<Item = &'a SweepRow>) -> SweepAggregate {
    let obs: Vec<&Observables> = rows.filter_map(|r| r.observables.as_ref()).collect();
    let k = obs.len();
    if k == 0 {
        return SweepAggregate {
            temperature,
            replicas_ok: 0,
            mean_magnetisation: V3::repeat(f64::NAN),
            std_magnetisation: V3::repeat(f64::NAN),
            mean_abs_magnetisation: V3::repeat(f64::NAN),
            mean_magnitude: f64::NAN,
            std_magnitude: f64::NAN,
            median_magnitude: f64::NAN,
            mean_energy: f64::NAN,
        };
    }
    let kf = k as f64;
    let mean_m: V3 = obs.iter().map(|o| o.magnetisation).sum::<V3>() / kf;
    let var_m: V3 = obs.iter().map(|o| (o.magnetisation - mean_m).map(|x| x * x)).sum::<V3>() / kf;
    let mags: Vec<f64> = obs.iter().map(|o| o.magnitude).collect();
    let mean_mag = mags.iter().sum::<f64>() / kf;
    let var_mag = mags.iter().map(|x| (x - mean_mag).powi(2)).sum::<f64>() / kf;
    let mut sorted = mags.clone();
    sorted.sort_by(f64::total_cmp);
    let median = if k % 2 == 1 { sorted[k / 2] } else { 0.5 * (sorted[k / 2 - 1] + sorted[k / 2]) };
    SweepAggregate {
        temperature,
        replicas_ok: k,
        mean_magnetisation: mean_m,
        std_magnetisation: var_m.map(f64::sqrt),
        mean_abs_magnetisation: obs.iter().map(|o| o.abs_magnetisation).sum::<V3>() / kf,
        mean_magnitude: mean_mag,
        std_magnitude: var_mag.sqrt(),
        median_magnitude: median,
        mean_energy: obs.iter().map(|o| o.energy_mean).sum::<f64>() / kf,
    }
}

/// A detected knee in an order-parameter curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub temperature: f64,
    /// Half the local grid spacing around the estimate.
    pub uncertainty: f64,
    /// `|dm/dT|` at the peak.
    pub slope: f64,
    /// Peak height above the surrounding slope floor, relative to the peak.
    pub prominence: f64,
    pub strong: bool,
}

/// A knee is strong when its slope is at least this fraction of the
/// steepest slope in the series...
pub const STRONG_SLOPE_FRACTION: f64 = 0.25;
/// ...and it stands out by at least this fraction of its own height.
pub const STRONG_PROMINENCE: f64 = 0.5;

/// Locates knees of `values(temperatures)` as local maxima of the central
/// difference `|dm/dT|` over interior grid points.
///
/// Runs of equal slope are treated as one maximum at their centre, so a
/// linear series yields a single weak knee.
pub fn detect_transitions(temperatures: &[f64], values: &[f64]) -> Result<Vec<Transition>> {
    let n = temperatures.len();
    if n != values.len() {
        return Err(Error::InvalidConfig("temperature and value series differ in length".into()));
    }
    if n < 3 {
        return Err(Error::InvalidConfig("need at least three points".into()));
    }
    if temperatures.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidConfig("temperatures must be strictly increasing".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig("values must be finite".into()));
    }
    let slope: Vec<f64> = (1..n - 1)
        .map(|k| ((values[k + 1] - values[k - 1]) / (temperatures[k + 1] - temperatures[k - 1])).abs())
        .collect();
    let m = slope.len();
    let smax = slope.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return Ok(Vec::new());
    }
    let same = |a: f64, b: f64| (a - b).abs() <= 1e-9 * smax;

    let mut out = Vec::new();
    let mut i = 0;
    while i < m {
        // Plateau [i, j).
        let mut j = i + 1;
        while j < m && same(slope[j], slope[i]) {
            j += 1;
        }
        let left_lower = i == 0 || slope[i - 1] < slope[i];
        let right_lower = j == m || slope[j] < slope[i];
        if left_lower && right_lower {
            let peak = slope[i];
            let left_floor = floor_until_higher(&slope[..i], peak, true);
            let right_floor = floor_until_higher(&slope[j..], peak, false);
            let floor = match (left_floor, right_floor) {
                (Some(a), Some(b)) => a.max(b),
                (Some(a), None) | (None, Some(a)) => a,
                (None, None) => peak,
            };
            let prominence = (peak - floor) / peak;
            let centre = (i + j - 1) / 2 + 1;
            let t = refine_peak(temperatures, &slope, centre, j - i == 1);
            let spacing = 0.5 * (temperatures[centre + 1] - temperatures[centre - 1]);
            out.push(Transition {
                temperature: t,
                uncertainty: 0.5 * spacing,
                slope: peak,
                prominence,
                strong: peak >= STRONG_SLOPE_FRACTION * smax && prominence >= STRONG_PROMINENCE,
            });
        }
        i = j;
    }
    Ok(out)
}

/// Lowest value of `side` walking away from the peak until a higher value
/// appears; `None` when `side` is empty.
fn floor_until_higher(side: &[f64], peak: f64, leftwards: bool) -> Option<f64> {
    if side.is_empty() {
        return None;
    }
    let iter: Box<dyn Iterator<Item = &f64>> = if leftwards { Box::new(side.iter().rev()) } else { Box::new(side.iter()) };
    let mut floor = peak;
    for &v in iter {
        if v > peak {
            break;
        }
        floor = floor.min(v);
    }
    Some(floor)
}

/// Parabolic refinement of an isolated peak of the slope series; `centre`
/// indexes the temperature grid.
fn refine_peak(temperatures: &[f64], slope: &[f64], centre: usize, isolated: bool) -> f64 {
    let k = centre - 1;
    if !isolated || k == 0 || k + 1 >= slope.len() {
        return temperatures[centre];
    }
    let (t0, t1, t2) = (temperatures[centre - 1], temperatures[centre], temperatures[centre + 1]);
    let (y0, y1, y2) = (slope[k - 1], slope[k], slope[k + 1]);
    let denom = (t0 - t1) * (t0 - t2) * (t1 - t2);
    let a = (t2 * (y1 - y0) + t1 * (y0 - y2) + t0 * (y2 - y1)) / denom;
    let b = (t2 * t2 * (y0 - y1) + t1 * t1 * (y2 - y0) + t0 * t0 * (y1 - y2)) / denom;
    if a >= 0.0 {
        return t1;
    }
    (-b / (2.0 * a)).clamp(t0.min(t1), t2.max(t1))
}

/// Contiguous temperature range dominated by one component of the order
/// parameter, or disordered (`component == None`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub component: Option<usize>,
    pub t_min: f64,
    pub t_max: f64,
    pub points: usize,
}

/// Splits a sweep into bands by the dominant component of the mean
/// absolute order parameter. Points whose magnitude is below `threshold`
/// count as disordered. Runs shorter than `min_points` are dropped and
/// neighbouring runs of the same kind merged.
pub fn dominant_bands(temperatures: &[f64], order: &[V3], threshold: f64, min_points: usize) -> Vec<Band> {
    let labels: Vec<Option<usize>> = order
        .iter()
        .map(|m| if m.norm() < threshold { None } else { Some(m.abs().imax()) })
        .collect();
    let mut runs: Vec<Band> = Vec::new();
    for (k, label) in labels.iter().enumerate() {
        match runs.last_mut() {
            Some(b) if b.component == *label => {
                b.t_max = temperatures[k];
                b.points += 1;
            }
            _ => runs.push(Band { component: *label, t_min: temperatures[k], t_max: temperatures[k], points: 1 }),
        }
    }
    let mut out: Vec<Band> = Vec::new();
    for b in runs.into_iter().filter(|b| b.points >= min_points) {
        match out.last_mut() {
            Some(prev) if prev.component == b.component => {
                prev.t_max = b.t_max;
                prev.points += b.points;
            }
            _ => out.push(b),
        }
    }
    out
}

fn fmt(x: f64) -> String {
    if x.is_finite() { format!("{x:.16e}") } else { String::new() }
}

/// Header of the long-format sweep table.
pub const SWEEP_HEADER: [&str; 17] = [
    "temperature",
    "replica",
    "seed",
    "status",
    "mx",
    "my",
    "mz",
    "magnitude",
    "abs_mx",
    "abs_my",
    "abs_mz",
    "energy_mean",
    "energy_var",
    "samples",
    "burn_in",
    "casimir_drift",
    "drift_flagged",
];

/// Writes one row per cell. Timing is left out so identical configurations
/// produce identical files.
pub fn write_sweep_csv<W: Write>(result: &SweepResult, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let io = |e: csv::Error| Error::Numerical(format!("csv output failed: {e}"));
    w.write_record(SWEEP_HEADER).map_err(io)?;
    for r in &result.rows {
        let status = match &r.status {
            CellStatus::Ok => "ok".to_string(),
            CellStatus::Failed(msg) => format!("failed: {msg}"),
        };
        let o = r.observables;
        let get = |f: fn(&Observables) -> f64| o.as_ref().map(f).map(fmt).unwrap_or_default();
        let count = |f: fn(&Observables) -> usize| o.as_ref().map(|x| f(x).to_string()).unwrap_or_default();
        w.write_record([
            fmt(r.temperature),
            r.replica.to_string(),
            r.seed.to_string(),
            status,
            get(|x| x.magnetisation.x),
            get(|x| x.magnetisation.y),
            get(|x| x.magnetisation.z),
            get(|x| x.magnitude),
            get(|x| x.abs_magnetisation.x),
            get(|x| x.abs_magnetisation.y),
            get(|x| x.abs_magnetisation.z),
            get(|x| x.energy_mean),
            get(|x| x.energy_var),
            count(|x| x.samples),
            count(|x| x.burn_in),
            fmt(r.casimir_drift),
            r.drift_flagged.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::Numerical(format!("csv output failed: {e}")))?;
    Ok(())
}

/// Writes a mean-field curve: `T,c1,c2,c3,converged,iterations,stderr`.
pub fn write_meanfield_csv<W: Write>(solutions: &[MeanFieldSolution], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let io = |e: csv::Error| Error::Numerical(format!("csv output failed: {e}"));
    w.write_record(["T", "c1", "c2", "c3", "converged", "iterations", "stderr"]).map_err(io)?;
    for s in solutions {
        w.write_record([
            fmt(s.temperature),
            fmt(s.order.x),
            fmt(s.order.y),
            fmt(s.order.z),
            s.converged.to_string(),
            s.iterations.to_string(),
            fmt(s.stderr.max()),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::Numerical(format!("csv output failed: {e}")))?;
    Ok(())
}

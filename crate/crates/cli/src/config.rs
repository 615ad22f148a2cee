//! TOML run configuration.

use std::path::{Path, PathBuf};

use lienet::equilibria::RecordSelection;
use lienet::integrate::IntegratorConfig;
use lienet::statmech::MeanFieldConfig;
use lienet::sweep::{Anneal, InitialCondition, OrbitLevels, SweepConfig, TemperatureGrid};
use lienet::{Coupling, Network, TensorSpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub seed: Option<u64>,
    pub network: NetworkConfig,
    pub model: ModelConfig,
    #[serde(default)]
    pub levels: OrbitLevels,
    #[serde(default)]
    pub simulate: Option<SimulateSection>,
    #[serde(default)]
    pub equilibria: Option<EquilibriaSection>,
    #[serde(default)]
    pub meanfield: Option<MeanFieldSection>,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub coupling: Coupling,
}

/// Network description: a rectangular lattice, an inline edge list, or a
/// separate graph file holding an edge list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NetworkConfig {
    Lattice {
        width: usize,
        height: usize,
        #[serde(default = "yes")]
        periodic: bool,
        #[serde(default)]
        inertia: TensorSpec,
        #[serde(default)]
        interaction: TensorSpec,
    },
    Edges(GraphSpec),
    File {
        path: PathBuf,
    },
}

fn yes() -> bool {
    true
}

/// Edge-list graph with default tensors and optional overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub nodes: usize,
    #[serde(default)]
    pub edges: Vec<[usize; 2]>,
    #[serde(default)]
    pub inertia: TensorSpec,
    #[serde(default)]
    pub interaction: TensorSpec,
    #[serde(default)]
    pub node_inertia: Vec<NodeTensor>,
    #[serde(default)]
    pub edge_interaction: Vec<EdgeTensor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeTensor {
    pub node: usize,
    pub tensor: TensorSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeTensor {
    pub edge: [usize; 2],
    pub tensor: TensorSpec,
}

impl GraphSpec {
    pub fn build(&self) -> Result<Network, CliError> {
        let edges: Vec<(usize, usize)> = self.edges.iter().map(|e| (e[0], e[1])).collect();
        let mut net = Network::from_edges(self.nodes, &edges, self.inertia.to_matrix(), self.interaction.to_matrix())?;
        for o in &self.node_inertia {
            net = net.with_node_inertia(o.node, o.tensor.to_matrix())?;
        }
        for o in &self.edge_interaction {
            net = net.with_edge_coupling(o.edge[0], o.edge[1], o.tensor.to_matrix())?;
        }
        Ok(net)
    }
}

impl NetworkConfig {
    /// Builds the network; relative graph-file paths resolve against `base`.
    pub fn build(&self, base: &Path) -> Result<Network, CliError> {
        match self {
            NetworkConfig::Lattice { width, height, periodic, inertia, interaction } => {
                Ok(Network::lattice_2d(*width, *height, *periodic, inertia.to_matrix(), interaction.to_matrix())?)
            }
            NetworkConfig::Edges(spec) => spec.build(),
            NetworkConfig::File { path } => {
                let full = base.join(path);
                let text = std::fs::read_to_string(&full).map_err(|e| CliError::Config(format!("{}: {e}", full.display())))?;
                let spec: GraphSpec = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", full.display())))?;
                spec.build()
            }
        }
    }

    /// Inertia and interaction tensors when they are uniform across the network.
    pub fn uniform_tensors(&self, net: &Network) -> Result<(lienet::Tensor, lienet::Tensor), CliError> {
        if !net.is_homogeneous() || net.edges().is_empty() {
            return Err(CliError::Config("mean field needs a network with uniform tensors and at least one edge".into()));
        }
        Ok((*net.inertia(0), *net.coupling(0)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub dt: f64,
    pub steps: usize,
    #[serde(default)]
    pub theta: f64,
    /// Noise amplitude; mutually exclusive with `temperature`.
    #[serde(default)]
    pub sigma: Option<f64>,
    /// Target temperature, giving `sigma = sqrt(2 theta T)`.
    #[serde(default)]
    pub temperature: Option<f64>,
    #[serde(default = "one_usize")]
    pub record_every: usize,
    #[serde(default)]
    pub projection: bool,
    #[serde(default = "random_initial")]
    pub initial: InitialSpec,
}

fn one_usize() -> usize {
    1
}

fn random_initial() -> InitialSpec {
    InitialSpec::RandomOnOrbit
}

/// Initial condition as written in a configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    RandomOnOrbit,
    NearFerro {
        axis: [f64; 3],
        #[serde(default)]
        perturbation: f64,
        #[serde(default)]
        nodes: Option<usize>,
    },
    /// JSON state dump written by an earlier run.
    File { path: PathBuf },
}

impl InitialSpec {
    pub fn resolve(&self, base: &Path) -> Result<InitialCondition, CliError> {
        Ok(match self {
            InitialSpec::RandomOnOrbit => InitialCondition::RandomOnOrbit,
            InitialSpec::NearFerro { axis, perturbation, nodes } => {
                InitialCondition::NearFerro { axis: *axis, perturbation: *perturbation, nodes: *nodes }
            }
            InitialSpec::File { path } => {
                let full = base.join(path);
                let text = std::fs::read_to_string(&full).map_err(|e| CliError::Config(format!("{}: {e}", full.display())))?;
                let state = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", full.display())))?;
                InitialCondition::Given { state }
            }
        })
    }
}

impl SimulateSection {
    pub fn integrator(&self, seed: u64) -> Result<IntegratorConfig, CliError> {
        let sigma = match (self.sigma, self.temperature) {
            (Some(_), Some(_)) => return Err(CliError::Config("give either sigma or temperature, not both".into())),
            (Some(s), None) => s,
            (None, Some(t)) => {
                if !(t > 0.0) || !(self.theta > 0.0) {
                    return Err(CliError::Config("temperature needs positive theta and temperature".into()));
                }
                lienet::statmech::sigma_for_temperature(self.theta, t)
            }
            (None, None) => 0.0,
        };
        let cfg = IntegratorConfig {
            dt: self.dt,
            steps: self.steps,
            theta: self.theta,
            sigma,
            seed,
            record_every: self.record_every,
            projection: self.projection,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquilibriaSection {
    /// Total Casimir level: `sum 1/2 |Pi_i|^2` (rigid body) or
    /// `sum |Gamma_i|^2` (heavy top).
    #[serde(default = "one_f64")]
    pub level: f64,
    /// Required for position coupling.
    #[serde(default)]
    pub lambda1: Option<f64>,
    #[serde(default)]
    pub records: RecordSelection,
    /// Second derivative of the Casimir function used by the
    /// energy-Casimir test; the test is skipped when absent.
    #[serde(default)]
    pub casimir_curvature: Option<f64>,
}

fn one_f64() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanFieldSection {
    pub temperatures: TemperatureGrid,
    #[serde(default = "default_mf_samples")]
    pub samples: usize,
    #[serde(default = "half")]
    pub damping: f64,
    #[serde(default = "default_tol")]
    pub tolerance: f64,
    #[serde(default = "default_iters")]
    pub max_iterations: usize,
}

fn default_mf_samples() -> usize {
    200_000
}
fn half() -> f64 {
    0.5
}
fn default_tol() -> f64 {
    1e-7
}
fn default_iters() -> usize {
    2000
}

impl MeanFieldSection {
    pub fn solver(&self, seed: u64) -> MeanFieldConfig {
        MeanFieldConfig {
            samples: self.samples,
            damping: self.damping,
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub temperatures: TemperatureGrid,
    #[serde(default = "one_usize")]
    pub replicas: usize,
    pub theta: f64,
    pub dt: f64,
    pub steps: usize,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default = "half")]
    pub burn_in: f64,
    #[serde(default = "yes")]
    pub projection: bool,
    #[serde(default = "random_initial")]
    pub initial: InitialSpec,
    #[serde(default)]
    pub anneal: Option<Anneal>,
    #[serde(default = "default_drift")]
    pub drift_threshold: f64,
    /// Heavy top only: run one sweep per ratio `c1 / c2`, each in its own
    /// subdirectory.
    #[serde(default)]
    pub casimir_ratios: Option<Vec<f64>>,
    /// Also solve the mean-field equation on the same temperature grid.
    #[serde(default)]
    pub meanfield: bool,
}

fn default_record_every() -> usize {
    100
}
fn default_drift() -> f64 {
    1e-6
}

impl SweepSection {
    pub fn to_config(&self, coupling: Coupling, levels: OrbitLevels, seed: u64, base: &Path) -> Result<SweepConfig, CliError> {
        let cfg = SweepConfig {
            coupling,
            temperatures: self.temperatures.clone(),
            replicas: self.replicas,
            theta: self.theta,
            dt: self.dt,
            steps: self.steps,
            record_every: self.record_every,
            burn_in: self.burn_in,
            projection: self.projection,
            seed,
            initial: self.initial.resolve(base)?,
            levels,
            anneal: self.anneal,
            drift_threshold: self.drift_threshold,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn load(path: &Path) -> Result<Config, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

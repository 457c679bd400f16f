//! JSON configuration files.
//!
//! One file describes a cluster, its energy tariffs, the QoS targets, where
//! the channels come from and, optionally, solver overrides and a timeline
//! simulation. Channels are either listed explicitly, one vector per MT with
//! complex entries as `[re, im]` pairs, or drawn from a hexagonal layout.
//!
//! ```json
//! {
//!   "cluster": { "n_bs": 2, "n_ant": 1, "n_mt": 1, "pa_efficiency": 1.0,
//!                "p_max": [100, 100], "p_circuit": [0, 0] },
//!   "energy": { "harvest": [0.2, 1.0], "price_buy": [1, 1], "price_sell": [0.1, 0.1] },
//!   "qos": { "sinr_min": [1.0], "noise_power": [1.0] },
//!   "channels": { "explicit": [[[1.0, 0.0], [0.5, 0.0]]] }
//! }
//! ```

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dual::SolverOptions;
use crate::error::{Error, Result};
use crate::feasibility::FeasibilityOptions;
use crate::model::{CVector, ChannelSet, ClusterConfig, EnergyInputs, ProblemInstance, QosTargets, Scheme};
use crate::scenario::{
    generate_channels, ChannelSource, InfeasiblePolicy, LayoutSpec, SyntheticRenewables, TimelineOptions,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub cluster: ClusterConfig,
    pub energy: EnergyConfig,
    pub qos: QosTargets,
    pub channels: ChannelsConfig,
    #[serde(default, skip_serializing_if = "SolverConfig::is_empty")]
    pub solver: SolverConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationConfig>,
}

/// Tariffs and harvest. The price box defaults to the smallest selling and
/// the largest buying price.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyConfig {
    pub harvest: Vec<f64>,
    pub price_buy: Vec<f64>,
    pub price_sell: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub price_floor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub price_cap: Option<f64>,
}

impl EnergyConfig {
    pub fn to_inputs(&self) -> EnergyInputs {
        let floor = self
            .price_floor
            .unwrap_or_else(|| self.price_sell.iter().copied().fold(f64::INFINITY, f64::min));
        let cap = self
            .price_cap
            .unwrap_or_else(|| self.price_buy.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        EnergyInputs {
            harvest: self.harvest.clone(),
            price_buy: self.price_buy.clone(),
            price_sell: self.price_sell.clone(),
            price_floor: floor,
            price_cap: cap,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ChannelsConfig {
    /// `explicit[k][j] = [re, im]`: entry `j` of MT `k`'s stacked channel.
    Explicit(Vec<Vec<[f64; 2]>>),
    Layout(LayoutSpec),
}

/// Overrides for the solver defaults; absent fields keep the defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// Relative duality gap that counts as converged.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    /// Relative gap at which the outer loop stops.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_gap: Option<f64>,
    /// Ellipsoid iteration budget.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_point_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_point_max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu_cap: Option<f64>,
    /// Ellipsoid budget of the feasibility check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feasibility_max_iter: Option<usize>,
}

impl SolverConfig {
    fn is_empty(&self) -> bool {
        *self == SolverConfig::default()
    }

    pub fn solver_options(&self) -> SolverOptions {
        let mut o = SolverOptions::default();
        if let Some(t) = self.tol {
            o.gap_tol = t;
        }
        if let Some(g) = self.stop_gap {
            o.stop_gap = g;
        }
        if let Some(m) = self.max_iter {
            o.ellipsoid.max_iter = Some(m);
        }
        if let Some(t) = self.fixed_point_tol {
            o.fixed_point.tol = t;
        }
        if let Some(m) = self.fixed_point_max_iter {
            o.fixed_point.max_iter = m;
        }
        o.nu_cap = self.nu_cap.or(o.nu_cap);
        o
    }

    pub fn feasibility_options(&self) -> FeasibilityOptions {
        let mut o = FeasibilityOptions {
            fixed_point: self.solver_options().fixed_point,
            ..FeasibilityOptions::default()
        };
        if let Some(m) = self.feasibility_max_iter {
            o.ellipsoid.max_iter = Some(m);
        }
        o
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelMode {
    /// A fresh draw in every block.
    #[default]
    PerBlock,
    /// The same draws in every block, averaged.
    FixedSet,
}

impl std::str::FromStr for ChannelMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-block" => Ok(ChannelMode::PerBlock),
            "fixed-set" => Ok(ChannelMode::FixedSet),
            other => Err(Error::invalid(format!("unknown channel mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub blocks: usize,
    #[serde(default)]
    pub channel_mode: ChannelMode,
    /// Draws in the fixed set.
    #[serde(default = "default_realizations")]
    pub realizations: usize,
    #[serde(default)]
    pub policy: InfeasiblePolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schemes: Option<Vec<Scheme>>,
    /// Synthetic harvest profile; defaults to one sized by the circuit power.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticRenewables>,
}

fn default_realizations() -> usize {
    1
}

impl Config {
    pub fn from_json(text: &str, source: &str) -> Result<Self> {
        let config: Config = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: source.to_string(),
            line: e.line(),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Config::from_json(&text, &path.display().to_string())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.instance().map(|_| ())?;
        if let Some(sim) = &self.simulation {
            if sim.blocks == 0 && sim.synthetic.is_none() {
                return Err(Error::invalid("simulation needs at least one block"));
            }
            if sim.realizations == 0 {
                return Err(Error::invalid("simulation needs at least one channel realization"));
            }
        }
        Ok(())
    }

    /// The instance described by the file. Layout channels use draw 0.
    pub fn instance(&self) -> Result<ProblemInstance> {
        let channels = match &self.channels {
            ChannelsConfig::Explicit(rows) => ChannelSet::new(
                self.cluster.n_bs,
                self.cluster.n_ant,
                rows.iter()
                    .map(|row| CVector::from_iterator(row.len(), row.iter().map(|[re, im]| Complex64::new(*re, *im))))
                    .collect(),
            )?,
            ChannelsConfig::Layout(layout) => generate_channels(layout, &self.cluster, 0)?,
        };
        ProblemInstance::new(
            self.cluster.clone(),
            self.energy.to_inputs(),
            channels,
            self.qos.clone(),
        )
    }

    /// Timeline options for the `simulation` section (defaults when absent).
    pub fn timeline_options(&self) -> TimelineOptions {
        let sim = self.simulation.clone().unwrap_or(SimulationConfig {
            blocks: 24,
            channel_mode: ChannelMode::default(),
            realizations: 1,
            policy: InfeasiblePolicy::default(),
            schemes: None,
            synthetic: None,
        });
        let channels = match (&self.channels, sim.channel_mode) {
            (ChannelsConfig::Explicit(_), _) => ChannelSource::Template,
            (ChannelsConfig::Layout(l), ChannelMode::PerBlock) => ChannelSource::PerBlock(l.clone()),
            (ChannelsConfig::Layout(l), ChannelMode::FixedSet) => ChannelSource::FixedSet {
                layout: l.clone(),
                realizations: sim.realizations,
            },
        };
        TimelineOptions {
            schemes: sim.schemes.unwrap_or_else(|| Scheme::ALL.to_vec()),
            channels,
            policy: sim.policy,
            solver: self.solver.solver_options(),
            feasibility: self.solver.feasibility_options(),
        }
    }

    /// The synthetic harvest profile for the `simulation` section.
    pub fn synthetic_renewables(&self, seed: u64) -> SyntheticRenewables {
        let sim = self.simulation.as_ref();
        match sim.and_then(|s| s.synthetic.clone()) {
            Some(s) => s,
            None => SyntheticRenewables::for_circuit_power(&self.cluster.p_circuit, sim.map_or(24, |s| s.blocks), seed),
        }
    }

    /// Replace every seed in the file.
    pub fn reseed(&mut self, seed: u64) {
        if let ChannelsConfig::Layout(l) = &mut self.channels {
            l.seed = seed;
        }
        if let Some(s) = self.simulation.as_mut().and_then(|s| s.synthetic.as_mut()) {
            s.seed = seed;
        }
    }
}

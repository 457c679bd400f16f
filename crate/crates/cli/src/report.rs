//! JSON shapes printed on stdout.

use gridcomp_core::model::consumption;
use gridcomp_core::scenario::SchemeSummary;
use gridcomp_core::{Feasibility, ProblemInstance, Scheme, SolveOutcome};
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct SolveReport {
    pub scheme: Scheme,
    pub converged: bool,
    pub cost: f64,
    pub tx_power: Vec<f64>,
    pub consumption: Vec<f64>,
    pub buy: Vec<f64>,
    pub sell: Vec<f64>,
    pub dual: DualReport,
    /// `beams[k][j] = [re, im]`: entry `j` of MT `k`'s stacked beamformer.
    pub beams: Vec<Vec<[f64; 2]>>,
}

#[derive(Debug, Serialize)]
pub struct DualReport {
    pub mu: Vec<f64>,
    pub nu: Vec<f64>,
    pub dual_value: f64,
    pub primal_objective: f64,
    pub relative_gap: f64,
    pub iterations: usize,
}

impl SolveReport {
    pub fn new(instance: &ProblemInstance, out: &SolveOutcome) -> Self {
        let consumption = (0..instance.n_bs())
            .map(|i| consumption(&out.beams, &instance.cluster, i).expect("BS index in range"))
            .collect();
        SolveReport {
            scheme: out.scheme,
            converged: out.converged,
            cost: out.cost,
            tx_power: out.beams.tx_powers(),
            consumption,
            buy: out.schedule.buy.clone(),
            sell: out.schedule.sell.clone(),
            dual: DualReport {
                mu: out.dual_mu.clone(),
                nu: out.dual_nu.clone(),
                dual_value: out.dual_value,
                primal_objective: out.primal_objective,
                relative_gap: out.relative_gap(),
                iterations: out.iterations,
            },
            beams: out
                .beams
                .w
                .iter()
                .map(|w| w.iter().map(|c| [c.re, c.im]).collect())
                .collect(),
        }
    }
}

#[derive(Debug, Serialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum FeasibilityReport {
    Feasible {
        zero_forcing: bool,
        tx_power: Vec<f64>,
    },
    Infeasible {
        zero_forcing: bool,
        dual_bound: f64,
        budget: f64,
    },
}

impl FeasibilityReport {
    pub fn new(verdict: &Feasibility, zero_forcing: bool) -> Self {
        match verdict {
            Feasibility::Feasible { witness } => FeasibilityReport::Feasible {
                zero_forcing,
                tx_power: witness.tx_powers(),
            },
            Feasibility::Infeasible { dual_bound, budget } => FeasibilityReport::Infeasible {
                zero_forcing,
                dual_bound: *dual_bound,
                budget: *budget,
            },
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SimulateReport {
    pub blocks: usize,
    pub blocks_csv: String,
    pub summary_csv: String,
    pub summary: Vec<SchemeSummary>,
}

#[derive(Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub delta: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, delta: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            delta,
            tolerance,
            pass: delta <= tolerance,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct VerifyReport {
    pub pass: bool,
    pub checks: Vec<Check>,
}

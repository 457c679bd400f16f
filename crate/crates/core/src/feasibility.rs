//! Can the per-BS power caps meet every QoS target at all?
//!
//! Both checks run dual ascent on the capped sum-power problem
//! `min Σ_k ‖w_k‖²` subject to the SINR (or ZF SNR) targets and
//! `tx_i ≤ P_max,i`. Its dual function
//! `g(ν) = Σ_i tx_i(ν) + Σ_i ν_i (tx_i(ν) − P_max,i)` is evaluated with the
//! same inner beamformers as the cost solvers, using noise weights `1 + ν_i`.
//!
//! Verdicts:
//! * any iterate whose beams respect the caps is a witness, re-verified with
//!   the model evaluators;
//! * `g(ν) > Σ_i P_max,i` certifies infeasibility, since every feasible
//!   point has sum power at most `Σ_i P_max,i` and weak duality bounds `g`
//!   by the optimal sum power;
//! * diverging uplink powers mean the SINR targets are unattainable at any
//!   power;
//! * anything else within the budget is reported as `NotConverged`.

use crate::dual::DIVERGENCE_GROWTH;
use crate::duality::{FixedPointOptions, WarmDownlink, WeightedNoise};
use crate::ellipsoid::{Ellipsoid, EllipsoidOptions, SubgradientOracleResult};
use crate::error::{Error, Result};
use crate::model::{sinr, BeamformingSolution, ProblemInstance};
use crate::zf::{max_zf_residual, zf_closed_form, NullSpaceBasis};

/// Normalized ZF leakage a witness may show.
pub const ZF_RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility {
    /// Beams meeting every target within the caps.
    Feasible { witness: BeamformingSolution },
    /// A dual value above the total power budget: no beams can meet the
    /// targets within the caps. `dual_bound − budget` is the margin.
    Infeasible { dual_bound: f64, budget: f64 },
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibilityOptions {
    pub fixed_point: FixedPointOptions,
    pub ellipsoid: EllipsoidOptions,
    /// Upper bound on each `ν_i`.
    pub nu_cap: f64,
    /// Relative slack on `P_max` and on the SINR targets for a witness.
    pub rtol: f64,
}

impl Default for FeasibilityOptions {
    fn default() -> Self {
        FeasibilityOptions {
            fixed_point: FixedPointOptions::default(),
            ellipsoid: EllipsoidOptions {
                max_iter: Some(4000),
                ..EllipsoidOptions::default()
            },
            nu_cap: 1e4,
            rtol: 1e-6,
        }
    }
}

/// Feasibility of the general (non-ZF) beamforming problem.
pub fn check_feasible(instance: &ProblemInstance, opts: &FeasibilityOptions) -> Result<Feasibility> {
    let mut inner = WarmDownlink::new(&instance.channels, &instance.qos, opts.fixed_point);
    run(instance, opts, false, |noise| inner.beams(noise))
}

/// Feasibility of the ZF beamforming problem. Fails with
/// `ZfStructurallyInfeasible` when `K > MN` or the channels are linearly
/// dependent.
pub fn check_zf_feasible(instance: &ProblemInstance, opts: &FeasibilityOptions) -> Result<Feasibility> {
    let bases = NullSpaceBasis::compute(&instance.channels)?;
    run(instance, opts, true, |noise| {
        zf_closed_form(&instance.channels, &instance.qos, noise, &bases)
    })
}

/// Re-check a witness against the targets and caps with the model's own
/// evaluators.
pub fn verify_witness(
    instance: &ProblemInstance,
    beams: &BeamformingSolution,
    rtol: f64,
    zero_forcing: bool,
) -> Result<bool> {
    if !beams.is_finite() {
        return Ok(false);
    }
    for k in 0..instance.n_mt() {
        let gamma = instance.qos.sinr_min[k];
        if sinr(beams, &instance.channels, &instance.qos, k)? < gamma * (1.0 - rtol) {
            return Ok(false);
        }
    }
    let within_caps = beams
        .tx_powers()
        .iter()
        .zip(&instance.cluster.p_max)
        .all(|(t, p)| *t <= p * (1.0 + rtol));
    Ok(within_caps && (!zero_forcing || max_zf_residual(&instance.channels, beams) <= ZF_RESIDUAL_TOL))
}

fn run<F>(
    instance: &ProblemInstance,
    opts: &FeasibilityOptions,
    zero_forcing: bool,
    mut beams_at: F,
) -> Result<Feasibility>
where
    F: FnMut(&WeightedNoise) -> Result<BeamformingSolution>,
{
    let n = instance.n_bs();
    let p_max = &instance.cluster.p_max;
    let budget: f64 = p_max.iter().sum();
    let mut el = Ellipsoid::new(&vec![0.0; n], &vec![opts.nu_cap; n], &opts.ellipsoid);
    while let Some(nu) = el.next_query() {
        let noise = WeightedNoise::new(nu.iter().map(|v| 1.0 + v).collect())?;
        let beams = match beams_at(&noise) {
            Ok(b) => b,
            Err(Error::FixedPointDiverged { growth, .. }) if growth > DIVERGENCE_GROWTH => {
                return Ok(Feasibility::Infeasible {
                    dual_bound: f64::INFINITY,
                    budget,
                })
            }
            Err(e) => return Err(e),
        };
        if verify_witness(instance, &beams, opts.rtol, zero_forcing)? {
            return Ok(Feasibility::Feasible { witness: beams });
        }
        let tx = beams.tx_powers();
        let sub: Vec<f64> = tx.iter().zip(p_max).map(|(t, p)| t - p).collect();
        let value = tx.iter().sum::<f64>() + nu.iter().zip(&sub).map(|(v, s)| v * s).sum::<f64>();
        if value > budget * (1.0 + opts.rtol) {
            return Ok(Feasibility::Infeasible {
                dual_bound: value,
                budget,
            });
        }
        el.observe(&SubgradientOracleResult::optimality(value, sub));
    }
    Err(Error::NotConverged {
        what: "feasibility check",
        iterations: el.state().iteration,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{random_instance, toy_instance, RandomInstanceSpec};
    use crate::model::{ChannelSet, ClusterConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn with_caps(inst: &ProblemInstance, p_max: Vec<f64>) -> ProblemInstance {
        let mut out = inst.clone();
        out.cluster.p_max = p_max;
        out.validate().unwrap();
        out
    }

    fn opts() -> FeasibilityOptions {
        FeasibilityOptions::default()
    }

    #[test]
    fn generous_caps_are_feasible() {
        let inst = with_caps(&toy_instance(), vec![10.0, 10.0]);
        assert!(check_feasible(&inst, &opts()).unwrap().is_feasible());
        assert!(check_zf_feasible(&inst, &opts()).unwrap().is_feasible());
    }

    #[test]
    fn tiny_caps_are_certified_infeasible() {
        // Best coherent SNR is (√0.1 + 0.5·√0.1)² = 0.225 < 1.
        let inst = with_caps(&toy_instance(), vec![0.1, 0.1]);
        match check_feasible(&inst, &opts()).unwrap() {
            Feasibility::Infeasible { dual_bound, budget } => assert!(dual_bound > budget),
            other => panic!("expected infeasible, got {other:?}"),
        }
        assert!(!check_zf_feasible(&inst, &opts()).unwrap().is_feasible());
    }

    #[test]
    fn boundary_caps_give_tight_witness() {
        // Equal caps P with (1 + 0.5)²·P = γ = 1.
        let p = 1.0 / 2.25;
        let inst = with_caps(&toy_instance(), vec![p, p]);
        let Feasibility::Feasible { witness } = check_feasible(&inst, &opts()).unwrap() else {
            panic!("boundary instance should be feasible");
        };
        for t in witness.tx_powers() {
            assert!((t - p).abs() < 1e-3 * p);
        }
        let inside = with_caps(&toy_instance(), vec![0.99 * p, 0.99 * p]);
        assert!(!check_feasible(&inside, &opts()).unwrap().is_feasible());
    }

    #[test]
    fn zf_structural_failure() {
        let ch = ChannelSet::from_real(2, 1, &[vec![1.0, 0.2], vec![0.3, 1.0], vec![0.5, 0.5]]).unwrap();
        let inst = ProblemInstance::new(
            ClusterConfig {
                n_mt: 3,
                ..toy_instance().cluster
            },
            toy_instance().energy,
            ch,
            crate::model::QosTargets {
                sinr_min: vec![0.1; 3],
                noise_power: vec![1.0; 3],
            },
        )
        .unwrap();
        assert!(matches!(
            check_zf_feasible(&inst, &opts()),
            Err(Error::ZfStructurallyInfeasible(_))
        ));
    }

    #[test]
    fn unattainable_sinr_is_infeasible() {
        // Two MTs on one antenna: SINR targets of 2 each need
        // p1 ≥ 2(p2 + 1) and p2 ≥ 2(p1 + 1), impossible at any power.
        let ch = ChannelSet::from_real(1, 1, &[vec![1.0], vec![1.0]]).unwrap();
        let inst = ProblemInstance::new(
            ClusterConfig {
                n_bs: 1,
                n_ant: 1,
                n_mt: 2,
                pa_efficiency: 1.0,
                p_max: vec![1e6],
                p_circuit: vec![0.0],
            },
            crate::model::EnergyInputs {
                harvest: vec![0.0],
                price_buy: vec![1.0],
                price_sell: vec![0.1],
                price_floor: 0.1,
                price_cap: 1.0,
            },
            ch,
            crate::model::QosTargets {
                sinr_min: vec![2.0, 2.0],
                noise_power: vec![1.0, 1.0],
            },
        )
        .unwrap();
        assert!(!check_feasible(&inst, &opts()).unwrap().is_feasible());
    }

    #[test]
    fn monotone_in_cap_scale_and_zf_implies_general() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..4 {
            let base = random_instance(&mut rng, RandomInstanceSpec::new(2, 2, 3));
            let mut previous = false;
            for scale in [0.001, 0.01, 0.1, 1.0, 10.0] {
                let inst = with_caps(&base, base.cluster.p_max.iter().map(|p| p * scale).collect());
                let general = check_feasible(&inst, &opts()).map(|v| v.is_feasible());
                let zf = check_zf_feasible(&inst, &opts()).map(|v| v.is_feasible());
                if let Ok(g) = general {
                    assert!(g || !previous, "feasibility lost when caps grew");
                    previous = g;
                    if let Ok(true) = zf {
                        assert!(g);
                    }
                }
            }
        }
    }
}

//! Outer dual loop shared by every solver.
//!
//! All four schemes minimize a price-weighted energy bill whose Lagrangian,
//! for fixed `(μ, ν)`, reduces to a weighted sum-power beamforming problem.
//! They differ only in the inner beamformer (uplink-duality optimum or
//! zero-forcing closed form) and in whether the energy prices `μ` float inside
//! `[α_s, α_b]` or are frozen to a common constant (sum-power baselines).
//!
//! The loop keeps a certified bracket: every oracle call yields a dual value
//! (lower bound) and, when its beams respect the power caps, a primal
//! objective (upper bound). It stops as soon as the bracket is tight enough.

use crate::duality::FixedPointOptions;
use crate::duality::WeightedNoise;
use crate::ellipsoid::{Ellipsoid, EllipsoidOptions, SubgradientOracleResult};
use crate::error::{Error, Result};
use crate::feasibility::{self, Feasibility, FeasibilityOptions};
use crate::model::{total_cost, BeamformingSolution, DualIterate, ProblemInstance, Scheme, SolveOutcome};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub ellipsoid: EllipsoidOptions,
    pub fixed_point: FixedPointOptions,
    /// Relative duality gap below which an outcome counts as converged.
    pub gap_tol: f64,
    /// Relative gap at which the outer loop stops early.
    pub stop_gap: f64,
    /// Relative slack on `P_max` for accepting beams as primal-feasible.
    pub power_rtol: f64,
    /// Upper bound on each `ν_i`; `None` means `10·max(α_max, 1)/η`.
    pub nu_cap: Option<f64>,
    /// How many times the `ν` cap may grow by 100x when it binds on a
    /// feasible instance.
    pub nu_cap_expansions: usize,
}

/// Relative width of the dual bracket `[best value, ellipsoid bound]` below
/// which the outer loop stops regardless of the primal side.
const DUAL_RESOLVED: f64 = 1e-12;

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            // Primal points converge only as fast as the dual iterate, so
            // the ellipsoid itself is run well past the dual value tolerance;
            // the relative stopping rules in `run_once` end the loop.
            ellipsoid: EllipsoidOptions {
                tol: 0.0,
                ..EllipsoidOptions::default()
            },
            fixed_point: FixedPointOptions::default(),
            gap_tol: 1e-5,
            stop_gap: 1e-7,
            power_rtol: 1e-7,
            nu_cap: None,
            nu_cap_expansions: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum PriceMode {
    /// `μ_i ∈ [α_s,i, α_b,i]`: the real two-way trading problem.
    Market,
    /// All `μ_i` pinned to one constant: the equal-price problem, whose
    /// optimal beams minimize transmit sum-power.
    Frozen(f64),
}

/// Dual value and supergradient at `(μ, ν)` given the inner optimum's
/// per-BS transmit powers.
pub(crate) fn evaluate(instance: &ProblemInstance, mu: &[f64], nu: &[f64], tx: &[f64]) -> SubgradientOracleResult {
    let c = &instance.cluster;
    let e = &instance.energy;
    let n = c.n_bs;
    let mut sub = Vec::with_capacity(2 * n);
    sub.extend((0..n).map(|i| tx[i] / c.pa_efficiency + c.p_circuit[i] - e.harvest[i]));
    sub.extend(tx.iter().zip(&c.p_max).map(|(t, p)| t - p));
    // The dual function is positively homogeneous: g(z) = ⟨s(z), z⟩.
    let value = mu.iter().chain(nu).zip(&sub).map(|(z, s)| z * s).sum();
    SubgradientOracleResult::optimality(value, sub)
}

fn primal_objective(instance: &ProblemInstance, mode: PriceMode, beams: &BeamformingSolution) -> f64 {
    match mode {
        PriceMode::Market => {
            let schedule = crate::duality::recover_schedule(beams, instance);
            total_cost(&schedule, &instance.energy)
        }
        PriceMode::Frozen(price) => price * beams.tx_powers().iter().sum::<f64>() / instance.cluster.pa_efficiency,
    }
}

/// Part of the frozen-price objective that does not depend on the beams:
/// `p Σ_i (P_c,i − E_i)`. Leaving it out of the search keeps the iterates
/// independent of the harvest.
fn frozen_offset(instance: &ProblemInstance, price: f64) -> f64 {
    let c = &instance.cluster;
    price
        * c.p_circuit
            .iter()
            .zip(&instance.energy.harvest)
            .map(|(pc, e)| pc - e)
            .sum::<f64>()
}

fn default_nu_cap(instance: &ProblemInstance, mode: PriceMode) -> f64 {
    let price = match mode {
        PriceMode::Market => instance.energy.price_cap,
        PriceMode::Frozen(p) => p,
    };
    10.0 * price.max(1.0) / instance.cluster.pa_efficiency
}

struct Pass {
    outcome: Option<SolveOutcome>,
    nu_at_cap: bool,
    iterations: usize,
}

pub(crate) fn run<F>(
    instance: &ProblemInstance,
    opts: &SolverOptions,
    mode: PriceMode,
    scheme: Scheme,
    mut beams_at: F,
) -> Result<SolveOutcome>
where
    F: FnMut(&WeightedNoise) -> Result<BeamformingSolution>,
{
    let mut cap = opts.nu_cap.unwrap_or_else(|| default_nu_cap(instance, mode));
    let mut checked = false;
    let mut last_iterations = 0;
    for _ in 0..=opts.nu_cap_expansions {
        let pass = run_once(instance, opts, mode, scheme, cap, &mut beams_at)?;
        last_iterations = pass.iterations;
        if !pass.nu_at_cap {
            if let Some(outcome) = pass.outcome {
                return Ok(outcome);
            }
        }
        // ν pressed against its cap: either the caps cannot be met at all,
        // or the optimal ν is just large.
        if !checked {
            checked = true;
            let fopts = FeasibilityOptions {
                fixed_point: opts.fixed_point,
                ..FeasibilityOptions::default()
            };
            let verdict = if scheme.uses_zf() {
                feasibility::check_zf_feasible(instance, &fopts)
            } else {
                feasibility::check_feasible(instance, &fopts)
            };
            match verdict {
                Ok(Feasibility::Infeasible { .. }) => {
                    return Err(if scheme.uses_zf() {
                        Error::ZfInfeasible("per-BS power caps cannot meet the SNR targets".into())
                    } else {
                        Error::Infeasible("per-BS power caps cannot meet the SINR targets".into())
                    });
                }
                Err(e) if e.is_infeasible() => return Err(e),
                _ => {}
            }
        }
        if let Some(outcome) = pass.outcome {
            if outcome.converged {
                return Ok(outcome);
            }
        }
        cap *= 100.0;
    }
    Err(Error::NotConverged {
        what: "dual ellipsoid loop",
        iterations: last_iterations,
    })
}

fn run_once<F>(
    instance: &ProblemInstance,
    opts: &SolverOptions,
    mode: PriceMode,
    scheme: Scheme,
    nu_cap: f64,
    beams_at: &mut F,
) -> Result<Pass>
where
    F: FnMut(&WeightedNoise) -> Result<BeamformingSolution>,
{
    let n = instance.n_bs();
    let eta = instance.cluster.pa_efficiency;
    // Frozen prices leave only ν free; the market search runs over [μ; ν].
    let (mut lower, mut upper, frozen) = match mode {
        PriceMode::Market => (
            instance.energy.price_sell.clone(),
            instance.energy.price_buy.clone(),
            None,
        ),
        PriceMode::Frozen(p) => (Vec::new(), Vec::new(), Some(vec![p; n])),
    };
    lower.extend(std::iter::repeat_n(0.0, n));
    upper.extend(std::iter::repeat_n(nu_cap, n));

    let mut el = Ellipsoid::new(&lower, &upper, &opts.ellipsoid);
    let mut best_primal: Option<(f64, BeamformingSolution)> = None;
    let mut log = Vec::new();
    let offset = match mode {
        PriceMode::Market => 0.0,
        PriceMode::Frozen(p) => frozen_offset(instance, p),
    };
    while let Some(z) = el.next_query() {
        let (mu, nu) = match &frozen {
            Some(mu) => (mu.as_slice(), z.as_slice()),
            None => z.split_at(n),
        };
        let noise = WeightedNoise::from_duals(mu, nu, eta)?;
        let beams = beams_at(&noise).map_err(classify_inner_error)?;
        let tx = beams.tx_powers();
        let result = match &frozen {
            Some(mu) => {
                let sub = tx
                    .iter()
                    .zip(&instance.cluster.p_max)
                    .map(|(t, p)| t - p)
                    .collect::<Vec<_>>();
                let value = mu.iter().zip(&tx).map(|(m, t)| m * t / eta).sum::<f64>()
                    + nu.iter().zip(&sub).map(|(v, s)| v * s).sum::<f64>();
                SubgradientOracleResult::optimality(value, sub)
            }
            None => evaluate(instance, mu, nu, &tx),
        };
        let within_caps = tx
            .iter()
            .zip(&instance.cluster.p_max)
            .all(|(t, p)| *t <= p * (1.0 + opts.power_rtol));
        if within_caps {
            let obj = primal_objective(instance, mode, &beams);
            if best_primal.as_ref().is_none_or(|(b, _)| obj < *b) {
                best_primal = Some((obj, beams));
            }
        }
        el.observe(&result);
        let lb = el.best().map_or(f64::NEG_INFINITY, |(_, v)| v);
        let ub = best_primal.as_ref().map_or(f64::INFINITY, |(v, _)| *v);
        log.push(DualIterate {
            iteration: el.state().iteration,
            lower_bound: lb + offset,
            upper_bound: ub + offset,
        });
        if ub - lb <= opts.stop_gap * lb.abs().max(1.0) {
            el.stop();
            break;
        }
        // Once the dual bound is resolved to working precision, further cuts
        // cannot improve the primal point either.
        if el.upper_bound() - lb <= DUAL_RESOLVED * lb.abs().max(1.0) {
            el.stop();
            break;
        }
    }
    let ell = el.outcome();
    let nu_start = if frozen.is_some() { 0 } else { n };
    let nu_at_cap = ell.point[nu_start..].iter().any(|&v| v >= 0.99 * nu_cap);
    let outcome = best_primal.map(|(obj, beams)| {
        let schedule = crate::duality::recover_schedule(&beams, instance);
        let cost = total_cost(&schedule, &instance.energy);
        let gap = (obj - ell.value).abs() / ell.value.abs().max(1.0);
        SolveOutcome {
            scheme,
            beams,
            schedule,
            cost,
            primal_objective: obj + offset,
            dual_mu: frozen.clone().unwrap_or_else(|| ell.point[..n].to_vec()),
            dual_nu: ell.point[nu_start..].to_vec(),
            dual_value: ell.value + offset,
            iterations: ell.iterations,
            converged: gap <= opts.gap_tol,
            log,
        }
    });
    Ok(Pass {
        outcome,
        nu_at_cap,
        iterations: ell.iterations,
    })
}

/// Growth of the uplink powers over the iteration budget beyond which the
/// iteration is treated as divergent rather than slow.
pub(crate) const DIVERGENCE_GROWTH: f64 = 1e8;

/// An uplink iteration whose powers blow up means the SINR targets cannot
/// be met at any transmit power.
fn classify_inner_error(e: Error) -> Error {
    match e {
        Error::FixedPointDiverged { growth, .. } if growth > DIVERGENCE_GROWTH => {
            Error::Infeasible("SINR targets are unattainable at any transmit power (uplink powers diverge)".into())
        }
        other => other,
    }
}

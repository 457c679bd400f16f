//! Optimal joint energy trading and cooperative beamforming.
//!
//! For fixed energy prices `μ` and power-cap prices `ν` the Lagrangian
//! separates into a weighted sum-power beamforming problem with noise
//! weighting `B = Σ_i (μ_i/η + ν_i) B_i`, which is solved through its dual
//! uplink: iterate the uplink powers to their fixed point, form MMSE
//! receivers, then rescale them into downlink beams that meet every SINR
//! target with equality. The outer maximization over `(μ, ν)` is an ellipsoid
//! loop (see [`crate::dual`]), and the energy schedule is recovered from the
//! final beams by balancing every BS exactly.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::dual::{self, PriceMode, SolverOptions};
use crate::ellipsoid::SubgradientOracleResult;
use crate::error::{Error, Result};
use crate::linalg::{antenna_diagonal, hpd_factor, mac_covariance, normalize, CMatrix};
use crate::model::{
    consumption, BeamformingSolution, CVector, ChannelSet, EnergySchedule, ProblemInstance, QosTargets, Scheme,
    SolveOutcome,
};

/// Per-BS weights of the dual-uplink noise covariance `Σ_i weight_i B_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedNoise {
    weights: Vec<f64>,
}

impl WeightedNoise {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::invalid(format!(
                "noise weights must be positive and finite, got {weights:?}"
            )));
        }
        Ok(WeightedNoise { weights })
    }

    /// Weights `μ_i/η + ν_i`.
    pub fn from_duals(mu: &[f64], nu: &[f64], pa_efficiency: f64) -> Result<Self> {
        if mu.len() != nu.len() {
            return Err(Error::invalid("mu and nu lengths differ"));
        }
        Self::new(mu.iter().zip(nu).map(|(m, n)| m / pa_efficiency + n).collect())
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub(crate) fn antenna_diagonal(&self, n_ant: usize) -> DVector<f64> {
        antenna_diagonal(&self.weights, n_ant)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UplinkSolution {
    /// Uplink transmit powers `λ_k`.
    pub lambda: Vec<f64>,
    /// Unit-norm MMSE receive beamformers.
    pub receivers: Vec<CVector>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointOptions {
    /// Relative per-component change at which the iteration stops.
    pub tol: f64,
    pub max_iter: usize,
    /// Take safeguarded Newton steps on `λ − T(λ)`; the plain iteration is
    /// used whenever a step fails to shrink the residual.
    pub newton: bool,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        FixedPointOptions {
            tol: 1e-10,
            max_iter: 10_000,
            newton: true,
        }
    }
}

/// Uplink powers solving
/// `λ_k = 1 / ((1 + 1/γ_k) · h_kᴴ (Σ_l λ_l h_l h_lᴴ + B)⁻¹ h_k)`
/// by iterated function evaluation from `λ = 0`.
pub fn uplink_fixed_point(
    channels: &ChannelSet,
    qos: &QosTargets,
    noise: &WeightedNoise,
    opts: &FixedPointOptions,
) -> Result<Vec<f64>> {
    uplink_fixed_point_with(channels, qos, noise, opts, None, |_| {})
}

/// Same fixed point, iterated from `start` instead of zero. The map is a
/// standard interference function, so it converges to the same point from
/// any non-negative start; a nearby start just gets there sooner.
pub fn uplink_fixed_point_from(
    channels: &ChannelSet,
    qos: &QosTargets,
    noise: &WeightedNoise,
    start: &[f64],
    opts: &FixedPointOptions,
) -> Result<Vec<f64>> {
    uplink_fixed_point_with(channels, qos, noise, opts, Some(start), |_| {})
}

pub(crate) fn uplink_fixed_point_with(
    channels: &ChannelSet,
    qos: &QosTargets,
    noise: &WeightedNoise,
    opts: &FixedPointOptions,
    start: Option<&[f64]>,
    mut on_iterate: impl FnMut(&[f64]),
) -> Result<Vec<f64>> {
    check_noise(channels, noise)?;
    let h = channels.vectors();
    let diag = noise.antenna_diagonal(channels.n_ant());
    let mut lambda = match start {
        Some(s) if s.len() == h.len() && s.iter().all(|x| *x >= 0.0 && x.is_finite()) => s.to_vec(),
        Some(_) => return Err(Error::invalid("start must hold one non-negative power per MT")),
        None => vec![0.0; h.len()],
    };
    let mut first: Option<Vec<f64>> = None;
    let mut previous_change = f64::INFINITY;
    let diverged = |lambda: Vec<f64>, first: &Option<Vec<f64>>| {
        let growth = first.as_ref().map_or(f64::INFINITY, |f| {
            lambda
                .iter()
                .zip(f)
                .map(|(l, f0)| if l.is_finite() { l / f0 } else { f64::INFINITY })
                .fold(0.0, f64::max)
        });
        Error::FixedPointDiverged {
            iterations: opts.max_iter,
            growth,
            last: lambda,
        }
    };
    let hmat = CMatrix::from_columns(h);
    // Far from the fixed point a Newton step can overshoot; after a failure
    // one plain step is taken and Newton retried, a bounded number of times.
    const NEWTON_FAILURES: usize = 20;
    let mut failures = if opts.newton { 0 } else { NEWTON_FAILURES };
    let mut last_change = f64::INFINITY;
    let mut last_was_newton = false;
    for _ in 0..opts.max_iter {
        let Ok(chol) = hpd_factor(mac_covariance(h, &lambda, &diag)) else {
            return Err(diverged(lambda, &first));
        };
        // G = Hᴴ Σ⁻¹ H: its diagonal gives the map, its entries the Jacobian.
        let g = hmat.ad_mul(&chol.solve(&hmat));
        let c: Vec<f64> = qos.sinr_min.iter().map(|gamma| 1.0 + 1.0 / gamma).collect();
        let next: Vec<f64> = (0..h.len()).map(|k| 1.0 / (c[k] * g[(k, k)].re)).collect();
        if next.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(diverged(next, &first));
        }
        let change = next
            .iter()
            .zip(&lambda)
            .map(|(a, b)| (a - b).abs() / a)
            .fold(0.0, f64::max);
        first.get_or_insert_with(|| next.clone());
        let mut newton = failures < NEWTON_FAILURES;
        if last_was_newton && change > last_change {
            failures += 1;
            newton = false;
        }
        last_change = change;
        last_was_newton = false;
        if newton {
            // Solve (I − J) Δ = T(λ) − λ with ∂T_k/∂λ_l = c_k T_k² |G_kl|².
            let n = h.len();
            let system = DMatrix::from_fn(n, n, |k, l| {
                let jac = c[k] * next[k] * next[k] * g[(k, l)].norm_sqr();
                if k == l {
                    1.0 - jac
                } else {
                    -jac
                }
            });
            let rhs = DVector::from_fn(n, |k, _| next[k] - lambda[k]);
            let candidate: Option<Vec<f64>> = system
                .lu()
                .solve(&rhs)
                .map(|step| lambda.iter().zip(step.iter()).map(|(l, d)| l + d).collect())
                .filter(|v: &Vec<f64>| v.iter().all(|x| x.is_finite() && *x > 0.0));
            match candidate {
                // Near the fixed point a Newton step squares the error, so
                // one more step past the tolerance is enough.
                Some(v) if change <= opts.tol => {
                    on_iterate(&v);
                    return Ok(v);
                }
                Some(v) => {
                    lambda = v;
                    last_was_newton = true;
                    on_iterate(&lambda);
                    continue;
                }
                None => failures += 1,
            }
        }
        lambda = next;
        on_iterate(&lambda);
        // The map is a contraction near its fixed point; with observed rate
        // r the remaining error is about change·r/(1 − r).
        let rate = if previous_change > 0.0 && previous_change.is_finite() {
            (change / previous_change).min(0.999)
        } else {
            0.999
        };
        previous_change = change;
        if change == 0.0 || (change <= opts.tol && change * rate / (1.0 - rate) <= opts.tol) {
            return Ok(lambda);
        }
    }
    Err(diverged(lambda, &first))
}

/// `ŵ_k = normalize((Σ_l λ_l h_l h_lᴴ + B)⁻¹ h_k)`.
pub fn mmse_receivers(channels: &ChannelSet, lambda: &[f64], noise: &WeightedNoise) -> Result<Vec<CVector>> {
    check_noise(channels, noise)?;
    if lambda.len() != channels.n_mt() || lambda.iter().any(|&l| !(l >= 0.0)) {
        return Err(Error::invalid("uplink powers must be non-negative, one per MT"));
    }
    let diag = noise.antenna_diagonal(channels.n_ant());
    let chol = hpd_factor(mac_covariance(channels.vectors(), lambda, &diag))?;
    channels.vectors().iter().map(|hk| normalize(chol.solve(hk))).collect()
}

/// SINR of user `k` in the dual uplink with noise covariance `B`.
pub fn uplink_sinr(
    channels: &ChannelSet,
    noise: &WeightedNoise,
    lambda: &[f64],
    receivers: &[CVector],
    k: usize,
) -> f64 {
    let wk = &receivers[k];
    let diag = noise.antenna_diagonal(channels.n_ant());
    let noise_power: f64 = wk.iter().zip(diag.iter()).map(|(z, d)| d * z.norm_sqr()).sum();
    let mut interference = noise_power;
    let mut signal = 0.0;
    for (l, hl) in channels.vectors().iter().enumerate() {
        let g = lambda[l] * hl.dotc(wk).norm_sqr();
        if l == k {
            signal = g;
        } else {
            interference += g;
        }
    }
    signal / interference
}

/// Downlink powers `p = (I − D)⁻¹ u` that make every SINR equal its target
/// when transmitting along `receivers`, and the resulting beams `√p_k ŵ_k`.
pub fn downlink_scaling(
    channels: &ChannelSet,
    qos: &QosTargets,
    receivers: &[CVector],
) -> Result<(Vec<f64>, BeamformingSolution)> {
    let k_count = channels.n_mt();
    if receivers.len() != k_count {
        return Err(Error::invalid("one receiver per MT required"));
    }
    // gains[(k, l)] = |h_kᴴ ŵ_l|²
    let gains = DMatrix::from_fn(k_count, k_count, |k, l| channels.h(k).dotc(&receivers[l]).norm_sqr());
    let mut system = DMatrix::<f64>::identity(k_count, k_count);
    let mut u = DVector::<f64>::zeros(k_count);
    for k in 0..k_count {
        let direct = gains[(k, k)];
        if !(direct > 0.0) {
            return Err(Error::Numerical(format!(
                "receiver of MT {k} is orthogonal to its channel"
            )));
        }
        let gamma = qos.sinr_min[k];
        for l in 0..k_count {
            if l != k {
                system[(k, l)] = -gamma * gains[(k, l)] / direct;
            }
        }
        u[k] = gamma * qos.noise_power[k] / direct;
    }
    let p = system
        .lu()
        .solve(&u)
        .ok_or_else(|| Error::Numerical("downlink scaling system is singular".into()))?;
    let scale = p.amax().max(f64::MIN_POSITIVE);
    if p.iter().any(|&x| !x.is_finite() || x < -1e-9 * scale) {
        return Err(Error::Numerical(format!(
            "downlink scaling produced negative powers {:?}",
            p.as_slice()
        )));
    }
    let p: Vec<f64> = p.iter().map(|&x| x.max(0.0)).collect();
    let w = receivers
        .iter()
        .zip(&p)
        .map(|(r, &pk)| r * Complex64::new(pk.sqrt(), 0.0))
        .collect();
    Ok((
        p,
        BeamformingSolution {
            n_ant: channels.n_ant(),
            w,
        },
    ))
}

/// Minimum `B`-weighted sum-power beams meeting every SINR target, via the
/// dual uplink.
pub fn solve_weighted_downlink(
    channels: &ChannelSet,
    qos: &QosTargets,
    noise: &WeightedNoise,
    opts: &FixedPointOptions,
) -> Result<(UplinkSolution, BeamformingSolution)> {
    let lambda = uplink_fixed_point(channels, qos, noise, opts)?;
    let receivers = mmse_receivers(channels, &lambda, noise)?;
    let (_, beams) = downlink_scaling(channels, qos, &receivers)?;
    Ok((UplinkSolution { lambda, receivers }, beams))
}

/// Dual function value and supergradient at `(μ, ν)`.
///
/// Coordinates are ordered `[μ_0..μ_N, ν_0..ν_N]`. The value is
/// `Σ_k w_kᴴ B w_k + Σ_i (P_c,i − E_i) μ_i − Σ_i P_max,i ν_i` with `w` the
/// inner optimum; the supergradient components are
/// `tx_i/η + P_c,i − E_i` and `tx_i − P_max,i`.
pub fn dual_oracle(
    instance: &ProblemInstance,
    mu: &[f64],
    nu: &[f64],
    opts: &FixedPointOptions,
) -> Result<SubgradientOracleResult> {
    let noise = WeightedNoise::from_duals(mu, nu, instance.cluster.pa_efficiency)?;
    let (_, beams) = solve_weighted_downlink(&instance.channels, &instance.qos, &noise, opts)?;
    Ok(dual::evaluate(instance, mu, nu, &beams.tx_powers()))
}

/// Buy exactly the shortfall and sell exactly the surplus of every BS.
pub fn recover_schedule(beams: &BeamformingSolution, instance: &ProblemInstance) -> EnergySchedule {
    let n = instance.n_bs();
    let mut schedule = EnergySchedule::zeros(n);
    for i in 0..n {
        let need = consumption(beams, &instance.cluster, i).expect("BS index in range");
        let harvest = instance.energy.harvest[i];
        if need > harvest {
            schedule.buy[i] = need - harvest;
        } else {
            schedule.sell[i] = harvest - need;
        }
    }
    schedule
}

/// Weighted-downlink solver that starts each uplink fixed point from the
/// previous call's powers, rescaled to the new weights.
pub(crate) struct WarmDownlink<'a> {
    channels: &'a ChannelSet,
    qos: &'a QosTargets,
    opts: FixedPointOptions,
    last: Option<(Vec<f64>, f64)>,
}

impl<'a> WarmDownlink<'a> {
    pub(crate) fn new(channels: &'a ChannelSet, qos: &'a QosTargets, opts: FixedPointOptions) -> Self {
        WarmDownlink {
            channels,
            qos,
            opts,
            last: None,
        }
    }

    pub(crate) fn beams(&mut self, noise: &WeightedNoise) -> Result<BeamformingSolution> {
        // Uplink powers scale linearly with the noise weights.
        let level = noise.weights.iter().sum::<f64>();
        let lambda = match &self.last {
            Some((prev, prev_level)) => {
                let start: Vec<f64> = prev.iter().map(|l| l * level / prev_level).collect();
                uplink_fixed_point_from(self.channels, self.qos, noise, &start, &self.opts)
            }
            None => uplink_fixed_point(self.channels, self.qos, noise, &self.opts),
        }?;
        let receivers = mmse_receivers(self.channels, &lambda, noise)?;
        let (_, beams) = downlink_scaling(self.channels, self.qos, &receivers)?;
        self.last = Some((lambda, level));
        Ok(beams)
    }
}

/// Solve the joint energy-trading and optimal-beamforming problem.
pub fn solve_joint(instance: &ProblemInstance, opts: &SolverOptions) -> Result<SolveOutcome> {
    let mut inner = WarmDownlink::new(&instance.channels, &instance.qos, opts.fixed_point);
    dual::run(instance, opts, PriceMode::Market, Scheme::Optimal, |noise| {
        inner.beams(noise)
    })
}

fn check_noise(channels: &ChannelSet, noise: &WeightedNoise) -> Result<()> {
    if noise.weights.len() != channels.n_bs() {
        return Err(Error::invalid(format!(
            "{} noise weights for {} BSs",
            noise.weights.len(),
            channels.n_bs()
        )));
    }
    Ok(())
}

//! Joint energy trading with cooperative zero-forcing beamforming.
//!
//! Each MT's beam is confined to the null space of the other MTs' channels,
//! which removes all inter-user interference and turns the SINR constraints
//! into per-MT SNR constraints. For a fixed dual point the weighted sum-power
//! problem then has a closed-form solution per MT, so one oracle call costs
//! one small Hermitian solve per MT instead of an inner fixed point.

use num_complex::Complex64;

use crate::dual::{self, PriceMode, SolverOptions};
use crate::duality::WeightedNoise;
use crate::ellipsoid::SubgradientOracleResult;
use crate::error::{Error, Result};
use crate::linalg::{hpd_factor, CMatrix};
use crate::model::{BeamformingSolution, ChannelSet, ProblemInstance, QosTargets, Scheme, SolveOutcome};

/// Channel matrices whose smallest-to-largest singular value ratio falls
/// below this are treated as rank deficient.
pub const RANK_TOL: f64 = 1e-10;

/// Orthonormal bases `Ṽ_k` of the null space of `{h_l : l ≠ k}`, one per MT,
/// each of shape `MN × (MN − K + 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NullSpaceBasis {
    pub basis: Vec<CMatrix>,
}

impl NullSpaceBasis {
    pub fn compute(channels: &ChannelSet) -> Result<Self> {
        let basis = (0..channels.n_mt())
            .map(|k| null_space_basis(channels, k))
            .collect::<Result<Vec<_>>>()?;
        Ok(NullSpaceBasis { basis })
    }
}

/// Orthonormal basis of the orthogonal complement of `span{h_l : l ≠ k}`.
///
/// The basis is not unique; only its span is meaningful.
pub fn null_space_basis(channels: &ChannelSet, k: usize) -> Result<CMatrix> {
    let dim = channels.dim();
    let n_mt = channels.n_mt();
    crate::model::check_index("MT", k, n_mt)?;
    if n_mt > dim {
        return Err(Error::ZfStructurallyInfeasible(format!(
            "{n_mt} MTs exceed the {dim} transmit antennas (K must not exceed M·N)"
        )));
    }
    if n_mt == 1 {
        return Ok(CMatrix::identity(dim, dim));
    }
    // Square SVD of H_{-k} padded with zero rows, so that all `dim` right
    // singular vectors are available.
    let mut padded = CMatrix::zeros(dim, dim);
    for (row, l) in (0..n_mt).filter(|&l| l != k).enumerate() {
        for (c, z) in channels.h(l).iter().enumerate() {
            padded[(row, c)] = z.conj();
        }
    }
    let svd = padded.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Numerical("SVD did not return right singular vectors".into()))?;
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let rank = n_mt - 1;
    let largest = svd.singular_values[order[0]];
    let smallest_kept = svd.singular_values[order[rank - 1]];
    if !(smallest_kept > RANK_TOL * largest) {
        return Err(Error::ZfStructurallyInfeasible(format!(
            "channels of the MTs other than {k} are linearly dependent"
        )));
    }
    let null = &order[rank..];
    // Rows of Vᴴ are conjugated right singular vectors.
    Ok(CMatrix::from_fn(dim, null.len(), |r, c| v_t[(null[c], r)].conj()))
}

/// Minimum weighted-power ZF beams meeting every SNR target with equality:
/// `w_k = σ_k√γ_k · Ṽ_k x_k / |h_kᴴ Ṽ_k x_k|` with
/// `x_k = (Ṽ_kᴴ B Ṽ_k)⁻¹ Ṽ_kᴴ h_k`.
pub fn zf_closed_form(
    channels: &ChannelSet,
    qos: &QosTargets,
    noise: &WeightedNoise,
    bases: &NullSpaceBasis,
) -> Result<BeamformingSolution> {
    if noise.weights().len() != channels.n_bs() {
        return Err(Error::invalid("one noise weight per BS required"));
    }
    let diag = noise.antenna_diagonal(channels.n_ant());
    let mut w = Vec::with_capacity(channels.n_mt());
    for (k, v) in bases.basis.iter().enumerate() {
        let hk = channels.h(k);
        let projected = v.ad_mul(hk);
        if !(projected.norm() > RANK_TOL * hk.norm()) {
            return Err(Error::ZfStructurallyInfeasible(format!(
                "channel of MT {k} lies in the span of the other MTs' channels"
            )));
        }
        let mut bv = v.clone();
        for (r, mut row) in bv.row_iter_mut().enumerate() {
            row *= Complex64::new(diag[r], 0.0);
        }
        let gram = v.ad_mul(&bv);
        let x = hpd_factor(gram)?.solve(&projected);
        let direction = v * x;
        let gain = hk.dotc(&direction).norm();
        let scale = (qos.noise_power[k] * qos.sinr_min[k]).sqrt() / gain;
        w.push(direction * Complex64::new(scale, 0.0));
    }
    Ok(BeamformingSolution {
        n_ant: channels.n_ant(),
        w,
    })
}

/// ZF dual function value and supergradient at `(μ, ν)`, coordinates ordered
/// `[μ_0..μ_N, ν_0..ν_N]`.
pub fn zf_dual_oracle(instance: &ProblemInstance, mu: &[f64], nu: &[f64]) -> Result<SubgradientOracleResult> {
    let bases = NullSpaceBasis::compute(&instance.channels)?;
    zf_dual_oracle_with(instance, &bases, mu, nu)
}

pub(crate) fn zf_dual_oracle_with(
    instance: &ProblemInstance,
    bases: &NullSpaceBasis,
    mu: &[f64],
    nu: &[f64],
) -> Result<SubgradientOracleResult> {
    let noise = WeightedNoise::from_duals(mu, nu, instance.cluster.pa_efficiency)?;
    let beams = zf_closed_form(&instance.channels, &instance.qos, &noise, bases)?;
    Ok(dual::evaluate(instance, mu, nu, &beams.tx_powers()))
}

/// Solve the joint energy-trading and ZF-beamforming problem.
pub fn solve_zf(instance: &ProblemInstance, opts: &SolverOptions) -> Result<SolveOutcome> {
    let bases = NullSpaceBasis::compute(&instance.channels)?;
    dual::run(instance, opts, PriceMode::Market, Scheme::Zf, |noise| {
        zf_closed_form(&instance.channels, &instance.qos, noise, &bases)
    })
}

/// Largest normalized leakage `|h_lᴴ w_k| / (‖h_l‖‖w_k‖)` over `l ≠ k`.
pub fn max_zf_residual(channels: &ChannelSet, beams: &BeamformingSolution) -> f64 {
    let mut worst: f64 = 0.0;
    for (k, wk) in beams.w.iter().enumerate() {
        for (l, hl) in channels.vectors().iter().enumerate() {
            if l != k {
                let denom = hl.norm() * wk.norm();
                if denom > 0.0 {
                    worst = worst.max(hl.dotc(wk).norm() / denom);
                }
            }
        }
    }
    worst
}

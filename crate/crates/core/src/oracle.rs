//! Slow, independent reference computations used to check the solvers.

use num_complex::Complex64;

use crate::duality::{dual_oracle, recover_schedule, FixedPointOptions, WeightedNoise};
use crate::ellipsoid::SubgradientOracleResult;
use crate::error::{Error, Result};
use crate::linalg::antenna_diagonal;
use crate::model::{total_cost, BeamformingSolution, CVector, EnergySchedule, ProblemInstance};
use crate::zf::zf_dual_oracle;

#[derive(Debug, Clone, PartialEq)]
pub struct GridOptimum {
    pub powers: [f64; 2],
    pub schedule: EnergySchedule,
    pub cost: f64,
}

/// Exhaustive grid search over `(P_1, P_2) ∈ [0, P_max]²` for two
/// single-antenna BSs serving one MT with coherent combining, i.e.
/// `SNR = (|h_1|√P_1 + |h_2|√P_2)² / σ²`.
///
/// Cost never decreases in either power, so for each grid `P_1` only the
/// smallest SNR-feasible grid `P_2` needs evaluating; this visits the same
/// optimum as the full scan.
pub fn grid_search_two_bs(instance: &ProblemInstance, grid_step: f64) -> Result<GridOptimum> {
    let c = &instance.cluster;
    if c.n_bs != 2 || c.n_ant != 1 || c.n_mt != 1 {
        return Err(Error::invalid("grid oracle needs two single-antenna BSs and one MT"));
    }
    if !(grid_step > 0.0) {
        return Err(Error::invalid("grid step must be positive"));
    }
    let h = instance.channels.h(0);
    let (g1, g2) = (h[0].norm(), h[1].norm());
    let need = (instance.qos.sinr_min[0] * instance.qos.noise_power[0]).sqrt();
    let cells = |p_max: f64| (p_max / grid_step).floor() as usize;
    let (n1, n2) = (cells(c.p_max[0]), cells(c.p_max[1]));

    let mut best: Option<GridOptimum> = None;
    for a in 0..=n1 {
        let p1 = a as f64 * grid_step;
        let rest = need - g1 * p1.sqrt();
        let b = if rest <= 0.0 {
            0
        } else if g2 > 0.0 {
            let mut b = ((rest / g2).powi(2) / grid_step).ceil() as usize;
            // Guard the ceiling against rounding either way.
            while b > 0 && g1 * p1.sqrt() + g2 * ((b - 1) as f64 * grid_step).sqrt() >= need {
                b -= 1;
            }
            while g1 * p1.sqrt() + g2 * (b as f64 * grid_step).sqrt() < need && b <= n2 {
                b += 1;
            }
            b
        } else {
            continue;
        };
        if b > n2 {
            continue;
        }
        let powers = [p1, b as f64 * grid_step];
        let schedule = schedule_for(instance, &powers);
        let cost = total_cost(&schedule, &instance.energy);
        if best.as_ref().is_none_or(|o| cost < o.cost) {
            best = Some(GridOptimum { powers, schedule, cost });
        }
    }
    best.ok_or_else(|| Error::Infeasible("no grid point meets the SNR target".into()))
}

fn schedule_for(instance: &ProblemInstance, powers: &[f64]) -> EnergySchedule {
    let c = &instance.cluster;
    let mut s = EnergySchedule::zeros(powers.len());
    for (i, p) in powers.iter().enumerate() {
        let net = p / c.pa_efficiency + c.p_circuit[i] - instance.energy.harvest[i];
        s.buy[i] = net.max(0.0);
        s.sell[i] = (-net).max(0.0);
    }
    s
}

/// Closed-form single-MT solution of the weighted sum-power problem.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleUserReference {
    /// Optimal uplink power `γ / (hᴴ B⁻¹ h)`.
    pub lambda: f64,
    /// Unit-norm receiver `B⁻¹h / ‖B⁻¹h‖`.
    pub receiver: CVector,
    /// Downlink power `γσ² / |hᴴ ŵ|²`.
    pub power: f64,
    pub beams: BeamformingSolution,
    pub tx: Vec<f64>,
    pub schedule: EnergySchedule,
    pub cost: f64,
}

/// Reference values for `K = 1` at the dual point `(μ, ν)`.
pub fn single_user_closed_forms(instance: &ProblemInstance, mu: &[f64], nu: &[f64]) -> Result<SingleUserReference> {
    if instance.n_mt() != 1 {
        return Err(Error::invalid("single-user closed forms need exactly one MT"));
    }
    let noise = WeightedNoise::from_duals(mu, nu, instance.cluster.pa_efficiency)?;
    let diag = antenna_diagonal(noise.weights(), instance.cluster.n_ant);
    let h = instance.channels.h(0);
    let binv_h = CVector::from_fn(h.len(), |r, _| h[r] / diag[r]);
    let q = h.dotc(&binv_h).re;
    let gamma = instance.qos.sinr_min[0];
    let receiver = binv_h.unscale(binv_h.norm());
    let power = gamma * instance.qos.noise_power[0] / h.dotc(&receiver).norm_sqr();
    let beams = BeamformingSolution {
        n_ant: instance.cluster.n_ant,
        w: vec![&receiver * Complex64::new(power.sqrt(), 0.0)],
    };
    let tx = beams.tx_powers();
    let schedule = recover_schedule(&beams, instance);
    let cost = total_cost(&schedule, &instance.energy);
    Ok(SingleUserReference {
        lambda: gamma / q,
        receiver,
        power,
        beams,
        tx,
        schedule,
        cost,
    })
}

/// Which dual function a finite-difference check differentiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DualKind {
    Optimal,
    ZeroForcing,
}

fn dual_at(
    kind: DualKind,
    instance: &ProblemInstance,
    mu: &[f64],
    nu: &[f64],
    fp: &FixedPointOptions,
) -> Result<SubgradientOracleResult> {
    match kind {
        DualKind::Optimal => dual_oracle(instance, mu, nu, fp),
        DualKind::ZeroForcing => zf_dual_oracle(instance, mu, nu),
    }
}

/// Largest discrepancy between the oracle's supergradient and central
/// differences of the dual value, `|fd_j − s_j| / max(1, |s_j|)` over all
/// coordinates. Returns `None` when the point is not at least `h_step`
/// inside the dual box, where the dual need not be differentiable.
pub fn finite_diff_subgradient_check(
    kind: DualKind,
    instance: &ProblemInstance,
    mu: &[f64],
    nu: &[f64],
    h_step: f64,
    fp: &FixedPointOptions,
) -> Result<Option<f64>> {
    let e = &instance.energy;
    let interior = mu
        .iter()
        .zip(e.price_sell.iter().zip(&e.price_buy))
        .all(|(m, (lo, hi))| m - h_step > *lo && m + h_step < *hi)
        && nu.iter().all(|v| *v > h_step);
    if !interior {
        return Ok(None);
    }
    let n = mu.len();
    let base = dual_at(kind, instance, mu, nu, fp)?;
    let mut worst: f64 = 0.0;
    for j in 0..2 * n {
        let value_at = |delta: f64| -> Result<f64> {
            let (mut m, mut v) = (mu.to_vec(), nu.to_vec());
            if j < n {
                m[j] += delta;
            } else {
                v[j - n] += delta;
            }
            Ok(dual_at(kind, instance, &m, &v, fp)?.value)
        };
        let fd = (value_at(h_step)? - value_at(-h_step)?) / (2.0 * h_step);
        let s = base.subgradient[j];
        worst = worst.max((fd - s).abs() / s.abs().max(1.0));
    }
    Ok(Some(worst))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::duality::uplink_fixed_point;
    use crate::fixtures::{random_instance, toy_instance, RandomInstanceSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn toy_grid_matches_table() {
        let g = grid_search_two_bs(&toy_instance(), 1e-3).unwrap();
        assert!((g.cost - 0.05).abs() <= 2e-3, "{g:?}");
        assert!((g.powers[0] - 0.25).abs() < 0.05 && (g.powers[1] - 1.0).abs() < 0.05);
    }

    #[test]
    fn equal_price_grid_is_conventional_row() {
        let mut inst = toy_instance();
        inst.energy.price_sell = vec![1.0, 1.0];
        let g = grid_search_two_bs(&inst, 1e-3).unwrap();
        assert!(
            (g.powers[0] - 0.64).abs() < 0.02 && (g.powers[1] - 0.16).abs() < 0.02,
            "{g:?}"
        );
        // At equal prices the bill is Σ(consumption − harvest) = 0.8 − 1.2.
        assert!((g.cost + 0.4).abs() < 2e-3);
    }

    #[test]
    fn vacuous_qos_sells_everything() {
        let mut inst = toy_instance();
        inst.qos.sinr_min = vec![1e-300];
        // Any positive target needs at least one grid cell of power.
        let g = grid_search_two_bs(&inst, 1e-2).unwrap();
        assert!(g.powers.iter().sum::<f64>() <= 1e-2 + 1e-15);
        assert!((g.cost + 0.1 * 1.2).abs() <= 1e-2);
    }

    #[test]
    fn grid_refinement_does_not_hurt() {
        let coarse = grid_search_two_bs(&toy_instance(), 2e-2).unwrap();
        let fine = grid_search_two_bs(&toy_instance(), 1e-2).unwrap();
        assert!(fine.cost <= coarse.cost + 2e-2);
    }

    #[test]
    fn closed_form_matches_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..100 {
            let n_bs = rng.random_range(1..4);
            let n_ant = rng.random_range(1..4);
            let inst = random_instance(&mut rng, RandomInstanceSpec::new(n_bs, n_ant, 1));
            let mu: Vec<f64> = (0..n_bs).map(|_| rng.random_range(0.05..1.0)).collect();
            let nu: Vec<f64> = (0..n_bs).map(|_| rng.random_range(0.0..2.0)).collect();
            let r = single_user_closed_forms(&inst, &mu, &nu).unwrap();
            let noise = WeightedNoise::from_duals(&mu, &nu, inst.cluster.pa_efficiency).unwrap();
            let lam = uplink_fixed_point(&inst.channels, &inst.qos, &noise, &FixedPointOptions::default()).unwrap();
            assert!((lam[0] - r.lambda).abs() <= 1e-10 * r.lambda.max(1.0));
        }
    }

    #[test]
    fn toy_closed_form_at_dual_optimum() {
        let r = single_user_closed_forms(&toy_instance(), &[1.0, 0.25], &[0.0, 0.0]).unwrap();
        assert!((r.tx[0] - 0.25).abs() < 1e-12 && (r.tx[1] - 1.0).abs() < 1e-12);
        assert!((r.cost - 0.05).abs() < 1e-12);
    }

    #[test]
    fn finite_differences_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let fp = FixedPointOptions::default();
        for _ in 0..5 {
            let inst = random_instance(&mut rng, RandomInstanceSpec::new(2, 2, 2));
            let e = &inst.energy;
            let mu: Vec<f64> = (0..2).map(|i| 0.5 * (e.price_sell[i] + e.price_buy[i])).collect();
            let nu = vec![0.4, 0.7];
            for kind in [DualKind::Optimal, DualKind::ZeroForcing] {
                let d = finite_diff_subgradient_check(kind, &inst, &mu, &nu, 1e-5, &fp)
                    .unwrap()
                    .unwrap();
                assert!(d <= 1e-4, "{kind:?} discrepancy {d}");
            }
        }
    }

    #[test]
    fn boundary_points_are_skipped() {
        let inst = toy_instance();
        let fp = FixedPointOptions::default();
        assert!(
            finite_diff_subgradient_check(DualKind::Optimal, &inst, &[1.0, 0.5], &[0.1, 0.1], 1e-5, &fp)
                .unwrap()
                .is_none()
        );
    }
}

//! Reference instances for tests, benchmarks and the CLI's `verify` mode.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::model::{CVector, ChannelSet, ClusterConfig, EnergyInputs, ProblemInstance, QosTargets};

/// Two single-antenna BSs serving one MT: `h = [1, 0.5]`, `γ = σ² = 1`,
/// harvests `E = [0.2, 1]`, `α_b = 1`, `α_s = 0.1`, `η = 1`, no circuit power
/// and non-binding power caps.
pub fn toy_instance() -> ProblemInstance {
    ProblemInstance::new(
        ClusterConfig {
            n_bs: 2,
            n_ant: 1,
            n_mt: 1,
            pa_efficiency: 1.0,
            p_max: vec![100.0, 100.0],
            p_circuit: vec![0.0, 0.0],
        },
        EnergyInputs {
            harvest: vec![0.2, 1.0],
            price_buy: vec![1.0, 1.0],
            price_sell: vec![0.1, 0.1],
            price_floor: 0.1,
            price_cap: 1.0,
        },
        ChannelSet::from_real(2, 1, &[vec![1.0, 0.5]]).expect("toy channel"),
        QosTargets {
            sinr_min: vec![1.0],
            noise_power: vec![1.0],
        },
    )
    .expect("toy instance is valid")
}

/// I.i.d. `CN(0, scale)` channel entries.
pub fn random_channels<R: Rng>(rng: &mut R, n_bs: usize, n_ant: usize, n_mt: usize, scale: f64) -> ChannelSet {
    let std = (scale / 2.0).sqrt();
    let h = (0..n_mt)
        .map(|_| {
            CVector::from_fn(n_bs * n_ant, |_, _| {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                Complex64::new(std * re, std * im)
            })
        })
        .collect();
    ChannelSet::new(n_bs, n_ant, h).expect("well-formed random channels")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomInstanceSpec {
    pub n_bs: usize,
    pub n_ant: usize,
    pub n_mt: usize,
    /// Buy and sell at one common price at every BS.
    pub equal_prices: bool,
    /// Power caps as a multiple of a generous reference; below 1 they start
    /// to bind.
    pub cap_scale: f64,
}

impl RandomInstanceSpec {
    pub fn new(n_bs: usize, n_ant: usize, n_mt: usize) -> Self {
        RandomInstanceSpec {
            n_bs,
            n_ant,
            n_mt,
            equal_prices: false,
            cap_scale: 1.0,
        }
    }
}

/// A random instance with unit-variance channels, moderate SINR targets and
/// energy figures of the same order as the transmit powers, so that both
/// buying and selling BSs occur.
pub fn random_instance<R: Rng>(rng: &mut R, spec: RandomInstanceSpec) -> ProblemInstance {
    let n = spec.n_bs;
    let channels = random_channels(rng, n, spec.n_ant, spec.n_mt, 1.0);
    let sinr_min = (0..spec.n_mt).map(|_| rng.random_range(0.5..3.0)).collect();
    let noise_power = (0..spec.n_mt).map(|_| rng.random_range(0.2..1.0)).collect();
    let pa_efficiency = rng.random_range(0.3..1.0);
    let price_cap = 1.0;
    let price_floor = 0.05;
    let common = rng.random_range(0.2..1.0);
    let (price_buy, price_sell): (Vec<f64>, Vec<f64>) = (0..n)
        .map(|_| {
            if spec.equal_prices {
                (common, common)
            } else {
                let b = rng.random_range(0.5..1.0);
                let s = rng.random_range(0.05..0.4);
                (b, s)
            }
        })
        .unzip();
    ProblemInstance::new(
        ClusterConfig {
            n_bs: n,
            n_ant: spec.n_ant,
            n_mt: spec.n_mt,
            pa_efficiency,
            p_max: (0..n).map(|_| 50.0 * spec.cap_scale).collect(),
            p_circuit: (0..n).map(|_| rng.random_range(0.0..1.0)).collect(),
        },
        EnergyInputs {
            harvest: (0..n).map(|_| rng.random_range(0.0..4.0)).collect(),
            price_buy,
            price_sell,
            price_floor,
            price_cap,
        },
        channels,
        QosTargets { sinr_min, noise_power },
    )
    .expect("random instance is valid")
}

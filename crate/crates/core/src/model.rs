//! Domain types for one CoMP cluster and the elementary evaluators every
//! solver shares: per-BS transmit power, downlink SINR, energy cost and
//! per-BS consumption.
//!
//! Antennas are stacked BS by BS, so the block of a length-`M·N` vector that
//! belongs to BS `i` is the index range `[i·M, (i+1)·M)`. Energy and power are
//! used interchangeably: one block is one unit of time.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type CVector = DVector<Complex64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub n_bs: usize,
    pub n_ant: usize,
    pub n_mt: usize,
    /// Power-amplifier efficiency, in (0, 1].
    pub pa_efficiency: f64,
    /// Per-BS transmit power cap, Watts.
    pub p_max: Vec<f64>,
    /// Per-BS non-transmission (circuit) power, Watts.
    pub p_circuit: Vec<f64>,
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_bs == 0 || self.n_ant == 0 || self.n_mt == 0 {
            return Err(Error::invalid("n_bs, n_ant and n_mt must be positive"));
        }
        if !(self.pa_efficiency > 0.0 && self.pa_efficiency <= 1.0) {
            return Err(Error::invalid(format!(
                "pa_efficiency must lie in (0, 1], got {}",
                self.pa_efficiency
            )));
        }
        check_len("p_max", &self.p_max, self.n_bs)?;
        check_len("p_circuit", &self.p_circuit, self.n_bs)?;
        if self.p_max.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
            return Err(Error::invalid("every p_max entry must be positive and finite"));
        }
        if self.p_circuit.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
            return Err(Error::invalid("every p_circuit entry must be non-negative"));
        }
        Ok(())
    }

    /// Total antennas in the cluster (`M·N`).
    pub fn dim(&self) -> usize {
        self.n_bs * self.n_ant
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyInputs {
    /// Renewable energy harvested by each BS during the block.
    pub harvest: Vec<f64>,
    pub price_buy: Vec<f64>,
    pub price_sell: Vec<f64>,
    pub price_floor: f64,
    pub price_cap: f64,
}

impl EnergyInputs {
    pub fn validate(&self, n_bs: usize) -> Result<()> {
        check_len("harvest", &self.harvest, n_bs)?;
        check_len("price_buy", &self.price_buy, n_bs)?;
        check_len("price_sell", &self.price_sell, n_bs)?;
        if self.harvest.iter().any(|&e| !(e >= 0.0 && e.is_finite())) {
            return Err(Error::invalid("harvested energy must be non-negative"));
        }
        if !(self.price_floor > 0.0 && self.price_floor <= self.price_cap) {
            return Err(Error::invalid("need 0 < price_floor <= price_cap"));
        }
        for i in 0..n_bs {
            let (s, b) = (self.price_sell[i], self.price_buy[i]);
            if !(self.price_floor <= s && s <= b && b <= self.price_cap) {
                return Err(Error::invalid(format!(
                    "BS {i}: prices must satisfy floor <= sell <= buy <= cap, got sell={s} buy={b}"
                )));
            }
        }
        Ok(())
    }

    pub fn n_bs(&self) -> usize {
        self.harvest.len()
    }
}

/// Channel vectors from all cluster antennas to each MT.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    n_bs: usize,
    n_ant: usize,
    h: Vec<CVector>,
}

impl ChannelSet {
    pub fn new(n_bs: usize, n_ant: usize, h: Vec<CVector>) -> Result<Self> {
        let dim = n_bs * n_ant;
        if dim == 0 {
            return Err(Error::invalid("channel set needs at least one antenna"));
        }
        if h.is_empty() {
            return Err(Error::invalid("channel set needs at least one MT"));
        }
        for (k, hk) in h.iter().enumerate() {
            if hk.len() != dim {
                return Err(Error::invalid(format!(
                    "channel of MT {k} has length {}, expected {dim}",
                    hk.len()
                )));
            }
            if hk.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::invalid(format!("channel of MT {k} is not finite")));
            }
        }
        Ok(ChannelSet { n_bs, n_ant, h })
    }

    /// Convenience constructor from real-valued channel entries.
    pub fn from_real(n_bs: usize, n_ant: usize, h: &[Vec<f64>]) -> Result<Self> {
        let h = h
            .iter()
            .map(|v| CVector::from_iterator(v.len(), v.iter().map(|&x| Complex64::new(x, 0.0))))
            .collect();
        Self::new(n_bs, n_ant, h)
    }

    pub fn n_bs(&self) -> usize {
        self.n_bs
    }

    pub fn n_ant(&self) -> usize {
        self.n_ant
    }

    pub fn n_mt(&self) -> usize {
        self.h.len()
    }

    pub fn dim(&self) -> usize {
        self.n_bs * self.n_ant
    }

    pub fn h(&self, k: usize) -> &CVector {
        &self.h[k]
    }

    pub fn vectors(&self) -> &[CVector] {
        &self.h
    }

    /// The `M` entries of `h_k` that belong to BS `i`.
    pub fn block(&self, k: usize, i: usize) -> Result<&[Complex64]> {
        check_index("MT", k, self.h.len())?;
        check_index("BS", i, self.n_bs)?;
        Ok(&self.h[k].as_slice()[i * self.n_ant..(i + 1) * self.n_ant])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QosTargets {
    /// Linear-scale SINR targets.
    pub sinr_min: Vec<f64>,
    /// Receiver noise power per MT, Watts.
    pub noise_power: Vec<f64>,
}

impl QosTargets {
    pub fn validate(&self, n_mt: usize) -> Result<()> {
        check_len("sinr_min", &self.sinr_min, n_mt)?;
        check_len("noise_power", &self.noise_power, n_mt)?;
        if self
            .sinr_min
            .iter()
            .chain(&self.noise_power)
            .any(|&x| !(x > 0.0 && x.is_finite()))
        {
            return Err(Error::invalid("SINR targets and noise powers must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub cluster: ClusterConfig,
    pub energy: EnergyInputs,
    pub channels: ChannelSet,
    pub qos: QosTargets,
}

impl ProblemInstance {
    pub fn new(cluster: ClusterConfig, energy: EnergyInputs, channels: ChannelSet, qos: QosTargets) -> Result<Self> {
        let inst = ProblemInstance {
            cluster,
            energy,
            channels,
            qos,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        self.cluster.validate()?;
        self.energy.validate(self.cluster.n_bs)?;
        self.qos.validate(self.cluster.n_mt)?;
        let ch = &self.channels;
        if ch.n_bs() != self.cluster.n_bs || ch.n_ant() != self.cluster.n_ant || ch.n_mt() != self.cluster.n_mt {
            return Err(Error::invalid(format!(
                "channel set is {}x{} antennas for {} MTs, cluster expects {}x{} for {}",
                ch.n_bs(),
                ch.n_ant(),
                ch.n_mt(),
                self.cluster.n_bs,
                self.cluster.n_ant,
                self.cluster.n_mt
            )));
        }
        Ok(())
    }

    pub fn n_bs(&self) -> usize {
        self.cluster.n_bs
    }

    pub fn n_mt(&self) -> usize {
        self.cluster.n_mt
    }

    /// Same instance with different energy inputs.
    pub fn with_energy(&self, energy: EnergyInputs) -> Result<Self> {
        Self::new(self.cluster.clone(), energy, self.channels.clone(), self.qos.clone())
    }
}

/// Transmit beamformers `w_k`, one length-`M·N` vector per MT.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformingSolution {
    pub n_ant: usize,
    pub w: Vec<CVector>,
}

impl BeamformingSolution {
    pub fn zeros(n_bs: usize, n_ant: usize, n_mt: usize) -> Self {
        BeamformingSolution {
            n_ant,
            w: vec![CVector::zeros(n_bs * n_ant); n_mt],
        }
    }

    pub fn n_bs(&self) -> usize {
        self.w.first().map_or(0, |w| w.len() / self.n_ant)
    }

    /// Transmit power radiated by BS `i`.
    pub fn tx_power(&self, i: usize) -> Result<f64> {
        per_bs_tx_power(self, i)
    }

    /// Transmit power of every BS.
    pub fn tx_powers(&self) -> Vec<f64> {
        (0..self.n_bs()).map(|i| block_power(self, i)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.w
            .iter()
            .all(|w| w.iter().all(|z| z.re.is_finite() && z.im.is_finite()))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergySchedule {
    /// Energy bought from the grid by each BS.
    pub buy: Vec<f64>,
    /// Energy sold to the grid by each BS.
    pub sell: Vec<f64>,
}

impl EnergySchedule {
    pub fn zeros(n_bs: usize) -> Self {
        EnergySchedule {
            buy: vec![0.0; n_bs],
            sell: vec![0.0; n_bs],
        }
    }
}

/// The four beamforming/trading schemes the crate can solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Joint trading and optimal beamforming.
    Optimal,
    /// Joint trading and zero-forcing beamforming.
    Zf,
    /// Sum-power optimal beamforming, then independent trading.
    ConvOptimal,
    /// Sum-power zero-forcing beamforming, then independent trading.
    ConvZf,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Optimal, Scheme::Zf, Scheme::ConvOptimal, Scheme::ConvZf];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Optimal => "optimal",
            Scheme::Zf => "zf",
            Scheme::ConvOptimal => "conv-optimal",
            Scheme::ConvZf => "conv-zf",
        }
    }

    pub fn uses_zf(self) -> bool {
        matches!(self, Scheme::Zf | Scheme::ConvZf)
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|sc| sc.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown scheme `{s}`")))
    }
}

/// One outer-loop iteration of a dual solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DualIterate {
    pub iteration: usize,
    /// Best dual value seen so far (lower bound on the optimum).
    pub lower_bound: f64,
    /// Best primal-feasible objective seen so far.
    pub upper_bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub scheme: Scheme,
    pub beams: BeamformingSolution,
    pub schedule: EnergySchedule,
    /// `total_cost(schedule)` at the instance's real prices.
    pub cost: f64,
    /// Objective the solver actually minimized. Equals `cost` for the joint
    /// schemes; for the conventional schemes it is the equal-price surrogate
    /// whose optimum is the sum-power optimum.
    pub primal_objective: f64,
    pub dual_mu: Vec<f64>,
    pub dual_nu: Vec<f64>,
    pub dual_value: f64,
    pub iterations: usize,
    pub converged: bool,
    pub log: Vec<DualIterate>,
}

impl SolveOutcome {
    pub fn relative_gap(&self) -> f64 {
        (self.primal_objective - self.dual_value).abs() / self.dual_value.abs().max(1.0)
    }
}

/// `Σ_k ‖w_k[block i]‖²`, the transmit power of BS `i`.
pub fn per_bs_tx_power(beams: &BeamformingSolution, i: usize) -> Result<f64> {
    check_index("BS", i, beams.n_bs())?;
    Ok(block_power(beams, i))
}

fn block_power(beams: &BeamformingSolution, i: usize) -> f64 {
    let m = beams.n_ant;
    beams.w.iter().map(|w| w.rows(i * m, m).norm_squared()).sum()
}

/// Downlink SINR of MT `k`.
pub fn sinr(beams: &BeamformingSolution, channels: &ChannelSet, qos: &QosTargets, k: usize) -> Result<f64> {
    check_index("MT", k, channels.n_mt())?;
    if beams.w.len() != channels.n_mt() {
        return Err(Error::invalid("beam count does not match MT count"));
    }
    let hk = channels.h(k);
    let mut interference = qos.noise_power[k];
    let mut signal = 0.0;
    for (l, wl) in beams.w.iter().enumerate() {
        let g = hk.dotc(wl).norm_sqr();
        if l == k {
            signal = g;
        } else {
            interference += g;
        }
    }
    Ok(signal / interference)
}

/// `Σ_i (α_b,i·buy_i − α_s,i·sell_i)`; negative when the cluster is a net seller.
pub fn total_cost(schedule: &EnergySchedule, energy: &EnergyInputs) -> f64 {
    schedule
        .buy
        .iter()
        .zip(&schedule.sell)
        .zip(energy.price_buy.iter().zip(&energy.price_sell))
        .map(|((b, s), (pb, ps))| pb * b - ps * s)
        .sum()
}

/// Total power drawn by BS `i`: transmit power through the PA plus circuit power.
pub fn consumption(beams: &BeamformingSolution, cluster: &ClusterConfig, i: usize) -> Result<f64> {
    check_index("BS", i, cluster.n_bs)?;
    let tx = per_bs_tx_power(beams, i)?;
    Ok(tx / cluster.pa_efficiency + cluster.p_circuit[i])
}

fn check_len(name: &str, v: &[f64], n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::invalid(format!("{name} has {} entries, expected {n}", v.len())));
    }
    Ok(())
}

pub(crate) fn check_index(what: &'static str, index: usize, len: usize) -> Result<()> {
    if index >= len {
        return Err(Error::IndexOutOfRange { what, index, len });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn real_beams(n_ant: usize, w: &[Vec<f64>]) -> BeamformingSolution {
        BeamformingSolution {
            n_ant,
            w: w.iter()
                .map(|v| CVector::from_iterator(v.len(), v.iter().map(|&x| Complex64::new(x, 0.0))))
                .collect(),
        }
    }

    fn toy_energy() -> EnergyInputs {
        EnergyInputs {
            harvest: vec![0.2, 1.0],
            price_buy: vec![1.0, 1.0],
            price_sell: vec![0.1, 0.1],
            price_floor: 0.1,
            price_cap: 1.0,
        }
    }

    #[test]
    fn toy_tx_powers() {
        let beams = real_beams(1, &[vec![0.5, 1.0]]);
        assert!((per_bs_tx_power(&beams, 0).unwrap() - 0.25).abs() < 1e-15);
        assert!((per_bs_tx_power(&beams, 1).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(per_bs_tx_power(&beams, 2), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn zero_and_unit_beams() {
        let zero = BeamformingSolution::zeros(2, 3, 4);
        assert_eq!(zero.tx_powers(), vec![0.0, 0.0]);
        let unit = real_beams(1, &[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(unit.tx_powers(), vec![1.0, 1.0]);
    }

    #[test]
    fn toy_sinr() {
        let ch = ChannelSet::from_real(2, 1, &[vec![1.0, 0.5]]).unwrap();
        let qos = QosTargets {
            sinr_min: vec![1.0],
            noise_power: vec![1.0],
        };
        let beams = real_beams(1, &[vec![0.5, 1.0]]);
        assert!((sinr(&beams, &ch, &qos, 0).unwrap() - 1.0).abs() < 1e-15);
        let zero = BeamformingSolution::zeros(2, 1, 1);
        assert_eq!(sinr(&zero, &ch, &qos, 0).unwrap(), 0.0);
        assert!(sinr(&beams, &ch, &qos, 1).is_err());
    }

    #[test]
    fn interference_free_sinr_is_snr() {
        let ch = ChannelSet::from_real(2, 1, &[vec![2.0, 0.0], vec![0.0, 3.0]]).unwrap();
        let qos = QosTargets {
            sinr_min: vec![1.0, 1.0],
            noise_power: vec![0.5, 2.0],
        };
        let beams = real_beams(1, &[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(sinr(&beams, &ch, &qos, 0).unwrap(), 4.0 / 0.5);
        assert_eq!(sinr(&beams, &ch, &qos, 1).unwrap(), 9.0 / 2.0);
    }

    #[test]
    fn toy_costs() {
        let e = toy_energy();
        let proposed = EnergySchedule {
            buy: vec![0.05, 0.0],
            sell: vec![0.0, 0.0],
        };
        assert!((total_cost(&proposed, &e) - 0.05).abs() < 1e-15);
        let conventional = EnergySchedule {
            buy: vec![0.44, 0.0],
            sell: vec![0.0, 0.84],
        };
        assert!((total_cost(&conventional, &e) - 0.356).abs() < 1e-12);
        assert_eq!(total_cost(&EnergySchedule::zeros(2), &e), 0.0);
    }

    #[test]
    fn consumption_arithmetic() {
        let toy = ClusterConfig {
            n_bs: 2,
            n_ant: 1,
            n_mt: 1,
            pa_efficiency: 1.0,
            p_max: vec![10.0, 10.0],
            p_circuit: vec![0.0, 0.0],
        };
        let beams = real_beams(1, &[vec![0.5, 1.0]]);
        assert!((consumption(&beams, &toy, 0).unwrap() - 0.25).abs() < 1e-15);

        let field = ClusterConfig {
            n_bs: 1,
            n_ant: 1,
            n_mt: 1,
            pa_efficiency: 0.1,
            p_max: vec![100.0],
            p_circuit: vec![500.0],
        };
        let ten_watts = real_beams(1, &[vec![10f64.sqrt()]]);
        assert!((consumption(&ten_watts, &field, 0).unwrap() - 600.0).abs() < 1e-9);
        let zero = BeamformingSolution::zeros(1, 1, 1);
        assert_eq!(consumption(&zero, &field, 0).unwrap(), 500.0);
    }

    #[test]
    fn validation_rejects_bad_prices() {
        let mut e = toy_energy();
        e.price_sell[0] = 2.0;
        assert!(e.validate(2).is_err());
        let mut e = toy_energy();
        e.harvest[1] = -1.0;
        assert!(e.validate(2).is_err());
        assert!(toy_energy().validate(3).is_err());
    }

    #[test]
    fn channel_blocks() {
        let ch = ChannelSet::from_real(2, 2, &[vec![1.0, 2.0, 3.0, 4.0]]).unwrap();
        assert_eq!(ch.block(0, 1).unwrap()[0].re, 3.0);
        assert!(ch.block(0, 2).is_err());
        assert!(ChannelSet::from_real(2, 2, &[vec![1.0]]).is_err());
    }

    fn cvec(n: usize) -> impl Strategy<Value = CVector> {
        prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), n)
            .prop_map(|v| CVector::from_iterator(v.len(), v.into_iter().map(|(a, b)| Complex64::new(a, b))))
    }

    proptest! {
        #[test]
        fn phase_rotation_is_invisible(
            h in prop::collection::vec(cvec(4), 2),
            w in prop::collection::vec(cvec(4), 2),
            phases in prop::collection::vec(0.0f64..std::f64::consts::TAU, 2),
        ) {
            let ch = ChannelSet::new(2, 2, h).unwrap();
            let qos = QosTargets { sinr_min: vec![1.0, 1.0], noise_power: vec![0.3, 0.7] };
            let beams = BeamformingSolution { n_ant: 2, w: w.clone() };
            let rotated = BeamformingSolution {
                n_ant: 2,
                w: w.iter().zip(&phases).map(|(v, &p)| v * Complex64::from_polar(1.0, p)).collect(),
            };
            for k in 0..2 {
                let a = sinr(&beams, &ch, &qos, k).unwrap();
                let b = sinr(&rotated, &ch, &qos, k).unwrap();
                prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
            }
            for i in 0..2 {
                let a = beams.tx_power(i).unwrap();
                let b = rotated.tx_power(i).unwrap();
                prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
            }
        }

        #[test]
        fn cost_is_linear(
            buy in prop::collection::vec(0.0f64..5.0, 2),
            sell in prop::collection::vec(0.0f64..5.0, 2),
            c in -3.0f64..3.0,
        ) {
            let e = toy_energy();
            let s = EnergySchedule { buy: buy.clone(), sell: sell.clone() };
            let scaled = EnergySchedule {
                buy: buy.iter().map(|x| c * x).collect(),
                sell: sell.iter().map(|x| c * x).collect(),
            };
            let base = total_cost(&s, &e);
            prop_assert!((total_cost(&scaled, &e) - c * base).abs() <= 1e-12 * (1.0 + base.abs()));
        }

        #[test]
        fn consumption_floor_is_circuit_power(w in prop::collection::vec(cvec(2), 1), pc in 0.0f64..10.0) {
            let cluster = ClusterConfig {
                n_bs: 2, n_ant: 1, n_mt: 1, pa_efficiency: 0.5,
                p_max: vec![1.0, 1.0], p_circuit: vec![pc, pc],
            };
            let beams = BeamformingSolution { n_ant: 1, w };
            for i in 0..2 {
                let c = consumption(&beams, &cluster, i).unwrap();
                prop_assert!(c >= pc);
                prop_assert_eq!(c == pc, beams.tx_power(i).unwrap() == 0.0);
            }
        }
    }
}

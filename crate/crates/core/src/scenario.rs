//! Scenario generation and timeline execution.
//!
//! A scenario is a cluster template (powers, prices, QoS), a channel source
//! and a renewable series with one harvest vector per block. The runner
//! solves every requested scheme in every block and aggregates the bills.
//!
//! Channels follow a hexagonal layout with inter-BS distance `d`, MTs
//! uniform over the cluster's cells, and the gain
//! `h_{i,k} = √PL(d_{i,k}) · g` with i.i.d. `CN(0, 1)` fading per antenna.
//! The default path loss is the macro-cell model
//! `PL(dB) = 128.1 + 37.6·log10(d / 1 km)`.

use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{conventional_optimal, conventional_zf};
use crate::dual::SolverOptions;
use crate::duality::solve_joint;
use crate::error::{Error, Result};
use crate::feasibility::{check_feasible, check_zf_feasible, FeasibilityOptions};
use crate::model::{
    consumption, total_cost, CVector, ChannelSet, ClusterConfig, EnergySchedule, ProblemInstance, Scheme, SolveOutcome,
};
use crate::zf::solve_zf;

/// `−85 dBm` in Watts.
pub const NOISE_POWER_W: f64 = 3.162_277_660_168_379_5e-12;

/// Convert dBm to Watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Convert a ratio in dB to linear scale.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// `PL(dB) = intercept + slope·log10(d / 1 km)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLossModel {
    pub intercept_db: f64,
    pub slope_db: f64,
}

impl Default for PathLossModel {
    fn default() -> Self {
        PathLossModel {
            intercept_db: 128.1,
            slope_db: 37.6,
        }
    }
}

impl PathLossModel {
    /// Linear power gain at `distance_m` meters.
    pub fn gain(&self, distance_m: f64) -> f64 {
        let db = self.intercept_db + self.slope_db * (distance_m / 1000.0).log10();
        10f64.powf(-db / 10.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutSpec {
    /// Distance between neighbouring BSs, meters.
    pub inter_bs_distance_m: f64,
    #[serde(default)]
    pub path_loss: PathLossModel,
    /// MTs are never placed closer than this to their serving BS.
    #[serde(default = "default_min_distance")]
    pub min_distance_m: f64,
    pub seed: u64,
}

fn default_min_distance() -> f64 {
    35.0
}

impl LayoutSpec {
    pub fn new(inter_bs_distance_m: f64, seed: u64) -> Self {
        LayoutSpec {
            inter_bs_distance_m,
            path_loss: PathLossModel::default(),
            min_distance_m: default_min_distance(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.inter_bs_distance_m > 0.0 && self.inter_bs_distance_m.is_finite()) {
            return Err(Error::invalid("inter-BS distance must be positive"));
        }
        if !(self.min_distance_m > 0.0 && self.min_distance_m < self.inter_bs_distance_m / 2.0) {
            return Err(Error::invalid(
                "minimum MT distance must be positive and below half the inter-BS distance",
            ));
        }
        Ok(())
    }
}

/// BS sites on a hexagonal lattice, ordered ring by ring so that any prefix
/// of three sites forms mutually adjacent cells.
pub fn bs_positions(n_bs: usize, inter_bs_distance_m: f64) -> Vec<[f64; 2]> {
    let d = inter_bs_distance_m;
    let dir = |j: usize| {
        let a = std::f64::consts::FRAC_PI_3 * j as f64;
        [a.cos(), a.sin()]
    };
    let mut out = vec![[0.0, 0.0]];
    let mut ring = 1;
    while out.len() < n_bs {
        // Walk the ring starting at corner 0, moving along each side.
        for side in 0..6 {
            let (start, step) = (dir(side), dir(side + 2));
            for s in 0..ring {
                let r = ring as f64;
                let s = s as f64;
                out.push([d * (r * start[0] + s * step[0]), d * (r * start[1] + s * step[1])]);
            }
        }
        ring += 1;
    }
    out.truncate(n_bs);
    out
}

/// Whether `p` lies in the hexagonal cell of a site at `center`.
fn in_cell(p: [f64; 2], center: [f64; 2], d: f64) -> bool {
    let (x, y) = (p[0] - center[0], p[1] - center[1]);
    (0..3).all(|j| {
        let a = std::f64::consts::FRAC_PI_3 * j as f64;
        (x * a.cos() + y * a.sin()).abs() <= d / 2.0
    })
}

fn place_mt<R: Rng>(rng: &mut R, sites: &[[f64; 2]], layout: &LayoutSpec) -> [f64; 2] {
    let d = layout.inter_bs_distance_m;
    let radius = d / 3f64.sqrt();
    let center = sites[rng.random_range(0..sites.len())];
    loop {
        let p = [
            center[0] + rng.random_range(-radius..radius),
            center[1] + rng.random_range(-radius..radius),
        ];
        let dist = (p[0] - center[0]).hypot(p[1] - center[1]);
        if dist >= layout.min_distance_m && in_cell(p, center, d) {
            return p;
        }
    }
}

/// One MT's channel: `√gain_i · g` on each of BS `i`'s antennas, `g ~ CN(0, 1)`.
pub fn fading_channel<R: Rng>(rng: &mut R, gains: &[f64], n_ant: usize) -> CVector {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    CVector::from_iterator(
        gains.len() * n_ant,
        gains
            .iter()
            .flat_map(|g| std::iter::repeat_n(g.sqrt(), n_ant))
            .map(|a| {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                Complex64::new(a * scale * re, a * scale * im)
            }),
    )
}

/// Seed for realization `index` of a layout: distinct, reproducible streams.
pub fn realization_seed(seed: u64, index: u64) -> u64 {
    seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Draw MT positions and fading for realization `index`.
pub fn generate_channels(layout: &LayoutSpec, cluster: &ClusterConfig, index: u64) -> Result<ChannelSet> {
    layout.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(realization_seed(layout.seed, index));
    let sites = bs_positions(cluster.n_bs, layout.inter_bs_distance_m);
    let h = (0..cluster.n_mt)
        .map(|_| {
            let p = place_mt(&mut rng, &sites, layout);
            let gains: Vec<f64> = sites
                .iter()
                .map(|s| layout.path_loss.gain((p[0] - s[0]).hypot(p[1] - s[1])))
                .collect();
            fading_channel(&mut rng, &gains, cluster.n_ant)
        })
        .collect();
    ChannelSet::new(cluster.n_bs, cluster.n_ant, h)
}

/// Harvested energy per BS for consecutive blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct RenewableSeries {
    /// Strictly increasing block indices.
    pub blocks: Vec<u64>,
    /// `energy[t][i]`: energy harvested by BS `i` in block `blocks[t]`.
    pub energy: Vec<Vec<f64>>,
}

impl RenewableSeries {
    pub fn new(blocks: Vec<u64>, energy: Vec<Vec<f64>>) -> Result<Self> {
        let s = RenewableSeries { blocks, energy };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks.is_empty() {
            return Err(Error::invalid("renewable series has no samples"));
        }
        if self.blocks.len() != self.energy.len() {
            return Err(Error::invalid("one energy vector per block required"));
        }
        if self.blocks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("block indices must be strictly increasing"));
        }
        let n = self.energy[0].len();
        if n == 0 || self.energy.iter().any(|e| e.len() != n) {
            return Err(Error::invalid("every block needs the same, non-zero number of BSs"));
        }
        if self.energy.iter().flatten().any(|e| !(*e >= 0.0 && e.is_finite())) {
            return Err(Error::invalid("harvested energy must be non-negative"));
        }
        Ok(())
    }

    pub fn n_bs(&self) -> usize {
        self.energy[0].len()
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SampleRow {
    block: u64,
    bs_id: usize,
    energy: f64,
}

/// Parse the `block,bs_id,energy` CSV format. `n_bs`, when given, is the
/// cluster size the ids must fit.
pub fn read_renewable_csv<R: Read>(reader: R, source: &str, n_bs: Option<usize>) -> Result<RenewableSeries> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["block", "bs_id", "energy"] {
        return Err(Error::Parse {
            path: source.to_string(),
            line: 1,
            message: "header must be `block,bs_id,energy`".into(),
        });
    }
    let mut rows: Vec<(u64, usize, f64)> = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let parse_err = |message: String| Error::Parse {
            path: source.to_string(),
            line,
            message,
        };
        let row: SampleRow = record
            .deserialize(Some(&headers))
            .map_err(|e| parse_err(format!("malformed row: {e}")))?;
        if !(row.energy >= 0.0 && row.energy.is_finite()) {
            return Err(parse_err(format!("negative or non-finite energy {}", row.energy)));
        }
        if let Some(n) = n_bs {
            if row.bs_id >= n {
                return Err(parse_err(format!("bs_id {} outside a cluster of {n} BSs", row.bs_id)));
            }
        }
        rows.push((row.block, row.bs_id, row.energy));
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            path: source.to_string(),
            line: 1,
            message: "no samples".into(),
        });
    }
    let width = n_bs.unwrap_or_else(|| rows.iter().map(|r| r.1).max().unwrap_or(0) + 1);
    let mut blocks: Vec<u64> = rows.iter().map(|r| r.0).collect();
    blocks.sort_unstable();
    blocks.dedup();
    let mut energy = vec![vec![f64::NAN; width]; blocks.len()];
    for (block, bs, e) in rows {
        let t = blocks.binary_search(&block).expect("block collected above");
        if !energy[t][bs].is_nan() {
            return Err(Error::invalid(format!("duplicate sample for block {block}, BS {bs}")));
        }
        energy[t][bs] = e;
    }
    for (t, row) in energy.iter().enumerate() {
        if let Some(bs) = row.iter().position(|e| e.is_nan()) {
            return Err(Error::invalid(format!("block {} has no sample for BS {bs}", blocks[t])));
        }
    }
    RenewableSeries::new(blocks, energy)
}

pub fn load_renewable_csv(path: &Path, n_bs: Option<usize>) -> Result<RenewableSeries> {
    let file = std::fs::File::open(path)?;
    read_renewable_csv(file, &path.display().to_string(), n_bs)
}

pub fn write_renewable_csv<W: Write>(series: &RenewableSeries, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for (block, row) in series.blocks.iter().zip(&series.energy) {
        for (bs_id, energy) in row.iter().enumerate() {
            w.serialize(SampleRow {
                block: *block,
                bs_id,
                energy: *energy,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Synthetic day profile: a solar half-sine between 06:00 and 18:00 plus a
/// mean-reverting, non-negative wind component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticRenewables {
    pub blocks: usize,
    /// Blocks per 24 hours.
    pub blocks_per_day: usize,
    /// Per-BS solar output at noon.
    pub solar_peak: Vec<f64>,
    /// Per-BS long-run wind output.
    pub wind_mean: Vec<f64>,
    /// Fraction of the gap to the mean closed per block.
    pub wind_reversion: f64,
    /// Wind noise standard deviation relative to the mean.
    pub wind_volatility: f64,
    pub seed: u64,
}

impl SyntheticRenewables {
    /// A profile sized relative to the per-BS circuit power.
    pub fn for_circuit_power(p_circuit: &[f64], blocks: usize, seed: u64) -> Self {
        SyntheticRenewables {
            blocks,
            blocks_per_day: 24,
            solar_peak: p_circuit.iter().map(|p| 1.2 * p).collect(),
            wind_mean: p_circuit.iter().map(|p| 0.4 * p).collect(),
            wind_reversion: 0.3,
            wind_volatility: 0.3,
            seed,
        }
    }

    pub fn generate(&self) -> Result<RenewableSeries> {
        let n = self.solar_peak.len();
        if n == 0 || self.wind_mean.len() != n || self.blocks == 0 || self.blocks_per_day == 0 {
            return Err(Error::invalid(
                "synthetic profile needs blocks and matching per-BS solar and wind figures",
            ));
        }
        if self.solar_peak.iter().chain(&self.wind_mean).any(|x| !(*x >= 0.0)) {
            return Err(Error::invalid("synthetic profile figures must be non-negative"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let noise =
            Normal::new(0.0, self.wind_volatility).map_err(|e| Error::invalid(format!("wind volatility: {e}")))?;
        let mut wind = self.wind_mean.clone();
        let mut energy = Vec::with_capacity(self.blocks);
        for t in 0..self.blocks {
            let hour = 24.0 * ((t % self.blocks_per_day) as f64 + 0.5) / self.blocks_per_day as f64;
            let sun = if (6.0..18.0).contains(&hour) {
                (std::f64::consts::PI * (hour - 6.0) / 12.0).sin()
            } else {
                0.0
            };
            let row = (0..n)
                .map(|i| {
                    let m = self.wind_mean[i];
                    let shock: f64 = noise.sample(&mut rng);
                    wind[i] = (wind[i] + self.wind_reversion * (m - wind[i]) + m * shock).max(0.0);
                    self.solar_peak[i] * sun + wind[i]
                })
                .collect();
            energy.push(row);
        }
        RenewableSeries::new((0..self.blocks as u64).collect(), energy)
    }
}

/// Where each block's channels come from.
#[derive(Debug, Clone, PartialEq)]
pub enum ChannelSource {
    /// The template instance's channels, in every block.
    Template,
    /// One fresh realization per block, seeded by the block index.
    PerBlock(LayoutSpec),
    /// The same `realizations` draws in every block; per-block results are
    /// averaged over the draws on which every requested scheme is feasible.
    FixedSet { layout: LayoutSpec, realizations: usize },
}

/// What to do with a block when a requested scheme is infeasible or fails.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InfeasiblePolicy {
    /// Drop the block from the report.
    #[default]
    Skip,
    /// Abort the run with the solver's error.
    Error,
    /// Keep the block, flagged, without per-BS figures.
    RecordInfeasible,
}

impl std::str::FromStr for InfeasiblePolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "skip" => Ok(InfeasiblePolicy::Skip),
            "error" => Ok(InfeasiblePolicy::Error),
            "record-infeasible" => Ok(InfeasiblePolicy::RecordInfeasible),
            other => Err(Error::invalid(format!("unknown infeasibility policy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimelineOptions {
    pub schemes: Vec<Scheme>,
    pub channels: ChannelSource,
    pub policy: InfeasiblePolicy,
    pub solver: SolverOptions,
    pub feasibility: FeasibilityOptions,
}

impl TimelineOptions {
    pub fn new(channels: ChannelSource) -> Self {
        TimelineOptions {
            schemes: Scheme::ALL.to_vec(),
            channels,
            policy: InfeasiblePolicy::default(),
            solver: SolverOptions::default(),
            feasibility: FeasibilityOptions::default(),
        }
    }
}

/// One scheme's figures in one block, averaged over the block's channel
/// realizations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemeBlockResult {
    pub scheme: Scheme,
    pub tx_power: Vec<f64>,
    pub consumption: Vec<f64>,
    pub schedule: EnergySchedule,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockReport {
    pub block: u64,
    pub harvest: Vec<f64>,
    /// Channel realizations the figures average over.
    pub realizations: usize,
    /// False when the block was recorded despite an infeasible or failed
    /// scheme; `results` is then empty.
    pub feasible: bool,
    pub note: Option<String>,
    pub results: Vec<SchemeBlockResult>,
}

impl BlockReport {
    pub fn result(&self, scheme: Scheme) -> Option<&SchemeBlockResult> {
        self.results.iter().find(|r| r.scheme == scheme)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemeSummary {
    pub scheme: Scheme,
    /// Mean cost over the feasible blocks (NaN if there are none).
    pub mean_cost: f64,
    pub blocks_feasible: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimelineReport {
    pub schemes: Vec<Scheme>,
    pub blocks: Vec<BlockReport>,
}

impl TimelineReport {
    pub fn summary(&self) -> Vec<SchemeSummary> {
        self.schemes
            .iter()
            .map(|&scheme| {
                let costs: Vec<f64> = self
                    .blocks
                    .iter()
                    .filter_map(|b| b.result(scheme).map(|r| r.cost))
                    .collect();
                SchemeSummary {
                    scheme,
                    mean_cost: costs.iter().sum::<f64>() / costs.len() as f64,
                    blocks_feasible: costs.len(),
                }
            })
            .collect()
    }

    /// `block,scheme,bs_id,tx_power,consumption,buy,sell`, one row per
    /// feasible block, scheme and BS.
    pub fn write_blocks_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["block", "scheme", "bs_id", "tx_power", "consumption", "buy", "sell"])?;
        for b in &self.blocks {
            for r in &b.results {
                for i in 0..r.tx_power.len() {
                    w.write_record([
                        b.block.to_string(),
                        r.scheme.to_string(),
                        i.to_string(),
                        r.tx_power[i].to_string(),
                        r.consumption[i].to_string(),
                        r.schedule.buy[i].to_string(),
                        r.schedule.sell[i].to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// `scheme,mean_cost,blocks_feasible`.
    pub fn write_summary_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["scheme", "mean_cost", "blocks_feasible"])?;
        for s in self.summary() {
            w.write_record([
                s.scheme.to_string(),
                s.mean_cost.to_string(),
                s.blocks_feasible.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Solve one scheme on one instance.
pub fn solve_scheme(instance: &ProblemInstance, scheme: Scheme, opts: &SolverOptions) -> Result<SolveOutcome> {
    match scheme {
        Scheme::Optimal => solve_joint(instance, opts),
        Scheme::Zf => solve_zf(instance, opts),
        Scheme::ConvOptimal => conventional_optimal(instance, opts),
        Scheme::ConvZf => conventional_zf(instance, opts),
    }
}

/// Whether every requested scheme's problem is feasible on these channels.
/// Ambiguous or failed checks count as infeasible.
fn mutually_feasible(instance: &ProblemInstance, schemes: &[Scheme], opts: &FeasibilityOptions) -> Result<bool> {
    let verdict = |r: Result<crate::feasibility::Feasibility>| match r {
        Ok(v) => Ok(v.is_feasible()),
        Err(e) if e.is_infeasible() || matches!(e, Error::NotConverged { .. }) => Ok(false),
        Err(e) => Err(e),
    };
    if schemes.iter().any(|s| !s.uses_zf()) && !verdict(check_feasible(instance, opts))? {
        return Ok(false);
    }
    if schemes.iter().any(|s| s.uses_zf()) && !verdict(check_zf_feasible(instance, opts))? {
        return Ok(false);
    }
    Ok(true)
}

fn scheme_result(instance: &ProblemInstance, outcome: &SolveOutcome) -> SchemeBlockResult {
    let n = instance.n_bs();
    SchemeBlockResult {
        scheme: outcome.scheme,
        tx_power: outcome.beams.tx_powers(),
        consumption: (0..n)
            .map(|i| consumption(&outcome.beams, &instance.cluster, i).expect("BS index in range"))
            .collect(),
        schedule: outcome.schedule.clone(),
        cost: outcome.cost,
    }
}

fn average(results: &[SchemeBlockResult], instance: &ProblemInstance) -> SchemeBlockResult {
    let n = instance.n_bs();
    let r = results.len() as f64;
    let mean = |f: &dyn Fn(&SchemeBlockResult) -> &Vec<f64>| -> Vec<f64> {
        (0..n)
            .map(|i| results.iter().map(|x| f(x)[i]).sum::<f64>() / r)
            .collect()
    };
    let schedule = EnergySchedule {
        buy: mean(&|x| &x.schedule.buy),
        sell: mean(&|x| &x.schedule.sell),
    };
    SchemeBlockResult {
        scheme: results[0].scheme,
        tx_power: mean(&|x| &x.tx_power),
        consumption: mean(&|x| &x.consumption),
        // The bill is linear in the schedule, so pricing the averaged
        // schedule gives the average bill.
        cost: total_cost(&schedule, &instance.energy),
        schedule,
    }
}

enum BlockVerdict {
    Solved(BlockReport),
    Rejected {
        block: u64,
        harvest: Vec<f64>,
        error: Error,
    },
}

/// Run every requested scheme over the series.
///
/// Blocks are solved in parallel and merged in block order, so the report
/// depends only on the inputs.
pub fn run_timeline(
    template: &ProblemInstance,
    series: &RenewableSeries,
    opts: &TimelineOptions,
) -> Result<TimelineReport> {
    series.validate()?;
    if series.n_bs() != template.n_bs() {
        return Err(Error::invalid(format!(
            "renewable series covers {} BSs but the cluster has {}",
            series.n_bs(),
            template.n_bs()
        )));
    }
    if opts.schemes.is_empty() {
        return Err(Error::invalid("no schemes requested"));
    }

    // Fixed realizations are screened once: feasibility does not depend on
    // harvests or prices.
    let fixed: Option<Vec<ProblemInstance>> = match &opts.channels {
        ChannelSource::Template => Some(vec![template.clone()]),
        ChannelSource::FixedSet { layout, realizations } => {
            if *realizations == 0 {
                return Err(Error::invalid("fixed channel set needs at least one realization"));
            }
            let screened: Vec<Option<ProblemInstance>> = (0..*realizations as u64)
                .into_par_iter()
                .map(|r| -> Result<Option<ProblemInstance>> {
                    let mut inst = template.clone();
                    inst.channels = generate_channels(layout, &template.cluster, r)?;
                    Ok(mutually_feasible(&inst, &opts.schemes, &opts.feasibility)?.then_some(inst))
                })
                .collect::<Result<_>>()?;
            let kept: Vec<ProblemInstance> = screened.into_iter().flatten().collect();
            if kept.is_empty() {
                return Err(Error::Infeasible(
                    "no channel realization is feasible for every requested scheme".into(),
                ));
            }
            Some(kept)
        }
        ChannelSource::PerBlock(_) => None,
    };

    let verdicts: Vec<BlockVerdict> = series
        .blocks
        .par_iter()
        .zip(&series.energy)
        .map(|(&block, harvest)| {
            let run = || -> Result<BlockReport> {
                let instances = match (&fixed, &opts.channels) {
                    (Some(v), _) => v.clone(),
                    (None, ChannelSource::PerBlock(layout)) => {
                        let mut inst = template.clone();
                        inst.channels = generate_channels(layout, &template.cluster, block)?;
                        if !mutually_feasible(&inst, &opts.schemes, &opts.feasibility)? {
                            return Err(Error::Infeasible(format!(
                                "block {block}: channels infeasible for a requested scheme"
                            )));
                        }
                        vec![inst]
                    }
                    (None, _) => unreachable!("only per-block channels are drawn lazily"),
                };
                let mut energy = template.energy.clone();
                energy.harvest = harvest.clone();
                let mut results = Vec::with_capacity(opts.schemes.len());
                for &scheme in &opts.schemes {
                    let per_draw = instances
                        .iter()
                        .map(|inst| {
                            let inst = inst.with_energy(energy.clone())?;
                            let out = solve_scheme(&inst, scheme, &opts.solver)?;
                            Ok(scheme_result(&inst, &out))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    results.push(average(&per_draw, &template.with_energy(energy.clone())?));
                }
                Ok(BlockReport {
                    block,
                    harvest: harvest.clone(),
                    realizations: instances.len(),
                    feasible: true,
                    note: None,
                    results,
                })
            };
            match run() {
                Ok(report) => BlockVerdict::Solved(report),
                Err(error) => BlockVerdict::Rejected {
                    block,
                    harvest: harvest.clone(),
                    error,
                },
            }
        })
        .collect();

    let mut blocks = Vec::with_capacity(verdicts.len());
    for v in verdicts {
        match v {
            BlockVerdict::Solved(report) => blocks.push(report),
            BlockVerdict::Rejected { block, harvest, error } => match opts.policy {
                InfeasiblePolicy::Error => return Err(error),
                InfeasiblePolicy::Skip => {}
                InfeasiblePolicy::RecordInfeasible => blocks.push(BlockReport {
                    block,
                    harvest,
                    realizations: 0,
                    feasible: false,
                    note: Some(error.to_string()),
                    results: Vec::new(),
                }),
            },
        }
    }
    Ok(TimelineReport {
        schemes: opts.schemes.clone(),
        blocks,
    })
}

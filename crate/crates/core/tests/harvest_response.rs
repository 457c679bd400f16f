//! How per-BS transmit power responds to uneven harvests over a timeline.

use gridcomp_core::scenario::{
    db_to_linear, generate_channels, run_timeline, ChannelSource, InfeasiblePolicy, LayoutSpec, RenewableSeries,
    TimelineOptions, NOISE_POWER_W,
};
use gridcomp_core::{ClusterConfig, EnergyInputs, ProblemInstance, QosTargets, Scheme};

fn template(layout: &LayoutSpec) -> ProblemInstance {
    let cluster = ClusterConfig {
        n_bs: 3,
        n_ant: 4,
        n_mt: 8,
        pa_efficiency: 0.1,
        p_max: vec![100.0; 3],
        p_circuit: vec![500.0; 3],
    };
    let channels = generate_channels(layout, &cluster, 0).unwrap();
    ProblemInstance::new(
        cluster,
        EnergyInputs {
            harvest: vec![0.0; 3],
            price_buy: vec![1.0; 3],
            price_sell: vec![0.1; 3],
            price_floor: 0.1,
            price_cap: 1.0,
        },
        channels,
        QosTargets {
            sinr_min: vec![db_to_linear(10.0); 8],
            noise_power: vec![NOISE_POWER_W; 8],
        },
    )
    .unwrap()
}

/// Ranks with ties averaged.
fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        for &k in &idx[i..=j] {
            r[k] = (i + j) as f64 / 2.0;
        }
        i = j + 1;
    }
    r
}

fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

#[test]
fn joint_power_follows_harvest_and_conventional_does_not() {
    let layout = LayoutSpec::new(1000.0, 2024);
    let inst = template(&layout);
    // Every permutation of one rich, one modest and one empty BS, at two
    // overall levels.
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut energy = Vec::new();
    for level in [1.0, 1.5] {
        for p in perms {
            let amounts = [900.0 * level, 400.0 * level, 0.0];
            energy.push((0..3).map(|i| amounts[p[i]]).collect::<Vec<f64>>());
        }
    }
    let series = RenewableSeries::new((0..energy.len() as u64).collect(), energy.clone()).unwrap();
    let mut opts = TimelineOptions::new(ChannelSource::FixedSet {
        layout,
        realizations: 1,
    });
    opts.schemes = vec![Scheme::Optimal, Scheme::ConvOptimal];
    opts.policy = InfeasiblePolicy::Error;
    let report = run_timeline(&inst, &series, &opts).unwrap();

    for i in 0..3 {
        let harvest: Vec<f64> = energy.iter().map(|e| e[i]).collect();
        let power =
            |s: Scheme| -> Vec<f64> { report.blocks.iter().map(|b| b.result(s).unwrap().tx_power[i]).collect() };
        let rho = spearman(&harvest, &power(Scheme::Optimal));
        assert!(rho > 0.0, "BS {i}: joint power vs harvest rank correlation {rho}");
        let conv = power(Scheme::ConvOptimal);
        assert!(conv.iter().all(|p| (p - conv[0]).abs() <= 1e-9 * conv[0].max(1.0)));
    }
}

use adapter_mpc::cost::*;

/// Efficiency-first WAN configurations and their published total latencies.
const WAN_POINTS: [((usize, usize, usize), f64); 5] = [
    ((2, 120, 2), 2.55),
    ((1, 300, 1), 2.24),
    ((4, 180, 1), 1.79),
    ((12, 300, 1), 2.66),
    ((1, 180, 1), 1.68),
];

#[test]
fn published_wan_latencies_are_reproduced() {
    let wan = CostCoefficients::published_wan();
    for ((h, r, s), want) in WAN_POINTS {
        let got = estimate_latency(Arch::new(h, r, s), &wan).total_s;
        assert!((got - want).abs() <= 0.01, "{h},{r},{s}: {got} vs {want}");
    }
}

#[test]
fn published_traffic_is_reproduced() {
    assert!((estimate_comm_gb(Arch::new(1, 300, 1)) - 0.06).abs() <= 0.005);
    assert!((estimate_comm_gb(Arch::new(1, 240, 1)) - 0.05).abs() <= 0.005);
    assert_eq!(estimate_rounds(Arch::new(1, 300, 1)), 29);
    assert_eq!(format!("{:.2}", round_speedup(Arch::new(1, 300, 1), &SFT_BASELINE)), "2.66");
}

/// The full search grid, each configuration profiled `repeats` times.
fn grid(repeats: usize) -> Vec<Arch> {
    let mut g = Vec::new();
    for h in [1, 2, 4, 8, 12] {
        for r in [60, 120, 180, 240, 300] {
            for s in [1, 2, 3] {
                g.extend(std::iter::repeat(Arch::new(h, r, s)).take(repeats));
            }
        }
    }
    g
}

#[test]
fn noisy_profiles_recover_the_coefficients() {
    // with 3% noise the intercept needs repeated measurements: one pass over
    // the grid leaves it with a ~12% standard error
    let truth = CostCoefficients::published_wan();
    for seed in 0..5 {
        let samples = synthesize_samples(&truth, &grid(50), 0.03, seed);
        let fit = fit_cost_model(&samples, "WAN").unwrap();
        for (got, want) in [(fit.comm, truth.comm), (fit.comp, truth.comp)] {
            for (g, w) in got.0.iter().zip(want.0) {
                assert!((g - w).abs() <= 0.05 * w.abs(), "seed {seed}: {g} vs {w}");
            }
        }
        assert!(fit.r2_comm.unwrap() >= 0.99 && fit.r2_comp.unwrap() >= 0.99, "{fit:?}");
    }
}

#[test]
fn fitted_model_reproduces_simulated_latency() {
    use adapter_mpc::nn::AdapterConfig;
    use adapter_mpc::ring::FixedPointConfig;
    use adapter_mpc::runtime::{NetworkEnv, TransportKind};

    let mut g = Vec::new();
    for h in [1, 2, 4] {
        for r in [4, 8, 16] {
            for s in [1, 2, 3] {
                g.push(Arch::new(h, r, s));
            }
        }
    }
    let samples = profile_pipeline(
        &g,
        &AdapterConfig::default(),
        FixedPointConfig::default(),
        &NetworkEnv::wan(),
        TransportKind::InProcess,
        0,
    )
    .unwrap();
    let by_r: Vec<_> = samples.iter().filter(|p| p.h == 1 && p.s == 1).map(|p| p.bytes).collect();
    assert!(by_r.windows(2).all(|w| w[0] < w[1]));
    assert!(samples.iter().all(|p| p.rounds == estimate_rounds(p.arch())));
    let fit = fit_cost_model(&samples, "WAN-desk").unwrap();
    assert!(fit.r2_comm.unwrap() >= 0.98, "{fit:?}");
}

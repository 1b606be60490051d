use rpi_core::engine::{seeded_draw, simulate};
use rpi_core::exact::exact_policy_value;
use rpi_core::instances::{example1, hard_ni, random_discrete};
use rpi_core::{ArrivalOrder, ExecMode, InfoModel, PolicySpec, SimConfig};

#[test]
fn monte_carlo_matches_exact_values() {
    let mut corpus = vec![example1(0.1).unwrap(), hard_ni(1, 0.2).unwrap()];
    corpus.extend(
        (0..6)
            .map(|s| random_discrete(40 + s, 3 + (s as usize % 3), 1 + (s as usize % 2)).unwrap()),
    );
    let policies = [
        (PolicySpec::msa(1), InfoModel::Ni),
        (PolicySpec::MsaRand, InfoModel::Ni),
        (PolicySpec::MsaBarRand, InfoModel::Fi),
        (PolicySpec::Secretary, InfoModel::Ni),
        (PolicySpec::BaselineHalfMean, InfoModel::Ni),
    ];
    for (i, inst) in corpus.iter().enumerate() {
        for (j, (policy, model)) in policies.iter().enumerate() {
            for order in [ArrivalOrder::IndexOrder, ArrivalOrder::UniformRandom] {
                let exact = exact_policy_value(inst, policy, *model, &order).unwrap();
                let cfg = SimConfig {
                    policy: policy.clone(),
                    model: *model,
                    order: order.clone(),
                    trials: 60_000,
                    seed: (100 * i + j) as u64,
                };
                let mc = simulate(inst, &cfg, ExecMode::default()).unwrap();
                let tol = 4.0 * mc.se_alg + 1e-12;
                assert!(
                    (mc.mean_alg - exact.value).abs() <= tol,
                    "instance {i} {policy} {order:?}: mc {} exact {}",
                    mc.mean_alg,
                    exact.value
                );
                assert!(
                    (mc.mean_benchmark - exact.benchmark).abs() <= 4.0 * mc.se_benchmark + 1e-12
                );
            }
        }
    }
}

#[test]
fn order_statistics_match_sampling() {
    let inst = random_discrete(77, 5, 1).unwrap();
    let trials = 100_000u64;
    for j in 1..=5 {
        let exact = inst.order_statistic_expectation(j).unwrap();
        let (mut s, mut ss) = (0.0, 0.0);
        for t in 0..trials {
            let draw = seeded_draw(&inst, &ArrivalOrder::IndexOrder, false, 3, t);
            let mut v: Vec<f64> = draw.values.iter().map(|k| k.value).collect();
            v.sort_by(|a, b| b.total_cmp(a));
            s += v[j - 1];
            ss += v[j - 1] * v[j - 1];
        }
        let mean = s / trials as f64;
        let se = ((ss / trials as f64 - mean * mean) / trials as f64).sqrt();
        assert!(
            (mean - exact).abs() <= 4.0 * se + 1e-12,
            "j={j}: {mean} vs {exact}"
        );
    }
}

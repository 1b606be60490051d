//! Exact expectations on finitely supported instances.
//!
//! [`exact_policy_value`] integrates a policy over every joint value outcome,
//! every sample outcome, every arrival order, every component of the policy's
//! randomisation, and every relative order inside groups of equal numbers.
//! The last item replaces the continuous tie-breakers of the engine: with
//! i.i.d. uniform tie-breakers, the induced order inside each group of equal
//! values is uniform and independent across groups, so enumerating those
//! orders with equal weight reproduces the engine's law exactly.
//!
//! [`optimal_value_fi`] runs backward induction over observed prefixes.

use std::collections::HashMap;

use itertools::Itertools;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::{for_each_joint, DistributionError, Instance};
use crate::engine::{play, ArrivalOrder, EngineError, InfoModel, TrialDraw};
use crate::numeric::{binomial_u128, NeumaierSum};
use crate::policies::{Key, PolicyError, PolicySpec};

/// Cap on enumerated (outcome, order, tie order, component) combinations.
pub const POLICY_CAP: u128 = 1 << 26;
/// Cap on joint value outcomes for the optimal-policy recursion.
pub const OPTIMAL_CAP: u128 = 1 << 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExactError {
    #[error("exact enumeration needs {count} cases, above the cap {cap}")]
    CapExceeded { count: u128, cap: u128 },
    #[error(transparent)]
    Distribution(#[from] DistributionError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Exact policy value with the benchmark it is compared against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactValue {
    pub value: f64,
    pub benchmark: f64,
    pub ratio: f64,
}

fn factorial(m: usize) -> u128 {
    (1..=m as u128).product()
}

/// Indices of items grouped by bit-equal value, keeping only groups of two
/// or more.
fn tie_groups(values: &[f64]) -> Vec<Vec<usize>> {
    let mut groups: Vec<(u64, Vec<usize>)> = Vec::new();
    for (i, v) in values.iter().enumerate() {
        match groups.iter_mut().find(|g| g.0 == v.to_bits()) {
            Some(g) => g.1.push(i),
            None => groups.push((v.to_bits(), vec![i])),
        }
    }
    groups
        .into_iter()
        .map(|g| g.1)
        .filter(|g| g.len() > 1)
        .collect()
}

fn tie_orders(groups: &[Vec<usize>]) -> u128 {
    groups.iter().map(|g| factorial(g.len())).product()
}

/// Call `f(ties, weight)` for every joint relative order of the groups.
fn for_each_tie_order<F: FnMut(&[f64], f64)>(
    groups: &[Vec<usize>],
    ties: &mut [f64],
    weight: f64,
    f: &mut F,
) {
    match groups.split_first() {
        None => f(ties, weight),
        Some((g, rest)) => {
            let m = g.len();
            let w = weight / factorial(m) as f64;
            for perm in (0..m).permutations(m) {
                for (&slot, &r) in g.iter().zip(&perm) {
                    ties[slot] = (r + 1) as f64 / (m + 1) as f64;
                }
                for_each_tie_order(rest, ties, w, f);
            }
        }
    }
}

fn arrival_orders(order: &ArrivalOrder, n: usize) -> Result<Vec<Vec<usize>>, ExactError> {
    order.validate(n)?;
    Ok(match order {
        ArrivalOrder::IndexOrder => vec![(0..n).collect()],
        ArrivalOrder::FixedPermutation(p) => vec![p.clone()],
        ArrivalOrder::UniformRandom => {
            let count = factorial(n);
            if count > POLICY_CAP {
                return Err(ExactError::CapExceeded {
                    count,
                    cap: POLICY_CAP,
                });
            }
            (0..n).permutations(n).collect()
        }
    })
}

/// Exact expected accepted value of `spec` on `inst`.
pub fn exact_policy_value(
    inst: &Instance,
    spec: &PolicySpec,
    model: InfoModel,
    order: &ArrivalOrder,
) -> Result<ExactValue, ExactError> {
    let n = inst.n();
    let supports = inst.supports()?;
    let components = spec.mixture(inst)?;
    let mut policies = Vec::with_capacity(components.len());
    for (w, c) in &components {
        let p = c.build(inst)?;
        if model == InfoModel::Ni && p.needs_identity() {
            return Err(EngineError::IncompatibleModel(c.to_string()).into());
        }
        policies.push((*w, p));
    }
    let with_samples = policies.iter().any(|p| p.1.needs_samples());
    let orders = arrival_orders(order, n)?;

    let outcomes = inst.support_product()?;
    let base = outcomes
        .saturating_mul(if with_samples { outcomes } else { 1 })
        .saturating_mul(orders.len() as u128)
        .saturating_mul(policies.len() as u128);
    if base > POLICY_CAP {
        return Err(ExactError::CapExceeded {
            count: base,
            cap: POLICY_CAP,
        });
    }

    // joint outcomes of values and, if needed, samples as one product space
    let mut joint = supports.clone();
    if with_samples {
        joint.extend(supports.iter().cloned());
    }
    let width = joint.len();

    // counting pass for the tie-order blow-up
    let mut total_cases: u128 = 0;
    let mut numbers = vec![0.0; width];
    for_each_joint(&joint, |idx, _| {
        for (slot, (s, &a)) in numbers.iter_mut().zip(joint.iter().zip(idx)) {
            *slot = s[a].0;
        }
        total_cases = total_cases.saturating_add(tie_orders(&tie_groups(&numbers)));
    });
    let total_cases = total_cases
        .saturating_mul(orders.len() as u128)
        .saturating_mul(policies.len() as u128);
    if total_cases > POLICY_CAP {
        return Err(ExactError::CapExceeded {
            count: total_cases,
            cap: POLICY_CAP,
        });
    }

    let mut dummy = ChaCha8Rng::seed_from_u64(0);
    let order_weight = 1.0 / orders.len() as f64;
    let mut acc = NeumaierSum::new();
    let mut ties = vec![0.5; width];
    let mut draw = TrialDraw {
        values: vec![Key::new(0.0, 0.5); n],
        samples: with_samples.then(|| vec![Key::new(0.0, 0.5); n]),
        arrival: Vec::new(),
    };
    for_each_joint(&joint, |idx, prob| {
        for (slot, (s, &a)) in numbers.iter_mut().zip(joint.iter().zip(idx)) {
            *slot = s[a].0;
        }
        let groups = tie_groups(&numbers);
        ties.iter_mut().for_each(|t| *t = 0.5);
        for_each_tie_order(&groups, &mut ties, prob, &mut |ties, w| {
            for i in 0..n {
                draw.values[i] = Key::new(numbers[i], ties[i]);
            }
            if let Some(s) = draw.samples.as_mut() {
                for i in 0..n {
                    s[i] = Key::new(numbers[n + i], ties[n + i]);
                }
            }
            for arrival in &orders {
                draw.arrival.clone_from(arrival);
                for (cw, policy) in policies.iter_mut() {
                    let out = play(n, inst.k, &draw, policy.as_mut(), model, &mut dummy);
                    acc.add(w * order_weight * *cw * out.accepted);
                }
            }
        });
    });
    let value = acc.value();
    let benchmark = inst.benchmark_exact()?;
    Ok(ExactValue {
        value,
        benchmark,
        ratio: value / benchmark,
    })
}

/// Each valid removed set for `values` with its probability, when the top `k`
/// are removed and ties at the boundary are broken uniformly.
pub fn removal_sets(values: &[f64], k: usize) -> Vec<(Vec<bool>, f64)> {
    let n = values.len();
    if k == 0 {
        return vec![(vec![false; n], 1.0)];
    }
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let boundary = sorted[k - 1];
    let above: Vec<usize> = (0..n).filter(|&i| values[i] > boundary).collect();
    let tied: Vec<usize> = (0..n)
        .filter(|&i| values[i].to_bits() == boundary.to_bits())
        .collect();
    let need = k - above.len();
    let weight = 1.0 / binomial_u128(tied.len() as u64, need as u64) as f64;
    tied.iter()
        .copied()
        .combinations(need)
        .map(|chosen| {
            let mut removed = vec![false; n];
            for &i in above.iter().chain(&chosen) {
                removed[i] = true;
            }
            (removed, weight)
        })
        .collect()
}

#[derive(Default)]
struct Node {
    value: f64,
    mass: NeumaierSum,
    children: HashMap<(usize, u64), usize>,
}

/// Value of the optimal full-information gambler facing arrivals in `order`
/// (a fixed permutation; index order if `None`).
pub fn optimal_value_fi(
    inst: &Instance,
    order: Option<&[usize]>,
) -> Result<ExactValue, ExactError> {
    let n = inst.n();
    let supports = inst.supports()?;
    let count = inst.support_product()?;
    if count > OPTIMAL_CAP {
        return Err(ExactError::CapExceeded {
            count,
            cap: OPTIMAL_CAP,
        });
    }
    let arrival: Vec<usize> = match order {
        Some(p) => {
            ArrivalOrder::FixedPermutation(p.to_vec()).validate(n)?;
            p.to_vec()
        }
        None => (0..n).collect(),
    };
    // trie over observed prefixes; node 0 is the empty history
    let mut nodes: Vec<Node> = vec![Node::default()];
    let mut values = vec![0.0; n];
    for_each_joint(&supports, |idx, prob| {
        for (slot, (s, &a)) in values.iter_mut().zip(supports.iter().zip(idx)) {
            *slot = s[a].0;
        }
        for (removed, w) in removal_sets(&values, inst.k) {
            let p = prob * w;
            let mut cur = 0;
            nodes[0].mass.add(p);
            for &i in arrival.iter().filter(|&&i| !removed[i]) {
                let key = (i, values[i].to_bits());
                let next = match nodes[cur].children.get(&key) {
                    Some(&c) => c,
                    None => {
                        nodes.push(Node {
                            value: values[i],
                            ..Node::default()
                        });
                        let c = nodes.len() - 1;
                        nodes[cur].children.insert(key, c);
                        c
                    }
                };
                nodes[next].mass.add(p);
                cur = next;
            }
        }
    });
    // children are created after their parents, so a reverse sweep is a
    // valid bottom-up order; weighted[c] = P(node) * V(node)
    let mut weighted = vec![0.0; nodes.len()];
    for id in (0..nodes.len()).rev() {
        let cont: NeumaierSum = nodes[id]
            .children
            .values()
            .sorted()
            .map(|&c| weighted[c])
            .collect();
        weighted[id] = if id == 0 {
            cont.value()
        } else {
            (nodes[id].mass.value() * nodes[id].value).max(cont.value())
        };
    }
    let value = weighted[0];
    let benchmark = inst.benchmark_exact()?;
    Ok(ExactValue {
        value,
        benchmark,
        ratio: value / benchmark,
    })
}

/// Value of "take the arrival from variable `i`" on the full-information
/// hard family, in closed form (1-based `i <= k+1`).
pub fn hard_fi_stop_value(k: usize, eps: f64, i: usize) -> f64 {
    let c = binomial_u128(k as u64 + 1, i as u64 - 1) as f64;
    let mut s = NeumaierSum::new();
    s.add((1.0 - eps).powi((k + 2 - i) as i32));
    for j in i..=k + 1 {
        let cj = binomial_u128(k as u64 + 1, j as u64) as f64;
        s.add(cj / c * eps.powi((j + 1 - i) as i32) * (1.0 - eps).powi((k + 1 - j) as i32));
    }
    s.value()
}

/// Benchmark of the full-information hard family in closed form.
pub fn hard_fi_benchmark(k: usize, eps: f64) -> f64 {
    1.0 + (0..=k)
        .map(|j| (1.0 - eps).powi((k + 1 - j) as i32))
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::Distribution;
    use crate::instances::{example1, hard_fi, hard_ni};
    use crate::policies::TieRule;

    const IDX: ArrivalOrder = ArrivalOrder::IndexOrder;

    #[test]
    fn example1_values() {
        let inst = example1(0.1).unwrap();
        let weak = PolicySpec::Msa {
            rank: 2,
            ties: TieRule::Weak,
        };
        let v = exact_policy_value(&inst, &weak, InfoModel::Ni, &IDX).unwrap();
        let e = 0.1f64;
        assert!((v.value - (2.0 * e - 2.0 * e.powi(3) + e.powi(4))).abs() < 1e-12);
        assert!((v.benchmark - 1.18).abs() < 1e-12);
        let half =
            exact_policy_value(&inst, &PolicySpec::BaselineHalfMean, InfoModel::Ni, &IDX).unwrap();
        assert!((half.value - 0.19).abs() < 1e-12);
        let med =
            exact_policy_value(&inst, &PolicySpec::BaselineMedian, InfoModel::Ni, &IDX).unwrap();
        let first =
            exact_policy_value(&inst, &PolicySpec::AcceptFirst, InfoModel::Ni, &IDX).unwrap();
        assert_eq!(med.value, first.value);
    }

    #[test]
    fn removal_set_weights() {
        let sets = removal_sets(&[2.0, 2.0, 2.0], 1);
        assert_eq!(sets.len(), 3);
        assert!(sets.iter().all(|s| (s.1 - 1.0 / 3.0).abs() < 1e-15));
        let sets = removal_sets(&[7.0, 7.0, 3.0], 2);
        assert_eq!(sets.len(), 1);
        let sets = removal_sets(&[5.0, 1.0, 1.0, 1.0], 2);
        assert_eq!(sets.len(), 3);
    }

    #[test]
    fn stop_at_matches_closed_form() {
        for k in 1..=3 {
            let eps = 1e-3;
            let inst = hard_fi(k, eps).unwrap();
            for i in 1..=k + 1 {
                let v =
                    exact_policy_value(&inst, &PolicySpec::StopAt(i), InfoModel::Fi, &IDX).unwrap();
                assert!(
                    (v.value - hard_fi_stop_value(k, eps, i)).abs() < 1e-9,
                    "k={k} i={i}"
                );
            }
        }
        let v = exact_policy_value(
            &hard_fi(1, 0.1).unwrap(),
            &PolicySpec::StopAt(1),
            InfoModel::Fi,
            &IDX,
        )
        .unwrap();
        assert!((v.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn optimal_on_small_instances() {
        let v = optimal_value_fi(&hard_fi(1, 0.1).unwrap(), None).unwrap();
        assert!((v.value - 1.0).abs() < 1e-12, "{}", v.value);
        let consts = Instance::new(vec![Distribution::point(3.0).unwrap(); 4], 2).unwrap();
        assert_eq!(optimal_value_fi(&consts, None).unwrap().value, 3.0);
    }

    #[test]
    fn optimal_dominates_policies() {
        let inst = hard_ni(1, 0.2).unwrap();
        let opt = optimal_value_fi(&inst, None).unwrap().value;
        for spec in [
            "msa:1",
            "msa:2",
            "msa_bar:1",
            "msa_rand",
            "msa_bar_rand",
            "accept_first",
            "secretary",
        ] {
            let spec: PolicySpec = spec.parse().unwrap();
            let v = exact_policy_value(&inst, &spec, InfoModel::Fi, &IDX)
                .unwrap()
                .value;
            assert!(v <= opt + 1e-12, "{spec}: {v} > {opt}");
        }
    }

    #[test]
    fn random_order_enumerates_permutations() {
        let inst = Instance::new(
            vec![
                Distribution::point(1.0).unwrap(),
                Distribution::point(2.0).unwrap(),
                Distribution::point(3.0).unwrap(),
            ],
            0,
        )
        .unwrap();
        let v = exact_policy_value(
            &inst,
            &PolicySpec::AcceptFirst,
            InfoModel::Ni,
            &ArrivalOrder::UniformRandom,
        )
        .unwrap();
        assert!((v.value - 2.0).abs() < 1e-15);
    }
}

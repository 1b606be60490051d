//! Named instance families and a seeded random finite-discrete generator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::distributions::{Distribution, DistributionError, Instance, QuantileFn};
use crate::numeric::{binomial_f64, one_minus_pow_one_minus};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InstanceError {
    #[error("parameter out of range: {0}")]
    OutOfRange(String),
    #[error(transparent)]
    Distribution(#[from] DistributionError),
}

fn out_of_range(msg: String) -> InstanceError {
    InstanceError::OutOfRange(msg)
}

/// One constant 1 and two copies of `eps^-2` w.p. `eps`; `k = 1`.
pub fn example1(eps: f64) -> Result<Instance, InstanceError> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(out_of_range(format!(
            "example1 needs 0 < eps < 1/2, got {eps}"
        )));
    }
    let high = Distribution::two_point(0.0, 1.0 / (eps * eps), eps)?;
    Ok(Instance::new(
        vec![Distribution::point(1.0)?, high.clone(), high],
        1,
    )?)
}

/// Increasing constants followed by `k + 1` rare large values; the
/// full-information upper-bound family.
pub fn hard_fi(k: usize, eps: f64) -> Result<Instance, InstanceError> {
    if !(eps > 0.0 && eps < 1.0 / (k as f64 + 1.0)) {
        return Err(out_of_range(format!(
            "hard_fi needs 0 < eps < 1/(k+1) = {}, got {eps}",
            1.0 / (k as f64 + 1.0)
        )));
    }
    let mut dists = Vec::with_capacity(2 * (k + 1));
    for i in 1..=k + 1 {
        let c = binomial_f64(k as u64 + 1, i as u64 - 1);
        dists.push(Distribution::point(1.0 / (eps.powi(i as i32 - 1) * c))?);
    }
    let rare = Distribution::two_point(0.0, eps.powi(-(k as i32 + 1)), eps)?;
    dists.extend(std::iter::repeat_n(rare, k + 1));
    Ok(Instance::new(dists, k)?)
}

/// A constant 1 followed by `k + 1` copies of `eps^-(k+2)` w.p. `eps`; the
/// no-information upper-bound family.
pub fn hard_ni(k: usize, eps: f64) -> Result<Instance, InstanceError> {
    if !(eps > 0.0 && eps <= 0.5) {
        return Err(out_of_range(format!(
            "hard_ni needs 0 < eps <= 1/2, got {eps}"
        )));
    }
    let rare = Distribution::two_point(0.0, eps.powi(-(k as i32 + 2)), eps)?;
    let mut dists = vec![Distribution::point(1.0)?];
    dists.extend(std::iter::repeat_n(rare, k + 1));
    Ok(Instance::new(dists, k)?)
}

/// Normalising constant of the hyperbolic head of [`iid_upper`].
pub fn iid_upper_cn(n: usize) -> f64 {
    let nf = n as f64;
    1.0 / (nf * one_minus_pow_one_minus(nf.powi(-10), nf - 1.0))
}

/// Quantile function of the i.i.d. single-threshold upper-bound family.
pub fn iid_upper_quantile(
    n: usize,
    a: f64,
    b: f64,
    beta: f64,
) -> Result<QuantileFn, InstanceError> {
    if n < 3 {
        return Err(out_of_range(format!("iid_upper needs n >= 3, got {n}")));
    }
    let nf = n as f64;
    if !(a > 0.0 && b > 0.0 && a + b <= 1.0 + 1e-12) {
        return Err(out_of_range(format!(
            "iid_upper needs a, b > 0 and a + b <= 1 (a={a}, b={b})"
        )));
    }
    if !(beta > 1.0 / nf && beta / nf <= 1.0) {
        return Err(out_of_range(format!(
            "iid_upper needs 1/n < beta <= n, got beta={beta}"
        )));
    }
    let knee = nf.powi(-10);
    let scale = a * iid_upper_cn(n);
    if scale / knee < b {
        return Err(out_of_range(format!(
            "iid_upper quantile not monotone at n={n}: a*c_n*n^10 = {} < b = {b}",
            scale / knee
        )));
    }
    if beta / nf <= knee {
        return Err(out_of_range("iid_upper needs beta/n > 1/n^10".into()));
    }
    Ok(QuantileFn::HyperbolicStep {
        scale,
        knee,
        level: b,
        cutoff: beta / nf,
    })
}

/// `n` i.i.d. copies of the upper-bound distribution, `k = 1`.
pub fn iid_upper(n: usize, a: f64, b: f64, beta: f64) -> Result<Instance, InstanceError> {
    let d = Distribution::quantile_fn(iid_upper_quantile(n, a, b, beta)?)?;
    Ok(Instance::new(vec![d; n], 1)?)
}

/// `n` i.i.d. uniforms on `[0, 1]`.
pub fn iid_uniform(n: usize, k: usize) -> Result<Instance, InstanceError> {
    Ok(Instance::new(vec![Distribution::uniform(0.0, 1.0)?; n], k)?)
}

/// Seeded random finite-discrete instance: each variable has one to three
/// atoms on a small integer grid (so ties are common) with random weights.
pub fn random_discrete(seed: u64, n: usize, k: usize) -> Result<Instance, InstanceError> {
    if n == 0 || k >= n {
        return Err(out_of_range(format!(
            "random_discrete needs 0 <= k < n, got n={n}, k={k}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dists = Vec::with_capacity(n);
    for _ in 0..n {
        let atoms = rng.random_range(1..=3usize);
        let mut values: Vec<f64> = (0..atoms)
            .map(|_| rng.random_range(0..=12u32) as f64)
            .collect();
        if rng.random_bool(0.25) {
            // occasional heavy atom
            values[0] = rng.random_range(20..=100u32) as f64;
        }
        let weights: Vec<f64> = (0..atoms)
            .map(|_| rng.random_range(1..=9u32) as f64)
            .collect();
        let total: f64 = weights.iter().sum();
        let mut pairs: Vec<(f64, f64)> = values
            .iter()
            .zip(&weights)
            .map(|(&v, &w)| (v, w / total))
            .collect();
        let head: f64 = pairs[..atoms - 1].iter().map(|p| p.1).sum();
        pairs[atoms - 1].1 = 1.0 - head;
        dists.push(Distribution::discrete(&pairs)?);
    }
    Ok(Instance::new(dists, k)?)
}

/// Parse `NAME:ARG,ARG,...` generator specs used by the command line.
pub fn from_generator_spec(spec: &str) -> Result<Instance, InstanceError> {
    let (name, args) = spec.split_once(':').unwrap_or((spec, ""));
    let nums: Vec<f64> = if args.is_empty() {
        Vec::new()
    } else {
        args.split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| out_of_range(format!("bad generator argument '{s}' in '{spec}'")))
            })
            .collect::<Result<_, _>>()?
    };
    let want = |count: usize| -> Result<(), InstanceError> {
        if nums.len() == count {
            Ok(())
        } else {
            Err(out_of_range(format!(
                "generator '{name}' takes {count} arguments, got {}",
                nums.len()
            )))
        }
    };
    let as_usize = |x: f64| -> Result<usize, InstanceError> {
        if x >= 0.0 && x.fract() == 0.0 {
            Ok(x as usize)
        } else {
            Err(out_of_range(format!(
                "expected a nonnegative integer, got {x}"
            )))
        }
    };
    match name {
        "example1" => {
            want(1)?;
            example1(nums[0])
        }
        "hard_fi" | "hard-fi" => {
            want(2)?;
            hard_fi(as_usize(nums[0])?, nums[1])
        }
        "hard_ni" | "hard-ni" => {
            want(2)?;
            hard_ni(as_usize(nums[0])?, nums[1])
        }
        "iid_upper" | "iid-upper" => {
            want(4)?;
            iid_upper(as_usize(nums[0])?, nums[1], nums[2], nums[3])
        }
        "uniform" => {
            want(2)?;
            iid_uniform(as_usize(nums[0])?, as_usize(nums[1])?)
        }
        "random" => {
            want(3)?;
            random_discrete(
                as_usize(nums[0])? as u64,
                as_usize(nums[1])?,
                as_usize(nums[2])?,
            )
        }
        _ => Err(out_of_range(format!("unknown generator '{name}'"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example1_shape() {
        let inst = example1(0.1).unwrap();
        assert_eq!(inst.k, 1);
        assert_eq!(inst.dists[0], Distribution::PointMass(1.0));
        assert!(
            matches!(inst.dists[1], Distribution::TwoPoint { low, high, p_high }
            if low == 0.0 && (high - 100.0).abs() < 1e-12 && p_high == 0.1)
        );
        let inst = example1(0.49).unwrap();
        assert!(
            matches!(inst.dists[2], Distribution::TwoPoint { high, .. } if (high - 4.1649).abs() < 1e-4)
        );
        assert!(example1(0.5).is_err());
        assert!(example1(0.0).is_err());
    }

    #[test]
    fn hard_fi_shape() {
        let inst = hard_fi(1, 0.1).unwrap();
        let vals: Vec<f64> = inst.dists[..2]
            .iter()
            .map(|d| match d {
                Distribution::PointMass(v) => *v,
                _ => panic!(),
            })
            .collect();
        assert_eq!(vals[0], 1.0);
        assert!((vals[1] - 5.0).abs() < 1e-12);
        assert_eq!(inst.n(), 4);
        let k0 = hard_fi(0, 0.1).unwrap();
        assert_eq!(k0.n(), 2);
        assert!(
            matches!(k0.dists[1], Distribution::TwoPoint { high, .. } if (high - 10.0).abs() < 1e-12)
        );
        assert!(hard_fi(1, 0.5).is_err());
    }

    #[test]
    fn hard_ni_benchmark() {
        let inst = hard_ni(1, 0.1).unwrap();
        assert_eq!(inst.n(), 3);
        // second largest of (1, Y1, Y2): 1000 if both rare values hit, 1 if
        // exactly one does, 0 otherwise
        let b = inst.benchmark_exact().unwrap();
        assert!((b - (10.0 + 2.0 * 0.1 * 0.9)).abs() < 1e-9);
        for k in 0..3 {
            for &eps in &[0.5, 0.2, 0.05] {
                let b = hard_ni(k, eps).unwrap().benchmark_exact().unwrap();
                assert!(1.0 / eps <= b + 1e-9 && b <= 1.0 / eps + 1.0 + 1e-9);
            }
        }
    }

    #[test]
    fn iid_upper_shape() {
        let cn = iid_upper_cn(10);
        assert!((cn / 1.111_111_111e8 - 1.0).abs() < 1e-6);
        let inst = iid_upper(10, 0.5, 0.4, 5.0).unwrap();
        let d = &inst.dists[0];
        assert_eq!(d.quantile(0.6), 0.0);
        assert_eq!(d.quantile(0.25), 0.4);
        assert!(iid_upper(10, 0.7, 0.4, 5.0).is_err());
        assert!(iid_upper(10, 0.5, 0.4, 50.0).is_err());
    }

    #[test]
    fn random_is_seeded() {
        let a = random_discrete(3, 6, 2).unwrap();
        let b = random_discrete(3, 6, 2).unwrap();
        assert_eq!(a, b);
        assert!(a.support_product().unwrap() <= 729);
    }

    #[test]
    fn generator_specs() {
        assert_eq!(
            from_generator_spec("example1:0.1").unwrap(),
            example1(0.1).unwrap()
        );
        assert_eq!(
            from_generator_spec("hard-fi:2,0.01").unwrap(),
            hard_fi(2, 0.01).unwrap()
        );
        assert!(from_generator_spec("hard_fi:2").is_err());
        assert!(from_generator_spec("nope:1").is_err());
    }
}

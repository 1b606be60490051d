//! Single-threshold policies for i.i.d. instances with `k = 1`.
//!
//! Everything is expressed in quantile space: with `f(u) = Q(u)` the upper
//! quantile function and a threshold accepting the top `q` mass, the expected
//! accepted value is `int_0^q f(v) rho_q(v) dv` where
//! `rho_q(v) = sum_{i=0}^{n-2} n/(n-i-1) (1-q)^i (1 - (1-v)^(n-i-1))`
//! is the density of the accepted value's level. Its antiderivative is the
//! kernel `B_{n,q}` and `B / P(Binom(n, v) >= 2)` is the bound function `A`.

use serde::Serialize;
use thiserror::Error;

use crate::distributions::{Distribution, DistributionError, QuantileFn};
use crate::instances::{iid_upper_quantile, InstanceError};
use crate::numeric::{
    adaptive_simpson, binom_at_least_two, binom_at_least_two_over_v2, bisect, gap, gap_over_v2,
    golden_section_max, golden_section_min, one_minus_pow_one_minus, NeumaierSum,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IidError {
    #[error("parameter out of range: {0}")]
    OutOfRange(String),
    #[error(transparent)]
    Distribution(#[from] DistributionError),
    #[error(transparent)]
    Instance(#[from] InstanceError),
}

fn out_of_range(msg: String) -> IidError {
    IidError::OutOfRange(msg)
}

fn check_nq(n: usize, q: f64) -> Result<(), IidError> {
    if n < 2 {
        return Err(out_of_range(format!("need n >= 2, got {n}")));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(out_of_range(format!("q must lie in [0, 1], got {q}")));
    }
    Ok(())
}

/// Accumulate `sum_{i=0}^{n-2} n/(n-i-1) (1-q)^i term(i)`.
fn weighted_sum(n: usize, q: f64, mut term: impl FnMut(usize) -> f64) -> f64 {
    let mut acc = NeumaierSum::new();
    let mut pw = 1.0;
    for i in 0..=n - 2 {
        if pw < 1e-300 {
            break;
        }
        acc.add(n as f64 / (n - i - 1) as f64 * pw * term(i));
        pw *= 1.0 - q;
    }
    acc.value()
}

/// `rho_q(v)`, the density of the accepted level (zero above `q`).
pub fn acceptance_density(n: usize, q: f64, v: f64) -> f64 {
    if v >= q || v <= 0.0 {
        return 0.0;
    }
    weighted_sum(n, q, |i| one_minus_pow_one_minus(v, (n - i - 1) as f64))
}

/// `int_0^v rho_q` ignoring the cutoff at `q`.
fn rho_antiderivative(n: usize, q: f64, v: f64) -> f64 {
    weighted_sum(n, q, |i| gap((n - i) as u64, v))
}

/// `B_{n,q}(v)`: probability that a level-`q` threshold accepts a value whose
/// level is below `v`.
pub fn b_kernel(n: usize, q: f64, v: f64) -> f64 {
    rho_antiderivative(n, q, v.min(q))
}

/// `A_{n,q}(v) = B_{n,q}(v) / P(Binom(n, v) >= 2)` for `v in (0, 1]`.
pub fn a_kernel(n: usize, q: f64, v: f64) -> Result<f64, IidError> {
    check_nq(n, q)?;
    if !(v > 0.0 && v <= 1.0) {
        return Err(out_of_range(format!(
            "A needs v in (0, 1], got {v}; use a_limit_at_zero"
        )));
    }
    // both parts divided by v^2 to stay accurate near zero
    let m = v.min(q);
    let ratio = (m / v) * (m / v);
    let num = weighted_sum(n, q, |i| gap_over_v2((n - i) as u64, m)) * ratio;
    Ok(num / binom_at_least_two_over_v2(n as u64, v))
}

/// `lim_{v -> 0} A_{n,q}(v) = (1 - (1-q)^(n-1)) / ((n-1) q)`.
pub fn a_limit_at_zero(n: usize, q: f64) -> Result<f64, IidError> {
    check_nq(n, q)?;
    if q == 0.0 {
        return Ok(1.0);
    }
    let m = (n - 1) as f64;
    Ok(one_minus_pow_one_minus(q, m) / (m * q))
}

/// `A_{n,q}(1) = 1 - (1-q)^(n-1) (1 + (n-1) q)`.
pub fn a_at_one(n: usize, q: f64) -> Result<f64, IidError> {
    check_nq(n, q)?;
    Ok(1.0 - (1.0 - q).powi(n as i32 - 1) * (1.0 + (n - 1) as f64 * q))
}

/// Integral of `f * w` over `[0, upper]` where `W` is an antiderivative of
/// `w` with `W(0) = 0`. Atoms and flat pieces use `W` exactly; sloped pieces
/// of a grid use quadrature.
fn integrate_quantile(
    dist: &Distribution,
    upper: f64,
    w: &dyn Fn(f64) -> f64,
    big_w: &dyn Fn(f64) -> f64,
) -> Result<f64, IidError> {
    if upper <= 0.0 {
        return Ok(0.0);
    }
    let mut acc = NeumaierSum::new();
    match dist {
        Distribution::Quantile(QuantileFn::Grid { us, values }) => {
            let mut pts = vec![0.0];
            pts.extend(us.iter().copied().filter(|&u| u > 0.0 && u < upper));
            pts.push(upper);
            for seg in pts.windows(2) {
                let (a, b) = (seg[0], seg[1]);
                let outside = a >= us[us.len() - 1] || b <= us[0];
                let (fa, fb) = (dist.quantile(a.max(f64::MIN_POSITIVE)), dist.quantile(b));
                if outside || fa == fb || values.len() < 2 {
                    acc.add(fb * (big_w(b) - big_w(a)));
                } else {
                    acc.add(adaptive_simpson(
                        &|v: f64| dist.quantile(v) * w(v),
                        a,
                        b,
                        1e-11,
                    ));
                }
            }
        }
        Distribution::Quantile(QuantileFn::HyperbolicStep { .. }) => {
            return Err(out_of_range(
                "hyperbolic quantile functions use the dedicated formulas".into(),
            ));
        }
        _ => {
            let atoms = dist.support().expect("finite support");
            let mut lo = 0.0;
            for (x, p) in atoms {
                if lo >= upper {
                    break;
                }
                let hi = (lo + p).min(upper);
                acc.add(x * (big_w(hi) - big_w(lo)));
                lo += p;
            }
        }
    }
    Ok(acc.value())
}

/// `E[ALG]` for a threshold accepting exactly the top `q` of the quantile
/// range (ties at the threshold value broken by level).
pub fn alg_q_level(n: usize, q: f64, dist: &Distribution) -> Result<f64, IidError> {
    check_nq(n, q)?;
    if q == 0.0 {
        return Ok(0.0);
    }
    if let Distribution::Quantile(QuantileFn::HyperbolicStep {
        scale,
        knee,
        level,
        cutoff,
    }) = *dist
    {
        return Ok(hyperbolic_alg(n, q, scale, knee, level, cutoff));
    }
    integrate_quantile(dist, q, &|v| acceptance_density(n, q, v), &|v| {
        rho_antiderivative(n, q, v)
    })
}

/// `E[ALG_q]` for the game's quantile policy: the threshold is
/// `tau = sup{x : P(X >= x) >= q}` and every value `>= tau` is accepted, so
/// the accepted mass is `P(X >= tau)`.
pub fn alg_q_formula(n: usize, q: f64, dist: &Distribution) -> Result<f64, IidError> {
    check_nq(n, q)?;
    if q == 0.0 {
        return Ok(0.0);
    }
    let tau = dist.threshold_for_quantile(q)?;
    let q_eff = dist.survival(tau).clamp(0.0, 1.0);
    alg_q_level(n, q_eff, dist)
}

/// `E[X_(2)] = int_0^1 f(u) d/du P(Binom(n, u) >= 2) du`.
pub fn ex2_formula(n: usize, dist: &Distribution) -> Result<f64, IidError> {
    check_nq(n, 0.0)?;
    let nn = n as u64;
    if let Distribution::Quantile(QuantileFn::HyperbolicStep {
        scale,
        knee,
        level,
        cutoff,
    }) = *dist
    {
        let head = scale * n as f64 * one_minus_pow_one_minus(knee, (n - 1) as f64);
        return Ok(head + level * (binom_at_least_two(nn, cutoff) - binom_at_least_two(nn, knee)));
    }
    let nf = n as f64;
    integrate_quantile(
        dist,
        1.0,
        &|u| nf * (nf - 1.0) * u * crate::numeric::pow_one_minus(u, nf - 2.0),
        &|u| binom_at_least_two(nn, u),
    )
}

/// `int_0^m (1 - (1-v)^big_n) / v dv`.
fn log_kernel_integral(big_n: usize, m: f64) -> f64 {
    let nf = big_n as f64;
    if nf * m <= 0.5 {
        // sum_j (-1)^(j+1) C(N, j) m^j / j
        let mut acc = NeumaierSum::new();
        let mut binom_pow = nf * m; // C(N, j) m^j
        for j in 1..=big_n {
            let term = binom_pow / j as f64;
            acc.add(if j % 2 == 1 { term } else { -term });
            if term.abs() < 1e-18 * acc.value().abs() {
                break;
            }
            binom_pow *= (nf - j as f64) / (j + 1) as f64 * m;
        }
        acc.value()
    } else {
        (1..=big_n)
            .map(|l| one_minus_pow_one_minus(m, l as f64) / l as f64)
            .collect::<NeumaierSum>()
            .value()
    }
}

fn hyperbolic_alg(n: usize, q: f64, scale: f64, knee: f64, level: f64, cutoff: f64) -> f64 {
    let head_top = q.min(knee);
    let head = scale * weighted_sum(n, q, |i| log_kernel_integral(n - i - 1, head_top));
    let mid = if q > knee {
        let top = q.min(cutoff);
        level * (rho_antiderivative(n, q, top) - rho_antiderivative(n, q, knee))
    } else {
        0.0
    };
    head + mid
}

/// The lower-bound curve `min{(1-e^-a)/a, 1 - e^-a (1+a)}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundCurve {
    pub alpha: f64,
    pub term_a: f64,
    pub term_b: f64,
    pub bound: f64,
}

pub fn lower_bound(alpha: f64) -> Result<BoundCurve, IidError> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(out_of_range(format!("alpha must be positive, got {alpha}")));
    }
    let term_a = -(-alpha).exp_m1() / alpha;
    let term_b = -(-alpha).exp_m1() - alpha * (-alpha).exp();
    Ok(BoundCurve {
        alpha,
        term_a,
        term_b,
        bound: term_a.min(term_b),
    })
}

/// The `alpha` at which both terms meet.
pub fn optimize_lower_bound() -> BoundCurve {
    let diff = |a: f64| {
        let c = lower_bound(a).expect("positive alpha");
        c.term_a - c.term_b
    };
    let alpha = bisect(diff, 0.5, 2.0, 1e-13);
    lower_bound(alpha).expect("positive alpha")
}

/// `a (1 - e^-l) / l + b (1 - e^-l (1 + l))`, with the `l -> 0` limit `a`.
pub fn p_integrand(a: f64, b: f64, lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return a;
    }
    a * (-(-lambda).exp_m1() / lambda) + b * (-(-lambda).exp_m1() - lambda * (-lambda).exp())
}

/// `p(a, b, beta) = max_{l in [0, beta]} p_integrand`; returns `(lambda*, p)`.
///
/// The integrand is not unimodal in general (an interior maximum can sit next
/// to the `l = 0` endpoint value `a`), so a grid scan locates the best bracket
/// before golden-section refinement, and both endpoints are compared.
pub fn p_of(a: f64, b: f64, beta: f64) -> Result<(f64, f64), IidError> {
    check_ab(a, b)?;
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(out_of_range(format!("beta must be positive, got {beta}")));
    }
    let g = |l: f64| p_integrand(a, b, l);
    let steps = 4000usize;
    let h = beta / steps as f64;
    let mut best = (0.0, g(0.0));
    let mut best_idx = 0;
    for s in 1..=steps {
        let l = h * s as f64;
        let v = g(l);
        if v > best.1 {
            best = (l, v);
            best_idx = s;
        }
    }
    let lo = h * best_idx.saturating_sub(1) as f64;
    let hi = (h * (best_idx + 1) as f64).min(beta);
    let refined = golden_section_max(g, lo, hi, 1e-12);
    for cand in [refined, (0.0, g(0.0)), (beta, g(beta))] {
        if cand.1 > best.1 {
            best = cand;
        }
    }
    Ok(best)
}

fn check_ab(a: f64, b: f64) -> Result<(), IidError> {
    if !(a >= 0.0 && b >= 0.0 && a + b <= 1.0 + 1e-12 && a + b > 0.0) {
        return Err(out_of_range(format!(
            "need a, b >= 0 with 0 < a + b <= 1 (a={a}, b={b})"
        )));
    }
    Ok(())
}

/// `lim_n E[X_(2)] = a + b (1 - e^-beta (1 + beta))`.
pub fn ex2_limit(a: f64, b: f64, beta: f64) -> f64 {
    a + b * (-(-beta).exp_m1() - beta * (-beta).exp())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct UpperBoundParams {
    pub a: f64,
    pub b: f64,
    pub beta: f64,
    pub lambda_star: f64,
    pub p_value: f64,
    pub ex2_limit: f64,
    pub ratio: f64,
}

impl UpperBoundParams {
    pub fn evaluate(a: f64, b: f64, beta: f64) -> Result<Self, IidError> {
        let (lambda_star, p_value) = p_of(a, b, beta)?;
        let ex2 = ex2_limit(a, b, beta);
        Ok(UpperBoundParams {
            a,
            b,
            beta,
            lambda_star,
            p_value,
            ex2_limit: ex2,
            ratio: p_value / ex2,
        })
    }

    /// The parameters reported for the construction.
    pub fn reported() -> Self {
        Self::evaluate(0.5463, 0.4537, 109.131).expect("valid parameters")
    }
}

/// Minimise `p / ex2_limit` over `a in (0, 1)`, `b = 1 - a`, `beta in [1, 200]`.
///
/// For fixed `beta` the ratio is quasi-convex in `a` (a max of linear
/// functions over a positive linear one), so golden section is exact there;
/// `beta` is scanned on a log grid and the best bracket refined.
pub fn optimize_upper_bound() -> UpperBoundParams {
    let ratio_at = |a: f64, beta: f64| {
        let (_, p) = p_of(a, 1.0 - a, beta).expect("valid a");
        p / ex2_limit(a, 1.0 - a, beta)
    };
    let best_a = |beta: f64| golden_section_min(|a| ratio_at(a, beta), 1e-6, 1.0 - 1e-6, 1e-9);
    let grid: Vec<f64> = (0..=60).map(|i| 200f64.powf(i as f64 / 60.0)).collect();
    let scores: Vec<f64> = grid.iter().map(|&beta| best_a(beta).1).collect();
    let idx = scores
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let lo = grid[idx.saturating_sub(1)];
    let hi = grid[(idx + 1).min(grid.len() - 1)];
    let (refined, score) = golden_section_min(|beta| best_a(beta).1, lo, hi, 1e-6);
    let beta = if score <= scores[idx] {
        refined
    } else {
        grid[idx]
    };
    let (a, _) = best_a(beta);
    UpperBoundParams::evaluate(a, 1.0 - a, beta).expect("valid parameters")
}

/// Finite-`n` evaluation of every single-threshold policy on the upper-bound
/// instance.
#[derive(Clone, Debug, Serialize)]
pub struct FiniteNCheck {
    pub n: usize,
    pub params: UpperBoundParams,
    /// Exact `E[X_(2)]` of the instance.
    pub ex2: f64,
    /// `5 beta (1 + beta)^2 / (n - beta)`.
    pub slack: f64,
    pub grid_points: usize,
    pub max_ratio: f64,
    pub argmax_q: f64,
    /// `(p + slack) / E[X_(2)]`.
    pub ratio_cap: f64,
    /// Largest ratio over levels `q <= n^-10`, and its cap `a (1 + 3/(n-1)) / E[X_(2)]`.
    pub low_region_max: f64,
    pub low_region_cap: f64,
    /// `E[ALG_q]` is nonincreasing for `q >= beta / n` on the grid.
    pub decreasing_above_cutoff: bool,
    pub passes: bool,
}

/// `E[ALG_q] / E[X_(2)]` on the upper-bound instance for every `q` on a grid
/// covering the three regimes `q <= n^-10`, `n^-10 <= q <= beta/n`, `q >= beta/n`.
pub fn finite_n_upper_check(n: usize, params: &UpperBoundParams) -> Result<FiniteNCheck, IidError> {
    let qf = iid_upper_quantile(n, params.a, params.b, params.beta)?;
    let QuantileFn::HyperbolicStep {
        scale,
        knee,
        level,
        cutoff,
    } = qf
    else {
        unreachable!("upper-bound quantile is hyperbolic")
    };
    let dist = Distribution::quantile_fn(qf)?;
    let ex2 = ex2_formula(n, &dist)?;
    let nf = n as f64;
    let alg = |q: f64| hyperbolic_alg(n, q, scale, knee, level, cutoff);

    let mut low = Vec::new();
    for s in [1e-3, 1e-2, 0.1, 0.25, 0.5, 0.75, 1.0] {
        low.push(knee * s);
    }
    let mut mid = Vec::new();
    let lam_lo = knee * nf;
    for i in 0..=400 {
        let t = i as f64 / 400.0;
        mid.push(lam_lo * (params.beta / lam_lo).powf(t) / nf);
        mid.push((params.beta * t).max(lam_lo) / nf);
    }
    let mut high = Vec::new();
    for i in 0..=200 {
        let t = i as f64 / 200.0;
        high.push(cutoff + (1.0 - cutoff) * t * t);
    }

    let mut max_ratio = f64::NEG_INFINITY;
    let mut argmax_q = 0.0;
    let mut low_region_max = f64::NEG_INFINITY;
    let mut points = 0;
    let consider = |q: f64, max_ratio: &mut f64, argmax_q: &mut f64| {
        let r = alg(q) / ex2;
        if r > *max_ratio {
            *max_ratio = r;
            *argmax_q = q;
        }
        r
    };
    for &q in &low {
        let r = consider(q, &mut max_ratio, &mut argmax_q);
        low_region_max = low_region_max.max(r);
        points += 1;
    }
    for &q in &mid {
        consider(q, &mut max_ratio, &mut argmax_q);
        points += 1;
    }
    let mut prev = f64::INFINITY;
    let mut decreasing = true;
    for &q in &high {
        let v = alg(q);
        if v > prev * (1.0 + 1e-12) {
            decreasing = false;
        }
        prev = v;
        consider(q, &mut max_ratio, &mut argmax_q);
        points += 1;
    }
    let slack = 5.0 * params.beta * (1.0 + params.beta).powi(2) / (nf - params.beta);
    let ratio_cap = (params.p_value + slack) / ex2;
    let low_region_cap = params.a * (1.0 + 3.0 / (nf - 1.0)) / ex2;
    Ok(FiniteNCheck {
        n,
        params: *params,
        ex2,
        slack,
        grid_points: points,
        max_ratio,
        argmax_q,
        ratio_cap,
        low_region_max,
        low_region_cap,
        decreasing_above_cutoff: decreasing,
        passes: max_ratio <= ratio_cap && low_region_max <= low_region_cap && decreasing,
    })
}

/// Shape of `A_{n,q}` on both sides of `q` for `q = alpha / (n - 1)`.
#[derive(Clone, Debug, Serialize)]
pub struct MonotonicityCheck {
    pub n: usize,
    pub alpha: f64,
    pub q: f64,
    pub nondecreasing_below_q: bool,
    pub nonincreasing_above_q: bool,
    pub limit_at_zero: f64,
    pub value_at_one: f64,
    pub min_over_grid: f64,
}

pub fn a_monotonicity(n: usize, alpha: f64, points: usize) -> Result<MonotonicityCheck, IidError> {
    let q = alpha / (n - 1) as f64;
    check_nq(n, q)?;
    let below: Vec<f64> = (1..=points)
        .map(|i| a_kernel(n, q, q * i as f64 / points as f64))
        .collect::<Result<_, _>>()?;
    let above: Vec<f64> = (0..=points)
        .map(|i| a_kernel(n, q, q + (1.0 - q) * i as f64 / points as f64))
        .collect::<Result<_, _>>()?;
    let tol = 1e-9;
    let limit = a_limit_at_zero(n, q)?;
    Ok(MonotonicityCheck {
        n,
        alpha,
        q,
        nondecreasing_below_q: limit <= below[0] + tol
            && below.windows(2).all(|w| w[1] >= w[0] - tol),
        nonincreasing_above_q: above.windows(2).all(|w| w[1] <= w[0] + tol),
        limit_at_zero: limit,
        value_at_one: a_at_one(n, q)?,
        min_over_grid: below
            .iter()
            .chain(&above)
            .copied()
            .fold(f64::INFINITY, f64::min),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_three_half() {
        let u = Distribution::uniform(0.0, 1.0).unwrap();
        let v = alg_q_formula(3, 0.5, &u).unwrap();
        assert!((v - 43.0 / 128.0).abs() < 1e-10, "{v}");
        assert!((ex2_formula(3, &u).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(alg_q_formula(3, 0.0, &u).unwrap(), 0.0);
    }

    #[test]
    fn a_closed_forms() {
        let one = a_at_one(5, 0.4).unwrap();
        assert!((one - 0.66304).abs() < 1e-12);
        assert!((a_kernel(5, 0.4, 1.0).unwrap() - one).abs() < 1e-12);
        let zero = a_limit_at_zero(5, 0.4).unwrap();
        assert!((zero - 0.544).abs() < 1e-12);
        assert!((a_kernel(5, 0.4, 1e-6).unwrap() - zero).abs() < 1e-5);
        // (n+1) variant disagrees with the direct quotient
        let alt = 1.0 - 0.6f64.powi(4) * (1.0 + 6.0 * 0.4);
        assert!((alt - one).abs() > 0.1);
    }

    #[test]
    fn lower_bound_curve() {
        let c = optimize_lower_bound();
        assert!((c.alpha - 1.64718).abs() < 1e-4, "{c:?}");
        assert!((c.bound - 0.4901).abs() < 1e-4);
        assert!((c.term_a - c.term_b).abs() < 1e-9);
        let two = lower_bound(2.0).unwrap();
        assert!((two.term_a - 0.43233).abs() < 1e-5);
        assert!((two.term_b - 0.59399).abs() < 1e-5);
        assert!(lower_bound(1e-6).unwrap().bound < 1e-6);
    }

    #[test]
    fn p_values() {
        let (_, p) = p_of(1.0, 0.0, 5.0).unwrap();
        assert!((p - 1.0).abs() < 1e-12);
        let rep = UpperBoundParams::reported();
        assert!((rep.p_value - 0.5463).abs() < 5e-4, "{rep:?}");
        assert!((rep.ex2_limit - 1.0).abs() < 1e-6);
    }

    #[test]
    fn discrete_matches_layer_cake() {
        // two atoms: 4 w.p. 0.3, 1 w.p. 0.7; threshold at 4 accepts level 0.3
        let d = Distribution::discrete(&[(4.0, 0.3), (1.0, 0.7)]).unwrap();
        let n = 4;
        let v = alg_q_formula(n, 0.2, &d).unwrap();
        let expect = 4.0 * b_kernel(n, 0.3, 0.3);
        assert!((v - expect).abs() < 1e-12);
        let ex2 = ex2_formula(n, &d).unwrap();
        let p2 = binom_at_least_two(4, 0.3);
        assert!((ex2 - (4.0 * p2 + (1.0 - p2))).abs() < 1e-12);
    }

    #[test]
    fn hyperbolic_matches_quadrature() {
        let n = 12;
        let qf = iid_upper_quantile(n, 0.5, 0.4, 3.0).unwrap();
        let QuantileFn::HyperbolicStep {
            scale,
            knee,
            level,
            cutoff,
        } = qf
        else {
            panic!()
        };
        for &q in &[knee * 0.5, 0.05, 0.2, 0.6] {
            let closed = hyperbolic_alg(n, q, scale, knee, level, cutoff);
            let head = adaptive_simpson(
                &|v: f64| scale / v * acceptance_density(n, q, v),
                q.min(knee) * 1e-14,
                q.min(knee),
                1e-12,
            );
            let body = adaptive_simpson(
                &|v: f64| level * acceptance_density(n, q, v),
                knee,
                q.min(cutoff),
                1e-12,
            );
            let quad = head + if q > knee { body } else { 0.0 };
            assert!(
                (closed - quad).abs() < 1e-8 * closed.max(1e-12),
                "q={q}: {closed} vs {quad}"
            );
        }
        let d = Distribution::quantile_fn(qf).unwrap();
        assert!(
            (ex2_formula(n, &d).unwrap()
                - (0.5 + 0.4 * (binom_at_least_two(12, 0.25) - binom_at_least_two(12, knee))))
            .abs()
                < 1e-12
        );
    }

    #[test]
    fn upper_bound_optimum_and_finite_n() {
        let best = optimize_upper_bound();
        eprintln!("{best:?}");
        assert!(best.ratio < 0.5464, "{best:?}");
        let rep = UpperBoundParams::reported();
        let chk = finite_n_upper_check(10_000, &rep).unwrap();
        eprintln!("{chk:?}");
        assert!(chk.passes);
    }

    #[test]
    fn a_shape_small_n() {
        for n in [5, 20, 100] {
            for alpha in [0.5, 1.0, 1.647, 2.0] {
                let m = a_monotonicity(n, alpha, 1000).unwrap();
                assert!(m.nondecreasing_below_q && m.nonincreasing_above_q, "{m:?}");
            }
        }
    }
}

//! Small numerical kernels shared by the exact and analytic modules.
//!
//! Everything here is deterministic and allocation-free apart from the
//! Gauss-Legendre rule construction.

/// Compensated (Neumaier) summation.
#[derive(Clone, Copy, Debug, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl std::iter::FromIterator<f64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = NeumaierSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Binomial coefficient as an exact integer. Returns 0 when `k > n`.
pub fn binomial_u128(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // exact at every step: acc * (n - i) is divisible by (i + 1)
        acc = acc * u128::from(n - i) / u128::from(i + 1);
    }
    acc
}

/// Binomial coefficient in floating point.
pub fn binomial_f64(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// `(1 - v)^m` for real `m`, accurate for tiny `v`.
pub fn pow_one_minus(v: f64, m: f64) -> f64 {
    if v >= 1.0 {
        return if m == 0.0 { 1.0 } else { 0.0 };
    }
    (m * (-v).ln_1p()).exp()
}

/// `1 - (1 - v)^m`, accurate for tiny `v`.
pub fn one_minus_pow_one_minus(v: f64, m: f64) -> f64 {
    if v >= 1.0 {
        return if m == 0.0 { 0.0 } else { 1.0 };
    }
    -(m * (-v).ln_1p()).exp_m1()
}

const SERIES_SWITCH: f64 = 0.1;

/// `h_m(v) / v^2` where `h_m(v) = v - (1 - (1 - v)^m) / m`.
///
/// Near zero the difference cancels catastrophically, so a power series in
/// `v` is used while `m v` is small. The value at `v = 0` is `(m - 1) / 2`.
pub fn gap_over_v2(m: u64, v: f64) -> f64 {
    let mf = m as f64;
    if mf * v <= SERIES_SWITCH {
        // sum_{j>=2} (-1)^j C(m, j) v^{j-2} / m
        let mut term = (mf - 1.0) / 2.0;
        let mut sum = term;
        let mut j = 2u64;
        while j < m {
            term *= -((m - j) as f64) / (j + 1) as f64 * v;
            sum += term;
            if term.abs() <= 1e-18 * sum.abs() {
                break;
            }
            j += 1;
        }
        sum
    } else {
        (v - one_minus_pow_one_minus(v, mf) / mf) / (v * v)
    }
}

/// `h_m(v) = v - (1 - (1 - v)^m) / m`.
pub fn gap(m: u64, v: f64) -> f64 {
    if (m as f64) * v <= SERIES_SWITCH {
        gap_over_v2(m, v) * v * v
    } else {
        v - one_minus_pow_one_minus(v, m as f64) / m as f64
    }
}

/// `P(Binom(n, v) >= 2) / v^2`, finite at `v = 0` where it equals `C(n, 2)`.
pub fn binom_at_least_two_over_v2(n: u64, v: f64) -> f64 {
    if n < 2 {
        return 0.0;
    }
    let nf = n as f64;
    if nf * v <= SERIES_SWITCH {
        let ratio = v / (1.0 - v);
        let mut term = binomial_f64(n, 2) * pow_one_minus(v, (n - 2) as f64);
        let mut sum = term;
        let mut j = 2u64;
        while j < n {
            term *= (n - j) as f64 / (j + 1) as f64 * ratio;
            sum += term;
            if term <= 1e-18 * sum {
                break;
            }
            j += 1;
        }
        sum
    } else {
        binom_at_least_two(n, v) / (v * v)
    }
}

/// `P(Binom(n, v) >= 2) = 1 - (1 - v)^n - n v (1 - v)^(n - 1)`.
pub fn binom_at_least_two(n: u64, v: f64) -> f64 {
    if n < 2 || v <= 0.0 {
        return 0.0;
    }
    let nf = n as f64;
    if nf * v <= SERIES_SWITCH {
        return binom_at_least_two_over_v2(n, v) * v * v;
    }
    let a = pow_one_minus(v, nf - 1.0);
    (1.0 - a * (1.0 + (nf - 1.0) * v)).max(0.0)
}

/// Adaptive Simpson quadrature on `[a, b]`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel_tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let abs_floor = rel_tol * whole.abs().max(f64::MIN_POSITIVE);
    simpson_step(f, a, b, fa, fm, fb, whole, rel_tol, abs_floor, 48)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    rel_tol: f64,
    abs_floor: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    let tol = (rel_tol * (left + right).abs()).max(abs_floor);
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, rel_tol, abs_floor, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, rel_tol, abs_floor, depth - 1)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    let n = order as f64;
    for i in 0..order.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=order {
                let jf = j as f64;
                let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[order - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[order - 1 - i] = w;
    }
    (nodes, weights)
}

/// Composite Gauss-Legendre rule over `[a, b]` split into `panels` pieces.
/// Never evaluates `f` at the endpoints.
pub fn gauss_legendre_composite<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    panels: usize,
    rule: &(Vec<f64>, Vec<f64>),
) -> f64 {
    if b <= a {
        return 0.0;
    }
    let h = (b - a) / panels as f64;
    let mut total = NeumaierSum::new();
    for p in 0..panels {
        let lo = a + h * p as f64;
        let mid = lo + 0.5 * h;
        for (x, w) in rule.0.iter().zip(&rule.1) {
            total.add(0.5 * h * w * f(mid + 0.5 * h * x));
        }
    }
    total.value()
}

/// Bisection for a sign change of `f` on `[lo, hi]`.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut flo = f(lo);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Golden-section search for the maximum of a unimodal `f` on `[lo, hi]`.
pub fn golden_section_max<F: Fn(f64) -> f64>(
    f: F,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        }
    }
    let x = 0.5 * (lo + hi);
    (x, f(x))
}

/// Golden-section search for the minimum of a unimodal `f` on `[lo, hi]`.
pub fn golden_section_min<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    let (x, v) = golden_section_max(|x| -f(x), lo, hi, tol);
    (x, -v)
}

/// Two-sided standard normal quantile for the 99% level.
pub const Z_99: f64 = 2.575_829_303_548_900_4;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomials() {
        assert_eq!(binomial_u128(5, 2), 10);
        assert_eq!(binomial_u128(3, 5), 0);
        assert_eq!(binomial_u128(60, 30), 118_264_581_564_861_424);
        assert_eq!(binomial_f64(10, 3), 120.0);
    }

    #[test]
    fn neumaier_recovers_small_terms() {
        let s: NeumaierSum = [1.0, 1e100, 1.0, -1e100].into_iter().collect();
        assert_eq!(s.value(), 2.0);
    }

    #[test]
    fn gap_series_matches_direct_formula() {
        // closed forms: h_2 = v^2/2, h_3 = v^2 - v^3/3
        for &v in &[1e-9f64, 1e-3, 0.02, 0.3] {
            assert!((gap(2, v) - v * v / 2.0).abs() <= 1e-15 * v * v);
            assert!((gap(3, v) - (v * v - v * v * v / 3.0)).abs() <= 1e-15 * v * v);
        }
        // the direct formula cancels near zero, so it only pins down a few digits there
        for &m in &[7u64, 50, 1000] {
            for &v in &[1e-3f64, 5e-3, 0.02, 0.3, 0.9] {
                let direct = v - (1.0 - (1.0 - v).powi(m as i32)) / m as f64;
                let g = gap(m, v);
                assert!((g - direct).abs() <= 1e-8 * direct.abs(), "m={m} v={v}");
            }
        }
        assert_eq!(gap_over_v2(5, 0.0), 2.0);
        assert_eq!(gap(1, 0.4), 0.0);
    }

    #[test]
    fn binom_tail_matches_direct_formula() {
        for &n in &[2u64, 3, 10, 100] {
            for &v in &[1e-4f64, 0.01, 0.2, 0.7, 1.0] {
                let direct =
                    1.0 - (1.0 - v).powi(n as i32) - n as f64 * v * (1.0 - v).powi(n as i32 - 1);
                let got = binom_at_least_two(n, v);
                assert!(
                    (got - direct).abs() < 1e-12,
                    "n={n} v={v} got={got} want={direct}"
                );
            }
        }
        assert_eq!(binom_at_least_two_over_v2(4, 0.0), 6.0);
    }

    #[test]
    fn quadrature_rules() {
        let s = adaptive_simpson(&|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-10);
        assert!((s - 2.0).abs() < 1e-9);
        let rule = gauss_legendre(20);
        let wsum: f64 = rule.1.iter().sum();
        assert!((wsum - 2.0).abs() < 1e-13);
        let g = gauss_legendre_composite(&|x: f64| 1.0 / x.sqrt(), 0.0, 1.0, 200, &rule);
        assert!((g - 2.0).abs() < 1e-2);
        let poly = gauss_legendre_composite(&|x: f64| x.powi(9), 0.0, 1.0, 1, &rule);
        assert!((poly - 0.1).abs() < 1e-14);
    }

    #[test]
    fn searches() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-12);
        assert!((r - 2f64.sqrt()).abs() < 1e-11);
        let (x, v) = golden_section_max(|x| -(x - 0.3) * (x - 0.3), 0.0, 1.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-8 && v.abs() < 1e-15);
        let (x, _) = golden_section_min(|x| (x - 0.7).abs(), 0.0, 1.0, 1e-10);
        assert!((x - 0.7).abs() < 1e-8);
    }
}

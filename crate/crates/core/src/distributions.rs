//! Nonnegative random variables and finite instances built from them.
//!
//! Every distribution is described through its upper quantile function
//! `Q(u) = F^{-1}(1 - u)`, `u in (0, 1]`: the value that has probability mass
//! `u` at or above it. Sampling maps one uniform through `Q`, which keeps the
//! number of random draws per variable fixed regardless of the variant.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::NeumaierSum;

/// Tolerance on probability normalisation and quantile-level comparisons.
pub const PROB_TOL: f64 = 1e-12;

/// Maximum number of joint outcomes enumerated for exact order statistics.
pub const ORDER_STAT_CAP: u128 = 1 << 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistributionError {
    #[error("value {0} is negative or not finite")]
    BadValue(f64),
    #[error("probability {0} outside [0, 1]")]
    BadProbability(f64),
    #[error("two-point distribution needs high > low (low={low}, high={high})")]
    TwoPointOrder { low: f64, high: f64 },
    #[error("discrete probabilities sum to {0}, expected 1")]
    NotNormalized(f64),
    #[error("discrete distribution has no atoms")]
    Empty,
    #[error("quantile grid invalid: {0}")]
    BadGrid(String),
    #[error("quantile function invalid: {0}")]
    BadQuantileFn(String),
    #[error("quantile level q={0} must lie in (0, 1]")]
    BadLevel(f64),
    #[error("instance needs at least k+1 = {need} distributions, got {got}")]
    TooFewDistributions { need: usize, got: usize },
    #[error("rank {rank} outside 1..={n}")]
    BadRank { rank: usize, n: usize },
    #[error("distribution {0} does not have finite support")]
    NotFiniteSupport(usize),
    #[error("enumeration of {count} joint outcomes exceeds cap {cap}")]
    CapExceeded { count: u128, cap: u128 },
}

/// Upper quantile functions that are not finite atoms.
#[derive(Clone, Debug, PartialEq)]
pub enum QuantileFn {
    /// Piecewise-linear interpolation of `(us[i], values[i])`, clamped outside
    /// the grid.
    Grid { us: Vec<f64>, values: Vec<f64> },
    /// `scale / u` on `(0, knee)`, `level` on `[knee, cutoff]`, zero above.
    HyperbolicStep {
        scale: f64,
        knee: f64,
        level: f64,
        cutoff: f64,
    },
}

impl QuantileFn {
    /// Uniform distribution on `[low, high]`.
    pub fn uniform(low: f64, high: f64) -> Self {
        QuantileFn::Grid {
            us: vec![0.0, 1.0],
            values: vec![high, low],
        }
    }

    fn validate(&self) -> Result<(), DistributionError> {
        match self {
            QuantileFn::Grid { us, values } => {
                if us.len() < 2 || us.len() != values.len() {
                    return Err(DistributionError::BadGrid(
                        "need at least two points and equal lengths".into(),
                    ));
                }
                if us
                    .windows(2)
                    .any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less))
                {
                    return Err(DistributionError::BadGrid(
                        "us must be strictly increasing".into(),
                    ));
                }
                if us[0] < 0.0 || us[us.len() - 1] > 1.0 {
                    return Err(DistributionError::BadGrid("us must lie in [0, 1]".into()));
                }
                for &v in values {
                    check_value(v)?;
                }
                if values.windows(2).any(|w| w[1] > w[0]) {
                    return Err(DistributionError::BadGrid(
                        "values must be nonincreasing".into(),
                    ));
                }
                Ok(())
            }
            &QuantileFn::HyperbolicStep {
                scale,
                knee,
                level,
                cutoff,
            } => {
                check_value(scale)?;
                check_value(level)?;
                if !(knee > 0.0 && knee < cutoff && cutoff <= 1.0) {
                    return Err(DistributionError::BadQuantileFn(format!(
                        "need 0 < knee < cutoff <= 1 (knee={knee}, cutoff={cutoff})"
                    )));
                }
                if scale / knee < level {
                    return Err(DistributionError::BadQuantileFn(format!(
                        "not monotone: scale/knee = {} < level = {level}",
                        scale / knee
                    )));
                }
                Ok(())
            }
        }
    }

    /// `Q(u)`; right-continuous in the sense used for sampling.
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            QuantileFn::Grid { us, values } => {
                let last = us.len() - 1;
                if u <= us[0] {
                    return values[0];
                }
                if u >= us[last] {
                    return values[last];
                }
                let hi = us.partition_point(|&x| x <= u);
                let lo = hi - 1;
                let t = (u - us[lo]) / (us[hi] - us[lo]);
                values[lo] + t * (values[hi] - values[lo])
            }
            &QuantileFn::HyperbolicStep {
                scale,
                knee,
                level,
                cutoff,
            } => {
                if u < knee {
                    scale / u
                } else if u <= cutoff {
                    level
                } else {
                    0.0
                }
            }
        }
    }

    /// `lim_{s -> u-} Q(s)`.
    pub fn left_limit(&self, u: f64) -> f64 {
        match self {
            QuantileFn::Grid { .. } => self.eval(u),
            &QuantileFn::HyperbolicStep {
                scale,
                knee,
                level,
                cutoff,
            } => {
                if u <= knee {
                    scale / u
                } else if u <= cutoff {
                    level
                } else {
                    0.0
                }
            }
        }
    }

    /// `sup{u in [0, 1] : Q(u) >= x}`, i.e. `P(X >= x)`.
    pub fn survival(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        match self {
            QuantileFn::Grid { us, values } => {
                let last = us.len() - 1;
                if values[last] >= x {
                    return 1.0;
                }
                if values[0] < x {
                    return 0.0;
                }
                // first grid index whose value drops below x
                let hi = values.partition_point(|&v| v >= x);
                let lo = hi - 1;
                let (v0, v1) = (values[lo], values[hi]);
                let t = (v0 - x) / (v0 - v1);
                us[lo] + t * (us[hi] - us[lo])
            }
            &QuantileFn::HyperbolicStep {
                scale,
                knee,
                level,
                cutoff,
            } => {
                if x <= level {
                    cutoff
                } else {
                    knee.min(scale / x)
                }
            }
        }
    }
}

/// A nonnegative random variable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistSpec", into = "DistSpec")]
pub enum Distribution {
    PointMass(f64),
    TwoPoint {
        low: f64,
        high: f64,
        p_high: f64,
    },
    /// Atoms sorted by strictly decreasing value; zero-probability atoms are
    /// dropped and bit-equal values merged.
    Discrete(Vec<(f64, f64)>),
    Quantile(QuantileFn),
}

fn check_value(v: f64) -> Result<(), DistributionError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(DistributionError::BadValue(v))
    }
}

fn check_prob(p: f64) -> Result<(), DistributionError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(DistributionError::BadProbability(p))
    }
}

impl Distribution {
    pub fn point(value: f64) -> Result<Self, DistributionError> {
        check_value(value)?;
        Ok(Distribution::PointMass(value))
    }

    pub fn two_point(low: f64, high: f64, p_high: f64) -> Result<Self, DistributionError> {
        check_value(low)?;
        check_value(high)?;
        check_prob(p_high)?;
        if high <= low {
            return Err(DistributionError::TwoPointOrder { low, high });
        }
        Ok(Distribution::TwoPoint { low, high, p_high })
    }

    pub fn discrete(atoms: &[(f64, f64)]) -> Result<Self, DistributionError> {
        if atoms.is_empty() {
            return Err(DistributionError::Empty);
        }
        let mut total = NeumaierSum::new();
        for &(v, p) in atoms {
            check_value(v)?;
            check_prob(p)?;
            total.add(p);
        }
        if (total.value() - 1.0).abs() > PROB_TOL {
            return Err(DistributionError::NotNormalized(total.value()));
        }
        let mut sorted: Vec<(f64, f64)> = atoms.iter().copied().filter(|a| a.1 > 0.0).collect();
        sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(sorted.len());
        for (v, p) in sorted {
            match merged.last_mut() {
                Some(last) if last.0.to_bits() == v.to_bits() => last.1 += p,
                _ => merged.push((v, p)),
            }
        }
        Ok(Distribution::Discrete(merged))
    }

    pub fn quantile_fn(q: QuantileFn) -> Result<Self, DistributionError> {
        q.validate()?;
        Ok(Distribution::Quantile(q))
    }

    pub fn uniform(low: f64, high: f64) -> Result<Self, DistributionError> {
        Self::quantile_fn(QuantileFn::uniform(low, high))
    }

    /// Upper quantile `Q(u)` for `u in (0, 1]`.
    pub fn quantile(&self, u: f64) -> f64 {
        match self {
            &Distribution::PointMass(v) => v,
            &Distribution::TwoPoint { low, high, p_high } => {
                if u <= p_high {
                    high
                } else {
                    low
                }
            }
            Distribution::Discrete(atoms) => {
                let mut cum = 0.0;
                for &(v, p) in atoms {
                    cum += p;
                    if u <= cum {
                        return v;
                    }
                }
                atoms[atoms.len() - 1].0
            }
            Distribution::Quantile(q) => q.eval(u),
        }
    }

    /// Map a uniform draw on `[0, 1)` to a value.
    pub fn from_uniform(&self, unit: f64) -> f64 {
        self.quantile(1.0 - unit)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let unit: f64 = rng.random();
        self.from_uniform(unit)
    }

    /// `P(X >= x)`.
    pub fn survival(&self, x: f64) -> f64 {
        match self {
            &Distribution::PointMass(v) => {
                if v >= x {
                    1.0
                } else {
                    0.0
                }
            }
            &Distribution::TwoPoint { low, high, p_high } => {
                if x <= low {
                    1.0
                } else if x <= high {
                    p_high
                } else {
                    0.0
                }
            }
            Distribution::Discrete(atoms) => {
                let s: NeumaierSum = atoms.iter().filter(|a| a.0 >= x).map(|a| a.1).collect();
                s.value().min(1.0)
            }
            Distribution::Quantile(q) => q.survival(x),
        }
    }

    /// `P(X <= x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        match self.support() {
            Some(atoms) => {
                let s: NeumaierSum = atoms.iter().filter(|a| a.0 <= x).map(|a| a.1).collect();
                s.value().min(1.0)
            }
            // continuous quantile functions put no mass on single points
            // except on flat stretches, whose mass survival already counts
            None => {
                let above = self.survival(next_up(x));
                1.0 - above
            }
        }
    }

    /// `sup{x : P(X >= x) >= q}` for `q in (0, 1]`.
    pub fn threshold_for_quantile(&self, q: f64) -> Result<f64, DistributionError> {
        if !(q > 0.0 && q <= 1.0) {
            return Err(DistributionError::BadLevel(q));
        }
        Ok(match self {
            Distribution::Quantile(f) => f.left_limit(q),
            _ => {
                let atoms = self.support().expect("finite support");
                let mut cum = 0.0;
                let mut chosen = atoms[atoms.len() - 1].0;
                for &(v, p) in &atoms {
                    cum += p;
                    if cum >= q - PROB_TOL {
                        chosen = v;
                        break;
                    }
                }
                chosen
            }
        })
    }

    /// Atoms `(value, prob)` with positive probability, by decreasing value.
    pub fn support(&self) -> Option<Vec<(f64, f64)>> {
        match self {
            &Distribution::PointMass(v) => Some(vec![(v, 1.0)]),
            &Distribution::TwoPoint { low, high, p_high } => Some(
                [(high, p_high), (low, 1.0 - p_high)]
                    .into_iter()
                    .filter(|a| a.1 > 0.0)
                    .collect(),
            ),
            Distribution::Discrete(atoms) => Some(atoms.clone()),
            Distribution::Quantile(_) => None,
        }
    }

    pub fn is_finite_support(&self) -> bool {
        !matches!(self, Distribution::Quantile(_))
    }

    /// Exact mean for finite supports.
    pub fn mean(&self) -> Option<f64> {
        self.support().map(|atoms| {
            atoms
                .iter()
                .map(|a| a.0 * a.1)
                .collect::<NeumaierSum>()
                .value()
        })
    }
}

fn next_up(x: f64) -> f64 {
    if x.is_nan() || x == f64::INFINITY {
        return x;
    }
    if x == 0.0 {
        return f64::from_bits(1);
    }
    let bits = x.to_bits();
    f64::from_bits(if x > 0.0 { bits + 1 } else { bits - 1 })
}

/// Serialized form of a distribution.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DistSpec {
    Point {
        value: f64,
    },
    TwoPoint {
        low: f64,
        high: f64,
        p_high: f64,
    },
    Discrete {
        atoms: Vec<(f64, f64)>,
    },
    QuantileGrid {
        us: Vec<f64>,
        values: Vec<f64>,
    },
    HyperbolicStep {
        scale: f64,
        knee: f64,
        level: f64,
        cutoff: f64,
    },
}

impl TryFrom<DistSpec> for Distribution {
    type Error = DistributionError;

    fn try_from(spec: DistSpec) -> Result<Self, Self::Error> {
        match spec {
            DistSpec::Point { value } => Distribution::point(value),
            DistSpec::TwoPoint { low, high, p_high } => Distribution::two_point(low, high, p_high),
            DistSpec::Discrete { atoms } => Distribution::discrete(&atoms),
            DistSpec::QuantileGrid { us, values } => {
                Distribution::quantile_fn(QuantileFn::Grid { us, values })
            }
            DistSpec::HyperbolicStep {
                scale,
                knee,
                level,
                cutoff,
            } => Distribution::quantile_fn(QuantileFn::HyperbolicStep {
                scale,
                knee,
                level,
                cutoff,
            }),
        }
    }
}

impl From<Distribution> for DistSpec {
    fn from(d: Distribution) -> Self {
        match d {
            Distribution::PointMass(value) => DistSpec::Point { value },
            Distribution::TwoPoint { low, high, p_high } => {
                DistSpec::TwoPoint { low, high, p_high }
            }
            Distribution::Discrete(atoms) => DistSpec::Discrete { atoms },
            Distribution::Quantile(QuantileFn::Grid { us, values }) => {
                DistSpec::QuantileGrid { us, values }
            }
            Distribution::Quantile(QuantileFn::HyperbolicStep {
                scale,
                knee,
                level,
                cutoff,
            }) => DistSpec::HyperbolicStep {
                scale,
                knee,
                level,
                cutoff,
            },
        }
    }
}

/// `n` independent distributions plus the number `k` of top values removed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InstanceSpec")]
pub struct Instance {
    pub k: usize,
    pub dists: Vec<Distribution>,
}

#[derive(Deserialize)]
struct InstanceSpec {
    k: usize,
    dists: Vec<Distribution>,
}

impl TryFrom<InstanceSpec> for Instance {
    type Error = DistributionError;

    fn try_from(s: InstanceSpec) -> Result<Self, Self::Error> {
        Instance::new(s.dists, s.k)
    }
}

impl Instance {
    pub fn new(dists: Vec<Distribution>, k: usize) -> Result<Self, DistributionError> {
        if dists.len() < k + 1 {
            return Err(DistributionError::TooFewDistributions {
                need: k + 1,
                got: dists.len(),
            });
        }
        Ok(Instance { k, dists })
    }

    pub fn n(&self) -> usize {
        self.dists.len()
    }

    /// Supports of every distribution, or the index of the first one that is
    /// not finitely supported.
    pub fn supports(&self) -> Result<Vec<Vec<(f64, f64)>>, DistributionError> {
        self.dists
            .iter()
            .enumerate()
            .map(|(i, d)| d.support().ok_or(DistributionError::NotFiniteSupport(i)))
            .collect()
    }

    /// Number of joint outcomes of the finite supports.
    pub fn support_product(&self) -> Result<u128, DistributionError> {
        Ok(self
            .supports()?
            .iter()
            .fold(1u128, |acc, s| acc.saturating_mul(s.len() as u128)))
    }

    /// Whether all distributions are identical.
    pub fn is_iid(&self) -> bool {
        self.dists.windows(2).all(|w| w[0] == w[1])
    }

    /// Exact law of the `j`-th largest value (rank 1 = maximum) as atoms by
    /// decreasing value, computed by enumerating every joint outcome.
    pub fn order_statistic_law(&self, j: usize) -> Result<Vec<(f64, f64)>, DistributionError> {
        let n = self.n();
        if j == 0 || j > n {
            return Err(DistributionError::BadRank { rank: j, n });
        }
        let supports = self.supports()?;
        let count = self.support_product()?;
        if count > ORDER_STAT_CAP {
            return Err(DistributionError::CapExceeded {
                count,
                cap: ORDER_STAT_CAP,
            });
        }
        let mut law: Vec<(f64, NeumaierSum)> = Vec::new();
        let mut values = vec![0.0; n];
        for_each_joint(&supports, |idx, prob| {
            for (slot, (s, &a)) in values.iter_mut().zip(supports.iter().zip(idx)) {
                *slot = s[a].0;
            }
            values.sort_by(|a, b| b.total_cmp(a));
            let v = values[j - 1];
            match law.iter_mut().find(|e| e.0.to_bits() == v.to_bits()) {
                Some(e) => e.1.add(prob),
                None => {
                    let mut s = NeumaierSum::new();
                    s.add(prob);
                    law.push((v, s));
                }
            }
        });
        let mut out: Vec<(f64, f64)> = law.into_iter().map(|(v, s)| (v, s.value())).collect();
        out.sort_by(|a, b| b.0.total_cmp(&a.0));
        Ok(out)
    }

    /// `E[X_(j)]`, exact over the enumerated joint outcomes.
    pub fn order_statistic_expectation(&self, j: usize) -> Result<f64, DistributionError> {
        Ok(self
            .order_statistic_law(j)?
            .iter()
            .map(|a| a.0 * a.1)
            .collect::<NeumaierSum>()
            .value())
    }

    /// `E[X_(k+1)]`, the benchmark.
    pub fn benchmark_exact(&self) -> Result<f64, DistributionError> {
        self.order_statistic_expectation(self.k + 1)
    }
}

/// Visit every joint outcome of the given supports with its probability.
pub fn for_each_joint<F: FnMut(&[usize], f64)>(supports: &[Vec<(f64, f64)>], mut f: F) {
    let n = supports.len();
    let mut idx = vec![0usize; n];
    // prefix probability products, so each step costs O(changed digits)
    let mut prefix = vec![1.0f64; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] * supports[i][0].1;
    }
    loop {
        f(&idx, prefix[n]);
        let mut pos = n;
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < supports[pos].len() {
                break;
            }
            idx[pos] = 0;
        }
        for i in pos..n {
            prefix[i + 1] = prefix[i] * supports[i][idx[i]].1;
        }
    }
}

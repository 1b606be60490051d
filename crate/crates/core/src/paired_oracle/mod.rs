//! Deferred-decision combinatorics for sample-threshold policies.
//!
//! Draw two values per distribution, sort all `2n` of them decreasingly as
//! `w_1 >= ... >= w_2n`, and flip a fair coin per distribution to decide which
//! of its two values is the sample and which is the real value. Conditioned on
//! the sorted sequence, only the pairing (which positions share a
//! distribution) matters, so a configuration is a perfect matching of
//! positions. All probabilities are counts over the `2^n` coin assignments.
//!
//! Positions are 1-based in every public function, matching the usual
//! `w_1, ..., w_2n` labelling.

mod dyadic;
mod verify;

pub use dyadic::Dyadic;
pub use verify::{
    prophet_pmf_sweep, sweep, verify_lemmas, CheckInstance, CheckSummary, PmfMismatch,
    PmfSweepReport, VerifyOptions, VerifyReport,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::binomial_u128;

/// Largest `n` accepted by the enumerators.
pub const MAX_N: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("pairing is not a fixed-point-free involution on 1..={0}")]
    BadPairing(usize),
    #[error("need k + 1 <= n (k={k}, n={n})")]
    BadK { k: usize, n: usize },
    #[error("n={0} exceeds the enumeration limit {MAX_N}")]
    TooLarge(usize),
    #[error("position {l} outside 1..={max}")]
    BadPosition { l: usize, max: usize },
    #[error("values must be nonincreasing and match 2n positions")]
    BadValues,
}

/// A pairing of `2n` sorted positions plus the removal count `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedConfiguration {
    pub n: usize,
    pub k: usize,
    /// `partner[l-1]` is the 1-based position paired with `l`.
    pub partner: Vec<usize>,
    /// `w_1 >= ... >= w_2n`; defaults to `2n, ..., 1`.
    pub values: Vec<f64>,
}

impl PairedConfiguration {
    /// Build from a 1-based partner list.
    pub fn new(partner: Vec<usize>, k: usize) -> Result<Self, OracleError> {
        let m = partner.len();
        if m == 0 || m % 2 == 1 {
            return Err(OracleError::BadPairing(m));
        }
        for (i, &p) in partner.iter().enumerate() {
            if p == 0 || p > m || p == i + 1 || partner[p - 1] != i + 1 {
                return Err(OracleError::BadPairing(m));
            }
        }
        let n = m / 2;
        if k + 1 > n {
            return Err(OracleError::BadK { k, n });
        }
        let values = (1..=m).rev().map(|v| v as f64).collect();
        Ok(PairedConfiguration {
            n,
            k,
            partner,
            values,
        })
    }

    /// Build from the distribution label at each position, e.g.
    /// `[3, 5, 1, 5, 8, 8, 1, 3]`.
    pub fn from_labels(labels: &[usize], k: usize) -> Result<Self, OracleError> {
        let mut partner = vec![0; labels.len()];
        for i in 0..labels.len() {
            let matches: Vec<usize> = (0..labels.len())
                .filter(|&j| j != i && labels[j] == labels[i])
                .collect();
            if matches.len() != 1 {
                return Err(OracleError::BadPairing(labels.len()));
            }
            partner[i] = matches[0] + 1;
        }
        Self::new(partner, k)
    }

    pub fn with_values(mut self, values: Vec<f64>) -> Result<Self, OracleError> {
        if values.len() != 2 * self.n || values.windows(2).any(|w| w[1] > w[0]) {
            return Err(OracleError::BadValues);
        }
        self.values = values;
        Ok(self)
    }

    pub fn with_k(mut self, k: usize) -> Result<Self, OracleError> {
        if k + 1 > self.n {
            return Err(OracleError::BadK { k, n: self.n });
        }
        self.k = k;
        Ok(self)
    }

    pub fn partner_of(&self, l: usize) -> usize {
        self.partner[l - 1]
    }

    /// Position at which the `j`-th pair completes (`j >= 1`); `xi(0) = 0`.
    pub fn xi(&self, j: usize) -> usize {
        if j == 0 {
            return 0;
        }
        let mut seen = 0;
        for l in 1..=2 * self.n {
            if self.partner_of(l) < l {
                seen += 1;
                if seen == j {
                    return l;
                }
            }
        }
        unreachable!("a configuration has exactly n completing positions")
    }

    /// Completion positions `xi_1 < ... < xi_n`.
    pub fn xis(&self) -> Vec<usize> {
        (1..=2 * self.n)
            .filter(|&l| self.partner_of(l) < l)
            .collect()
    }

    /// Distribution id (0-based, by order of the larger element) per position.
    pub fn labels(&self) -> Vec<usize> {
        let mut labels = vec![usize::MAX; 2 * self.n];
        let mut next = 0;
        for l in 1..=2 * self.n {
            if labels[l - 1] == usize::MAX {
                labels[l - 1] = next;
                labels[self.partner_of(l) - 1] = next;
                next += 1;
            }
        }
        labels
    }

    /// Blocked / ill-paired status of `w_l` for `l in 1..=2k+1`.
    pub fn classify(&self, l: usize) -> Result<PositionClass, OracleError> {
        let top = 2 * self.k + 1;
        if l == 0 || l > top {
            return Err(OracleError::BadPosition { l, max: top });
        }
        // smallest r in (l, 2k+1] whose partner also lies in (l, r)
        let m_l = (l + 1..=top).find(|&r| {
            let q = self.partner_of(r);
            q > l && q < r
        });
        let p = self.partner_of(l);
        let ill_paired = p > l && p <= top;
        let k = self.k as i32;
        let li = l as i32;
        let delta = match (m_l.is_some(), ill_paired) {
            (false, false) => Dyadic::pow2(-2 * k + li - 1),
            (false, true) => Dyadic::pow2(-2 * k + li),
            _ => Dyadic::ZERO,
        };
        Ok(PositionClass {
            l,
            blocked: m_l.is_some(),
            m_l,
            ill_paired,
            p,
            delta,
        })
    }
}

/// Classification of one position.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PositionClass {
    pub l: usize,
    pub blocked: bool,
    pub m_l: Option<usize>,
    pub ill_paired: bool,
    pub p: usize,
    pub delta: Dyadic,
}

/// Closed-form law of the position of `X_(k+1)`: entry `l-1` is
/// `P(X_(k+1) = w_l)` for `l = 1..=2n` (zero past `xi_{k+1}`).
pub fn prophet_pmf_formula(cfg: &PairedConfiguration) -> Vec<Dyadic> {
    let k = cfg.k;
    let xis = cfg.xis();
    let xi = |j: usize| if j == 0 { 0 } else { xis[j - 1] };
    let mut pmf = vec![Dyadic::ZERO; 2 * cfg.n];
    for j in 0..=k {
        for l in xi(j) + 1..xi(j + 1) {
            // C(l-1-2j, k-j) / 2^(l-2j)
            if l < 1 + 2 * j {
                continue;
            }
            let c = binomial_u128((l - 1 - 2 * j) as u64, (k - j) as u64);
            pmf[l - 1] = Dyadic::new(c, (l - 2 * j) as u32);
        }
    }
    for j in 1..=k + 1 {
        let l = xi(j);
        // C(xi_j - 2j, k+1-j) / 2^(xi_j - 2j + 1)
        let c = binomial_u128((l - 2 * j) as u64, (k + 1 - j) as u64);
        pmf[l - 1] = Dyadic::new(c, (l - 2 * j + 1) as u32);
    }
    pmf
}

/// Arrival order of the surviving real values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleOrder {
    /// Largest value first (increasing position).
    Descending,
    /// Smallest value first.
    Ascending,
}

/// Policies analysed by the oracle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OraclePolicy {
    Msa(usize),
    MsaBar(usize),
}

/// One coin assignment split into sorted real-value and sample positions.
#[derive(Clone, Debug)]
pub(crate) struct Split {
    /// 1-based positions in X, increasing.
    pub xs: Vec<usize>,
    /// 1-based positions in S, increasing.
    pub ss: Vec<usize>,
}

impl Split {
    /// Coin bit `d` set means the larger element of pair `d` is the sample.
    pub fn from_mask(cfg: &PairedConfiguration, pairs: &[(usize, usize)], mask: u32) -> Split {
        let mut in_x = vec![false; 2 * cfg.n + 1];
        for (d, &(y, z)) in pairs.iter().enumerate() {
            if mask >> d & 1 == 1 {
                in_x[z] = true;
            } else {
                in_x[y] = true;
            }
        }
        let xs = (1..=2 * cfg.n).filter(|&l| in_x[l]).collect();
        let ss = (1..=2 * cfg.n).filter(|&l| !in_x[l]).collect();
        Split { xs, ss }
    }

    /// Position picked by a sample-threshold rule, together with the threshold.
    pub fn select(
        &self,
        k: usize,
        policy: OraclePolicy,
        order: OracleOrder,
        partner: &[usize],
    ) -> (usize, Option<usize>) {
        let (rank, excluded) = match policy {
            OraclePolicy::Msa(i) => (i, None),
            OraclePolicy::MsaBar(i) => (i, Some(partner[self.ss[i - 1] - 1])),
        };
        let tau = self.ss[rank - 1];
        let eligible = |&&l: &&usize| l < tau && Some(l) != excluded;
        let survivors = &self.xs[k..];
        let pick = match order {
            OracleOrder::Descending => survivors.iter().find(eligible),
            OracleOrder::Ascending => survivors.iter().rev().find(eligible),
        };
        (tau, pick.copied())
    }
}

/// `(larger, smaller)` positions of each pair, ordered by the larger.
pub(crate) fn pairs_of(cfg: &PairedConfiguration) -> Vec<(usize, usize)> {
    (1..=2 * cfg.n)
        .filter(|&l| cfg.partner_of(l) > l)
        .map(|l| (l, cfg.partner_of(l)))
        .collect()
}

/// Joint law entry of `(threshold, selected, X_(k+1))` positions.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JointEntry {
    pub tau: usize,
    pub selected: Option<usize>,
    pub prophet: usize,
    pub prob: Dyadic,
}

/// Exact joint law of threshold, selection and `X_(k+1)` positions over all
/// `2^n` coin assignments.
pub fn enumerate_exact(
    cfg: &PairedConfiguration,
    policy: OraclePolicy,
    order: OracleOrder,
) -> Result<Vec<JointEntry>, OracleError> {
    if cfg.n > MAX_N {
        return Err(OracleError::TooLarge(cfg.n));
    }
    let max_rank = match policy {
        OraclePolicy::Msa(_) => cfg.n,
        OraclePolicy::MsaBar(_) => cfg.k,
    };
    let rank = match policy {
        OraclePolicy::Msa(i) | OraclePolicy::MsaBar(i) => i,
    };
    if rank == 0 || rank > max_rank {
        return Err(OracleError::BadPosition {
            l: rank,
            max: max_rank,
        });
    }
    let pairs = pairs_of(cfg);
    let mut counts: std::collections::BTreeMap<(usize, Option<usize>, usize), u128> =
        Default::default();
    for mask in 0..(1u32 << cfg.n) {
        let split = Split::from_mask(cfg, &pairs, mask);
        let (tau, pick) = split.select(cfg.k, policy, order, &cfg.partner);
        *counts.entry((tau, pick, split.xs[cfg.k])).or_default() += 1;
    }
    Ok(counts
        .into_iter()
        .map(|((tau, selected, prophet), c)| JointEntry {
            tau,
            selected,
            prophet,
            prob: Dyadic::new(c, cfg.n as u32),
        })
        .collect())
}

/// Marginal law of the position of `X_(k+1)` by enumeration.
pub fn prophet_pmf_enumerated(cfg: &PairedConfiguration) -> Vec<Dyadic> {
    let pairs = pairs_of(cfg);
    let mut counts = vec![0u128; 2 * cfg.n];
    for mask in 0..(1u32 << cfg.n) {
        let split = Split::from_mask(cfg, &pairs, mask);
        counts[split.xs[cfg.k] - 1] += 1;
    }
    counts
        .into_iter()
        .map(|c| Dyadic::new(c, cfg.n as u32))
        .collect()
}

/// `(2n - 1)!!`, the number of pairings of `2n` positions.
pub fn pairing_count(n: usize) -> u64 {
    (1..=n as u64).map(|i| 2 * i - 1).product()
}

/// The `rank`-th pairing in a fixed enumeration (1-based partner list):
/// the smallest free position is matched with the `(rank mod m)`-th of the
/// `m` remaining free positions, and so on.
pub fn unrank_pairing(n: usize, mut rank: u64) -> Vec<usize> {
    let mut free: Vec<usize> = (1..=2 * n).collect();
    let mut partner = vec![0; 2 * n];
    while !free.is_empty() {
        let a = free.remove(0);
        let m = free.len() as u64;
        let c = (rank % m) as usize;
        rank /= m;
        let b = free.remove(c);
        partner[a - 1] = b;
        partner[b - 1] = a;
    }
    partner
}

#[cfg(test)]
mod tests {
    use super::*;

    fn worked_example() -> PairedConfiguration {
        // y3 y5 y1 z5 y8 z8 z1 z3
        PairedConfiguration::from_labels(&[3, 5, 1, 5, 8, 8, 1, 3], 3).unwrap()
    }

    #[test]
    fn classify_worked_example() {
        let cfg = worked_example();
        let c = cfg.classify(2).unwrap();
        assert!(c.blocked);
        assert_eq!(c.m_l, Some(6));
        assert!(c.ill_paired);
        assert_eq!(c.p, 4);
        assert_eq!(c.delta, Dyadic::ZERO);
        assert_eq!(cfg.xi(1), 4);
        assert_eq!(cfg.xi(2), 6);
        let last = cfg.classify(7).unwrap();
        assert!(!last.blocked && !last.ill_paired);
        assert_eq!(last.delta, Dyadic::ONE);
        assert!(cfg.classify(8).is_err());
    }

    #[test]
    fn single_pair_pmf() {
        let cfg = PairedConfiguration::new(vec![2, 1], 0).unwrap();
        let pmf = prophet_pmf_formula(&cfg);
        assert_eq!(pmf, vec![Dyadic::new(1, 1), Dyadic::new(1, 1)]);
        assert_eq!(prophet_pmf_enumerated(&cfg), pmf);
        let law = enumerate_exact(&cfg, OraclePolicy::Msa(1), OracleOrder::Descending).unwrap();
        let p1: Dyadic = law
            .iter()
            .filter(|e| e.selected == Some(1))
            .fold(Dyadic::ZERO, |a, e| a.add(&e.prob));
        assert_eq!(p1, Dyadic::new(1, 1));
    }

    #[test]
    fn nested_pairs_k1() {
        // w1 w2 paired, w3 w4 paired: xi_1 = 2, xi_2 = 4
        let cfg = PairedConfiguration::new(vec![2, 1, 4, 3], 1).unwrap();
        assert_eq!((cfg.xi(1), cfg.xi(2)), (2, 4));
        let pmf = prophet_pmf_enumerated(&cfg);
        assert_eq!(pmf[1], Dyadic::ZERO);
        assert_eq!(pmf[2], Dyadic::new(1, 1));
        assert_eq!(prophet_pmf_formula(&cfg), pmf);
    }

    #[test]
    fn pairing_enumeration_is_a_bijection() {
        for n in 1..=5 {
            let count = pairing_count(n);
            let mut seen = std::collections::HashSet::new();
            for r in 0..count {
                let p = unrank_pairing(n, r);
                assert!(PairedConfiguration::new(p.clone(), 0).is_ok());
                assert!(seen.insert(p));
            }
        }
        assert_eq!(pairing_count(8), 2_027_025);
    }

    #[test]
    fn classify_ignores_values() {
        let cfg = worked_example();
        let bent = cfg
            .clone()
            .with_values(vec![100.0, 50.0, 49.0, 3.0, 2.9, 2.0, 1.0, 0.5])
            .unwrap();
        for l in 1..=7 {
            assert_eq!(cfg.classify(l).unwrap(), bent.classify(l).unwrap());
        }
        assert!(cfg
            .clone()
            .with_values(vec![1.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0])
            .is_err());
    }
}

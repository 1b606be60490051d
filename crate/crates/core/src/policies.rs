//! Gambler strategies behind one interface.
//!
//! A policy is a per-trial state machine: `begin` receives the optional sample
//! set and a random source for its own randomisation, then `observe` is called
//! once per arrival until it accepts. Every value and sample carries a
//! tie-breaking key so that "exceeds" is a strict total order.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::{DistributionError, Instance};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("cannot parse policy spec '{0}'")]
    Parse(String),
    #[error("rank {rank} outside 1..={max} for {policy}")]
    BadRank {
        policy: String,
        rank: usize,
        max: usize,
    },
    #[error("quantile policy needs identically distributed variables")]
    NotIid,
    #[error("quantile level must lie in (0, 1], got {0}")]
    BadLevel(f64),
    #[error("threshold must be nonnegative and finite, got {0}")]
    BadThreshold(f64),
    #[error("variable index {index} outside 1..={n}")]
    BadIndex { index: usize, n: usize },
    #[error(transparent)]
    Distribution(#[from] DistributionError),
}

/// A value together with its tie-breaker; ordered lexicographically.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Key {
    pub value: f64,
    pub tie: f64,
}

impl Key {
    pub fn new(value: f64, tie: f64) -> Self {
        Key { value, tie }
    }

    pub fn cmp_total(&self, other: &Key) -> Ordering {
        self.value
            .total_cmp(&other.value)
            .then(self.tie.total_cmp(&other.tie))
    }

    pub fn exceeds(&self, other: &Key) -> bool {
        self.cmp_total(other) == Ordering::Greater
    }
}

/// How an arrival is compared with a sample-defined threshold.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TieRule {
    /// Strict comparison of tie-broken keys.
    #[default]
    Randomized,
    /// Accept any value at least the threshold value.
    Weak,
}

impl TieRule {
    fn passes(self, arrival: &Key, threshold: &Key) -> bool {
        match self {
            TieRule::Randomized => arrival.exceeds(threshold),
            TieRule::Weak => arrival.value >= threshold.value,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    Accept,
    Reject,
}

/// Per-trial information available before arrivals.
#[derive(Clone, Copy, Debug)]
pub struct TrialContext<'a> {
    pub n: usize,
    pub k: usize,
    /// One sample per distribution, indexed like the distributions.
    pub samples: Option<&'a [Key]>,
}

/// What a policy sees for one arrival.
#[derive(Clone, Copy, Debug)]
pub struct ArrivalEvent {
    pub key: Key,
    /// Source index (0-based); `None` under no-information.
    pub index: Option<usize>,
    /// 0-based position among the arrivals.
    pub step: usize,
    /// Number of arrivals in this trial.
    pub total: usize,
}

pub trait Policy: Send {
    fn needs_samples(&self) -> bool {
        false
    }
    fn needs_identity(&self) -> bool {
        false
    }
    /// Reset state for a new trial.
    fn begin(&mut self, ctx: &TrialContext<'_>, rng: &mut dyn RngCore);
    fn observe(&mut self, event: &ArrivalEvent) -> Decision;
}

/// Indices of `samples` sorted by decreasing key.
fn ranked(samples: &[Key]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    idx.sort_by(|&a, &b| samples[b].cmp_total(&samples[a]));
    idx
}

/// Threshold at the `rank`-th largest sample.
#[derive(Clone, Debug)]
pub struct Msa {
    rank: usize,
    ties: TieRule,
    tau: Key,
}

impl Msa {
    pub fn new(rank: usize, ties: TieRule) -> Self {
        Msa {
            rank,
            ties,
            tau: Key::new(f64::INFINITY, 0.0),
        }
    }

    fn set_from(&mut self, samples: &[Key]) {
        let order = ranked(samples);
        self.tau = samples[order[self.rank - 1]];
    }
}

impl Policy for Msa {
    fn needs_samples(&self) -> bool {
        true
    }

    fn begin(&mut self, ctx: &TrialContext<'_>, _rng: &mut dyn RngCore) {
        self.set_from(ctx.samples.expect("engine supplies samples"));
    }

    fn observe(&mut self, event: &ArrivalEvent) -> Decision {
        if self.ties.passes(&event.key, &self.tau) {
            Decision::Accept
        } else {
            Decision::Reject
        }
    }
}

/// Threshold at the `rank`-th largest sample, refusing values from the
/// distribution that produced it.
#[derive(Clone, Debug)]
pub struct MsaBar {
    rank: usize,
    ties: TieRule,
    tau: Key,
    source: usize,
}

impl MsaBar {
    pub fn new(rank: usize, ties: TieRule) -> Self {
        MsaBar {
            rank,
            ties,
            tau: Key::new(f64::INFINITY, 0.0),
            source: usize::MAX,
        }
    }

    fn set_from(&mut self, samples: &[Key]) {
        let order = ranked(samples);
        self.source = order[self.rank - 1];
        self.tau = samples[self.source];
    }
}

impl Policy for MsaBar {
    fn needs_samples(&self) -> bool {
        true
    }

    fn needs_identity(&self) -> bool {
        true
    }

    fn begin(&mut self, ctx: &TrialContext<'_>, _rng: &mut dyn RngCore) {
        self.set_from(ctx.samples.expect("engine supplies samples"));
    }

    fn observe(&mut self, event: &ArrivalEvent) -> Decision {
        let index = event
            .index
            .expect("engine supplies identities under full information");
        if index != self.source && self.ties.passes(&event.key, &self.tau) {
            Decision::Accept
        } else {
            Decision::Reject
        }
    }
}

/// Plays `Msa(I)` with `I` uniform on `1..=k+1`.
#[derive(Clone, Debug)]
pub struct MsaRand {
    inner: Msa,
}

impl Policy for MsaRand {
    fn needs_samples(&self) -> bool {
        true
    }

    fn begin(&mut self, ctx: &TrialContext<'_>, rng: &mut dyn RngCore) {
        self.inner.rank = rng.random_range(1..=ctx.k + 1);
        self.inner.begin(ctx, rng);
    }

    fn observe(&mut self, event: &ArrivalEvent) -> Decision {
        self.inner.observe(event)
    }
}

/// Plays `MsaBar(I)` for `I <= k` w.p. `1/(k+2)` each, otherwise `Msa(k+1)`.
#[derive(Clone, Debug)]
pub struct MsaBarRand {
    bar: MsaBar,
    plain: Msa,
    use_bar: bool,
}

impl Policy for MsaBarRand {
    fn needs_samples(&self) -> bool {
        true
    }

    fn needs_identity(&self) -> bool {
        true
    }

    fn begin(&mut self, ctx: &TrialContext<'_>, rng: &mut dyn RngCore) {
        // slots 1..=k are the barred ranks, slots k+1 and k+2 both map to Msa(k+1)
        let slot = rng.random_range(1..=ctx.k + 2);
        self.use_bar = slot <= ctx.k;
        if self.use_bar {
            self.bar.rank = slot;
            self.bar.begin(ctx, rng);
        } else {
            self.plain.rank = ctx.k + 1;
            self.plain.begin(ctx, rng);
        }
    }

    fn observe(&mut self, event: &ArrivalEvent) -> Decision {
        if self.use_bar {
            self.bar.observe(event)
        } else {
            self.plain.observe(event)
        }
    }
}

/// Skip the first `floor((n-k)/e)` arrivals, then take the first one that
/// beats everything seen so far.
#[derive(Clone, Debug, Default)]
pub struct Secretary {
    cutoff: usize,
    best: Option<Key>,
}

pub fn secretary_cutoff(n: usize, k: usize) -> usize {
    ((n - k) as f64 / std::f64::consts::E).floor() as usize
}

impl Policy for Secretary {
    fn begin(&mut self, ctx: &TrialContext<'_>, _rng: &mut dyn RngCore) {
        self.cutoff = secretary_cutoff(ctx.n, ctx.k);
        self.best = None;
    }

    fn observe(&mut self, event: &ArrivalEvent) -> Decision {
        let beats = self.best.is_none_or(|b| event.key.exceeds(&b));
        if beats {
            self.best = Some(event.key);
        }
        if event.step >= self.cutoff && beats {
            Decision::Accept
        } else {
            Decision::Reject
        }
    }
}

/// Accept the first value at least `tau`.
#[derive(Clone, Debug)]
pub struct FixedThreshold {
    pub tau: f64,
}

impl Policy for FixedThreshold {
    fn begin(&mut self, _ctx: &TrialContext<'_>, _rng: &mut dyn RngCore) {}

    fn observe(&mut self, event: &ArrivalEvent) -> Decision {
        if event.key.value >= self.tau {
            Decision::Accept
        } else {
            Decision::Reject
        }
    }
}

/// Accept the arrival coming from a given variable, whatever its value.
#[derive(Clone, Debug)]
pub struct StopAtIndex {
    pub index: usize,
}

impl Policy for StopAtIndex {
    fn needs_identity(&self) -> bool {
        true
    }

    fn begin(&mut self, _ctx: &TrialContext<'_>, _rng: &mut dyn RngCore) {}

    fn observe(&mut self, event: &ArrivalEvent) -> Decision {
        if event.index == Some(self.index) {
            Decision::Accept
        } else {
            Decision::Reject
        }
    }
}

/// Accept the first arrival, or never accept.
#[derive(Clone, Debug)]
pub struct Constant {
    pub accept: bool,
}

impl Policy for Constant {
    fn begin(&mut self, _ctx: &TrialContext<'_>, _rng: &mut dyn RngCore) {}

    fn observe(&mut self, _event: &ArrivalEvent) -> Decision {
        if self.accept {
            Decision::Accept
        } else {
            Decision::Reject
        }
    }
}

/// Declarative policy description, parsed from and printed as spec strings.
#[derive(Clone, Debug, PartialEq)]
pub enum PolicySpec {
    Msa {
        rank: usize,
        ties: TieRule,
    },
    MsaBar {
        rank: usize,
        ties: TieRule,
    },
    MsaRand,
    MsaBarRand,
    Secretary,
    Quantile(f64),
    Fixed(f64),
    BaselineMedian,
    BaselineHalfMean,
    /// 1-based variable index.
    StopAt(usize),
    AcceptFirst,
    Never,
}

impl PolicySpec {
    pub fn msa(rank: usize) -> Self {
        PolicySpec::Msa {
            rank,
            ties: TieRule::Randomized,
        }
    }

    pub fn msa_bar(rank: usize) -> Self {
        PolicySpec::MsaBar {
            rank,
            ties: TieRule::Randomized,
        }
    }

    pub fn needs_identity(&self) -> bool {
        matches!(
            self,
            PolicySpec::MsaBar { .. } | PolicySpec::MsaBarRand | PolicySpec::StopAt(_)
        )
    }

    pub fn needs_samples(&self) -> bool {
        matches!(
            self,
            PolicySpec::Msa { .. }
                | PolicySpec::MsaBar { .. }
                | PolicySpec::MsaRand
                | PolicySpec::MsaBarRand
        )
    }

    /// Validate against an instance and resolve instance-dependent thresholds.
    pub fn resolve(&self, inst: &Instance) -> Result<PolicySpec, PolicyError> {
        let n = inst.n();
        let k = inst.k;
        match *self {
            PolicySpec::Msa { rank, .. } if rank == 0 || rank > n => Err(PolicyError::BadRank {
                policy: self.to_string(),
                rank,
                max: n,
            }),
            PolicySpec::MsaBar { rank, .. } if rank == 0 || rank > k => Err(PolicyError::BadRank {
                policy: self.to_string(),
                rank,
                max: k,
            }),
            PolicySpec::Quantile(q) => {
                if !(q > 0.0 && q <= 1.0) {
                    return Err(PolicyError::BadLevel(q));
                }
                if !inst.is_iid() {
                    return Err(PolicyError::NotIid);
                }
                Ok(PolicySpec::Fixed(inst.dists[0].threshold_for_quantile(q)?))
            }
            PolicySpec::Fixed(t) if !(t.is_finite() && t >= 0.0) => {
                Err(PolicyError::BadThreshold(t))
            }
            PolicySpec::BaselineMedian => {
                let law = inst.order_statistic_law(k + 1)?;
                let mut cum = 0.0;
                let mut median = law[0].0;
                // lower median: smallest x with P(X <= x) >= 1/2
                for &(v, p) in law.iter().rev() {
                    cum += p;
                    if cum >= 0.5 - 1e-12 {
                        median = v;
                        break;
                    }
                }
                Ok(PolicySpec::Fixed(median))
            }
            PolicySpec::BaselineHalfMean => Ok(PolicySpec::Fixed(inst.benchmark_exact()? / 2.0)),
            PolicySpec::StopAt(i) if i == 0 || i > n => Err(PolicyError::BadIndex { index: i, n }),
            _ => Ok(self.clone()),
        }
    }

    /// Build a runnable policy for `inst`.
    pub fn build(&self, inst: &Instance) -> Result<Box<dyn Policy>, PolicyError> {
        Ok(match self.resolve(inst)? {
            PolicySpec::Msa { rank, ties } => Box::new(Msa::new(rank, ties)),
            PolicySpec::MsaBar { rank, ties } => Box::new(MsaBar::new(rank, ties)),
            PolicySpec::MsaRand => Box::new(MsaRand {
                inner: Msa::new(1, TieRule::Randomized),
            }),
            PolicySpec::MsaBarRand => Box::new(MsaBarRand {
                bar: MsaBar::new(1, TieRule::Randomized),
                plain: Msa::new(1, TieRule::Randomized),
                use_bar: false,
            }),
            PolicySpec::Secretary => Box::new(Secretary::default()),
            PolicySpec::Fixed(tau) => Box::new(FixedThreshold { tau }),
            PolicySpec::StopAt(i) => Box::new(StopAtIndex { index: i - 1 }),
            PolicySpec::AcceptFirst => Box::new(Constant { accept: true }),
            PolicySpec::Never => Box::new(Constant { accept: false }),
            PolicySpec::Quantile(_) | PolicySpec::BaselineMedian | PolicySpec::BaselineHalfMean => {
                unreachable!("resolved to a fixed threshold")
            }
        })
    }

    /// Decomposition into deterministic components with their probabilities.
    pub fn mixture(&self, inst: &Instance) -> Result<Vec<(f64, PolicySpec)>, PolicyError> {
        let k = inst.k;
        Ok(match self {
            PolicySpec::MsaRand => (1..=k + 1)
                .map(|i| (1.0 / (k + 1) as f64, PolicySpec::msa(i)))
                .collect(),
            PolicySpec::MsaBarRand => {
                let mut parts: Vec<(f64, PolicySpec)> = (1..=k)
                    .map(|i| (1.0 / (k + 2) as f64, PolicySpec::msa_bar(i)))
                    .collect();
                parts.push((2.0 / (k + 2) as f64, PolicySpec::msa(k + 1)));
                parts
            }
            other => vec![(1.0, other.resolve(inst)?)],
        })
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let weak = |t: &TieRule| if *t == TieRule::Weak { ":weak" } else { "" };
        match self {
            PolicySpec::Msa { rank, ties } => write!(f, "msa:{rank}{}", weak(ties)),
            PolicySpec::MsaBar { rank, ties } => write!(f, "msa_bar:{rank}{}", weak(ties)),
            PolicySpec::MsaRand => write!(f, "msa_rand"),
            PolicySpec::MsaBarRand => write!(f, "msa_bar_rand"),
            PolicySpec::Secretary => write!(f, "secretary"),
            PolicySpec::Quantile(q) => write!(f, "quantile:{q}"),
            PolicySpec::Fixed(t) => write!(f, "fixed:{t}"),
            PolicySpec::BaselineMedian => write!(f, "baseline:median"),
            PolicySpec::BaselineHalfMean => write!(f, "baseline:half_mean"),
            PolicySpec::StopAt(i) => write!(f, "stop_at:{i}"),
            PolicySpec::AcceptFirst => write!(f, "accept_first"),
            PolicySpec::Never => write!(f, "never"),
        }
    }
}

impl FromStr for PolicySpec {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || PolicyError::Parse(s.to_string());
        let parts: Vec<&str> = s.trim().split(':').collect();
        let rank = |p: &str| p.parse::<usize>().map_err(|_| err());
        let real = |p: &str| p.parse::<f64>().map_err(|_| err());
        let ties = |p: Option<&&str>| match p {
            None => Ok(TieRule::Randomized),
            Some(&"weak") => Ok(TieRule::Weak),
            Some(&"rand") | Some(&"randomized") => Ok(TieRule::Randomized),
            Some(_) => Err(err()),
        };
        match parts.as_slice() {
            ["msa", i, rest @ ..] if rest.len() <= 1 => Ok(PolicySpec::Msa {
                rank: rank(i)?,
                ties: ties(rest.first())?,
            }),
            ["msa_bar", i, rest @ ..] if rest.len() <= 1 => Ok(PolicySpec::MsaBar {
                rank: rank(i)?,
                ties: ties(rest.first())?,
            }),
            ["msa_rand"] => Ok(PolicySpec::MsaRand),
            ["msa_bar_rand"] => Ok(PolicySpec::MsaBarRand),
            ["secretary"] => Ok(PolicySpec::Secretary),
            ["quantile", q] => Ok(PolicySpec::Quantile(real(q)?)),
            ["fixed", t] => Ok(PolicySpec::Fixed(real(t)?)),
            ["baseline", "median"] => Ok(PolicySpec::BaselineMedian),
            ["baseline", "half_mean"] => Ok(PolicySpec::BaselineHalfMean),
            ["stop_at", i] => Ok(PolicySpec::StopAt(rank(i)?)),
            ["accept_first"] => Ok(PolicySpec::AcceptFirst),
            ["never"] => Ok(PolicySpec::Never),
            _ => Err(err()),
        }
    }
}

impl Serialize for PolicySpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for PolicySpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

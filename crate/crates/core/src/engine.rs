//! The game: realise values, let Nature remove the top `k`, stream the rest to
//! a policy, and aggregate paired Monte Carlo statistics.
//!
//! Each trial draws from four independent ChaCha streams derived from
//! `(seed, trial)`: values, samples, policy randomisation and arrival order.
//! Keeping them apart means a policy that requests samples does not shift the
//! value draws, so different policies are compared on identical realisations.

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::Instance;
use crate::exec::{map_indexed, ExecMode};
use crate::numeric::{NeumaierSum, Z_99};
use crate::policies::{ArrivalEvent, Decision, Key, Policy, PolicyError, PolicySpec, TrialContext};

/// Trials per work unit; fixed so results do not depend on scheduling.
pub const BLOCK: u64 = 4096;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("removal count k={k} must be below n={n}")]
    BadK { k: usize, n: usize },
    #[error("policy '{0}' needs variable identities and cannot run under no-information")]
    IncompatibleModel(String),
    #[error("arrival permutation is not a bijection on 0..{0}")]
    BadPermutation(usize),
    #[error("trial count must be positive")]
    NoTrials,
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum InfoModel {
    #[serde(rename = "fi")]
    Fi,
    #[default]
    #[serde(rename = "ni")]
    Ni,
}

impl std::str::FromStr for InfoModel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "fi" => Ok(InfoModel::Fi),
            "ni" => Ok(InfoModel::Ni),
            _ => Err(format!(
                "unknown information model '{s}' (expected fi or ni)"
            )),
        }
    }
}

impl std::fmt::Display for InfoModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            InfoModel::Fi => "fi",
            InfoModel::Ni => "ni",
        })
    }
}

/// Order in which the surviving variables arrive. Permutations are 0-based
/// lists of variable indices in arrival order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrivalOrder {
    #[default]
    IndexOrder,
    FixedPermutation(Vec<usize>),
    UniformRandom,
}

impl ArrivalOrder {
    pub fn validate(&self, n: usize) -> Result<(), EngineError> {
        if let ArrivalOrder::FixedPermutation(p) = self {
            let mut seen = vec![false; n];
            if p.len() != n {
                return Err(EngineError::BadPermutation(n));
            }
            for &i in p {
                if i >= n || seen[i] {
                    return Err(EngineError::BadPermutation(n));
                }
                seen[i] = true;
            }
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        match self {
            ArrivalOrder::IndexOrder => "index".into(),
            ArrivalOrder::UniformRandom => "random".into(),
            ArrivalOrder::FixedPermutation(p) => {
                let parts: Vec<String> = p.iter().map(|i| (i + 1).to_string()).collect();
                format!("perm:{}", parts.join("-"))
            }
        }
    }

    /// Arrival sequence of variable indices for one trial.
    pub fn sequence(&self, n: usize, rng: &mut dyn RngCore) -> Vec<usize> {
        match self {
            ArrivalOrder::IndexOrder => (0..n).collect(),
            ArrivalOrder::FixedPermutation(p) => p.clone(),
            ArrivalOrder::UniformRandom => {
                let mut p: Vec<usize> = (0..n).collect();
                p.shuffle(rng);
                p
            }
        }
    }
}

/// Surviving arrivals and removed indices.
#[derive(Clone, Debug, PartialEq)]
pub struct RemovalOutcome {
    /// `(index, value)` in arrival order.
    pub remaining: Vec<(usize, f64)>,
    pub removed: Vec<usize>,
}

/// Remove the `k` largest keys and list the survivors along `arrival`.
pub fn remove_top_k_keyed(keys: &[Key], k: usize, arrival: &[usize]) -> (Vec<usize>, Vec<bool>) {
    let n = keys.len();
    let mut by_rank: Vec<usize> = (0..n).collect();
    by_rank.sort_by(|&a, &b| keys[b].cmp_total(&keys[a]));
    let mut removed = vec![false; n];
    for &i in &by_rank[..k] {
        removed[i] = true;
    }
    let remaining = arrival.iter().copied().filter(|&i| !removed[i]).collect();
    (remaining, removed)
}

/// Nature's move: attach a uniform tie-breaker to every index and remove the
/// `k` largest under `(value, tie)` order.
pub fn remove_top_k(
    values: &[f64],
    k: usize,
    order: &ArrivalOrder,
    rng: &mut dyn RngCore,
) -> Result<RemovalOutcome, EngineError> {
    let n = values.len();
    if k >= n {
        return Err(EngineError::BadK { k, n });
    }
    order.validate(n)?;
    let keys: Vec<Key> = values.iter().map(|&v| Key::new(v, rng.random())).collect();
    let arrival = order.sequence(n, rng);
    let (remaining, removed) = remove_top_k_keyed(&keys, k, &arrival);
    Ok(RemovalOutcome {
        remaining: remaining.into_iter().map(|i| (i, values[i])).collect(),
        removed: (0..n).filter(|&i| removed[i]).collect(),
    })
}

/// Result of one trial.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrialOutcome {
    pub accepted: f64,
    pub benchmark: f64,
    /// Whether the accepted arrival is the largest survivor.
    pub accepted_best: bool,
    /// Source index of the accepted arrival.
    pub accepted_index: Option<usize>,
}

/// Everything random about one trial, fixed in advance.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialDraw {
    pub values: Vec<Key>,
    pub samples: Option<Vec<Key>>,
    pub arrival: Vec<usize>,
}

/// Play one realised trial. `policy_rng` feeds the policy's own coin flips.
pub fn play(
    n: usize,
    k: usize,
    draw: &TrialDraw,
    policy: &mut dyn Policy,
    model: InfoModel,
    policy_rng: &mut dyn RngCore,
) -> TrialOutcome {
    let (remaining, _) = remove_top_k_keyed(&draw.values, k, &draw.arrival);
    let ctx = TrialContext {
        n,
        k,
        samples: draw.samples.as_deref(),
    };
    policy.begin(&ctx, policy_rng);
    let mut best = remaining[0];
    for &i in &remaining[1..] {
        if draw.values[i].exceeds(&draw.values[best]) {
            best = i;
        }
    }
    let benchmark = draw.values[best].value;
    let total = remaining.len();
    for (step, &i) in remaining.iter().enumerate() {
        let event = ArrivalEvent {
            key: draw.values[i],
            index: match model {
                InfoModel::Fi => Some(i),
                InfoModel::Ni => None,
            },
            step,
            total,
        };
        if policy.observe(&event) == Decision::Accept {
            return TrialOutcome {
                accepted: draw.values[i].value,
                benchmark,
                accepted_best: i == best,
                accepted_index: Some(i),
            };
        }
    }
    TrialOutcome {
        accepted: 0.0,
        benchmark,
        accepted_best: false,
        accepted_index: None,
    }
}

fn draw_keys(inst: &Instance, rng: &mut dyn RngCore) -> Vec<Key> {
    inst.dists
        .iter()
        .map(|d| {
            let u: f64 = rng.random();
            let tie: f64 = rng.random();
            Key::new(d.from_uniform(u), tie)
        })
        .collect()
}

/// Draw values, samples (if wanted) and the arrival order.
pub fn draw_trial(
    inst: &Instance,
    order: &ArrivalOrder,
    with_samples: bool,
    value_rng: &mut dyn RngCore,
    sample_rng: &mut dyn RngCore,
    order_rng: &mut dyn RngCore,
) -> TrialDraw {
    let values = draw_keys(inst, value_rng);
    let samples = with_samples.then(|| draw_keys(inst, sample_rng));
    let arrival = order.sequence(inst.n(), order_rng);
    TrialDraw {
        values,
        samples,
        arrival,
    }
}

fn check_compatible(
    policy: &dyn Policy,
    spec_label: &str,
    model: InfoModel,
) -> Result<(), EngineError> {
    if model == InfoModel::Ni && policy.needs_identity() {
        return Err(EngineError::IncompatibleModel(spec_label.to_string()));
    }
    Ok(())
}

/// One trial driven by a single random stream.
pub fn run_trial<R: RngCore>(
    inst: &Instance,
    policy: &mut dyn Policy,
    model: InfoModel,
    order: &ArrivalOrder,
    rng: &mut R,
) -> Result<TrialOutcome, EngineError> {
    if inst.k >= inst.n() {
        return Err(EngineError::BadK {
            k: inst.k,
            n: inst.n(),
        });
    }
    order.validate(inst.n())?;
    check_compatible(policy, "policy", model)?;
    let values = draw_keys(inst, rng);
    let samples = policy.needs_samples().then(|| draw_keys(inst, rng));
    let arrival = order.sequence(inst.n(), rng);
    let draw = TrialDraw {
        values,
        samples,
        arrival,
    };
    Ok(play(inst.n(), inst.k, &draw, policy, model, rng))
}

const STREAM_VALUES: u64 = 0;
const STREAM_SAMPLES: u64 = 1;
const STREAM_POLICY: u64 = 2;
const STREAM_ORDER: u64 = 3;

fn stream(seed: u64, trial: u64, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial.wrapping_mul(4).wrapping_add(purpose));
    rng
}

/// The random draws of trial `trial` under `seed`, as used by [`simulate`].
pub fn seeded_draw(
    inst: &Instance,
    order: &ArrivalOrder,
    with_samples: bool,
    seed: u64,
    trial: u64,
) -> TrialDraw {
    draw_trial(
        inst,
        order,
        with_samples,
        &mut stream(seed, trial, STREAM_VALUES),
        &mut stream(seed, trial, STREAM_SAMPLES),
        &mut stream(seed, trial, STREAM_ORDER),
    )
}

/// Everything needed to run a Monte Carlo experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub policy: PolicySpec,
    pub model: InfoModel,
    #[serde(default)]
    pub order: ArrivalOrder,
    pub trials: u64,
    pub seed: u64,
}

/// Paired means, standard errors and a 99% delta-method ratio interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioEstimate {
    pub mean_alg: f64,
    pub se_alg: f64,
    pub mean_benchmark: f64,
    pub se_benchmark: f64,
    pub ratio: f64,
    pub se_ratio: f64,
    pub ratio_ci_low: f64,
    pub ratio_ci_high: f64,
    /// Fraction of trials in which the largest survivor was accepted.
    pub best_rate: f64,
    pub se_best_rate: f64,
    pub trials: u64,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, Default)]
struct Moments {
    count: u64,
    a: NeumaierSum,
    b: NeumaierSum,
    aa: NeumaierSum,
    bb: NeumaierSum,
    ab: NeumaierSum,
    best: u64,
}

impl Moments {
    fn push(&mut self, o: &TrialOutcome) {
        self.count += 1;
        self.a.add(o.accepted);
        self.b.add(o.benchmark);
        self.aa.add(o.accepted * o.accepted);
        self.bb.add(o.benchmark * o.benchmark);
        self.ab.add(o.accepted * o.benchmark);
        self.best += u64::from(o.accepted_best);
    }

    fn merge(&mut self, other: &Moments) {
        self.count += other.count;
        self.a.add(other.a.value());
        self.b.add(other.b.value());
        self.aa.add(other.aa.value());
        self.bb.add(other.bb.value());
        self.ab.add(other.ab.value());
        self.best += other.best;
    }

    fn finish(&self, seed: u64) -> RatioEstimate {
        let n = self.count as f64;
        let ma = self.a.value() / n;
        let mb = self.b.value() / n;
        let denom = (n - 1.0).max(1.0);
        let var_a = ((self.aa.value() - n * ma * ma) / denom).max(0.0);
        let var_b = ((self.bb.value() - n * mb * mb) / denom).max(0.0);
        let cov = (self.ab.value() - n * ma * mb) / denom;
        let ratio = if mb > 0.0 { ma / mb } else { f64::NAN };
        let var_r = if mb > 0.0 {
            ((var_a - 2.0 * ratio * cov + ratio * ratio * var_b) / (mb * mb * n)).max(0.0)
        } else {
            f64::NAN
        };
        let se_ratio = var_r.sqrt();
        let best_rate = self.best as f64 / n;
        RatioEstimate {
            mean_alg: ma,
            se_alg: (var_a / n).sqrt(),
            mean_benchmark: mb,
            se_benchmark: (var_b / n).sqrt(),
            ratio,
            se_ratio,
            ratio_ci_low: ratio - Z_99 * se_ratio,
            ratio_ci_high: ratio + Z_99 * se_ratio,
            best_rate,
            se_best_rate: (best_rate * (1.0 - best_rate) / n).sqrt(),
            trials: self.count,
            seed,
        }
    }
}

/// Run `cfg.trials` seeded trials and aggregate paired statistics.
/// Results are bit-identical across execution modes.
pub fn simulate(
    inst: &Instance,
    cfg: &SimConfig,
    mode: ExecMode,
) -> Result<RatioEstimate, EngineError> {
    simulate_with(inst, cfg, mode, |_| {})
}

/// As [`simulate`], also handing every outcome to `inspect` (called from
/// worker threads in parallel mode).
pub fn simulate_with<F>(
    inst: &Instance,
    cfg: &SimConfig,
    mode: ExecMode,
    inspect: F,
) -> Result<RatioEstimate, EngineError>
where
    F: Fn(&TrialOutcome) + Sync + Send,
{
    let n = inst.n();
    if inst.k >= n {
        return Err(EngineError::BadK { k: inst.k, n });
    }
    if cfg.trials == 0 {
        return Err(EngineError::NoTrials);
    }
    cfg.order.validate(n)?;
    let probe = cfg.policy.build(inst)?;
    check_compatible(probe.as_ref(), &cfg.policy.to_string(), cfg.model)?;
    let with_samples = probe.needs_samples();
    let resolved = cfg.policy.resolve(inst)?;
    let blocks = cfg.trials.div_ceil(BLOCK) as usize;
    let parts = map_indexed(blocks, mode, |b| {
        let mut policy = resolved.build(inst).expect("validated above");
        let start = b as u64 * BLOCK;
        let end = (start + BLOCK).min(cfg.trials);
        let mut m = Moments::default();
        for t in start..end {
            let draw = seeded_draw(inst, &cfg.order, with_samples, cfg.seed, t);
            let mut prng = stream(cfg.seed, t, STREAM_POLICY);
            let out = play(n, inst.k, &draw, policy.as_mut(), cfg.model, &mut prng);
            debug_assert!(benchmark_matches(&draw, inst.k, out.benchmark));
            inspect(&out);
            m.push(&out);
        }
        m
    });
    let mut total = Moments::default();
    for p in &parts {
        total.merge(p);
    }
    Ok(total.finish(cfg.seed))
}

/// Whether `benchmark` is the (k+1)-th largest realised value.
pub fn benchmark_matches(draw: &TrialDraw, k: usize, benchmark: f64) -> bool {
    let mut v: Vec<f64> = draw.values.iter().map(|x| x.value).collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v[k].to_bits() == benchmark.to_bits()
}

/// Convenience wrapper matching the common call shape.
pub fn estimate_ratio(
    inst: &Instance,
    policy: &PolicySpec,
    model: InfoModel,
    order: &ArrivalOrder,
    trials: u64,
    seed: u64,
) -> Result<RatioEstimate, EngineError> {
    simulate(
        inst,
        &SimConfig {
            policy: policy.clone(),
            model,
            order: order.clone(),
            trials,
            seed,
        },
        ExecMode::default(),
    )
}

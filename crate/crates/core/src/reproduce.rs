//! The full results table: one row per acceptance criterion, computed from a
//! single seed. Rows carry no timings so reruns are byte-identical.

use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::distributions::{Distribution, DistributionError, Instance};
use crate::engine::{simulate, ArrivalOrder, EngineError, InfoModel, RatioEstimate, SimConfig};
use crate::exact::{exact_policy_value, optimal_value_fi, ExactError};
use crate::exec::ExecMode;
use crate::iid_analysis::{
    alg_q_formula, ex2_formula, finite_n_upper_check, optimize_lower_bound, optimize_upper_bound,
    IidError, UpperBoundParams,
};
use crate::instances::{example1, hard_fi, hard_ni, iid_uniform, random_discrete, InstanceError};
use crate::paired_oracle::{prophet_pmf_sweep, sweep, OracleError, VerifyOptions};
use crate::policies::{PolicySpec, TieRule};

pub const SCHEMA_VERSION: u32 = 1;

/// Checks that are known to be violated in the lemma suite; their amended
/// variants carry the `_extended_blocking` suffix.
pub const KNOWN_LEMMA_GAPS: [&str; 2] = ["msa_k1_tau_conditional", "msa_k1_tau_2k2_expectation"];

#[derive(Debug, Error)]
pub enum ReproduceError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Exact(#[from] ExactError),
    #[error(transparent)]
    Iid(#[from] IidError),
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Distribution(#[from] DistributionError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CriterionRow {
    pub schema_version: u32,
    pub criterion: u32,
    pub name: String,
    pub metric: String,
    pub value: f64,
    pub target: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct ReproduceOptions {
    pub seed: u64,
    pub mode: ExecMode,
    /// Rerun criteria 1-10 in the other execution mode and compare bytes.
    pub check_determinism: bool,
}

impl Default for ReproduceOptions {
    fn default() -> Self {
        ReproduceOptions {
            seed: 20240501,
            mode: ExecMode::default(),
            check_determinism: true,
        }
    }
}

fn row(
    criterion: u32,
    name: &str,
    metric: &str,
    value: f64,
    target: String,
    pass: bool,
    detail: String,
) -> CriterionRow {
    CriterionRow {
        schema_version: SCHEMA_VERSION,
        criterion,
        name: name.into(),
        metric: metric.into(),
        value,
        target,
        pass,
        detail,
    }
}

fn timed<T>(label: &str, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    log::info!("{label}: {:.2?}", start.elapsed());
    out
}

/// Seeded corpus shared by criteria 3 and 4: hard FI instances for
/// `k = 1, 2, 3` followed by 20 random finite-discrete instances.
pub fn lower_bound_corpus() -> Result<Vec<(String, Instance)>, ReproduceError> {
    let mut out = Vec::new();
    for k in 1..=3 {
        out.push((format!("hard_fi:{k},0.01"), hard_fi(k, 1e-2)?));
    }
    for s in 0..20u64 {
        let k = 1 + (s % 3) as usize;
        let n = (3 + (s * 7) % 8) as usize;
        let n = n.max(k + 2).min(10);
        out.push((
            format!("random:{},{n},{k}", 1000 + s),
            random_discrete(1000 + s, n, k)?,
        ));
    }
    Ok(out)
}

/// The two finite-discrete laws used for the threshold-formula comparison.
pub fn formula_test_distributions() -> Result<Vec<(String, Distribution)>, ReproduceError> {
    Ok(vec![
        ("uniform".into(), Distribution::uniform(0.0, 1.0)?),
        (
            "discrete_a".into(),
            Distribution::discrete(&[(5.0, 0.1), (2.0, 0.35), (1.0, 0.25), (0.0, 0.3)])?,
        ),
        (
            "discrete_b".into(),
            Distribution::discrete(&[(10.0, 0.05), (3.0, 0.3), (1.0, 0.65)])?,
        ),
    ])
}

fn sim(
    inst: &Instance,
    policy: PolicySpec,
    model: InfoModel,
    order: ArrivalOrder,
    trials: u64,
    seed: u64,
    mode: ExecMode,
) -> Result<RatioEstimate, EngineError> {
    simulate(
        inst,
        &SimConfig {
            policy,
            model,
            order,
            trials,
            seed,
        },
        mode,
    )
}

fn criterion1() -> Result<CriterionRow, ReproduceError> {
    let inst = example1(0.1)?;
    let idx = ArrivalOrder::IndexOrder;
    let weak = PolicySpec::Msa {
        rank: 2,
        ties: TieRule::Weak,
    };
    let v = exact_policy_value(&inst, &weak, InfoModel::Ni, &idx)?;
    let rand = exact_policy_value(&inst, &PolicySpec::msa(2), InfoModel::Ni, &idx)?;
    let base = exact_policy_value(&inst, &PolicySpec::BaselineHalfMean, InfoModel::Ni, &idx)?;
    let pass = (v.value - 0.1981).abs() <= 1e-9
        && (v.benchmark - 1.18).abs() <= 1e-12
        && (base.value - 0.19).abs() <= 1e-9;
    Ok(row(
        1,
        "example1_exact",
        "msa2_weak_value",
        v.value,
        "0.1981 +- 1e-9; E[X_(2)] = 1.18 +- 1e-12; half-mean threshold 0.19 +- 1e-9".into(),
        pass,
        format!(
            "benchmark={}; half_mean_value={}; msa2_randomized_ties={}",
            v.benchmark, base.value, rand.value
        ),
    ))
}

fn criterion2() -> Result<CriterionRow, ReproduceError> {
    let eps = 1e-3;
    let mut pass = true;
    let mut parts = Vec::new();
    let mut worst = 0.0f64;
    for k in 1..=3usize {
        let inst = hard_fi(k, eps)?;
        let opt = optimal_value_fi(&inst, None)?;
        let formula = 1.0
            + (0..=k)
                .map(|j| (1.0 - eps).powi((k + 1 - j) as i32))
                .sum::<f64>();
        let target = 1.0 / (k + 2) as f64;
        let ok = (opt.ratio - target).abs() <= 0.01 && (opt.benchmark - formula).abs() <= 1e-9;
        pass &= ok;
        worst = worst.max((opt.ratio - target).abs());
        parts.push(format!(
            "k={k}: ratio={} benchmark={}",
            opt.ratio, opt.benchmark
        ));
    }
    Ok(row(
        2,
        "fi_upper_bound",
        "max_abs_ratio_deviation",
        worst,
        "|OPT/E - 1/(k+2)| <= 0.01 for k=1,2,3".into(),
        pass,
        parts.join("; "),
    ))
}

fn corpus_criterion(
    id: u32,
    name: &str,
    policy: PolicySpec,
    model: InfoModel,
    bound: impl Fn(usize) -> f64,
    opts: &ReproduceOptions,
) -> Result<(bool, f64, Vec<String>), ReproduceError> {
    let mut pass = true;
    let mut worst = f64::INFINITY;
    let mut parts = Vec::new();
    for (i, (label, inst)) in lower_bound_corpus()?.into_iter().enumerate() {
        let seed = opts.seed.wrapping_add(1000 * id as u64 + i as u64);
        let r = sim(
            &inst,
            policy.clone(),
            model,
            ArrivalOrder::IndexOrder,
            100_000,
            seed,
            opts.mode,
        )?;
        let b = bound(inst.k);
        let margin = (r.ratio - b) / r.se_ratio.max(1e-300);
        worst = worst.min(margin);
        let ok = r.ratio >= b - 3.0 * r.se_ratio;
        pass &= ok;
        parts.push(format!(
            "{label}: ratio={:.6} se={:.6}",
            r.ratio, r.se_ratio
        ));
    }
    log::debug!("{name}: worst margin {worst}");
    Ok((pass, worst, parts))
}

fn criterion3(opts: &ReproduceOptions) -> Result<CriterionRow, ReproduceError> {
    let (pass, worst, parts) = corpus_criterion(
        3,
        "fi",
        PolicySpec::MsaBarRand,
        InfoModel::Fi,
        |k| 1.0 / (k + 2) as f64,
        opts,
    )?;
    Ok(row(
        3,
        "fi_lower_bound",
        "min_sigma_margin",
        worst,
        "ratio >= 1/(k+2) - 3 se on 23 instances".into(),
        pass,
        parts.join("; "),
    ))
}

fn criterion4(opts: &ReproduceOptions) -> Result<CriterionRow, ReproduceError> {
    let (mut pass, worst, mut parts) = corpus_criterion(
        4,
        "ni",
        PolicySpec::MsaRand,
        InfoModel::Ni,
        |k| 1.0 / (2 * k + 2) as f64,
        opts,
    )?;
    let tight = exact_policy_value(
        &hard_ni(1, 1e-2)?,
        &PolicySpec::MsaRand,
        InfoModel::Ni,
        &ArrivalOrder::IndexOrder,
    )?;
    pass &= tight.ratio <= 0.30;
    parts.push(format!("hard_ni:1,0.01 exact ratio={}", tight.ratio));
    Ok(row(
        4,
        "ni_lower_bound",
        "min_sigma_margin",
        worst,
        "ratio >= 1/(2k+2) - 3 se on 23 instances; exact hard_ni ratio <= 0.30".into(),
        pass,
        parts.join("; "),
    ))
}

fn criterion5(opts: &ReproduceOptions) -> Result<CriterionRow, ReproduceError> {
    let r = prophet_pmf_sweep(8, opts.mode)?;
    Ok(row(
        5,
        "prophet_pmf_equivalence",
        "mismatches",
        r.mismatches as f64,
        "0 mismatches over all pairings with n <= 8".into(),
        r.mismatches == 0,
        format!("pairings={}; comparisons={}", r.pairings, r.comparisons),
    ))
}

fn criterion6(opts: &ReproduceOptions) -> Result<CriterionRow, ReproduceError> {
    let r = sweep(6, 2, &VerifyOptions::default(), opts.mode)?;
    let mut parts = vec![format!(
        "configurations={}; instances={}",
        r.configurations, r.total_instances
    )];
    for c in &r.checks {
        if c.violations > 0 || c.check.ends_with("_extended_blocking") {
            parts.push(format!(
                "{}: {} of {} violated",
                c.check, c.violations, c.instances
            ));
        }
    }
    Ok(row(
        6,
        "lemma_suite",
        "violations",
        r.total_violations as f64,
        "0 violations over all pairings with n <= 6, k <= 2".into(),
        r.passed(),
        parts.join("; "),
    ))
}

fn criterion7(opts: &ReproduceOptions) -> Result<CriterionRow, ReproduceError> {
    let best = optimize_lower_bound();
    let n = 50;
    let q = best.alpha / (n - 1) as f64;
    let inst = iid_uniform(n, 1)?;
    let r = sim(
        &inst,
        PolicySpec::Quantile(q),
        InfoModel::Ni,
        ArrivalOrder::IndexOrder,
        1_000_000,
        opts.seed.wrapping_add(7000),
        opts.mode,
    )?;
    let exact = alg_q_formula(n, q, &inst.dists[0])? / ex2_formula(n, &inst.dists[0])?;
    let pass = (best.alpha - 1.64718).abs() <= 1e-4
        && (best.bound - 0.4901).abs() <= 1e-4
        && r.ratio >= 0.4901 - 3.0 * r.se_ratio;
    Ok(row(
        7,
        "iid_lower_bound",
        "uniform50_ratio",
        r.ratio,
        "alpha* = 1.64718 +- 1e-4; bound* = 0.4901 +- 1e-4; ratio >= 0.4901 - 3 se".into(),
        pass,
        format!(
            "alpha*={}; bound*={}; se={}; formula_ratio={}",
            best.alpha, best.bound, r.se_ratio, exact
        ),
    ))
}

fn criterion8(opts: &ReproduceOptions) -> Result<CriterionRow, ReproduceError> {
    let mut pass = true;
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    let mut case = 0u64;
    for (label, d) in formula_test_distributions()? {
        for n in [3usize, 5, 10] {
            let inst = Instance::new(vec![d.clone(); n], 1)?;
            for q in [0.1, 0.3, 0.5] {
                let formula = alg_q_formula(n, q, &d)?;
                let seed = opts.seed.wrapping_add(8000 + case);
                case += 1;
                let r = sim(
                    &inst,
                    PolicySpec::Quantile(q),
                    InfoModel::Ni,
                    ArrivalOrder::IndexOrder,
                    200_000,
                    seed,
                    opts.mode,
                )?;
                let z = if r.se_alg > 0.0 {
                    (r.mean_alg - formula).abs() / r.se_alg
                } else if (r.mean_alg - formula).abs() <= 1e-12 {
                    0.0
                } else {
                    f64::INFINITY
                };
                worst = worst.max(z);
                pass &= z <= 3.0;
                parts.push(format!(
                    "{label} n={n} q={q}: formula={formula:.6} mc={:.6} z={z:.2}",
                    r.mean_alg
                ));
            }
        }
    }
    Ok(row(
        8,
        "threshold_formula",
        "max_abs_z",
        worst,
        "|MC - formula| <= 3 se for 27 cases".into(),
        pass,
        parts.join("; "),
    ))
}

fn criterion9() -> Result<CriterionRow, ReproduceError> {
    let best = optimize_upper_bound();
    let chk = finite_n_upper_check(10_000, &best)?;
    let reported = finite_n_upper_check(10_000, &UpperBoundParams::reported())?;
    let pass = (best.a - 0.5463).abs() <= 0.01
        && (best.b - 0.4537).abs() <= 0.01
        && best.ratio <= 0.547
        && chk.passes
        && reported.passes;
    Ok(row(
        9,
        "iid_upper_bound",
        "ratio",
        best.ratio,
        "a = 0.5463 +- 0.01; b = 0.4537 +- 0.01; ratio <= 0.547; finite-n grid below p + slack".into(),
        pass,
        format!(
            "a={}; b={}; beta={}; p={}; n=10000 max_ratio={} at q={}; cap={}; low_region={}<={}; reported params max_ratio={} at q={}",
            best.a,
            best.b,
            best.beta,
            best.p_value,
            chk.max_ratio,
            chk.argmax_q,
            chk.ratio_cap,
            chk.low_region_max,
            chk.low_region_cap,
            reported.max_ratio,
            reported.argmax_q
        ),
    ))
}

fn criterion10(opts: &ReproduceOptions) -> Result<CriterionRow, ReproduceError> {
    let inst = iid_uniform(20, 2)?;
    let r = sim(
        &inst,
        PolicySpec::Secretary,
        InfoModel::Ni,
        ArrivalOrder::UniformRandom,
        100_000,
        opts.seed.wrapping_add(10_000),
        opts.mode,
    )?;
    let target = (-1.0f64).exp();
    Ok(row(
        10,
        "secretary",
        "best_rate",
        r.best_rate,
        "best-survivor rate >= 1/e - 3 se".into(),
        r.best_rate >= target - 3.0 * r.se_best_rate,
        format!("se={}; ratio={}", r.se_best_rate, r.ratio),
    ))
}

fn rows_1_to_10(opts: &ReproduceOptions) -> Result<Vec<CriterionRow>, ReproduceError> {
    Ok(vec![
        timed("criterion 1", criterion1)?,
        timed("criterion 2", criterion2)?,
        timed("criterion 3", || criterion3(opts))?,
        timed("criterion 4", || criterion4(opts))?,
        timed("criterion 5", || criterion5(opts))?,
        timed("criterion 6", || criterion6(opts))?,
        timed("criterion 7", || criterion7(opts))?,
        timed("criterion 8", || criterion8(opts))?,
        timed("criterion 9", criterion9)?,
        timed("criterion 10", || criterion10(opts))?,
    ])
}

/// Render rows as CSV.
pub fn to_csv(rows: &[CriterionRow]) -> Result<Vec<u8>, ReproduceError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner()
        .map_err(|e| ReproduceError::Csv(e.into_error().into()))
}

/// Compute every criterion row.
pub fn reproduce(opts: &ReproduceOptions) -> Result<Vec<CriterionRow>, ReproduceError> {
    let mut rows = rows_1_to_10(opts)?;
    let first = to_csv(&rows)?;
    let (identical, detail) = if opts.check_determinism {
        let other = ReproduceOptions {
            mode: match opts.mode {
                ExecMode::Sequential => ExecMode::Parallel,
                ExecMode::Parallel => ExecMode::Sequential,
            },
            ..opts.clone()
        };
        let second = to_csv(&timed("determinism rerun", || rows_1_to_10(&other))?)?;
        (
            first == second,
            format!(
                "rerun in {:?} mode: {} bytes compared",
                other.mode,
                first.len()
            ),
        )
    } else {
        (true, "rerun skipped".to_string())
    };
    rows.push(row(
        11,
        "determinism",
        "identical",
        f64::from(u8::from(identical)),
        "byte-identical rows on rerun with the same seed".into(),
        identical && opts.check_determinism,
        detail,
    ));
    Ok(rows)
}

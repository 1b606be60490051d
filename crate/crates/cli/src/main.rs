use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use rpi_core::engine::{simulate, SimConfig};
use rpi_core::exact::{exact_policy_value, optimal_value_fi};
use rpi_core::exec::configure_threads;
use rpi_core::iid_analysis::{
    a_monotonicity, alg_q_formula, alg_q_level, ex2_formula, finite_n_upper_check, lower_bound,
    optimize_lower_bound, optimize_upper_bound, UpperBoundParams,
};
use rpi_core::instances::from_generator_spec;
use rpi_core::paired_oracle::{
    prophet_pmf_sweep, sweep, verify_lemmas, OracleOrder, PairedConfiguration, VerifyOptions,
};
use rpi_core::reproduce::{reproduce, to_csv, ReproduceOptions};
use rpi_core::{ArrivalOrder, Distribution, ExecMode, InfoModel, Instance, PolicySpec};

const SCHEMA_VERSION: u32 = 1;

/// Exit status for a run whose checks did not all hold.
const VERIFY_FAILED: u8 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "rpi",
    version,
    about = "Residual prophet inequality simulator and verifier"
)]
struct Cli {
    /// Worker threads (default: available parallelism)
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Run single-threaded even when built with parallel support
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write an instance from a named generator
    Generate {
        /// NAME:ARGS, e.g. example1:0.1, hard_fi:2,0.001, random:7,6,2
        #[arg(long)]
        generator: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo estimate of a policy's competitive ratio
    Simulate(RunArgs),
    /// Exact policy value by enumeration
    Exact {
        #[command(flatten)]
        run: RunArgs,
        /// Evaluate the optimal full-information policy instead of --policy
        #[arg(long)]
        optimal: bool,
    },
    /// Check the pairing lemmas exhaustively or on one configuration
    VerifyLemmas {
        #[arg(long, default_value_t = 6)]
        max_n: usize,
        #[arg(long, default_value_t = 2)]
        max_k: usize,
        /// Comma-separated arrival orders: desc, asc
        #[arg(long, default_value = "desc")]
        orders: String,
        /// Record every checked instance, not just violations
        #[arg(long)]
        full: bool,
        /// Check a single configuration given by 1-based partners, e.g. 2,1,4,3
        #[arg(long)]
        partner: Option<String>,
        /// Number of removed values for --partner
        #[arg(long, default_value_t = 1)]
        k: usize,
        /// Also compare the prophet pmf formula against enumeration up to --max-n
        #[arg(long)]
        pmf_sweep: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Lower-bound curve for single-threshold i.i.d. policies
    IidLowerBound {
        /// Evaluate the curve at this alpha as well
        #[arg(long)]
        alpha: Option<f64>,
        /// Sizes for the kernel shape check
        #[arg(long, value_delimiter = ',', default_value = "5,20,100")]
        shape_n: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Upper-bound construction for single-threshold i.i.d. policies
    IidUpperBound {
        #[arg(long, requires_all = ["b", "beta"])]
        a: Option<f64>,
        #[arg(long)]
        b: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        /// Size of the finite instance swept by threshold level
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Closed-form threshold value on an i.i.d. instance with k = 1
    IidCheck {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        q: f64,
        /// JSON distribution file
        #[arg(long)]
        dist: PathBuf,
        /// Also run this many Monte Carlo trials and compare
        #[arg(long, default_value_t = 0)]
        trials: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute the full results table
    ReproducePaper {
        #[arg(long, default_value = "paper_table.csv")]
        out: PathBuf,
        #[arg(long, default_value_t = 20240501)]
        seed: u64,
        /// Skip the second run in the other execution mode
        #[arg(long)]
        no_rerun: bool,
    },
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    /// Instance JSON file
    #[arg(long, conflicts_with = "generator")]
    instance: Option<PathBuf>,
    /// NAME:ARGS generator spec
    #[arg(long)]
    generator: Option<String>,
    /// Policy spec, e.g. msa:2, msa_bar_rand, quantile:0.1, secretary
    #[arg(long)]
    policy: Option<String>,
    /// fi or ni
    #[arg(long)]
    model: Option<String>,
    /// index, random or perm:FILE
    #[arg(long)]
    order: Option<String>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// JSON file supplying defaults for any of the flags above
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output path; `.csv` selects CSV, anything else JSON
    #[arg(long)]
    out: Option<PathBuf>,
}

/// File form of [`RunArgs`]; command-line flags take precedence.
#[derive(Deserialize, Default, Debug)]
#[serde(deny_unknown_fields)]
struct RunFile {
    instance: Option<PathBuf>,
    generator: Option<String>,
    policy: Option<String>,
    model: Option<String>,
    order: Option<String>,
    trials: Option<u64>,
    seed: Option<u64>,
}

/// Fully resolved inputs, embedded in every output.
#[derive(Serialize, Debug)]
struct Resolved {
    source: String,
    instance: Instance,
    policy: Option<PolicySpec>,
    model: InfoModel,
    order: ArrivalOrder,
    trials: u64,
    seed: u64,
}

impl RunArgs {
    fn resolve(&self, needs_policy: bool) -> Result<Resolved> {
        let file: RunFile = match &self.config {
            Some(p) => serde_json::from_str(&read(p)?)
                .with_context(|| format!("parsing config {}", p.display()))?,
            None => RunFile::default(),
        };
        let (instance_path, generator) = if self.instance.is_some() || self.generator.is_some() {
            (self.instance.clone(), self.generator.clone())
        } else {
            (file.instance, file.generator)
        };
        let (source, instance) = match (instance_path, generator) {
            (Some(_), Some(_)) => bail!("give either an instance file or a generator, not both"),
            (Some(p), None) => (p.display().to_string(), load_instance(&p)?),
            (None, Some(g)) => (g.clone(), from_generator_spec(&g)?),
            (None, None) => {
                bail!("an instance is required (--instance FILE or --generator NAME:ARGS)")
            }
        };
        let policy = match self.policy.clone().or(file.policy) {
            Some(s) => Some(s.parse::<PolicySpec>()?),
            None if needs_policy => bail!("--policy is required"),
            None => None,
        };
        let model = match self.model.clone().or(file.model) {
            Some(s) => s.parse::<InfoModel>().map_err(|e| anyhow!(e))?,
            None => InfoModel::Ni,
        };
        let order = parse_order(
            self.order
                .clone()
                .or(file.order)
                .as_deref()
                .unwrap_or("index"),
        )?;
        Ok(Resolved {
            source,
            instance,
            policy,
            model,
            order,
            trials: self.trials.or(file.trials).unwrap_or(100_000),
            seed: self.seed.or(file.seed).unwrap_or(1),
        })
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// Accepts either a bare instance or the wrapper written by `generate`.
fn load_instance(path: &Path) -> Result<Instance> {
    let v: Value = serde_json::from_str(&read(path)?)
        .with_context(|| format!("parsing {}", path.display()))?;
    let body = v.get("instance").cloned().unwrap_or(v);
    serde_json::from_value(body).with_context(|| format!("invalid instance in {}", path.display()))
}

fn parse_order(s: &str) -> Result<ArrivalOrder> {
    match s {
        "index" => Ok(ArrivalOrder::IndexOrder),
        "random" => Ok(ArrivalOrder::UniformRandom),
        _ => {
            let file = s.strip_prefix("perm:").ok_or_else(|| {
                anyhow!("unknown order '{s}' (expected index, random or perm:FILE)")
            })?;
            let text = read(Path::new(file))?;
            let perm = text
                .split(|c: char| c.is_whitespace() || c == ',' || c == '[' || c == ']')
                .filter(|t| !t.is_empty())
                .map(|t| match t.parse::<usize>() {
                    Ok(i) if i >= 1 => Ok(i - 1),
                    _ => Err(anyhow!(
                        "bad permutation entry '{t}' in {file} (1-based indices)"
                    )),
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ArrivalOrder::FixedPermutation(perm))
        }
    }
}

fn write_json(out: Option<&Path>, value: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn is_csv(out: Option<&Path>) -> bool {
    out.and_then(|p| p.extension())
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn exec_mode(cli: &Cli) -> ExecMode {
    if cli.sequential {
        ExecMode::Sequential
    } else {
        ExecMode::default()
    }
}

fn cmd_simulate(run: &RunArgs, mode: ExecMode) -> Result<u8> {
    let r = run.resolve(true)?;
    let policy = r.policy.clone().expect("required");
    let cfg = SimConfig {
        policy: policy.clone(),
        model: r.model,
        order: r.order.clone(),
        trials: r.trials,
        seed: r.seed,
    };
    let est = simulate(&r.instance, &cfg, mode)?;
    log::info!("ratio {:.6} +- {:.6}", est.ratio, est.se_ratio);
    let out = run.out.as_deref();
    if is_csv(out) {
        let header = [
            "schema_version",
            "source",
            "instance",
            "policy",
            "model",
            "order",
            "trials",
            "seed",
            "mean_alg",
            "se_alg",
            "mean_benchmark",
            "se_benchmark",
            "ratio",
            "se_ratio",
            "ratio_ci_low",
            "ratio_ci_high",
            "best_rate",
        ];
        let row = vec![
            SCHEMA_VERSION.to_string(),
            r.source.clone(),
            serde_json::to_string(&r.instance)?,
            policy.to_string(),
            r.model.to_string(),
            r.order.label(),
            r.trials.to_string(),
            r.seed.to_string(),
            est.mean_alg.to_string(),
            est.se_alg.to_string(),
            est.mean_benchmark.to_string(),
            est.se_benchmark.to_string(),
            est.ratio.to_string(),
            est.se_ratio.to_string(),
            est.ratio_ci_low.to_string(),
            est.ratio_ci_high.to_string(),
            est.best_rate.to_string(),
        ];
        write_csv(out.expect("csv path"), &header, &[row])?;
    } else {
        write_json(
            out,
            &json!({"schema_version": SCHEMA_VERSION, "config": r, "result": est}),
        )?;
    }
    Ok(0)
}

fn cmd_exact(run: &RunArgs, optimal: bool) -> Result<u8> {
    let r = run.resolve(!optimal)?;
    let value = if optimal {
        if r.model != InfoModel::Fi {
            log::warn!("the optimal policy is evaluated with full information");
        }
        let order = match &r.order {
            ArrivalOrder::IndexOrder => None,
            ArrivalOrder::FixedPermutation(p) => Some(p.as_slice()),
            ArrivalOrder::UniformRandom => bail!("the optimal policy needs a fixed arrival order"),
        };
        optimal_value_fi(&r.instance, order)?
    } else {
        exact_policy_value(
            &r.instance,
            r.policy.as_ref().expect("required"),
            r.model,
            &r.order,
        )?
    };
    write_json(
        run.out.as_deref(),
        &json!({"schema_version": SCHEMA_VERSION, "config": r, "optimal": optimal, "result": value}),
    )?;
    Ok(0)
}

fn parse_orders(s: &str) -> Result<Vec<OracleOrder>> {
    s.split(',')
        .map(|t| match t.trim() {
            "desc" | "descending" | "index" => Ok(OracleOrder::Descending),
            "asc" | "ascending" => Ok(OracleOrder::Ascending),
            other => Err(anyhow!(
                "unknown oracle order '{other}' (expected desc or asc)"
            )),
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn cmd_verify(
    max_n: usize,
    max_k: usize,
    orders: &str,
    full: bool,
    partner: Option<&str>,
    k: usize,
    pmf_sweep: bool,
    out: Option<&Path>,
    mode: ExecMode,
) -> Result<u8> {
    let opts = VerifyOptions {
        orders: parse_orders(orders)?,
        record_instances: full,
        ..VerifyOptions::default()
    };
    let report = match partner {
        Some(p) => {
            let partner = p
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<usize>()
                        .map_err(|_| anyhow!("bad partner entry '{t}'"))
                })
                .collect::<Result<Vec<_>>>()?;
            verify_lemmas(&PairedConfiguration::new(partner, k)?, &opts)?
        }
        None => sweep(max_n, max_k, &opts, mode)?,
    };
    let pmf = if pmf_sweep {
        Some(prophet_pmf_sweep(max_n, mode)?)
    } else {
        None
    };
    let ok = report.passed() && pmf.as_ref().is_none_or(|r| r.mismatches == 0);
    for c in report.checks.iter().filter(|c| c.violations > 0) {
        log::warn!(
            "{}: {} of {} instances violated",
            c.check,
            c.violations,
            c.instances
        );
    }
    write_json(
        out,
        &json!({
            "schema_version": SCHEMA_VERSION,
            "config": {"max_n": max_n, "max_k": max_k, "orders": opts.orders, "full": full, "partner": partner, "k": k},
            "passed": ok,
            "report": report,
            "pmf_sweep": pmf,
        }),
    )?;
    Ok(if ok { 0 } else { VERIFY_FAILED })
}

fn cmd_iid_lower(alpha: Option<f64>, shape_n: &[usize], out: Option<&Path>) -> Result<u8> {
    let best = optimize_lower_bound();
    let at = alpha.map(lower_bound).transpose()?;
    let mut shapes = Vec::new();
    for &n in shape_n {
        for a in [0.25, 0.5, 1.0, best.alpha, 2.0] {
            if a / (n as f64 - 1.0) <= 1.0 {
                shapes.push(a_monotonicity(n, a, 1000)?);
            }
        }
    }
    let ok = shapes
        .iter()
        .all(|s| s.nondecreasing_below_q && s.nonincreasing_above_q);
    write_json(
        out,
        &json!({
            "schema_version": SCHEMA_VERSION,
            "config": {"alpha": alpha, "shape_n": shape_n},
            "optimum": best,
            "at_alpha": at,
            "kernel_shape": shapes,
            "passed": ok,
        }),
    )?;
    Ok(if ok { 0 } else { VERIFY_FAILED })
}

fn cmd_iid_upper(
    a: Option<f64>,
    b: Option<f64>,
    beta: Option<f64>,
    n: usize,
    out: Option<&Path>,
) -> Result<u8> {
    let params = match (a, b, beta) {
        (Some(a), Some(b), Some(beta)) => UpperBoundParams::evaluate(a, b, beta)?,
        _ => optimize_upper_bound(),
    };
    let check = finite_n_upper_check(n, &params)?;
    write_json(
        out,
        &json!({
            "schema_version": SCHEMA_VERSION,
            "config": {"a": a, "b": b, "beta": beta, "n": n},
            "params": params,
            "finite_n": check,
            "passed": check.passes,
        }),
    )?;
    Ok(if check.passes { 0 } else { VERIFY_FAILED })
}

fn cmd_iid_check(
    n: usize,
    q: f64,
    dist_path: &Path,
    trials: u64,
    seed: u64,
    out: Option<&Path>,
    mode: ExecMode,
) -> Result<u8> {
    let dist: Distribution = serde_json::from_str(&read(dist_path)?)
        .with_context(|| format!("invalid distribution in {}", dist_path.display()))?;
    let alg = alg_q_formula(n, q, &dist)?;
    let level = alg_q_level(n, q, &dist)?;
    let ex2 = ex2_formula(n, &dist)?;
    let mut result = json!({"alg_q": alg, "alg_q_level": level, "ex2": ex2, "ratio": alg / ex2});
    let mut ok = true;
    if trials > 0 {
        let inst = Instance::new(vec![dist.clone(); n], 1)?;
        let cfg = SimConfig {
            policy: PolicySpec::Quantile(q),
            model: InfoModel::Ni,
            order: ArrivalOrder::IndexOrder,
            trials,
            seed,
        };
        let est = simulate(&inst, &cfg, mode)?;
        let z = (est.mean_alg - alg) / est.se_alg;
        ok = z.abs() <= 3.0 || (est.se_alg == 0.0 && (est.mean_alg - alg).abs() <= 1e-12);
        result["monte_carlo"] = json!({"estimate": est, "z": z, "within_3_se": ok});
    }
    write_json(
        out,
        &json!({
            "schema_version": SCHEMA_VERSION,
            "config": {"n": n, "q": q, "dist": dist, "trials": trials, "seed": seed},
            "result": result,
        }),
    )?;
    Ok(if ok { 0 } else { VERIFY_FAILED })
}

fn cmd_reproduce(out: &Path, seed: u64, no_rerun: bool, mode: ExecMode) -> Result<u8> {
    let rows = reproduce(&ReproduceOptions {
        seed,
        mode,
        check_determinism: !no_rerun,
    })?;
    fs::write(out, to_csv(&rows)?).with_context(|| format!("writing {}", out.display()))?;
    for r in &rows {
        eprintln!(
            "criterion {:>2} {:<24} {}",
            r.criterion,
            r.name,
            if r.pass { "PASS" } else { "FAIL" }
        );
    }
    Ok(if rows.iter().all(|r| r.pass) {
        0
    } else {
        VERIFY_FAILED
    })
}

fn run(cli: Cli) -> Result<u8> {
    if let Some(t) = cli.threads {
        if t == 0 {
            bail!("--threads must be positive");
        }
        if !configure_threads(t) {
            log::warn!("thread pool already initialised; --threads ignored");
        }
    }
    let mode = exec_mode(&cli);
    match &cli.command {
        Command::Generate { generator, out } => {
            let inst = from_generator_spec(generator)?;
            write_json(
                out.as_deref(),
                &json!({"schema_version": SCHEMA_VERSION, "generator": generator, "instance": inst}),
            )?;
            Ok(0)
        }
        Command::Simulate(run) => cmd_simulate(run, mode),
        Command::Exact { run, optimal } => cmd_exact(run, *optimal),
        Command::VerifyLemmas {
            max_n,
            max_k,
            orders,
            full,
            partner,
            k,
            pmf_sweep,
            out,
        } => cmd_verify(
            *max_n,
            *max_k,
            orders,
            *full,
            partner.as_deref(),
            *k,
            *pmf_sweep,
            out.as_deref(),
            mode,
        ),
        Command::IidLowerBound {
            alpha,
            shape_n,
            out,
        } => cmd_iid_lower(*alpha, shape_n, out.as_deref()),
        Command::IidUpperBound { a, b, beta, n, out } => {
            cmd_iid_upper(*a, *b, *beta, *n, out.as_deref())
        }
        Command::IidCheck {
            n,
            q,
            dist,
            trials,
            seed,
            out,
        } => cmd_iid_check(*n, *q, dist, *trials, *seed, out.as_deref(), mode),
        Command::ReproducePaper {
            out,
            seed,
            no_rerun,
        } => cmd_reproduce(out, *seed, *no_rerun, mode),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RPI_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

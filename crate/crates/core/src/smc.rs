//! Statistical model checking: many independent runs, a probability
//! estimate with an exact confidence interval, and parameter sweeps.
//!
//! Runs are embarrassingly parallel. Per-run seeds derive from the base seed
//! and the run index alone, and results merge by index, so the outcome is
//! byte-identical for any worker count.

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::engine::{init_run, Sim, Step, TerminalReason};
use crate::monitor::{MonitorError, MtlFormula, WatchMonitor};
use crate::rng::CounterRng;
use crate::script::Value;
use crate::stats::{clopper_pearson, okamoto_runs};
use crate::text::{Deployment, ModelDocument};
use crate::weave::{instantiate, Horizon, InstantiateError, Network};

/// How many runs to execute.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RunCount {
    Fixed(u64),
    /// Okamoto bound: enough runs that P(|p_hat - p| > eps) <= delta.
    Okamoto { eps: f64, delta: f64 },
}

/// What to do when a run aborts on a script fault.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FaultPolicy {
    /// Count the run as a violation unless the verdict was already fixed.
    #[default]
    CountAsViolation,
    /// Abort the whole estimation.
    Abort,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmcConfig {
    pub runs: RunCount,
    pub confidence: f64,
    pub base_seed: u64,
    /// Worker threads; 0 picks the available parallelism.
    pub workers: usize,
    /// Overrides the deployment horizon when set.
    pub horizon: Option<Horizon>,
    pub fault_policy: FaultPolicy,
}

impl SmcConfig {
    pub fn fixed(runs: u64, seed: u64) -> Self {
        SmcConfig {
            runs: RunCount::Fixed(runs),
            confidence: 0.95,
            base_seed: seed,
            workers: 0,
            horizon: None,
            fault_policy: FaultPolicy::default(),
        }
    }

    pub fn run_count(&self) -> u64 {
        match self.runs {
            RunCount::Fixed(n) => n.max(1),
            RunCount::Okamoto { eps, delta } => okamoto_runs(eps, delta),
        }
    }
}

/// Estimate of P(formula) with its exact confidence interval.
#[derive(Debug, Clone, PartialEq)]
pub struct SmcResult {
    pub successes: u64,
    pub runs: u64,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub confidence: f64,
    /// Mean model time at which satisfying runs fixed the verdict.
    pub mean_sat_time: Option<f64>,
    pub fault_runs: u64,
    pub deadlock_runs: u64,
    pub wall_ms: u64,
}

impl SmcResult {
    pub fn csv_header() -> &'static str {
        "param,k,N,p_hat,ci_lo,ci_hi,mean_sat_time,wall_ms"
    }

    /// One CSV row; `stable` zeroes the wall-clock column so reruns compare
    /// byte-for-byte.
    pub fn csv_row(&self, param: &str, stable: bool) -> String {
        let sat = match self.mean_sat_time {
            Some(t) => format!("{t:.4}"),
            None => String::new(),
        };
        let wall = if stable { 0 } else { self.wall_ms };
        format!(
            "{param},{},{},{:.6},{:.6},{:.6},{sat},{wall}",
            self.successes, self.runs, self.p_hat, self.ci_lo, self.ci_hi
        )
    }
}

#[derive(Debug, Error)]
pub enum SmcError {
    #[error(transparent)]
    Instantiate(#[from] InstantiateError),
    #[error(transparent)]
    Monitor(#[from] MonitorError),
    #[error("run {run} (seed {seed}) faulted: {message}")]
    RunFault { run: u64, seed: u64, message: String },
    #[error("sweep parameter `{0}` does not address an instance count or a numeric constant/global")]
    Unaddressable(String),
    #[error("sweep needs at least one parameter value")]
    EmptySweep,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct RunOutcome {
    verdict: bool,
    sat_time: Option<f64>,
    faulted: bool,
    deadlocked: bool,
}

/// Seed for one run, derived from the base seed and run index only.
pub fn run_seed(base_seed: u64, run_index: u64) -> u64 {
    CounterRng::from_parts(base_seed, &[run_index]).next_u64()
}

fn one_run(
    sim: &Arc<Sim>,
    formula: &MtlFormula,
    seed: u64,
    horizon: Horizon,
    fault_policy: FaultPolicy,
) -> Result<RunOutcome, String> {
    let mut monitor =
        WatchMonitor::new(formula, &sim.network).expect("formula resolved before running");
    let mut rs = init_run(sim, seed);
    rs.set_horizon(horizon);
    monitor.observe(&rs);

    let mut early = monitor.verdict();
    let terminal = loop {
        if early.is_some() {
            break None;
        }
        match rs.step() {
            Step::Event(_) => {
                early = monitor.observe(&rs);
            }
            Step::Done(reason) => break Some(reason),
        }
    };

    let (faulted, deadlocked, fault_message) = match &terminal {
        Some(TerminalReason::Fault { message, .. }) => (true, false, Some(message.clone())),
        Some(TerminalReason::Deadlock { .. }) => (false, true, None),
        _ => (false, false, None),
    };

    let verdict = match early {
        Some(v) => v,
        None => {
            let strong = monitor.finish();
            if faulted {
                match fault_policy {
                    FaultPolicy::CountAsViolation => false,
                    FaultPolicy::Abort => {
                        return Err(fault_message.unwrap_or_else(|| "script fault".into()))
                    }
                }
            } else {
                strong
            }
        }
    };

    Ok(RunOutcome {
        verdict,
        sat_time: if verdict { monitor.satisfaction_time() } else { None },
        faulted,
        deadlocked,
    })
}

/// Runs N independent simulations of the network and estimates P(formula).
pub fn estimate_network(
    network: Arc<Network>,
    formula: &MtlFormula,
    cfg: &SmcConfig,
) -> Result<SmcResult, SmcError> {
    // Resolve propositions up front so errors surface before any run.
    WatchMonitor::new(formula, &network)?;

    let started = Instant::now();
    let n = cfg.run_count();
    let horizon = cfg.horizon.unwrap_or(network.horizon);
    let sim = Sim::new(network);

    let workers = if cfg.workers == 0 {
        std::thread::available_parallelism().map(|p| p.get()).unwrap_or(1)
    } else {
        cfg.workers
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool");

    let outcomes: Vec<Result<RunOutcome, (u64, u64, String)>> = pool.install(|| {
        (0..n)
            .into_par_iter()
            .map(|run_idx| {
                let seed = run_seed(cfg.base_seed, run_idx);
                one_run(&sim, formula, seed, horizon, cfg.fault_policy)
                    .map_err(|m| (run_idx, seed, m))
            })
            .collect()
    });

    // Merge strictly in run order so the result is schedule-independent.
    let mut successes = 0u64;
    let mut fault_runs = 0u64;
    let mut deadlock_runs = 0u64;
    let mut sat_sum = 0.0;
    let mut sat_count = 0u64;
    for outcome in outcomes {
        let o = match outcome {
            Ok(o) => o,
            Err((run, seed, message)) => return Err(SmcError::RunFault { run, seed, message }),
        };
        if o.verdict {
            successes += 1;
            if let Some(t) = o.sat_time {
                sat_sum += t;
                sat_count += 1;
            }
        }
        fault_runs += o.faulted as u64;
        deadlock_runs += o.deadlocked as u64;
    }

    let (ci_lo, ci_hi) = clopper_pearson(successes, n, cfg.confidence);
    Ok(SmcResult {
        successes,
        runs: n,
        p_hat: successes as f64 / n as f64,
        ci_lo,
        ci_hi,
        confidence: cfg.confidence,
        mean_sat_time: if sat_count > 0 { Some(sat_sum / sat_count as f64) } else { None },
        fault_runs,
        deadlock_runs,
        wall_ms: started.elapsed().as_millis() as u64,
    })
}

/// Instantiates the deployment and estimates P(formula).
pub fn estimate(
    doc: &ModelDocument,
    deployment: &Deployment,
    formula: &MtlFormula,
    cfg: &SmcConfig,
) -> Result<SmcResult, SmcError> {
    let network = Arc::new(instantiate(doc, deployment)?);
    estimate_network(network, formula, cfg)
}

// --- parameter sweeps -----------------------------------------------------------

/// What a sweep varies.
#[derive(Debug, Clone, PartialEq)]
pub enum SweepParam {
    /// Instance count of one agent class in the deployment.
    InstanceCount(String),
    /// A numeric named constant or global initial value.
    GlobalValue(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<f64>,
    pub cfg: SmcConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub result: SmcResult,
}

/// Renders a sweep value the way it appears in the CSV `param` column.
pub fn sweep_value_label(value: f64) -> String {
    if value == value.trunc() && value.abs() < 1e15 {
        format!("{}", value as i64)
    } else {
        format!("{value}")
    }
}

fn apply_param(
    doc: &ModelDocument,
    deployment: &Deployment,
    param: &SweepParam,
    value: f64,
) -> Result<(ModelDocument, Deployment), SmcError> {
    match param {
        SweepParam::InstanceCount(class) => {
            let mut dep = deployment.clone();
            let groups: Vec<&mut crate::text::InstanceGroup> =
                dep.groups.iter_mut().filter(|g| &g.class == class).collect();
            if groups.len() != 1 {
                return Err(SmcError::Unaddressable(class.clone()));
            }
            let count = value.round();
            if count < 1.0 || count > u32::MAX as f64 {
                return Err(SmcError::Unaddressable(format!("{class}={value}")));
            }
            for g in groups {
                g.count = count as u32;
            }
            Ok((doc.clone(), dep))
        }
        SweepParam::GlobalValue(name) => {
            if let Some(pos) = doc.consts.iter().position(|c| &c.name == name) {
                let mut doc = doc.clone();
                doc.consts[pos].value = numeric_like(&doc.consts[pos].value, value);
                return Ok((doc, deployment.clone()));
            }
            if let Some(decl) = doc.globals.iter().find(|g| &g.name == name) {
                match decl.init {
                    Value::Int(_) | Value::Real(_) => {
                        let mut dep = deployment.clone();
                        dep.global_overrides.retain(|(n, _)| n != name);
                        dep.global_overrides.push((name.clone(), numeric_like(&decl.init, value)));
                        return Ok((doc.clone(), dep));
                    }
                    _ => return Err(SmcError::Unaddressable(name.clone())),
                }
            }
            Err(SmcError::Unaddressable(name.clone()))
        }
    }
}

fn numeric_like(template: &Value, value: f64) -> Value {
    match template {
        Value::Int(_) => Value::Int(value.round() as i64),
        _ => Value::Real(value),
    }
}

/// Estimates P(formula) at every grid point. Each point uses the same base
/// seed, so a single-point sweep equals a plain estimate.
pub fn sweep(
    doc: &ModelDocument,
    deployment: &Deployment,
    formula: &MtlFormula,
    spec: &SweepSpec,
) -> Result<Vec<SweepRow>, SmcError> {
    if spec.values.is_empty() {
        return Err(SmcError::EmptySweep);
    }
    let mut rows = Vec::with_capacity(spec.values.len());
    for &value in &spec.values {
        let (point_doc, point_dep) = apply_param(doc, deployment, &spec.param, value)?;
        let result = estimate(&point_doc, &point_dep, formula, &spec.cfg)?;
        rows.push(SweepRow { value, result });
    }
    Ok(rows)
}

/// Sweep over externally generated scenario points (for parameters that
/// require regenerating the model, like initial-distance buckets).
pub fn sweep_generated(
    points: &[(f64, ModelDocument, Deployment)],
    formula: &MtlFormula,
    cfg: &SmcConfig,
) -> Result<Vec<SweepRow>, SmcError> {
    if points.is_empty() {
        return Err(SmcError::EmptySweep);
    }
    let mut rows = Vec::with_capacity(points.len());
    for (value, doc, dep) in points {
        let result = estimate(doc, dep, formula, cfg)?;
        rows.push(SweepRow { value: *value, result });
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow], stable: bool) -> String {
    let mut out = String::from(SmcResult::csv_header());
    out.push('\n');
    for row in rows {
        out.push_str(&row.result.csv_row(&sweep_value_label(row.value), stable));
        out.push('\n');
    }
    out
}

/// Empirical interval coverage on a synthetic Bernoulli stream: the fraction
/// of repetitions whose interval contains `p_true`.
pub fn coverage_selftest(
    p_true: f64,
    runs_per_rep: u64,
    repetitions: u64,
    confidence: f64,
    seed: u64,
) -> f64 {
    assert!((0.0..=1.0).contains(&p_true));
    assert!(runs_per_rep > 0 && repetitions > 0);
    let mut covered = 0u64;
    for rep in 0..repetitions {
        let mut rng = CounterRng::from_parts(seed, &[rep]);
        let mut k = 0u64;
        for _ in 0..runs_per_rep {
            if rng.next_f64() < p_true {
                k += 1;
            }
        }
        let (lo, hi) = clopper_pearson(k, runs_per_rep, confidence);
        if lo <= p_true && p_true <= hi {
            covered += 1;
        }
    }
    covered as f64 / repetitions as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::{parse_deployment, parse_model, parse_property};

    fn bernoulli(p: f64) -> (ModelDocument, Deployment) {
        let model = format!(
            "agentclass B {{ spatial {{
                state S delay det(1.0)
                state goal delay det(1.0)
                state sink delay det(1.0)
                on S -> goal prob {p}
                on S -> sink prob {q}
                on goal -> goal
                on sink -> sink
            }} }}",
            q = 1.0 - p,
        );
        let doc = parse_model(&model).unwrap();
        let dep = parse_deployment(
            "horizon_time = 3.0\nproperty = \"F B0.goal\"\n[[instances]]\nclass = \"B\"\ncount = 1\ninitial = \"S\"\n",
        )
        .unwrap();
        (doc, dep)
    }

    #[test]
    fn bernoulli_estimate_is_close_and_covered() {
        let (doc, dep) = bernoulli(0.3);
        let formula = parse_property("F B0.goal").unwrap();
        let cfg = SmcConfig::fixed(10_000, 42);
        let result = estimate(&doc, &dep, &formula, &cfg).unwrap();
        assert_eq!(result.runs, 10_000);
        assert!((result.p_hat - 0.3).abs() < 0.015, "p_hat {}", result.p_hat);
        assert!(result.ci_lo <= result.p_hat && result.p_hat <= result.ci_hi);
        assert!(result.fault_runs == 0);
    }

    #[test]
    fn tautology_scores_every_run() {
        let (doc, dep) = bernoulli(0.5);
        let formula = parse_property("G true").unwrap();
        let cfg = SmcConfig::fixed(200, 7);
        let result = estimate(&doc, &dep, &formula, &cfg).unwrap();
        assert_eq!(result.successes, 200);
        assert_eq!(result.p_hat, 1.0);
        assert_eq!(result.ci_hi, 1.0);
        assert!(result.ci_lo < 1.0);
    }

    #[test]
    fn interval_width_shrinks_with_the_run_count() {
        let (doc, dep) = bernoulli(0.3);
        let formula = parse_property("F B0.goal").unwrap();
        let small = estimate(&doc, &dep, &formula, &SmcConfig::fixed(100, 1)).unwrap();
        let large = estimate(&doc, &dep, &formula, &SmcConfig::fixed(10_000, 1)).unwrap();
        let width = |r: &SmcResult| r.ci_hi - r.ci_lo;
        assert!(
            width(&large) < width(&small) / 5.0,
            "widths {} vs {}",
            width(&large),
            width(&small)
        );
    }

    #[test]
    fn results_do_not_depend_on_worker_count() {
        let (doc, dep) = bernoulli(0.3);
        let formula = parse_property("F B0.goal").unwrap();
        let mut one = SmcConfig::fixed(2000, 99);
        one.workers = 1;
        let mut four = SmcConfig::fixed(2000, 99);
        four.workers = 4;
        let a = estimate(&doc, &dep, &formula, &one).unwrap();
        let b = estimate(&doc, &dep, &formula, &four).unwrap();
        assert_eq!(a.successes, b.successes);
        assert_eq!(a.mean_sat_time, b.mean_sat_time);
        assert_eq!(a.csv_row("x", true), b.csv_row("x", true));
    }

    #[test]
    fn okamoto_bound_holds_empirically() {
        let (doc, dep) = bernoulli(0.3);
        let formula = parse_property("F B0.goal").unwrap();
        let (eps, delta) = (0.05, 0.1);
        let mut within = 0;
        for rep in 0..100u64 {
            let cfg = SmcConfig {
                runs: RunCount::Okamoto { eps, delta },
                confidence: 0.95,
                base_seed: 1000 + rep,
                workers: 0,
                horizon: None,
                fault_policy: FaultPolicy::default(),
            };
            let r = estimate(&doc, &dep, &formula, &cfg).unwrap();
            assert_eq!(r.runs, crate::stats::okamoto_runs(eps, delta));
            if (r.p_hat - 0.3).abs() <= eps {
                within += 1;
            }
        }
        assert!(within >= 90, "only {within}/100 within eps");
    }

    #[test]
    fn fault_policy_counts_faults_as_violations_by_default() {
        let model = "globals { arr = [1]; }
            agentclass B { spatial {
                state S delay det(1.0)
                state goal delay det(1.0)
                on S -> goal prob 0.5
                on S -> S prob 0.5 do { arr[9] = 0; }
                on goal -> goal
            } }";
        let doc = parse_model(model).unwrap();
        let dep = parse_deployment(
            "horizon_time = 0.5\n[[instances]]\nclass = \"B\"\ncount = 1\ninitial = \"S\"\n",
        )
        .unwrap();
        let formula = parse_property("G true").unwrap();
        let mut cfg = SmcConfig::fixed(50, 3);
        cfg.horizon = Some(crate::weave::Horizon { time: 10.0, max_events: 100 });
        let r = estimate(&doc, &dep, &formula, &cfg).unwrap();
        assert!(r.fault_runs > 0);
        assert_eq!(r.successes + r.fault_runs, r.runs);

        cfg.fault_policy = FaultPolicy::Abort;
        assert!(matches!(
            estimate(&doc, &dep, &formula, &cfg),
            Err(SmcError::RunFault { .. })
        ));
    }

    #[test]
    fn single_point_sweep_equals_estimate() {
        let (doc, dep) = bernoulli(0.3);
        let formula = parse_property("F B0.goal").unwrap();
        let cfg = SmcConfig::fixed(500, 5);
        let direct = estimate(&doc, &dep, &formula, &cfg).unwrap();
        let spec = SweepSpec {
            param: SweepParam::InstanceCount("B".into()),
            values: vec![1.0],
            cfg: cfg.clone(),
        };
        let rows = sweep(&doc, &dep, &formula, &spec).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].result.successes, direct.successes);
        assert_eq!(rows[0].result.mean_sat_time, direct.mean_sat_time);
    }

    #[test]
    fn sweeps_reject_unaddressable_parameters() {
        let (doc, dep) = bernoulli(0.3);
        let formula = parse_property("F B0.goal").unwrap();
        let spec = SweepSpec {
            param: SweepParam::GlobalValue("nothing".into()),
            values: vec![1.0],
            cfg: SmcConfig::fixed(10, 1),
        };
        assert!(matches!(
            sweep(&doc, &dep, &formula, &spec),
            Err(SmcError::Unaddressable(_))
        ));
        let empty = SweepSpec {
            param: SweepParam::InstanceCount("B".into()),
            values: vec![],
            cfg: SmcConfig::fixed(10, 1),
        };
        assert!(matches!(sweep(&doc, &dep, &formula, &empty), Err(SmcError::EmptySweep)));
    }

    #[test]
    fn coverage_selftest_meets_the_nominal_level() {
        let mid = coverage_selftest(0.5, 1000, 200, 0.95, 11);
        assert!(mid >= 0.93, "coverage {mid}");
        let rare = coverage_selftest(0.05, 2000, 200, 0.95, 12);
        assert!(rare >= 0.93, "coverage {rare}");
        let certain = coverage_selftest(1.0, 500, 50, 0.95, 13);
        assert_eq!(certain, 1.0);
    }

    #[test]
    fn mean_satisfaction_time_averages_only_satisfying_runs() {
        let (doc, dep) = bernoulli(0.4);
        let formula = parse_property("F B0.goal").unwrap();
        let r = estimate(&doc, &dep, &formula, &SmcConfig::fixed(300, 21)).unwrap();
        // The branch fires at t=1 exactly, so satisfying runs fix the
        // verdict at 1.0.
        assert_eq!(r.mean_sat_time, Some(1.0));
    }
}

//! Instance batteries across penalty methods, the feasibility / optimality /
//! gap metrics, and report persistence.

use std::fs;
use std::io::Write;
use std::path::Path;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ising::{build, to_f64, upper_bound_lambda, PenaltySpec};
use crate::model::{generate_instance, rational_string, Bitstring, MkpInstance, Rational, Solution};
use crate::vqe::{run_trials, OptimizerConfig};

/// `1 - c_vqe / c_opt`, both in the original (maximization) sense.
pub fn opt_gap(c_vqe: Rational, c_opt: Rational) -> Result<f64> {
    if c_opt == Rational::from_integer(0) {
        return Err(Error::ZeroOptimum);
    }
    Ok(to_f64(Rational::from_integer(1) - c_vqe / c_opt))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedInstance {
    pub id: String,
    pub instance: MkpInstance,
}

/// `count` instances per `(K, L)` shape; instance `k` overall uses seed `seed + k`.
pub fn generate_battery(shapes: &[(usize, usize)], count: usize, seed: u64) -> Result<Vec<NamedInstance>> {
    let mut out = Vec::with_capacity(shapes.len() * count);
    for &(k, l) in shapes {
        for _ in 0..count {
            let s = seed + out.len() as u64;
            out.push(NamedInstance {
                id: format!("k{k}-l{l}-s{s}"),
                instance: generate_instance(k, l, s)?,
            });
        }
    }
    Ok(out)
}

/// How the leading penalty weight is chosen per instance.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightRule {
    /// Use the weight stored in the penalty spec.
    #[default]
    Fixed,
    /// `K * sum_j v_j + 1`.
    UpperBoundPlusOne,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub name: String,
    pub penalty: PenaltySpec,
    #[serde(default)]
    pub weight_rule: WeightRule,
}

impl MethodSpec {
    pub fn new(name: impl Into<String>, penalty: PenaltySpec) -> Self {
        Self {
            name: name.into(),
            penalty,
            weight_rule: WeightRule::Fixed,
        }
    }

    pub fn with_rule(mut self, rule: WeightRule) -> Self {
        self.weight_rule = rule;
        self
    }

    /// Built-in methods: `step` (lambda 50), `exp` (1, 4), `unbalanced`
    /// (1, 0.5) and `slack` (lambda = K * sum(v) + 1).
    pub fn preset(name: &str) -> Result<Self> {
        Ok(match name {
            "step" => Self::new(name, PenaltySpec::step(50.0)),
            "exp" | "exponential" => Self::new(name, PenaltySpec::exponential(1.0, 4.0)),
            "unbalanced" | "quadratic" => Self::new(name, PenaltySpec::unbalanced(DEFAULT_UNBALANCED.0, DEFAULT_UNBALANCED.1)),
            "slack" => Self::new(name, PenaltySpec::slack(1.0)).with_rule(WeightRule::UpperBoundPlusOne),
            other => return Err(Error::InvalidArgument(format!("unknown method `{other}`"))),
        })
    }

    pub fn penalty_for(&self, inst: &MkpInstance) -> PenaltySpec {
        match self.weight_rule {
            WeightRule::Fixed => self.penalty.clone(),
            WeightRule::UpperBoundPlusOne => self
                .penalty
                .with_leading_weight(to_f64(upper_bound_lambda(inst)) + 1.0),
        }
    }
}

/// Unbalanced weights used by the `unbalanced` preset.
pub const DEFAULT_UNBALANCED: (f64, f64) = (1.0, 0.5);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BatteryConfig {
    pub optimizer: OptimizerConfig,
    pub trials: usize,
    /// Trial `k` of instance `i` is seeded with `base_seed + i * trials + k`
    /// for every method.
    pub base_seed: u64,
    /// Runs needing more qubits than this are recorded as failures.
    pub max_qubits: usize,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerConfig::default(),
            trials: 3,
            base_seed: 0,
            max_qubits: 32,
        }
    }
}

/// Best-of-trials result for one instance under one method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub instance_id: String,
    pub method: String,
    pub n_qubits: usize,
    #[serde(with = "rational_string")]
    pub c_opt: Rational,
    #[serde(default, with = "opt_rational")]
    pub c_vqe: Option<Rational>,
    pub bits: Option<Bitstring>,
    pub feasible: bool,
    pub optimal: bool,
    pub opt_gap: Option<f64>,
    pub final_loss: Option<f64>,
    pub trial_seed: Option<u64>,
    pub evaluations: usize,
    pub error: Option<String>,
}

mod opt_rational {
    use super::Rational;
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Option<Rational>, s: S) -> Result<S::Ok, S::Error> {
        match r {
            Some(r) => s.collect_str(r),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Rational>, D::Error> {
        match Option::<String>::deserialize(d)? {
            Some(t) if !t.is_empty() => t.trim().parse().map(Some).map_err(D::Error::custom),
            _ => Ok(None),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodAggregate {
    pub method: String,
    pub instances: usize,
    pub feasibility_rate: f64,
    pub optimality_rate: f64,
    /// Mean over instances with a defined gap, infeasible ones included.
    pub mean_opt_gap: Option<f64>,
    pub gap_excluded: usize,
    pub failures: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub config: BatteryConfig,
    pub methods: Vec<MethodSpec>,
    pub rows: Vec<RunRecord>,
    pub aggregates: Vec<MethodAggregate>,
}

impl BenchmarkReport {
    pub fn aggregate(&self, method: &str) -> Option<&MethodAggregate> {
        self.aggregates.iter().find(|a| a.method == method)
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    /// One row per instance and method, preceded by `#` lines holding the
    /// battery config and method specs as JSON.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "# config {}", serde_json::to_string(&self.config)?)?;
        writeln!(out, "# methods {}", serde_json::to_string(&self.methods)?)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "instance_id", "method", "n_qubits", "c_opt", "c_vqe", "bits", "feasible", "optimal",
            "opt_gap", "final_loss", "trial_seed", "evaluations", "error",
        ])?;
        let opt = |v: Option<String>| v.unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.instance_id.clone(),
                r.method.clone(),
                r.n_qubits.to_string(),
                r.c_opt.to_string(),
                opt(r.c_vqe.map(|c| c.to_string())),
                opt(r.bits.as_ref().map(|b| b.to_string())),
                r.feasible.to_string(),
                r.optimal.to_string(),
                opt(r.opt_gap.map(|g| g.to_string())),
                opt(r.final_loss.map(|l| l.to_string())),
                opt(r.trial_seed.map(|s| s.to_string())),
                r.evaluations.to_string(),
                opt(r.error.clone()),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(fs::File::create(path)?)
    }

    /// Aggregates as aligned text lines.
    pub fn summary_table(&self) -> String {
        let mut s = format!(
            "{:<16} {:>9} {:>12} {:>12} {:>10} {:>8}\n",
            "method", "instances", "feasible %", "optimal %", "mean gap", "failed"
        );
        for a in &self.aggregates {
            let gap = a.mean_opt_gap.map_or("n/a".to_string(), |g| format!("{g:.3}"));
            s += &format!(
                "{:<16} {:>9} {:>12.1} {:>12.1} {:>10} {:>8}\n",
                a.method, a.instances, a.feasibility_rate, a.optimality_rate, gap, a.failures
            );
        }
        s
    }
}

/// Per-method aggregates from the rows, in first-appearance order of methods.
pub fn aggregate_rows(rows: &[RunRecord]) -> Vec<MethodAggregate> {
    let mut names: Vec<&str> = Vec::new();
    for r in rows {
        if !names.contains(&r.method.as_str()) {
            names.push(&r.method);
        }
    }
    names
        .into_iter()
        .map(|name| {
            let mine: Vec<&RunRecord> = rows.iter().filter(|r| r.method == name).collect();
            let n = mine.len();
            let pct = |k: usize| if n == 0 { 0.0 } else { 100.0 * k as f64 / n as f64 };
            let gaps: Vec<f64> = mine.iter().filter_map(|r| r.opt_gap).collect();
            MethodAggregate {
                method: name.to_string(),
                instances: n,
                feasibility_rate: pct(mine.iter().filter(|r| r.feasible).count()),
                optimality_rate: pct(mine.iter().filter(|r| r.optimal).count()),
                mean_opt_gap: (!gaps.is_empty()).then(|| gaps.iter().sum::<f64>() / gaps.len() as f64),
                gap_excluded: n - gaps.len(),
                failures: mine.iter().filter(|r| r.error.is_some()).count(),
            }
        })
        .collect()
}

fn run_one(
    named: &NamedInstance,
    index: usize,
    oracle: &Result<Solution>,
    method: &MethodSpec,
    cfg: &BatteryConfig,
) -> RunRecord {
    let mut record = RunRecord {
        instance_id: named.id.clone(),
        method: method.name.clone(),
        n_qubits: 0,
        c_opt: Rational::from_integer(0),
        c_vqe: None,
        bits: None,
        feasible: false,
        optimal: false,
        opt_gap: None,
        final_loss: None,
        trial_seed: None,
        evaluations: 0,
        error: None,
    };
    let attempt = (|| -> Result<()> {
        let optimum = oracle.as_ref().map_err(|e| Error::InvalidInstance(e.to_string()))?;
        record.c_opt = optimum.objective_value;
        let dp = build(&named.instance.to_program(), &method.penalty_for(&named.instance))?;
        record.n_qubits = dp.n_qubits();
        if dp.n_qubits() > cfg.max_qubits {
            return Err(Error::QubitBudget {
                required: dp.n_qubits(),
                budget: cfg.max_qubits,
            });
        }
        let seed = cfg.base_seed + (index * cfg.trials) as u64;
        let outcomes = run_trials(&dp, cfg.trials, seed, &cfg.optimizer)?;
        let best = &outcomes[0];
        record.evaluations = outcomes.iter().map(|o| o.eval_count).sum();
        record.c_vqe = Some(best.best_objective);
        record.bits = Some(best.decision_bits.clone());
        record.feasible = best.feasible;
        record.optimal = best.feasible && best.best_objective == optimum.objective_value;
        record.final_loss = Some(best.final_loss);
        record.trial_seed = best.trial_seed;
        match opt_gap(best.best_objective, optimum.objective_value) {
            Ok(g) => record.opt_gap = Some(g),
            Err(_) => warn!("{}: optimum is zero, gap excluded from the mean", named.id),
        }
        Ok(())
    })();
    if let Err(e) = attempt {
        warn!("{} / {}: {e}", named.id, method.name);
        record.error = Some(e.to_string());
    }
    record
}

/// Runs every method on every instance. Per-run failures are recorded in the
/// rows; rows are ordered by instance, then by method as given.
pub fn run_battery(
    instances: &[NamedInstance],
    methods: &[MethodSpec],
    cfg: &BatteryConfig,
) -> Result<BenchmarkReport> {
    if instances.is_empty() || methods.is_empty() {
        return Err(Error::InvalidArgument("battery needs instances and methods".into()));
    }
    if cfg.trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    cfg.optimizer.validate()?;
    for m in methods {
        m.penalty.validate()?;
    }
    let oracles: Vec<Result<Solution>> = instances
        .par_iter()
        .map(|n| n.instance.to_program().brute_force_solve())
        .collect();
    let jobs: Vec<(usize, &MethodSpec)> = (0..instances.len())
        .flat_map(|i| methods.iter().map(move |m| (i, m)))
        .collect();
    let rows: Vec<RunRecord> = jobs
        .par_iter()
        .map(|&(i, m)| run_one(&instances[i], i, &oracles[i], m, cfg))
        .collect();
    Ok(BenchmarkReport {
        aggregates: aggregate_rows(&rows),
        config: cfg.clone(),
        methods: methods.to_vec(),
        rows,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub lambda2: f64,
    pub feasibility_rate: f64,
    pub optimality_rate: f64,
    pub mean_opt_gap: Option<f64>,
}

/// Exponential penalty with `lambda1` fixed, one battery per `lambda2`.
pub fn sweep_lambda2(
    instances: &[NamedInstance],
    lambda1: f64,
    grid: &[f64],
    cfg: &BatteryConfig,
) -> Result<Vec<SweepPoint>> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("lambda2 grid is empty".into()));
    }
    let methods: Vec<MethodSpec> = grid
        .iter()
        .map(|&l2| MethodSpec::new(format!("exp({lambda1},{l2})"), PenaltySpec::exponential(lambda1, l2)))
        .collect();
    let report = run_battery(instances, &methods, cfg)?;
    Ok(grid
        .iter()
        .zip(&report.aggregates)
        .map(|(&lambda2, a)| SweepPoint {
            lambda2,
            feasibility_rate: a.feasibility_rate,
            optimality_rate: a.optimality_rate,
            mean_opt_gap: a.mean_opt_gap,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64) -> Rational {
        Rational::from_integer(n)
    }

    #[test]
    fn gap_examples() {
        assert_eq!(opt_gap(r(10), r(10)).unwrap(), 0.0);
        assert_eq!(opt_gap(r(0), r(10)).unwrap(), 1.0);
        assert!((opt_gap(r(12), r(10)).unwrap() + 0.2).abs() < 1e-15);
        assert!(matches!(opt_gap(r(3), r(0)), Err(Error::ZeroOptimum)));
    }

    #[test]
    fn presets_and_weight_rule() {
        for name in ["step", "exp", "unbalanced", "slack"] {
            MethodSpec::preset(name).unwrap().penalty.validate().unwrap();
        }
        assert!(MethodSpec::preset("annealing").is_err());
        let inst = MkpInstance::new(vec![3, 5], vec![2, 4], vec![5, 5]).unwrap();
        let m = MethodSpec::preset("step").unwrap().with_rule(WeightRule::UpperBoundPlusOne);
        assert_eq!(m.penalty_for(&inst), PenaltySpec::step(17.0));
    }

    #[test]
    fn battery_ids_and_seeds() {
        let b = generate_battery(&[(3, 3), (3, 4)], 2, 100).unwrap();
        let ids: Vec<&str> = b.iter().map(|n| n.id.as_str()).collect();
        assert_eq!(ids, ["k3-l3-s100", "k3-l3-s101", "k3-l4-s102", "k3-l4-s103"]);
        assert_eq!(b[3].instance, generate_instance(3, 4, 103).unwrap());
    }

    fn row(method: &str, feasible: bool, optimal: bool, gap: Option<f64>) -> RunRecord {
        RunRecord {
            instance_id: "i".into(),
            method: method.into(),
            n_qubits: 4,
            c_opt: r(10),
            c_vqe: Some(r(5)),
            bits: None,
            feasible,
            optimal,
            opt_gap: gap,
            final_loss: Some(0.0),
            trial_seed: Some(0),
            evaluations: 1,
            error: None,
        }
    }

    #[test]
    fn aggregates_count_instances() {
        let rows = vec![
            row("a", true, true, Some(0.0)),
            row("a", false, false, Some(-0.5)),
            row("b", true, false, None),
            row("a", true, false, Some(0.5)),
        ];
        let agg = aggregate_rows(&rows);
        assert_eq!(agg[0].method, "a");
        assert_eq!(agg[0].instances, 3);
        assert!((agg[0].feasibility_rate - 200.0 / 3.0).abs() < 1e-12);
        assert!((agg[0].optimality_rate - 100.0 / 3.0).abs() < 1e-12);
        assert_eq!(agg[0].mean_opt_gap, Some(0.0));
        assert_eq!(agg[1].mean_opt_gap, None);
        assert_eq!(agg[1].gap_excluded, 1);
    }
}

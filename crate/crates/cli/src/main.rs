use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use penalty_vqe::bench::{
    run_battery, sweep_lambda2, BatteryConfig, MethodSpec, NamedInstance, WeightRule,
};
use penalty_vqe::ising::{build, encode_constraint};
use penalty_vqe::model::{generate_instance_with_budget, DEFAULT_QUBIT_BUDGET};
use penalty_vqe::paulidecomp::decompose_stepped_constraint;
use penalty_vqe::vqe::run_trials;
use penalty_vqe::{MkpInstance, PenaltySpec};

#[derive(Parser)]
#[command(name = "penalty-vqe", version, about = "Penalty-encoded knapsack problems on a simulated VQE")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate random Multiple Knapsack instances as JSON files.
    Gen {
        #[arg(long)]
        knapsacks: usize,
        #[arg(long)]
        items: usize,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_QUBIT_BUDGET)]
        budget: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve one instance and print the best outcome as JSON.
    Solve {
        #[arg(long)]
        instance: PathBuf,
        #[command(flatten)]
        method: MethodArgs,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Print every trial instead of the best one.
        #[arg(long)]
        all: bool,
    },
    /// Run a battery of instances across methods.
    Bench {
        /// Directory of instance JSON files.
        #[arg(long)]
        instances: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "slack,unbalanced,step")]
        methods: Vec<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// CSV report, one row per instance and method.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Full JSON report.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Exponential penalty sweep over lambda2 with lambda1 fixed.
    Sweep {
        #[arg(long)]
        instances: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        lambda1: f64,
        /// `a..b` (integer steps, inclusive) or a comma list.
        #[arg(long, default_value = "1..10")]
        lambda2: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the Pauli-Z decomposition of one penalized constraint.
    Decompose {
        #[arg(long)]
        instance: PathBuf,
        /// Constraint row: capacity rows first, then assignment rows.
        #[arg(long)]
        constraint: usize,
        #[command(flatten)]
        method: MethodArgs,
    },
}

#[derive(Args)]
struct MethodArgs {
    /// step, exp, unbalanced or slack.
    #[arg(long, default_value = "step")]
    method: String,
    /// Leading weight (lambda or lambda1).
    #[arg(long)]
    lambda: Option<f64>,
    /// Second weight of exp and unbalanced.
    #[arg(long)]
    lambda2: Option<f64>,
    /// Set the leading weight to K * sum(v) + 1.
    #[arg(long)]
    upper_bound: bool,
}

impl MethodArgs {
    fn resolve(&self, file: &FileConfig) -> Result<MethodSpec> {
        let mut m = file.method(&self.method)?;
        if let Some(l) = self.lambda {
            m.penalty = m.penalty.with_leading_weight(l);
        }
        if let Some(l2) = self.lambda2 {
            match &mut m.penalty {
                PenaltySpec::Exponential { lambda2, .. } | PenaltySpec::UnbalancedQuadratic { lambda2, .. } => {
                    *lambda2 = l2
                }
                _ => bail!("--lambda2 does not apply to `{}`", self.method),
            }
        }
        if self.upper_bound {
            m.weight_rule = WeightRule::UpperBoundPlusOne;
        }
        Ok(m)
    }
}

/// Battery config plus per-method penalty overrides.
#[derive(Default, Deserialize)]
#[serde(default)]
struct FileConfig {
    #[serde(flatten)]
    battery: BatteryConfig,
    methods: BTreeMap<String, PenaltySpec>,
    weight_rules: BTreeMap<String, WeightRule>,
}

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
            }
        }
    }

    fn method(&self, name: &str) -> Result<MethodSpec> {
        let mut m = match self.methods.get(name) {
            Some(p) => MethodSpec::new(name, p.clone()),
            None => MethodSpec::preset(name)?,
        };
        if let Some(&rule) = self.weight_rules.get(name) {
            m.weight_rule = rule;
        }
        Ok(m)
    }
}

fn load_instances(dir: &Path) -> Result<Vec<NamedInstance>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "json"));
    paths.sort();
    ensure!(!paths.is_empty(), "no instance files in {}", dir.display());
    paths
        .iter()
        .map(|p| {
            Ok(NamedInstance {
                id: p.file_stem().unwrap_or_default().to_string_lossy().into_owned(),
                instance: MkpInstance::load(p).with_context(|| format!("loading {}", p.display()))?,
            })
        })
        .collect()
}

fn parse_grid(text: &str) -> Result<Vec<f64>> {
    if let Some((a, b)) = text.split_once("..") {
        let (a, b): (i64, i64) = (a.trim().parse()?, b.trim().parse()?);
        ensure!(a <= b, "empty range {text}");
        return Ok((a..=b).map(|v| v as f64).collect());
    }
    text.split(',')
        .map(|v| v.trim().parse::<f64>().with_context(|| format!("bad grid value `{v}`")))
        .collect()
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen {
            knapsacks,
            items,
            count,
            seed,
            budget,
            out,
        } => {
            fs::create_dir_all(&out)?;
            for k in 0..count as u64 {
                let s = seed + k;
                let inst = generate_instance_with_budget(knapsacks, items, s, budget)?;
                let path = out.join(format!("k{knapsacks}-l{items}-s{s:06}.json"));
                inst.save(&path)?;
                println!("{}", path.display());
            }
        }
        Command::Solve {
            instance,
            method,
            trials,
            seed,
            config,
            all,
        } => {
            let file = FileConfig::load(config.as_deref())?;
            let inst = MkpInstance::load(&instance)?;
            let m = method.resolve(&file)?;
            let dp = build(&inst.to_program(), &m.penalty_for(&inst))?;
            let outcomes = run_trials(
                &dp,
                trials.unwrap_or(file.battery.trials),
                seed.unwrap_or(file.battery.base_seed),
                &file.battery.optimizer,
            )?;
            let json = if all {
                serde_json::to_string_pretty(&outcomes)?
            } else {
                serde_json::to_string_pretty(&outcomes[0])?
            };
            println!("{json}");
        }
        Command::Bench {
            instances,
            methods,
            config,
            out,
            json,
        } => {
            let file = FileConfig::load(config.as_deref())?;
            let named = load_instances(&instances)?;
            let specs = methods.iter().map(|m| file.method(m.trim())).collect::<Result<Vec<_>>>()?;
            let report = run_battery(&named, &specs, &file.battery)?;
            match out {
                Some(p) => report.save_csv(&p)?,
                None => report.write_csv(std::io::stdout().lock())?,
            }
            if let Some(p) = json {
                report.save_json(&p)?;
            }
            eprint!("{}", report.summary_table());
        }
        Command::Sweep {
            instances,
            lambda1,
            lambda2,
            config,
            out,
        } => {
            let file = FileConfig::load(config.as_deref())?;
            let named = load_instances(&instances)?;
            let points = sweep_lambda2(&named, lambda1, &parse_grid(&lambda2)?, &file.battery)?;
            let mut text = String::from("lambda1,lambda2,feasibility_rate,optimality_rate,mean_opt_gap\n");
            for p in points {
                let gap = p.mean_opt_gap.map(|g| g.to_string()).unwrap_or_default();
                text += &format!("{lambda1},{},{},{},{gap}\n", p.lambda2, p.feasibility_rate, p.optimality_rate);
            }
            emit(&text, out.as_deref())?;
        }
        Command::Decompose {
            instance,
            constraint,
            method,
        } => {
            let inst = MkpInstance::load(&instance)?;
            let program = inst.to_program();
            let row = program.constraints().get(constraint).with_context(|| {
                format!("constraint {constraint} out of range ({} rows)", program.constraints().len())
            })?;
            let m = method.resolve(&FileConfig::default())?;
            let h = encode_constraint(row)?;
            let poly = decompose_stepped_constraint(&h, &m.penalty_for(&inst), program.n_vars())?;
            print!("{poly}");
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

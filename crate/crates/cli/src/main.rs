//! `anonplan`: generate SIS instances, solve their ALPs, benchmark the flat
//! and redundant pipelines, and simulate policies.
//!
//! Every artifact embeds the run configuration as JSON so that a run can be
//! repeated exactly. Exit codes: 0 success, 2 usage or bad input, 3 guard
//! abort or infeasible LP, 4 solver failure.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anonplan::alp::{build_alp, write_lp, AlpOptions, AlpSolution, Highs, Method, SolveStatus, FLAT_ENTRY_BUDGET};
use anonplan::elimination::{eliminate_argmax, eliminate_max_with, greedy_order, EliminationOptions, FactorSet};
use anonplan::epidemics::{build_sis_model, random_instance, EpidemicInstance, SisParams, GRAPH_FORMAT};
use anonplan::factors::serial::{FactorGraphDoc, FACTOR_GRAPH_FORMAT};
use anonplan::fmmdp::{indicator_basis, ModelDoc, MODEL_FORMAT};
use anonplan::simulate::{
    bootstrap_mean_ci, box_plot_svg, evaluate, mean, EvalConfig, GreedyPolicy, Policy, Summary,
};
use anonplan::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

const VERSION: &str = env!("CARGO_PKG_VERSION");
const WEIGHTS_FORMAT: &str = "anonplan-weights/1";
const BOOTSTRAP_RESAMPLES: usize = 10_000;

#[derive(Parser, Debug)]
#[command(name = "anonplan", version, about = "Planning with anonymous influence on SIS networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
enum Command {
    /// Generate a random SIS instance.
    Gen(GenArgs),
    /// Solve the ALP of an instance with the indicator basis.
    Solve(SolveArgs),
    /// Compare the flat and redundant pipelines on several instances.
    Bench(BenchArgs),
    /// Evaluate policies by simulation.
    Sim(SimArgs),
    /// Maximize the sum of a factor-graph file by variable elimination.
    Ve(VeArgs),
    /// Print an instance, model or factor-graph file.
    Inspect(InspectArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
struct ParamArgs {
    #[arg(long, default_value_t = 0.6)]
    beta: f64,
    #[arg(long, default_value_t = 0.3)]
    delta: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda1: f64,
    #[arg(long, default_value_t = 50.0)]
    lambda2: f64,
    #[arg(long, default_value_t = 0.95)]
    gamma: f64,
}

#[derive(Args, Debug, Clone, Serialize)]
struct GenArgs {
    #[arg(long)]
    n: usize,
    /// Largest degree of the degree distribution.
    #[arg(long, default_value_t = 10)]
    k_max: usize,
    /// Number of controlled nodes (default: half of the nodes).
    #[arg(long)]
    controlled: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
struct SolveArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value = "rr-alp")]
    method: Method,
    /// Entry budget of the flat pipeline.
    #[arg(long, default_value_t = FLAT_ENTRY_BUDGET)]
    entry_budget: usize,
    /// Also write the LP in CPLEX LP format.
    #[arg(long)]
    write_lp: bool,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
struct BenchArgs {
    #[arg(long, num_args = 1.., required = true)]
    instances: Vec<PathBuf>,
    #[arg(long, default_value_t = FLAT_ENTRY_BUDGET)]
    entry_budget: usize,
    /// Output CSV file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
enum PolicyKind {
    Random,
    Copystate,
    Greedy,
}

#[derive(Args, Debug, Clone, Serialize)]
struct SimArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Weights file written by `solve`; required by the greedy policy.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "random,copystate,greedy")]
    policy: Vec<PolicyKind>,
    #[arg(long, default_value_t = 50)]
    n_starts: usize,
    #[arg(long, default_value_t = 50)]
    n_runs: usize,
    #[arg(long, default_value_t = 200)]
    horizon: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sum rewards without discounting.
    #[arg(long)]
    undiscounted: bool,
    /// Also write a box plot of the per-start mean returns.
    #[arg(long)]
    svg: bool,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
struct VeArgs {
    /// Factor-graph JSON file.
    #[arg(long)]
    factors: PathBuf,
    /// Write the result as JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct InspectArgs {
    file: PathBuf,
}

/// Configuration echoed into every artifact.
#[derive(Serialize, Debug)]
struct RunConfig<'a> {
    tool: &'static str,
    version: &'static str,
    #[serde(flatten)]
    command: &'a Command,
}

impl RunConfig<'_> {
    fn json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Abort(String),
    Solver(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Abort(_) => 3,
            CliError::Solver(_) => 4,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::EntryBudgetExceeded { entries, budget } => CliError::Abort(format!(
                "induced width too large: an intermediate table needs {entries:.3e} entries, budget is {budget}"
            )),
            Error::Solver(m) => CliError::Solver(m),
            other => CliError::Usage(other.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Usage(format!("{}: {e}", path.display()))
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn write(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn load_instance(path: &Path) -> CliResult<EpidemicInstance> {
    EpidemicInstance::parse(&read(path)?)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = RunConfig {
        tool: "anonplan",
        version: VERSION,
        command: &cli.command,
    };
    let result = match &cli.command {
        Command::Gen(a) => cmd_gen(a, &config),
        Command::Solve(a) => cmd_solve(a, &config),
        Command::Bench(a) => cmd_bench(a, &config),
        Command::Sim(a) => cmd_sim(a, &config),
        Command::Ve(a) => cmd_ve(a, &config),
        Command::Inspect(a) => cmd_inspect(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = match &e {
                CliError::Usage(m) | CliError::Abort(m) | CliError::Solver(m) => m,
            };
            eprintln!("error: {msg}");
            ExitCode::from(e.code())
        }
    }
}

fn cmd_gen(a: &GenArgs, config: &RunConfig) -> CliResult<()> {
    let p = &a.params;
    let params = SisParams {
        beta: p.beta,
        delta: p.delta,
        lambda1: p.lambda1,
        lambda2: p.lambda2,
        gamma: p.gamma,
    };
    let controlled = a.controlled.unwrap_or(a.n / 2);
    let inst = random_instance(a.n, a.k_max, controlled, params, a.seed)?;
    write(&a.out, &inst.to_text(Some(&format!("config {}", config.json()))))?;
    println!(
        "{}: {} nodes, {} edges, mean degree {:.3}",
        a.out.display(),
        inst.n,
        inst.edges.len(),
        inst.mean_degree()
    );
    Ok(())
}

#[derive(Serialize, Deserialize, Debug)]
struct NamedWeight {
    name: String,
    value: f64,
}

#[derive(Serialize, Deserialize, Debug)]
struct WeightsFile {
    format: String,
    config: serde_json::Value,
    method: Method,
    status: SolveStatus,
    objective: f64,
    constraints: usize,
    auxiliaries: usize,
    peak_entries: usize,
    weights: Vec<NamedWeight>,
    ve_secs: f64,
    lp_secs: f64,
}

fn solve_instance(inst: &EpidemicInstance, method: Method, budget: usize) -> CliResult<AlpSolution> {
    let m = build_sis_model(inst)?;
    let basis = indicator_basis(&m);
    let opts = AlpOptions {
        flat_budget: Some(budget),
        ..AlpOptions::default()
    };
    Ok(build_alp(&m, &basis, method, opts)?.solve(&Highs)?)
}

fn cmd_solve(a: &SolveArgs, config: &RunConfig) -> CliResult<()> {
    let inst = load_instance(&a.instance)?;
    let m = build_sis_model(&inst)?;
    let basis = indicator_basis(&m);
    let opts = AlpOptions {
        flat_budget: Some(a.entry_budget),
        ..AlpOptions::default()
    };
    let problem = build_alp(&m, &basis, a.method, opts)?;
    let sol = problem.solve(&Highs)?;
    let cfg = config.json();
    if a.write_lp {
        write(&a.out.join("alp.lp"), &write_lp(&problem.lp, Some(&format!("config {cfg}"))))?;
    }
    let file = WeightsFile {
        format: WEIGHTS_FORMAT.into(),
        config: serde_json::from_str(&cfg).expect("valid json"),
        method: sol.method,
        status: sol.status,
        objective: sol.objective,
        constraints: sol.constraints,
        auxiliaries: sol.auxiliaries,
        peak_entries: sol.peak_entries,
        weights: basis
            .iter()
            .zip(&sol.weights)
            .map(|(h, &value)| NamedWeight {
                name: h.name.clone(),
                value,
            })
            .collect(),
        ve_secs: sol.build_secs,
        lp_secs: sol.solve_secs,
    };
    let json = serde_json::to_string_pretty(&file).expect("weights serialize") + "\n";
    write(&a.out.join("weights.json"), &json)?;
    let mut metrics = format!("# config {cfg}\n");
    metrics.push_str("instance,method,status,objective,constraints,auxiliaries,peak_entries,ve_secs,lp_secs\n");
    writeln!(
        metrics,
        "{},{},{},{},{},{},{},{},{}",
        a.instance.display(),
        sol.method,
        status_str(sol.status),
        sol.objective,
        sol.constraints,
        sol.auxiliaries,
        sol.peak_entries,
        sol.build_secs,
        sol.solve_secs
    )
    .unwrap();
    write(&a.out.join("metrics.csv"), &metrics)?;
    println!(
        "{}: {} objective {} with {} constraints (VE {:.3}s, LP {:.3}s)",
        a.method,
        status_str(sol.status),
        sol.objective,
        sol.constraints,
        sol.build_secs,
        sol.solve_secs
    );
    if sol.status != SolveStatus::Optimal {
        return Err(CliError::Abort(format!("LP is {}", status_str(sol.status))));
    }
    Ok(())
}

fn status_str(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::Optimal => "optimal",
        SolveStatus::Unbounded => "unbounded",
        SolveStatus::Infeasible => "infeasible",
    }
}

fn cmd_bench(a: &BenchArgs, config: &RunConfig) -> CliResult<()> {
    let mut csv = format!("# config {}\n", config.json());
    csv.push_str(
        "instance,n,controlled,mean_degree,flat_constraints,rr_constraints,constraint_ratio,\
         flat_ve_secs,rr_ve_secs,ve_time_ratio,flat_lp_secs,rr_lp_secs,lp_time_ratio,\
         flat_objective,rr_objective\n",
    );
    let mut ratios: Vec<[f64; 3]> = vec![];
    for path in &a.instances {
        let inst = load_instance(path)?;
        let rr = solve_instance(&inst, Method::RrAlp, a.entry_budget)?;
        let flat = match solve_instance(&inst, Method::Alp, a.entry_budget) {
            Ok(s) => Some(s),
            Err(CliError::Abort(msg)) => {
                eprintln!("{}: flat pipeline skipped: {msg}", path.display());
                None
            }
            Err(e) => return Err(e),
        };
        write!(
            csv,
            "{},{},{},{},",
            path.display(),
            inst.n,
            inst.controlled.len(),
            inst.mean_degree()
        )
        .unwrap();
        match &flat {
            Some(f) => {
                let r = [
                    rr.constraints as f64 / f.constraints as f64,
                    rr.build_secs / f.build_secs,
                    rr.solve_secs / f.solve_secs,
                ];
                ratios.push(r);
                writeln!(
                    csv,
                    "{},{},{},{},{},{},{},{},{},{},{}",
                    f.constraints,
                    rr.constraints,
                    r[0],
                    f.build_secs,
                    rr.build_secs,
                    r[1],
                    f.solve_secs,
                    rr.solve_secs,
                    r[2],
                    f.objective,
                    rr.objective
                )
                .unwrap();
            }
            None => writeln!(
                csv,
                "n/a,{},n/a,n/a,{},n/a,n/a,{},n/a,n/a,{}",
                rr.constraints, rr.build_secs, rr.solve_secs, rr.objective
            )
            .unwrap(),
        }
    }
    if !ratios.is_empty() {
        let avg = |i: usize| ratios.iter().map(|r| r[i]).sum::<f64>() / ratios.len() as f64;
        writeln!(
            csv,
            "average,,,,,,{},,,{},,,{},,",
            avg(0),
            avg(1),
            avg(2)
        )
        .unwrap();
        println!(
            "average ratios over {} instances: constraints {:.3}, VE time {:.3}, LP time {:.3}",
            ratios.len(),
            avg(0),
            avg(1),
            avg(2)
        );
    }
    write(&a.out, &csv)
}

fn load_weights(path: &Path, expected: &[String]) -> CliResult<Vec<f64>> {
    let file: WeightsFile = serde_json::from_str(&read(path)?)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    if file.format != WEIGHTS_FORMAT {
        return Err(CliError::Usage(format!(
            "{}: expected format {WEIGHTS_FORMAT}, found {}",
            path.display(),
            file.format
        )));
    }
    let names: Vec<&String> = file.weights.iter().map(|w| &w.name).collect();
    if names.len() != expected.len() || names.iter().zip(expected).any(|(a, b)| *a != b) {
        return Err(CliError::Usage(format!(
            "{}: weights do not match the instance's basis",
            path.display()
        )));
    }
    Ok(file.weights.iter().map(|w| w.value).collect())
}

fn cmd_sim(a: &SimArgs, config: &RunConfig) -> CliResult<()> {
    if a.horizon == 0 || a.n_starts == 0 || a.n_runs == 0 {
        return Err(CliError::Usage("horizon, n-starts and n-runs must be positive".into()));
    }
    let inst = load_instance(&a.instance)?;
    let cfg = EvalConfig {
        n_starts: a.n_starts,
        n_runs: a.n_runs,
        horizon: a.horizon,
        seed: a.seed,
        discounted: !a.undiscounted,
    };
    let header = format!("config {}", config.json());
    let mut box_csv = format!("# {header}\n");
    box_csv.push_str("policy,grand_mean,ci_lo,ci_hi,median,q1,q3,lo_whisker,hi_whisker\n");
    let mut groups: Vec<(String, Summary)> = vec![];
    for kind in &a.policy {
        let policy = match kind {
            PolicyKind::Random => Policy::Random,
            PolicyKind::Copystate => Policy::Copystate,
            PolicyKind::Greedy => {
                let path = a.weights.as_ref().ok_or_else(|| {
                    CliError::Usage("the greedy policy needs --weights".into())
                })?;
                let m = build_sis_model(&inst)?;
                let basis = indicator_basis(&m);
                let names: Vec<String> = basis.iter().map(|h| h.name.clone()).collect();
                let w = load_weights(path, &names)?;
                Policy::Greedy(Box::new(GreedyPolicy::new(&inst, &m, &basis, &w)?))
            }
        };
        let ev = evaluate(&inst, &policy, cfg)?;
        let name = policy.name();
        write(&a.out.join(format!("{name}_returns.csv")), &ev.returns_csv(Some(&header)))?;
        write(&a.out.join(format!("{name}_summary.csv")), &ev.summary_csv(Some(&header)))?;
        let means = ev.start_means();
        let s = Summary::of(&means);
        let (lo, hi) = bootstrap_mean_ci(&means, BOOTSTRAP_RESAMPLES, 0.95, a.seed);
        writeln!(
            box_csv,
            "{name},{},{lo},{hi},{},{},{},{},{}",
            mean(&means),
            s.median,
            s.q1,
            s.q3,
            s.lo_whisker,
            s.hi_whisker
        )
        .unwrap();
        println!("{name}: mean return {:.3} (95% CI {lo:.3} to {hi:.3})", mean(&means));
        groups.push((name.to_string(), s));
    }
    write(&a.out.join("box.csv"), &box_csv)?;
    if a.svg {
        let title = format!("mean return per start state, {}", a.instance.display());
        write(&a.out.join("box.svg"), &box_plot_svg(&groups, &title))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct VeOutput {
    config: serde_json::Value,
    max: f64,
    assignment: Vec<(String, usize)>,
    order: Vec<String>,
    peak_entries: usize,
    total_entries: usize,
}

fn cmd_ve(a: &VeArgs, config: &RunConfig) -> CliResult<()> {
    let doc: FactorGraphDoc = serde_json::from_str(&read(&a.factors)?)
        .map_err(|e| CliError::Usage(format!("{}: {e}", a.factors.display())))?;
    let (vars, factors) = doc.decode()?;
    let fs = FactorSet::new(factors);
    let candidates = fs.factors().flat_map(|f| f.shape().variables()).collect();
    let order = greedy_order(&fs, &candidates);
    let (_, stats) = eliminate_max_with(&fs, &order, EliminationOptions::default())?;
    let (max, assignment) = eliminate_argmax(&fs, &order)?;
    let out = VeOutput {
        config: serde_json::from_str(&config.json()).expect("valid json"),
        max,
        assignment: assignment
            .iter()
            .map(|(v, x)| (vars.name(v).to_string(), x))
            .collect(),
        order: order.iter().map(|&v| vars.name(v).to_string()).collect(),
        peak_entries: stats.peak_entries,
        total_entries: stats.total_entries,
    };
    let json = serde_json::to_string_pretty(&out).expect("result serializes") + "\n";
    match &a.out {
        Some(p) => write(p, &json),
        None => {
            print!("{json}");
            Ok(())
        }
    }
}

fn cmd_inspect(a: &InspectArgs) -> CliResult<()> {
    let text = read(&a.file)?;
    let bad = |e: String| CliError::Usage(format!("{}: {e}", a.file.display()));
    if text.trim_start().starts_with(GRAPH_FORMAT) {
        let inst = EpidemicInstance::parse(&text).map_err(|e| bad(e.to_string()))?;
        print!("{}", describe_instance(&inst)?);
        return Ok(());
    }
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    match value.get("format").and_then(|f| f.as_str()) {
        Some(FACTOR_GRAPH_FORMAT) => {
            let doc: FactorGraphDoc = serde_json::from_value(value).map_err(|e| bad(e.to_string()))?;
            let (vars, factors) = doc.decode()?;
            for (i, f) in factors.iter().enumerate() {
                println!("factor {i}: {} entries", f.parameter_count());
                print!("{}", f.dump(Some(&vars)));
            }
        }
        Some(MODEL_FORMAT) => {
            let doc: ModelDoc = serde_json::from_value(value).map_err(|e| bad(e.to_string()))?;
            let m = doc.to_model()?;
            for cpd in m.cpds() {
                println!("cpd of {}:", m.variables().name(cpd.state));
                print!("{}", cpd.factor.dump(Some(m.variables())));
            }
            for (i, r) in m.rewards().iter().enumerate() {
                println!("reward {i}:");
                print!("{}", r.dump(Some(m.variables())));
            }
        }
        Some(WEIGHTS_FORMAT) => {
            let file: WeightsFile = serde_json::from_value(value).map_err(|e| bad(e.to_string()))?;
            println!("{} {} objective {}", file.method, status_str(file.status), file.objective);
            for w in &file.weights {
                println!("{} {}", w.name, w.value);
            }
        }
        other => return Err(bad(format!("unrecognized file format {other:?}"))),
    }
    Ok(())
}

fn describe_instance(inst: &EpidemicInstance) -> CliResult<String> {
    let mut s = String::new();
    let degrees = inst.degrees();
    writeln!(s, "nodes {}", inst.n).unwrap();
    writeln!(s, "edges {}", inst.edges.len()).unwrap();
    writeln!(s, "controlled {}", inst.controlled.len()).unwrap();
    writeln!(s, "mean degree {:.3}", inst.mean_degree()).unwrap();
    writeln!(s, "max degree {}", degrees.iter().max().copied().unwrap_or(0)).unwrap();
    let p = &inst.params;
    writeln!(
        s,
        "beta {} delta {} lambda1 {} lambda2 {} gamma {}",
        p.beta, p.delta, p.lambda1, p.lambda2, p.gamma
    )
    .unwrap();
    let m = build_sis_model(inst)?;
    let (mut rr, mut flat) = (0usize, 0f64);
    for cpd in m.cpds() {
        rr += cpd.factor.parameter_count();
        flat += cpd
            .factor
            .shape()
            .flat_scope()
            .iter()
            .map(|&(_, c)| c as f64)
            .product::<f64>();
    }
    writeln!(s, "transition entries {rr} (flat {flat})").unwrap();
    Ok(s)
}

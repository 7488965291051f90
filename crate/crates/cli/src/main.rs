//! Command-line front end: validate models, inspect woven automata, run
//! single simulations, estimate property satisfaction and sweep parameters.
//!
//! Results go to standard output (or `--out`); diagnostics and progress go
//! to standard error. Exit codes: 0 success, 1 validation or analysis
//! failure, 2 usage errors.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cpssv_core::engine;
use cpssv_core::monitor::MtlFormula;
use cpssv_core::scenarios::{
    gen_capture_flag, gen_city, gen_honeybee, BeeStart, CitySpec, GridSpec, Protocol,
};
use cpssv_core::smc::{
    self, FaultPolicy, RunCount, SmcConfig, SmcResult, SweepParam, SweepSpec,
};
use cpssv_core::text::{
    parse_deployment, parse_model_file, parse_property, serialize_deployment, serialize_model,
    Deployment, ModelDocument,
};
use cpssv_core::weave::{instantiate, to_dot, weave_class, Horizon};

#[derive(Parser)]
#[command(name = "cpssv", version, about = "Statistical model checking for spatial agent networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a model (and optionally a deployment) and report diagnostics.
    Validate {
        model: PathBuf,
        #[arg(long)]
        deploy: Option<PathBuf>,
    },
    /// Weave every agent class and report the composed automata.
    Weave {
        model: PathBuf,
        /// Write the composed automaton of this class as Graphviz DOT.
        #[arg(long)]
        class: Option<String>,
        #[arg(long)]
        dot: Option<PathBuf>,
    },
    /// Execute one run and optionally export its trace as NDJSON.
    Simulate {
        model: PathBuf,
        #[arg(long)]
        deploy: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Trace output path; `-` writes to standard output.
        #[arg(long)]
        trace: Option<String>,
        #[arg(long)]
        horizon: Option<f64>,
    },
    /// Estimate the satisfaction probability of a property.
    Check {
        model: PathBuf,
        #[arg(long)]
        deploy: PathBuf,
        #[command(flatten)]
        estimation: EstimationArgs,
    },
    /// Estimate across a list of parameter values.
    Sweep {
        model: PathBuf,
        #[arg(long)]
        deploy: PathBuf,
        /// Parameter and values: `name=v1,v2,...`. The name addresses an
        /// agent class (instance count) or a numeric constant/global.
        #[arg(long)]
        param: String,
        #[command(flatten)]
        estimation: EstimationArgs,
    },
    /// Generate a built-in scenario as model + deployment files.
    Gen {
        #[command(subcommand)]
        scenario: GenCommand,
    },
}

#[derive(Args)]
struct EstimationArgs {
    /// Property to check; defaults to the deployment's property.
    #[arg(long)]
    prop: Option<String>,
    #[arg(long, conflicts_with_all = ["eps", "delta"])]
    runs: Option<u64>,
    /// Okamoto bound: worst-case estimation error.
    #[arg(long, requires = "delta")]
    eps: Option<f64>,
    /// Okamoto bound: probability of exceeding the error.
    #[arg(long, requires = "eps")]
    delta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores); CPSSV_WORKERS overrides.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[arg(long, default_value_t = 0.95)]
    confidence: f64,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    format: OutputFormat,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report wall time as 0 so reruns compare byte-for-byte.
    #[arg(long)]
    no_timing: bool,
    /// Abort on script faults instead of counting them as violations.
    #[arg(long)]
    strict_faults: bool,
}

#[derive(Subcommand)]
enum GenCommand {
    /// Two robots collecting three flags under camera surveillance.
    Flag {
        #[arg(long, default_value = "flag.cpss")]
        out_model: PathBuf,
        #[arg(long, default_value = "flag.toml")]
        out_deploy: PathBuf,
    },
    /// Temperature-seeking robot swarm on a grid.
    Bee {
        #[arg(long, default_value_t = 10)]
        width: usize,
        #[arg(long, default_value_t = 10)]
        height: usize,
        #[arg(long, default_value_t = 20)]
        robots: u32,
        /// `scattered`, `cell:X,Y` or `temp:T`.
        #[arg(long, default_value = "scattered")]
        start: String,
        #[arg(long, default_value_t = 1000.0)]
        horizon: f64,
        #[arg(long, default_value = "bee.cpss")]
        out_model: PathBuf,
        #[arg(long, default_value = "bee.toml")]
        out_deploy: PathBuf,
    },
    /// UAVs rescuing victims in a disaster-struck city.
    City {
        #[arg(long, default_value_t = 20)]
        buildings: usize,
        #[arg(long, default_value_t = 50)]
        victims: usize,
        #[arg(long, default_value_t = 8)]
        uavs: u32,
        #[arg(long, default_value_t = 8)]
        stations: usize,
        #[arg(long, value_enum, default_value_t = ProtocolArg::Bluetooth)]
        protocol: ProtocolArg,
        /// Exact hop distance between UAV staging and the victim zone.
        #[arg(long)]
        distance: Option<u32>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value = "city.cpss")]
        out_model: PathBuf,
        #[arg(long, default_value = "city.toml")]
        out_deploy: PathBuf,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Text,
    Csv,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ProtocolArg {
    Bluetooth,
    Zigbee,
}

impl From<ProtocolArg> for Protocol {
    fn from(p: ProtocolArg) -> Protocol {
        match p {
            ProtocolArg::Bluetooth => Protocol::Bluetooth,
            ProtocolArg::Zigbee => Protocol::Zigbee,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(command: Command) -> Result<(), String> {
    match command {
        Command::Validate { model, deploy } => cmd_validate(&model, deploy.as_deref()),
        Command::Weave { model, class, dot } => cmd_weave(&model, class.as_deref(), dot.as_deref()),
        Command::Simulate { model, deploy, seed, trace, horizon } => {
            cmd_simulate(&model, &deploy, seed, trace.as_deref(), horizon)
        }
        Command::Check { model, deploy, estimation } => cmd_check(&model, &deploy, &estimation),
        Command::Sweep { model, deploy, param, estimation } => {
            cmd_sweep(&model, &deploy, &param, &estimation)
        }
        Command::Gen { scenario } => cmd_gen(scenario),
    }
}

fn read_to_string(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))
}

fn load_model(path: &Path) -> Result<ModelDocument, String> {
    let text = read_to_string(path)?;
    parse_model_file(&text, &path.display().to_string()).map_err(|e| e.to_string())
}

fn load_deployment(path: &Path) -> Result<Deployment, String> {
    parse_deployment(&read_to_string(path)?).map_err(|e| e.to_string())
}

fn cmd_validate(model_path: &Path, deploy: Option<&Path>) -> Result<(), String> {
    let doc = load_model(model_path)?;
    let report = doc.validate();
    for item in &report.items {
        eprintln!("{item}");
    }
    if !report.is_ok() {
        return Err(format!(
            "{} error(s) in {}",
            report.errors().count(),
            model_path.display()
        ));
    }
    if let Some(deploy_path) = deploy {
        let deployment = load_deployment(deploy_path)?;
        instantiate(&doc, &deployment).map_err(|e| e.to_string())?;
        if let Some(prop) = &deployment.property {
            parse_property(prop).map_err(|e| e.to_string())?;
        }
    }
    println!(
        "ok: {} class(es), {} warning(s)",
        doc.classes.len(),
        report.warnings().count()
    );
    Ok(())
}

fn cmd_weave(model_path: &Path, class: Option<&str>, dot: Option<&Path>) -> Result<(), String> {
    let doc = load_model(model_path)?;
    let mut woven = Vec::new();
    for decl in &doc.classes {
        let agent = weave_class(decl).map_err(|e| e.to_string())?;
        let report = cpssv_core::weave::validate_composed(&agent);
        for item in report.errors() {
            eprintln!("{item}");
        }
        if !report.is_ok() {
            return Err(format!("composed automaton for `{}` is invalid", decl.name));
        }
        println!(
            "{}: {} states ({} spatial, {} predicate, {} interaction), {} transitions",
            agent.name,
            agent.composed.states.len(),
            agent.spatial_count,
            agent.predicate_states.len(),
            agent.composed.states.len() - agent.spatial_count - agent.predicate_states.len(),
            agent.composed.transitions.len(),
        );
        woven.push(agent);
    }
    if let Some(dot_path) = dot {
        let target = match class {
            Some(name) => woven
                .iter()
                .find(|a| a.name == name)
                .ok_or_else(|| format!("no agent class named `{name}`"))?,
            None => woven.first().ok_or("model declares no agent classes")?,
        };
        std::fs::write(dot_path, to_dot(target))
            .map_err(|e| format!("cannot write {}: {e}", dot_path.display()))?;
        eprintln!("wrote {}", dot_path.display());
    }
    Ok(())
}

fn effective_seed(seed: Option<u64>) -> u64 {
    match seed {
        Some(s) => s,
        None => {
            let s = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_nanos() as u64)
                .unwrap_or(0)
                ^ (std::process::id() as u64) << 32;
            eprintln!("seed: {s} (pass --seed {s} to reproduce)");
            s
        }
    }
}

fn cmd_simulate(
    model_path: &Path,
    deploy_path: &Path,
    seed: Option<u64>,
    trace_out: Option<&str>,
    horizon: Option<f64>,
) -> Result<(), String> {
    let doc = load_model(model_path)?;
    let deployment = load_deployment(deploy_path)?;
    let network = Arc::new(instantiate(&doc, &deployment).map_err(|e| e.to_string())?);
    let seed = effective_seed(seed);
    let h = Horizon {
        time: horizon.unwrap_or(network.horizon.time),
        max_events: network.horizon.max_events,
    };
    let trace = engine::run(&network, seed, h);

    let mut trace_on_stdout = false;
    if let Some(out) = trace_out {
        if out == "-" {
            trace_on_stdout = true;
            let stdout = std::io::stdout();
            engine::write_trace_ndjson(&trace, &mut stdout.lock())
                .map_err(|e| format!("cannot write trace: {e}"))?;
        } else {
            let mut file = std::fs::File::create(out)
                .map_err(|e| format!("cannot create {out}: {e}"))?;
            engine::write_trace_ndjson(&trace, &mut file)
                .map_err(|e| format!("cannot write trace: {e}"))?;
        }
    }
    let summary = format!(
        "events={} end_time={:.4} terminal={:?}",
        trace.entries.len(),
        trace.entries.last().map(|e| e.time).unwrap_or(0.0),
        trace.terminal,
    );
    // The trace owns standard output when directed there.
    if trace_on_stdout {
        eprintln!("{summary}");
    } else {
        println!("{summary}");
    }
    Ok(())
}

struct Estimation {
    formula: MtlFormula,
    property_text: String,
    cfg: SmcConfig,
    seed: u64,
}

fn prepare(args: &EstimationArgs, deployment: &Deployment) -> Result<Estimation, String> {
    let property_text = match (&args.prop, &deployment.property) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) => p.clone(),
        (None, None) => {
            return Err("no property: pass --prop or set `property` in the deployment".into())
        }
    };
    let formula = parse_property(&property_text).map_err(|e| e.to_string())?;

    let runs = match (args.runs, args.eps, args.delta) {
        (Some(n), None, None) => RunCount::Fixed(n),
        (None, Some(eps), Some(delta)) => RunCount::Okamoto { eps, delta },
        (None, None, None) => RunCount::Fixed(1000),
        _ => return Err("give either --runs or --eps with --delta".into()),
    };

    let workers = match std::env::var("CPSSV_WORKERS") {
        Ok(v) => v
            .parse::<usize>()
            .map_err(|_| format!("CPSSV_WORKERS must be a number, got `{v}`"))?,
        Err(_) => args.workers,
    };

    let seed = effective_seed(args.seed);
    let cfg = SmcConfig {
        runs,
        confidence: args.confidence,
        base_seed: seed,
        workers,
        horizon: args.horizon.map(|time| Horizon {
            time,
            max_events: deployment.max_events,
        }),
        fault_policy: if args.strict_faults {
            FaultPolicy::Abort
        } else {
            FaultPolicy::CountAsViolation
        },
    };
    Ok(Estimation { formula, property_text, cfg, seed })
}

fn emit(args: &EstimationArgs, content: &str) -> Result<(), String> {
    match &args.out {
        Some(path) => std::fs::write(path, content)
            .map_err(|e| format!("cannot write {}: {e}", path.display())),
        None => {
            print!("{content}");
            std::io::stdout().flush().map_err(|e| e.to_string())
        }
    }
}

fn result_json(r: &SmcResult, seed: u64, property: &str, param: Option<f64>, stable: bool) -> serde_json::Value {
    let mut obj = serde_json::json!({
        "k": r.successes,
        "N": r.runs,
        "p_hat": r.p_hat,
        "ci_lo": r.ci_lo,
        "ci_hi": r.ci_hi,
        "confidence": r.confidence,
        "mean_sat_time": r.mean_sat_time,
        "fault_runs": r.fault_runs,
        "deadlock_runs": r.deadlock_runs,
        "wall_ms": if stable { 0 } else { r.wall_ms },
        "seed": seed,
        "property": property,
    });
    if let Some(v) = param {
        obj["param"] = serde_json::json!(v);
    }
    obj
}

fn cmd_check(model_path: &Path, deploy_path: &Path, args: &EstimationArgs) -> Result<(), String> {
    let doc = load_model(model_path)?;
    let deployment = load_deployment(deploy_path)?;
    let est = prepare(args, &deployment)?;
    let result = smc::estimate(&doc, &deployment, &est.formula, &est.cfg)
        .map_err(|e| e.to_string())?;
    if result.fault_runs > 0 {
        eprintln!(
            "warning: {} run(s) aborted on script faults and count as violations",
            result.fault_runs
        );
    }

    let content = match args.format {
        OutputFormat::Text => {
            let mut s = format!(
                "P({}) = {:.4}  [{:.4}, {:.4}] at {:.0}% confidence  (k={}, N={})\n",
                est.property_text,
                result.p_hat,
                result.ci_lo,
                result.ci_hi,
                result.confidence * 100.0,
                result.successes,
                result.runs,
            );
            if let Some(t) = result.mean_sat_time {
                s.push_str(&format!("mean satisfaction time: {t:.3} time units\n"));
            }
            if !args.no_timing {
                s.push_str(&format!("wall time: {} ms\n", result.wall_ms));
            }
            s
        }
        OutputFormat::Csv => format!(
            "{}\n{}\n",
            SmcResult::csv_header(),
            result.csv_row("-", args.no_timing)
        ),
        OutputFormat::Json => format!(
            "{}\n",
            serde_json::to_string_pretty(&result_json(
                &result,
                est.seed,
                &est.property_text,
                None,
                args.no_timing
            ))
            .expect("json")
        ),
    };
    emit(args, &content)
}

fn cmd_sweep(
    model_path: &Path,
    deploy_path: &Path,
    param: &str,
    args: &EstimationArgs,
) -> Result<(), String> {
    let doc = load_model(model_path)?;
    let deployment = load_deployment(deploy_path)?;
    let est = prepare(args, &deployment)?;

    let (name, values_text) = param
        .split_once('=')
        .ok_or_else(|| format!("--param must look like name=v1,v2,..., got `{param}`"))?;
    let values: Result<Vec<f64>, _> = values_text.split(',').map(|v| v.trim().parse::<f64>()).collect();
    let values = values.map_err(|e| format!("bad value in --param: {e}"))?;

    // An agent-class name sweeps its instance count; anything else sweeps a
    // numeric constant or global.
    let sweep_param = if doc.classes.iter().any(|c| c.name == name) {
        SweepParam::InstanceCount(name.to_string())
    } else {
        SweepParam::GlobalValue(name.to_string())
    };

    let spec = SweepSpec { param: sweep_param, values, cfg: est.cfg.clone() };
    let rows = smc::sweep(&doc, &deployment, &est.formula, &spec).map_err(|e| e.to_string())?;

    let content = match args.format {
        OutputFormat::Text | OutputFormat::Csv => smc::sweep_csv(&rows, args.no_timing),
        OutputFormat::Json => {
            let json_rows: Vec<_> = rows
                .iter()
                .map(|row| {
                    result_json(
                        &row.result,
                        est.seed,
                        &est.property_text,
                        Some(row.value),
                        args.no_timing,
                    )
                })
                .collect();
            format!(
                "{}\n",
                serde_json::to_string_pretty(&serde_json::json!({ "rows": json_rows }))
                    .expect("json")
            )
        }
    };
    emit(args, &content)
}

fn cmd_gen(scenario: GenCommand) -> Result<(), String> {
    let (doc, deployment, out_model, out_deploy) = match scenario {
        GenCommand::Flag { out_model, out_deploy } => {
            let (doc, dep) = gen_capture_flag();
            (doc, dep, out_model, out_deploy)
        }
        GenCommand::Bee { width, height, robots, start, horizon, out_model, out_deploy } => {
            let grid = GridSpec::gradient(width, height, 22.0, 36.0);
            let start = parse_bee_start(&start)?;
            let (doc, dep) = gen_honeybee(&grid, robots, start, horizon, None)
                .map_err(|e| e.to_string())?;
            (doc, dep, out_model, out_deploy)
        }
        GenCommand::City {
            buildings,
            victims,
            uavs,
            stations,
            protocol,
            distance,
            seed,
            out_model,
            out_deploy,
        } => {
            let mut spec = CitySpec::desk(seed).with_buildings(buildings);
            spec.victims = victims;
            let (doc, dep) = gen_city(&spec, uavs, stations, protocol.into(), distance)
                .map_err(|e| e.to_string())?;
            (doc, dep, out_model, out_deploy)
        }
    };
    std::fs::write(&out_model, serialize_model(&doc))
        .map_err(|e| format!("cannot write {}: {e}", out_model.display()))?;
    std::fs::write(&out_deploy, serialize_deployment(&deployment))
        .map_err(|e| format!("cannot write {}: {e}", out_deploy.display()))?;
    eprintln!("wrote {} and {}", out_model.display(), out_deploy.display());
    Ok(())
}

fn parse_bee_start(text: &str) -> Result<BeeStart, String> {
    if text == "scattered" {
        return Ok(BeeStart::Scattered);
    }
    if let Some(cell) = text.strip_prefix("cell:") {
        let (x, y) = cell
            .split_once(',')
            .ok_or_else(|| format!("expected cell:X,Y, got `{text}`"))?;
        let x = x.trim().parse().map_err(|e| format!("bad cell x: {e}"))?;
        let y = y.trim().parse().map_err(|e| format!("bad cell y: {e}"))?;
        return Ok(BeeStart::AllAtCell(x, y));
    }
    if let Some(temp) = text.strip_prefix("temp:") {
        let t = temp.trim().parse().map_err(|e| format!("bad temperature: {e}"))?;
        return Ok(BeeStart::AllAtTemperature(t));
    }
    Err(format!("--start must be scattered, cell:X,Y or temp:T, got `{text}`"))
}

//! Command-line front end: synthesize switching logic, simulate it, evaluate
//! single schedules and export the built-in systems.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use switchsynth::config::ConfigDocument;
use switchsynth::error::Error;
use switchsynth::guards::{synthesize_logic, SynthesisConfig, SynthesisReport};
use switchsynth::model::validate_system;
use switchsynth::objective::{detect_period, supersequence, Objective};
use switchsynth::simulator::{
    longrun_cost_estimate, segment_cost, simulate_guarded, simulate_scheduled, GuardedConfig,
    IntegratorConfig,
};
use switchsynth::systems::{load_named, NamedSystem, NAMED_IDS};
use switchsynth::{
    DwellSchedule, ExtendedTrajectory, HybridState, MultimodalSystem, PerformanceMetric, SwitchingLogic,
};

#[derive(Parser)]
#[command(name = "switchsynth", version, about = "Synthesize cost-optimal switching logic for multimodal systems")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn guards from optimal schedules of sampled initial states.
    Synthesize {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        output: Output,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Simulate with learned guards, reference guards or an explicit schedule.
    Simulate {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        output: Output,
        #[command(flatten)]
        overrides: Overrides,
        /// guards.json written by `synthesize`.
        #[arg(long, conflicts_with_all = ["reference", "modes"])]
        guards: Option<PathBuf>,
        /// Use the reference guards of a built-in system.
        #[arg(long, conflicts_with = "modes")]
        reference: bool,
        /// Mode sequence of an explicit schedule, e.g. `OFF,HEAT,OFF`.
        #[arg(long, value_delimiter = ',', requires = "times")]
        modes: Vec<String>,
        /// Switch times of an explicit schedule.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        times: Vec<f64>,
        /// Initial state as `MODE:v1,v2,..`; defaults to the first initial set member.
        #[arg(long)]
        init: Option<String>,
    },
    /// Print F(NZ(schedule)) and the reduced mode sequence.
    Evaluate {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        overrides: Overrides,
        /// `t_1,..,t_n,tp,tP` for the base sequence of `--switches` repetitions.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        schedule: Vec<f64>,
        #[arg(long)]
        init: Option<String>,
    },
    /// Write a system as an editable config document.
    Export {
        #[command(flatten)]
        source: Source,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the built-in systems.
    Systems,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Built-in system id.
    #[arg(long)]
    system: Option<String>,
    /// Path to a TOML system description.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct Output {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Omit the generation time so repeated runs are byte-identical.
    #[arg(long)]
    no_timestamp: bool,
}

#[derive(Args, Default)]
struct Overrides {
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    switches: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    /// Cap on the number of sampled initial states.
    #[arg(long)]
    max_inits: Option<usize>,
    /// Integration step.
    #[arg(long)]
    step: Option<f64>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl Format {
    fn ext(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// CLI failure with its exit status.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Expression { .. }
            | Error::Config(_)
            | Error::Validation(_)
            | Error::InvalidArgument(_)
            | Error::UnknownSystem(_)
            | Error::DegenerateSchedule(_) => 2,
            Error::OptimizationFailed(_) | Error::InfeasibleSchedule(_) => 3,
            Error::NonSeparable { .. } | Error::OneSidedSample(_) => 4,
            Error::Diverged { .. } | Error::ZenoSuspect { .. } => 5,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure {
            code: 1,
            message: e.to_string(),
        }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure {
            code: 2,
            message: e.to_string(),
        }
    }
}

fn fail(code: u8, message: impl Into<String>) -> Failure {
    Failure {
        code,
        message: message.into(),
    }
}

type CliResult<T = ()> = std::result::Result<T, Failure>;

/// A loaded system with the document it was built from.
struct Loaded {
    name: String,
    document: ConfigDocument,
    system: MultimodalSystem,
    metric: PerformanceMetric,
    named: Option<NamedSystem<f64>>,
    hash: String,
}

fn load(source: &Source, overrides: &Overrides) -> CliResult<Loaded> {
    let (name, mut document, named) = match (&source.system, &source.config) {
        (Some(id), _) => {
            let named = load_named::<f64>(id)?;
            (id.clone(), named.document.clone(), Some(named))
        }
        (None, Some(path)) => {
            let text = fs::read_to_string(path)
                .map_err(|e| fail(2, format!("cannot read {}: {e}", path.display())))?;
            let doc = ConfigDocument::parse(&text)?;
            let name = doc
                .name
                .clone()
                .unwrap_or_else(|| path.file_stem().unwrap_or_default().to_string_lossy().into());
            (name, doc, None)
        }
        (None, None) => return Err(fail(2, "either --system or --config is required")),
    };
    let s = &mut document.synthesis;
    if let Some(v) = overrides.horizon {
        s.horizon = v;
    }
    if let Some(v) = overrides.switches {
        s.switches = v;
    }
    if let Some(v) = overrides.restarts {
        s.restarts = v;
    }
    if let Some(v) = overrides.epsilon {
        s.epsilon = v;
    }
    if let Some(v) = overrides.delta {
        s.delta = v;
    }
    if let Some(v) = overrides.max_inits {
        s.max_init_states = v;
    }
    if let Some(v) = overrides.step {
        s.step = v;
    }
    let (system, metric) = match &named {
        Some(n) => (n.system.clone(), n.metric.clone()),
        None => document.build::<f64>()?,
    };
    let diags = validate_system(&system, &metric);
    if !diags.is_empty() {
        let list: Vec<String> = diags.iter().map(|d| d.to_string()).collect();
        return Err(fail(2, format!("invalid system: {}", list.join("; "))));
    }
    let hash = hex::encode(Sha256::digest(document.to_toml()?.as_bytes()));
    Ok(Loaded {
        name,
        document,
        system,
        metric,
        named,
        hash,
    })
}

fn parse_init(sys: &MultimodalSystem, spec: Option<&str>) -> CliResult<HybridState> {
    let Some(spec) = spec else {
        let (mode, state) = sys
            .initial_set
            .members()
            .into_iter()
            .next()
            .ok_or_else(|| fail(2, "initial set is empty"))?;
        return Ok(HybridState::new(mode, state));
    };
    let (mode, values) = spec
        .split_once(':')
        .ok_or_else(|| fail(2, format!("initial state `{spec}` must look like MODE:v1,v2")))?;
    let mode = sys
        .mode_index(mode.trim())
        .ok_or_else(|| fail(2, format!("unknown mode `{mode}`")))?;
    let state = values
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<f64>, _>>()
        .map_err(|e| fail(2, format!("bad initial state `{spec}`: {e}")))?;
    if state.len() != sys.dim() {
        return Err(fail(
            2,
            format!("initial state has {} values, system has {} variables", state.len(), sys.dim()),
        ));
    }
    Ok(HybridState::new(mode, state))
}

/// Header shared by every CSV artifact.
fn csv_preamble(l: &Loaded, seed: u64) -> String {
    format!("# system={} config_sha256={} seed={}\n", l.name, l.hash, seed)
}

fn write_trajectory(l: &Loaded, traj: &ExtendedTrajectory, path: &Path, format: Format, seed: u64) -> CliResult {
    let vars = l.system.variable_names();
    let accs: Vec<String> = l.metric.penalties.iter().chain(&l.metric.rewards).cloned().collect();
    let body = match format {
        Format::Csv => csv_preamble(l, seed) + &traj.to_csv(&l.system.modes, &vars, &accs),
        Format::Json => {
            let mut v = traj.to_json(&l.system.modes, &vars, &accs);
            v["system"] = l.name.clone().into();
            v["config_sha256"] = l.hash.clone().into();
            v["seed"] = seed.into();
            serde_json::to_string_pretty(&v)?
        }
    };
    fs::write(path, body)?;
    Ok(())
}

/// Contents of `guards.json`.
#[derive(Serialize, Deserialize)]
struct GuardsFile {
    system: String,
    config_sha256: String,
    seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    generated_at: Option<String>,
    report: SynthesisReport,
}

fn cmd_synthesize(source: &Source, output: &Output, overrides: &Overrides) -> CliResult {
    let l = load(source, overrides)?;
    fs::create_dir_all(&output.out)?;
    let cfg = SynthesisConfig::from_settings(&l.document.synthesis, output.seed);
    let result = synthesize_logic(&l.name, &l.system, &l.metric, &cfg)?;
    let report = result.report;

    let file = GuardsFile {
        system: l.name.clone(),
        config_sha256: l.hash.clone(),
        seed: output.seed,
        generated_at: (!output.no_timestamp).then(|| chrono::Utc::now().to_rfc3339()),
        report: report.clone(),
    };
    fs::write(output.out.join("guards.json"), serde_json::to_string_pretty(&file)? + "\n")?;

    let join = |v: &[f64]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(";");
    let mut csv = csv_preamble(&l, output.seed);
    csv.push_str("index,mode,state,value,cost,residual_distance,repeat_start,repeat_end,modes,times,cycle,converged,evals,error\n");
    let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
    for i in &report.inits {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            i.index,
            i.mode,
            join(&i.state),
            opt(i.value),
            opt(i.cost),
            opt(i.residual_distance),
            opt(i.repeat_start),
            opt(i.repeat_end),
            i.modes.join(";"),
            join(&i.times),
            i.cycle.join(";"),
            i.converged,
            i.evals,
            i.error.as_deref().unwrap_or("").replace(',', ";"),
        ));
    }
    fs::write(output.out.join("optima.csv"), csv)?;

    for (i, opt) in result.optima.iter().enumerate() {
        if let Ok(o) = opt {
            let path = output.out.join(format!("trajectory_{i:03}.{}", output.format.ext()));
            write_trajectory(&l, &o.summary.trajectory, &path, output.format, output.seed)?;
        }
    }

    for g in &report.guards {
        match &g.error {
            None => println!("{} -> {}: {}", g.from, g.to, g.inequality),
            Some(e) => println!("{} -> {}: not learned ({e})", g.from, g.to),
        }
    }
    println!("{}", report.statement);
    if report.learned().next().is_none() {
        return Err(fail(4, "no guard could be learned"));
    }
    Ok(())
}

/// Summary written next to a simulated trajectory.
#[derive(Serialize)]
struct SimulationReport {
    system: String,
    config_sha256: String,
    seed: u64,
    horizon: f64,
    switches: usize,
    period: Option<(f64, f64)>,
    period_cost: Option<f64>,
    longrun_estimate: Option<f64>,
    warnings: Vec<String>,
    error: Option<String>,
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    source: &Source,
    output: &Output,
    overrides: &Overrides,
    guards: Option<&Path>,
    reference: bool,
    modes: &[String],
    times: &[f64],
    init: Option<&str>,
) -> CliResult {
    let l = load(source, overrides)?;
    fs::create_dir_all(&output.out)?;
    let init = parse_init(&l.system, init)?;
    let settings = &l.document.synthesis;
    let horizon = settings.horizon;
    let result = if !modes.is_empty() {
        let seq = modes
            .iter()
            .map(|m| {
                l.system
                    .mode_index(m.trim())
                    .ok_or_else(|| fail(2, format!("unknown mode `{m}`")))
            })
            .collect::<CliResult<Vec<usize>>>()?;
        simulate_scheduled(
            &l.system,
            &l.metric,
            &init,
            &seq,
            times,
            horizon,
            &IntegratorConfig::with_step(settings.step),
            &[],
        )
    } else {
        let logic: SwitchingLogic = if reference {
            let named = l
                .named
                .as_ref()
                .ok_or_else(|| fail(2, "--reference needs a built-in --system"))?;
            named.reference_logic()?
        } else if let Some(path) = guards {
            let text = fs::read_to_string(path)
                .map_err(|e| fail(2, format!("cannot read {}: {e}", path.display())))?;
            let file: GuardsFile = serde_json::from_str(&text)?;
            if file.config_sha256 != l.hash {
                log::warn!("guards were synthesized for a different configuration");
            }
            file.report.to_logic(&l.system)?
        } else {
            SwitchingLogic::empty(l.system.num_modes())
        };
        simulate_guarded(&l.system, &l.metric, &logic, &init, horizon, &GuardedConfig::with_step(settings.step))
    };
    let (traj, error) = match result {
        Ok(t) => (t, None),
        Err(f) => (f.partial, Some(f.error)),
    };
    let path = output.out.join(format!("trajectory.{}", output.format.ext()));
    write_trajectory(&l, &traj, &path, output.format, output.seed)?;

    let period = detect_period(&traj, &l.system.periods(), 1e-4);
    let period_cost = period.and_then(|(a, b)| segment_cost(&traj, a, b).ok()).map(|c| c.segment_cost);
    let report = SimulationReport {
        system: l.name.clone(),
        config_sha256: l.hash.clone(),
        seed: output.seed,
        horizon: traj.horizon(),
        switches: traj.switches.len(),
        period,
        period_cost,
        longrun_estimate: longrun_cost_estimate(&traj, 0.5).ok(),
        warnings: traj.warnings.clone(),
        error: error.as_ref().map(|e| e.to_string()),
    };
    fs::write(output.out.join("cost.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    if let Some(c) = report.period_cost {
        println!("period cost: {c}");
    }
    if let Some(c) = report.longrun_estimate {
        println!("long-run estimate: {c}");
    }
    match error {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

fn cmd_evaluate(source: &Source, overrides: &Overrides, schedule: &[f64], init: Option<&str>) -> CliResult {
    let l = load(source, overrides)?;
    let init = parse_init(&l.system, init)?;
    let cfg = SynthesisConfig::from_settings(&l.document.synthesis, 0).objective;
    let base = supersequence(l.system.num_modes(), init.mode, cfg.switches);
    let needed = base.len() - 1 + 2;
    if schedule.len() != needed {
        return Err(fail(
            2,
            format!("schedule needs {needed} numbers (switch times, then tp and tP), got {}", schedule.len()),
        ));
    }
    let obj = Objective::with_sequence(&l.system, &l.metric, init, base, cfg);
    let n = schedule.len() - 2;
    let sched = DwellSchedule {
        raw_times: schedule[..n].to_vec(),
        repeat_start: schedule[n],
        repeat_end: schedule[n + 1],
    };
    match obj.evaluate_detailed(&sched) {
        Ok(e) => {
            println!("F = {}", e.value);
            println!("cost = {}", e.cost);
            println!("distance = {}", e.distance);
            let names: Vec<&str> = e.reduced.modes.iter().map(|&m| l.system.modes[m].as_str()).collect();
            println!("reduced modes: {}", names.join(","));
            let times: Vec<String> = e.effective_times.iter().map(|t| format!("{t}")).collect();
            println!("reduced times: {}", times.join(","));
        }
        Err(why) => {
            println!("F = {}", obj.sentinel());
            println!("infeasible: {why:?}");
        }
    }
    Ok(())
}

fn cmd_export(source: &Source, out: Option<&Path>) -> CliResult {
    let l = load(source, &Overrides::default())?;
    let text = l.document.to_toml()?;
    match out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    match &cli.command {
        Command::Synthesize {
            source,
            output,
            overrides,
        } => cmd_synthesize(source, output, overrides),
        Command::Simulate {
            source,
            output,
            overrides,
            guards,
            reference,
            modes,
            times,
            init,
        } => cmd_simulate(
            source,
            output,
            overrides,
            guards.as_deref(),
            *reference,
            modes,
            times,
            init.as_deref(),
        ),
        Command::Evaluate {
            source,
            overrides,
            schedule,
            init,
        } => cmd_evaluate(source, overrides, schedule, init.as_deref()),
        Command::Export { source, out } => cmd_export(source, out.as_deref()),
        Command::Systems => {
            for id in NAMED_IDS {
                println!("{id}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

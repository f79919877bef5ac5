//! Command-line front end: configuration, subcommands and output files.

pub mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use vodsim::analytics::{
    cascade_admit_probability, ctmc_blocking, erlang_b, max_streams, reserved_bandwidth, CascadeInputs,
    ReservedBandwidthParams,
};
use vodsim::engine::{run_all, sweep_point};
use vodsim::metrics::{blocking_probability, throughput, traffic_intensity, utilization};
use vodsim::model::{validate_control_matrix, DEFAULT_SUM_TOLERANCE};
use vodsim::reporting::{emit_plot_series, write_results_csv, FigureId};
use vodsim::traffic::generate_matrix;
use vodsim::{
    CascadeMode, ControlMatrix, HoldingDistribution, MetricsReport, OnPolicyReject, PolicyVector, Scan, Scenario,
    SweepAxis,
};

use config::{parse_list, ConfigError, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "vodsim",
    version,
    about = "Admission-control simulator for a partitioned video-on-demand server"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one scenario and write results.csv.
    Run(ScenarioArgs),
    /// Simulate one run per value of a sweep axis; writes results.csv and plot data.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// rate-scale, population-multiplier, policy-column or seed.
        #[arg(long)]
        axis: Option<String>,
        /// Comma-separated axis values.
        #[arg(long, allow_hyphen_values = true)]
        values: Option<String>,
        /// Worker threads; results do not depend on it.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Generate a random control matrix.
    GenMatrix {
        /// Rows (sections).
        #[arg(long, short = 'k', default_value_t = 20)]
        sections: usize,
        /// Columns (policy vectors).
        #[arg(long, short = 'n', default_value_t = 10)]
        columns: usize,
        #[arg(long, default_value_t = vodsim::engine::DEFAULT_SEED)]
        seed: u64,
        /// Destination file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a control matrix file; exits 1 if it has violations.
    ValidateMatrix {
        path: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SUM_TOLERANCE)]
        tolerance: f64,
    },
    /// Closed-form and exact analytic results.
    Analytic {
        #[command(subcommand)]
        which: Analytic,
    },
    /// Compare a simulated scenario with the exact Markov-chain blocking.
    Compare(ScenarioArgs),
}

#[derive(Debug, Args, Default)]
struct ScenarioArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    policy_column: Option<usize>,
    #[arg(long)]
    no_policy: bool,
    #[arg(long)]
    matrix: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Extra `key=value` settings applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Analytic {
    /// Erlang-B blocking probability.
    ErlangB {
        #[arg(long)]
        servers: u32,
        #[arg(long)]
        load: f64,
    },
    /// Largest number of streams a disk bandwidth can sustain.
    MaxStreams {
        #[arg(long)]
        disk: f64,
        #[arg(long)]
        playback: f64,
    },
    /// Admission probability along the overflow cascade.
    Cascade {
        /// Comma-separated availability probabilities, one per partition.
        #[arg(long)]
        availability: String,
        #[arg(long)]
        policy: String,
        /// 1-based home partition.
        #[arg(long, default_value_t = 1)]
        start: usize,
        #[arg(long, default_value = "wrap")]
        scan: String,
        #[arg(long, default_value = "continue")]
        on_reject: String,
    },
    /// Reserved bandwidth rate and per-link feasibility.
    ReservedBw {
        #[arg(long)]
        links: u32,
        #[arg(long)]
        active: u32,
        /// Most data (Mb) sent to any interactive session.
        #[arg(long)]
        burst: f64,
        /// Data volume (Mb) per remaining link.
        #[arg(long)]
        volume: f64,
        /// Playback duration (s).
        #[arg(long)]
        duration: f64,
        #[arg(long)]
        link_bandwidths: Option<String>,
    },
    /// Exact blocking from the occupancy Markov chain.
    Ctmc {
        #[arg(long)]
        capacities: String,
        #[arg(long)]
        policy: String,
        /// Per-class arrival rates (requests/s).
        #[arg(long)]
        rates: String,
        /// Service rate (1 / mean holding time).
        #[arg(long)]
        mu: f64,
        #[arg(long, default_value = "wrap")]
        scan: String,
        #[arg(long, default_value = "continue")]
        on_reject: String,
    },
}

/// A failure mapped to an exit status.
#[derive(Debug)]
enum Failure {
    Invalid(String),
    Config(String),
}

impl From<vodsim::Error> for Failure {
    fn from(e: vodsim::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

type CliResult = Result<(), Failure>;

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit status.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let mut stdout = std::io::stdout().lock();
    match execute(cli.command, &mut stdout) {
        Ok(()) => EXIT_OK,
        Err(Failure::Invalid(msg)) => {
            eprintln!("{msg}");
            EXIT_INVALID
        }
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            EXIT_CONFIG
        }
    }
}

fn execute(command: Command, out: &mut impl Write) -> CliResult {
    match command {
        Command::Run(args) => cmd_run(&args, out),
        Command::Sweep {
            scenario,
            axis,
            values,
            jobs,
        } => cmd_sweep(&scenario, axis, values, jobs, out),
        Command::GenMatrix {
            sections,
            columns,
            seed,
            out: path,
        } => {
            let m = generate_matrix(sections, columns, seed)?;
            match path {
                Some(p) => m.write_csv(p)?,
                None => out.write_all(m.to_csv_string().as_bytes())?,
            }
            Ok(())
        }
        Command::ValidateMatrix { path, tolerance } => {
            let m = ControlMatrix::read_csv(&path)?;
            let violations = validate_control_matrix(&m, tolerance);
            for v in &violations {
                writeln!(out, "violation: {v}")?;
            }
            writeln!(
                out,
                "rows={} columns={} violations={}",
                m.rows(),
                m.cols(),
                violations.len()
            )?;
            if violations.is_empty() {
                Ok(())
            } else {
                Err(Failure::Invalid(format!(
                    "{}: {} violation(s)",
                    path.display(),
                    violations.len()
                )))
            }
        }
        Command::Analytic { which } => cmd_analytic(which, out),
        Command::Compare(args) => cmd_compare(&args, out),
    }
}

fn resolve_config(args: &ScenarioArgs) -> Result<RunConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for (i, kv) in args.set.iter().enumerate() {
        cfg.apply_text(kv, &format!("--set #{}", i + 1))?;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(col) = args.policy_column {
        cfg.policy_column = col;
        cfg.policy_enabled = true;
    }
    if args.no_policy {
        cfg.policy_enabled = false;
    }
    if let Some(m) = &args.matrix {
        cfg.matrix = Some(m.clone());
    }
    if let Some(o) = &args.out {
        cfg.output_dir = o.clone();
    }
    Ok(cfg)
}

fn prepare_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Config(format!("{}: {e}", dir.display())))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |x| x.to_string())
}

fn write_summary(out: &mut impl Write, r: &MetricsReport) -> std::io::Result<()> {
    let b = blocking_probability(r);
    let t = throughput(r);
    writeln!(out, "scenario_id={}", r.scenario_id)?;
    writeln!(out, "arrivals={}", r.arrivals())?;
    writeln!(out, "admissions={}", r.admissions())?;
    writeln!(out, "blocks_full={}", r.blocks_full())?;
    writeln!(out, "blocks_policy={}", r.blocks_policy())?;
    writeln!(out, "blocking_prob={}", opt(b.overall))?;
    writeln!(out, "throughput_fraction={}", opt(t.fraction))?;
    writeln!(out, "throughput_rate={}", t.rate)?;
    if let Ok(rho) = traffic_intensity(r, &r.capacities, r.holding_time) {
        writeln!(out, "intensity={rho}")?;
    }
    let util: Vec<String> = utilization(r).into_iter().map(opt).collect();
    writeln!(out, "utilization={}", util.join(","))
}

fn cmd_run(args: &ScenarioArgs, out: &mut impl Write) -> CliResult {
    let cfg = resolve_config(args)?;
    let scenario = cfg.scenario()?;
    let report = vodsim::run(&scenario)?;
    prepare_dir(&cfg.output_dir)?;
    let path = cfg.output_dir.join("results.csv");
    write_results_csv(std::slice::from_ref(&report), &path)?;
    write_summary(out, &report)?;
    writeln!(out, "results={}", path.display())?;
    Ok(())
}

fn cmd_sweep(
    args: &ScenarioArgs,
    axis: Option<String>,
    values: Option<String>,
    jobs: Option<usize>,
    out: &mut impl Write,
) -> CliResult {
    let mut cfg = resolve_config(args)?;
    if let Some(a) = axis {
        cfg.set("axis", &a).map_err(Failure::Config)?;
    }
    if let Some(v) = values {
        cfg.values = parse_list(&v).map_err(|e| Failure::Config(format!("--values: {e}")))?;
    }
    if let Some(j) = jobs {
        cfg.jobs = j;
    }
    let axis = cfg
        .axis
        .ok_or_else(|| Failure::Config("sweep needs --axis (or 'axis' in the config file)".into()))?;
    if cfg.jobs == 0 {
        return Err(Failure::Config("--jobs must be at least 1".into()));
    }
    let base = cfg.scenario()?;

    let mut scenarios: Vec<Scenario> = cfg
        .values
        .iter()
        .map(|&v| sweep_point(&base, axis, v))
        .collect::<vodsim::Result<_>>()?;
    // The rate sweep doubles as the policy comparison: pair each point with
    // a run of the same traffic without the policy.
    let compare = axis == SweepAxis::RateScale && base.policy.is_enabled();
    if compare {
        let baseline = Scenario {
            id: format!("{}-nopolicy", base.id),
            policy: vodsim::PolicySource::Disabled,
            ..base.clone()
        };
        for &v in &cfg.values {
            scenarios.push(sweep_point(&baseline, axis, v)?);
        }
    }
    let reports = run_all(&scenarios, cfg.jobs)?;

    prepare_dir(&cfg.output_dir)?;
    let csv = cfg.output_dir.join("results.csv");
    let rows = write_results_csv(&reports, &csv)?;
    writeln!(out, "runs={rows}")?;
    writeln!(out, "results={}", csv.display())?;
    if reports.is_empty() {
        return Ok(());
    }

    let mut figures = Vec::new();
    match axis {
        SweepAxis::RateScale => {
            figures.push(FigureId::Intensity);
            if compare {
                figures.push(FigureId::PolicyVsNoPolicy);
            }
        }
        SweepAxis::PopulationMultiplier => figures.push(FigureId::ThroughputPopulation),
        SweepAxis::PolicyColumn => figures.push(FigureId::PolicyBlocking),
        SweepAxis::Seed => {}
    }
    for figure in figures {
        let series = if figure == FigureId::Intensity && compare {
            // Offered load does not depend on the policy; plot the policy runs.
            emit_plot_series(&reports[..cfg.values.len()], figure, &cfg.output_dir)
        } else {
            emit_plot_series(&reports, figure, &cfg.output_dir)
        };
        match series {
            Ok(series) => {
                for s in series {
                    writeln!(out, "plot={}", cfg.output_dir.join(s.file_name()).display())?;
                }
            }
            Err(e) => writeln!(out, "skipped {figure}: {e}")?,
        }
    }
    Ok(())
}

fn mode_from(scan: &str, on_reject: &str) -> Result<CascadeMode, Failure> {
    Ok(CascadeMode::new(
        scan.parse::<Scan>()?,
        on_reject.parse::<OnPolicyReject>()?,
    ))
}

fn list<T: std::str::FromStr>(flag: &str, raw: &str) -> Result<Vec<T>, Failure>
where
    T::Err: std::fmt::Display,
{
    parse_list(raw).map_err(|e| Failure::Config(format!("--{flag}: {e}")))
}

fn cmd_analytic(which: Analytic, out: &mut impl Write) -> CliResult {
    match which {
        Analytic::ErlangB { servers, load } => {
            writeln!(out, "blocking={}", erlang_b(servers, load)?)?;
        }
        Analytic::MaxStreams { disk, playback } => {
            writeln!(out, "max_streams={}", max_streams(disk, playback)?)?;
        }
        Analytic::Cascade {
            availability,
            policy,
            start,
            scan,
            on_reject,
        } => {
            if start == 0 {
                return Err(Failure::Config("--start is 1-based".into()));
            }
            let inputs = CascadeInputs {
                availability: list("availability", &availability)?,
                policy: PolicyVector::new(list("policy", &policy)?)?,
                start_class: start - 1,
                mode: mode_from(&scan, &on_reject)?,
            };
            let result = cascade_admit_probability(&inputs)?;
            writeln!(out, "partition,conditional,contribution")?;
            for s in &result.steps {
                writeln!(out, "{},{},{}", s.partition + 1, s.conditional, s.contribution)?;
            }
            writeln!(out, "total={}", result.total)?;
        }
        Analytic::ReservedBw {
            links,
            active,
            burst,
            volume,
            duration,
            link_bandwidths,
        } => {
            let params = ReservedBandwidthParams {
                links,
                active_links: active,
                burst,
                volume,
                duration,
                link_bandwidths: match link_bandwidths {
                    Some(raw) => list("link-bandwidths", &raw)?,
                    None => Vec::new(),
                },
            };
            let r = reserved_bandwidth(&params)?;
            writeln!(out, "reserved_rate={}", r.rate)?;
            if !params.link_bandwidths.is_empty() {
                writeln!(out, "feasible={}", r.feasible())?;
                let bad: Vec<String> = r.infeasible_links.iter().map(ToString::to_string).collect();
                writeln!(out, "infeasible_links={}", bad.join(","))?;
            }
        }
        Analytic::Ctmc {
            capacities,
            policy,
            rates,
            mu,
            scan,
            on_reject,
        } => {
            let caps: Vec<u32> = list("capacities", &capacities)?;
            let policy = PolicyVector::new(list("policy", &policy)?)?;
            let rates: Vec<f64> = list("rates", &rates)?;
            let s = ctmc_blocking(&caps, &policy, &rates, mu, mode_from(&scan, &on_reject)?)?;
            writeln!(out, "states={}", s.states.len())?;
            for (i, b) in s.per_class.iter().enumerate() {
                writeln!(out, "class_{}_blocking={b}", i + 1)?;
            }
            writeln!(out, "overall_blocking={}", s.overall)?;
            writeln!(out, "residual={:e}", s.residual)?;
        }
    }
    Ok(())
}

fn cmd_compare(args: &ScenarioArgs, out: &mut impl Write) -> CliResult {
    let cfg = resolve_config(args)?;
    let mut scenario = cfg.scenario()?;
    // The chain assumes exponential holding times.
    scenario.holding_distribution = HoldingDistribution::Exponential;
    let policy = scenario.policy.resolve(scenario.capacities.len())?;
    let rates = scenario.arrival_rates()?;
    let exact = ctmc_blocking(
        &scenario.capacities,
        &policy,
        &rates,
        1.0 / scenario.holding_time,
        scenario.cascade,
    )?;
    let report = vodsim::run(&scenario)?;
    let simulated = blocking_probability(&report);

    writeln!(out, "holding_distribution=exponential")?;
    writeln!(out, "class,arrivals,simulated,exact,gap")?;
    for (i, (sim, ex)) in simulated.per_class.iter().zip(&exact.per_class).enumerate() {
        let gap = sim.map(|s| (s - ex).abs());
        writeln!(
            out,
            "{},{},{},{},{}",
            i + 1,
            report.classes[i].arrivals,
            opt(*sim),
            ex,
            opt(gap)
        )?;
    }
    writeln!(out, "overall_simulated={}", opt(simulated.overall))?;
    writeln!(out, "overall_exact={}", exact.overall)?;
    writeln!(
        out,
        "overall_gap={}",
        opt(simulated.overall.map(|s| (s - exact.overall).abs()))
    )?;
    Ok(())
}

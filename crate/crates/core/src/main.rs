use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use coarq::analytic::evaluate;
use coarq::channel::{db_to_linear, linear_to_db, sr_packet_errors, ModeTable, Topology};
use coarq::config::{hiperlan2, load_json, load_mode_table};
use coarq::design::{design_link, LinkDesign};
use coarq::experiments::{run_sweep, write_csv, write_json, DbRange, Scheme, SweepSpec};
use coarq::optimizer::{optimize_adaptive, optimize_fixed, power_threshold, SearchSpec};
use coarq::sim::{simulate_topology, OutagePolicy, SimConfig, SimMode};
use coarq::{Error, Result};

const EXIT_INVALID: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;

#[derive(Parser)]
#[command(
    name = "coarq",
    version,
    about = "Adaptive modulation with cooperative ARQ over Rayleigh relay links"
)]
struct Cli {
    /// Mode table (JSON); the bundled HIPERLAN/2 table when omitted.
    #[arg(long, global = true, value_name = "FILE")]
    table: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Design the switching thresholds of one link for a target PER.
    Design(DesignArgs),
    /// Analytic performance of a pair of designs, or the optimized split when none is given.
    Evaluate(EvaluateArgs),
    /// Monte Carlo run of adaptive designs or a fixed mode pair.
    Simulate(SimulateArgs),
    /// Sweep the average S-D SNR for a set of schemes.
    Sweep(SweepArgs),
    /// Best fixed mode pair, or the power threshold of a given pair.
    Fixed(FixedArgs),
}

#[derive(Args)]
struct TopologyArgs {
    /// Average S-D SNR in dB.
    #[arg(long, allow_hyphen_values = true)]
    pbar_db: f64,
    /// Relay position as a fraction of the S-D distance.
    #[arg(long, default_value_t = 0.2)]
    d: f64,
    /// Path-loss exponent.
    #[arg(long, default_value_t = 4.0)]
    alpha: f64,
}

impl TopologyArgs {
    fn topology(&self) -> Result<Topology> {
        Topology::from_db(self.pbar_db, self.d, self.alpha)
    }
}

#[derive(Args)]
struct OutArgs {
    /// Output file; stdout when omitted.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DesignArgs {
    /// Average SNR of the link in dB.
    #[arg(long, allow_hyphen_values = true)]
    pbar_db: f64,
    /// Target average PER per mode.
    #[arg(long)]
    pt: f64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    topo: TopologyArgs,
    /// Loss budget.
    #[arg(long, default_value_t = 1e-3)]
    ploss: f64,
    /// Relay retransmission budget (used with --sd/--rd).
    #[arg(long, default_value_t = 1)]
    nr: usize,
    /// S-D design file.
    #[arg(long, value_name = "FILE", requires = "rd")]
    sd: Option<PathBuf>,
    /// R-D design file.
    #[arg(long, value_name = "FILE", requires = "sd")]
    rd: Option<PathBuf>,
    /// Candidate S-D targets in the split search.
    #[arg(long, default_value_t = SearchSpec::default().grid_points)]
    grid: usize,
    /// Include the full search trace.
    #[arg(long)]
    trace: bool,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    topo: TopologyArgs,
    /// S-D design file.
    #[arg(long, value_name = "FILE", requires = "rd", conflicts_with = "fixed")]
    sd: Option<PathBuf>,
    #[arg(long, value_name = "FILE", requires = "sd")]
    rd: Option<PathBuf>,
    /// Fixed source and relay modes, `N,M` (1-based).
    #[arg(long, value_name = "N,M", value_parser = parse_pair)]
    fixed: Option<(usize, usize)>,
    /// Relay retransmission budget.
    #[arg(long, default_value_t = 1)]
    nr: usize,
    /// Packets (cycles) to simulate.
    #[arg(long, default_value_t = 1_000_000)]
    packets: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = PolicyArg::Wait)]
    policy: PolicyArg,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep settings file (JSON); overrides every other sweep flag.
    #[arg(long, value_name = "FILE")]
    spec: Option<PathBuf>,
    /// Average S-D SNR range in dB, `start:stop:step`.
    #[arg(
        long,
        value_name = "START:STOP:STEP",
        default_value = "0:30:0.5",
        allow_hyphen_values = true
    )]
    pbar_db: String,
    #[arg(long, default_value_t = 0.2)]
    d: f64,
    #[arg(long, default_value_t = 4.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1e-3)]
    ploss: f64,
    /// Retransmission budget of the equal-target baseline.
    #[arg(long, default_value_t = 1)]
    nr: usize,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Scheme::JointAdaptive, Scheme::AmcOnly])]
    schemes: Vec<Scheme>,
    #[arg(long)]
    grid: Option<usize>,
    /// Add Monte Carlo columns with this many packets per row.
    #[arg(long, value_name = "PACKETS")]
    packets: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = PolicyArg::Wait)]
    policy: PolicyArg,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct FixedArgs {
    #[command(flatten)]
    topo: TopologyArgs,
    #[arg(long, default_value_t = 1e-3)]
    ploss: f64,
    /// Report the power threshold of this pair instead, `N,M`.
    #[arg(long, value_name = "N,M", value_parser = parse_pair)]
    threshold: Option<(usize, usize)>,
    /// Bisection bracket for --threshold in dB, `LO,HI`.
    #[arg(long, value_name = "LO,HI", value_parser = parse_bracket, default_value = "-10,60", allow_hyphen_values = true)]
    bracket_db: (f64, f64),
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Wait,
    CountAttempt,
}

impl From<PolicyArg> for OutagePolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Wait => OutagePolicy::Wait,
            PolicyArg::CountAttempt => OutagePolicy::CountAttempt,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

fn parse_pair(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected N,M, got {s:?}"))?;
    let n = a.trim().parse().map_err(|e| format!("{a:?}: {e}"))?;
    let m = b.trim().parse().map_err(|e| format!("{b:?}: {e}"))?;
    Ok((n, m))
}

fn parse_bracket(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected LO,HI, got {s:?}"))?;
    let lo = a.trim().parse().map_err(|e| format!("{a:?}: {e}"))?;
    let hi = b.trim().parse().map_err(|e| format!("{b:?}: {e}"))?;
    Ok((lo, hi))
}

enum Outcome {
    Ok,
    Infeasible(String),
}

fn output(out: &OutArgs) -> Result<Box<dyn Write>> {
    Ok(match &out.out {
        Some(path) => Box::new(BufWriter::new(File::create(path).map_err(|source| {
            Error::File {
                path: path.display().to_string(),
                source,
            }
        })?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn emit_json<T: Serialize>(value: &T, out: &OutArgs) -> Result<()> {
    let mut w = output(out)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Io(e.into()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn load_design(path: &Path) -> Result<LinkDesign> {
    load_json(path, "link design")
}

fn cmd_design(table: &ModeTable, args: &DesignArgs) -> Result<Outcome> {
    let design = design_link(table, db_to_linear(args.pbar_db), args.pt)?;
    emit_json(&design, &args.out)?;
    Ok(Outcome::Ok)
}

fn cmd_evaluate(table: &ModeTable, args: &EvaluateArgs) -> Result<Outcome> {
    let topo = args.topo.topology()?;
    if let (Some(sd), Some(rd)) = (&args.sd, &args.rd) {
        let (sd, rd) = (load_design(sd)?, load_design(rd)?);
        let eps = sr_packet_errors(table, topo.link_snrs().sr);
        let report = evaluate(&sd, &rd, &eps, args.nr, args.ploss)?;
        emit_json(&report, &args.out)?;
        return Ok(if report.feasible {
            Outcome::Ok
        } else {
            Outcome::Infeasible(format!("loss rate above {}", args.ploss))
        });
    }
    let mut search = optimize_adaptive(table, &topo, args.ploss, &SearchSpec::new(args.grid)?)?;
    if !args.trace {
        search.search_trace.clear();
    }
    emit_json(&search, &args.out)?;
    Ok(if search.is_feasible() {
        Outcome::Ok
    } else {
        Outcome::Infeasible(format!(
            "no target split meets {} at {} dB",
            args.ploss, args.topo.pbar_db
        ))
    })
}

fn cmd_simulate(table: &ModeTable, args: &SimulateArgs) -> Result<Outcome> {
    let topo = args.topo.topology()?;
    let mode = match (&args.sd, &args.rd, args.fixed) {
        (Some(sd), Some(rd), None) => SimMode::Adaptive {
            sd: load_design(sd)?,
            rd: load_design(rd)?,
        },
        (None, None, Some((n, m))) => SimMode::Fixed { n, m },
        _ => {
            return Err(Error::invalid(
                "mode",
                "give either --sd and --rd, or --fixed N,M",
            ))
        }
    };
    let config = SimConfig {
        packets: args.packets,
        seed: args.seed,
        nr: args.nr,
        outage_policy: args.policy.into(),
        mode,
    };
    let report = simulate_topology(table, &topo, &config)?;
    emit_json(&report, &args.out)?;
    Ok(Outcome::Ok)
}

fn cmd_sweep(table: &ModeTable, args: &SweepArgs) -> Result<Outcome> {
    let spec = match &args.spec {
        Some(path) => load_json::<SweepSpec>(path, "sweep spec")?,
        None => SweepSpec {
            pbar_range: args.pbar_db.parse::<DbRange>()?,
            d: args.d,
            alpha: args.alpha,
            p_loss: args.ploss,
            nr: args.nr,
            schemes: args.schemes.clone(),
            grid: args.grid,
            sim_check: args.packets,
            seed: args.seed,
            policy: args.policy.into(),
        },
    };
    let result = run_sweep(table, &spec)?;
    let mut w = output(&args.out)?;
    match args.format {
        Format::Csv => write_csv(&result.rows, &mut w)?,
        Format::Json => write_json(&result, &mut w)?,
    }
    w.flush()?;
    if let Some(gap) = &result.amc_only_gap {
        eprintln!(
            "joint-adaptive over amc-only: mean {:.4}, min {:.4}, max {:.4} bits/symbol over {} points",
            gap.mean, gap.min, gap.max, gap.points
        );
    }
    let dead = result.infeasible_everywhere();
    Ok(if dead.is_empty() {
        Outcome::Ok
    } else {
        let names: Vec<&str> = dead.iter().map(|s| s.name()).collect();
        Outcome::Infeasible(format!("infeasible at every point: {}", names.join(", ")))
    })
}

#[derive(Serialize)]
struct ThresholdReport {
    n: usize,
    m: usize,
    p_loss: f64,
    pbar_th: f64,
    pbar_th_db: f64,
}

fn cmd_fixed(table: &ModeTable, args: &FixedArgs) -> Result<Outcome> {
    if let Some((n, m)) = args.threshold {
        let pbar_th = power_threshold(
            table,
            n,
            m,
            args.topo.d,
            args.topo.alpha,
            args.ploss,
            args.bracket_db,
            1e-6,
        )?;
        emit_json(
            &ThresholdReport {
                n,
                m,
                p_loss: args.ploss,
                pbar_th,
                pbar_th_db: linear_to_db(pbar_th),
            },
            &args.out,
        )?;
        return Ok(Outcome::Ok);
    }
    let choice = optimize_fixed(table, &args.topo.topology()?, args.ploss)?;
    emit_json(&choice, &args.out)?;
    Ok(if choice.feasible {
        Outcome::Ok
    } else {
        Outcome::Infeasible(format!(
            "no mode pair meets {} at {} dB",
            args.ploss, args.topo.pbar_db
        ))
    })
}

fn run(cli: &Cli) -> Result<Outcome> {
    let table = match &cli.table {
        Some(path) => load_mode_table(path)?,
        None => hiperlan2(),
    };
    match &cli.command {
        Command::Design(a) => cmd_design(&table, a),
        Command::Evaluate(a) => cmd_evaluate(&table, a),
        Command::Simulate(a) => cmd_simulate(&table, a),
        Command::Sweep(a) => cmd_sweep(&table, a),
        Command::Fixed(a) => cmd_fixed(&table, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_INVALID)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Infeasible(why)) => {
            eprintln!("infeasible: {why}");
            ExitCode::from(EXIT_INFEASIBLE)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_INVALID)
        }
    }
}

//! Parameter sweeps over the average S-D SNR and their tabular output.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{eta_amc_only, eta_cooperative, eta_traditional, plr_cooperative};
use crate::channel::{ModeTable, Topology};
use crate::design::{avg_sr_eps, design_link, LinkDesign};
use crate::error::{Error, Result};
use crate::optimizer::{baseline_equal_target, optimize_adaptive, optimize_fixed, SearchSpec};
use crate::sim::{simulate, OutagePolicy, Scenario, SimConfig, SimMode, SimSummary};

#[derive(
    Debug,
    Clone,
    Copy,
    PartialEq,
    Eq,
    Hash,
    PartialOrd,
    Ord,
    Serialize,
    Deserialize,
    clap::ValueEnum,
)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Adaptive source and relay with the optimized target split.
    JointAdaptive,
    /// Adaptive source alone, target PER equal to the loss budget.
    AmcOnly,
    /// Best fixed mode pair.
    FixedCoop,
    /// Optimized split with the relay co-located with the source.
    Traditional,
    /// Common target for every attempt, relay co-located with the source.
    BaselineEqualTarget,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::JointAdaptive => "joint-adaptive",
            Scheme::AmcOnly => "amc-only",
            Scheme::FixedCoop => "fixed-coop",
            Scheme::Traditional => "traditional",
            Scheme::BaselineEqualTarget => "baseline-equal-target",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Inclusive dB range written `start:stop:step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DbRange {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl DbRange {
    pub fn new(start: f64, stop: f64, step: f64) -> Result<Self> {
        if !(start.is_finite() && stop.is_finite() && start < stop) {
            return Err(Error::invalid(
                "pbar_range",
                format!("need start < stop, got {start}:{stop}"),
            ));
        }
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::invalid(
                "pbar_range",
                format!("step must be positive, got {step}"),
            ));
        }
        Ok(DbRange { start, stop, step })
    }

    pub fn points(&self) -> Vec<f64> {
        let count = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=count)
            .map(|i| self.start + i as f64 * self.step)
            .collect()
    }
}

impl FromStr for DbRange {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, c] = parts.as_slice() else {
            return Err(Error::invalid(
                "pbar_range",
                format!("expected start:stop:step, got {s:?}"),
            ));
        };
        let num = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| Error::invalid("pbar_range", format!("{t:?}: {e}")))
        };
        DbRange::new(num(a)?, num(b)?, num(c)?)
    }
}

impl fmt::Display for DbRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.start, self.stop, self.step)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub pbar_range: DbRange,
    pub d: f64,
    pub alpha: f64,
    pub p_loss: f64,
    /// Retransmission budget of the equal-target baseline; the optimized
    /// schemes always use one relay attempt.
    pub nr: usize,
    pub schemes: Vec<Scheme>,
    #[serde(default)]
    pub grid: Option<usize>,
    /// Monte Carlo packets per row, if any.
    #[serde(default)]
    pub sim_check: Option<u64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub policy: OutagePolicy,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            pbar_range: DbRange {
                start: 0.0,
                stop: 30.0,
                step: 0.5,
            },
            d: 0.2,
            alpha: 4.0,
            p_loss: 1e-3,
            nr: 1,
            schemes: vec![Scheme::JointAdaptive, Scheme::AmcOnly],
            grid: None,
            sim_check: None,
            seed: 0,
            policy: OutagePolicy::Wait,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        DbRange::new(
            self.pbar_range.start,
            self.pbar_range.stop,
            self.pbar_range.step,
        )?;
        if self.schemes.is_empty() {
            return Err(Error::invalid("schemes", "at least one scheme is required"));
        }
        if !(self.p_loss > 0.0 && self.p_loss < 1.0) {
            return Err(Error::invalid(
                "p_loss",
                format!("must lie in (0, 1), got {}", self.p_loss),
            ));
        }
        if self.sim_check == Some(0) {
            return Err(Error::invalid("sim_check", "packets must be at least 1"));
        }
        // reject bad geometry before any work
        Topology::from_db(self.pbar_range.start, self.d, self.alpha)?;
        SearchSpec::new(self.grid())?;
        Ok(())
    }

    pub fn grid(&self) -> usize {
        self.grid.unwrap_or(SearchSpec::default().grid_points)
    }
}

/// Everything needed to recompute a row's analytic values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowDesigns {
    pub sd: LinkDesign,
    pub rd: LinkDesign,
    /// `ε_n` per source mode.
    pub eps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimColumns {
    pub packets: u64,
    pub seed: u64,
    #[serde(flatten)]
    pub summary: SimSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub pbar_db: f64,
    pub scheme: Scheme,
    /// Retransmission budget the row was evaluated with.
    pub nr: usize,
    pub feasible: bool,
    pub eta: Option<f64>,
    pub plr: Option<f64>,
    pub p_t_sd: Option<f64>,
    pub p_t_rd: Option<f64>,
    pub eps_bar: Option<f64>,
    /// Selected fixed modes (1-based).
    pub mode_n: Option<usize>,
    pub mode_m: Option<usize>,
    /// `η_joint − η_amc-only` on joint-adaptive rows when both are feasible.
    pub gap_vs_amc_only: Option<f64>,
    pub sim: Option<SimColumns>,
    pub designs: Option<RowDesigns>,
}

impl SweepRow {
    fn empty(pbar_db: f64, scheme: Scheme, nr: usize) -> Self {
        SweepRow {
            pbar_db,
            scheme,
            nr,
            feasible: false,
            eta: None,
            plr: None,
            p_t_sd: None,
            p_t_rd: None,
            eps_bar: None,
            mode_n: None,
            mode_m: None,
            gap_vs_amc_only: None,
            sim: None,
            designs: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSummary {
    pub points: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub spec: SweepSpec,
    pub rows: Vec<SweepRow>,
    /// Joint-adaptive over AMC-only spectral efficiency gap, bits/symbol.
    pub amc_only_gap: Option<GapSummary>,
}

impl SweepResult {
    /// Schemes that were infeasible at every swept point.
    pub fn infeasible_everywhere(&self) -> Vec<Scheme> {
        self.spec
            .schemes
            .iter()
            .copied()
            .filter(|&s| {
                self.rows
                    .iter()
                    .filter(|r| r.scheme == s)
                    .all(|r| !r.feasible)
            })
            .collect()
    }
}

fn row_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add((index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn evaluate_scheme(
    table: &ModeTable,
    spec: &SweepSpec,
    pbar_db: f64,
    scheme: Scheme,
) -> Result<SweepRow> {
    let grid = SearchSpec::new(spec.grid())?;
    let co_located = Topology::from_db(pbar_db, 0.0, spec.alpha)?;
    let topology = Topology::from_db(pbar_db, spec.d, spec.alpha)?;
    let nr = match scheme {
        Scheme::AmcOnly => 0,
        Scheme::BaselineEqualTarget => spec.nr,
        _ => 1,
    };
    let mut row = SweepRow::empty(pbar_db, scheme, nr);
    match scheme {
        Scheme::JointAdaptive | Scheme::Traditional => {
            let topo = if scheme == Scheme::Traditional {
                &co_located
            } else {
                &topology
            };
            let search = optimize_adaptive(table, topo, spec.p_loss, &grid)?;
            if let Some(opt) = search.optimum {
                row.feasible = opt.report.feasible;
                row.eta = Some(opt.report.eta);
                row.plr = opt.report.plr;
                row.p_t_sd = Some(opt.p_t_sd_star);
                row.p_t_rd = Some(opt.p_t_rd_star);
                row.eps_bar = Some(opt.report.eps_bar);
                row.designs = Some(RowDesigns {
                    sd: opt.design_sd,
                    rd: opt.design_rd,
                    eps: opt.eps,
                });
            }
        }
        Scheme::AmcOnly => {
            let snrs = topology.link_snrs();
            let sd = design_link(table, snrs.mean_sd, spec.p_loss)?;
            let plr = sd.avg_per()?;
            row.feasible = plr <= spec.p_loss;
            row.eta = Some(eta_amc_only(&sd));
            row.plr = Some(plr);
            row.p_t_sd = Some(spec.p_loss);
            let eps = crate::channel::sr_packet_errors(table, snrs.sr);
            row.eps_bar = Some(avg_sr_eps(&sd, &eps)?);
            row.designs = Some(RowDesigns {
                rd: sd.clone(),
                sd,
                eps,
            });
        }
        Scheme::FixedCoop => {
            let choice = optimize_fixed(table, &topology, spec.p_loss)?;
            let snrs = topology.link_snrs();
            let sd = LinkDesign::fixed_mode(table, choice.n, snrs.mean_sd)?;
            let rd = LinkDesign::fixed_mode(table, choice.m, snrs.mean_rd)?;
            let eps = crate::channel::sr_packet_errors(table, snrs.sr);
            row.feasible = choice.feasible;
            row.eta = Some(choice.eta);
            row.plr = Some(choice.plr);
            row.eps_bar = Some(eps[choice.n - 1]);
            row.mode_n = Some(choice.n);
            row.mode_m = Some(choice.m);
            row.designs = Some(RowDesigns { sd, rd, eps });
        }
        Scheme::BaselineEqualTarget => {
            let (design, report) = baseline_equal_target(table, &co_located, spec.p_loss, spec.nr)?;
            row.feasible = report.feasible;
            row.eta = Some(report.eta);
            row.plr = report.plr;
            row.p_t_sd = Some(design.target_per.unwrap_or(spec.p_loss));
            row.p_t_rd = row.p_t_sd;
            row.eps_bar = Some(0.0);
            let eps = vec![0.0; table.len()];
            row.designs = Some(RowDesigns {
                sd: design.clone(),
                rd: design,
                eps,
            });
        }
    }
    Ok(row)
}

fn sim_row(
    table: &ModeTable,
    spec: &SweepSpec,
    row: &SweepRow,
    index: usize,
) -> Result<Option<SimColumns>> {
    let (Some(packets), Some(designs)) = (spec.sim_check, row.designs.as_ref()) else {
        return Ok(None);
    };
    let scenario = Scenario {
        mean_sd: designs.sd.mean_snr,
        mean_rd: designs.rd.mean_snr,
        eps: designs.eps.clone(),
    };
    let mode = match (row.mode_n, row.mode_m) {
        (Some(n), Some(m)) => SimMode::Fixed { n, m },
        _ => SimMode::Adaptive {
            sd: designs.sd.clone(),
            rd: designs.rd.clone(),
        },
    };
    let seed = row_seed(spec.seed, index);
    let config = SimConfig {
        packets,
        seed,
        nr: row.nr,
        outage_policy: spec.policy,
        mode,
    };
    let stats = simulate(table, &scenario, &config)?;
    Ok(Some(SimColumns {
        packets,
        seed,
        summary: stats.summary(),
    }))
}

pub fn run_sweep(table: &ModeTable, spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    let mut schemes: Vec<Scheme> = Vec::new();
    for &s in &spec.schemes {
        if !schemes.contains(&s) {
            schemes.push(s);
        }
    }
    let jobs: Vec<(f64, Scheme)> = spec
        .pbar_range
        .points()
        .into_iter()
        .flat_map(|p| schemes.iter().map(move |&s| (p, s)))
        .collect();
    let mut rows = jobs
        .par_iter()
        .enumerate()
        .map(|(i, &(p, s))| {
            let mut row = evaluate_scheme(table, spec, p, s)?;
            row.sim = sim_row(table, spec, &row, i)?;
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut gaps = Vec::new();
    if schemes.contains(&Scheme::AmcOnly) {
        let per_point = schemes.len();
        for chunk in rows.chunks_mut(per_point) {
            let eta_of = |c: &[SweepRow], s| {
                c.iter()
                    .find(|r| r.scheme == s && r.feasible)
                    .and_then(|r| r.eta)
            };
            let (Some(joint), Some(amc)) = (
                eta_of(chunk, Scheme::JointAdaptive),
                eta_of(chunk, Scheme::AmcOnly),
            ) else {
                continue;
            };
            let gap = joint - amc;
            gaps.push(gap);
            if let Some(r) = chunk.iter_mut().find(|r| r.scheme == Scheme::JointAdaptive) {
                r.gap_vs_amc_only = Some(gap);
            }
        }
    }
    let amc_only_gap = (!gaps.is_empty()).then(|| GapSummary {
        points: gaps.len(),
        mean: gaps.iter().sum::<f64>() / gaps.len() as f64,
        min: gaps.iter().copied().fold(f64::INFINITY, f64::min),
        max: gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    });
    Ok(SweepResult {
        spec: spec.clone(),
        rows,
        amc_only_gap,
    })
}

/// Analytic `(η, PLR)` of a row rebuilt from its serialized designs alone.
pub fn recompute_row(row: &SweepRow) -> Result<Option<(f64, Option<f64>)>> {
    let Some(d) = &row.designs else {
        return Ok(None);
    };
    let values = match row.scheme {
        Scheme::AmcOnly => (eta_amc_only(&d.sd), Some(d.sd.avg_per()?)),
        Scheme::BaselineEqualTarget => {
            let plr = (row.nr == 1)
                .then(|| plr_cooperative(&d.sd, &d.sd, &d.eps))
                .transpose()?;
            (eta_traditional(&d.sd, row.nr)?, plr)
        }
        Scheme::JointAdaptive | Scheme::Traditional | Scheme::FixedCoop => (
            eta_cooperative(&d.sd, &d.rd, &d.eps, row.nr)?,
            Some(plr_cooperative(&d.sd, &d.rd, &d.eps)?),
        ),
    };
    Ok(Some(values))
}

pub const CSV_HEADER: [&str; 17] = [
    "pbar_db",
    "scheme",
    "nr",
    "feasible",
    "eta_bits_per_symbol",
    "plr",
    "p_t_sd",
    "p_t_rd",
    "eps_bar",
    "mode_n",
    "mode_m",
    "gap_vs_amc_only_bits_per_symbol",
    "sim_packets",
    "eta_hat_bits_per_symbol",
    "eta_se_bits_per_symbol",
    "plr_hat",
    "plr_se",
];

/// Shortest round-trip text, in exponent form outside `[1e-4, 1e15)`.
pub fn format_float(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-4..1e15).contains(&a) {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

fn int_cell<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        let sim = r.sim.as_ref();
        w.write_record([
            format_float(r.pbar_db),
            r.scheme.to_string(),
            r.nr.to_string(),
            r.feasible.to_string(),
            cell(r.eta),
            cell(r.plr),
            cell(r.p_t_sd),
            cell(r.p_t_rd),
            cell(r.eps_bar),
            int_cell(r.mode_n),
            int_cell(r.mode_m),
            cell(r.gap_vs_amc_only),
            int_cell(sim.map(|s| s.packets)),
            cell(sim.map(|s| s.summary.eta_hat)),
            cell(sim.map(|s| s.summary.eta_se)),
            cell(sim.map(|s| s.summary.plr_hat)),
            cell(sim.map(|s| s.summary.plr_se)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<W: Write>(result: &SweepResult, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, result).map_err(|e| Error::Io(e.into()))?;
    writeln!(out)?;
    Ok(())
}

//! Target-PER split search for adaptive cooperative ARQ, fixed-rate mode
//! selection, the fixed-rate power threshold and the equal-target baseline.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{
    eta_fixed, eta_traditional, evaluate, plr_cooperative, plr_fixed, PerformanceReport,
};
use crate::channel::{db_to_linear, sr_packet_errors, LinkSnrs, ModeTable, Topology};
use crate::design::{avg_sr_eps, design_link, LinkDesign};
use crate::error::{Error, Result};

pub const DEFAULT_GRID_POINTS: usize = 200;

/// Candidate set for the source-destination target PER.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchSpec {
    /// Number of log-spaced candidates strictly inside `(p_loss, 1)`.
    pub grid_points: usize,
}

impl Default for SearchSpec {
    fn default() -> Self {
        SearchSpec {
            grid_points: DEFAULT_GRID_POINTS,
        }
    }
}

impl SearchSpec {
    pub fn new(grid_points: usize) -> Result<Self> {
        if grid_points < 2 {
            return Err(Error::invalid(
                "grid",
                format!("need at least 2 points, got {grid_points}"),
            ));
        }
        Ok(SearchSpec { grid_points })
    }

    /// `p_loss^{1 − i/(K+1)}` for `i = 1..=K`.
    ///
    /// A grid with `K+1` intervals is a subset of one with `c·(K+1)`
    /// intervals: both compute the exponent from the same rational.
    pub fn candidates(&self, p_loss: f64) -> Vec<f64> {
        let k = self.grid_points;
        let ln = p_loss.ln();
        (1..=k)
            .map(|i| {
                let frac = i as f64 / (k + 1) as f64;
                (ln * (1.0 - frac)).exp()
            })
            .filter(|&p| p > p_loss && p < 1.0)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SkipReason {
    /// Splitting the loss budget left a relay target outside `(0, 1)`.
    RelayTargetOutOfRange,
    SourceAllOutage,
    DesignFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub p_t_sd: f64,
    pub eps_bar: Option<f64>,
    pub p_t_rd: Option<f64>,
    pub eta: Option<f64>,
    pub plr: Option<f64>,
    pub feasible: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<SkipReason>,
}

impl TraceEntry {
    fn skipped(p_t_sd: f64, eps_bar: Option<f64>, p_t_rd: Option<f64>, why: SkipReason) -> Self {
        TraceEntry {
            p_t_sd,
            eps_bar,
            p_t_rd,
            eta: None,
            plr: None,
            feasible: false,
            skipped: Some(why),
        }
    }
}

/// The selected split together with its designs and analytic report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizedSystem {
    pub p_t_sd_star: f64,
    pub p_t_rd_star: f64,
    pub design_sd: LinkDesign,
    pub design_rd: LinkDesign,
    /// `ε_n` per source mode.
    pub eps: Vec<f64>,
    pub report: PerformanceReport,
}

/// Outcome of the split search; `optimum` is `None` when no candidate meets
/// the loss constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveSearch {
    pub optimum: Option<OptimizedSystem>,
    pub search_trace: Vec<TraceEntry>,
}

impl AdaptiveSearch {
    pub fn is_feasible(&self) -> bool {
        self.optimum.is_some()
    }
}

fn check_p_loss(p_loss: f64) -> Result<()> {
    if p_loss > 0.0 && p_loss < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(
            "p_loss",
            format!("must lie in (0, 1), got {p_loss}"),
        ))
    }
}

struct Candidate {
    entry: TraceEntry,
    system: Option<OptimizedSystem>,
}

fn evaluate_candidate(
    table: &ModeTable,
    snrs: &LinkSnrs,
    eps: &[f64],
    p_loss: f64,
    p_t_sd: f64,
) -> Candidate {
    let skip = |eps_bar, p_t_rd, why| Candidate {
        entry: TraceEntry::skipped(p_t_sd, eps_bar, p_t_rd, why),
        system: None,
    };
    let Ok(design_sd) = design_link(table, snrs.mean_sd, p_t_sd) else {
        return skip(None, None, SkipReason::DesignFailed);
    };
    let Ok(eps_bar) = avg_sr_eps(&design_sd, eps) else {
        return skip(None, None, SkipReason::SourceAllOutage);
    };
    let p_t_rd = (p_loss - eps_bar * p_t_sd) / (p_t_sd * (1.0 - eps_bar));
    if !(p_t_rd > 0.0 && p_t_rd < 1.0) {
        return skip(
            Some(eps_bar),
            Some(p_t_rd),
            SkipReason::RelayTargetOutOfRange,
        );
    }
    let Ok(design_rd) = design_link(table, snrs.mean_rd, p_t_rd) else {
        return skip(Some(eps_bar), Some(p_t_rd), SkipReason::DesignFailed);
    };
    let Ok(report) = evaluate(&design_sd, &design_rd, eps, 1, p_loss) else {
        return skip(Some(eps_bar), Some(p_t_rd), SkipReason::DesignFailed);
    };
    let entry = TraceEntry {
        p_t_sd,
        eps_bar: Some(eps_bar),
        p_t_rd: Some(p_t_rd),
        eta: Some(report.eta),
        plr: report.plr,
        feasible: report.feasible,
        skipped: None,
    };
    let system = report.feasible.then(|| OptimizedSystem {
        p_t_sd_star: p_t_sd,
        p_t_rd_star: p_t_rd,
        design_sd,
        design_rd,
        eps: eps.to_vec(),
        report,
    });
    Candidate { entry, system }
}

/// Search the source target PER over the grid, splitting the loss budget
/// between the two links for one relay retransmission, and keep the split
/// with the highest spectral efficiency whose exact loss rate meets `p_loss`.
///
/// Ties keep the smallest source target.
pub fn optimize_adaptive(
    table: &ModeTable,
    topology: &Topology,
    p_loss: f64,
    grid: &SearchSpec,
) -> Result<AdaptiveSearch> {
    optimize_adaptive_over(
        table,
        &topology.link_snrs(),
        p_loss,
        &grid.candidates(p_loss),
    )
}

/// Split search over an explicit candidate list.
pub fn optimize_adaptive_over(
    table: &ModeTable,
    snrs: &LinkSnrs,
    p_loss: f64,
    candidates: &[f64],
) -> Result<AdaptiveSearch> {
    check_p_loss(p_loss)?;
    if let Some(bad) = candidates.iter().find(|&&p| !(p > p_loss && p < 1.0)) {
        return Err(Error::invalid(
            "grid",
            format!("candidate {bad} lies outside ({p_loss}, 1)"),
        ));
    }
    let eps = sr_packet_errors(table, snrs.sr);
    let evaluated: Vec<Candidate> = candidates
        .par_iter()
        .map(|&p| evaluate_candidate(table, snrs, &eps, p_loss, p))
        .collect();

    let mut optimum: Option<OptimizedSystem> = None;
    let mut trace = Vec::with_capacity(evaluated.len());
    for c in evaluated {
        if let Some(sys) = c.system {
            if optimum
                .as_ref()
                .is_none_or(|best| sys.report.eta > best.report.eta)
            {
                optimum = Some(sys);
            }
        }
        trace.push(c.entry);
    }
    Ok(AdaptiveSearch {
        optimum,
        search_trace: trace,
    })
}

/// Fixed-rate mode pair chosen from channel statistics only.
///
/// When no pair meets the constraint, `(n, m)` is the pair with the lowest
/// loss rate and `feasible` is false.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedChoice {
    /// Source mode (1-based).
    pub n: usize,
    /// Relay mode (1-based).
    pub m: usize,
    pub eta: f64,
    pub plr: f64,
    pub feasible: bool,
}

/// Exhaustive search over all `(n, m)` pairs; ties keep the first pair in
/// lexicographic order.
pub fn optimize_fixed(table: &ModeTable, topology: &Topology, p_loss: f64) -> Result<FixedChoice> {
    optimize_fixed_at(table, &topology.link_snrs(), p_loss)
}

pub fn optimize_fixed_at(table: &ModeTable, snrs: &LinkSnrs, p_loss: f64) -> Result<FixedChoice> {
    if !(p_loss > 0.0 && p_loss <= 1.0) {
        return Err(Error::invalid(
            "p_loss",
            format!("must lie in (0, 1], got {p_loss}"),
        ));
    }
    let mut best: Option<FixedChoice> = None;
    let mut safest: Option<FixedChoice> = None;
    for n in 1..=table.len() {
        for m in 1..=table.len() {
            let plr = plr_fixed(table, n, m, snrs)?;
            let eta = eta_fixed(table, n, m, snrs)?;
            let choice = FixedChoice {
                n,
                m,
                eta,
                plr,
                feasible: plr <= p_loss,
            };
            if choice.feasible && best.is_none_or(|b| eta > b.eta) {
                best = Some(choice);
            }
            if safest.is_none_or(|s| plr < s.plr) {
                safest = Some(choice);
            }
        }
    }
    Ok(best.or(safest).expect("mode table is non-empty"))
}

/// Transmit power (linear) above which the fixed pair `(n, m)` meets `p_loss`.
///
/// Bisects in dB over `bracket_db` to `tol_db`; the returned point is on the
/// feasible side.
#[allow(clippy::too_many_arguments)]
pub fn power_threshold(
    table: &ModeTable,
    n: usize,
    m: usize,
    d: f64,
    alpha: f64,
    p_loss: f64,
    bracket_db: (f64, f64),
    tol_db: f64,
) -> Result<f64> {
    let (mut lo, mut hi) = bracket_db;
    if lo.is_nan() || hi.is_nan() || lo >= hi || tol_db.is_nan() || tol_db <= 0.0 {
        return Err(Error::invalid(
            "bracket",
            format!("need lo < hi and tol > 0, got {bracket_db:?}, {tol_db}"),
        ));
    }
    let plr_at = |db: f64| -> Result<f64> {
        let snrs = Topology::from_db(db, d, alpha)?.link_snrs();
        plr_fixed(table, n, m, &snrs)
    };
    if plr_at(lo)? <= p_loss {
        return Ok(db_to_linear(lo));
    }
    if plr_at(hi)? > p_loss {
        return Err(Error::BracketNotStraddling {
            lo_db: lo,
            hi_db: hi,
            target: p_loss,
        });
    }
    while hi - lo > tol_db {
        let mid = 0.5 * (lo + hi);
        if plr_at(mid)? <= p_loss {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(db_to_linear(hi))
}

/// Traditional ARQ with one common per-attempt target `p_loss^{1/(nr+1)}`.
///
/// Only meaningful for the co-located relay (`d = 0`), where cooperative
/// retransmission reduces to traditional ARQ.
pub fn baseline_equal_target(
    table: &ModeTable,
    topology: &Topology,
    p_loss: f64,
    nr: usize,
) -> Result<(LinkDesign, PerformanceReport)> {
    check_p_loss(p_loss)?;
    if topology.d != 0.0 {
        return Err(Error::invalid(
            "d",
            "the equal-target baseline needs a co-located relay (d = 0)",
        ));
    }
    let p_t = p_loss.powf(1.0 / (nr as f64 + 1.0));
    let design = design_link(table, topology.pbar, p_t)?;
    let eta = eta_traditional(&design, nr)?;
    let zeros = vec![0.0; design.mode_count()];
    let plr = if nr == 1 {
        Some(plr_cooperative(&design, &design, &zeros)?)
    } else {
        None
    };
    let report = PerformanceReport {
        eta,
        plr,
        // every attempt fails with probability at most p_t
        feasible: plr.is_none_or(|p| p <= p_loss),
        nr,
        eps_bar: 0.0,
        p_loss,
    };
    Ok((design, report))
}

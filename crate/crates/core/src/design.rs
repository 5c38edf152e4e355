//! Per-link switching thresholds and the mode statistics they induce.
//!
//! A link design partitions the SNR axis as `[0, γ_1) ∪ [γ_1, γ_2) ∪ … ∪
//! [γ_N, ∞)`, the first interval being outage. Thresholds are obtained by
//! inverting the instantaneous PER law at the target, so every frame sent in
//! mode `n` has PER at most the target and so does the interval average.

use serde::{Deserialize, Serialize};

use crate::channel::{
    interval_avg_per, linear_to_db, per_instant, rayleigh_interval_prob, AmcMode, ModeTable,
};
use crate::error::{Error, Result};
use crate::serde_ext::{ext_f64, ext_f64_vec};

/// Switching thresholds of one link together with the mode probabilities
/// and per-mode average PERs they imply.
///
/// Vectors indexed by mode are 0-based (`[0]` is mode 1), except
/// `mode_prob`, whose entry 0 is the outage probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "LinkDesignRecord", try_from = "LinkDesignRecord")]
pub struct LinkDesign {
    /// Lower edge of each mode's SNR region (linear, non-decreasing; may be `+∞`).
    pub thresholds: Vec<f64>,
    /// `P_0` (outage) followed by `P_1..P_N`.
    pub mode_prob: Vec<f64>,
    /// Average PER of each mode over its region; 0 for inactive modes.
    pub mode_avg_per: Vec<f64>,
    /// Whether the mode's region is non-empty.
    pub active: Vec<bool>,
    pub rates: Vec<f64>,
    /// `None` for a single mode forced over the whole SNR axis.
    pub target_per: Option<f64>,
    pub mean_snr: f64,
}

impl LinkDesign {
    /// Rebuilds the statistics implied by `thresholds` on a link of mean `mean_snr`.
    pub fn from_thresholds(
        table: &ModeTable,
        mean_snr: f64,
        thresholds: Vec<f64>,
        target_per: Option<f64>,
    ) -> Result<Self> {
        if !(mean_snr.is_finite() && mean_snr > 0.0) {
            return Err(Error::invalid(
                "mean_snr",
                format!("must be positive, got {mean_snr}"),
            ));
        }
        if thresholds.len() != table.len() {
            return Err(Error::invalid(
                "thresholds",
                format!("expected {} entries, got {}", table.len(), thresholds.len()),
            ));
        }
        if thresholds.iter().any(|t| t.is_nan() || *t < 0.0) {
            return Err(Error::invalid("thresholds", "must be non-negative"));
        }
        if thresholds.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid("thresholds", "must be non-decreasing"));
        }

        let n = table.len();
        let mut mode_prob = Vec::with_capacity(n + 1);
        mode_prob.push(rayleigh_interval_prob(mean_snr, 0.0, thresholds[0])?);
        let mut mode_avg_per = Vec::with_capacity(n);
        let mut active = Vec::with_capacity(n);
        for (i, mode) in table.modes().iter().enumerate() {
            let lo = thresholds[i];
            let hi = thresholds.get(i + 1).copied().unwrap_or(f64::INFINITY);
            if lo < hi {
                active.push(true);
                mode_prob.push(rayleigh_interval_prob(mean_snr, lo, hi)?);
                mode_avg_per.push(interval_avg_per(mode, mean_snr, lo, hi)?);
            } else {
                active.push(false);
                mode_prob.push(0.0);
                mode_avg_per.push(0.0);
            }
        }

        Ok(LinkDesign {
            thresholds,
            mode_prob,
            mode_avg_per,
            active,
            rates: table.rates(),
            target_per,
            mean_snr,
        })
    }

    /// Degenerate design that always transmits in mode `number` (1-based),
    /// including below its cutoff. This is the fixed-rate operating point.
    pub fn fixed_mode(table: &ModeTable, number: usize, mean_snr: f64) -> Result<Self> {
        if table.mode(number).is_none() {
            return Err(Error::invalid(
                "mode",
                format!("must lie in 1..={}, got {number}", table.len()),
            ));
        }
        let thresholds = (1..=table.len())
            .map(|k| if k <= number { 0.0 } else { f64::INFINITY })
            .collect();
        LinkDesign::from_thresholds(table, mean_snr, thresholds, None)
    }

    pub fn mode_count(&self) -> usize {
        self.thresholds.len()
    }

    pub fn outage_prob(&self) -> f64 {
        self.mode_prob[0]
    }

    /// `Σ_{n≥1} P_n`, the probability that the link transmits.
    pub fn transmit_prob(&self) -> f64 {
        self.mode_prob[1..].iter().sum()
    }

    /// 0-based mode selected at instantaneous SNR `snr`, `None` in outage.
    pub fn select_mode(&self, snr: f64) -> Option<usize> {
        self.thresholds
            .partition_point(|&t| t <= snr)
            .checked_sub(1)
    }

    /// Average PER over transmitted frames, `Σ PER̄_n P_n / Σ P_n`.
    pub fn avg_per(&self) -> Result<f64> {
        let tx = self.transmit_prob();
        if tx == 0.0 {
            return Err(Error::AllOutage { link: "this" });
        }
        let weighted: f64 = self.mode_prob[1..]
            .iter()
            .zip(&self.mode_avg_per)
            .map(|(p, e)| p * e)
            .sum();
        Ok(weighted / tx)
    }
}

/// Smallest SNR at which `mode` meets instantaneous PER `p_t`.
pub fn threshold_for_target(mode: &AmcMode, p_t: f64) -> f64 {
    let inverted = (mode.fit_a / p_t).ln() / mode.fit_g;
    if inverted > mode.cutoff {
        inverted
    } else {
        mode.cutoff
    }
}

fn check_target(p_t: f64) -> Result<()> {
    if p_t > 0.0 && p_t < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(
            "p_t",
            format!("target PER must lie in (0, 1), got {p_t}"),
        ))
    }
}

/// Design one link for per-mode target PER `p_t`.
///
/// A mode whose inverted threshold is not below that of some faster mode is
/// dominated: its region collapses and it is kept as an inactive entry.
pub fn design_link(table: &ModeTable, mean_snr: f64, p_t: f64) -> Result<LinkDesign> {
    check_target(p_t)?;
    let mut thresholds: Vec<f64> = table
        .modes()
        .iter()
        .map(|m| threshold_for_target(m, p_t))
        .collect();
    // suffix minimum: mode n starts where no faster mode is already usable
    for i in (0..thresholds.len().saturating_sub(1)).rev() {
        thresholds[i] = thresholds[i].min(thresholds[i + 1]);
    }
    let design = LinkDesign::from_thresholds(table, mean_snr, thresholds, Some(p_t))?;
    if !design.active.iter().any(|&a| a) {
        return Err(Error::invalid("modes", "every mode is dominated"));
    }
    Ok(design)
}

/// Average S-R packet error `ε̄` over the source's transmitting modes.
pub fn avg_sr_eps(design_sd: &LinkDesign, eps: &[f64]) -> Result<f64> {
    if eps.len() != design_sd.mode_count() {
        return Err(Error::invalid(
            "eps",
            format!(
                "expected {} entries, got {}",
                design_sd.mode_count(),
                eps.len()
            ),
        ));
    }
    if eps.iter().any(|e| !(0.0..=1.0).contains(e)) {
        return Err(Error::invalid("eps", "entries must lie in [0, 1]"));
    }
    let tx = design_sd.transmit_prob();
    if tx == 0.0 {
        return Err(Error::AllOutage {
            link: "source-destination",
        });
    }
    let weighted: f64 = design_sd.mode_prob[1..]
        .iter()
        .zip(eps)
        .map(|(p, e)| p * e)
        .sum();
    Ok(weighted / tx)
}

/// Whether `design` is internally consistent with `table`: rebuilding from the
/// thresholds reproduces the stored statistics within `tol`.
pub fn is_consistent(design: &LinkDesign, table: &ModeTable, tol: f64) -> bool {
    let Ok(rebuilt) = LinkDesign::from_thresholds(
        table,
        design.mean_snr,
        design.thresholds.clone(),
        design.target_per,
    ) else {
        return false;
    };
    let close = |a: &[f64], b: &[f64]| {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    };
    close(&rebuilt.mode_prob, &design.mode_prob)
        && close(&rebuilt.mode_avg_per, &design.mode_avg_per)
        && rebuilt.active == design.active
        && rebuilt.rates == design.rates
}

/// Instantaneous PER at the left edge of each active region; an upper bound
/// on the corresponding interval average.
pub fn edge_per(design: &LinkDesign, table: &ModeTable) -> Vec<Option<f64>> {
    table
        .modes()
        .iter()
        .enumerate()
        .map(|(i, m)| design.active[i].then(|| per_instant(m, design.thresholds[i])))
        .collect()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkDesignRecord {
    #[serde(with = "ext_f64")]
    mean_snr: f64,
    #[serde(with = "ext_f64")]
    mean_snr_db: f64,
    target_per: Option<f64>,
    rates: Vec<f64>,
    #[serde(with = "ext_f64_vec")]
    thresholds: Vec<f64>,
    #[serde(with = "ext_f64_vec")]
    thresholds_db: Vec<f64>,
    active: Vec<bool>,
    mode_prob: Vec<f64>,
    mode_avg_per: Vec<f64>,
}

impl From<LinkDesign> for LinkDesignRecord {
    fn from(d: LinkDesign) -> Self {
        LinkDesignRecord {
            mean_snr: d.mean_snr,
            mean_snr_db: linear_to_db(d.mean_snr),
            target_per: d.target_per,
            rates: d.rates,
            thresholds_db: d.thresholds.iter().map(|&t| linear_to_db(t)).collect(),
            thresholds: d.thresholds,
            active: d.active,
            mode_prob: d.mode_prob,
            mode_avg_per: d.mode_avg_per,
        }
    }
}

impl TryFrom<LinkDesignRecord> for LinkDesign {
    type Error = String;

    fn try_from(r: LinkDesignRecord) -> std::result::Result<Self, String> {
        let n = r.thresholds.len();
        if n == 0 {
            return Err("thresholds: at least one mode is required".into());
        }
        if r.rates.len() != n
            || r.active.len() != n
            || r.mode_avg_per.len() != n
            || r.mode_prob.len() != n + 1
        {
            return Err(format!(
                "inconsistent lengths: {n} thresholds, {} rates, {} active, {} mode_avg_per, {} mode_prob (expected N+1)",
                r.rates.len(),
                r.active.len(),
                r.mode_avg_per.len(),
                r.mode_prob.len()
            ));
        }
        if r.thresholds.windows(2).any(|w| w[1] < w[0]) {
            return Err("thresholds: must be non-decreasing".into());
        }
        if !(r.mean_snr.is_finite() && r.mean_snr > 0.0) {
            return Err(format!("mean_snr: must be positive, got {}", r.mean_snr));
        }
        Ok(LinkDesign {
            thresholds: r.thresholds,
            mode_prob: r.mode_prob,
            mode_avg_per: r.mode_avg_per,
            active: r.active,
            rates: r.rates,
            target_per: r.target_per,
            mean_snr: r.mean_snr,
        })
    }
}

//! Closed-form spectral efficiency and packet loss rate.
//!
//! Spectral efficiency is `E[N_p / L]` per slot, where `L` is the number of
//! symbols a packet cycle consumes: `N_p/R_n` for the source transmission plus
//! `N_p/R_m` for every relay retransmission actually sent. Source outage
//! slots contribute zero. Bits of packets that end up lost still count.
//!
//! The expectation is evaluated by enumerating every terminal event of a
//! cycle: the packet cycle ends after the source frame (delivered, or the
//! relay failed to decode it), after a successful relay attempt `l`, or when
//! the retransmission budget runs out.

use serde::{Deserialize, Serialize};

use crate::channel::{full_avg_per, sr_packet_error, LinkSnrs, ModeTable};
use crate::design::{avg_sr_eps, LinkDesign};
use crate::error::{Error, Result};

/// Largest retransmission budget the enumeration accepts.
pub const MAX_ENUMERATED_RETRANSMISSIONS: usize = 4;

/// How the relay's per-attempt mode law treats R-D outage frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RelayModeLaw {
    /// The relay waits for a non-outage frame; mode `m` has probability
    /// `P_m / (1 − P_0)`. Matches the simulator's `wait` policy.
    #[default]
    Conditional,
    /// An outage frame uses up the attempt, sends nothing and fails.
    /// Matches the simulator's `count-attempt` policy.
    CountAttempt,
    /// Mode probabilities `P_m` enter unnormalised and outage paths are
    /// dropped. Kept only for comparison; its event masses do not sum to one.
    Unnormalized,
}

/// Which algebraic form of the `N_r = 1` loss rate to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlrVariant {
    /// `A·B + C·(1 − B)` with `A = avg PER_sd`, `B = avg PER_rd` and
    /// `C = avg ε·PER_sd`. This is the exact loss rate of the protocol.
    #[default]
    Printed,
    /// Same, with the first product weighted by `(1 − ε_n)`:
    /// `A'·B + C·(1 − B)` where `A' = avg (1−ε)·PER_sd`.
    WeightedFirstTerm,
}

/// Analytic performance of one operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceReport {
    /// Bits per symbol.
    pub eta: f64,
    /// `None` when no closed form exists for the retransmission budget.
    pub plr: Option<f64>,
    /// `plr ≤ p_loss`, or guaranteed by construction when `plr` is `None`.
    pub feasible: bool,
    pub nr: usize,
    pub eps_bar: f64,
    pub p_loss: f64,
}

/// Probabilities of the terminal events of a cycle, conditional on the
/// source transmitting, plus the unconditional spectral efficiency.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleEvents {
    pub eta: f64,
    /// Probability the source transmits (`Σ P_n^sd`).
    pub transmit_prob: f64,
    /// Cycle ends after the source frame: delivered directly, or lost
    /// because neither destination nor relay decoded it.
    pub source_success: f64,
    pub relay_decode_fail: f64,
    /// `relay_success[l]` is the probability of delivery at relay attempt `l + 1`.
    pub relay_success: Vec<f64>,
    /// Lost after the whole budget was used (includes `nr = 0` with a
    /// relay holding the packet).
    pub budget_exhausted: f64,
}

impl CycleEvents {
    pub fn total(&self) -> f64 {
        self.source_success
            + self.relay_decode_fail
            + self.relay_success.iter().sum::<f64>()
            + self.budget_exhausted
    }

    pub fn loss(&self) -> f64 {
        self.relay_decode_fail + self.budget_exhausted
    }
}

struct RelayOutcome {
    weight: f64,
    fail: f64,
    /// `1/R_m`, zero for a silent outage frame.
    inv_rate: f64,
}

fn relay_outcomes(rd: &LinkDesign, law: RelayModeLaw) -> Vec<RelayOutcome> {
    let tx = rd.transmit_prob();
    let mut out = Vec::with_capacity(rd.mode_count() + 1);
    if law == RelayModeLaw::CountAttempt && rd.outage_prob() > 0.0 {
        out.push(RelayOutcome {
            weight: rd.outage_prob(),
            fail: 1.0,
            inv_rate: 0.0,
        });
    }
    for (i, &p) in rd.mode_prob[1..].iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let weight = match law {
            RelayModeLaw::Conditional => p / tx,
            RelayModeLaw::CountAttempt | RelayModeLaw::Unnormalized => p,
        };
        out.push(RelayOutcome {
            weight,
            fail: rd.mode_avg_per[i],
            inv_rate: 1.0 / rd.rates[i],
        });
    }
    out
}

struct Walk<'a> {
    outcomes: &'a [RelayOutcome],
    nr: usize,
    eta: f64,
    relay_success: Vec<f64>,
    exhausted: f64,
}

impl Walk<'_> {
    /// `prob` is the mass of reaching relay attempt `attempt` (0-based) with
    /// `inv_len` symbols per bit spent so far.
    fn descend(&mut self, prob: f64, inv_len: f64, attempt: usize) {
        if attempt == self.nr {
            self.exhausted += prob;
            self.eta += prob / inv_len;
            return;
        }
        let last = attempt + 1 == self.nr;
        for o in self.outcomes {
            let reach = prob * o.weight;
            if reach == 0.0 {
                continue;
            }
            let spent = inv_len + o.inv_rate;
            let success = reach * (1.0 - o.fail);
            self.relay_success[attempt] += success;
            if last {
                self.exhausted += reach * o.fail;
                self.eta += reach / spent;
            } else {
                self.eta += success / spent;
                let failed = reach * o.fail;
                if failed > 0.0 {
                    self.descend(failed, spent, attempt + 1);
                }
            }
        }
    }
}

fn check_eps(sd: &LinkDesign, eps: &[f64]) -> Result<()> {
    if eps.len() != sd.mode_count() {
        return Err(Error::invalid(
            "eps",
            format!("expected {} entries, got {}", sd.mode_count(), eps.len()),
        ));
    }
    if eps.iter().any(|e| !(0.0..=1.0).contains(e)) {
        return Err(Error::invalid("eps", "entries must lie in [0, 1]"));
    }
    Ok(())
}

/// Enumerate the terminal events of one packet cycle.
pub fn cycle_events(
    sd: &LinkDesign,
    rd: &LinkDesign,
    eps: &[f64],
    nr: usize,
    law: RelayModeLaw,
) -> Result<CycleEvents> {
    if nr > MAX_ENUMERATED_RETRANSMISSIONS {
        return Err(Error::RetransmissionBudget {
            nr,
            limit: MAX_ENUMERATED_RETRANSMISSIONS,
        });
    }
    check_eps(sd, eps)?;
    let outcomes = relay_outcomes(rd, law);

    let mut walk = Walk {
        outcomes: &outcomes,
        nr,
        eta: 0.0,
        relay_success: vec![0.0; nr],
        exhausted: 0.0,
    };
    let mut source_success = 0.0;
    let mut relay_decode_fail = 0.0;
    let mut relay_needed = false;

    for (i, &e) in eps.iter().enumerate() {
        let p = sd.mode_prob[i + 1];
        if p == 0.0 {
            continue;
        }
        let per = sd.mode_avg_per[i];
        let rate = sd.rates[i];
        let delivered = p * (1.0 - per);
        let dropped = p * per * e;
        let held = p * per * (1.0 - e);
        source_success += delivered;
        relay_decode_fail += dropped;
        walk.eta += (delivered + dropped) * rate;
        if held > 0.0 {
            relay_needed = true;
            walk.descend(held, 1.0 / rate, 0);
        }
    }

    if relay_needed && nr > 0 && law == RelayModeLaw::Conditional && rd.transmit_prob() == 0.0 {
        return Err(Error::RelayAlwaysInOutage);
    }

    let tx = sd.transmit_prob();
    let norm = if tx > 0.0 { 1.0 / tx } else { 0.0 };
    Ok(CycleEvents {
        eta: walk.eta,
        transmit_prob: tx,
        source_success: source_success * norm,
        relay_decode_fail: relay_decode_fail * norm,
        relay_success: walk.relay_success.iter().map(|p| p * norm).collect(),
        budget_exhausted: walk.exhausted * norm,
    })
}

/// Spectral efficiency of adaptive-rate cooperative ARQ with budget `nr`.
pub fn eta_cooperative(sd: &LinkDesign, rd: &LinkDesign, eps: &[f64], nr: usize) -> Result<f64> {
    eta_cooperative_with(sd, rd, eps, nr, RelayModeLaw::Conditional)
}

pub fn eta_cooperative_with(
    sd: &LinkDesign,
    rd: &LinkDesign,
    eps: &[f64],
    nr: usize,
    law: RelayModeLaw,
) -> Result<f64> {
    Ok(cycle_events(sd, rd, eps, nr, law)?.eta)
}

/// Traditional truncated ARQ: the source retransmits over independent
/// realisations of the same link.
pub fn eta_traditional(design: &LinkDesign, nr: usize) -> Result<f64> {
    let zeros = vec![0.0; design.mode_count()];
    eta_cooperative(design, design, &zeros, nr)
}

/// AMC alone: every transmitted packet counts its bits, no retransmission.
pub fn eta_amc_only(sd: &LinkDesign) -> f64 {
    sd.mode_prob[1..]
        .iter()
        .zip(&sd.rates)
        .map(|(p, r)| p * r)
        .sum()
}

struct LinkAverages {
    /// `Σ PER̄_n P_n / Σ P_n`
    per: f64,
    /// `Σ ε_n PER̄_n P_n / Σ P_n`
    eps_per: f64,
}

fn source_averages(sd: &LinkDesign, eps: &[f64]) -> Result<LinkAverages> {
    let tx = sd.transmit_prob();
    if tx == 0.0 {
        return Err(Error::AllOutage {
            link: "source-destination",
        });
    }
    let mut per = 0.0;
    let mut eps_per = 0.0;
    for ((p, avg), e) in sd.mode_prob[1..].iter().zip(&sd.mode_avg_per).zip(eps) {
        let w = p * avg;
        per += w;
        eps_per += e * w;
    }
    Ok(LinkAverages {
        per: per / tx,
        eps_per: eps_per / tx,
    })
}

/// Packet loss rate of cooperative ARQ with one relay retransmission,
/// over packets the source actually transmits.
pub fn plr_cooperative(sd: &LinkDesign, rd: &LinkDesign, eps: &[f64]) -> Result<f64> {
    plr_cooperative_variant(sd, rd, eps, PlrVariant::default())
}

pub fn plr_cooperative_variant(
    sd: &LinkDesign,
    rd: &LinkDesign,
    eps: &[f64],
    variant: PlrVariant,
) -> Result<f64> {
    check_eps(sd, eps)?;
    let src = source_averages(sd, eps)?;
    let relay = rd.avg_per().map_err(|_| Error::AllOutage {
        link: "relay-destination",
    })?;
    let first = match variant {
        PlrVariant::Printed => src.per,
        PlrVariant::WeightedFirstTerm => src.per - src.eps_per,
    };
    Ok((first * relay + src.eps_per * (1.0 - relay)).clamp(0.0, 1.0))
}

/// Spectral efficiency of fixed-rate cooperative ARQ with source mode `n`
/// and relay mode `m` (1-based), one relay retransmission.
pub fn eta_fixed(table: &ModeTable, n: usize, m: usize, snrs: &LinkSnrs) -> Result<f64> {
    let (src, relay) = fixed_modes(table, n, m)?;
    let eps = sr_packet_error(src, snrs.sr);
    let per_sd = full_avg_per(src, snrs.mean_sd);
    let (rn, rm) = (src.rate, relay.rate);
    Ok(rn * (1.0 - (1.0 - eps) * rn / (rn + rm) * per_sd))
}

pub fn plr_fixed(table: &ModeTable, n: usize, m: usize, snrs: &LinkSnrs) -> Result<f64> {
    let (src, relay) = fixed_modes(table, n, m)?;
    let eps = sr_packet_error(src, snrs.sr);
    let per_sd = full_avg_per(src, snrs.mean_sd);
    let per_rd = full_avg_per(relay, snrs.mean_rd);
    Ok(per_sd * per_rd + eps * per_sd * (1.0 - per_rd))
}

fn fixed_modes(
    table: &ModeTable,
    n: usize,
    m: usize,
) -> Result<(&crate::channel::AmcMode, &crate::channel::AmcMode)> {
    let pick = |k: usize, field: &str| {
        table.mode(k).ok_or_else(|| {
            Error::invalid(field, format!("must lie in 1..={}, got {k}", table.len()))
        })
    };
    Ok((pick(n, "n")?, pick(m, "m")?))
}

/// Full report for an adaptive operating point.
pub fn evaluate(
    sd: &LinkDesign,
    rd: &LinkDesign,
    eps: &[f64],
    nr: usize,
    p_loss: f64,
) -> Result<PerformanceReport> {
    let eta = eta_cooperative(sd, rd, eps, nr)?;
    let eps_bar = avg_sr_eps(sd, eps)?;
    let plr = if nr == 1 {
        Some(plr_cooperative(sd, rd, eps)?)
    } else {
        None
    };
    Ok(PerformanceReport {
        eta,
        plr,
        feasible: plr.is_some_and(|p| p <= p_loss),
        nr,
        eps_bar,
        p_loss,
    })
}

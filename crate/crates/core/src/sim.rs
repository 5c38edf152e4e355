//! Frame-level simulation of the cooperative ARQ protocol under block fading.
//!
//! Each packet cycle draws an S-D SNR, picks the source mode, flips
//! independent coins for decoding at the destination (instantaneous PER) and
//! at the relay (`ε_n`), then lets the relay retransmit over fresh R-D fades
//! until delivery or until the budget is spent.
//!
//! Every cycle owns a ChaCha8 stream keyed by the seed and numbered by the
//! cycle index, so any partition of the cycle range reproduces the serial
//! run. Sums of the per-cycle rates are kept in 64.64 fixed point, which makes
//! merging exact, associative and commutative.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{draw_snr, sr_packet_errors, ModeTable, Topology};
use crate::design::LinkDesign;
use crate::error::{Error, Result};

const FIXED_POINT_ONE: f64 = 18_446_744_073_709_551_616.0; // 2^64
const CHUNK_CYCLES: u64 = 1 << 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutagePolicy {
    /// The relay skips R-D outage frames without spending an attempt.
    #[default]
    Wait,
    /// An R-D outage frame spends the attempt, sends nothing and fails.
    CountAttempt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
#[allow(clippy::large_enum_variant)]
pub enum SimMode {
    Adaptive {
        sd: LinkDesign,
        rd: LinkDesign,
    },
    /// Fixed source mode `n` and relay mode `m` (1-based) at every SNR.
    Fixed {
        n: usize,
        m: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeKind {
    Adaptive,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Packet cycles to run, source outage slots included.
    pub packets: u64,
    pub seed: u64,
    pub nr: usize,
    pub outage_policy: OutagePolicy,
    pub mode: SimMode,
}

/// Link statistics the simulator draws from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub mean_sd: f64,
    pub mean_rd: f64,
    /// S-R packet error per source mode.
    pub eps: Vec<f64>,
}

impl Scenario {
    pub fn from_topology(table: &ModeTable, topology: &Topology) -> Self {
        let snrs = topology.link_snrs();
        Scenario {
            mean_sd: snrs.mean_sd,
            mean_rd: snrs.mean_rd,
            eps: sr_packet_errors(table, snrs.sr),
        }
    }
}

/// Raw tallies of a simulation run. Estimates are derived on demand.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimStats {
    pub nr: usize,
    pub policy: OutagePolicy,
    pub kind: ModeKind,
    pub cycles: u64,
    pub source_outage: u64,
    /// Packets sent per source mode.
    pub source_mode_counts: Vec<u64>,
    pub source_success: u64,
    pub relay_decode_fail: u64,
    /// Deliveries at relay attempt `l + 1`.
    pub success_at_attempt: Vec<u64>,
    pub budget_exhausted_loss: u64,
    /// R-D outage frames met during retransmission.
    pub relay_outage_frames: u64,
    /// `Σ 1/L_k` in units of 2^-64 bits/symbol.
    pub rate_sum: u128,
    pub rate_sq_sum: u128,
    pub delivered_rate_sum: u128,
}

impl SimStats {
    pub fn empty(nr: usize, policy: OutagePolicy, kind: ModeKind, modes: usize) -> Self {
        SimStats {
            nr,
            policy,
            kind,
            cycles: 0,
            source_outage: 0,
            source_mode_counts: vec![0; modes],
            source_success: 0,
            relay_decode_fail: 0,
            success_at_attempt: vec![0; nr],
            budget_exhausted_loss: 0,
            relay_outage_frames: 0,
            rate_sum: 0,
            rate_sq_sum: 0,
            delivered_rate_sum: 0,
        }
    }

    pub fn transmitted(&self) -> u64 {
        self.cycles - self.source_outage
    }

    pub fn lost(&self) -> u64 {
        self.relay_decode_fail + self.budget_exhausted_loss
    }

    pub fn delivered(&self) -> u64 {
        self.source_success + self.success_at_attempt.iter().sum::<u64>()
    }

    /// Mean bits per symbol over all cycles, outage slots counting zero.
    pub fn eta_hat(&self) -> f64 {
        if self.cycles == 0 {
            return 0.0;
        }
        self.rate_sum as f64 / FIXED_POINT_ONE / self.cycles as f64
    }

    pub fn eta_se(&self) -> f64 {
        if self.cycles < 2 {
            return 0.0;
        }
        let n = self.cycles as f64;
        let mean = self.eta_hat();
        let mean_sq = self.rate_sq_sum as f64 / FIXED_POINT_ONE / n;
        let var = (mean_sq - mean * mean).max(0.0) * n / (n - 1.0);
        (var / n).sqrt()
    }

    /// Lost over transmitted packets.
    pub fn plr_hat(&self) -> f64 {
        match self.transmitted() {
            0 => 0.0,
            tx => self.lost() as f64 / tx as f64,
        }
    }

    pub fn plr_se(&self) -> f64 {
        match self.transmitted() {
            0 => 0.0,
            tx => {
                let p = self.plr_hat();
                (p * (1.0 - p) / tx as f64).sqrt()
            }
        }
    }

    /// Delivered bits per symbol.
    pub fn goodput(&self) -> f64 {
        if self.cycles == 0 {
            return 0.0;
        }
        self.delivered_rate_sum as f64 / FIXED_POINT_ONE / self.cycles as f64
    }

    pub fn summary(&self) -> SimSummary {
        SimSummary {
            eta_hat: self.eta_hat(),
            eta_se: self.eta_se(),
            plr_hat: self.plr_hat(),
            plr_se: self.plr_se(),
            goodput: self.goodput(),
        }
    }

    fn record_rate(&mut self, rate: f64, delivered: bool) {
        let q = (rate * FIXED_POINT_ONE) as u128;
        let q2 = (rate * rate * FIXED_POINT_ONE) as u128;
        self.rate_sum += q;
        self.rate_sq_sum += q2;
        if delivered {
            self.delivered_rate_sum += q;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub eta_hat: f64,
    pub eta_se: f64,
    pub plr_hat: f64,
    pub plr_se: f64,
    pub goodput: f64,
}

/// Serializable record of a run: configuration echo, tallies and estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub seed: u64,
    pub packets: u64,
    pub scenario: Scenario,
    pub config: SimConfig,
    pub estimates: SimSummary,
    pub stats: SimStats,
}

pub fn merge_stats(a: &SimStats, b: &SimStats) -> Result<SimStats> {
    if a.nr != b.nr || a.policy != b.policy || a.kind != b.kind {
        return Err(Error::IncompatibleStats(format!(
            "(nr {}, {:?}, {:?}) vs (nr {}, {:?}, {:?})",
            a.nr, a.policy, a.kind, b.nr, b.policy, b.kind
        )));
    }
    if a.source_mode_counts.len() != b.source_mode_counts.len() {
        return Err(Error::IncompatibleStats(format!(
            "{} vs {} modes",
            a.source_mode_counts.len(),
            b.source_mode_counts.len()
        )));
    }
    let add = |x: &[u64], y: &[u64]| x.iter().zip(y).map(|(p, q)| p + q).collect::<Vec<_>>();
    Ok(SimStats {
        nr: a.nr,
        policy: a.policy,
        kind: a.kind,
        cycles: a.cycles + b.cycles,
        source_outage: a.source_outage + b.source_outage,
        source_mode_counts: add(&a.source_mode_counts, &b.source_mode_counts),
        source_success: a.source_success + b.source_success,
        relay_decode_fail: a.relay_decode_fail + b.relay_decode_fail,
        success_at_attempt: add(&a.success_at_attempt, &b.success_at_attempt),
        budget_exhausted_loss: a.budget_exhausted_loss + b.budget_exhausted_loss,
        relay_outage_frames: a.relay_outage_frames + b.relay_outage_frames,
        rate_sum: a.rate_sum + b.rate_sum,
        rate_sq_sum: a.rate_sq_sum + b.rate_sq_sum,
        delivered_rate_sum: a.delivered_rate_sum + b.delivered_rate_sum,
    })
}

struct Prepared<'a> {
    table: &'a ModeTable,
    sd: LinkDesign,
    rd: LinkDesign,
    scenario: &'a Scenario,
    nr: usize,
    policy: OutagePolicy,
    kind: ModeKind,
    key: [u8; 32],
}

fn prepare<'a>(
    table: &'a ModeTable,
    scenario: &'a Scenario,
    config: &SimConfig,
) -> Result<Prepared<'a>> {
    if scenario.eps.len() != table.len() {
        return Err(Error::invalid(
            "eps",
            format!(
                "expected {} entries, got {}",
                table.len(),
                scenario.eps.len()
            ),
        ));
    }
    if scenario.eps.iter().any(|e| !(0.0..=1.0).contains(e)) {
        return Err(Error::invalid("eps", "entries must lie in [0, 1]"));
    }
    for (name, mean) in [("mean_sd", scenario.mean_sd), ("mean_rd", scenario.mean_rd)] {
        if !(mean.is_finite() && mean > 0.0) {
            return Err(Error::invalid(
                name,
                format!("must be positive, got {mean}"),
            ));
        }
    }
    let (sd, rd, kind) = match &config.mode {
        SimMode::Adaptive { sd, rd } => {
            for (name, d) in [("sd", sd), ("rd", rd)] {
                if d.mode_count() != table.len() {
                    return Err(Error::invalid(
                        name,
                        format!(
                            "design has {} modes, table has {}",
                            d.mode_count(),
                            table.len()
                        ),
                    ));
                }
            }
            (sd.clone(), rd.clone(), ModeKind::Adaptive)
        }
        SimMode::Fixed { n, m } => (
            LinkDesign::fixed_mode(table, *n, scenario.mean_sd)?,
            LinkDesign::fixed_mode(table, *m, scenario.mean_rd)?,
            ModeKind::Fixed,
        ),
    };
    if config.nr > 0 && config.outage_policy == OutagePolicy::Wait && rd.transmit_prob() == 0.0 {
        return Err(Error::RelayAlwaysInOutage);
    }
    let key = ChaCha8Rng::seed_from_u64(config.seed).get_seed();
    Ok(Prepared {
        table,
        sd,
        rd,
        scenario,
        nr: config.nr,
        policy: config.outage_policy,
        kind,
        key,
    })
}

impl Prepared<'_> {
    fn run(&self, cycles: Range<u64>) -> SimStats {
        let mut stats = SimStats::empty(self.nr, self.policy, self.kind, self.table.len());
        let modes = self.table.modes();
        for k in cycles {
            let mut rng = ChaCha8Rng::from_seed(self.key);
            rng.set_stream(k);
            stats.cycles += 1;

            let g1 = draw_snr(self.scenario.mean_sd, &mut rng);
            let Some(n) = self.sd.select_mode(g1) else {
                stats.source_outage += 1;
                continue;
            };
            stats.source_mode_counts[n] += 1;
            let dest_fails = rng.random::<f64>() < modes[n].per(g1);
            let relay_decodes = rng.random::<f64>() >= self.scenario.eps[n];
            let mut inv_len = 1.0 / self.sd.rates[n];

            if !dest_fails {
                stats.source_success += 1;
                stats.record_rate(1.0 / inv_len, true);
                continue;
            }
            if !relay_decodes {
                stats.relay_decode_fail += 1;
                stats.record_rate(1.0 / inv_len, false);
                continue;
            }

            let mut delivered = false;
            for attempt in 0..self.nr {
                let relay_mode = loop {
                    let g2 = draw_snr(self.scenario.mean_rd, &mut rng);
                    match self.rd.select_mode(g2) {
                        Some(m) => break Some((m, g2)),
                        None => {
                            stats.relay_outage_frames += 1;
                            if self.policy == OutagePolicy::CountAttempt {
                                break None;
                            }
                        }
                    }
                };
                let Some((m, g2)) = relay_mode else {
                    continue;
                };
                inv_len += 1.0 / self.rd.rates[m];
                if rng.random::<f64>() >= modes[m].per(g2) {
                    stats.success_at_attempt[attempt] += 1;
                    delivered = true;
                    break;
                }
            }
            if !delivered {
                stats.budget_exhausted_loss += 1;
            }
            stats.record_rate(1.0 / inv_len, delivered);
        }
        stats
    }
}

/// Simulate `config.packets` cycles starting at cycle 0.
pub fn simulate(table: &ModeTable, scenario: &Scenario, config: &SimConfig) -> Result<SimStats> {
    if config.packets == 0 {
        return Err(Error::invalid("packets", "must be at least 1"));
    }
    simulate_range(table, scenario, config, 0..config.packets)
}

/// Simulate the cycles in `range` only; merging the stats of a partition of
/// `0..packets` gives exactly the stats of [`simulate`].
pub fn simulate_range(
    table: &ModeTable,
    scenario: &Scenario,
    config: &SimConfig,
    range: Range<u64>,
) -> Result<SimStats> {
    let prepared = prepare(table, scenario, config)?;
    let chunks: Vec<Range<u64>> = (range.start..range.end)
        .step_by(CHUNK_CYCLES as usize)
        .map(|s| s..(s + CHUNK_CYCLES).min(range.end))
        .collect();
    let empty = SimStats::empty(prepared.nr, prepared.policy, prepared.kind, table.len());
    let parts: Vec<SimStats> = chunks.into_par_iter().map(|c| prepared.run(c)).collect();
    parts.iter().try_fold(empty, |acc, s| merge_stats(&acc, s))
}

pub fn simulate_topology(
    table: &ModeTable,
    topology: &Topology,
    config: &SimConfig,
) -> Result<SimReport> {
    let scenario = Scenario::from_topology(table, topology);
    let stats = simulate(table, &scenario, config)?;
    Ok(SimReport {
        seed: config.seed,
        packets: config.packets,
        scenario,
        config: config.clone(),
        estimates: stats.summary(),
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::AmcMode;
    use crate::design::design_link;

    fn table(a: f64) -> ModeTable {
        ModeTable::new(
            vec![
                AmcMode::new(1, 1.0, a, 1.0, 1.0).unwrap(),
                AmcMode::new(2, 2.0, a, 0.5, 2.0).unwrap(),
            ],
            100,
        )
        .unwrap()
    }

    fn config(sd: LinkDesign, rd: LinkDesign, packets: u64) -> SimConfig {
        SimConfig {
            packets,
            seed: 42,
            nr: 2,
            outage_policy: OutagePolicy::Wait,
            mode: SimMode::Adaptive { sd, rd },
        }
    }

    #[test]
    fn error_free_channel_has_no_losses() {
        let t = table(0.0);
        // a = 0 leaves only the cutoff, which both thresholds clear
        let sd = LinkDesign::from_thresholds(&t, 5.0, vec![1.0, 3.0], None).unwrap();
        let rd = sd.clone();
        let sc = Scenario {
            mean_sd: 5.0,
            mean_rd: 5.0,
            eps: vec![0.3, 0.3],
        };
        let s = simulate(&t, &sc, &config(sd, rd, 20_000)).unwrap();
        assert_eq!(s.lost(), 0);
        let rates = [1.0, 2.0];
        let expected: f64 = s
            .source_mode_counts
            .iter()
            .zip(rates)
            .map(|(&c, r)| c as f64 * r)
            .sum::<f64>()
            / s.cycles as f64;
        assert!((s.eta_hat() - expected).abs() < 1e-12);
    }

    #[test]
    fn all_outage_source_sends_nothing() {
        let t = table(1.0);
        let sd = LinkDesign::from_thresholds(&t, 5.0, vec![f64::INFINITY; 2], None).unwrap();
        let rd = design_link(&t, 5.0, 0.1).unwrap();
        let sc = Scenario {
            mean_sd: 5.0,
            mean_rd: 5.0,
            eps: vec![0.0, 0.0],
        };
        let s = simulate(&t, &sc, &config(sd, rd, 1000)).unwrap();
        assert_eq!(s.eta_hat(), 0.0);
        assert_eq!(s.transmitted(), 0);
        assert_eq!(s.plr_hat(), 0.0);
    }

    #[test]
    fn counts_are_consistent() {
        let t = table(1.0);
        let sd = design_link(&t, 4.0, 0.3).unwrap();
        let rd = design_link(&t, 6.0, 0.2).unwrap();
        let sc = Scenario {
            mean_sd: 4.0,
            mean_rd: 6.0,
            eps: vec![0.1, 0.2],
        };
        let s = simulate(&t, &sc, &config(sd, rd, 50_000)).unwrap();
        assert_eq!(s.delivered() + s.lost(), s.transmitted());
        assert_eq!(s.source_mode_counts.iter().sum::<u64>(), s.transmitted());
        assert!(s.goodput() <= s.eta_hat());
    }

    #[test]
    fn merge_identity_and_mismatch() {
        let t = table(1.0);
        let sd = design_link(&t, 4.0, 0.3).unwrap();
        let rd = design_link(&t, 6.0, 0.2).unwrap();
        let sc = Scenario {
            mean_sd: 4.0,
            mean_rd: 6.0,
            eps: vec![0.1, 0.2],
        };
        let s = simulate(&t, &sc, &config(sd, rd, 5_000)).unwrap();
        let e = SimStats::empty(2, OutagePolicy::Wait, ModeKind::Adaptive, 2);
        assert_eq!(merge_stats(&s, &e).unwrap(), s);
        let other = SimStats::empty(1, OutagePolicy::Wait, ModeKind::Adaptive, 2);
        assert!(merge_stats(&s, &other).is_err());
    }

    #[test]
    fn zero_packets_rejected() {
        let t = table(1.0);
        let sd = design_link(&t, 4.0, 0.3).unwrap();
        let sc = Scenario {
            mean_sd: 4.0,
            mean_rd: 6.0,
            eps: vec![0.1, 0.2],
        };
        assert!(simulate(&t, &sc, &config(sd.clone(), sd, 0)).is_err());
    }
}

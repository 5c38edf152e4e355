//! Transmission modes, the exponential PER approximation and Rayleigh
//! block-fading statistics.
//!
//! All SNR values in this module are linear. Under Rayleigh fading the
//! per-frame SNR of a link is exponentially distributed with mean `γ̄`, so
//! every interval probability and interval-averaged PER has a closed form.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack allowed on `a·exp(−g·Γ) ≤ 1` when loading fitted parameters.
///
/// Published fits list `Γ` rounded to four decimals in dB, which can push the
/// product a fraction of a percent above one. [`per_instant`] clamps.
pub const CONTINUITY_SLACK: f64 = 1e-2;

/// One AMC transmission mode: its rate and the fitted PER law
/// `PER(γ) = 1` for `γ < Γ`, `a·exp(−g·γ)` otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmcMode {
    /// 1-based mode number.
    pub index: usize,
    /// Information bits per symbol.
    pub rate: f64,
    pub fit_a: f64,
    /// Decay per unit of linear SNR.
    pub fit_g: f64,
    /// Linear SNR below which every packet is lost.
    pub cutoff: f64,
}

impl AmcMode {
    pub fn new(index: usize, rate: f64, fit_a: f64, fit_g: f64, cutoff: f64) -> Result<Self> {
        let field = |name: &str| format!("modes[{index}].{name}");
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::invalid(
                field("rate"),
                format!("must be positive, got {rate}"),
            ));
        }
        if !(fit_a.is_finite() && fit_a >= 0.0) {
            return Err(Error::invalid(
                field("a"),
                format!("must be non-negative, got {fit_a}"),
            ));
        }
        if !(fit_g.is_finite() && fit_g > 0.0) {
            return Err(Error::invalid(
                field("g"),
                format!("must be positive, got {fit_g}"),
            ));
        }
        if cutoff.is_nan() || cutoff < 0.0 {
            return Err(Error::invalid(
                field("cutoff"),
                format!("must be non-negative, got {cutoff}"),
            ));
        }
        let mode = AmcMode {
            index,
            rate,
            fit_a,
            fit_g,
            cutoff,
        };
        if mode.per_at_cutoff() > 1.0 + CONTINUITY_SLACK {
            return Err(Error::invalid(
                field("cutoff"),
                format!(
                    "a·exp(−g·Γ) = {} exceeds 1; Γ must be at least ln(a)/g = {}",
                    mode.per_at_cutoff(),
                    fit_a.ln() / fit_g
                ),
            ));
        }
        Ok(mode)
    }

    /// Value of the exponential branch at the cutoff.
    pub fn per_at_cutoff(&self) -> f64 {
        self.fit_a * (-self.fit_g * self.cutoff).exp()
    }

    pub fn per(&self, snr: f64) -> f64 {
        per_instant(self, snr)
    }
}

/// The ordered set of modes one link may choose from.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeTable {
    modes: Vec<AmcMode>,
    packet_bits: u32,
}

impl ModeTable {
    pub fn new(modes: Vec<AmcMode>, packet_bits: u32) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::invalid("modes", "at least one mode is required"));
        }
        if packet_bits == 0 {
            return Err(Error::invalid("packet_bits", "must be at least 1"));
        }
        for (i, mode) in modes.iter().enumerate() {
            if mode.index != i + 1 {
                return Err(Error::invalid(
                    format!("modes[{}].index", i + 1),
                    format!(
                        "expected {} (indices run 1..N in order), got {}",
                        i + 1,
                        mode.index
                    ),
                ));
            }
        }
        for pair in modes.windows(2) {
            if pair[1].rate <= pair[0].rate {
                return Err(Error::invalid(
                    format!("modes[{}].rate", pair[1].index),
                    format!(
                        "rates must strictly increase with index ({} after {})",
                        pair[1].rate, pair[0].rate
                    ),
                ));
            }
        }
        Ok(ModeTable { modes, packet_bits })
    }

    pub fn modes(&self) -> &[AmcMode] {
        &self.modes
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Mode by 1-based number.
    pub fn mode(&self, number: usize) -> Option<&AmcMode> {
        number.checked_sub(1).and_then(|i| self.modes.get(i))
    }

    pub fn rates(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.rate).collect()
    }

    pub fn packet_bits(&self) -> u32 {
        self.packet_bits
    }
}

/// Line topology: source and destination at unit distance, relay at `d`
/// from the source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    /// Transmit power normalised so that it equals the mean S-D SNR (linear).
    pub pbar: f64,
    /// Normalised source-relay distance in `[0, 1)`.
    pub d: f64,
    /// Path-loss exponent.
    pub alpha: f64,
}

impl Topology {
    pub fn new(pbar: f64, d: f64, alpha: f64) -> Result<Self> {
        if !(pbar.is_finite() && pbar > 0.0) {
            return Err(Error::invalid(
                "pbar",
                format!("must be positive, got {pbar}"),
            ));
        }
        if !(0.0..1.0).contains(&d) {
            return Err(Error::invalid("d", format!("must lie in [0, 1), got {d}")));
        }
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::invalid(
                "alpha",
                format!("must be positive, got {alpha}"),
            ));
        }
        Ok(Topology { pbar, d, alpha })
    }

    pub fn from_db(pbar_db: f64, d: f64, alpha: f64) -> Result<Self> {
        Topology::new(db_to_linear(pbar_db), d, alpha)
    }

    pub fn link_snrs(&self) -> LinkSnrs {
        derive_topology(self)
    }
}

/// Mean SNRs of the two fading links and the fixed SNR of the AWGN S-R link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkSnrs {
    pub mean_sd: f64,
    pub mean_rd: f64,
    /// `+∞` when the relay is co-located with the source.
    #[serde(with = "crate::serde_ext::ext_f64")]
    pub sr: f64,
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

/// Instantaneous packet error rate of `mode` at linear SNR `snr`.
pub fn per_instant(mode: &AmcMode, snr: f64) -> f64 {
    if snr < mode.cutoff {
        1.0
    } else {
        (mode.fit_a * (-mode.fit_g * snr).exp()).min(1.0)
    }
}

fn check_interval(mean_snr: f64, lo: f64, hi: f64) -> Result<()> {
    if !(mean_snr.is_finite() && mean_snr > 0.0) {
        return Err(Error::invalid(
            "mean_snr",
            format!("must be positive, got {mean_snr}"),
        ));
    }
    if lo.is_nan() || hi.is_nan() || lo < 0.0 || lo > hi {
        return Err(Error::InvalidInterval { lo, hi });
    }
    Ok(())
}

/// `Pr[lo ≤ γ < hi]` for `γ ~ Exp(mean_snr)`.
pub fn rayleigh_interval_prob(mean_snr: f64, lo: f64, hi: f64) -> Result<f64> {
    check_interval(mean_snr, lo, hi)?;
    if lo == hi {
        return Ok(0.0);
    }
    if lo == 0.0 {
        // 1 − e^{−hi/γ̄} without cancellation near zero.
        return Ok(-(-hi / mean_snr).exp_m1());
    }
    Ok((-lo / mean_snr).exp() - (-hi / mean_snr).exp())
}

/// Conditional mean of the exponential branch over `[lo, hi)`, `lo ≥ Γ`.
///
/// Written as `a/(1+gγ̄)·e^{−g·lo}·(1 − e^{−(g+1/γ̄)Δ})/(1 − e^{−Δ/γ̄})` so it
/// stays accurate when the interval mass underflows.
fn fitted_branch_mean(mode: &AmcMode, mean_snr: f64, lo: f64, hi: f64) -> f64 {
    let a = mode.fit_a;
    let g = mode.fit_g;
    let inv_mean = 1.0 / mean_snr;
    let scale = a / (1.0 + g * mean_snr) * (-g * lo).exp();
    if hi.is_infinite() {
        return scale;
    }
    let width = hi - lo;
    let num = -(-(g + inv_mean) * width).exp_m1();
    let den = -(-inv_mean * width).exp_m1();
    scale * num / den
}

/// Average PER of `mode` over the frames whose SNR falls in `[lo, hi)`.
///
/// The designed mode regions always start at or above the mode's cutoff; when
/// `lo < Γ` (a mode forced over the whole SNR axis) the sub-cutoff part is
/// counted with PER 1.
pub fn interval_avg_per(mode: &AmcMode, mean_snr: f64, lo: f64, hi: f64) -> Result<f64> {
    check_interval(mean_snr, lo, hi)?;
    if lo == hi {
        return Err(Error::DegenerateInterval { lo, hi });
    }
    let avg = if lo >= mode.cutoff {
        fitted_branch_mean(mode, mean_snr, lo, hi)
    } else if hi <= mode.cutoff {
        1.0
    } else {
        let below = rayleigh_interval_prob(mean_snr, lo, mode.cutoff)?;
        let above = rayleigh_interval_prob(mean_snr, mode.cutoff, hi)?;
        let total = below + above;
        if total == 0.0 {
            return Err(Error::DegenerateInterval { lo, hi });
        }
        (below + above * fitted_branch_mean(mode, mean_snr, mode.cutoff, hi)) / total
    };
    Ok(avg.clamp(0.0, 1.0))
}

/// Average PER of `mode` used at every SNR of a link with mean `mean_snr`.
pub fn full_avg_per(mode: &AmcMode, mean_snr: f64) -> f64 {
    let gamma = mode.cutoff;
    let below = -(-gamma / mean_snr).exp_m1();
    let above =
        mode.fit_a / (1.0 + mode.fit_g * mean_snr) * (-(mode.fit_g + 1.0 / mean_snr) * gamma).exp();
    (below + above).clamp(0.0, 1.0)
}

pub fn derive_topology(t: &Topology) -> LinkSnrs {
    LinkSnrs {
        mean_sd: t.pbar,
        mean_rd: t.pbar * (1.0 - t.d).powf(-t.alpha),
        sr: if t.d == 0.0 {
            f64::INFINITY
        } else {
            t.pbar * t.d.powf(-t.alpha)
        },
    }
}

/// Packet error probability `ε_n` of the AWGN source-relay link in `mode`.
pub fn sr_packet_error(mode: &AmcMode, gamma_sr: f64) -> f64 {
    if gamma_sr.is_infinite() {
        0.0
    } else {
        per_instant(mode, gamma_sr)
    }
}

/// `ε_n` for every mode of the table.
pub fn sr_packet_errors(table: &ModeTable, gamma_sr: f64) -> Vec<f64> {
    table
        .modes()
        .iter()
        .map(|m| sr_packet_error(m, gamma_sr))
        .collect()
}

/// One block-fading SNR realisation.
pub fn draw_snr<R: Rng + ?Sized>(mean_snr: f64, rng: &mut R) -> f64 {
    let exp = Exp::new(1.0 / mean_snr).expect("mean SNR must be positive");
    exp.sample(rng)
}

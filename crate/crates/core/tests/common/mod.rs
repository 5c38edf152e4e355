#![allow(dead_code, clippy::excessive_precision)]

use coarq::channel::{AmcMode, ModeTable};
use coarq::design::{design_link, LinkDesign};
use rand::Rng;

// Gauss-Kronrod 7/15 nodes on [-1, 1]; the odd entries are the Gauss nodes.
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let pair = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * h, (kronrod - gauss).abs() * h)
}

/// Adaptive Gauss-Kronrod integral of a smooth `f` over `[a, b]`: keep
/// bisecting the piece with the largest error estimate until the summed
/// estimate is below `1e-14` relative or 2000 pieces exist.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let (v, e) = gk15(&f, a, b);
    let mut pieces = vec![(a, b, v, e)];
    for _ in 0..2000 {
        let total: f64 = pieces.iter().map(|p| p.2).sum();
        let err: f64 = pieces.iter().map(|p| p.3).sum();
        if err <= 1e-14 * total.abs() {
            break;
        }
        let (worst, _) = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .unwrap();
        let (lo, hi, _, _) = pieces.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        pieces.push((lo, mid, v1, e1));
        pieces.push((mid, hi, v2, e2));
    }
    pieces.iter().map(|p| p.2).sum()
}

/// Integral of a piecewise-smooth `f` whose kinks are listed in `breaks`.
/// An infinite `b` is truncated where `exp(-x / decay)` has fallen by e^-60.
pub fn integrate_pieces<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    decay: f64,
) -> f64 {
    let end = if b.is_finite() { b } else { a + 60.0 * decay };
    if end <= a {
        return 0.0;
    }
    let mut cuts: Vec<f64> = std::iter::once(a)
        .chain(breaks.iter().copied().filter(|&x| x > a && x < end))
        .chain(std::iter::once(end))
        .collect();
    cuts.sort_by(f64::total_cmp);
    // sub-split long spans so each piece sees only a few decay lengths
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let pieces = ((w[1] - w[0]) / decay).ceil().clamp(1.0, 64.0) as usize;
        let step = (w[1] - w[0]) / pieces as f64;
        for i in 0..pieces {
            let lo = w[0] + i as f64 * step;
            let hi = if i + 1 == pieces { w[1] } else { lo + step };
            total += integrate(&f, lo, hi);
        }
    }
    total
}

pub fn rayleigh_pdf(mean: f64, x: f64) -> f64 {
    (-x / mean).exp() / mean
}

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

/// A random table of `n` modes with increasing rates and decreasing slopes,
/// each cutoff at or above the point where the exponential fit reaches 1.
pub fn random_table<R: Rng>(rng: &mut R, n: usize) -> ModeTable {
    let mut rate = 0.0;
    let mut g = log_uniform(rng, 4.0, 12.0);
    let modes = (1..=n)
        .map(|i| {
            rate += rng.random_range(0.4..1.2);
            g *= rng.random_range(0.25..0.7);
            let a: f64 = rng.random_range(5.0..300.0);
            let lift = if rng.random_bool(0.3) {
                rng.random_range(0.0..0.5)
            } else {
                0.0
            };
            let cutoff = a.ln() / g * (1.0 + lift);
            AmcMode::new(i, rate, a, g, cutoff).unwrap()
        })
        .collect();
    ModeTable::new(modes, 1080).unwrap()
}

pub struct RandomSystem {
    pub table: ModeTable,
    pub sd: LinkDesign,
    pub rd: LinkDesign,
    pub eps: Vec<f64>,
}

/// Random table, link SNRs, targets in `target` and `ε_n` in `eps_range`.
pub fn random_system<R: Rng>(
    rng: &mut R,
    modes: usize,
    target: std::ops::Range<f64>,
    eps_range: std::ops::Range<f64>,
) -> RandomSystem {
    let table = random_table(rng, modes);
    let mean_sd = log_uniform(rng, 2.0, 200.0);
    let mean_rd = log_uniform(rng, 2.0, 200.0);
    let sd = design_link(&table, mean_sd, log_uniform(rng, target.start, target.end)).unwrap();
    let rd = design_link(&table, mean_rd, log_uniform(rng, target.start, target.end)).unwrap();
    let eps = (0..modes)
        .map(|_| {
            if eps_range.is_empty() {
                eps_range.start
            } else {
                rng.random_range(eps_range.clone())
            }
        })
        .collect();
    RandomSystem { table, sd, rd, eps }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// `Pr{lo ≤ γ < hi}` by quadrature.
pub fn quad_interval_prob(mean: f64, lo: f64, hi: f64) -> f64 {
    integrate_pieces(|x| rayleigh_pdf(mean, x), lo, hi, &[], mean)
}

/// Average PER of `mode` over `[lo, hi)` by quadrature, counting PER 1
/// below the cutoff.
pub fn quad_interval_avg_per(mode: &AmcMode, mean: f64, lo: f64, hi: f64) -> f64 {
    let below = integrate_pieces(
        |x| rayleigh_pdf(mean, x),
        lo,
        hi.min(mode.cutoff),
        &[],
        mean,
    );
    let decay = 1.0 / (mode.fit_g + 1.0 / mean);
    let above = integrate_pieces(
        |x| (mode.fit_a * (-mode.fit_g * x).exp()).min(1.0) * rayleigh_pdf(mean, x),
        lo.max(mode.cutoff),
        hi,
        &[mode.fit_a.ln() / mode.fit_g],
        decay,
    );
    (below + above) / quad_interval_prob(mean, lo, hi)
}

/// A random mode with a cutoff at or above the unit-PER point.
pub fn random_mode<R: Rng>(rng: &mut R) -> AmcMode {
    let a = log_uniform(rng, 0.5, 300.0);
    let g = log_uniform(rng, 0.05, 10.0);
    let lift = if rng.random_bool(0.5) {
        rng.random_range(0.0..1.0)
    } else {
        0.0
    };
    let base = (a.ln() / g).max(0.0);
    let cutoff = if base == 0.0 {
        rng.random_range(0.0..2.0)
    } else {
        base * (1.0 + lift)
    };
    AmcMode::new(1, 1.0, a, g, cutoff).unwrap()
}

pub fn random_mean<R: Rng>(rng: &mut R) -> f64 {
    log_uniform(rng, 0.1, 1000.0)
}

/// A random `[lo, hi)` scaled to `mean`, sometimes unbounded, sometimes
/// straddling `cutoff`.
pub fn random_interval<R: Rng>(rng: &mut R, mean: f64, cutoff: f64) -> (f64, f64) {
    let lo = match rng.random_range(0..3) {
        0 => 0.0,
        1 => cutoff * rng.random_range(0.2..1.0),
        _ => mean * rng.random_range(0.0..5.0),
    };
    let hi = if rng.random_bool(0.3) {
        f64::INFINITY
    } else {
        lo + mean * log_uniform(rng, 0.01, 5.0)
    };
    (lo, hi)
}

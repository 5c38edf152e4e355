mod common;

use coarq::analytic::{cycle_events, eta_cooperative_with, eta_fixed, plr_fixed, RelayModeLaw};
use coarq::channel::{ModeTable, Topology};
use coarq::config::hiperlan2;
use coarq::design::{design_link, LinkDesign};
use coarq::sim::{simulate, OutagePolicy, Scenario, SimConfig, SimMode, SimStats};
use coarq::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn adaptive(
    sd: &LinkDesign,
    rd: &LinkDesign,
    nr: usize,
    policy: OutagePolicy,
    packets: u64,
    seed: u64,
) -> SimConfig {
    SimConfig {
        packets,
        seed,
        nr,
        outage_policy: policy,
        mode: SimMode::Adaptive {
            sd: sd.clone(),
            rd: rd.clone(),
        },
    }
}

fn run(
    table: &ModeTable,
    sd: &LinkDesign,
    rd: &LinkDesign,
    eps: &[f64],
    config: &SimConfig,
) -> SimStats {
    let scenario = Scenario {
        mean_sd: sd.mean_snr,
        mean_rd: rd.mean_snr,
        eps: eps.to_vec(),
    };
    simulate(table, &scenario, config).unwrap()
}

/// Checks each event class with at least 100 expected hits against its
/// binomial 3σ band.
fn check_events(stats: &SimStats, probs: &[(&str, f64, u64)]) {
    let tx = stats.transmitted() as f64;
    for &(name, p, hits) in probs {
        if p * tx < 100.0 {
            continue;
        }
        let sigma = (p * (1.0 - p) / tx).sqrt();
        let freq = hits as f64 / tx;
        assert!(
            (freq - p).abs() <= 3.0 * sigma,
            "{name}: {freq} vs {p} (σ {sigma})"
        );
    }
}

#[test]
fn event_frequencies_match_the_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (k, (nr, policy, law)) in [
        (2, OutagePolicy::Wait, RelayModeLaw::Conditional),
        (3, OutagePolicy::CountAttempt, RelayModeLaw::CountAttempt),
    ]
    .into_iter()
    .enumerate()
    {
        let sys = common::random_system(&mut rng, 4, 0.02..0.3, 0.05..0.4);
        let stats = run(
            &sys.table,
            &sys.sd,
            &sys.rd,
            &sys.eps,
            &adaptive(&sys.sd, &sys.rd, nr, policy, 400_000, k as u64),
        );
        let ev = cycle_events(&sys.sd, &sys.rd, &sys.eps, nr, law).unwrap();
        let mut probs = vec![
            ("source success", ev.source_success, stats.source_success),
            (
                "relay decode failure",
                ev.relay_decode_fail,
                stats.relay_decode_fail,
            ),
            (
                "budget exhausted",
                ev.budget_exhausted,
                stats.budget_exhausted_loss,
            ),
        ];
        for l in 0..nr {
            probs.push((
                "relay success",
                ev.relay_success[l],
                stats.success_at_attempt[l],
            ));
        }
        check_events(&stats, &probs);
        let eta = eta_cooperative_with(&sys.sd, &sys.rd, &sys.eps, nr, law).unwrap();
        assert!(
            (stats.eta_hat() - eta).abs() <= 3.0 * stats.eta_se(),
            "{} vs {eta}",
            stats.eta_hat()
        );
    }
}

#[test]
fn fixed_pair_matches_closed_form() {
    let table = hiperlan2();
    let topo = Topology::from_db(12.0, 0.4, 4.0).unwrap();
    let snrs = topo.link_snrs();
    let scenario = Scenario::from_topology(&table, &topo);
    let config = SimConfig {
        packets: 1_000_000,
        seed: 3,
        nr: 1,
        outage_policy: OutagePolicy::Wait,
        mode: SimMode::Fixed { n: 3, m: 4 },
    };
    let s = simulate(&table, &scenario, &config).unwrap();
    let eta = eta_fixed(&table, 3, 4, &snrs).unwrap();
    let plr = plr_fixed(&table, 3, 4, &snrs).unwrap();
    assert_eq!(s.source_outage, 0);
    assert!(
        (s.eta_hat() - eta).abs() <= 3.0 * s.eta_se(),
        "{} vs {eta}",
        s.eta_hat()
    );
    assert!(
        (s.plr_hat() - plr).abs() <= 3.0 * s.plr_se(),
        "{} vs {plr}",
        s.plr_hat()
    );
}

#[test]
fn standard_errors_shrink_with_the_root_of_the_run_length() {
    let table = hiperlan2();
    let sd = design_link(&table, 10.0, 0.05).unwrap();
    let rd = design_link(&table, 40.0, 0.05).unwrap();
    let eps = vec![0.1; table.len()];
    let se: Vec<f64> = [20_000u64, 200_000, 2_000_000]
        .iter()
        .map(|&n| {
            run(
                &table,
                &sd,
                &rd,
                &eps,
                &adaptive(&sd, &rd, 1, OutagePolicy::Wait, n, 9),
            )
            .eta_se()
        })
        .collect();
    for w in se.windows(2) {
        let ratio = w[0] / w[1];
        assert!((ratio / 10f64.sqrt() - 1.0).abs() < 0.1, "ratio {ratio}");
    }
}

#[test]
fn same_seed_same_stats() {
    let table = hiperlan2();
    let sd = design_link(&table, 10.0, 0.05).unwrap();
    let rd = design_link(&table, 40.0, 0.05).unwrap();
    let eps = vec![0.1; table.len()];
    let cfg = adaptive(&sd, &rd, 2, OutagePolicy::CountAttempt, 100_000, 77);
    let a = run(&table, &sd, &rd, &eps, &cfg);
    let b = run(&table, &sd, &rd, &eps, &cfg);
    assert_eq!(a, b);
    let c = run(&table, &sd, &rd, &eps, &SimConfig { seed: 78, ..cfg });
    assert_ne!(a, c);
}

#[test]
fn waiting_on_a_dead_relay_is_rejected() {
    let table = hiperlan2();
    let sd = design_link(&table, 10.0, 0.05).unwrap();
    let rd =
        LinkDesign::from_thresholds(&table, 10.0, vec![f64::INFINITY; table.len()], None).unwrap();
    let eps = vec![0.0; table.len()];
    let scenario = Scenario {
        mean_sd: 10.0,
        mean_rd: 10.0,
        eps,
    };
    let err = simulate(
        &table,
        &scenario,
        &adaptive(&sd, &rd, 1, OutagePolicy::Wait, 10, 0),
    )
    .unwrap_err();
    assert!(matches!(err, Error::RelayAlwaysInOutage));
    // counting the attempt terminates: every held packet is lost
    let s = simulate(
        &table,
        &scenario,
        &adaptive(&sd, &rd, 1, OutagePolicy::CountAttempt, 10_000, 0),
    )
    .unwrap();
    assert_eq!(s.success_at_attempt, vec![0]);
    assert!(s.relay_outage_frames > 0);
}

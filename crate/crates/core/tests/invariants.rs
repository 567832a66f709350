mod common;

use proptest::prelude::*;

use stubborn_mining::chain::{build_generator, enumerate_states, solve_steady_state, truncation_tail_mass};
use stubborn_mining::harness::{emit_csv, find_threshold, parse_csv, run_sweep, SweepRow, SweepSpec, DEFAULT_ALPHAS, DEFAULT_THETAS};
use stubborn_mining::metrics::{self, compute_ph_boundary, TAIL_MASS_WARNING};
use stubborn_mining::sim::{run_round, simulate, Policy, Probe, SimConfig};
use stubborn_mining::{validate_params, Delta, MarkovState, ModelParams, RawParams, StrategyFlags};

fn params(alpha: f64, theta: f64, delta_max: u32) -> ModelParams {
    validate_params(&RawParams::new(alpha, theta).delta_max(delta_max)).unwrap()
}

fn flags_strategy() -> impl Strategy<Value = StrategyFlags> {
    (0usize..8).prop_map(|i| StrategyFlags::all()[i])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn event_rates_partition_unity(alpha in 0.001f64..0.499, theta in 0.0f64..0.999) {
        let p = params(alpha, theta, 30);
        prop_assert!((p.alpha + p.p_beta1 + p.beta2 - 1.0).abs() <= 1e-15);
        prop_assert!((p.beta - (1.0 - alpha)).abs() <= 1e-15);
    }

    #[test]
    fn report_identities(flags in flags_strategy(), alpha in 0.02f64..0.48, theta in 0.0f64..0.3) {
        let r = metrics::report(&params(alpha, theta, 30), flags).unwrap();
        let v = r.revenue;
        prop_assert!(v.e_m >= 0.0 && v.e_h >= 0.0);
        prop_assert!((v.rr_m + v.rr_h - 1.0).abs() <= 1e-12);
        prop_assert!((v.tps - v.e_m - v.e_h).abs() <= 1e-12);
        prop_assert!(v.tps <= 1.0 + 1e-12);
        let ph = &r.ph;
        let probs = [ph.ph_minus1, ph.ph_tie_allhonest, ph.ph_tie(2), ph.ph_tie(3), r.pf.pf];
        prop_assert!(probs.iter().all(|x| (0.0..=1.0).contains(x)), "{probs:?}");
        for n in 1..=3 {
            for len in 1..ph.max_lead() {
                prop_assert!(ph.ph_lead(len + 1, n) <= ph.ph_lead(len, n) + 1e-12);
            }
        }
    }

    #[test]
    fn generator_rows_balance(flags in flags_strategy(), alpha in 0.02f64..0.48, theta in 0.0f64..0.5) {
        let space = enumerate_states(flags, 12).unwrap();
        let q = build_generator(&params(alpha, theta, 12), flags, &space).unwrap();
        prop_assert!(q.max_row_sum() <= 1e-12);
        let dist = solve_steady_state(&q).unwrap();
        prop_assert!(dist.residual <= 1e-10);
        prop_assert!((dist.pi.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn rounds_conserve_blocks(flags in flags_strategy(), alpha in 0.02f64..0.48, theta in 0.0f64..0.5, seed in any::<u64>()) {
        let c = SimConfig::new(params(alpha, theta, 30), Policy::Strategy(flags)).blocks(2_000).seed(seed);
        let s = run_round(&c, 1).unwrap();
        prop_assert_eq!(s.created, s.consensus_total + s.stale_total + s.discarded);
        prop_assert!(s.consensus_mp <= s.consensus_total);
        prop_assert!(s.consensus_total >= 2_000);
        prop_assert_eq!(&run_round(&c, 1).unwrap(), &s);
    }

    #[test]
    fn csv_round_trip(
        alpha in 0.01f64..0.49,
        theta in 0.0f64..0.99,
        rr in proptest::option::of(0.0f64..1.0),
        tps in proptest::option::of(0.0f64..1.0),
        seed in proptest::option::of(any::<u64>()),
        error in proptest::option::of("[a-z ,\"]{1,12}"),
    ) {
        let row = SweepRow {
            strategy: "LT".into(),
            alpha,
            theta,
            rr_m_analytic: rr,
            tps_analytic: tps,
            tail_mass: rr.map(|x| x * 1e-9),
            rr_m_sim: tps,
            rr_m_sim_ci95: rr,
            tps_sim: tps,
            rounds: seed.map(|_| 30),
            blocks_per_round: seed.map(|_| 1_000_000),
            seed,
            error,
        };
        let mut buf = Vec::new();
        emit_csv(std::slice::from_ref(&row), &mut buf).unwrap();
        prop_assert_eq!(parse_csv(buf.as_slice()).unwrap(), vec![row]);
    }
}

#[test]
fn trailing_states_need_the_trail_flag() {
    for flags in StrategyFlags::all() {
        let space = enumerate_states(flags, 30).unwrap();
        let behind = space
            .states()
            .iter()
            .any(|s| matches!(s.delta, Delta::TrailMinusOne | Delta::TieAllHonest));
        assert_eq!(behind, flags.trail, "{flags}");
    }
}

#[test]
fn revenue_grows_with_power() {
    for flags in StrategyFlags::all() {
        for &theta in &DEFAULT_THETAS {
            let rr: Vec<f64> = DEFAULT_ALPHAS
                .iter()
                .map(|&a| metrics::report(&params(a, theta, 30), flags).unwrap().revenue.rr_m)
                .collect();
            assert!(rr.windows(2).all(|w| w[1] >= w[0]), "{flags} {theta} {rr:?}");
        }
    }
}

#[test]
fn lft_revenue_grows_with_fork_probability() {
    let mut drops = Vec::new();
    for &alpha in DEFAULT_ALPHAS.iter().filter(|&&a| a >= 0.3) {
        let rr: Vec<f64> = DEFAULT_THETAS
            .iter()
            .map(|&t| metrics::report(&params(alpha, t, 30), StrategyFlags::LFT).unwrap().revenue.rr_m)
            .collect();
        if rr.windows(2).any(|w| w[1] < w[0]) {
            drops.push((alpha, rr));
        }
    }
    assert!(drops.is_empty(), "rr_m falls as theta grows: {drops:?}");
}

#[test]
fn truncation_at_thirty_is_converged() {
    let mut worst_pi: f64 = 0.0;
    let mut worst_tail: f64 = 0.0;
    for flags in StrategyFlags::all() {
        let short_space = enumerate_states(flags, 30).unwrap();
        let long_space = enumerate_states(flags, 60).unwrap();
        for &alpha in &DEFAULT_ALPHAS {
            for &theta in &DEFAULT_THETAS {
                let short = solve_steady_state(&build_generator(&params(alpha, theta, 30), flags, &short_space).unwrap()).unwrap();
                let long = solve_steady_state(&build_generator(&params(alpha, theta, 60), flags, &long_space).unwrap()).unwrap();
                worst_tail = worst_tail.max(truncation_tail_mass(&short, &short_space));
                for s in short_space.states() {
                    worst_pi = worst_pi.max((short.prob(&short_space, s) - long.prob(&long_space, s)).abs());
                }
            }
        }
    }
    assert!(worst_tail <= 1e-6 && worst_pi < 1e-8, "tail {worst_tail:e}, pi change {worst_pi:e}");
}

#[test]
fn tail_mass_examples() {
    let tail = |alpha, dm| {
        let space = enumerate_states(StrategyFlags::LFT, dm).unwrap();
        let q = build_generator(&params(alpha, 0.1, dm), StrategyFlags::LFT, &space).unwrap();
        truncation_tail_mass(&solve_steady_state(&q).unwrap(), &space)
    };
    assert!(tail(0.05, 10) < 1e-10);
    assert!(tail(0.45, 3) > TAIL_MASS_WARNING);
    assert!(tail(0.45, 60) < tail(0.45, 30));
}

#[test]
fn boundary_race_examples() {
    let (m1, t) = compute_ph_boundary(&params(0.3, 0.1, 30));
    assert!((m1 - 0.7 / 0.79).abs() < 1e-15 && (m1 - 0.886076).abs() < 1e-6);
    assert!((t - 0.620253).abs() < 1e-6);
    let (m1, _) = compute_ph_boundary(&params(0.45, 0.1, 30));
    assert!((m1 - 0.730897).abs() < 1e-6);
}

#[test]
fn revenue_examples() {
    let rr = |f, a, t| metrics::report(&params(a, t, 30), f).unwrap().revenue;
    assert!(rr(StrategyFlags::LFT, 0.4, 0.1).rr_m > 0.4);
    assert!(rr(StrategyFlags::LFT, 0.1, 0.01).rr_m < 0.1);
    assert!(rr(StrategyFlags::S, 0.001, 0.1).rr_m < 1e-3);
    for f in StrategyFlags::all() {
        assert!(rr(f, 0.25, 0.05).tps < 1.0);
    }
}

#[test]
fn perfect_network_selfish_matches_reference() {
    for alpha in [0.1, 0.25, 0.3, 0.33, 0.4] {
        let oracle = common::selfish_share(alpha, 0.5);
        assert!((oracle - common::selfish_share_closed(alpha, 0.5)).abs() < 1e-10);
        let engine = metrics::report(&params(alpha, 0.0, 60), StrategyFlags::S).unwrap().revenue.rr_m;
        assert!((engine - oracle).abs() < 1e-9, "{alpha}: {engine} vs {oracle}");
    }
}

#[test]
fn revenue_is_well_conditioned() {
    let base = metrics::report(&params(0.35, 0.1, 30), StrategyFlags::LFT).unwrap().revenue.rr_m;
    for d in [1e-9, -1e-9] {
        let moved = metrics::report(&params(0.35 + d, 0.1, 30), StrategyFlags::LFT).unwrap().revenue.rr_m;
        assert!((moved - base).abs() < 1e-7);
    }
}

#[test]
fn selfish_threshold_is_above_a_quarter() {
    let rows = run_sweep(&SweepSpec {
        strategies: vec![Policy::Strategy(StrategyFlags::S)],
        thetas: vec![0.01],
        ..SweepSpec::default()
    })
    .unwrap();
    let t = find_threshold(&rows)[0].alpha.unwrap();
    assert!(t >= 0.25, "{t}");
}

#[test]
fn simulated_state_frequencies_match_stationary_distribution() {
    let p = params(0.3, 0.0, 30);
    let space = enumerate_states(StrategyFlags::S, 30).unwrap();
    let dist = solve_steady_state(&build_generator(&p, StrategyFlags::S, &space).unwrap()).unwrap();
    let sim = simulate(&SimConfig::new(p, Policy::Strategy(StrategyFlags::S)).blocks(400_000).rounds(2)).unwrap();
    let gap = space
        .states()
        .iter()
        .map(|s| (dist.prob(&space, s) - sim.state_freq.get(s).copied().unwrap_or(0.0)).abs())
        .fold(0.0, f64::max);
    assert!(gap < 0.005, "{gap}");
    assert!((sim.state_freq.values().sum::<f64>() - 1.0).abs() < 1e-9);
}

#[test]
fn race_probabilities_match_simulated_frequencies() {
    let cfg = |f, a, t| SimConfig::new(params(a, t, 30), Policy::Strategy(f)).blocks(1_000_000).rounds(2);
    let p = params(0.3, 0.01, 30);
    let tie = metrics::solve_ph_tie(&p, StrategyFlags::S).unwrap().ph_tie(2);
    let seen = 1.0 - simulate(&cfg(StrategyFlags::S, 0.3, 0.01)).unwrap().probe_win_rate(Probe::TieEntry).unwrap();
    assert!((tie - seen).abs() < 0.005, "{tie} vs {seen}");

    let pf = metrics::report(&p, StrategyFlags::F).unwrap().pf.pf;
    let seen = simulate(&cfg(StrategyFlags::F, 0.3, 0.01)).unwrap().probe_win_rate(Probe::WithheldAtTie).unwrap();
    assert!((pf - seen).abs() < 0.005, "{pf} vs {seen}");
}

#[test]
fn attack_lowers_simulated_throughput() {
    let run = |policy| {
        simulate(&SimConfig::new(params(0.4, 0.2, 30), policy).blocks(200_000).rounds(4))
            .unwrap()
            .tps
            .mean
    };
    assert!(run(Policy::Strategy(StrategyFlags::LFT)) < run(Policy::Honest));
}

#[test]
fn initial_state_is_the_agreed_tip() {
    assert_eq!(MarkovState::INITIAL, MarkovState::lead(0, 1));
}

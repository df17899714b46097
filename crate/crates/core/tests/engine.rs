use kelly_auction::engine::{clearing_price, self_consistent_clearing_price};
use kelly_auction::equilibrium::surcharge_upper_bound;
use kelly_auction::{
    generate_scenario, run_auction, solve_price_anticipation, solve_price_taking, AuctionOutcome, BuyerSpec,
    BuyerSpec32, EngineConfig, EngineConfig32, GenerationConfig, MarketPowerSource, Mode, Scenario, Scenario32,
    SellerSpec, SellerSpec32, Termination,
};
use proptest::prelude::*;

fn template(t: usize, seed: u64) -> Scenario {
    generate_scenario(&GenerationConfig::template(t, seed).unwrap()).unwrap()
}

fn all_templates() -> impl Iterator<Item = (usize, u64, Scenario)> {
    (0..5).flat_map(|t| (0..20).map(move |seed| (t, seed, template(t, seed))))
}

fn r1() -> Scenario {
    Scenario::new(vec![BuyerSpec::new(1.0, 1.0)], vec![SellerSpec::new(1.0, 1.0, 1.0)])
}

fn check_balance(s: &Scenario, out: &AuctionOutcome) -> Result<(), String> {
    let (a0, ps) = (s.aggregator.a0, s.aggregator.ps);
    for r in out.iterations.iter().filter(|r| r.traded) {
        let d: f64 = r.demands.iter().sum();
        let a: f64 = r.availabilities.iter().sum();
        if (d - a).abs() > 1e-9 * a.max(1e-300) {
            return Err(format!("round {}: demand {d} vs supply {a}", r.k));
        }
        // buyers' money equals what sellers receive plus the surcharge, the
        // virtual agent buying back its own energy at the buyer price
        let b0 = (r.price + ps) * a0;
        let money_in = b0 + r.bids.iter().sum::<f64>();
        let money_out = (r.price + ps) * (a0 + a);
        if (money_in - money_out).abs() > 1e-9 * money_in.max(1e-300) {
            return Err(format!("round {}: {money_in} paid vs {money_out}", r.k));
        }
        let p = clearing_price(&r.bids, b0, &r.availabilities, a0, ps).unwrap();
        if (p - r.price).abs() > 1e-9 * r.price.max(1.0) {
            return Err(format!("round {}: clearing price {p} vs {}", r.k, r.price));
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn every_round_balances(
        n in 1usize..4,
        m in 1usize..5,
        seed in any::<u64>(),
        a0_frac in prop_oneof![Just(0.0), 0.01_f64..3.0],
        ps_frac in prop_oneof![Just(0.0), 0.0_f64..0.9],
        anticipating in any::<bool>(),
    ) {
        let s = generate_scenario(&GenerationConfig::sized(n, m, seed)).unwrap();
        let ps = ps_frac * surcharge_upper_bound(&s);
        let s = s.clone().with_aggregator(a0_frac * s.total_generation(), ps);
        let cfg = EngineConfig {
            max_iters: 2000,
            ..if anticipating { EngineConfig::anticipating() } else { EngineConfig::default() }
        };
        match run_auction(&s, &cfg) {
            Ok(out) => check_balance(&s, &out).map_err(TestCaseError::fail)?,
            Err(e) => prop_assert!(anticipating && s.aggregator.a0 == 0.0, "{e}"),
        }
    }
}

#[test]
fn price_taking_converges_to_solver_price() {
    let cfg = EngineConfig::default();
    let mut misses = Vec::new();
    for (t, seed, s) in all_templates() {
        let out = run_auction(&s, &cfg).unwrap();
        assert_eq!(out.termination, Termination::Converged, "t{t} s{seed}");
        let p = solve_price_taking(&s).unwrap().price;
        let gap = (out.equilibrium.price - p).abs();
        assert!(gap < 1e-6, "t{t} s{seed}: gap {gap}");
        if gap > 10.0 * cfg.price_tol {
            misses.push(format!("t{t}/s{seed} gap {gap:.2e} after {} rounds", out.iterations.len()));
        }
    }
    assert!(misses.is_empty(), "price further than 10·ε_p from the solver: {misses:?}");
}

#[test]
fn anticipating_fixed_points_are_stationary() {
    let mut misses = Vec::new();
    for (t, seed, s) in all_templates() {
        let g = s.total_generation();
        for k in [0.0, 0.1, 1.0, 10.0] {
            let sc = s.clone().with_aggregator(k * g, 0.0);
            let out = run_auction(&sc, &EngineConfig::anticipating()).unwrap();
            if !out.converged() {
                // zero-trade markets without a virtual agent shrink too slowly
                let eq = solve_price_anticipation(&sc).unwrap();
                assert!(k == 0.0 && eq.zero_trade, "t{t} s{seed} a0 = {k}·Σg did not converge");
                continue;
            }
            let r = out.equilibrium.kkt.stationarity_residual;
            if r >= 1e-5 {
                misses.push(format!("t{t}/s{seed} a0 = {k}·Σg residual {r:.2e}"));
            }
        }
    }
    assert!(misses.is_empty(), "stationarity residual at or above 1e-5: {misses:?}");
}

fn envelope(dp: &[f64], window: usize) -> Vec<f64> {
    dp.chunks(window).map(|c| c.iter().copied().fold(0.0, f64::max)).collect()
}

#[test]
fn price_steps_do_not_grow_after_round_ten() {
    let mut misses = Vec::new();
    for theta in [0.5, 0.25] {
        for (t, seed, s) in all_templates() {
            let cfg = EngineConfig { damping: theta, ..EngineConfig::default() };
            let out = run_auction(&s, &cfg).unwrap();
            let p: Vec<f64> = out.iterations.iter().map(|r| r.price).collect();
            let dp: Vec<f64> = p.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
            if dp.iter().skip(10).collect::<Vec<_>>().windows(2).any(|w| w[1] > w[0]) {
                misses.push(format!("θ={theta} t{t}/s{seed}"));
            }
        }
    }
    assert!(
        misses.is_empty(),
        "{} of 200 runs have a growing price step, e.g. {:?}",
        misses.len(),
        &misses[..misses.len().min(5)]
    );
}

#[test]
fn oscillation_envelope_shrinks() {
    // largest price step per 50-round window, after the first 10 rounds
    for (t, seed, s) in all_templates() {
        let out = run_auction(&s, &EngineConfig::default()).unwrap();
        let p: Vec<f64> = out.iterations.iter().map(|r| r.price).collect();
        let dp: Vec<f64> = p.windows(2).skip(10).map(|w| (w[1] - w[0]).abs()).collect();
        let env = envelope(&dp, 50);
        assert!(env.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9) + 1e-14), "t{t} s{seed}: {env:?}");
    }
}

#[test]
fn repeated_runs_are_bit_identical() {
    for (t, seed, s) in all_templates().step_by(7) {
        for cfg in [
            EngineConfig::default(),
            EngineConfig::anticipating(),
            EngineConfig { market_power: MarketPowerSource::Estimated, ..EngineConfig::anticipating() },
        ] {
            let s = s.clone().with_aggregator(s.total_generation(), 0.0);
            let a = run_auction(&s, &cfg).unwrap();
            let b = run_auction(&s, &cfg).unwrap();
            assert_eq!(a, b, "t{t} s{seed}");
        }
    }
}

#[test]
fn virtual_agent_dilutes_market_power() {
    let s = template(0, 1);
    let g = s.total_generation();
    let mut prev = f64::INFINITY;
    for k in [0.1, 1.0, 10.0] {
        let out = run_auction(&s.clone().with_aggregator(k * g, 0.0), &EngineConfig::anticipating()).unwrap();
        let last = out.iterations.last().unwrap();
        let top = last.betas.iter().chain(&last.alphas).copied().fold(0.0, f64::max);
        assert!(top < prev, "a0 = {k}·Σg");
        prev = top;
    }
}

#[test]
fn estimated_market_powers_reach_a_balanced_rest_point() {
    for (t, seed, s) in all_templates().step_by(9) {
        let s = s.clone().with_aggregator(s.total_generation(), 0.0);
        let cfg = EngineConfig { market_power: MarketPowerSource::Estimated, ..EngineConfig::anticipating() };
        let out = run_auction(&s, &cfg).unwrap();
        assert!(out.converged(), "t{t} s{seed}");
        check_balance(&s, &out).unwrap();
    }
}

#[test]
fn surcharge_beyond_bound_ends_without_trade() {
    let s = r1().with_aggregator(0.0, 0.5);
    let out = run_auction(&s, &EngineConfig::default()).unwrap();
    assert_eq!(out.termination, Termination::ZeroTrade);
    assert_eq!(out.equilibrium.revenue, 0.0);
}

#[test]
fn self_consistent_price_covers_the_virtual_bid() {
    let (p, b0) = self_consistent_clearing_price(&[0.6, 0.3], &[0.8, 0.4], 2.0, 0.1).unwrap();
    assert!(f64::abs(p - (0.9 / 1.2 - 0.1)) < 1e-15);
    assert!(f64::abs(b0 - (p + 0.1) * 2.0) < 1e-15);
    assert!(self_consistent_clearing_price(&[0.6], &[0.0], 2.0, 0.1).is_err());
}

#[test]
fn config_errors() {
    let s = r1();
    for cfg in [
        EngineConfig { damping: 0.0, ..EngineConfig::default() },
        EngineConfig { damping: 1.5, ..EngineConfig::default() },
        EngineConfig { price_tol: 0.0, ..EngineConfig::default() },
        EngineConfig { max_iters: 0, ..EngineConfig::default() },
        EngineConfig { initial_price: -1.0, ..EngineConfig::default() },
        EngineConfig { initial_demands: Some(vec![0.1, 0.2]), ..EngineConfig::default() },
    ] {
        assert!(run_auction(&s, &cfg).is_err(), "{cfg:?}");
    }
    // a single anticipating seller without a virtual agent is a monopoly
    assert!(run_auction(&s, &EngineConfig::anticipating()).is_err());
    assert_eq!(EngineConfig::anticipating().mode, Mode::PriceAnticipating);
}

#[test]
fn single_precision_engine() {
    let s = Scenario32::new(vec![BuyerSpec32::new(1.0, 1.0)], vec![SellerSpec32::new(1.0, 1.0, 1.0)]);
    let cfg = EngineConfig32 { price_tol: 1e-5, bid_tol: 1e-5, ..EngineConfig32::default() };
    let out = run_auction(&s, &cfg).unwrap();
    assert!(out.converged());
    assert!((out.equilibrium.price - 2.0 / 3.0).abs() < 1e-4);
}

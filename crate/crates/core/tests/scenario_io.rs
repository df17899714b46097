use kelly_auction::metrics::{linear_grid, sweep_surcharge, sweep_virtual};
use kelly_auction::scenario_io::{
    emit_sweep, emit_trace, parse_scenario, scenario_to_json, trace_header, SWEEP_HEADER,
};
use kelly_auction::{
    generate_scenario, load_scenario, run_auction, save_scenario, AuctionError, BuyerSpec, EngineConfig,
    GenerationConfig, Scenario, Scenario32, SellerSpec,
};
use proptest::prelude::*;

fn finite_positive() -> impl Strategy<Value = f64> {
    prop_oneof![1e-300_f64..1e-3, 1e-3_f64..1e3, 1e3_f64..1e300]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn json_round_trip_is_lossless(
        bx in finite_positive(), by in finite_positive(),
        sx in finite_positive(), sy in finite_positive(), g in finite_positive(),
        a0 in prop_oneof![Just(0.0), finite_positive()],
        ps in prop_oneof![Just(0.0), finite_positive()],
    ) {
        // the trade condition needs bx·by > sx·sy/(sy·g + 1)
        let s = Scenario::new(
            vec![BuyerSpec::new(bx, by), BuyerSpec::new(1.0, 1.0)],
            vec![SellerSpec::new(sx, sy, g), SellerSpec::new(0.5, 0.5, 1.0)],
        )
        .with_aggregator(a0, ps);
        let back: Scenario = parse_scenario(&scenario_to_json(&s).unwrap()).unwrap();
        prop_assert_eq!(back, s);
    }

    #[test]
    fn single_precision_round_trip(x in 0.1_f32..10.0, y in 0.1_f32..10.0, g in 0.1_f32..10.0) {
        let s = Scenario32::new(
            vec![kelly_auction::BuyerSpec32::new(x, y)],
            vec![kelly_auction::SellerSpec32::new(0.1, 0.1, g)],
        );
        let back: Scenario32 = parse_scenario(&scenario_to_json(&s).unwrap()).unwrap();
        prop_assert_eq!(back, s);
    }
}

#[test]
fn sampler_means_match_range_centers() {
    let cfg = GenerationConfig { n_buyers: 25_000, n_sellers: 25_000, seed: 11, ..GenerationConfig::default() };
    let s: Scenario = generate_scenario(&cfg).unwrap();
    let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    let params: Vec<f64> = s
        .buyers
        .iter()
        .flat_map(|b| [b.utility.x, b.utility.y])
        .chain(s.sellers.iter().flat_map(|sl| [sl.utility.x, sl.utility.y]))
        .collect();
    assert_eq!(params.len(), 100_000);
    assert!(params.iter().all(|v| (0.5..1.5).contains(v)));
    let m = mean(params);
    assert!((m - 1.0).abs() < 0.01, "parameter mean {m}");
    let g = mean(s.sellers.iter().map(|sl| sl.generation).collect());
    assert!((g - 1.25).abs() < 0.0125, "generation mean {g}");
}

#[test]
fn generation_is_seeded() {
    let a: Scenario = generate_scenario(&GenerationConfig::sized(3, 4, 99)).unwrap();
    let b: Scenario = generate_scenario(&GenerationConfig::sized(3, 4, 99)).unwrap();
    let c: Scenario = generate_scenario(&GenerationConfig::sized(3, 4, 100)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a.aggregator.a0, 0.0);
    assert_eq!(a.aggregator.ps, 0.0);
}

#[test]
fn file_round_trip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scenario.json");
    let s: Scenario = generate_scenario(&GenerationConfig::template(4, 3).unwrap()).unwrap();
    save_scenario(&s, &path).unwrap();
    assert_eq!(load_scenario::<f64>(&path).unwrap(), s);

    let broken = dir.path().join("broken.json");
    std::fs::write(&broken, "{\"buyers\": [").unwrap();
    match load_scenario::<f64>(&broken) {
        Err(AuctionError::Parse(msg)) => assert!(msg.contains("broken.json"), "{msg}"),
        other => panic!("expected parse error, got {other:?}"),
    }
    assert!(matches!(load_scenario::<f64>(dir.path().join("missing.json")), Err(AuctionError::Io(_))));

    let invalid = dir.path().join("invalid.json");
    std::fs::write(&invalid, r#"{"buyers":[{"x":1,"y":1}],"sellers":[{"x":1,"y":-1,"g":1}]}"#).unwrap();
    assert!(matches!(load_scenario::<f64>(&invalid), Err(AuctionError::Validation(_))));
}

#[test]
fn aggregator_defaults_to_selfless() {
    let s: Scenario = parse_scenario(r#"{"buyers":[{"x":1,"y":1}],"sellers":[{"x":1,"y":1,"g":1}]}"#).unwrap();
    assert_eq!((s.aggregator.a0, s.aggregator.ps), (0.0, 0.0));
}

#[test]
fn trace_file_layout() {
    let s: Scenario = generate_scenario(&GenerationConfig::sized(2, 3, 5)).unwrap();
    let out = run_auction(&s, &EngineConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    emit_trace(&out, &path).unwrap();
    let mut reader = csv::Reader::from_path(&path).unwrap();
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(
        header.join(","),
        "k,p,b_1,b_2,d_1,d_2,beta_1,beta_2,a_1,a_2,a_3,alpha_1,alpha_2,alpha_3,rho_1,rho_2,rho_3"
    );
    assert_eq!(header, trace_header(2, 3));
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), out.iterations.len());
    for (row, rec) in rows.iter().zip(&out.iterations) {
        assert_eq!(row[0].parse::<usize>().unwrap(), rec.k);
        assert_eq!(row[1].parse::<f64>().unwrap(), rec.price);
        assert_eq!(row[2].parse::<f64>().unwrap(), rec.bids[0]);
        assert_eq!(row[10].parse::<f64>().unwrap(), rec.availabilities[2]);
    }
}

#[test]
fn sweep_file_layout() {
    let s: Scenario = generate_scenario(&GenerationConfig::sized(2, 3, 5)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.csv");
    let sweep = sweep_surcharge(&s, &linear_grid(0.0, 0.3, 7)).unwrap();
    emit_sweep(&sweep, &path).unwrap();
    let mut reader = csv::Reader::from_path(&path).unwrap();
    assert_eq!(reader.headers().unwrap().iter().collect::<Vec<_>>(), SWEEP_HEADER);
    let params: Vec<f64> = reader.records().map(|r| r.unwrap()[0].parse().unwrap()).collect();
    assert_eq!(params, linear_grid(0.0, 0.3, 7));

    // a failed point is written with its flag cleared
    let single = Scenario::new(vec![BuyerSpec::new(1.0, 1.0)], vec![SellerSpec::new(1.0, 1.0, 1.0)]);
    let sweep = sweep_virtual(&single, &[0.0, 1.0]).unwrap();
    emit_sweep(&sweep, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[1].starts_with("0.0,NaN") && lines[1].ends_with(",false"), "{}", lines[1]);
    assert!(lines[2].ends_with(",true"));
}

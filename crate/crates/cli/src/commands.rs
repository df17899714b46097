use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use kelly_auction::equilibrium::{availability_function, demand_function, surcharge_upper_bound};
use kelly_auction::metrics::{self, linear_grid, log_grid};
use kelly_auction::scenario_io::{emit_trace, scenario_to_json, write_sweep, TEMPLATE_SIZES};
use kelly_auction::{
    generate_scenario, load_scenario, run_auction, solve_price_anticipation, solve_price_taking,
    solve_surcharge, AuctionError, EngineConfig, GenerationConfig, Scenario, Termination,
};

use crate::{CurvesArgs, GenArgs, ModeArg, Shared, Status, SweepArgs};

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

/// Loads `--scenario` and applies the `--a0`/`--ps` overrides.
fn scenario(a: &Shared) -> Result<Scenario> {
    let Some(path) = &a.scenario else { bail!(AuctionError::Domain("--scenario is required".into())) };
    let mut s: Scenario = load_scenario(path).with_context(|| format!("cannot load scenario {}", path.display()))?;
    if let Some(a0) = a.a0 {
        s.aggregator.a0 = a0;
    }
    if let Some(ps) = a.ps {
        s.aggregator.ps = ps;
    }
    let report = kelly_auction::validate_scenario(&s);
    if !report.is_valid() {
        bail!(AuctionError::Validation(report));
    }
    Ok(s)
}

fn engine_config(a: &Shared) -> EngineConfig {
    let mut cfg = match a.mode {
        ModeArg::Pt => EngineConfig::default(),
        ModeArg::Pa => EngineConfig::anticipating(),
    };
    if let Some(theta) = a.theta {
        cfg.damping = theta;
    }
    if let Some(n) = a.max_iters {
        cfg.max_iters = n;
    }
    if let Some(tol) = a.tol {
        cfg.price_tol = tol;
        cfg.bid_tol = tol;
    }
    cfg
}

pub fn generate(a: &GenArgs) -> Result<Status> {
    let cfg = match a.template {
        Some(k) => GenerationConfig::template(k, a.shared.seed).ok_or_else(|| {
            AuctionError::Domain(format!("template must be below {}, got {k}", TEMPLATE_SIZES.len()))
        })?,
        None => GenerationConfig::sized(a.buyers, a.sellers, a.shared.seed),
    };
    let s: Scenario = generate_scenario(&cfg)?;
    let s = s.with_aggregator(a.shared.a0.unwrap_or(0.0), a.shared.ps.unwrap_or(0.0));
    let report = kelly_auction::validate_scenario(&s);
    if !report.is_valid() {
        bail!(AuctionError::Validation(report));
    }
    let mut out = output(a.shared.out.as_deref())?;
    writeln!(out, "{}", scenario_to_json(&s)?)?;
    out.flush()?;
    Ok(Status::Ok)
}

pub fn run(a: &Shared) -> Result<Status> {
    let s = scenario(a)?;
    let outcome = run_auction(&s, &engine_config(a))?;
    let trace = a.out.clone().unwrap_or_else(|| PathBuf::from("trace.csv"));
    emit_trace(&outcome, &trace).with_context(|| format!("writing {}", trace.display()))?;
    let eq = &outcome.equilibrium;
    let status = match outcome.termination {
        Termination::Converged => "converged",
        Termination::ZeroTrade => "zero-trade",
        Termination::MaxIterations => "not-converged",
    };
    println!(
        "{status} rounds={} p={:.10} volume={:.10} U={:.10} R={:.10} L={:.10}",
        outcome.iterations.len(),
        eq.price,
        eq.volume(),
        eq.welfare,
        eq.revenue,
        eq.loss
    );
    Ok(if outcome.converged() { Status::Ok } else { Status::NotConverged })
}

pub fn solve(a: &Shared) -> Result<Status> {
    let s = scenario(a)?;
    let eq = match a.mode {
        ModeArg::Pt if s.aggregator.ps > 0.0 => solve_surcharge(&s, s.aggregator.ps)?,
        ModeArg::Pt => solve_price_taking(&s)?,
        ModeArg::Pa => solve_price_anticipation(&s)?,
    };
    let mut out = output(a.out.as_deref())?;
    writeln!(out, "{}", serde_json::to_string_pretty(&eq)?)?;
    out.flush()?;
    Ok(Status::Ok)
}

fn check_points(points: usize) -> Result<()> {
    if points < 2 {
        bail!(AuctionError::Domain(format!("need at least 2 grid points, got {points}")));
    }
    Ok(())
}

pub fn sweep_surcharge(a: &SweepArgs) -> Result<Status> {
    check_points(a.points)?;
    let s = scenario(&a.shared)?;
    let grid = linear_grid(0.0, surcharge_upper_bound(&s), a.points);
    let sweep = metrics::sweep_surcharge(&s, &grid)?;
    let mut out = output(a.shared.out.as_deref())?;
    write_sweep(&sweep, &mut out)?;
    out.flush()?;
    Ok(Status::Ok)
}

pub fn sweep_virtual(a: &SweepArgs) -> Result<Status> {
    check_points(a.points)?;
    if !(a.min_factor > 0.0 && a.min_factor < a.max_factor && a.max_factor.is_finite()) {
        bail!(AuctionError::Domain(format!(
            "need 0 < min-factor < max-factor, got {} and {}",
            a.min_factor, a.max_factor
        )));
    }
    let s = scenario(&a.shared)?;
    let g = s.total_generation();
    let grid = log_grid(a.min_factor * g, a.max_factor * g, a.points);
    let sweep = metrics::sweep_virtual(&s, &grid)?;
    let mut out = output(a.shared.out.as_deref())?;
    write_sweep(&sweep, &mut out)?;
    out.flush()?;
    Ok(Status::Ok)
}

pub fn curves(a: &CurvesArgs) -> Result<Status> {
    check_points(a.points)?;
    let s = scenario(&a.shared)?;
    let l = s.min_seller_marginal_at_generation();
    let m = s.max_seller_marginal_at_zero();
    let n = s.max_buyer_marginal_at_zero();
    let top = 1.1 * m.max(n);
    let path = a.shared.out.clone().unwrap_or_else(|| PathBuf::from("curves.csv"));
    let file = File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "p,D,A")?;
    for k in 1..=a.points {
        let p = top * k as f64 / a.points as f64;
        writeln!(w, "{p:?},{:?},{:?}", demand_function(&s, p)?, availability_function(&s, p)?)?;
    }
    w.flush()?;
    println!("l={l:?} m={m:?} n={n:?}");
    Ok(Status::Ok)
}

pub fn compare(a: &Shared) -> Result<Status> {
    let mut out = output(a.out.as_deref())?;
    writeln!(
        out,
        "{:<8} {:>3} {:>3} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12} {:>10}",
        "template", "n", "m", "U_PT", "U_PA", "sellers_PT", "sellers_PA", "buyers_PT", "buyers_PA", "L_PA"
    )?;
    for (k, (n, m)) in TEMPLATE_SIZES.iter().enumerate() {
        let s: Scenario = generate_scenario(&GenerationConfig::template(k, a.seed).expect("template index"))?;
        let s = s.with_aggregator(a.a0.unwrap_or(0.0), 0.0);
        let pt = solve_price_taking(&s)?;
        let pa = solve_price_anticipation(&s)?;
        writeln!(
            out,
            "{:<8} {:>3} {:>3} {:>12.6} {:>12.6} {:>12.6} {:>12.6} {:>12.6} {:>12.6} {:>10.6}",
            k,
            n,
            m,
            pt.welfare,
            pa.welfare,
            pt.seller_welfare(&s),
            pa.seller_welfare(&s),
            pt.buyer_welfare(&s),
            pa.buyer_welfare(&s),
            pa.loss
        )?;
    }
    out.flush()?;
    Ok(Status::Ok)
}

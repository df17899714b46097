//! Random scenario generation, JSON persistence and CSV emission.
//!
//! Random draws come from ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! `seed_from_u64`. A uniform draw on `[lo, hi]` is
//! `lo + (hi − lo)·u` with `u = (next_u64 >> 11)·2⁻⁵³`. Buyers are drawn
//! first (`x`, then `y`), then sellers (`x`, `y`, `g`).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::engine::AuctionOutcome;
use crate::error::{domain, AuctionError, Result};
use crate::metrics::SweepResult;
use crate::model::{validate_scenario, BuyerSpec, Scenario, SellerSpec};
use crate::scalar::Scalar;

/// Redraws allowed before generation gives up.
pub const MAX_GENERATION_ATTEMPTS: usize = 100;

/// Market sizes `(buyers, sellers)` of the reference experiments.
pub const TEMPLATE_SIZES: [(usize, usize); 5] = [(2, 3), (2, 6), (2, 10), (3, 2), (4, 4)];

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationConfig {
    pub n_buyers: usize,
    pub n_sellers: usize,
    pub param_center: f64,
    pub param_halfwidth: f64,
    pub g_min: f64,
    pub g_max: f64,
    pub seed: u64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            n_buyers: 2,
            n_sellers: 3,
            param_center: 1.0,
            param_halfwidth: 0.5,
            g_min: 0.5,
            g_max: 2.0,
            seed: 0,
        }
    }
}

impl GenerationConfig {
    pub fn sized(n_buyers: usize, n_sellers: usize, seed: u64) -> Self {
        Self { n_buyers, n_sellers, seed, ..Self::default() }
    }

    /// The `k`-th reference template.
    pub fn template(k: usize, seed: u64) -> Option<Self> {
        TEMPLATE_SIZES.get(k).map(|&(n, m)| Self::sized(n, m, seed))
    }

    pub fn check(&self) -> Result<()> {
        if self.n_buyers == 0 || self.n_sellers == 0 {
            return domain("need at least one buyer and one seller");
        }
        let finite = [self.param_center, self.param_halfwidth, self.g_min, self.g_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return domain("generation bounds must be finite");
        }
        if !(self.param_halfwidth >= 0.0 && self.param_center - self.param_halfwidth > 0.0) {
            return domain(format!(
                "parameter range [{}, {}] must be positive",
                self.param_center - self.param_halfwidth,
                self.param_center + self.param_halfwidth
            ));
        }
        if !(self.g_min > 0.0 && self.g_min <= self.g_max) {
            return domain(format!("need 0 < g_min <= g_max, got [{}, {}]", self.g_min, self.g_max));
        }
        Ok(())
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    lo + (hi - lo) * u
}

/// Draws a valid scenario with a selfless aggregator, deterministic in the
/// seed.
pub fn generate_scenario<T: Scalar>(cfg: &GenerationConfig) -> Result<Scenario<T>> {
    cfg.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (lo, hi) = (cfg.param_center - cfg.param_halfwidth, cfg.param_center + cfg.param_halfwidth);
    for _ in 0..MAX_GENERATION_ATTEMPTS {
        let buyers = (0..cfg.n_buyers)
            .map(|_| {
                let x = uniform(&mut rng, lo, hi);
                let y = uniform(&mut rng, lo, hi);
                BuyerSpec::new(T::lit(x), T::lit(y))
            })
            .collect();
        let sellers = (0..cfg.n_sellers)
            .map(|_| {
                let x = uniform(&mut rng, lo, hi);
                let y = uniform(&mut rng, lo, hi);
                let g = uniform(&mut rng, cfg.g_min, cfg.g_max);
                SellerSpec::new(T::lit(x), T::lit(y), T::lit(g))
            })
            .collect();
        let s = Scenario::new(buyers, sellers);
        if validate_scenario(&s).is_valid() {
            return Ok(s);
        }
    }
    Err(AuctionError::GenerationFailure { attempts: MAX_GENERATION_ATTEMPTS })
}

/// Parses a scenario from JSON text and validates it.
pub fn parse_scenario<T: Scalar + DeserializeOwned>(text: &str) -> Result<Scenario<T>> {
    let s: Scenario<T> = serde_json::from_str(text).map_err(|e| AuctionError::Parse(e.to_string()))?;
    let report = validate_scenario(&s);
    if !report.is_valid() {
        return Err(AuctionError::Validation(report));
    }
    Ok(s)
}

pub fn scenario_to_json<T: Scalar + Serialize>(s: &Scenario<T>) -> Result<String> {
    serde_json::to_string_pretty(s).map_err(|e| AuctionError::Parse(e.to_string()))
}

pub fn load_scenario<T: Scalar + DeserializeOwned>(path: impl AsRef<Path>) -> Result<Scenario<T>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_scenario(&text).map_err(|e| match e {
        AuctionError::Parse(msg) => AuctionError::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Writes the scenario as JSON. Floats use the shortest representation that
/// reads back to the same value.
pub fn save_scenario<T: Scalar + Serialize>(s: &Scenario<T>, path: impl AsRef<Path>) -> Result<()> {
    let mut text = scenario_to_json(s)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn num<T: Scalar>(v: T) -> String {
    format!("{v:?}")
}

/// Header of the trace CSV for `n` buyers and `m` sellers.
pub fn trace_header(n: usize, m: usize) -> Vec<String> {
    let mut h = vec!["k".to_string(), "p".to_string()];
    for (name, count) in [("b", n), ("d", n), ("beta", n), ("a", m), ("alpha", m), ("rho", m)] {
        h.extend((1..=count).map(|i| format!("{name}_{i}")));
    }
    h
}

pub const SWEEP_HEADER: [&str; 7] = ["param", "p", "volume", "U", "R", "L", "converged"];

/// One CSV row per auction round.
pub fn write_trace<T: Scalar, W: Write>(outcome: &AuctionOutcome<T>, out: W) -> Result<()> {
    let (n, m) = (outcome.equilibrium.demands.len(), outcome.equilibrium.availabilities.len());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(trace_header(n, m))?;
    for r in &outcome.iterations {
        let mut row = vec![r.k.to_string(), num(r.price)];
        for col in [&r.bids, &r.demands, &r.betas, &r.availabilities, &r.alphas, &r.rhos] {
            row.extend(col.iter().copied().map(num));
        }
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_trace<T: Scalar>(outcome: &AuctionOutcome<T>, path: impl AsRef<Path>) -> Result<()> {
    write_trace(outcome, BufWriter::new(File::create(path)?))
}

/// One CSV row per grid point, in increasing parameter order.
pub fn write_sweep<T: Scalar, W: Write>(r: &SweepResult<T>, out: W) -> Result<()> {
    let mut rows: Vec<_> = r.rows.iter().collect();
    rows.sort_by(|a, b| a.param.partial_cmp(&b.param).unwrap_or(std::cmp::Ordering::Equal));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for row in rows {
        w.write_record([
            num(row.param),
            num(row.price),
            num(row.volume),
            num(row.welfare),
            num(row.revenue),
            num(row.loss),
            row.converged.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_sweep<T: Scalar>(r: &SweepResult<T>, path: impl AsRef<Path>) -> Result<()> {
    write_sweep(r, BufWriter::new(File::create(path)?))
}

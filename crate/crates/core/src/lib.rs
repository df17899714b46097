//! Proportional-allocation double auction for divisible goods such as
//! energy, run by an aggregator between buyers and sellers with logarithmic
//! utilities.
//!
//! The crate provides the iterative mechanism ([`engine`]), closed-form and
//! bisection solvers for its equilibria ([`equilibrium`]), welfare and
//! revenue metrics with parameter sweeps ([`metrics`]) and scenario
//! generation and file formats ([`scenario_io`]).
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`). The
//! unsuffixed aliases at the crate root fix the scalar to `f64`; the `32`
//! suffixed ones fix it to `f32`.

// `!(x > 0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod engine;
pub mod equilibrium;
pub mod error;
pub mod metrics;
pub mod model;
pub mod scalar;
pub mod scenario_io;
pub mod strategy;

pub use engine::{run_auction, MarketPowerSource, Mode, Termination};
pub use equilibrium::{
    optimal_surcharge, solve_price_anticipation, solve_price_taking, solve_surcharge, Regime,
};
pub use error::{AuctionError, Result};
pub use model::{validate_scenario, Utility, ValidationReport, Violation};
pub use scalar::Scalar;
pub use scenario_io::{generate_scenario, load_scenario, save_scenario, GenerationConfig};

pub type LogUtility = model::LogUtility<f64>;
pub type BuyerSpec = model::BuyerSpec<f64>;
pub type SellerSpec = model::SellerSpec<f64>;
pub type AggregatorConfig = model::AggregatorConfig<f64>;
pub type Scenario = model::Scenario<f64>;
pub type EngineConfig = engine::EngineConfig<f64>;
pub type IterationRecord = engine::IterationRecord<f64>;
pub type AuctionOutcome = engine::AuctionOutcome<f64>;
pub type Equilibrium = equilibrium::Equilibrium<f64>;
pub type KktDiagnostics = equilibrium::KktDiagnostics<f64>;
pub type SweepRow = metrics::SweepRow<f64>;
pub type SweepResult = metrics::SweepResult<f64>;

pub type LogUtility32 = model::LogUtility<f32>;
pub type BuyerSpec32 = model::BuyerSpec<f32>;
pub type SellerSpec32 = model::SellerSpec<f32>;
pub type Scenario32 = model::Scenario<f32>;
pub type EngineConfig32 = engine::EngineConfig<f32>;
pub type AuctionOutcome32 = engine::AuctionOutcome<f32>;
pub type Equilibrium32 = equilibrium::Equilibrium<f32>;
pub type SweepResult32 = metrics::SweepResult<f32>;

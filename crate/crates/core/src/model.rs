//! Market participants, the logarithmic utility family and the standing
//! assumptions a scenario has to satisfy before any auction is run.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::scalar::Scalar;

/// A concave valuation of energy, expressed in money.
///
/// The methods are unchecked: callers pass nonnegative energies and
/// positive prices. The checked entry points are the free `utility_*`
/// functions in this module.
pub trait Utility<T: Scalar> {
    fn value(&self, z: T) -> T;
    fn marginal(&self, z: T) -> T;
    /// Energy at which the marginal utility equals `p`, clipped at zero
    /// when `p` is at or above the marginal utility of the first unit.
    fn marginal_inverse(&self, p: T) -> T;
    /// `∫₀^d value(z) dz`.
    fn integral(&self, d: T) -> T;
}

/// `x·ln(y·z + 1)`: `x` scales money, `y` sets the curvature per unit energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogUtility<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> LogUtility<T> {
    pub fn new(x: T, y: T) -> Result<Self> {
        if !(x > T::zero() && x.is_finite()) || !(y > T::zero() && y.is_finite()) {
            return domain(format!("log utility needs x > 0 and y > 0, got x={x}, y={y}"));
        }
        Ok(Self { x, y })
    }

    /// Marginal utility of the first unit, `x·y`.
    pub fn marginal_at_zero(&self) -> T {
        self.x * self.y
    }
}

/// `(1+t)·ln(1+t) − t`, with a series near zero where the direct form cancels.
fn antiderivative_core<T: Scalar>(t: T) -> T {
    if t.abs() < T::lit(1e-2) {
        let mut sum = T::zero();
        let mut pow = t;
        for n in 2..=10 {
            pow = pow * t;
            let term = pow / T::lit((n * (n - 1)) as f64);
            if n % 2 == 0 {
                sum = sum + term;
            } else {
                sum = sum - term;
            }
        }
        sum
    } else {
        (T::one() + t) * t.ln_1p() - t
    }
}

impl<T: Scalar> Utility<T> for LogUtility<T> {
    fn value(&self, z: T) -> T {
        self.x * (self.y * z).ln_1p()
    }

    fn marginal(&self, z: T) -> T {
        self.x * self.y / (self.y * z + T::one())
    }

    fn marginal_inverse(&self, p: T) -> T {
        if p >= self.marginal_at_zero() {
            return T::zero();
        }
        (self.x / p - self.y.recip()).max(T::zero())
    }

    fn integral(&self, d: T) -> T {
        self.x / self.y * antiderivative_core(self.y * d)
    }
}

pub fn utility_value<T: Scalar>(u: &LogUtility<T>, z: T) -> Result<T> {
    if !(z >= T::zero()) {
        return domain(format!("utility evaluated at negative energy {z}"));
    }
    Ok(u.value(z))
}

pub fn utility_marginal<T: Scalar>(u: &LogUtility<T>, z: T) -> Result<T> {
    if !(z >= T::zero()) {
        return domain(format!("marginal utility evaluated at negative energy {z}"));
    }
    Ok(u.marginal(z))
}

pub fn utility_marginal_inverse<T: Scalar>(u: &LogUtility<T>, p: T) -> Result<T> {
    if !(p > T::zero()) {
        return domain(format!("inverse marginal needs a positive price, got {p}"));
    }
    Ok(u.marginal_inverse(p))
}

pub fn utility_integral<T: Scalar>(u: &LogUtility<T>, d: T) -> Result<T> {
    if !(d >= T::zero()) {
        return domain(format!("utility integral over negative interval {d}"));
    }
    Ok(u.integral(d))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuyerSpec<T> {
    #[serde(flatten)]
    pub utility: LogUtility<T>,
}

impl<T: Scalar> BuyerSpec<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { utility: LogUtility { x, y } }
    }
}

/// A seller owns `g` units of energy and values whatever it keeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SellerSpec<T> {
    #[serde(flatten)]
    pub utility: LogUtility<T>,
    #[serde(rename = "g")]
    pub generation: T,
}

impl<T: Scalar> SellerSpec<T> {
    pub fn new(x: T, y: T, generation: T) -> Self {
        Self { utility: LogUtility { x, y }, generation }
    }

    /// `v(g − a)`.
    pub fn retained_value(&self, a: T) -> T {
        self.utility.value(self.generation - a)
    }

    /// `v'(g − a)`.
    pub fn retained_marginal(&self, a: T) -> T {
        self.utility.marginal(self.generation - a)
    }

    /// `∫₀^a v(g − z) dz`.
    pub fn retained_integral(&self, a: T) -> T {
        self.utility.integral(self.generation) - self.utility.integral(self.generation - a)
    }
}

/// Aggregator settings: virtual availability `a0` and per-unit surcharge
/// `ps`. Both zero is the selfless aggregator.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AggregatorConfig<T> {
    pub a0: T,
    pub ps: T,
}

impl<T: Scalar> AggregatorConfig<T> {
    pub fn selfless() -> Self {
        Self { a0: T::zero(), ps: T::zero() }
    }

    pub fn is_selfless(&self) -> bool {
        self.a0 == T::zero() && self.ps == T::zero()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct Scenario<T> {
    pub buyers: Vec<BuyerSpec<T>>,
    pub sellers: Vec<SellerSpec<T>>,
    #[serde(default = "AggregatorConfig::selfless")]
    pub aggregator: AggregatorConfig<T>,
}

impl<T: Scalar> Scenario<T> {
    pub fn new(buyers: Vec<BuyerSpec<T>>, sellers: Vec<SellerSpec<T>>) -> Self {
        Self { buyers, sellers, aggregator: AggregatorConfig::selfless() }
    }

    pub fn with_aggregator(mut self, a0: T, ps: T) -> Self {
        self.aggregator = AggregatorConfig { a0, ps };
        self
    }

    pub fn total_generation(&self) -> T {
        self.sellers.iter().map(|s| s.generation).sum()
    }

    /// `max_i u_i'(0)`, the price above which no buyer demands anything.
    pub fn max_buyer_marginal_at_zero(&self) -> T {
        self.buyers
            .iter()
            .map(|b| b.utility.marginal_at_zero())
            .fold(T::zero(), T::max)
    }

    /// `min_j v_j'(g_j)`, the price at or below which no seller offers energy.
    pub fn min_seller_marginal_at_generation(&self) -> T {
        self.sellers
            .iter()
            .map(|s| s.utility.marginal(s.generation))
            .fold(T::infinity(), T::min)
    }

    /// `max_j v_j'(0)`, the price from which every seller offers its whole generation.
    pub fn max_seller_marginal_at_zero(&self) -> T {
        self.sellers
            .iter()
            .map(|s| s.utility.marginal_at_zero())
            .fold(T::zero(), T::max)
    }

    pub fn validate(&self) -> ValidationReport {
        validate_scenario(self)
    }
}

/// A single broken assumption.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NoBuyers,
    NoSellers,
    /// Strict concavity and monotonicity need `x > 0` and `y > 0`.
    NonPositiveParameter { agent: AgentRef, field: &'static str, value: f64 },
    NegativeGeneration { seller: usize, value: f64 },
    NegativeAggregatorSetting { field: &'static str, value: f64 },
    /// No buyer values its first unit above some seller's last unit.
    NoGainsFromTrade,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentRef {
    Buyer(usize),
    Seller(usize),
}

impl fmt::Display for AgentRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AgentRef::Buyer(i) => write!(f, "buyer {}", i + 1),
            AgentRef::Seller(j) => write!(f, "seller {}", j + 1),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoBuyers => write!(f, "market assumption: buyer set is empty"),
            Violation::NoSellers => write!(f, "market assumption: seller set is empty"),
            Violation::NonPositiveParameter { agent, field, value } => write!(
                f,
                "positivity assumption: {agent} has {field}={value}, utilities need strictly positive parameters"
            ),
            Violation::NegativeGeneration { seller, value } => {
                write!(f, "seller {} has negative generation g={value}", seller + 1)
            }
            Violation::NegativeAggregatorSetting { field, value } => {
                write!(f, "aggregator {field}={value} must be nonnegative")
            }
            Violation::NoGainsFromTrade => write!(
                f,
                "trade condition: no buyer i and seller j with u_i'(0) > v_j'(g_j)"
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        let msgs: Vec<String> = self.violations.iter().map(ToString::to_string).collect();
        write!(f, "{}", msgs.join("; "))
    }
}

fn positive<T: Scalar>(v: T) -> bool {
    v > T::zero() && v.is_finite()
}

/// Checks parameter positivity, nonempty agent sets and the existence of at
/// least one buyer/seller pair with gains from trade. Every broken
/// assumption is listed.
pub fn validate_scenario<T: Scalar>(s: &Scenario<T>) -> ValidationReport {
    let mut violations = Vec::new();
    if s.buyers.is_empty() {
        violations.push(Violation::NoBuyers);
    }
    if s.sellers.is_empty() {
        violations.push(Violation::NoSellers);
    }
    let mut check = |agent: AgentRef, u: &LogUtility<T>| {
        for (field, v) in [("x", u.x), ("y", u.y)] {
            if !positive(v) {
                violations.push(Violation::NonPositiveParameter {
                    agent,
                    field,
                    value: v.to_f64_lossy(),
                });
            }
        }
    };
    for (i, b) in s.buyers.iter().enumerate() {
        check(AgentRef::Buyer(i), &b.utility);
    }
    for (j, sl) in s.sellers.iter().enumerate() {
        check(AgentRef::Seller(j), &sl.utility);
    }
    for (j, sl) in s.sellers.iter().enumerate() {
        if !(sl.generation >= T::zero() && sl.generation.is_finite()) {
            violations.push(Violation::NegativeGeneration {
                seller: j,
                value: sl.generation.to_f64_lossy(),
            });
        }
    }
    for (field, v) in [("a0", s.aggregator.a0), ("ps", s.aggregator.ps)] {
        if !(v >= T::zero() && v.is_finite()) {
            violations.push(Violation::NegativeAggregatorSetting { field, value: v.to_f64_lossy() });
        }
    }
    if violations.is_empty() {
        let trade = s.buyers.iter().any(|b| {
            s.sellers
                .iter()
                .any(|sl| b.utility.marginal_at_zero() > sl.utility.marginal(sl.generation))
        });
        if !trade {
            violations.push(Violation::NoGainsFromTrade);
        }
    }
    ValidationReport { violations }
}

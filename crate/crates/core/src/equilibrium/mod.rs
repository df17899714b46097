//! Direct (non-iterative) equilibrium solvers.
//!
//! Best responses are parameterized by the market thinness `κ = 1/T`, where
//! `T = a0 + Σ a_j` is the total availability including the virtual agent.
//! With `κ = 0` every agent is a price taker. With `κ > 0` buyer `i` holds
//! market power `d_i·κ` and seller `j` holds `a_j·κ`, and both sides have
//! closed-form responses to the balance multiplier `μ`.

mod anticipation;
mod oracle;

use serde::Serialize;

pub use anticipation::solve_price_anticipation;
pub use oracle::{brute_force_pi_max, grid_maximize_frozen_pi, OracleResult, ORACLE_MAX_BUYERS, ORACLE_MAX_SELLERS};

use crate::error::{domain, AuctionError, Result};
use crate::metrics::social_welfare;
use crate::model::{validate_scenario, LogUtility, Scenario, SellerSpec, Utility};
use crate::scalar::{bisect_increasing, total, Scalar};

/// Maximum bisection halvings for any price search.
pub const BISECTION_MAX_ITER: usize = 200;
/// Relative price tolerance at which bisection stops early.
pub const BISECTION_PRICE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    PriceTaking,
    Surcharge,
    PriceAnticipating,
}

/// Multipliers of the balance and capacity constraints at a solution,
/// plus how well the stationarity system holds there.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KktDiagnostics<T> {
    /// Balance multiplier; equals the seller price at every equilibrium.
    pub mu: T,
    /// Capacity multipliers, `≤ 0`, nonzero only for sellers offering all of `g`.
    pub lambda: Vec<T>,
    /// Seller-side duals `(1 − α_j)·λ_j` as seen by the strategy layer.
    pub rho: Vec<T>,
    /// Largest violation of any stationarity equation or boundary sign condition.
    pub stationarity_residual: T,
    /// `λ_j = 0` whenever `a_j < g_j`, and `λ_j ≤ 0` otherwise.
    pub slackness_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Equilibrium<T> {
    pub regime: Regime,
    pub price: T,
    pub demands: Vec<T>,
    pub availabilities: Vec<T>,
    pub virtual_availability: T,
    pub surcharge: T,
    pub welfare: T,
    /// Value of the anticipation objective at the solution's own totals.
    pub anticipation_objective: Option<T>,
    pub revenue: T,
    pub loss: T,
    pub zero_trade: bool,
    pub kkt: KktDiagnostics<T>,
}

impl<T: Scalar> Equilibrium<T> {
    pub fn volume(&self) -> T {
        total(&self.availabilities)
    }

    /// `Σ u_i(d_i)`.
    pub fn buyer_welfare(&self, s: &Scenario<T>) -> T {
        s.buyers.iter().zip(&self.demands).map(|(b, d)| b.utility.value(*d)).sum()
    }

    /// `Σ v_j(g_j − a_j)`.
    pub fn seller_welfare(&self, s: &Scenario<T>) -> T {
        s.sellers.iter().zip(&self.availabilities).map(|(sl, a)| sl.retained_value(*a)).sum()
    }
}

/// Demand of a buyer facing multiplier `mu` at market thinness `kappa`:
/// solves `(1 − d·κ)·u'(d) = mu`.
pub(crate) fn demand_at<T: Scalar>(u: &LogUtility<T>, mu: T, kappa: T) -> T {
    if mu >= u.marginal_at_zero() {
        return T::zero();
    }
    ((u.x * u.y - mu) / (u.y * (u.x * kappa + mu))).max(T::zero())
}

/// Availability of a seller facing `mu` at thinness `kappa`, with its
/// capacity multiplier. Solves `v'(g − a) = (1 − a·κ)·mu` on `[0, g]`.
pub(crate) fn supply_at<T: Scalar>(s: &SellerSpec<T>, mu: T, kappa: T) -> (T, T) {
    let u = &s.utility;
    let g = s.generation;
    if !(mu > T::zero()) || mu <= u.marginal(g) {
        return (T::zero(), T::zero());
    }
    let c1 = g + u.y.recip();
    let slope = u.x / mu;
    let two = T::lit(2.0);
    let four = T::lit(4.0);
    // smaller root of a² − (c1 + T)a + T(c1 − x/μ), divided through by T
    let disc = ((c1 * kappa - T::one()).powi(2) + four * slope * kappa).sqrt();
    let raw = two * (c1 - slope) / (c1 * kappa + T::one() + disc);
    if raw >= g {
        let keep = T::one() - g * kappa;
        let lambda = (u.marginal_at_zero() / keep - mu).min(T::zero());
        (g, lambda)
    } else {
        (raw.max(T::zero()), T::zero())
    }
}

fn require_valid<T: Scalar>(s: &Scenario<T>) -> Result<()> {
    let report = validate_scenario(s);
    if report.is_valid() {
        Ok(())
    } else {
        Err(AuctionError::Validation(report))
    }
}

/// Aggregate price-taking demand `D(p)`.
pub fn demand_function<T: Scalar>(s: &Scenario<T>, p: T) -> Result<T> {
    if !(p > T::zero()) {
        return domain(format!("demand function needs a positive price, got {p}"));
    }
    Ok(s.buyers.iter().map(|b| b.utility.marginal_inverse(p)).sum())
}

/// Aggregate price-taking availability `A(p)`, excluding the virtual agent.
pub fn availability_function<T: Scalar>(s: &Scenario<T>, p: T) -> Result<T> {
    if !(p > T::zero()) {
        return domain(format!("availability function needs a positive price, got {p}"));
    }
    Ok(s.sellers.iter().map(|sl| supply_at(sl, p, T::zero()).0).sum())
}

/// `max_i u_i'(0) − min_j v_j'(g_j)`: no trade happens at or above this surcharge.
pub fn surcharge_upper_bound<T: Scalar>(s: &Scenario<T>) -> T {
    s.max_buyer_marginal_at_zero() - s.min_seller_marginal_at_generation()
}

/// Price-taking clearing price for buyers paying `p + ps` and sellers receiving `p`.
fn clearing_price_taking<T: Scalar>(s: &Scenario<T>, ps: T) -> T {
    let lo = s.min_seller_marginal_at_generation();
    let hi = s.max_buyer_marginal_at_zero().max(s.max_seller_marginal_at_zero());
    let excess = |p: T| {
        let supply: T = s.sellers.iter().map(|sl| supply_at(sl, p, T::zero()).0).sum();
        let demand: T = s.buyers.iter().map(|b| demand_at(&b.utility, p + ps, T::zero())).sum();
        supply - demand
    };
    bisect_increasing(lo, hi, BISECTION_MAX_ITER, T::lit(BISECTION_PRICE_TOL), excess)
}

/// Efficient allocation: the unique price where `A(p) = D(p)`.
pub fn solve_price_taking<T: Scalar>(s: &Scenario<T>) -> Result<Equilibrium<T>> {
    require_valid(s)?;
    let p = clearing_price_taking(s, T::zero());
    let eq = build(s, Regime::PriceTaking, p, T::zero(), T::zero(), T::zero(), false);
    Ok(eq)
}

/// Price-taking equilibrium when the aggregator keeps `ps` per traded unit.
pub fn solve_surcharge<T: Scalar>(s: &Scenario<T>, ps: T) -> Result<Equilibrium<T>> {
    if !(ps >= T::zero() && ps.is_finite()) {
        return domain(format!("surcharge must be nonnegative, got {ps}"));
    }
    require_valid(s)?;
    let welfare_max = solve_price_taking(s)?.welfare;
    if ps >= surcharge_upper_bound(s) {
        let p = s.min_seller_marginal_at_generation();
        let mut eq = build(s, Regime::Surcharge, p, ps, T::zero(), T::zero(), true);
        eq.loss = relative_loss(welfare_max, eq.welfare)?;
        return Ok(eq);
    }
    let p = clearing_price_taking(s, ps);
    let mut eq = build(s, Regime::Surcharge, p, ps, T::zero(), T::zero(), false);
    eq.loss = relative_loss(welfare_max, eq.welfare)?;
    Ok(eq)
}

pub(crate) fn relative_loss<T: Scalar>(welfare_max: T, welfare: T) -> Result<T> {
    if !(welfare_max > T::zero()) {
        return Err(AuctionError::DegenerateMarket(
            "maximum social welfare is zero, loss undefined".into(),
        ));
    }
    Ok(((welfare_max - welfare) / welfare_max).max(T::zero()).min(T::one()))
}

/// Assemble an equilibrium from a multiplier and thinness.
pub(crate) fn build<T: Scalar>(
    s: &Scenario<T>,
    regime: Regime,
    mu: T,
    ps: T,
    kappa: T,
    a0: T,
    zero_trade: bool,
) -> Equilibrium<T> {
    let (demands, supply): (Vec<T>, Vec<(T, T)>) = if zero_trade {
        (vec![T::zero(); s.buyers.len()], vec![(T::zero(), T::zero()); s.sellers.len()])
    } else {
        (
            s.buyers.iter().map(|b| demand_at(&b.utility, mu + ps, kappa)).collect(),
            s.sellers.iter().map(|sl| supply_at(sl, mu, kappa)).collect(),
        )
    };
    let availabilities: Vec<T> = supply.iter().map(|(a, _)| *a).collect();
    let kkt = kkt_diagnostics(s, mu, ps, kappa, &demands, &availabilities);
    let welfare = social_welfare(s, &demands, &availabilities).unwrap_or_else(|_| T::nan());
    let revenue = ps * total(&availabilities);
    Equilibrium {
        regime,
        price: mu,
        demands,
        availabilities,
        virtual_availability: a0,
        surcharge: ps,
        welfare,
        anticipation_objective: None,
        revenue,
        loss: T::zero(),
        zero_trade,
        kkt,
    }
}

/// Evaluate the stationarity system at an allocation.
///
/// Buyers: `(1 − β_i)·u_i'(d_i) = μ + ps` with `β_i = d_i·κ`.
/// Sellers: `v_j'(g_j − a_j) = (1 − α_j)(λ_j + μ)` with `α_j = a_j·κ`.
/// At `d_i = 0` or `a_j = 0` the equation relaxes to the matching
/// inequality; at `a_j = g_j` the multiplier `λ_j` absorbs the gap and must
/// be nonpositive.
pub fn kkt_diagnostics<T: Scalar>(
    s: &Scenario<T>,
    mu: T,
    ps: T,
    kappa: T,
    demands: &[T],
    availabilities: &[T],
) -> KktDiagnostics<T> {
    let mut residual = T::zero();
    let buyer_price = mu + ps;
    for (b, &d) in s.buyers.iter().zip(demands) {
        let u = &b.utility;
        let r = if d > T::zero() {
            ((T::one() - d * kappa) * u.marginal(d) - buyer_price).abs()
        } else {
            (u.marginal_at_zero() - buyer_price).max(T::zero())
        };
        residual = residual.max(r);
    }
    let mut lambda = Vec::with_capacity(s.sellers.len());
    let mut rho = Vec::with_capacity(s.sellers.len());
    let mut slackness_ok = true;
    for (sl, &a) in s.sellers.iter().zip(availabilities) {
        let keep = T::one() - a * kappa;
        let marginal = sl.retained_marginal(a);
        let g = sl.generation;
        let l = if a >= g && g > T::zero() {
            let l = marginal / keep - mu;
            if l > T::zero() {
                residual = residual.max(l * keep);
                slackness_ok = false;
            }
            l.min(T::zero())
        } else if a > T::zero() {
            residual = residual.max((marginal - keep * mu).abs());
            T::zero()
        } else {
            residual = residual.max((mu - marginal).max(T::zero()));
            T::zero()
        };
        lambda.push(l);
        rho.push(keep * l);
    }
    KktDiagnostics { mu, lambda, rho, stationarity_residual: residual, slackness_ok }
}

/// Surcharge that maximizes the aggregator's revenue, and that revenue.
///
/// Golden-section search on `[0, surcharge_upper_bound]`; if the result is
/// beaten by a 1000-point scan (revenue not unimodal) the scan's best point
/// is returned instead.
pub fn optimal_surcharge<T: Scalar>(s: &Scenario<T>) -> Result<(T, T)> {
    require_valid(s)?;
    let upper = surcharge_upper_bound(s);
    let revenue = |ps: T| -> T {
        let p = clearing_price_taking(s, ps);
        ps * s.sellers.iter().map(|sl| supply_at(sl, p, T::zero()).0).sum::<T>()
    };
    let inv_phi = T::lit((5.0_f64.sqrt() - 1.0) / 2.0);
    let (mut lo, mut hi) = (T::zero(), upper);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (revenue(x1), revenue(x2));
    for _ in 0..BISECTION_MAX_ITER {
        if hi - lo <= T::lit(BISECTION_PRICE_TOL) * T::one().max(hi) {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = revenue(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = revenue(x1);
        }
    }
    let mut best = if f1 > f2 { (x1, f1) } else { (x2, f2) };
    let n = 1000;
    for k in 1..n {
        let ps = upper * T::lit(k as f64 / n as f64);
        let r = revenue(ps);
        if r > best.1 * (T::one() + T::lit(1e-9)) {
            best = (ps, r);
        }
    }
    Ok(best)
}

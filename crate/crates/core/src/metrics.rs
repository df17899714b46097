//! Welfare, payoffs, the anticipation objective, efficiency loss, revenue,
//! and the parameter sweeps built on them.

use rayon::prelude::*;
use serde::Serialize;

use crate::equilibrium::{solve_price_anticipation, solve_price_taking, solve_surcharge, Equilibrium};
use crate::error::{domain, AuctionError, Result};
use crate::model::{LogUtility, Scenario, SellerSpec, Utility};
use crate::scalar::{total, Scalar};

fn check_allocation<T: Scalar>(s: &Scenario<T>, demands: &[T], availabilities: &[T]) -> Result<()> {
    if demands.len() != s.buyers.len() || availabilities.len() != s.sellers.len() {
        return domain(format!(
            "allocation shape ({}, {}) does not match scenario ({}, {})",
            demands.len(),
            availabilities.len(),
            s.buyers.len(),
            s.sellers.len()
        ));
    }
    if let Some(d) = demands.iter().find(|d| !(**d >= T::zero())) {
        return domain(format!("infeasible demand {d}"));
    }
    for (sl, a) in s.sellers.iter().zip(availabilities) {
        if !(*a >= T::zero() && *a <= sl.generation) {
            return domain(format!("infeasible availability {a} for generation {}", sl.generation));
        }
    }
    Ok(())
}

/// `Σ u_i(d_i) + Σ v_j(g_j − a_j)`.
pub fn social_welfare<T: Scalar>(s: &Scenario<T>, demands: &[T], availabilities: &[T]) -> Result<T> {
    check_allocation(s, demands, availabilities)?;
    let buyers: T = s.buyers.iter().zip(demands).map(|(b, d)| b.utility.value(*d)).sum();
    let sellers: T = s.sellers.iter().zip(availabilities).map(|(sl, a)| sl.retained_value(*a)).sum();
    Ok(buyers + sellers)
}

pub fn buyer_payoff<T: Scalar>(utility: &LogUtility<T>, demand: T, bid: T) -> Result<T> {
    if !(demand >= T::zero() && bid >= T::zero()) {
        return domain(format!("buyer payoff needs nonnegative demand and bid, got {demand}, {bid}"));
    }
    Ok(utility.value(demand) - bid)
}

pub fn seller_payoff<T: Scalar>(seller: &SellerSpec<T>, availability: T, price: T) -> Result<T> {
    if !(availability >= T::zero() && availability <= seller.generation) {
        return domain(format!("availability {availability} outside [0, {}]", seller.generation));
    }
    if !(price >= T::zero()) {
        return domain(format!("negative price {price}"));
    }
    Ok(seller.retained_value(availability) + price * availability)
}

pub(crate) fn pi_buyer_raw<T: Scalar>(utility: &LogUtility<T>, demand: T, total_avail: T) -> T {
    (T::one() - demand / total_avail) * utility.value(demand) + utility.integral(demand) / total_avail
}

pub(crate) fn pi_seller_raw<T: Scalar>(seller: &SellerSpec<T>, availability: T, others: T) -> T {
    if availability == T::zero() {
        return seller.retained_value(T::zero());
    }
    seller.retained_value(availability) * (others + availability) / others
        - seller.retained_integral(availability) / others
}

/// Buyer's term of the anticipation objective at total availability
/// `total_avail` (virtual agent included).
pub fn pi_buyer<T: Scalar>(utility: &LogUtility<T>, demand: T, total_avail: T) -> Result<T> {
    if !(total_avail > T::zero()) {
        return Err(AuctionError::DegenerateMarket(format!("total availability {total_avail}")));
    }
    if !(demand >= T::zero() && demand <= total_avail) {
        return domain(format!("demand {demand} outside [0, {total_avail}]"));
    }
    Ok(pi_buyer_raw(utility, demand, total_avail))
}

/// Seller's term of the anticipation objective given the availability of
/// everyone else (virtual agent included).
pub fn pi_seller<T: Scalar>(seller: &SellerSpec<T>, availability: T, others_total: T) -> Result<T> {
    if !(availability >= T::zero() && availability <= seller.generation) {
        return domain(format!("availability {availability} outside [0, {}]", seller.generation));
    }
    if availability > T::zero() && !(others_total > T::zero()) {
        return Err(AuctionError::DegenerateMarket(
            "seller faces no other availability (monopoly)".into(),
        ));
    }
    Ok(pi_seller_raw(seller, availability, others_total))
}

/// Anticipation objective with totals frozen at `reference` availabilities.
pub fn anticipation_objective_frozen<T: Scalar>(
    s: &Scenario<T>,
    demands: &[T],
    availabilities: &[T],
    reference: &[T],
) -> Result<T> {
    check_allocation(s, demands, availabilities)?;
    if reference.len() != s.sellers.len() {
        return domain("reference has wrong length");
    }
    let a0 = s.aggregator.a0;
    let ref_total = total(reference);
    let all = a0 + ref_total;
    if !(all > T::zero()) {
        return Err(AuctionError::DegenerateMarket("total availability is zero".into()));
    }
    let mut value = T::zero();
    for (b, d) in s.buyers.iter().zip(demands) {
        value = value + pi_buyer_raw(&b.utility, *d, all);
    }
    for ((sl, a), r) in s.sellers.iter().zip(availabilities).zip(reference) {
        value = value + pi_seller(sl, *a, all - *r)?;
    }
    Ok(value)
}

/// `Π` at the allocation's own totals, with the virtual availability added.
pub fn anticipation_objective<T: Scalar>(s: &Scenario<T>, demands: &[T], availabilities: &[T]) -> Result<T> {
    anticipation_objective_frozen(s, demands, availabilities, availabilities)
}

/// Relative welfare gap to the efficient allocation, clamped to `[0, 1]`.
pub fn efficiency_loss<T: Scalar>(s: &Scenario<T>, demands: &[T], availabilities: &[T]) -> Result<T> {
    let welfare = social_welfare(s, demands, availabilities)?;
    let best = solve_price_taking(s)?.welfare;
    crate::equilibrium::relative_loss(best, welfare)
}

/// `ps·Σ a_j`; the virtual agent's availability is bought back and not counted.
pub fn revenue<T: Scalar>(ps: T, availabilities: &[T]) -> Result<T> {
    if !(ps >= T::zero()) {
        return domain(format!("negative surcharge {ps}"));
    }
    Ok(ps * total(availabilities))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow<T> {
    pub param: T,
    pub price: T,
    pub volume: T,
    pub welfare: T,
    pub revenue: T,
    pub loss: T,
    pub converged: bool,
    pub error: Option<String>,
}

impl<T: Scalar> SweepRow<T> {
    fn from_result(param: T, r: Result<Equilibrium<T>>) -> Self {
        match r {
            Ok(eq) => SweepRow {
                param,
                price: eq.price,
                volume: eq.volume(),
                welfare: eq.welfare,
                revenue: eq.revenue,
                loss: eq.loss,
                converged: true,
                error: None,
            },
            Err(e) => SweepRow {
                param,
                price: T::nan(),
                volume: T::nan(),
                welfare: T::nan(),
                revenue: T::nan(),
                loss: T::nan(),
                converged: false,
                error: Some(e.to_string()),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult<T> {
    pub parameter: String,
    pub rows: Vec<SweepRow<T>>,
}

fn check_grid<T: Scalar>(grid: &[T]) -> Result<()> {
    if grid.iter().any(|v| !(*v >= T::zero() && v.is_finite())) {
        return domain("sweep grid values must be finite and nonnegative");
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return domain("sweep grid must be strictly increasing");
    }
    Ok(())
}

/// Price-taking equilibria across surcharges. Failed points are kept as
/// rows carrying the error.
pub fn sweep_surcharge<T: Scalar>(s: &Scenario<T>, grid: &[T]) -> Result<SweepResult<T>> {
    check_grid(grid)?;
    let rows = grid
        .par_iter()
        .map(|&ps| SweepRow::from_result(ps, solve_surcharge(s, ps)))
        .collect();
    Ok(SweepResult { parameter: "ps".into(), rows })
}

/// Price-anticipating equilibria across virtual availabilities.
pub fn sweep_virtual<T: Scalar>(s: &Scenario<T>, grid: &[T]) -> Result<SweepResult<T>> {
    check_grid(grid)?;
    let rows = grid
        .par_iter()
        .map(|&a0| {
            let mut sc = s.clone();
            sc.aggregator.a0 = a0;
            sc.aggregator.ps = T::zero();
            SweepRow::from_result(a0, solve_price_anticipation(&sc))
        })
        .collect();
    Ok(SweepResult { parameter: "a0".into(), rows })
}

/// `n` evenly spaced points on `[lo, hi]`, endpoints included.
pub fn linear_grid<T: Scalar>(lo: T, hi: T, n: usize) -> Vec<T> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n)
            .map(|k| if k + 1 == n { hi } else { lo + (hi - lo) * T::lit(k as f64) / T::lit((n - 1) as f64) })
            .collect(),
    }
}

/// `n` log-spaced points on `[lo, hi]`, both positive.
pub fn log_grid<T: Scalar>(lo: T, hi: T, n: usize) -> Vec<T> {
    let (llo, lhi) = (lo.ln(), hi.ln());
    let mut g: Vec<T> = linear_grid(llo, lhi, n).into_iter().map(T::exp).collect();
    if n > 1 {
        g[0] = lo;
        g[n - 1] = hi;
    }
    g
}

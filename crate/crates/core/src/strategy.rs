//! Best responses of buyers and sellers, and the market-power shares they
//! condition on (exact, or estimated from the previous round).

use crate::error::{domain, AuctionError, Result};
use crate::model::{LogUtility, SellerSpec, Utility};
use crate::scalar::{total, Scalar};

/// Estimated market powers are kept in `[0, 1 − MARKET_POWER_EPS]`.
pub const MARKET_POWER_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BuyerState<T> {
    pub bid: T,
    pub demand: T,
    pub market_power: T,
}

/// `capacity_dual` is zero unless the seller offers its whole generation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SellerState<T> {
    pub availability: T,
    pub market_power: T,
    pub capacity_dual: T,
}

/// A seller's reply to a posted price.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SellerResponse<T> {
    pub availability: T,
    pub capacity_dual: T,
}

/// Payoff-maximizing bid for the allocated demand: `d·u'(d)·(1 − β)`.
pub fn buyer_bid<T: Scalar>(demand: T, utility: &LogUtility<T>, beta: T) -> Result<T> {
    if !(demand >= T::zero()) {
        return domain(format!("demand must be nonnegative, got {demand}"));
    }
    if !(beta >= T::zero() && beta <= T::one()) {
        return domain(format!("buyer market power must lie in [0, 1], got {beta}"));
    }
    Ok(bid_unchecked(demand, utility, beta))
}

pub(crate) fn bid_unchecked<T: Scalar>(demand: T, utility: &LogUtility<T>, beta: T) -> T {
    (demand * utility.marginal(demand) * (T::one() - beta)).max(T::zero())
}

/// Availability offered at price `p` by a seller holding market power `α`.
///
/// Solves `v'(g − a) = p(1 − α)` and clips to `[0, g]`. When the whole
/// generation is offered the returned dual is `v'(0) − p(1 − α) ≤ 0`;
/// otherwise it is zero.
pub fn seller_availability<T: Scalar>(
    price: T,
    seller: &SellerSpec<T>,
    alpha: T,
) -> Result<SellerResponse<T>> {
    if !(price > T::zero()) {
        return domain(format!("price must be positive, got {price}"));
    }
    if !(alpha >= T::zero()) {
        return domain(format!("seller market power must be nonnegative, got {alpha}"));
    }
    if alpha >= T::one() {
        return Err(AuctionError::DegenerateMarket(format!(
            "seller market power {alpha} >= 1 (monopoly) leaves the supply condition unsolvable"
        )));
    }
    Ok(availability_unchecked(price, seller, alpha))
}

pub(crate) fn availability_unchecked<T: Scalar>(
    price: T,
    seller: &SellerSpec<T>,
    alpha: T,
) -> SellerResponse<T> {
    let effective = price * (T::one() - alpha);
    let g = seller.generation;
    let u = &seller.utility;
    if effective <= u.marginal(g) {
        return SellerResponse { availability: T::zero(), capacity_dual: T::zero() };
    }
    if effective >= u.marginal_at_zero() {
        return SellerResponse {
            availability: g,
            capacity_dual: (u.marginal_at_zero() - effective).min(T::zero()),
        };
    }
    let retained = u.marginal_inverse(effective);
    SellerResponse { availability: (g - retained).max(T::zero()).min(g), capacity_dual: T::zero() }
}

fn shares<T: Scalar>(values: &[T], virtual_part: T, what: &str) -> Result<Vec<T>> {
    if values.iter().any(|v| !(*v >= T::zero())) {
        return domain(format!("{what} must be nonnegative"));
    }
    if !(virtual_part >= T::zero()) {
        return domain(format!("virtual {what} must be nonnegative"));
    }
    let denom = virtual_part + total(values);
    if !(denom > T::zero()) {
        return Err(AuctionError::DegenerateMarket(format!("total {what} is zero")));
    }
    Ok(values.iter().map(|v| *v / denom).collect())
}

/// `β_i = b_i / (b0 + Σ b)`.
pub fn market_power_buyers_exact<T: Scalar>(bids: &[T], virtual_bid: T) -> Result<Vec<T>> {
    shares(bids, virtual_bid, "bids")
}

/// `α_j = a_j / (a0 + Σ a)`.
pub fn market_power_sellers_exact<T: Scalar>(avails: &[T], virtual_avail: T) -> Result<Vec<T>> {
    shares(avails, virtual_avail, "availabilities")
}

fn clip_power<T: Scalar>(v: T) -> T {
    v.max(T::zero()).min(T::one() - T::lit(MARKET_POWER_EPS))
}

/// Market power a buyer infers from its own last bid and demand:
/// `1 − b / (d·u'(d))`.
pub fn estimate_beta<T: Scalar>(prev_bid: T, prev_demand: T, utility: &LogUtility<T>) -> Result<T> {
    if !(prev_demand > T::zero()) {
        return Err(AuctionError::DegenerateMarket(format!(
            "market power estimate undefined at demand {prev_demand}"
        )));
    }
    Ok(clip_power(T::one() - prev_bid / (prev_demand * utility.marginal(prev_demand))))
}

/// Market power a seller infers from the last price, its availability and
/// its capacity dual: `1 − (v'(g − a) − ρ) / p`.
pub fn estimate_alpha<T: Scalar>(
    prev_price: T,
    prev_avail: T,
    prev_dual: T,
    seller: &SellerSpec<T>,
) -> Result<T> {
    if !(prev_price > T::zero()) {
        return domain(format!("price must be positive, got {prev_price}"));
    }
    if !(prev_avail >= T::zero() && prev_avail <= seller.generation) {
        return domain(format!(
            "availability {prev_avail} outside [0, {}]",
            seller.generation
        ));
    }
    Ok(clip_power(T::one() - (seller.retained_marginal(prev_avail) - prev_dual) / prev_price))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> LogUtility<f64> {
        LogUtility { x: 1.0, y: 1.0 }
    }

    fn unit_seller() -> SellerSpec<f64> {
        SellerSpec::new(1.0, 1.0, 1.0)
    }

    #[test]
    fn bid_examples() {
        assert_eq!(buyer_bid(0.0, &LogUtility { x: 3.0, y: 2.0 }, 0.4).unwrap(), 0.0);
        assert_eq!(buyer_bid(1.0, &unit(), 0.0).unwrap(), 0.5);
        assert_eq!(buyer_bid(1.0, &unit(), 0.5).unwrap(), 0.25);
        assert_eq!(buyer_bid(1.0, &unit(), 1.0).unwrap(), 0.0);
        assert!(buyer_bid(-1.0, &unit(), 0.0).is_err());
        assert!(buyer_bid(1.0, &unit(), 1.5).is_err());
    }

    #[test]
    fn availability_examples() {
        let r = seller_availability(0.5, &unit_seller(), 0.0).unwrap();
        assert_eq!((r.availability, r.capacity_dual), (0.0, 0.0));
        let r = seller_availability(0.3, &unit_seller(), 0.0).unwrap();
        assert_eq!((r.availability, r.capacity_dual), (0.0, 0.0));

        // 1/(1 + s) = 2/3 at s = 0.5
        let r = seller_availability(2.0 / 3.0, &unit_seller(), 0.0).unwrap();
        assert!((r.availability - 0.5).abs() < 1e-15);
        assert_eq!(r.capacity_dual, 0.0);

        let r = seller_availability(2.0, &unit_seller(), 0.0).unwrap();
        assert_eq!(r.availability, 1.0);
        assert_eq!(r.capacity_dual, -1.0);
    }

    #[test]
    fn availability_guards() {
        assert!(seller_availability(0.0, &unit_seller(), 0.0).is_err());
        assert!(matches!(
            seller_availability(1.0, &unit_seller(), 1.0),
            Err(AuctionError::DegenerateMarket(_))
        ));
    }

    #[test]
    fn exact_power_examples() {
        assert_eq!(market_power_buyers_exact(&[1.0, 1.0], 0.0).unwrap(), vec![0.5, 0.5]);
        assert_eq!(market_power_buyers_exact(&[3.0], 0.0).unwrap(), vec![1.0]);
        assert_eq!(market_power_buyers_exact(&[1.0, 1.0], 2.0).unwrap(), vec![0.25, 0.25]);
        assert_eq!(market_power_sellers_exact(&[2.0, 2.0], 0.0).unwrap(), vec![0.5, 0.5]);
        assert_eq!(market_power_sellers_exact(&[1.0], 0.0).unwrap(), vec![1.0]);
        assert_eq!(market_power_sellers_exact(&[1.0, 3.0], 4.0).unwrap(), vec![0.125, 0.375]);
        assert!(matches!(
            market_power_buyers_exact(&[0.0, 0.0], 0.0),
            Err(AuctionError::DegenerateMarket(_))
        ));
    }

    #[test]
    fn beta_estimate_examples() {
        let u = LogUtility { x: 1.3, y: 0.8 };
        let b = buyer_bid(0.7, &u, 0.3).unwrap();
        assert!(f64::abs(estimate_beta(b, 0.7, &u).unwrap() - 0.3) < 1e-14);
        let exact = 0.7 * u.marginal(0.7);
        assert_eq!(estimate_beta(exact, 0.7, &u).unwrap(), 0.0);
        assert_eq!(estimate_beta(0.25, 1.0, &unit()).unwrap(), 0.5);
        assert!(estimate_beta(0.25, 0.0, &unit()).is_err());
    }

    #[test]
    fn alpha_estimate_examples() {
        let s = unit_seller();
        // interior price-taking point: v'(g − a) = p
        let p = 2.0 / 3.0;
        assert!(estimate_alpha(p, 0.5, 0.0, &s).unwrap().abs() < 1e-15);

        let r = seller_availability(0.9, &s, 0.2).unwrap();
        assert!(r.availability < s.generation);
        let a = estimate_alpha(0.9, r.availability, r.capacity_dual, &s).unwrap();
        assert!((a - 0.2).abs() < 1e-14);

        // raw estimate −0.5 is clipped
        assert_eq!(estimate_alpha(1.0, 1.0, -0.5, &s).unwrap(), 0.0);
        assert!(estimate_alpha(0.0, 0.5, 0.0, &s).is_err());
        assert!(estimate_alpha(1.0, 1.5, 0.0, &s).is_err());
    }

    #[test]
    fn estimates_are_capped_below_one() {
        let a = estimate_alpha(1.0, 0.0, 0.0, &SellerSpec::new(1e-9, 1e-9, 1.0)).unwrap();
        assert_eq!(a, 1.0 - MARKET_POWER_EPS);
    }
}

use crate::error::{domain, AuctionError, Result};
use crate::metrics::anticipation_objective;
use crate::model::Scenario;
use crate::scalar::{bisect_increasing, total, Scalar};

use super::{
    build, demand_at, kkt_diagnostics, relative_loss, require_valid, solve_price_taking, supply_at,
    Equilibrium, KktDiagnostics, Regime, BISECTION_MAX_ITER,
};

/// Multiplier clearing the market at a fixed thinness `kappa`.
fn clearing_multiplier<T: Scalar>(s: &Scenario<T>, kappa: T) -> T {
    let hi = s.max_buyer_marginal_at_zero();
    let excess = |mu: T| {
        let supply: T = s.sellers.iter().map(|sl| supply_at(sl, mu, kappa).0).sum();
        let demand: T = s.buyers.iter().map(|b| demand_at(&b.utility, mu, kappa)).sum();
        supply - demand
    };
    bisect_increasing(T::zero(), hi, BISECTION_MAX_ITER, T::zero(), excess)
}

/// Market shares in the limit of a vanishing market without a virtual
/// agent. As the total goes to zero, buyer `i` takes the share
/// `(1 − μ/u_i'(0))⁺` of the volume and seller `j` offers `(1 − v_j'(g_j)/μ)⁺`
/// of it. Returns the multiplier at which both sides' shares agree and
/// their common sum; a sum at most one means only the no-trade profile is
/// consistent.
fn limit_shares<T: Scalar>(s: &Scenario<T>) -> (T, T) {
    let buyer_share = |mu: T| -> T {
        s.buyers.iter().map(|b| (T::one() - mu / b.utility.marginal_at_zero()).max(T::zero())).sum()
    };
    let seller_share = |mu: T| -> T {
        s.sellers
            .iter()
            .map(|sl| (T::one() - sl.retained_marginal(T::zero()) / mu).max(T::zero()))
            .sum()
    };
    let lo = s.min_seller_marginal_at_generation();
    let hi = s.max_buyer_marginal_at_zero();
    let mu = bisect_increasing(lo, hi, BISECTION_MAX_ITER, T::zero(), |mu| {
        seller_share(mu) - buyer_share(mu)
    });
    (mu, buyer_share(mu))
}

fn cleared_volume<T: Scalar>(s: &Scenario<T>, total_avail: T) -> T {
    let kappa = total_avail.recip();
    let mu = clearing_multiplier(s, kappa);
    s.sellers.iter().map(|sl| supply_at(sl, mu, kappa).0).sum()
}

/// Equilibrium of price-anticipating buyers and sellers with exact market
/// powers diluted by the aggregator's virtual availability `a0`.
///
/// For a trial total `T`, every agent's market power is its own quantity
/// over `T`; clearing the market at that thinness gives a traded volume
/// `S(T)`. The equilibrium total is the fixed point `T = a0 + S(T)`, found
/// by bisection, which makes the stationarity system hold with the true
/// shares.
pub fn solve_price_anticipation<T: Scalar>(s: &Scenario<T>) -> Result<Equilibrium<T>> {
    require_valid(s)?;
    let a0 = s.aggregator.a0;
    if s.aggregator.ps > T::zero() {
        return domain("anticipation solver does not combine with a surcharge; use the engine");
    }
    if a0 == T::zero() && (s.buyers.len() < 2 || s.sellers.len() < 2) {
        return Err(AuctionError::DegenerateMarket(
            "price anticipation without a virtual agent needs at least two buyers and two sellers"
                .into(),
        ));
    }
    let welfare_max = solve_price_taking(s)?.welfare;
    let generation = s.total_generation();
    if !(generation > T::zero()) {
        return Err(AuctionError::DegenerateMarket("sellers hold no energy".into()));
    }

    let gap = |t: T| a0 + cleared_volume(s, t) - t;
    let hi = a0 + generation;
    let lo = if a0 > T::zero() { a0 } else { generation * T::lit(1e-9) };

    if gap(lo) <= T::zero() {
        // only the no-trade profile is self-consistent
        let mut eq = if a0 > T::zero() {
            let kappa = a0.recip();
            let mu = clearing_multiplier(s, kappa);
            build(s, Regime::PriceAnticipating, mu, T::zero(), kappa, a0, true)
        } else {
            let (mu, shares) = limit_shares(s);
            let mut eq = build(s, Regime::PriceAnticipating, mu, T::zero(), T::zero(), a0, true);
            eq.kkt = KktDiagnostics {
                mu,
                lambda: vec![T::zero(); s.sellers.len()],
                rho: vec![T::zero(); s.sellers.len()],
                stationarity_residual: (shares - T::one()).max(T::zero()),
                slackness_ok: true,
            };
            eq
        };
        eq.loss = relative_loss(welfare_max, eq.welfare)?;
        eq.anticipation_objective = Some(eq.seller_welfare(s));
        return Ok(eq);
    }

    let t_star = bisect_increasing(lo, hi, BISECTION_MAX_ITER, T::zero(), |t| -gap(t));
    let kappa = t_star.recip();
    let mu = clearing_multiplier(s, kappa);
    let mut eq = build(s, Regime::PriceAnticipating, mu, T::zero(), kappa, a0, false);

    let realized = (a0 + total(&eq.availabilities)).recip();
    eq.kkt = kkt_diagnostics(s, mu, T::zero(), realized, &eq.demands, &eq.availabilities);
    eq.loss = relative_loss(welfare_max, eq.welfare)?;
    eq.anticipation_objective = anticipation_objective(s, &eq.demands, &eq.availabilities).ok();
    Ok(eq)
}

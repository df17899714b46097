//! The iterative auction run by the aggregator.
//!
//! One round: the posted price goes to sellers, who reply with
//! availabilities; allocated demands go to buyers, who reply with bids; the
//! aggregator clears the market on those bids and availabilities, allocates
//! energy in proportion to the bids, and posts a damped price for the next
//! round. Allocation always uses the clearing price of the round, so energy
//! balance holds in every round that trades.

use serde::Serialize;

use crate::equilibrium::{
    kkt_diagnostics, relative_loss, solve_price_taking, solve_surcharge, surcharge_upper_bound,
    Equilibrium, Regime,
};
use crate::error::{domain, AuctionError, Result};
use crate::metrics::{anticipation_objective, social_welfare};
use crate::model::{validate_scenario, Scenario, Utility};
use crate::scalar::{total, Scalar};
use crate::strategy::{availability_unchecked, bid_unchecked, estimate_alpha, estimate_beta, MARKET_POWER_EPS};

/// Floor for the adaptive damping weight.
pub const MIN_DAMPING: f64 = 1e-4;
/// Growth of the adaptive damping weight per round while the price moves
/// monotonically, up to the configured weight.
pub const DAMPING_RECOVERY: f64 = 1.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    PriceTaking,
    PriceAnticipating,
}

/// Where anticipating agents get their market power from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MarketPowerSource {
    /// Shares of the previous round's totals, virtual agent included.
    Exact,
    /// Each agent's own inference from its last bid or availability.
    Estimated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig<T> {
    pub mode: Mode,
    pub market_power: MarketPowerSource,
    /// Weight of the new clearing price in the next posted price, in `(0, 1]`.
    pub damping: T,
    /// Halve the damping weight whenever the price correction flips sign
    /// without shrinking by half, and let it grow back while the price
    /// moves in one direction.
    pub adaptive_damping: bool,
    pub price_tol: T,
    pub bid_tol: T,
    pub max_iters: usize,
    pub initial_price: T,
    /// Defaults to an equal split of half the total generation.
    pub initial_demands: Option<Vec<T>>,
}

impl<T: Scalar> Default for EngineConfig<T> {
    fn default() -> Self {
        Self {
            mode: Mode::PriceTaking,
            market_power: MarketPowerSource::Exact,
            damping: T::lit(0.5),
            adaptive_damping: true,
            price_tol: T::lit(1e-8),
            bid_tol: T::lit(1e-8),
            max_iters: 10_000,
            initial_price: T::one(),
            initial_demands: None,
        }
    }
}

impl<T: Scalar> EngineConfig<T> {
    pub fn anticipating() -> Self {
        Self { mode: Mode::PriceAnticipating, ..Self::default() }
    }

    fn check(&self, n_buyers: usize) -> Result<()> {
        if !(self.damping > T::zero() && self.damping <= T::one()) {
            return domain(format!("damping must lie in (0, 1], got {}", self.damping));
        }
        if !(self.price_tol > T::zero() && self.bid_tol > T::zero()) {
            return domain("tolerances must be positive");
        }
        if self.max_iters == 0 {
            return domain("max_iters must be at least 1");
        }
        if !(self.initial_price > T::zero() && self.initial_price.is_finite()) {
            return domain(format!("initial price must be positive, got {}", self.initial_price));
        }
        if let Some(d) = &self.initial_demands {
            if d.len() != n_buyers || d.iter().any(|v| !(*v >= T::zero() && v.is_finite())) {
                return domain("initial demands must be one nonnegative value per buyer");
            }
        }
        Ok(())
    }
}

/// State of one round, after allocation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord<T> {
    pub k: usize,
    /// Clearing price of the round; the price sellers are paid.
    pub price: T,
    /// Price that was posted to sellers at the start of the round.
    pub posted_price: T,
    pub bids: Vec<T>,
    pub availabilities: Vec<T>,
    pub demands: Vec<T>,
    pub betas: Vec<T>,
    pub alphas: Vec<T>,
    pub rhos: Vec<T>,
    /// False when the round had no positive clearing price: nothing was
    /// offered, or bids did not cover the surcharge on what was offered.
    /// Demands are then the tentative `b_i / (P + ps)` at the posted price
    /// and nothing is delivered.
    pub traded: bool,
    /// Damping weight used to form the next posted price.
    pub damping: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Converged,
    MaxIterations,
    /// The surcharge leaves no price at which anyone trades.
    ZeroTrade,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuctionOutcome<T> {
    pub termination: Termination,
    pub iterations: Vec<IterationRecord<T>>,
    pub equilibrium: Equilibrium<T>,
}

impl<T: Scalar> AuctionOutcome<T> {
    pub fn converged(&self) -> bool {
        self.termination != Termination::MaxIterations
    }
}

/// Price solving `b0 + Σ b = (p + ps)·(a0 + Σ a)` for a given virtual bid,
/// floored at zero.
pub fn clearing_price<T: Scalar>(bids: &[T], b0: T, avails: &[T], a0: T, ps: T) -> Result<T> {
    let supply = a0 + total(avails);
    if !(supply > T::zero()) {
        return Err(AuctionError::DegenerateMarket("total availability is zero".into()));
    }
    Ok(((b0 + total(bids)) / supply - ps).max(T::zero()))
}

/// Clearing price when the virtual agent buys back its own availability
/// `a0` at the buyers' unit price, bidding `b0 = (p + ps)·a0`. Returns
/// `(p, b0)`; the virtual agent then cancels out and `p = Σ b / Σ a − ps`.
pub fn self_consistent_clearing_price<T: Scalar>(bids: &[T], avails: &[T], a0: T, ps: T) -> Result<(T, T)> {
    let supply = total(avails);
    if !(supply > T::zero()) {
        return Err(AuctionError::DegenerateMarket("sellers offer no energy".into()));
    }
    let p = (total(bids) / supply - ps).max(T::zero());
    Ok((p, (p + ps) * a0))
}

/// Proportional allocation `d_i = b_i / (p + ps)`.
pub fn allocate<T: Scalar>(bids: &[T], p: T, ps: T) -> Result<Vec<T>> {
    let unit = p + ps;
    if !(unit > T::zero()) {
        return domain(format!("buyers' unit price p + ps = {unit} must be positive"));
    }
    Ok(bids.iter().map(|b| *b / unit).collect())
}

fn cap_power<T: Scalar>(v: T) -> T {
    v.max(T::zero()).min(T::one() - T::lit(MARKET_POWER_EPS))
}

fn max_abs_diff<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| (*x - *y).abs()).fold(T::zero(), T::max)
}

/// Run the auction until prices and bids stop moving or `max_iters` rounds.
pub fn run_auction<T: Scalar>(s: &Scenario<T>, cfg: &EngineConfig<T>) -> Result<AuctionOutcome<T>> {
    let report = validate_scenario(s);
    if !report.is_valid() {
        return Err(AuctionError::Validation(report));
    }
    cfg.check(s.buyers.len())?;
    let a0 = s.aggregator.a0;
    let ps = s.aggregator.ps;
    let anticipating = cfg.mode == Mode::PriceAnticipating;
    if anticipating && a0 == T::zero() && (s.buyers.len() < 2 || s.sellers.len() < 2) {
        return Err(AuctionError::DegenerateMarket(
            "price anticipation without a virtual agent needs at least two buyers and two sellers"
                .into(),
        ));
    }

    if ps >= surcharge_upper_bound(s) {
        return Ok(AuctionOutcome {
            termination: Termination::ZeroTrade,
            iterations: Vec::new(),
            equilibrium: solve_surcharge(s, ps)?,
        });
    }

    let n = s.buyers.len();
    let m = s.sellers.len();
    let mut demands = cfg.initial_demands.clone().unwrap_or_else(|| {
        vec![s.total_generation() / T::lit(2.0 * n as f64); n]
    });
    let mut posted = cfg.initial_price;
    let mut betas = vec![T::zero(); n];
    let mut alphas = vec![T::zero(); m];
    let mut prev_bids: Option<Vec<T>> = None;
    let mut prev_price: Option<T> = None;
    let mut records = Vec::new();
    let mut termination = Termination::MaxIterations;
    let mut theta = cfg.damping;
    let mut prev_correction: Option<T> = None;
    let half = T::lit(0.5);

    for k in 1..=cfg.max_iters {
        let replies: Vec<_> = s
            .sellers
            .iter()
            .zip(&alphas)
            .map(|(sl, a)| availability_unchecked(posted, sl, *a))
            .collect();
        let avails: Vec<T> = replies.iter().map(|r| r.availability).collect();
        let rhos: Vec<T> = replies.iter().map(|r| r.capacity_dual).collect();
        let bids: Vec<T> = s
            .buyers
            .iter()
            .zip(&demands)
            .zip(&betas)
            .map(|((b, d), beta)| bid_unchecked(*d, &b.utility, *beta))
            .collect();

        let offered = total(&avails);
        if !(total(&bids) > ps * offered && offered > T::zero()) {
            // No positive clearing price: either nothing is offered, or the
            // bids do not even cover the surcharge. Buyers see what their
            // bids would buy at the posted price, and the posted price moves
            // toward the side that is missing.
            demands = bids.iter().map(|b| *b / (posted + ps)).collect();
            let step = if offered > T::zero() { -posted * theta } else { posted * theta };
            if offered == T::zero()
                && anticipating
                && cfg.market_power == MarketPowerSource::Exact
                && a0 > T::zero()
            {
                // the virtual agent holds the whole supply side
                alphas.iter_mut().for_each(|a| *a = (T::one() - theta) * *a);
            }
            records.push(IterationRecord {
                k,
                price: posted,
                posted_price: posted,
                bids: bids.clone(),
                availabilities: avails,
                demands: demands.clone(),
                betas: betas.clone(),
                alphas: alphas.clone(),
                rhos,
                traded: false,
                damping: theta,
            });
            posted = posted + step;
            prev_bids = Some(bids);
            prev_price = None;
            prev_correction = Some(step);
            continue;
        }

        let (price, b0) = self_consistent_clearing_price(&bids, &avails, a0, ps)?;
        demands = allocate(&bids, price, ps)?;

        let correction = price - posted;
        if cfg.adaptive_damping {
            if let Some(pc) = prev_correction {
                if correction * pc < T::zero()
                    && correction.abs() > half * pc.abs()
                    && correction.abs() > cfg.price_tol
                {
                    theta = (theta * half).max(T::lit(MIN_DAMPING));
                } else if correction * pc > T::zero() {
                    theta = (theta * T::lit(DAMPING_RECOVERY)).min(cfg.damping);
                }
            }
        }
        prev_correction = Some(correction);
        // largest undamped market-power correction this round
        let mut power_gap = T::zero();
        let mut blend = |old: T, new: T| {
            power_gap = power_gap.max((new - old).abs());
            (T::one() - theta) * old + theta * new
        };
        if anticipating {
            match cfg.market_power {
                MarketPowerSource::Exact => {
                    let bid_total = b0 + total(&bids);
                    if bid_total > T::zero() {
                        for (beta, b) in betas.iter_mut().zip(&bids) {
                            *beta = blend(*beta, cap_power(*b / bid_total));
                        }
                    }
                    let avail_total = a0 + total(&avails);
                    for (alpha, a) in alphas.iter_mut().zip(&avails) {
                        *alpha = blend(*alpha, cap_power(*a / avail_total));
                    }
                }
                MarketPowerSource::Estimated => {
                    for (i, b) in s.buyers.iter().enumerate() {
                        if demands[i] > T::zero() {
                            betas[i] = blend(betas[i], estimate_beta(bids[i], demands[i], &b.utility)?);
                        }
                    }
                    if price > T::zero() {
                        for (j, sl) in s.sellers.iter().enumerate() {
                            alphas[j] = blend(alphas[j], estimate_alpha(price, avails[j], rhos[j], sl)?);
                        }
                    }
                }
            }
        }

        let next = (T::one() - theta) * posted + theta * price;

        // With strong damping every per-round change is small, so the
        // undamped corrections are what certify a fixed point.
        let powers_still = power_gap <= cfg.price_tol;
        let price_still = prev_price.is_some_and(|q| (price - q).abs() <= cfg.price_tol)
            && (price - posted).abs() <= cfg.price_tol;
        // A tiny bid that keeps growing belongs to a buyer re-entering the
        // market, so growth is also measured relative to the bid.
        let bids_still = prev_bids.as_ref().is_some_and(|q| {
            max_abs_diff(q, &bids) <= cfg.bid_tol
                && q.iter().zip(&bids).all(|(old, new)| *new - *old <= cfg.bid_tol * *old)
        });

        records.push(IterationRecord {
            k,
            price,
            posted_price: posted,
            bids: bids.clone(),
            availabilities: avails,
            demands: demands.clone(),
            betas: betas.clone(),
            alphas: alphas.clone(),
            rhos,
            traded: true,
            damping: theta,
        });
        prev_bids = Some(bids);
        prev_price = Some(price);
        posted = next;

        if price_still && bids_still && powers_still {
            termination = Termination::Converged;
            break;
        }
    }

    let last = records.last().expect("at least one round");
    let equilibrium = summarize(s, cfg.mode, last)?;
    Ok(AuctionOutcome { termination, iterations: records, equilibrium })
}

fn summarize<T: Scalar>(s: &Scenario<T>, mode: Mode, last: &IterationRecord<T>) -> Result<Equilibrium<T>> {
    let a0 = s.aggregator.a0;
    let ps = s.aggregator.ps;
    let regime = match mode {
        Mode::PriceAnticipating => Regime::PriceAnticipating,
        Mode::PriceTaking if ps > T::zero() => Regime::Surcharge,
        Mode::PriceTaking => Regime::PriceTaking,
    };
    let avails: Vec<T> = last
        .availabilities
        .iter()
        .zip(&s.sellers)
        .map(|(a, sl)| a.max(T::zero()).min(sl.generation))
        .collect();
    let supplied = a0 + total(&avails);
    let kappa = if mode == Mode::PriceAnticipating && supplied > T::zero() {
        supplied.recip()
    } else {
        T::zero()
    };
    let welfare = social_welfare(s, &last.demands, &avails)?;
    // A buyer leaving the market keeps a geometrically shrinking demand.
    // When that demand is already smaller than the buyer's marginal gap it
    // is treated as zero for the optimality check.
    let active: Vec<T> = last
        .demands
        .iter()
        .zip(&s.buyers)
        .map(|(d, b)| {
            let gap = last.price + ps - (T::one() - *d * kappa) * b.utility.marginal(*d);
            if gap > *d { T::zero() } else { *d }
        })
        .collect();
    let best = solve_price_taking(s)?.welfare;
    let anticipation = if mode == Mode::PriceAnticipating {
        anticipation_objective(s, &last.demands, &avails).ok()
    } else {
        None
    };
    Ok(Equilibrium {
        regime,
        price: last.price,
        kkt: kkt_diagnostics(s, last.price, ps, kappa, &active, &avails),
        revenue: ps * total(&avails),
        demands: last.demands.clone(),
        availabilities: avails,
        virtual_availability: a0,
        surcharge: ps,
        welfare,
        anticipation_objective: anticipation,
        loss: relative_loss(best, welfare)?,
        zero_trade: !last.traded,
    })
}

//! Exhaustive grid search over the anticipation objective. Slow and only
//! meant for certifying the anticipation solver on tiny instances.
//!
//! The objective is evaluated with market totals frozen at a reference
//! allocation (buyers see `T = a0 + Σ ā`, seller `j` sees the others' total
//! `a0 + Σ_{j'≠j} ā_{j'}`). Its gradient then equals `(1 − β_i)·u_i'` for
//! buyers and `−v_j'/(1 − α_j)` for sellers, so an allocation that is the
//! grid argmax of its own frozen objective is a grid approximation of the
//! equilibrium. The reference is iterated until it reproduces itself.

use crate::error::{AuctionError, Result};
use crate::metrics::{pi_buyer_raw, pi_seller_raw};
use crate::model::Scenario;
use crate::scalar::Scalar;

pub const ORACLE_MAX_BUYERS: usize = 2;
pub const ORACLE_MAX_SELLERS: usize = 3;
const MAX_GRID_POINTS: usize = 20_000;
const MAX_REFERENCE_ROUNDS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult<T> {
    pub demands: Vec<T>,
    pub availabilities: Vec<T>,
    /// Objective at the returned point, totals frozen at the reference.
    pub objective: T,
    pub rounds: usize,
    /// The returned allocation is its own frozen-objective argmax.
    pub converged: bool,
}

fn check_instance<T: Scalar>(s: &Scenario<T>, grid_step: T) -> Result<usize> {
    if !(grid_step > T::zero()) {
        return Err(AuctionError::Domain(format!("grid step must be positive, got {grid_step}")));
    }
    if s.buyers.is_empty() || s.sellers.is_empty() {
        return Err(AuctionError::Domain("oracle needs at least one buyer and one seller".into()));
    }
    if s.buyers.len() > ORACLE_MAX_BUYERS || s.sellers.len() > ORACLE_MAX_SELLERS {
        return Err(AuctionError::InstanceTooLarge(format!(
            "{} buyers and {} sellers, limit is {ORACLE_MAX_BUYERS} and {ORACLE_MAX_SELLERS}",
            s.buyers.len(),
            s.sellers.len()
        )));
    }
    let points = (s.total_generation() / grid_step).to_f64_lossy().floor() as usize;
    if points > MAX_GRID_POINTS {
        return Err(AuctionError::InstanceTooLarge(format!(
            "{points} volume grid points, limit is {MAX_GRID_POINTS}"
        )));
    }
    Ok(points)
}

/// Max-plus convolution of two tables indexed by grid volume, with the
/// split that attains each entry.
fn convolve<T: Scalar>(left: &[T], right: &[T]) -> (Vec<T>, Vec<usize>) {
    let n = left.len() + right.len() - 1;
    let mut best = vec![T::neg_infinity(); n];
    let mut arg = vec![0; n];
    for (i, &l) in left.iter().enumerate() {
        for (k, &r) in right.iter().enumerate() {
            let v = l + r;
            if v > best[i + k] {
                best[i + k] = v;
                arg[i + k] = i;
            }
        }
    }
    (best, arg)
}

/// Grid argmax of the anticipation objective with totals frozen at
/// `reference` availabilities. Demands and availabilities are multiples of
/// `grid_step`; the whole feasible grid is enumerated.
pub fn grid_maximize_frozen_pi<T: Scalar>(
    s: &Scenario<T>,
    reference: &[T],
    grid_step: T,
) -> Result<OracleResult<T>> {
    check_instance(s, grid_step)?;
    if reference.len() != s.sellers.len() {
        return Err(AuctionError::Domain("reference has wrong length".into()));
    }
    let a0 = s.aggregator.a0;
    let ref_total: T = reference.iter().copied().sum();
    let buyer_total = (a0 + ref_total).max(grid_step);
    let h = grid_step;
    let idx = |k: usize| T::lit(k as f64) * h;

    // seller tables indexed by availability grid
    let tables: Vec<Vec<T>> = s
        .sellers
        .iter()
        .enumerate()
        .map(|(j, sl)| {
            let others = (a0 + ref_total - reference[j]).max(h);
            let n = (sl.generation / h + T::lit(1e-9)).to_f64_lossy().floor() as usize;
            (0..=n).map(|k| pi_seller_raw(sl, idx(k), others)).collect()
        })
        .collect();

    let mut supply = tables[0].clone();
    let mut splits = Vec::new();
    for table in &tables[1..] {
        let (next, arg) = convolve(&supply, table);
        splits.push(arg);
        supply = next;
    }

    let volume_points = supply.len();
    let buyer_tables: Vec<Vec<T>> = s
        .buyers
        .iter()
        .map(|b| (0..volume_points).map(|k| pi_buyer_raw(&b.utility, idx(k), buyer_total)).collect())
        .collect();
    let (demand, demand_split) = if buyer_tables.len() == 1 {
        (buyer_tables[0].clone(), None)
    } else {
        let (best, arg) = convolve(&buyer_tables[0], &buyer_tables[1]);
        (best[..volume_points].to_vec(), Some(arg))
    };

    let (mut best_k, mut best_v) = (0, T::neg_infinity());
    for k in 0..volume_points {
        let v = demand[k] + supply[k];
        if v > best_v {
            best_v = v;
            best_k = k;
        }
    }

    let demands = match &demand_split {
        None => vec![idx(best_k)],
        Some(arg) => {
            let first = arg[best_k];
            vec![idx(first), idx(best_k - first)]
        }
    };
    let mut avail_idx = vec![0; s.sellers.len()];
    let mut rest = best_k;
    for j in (1..s.sellers.len()).rev() {
        let left = splits[j - 1][rest];
        avail_idx[j] = rest - left;
        rest = left;
    }
    avail_idx[0] = rest;
    let availabilities = avail_idx.iter().map(|&k| idx(k)).collect();

    Ok(OracleResult { demands, availabilities, objective: best_v, rounds: 1, converged: false })
}

/// Brute-force equilibrium of the anticipation objective on a grid.
///
/// Limited to `ORACLE_MAX_BUYERS` buyers and `ORACLE_MAX_SELLERS` sellers.
pub fn brute_force_pi_max<T: Scalar>(s: &Scenario<T>, grid_step: T) -> Result<OracleResult<T>> {
    check_instance(s, grid_step)?;
    let half = T::lit(0.5);
    let mut reference: Vec<T> = s.sellers.iter().map(|sl| sl.generation * half).collect();
    let mut seen: Vec<Vec<T>> = Vec::new();
    let mut last = None;
    for round in 1..=MAX_REFERENCE_ROUNDS {
        let mut r = grid_maximize_frozen_pi(s, &reference, grid_step)?;
        r.rounds = round;
        if r.availabilities == reference {
            r.converged = true;
            return Ok(r);
        }
        if seen.contains(&r.availabilities) {
            // grid cycle: continue from the midpoint, which is off-grid
            reference = reference
                .iter()
                .zip(&r.availabilities)
                .map(|(a, b)| (*a + *b) * half)
                .collect();
            seen.clear();
        } else {
            seen.push(r.availabilities.clone());
            reference = r.availabilities.clone();
        }
        last = Some(r);
    }
    Ok(last.expect("at least one round"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BuyerSpec, SellerSpec};

    #[test]
    fn size_guards() {
        let big = Scenario::new(
            vec![BuyerSpec::new(1.0, 1.0); 3],
            vec![SellerSpec::new(1.0, 1.0, 0.1)],
        );
        assert!(matches!(brute_force_pi_max(&big, 1e-3), Err(AuctionError::InstanceTooLarge(_))));
        let r1 = Scenario::new(vec![BuyerSpec::new(1.0, 1.0)], vec![SellerSpec::new(1.0, 1.0, 1.0)]);
        assert!(brute_force_pi_max(&r1, 0.0).is_err());
        assert!(matches!(brute_force_pi_max(&r1, 1e-6), Err(AuctionError::InstanceTooLarge(_))));
    }

    #[test]
    fn convolution_is_exhaustive() {
        let (best, arg) = convolve(&[0.0, 1.0, 1.5], &[0.0, 2.0]);
        assert_eq!(best, vec![0.0, 2.0, 3.0, 3.5]);
        assert_eq!(arg, vec![0, 0, 1, 2]);
    }
}

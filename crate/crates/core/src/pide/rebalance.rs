//! Controls applied at a rebalancing date: withdrawal first, then the stock fraction.

use rayon::prelude::*;

use super::advance::ValueSurface;
use super::grid::{SolverGrid, WealthGrid};

/// Closed interval of admissible withdrawals at pre-withdrawal wealth `w_minus`.
pub fn admissible_withdrawals(w_minus: f64, q_min: f64, q_max: f64, is_terminal: bool) -> (f64, f64) {
    if is_terminal {
        (0.0, 0.0)
    } else if w_minus >= q_max {
        (q_min, q_max)
    } else {
        (q_min, q_min.max(w_minus))
    }
}

/// `n_q` equally spaced points covering the admissible interval.
pub fn withdrawal_candidates(lo: f64, hi: f64, n_q: usize) -> impl Iterator<Item = f64> {
    let n = if hi > lo { n_q.max(2) } else { 1 };
    let step = if n > 1 { (hi - lo) / (n - 1) as f64 } else { 0.0 };
    (0..n).map(move |k| if k + 1 == n { hi } else { lo + k as f64 * step })
}

/// Stock fractions `k / (n_p - 1)`.
pub fn fraction_candidates(n_p: usize) -> Vec<f64> {
    let n = n_p.max(1);
    if n == 1 {
        return vec![0.0];
    }
    (0..n).map(|k| k as f64 / (n - 1) as f64).collect()
}

/// Terminal reward of wealth `w`: `c (W* + min(w - W*, 0) / alpha) + epsilon w`.
#[inline]
pub fn terminal_value(w: f64, wstar: f64, risk_weight: f64, alpha: f64, epsilon: f64) -> f64 {
    risk_weight * (wstar + (w - wstar).min(0.0) / alpha) + epsilon * w
}

/// Terminal surface on both branches; debt `d` is wealth `-d`.
pub fn terminal_condition(grid: &SolverGrid, wstar: f64, risk_weight: f64, alpha: f64, epsilon: f64, time_index: usize) -> ValueSurface {
    ValueSurface::from_fn(
        grid,
        time_index,
        wstar,
        |s, b| terminal_value(s + b, wstar, risk_weight, alpha, epsilon),
        |d| terminal_value(-d, wstar, risk_weight, alpha, epsilon),
    )
}

/// Best stock fraction for post-withdrawal wealth `w`; smallest fraction on ties.
#[inline]
pub fn best_fraction(vplus: &ValueSurface, w: f64, fractions: &[f64], log_fractions: &[(f64, f64)]) -> (f64, f64) {
    if !(w > 0.0) {
        return (vplus.lookup_debt(-w), 0.0);
    }
    let lw = w.ln();
    let mut best = f64::NEG_INFINITY;
    let mut arg = 0.0;
    for (&p, &(lp, lq)) in fractions.iter().zip(log_fractions) {
        let v = vplus.lookup_log(lw + lp, lw + lq);
        if v > best {
            best = v;
            arg = p;
        }
    }
    (best, arg)
}

/// `(ln p, ln(1 - p))` per candidate; `-inf` entries clamp lookups to the grid edge.
pub fn log_fractions(fractions: &[f64]) -> Vec<(f64, f64)> {
    fractions.iter().map(|&p| (p.ln(), (1.0 - p).ln())).collect()
}

/// `max_p V+(w p, w (1 - p))` and its argmax at every wealth node.
pub fn optimize_fraction(vplus: &ValueSurface, wealth: &WealthGrid, n_p: usize) -> (Vec<f64>, Vec<f64>) {
    let fr = fraction_candidates(n_p);
    let lf = log_fractions(&fr);
    let pairs: Vec<(f64, f64)> = (0..wealth.len())
        .into_par_iter()
        .map(|k| best_fraction(vplus, wealth.node(k), &fr, &lf))
        .collect();
    pairs.into_iter().unzip()
}

/// `max_q [r q + tilde(w - q)]` over the admissible set; smallest `q` on ties.
#[inline]
pub fn best_withdrawal(
    w_minus: f64,
    q_min: f64,
    q_max: f64,
    n_q: usize,
    reward_weight: f64,
    tilde: impl Fn(f64) -> f64,
) -> (f64, f64) {
    let (lo, hi) = admissible_withdrawals(w_minus, q_min, q_max, false);
    // withdrawals carry no reward: only the minimum is considered
    let hi = if reward_weight == 0.0 { lo } else { hi };
    let mut best = f64::NEG_INFINITY;
    let mut arg = lo;
    for q in withdrawal_candidates(lo, hi, n_q) {
        let v = reward_weight * q + tilde(w_minus - q);
        if v > best {
            best = v;
            arg = q;
        }
    }
    (best, arg)
}

/// Pre-withdrawal value and optimal withdrawal at every wealth node, from `tilde`
/// tabulated on the same nodes.
pub fn optimize_withdrawal(tilde: &[f64], wealth: &WealthGrid, q_min: f64, q_max: f64, n_q: usize, reward_weight: f64) -> (Vec<f64>, Vec<f64>) {
    let pairs: Vec<(f64, f64)> = (0..wealth.len())
        .into_par_iter()
        .map(|k| best_withdrawal(wealth.node(k), q_min, q_max, n_q, reward_weight, |w| wealth.interp(tilde, w)))
        .collect();
    pairs.into_iter().unzip()
}

/// Result of one rebalancing date on the 1-D wealth grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Rebalanced {
    /// Value at `t_i^-` as a function of pre-withdrawal wealth.
    pub v_minus: Vec<f64>,
    /// Optimal withdrawal keyed by pre-withdrawal wealth.
    pub q: Vec<f64>,
    /// Optimal stock fraction keyed by post-withdrawal wealth.
    pub p: Vec<f64>,
}

impl Rebalanced {
    /// Value at `t_i^-` on the solvent and debt nodes given the wealth multiplier
    /// for gains and fees at this date.
    pub fn surface(&self, grid: &SolverGrid, wealth: &WealthGrid, factor: f64, time_index: usize, wstar: f64) -> ValueSurface {
        ValueSurface::from_fn(
            grid,
            time_index,
            wstar,
            |s, b| wealth.interp(&self.v_minus, (s + b) * factor),
            |d| wealth.interp(&self.v_minus, -d * factor),
        )
    }
}

/// Both searches at one date, tabulating the intermediate `max_p` on `wealth`.
pub fn rebalance_optimize(vplus: &ValueSurface, wealth: &WealthGrid, q_min: f64, q_max: f64, n_q: usize, n_p: usize, reward_weight: f64) -> Rebalanced {
    let (tilde, p) = optimize_fraction(vplus, wealth, n_p);
    let (v_minus, q) = optimize_withdrawal(&tilde, wealth, q_min, q_max, n_q, reward_weight);
    Rebalanced { v_minus, q, p }
}

/// Value at `t_i^-` of one pre-withdrawal wealth, with the fraction search done
/// at the exact post-withdrawal wealth of every candidate `q`.
pub fn rebalance_direct(vplus: &ValueSurface, w_minus: f64, q_min: f64, q_max: f64, n_q: usize, n_p: usize, reward_weight: f64) -> (f64, f64, f64) {
    let fr = fraction_candidates(n_p);
    let lf = log_fractions(&fr);
    let (v, q) = best_withdrawal(w_minus, q_min, q_max, n_q, reward_weight, |w| best_fraction(vplus, w, &fr, &lf).0);
    let p = best_fraction(vplus, w_minus - q, &fr, &lf).1;
    (v, q, p)
}

//! Backward recursion for a fixed `W*`.

use rayon::prelude::*;

use super::advance::{Advancer, KernelDiagnostics, ValueSurface};
use super::grid::{LogAxis, SolverGrid, WealthGrid};
use super::policy::{ControlPolicy, PolicySlice};
use super::rebalance::{rebalance_direct, rebalance_optimize, terminal_value};
use crate::error::{Error, Result};
use crate::market_model::ModelParams;
use crate::mortality::TontineSchedule;
use crate::scenario::{Kappa, Scenario};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub grid: SolverGrid,
    /// Withdrawal candidates spanning each admissible interval.
    pub n_q: usize,
    /// Stock-fraction candidates in `[0, 1]`.
    pub n_p: usize,
    /// Wealth-table spacing is the finest grid spacing divided by this.
    pub wealth_refine: f64,
    /// Coarse `W*` candidates.
    pub ladder: usize,
    /// Grid size for the coarse `W*` scan; 0 picks `max(256, n / 4)`.
    pub scan_grid: usize,
    /// Width of the final `W*` bracket.
    pub wstar_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self::with_grid(1024)
    }
}

impl SolverConfig {
    pub fn with_grid(n: usize) -> Self {
        Self { grid: SolverGrid::square(n), n_q: 41, n_p: 101, wealth_refine: 2.0, ladder: 64, scan_grid: 0, wstar_tol: 0.25 }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.n_q < 2 || self.n_p < 2 {
            return Err(Error::InvalidGrid(format!("need at least two control candidates (n_q {}, n_p {})", self.n_q, self.n_p)));
        }
        if !(self.wealth_refine >= 1.0) {
            return Err(Error::InvalidGrid(format!("wealth_refine {} must be >= 1", self.wealth_refine)));
        }
        if self.ladder < 3 || !(self.wstar_tol > 0.0) {
            return Err(Error::InvalidGrid("W* ladder needs >= 3 candidates and a positive tolerance".into()));
        }
        Ok(())
    }

    /// Same controls on the coarse scan grid.
    pub fn scan_config(&self) -> Self {
        let n = if self.scan_grid > 0 { self.scan_grid } else { (self.grid.n_s.max(self.grid.n_b) / 4).max(256) };
        let n_min = self.grid.n_s.min(self.grid.n_b).min(self.grid.n_d);
        let n = n.min(n_min);
        Self { grid: SolverGrid { n_s: n, n_b: n, n_d: n, ..self.grid }, ..*self }
    }
}

/// Expectations of the stored policy computed alongside the value function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpStats {
    /// `E[sum q]`.
    pub ew_total: f64,
    pub ew_per_year: f64,
    pub expected_wt: f64,
    /// `W* + E[min(W_T - W*, 0)] / alpha`.
    pub es: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutput {
    /// Objective at `(s, b) = (0, W0)`, `t_0^-`.
    pub value: f64,
    pub wstar: f64,
    pub kappa: Kappa,
    pub policy: ControlPolicy,
    pub stats: Option<DpStats>,
    pub diagnostics: KernelDiagnostics,
}

pub struct DpSolver {
    scenario: Scenario,
    schedule: TontineSchedule,
    config: SolverConfig,
    advancer: Advancer,
    wealth: WealthGrid,
}

impl DpSolver {
    pub fn new(scenario: &Scenario, params: &ModelParams, config: &SolverConfig) -> Result<Self> {
        config.validate()?;
        let schedule = scenario.schedule()?;
        let advancer = Advancer::new(&config.grid, params, scenario.dt())?;
        let g = &config.grid;
        let (es, eb, ed) = advancer.extended_nodes();
        let max_factor = (0..schedule.dates()).map(|i| schedule.wealth_factor(i, 1.0)).fold(1.0f64, f64::max);
        let step = g.s_axis().step.min(g.b_axis().step).min(g.d_axis().step) / config.wealth_refine;
        let pos_top = (es[es.len() - 1] + eb[eb.len() - 1]) * max_factor * 1.5;
        let neg_top = (ed[ed.len() - 1] * max_factor + scenario.q_max) * 1.5;
        let pos = LogAxis::with_step(g.s_min.min(g.b_min), pos_top, step);
        let neg = LogAxis::with_step(g.d_min, neg_top, step);
        Ok(Self { scenario: scenario.clone(), schedule, config: *config, advancer, wealth: WealthGrid::new(neg, pos) })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn wealth_grid(&self) -> &WealthGrid {
        &self.wealth
    }

    pub fn diagnostics(&self) -> KernelDiagnostics {
        self.advancer.diagnostics()
    }

    /// Expectation over one interval of a function of pre-withdrawal wealth at the
    /// next date, as a surface at the current date's post-rebalance instant.
    fn advance_table(&mut self, table: &[f64], factor: f64, time_index: usize, wstar: f64) -> ValueSurface {
        let wealth = &self.wealth;
        let solvent = self.advancer.advance_solvent(|s, b| wealth.interp(table, (s + b) * factor));
        let debt = self.advancer.advance_debt(|d| wealth.interp(table, -d * factor));
        let g = &self.config.grid;
        ValueSurface { s_axis: g.s_axis(), b_axis: g.b_axis(), d_axis: g.d_axis(), solvent, debt, time_index, wstar }
    }

    /// Solve for fixed `W*`; with `track` set, also propagate the withdrawal sum,
    /// terminal wealth and shortfall term under the optimal controls.
    pub fn solve(&mut self, wstar: f64, kappa: Kappa, track: bool) -> Result<SolveOutput> {
        kappa.validate()?;
        if !wstar.is_finite() {
            return Err(Error::InvalidScenario(format!("W* = {wstar} is not finite")));
        }
        let sc = self.scenario.clone();
        let (r, c) = (kappa.reward_weight(), kappa.risk_weight());
        let (n_q, n_p) = (self.config.n_q, self.config.n_p);
        let nodes = self.wealth.nodes();
        let mut v_minus: Vec<f64> = nodes.iter().map(|&w| terminal_value(w, wstar, c, sc.alpha, sc.epsilon)).collect();
        let mut tracked: Vec<Vec<f64>> = if track {
            vec![vec![0.0; nodes.len()], nodes.clone(), nodes.iter().map(|&w| (w - wstar).min(0.0)).collect()]
        } else {
            Vec::new()
        };
        let first_pos = self.wealth.first_positive();
        let mut slices = Vec::with_capacity(sc.m);
        let mut last_plus: Option<(ValueSurface, Vec<ValueSurface>)> = None;

        for i in (1..=sc.m).rev() {
            let factor = self.schedule.wealth_factor(i, 1.0);
            let vplus = self.advance_table(&v_minus, factor, i - 1, wstar);
            let tplus: Vec<ValueSurface> = tracked.iter().map(|t| self.advance_table(t, factor, i - 1, wstar)).collect();

            let rb = rebalance_optimize(&vplus, &self.wealth, sc.q_min, sc.q_max, n_q, n_p, r);
            if track {
                let wealth = &self.wealth;
                tracked = tplus
                    .iter()
                    .enumerate()
                    .map(|(j, surf)| {
                        let tilde: Vec<f64> = (0..nodes.len())
                            .into_par_iter()
                            .map(|k| apply_fraction(surf, nodes[k], rb.p[k]))
                            .collect();
                        (0..nodes.len())
                            .into_par_iter()
                            .map(|k| {
                                let q = rb.q[k];
                                let reward = if j == 0 { q } else { 0.0 };
                                reward + wealth.interp(&tilde, nodes[k] - q)
                            })
                            .collect()
                    })
                    .collect();
            }
            slices.push(PolicySlice { knots: nodes[first_pos..].to_vec(), q: rb.q[first_pos..].to_vec(), p: rb.p[first_pos..].to_vec() });
            v_minus = rb.v_minus;
            if i == 1 {
                last_plus = Some((vplus, tplus));
            }
        }
        slices.reverse();

        let (vplus0, tplus0) = last_plus.expect("at least one interval");
        let w0 = sc.w0;
        let (value, q0, p0) = rebalance_direct(&vplus0, w0, sc.q_min, sc.q_max, n_q, n_p, r);
        pin_initial_controls(&mut slices[0], w0, q0, p0);

        let stats = track.then(|| {
            let e: Vec<f64> = tplus0.iter().map(|s| apply_fraction(s, w0 - q0, p0)).collect();
            let ew_total = q0 + e[0];
            DpStats { ew_total, ew_per_year: ew_total / sc.horizon, expected_wt: e[1], es: wstar + e[2] / sc.alpha }
        });

        let policy = ControlPolicy {
            slices,
            wstar,
            kappa,
            alpha: sc.alpha,
            q_min: sc.q_min,
            q_max: sc.q_max,
            fingerprint: sc.fingerprint(),
        };
        Ok(SolveOutput { value, wstar, kappa, policy, stats, diagnostics: self.diagnostics() })
    }
}

/// Surface value after investing fraction `p` of post-withdrawal wealth `w` in stock.
#[inline]
fn apply_fraction(surf: &ValueSurface, w: f64, p: f64) -> f64 {
    if w > 0.0 {
        let lw = w.ln();
        surf.lookup_log(lw + p.ln(), lw + (1.0 - p).ln())
    } else {
        surf.lookup_debt(-w)
    }
}

/// Insert exact knots at the known initial state so readback reproduces the
/// directly optimized date-0 controls.
fn pin_initial_controls(slice: &mut PolicySlice, w0: f64, q0: f64, p0: f64) {
    let mut insert = |w: f64, q: Option<f64>, p: Option<f64>| {
        if !(w > slice.knots[0]) || w >= slice.knots[slice.knots.len() - 1] {
            return;
        }
        let j = slice.knots.partition_point(|&k| k < w);
        if slice.knots[j] == w {
            if let Some(q) = q {
                slice.q[j] = q;
            }
            if let Some(p) = p {
                slice.p[j] = p;
            }
            return;
        }
        let (a, b) = (slice.knots[j - 1], slice.knots[j]);
        let t = (w.ln() - a.ln()) / (b.ln() - a.ln());
        let lerp = |v: &[f64]| v[j - 1] + t * (v[j] - v[j - 1]);
        let qv = q.unwrap_or_else(|| lerp(&slice.q));
        let pv = p.unwrap_or_else(|| lerp(&slice.p));
        slice.knots.insert(j, w);
        slice.q.insert(j, qv);
        slice.p.insert(j, pv);
    };
    insert(w0, Some(q0), None);
    insert(w0 - q0, None, Some(p0));
}

/// One solve at fixed `W*` returning the policy and the value at the initial state.
pub fn solve_policy(scenario: &Scenario, params: &ModelParams, config: &SolverConfig, wstar: f64, kappa: Kappa) -> Result<(ControlPolicy, f64)> {
    let out = DpSolver::new(scenario, params, config)?.solve(wstar, kappa, false)?;
    Ok((out.policy, out.value))
}

//! Expected shortfall, the outer search over `W*`, and efficient frontiers.

use crate::error::{Error, Result};
use crate::market_model::ModelParams;
use crate::pide::{ControlPolicy, DpSolver, SolveOutput, SolverConfig};
use crate::scenario::{Kappa, Scenario};
use crate::simulator::SimStats;

fn check_samples(n: usize, alpha: f64) -> Result<usize> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidScenario(format!("alpha {alpha} must lie in (0, 1)")));
    }
    let k = (alpha * n as f64).floor() as usize;
    if n == 0 || k == 0 {
        return Err(Error::InsufficientSamples(format!("{n} samples at alpha {alpha}")));
    }
    Ok(k)
}

/// Mean of the `floor(alpha N)` smallest samples.
pub fn es_from_samples(samples: &[f64], alpha: f64) -> Result<f64> {
    let k = check_samples(samples.len(), alpha)?;
    let mut v = samples.to_vec();
    if k < v.len() {
        v.select_nth_unstable_by(k - 1, f64::total_cmp);
    }
    Ok(v[..k].iter().sum::<f64>() / k as f64)
}

/// `W* + mean(min(W_T - W*, 0)) / alpha`.
pub fn rockafellar_value(samples: &[f64], wstar: f64, alpha: f64) -> Result<f64> {
    check_samples(samples.len(), alpha)?;
    let s: f64 = samples.iter().map(|&w| (w - wstar).min(0.0)).sum();
    Ok(wstar + s / (samples.len() as f64 * alpha))
}

/// Outcome of the search over `W*` for one `kappa`.
#[derive(Debug, Clone)]
pub struct WstarSearch {
    pub wstar: f64,
    pub value: f64,
    /// Final solve at the optimum, with tracked expectations.
    pub output: SolveOutput,
    /// `(W*, value)` for every coarse candidate.
    pub scan: Vec<(f64, f64)>,
    /// The coarse scan had more than one local maximum.
    pub multimodal: bool,
    pub solves: usize,
}

impl WstarSearch {
    pub fn policy(&self) -> &ControlPolicy {
        &self.output.policy
    }
}

/// Geometric ladder over `[-W0, 20 W0]`, evenly spaced in `log(W* + W0 + 1)`.
pub fn wstar_ladder(w0: f64, n: usize) -> Vec<f64> {
    let w0 = w0.abs().max(1.0);
    let (lo, hi) = (1.0f64.ln(), (21.0 * w0 + 1.0).ln());
    (0..n).map(|k| (lo + (hi - lo) * k as f64 / (n - 1) as f64).exp() - w0 - 1.0).collect()
}

/// Maximize the value over `[a, b]` by golden section; returns the best point seen.
fn golden_max(mut f: impl FnMut(f64) -> Result<f64>, mut a: f64, mut b: f64, tol: f64) -> Result<(f64, f64, usize)> {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut f1, mut f2) = (f(x1)?, f(x2)?);
    let mut calls = 2;
    while b - a > tol {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2)?;
        }
        calls += 1;
    }
    Ok(if f1 >= f2 { (x1, f1, calls) } else { (x2, f2, calls) })
}

/// Reusable solvers for the scan and the target grid of one scenario.
pub struct WstarOptimizer {
    scan: DpSolver,
    target: DpSolver,
}

impl WstarOptimizer {
    pub fn new(scenario: &Scenario, params: &ModelParams, config: &SolverConfig) -> Result<Self> {
        config.validate()?;
        let scan = DpSolver::new(scenario, params, &config.scan_config())?;
        let target = DpSolver::new(scenario, params, config)?;
        Ok(Self { scan, target })
    }

    pub fn target(&mut self) -> &mut DpSolver {
        &mut self.target
    }

    /// Coarse ladder on the scan grid, then golden section on the target grid
    /// around the best candidate (around each of the top three if the scan is not unimodal).
    pub fn optimize(&mut self, kappa: Kappa) -> Result<WstarSearch> {
        let cfg = *self.target.config();
        let w0 = self.target.scenario().w0;
        let ladder = wstar_ladder(w0, cfg.ladder);
        let mut scan = Vec::with_capacity(ladder.len());
        for &w in &ladder {
            scan.push((w, self.scan.solve(w, kappa, false)?.value));
        }
        let n = scan.len();
        let mut peaks: Vec<usize> = (0..n)
            .filter(|&k| (k == 0 || scan[k].1 > scan[k - 1].1) && (k + 1 == n || scan[k].1 >= scan[k + 1].1))
            .collect();
        let multimodal = peaks.len() > 1;
        peaks.sort_by(|&a, &b| scan[b].1.total_cmp(&scan[a].1));
        peaks.truncate(if multimodal { 3 } else { 1 });
        if peaks.is_empty() {
            peaks.push(0);
        }
        let mut solves = n;
        let mut best = (f64::NAN, f64::NEG_INFINITY);
        for &k in &peaks {
            // two neighbours either side absorb the coarse grid's offset
            let a = ladder[k.saturating_sub(2)];
            let b = ladder[(k + 2).min(n - 1)];
            let target = &mut self.target;
            let (x, v, calls) = golden_max(|w| Ok(target.solve(w, kappa, false)?.value), a, b, cfg.wstar_tol)?;
            solves += calls;
            if v > best.1 {
                best = (x, v);
            }
        }
        let output = self.target.solve(best.0, kappa, true)?;
        Ok(WstarSearch { wstar: best.0, value: output.value, output, scan, multimodal, solves: solves + 1 })
    }
}

/// One-shot search over `W*`.
pub fn optimize_wstar(scenario: &Scenario, params: &ModelParams, config: &SolverConfig, kappa: Kappa) -> Result<WstarSearch> {
    WstarOptimizer::new(scenario, params, config)?.optimize(kappa)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrontierPoint {
    pub kappa: Kappa,
    pub ew_per_year: f64,
    pub ew_total: f64,
    pub es: f64,
    pub median_wt: f64,
    pub wstar: f64,
    pub value: f64,
}

impl FrontierPoint {
    pub fn from_stats(kappa: Kappa, wstar: f64, value: f64, stats: &SimStats) -> Self {
        Self { kappa, ew_per_year: stats.ew_per_year, ew_total: stats.ew_total, es: stats.es, median_wt: stats.median_wt, wstar, value }
    }
}

/// Per-`kappa` outcome of a sweep; failures do not stop the sweep.
#[derive(Debug)]
pub struct SweepEntry {
    pub kappa: Kappa,
    pub result: Result<(FrontierPoint, ControlPolicy)>,
}

/// Solve and evaluate each `kappa`; `evaluate` runs the Monte Carlo backend on the stored policy.
pub fn sweep_kappa(
    scenario: &Scenario,
    params: &ModelParams,
    config: &SolverConfig,
    kappas: &[Kappa],
    mut evaluate: impl FnMut(&ControlPolicy, &Scenario) -> Result<SimStats>,
) -> Result<Vec<SweepEntry>> {
    if kappas.is_empty() {
        return Err(Error::InvalidScenario("empty kappa list".into()));
    }
    let mut opt = WstarOptimizer::new(scenario, params, config)?;
    let mut out = Vec::with_capacity(kappas.len());
    for &kappa in kappas {
        let sc = Scenario { kappa, ..scenario.clone() };
        let result = opt.optimize(kappa).and_then(|s| {
            let stats = evaluate(s.policy(), &sc)?;
            Ok((FrontierPoint::from_stats(kappa, s.wstar, s.value, &stats), s.output.policy))
        });
        out.push(SweepEntry { kappa, result });
    }
    Ok(out)
}

/// Points not dominated in `(EW, ES)`, ordered by increasing ES; EW strictly
/// decreases along the result.
pub fn pareto_filter(points: &[FrontierPoint]) -> Vec<FrontierPoint> {
    let mut v = points.to_vec();
    v.sort_by(|a, b| b.es.total_cmp(&a.es).then(b.ew_per_year.total_cmp(&a.ew_per_year)));
    let mut kept: Vec<FrontierPoint> = Vec::new();
    for p in v {
        if kept.last().is_none_or(|k| p.ew_per_year > k.ew_per_year) {
            kept.push(p);
        }
    }
    kept.reverse();
    kept
}

pub const FRONTIER_HEADER: &str = "kappa,EW_per_year,ES,median_WT,Wstar,value";

pub fn frontier_csv(points: &[FrontierPoint]) -> String {
    let mut s = format!("{FRONTIER_HEADER}\n");
    for p in points {
        s.push_str(&format!("{},{:.4},{:.4},{:.4},{:.4},{:.4}\n", p.kappa, p.ew_per_year, p.es, p.median_wt, p.wstar, p.value));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn es_examples() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(es_from_samples(&v, 0.05).unwrap(), 3.0);
        assert_eq!(es_from_samples(&[7.5; 40], 0.05).unwrap(), 7.5);
        assert!(es_from_samples(&[], 0.05).is_err());
        assert!(es_from_samples(&[1.0; 19], 0.05).is_err());
    }

    #[test]
    fn rockafellar_examples() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert!((rockafellar_value(&v, 5.0, 0.05).unwrap() - 3.0).abs() < 1e-12);
        assert_eq!(rockafellar_value(&v, 0.5, 0.05).unwrap(), 0.5);
    }

    #[test]
    fn ladder_spans_range() {
        let l = wstar_ladder(1000.0, 64);
        assert_eq!(l.len(), 64);
        assert!((l[0] + 1000.0).abs() < 1e-9);
        assert!((l[63] - 20000.0).abs() < 1e-6);
        assert!(l.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn golden_finds_parabola_peak() {
        let (x, v, _) = golden_max(|x| Ok(-(x - 1.3) * (x - 1.3)), -10.0, 10.0, 1e-6).unwrap();
        assert!((x - 1.3).abs() < 1e-5);
        assert!(v > -1e-10);
    }

    fn pt(ew: f64, es: f64) -> FrontierPoint {
        FrontierPoint { kappa: Kappa::Finite(0.0), ew_per_year: ew, ew_total: 30.0 * ew, es, median_wt: 0.0, wstar: 0.0, value: 0.0 }
    }

    #[test]
    fn pareto_drops_dominated() {
        let f = pareto_filter(&[pt(70.0, 100.0), pt(60.0, 300.0), pt(65.0, 50.0), pt(69.0, 200.0), pt(60.0, 250.0)]);
        let kept: Vec<(f64, f64)> = f.iter().map(|p| (p.ew_per_year, p.es)).collect();
        assert_eq!(kept, vec![(70.0, 100.0), (69.0, 200.0), (60.0, 300.0)]);
    }

    #[test]
    fn csv_layout() {
        let s = frontier_csv(&[FrontierPoint { kappa: Kappa::Infinite, ..pt(40.0, 1460.0) }]);
        assert!(s.starts_with("kappa,EW_per_year,ES,median_WT,Wstar,value\ninf,40.0000,1460.0000,"));
    }
}

//! Monte Carlo evaluation of stored controls and constant-weight baselines.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bootstrap::{BootstrapConfig, ReturnSeries};
use crate::error::{Error, Result};
use crate::market_model::{sample_interval, AnnualReturnPair, ModelParams};
use crate::mortality::{RandomGroupGain, TontineSchedule};
use crate::objective::es_from_samples;
use crate::pide::ControlPolicy;
use crate::scenario::Scenario;

/// How the realized group gain is drawn at each date.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GroupGainMode {
    Unit,
    /// Normal with mean one and this standard deviation, truncated at zero.
    Random(f64),
}

/// Where interval returns come from.
#[derive(Debug, Clone, Copy)]
pub enum Market<'a> {
    Synthetic(&'a ModelParams),
    Bootstrap { series: &'a ReturnSeries, config: &'a BootstrapConfig },
}

/// Control rule applied along each path.
#[derive(Debug, Clone, Copy)]
pub enum Controls<'a> {
    Policy(&'a ControlPolicy),
    Constant { p: f64, q: f64 },
}

impl Controls<'_> {
    fn withdrawal(&self, i: usize, w_minus: f64) -> f64 {
        match self {
            Controls::Policy(pol) => pol.withdrawal(i, w_minus),
            Controls::Constant { q, .. } => *q,
        }
    }

    fn stock_fraction(&self, i: usize, w_plus: f64) -> f64 {
        if !(w_plus > 0.0) {
            return 0.0;
        }
        match self {
            Controls::Policy(pol) => pol.stock_fraction(i, w_plus),
            Controls::Constant { p, .. } => *p,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub paths: usize,
    pub seed: u64,
    pub group_gain: GroupGainMode,
    /// Keep per-date records for percentile bands.
    pub bands: bool,
}

impl SimOptions {
    pub fn new(paths: usize, seed: u64) -> Self {
        Self { paths, seed, group_gain: GroupGainMode::Unit, bands: false }
    }
}

/// Nearest-rank 5th, 50th and 95th percentiles at one date.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub date: usize,
    pub p5: f64,
    pub p50: f64,
    pub p95: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bands {
    /// Pre-withdrawal wealth at dates `0..=m`.
    pub wealth: Vec<Band>,
    pub withdrawal: Vec<Band>,
    pub stock_fraction: Vec<Band>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimStats {
    pub paths: usize,
    pub ew_total: f64,
    pub ew_per_year: f64,
    pub es: f64,
    /// Asymptotic standard error of the tail-mean estimator.
    pub es_se: f64,
    pub median_wt: f64,
    /// Half the distance between the order statistics one standard error either side of the median.
    pub median_se: f64,
    pub mean_wt: f64,
    pub ew_se: f64,
    /// Share of withdrawals strictly between `q_min` and `q_max`.
    pub interior_withdrawals: f64,
    /// Share of paths in debt at the horizon.
    pub in_debt_at_end: f64,
    /// Sorted terminal wealth.
    pub terminal: Vec<f64>,
    pub bands: Option<Bands>,
}

struct PathRecord {
    wt: f64,
    sum_q: f64,
    interior: u32,
    dates: Vec<[f32; 3]>,
}

/// One rebalancing date along a path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DateRecord {
    pub group_gain: f64,
    pub w_minus: f64,
    pub q: f64,
    pub p: f64,
    pub w_plus: f64,
}

/// Full history of one path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathTrace {
    /// Dates `0..m`; the horizon carries no withdrawal.
    pub dates: Vec<DateRecord>,
    pub returns: Vec<AnnualReturnPair>,
    /// Group gain applied at the horizon.
    pub final_gain: f64,
    pub terminal: f64,
    pub sum_q: f64,
}

/// Per-path random streams: returns and group gains never share draws, so the
/// return sequence of a path does not depend on the controls or the gain mode.
fn path_rngs(seed: u64, path: usize) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(2 * path as u64);
    let mut g = ChaCha8Rng::seed_from_u64(seed);
    g.set_stream(2 * path as u64 + 1);
    (r, g)
}

fn interval_returns(market: &Market<'_>, m: usize, dt: f64, rng: &mut ChaCha8Rng) -> Result<Vec<AnnualReturnPair>> {
    match market {
        Market::Synthetic(params) => Ok((0..m).map(|_| sample_interval(params, dt, rng)).collect()),
        Market::Bootstrap { series, config } => crate::bootstrap::stationary_block_sample(series, config, m, dt, rng),
    }
}

/// Simulate path number `path` of the stream family `seed`.
#[allow(clippy::too_many_arguments)]
pub fn trace_path(
    scenario: &Scenario,
    schedule: &TontineSchedule,
    controls: &Controls<'_>,
    market: &Market<'_>,
    spread: f64,
    group_gain: GroupGainMode,
    seed: u64,
    path: usize,
) -> Result<PathTrace> {
    let gain_law = match group_gain {
        GroupGainMode::Unit => None,
        GroupGainMode::Random(sd) => Some(RandomGroupGain::new(sd)?),
    };
    let (mut rr, mut rg) = path_rngs(seed, path);
    let m = scenario.m;
    let dt = scenario.dt();
    let returns = interval_returns(market, m, dt, &mut rr)?;
    let (mut s, mut b) = (0.0, scenario.w0);
    let mut sum_q = 0.0;
    let mut dates = Vec::with_capacity(m);
    for i in 0..=m {
        let g = match gain_law {
            Some(law) if i > 0 => law.sample(&mut rg),
            _ => 1.0,
        };
        let w_minus = (s + b) * schedule.wealth_factor(i, g);
        if i == m {
            return Ok(PathTrace { dates, returns, final_gain: g, terminal: w_minus, sum_q });
        }
        let q = controls.withdrawal(i, w_minus);
        sum_q += q;
        let w_plus = w_minus - q;
        let p = controls.stock_fraction(i, w_plus);
        dates.push(DateRecord { group_gain: g, w_minus, q, p, w_plus });
        let r = returns[i];
        if w_plus > 0.0 {
            s = p * w_plus * r.log_return_s.exp();
            b = (1.0 - p) * w_plus * r.log_return_b.exp();
        } else {
            // trading stops; the debt grows at the bond return plus the spread
            s = 0.0;
            b = w_plus * (r.log_return_b + spread * dt).exp();
        }
    }
    unreachable!("loop returns at the horizon")
}

#[allow(clippy::too_many_arguments)]
fn run_path(
    scenario: &Scenario,
    schedule: &TontineSchedule,
    controls: &Controls<'_>,
    market: &Market<'_>,
    spread: f64,
    opts: &SimOptions,
    path: usize,
) -> Result<PathRecord> {
    let t = trace_path(scenario, schedule, controls, market, spread, opts.group_gain, opts.seed, path)?;
    let interior = t.dates.iter().filter(|d| d.q > scenario.q_min + 1e-9 && d.q < scenario.q_max - 1e-9).count() as u32;
    let dates = if opts.bands {
        t.dates
            .iter()
            .map(|d| [d.w_minus as f32, d.q as f32, d.p as f32])
            .chain(std::iter::once([t.terminal as f32, 0.0, 0.0]))
            .collect()
    } else {
        Vec::new()
    };
    Ok(PathRecord { wt: t.terminal, sum_q: t.sum_q, interior, dates })
}

/// Nearest-rank percentile of sorted data: the value at rank `ceil(level * n)`.
pub fn nearest_rank(sorted: &[f64], level: f64) -> f64 {
    let n = sorted.len();
    let rank = ((level * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

fn band(date: usize, mut v: Vec<f64>) -> Band {
    v.sort_by(f64::total_cmp);
    Band { date, p5: nearest_rank(&v, 0.05), p50: nearest_rank(&v, 0.5), p95: nearest_rank(&v, 0.95) }
}

fn summarize(records: Vec<PathRecord>, scenario: &Scenario, bands: bool) -> Result<SimStats> {
    let n = records.len();
    let nf = n as f64;
    let alpha = scenario.alpha;
    let ew_total = records.iter().map(|r| r.sum_q).sum::<f64>() / nf;
    let ew_var = records.iter().map(|r| (r.sum_q - ew_total).powi(2)).sum::<f64>() / (nf - 1.0).max(1.0);
    let interior = records.iter().map(|r| r.interior as f64).sum::<f64>() / (nf * scenario.m as f64);
    let mut terminal: Vec<f64> = records.iter().map(|r| r.wt).collect();
    terminal.sort_by(f64::total_cmp);
    let es = es_from_samples(&terminal, alpha)?;
    let k = ((alpha * nf).floor() as usize).max(1);
    let var_alpha = terminal[k - 1];
    let tail_var = terminal[..k].iter().map(|w| (w - es).powi(2)).sum::<f64>() / k as f64;
    let es_se = ((tail_var + (1.0 - alpha) * (var_alpha - es).powi(2)) / (alpha * nf)).sqrt();
    let median_wt = nearest_rank(&terminal, 0.5);
    let off = (0.5 * nf.sqrt()).ceil() as usize;
    let mid = n / 2;
    let median_se = 0.5 * (terminal[(mid + off).min(n - 1)] - terminal[mid.saturating_sub(off)]);
    let mean_wt = terminal.iter().sum::<f64>() / nf;
    let in_debt_at_end = terminal.iter().filter(|&&w| w < 0.0).count() as f64 / nf;
    let bands = bands.then(|| {
        let m = scenario.m;
        let column = |i: usize, c: usize| -> Vec<f64> { records.iter().map(|r| r.dates[i][c] as f64).collect() };
        Bands {
            wealth: (0..=m).map(|i| band(i, column(i, 0))).collect(),
            withdrawal: (0..m).map(|i| band(i, column(i, 1))).collect(),
            stock_fraction: (0..m).map(|i| band(i, column(i, 2))).collect(),
        }
    });
    Ok(SimStats {
        paths: n,
        ew_total,
        ew_per_year: ew_total / scenario.horizon,
        es,
        es_se,
        median_wt,
        median_se,
        mean_wt,
        ew_se: (ew_var / nf).sqrt() / scenario.horizon,
        interior_withdrawals: interior,
        in_debt_at_end,
        terminal,
        bands,
    })
}

/// Shared path mechanics for every evaluator.
pub fn simulate(
    scenario: &Scenario,
    schedule: &TontineSchedule,
    controls: Controls<'_>,
    market: Market<'_>,
    spread: f64,
    opts: &SimOptions,
) -> Result<SimStats> {
    scenario.validate()?;
    if !((opts.paths as f64) * scenario.alpha >= 1.0) {
        return Err(Error::InsufficientSamples(format!("{} paths at alpha {}", opts.paths, scenario.alpha)));
    }
    if schedule.dates() != scenario.m + 1 {
        return Err(Error::InvalidScenario(format!("schedule has {} dates for {} intervals", schedule.dates(), scenario.m)));
    }
    if let GroupGainMode::Random(sd) = opts.group_gain {
        RandomGroupGain::new(sd)?;
    }
    let records = (0..opts.paths)
        .into_par_iter()
        .map(|k| run_path(scenario, schedule, &controls, &market, spread, opts, k))
        .collect::<Result<Vec<_>>>()?;
    summarize(records, scenario, opts.bands)
}

fn check_fingerprint(policy: &ControlPolicy, scenario: &Scenario) -> Result<()> {
    let fp = scenario.fingerprint();
    if policy.fingerprint != fp {
        return Err(Error::FingerprintMismatch { policy: policy.fingerprint.clone(), scenario: fp });
    }
    if policy.m() != scenario.m {
        return Err(Error::InvalidScenario(format!("policy has {} dates, scenario {}", policy.m(), scenario.m)));
    }
    Ok(())
}

/// Evaluate a stored policy in the parametric market.
pub fn simulate_policy(policy: &ControlPolicy, scenario: &Scenario, params: &ModelParams, opts: &SimOptions) -> Result<SimStats> {
    check_fingerprint(policy, scenario)?;
    params.validate()?;
    simulate(scenario, &scenario.schedule()?, Controls::Policy(policy), Market::Synthetic(params), params.mu_c_b, opts)
}

/// Evaluate a stored policy on bootstrap resamples of historical returns.
pub fn simulate_policy_on(policy: &ControlPolicy, scenario: &Scenario, market: Market<'_>, spread: f64, opts: &SimOptions) -> Result<SimStats> {
    check_fingerprint(policy, scenario)?;
    simulate(scenario, &scenario.schedule()?, Controls::Policy(policy), market, spread, opts)
}

/// Constant stock fraction and withdrawal with no tontine gains and no fees.
pub fn simulate_constant(scenario: &Scenario, market: Market<'_>, spread: f64, p: f64, q: f64, opts: &SimOptions) -> Result<SimStats> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidScenario(format!("stock fraction {p} outside [0, 1]")));
    }
    if !(q >= 0.0 && q.is_finite()) {
        return Err(Error::InvalidScenario(format!("withdrawal {q}")));
    }
    if let Market::Synthetic(params) = market {
        params.validate()?;
    }
    let plain = scenario.without_tontine();
    let schedule = TontineSchedule::none(plain.m, plain.dt());
    let opts = SimOptions { group_gain: GroupGainMode::Unit, ..*opts };
    simulate(&plain, &schedule, Controls::Constant { p, q }, market, spread, &opts)
}

/// One heat-map cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatCell {
    pub date: usize,
    pub wealth: f64,
    pub stock_fraction: f64,
    /// `(q - q_min) / (q_max - q_min)`, or 0 when the bounds coincide.
    pub withdrawal: f64,
}

/// Controls on a uniform wealth band for dates in `dates`; wealth is read as
/// pre-withdrawal for `q` and post-withdrawal for `p`.
pub fn export_heatmaps(policy: &ControlPolicy, wealth_min: f64, wealth_max: f64, points: usize, dates: std::ops::Range<usize>) -> Vec<HeatCell> {
    let n = points.max(2);
    let span = policy.q_max - policy.q_min;
    let mut out = Vec::with_capacity(n * dates.len());
    for i in dates.filter(|&i| i < policy.m()) {
        for k in 0..n {
            let w = wealth_min + (wealth_max - wealth_min) * k as f64 / (n - 1) as f64;
            let q = policy.withdrawal(i, w);
            out.push(HeatCell {
                date: i,
                wealth: w,
                stock_fraction: policy.stock_fraction(i, w),
                withdrawal: if span > 0.0 { (q - policy.q_min) / span } else { 0.0 },
            });
        }
    }
    out
}

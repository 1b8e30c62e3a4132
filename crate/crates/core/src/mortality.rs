//! Mortality data, tontine gain rates, fees and group-gain accounting.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

const DEFAULT_TABLE: &str = include_str!("../data/cpm2014_male.csv");

/// Conditional one-year death probabilities by integer age.
#[derive(Debug, Clone, PartialEq)]
pub struct MortalityTable {
    entries: Vec<(u32, f64)>,
}

impl MortalityTable {
    pub fn new(entries: Vec<(u32, f64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Mortality("table is empty".into()));
        }
        for w in entries.windows(2) {
            if w[1].0 != w[0].0 + 1 {
                return Err(Error::Mortality(format!(
                    "ages must be contiguous and increasing ({} followed by {})",
                    w[0].0, w[1].0
                )));
            }
        }
        if let Some(&(age, q)) = entries.iter().find(|(_, q)| !(0.0..1.0).contains(q)) {
            return Err(Error::Mortality(format!("q = {q} at age {age} is outside [0, 1)")));
        }
        Ok(Self { entries })
    }

    /// Parses the `age,q` text format.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, header)) if header.trim().replace(' ', "") == "age,q" => {}
            _ => return Err(Error::Mortality("expected header line \"age,q\"".into())),
        }
        let mut entries = Vec::new();
        for (no, line) in lines {
            let mut cols = line.split(',').map(str::trim);
            let (age, q) = match (cols.next(), cols.next(), cols.next()) {
                (Some(a), Some(q), None) => (a, q),
                _ => return Err(Error::Mortality(format!("line {}: expected two columns", no + 1))),
            };
            let age = age
                .parse::<u32>()
                .map_err(|e| Error::Mortality(format!("line {}: age: {e}", no + 1)))?;
            let q = q
                .parse::<f64>()
                .map_err(|e| Error::Mortality(format!("line {}: q: {e}", no + 1)))?;
            entries.push((age, q));
        }
        Self::new(entries)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }

    /// Bundled male pensioner table used by the default scenario.
    pub fn default_male() -> Self {
        Self::from_csv(DEFAULT_TABLE).expect("bundled mortality table is valid")
    }

    /// A table with the same `q` at every age in `ages`.
    pub fn constant(ages: std::ops::RangeInclusive<u32>, q: f64) -> Result<Self> {
        Self::new(ages.map(|a| (a, q)).collect())
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn q_at(&self, age: u32) -> Result<f64> {
        let first = self.entries[0].0;
        age.checked_sub(first)
            .and_then(|k| self.entries.get(k as usize))
            .map(|&(_, q)| q)
            .ok_or_else(|| Error::Mortality(format!("age {age} is not covered by the table")))
    }
}

/// Per-date tontine gain rates and the fee they are charged net of.
#[derive(Debug, Clone, PartialEq)]
pub struct TontineSchedule {
    /// `gains[i]` is credited at date `i`; `gains[0] == 0`.
    pub gains: Vec<f64>,
    /// Annual fee rate, charged on wealth after gains and before withdrawals.
    pub fee: f64,
    /// Interval ending at date `i`; `dt[0] == 0`.
    pub dt: Vec<f64>,
}

impl TontineSchedule {
    /// No gains and no fee over `m` intervals of length `dt`.
    pub fn none(m: usize, dt: f64) -> Self {
        let mut dts = vec![dt; m + 1];
        dts[0] = 0.0;
        Self { gains: vec![0.0; m + 1], fee: 0.0, dt: dts }
    }

    pub fn dates(&self) -> usize {
        self.gains.len()
    }

    /// Multiplier taking `s + b` at `t_i^-` to wealth after gains and fees.
    pub fn wealth_factor(&self, i: usize, group_gain: f64) -> f64 {
        (1.0 + self.gains[i] * group_gain) * (-self.dt[i] * self.fee).exp()
    }
}

/// Nominal per-period gain rate `q / (1 - q)` that makes participation a fair game.
pub fn gain_rate(q: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&q) {
        return Err(Error::Mortality(format!("q = {q} must lie in [0, 1)")));
    }
    Ok(q / (1.0 - q))
}

/// Gains for dates `0..=m`; the rate at date `i >= 1` uses `q` at the integer age
/// attained at `t_{i-1}`.
pub fn build_schedule(table: &MortalityTable, start_age: u32, m: usize, dt: f64, fee: f64) -> Result<TontineSchedule> {
    if !(dt > 0.0) {
        return Err(Error::InvalidScenario(format!("interval length {dt} must be positive")));
    }
    if !(fee >= 0.0) {
        return Err(Error::InvalidScenario(format!("fee {fee} must be nonnegative")));
    }
    let mut gains = Vec::with_capacity(m + 1);
    gains.push(0.0);
    for i in 1..=m {
        let age = start_age + ((i - 1) as f64 * dt + 1e-9).floor() as u32;
        gains.push(gain_rate(table.q_at(age)?)?);
    }
    let mut dts = vec![dt; m + 1];
    dts[0] = 0.0;
    Ok(TontineSchedule { gains, fee, dt: dts })
}

/// Wealth after tontine gains and fees, the instant before withdrawal.
///
/// `group_gain` scales the nominal rate; the optimal-control solver always uses 1.
pub fn wealth_before_withdrawal(s: f64, b: f64, gain: f64, dt: f64, fee: f64, group_gain: f64) -> f64 {
    (s + b) * (1.0 + gain * group_gain) * (-dt * fee).exp()
}

/// State of one pool member over a period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoolMember {
    pub alive_before: bool,
    pub alive_after: bool,
    pub q: f64,
    pub v: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PoolSnapshot {
    pub members: Vec<PoolMember>,
}

impl PoolSnapshot {
    fn counted(&self) -> impl Iterator<Item = &PoolMember> {
        self.members.iter().filter(|m| m.alive_before)
    }

    pub fn total_forfeited(&self) -> f64 {
        self.counted().filter(|m| !m.alive_after).map(|m| m.v).sum()
    }

    /// Sum of nominal credits owed to survivors.
    pub fn nominal_credits(&self) -> f64 {
        self.counted()
            .filter(|m| m.alive_after)
            .map(|m| m.v * m.q / (1.0 - m.q))
            .sum()
    }

    /// Actual credit paid to each member (zero for the dead and for members not counted).
    pub fn actual_credits(&self, group_gain: f64) -> Vec<f64> {
        self.members
            .iter()
            .map(|m| {
                if m.alive_before && m.alive_after {
                    group_gain * m.v * m.q / (1.0 - m.q)
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// Realized group gain: forfeited wealth over survivors' nominal credits.
pub fn group_gain(pool: &PoolSnapshot) -> Result<f64> {
    if pool.members.iter().any(|m| m.alive_after && !m.alive_before) {
        return Err(Error::Mortality("member alive after the period but not before".into()));
    }
    let denom = pool.nominal_credits();
    if !(denom > 0.0) {
        return Err(Error::PoolCollapse);
    }
    Ok(pool.total_forfeited() / denom)
}

/// Random group gain: normal with mean one, redrawn until positive.
#[derive(Debug, Clone, Copy)]
pub struct RandomGroupGain {
    normal: Normal<f64>,
}

impl RandomGroupGain {
    pub fn new(sd: f64) -> Result<Self> {
        let normal = Normal::new(1.0, sd)
            .map_err(|e| Error::InvalidScenario(format!("group gain sd {sd}: {e}")))?;
        Ok(Self { normal })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let g = self.normal.sample(rng);
            if g >= 0.0 {
                return g;
            }
        }
    }
}

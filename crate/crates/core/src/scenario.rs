//! Problem data shared by the solver, the simulator and the bootstrap evaluator.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::mortality::{build_schedule, MortalityTable, TontineSchedule};

/// Weight on expected shortfall relative to total withdrawals.
///
/// `Infinite` drops the withdrawal term from the objective altogether.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kappa {
    Finite(f64),
    Infinite,
}

impl Kappa {
    /// Weight on the withdrawal sum.
    pub fn reward_weight(&self) -> f64 {
        match self {
            Kappa::Finite(_) => 1.0,
            Kappa::Infinite => 0.0,
        }
    }

    /// Weight on the shortfall term.
    pub fn risk_weight(&self) -> f64 {
        match self {
            Kappa::Finite(k) => *k,
            Kappa::Infinite => 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Kappa::Finite(k) if !(*k >= 0.0 && k.is_finite()) => {
                Err(Error::InvalidScenario(format!("kappa {k} must be finite and nonnegative")))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Kappa {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kappa::Finite(k) => write!(f, "{k}"),
            Kappa::Infinite => write!(f, "inf"),
        }
    }
}

impl FromStr for Kappa {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("inf") || t.eq_ignore_ascii_case("infinite") || t == "∞" {
            return Ok(Kappa::Infinite);
        }
        let k: f64 = t.parse().map_err(|_| Error::InvalidScenario(format!("cannot parse kappa '{s}'")))?;
        if k.is_infinite() && k > 0.0 {
            return Ok(Kappa::Infinite);
        }
        let k = Kappa::Finite(k);
        k.validate()?;
        Ok(k)
    }
}

impl<'de> Deserialize<'de> for Kappa {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        let k = match Raw::deserialize(d)? {
            Raw::Num(x) if x.is_infinite() && x > 0.0 => Kappa::Infinite,
            Raw::Num(x) => Kappa::Finite(x),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom)?,
        };
        k.validate().map_err(serde::de::Error::custom)?;
        Ok(k)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// Initial wealth, thousands of real dollars.
    pub w0: f64,
    /// Horizon in years.
    pub horizon: f64,
    /// Number of rebalancing intervals; withdrawals happen at dates `0..m`.
    pub m: usize,
    pub q_min: f64,
    pub q_max: f64,
    pub alpha: f64,
    pub kappa: Kappa,
    pub epsilon: f64,
    /// Annual fee rate charged on the tontine account.
    pub fee: f64,
    pub start_age: u32,
    pub tontine_enabled: bool,
    pub mortality: MortalityTable,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            w0: 1000.0,
            horizon: 30.0,
            m: 30,
            q_min: 40.0,
            q_max: 80.0,
            alpha: 0.05,
            kappa: Kappa::Finite(0.185),
            epsilon: -1e-4,
            fee: 0.005,
            start_age: 65,
            tontine_enabled: true,
            mortality: MortalityTable::default_male(),
        }
    }
}

impl Scenario {
    /// The same account without tontine gains or fees.
    pub fn without_tontine(&self) -> Self {
        Self { tontine_enabled: false, fee: 0.0, ..self.clone() }
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.m as f64
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidScenario(msg));
        if !(self.w0.is_finite()) {
            return bad(format!("initial wealth {} is not finite", self.w0));
        }
        if self.m == 0 || !(self.horizon > 0.0) {
            return bad(format!("horizon {} with {} intervals", self.horizon, self.m));
        }
        if !(self.q_min >= 0.0 && self.q_min <= self.q_max && self.q_max.is_finite()) {
            return bad(format!("withdrawal bounds [{}, {}]", self.q_min, self.q_max));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha {} must lie in (0, 1)", self.alpha));
        }
        if !(self.epsilon.is_finite()) {
            return bad(format!("epsilon {}", self.epsilon));
        }
        if !(self.fee >= 0.0 && self.fee.is_finite()) {
            return bad(format!("fee {}", self.fee));
        }
        self.kappa.validate()
    }

    /// Gain and fee schedule seen by the account.
    pub fn schedule(&self) -> Result<TontineSchedule> {
        self.validate()?;
        if self.tontine_enabled {
            build_schedule(&self.mortality, self.start_age, self.m, self.dt(), self.fee)
        } else {
            Ok(TontineSchedule::none(self.m, self.dt()))
        }
    }

    /// Hash of everything that determines the control problem except `kappa`.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        let mut put = |tag: &str, x: f64| {
            h.update(tag.as_bytes());
            h.update(x.to_bits().to_le_bytes());
        };
        put("w0", self.w0);
        put("T", self.horizon);
        put("M", self.m as f64);
        put("qmin", self.q_min);
        put("qmax", self.q_max);
        put("alpha", self.alpha);
        put("eps", self.epsilon);
        put("fee", self.fee);
        put("age", self.start_age as f64);
        put("tontine", if self.tontine_enabled { 1.0 } else { 0.0 });
        if self.tontine_enabled {
            for &(age, q) in self.mortality.entries() {
                put("age", age as f64);
                put("q", q);
            }
        }
        let digest = h.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

//! Stored controls and their text format.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::rebalance::admissible_withdrawals;
use crate::error::{Error, Result};
use crate::scenario::Kappa;

/// Lower clamp on wealth before taking logs in control readback.
pub const READBACK_FLOOR: f64 = 1e-2;

const MAGIC: &str = "tontine-policy";
const VERSION: u32 = 1;

/// Controls at one date on increasing positive wealth knots.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySlice {
    pub knots: Vec<f64>,
    /// Withdrawal at pre-withdrawal wealth `knots[k]`.
    pub q: Vec<f64>,
    /// Stock fraction at post-withdrawal wealth `knots[k]`.
    pub p: Vec<f64>,
}

impl PolicySlice {
    /// Linear interpolation in `log max(w, floor)`, clamped at the table ends.
    fn read(&self, values: &[f64], w: f64) -> f64 {
        let x = w.max(READBACK_FLOOR);
        let k = &self.knots;
        let n = k.len();
        if x <= k[0] {
            return values[0];
        }
        if x >= k[n - 1] {
            return values[n - 1];
        }
        let j = k.partition_point(|&v| v <= x).clamp(1, n - 1);
        let (a, b) = (k[j - 1], k[j]);
        let t = (x.ln() - a.ln()) / (b.ln() - a.ln());
        values[j - 1] + t * (values[j] - values[j - 1])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlPolicy {
    /// Dates `0..m`; date `m` liquidates with no withdrawal.
    pub slices: Vec<PolicySlice>,
    pub wstar: f64,
    pub kappa: Kappa,
    pub alpha: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub fingerprint: String,
}

impl ControlPolicy {
    /// Number of rebalancing intervals.
    pub fn m(&self) -> usize {
        self.slices.len()
    }

    /// Withdrawal at date `i` given pre-withdrawal wealth, projected onto the
    /// admissible set.
    pub fn withdrawal(&self, i: usize, w_minus: f64) -> f64 {
        if i >= self.slices.len() {
            return 0.0;
        }
        let (lo, hi) = admissible_withdrawals(w_minus, self.q_min, self.q_max, false);
        let s = &self.slices[i];
        s.read(&s.q, w_minus).clamp(lo, hi)
    }

    /// Stock fraction at date `i` given post-withdrawal wealth; 0 if insolvent.
    pub fn stock_fraction(&self, i: usize, w_plus: f64) -> f64 {
        if i >= self.slices.len() || !(w_plus > 0.0) {
            return 0.0;
        }
        let s = &self.slices[i];
        s.read(&s.p, w_plus).clamp(0.0, 1.0)
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{MAGIC} {VERSION}")?;
        writeln!(out, "fingerprint {}", self.fingerprint)?;
        writeln!(out, "wstar {}", self.wstar)?;
        writeln!(out, "kappa {}", self.kappa)?;
        writeln!(out, "alpha {}", self.alpha)?;
        writeln!(out, "q_min {}", self.q_min)?;
        writeln!(out, "q_max {}", self.q_max)?;
        writeln!(out, "dates {}", self.slices.len())?;
        for (i, s) in self.slices.iter().enumerate() {
            writeln!(out, "slice {i} {}", s.knots.len())?;
            for k in 0..s.knots.len() {
                writeln!(out, "{} {} {}", s.knots[k], s.q[k], s.p[k])?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(input: R) -> Result<Self> {
        let mut lines = BufReader::new(input).lines().enumerate();
        let mut next = || -> Result<(usize, String)> {
            match lines.next() {
                Some((n, Ok(l))) => Ok((n + 1, l)),
                Some((_, Err(e))) => Err(e.into()),
                None => Err(Error::PolicyFormat("unexpected end of file".into())),
            }
        };
        let fail = |n: usize, msg: &str| Error::PolicyFormat(format!("line {n}: {msg}"));
        let (n, head) = next()?;
        if head.trim() != format!("{MAGIC} {VERSION}") {
            return Err(fail(n, "unsupported header"));
        }
        let mut field = |key: &str| -> Result<String> {
            let (n, l) = next()?;
            let mut it = l.splitn(2, ' ');
            if it.next() != Some(key) {
                return Err(fail(n, &format!("expected '{key}'")));
            }
            Ok(it.next().unwrap_or("").trim().to_string())
        };
        let num = |s: String| -> Result<f64> { s.parse().map_err(|_| Error::PolicyFormat(format!("bad number '{s}'"))) };
        let fingerprint = field("fingerprint")?;
        let wstar = num(field("wstar")?)?;
        let kappa: Kappa = field("kappa")?.parse().map_err(|_| Error::PolicyFormat("bad kappa".into()))?;
        let alpha = num(field("alpha")?)?;
        let q_min = num(field("q_min")?)?;
        let q_max = num(field("q_max")?)?;
        let dates: usize = field("dates")?.parse().map_err(|_| Error::PolicyFormat("bad date count".into()))?;
        let mut slices = Vec::with_capacity(dates);
        for i in 0..dates {
            let (n, l) = next()?;
            let parts: Vec<&str> = l.split_whitespace().collect();
            if parts.len() != 3 || parts[0] != "slice" || parts[1] != i.to_string() {
                return Err(fail(n, &format!("expected 'slice {i} <count>'")));
            }
            let count: usize = parts[2].parse().map_err(|_| fail(n, "bad knot count"))?;
            if count < 2 {
                return Err(fail(n, "a slice needs at least two knots"));
            }
            let mut s = PolicySlice { knots: Vec::with_capacity(count), q: Vec::with_capacity(count), p: Vec::with_capacity(count) };
            for _ in 0..count {
                let (n, l) = next()?;
                let v: Vec<f64> = l
                    .split_whitespace()
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| fail(n, "bad number"))?;
                if v.len() != 3 {
                    return Err(fail(n, "expected 'knot q p'"));
                }
                if s.knots.last().is_some_and(|&k| !(v[0] > k)) || !(v[0] > 0.0) {
                    return Err(fail(n, "knots must be positive and increasing"));
                }
                s.knots.push(v[0]);
                s.q.push(v[1]);
                s.p.push(v[2]);
            }
            slices.push(s);
        }
        Ok(Self { slices, wstar, kappa, alpha, q_min, q_max, fingerprint })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(std::fs::File::open(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ControlPolicy {
        let knots = vec![0.01, 1.0, 100.0, 10000.0];
        ControlPolicy {
            slices: vec![
                PolicySlice { knots: knots.clone(), q: vec![40.0, 40.0, 50.0, 70.0], p: vec![1.0, 1.0, 0.3, 0.1] },
                PolicySlice { knots, q: vec![40.0, 40.0, 40.0, 1.0 / 3.0], p: vec![0.0, 0.123456789012345, 0.5, 0.0] },
            ],
            wstar: 585.97,
            kappa: Kappa::Finite(0.185),
            alpha: 0.05,
            q_min: 40.0,
            q_max: 80.0,
            fingerprint: "abcdef0123456789".into(),
        }
    }

    #[test]
    fn round_trip_is_lossless() {
        let p = sample();
        let mut buf = Vec::new();
        p.write_to(&mut buf).unwrap();
        let back = ControlPolicy::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, p);
        let inf = ControlPolicy { kappa: Kappa::Infinite, ..p };
        let mut buf = Vec::new();
        inf.write_to(&mut buf).unwrap();
        assert_eq!(ControlPolicy::read_from(buf.as_slice()).unwrap(), inf);
    }

    #[test]
    fn rejects_garbage() {
        assert!(ControlPolicy::read_from("nonsense\n".as_bytes()).is_err());
        let mut buf = Vec::new();
        sample().write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap().replace("100 50 0.3", "100 fifty 0.3");
        assert!(ControlPolicy::read_from(text.as_bytes()).is_err());
    }

    #[test]
    fn readback_is_log_linear_and_admissible() {
        let p = sample();
        // halfway between 1 and 100 in log space
        assert!((p.withdrawal(0, 1000.0) - 60.0).abs() < 1e-12);
        assert!((p.stock_fraction(0, 10.0) - 0.65).abs() < 1e-12);
        // clamped to the admissible set
        assert_eq!(p.withdrawal(0, 10.0), 40.0);
        assert_eq!(p.withdrawal(1, 5.0), 40.0);
        assert_eq!(p.withdrawal(1, 1e6), 40.0);
        assert_eq!(p.withdrawal(2, 1e6), 0.0);
        assert_eq!(p.stock_fraction(0, -3.0), 0.0);
        assert_eq!(p.stock_fraction(0, 1e-9), 1.0);
    }
}

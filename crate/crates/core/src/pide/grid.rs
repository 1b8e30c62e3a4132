use crate::error::{Error, Result};

/// Equally spaced nodes in `log(x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogAxis {
    pub n: usize,
    pub log_min: f64,
    pub step: f64,
}

impl LogAxis {
    pub fn new(min: f64, max: f64, n: usize) -> Self {
        assert!(min > 0.0 && max > min && n >= 2, "bad axis [{min}, {max}] x {n}");
        let log_min = min.ln();
        Self { n, log_min, step: (max.ln() - log_min) / (n - 1) as f64 }
    }

    /// Axis starting at `min` with a prescribed spacing, long enough to reach `max`.
    pub fn with_step(min: f64, max: f64, step: f64) -> Self {
        let n = (((max.ln() - min.ln()) / step).ceil() as usize + 1).max(2);
        Self { n, log_min: min.ln(), step }
    }

    #[inline]
    pub fn log_node(&self, i: isize) -> f64 {
        self.log_min + i as f64 * self.step
    }

    #[inline]
    pub fn node(&self, i: isize) -> f64 {
        self.log_node(i).exp()
    }

    pub fn min(&self) -> f64 {
        self.log_min.exp()
    }

    pub fn max(&self) -> f64 {
        self.node(self.n as isize - 1)
    }

    /// Cell index and weight for a log coordinate, clamped to the axis.
    #[inline]
    pub fn locate(&self, log_x: f64) -> (usize, f64) {
        let r = (log_x - self.log_min) / self.step;
        if !(r > 0.0) {
            return (0, 0.0);
        }
        let last = (self.n - 1) as f64;
        if r >= last {
            return (self.n - 2, 1.0);
        }
        let i = r as usize;
        (i, r - i as f64)
    }

    #[inline]
    pub fn interp(&self, values: &[f64], log_x: f64) -> f64 {
        let (i, t) = self.locate(log_x);
        values[i] + t * (values[i + 1] - values[i])
    }
}

/// Localized computational domain: the solvent `(s, b)` grid and the debt grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverGrid {
    pub n_s: usize,
    pub n_b: usize,
    pub n_d: usize,
    pub s_min: f64,
    pub s_max: f64,
    pub b_min: f64,
    pub b_max: f64,
    pub d_min: f64,
    pub d_max: f64,
}

impl SolverGrid {
    /// `n x n` solvent grid and `n` debt nodes on the default bounds `[1e-2, 1e5]`.
    pub fn square(n: usize) -> Self {
        Self {
            n_s: n,
            n_b: n,
            n_d: n,
            s_min: 1e-2,
            s_max: 1e5,
            b_min: 1e-2,
            b_max: 1e5,
            d_min: 1e-2,
            d_max: 1e5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, n) in [("n_s", self.n_s), ("n_b", self.n_b), ("n_d", self.n_d)] {
            if n < 4 || !n.is_power_of_two() {
                return Err(Error::InvalidGrid(format!("{name} = {n} must be a power of two >= 4")));
            }
        }
        for (name, lo, hi) in [
            ("s", self.s_min, self.s_max),
            ("b", self.b_min, self.b_max),
            ("debt", self.d_min, self.d_max),
        ] {
            if !(lo > 0.0 && hi > lo && hi.is_finite()) {
                return Err(Error::InvalidGrid(format!("{name} bounds [{lo}, {hi}] must be positive and increasing")));
            }
        }
        Ok(())
    }

    pub fn s_axis(&self) -> LogAxis {
        LogAxis::new(self.s_min, self.s_max, self.n_s)
    }

    pub fn b_axis(&self) -> LogAxis {
        LogAxis::new(self.b_min, self.b_max, self.n_b)
    }

    pub fn d_axis(&self) -> LogAxis {
        LogAxis::new(self.d_min, self.d_max, self.n_d)
    }
}

/// Signed wealth nodes: log-spaced magnitudes on both sides of zero.
///
/// Interpolation is linear in `log|w|` away from zero and linear in `w` across
/// the gap between the innermost negative and positive nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct WealthGrid {
    pub neg: LogAxis,
    pub pos: LogAxis,
}

impl WealthGrid {
    pub fn new(neg: LogAxis, pos: LogAxis) -> Self {
        Self { neg, pos }
    }

    pub fn len(&self) -> usize {
        self.neg.n + self.pos.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn node(&self, k: usize) -> f64 {
        if k < self.neg.n {
            -self.neg.node((self.neg.n - 1 - k) as isize)
        } else {
            self.pos.node((k - self.neg.n) as isize)
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.node(k)).collect()
    }

    /// Indices of the first positive node.
    pub fn first_positive(&self) -> usize {
        self.neg.n
    }

    /// Bracketing indices `(lo, hi)` and weight on `hi`.
    #[inline]
    pub fn locate(&self, w: f64) -> (usize, usize, f64) {
        let nn = self.neg.n;
        if w >= self.pos.min() {
            let (i, t) = self.pos.locate(w.ln());
            (nn + i, nn + i + 1, t)
        } else if w <= -self.neg.min() {
            let (i, t) = self.neg.locate((-w).ln());
            // magnitude node i sits at index nn - 1 - i
            (nn - 2 - i, nn - 1 - i, 1.0 - t)
        } else {
            let lo = -self.neg.min();
            let hi = self.pos.min();
            (nn - 1, nn, (w - lo) / (hi - lo))
        }
    }

    #[inline]
    pub fn interp(&self, values: &[f64], w: f64) -> f64 {
        let (lo, hi, t) = self.locate(w);
        values[lo] + t * (values[hi] - values[lo])
    }
}

//! Fourier multipliers of the hat-projected transition kernel.
//!
//! On a uniform log grid with spacing `h` the one-step operator is
//! `out_j = sum_k w_k v_{j+k}` with `w_k = E[hat(Z/h - k)]`. Its discrete symbol at
//! `omega_m = 2 pi m / (N h)` is the aliased sum
//! `sum_a phi(omega_m + 2 pi a / h) sinc^2((omega_m + 2 pi a / h) h / 2)`,
//! which is 1 at `m = 0` for any law, so constants are preserved exactly and
//! the weights are nonnegative up to truncation of the alias sum.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use super::fft::Convolver1d;

/// Alias terms used for a dimension with no diffusion and jumps.
const JUMP_ONLY_ALIASES: usize = 4096;

#[inline]
fn sinc2(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0
    } else {
        let s = x.sin() / x;
        s * s
    }
}

/// Alias half-width for a dimension with spacing `h` and Gaussian scale `sd`.
pub(crate) fn alias_count(sd: f64, h: f64) -> usize {
    if !(sd > 0.0) {
        return JUMP_ONLY_ALIASES;
    }
    // exp(-sd^2 w^2 / 2) < 1e-18 once |w| >= (2J + 1) pi / h
    let w = (2.0 * 41.5f64).sqrt() / sd;
    let j = ((w * h / PI - 1.0) / 2.0).ceil().max(0.0) as usize;
    j.min(JUMP_ONLY_ALIASES)
}

/// Signed frequency index for position `j` of a length-`n` transform.
#[inline]
pub(crate) fn signed_index(j: usize, n: usize) -> f64 {
    if j <= n / 2 {
        j as f64
    } else {
        j as f64 - n as f64
    }
}

/// Description of one dimension of the log-increment law.
#[derive(Debug, Clone, Copy)]
pub struct Dim {
    pub h: f64,
    pub len: usize,
    /// Diffusive standard deviation over the step.
    pub sd: f64,
    /// Drift of the log increment over the step.
    pub drift: f64,
    /// Expected number of jumps over the step.
    pub jump_rate: f64,
}

impl Dim {
    /// No jumps and a diffusion too narrow to register at the grid's Nyquist frequency.
    fn is_shift(&self) -> bool {
        self.jump_rate == 0.0 && self.sd * PI / self.h < 1e-7
    }

    fn aliases(&self) -> usize {
        if self.is_shift() {
            0
        } else {
            alias_count(self.sd, self.h)
        }
    }

    fn omega(&self, m: f64) -> f64 {
        2.0 * PI * m / (self.len as f64 * self.h)
    }

    /// Exact symbol of linear interpolation at a fixed shift.
    fn pure_shift(&self, omega: f64) -> Complex64 {
        let r = self.drift / self.h;
        let k0 = r.floor();
        let f = r - k0;
        let a = Complex64::from_polar(1.0, omega * k0 * self.h);
        let b = Complex64::from_polar(1.0, omega * (k0 + 1.0) * self.h);
        a * (1.0 - f) + b * f
    }
}

/// 1-D symbol for `k in 0..=len/2`; `log_cf(w)` returns `dt * Phi(w)`.
pub fn symbol_1d(dim: Dim, log_cf: &dyn Fn(f64) -> Complex64) -> Vec<Complex64> {
    let half = dim.len / 2 + 1;
    let is_shift = dim.is_shift();
    let ja = dim.aliases() as i64;
    (0..half)
        .map(|k| {
            let w0 = dim.omega(k as f64);
            if is_shift {
                return dim.pure_shift(w0);
            }
            let mut acc = Complex64::new(0.0, 0.0);
            for a in -ja..=ja {
                let w = w0 + 2.0 * PI * a as f64 / dim.h;
                let g = sinc2(w * dim.h / 2.0);
                if g != 0.0 {
                    acc += log_cf(w).exp() * g;
                }
            }
            acc
        })
        .collect()
}

/// 2-D symbol in the column-major half-spectrum layout used by `Convolver2d`.
///
/// `cols` is the real-transformed dimension. When `separable` is set the joint
/// exponent must be the sum of the marginal ones.
pub fn symbol_2d(
    cols: Dim,
    rows: Dim,
    log_cf: &(dyn Fn(f64, f64) -> Complex64 + Sync),
    separable: bool,
) -> Vec<Complex64> {
    use rayon::prelude::*;
    let half = cols.len / 2 + 1;
    if separable {
        let sc = symbol_1d(cols, &|w| log_cf(w, 0.0));
        let full_rows = Dim { len: rows.len, ..rows };
        let sr: Vec<Complex64> = {
            // full length, not just the half spectrum
            let ja = full_rows.aliases() as i64;
            let is_shift = rows.is_shift();
            (0..rows.len)
                .map(|j| {
                    let w0 = rows.omega(signed_index(j, rows.len));
                    if is_shift {
                        return rows.pure_shift(w0);
                    }
                    let mut acc = Complex64::new(0.0, 0.0);
                    for a in -ja..=ja {
                        let w = w0 + 2.0 * PI * a as f64 / rows.h;
                        let g = sinc2(w * rows.h / 2.0);
                        if g != 0.0 {
                            acc += log_cf(0.0, w).exp() * g;
                        }
                    }
                    acc
                })
                .collect()
        };
        let mut out = vec![Complex64::new(0.0, 0.0); half * rows.len];
        for k in 0..half {
            for j in 0..rows.len {
                out[k * rows.len + j] = sc[k] * sr[j];
            }
        }
        return out;
    }
    let (jc, jr) = (cols.aliases() as i64, rows.aliases() as i64);
    let mut out = vec![Complex64::new(0.0, 0.0); half * rows.len];
    out.par_chunks_mut(rows.len).enumerate().for_each(|(k, col)| {
        let wc0 = cols.omega(k as f64);
        for (j, slot) in col.iter_mut().enumerate() {
            let wr0 = rows.omega(signed_index(j, rows.len));
            let mut acc = Complex64::new(0.0, 0.0);
            for a in -jc..=jc {
                let wc = wc0 + 2.0 * PI * a as f64 / cols.h;
                let gc = sinc2(wc * cols.h / 2.0);
                if gc == 0.0 {
                    continue;
                }
                for c in -jr..=jr {
                    let wr = wr0 + 2.0 * PI * c as f64 / rows.h;
                    let gr = sinc2(wr * rows.h / 2.0);
                    if gr != 0.0 {
                        acc += log_cf(wc, wr).exp() * (gc * gr);
                    }
                }
            }
            *slot = acc;
        }
    });
    out
}

/// Smallest 2,3,5-smooth integer `>= n`.
pub fn fast_len(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

/// Offsets `(left, right)` in nodes beyond which the kernel carries less than
/// `tol` mass on each side, measured on a trial grid spanning `reach` log units.
pub fn marginal_pads(dim: Dim, reach: f64, tol: f64, log_cf: &dyn Fn(f64) -> Complex64) -> (usize, usize) {
    let span = (reach / dim.h).ceil() as usize + 4;
    let len = fast_len(2 * span + 8);
    let trial = Dim { len, ..dim };
    let mut data = vec![0.0; len];
    data[0] = 1.0;
    Convolver1d::new(len, symbol_1d(trial, log_cf)).apply(&mut data);
    // data[j] is the weight at offset k = -j (mod len)
    let weight = |k: isize| data[((-k).rem_euclid(len as isize)) as usize].abs();
    let half = (len / 2) as isize;
    let mut left = 0usize;
    let mut acc = 0.0;
    for k in (1..half).rev() {
        acc += weight(-k);
        if acc >= tol {
            left = k as usize;
            break;
        }
    }
    let mut right = 0usize;
    acc = 0.0;
    for k in (1..half).rev() {
        acc += weight(k);
        if acc >= tol {
            right = k as usize;
            break;
        }
    }
    (left, right)
}

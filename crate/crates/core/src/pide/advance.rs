//! Conditional expectation over one rebalancing interval with no control acting.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use super::fft::{Convolver1d, Convolver2d};
use super::grid::{LogAxis, SolverGrid};
use super::kernel::{fast_len, marginal_pads, symbol_1d, symbol_2d, Dim};
use crate::error::{Error, Result};
use crate::market_model::{characteristic_exponent, debt_characteristic_exponent, ModelParams};

/// Per-side kernel mass allowed outside the padded region, per dimension.
const PAD_TOL: f64 = 1e-12;

/// Values at one date on the solvent grid (row-major in `b`) and the debt grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueSurface {
    pub s_axis: LogAxis,
    pub b_axis: LogAxis,
    pub d_axis: LogAxis,
    /// `solvent[ib * n_s + is]`
    pub solvent: Vec<f64>,
    pub debt: Vec<f64>,
    pub time_index: usize,
    pub wstar: f64,
}

impl ValueSurface {
    pub fn from_fn(grid: &SolverGrid, time_index: usize, wstar: f64, solvent: impl Fn(f64, f64) -> f64, debt: impl Fn(f64) -> f64) -> Self {
        let (sa, ba, da) = (grid.s_axis(), grid.b_axis(), grid.d_axis());
        let mut v = Vec::with_capacity(sa.n * ba.n);
        for ib in 0..ba.n {
            let b = ba.node(ib as isize);
            for is in 0..sa.n {
                v.push(solvent(sa.node(is as isize), b));
            }
        }
        let d = (0..da.n).map(|k| debt(da.node(k as isize))).collect();
        Self { s_axis: sa, b_axis: ba, d_axis: da, solvent: v, debt: d, time_index, wstar }
    }

    #[inline]
    pub fn at(&self, is: usize, ib: usize) -> f64 {
        self.solvent[ib * self.s_axis.n + is]
    }

    /// Bilinear in `(log s, log b)`, clamped to the grid.
    #[inline]
    pub fn lookup_log(&self, log_s: f64, log_b: f64) -> f64 {
        let (i, t) = self.s_axis.locate(log_s);
        let (j, u) = self.b_axis.locate(log_b);
        let n = self.s_axis.n;
        let r0 = &self.solvent[j * n + i..j * n + i + 2];
        let r1 = &self.solvent[(j + 1) * n + i..(j + 1) * n + i + 2];
        let a = r0[0] + t * (r0[1] - r0[0]);
        let b = r1[0] + t * (r1[1] - r1[0]);
        a + u * (b - a)
    }

    #[inline]
    pub fn lookup(&self, s: f64, b: f64) -> f64 {
        self.lookup_log(s.ln(), b.ln())
    }

    /// Value of an insolvent position holding `debt > 0`, linear in `log debt`.
    #[inline]
    pub fn lookup_debt(&self, debt: f64) -> f64 {
        self.d_axis.interp(&self.debt, debt.ln())
    }
}

/// Kernel quality measured on a unit impulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelDiagnostics {
    /// Kernel mass that can wrap around onto some interior node.
    pub wrap_mass: f64,
    /// Sum of negative kernel weights (monotonicity defect).
    pub negative_mass: f64,
    pub debt_wrap_mass: f64,
    pub debt_negative_mass: f64,
    pub pad_s: (usize, usize),
    pub pad_b: (usize, usize),
    pub pad_d: (usize, usize),
    pub len_s: usize,
    pub len_b: usize,
    pub len_d: usize,
}

/// Precomputed convolution for one `(grid, params, dt)`.
pub struct Advancer {
    grid: SolverGrid,
    s_axis: LogAxis,
    b_axis: LogAxis,
    d_axis: LogAxis,
    ext_s: Vec<f64>,
    ext_b: Vec<f64>,
    ext_d: Vec<f64>,
    pad_s: usize,
    pad_b: usize,
    pad_d: usize,
    conv2: Convolver2d,
    conv1: Convolver1d,
    buf2: Vec<f64>,
    buf1: Vec<f64>,
    diagnostics: KernelDiagnostics,
}

fn reach(sd: f64, drift: f64, jump_rate: f64, eta_min: f64) -> f64 {
    let jumps = if jump_rate > 0.0 { 45.0 / eta_min * (1.0 + jump_rate) } else { 0.0 };
    drift.abs() + 10.0 * sd + jumps + 1e-3
}

impl Advancer {
    pub fn new(grid: &SolverGrid, params: &ModelParams, dt: f64) -> Result<Self> {
        grid.validate()?;
        params.validate()?;
        if !(dt > 0.0) {
            return Err(Error::InvalidScenario(format!("interval length {dt} must be positive")));
        }
        let (sa, ba, da) = (grid.s_axis(), grid.b_axis(), grid.d_axis());
        let p = *params;
        let zero = Complex64::new(0.0, 0.0);
        let cf2 = move |ws: f64, wb: f64| characteristic_exponent(&p, ws.into(), wb.into()) * dt;
        let cf_s = move |w: f64| characteristic_exponent(&p, w.into(), zero) * dt;
        let cf_b = move |w: f64| characteristic_exponent(&p, zero, w.into()) * dt;
        let cf_d = move |w: f64| debt_characteristic_exponent(&p, w.into()) * dt;

        let sd_s = p.sigma_s * dt.sqrt();
        let sd_b = p.sigma_b * dt.sqrt();
        let mut ds = Dim { h: sa.step, len: 0, sd: sd_s, drift: p.log_drift_s() * dt, jump_rate: p.lambda_s * dt };
        let mut db = Dim { h: ba.step, len: 0, sd: sd_b, drift: p.log_drift_b() * dt, jump_rate: p.lambda_b * dt };
        let mut dd = Dim { h: da.step, len: 0, sd: sd_b, drift: (p.log_drift_b() + p.mu_c_b) * dt, jump_rate: p.lambda_b * dt };
        let eta_s = p.eta1_s.min(p.eta2_s);
        let eta_b = p.eta1_b.min(p.eta2_b);

        let pad_s = marginal_pads(ds, reach(sd_s, ds.drift, ds.jump_rate, eta_s), PAD_TOL, &cf_s);
        let pad_b = marginal_pads(db, reach(sd_b, db.drift, db.jump_rate, eta_b), PAD_TOL, &cf_b);
        let pad_d = marginal_pads(dd, reach(sd_b, dd.drift, dd.jump_rate, eta_b), PAD_TOL, &cf_d);
        ds.len = fast_len(sa.n + pad_s.0 + pad_s.1 + 1);
        db.len = fast_len(ba.n + pad_b.0 + pad_b.1 + 1);
        dd.len = fast_len(da.n + pad_d.0 + pad_d.1 + 1);

        let separable = p.rho_sb == 0.0 || p.sigma_s == 0.0 || p.sigma_b == 0.0;
        let conv2 = Convolver2d::new(db.len, ds.len, symbol_2d(ds, db, &cf2, separable));
        let conv1 = Convolver1d::new(dd.len, symbol_1d(dd, &cf_d));

        let ext = |axis: &LogAxis, lo: usize, len: usize| -> Vec<f64> {
            (0..len).map(|c| axis.node(c as isize - lo as isize)).collect()
        };
        let mut adv = Self {
            grid: *grid,
            s_axis: sa,
            b_axis: ba,
            d_axis: da,
            ext_s: ext(&sa, pad_s.0, ds.len),
            ext_b: ext(&ba, pad_b.0, db.len),
            ext_d: ext(&da, pad_d.0, dd.len),
            pad_s: pad_s.0,
            pad_b: pad_b.0,
            pad_d: pad_d.0,
            conv2,
            conv1,
            buf2: vec![0.0; ds.len * db.len],
            buf1: vec![0.0; dd.len],
            diagnostics: KernelDiagnostics {
                wrap_mass: 0.0,
                negative_mass: 0.0,
                debt_wrap_mass: 0.0,
                debt_negative_mass: 0.0,
                pad_s,
                pad_b,
                pad_d,
                len_s: ds.len,
                len_b: db.len,
                len_d: dd.len,
            },
        };
        adv.measure_kernel();
        Ok(adv)
    }

    pub fn grid(&self) -> &SolverGrid {
        &self.grid
    }

    pub fn diagnostics(&self) -> KernelDiagnostics {
        self.diagnostics
    }

    /// Extended-grid coordinates: stock nodes, bond nodes, debt nodes.
    pub fn extended_nodes(&self) -> (&[f64], &[f64], &[f64]) {
        (&self.ext_s, &self.ext_b, &self.ext_d)
    }

    fn measure_kernel(&mut self) {
        let (cols, rows) = (self.ext_s.len(), self.ext_b.len());
        let (ps, pb) = (self.diagnostics.pad_s, self.diagnostics.pad_b);
        // impulse at the origin: output j holds the weight at offset -j
        self.buf2.iter_mut().for_each(|v| *v = 0.0);
        self.buf2[0] = 1.0;
        self.conv2.apply(&mut self.buf2);
        let inside = |j: usize, len: usize, pad: (usize, usize)| j <= pad.0 || j >= len - pad.1;
        let (mut wrap, mut neg) = (0.0, 0.0);
        for r in 0..rows {
            for c in 0..cols {
                let w = self.buf2[r * cols + c];
                if w < 0.0 {
                    neg += w;
                }
                if !(inside(c, cols, ps) && inside(r, rows, pb)) {
                    wrap += w.abs();
                }
            }
        }
        let len = self.ext_d.len();
        let pd = self.diagnostics.pad_d;
        self.buf1.iter_mut().for_each(|v| *v = 0.0);
        self.buf1[0] = 1.0;
        self.conv1.apply(&mut self.buf1);
        let (mut dwrap, mut dneg) = (0.0, 0.0);
        for (j, &w) in self.buf1.iter().enumerate() {
            if w < 0.0 {
                dneg += w;
            }
            if !inside(j, len, pd) {
                dwrap += w.abs();
            }
        }
        self.diagnostics.wrap_mass = wrap;
        self.diagnostics.negative_mass = neg;
        self.diagnostics.debt_wrap_mass = dwrap;
        self.diagnostics.debt_negative_mass = dneg;
    }

    /// `E[f(s e^X, b e^Y)]` at every interior solvent node, where `f` is evaluated
    /// on the padded grid. Output is row-major in `b`.
    pub fn advance_solvent(&mut self, f: impl Fn(f64, f64) -> f64 + Sync) -> Vec<f64> {
        let cols = self.ext_s.len();
        let ext_s = &self.ext_s;
        self.buf2.par_chunks_mut(cols).zip(self.ext_b.par_iter()).for_each(|(row, &b)| {
            for (v, &s) in row.iter_mut().zip(ext_s) {
                *v = f(s, b);
            }
        });
        self.conv2.apply(&mut self.buf2);
        let (ns, nb) = (self.s_axis.n, self.b_axis.n);
        let mut out = Vec::with_capacity(ns * nb);
        for ib in 0..nb {
            let start = (ib + self.pad_b) * cols + self.pad_s;
            out.extend_from_slice(&self.buf2[start..start + ns]);
        }
        out
    }

    /// `E[g(d e^{Y + mu_c})]` at every interior debt node.
    pub fn advance_debt(&mut self, g: impl Fn(f64) -> f64) -> Vec<f64> {
        for (v, &d) in self.buf1.iter_mut().zip(&self.ext_d) {
            *v = g(d);
        }
        self.conv1.apply(&mut self.buf1);
        self.buf1[self.pad_d..self.pad_d + self.d_axis.n].to_vec()
    }
}

/// Advance a surface from `t_i^+` back to `t_{i-1}^+`, extending it beyond the
/// grid by constants.
pub fn advance_interval(surface: &ValueSurface, advancer: &mut Advancer) -> ValueSurface {
    let solvent = advancer.advance_solvent(|s, b| surface.lookup(s, b));
    let debt = advancer.advance_debt(|d| surface.lookup_debt(d));
    ValueSurface {
        solvent,
        debt,
        time_index: surface.time_index.saturating_sub(1),
        ..surface.clone()
    }
}

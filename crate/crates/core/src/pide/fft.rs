//! Periodic convolution with a precomputed Fourier multiplier.
//!
//! Real data of shape `rows x cols` (row-major, `cols` contiguous) is transformed
//! with a real FFT along rows and a complex FFT along columns. The multiplier is
//! stored column-major over the half spectrum: `mult[k * rows + j]` for row
//! frequency `k in 0..=cols/2` and column frequency `j in 0..rows`.

use std::sync::Arc;

use rayon::prelude::*;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

pub struct Convolver2d {
    rows: usize,
    cols: usize,
    half: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    mult: Vec<Complex64>,
    by_row: Vec<Complex64>,
    by_col: Vec<Complex64>,
}

impl Convolver2d {
    pub fn new(rows: usize, cols: usize, mult: Vec<Complex64>) -> Self {
        let half = cols / 2 + 1;
        assert_eq!(mult.len(), half * rows);
        let mut rp = RealFftPlanner::<f64>::new();
        let mut cp = FftPlanner::<f64>::new();
        Self {
            rows,
            cols,
            half,
            r2c: rp.plan_fft_forward(cols),
            c2r: rp.plan_fft_inverse(cols),
            fwd: cp.plan_fft_forward(rows),
            inv: cp.plan_fft_inverse(rows),
            mult,
            by_row: vec![ZERO; half * rows],
            by_col: vec![ZERO; half * rows],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Replace `data` by its periodic convolution with the kernel.
    pub fn apply(&mut self, data: &mut [f64]) {
        let (rows, cols, half) = (self.rows, self.cols, self.half);
        assert_eq!(data.len(), rows * cols);
        let r2c = &self.r2c;
        data.par_chunks_mut(cols).zip(self.by_row.par_chunks_mut(half)).for_each_init(
            || r2c.make_scratch_vec(),
            |scratch, (input, out)| {
                r2c.process_with_scratch(input, out, scratch).expect("r2c lengths");
            },
        );
        transpose(&self.by_row, &mut self.by_col, rows, half);

        let (fwd, inv, mult) = (&self.fwd, &self.inv, &self.mult);
        self.by_col.par_chunks_mut(rows).zip(mult.par_chunks(rows)).for_each_init(
            || vec![ZERO; fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len())],
            |scratch, (col, m)| {
                fwd.process_with_scratch(col, scratch);
                for (c, f) in col.iter_mut().zip(m) {
                    *c *= f;
                }
                inv.process_with_scratch(col, scratch);
            },
        );
        transpose(&self.by_col, &mut self.by_row, half, rows);

        let c2r = &self.c2r;
        let scale = 1.0 / (rows * cols) as f64;
        let even = cols % 2 == 0;
        data.par_chunks_mut(cols).zip(self.by_row.par_chunks_mut(half)).for_each_init(
            || c2r.make_scratch_vec(),
            |scratch, (out, spec)| {
                spec[0].im = 0.0;
                if even {
                    spec[half - 1].im = 0.0;
                }
                c2r.process_with_scratch(spec, out, scratch).expect("c2r lengths");
                for v in out.iter_mut() {
                    *v *= scale;
                }
            },
        );
    }
}

/// `dst[c * rows + r] = src[r * cols + c]`, blocked for cache reuse.
fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    const B: usize = 32;
    for r0 in (0..rows).step_by(B) {
        for c0 in (0..cols).step_by(B) {
            for r in r0..(r0 + B).min(rows) {
                for c in c0..(c0 + B).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

pub struct Convolver1d {
    len: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    mult: Vec<Complex64>,
    spec: Vec<Complex64>,
}

impl Convolver1d {
    pub fn new(len: usize, mult: Vec<Complex64>) -> Self {
        assert_eq!(mult.len(), len / 2 + 1);
        let mut rp = RealFftPlanner::<f64>::new();
        let r2c = rp.plan_fft_forward(len);
        Self { len, spec: r2c.make_output_vec(), r2c, c2r: rp.plan_fft_inverse(len), mult }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn apply(&mut self, data: &mut [f64]) {
        assert_eq!(data.len(), self.len);
        self.r2c.process(data, &mut self.spec).expect("r2c lengths");
        for (c, f) in self.spec.iter_mut().zip(&self.mult) {
            *c *= f;
        }
        let last = self.spec.len() - 1;
        self.spec[0].im = 0.0;
        if self.len % 2 == 0 {
            self.spec[last].im = 0.0;
        }
        self.c2r.process(&mut self.spec, data).expect("c2r lengths");
        let scale = 1.0 / self.len as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }
}

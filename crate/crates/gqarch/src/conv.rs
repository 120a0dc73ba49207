//! FFT-backed causal linear convolution for the hyperbolic lag sums.
//!
//! The likelihood needs y[i] = sum_{j=1..i} w[j] x[i-j] for every i, a
//! linear convolution of the weight kernel with the series. Both inputs
//! are zero-padded to the next power of two >= 2n, one O(n log n) pass
//! instead of the O(n^2) direct sum. The series spectrum is computed once
//! and shared across likelihood evaluations that only move the kernel.

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

pub(crate) struct Convolver {
    len: usize,
    size: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Convolver {
    /// Prepares plans for convolving two real sequences of length `len`.
    pub fn new(len: usize) -> Self {
        let size = (2 * len.max(1)).next_power_of_two();
        let mut planner = FftPlanner::new();
        Convolver {
            len,
            size,
            fwd: planner.plan_fft_forward(size),
            inv: planner.plan_fft_inverse(size),
        }
    }

    /// Forward transform of a zero-padded real sequence.
    pub fn spectrum(&self, x: &[f64]) -> Vec<Complex<f64>> {
        debug_assert!(x.len() <= self.size);
        let mut buf = vec![Complex::new(0.0, 0.0); self.size];
        for (b, &v) in buf.iter_mut().zip(x) {
            b.re = v;
        }
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fwd.get_inplace_scratch_len()];
        self.fwd.process_with_scratch(&mut buf, &mut scratch);
        buf
    }

    /// First `len` entries of the linear convolution given both spectra.
    pub fn convolve(&self, a: &[Complex<f64>], b: &[Complex<f64>]) -> Vec<f64> {
        debug_assert_eq!(a.len(), self.size);
        debug_assert_eq!(b.len(), self.size);
        let mut buf: Vec<Complex<f64>> = a.iter().zip(b).map(|(x, y)| x * y).collect();
        let mut scratch = vec![Complex::new(0.0, 0.0); self.inv.get_inplace_scratch_len()];
        self.inv.process_with_scratch(&mut buf, &mut scratch);
        let scale = 1.0 / self.size as f64;
        buf[..self.len].iter().map(|v| v.re * scale).collect()
    }
}

use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::C64;

/// Unnormalised square 2D FFT, row-major storage.
pub(crate) struct Fft2 {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    scratch: Vec<C64>,
}

impl Fft2 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let len = fwd
            .get_inplace_scratch_len()
            .max(inv.get_inplace_scratch_len());
        Self {
            n,
            fwd,
            inv,
            scratch: vec![C64::new(0.0, 0.0); len],
        }
    }

    pub fn forward(&mut self, data: &mut [C64]) {
        let fft = self.fwd.clone();
        self.run(&*fft, data);
    }

    pub fn inverse(&mut self, data: &mut [C64]) {
        let fft = self.inv.clone();
        self.run(&*fft, data);
    }

    fn run(&mut self, fft: &dyn Fft<f64>, data: &mut [C64]) {
        assert_eq!(data.len(), self.n * self.n);
        fft.process_with_scratch(data, &mut self.scratch);
        transpose(data, self.n);
        fft.process_with_scratch(data, &mut self.scratch);
        transpose(data, self.n);
    }
}

fn transpose(data: &mut [C64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            data.swap(i * n + j, j * n + i);
        }
    }
}

/// 1D FFT helper of fixed length.
pub(crate) struct Fft1 {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Fft1 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }
    }

    pub fn forward(&self, data: &mut [C64]) {
        self.fwd.process(data);
    }

    pub fn inverse(&self, data: &mut [C64]) {
        self.inv.process(data);
    }
}

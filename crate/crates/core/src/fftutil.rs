//! Shared FFT plans. rustfft transforms are unnormalized:
//! forward[k] = Σ_j v_j e^{−2πijk/n}, inverse[j] = Σ_k v_k e^{+2πijk/n}.

use num_complex::Complex64;
use rustfft::FftPlanner;
use std::cell::RefCell;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub fn fft_forward(buf: &mut [Complex64]) {
    let plan = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()));
    plan.process(buf);
}

pub fn fft_inverse(buf: &mut [Complex64]) {
    let plan = PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(buf.len()));
    plan.process(buf);
}

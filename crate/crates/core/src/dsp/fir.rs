//! Linear-phase FIR design by frequency sampling and zero-phase application.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::scalar::Scalar;

/// Default filter length (odd, so the centre tap gives an integer delay).
pub const DEFAULT_TAPS: usize = 255;

/// Designs a symmetric FIR of `taps` coefficients (forced odd) whose magnitude
/// response approximates `gain(f_hz)` (linear amplitude) at sample rate `fs`.
///
/// The desired response is sampled on a dense grid, transformed to a
/// zero-phase impulse response and truncated with a Hamming window. A constant
/// unit gain yields an exact unit impulse.
pub fn design<T: Scalar>(taps: usize, fs: f64, gain: impl Fn(f64) -> f64) -> Vec<T> {
    let taps = taps | 1;
    let half = taps / 2;
    let grid = (8 * taps).next_power_of_two().max(1024);
    let spectrum: Vec<Complex<f64>> = (0..grid)
        .map(|k| {
            let bin = if k <= grid / 2 { k } else { grid - k };
            Complex::new(gain(bin as f64 * fs / grid as f64), 0.0)
        })
        .collect();
    let mut buf = spectrum;
    FftPlanner::<f64>::new().plan_fft_inverse(grid).process(&mut buf);
    let scale = 1.0 / grid as f64;
    (0..taps)
        .map(|i| {
            let n = i as isize - half as isize;
            let idx = n.rem_euclid(grid as isize) as usize;
            let w = if half == 0 {
                1.0
            } else {
                0.54 + 0.46 * (std::f64::consts::PI * n as f64 / half as f64).cos()
            };
            T::of(buf[idx].re * scale * w)
        })
        .collect()
}

/// Convolves `x` with the centred, odd-length kernel `h` and returns a signal
/// of the same length, aligned with the input (no group delay).
pub fn filter_zero_phase<T: Scalar>(x: &[T], h: &[T]) -> Vec<T> {
    assert!(h.len() % 2 == 1, "zero-phase kernels have odd length");
    let half = h.len() / 2;
    if h.len() == 1 {
        return x.iter().map(|&v| v * h[0]).collect();
    }
    // direct form is faster for very short inputs or kernels
    if x.len() * h.len() <= 1 << 16 {
        let n = x.len() as isize;
        return (0..n)
            .map(|i| {
                let mut acc = T::zero();
                for (k, &c) in h.iter().enumerate() {
                    let j = i + half as isize - k as isize;
                    if j >= 0 && j < n {
                        acc += c * x[j as usize];
                    }
                }
                acc
            })
            .collect();
    }
    let full = x.len() + h.len() - 1;
    let size = full.next_power_of_two();
    let mut planner = FftPlanner::<T>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let mut a: Vec<Complex<T>> = x.iter().map(|&v| Complex::new(v, T::zero())).collect();
    a.resize(size, Complex::new(T::zero(), T::zero()));
    let mut b: Vec<Complex<T>> = h.iter().map(|&v| Complex::new(v, T::zero())).collect();
    b.resize(size, Complex::new(T::zero(), T::zero()));
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (p, q) in a.iter_mut().zip(&b) {
        *p *= *q;
    }
    inv.process(&mut a);
    let scale = T::one() / T::from_usize(size).unwrap();
    a[half..half + x.len()].iter().map(|c| c.re * scale).collect()
}

/// Magnitude response (linear) of a centred FIR at frequency `f_hz`.
pub fn response<T: Scalar>(h: &[T], fs: f64, f_hz: f64) -> f64 {
    let half = (h.len() / 2) as f64;
    let w = 2.0 * std::f64::consts::PI * f_hz / fs;
    let (mut re, mut im) = (0.0, 0.0);
    for (k, c) in h.iter().enumerate() {
        let n = k as f64 - half;
        re += c.to_f64_lossy() * (w * n).cos();
        im -= c.to_f64_lossy() * (w * n).sin();
    }
    (re * re + im * im).sqrt()
}

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::room::ism::Rir;
use crate::signal::Waveform;

// below this many multiply-adds the direct sum is faster than FFTs
const DIRECT_LIMIT: usize = 1 << 16;

/// Full linear convolution, `len(w) + len(rir) - 1` samples long.
pub fn convolve(w: &Waveform, rir: &Rir) -> Result<Waveform> {
    if w.sample_rate_hz() != rir.sample_rate_hz {
        return Err(Error::SampleRateMismatch(w.sample_rate_hz(), rir.sample_rate_hz));
    }
    Waveform::new(linear_convolution(w.samples(), &rir.taps), w.sample_rate_hz())
}

pub fn linear_convolution(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return Vec::new();
    }
    if x.len().saturating_mul(h.len()) <= DIRECT_LIMIT {
        direct(x, h)
    } else {
        via_fft(x, h)
    }
}

fn direct(x: &[f64], h: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len() + h.len() - 1];
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        for (o, &hj) in out[i..].iter_mut().zip(h) {
            *o += xi * hj;
        }
    }
    out
}

fn via_fft(x: &[f64], h: &[f64]) -> Vec<f64> {
    let out_len = x.len() + h.len() - 1;
    let n = out_len.next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let load = |v: &[f64]| {
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for (b, &s) in buf.iter_mut().zip(v) {
            b.re = s;
        }
        buf
    };
    let mut a = load(x);
    let mut b = load(h);
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (p, q) in a.iter_mut().zip(&b) {
        *p *= q;
    }
    inv.process(&mut a);
    let scale = 1.0 / n as f64;
    a.truncate(out_len);
    a.into_iter().map(|c| c.re * scale).collect()
}

//! Discrete convolution with trapezoid end weights.

use num_complex::Complex64;
use rustfft::FftPlanner;

const FFT_THRESHOLD: usize = 1024;

/// Raw causal convolution `c_k = Σ_{j≤k} f_j g_{k-j}`, truncated to `f.len()`.
pub fn causal_sum(f: &[f64], g: &[f64]) -> Vec<f64> {
    let n = f.len().min(g.len());
    if n > FFT_THRESHOLD {
        fft_causal(&f[..n], &g[..n])
    } else {
        let mut c = vec![0.0; n];
        for (k, ck) in c.iter_mut().enumerate() {
            let mut s = 0.0;
            for j in 0..=k {
                s += f[j] * g[k - j];
            }
            *ck = s;
        }
        c
    }
}

fn fft_causal(f: &[f64], g: &[f64]) -> Vec<f64> {
    let n = f.len();
    let m = (2 * n).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(m);
    let inv = planner.plan_fft_inverse(m);
    let mut a: Vec<Complex64> = f.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    a.resize(m, Complex64::new(0.0, 0.0));
    let mut b: Vec<Complex64> = g.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    b.resize(m, Complex64::new(0.0, 0.0));
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= y;
    }
    inv.process(&mut a);
    let scale = 1.0 / m as f64;
    a[..n].iter().map(|z| z.re * scale).collect()
}

/// Trapezoid rule for `∫_0^{x_k} f(s) g(x_k - s) ds` at every grid node.
pub fn trapezoid_convolve(f: &[f64], g: &[f64], h: f64) -> Vec<f64> {
    let mut c = causal_sum(f, g);
    for k in 0..c.len() {
        c[k] = if k == 0 { 0.0 } else { h * (c[k] - 0.5 * (f[0] * g[k] + f[k] * g[0])) };
    }
    c
}

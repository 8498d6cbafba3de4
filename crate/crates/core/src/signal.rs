//! Spectral summaries of sensor channels.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// One-sided amplitude spectrum of the mean-removed signal (`n/2 + 1` bins).
pub fn amplitude_spectrum(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v - mean, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf[..n / 2 + 1]
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let scale = if k == 0 || 2 * k == n { 1.0 } else { 2.0 };
            scale * c.norm() / n as f64
        })
        .collect()
}

/// Frequency of bin `k` in cycles per sample.
pub fn bin_frequency(k: usize, n: usize) -> f64 {
    k as f64 / n as f64
}

/// Bin with the largest amplitude, ignoring DC.
pub fn dominant_bin(x: &[f64]) -> Option<usize> {
    let s = amplitude_spectrum(x);
    (1..s.len()).max_by(|&a, &b| s[a].total_cmp(&s[b]))
}

/// Amplitude-weighted mean frequency in cycles per sample.
pub fn spectral_centroid(x: &[f64]) -> f64 {
    let s = amplitude_spectrum(x);
    let total: f64 = s.iter().skip(1).sum();
    if total == 0.0 {
        return 0.0;
    }
    s.iter()
        .enumerate()
        .skip(1)
        .map(|(k, a)| bin_frequency(k, x.len()) * a)
        .sum::<f64>()
        / total
}

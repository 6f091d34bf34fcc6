//! Small fitting helpers used by scans and sweeps.

use serde::Serialize;

#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual.
    pub rms: f64,
}

/// Ordinary least-squares line through `(x, y)`. Needs at least two distinct x.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let r = b - (slope * a + intercept);
            r * r
        })
        .sum();
    Some(LinearFit {
        slope,
        intercept,
        rms: (ss / nf).sqrt(),
    })
}

/// Slope of `ln y` against `ln x`; all values must be positive.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    linear_fit(&lx, &ly)
}

/// Root mean square of a sequence.
pub fn rms(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    (v.iter().map(|a| a * a).sum::<f64>() / v.len() as f64).sqrt()
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Magnitudes of the discrete Fourier coefficients `|c_m|` for `m = 0..n/2`
/// of a uniformly sampled real sequence.
pub fn dft_magnitudes(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    (0..=n / 2)
        .map(|m| {
            let (mut re, mut im) = (0.0, 0.0);
            for (j, a) in v.iter().enumerate() {
                let ang = -std::f64::consts::TAU * (m * j) as f64 / n as f64;
                re += a * ang.cos();
                im += a * ang.sin();
            }
            (re * re + im * im).sqrt() / n as f64
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line_is_recovered() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|a| 3.0 * a - 1.0).collect();
        let fit = linear_fit(&x, &y).unwrap();
        assert!((fit.slope - 3.0).abs() < 1e-14);
        assert!((fit.intercept + 1.0).abs() < 1e-14);
        assert!(fit.rms < 1e-14);
    }

    #[test]
    fn power_law_slope() {
        let x = [25.0, 50.0, 100.0, 200.0];
        let y: Vec<f64> = x.iter().map(|a: &f64| 7.0 * a.powf(-2.0)).collect();
        assert!((loglog_slope(&x, &y).unwrap().slope + 2.0).abs() < 1e-12);
        assert!(loglog_slope(&[1.0, 2.0], &[0.0, 1.0]).is_none());
    }

    #[test]
    fn dft_peaks_at_driving_frequency() {
        let v: Vec<f64> = (0..64)
            .map(|j| (std::f64::consts::TAU * 3.0 * j as f64 / 64.0).sin())
            .collect();
        let mags = dft_magnitudes(&v);
        let peak = (0..mags.len())
            .max_by(|a, b| mags[*a].total_cmp(&mags[*b]))
            .unwrap();
        assert_eq!(peak, 3);
        assert!((mags[3] - 0.5).abs() < 1e-12);
    }
}

//! Summary statistics and log-log slope fits.

use statrs::distribution::{ContinuousCDF, StudentsT};

/// Mean, standard error of the mean, and the plain (biased) variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub stderr: f64,
    pub variance: f64,
}

pub fn summarize(xs: &[f64]) -> Summary {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return Summary { mean: f64::NAN, stderr: f64::NAN, variance: f64::NAN };
    }
    let mean = xs.iter().sum::<f64>() / n;
    let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    let stderr = if xs.len() > 1 { (ss / (n - 1.0) / n).sqrt() } else { 0.0 };
    Summary { mean, stderr, variance: ss / n }
}

/// Least-squares line `y = intercept + slope x` with a 95% interval on the
/// slope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> Option<SlopeFit> {
    assert_eq!(xs.len(), ys.len());
    let k = xs.len();
    if k < 2 {
        return None;
    }
    let n = k as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let (se, half) = if k > 2 {
        let sse: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
        let se = (sse / (n - 2.0) / sxx).sqrt();
        let t = StudentsT::new(0.0, 1.0, n - 2.0).map(|d| d.inverse_cdf(0.975)).unwrap_or(f64::NAN);
        (se, t * se)
    } else {
        (f64::NAN, f64::NAN)
    };
    Some(SlopeFit { slope, intercept, slope_stderr: se, ci_low: slope - half, ci_high: slope + half })
}

/// Slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Option<SlopeFit> {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    fit_line(&lx, &ly)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn exact_power_law() {
        let xs: Vec<f64> = (10..=16).map(|e| 2f64.powi(e)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x.powf(-0.5)).collect();
        let fit = log_log_slope(&xs, &ys).unwrap();
        assert_abs_diff_eq!(fit.slope, -0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.intercept, 3f64.ln(), epsilon = 1e-10);
        assert!(fit.ci_high - fit.ci_low < 1e-10);
    }

    #[test]
    fn summary_values() {
        let s = summarize(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert_abs_diff_eq!(s.variance, 1.25, epsilon = 1e-15);
        assert_abs_diff_eq!(s.stderr, (5.0f64 / 3.0 / 4.0).sqrt(), epsilon = 1e-15);
    }
}

//! Seed-level summary statistics and percentile bootstrap.

use rand::Rng;

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard error of the mean (sample standard deviation over `sqrt n`).
pub fn std_error(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

/// Empirical quantile of sorted data with linear interpolation.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Sorted bootstrap replicates of `stat` over resampled index sets of size `n`.
///
/// Paired data is resampled jointly by indexing every series with the same
/// indices inside `stat`.
pub fn bootstrap<R: Rng + ?Sized>(
    n: usize,
    resamples: usize,
    rng: &mut R,
    mut stat: impl FnMut(&[usize]) -> f64,
) -> Vec<f64> {
    let mut idx = vec![0; n];
    let mut reps: Vec<f64> = (0..resamples)
        .map(|_| {
            idx.iter_mut().for_each(|j| *j = rng.random_range(0..n));
            stat(&idx)
        })
        .collect();
    reps.sort_by(f64::total_cmp);
    reps
}

/// Percentile bootstrap interval of the mean at two-sided `level`.
pub fn bootstrap_mean_interval<R: Rng + ?Sized>(xs: &[f64], level: f64, resamples: usize, rng: &mut R) -> (f64, f64) {
    let reps = bootstrap(xs.len(), resamples, rng, |idx| idx.iter().map(|&j| xs[j]).sum::<f64>() / idx.len() as f64);
    let alpha = (1.0 - level) / 2.0;
    (quantile(&reps, alpha), quantile(&reps, 1.0 - alpha))
}

/// Least-squares slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};

    #[test]
    fn moments() {
        assert_eq!(mean(&[1.0, 2.0, 6.0]), 3.0);
        // sample variance 7, n = 3
        assert!((std_error(&[1.0, 2.0, 6.0]) - (7.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(std_error(&[4.0]), 0.0);
    }

    #[test]
    fn quantile_interpolates() {
        let s = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&s, 0.0), 0.0);
        assert_eq!(quantile(&s, 1.0), 4.0);
        assert_eq!(quantile(&s, 0.5), 2.0);
        assert!((quantile(&s, 0.1) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn bootstrap_of_constant_is_degenerate() {
        let mut rng = stream(0, 0, Purpose::Bootstrap);
        let (lo, hi) = bootstrap_mean_interval(&[2.5; 10], 0.9, 200, &mut rng);
        assert_eq!((lo, hi), (2.5, 2.5));
    }

    #[test]
    fn bootstrap_interval_covers_the_mean() {
        let mut rng = stream(1, 0, Purpose::Bootstrap);
        let xs: Vec<f64> = (0..40).map(|_| rng.random::<f64>()).collect();
        let (lo, hi) = bootstrap_mean_interval(&xs, 0.95, 2000, &mut rng);
        let m = mean(&xs);
        assert!(lo < m && m < hi);
        // width close to the normal-theory 2 * 1.96 * se
        let se = std_error(&xs);
        assert!(((hi - lo) / (3.92 * se) - 1.0).abs() < 0.2);
    }

    #[test]
    fn slope_of_a_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        assert!((ols_slope(&x, &y) + 0.5).abs() < 1e-15);
    }
}

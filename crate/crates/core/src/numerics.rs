//! Quadrature, regression and sample statistics shared by the modules.

use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{LabError, Result};
use crate::rng::{self, Tag};

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
const GAUSS_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = GK_WEIGHTS[7] * fc;
    let mut gauss = GAUSS_WEIGHTS[3] * fc;
    for k in 0..7 {
        let dx = h * GK_NODES[k];
        let pair = f(c - dx) + f(c + dx);
        kronrod += GK_WEIGHTS[k] * pair;
        if k % 2 == 1 {
            gauss += GAUSS_WEIGHTS[k / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive Gauss–Kronrod (7/15) quadrature on a finite interval; the
/// interval with the largest error estimate is bisected until the summed
/// estimate falls below `abs_tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64) -> Result<f64> {
    let (v0, e0) = gk15(&f, a, b);
    let mut parts = vec![(a, b, v0, e0)];
    for _ in 0..5000 {
        let err: f64 = parts.iter().map(|p| p.3).sum();
        let val: f64 = parts.iter().map(|p| p.2).sum();
        if !val.is_finite() {
            return Err(LabError::Numeric(format!("non-finite integrand on [{a}, {b}]")));
        }
        if err <= abs_tol.max(1e-15 * val.abs()) {
            return Ok(val);
        }
        let (k, _) = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.partial_cmp(&y.1 .3).unwrap())
            .unwrap();
        let (lo, hi, _, _) = parts.swap_remove(k);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Ok(val);
        }
        let (vl, el) = gk15(&f, lo, mid);
        let (vr, er) = gk15(&f, mid, hi);
        parts.push((lo, mid, vl, el));
        parts.push((mid, hi, vr, er));
    }
    Err(LabError::Numeric(format!("quadrature did not converge on [{a}, {b}]")))
}

/// Integral over `[0, ∞)` through the substitution `x = u / (1 - u)`.
pub fn integrate_half_line<F: Fn(f64) -> f64>(f: F, abs_tol: f64) -> Result<f64> {
    integrate(
        |u: f64| {
            if u >= 1.0 {
                return 0.0;
            }
            let x = u / (1.0 - u);
            let v = f(x) / ((1.0 - u) * (1.0 - u));
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        0.0,
        1.0,
        abs_tol,
    )
}

/// Ordinary least-squares line `y = intercept + slope x`.
#[derive(Debug, Clone, Copy)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(LabError::Numeric("line fit needs at least two points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx <= 0.0 {
        return Err(LabError::Numeric("degenerate abscissae in line fit".into()));
    }
    let slope = sxy / sxx;
    Ok(LineFit { slope, intercept: my - slope * mx })
}

/// Sample mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let (mean, _) = mean_se(xs);
    let n = xs.len() as f64;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
}

/// Bootstrap standard error of the mean, resampling with a keyed stream.
pub fn bootstrap_se(xs: &[f64], resamples: usize, seed: u64) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let mut rng = rng::stream(seed, Tag::Bootstrap, 0, 0);
    let n = xs.len();
    let means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| xs[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    variance(&means).sqrt()
}

/// Upper-tail p-value of Pearson's statistic for observed counts against
/// expected probabilities; bins with expectation below `min_expected` are
/// pooled.
pub fn chi_square_p(counts: &[u64], probs: &[f64], min_expected: f64) -> Result<(f64, usize)> {
    let total: u64 = counts.iter().sum();
    let total = total as f64;
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| probs[b].partial_cmp(&probs[a]).unwrap());
    let mut stat = 0.0;
    let mut bins = 0usize;
    let (mut pool_obs, mut pool_exp) = (0.0, 0.0);
    for &k in &order {
        let e = probs[k] * total;
        if e >= min_expected {
            stat += (counts[k] as f64 - e).powi(2) / e;
            bins += 1;
        } else {
            pool_obs += counts[k] as f64;
            pool_exp += e;
        }
    }
    if pool_exp > 0.0 {
        stat += (pool_obs - pool_exp).powi(2) / pool_exp.max(1e-300);
        bins += 1;
    }
    if bins < 2 {
        return Err(LabError::Numeric("chi-square test needs two bins".into()));
    }
    let dist = ChiSquared::new((bins - 1) as f64).map_err(|e| LabError::Numeric(e.to_string()))?;
    Ok((1.0 - dist.cdf(stat), bins))
}

/// Log-spaced grid of `steps` points from `a` to `b` inclusive.
pub fn log_grid(a: f64, b: f64, steps: usize) -> Vec<f64> {
    if steps == 1 {
        return vec![a];
    }
    let (la, lb) = (a.ln(), b.ln());
    (0..steps)
        .map(|k| (la + (lb - la) * k as f64 / (steps - 1) as f64).exp())
        .collect()
}

/// Formats a float with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_of_singular_power() {
        let v = integrate(|x: f64| x.powf(-0.5), 0.0, 0.01, 1e-12).unwrap();
        assert!((v - 0.2).abs() < 1e-9, "{v}");
        let v = integrate_half_line(|x: f64| (-x).exp(), 1e-12).unwrap();
        assert!((v - 1.0).abs() < 1e-10);
    }

    #[test]
    fn exact_line() {
        let x = [1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0];
        let fit = fit_line(&x, &y).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-14);
        assert!((fit.intercept + 1.0).abs() < 1e-14);
    }

    #[test]
    fn chi_square_accepts_exact_counts() {
        let (p, bins) = chi_square_p(&[250, 250, 500], &[0.25, 0.25, 0.5], 5.0).unwrap();
        assert_eq!(bins, 3);
        assert!(p > 0.99);
    }
}

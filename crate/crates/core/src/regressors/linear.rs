use serde::{Deserialize, Serialize};

use crate::dataset::TimeSeriesDataset;
use crate::error::{Error, Result};

/// Least-squares line through (time, temperature).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    /// °C s⁻¹
    pub slope: f64,
    /// °C
    pub intercept: f64,
}

impl LinearModel {
    pub fn predict(&self, time_s: f64) -> f64 {
        self.slope * time_s + self.intercept
    }
}

pub fn fit_lr(train: &TimeSeriesDataset) -> Result<LinearModel> {
    fit_line(&train.times(), &train.temperatures())
}

/// Closed-form ordinary least squares on centred data.
pub fn fit_line(x: &[f64], y: &[f64]) -> Result<LinearModel> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            actual: y.len(),
            predicted: x.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::DegenerateInput(format!(
            "linear regression needs at least 2 samples, got {}",
            x.len()
        )));
    }
    let n = x.len() as f64;
    let x_mean = x.iter().sum::<f64>() / n;
    let y_mean = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (&xi, &yi) in x.iter().zip(y) {
        let dx = xi - x_mean;
        sxx += dx * dx;
        sxy += dx * (yi - y_mean);
    }
    if sxx == 0.0 {
        return Err(Error::DegenerateInput("all times are equal".into()));
    }
    let slope = sxy / sxx;
    Ok(LinearModel {
        slope,
        intercept: y_mean - slope * x_mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_line() {
        let x = [0.0, 1.0, 2.5, 4.0, 10.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let m = fit_line(&x, &y).unwrap();
        assert!((m.slope - 2.0).abs() < 1e-14 && (m.intercept - 1.0).abs() < 1e-14);
        for (xi, yi) in x.iter().zip(&y) {
            assert!((m.predict(*xi) - yi).abs() < 1e-13);
        }
    }

    #[test]
    fn constant_target() {
        let m = fit_line(&[1.0, 2.0, 3.0], &[4.2, 4.2, 4.2]).unwrap();
        assert_eq!(m.slope, 0.0);
        assert!((m.intercept - 4.2).abs() < 1e-15);
    }

    #[test]
    fn prediction() {
        let m = LinearModel {
            slope: 2.0,
            intercept: 1.0,
        };
        assert_eq!(m.predict(3.0), 7.0);
        assert_eq!(m.predict(0.0), 1.0);
        let m = LinearModel {
            slope: -0.000_731,
            intercept: 29.85,
        };
        assert!((m.predict(4321.0) - (29.85 - 3.158_651)).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(
            fit_line(&[3.0, 3.0, 3.0], &[1.0, 2.0, 3.0]),
            Err(Error::DegenerateInput(_))
        ));
        assert!(fit_line(&[1.0], &[1.0]).is_err());
        assert!(fit_line(&[1.0, 2.0], &[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn residuals_orthogonal_and_r2_is_squared_correlation(
            pts in proptest::collection::vec((0.0f64..1e4, 15.0f64..45.0), 3..60)
        ) {
            let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
            let m = match fit_line(&x, &y) { Ok(m) => m, Err(_) => return Ok(()) };
            let n = x.len() as f64;
            let r: Vec<f64> = x.iter().zip(&y).map(|(a, b)| b - m.predict(*a)).collect();
            let scale = y.iter().fold(0.0f64, |s, v| s.max(v.abs()));
            prop_assert!(r.iter().sum::<f64>().abs() <= 1e-8 * n * scale);
            let xm = x.iter().sum::<f64>() / n;
            let ortho: f64 = r.iter().zip(&x).map(|(ri, xi)| ri * (xi - xm)).sum();
            let xs = x.iter().map(|v| (v - xm).abs()).fold(0.0, f64::max);
            prop_assert!(ortho.abs() <= 1e-8 * n * scale * xs.max(1.0));

            let ym = y.iter().sum::<f64>() / n;
            let sst: f64 = y.iter().map(|v| (v - ym).powi(2)).sum();
            let sse: f64 = r.iter().map(|v| v * v).sum();
            let sxx: f64 = x.iter().map(|v| (v - xm).powi(2)).sum();
            let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - xm) * (b - ym)).sum();
            if sst > 1e-6 && sxx > 1e-6 {
                let r2 = 1.0 - sse / sst;
                let corr2 = sxy * sxy / (sxx * sst);
                prop_assert!((r2 - corr2).abs() <= 1e-10);
            }
        }
    }
}

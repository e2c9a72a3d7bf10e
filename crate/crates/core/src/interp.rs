//! Monotone cubic (Fritsch–Carlson) interpolation of matrix-valued samples,
//! plus finite-difference helpers shared by the coefficient machinery.

use nalgebra::DMatrix;

/// Piecewise cubic Hermite interpolant of a matrix-valued time series with
/// Fritsch–Carlson slopes (entrywise), so monotone entries stay monotone.
#[derive(Debug, Clone)]
pub struct MonotoneCubic {
    times: Vec<f64>,
    values: Vec<DMatrix<f64>>,
    slopes: Vec<DMatrix<f64>>,
}

impl MonotoneCubic {
    /// Requires at least two strictly increasing sample times; all samples
    /// must share one shape.
    pub fn new(times: Vec<f64>, values: Vec<DMatrix<f64>>) -> Result<Self, String> {
        if times.len() < 2 {
            return Err("at least two samples required".into());
        }
        if times.len() != values.len() {
            return Err(format!(
                "{} times but {} samples",
                times.len(),
                values.len()
            ));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err("sample times must be strictly increasing".into());
        }
        let shape = values[0].shape();
        if values.iter().any(|v| v.shape() != shape) {
            return Err("samples must share a common shape".into());
        }
        let slopes = fritsch_carlson_slopes(&times, &values);
        Ok(Self {
            times,
            values,
            slopes,
        })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.times[0], *self.times.last().unwrap())
    }

    /// Evaluates the interpolant; `t` is clamped to the sample range.
    pub fn eval(&self, t: f64) -> DMatrix<f64> {
        let t = t.clamp(self.times[0], *self.times.last().unwrap());
        let seg = match self
            .times
            .binary_search_by(|probe| probe.partial_cmp(&t).unwrap())
        {
            Ok(k) => k.min(self.times.len() - 2),
            Err(k) => k.saturating_sub(1).min(self.times.len() - 2),
        };
        let h = self.times[seg + 1] - self.times[seg];
        let s = (t - self.times[seg]) / h;
        let (h00, h10, h01, h11) = hermite_basis(s);
        &self.values[seg] * h00
            + &self.slopes[seg] * (h * h10)
            + &self.values[seg + 1] * h01
            + &self.slopes[seg + 1] * (h * h11)
    }
}

fn hermite_basis(s: f64) -> (f64, f64, f64, f64) {
    let s2 = s * s;
    let s3 = s2 * s;
    (
        2.0 * s3 - 3.0 * s2 + 1.0,
        s3 - 2.0 * s2 + s,
        -2.0 * s3 + 3.0 * s2,
        s3 - s2,
    )
}

fn fritsch_carlson_slopes(times: &[f64], values: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
    let m = times.len();
    let (rows, cols) = values[0].shape();
    let mut slopes = vec![DMatrix::zeros(rows, cols); m];
    for r in 0..rows {
        for c in 0..cols {
            let ys: Vec<f64> = values.iter().map(|v| v[(r, c)]).collect();
            let ds = scalar_slopes(times, &ys);
            for (k, d) in ds.into_iter().enumerate() {
                slopes[k][(r, c)] = d;
            }
        }
    }
    slopes
}

fn scalar_slopes(times: &[f64], ys: &[f64]) -> Vec<f64> {
    let m = times.len();
    let hs: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    let deltas: Vec<f64> = (0..m - 1).map(|k| (ys[k + 1] - ys[k]) / hs[k]).collect();
    if m == 2 {
        return vec![deltas[0], deltas[0]];
    }
    let mut d = vec![0.0; m];
    for k in 1..m - 1 {
        if deltas[k - 1] * deltas[k] <= 0.0 {
            d[k] = 0.0;
        } else {
            let w1 = 2.0 * hs[k] + hs[k - 1];
            let w2 = hs[k] + 2.0 * hs[k - 1];
            d[k] = (w1 + w2) / (w1 / deltas[k - 1] + w2 / deltas[k]);
        }
    }
    // one-sided three-point endpoint slopes with monotonicity clamping
    d[0] = clamp_endpoint(
        endpoint_three_point(hs[0], hs[1], deltas[0], deltas[1]),
        deltas[0],
        deltas[1],
    );
    d[m - 1] = clamp_endpoint(
        endpoint_three_point(hs[m - 2], hs[m - 3], deltas[m - 2], deltas[m - 3]),
        deltas[m - 2],
        deltas[m - 3],
    );
    d
}

fn endpoint_three_point(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1)
}

fn clamp_endpoint(d: f64, delta_near: f64, delta_far: f64) -> f64 {
    if d.signum() != delta_near.signum() {
        0.0
    } else if delta_near.signum() != delta_far.signum() && d.abs() > 3.0 * delta_near.abs() {
        3.0 * delta_near
    } else {
        d
    }
}

/// Second-order finite difference of a scalar-to-matrix map on `[lo, hi]`:
/// central in the interior, one-sided near the endpoints.
pub fn differentiate<F>(f: F, t: f64, step: f64, lo: f64, hi: f64) -> DMatrix<f64>
where
    F: Fn(f64) -> DMatrix<f64>,
{
    if t - step >= lo && t + step <= hi {
        (f(t + step) - f(t - step)) / (2.0 * step)
    } else if t + 2.0 * step <= hi {
        (f(t) * -3.0 + f(t + step) * 4.0 - f(t + 2.0 * step)) / (2.0 * step)
    } else {
        (f(t) * 3.0 - f(t - step) * 4.0 + f(t - 2.0 * step)) / (2.0 * step)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scalar_series(times: &[f64], ys: &[f64]) -> MonotoneCubic {
        let values = ys
            .iter()
            .map(|&y| DMatrix::from_element(1, 1, y))
            .collect();
        MonotoneCubic::new(times.to_vec(), values).unwrap()
    }

    #[test]
    fn reproduces_linear_data() {
        let times: Vec<f64> = (0..6).map(|k| k as f64 * 0.2).collect();
        let ys: Vec<f64> = times.iter().map(|t| 3.0 * t - 1.0).collect();
        let interp = scalar_series(&times, &ys);
        for &t in &[0.05, 0.31, 0.77, 0.99] {
            assert_abs_diff_eq!(interp.eval(t)[(0, 0)], 3.0 * t - 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn monotone_data_stays_monotone() {
        let times = [0.0, 1.0, 2.0, 3.0, 4.0];
        let ys = [0.0, 0.1, 0.11, 2.0, 2.1];
        let interp = scalar_series(&times, &ys);
        let mut prev = interp.eval(0.0)[(0, 0)];
        for k in 1..=400 {
            let cur = interp.eval(k as f64 / 100.0)[(0, 0)];
            assert!(cur + 1e-12 >= prev, "not monotone at k={k}");
            prev = cur;
        }
    }

    #[test]
    fn interpolates_smooth_function_accurately() {
        // monotone clamping costs accuracy near extrema, hence O(h²) there
        let times: Vec<f64> = (0..=64).map(|k| k as f64 / 64.0).collect();
        let values: Vec<DMatrix<f64>> = times
            .iter()
            .map(|&t| DMatrix::from_element(1, 1, (2.5 * t).sin()))
            .collect();
        let interp = MonotoneCubic::new(times, values).unwrap();
        for k in 0..200 {
            let t = k as f64 / 199.0;
            assert_abs_diff_eq!(interp.eval(t)[(0, 0)], (2.5 * t).sin(), epsilon = 2e-4);
        }
    }

    #[test]
    fn error_shrinks_quadratically_at_extrema() {
        let max_err = |samples: usize| {
            let times: Vec<f64> = (0..=samples).map(|k| k as f64 / samples as f64).collect();
            let values: Vec<DMatrix<f64>> = times
                .iter()
                .map(|&t| DMatrix::from_element(1, 1, (2.5 * t).sin()))
                .collect();
            let interp = MonotoneCubic::new(times, values).unwrap();
            (0..1000)
                .map(|k| {
                    let t = k as f64 / 999.0;
                    (interp.eval(t)[(0, 0)] - (2.5 * t).sin()).abs()
                })
                .fold(0.0f64, f64::max)
        };
        let e64 = max_err(64);
        let e256 = max_err(256);
        assert!(e256 < e64 / 8.0, "e64={e64:.3e} e256={e256:.3e}");
    }

    #[test]
    fn differentiate_matches_analytic_derivative() {
        let f = |t: f64| DMatrix::from_element(1, 1, (3.0 * t).cos());
        for &t in &[0.0, 0.013, 0.5, 0.987, 1.0] {
            let d = differentiate(f, t, 1e-4, 0.0, 1.0)[(0, 0)];
            assert_abs_diff_eq!(d, -3.0 * (3.0 * t).sin(), epsilon = 1e-6);
        }
    }
}

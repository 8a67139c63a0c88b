//! Small weighted least-squares helper shared by the regression and oracle
//! modules.

/// Straight-line fit `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    pub rss: f64,
    /// Standard error of the slope. With `sigmas` given it is propagated from
    /// the per-point uncertainties; otherwise it comes from the residuals
    /// (undefined for n <= 2, reported as 0 there).
    pub slope_se: f64,
}

/// Weighted OLS with weights `w`; pass `None` sigmas to derive the slope
/// standard error from residual scatter instead of known uncertainties.
pub(crate) fn fit_line(x: &[f64], y: &[f64], w: Option<&[f64]>, sigmas: Option<&[f64]>) -> LineFit {
    let n = x.len();
    assert_eq!(n, y.len());
    assert!(n >= 2, "need at least two points for a line fit");
    let unit = vec![1.0; n];
    let w = w.unwrap_or(&unit);

    let sw: f64 = w.iter().sum();
    let xbar = x.iter().zip(w).map(|(x, w)| w * x).sum::<f64>() / sw;
    let ybar = y.iter().zip(w).map(|(y, w)| w * y).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(w).map(|(x, w)| w * (x - xbar).powi(2)).sum();
    let sxy: f64 = x
        .iter()
        .zip(y)
        .zip(w)
        .map(|((x, y), w)| w * (x - xbar) * (y - ybar))
        .sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;

    let rss: f64 = x
        .iter()
        .zip(y)
        .zip(w)
        .map(|((x, y), w)| w * (y - intercept - slope * x).powi(2))
        .sum();

    let slope_se = match sigmas {
        Some(s) => {
            // slope = sum c_i y_i with c_i = w_i (x_i - xbar) / sxx
            let var: f64 = x
                .iter()
                .zip(s)
                .zip(w)
                .map(|((x, s), w)| (w * (x - xbar) / sxx * s).powi(2))
                .sum();
            var.sqrt()
        }
        None => {
            if n > 2 {
                (rss / (n as f64 - 2.0) / sxx).sqrt()
            } else {
                0.0
            }
        }
    };

    LineFit {
        intercept,
        slope,
        rss,
        slope_se,
    }
}

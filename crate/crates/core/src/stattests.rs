//! Augmented Dickey-Fuller unit-root test.
//!
//! The regression is fitted in difference form,
//!
//! ```text
//! dy_t = c + delta t + gamma y_{t-1} + sum_{i=1}^{p} beta_i dy_{t-i} + e_t,   gamma = phi - 1,
//! ```
//!
//! and the test statistic is the t-ratio of `gamma`. Reported coefficients
//! are in level form (`phi`). P-values come from MacKinnon's (1994)
//! normal-CDF response surfaces for one series; critical values from
//! MacKinnon's (2010) finite-sample surfaces `b0 + b1/n + b2/n^2 + b3/n^3`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum AdfVariant {
    /// Constant and linear trend.
    #[default]
    TrendDrift,
    /// Constant only.
    Drift,
    /// Neither constant nor trend.
    None,
}

impl AdfVariant {
    fn deterministic_terms(self) -> usize {
        match self {
            AdfVariant::TrendDrift => 2,
            AdfVariant::Drift => 1,
            AdfVariant::None => 0,
        }
    }

    fn tables(self) -> &'static PValueSurface {
        match self {
            AdfVariant::TrendDrift => &SURFACE_CT,
            AdfVariant::Drift => &SURFACE_C,
            AdfVariant::None => &SURFACE_N,
        }
    }
}

impl std::str::FromStr for AdfVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ct" | "trend" | "trend-drift" | "t1" => Ok(Self::TrendDrift),
            "c" | "drift" => Ok(Self::Drift),
            "n" | "nc" | "none" => Ok(Self::None),
            _ => Err(Error::invalid(format!("unknown ADF variant `{s}`"))),
        }
    }
}

struct PValueSurface {
    /// Below this statistic use the small-p polynomial.
    star: f64,
    min: f64,
    max: f64,
    small_p: [f64; 3],
    large_p: [f64; 4],
    /// 1%, 5%, 10% critical-value surfaces.
    crit: [[f64; 4]; 3],
}

const SURFACE_N: PValueSurface = PValueSurface {
    star: -1.04,
    min: -19.04,
    max: f64::INFINITY,
    small_p: [0.6344, 1.2378, 0.032496],
    large_p: [0.4797, 0.93557, -0.06999, 0.033066],
    crit: [
        [-2.56574, -2.2358, -3.627, 0.0],
        [-1.94100, -0.2686, -3.365, 31.223],
        [-1.61682, 0.2656, -2.714, 25.364],
    ],
};

const SURFACE_C: PValueSurface = PValueSurface {
    star: -1.61,
    min: -18.83,
    max: 2.74,
    small_p: [2.1659, 1.4412, 0.038269],
    large_p: [1.7339, 0.93202, -0.12745, -0.010368],
    crit: [
        [-3.43035, -6.5393, -16.786, -79.433],
        [-2.86154, -2.8903, -4.234, -40.040],
        [-2.56677, -1.5384, -2.809, 0.0],
    ],
};

const SURFACE_CT: PValueSurface = PValueSurface {
    star: -2.89,
    min: -16.18,
    max: 0.7,
    small_p: [3.2512, 1.6047, 0.049588],
    large_p: [2.5261, 0.61654, -0.37956, -0.060285],
    crit: [
        [-3.95877, -9.0531, -28.428, -134.155],
        [-3.41049, -4.3904, -9.036, -45.374],
        [-3.12705, -2.5856, -3.925, -22.380],
    ],
};

/// Reported p-values are clamped to this range.
pub const P_VALUE_FLOOR: f64 = 0.001;
pub const P_VALUE_CEIL: f64 = 0.999;

fn poly(coef: &[f64], x: f64) -> f64 {
    coef.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Approximate p-value of a DF statistic, clamped to `[0.001, 0.999]`.
pub fn adf_p_value(stat: f64, variant: AdfVariant) -> f64 {
    let s = variant.tables();
    let p = if stat > s.max {
        1.0
    } else if stat < s.min {
        0.0
    } else {
        let z = if stat <= s.star {
            poly(&s.small_p, stat)
        } else {
            poly(&s.large_p, stat)
        };
        Normal::standard().cdf(z)
    };
    p.clamp(P_VALUE_FLOOR, P_VALUE_CEIL)
}

/// Critical values at 1%, 5% and 10% for `nobs` regression observations.
pub fn adf_critical_values(nobs: usize, variant: AdfVariant) -> [f64; 3] {
    let inv = 1.0 / nobs as f64;
    variant.tables().crit.map(|c| poly(&c, inv))
}

/// Least-squares fit.
#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub residuals: Vec<f64>,
    pub ssr: f64,
}

/// Ordinary least squares through a Householder QR factorization.
pub fn ols(design: &DMatrix<f64>, response: &DVector<f64>) -> Result<OlsFit> {
    let (n, k) = design.shape();
    if n <= k {
        return Err(Error::TooShort {
            needed: k + 1,
            got: n,
        });
    }
    let qr = design.clone().qr();
    let r = qr.r();
    let scale = (0..k).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..k).any(|i| !(r[(i, i)].abs() > 1e-12 * scale)) {
        return Err(Error::SingularMatrix);
    }
    let qty = qr.q().transpose() * response;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or(Error::SingularMatrix)?;
    let residuals = response - design * &beta;
    let ssr = residuals.norm_squared();
    let sigma2 = ssr / (n - k) as f64;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or(Error::SingularMatrix)?;
    let std_errors = (0..k)
        .map(|i| (sigma2 * r_inv.row(i).norm_squared()).sqrt())
        .collect();
    Ok(OlsFit {
        coefficients: beta.iter().copied().collect(),
        std_errors,
        residuals: residuals.iter().copied().collect(),
        ssr,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdfResult {
    pub variant: AdfVariant,
    pub lags: usize,
    pub nobs: usize,
    /// Level-form coefficients: `[c], [delta], phi, beta_1..beta_p`.
    pub coefficients: Vec<f64>,
    /// t-statistics of `coefficients` against zero.
    pub t_stats: Vec<f64>,
    /// Dickey-Fuller statistic `(phi - 1) / se(phi)`.
    pub statistic: f64,
    /// Joint significance of the non-constant level-form regressors.
    pub f_stat: f64,
    pub log_likelihood: f64,
    pub aic: f64,
    pub bic: f64,
    pub p_value: f64,
    /// 1%, 5%, 10%.
    pub critical_values: [f64; 3],
    pub alpha: f64,
    /// Unit root rejected (`p_value < alpha`).
    pub reject: bool,
}

impl AdfResult {
    /// Position of `phi` in `coefficients`.
    pub fn phi_index(&self) -> usize {
        self.variant.deterministic_terms()
    }

    pub fn phi(&self) -> f64 {
        self.coefficients[self.phi_index()]
    }
}

pub fn adf_test(series: &[f64], lags: usize, variant: AdfVariant, alpha: f64) -> Result<AdfResult> {
    adf_test_with_sample(series, lags, lags, variant, alpha)
}

/// ADF with the estimation sample fixed as if `sample_lags` lags were used,
/// so fits with different `lags <= sample_lags` share observations.
pub fn adf_test_with_sample(
    series: &[f64],
    lags: usize,
    sample_lags: usize,
    variant: AdfVariant,
    alpha: f64,
) -> Result<AdfResult> {
    if lags > sample_lags {
        return Err(Error::invalid("lags exceeds the common-sample lag"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha {alpha} outside (0, 1)")));
    }
    if series.len() <= sample_lags + 10 {
        return Err(Error::TooShort {
            needed: sample_lags + 11,
            got: series.len(),
        });
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("series contains non-finite values"));
    }
    let dy: Vec<f64> = series.windows(2).map(|w| w[1] - w[0]).collect();
    // dy[j] = y[j+1] - y[j]; regress dy[j] for j >= sample_lags.
    let first = sample_lags;
    let nobs = dy.len() - first;
    let det = variant.deterministic_terms();
    let k = det + 1 + lags;
    let mut x = DMatrix::<f64>::zeros(nobs, k);
    let mut yv = DVector::<f64>::zeros(nobs);
    for (row, j) in (first..dy.len()).enumerate() {
        let mut col = 0;
        if det >= 1 {
            x[(row, col)] = 1.0;
            col += 1;
        }
        if det == 2 {
            x[(row, col)] = (row + 1) as f64;
            col += 1;
        }
        x[(row, col)] = series[j];
        col += 1;
        for i in 1..=lags {
            x[(row, col)] = dy[j - i];
            col += 1;
        }
        yv[row] = dy[j];
    }
    let fit = ols(&x, &yv)?;
    let gamma_se = fit.std_errors[det];
    if !(gamma_se > 0.0) {
        return Err(Error::Degenerate("zero standard error on the lagged level".into()));
    }
    let statistic = fit.coefficients[det] / gamma_se;
    let mut coefficients = fit.coefficients.clone();
    coefficients[det] += 1.0;
    let t_stats = coefficients
        .iter()
        .zip(&fit.std_errors)
        .map(|(c, s)| c / s)
        .collect();

    // Level-form response y_t = y_{t-1} + dy_t.
    let levels: Vec<f64> = (first..dy.len()).map(|j| series[j + 1]).collect();
    let n = nobs as f64;
    let (tss, restrictions) = if det >= 1 {
        let mean = levels.iter().sum::<f64>() / n;
        (levels.iter().map(|v| (v - mean).powi(2)).sum::<f64>(), k - 1)
    } else {
        (levels.iter().map(|v| v * v).sum::<f64>(), k)
    };
    let dof = (nobs - k) as f64;
    let f_stat = if fit.ssr > 0.0 {
        ((tss - fit.ssr) / restrictions as f64) / (fit.ssr / dof)
    } else {
        f64::INFINITY
    };
    let log_likelihood =
        -0.5 * n * ((2.0 * std::f64::consts::PI).ln() + (fit.ssr / n).ln() + 1.0);
    let params = k as f64;
    let p_value = adf_p_value(statistic, variant);
    Ok(AdfResult {
        variant,
        lags,
        nobs,
        coefficients,
        t_stats,
        statistic,
        f_stat,
        log_likelihood,
        aic: 2.0 * params - 2.0 * log_likelihood,
        bic: params * n.ln() - 2.0 * log_likelihood,
        p_value,
        critical_values: adf_critical_values(nobs, variant),
        alpha,
        reject: p_value < alpha,
    })
}

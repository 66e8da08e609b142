//! Student-t based tests shared by the sector statistics.

use statrs::function::beta::beta_reg;

/// Smallest p-value ever reported. Keeps extreme significance levels
/// representable after serialization instead of collapsing to zero.
pub const P_FLOOR: f64 = 1e-300;

pub fn floor_p(p: f64) -> f64 {
    p.clamp(P_FLOOR, 1.0)
}

/// Upper tail `P(T > t)` for Student's t with `df` degrees of freedom.
///
/// Evaluated through the regularized incomplete beta function so that far
/// tails stay accurate (no `1 - cdf` cancellation).
pub fn student_t_upper(t: f64, df: f64) -> f64 {
    if t.is_nan() || df.is_nan() || df <= 0.0 {
        return f64::NAN;
    }
    if t == f64::INFINITY {
        return 0.0;
    }
    if t == f64::NEG_INFINITY {
        return 1.0;
    }
    let x = df / (df + t * t);
    let half_tail = 0.5 * beta_reg(df / 2.0, 0.5, x);
    if t >= 0.0 {
        half_tail
    } else {
        1.0 - half_tail
    }
}

/// Two-sided `P(|T| > |t|)`.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    beta_reg(df / 2.0, 0.5, x).min(1.0)
}

/// Mean, unbiased variance and size of one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleSummary {
    pub mean: f64,
    pub variance: f64,
    pub n: usize,
}

impl SampleSummary {
    /// Returns `None` for fewer than two values.
    pub fn from_values(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n < 2 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        Some(SampleSummary {
            mean,
            variance: ss / (n - 1) as f64,
            n,
        })
    }

    /// Summary of `successes` ones among `n` Bernoulli indicators.
    ///
    /// The variance is the unbiased sample variance of the 0/1 values,
    /// `p(1-p) n / (n-1)`.
    pub fn bernoulli(successes: usize, n: usize) -> Option<Self> {
        if n < 2 || successes > n {
            return None;
        }
        let p = successes as f64 / n as f64;
        Some(SampleSummary {
            mean: p,
            variance: p * (1.0 - p) * n as f64 / (n - 1) as f64,
            n,
        })
    }

    fn var_of_mean(&self) -> f64 {
        self.variance / self.n as f64
    }
}

/// Outcome of a Welch two-sample t-test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchOutcome {
    pub t: f64,
    pub df: f64,
    /// One-sided p for the alternative `mean(first) > mean(second)`.
    pub p_greater: f64,
}

/// Welch t-test with Welch–Satterthwaite degrees of freedom.
///
/// Returns `None` when both sample variances are zero (t undefined).
pub fn welch(first: &SampleSummary, second: &SampleSummary) -> Option<WelchOutcome> {
    let v1 = first.var_of_mean();
    let v2 = second.var_of_mean();
    let se2 = v1 + v2;
    if se2 <= 0.0 {
        return None;
    }
    let t = (first.mean - second.mean) / se2.sqrt();
    let df = se2 * se2 / (v1 * v1 / (first.n - 1) as f64 + v2 * v2 / (second.n - 1) as f64);
    Some(WelchOutcome {
        t,
        df,
        p_greater: floor_p(student_t_upper(t, df)),
    })
}

/// One-sample t statistic against `mu0`, with `n - 1` degrees of freedom.
///
/// Zero variance gives an infinite statistic (or NaN when the mean equals
/// `mu0`); callers decide how to report that.
pub fn one_sample_t(sample: &SampleSummary, mu0: f64) -> (f64, f64) {
    let se = sample.var_of_mean().sqrt();
    let diff = sample.mean - mu0;
    let t = if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        f64::NAN
    } else {
        diff.signum() * f64::INFINITY
    };
    (t, (sample.n - 1) as f64)
}

/// Ordinary least squares fit of `y` on `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OlsFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope; zero when residuals vanish.
    pub slope_se: f64,
    pub df: f64,
}

/// Requires at least three points and non-constant `x`.
pub fn ols(x: &[f64], y: &[f64]) -> Option<OlsFit> {
    let n = x.len();
    if n < 3 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let r = b - (intercept + slope * a);
            r * r
        })
        .sum();
    let df = (n - 2) as f64;
    Some(OlsFit {
        slope,
        intercept,
        slope_se: (ssr / df / sxx).sqrt(),
        df,
    })
}

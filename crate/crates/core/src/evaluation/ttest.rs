use super::special::student_t_two_sided_p;
use super::EvalError;
use serde::{Deserialize, Serialize};

pub const ALPHA: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceResult {
    #[serde(with = "lossless_f64")]
    pub t_statistic: f64,
    pub p_value: f64,
    pub n: usize,
    pub degrees_of_freedom: usize,
    /// Mean of `b - a`.
    pub mean_difference: f64,
    pub significant: bool,
    pub hypothesis: String,
}

const HYPOTHESIS: &str =
    "H0: no difference in mean prediction correctness; H1: the means differ (two-sided, alpha = 0.05)";

/// Two-sided paired t-test on aligned per-example scores (0/1 correctness).
///
/// Differences are `b - a`, so a positive statistic means `b` scored higher.
/// When every difference is zero the result is `t = 0, p = 1`. When the
/// differences are constant but non-zero the statistic is infinite and
/// `p = 0`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<SignificanceResult, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::Alignment(format!(
            "paired samples differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 2 {
        return Err(EvalError::SampleSize(n));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    let nf = n as f64;
    let mean = diffs.iter().sum::<f64>() / nf;
    let ss: f64 = diffs.iter().map(|d| (d - mean).powi(2)).sum();
    let var = ss / (nf - 1.0);

    let (t, p) = if diffs.iter().all(|&d| d == 0.0) {
        (0.0, 1.0)
    } else if var == 0.0 {
        (mean.signum() * f64::INFINITY, 0.0)
    } else {
        let t = mean / (var / nf).sqrt();
        (t, student_t_two_sided_p(t, nf - 1.0))
    };
    Ok(SignificanceResult {
        t_statistic: t,
        p_value: p,
        n,
        degrees_of_freedom: n - 1,
        mean_difference: mean,
        significant: p < ALPHA,
        hypothesis: HYPOTHESIS.to_string(),
    })
}

/// Serializes non-finite floats as strings so reports stay valid JSON.
mod lossless_f64 {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            Repr::Num(*v).serialize(s)
        } else {
            Repr::Text(v.to_string()).serialize(s)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

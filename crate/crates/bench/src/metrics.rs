use esgd_core::linalg::{dot, norm2};

use crate::error::{BenchError, Result};

/// `1 − u·v / (‖u‖‖v‖)`, clamped to `[0, 2]` against roundoff.
pub fn cosine_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(esgd_core::Error::DimensionMismatch {
            expected: u.len(),
            actual: v.len(),
        }
        .into());
    }
    let (nu, nv) = (norm2(u), norm2(v));
    if !(nu > 0.0 && nv > 0.0) || !nu.is_finite() || !nv.is_finite() {
        return Err(BenchError::Invalid("cosine distance of a zero or non-finite vector".into()));
    }
    Ok((1.0 - dot(u, v) / (nu * nv)).clamp(0.0, 2.0))
}

/// Median with `+∞` sorted last; `None` for an empty slice or any NaN.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() || values.iter().any(|x| x.is_nan()) {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_examples() {
        let u = [1.0, -2.0, 3.0];
        assert!(cosine_distance(&u, &u).unwrap().abs() < 1e-15);
        let neg: Vec<f64> = u.iter().map(|x| -x).collect();
        assert!((cosine_distance(&u, &neg).unwrap() - 2.0).abs() < 1e-15);
        assert!((cosine_distance(&[1.0, 0.0], &[0.0, 3.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!(cosine_distance(&[0.0, 0.0], &[1.0, 0.0]).is_err());
        assert!(cosine_distance(&[1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn cosine_ignores_scale() {
        let u = [0.3, 0.1, 2.0];
        let v = [1.0, 0.5, 0.2];
        let scaled: Vec<f64> = v.iter().map(|x| 7.5 * x).collect();
        let a = cosine_distance(&u, &v).unwrap();
        assert!((a - cosine_distance(&u, &scaled).unwrap()).abs() < 1e-15);
        assert!((0.0..=2.0).contains(&a));
    }

    #[test]
    fn median_examples() {
        assert_eq!(median(&[]), None);
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[1.0, f64::INFINITY, f64::INFINITY]), Some(f64::INFINITY));
        assert_eq!(median(&[1.0, f64::NAN]), None);
    }
}

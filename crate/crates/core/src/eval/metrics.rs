use crate::error::{Error, Result};

fn check_pair(x: &[f64], y: &[f64], min: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch { left: x.len(), right: y.len() });
    }
    if x.len() < min {
        return Err(Error::TooShort { needed: min, got: x.len() });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("score vector".into()));
    }
    Ok(())
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Pearson linear correlation.
pub fn lcc(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y, 2)?;
    pearson(x, y).ok_or(Error::Degenerate("zero variance"))
}

/// 1-based ranks; tied values share the average of their positions.
pub fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut out = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation with average ranks for ties.
pub fn srcc(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y, 2)?;
    pearson(&ranks(x), &ranks(y)).ok_or(Error::Degenerate("constant ranks"))
}

pub fn mse(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y, 1)?;
    Ok(x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / x.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn worked_example() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [1.0, 3.0, 2.0, 4.0];
        assert_eq!(lcc(&x, &y).unwrap(), 0.8);
        assert_eq!(srcc(&x, &y).unwrap(), 0.8);
    }

    #[test]
    fn extremes_and_errors() {
        let x = [0.1, 0.5, 0.2, 0.9];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((lcc(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        assert!((lcc(&x, &neg).unwrap() + 1.0).abs() < 1e-15);
        assert!(matches!(srcc(&x, &[0.3; 4]), Err(Error::Degenerate(_))));
        assert!(matches!(lcc(&[1.0], &[1.0]), Err(Error::TooShort { .. })));
        assert!(matches!(mse(&[1.0], &[1.0, 2.0]), Err(Error::LengthMismatch { .. })));
        assert_eq!(mse(&[0.0, 1.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(mse(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn ties_get_average_ranks() {
        assert_eq!(ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    proptest! {
        #[test]
        fn affine_and_monotone_invariance(
            x in prop::collection::vec(-1.0f64..1.0, 3..40),
            y in prop::collection::vec(-1.0f64..1.0, 40),
            a in 0.1f64..10.0,
            b in -5.0f64..5.0,
        ) {
            let y = &y[..x.len()];
            prop_assume!(lcc(&x, y).is_ok());
            let xt: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            prop_assert!((lcc(&x, y).unwrap() - lcc(&xt, y).unwrap()).abs() < 1e-9);
            let xm: Vec<f64> = x.iter().map(|v| v.exp() * 3.0).collect();
            prop_assert!((srcc(&x, y).unwrap() - srcc(&xm, y).unwrap()).abs() < 1e-12);
            let r = lcc(&x, y).unwrap();
            prop_assert!((-1.0..=1.0).contains(&r));
        }

        #[test]
        fn mse_shift(x in prop::collection::vec(-1.0f64..1.0, 1..30), c in -2.0f64..2.0) {
            let y: Vec<f64> = x.iter().map(|v| v + c).collect();
            prop_assert!((mse(&x, &y).unwrap() - c * c).abs() < 1e-12);
        }
    }
}

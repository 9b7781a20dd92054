use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Mean squared error over every entry and its gradient `2 (p - t) / (B d)`.
pub fn mse_loss(
    prediction: ArrayView2<'_, f64>,
    target: ArrayView2<'_, f64>,
) -> Result<(f64, Array2<f64>)> {
    if prediction.dim() != target.dim() {
        return Err(Error::shape("mse target", prediction.len(), target.len()));
    }
    if prediction.is_empty() {
        return Err(Error::Argument("empty batch".into()));
    }
    let n = prediction.len() as f64;
    let diff = &prediction - &target;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    Ok((loss, diff * (2.0 / n)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn equal_inputs_give_zero() {
        let p = array![[0.5, -1.0], [2.0, 3.0]];
        let (l, g) = mse_loss(p.view(), p.view()).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unit_offsets_by_hand() {
        let (l, g) = mse_loss(array![[1.0, 1.0]].view(), array![[0.0, 0.0]].view()).unwrap();
        assert_eq!(l, 1.0);
        assert_eq!(g, array![[1.0, 1.0]]);
    }

    #[test]
    fn doubling_residual_quadruples_loss() {
        let t = array![[0.1, -0.4, 0.9]];
        let p1 = array![[0.6, 0.2, 0.3]];
        let p2 = &t + &((&p1 - &t) * 2.0);
        let (l1, _) = mse_loss(p1.view(), t.view()).unwrap();
        let (l2, _) = mse_loss(p2.view(), t.view()).unwrap();
        assert!((l2 - 4.0 * l1).abs() < 1e-14);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        assert!(mse_loss(array![[1.0, 2.0]].view(), array![[1.0]].view()).is_err());
    }
}

use super::{Family, HiddenBatch, ModelError, PoolingStrategy};
use ndarray::{Array2, Array3, ArrayView1, Axis};

fn valid_positions(mask: ArrayView1<bool>) -> Vec<usize> {
    mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect()
}

/// Reduces `[batch, seq, hidden]` states to `[batch, hidden]`.
///
/// Masked positions are never read, so their contents cannot change the output.
pub fn pool(
    batch: &HiddenBatch,
    strategy: PoolingStrategy,
    family: Family,
) -> Result<Array2<f64>, ModelError> {
    if !strategy.valid_for(family) {
        return Err(ModelError::InvalidPooling { strategy, family });
    }
    let (b, _, h) = batch.states().dim();
    let mut out = Array2::<f64>::zeros((b, h));
    for (i, (seq, mask)) in batch
        .states()
        .outer_iter()
        .zip(batch.mask().outer_iter())
        .enumerate()
    {
        let positions = valid_positions(mask);
        if positions.is_empty() {
            return Err(ModelError::DegenerateMask(i));
        }
        let mut row = out.row_mut(i);
        match strategy {
            PoolingStrategy::Cls => {
                if !mask[0] {
                    return Err(ModelError::DegenerateMask(i));
                }
                row.assign(&seq.row(0));
            }
            PoolingStrategy::Mean => {
                for &p in &positions {
                    row += &seq.row(p);
                }
                row /= positions.len() as f64;
            }
            PoolingStrategy::Max => {
                row.assign(&seq.row(positions[0]));
                for &p in &positions[1..] {
                    row.zip_mut_with(&seq.row(p), |a, &v| {
                        if v > *a {
                            *a = v
                        }
                    });
                }
            }
            PoolingStrategy::LastToken => {
                row.assign(&seq.row(*positions.last().unwrap()));
            }
        }
    }
    Ok(out)
}

/// Gradient of a pooling reduction with respect to the token states.
/// For `max`, the gradient goes to the first position attaining the maximum.
pub fn pool_backward(
    batch: &HiddenBatch,
    strategy: PoolingStrategy,
    grad_pooled: &Array2<f64>,
) -> Result<Array3<f64>, ModelError> {
    let (b, t, h) = batch.states().dim();
    if grad_pooled.dim() != (b, h) {
        return Err(ModelError::Shape(format!(
            "pooled gradient {:?} does not match [{b}, {h}]",
            grad_pooled.dim()
        )));
    }
    let mut grad = Array3::<f64>::zeros((b, t, h));
    for i in 0..b {
        let mask = batch.mask().row(i);
        let positions = valid_positions(mask);
        if positions.is_empty() {
            return Err(ModelError::DegenerateMask(i));
        }
        let g = grad_pooled.row(i);
        let mut gi = grad.index_axis_mut(Axis(0), i);
        match strategy {
            PoolingStrategy::Cls => gi.row_mut(0).assign(&g),
            PoolingStrategy::LastToken => gi.row_mut(*positions.last().unwrap()).assign(&g),
            PoolingStrategy::Mean => {
                let scale = 1.0 / positions.len() as f64;
                for &p in &positions {
                    gi.row_mut(p).scaled_add(scale, &g);
                }
            }
            PoolingStrategy::Max => {
                let seq = batch.states().index_axis(Axis(0), i);
                for d in 0..h {
                    let mut best = positions[0];
                    for &p in &positions[1..] {
                        if seq[[p, d]] > seq[[best, d]] {
                            best = p;
                        }
                    }
                    gi[[best, d]] += g[d];
                }
            }
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array3};

    fn single_token() -> HiddenBatch {
        let states = Array3::from_shape_vec((1, 1, 3), vec![1.0, -2.0, 0.5]).unwrap();
        HiddenBatch::new(states, Array2::from_elem((1, 1), true)).unwrap()
    }

    #[test]
    fn single_token_all_strategies_agree() {
        let b = single_token();
        let v = array![[1.0, -2.0, 0.5]];
        for s in [PoolingStrategy::Mean, PoolingStrategy::Max, PoolingStrategy::LastToken] {
            assert_eq!(pool(&b, s, Family::Stub).unwrap(), v);
        }
        assert_eq!(pool(&b, PoolingStrategy::Cls, Family::EncoderOnly).unwrap(), v);
    }

    #[test]
    fn identical_tokens_mean_is_token() {
        let states = Array3::from_shape_vec((1, 2, 2), vec![0.3, 0.7, 0.3, 0.7]).unwrap();
        let b = HiddenBatch::new(states, Array2::from_elem((1, 2), true)).unwrap();
        assert_eq!(pool(&b, PoolingStrategy::Mean, Family::Stub).unwrap(), array![[0.3, 0.7]]);
    }

    #[test]
    fn masked_reductions() {
        let states = Array3::from_shape_vec(
            (1, 3, 2),
            vec![1.0, 5.0, 3.0, -1.0, 100.0, 100.0],
        )
        .unwrap();
        let mask = array![[true, true, false]];
        let b = HiddenBatch::new(states, mask).unwrap();
        assert_eq!(pool(&b, PoolingStrategy::Mean, Family::Stub).unwrap(), array![[2.0, 2.0]]);
        assert_eq!(pool(&b, PoolingStrategy::Max, Family::Stub).unwrap(), array![[3.0, 5.0]]);
        assert_eq!(
            pool(&b, PoolingStrategy::LastToken, Family::Stub).unwrap(),
            array![[3.0, -1.0]]
        );
    }

    #[test]
    fn cls_rejected_for_stub_and_all_masked_rejected() {
        assert!(matches!(
            pool(&single_token(), PoolingStrategy::Cls, Family::Stub),
            Err(ModelError::InvalidPooling { .. })
        ));
        let b = HiddenBatch::new_unchecked(Array3::zeros((1, 2, 2)), array![[false, false]]);
        assert!(matches!(
            pool(&b, PoolingStrategy::Mean, Family::Stub),
            Err(ModelError::DegenerateMask(0))
        ));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let states = Array3::from_shape_fn((2, 4, 3), |(i, j, k)| ((i * 7 + j * 3 + k) as f64).sin());
        let mask = array![[true, true, true, false], [true, false, true, true]];
        let b = HiddenBatch::new(states.clone(), mask.clone()).unwrap();
        let g = Array2::from_shape_fn((2, 3), |(i, k)| 0.5 + i as f64 - k as f64 * 0.25);
        for s in [PoolingStrategy::Mean, PoolingStrategy::Max, PoolingStrategy::LastToken] {
            let analytic = pool_backward(&b, s, &g).unwrap();
            let eps = 1e-6;
            for idx in ndarray::indices(states.dim()) {
                let (i, j, k) = idx;
                let mut plus = states.clone();
                plus[[i, j, k]] += eps;
                let mut minus = states.clone();
                minus[[i, j, k]] -= eps;
                let f = |st: Array3<f64>| {
                    let p = pool(&HiddenBatch::new(st, mask.clone()).unwrap(), s, Family::Stub).unwrap();
                    (&p * &g).sum()
                };
                let numeric = (f(plus) - f(minus)) / (2.0 * eps);
                assert!((numeric - analytic[[i, j, k]]).abs() < 1e-6, "{s} {idx:?}");
            }
        }
    }
}

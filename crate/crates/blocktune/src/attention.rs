//! Dense scaled-dot-product attention (the reference oracle), the
//! relative-L1 quality metric, and block self-similarity.

use crate::error::{Error, Result};
use crate::mat::{dot, norm, Mat};

/// Numerically stable row softmax attention: `softmax(Q Kᵀ / √d) V`,
/// with lower-triangular masking when `causal` is set.
pub fn dense_attention(q: &Mat, k: &Mat, v: &Mat, causal: bool) -> Result<Mat> {
    let d = q.cols();
    if d == 0 {
        return Err(Error::ShapeMismatch("head_dim must be > 0".into()));
    }
    if k.cols() != d || v.rows() != k.rows() {
        return Err(Error::ShapeMismatch(format!(
            "q {}x{}, k {}x{}, v {}x{}",
            q.rows(),
            q.cols(),
            k.rows(),
            k.cols(),
            v.rows(),
            v.cols()
        )));
    }
    if causal && q.rows() != k.rows() {
        return Err(Error::ShapeMismatch(
            "causal attention requires square score matrix".into(),
        ));
    }
    let scale = 1.0 / (d as f64).sqrt();
    let n = q.rows();
    let m = k.rows();
    let mut out = Mat::zeros(n, v.cols());
    let mut logits = vec![0.0; m];
    for i in 0..n {
        let limit = if causal { i + 1 } else { m };
        let qi = q.row(i);
        let mut row_max = f64::NEG_INFINITY;
        for j in 0..limit {
            let s = dot(qi, k.row(j)) * scale;
            logits[j] = s;
            row_max = row_max.max(s);
        }
        let mut denom = 0.0;
        for l in logits.iter_mut().take(limit) {
            *l = (*l - row_max).exp();
            denom += *l;
        }
        let inv = 1.0 / denom;
        let out_row = out.row_mut(i);
        for j in 0..limit {
            let w = logits[j] * inv;
            for (o, x) in out_row.iter_mut().zip(v.row(j)) {
                *o += w * x;
            }
        }
    }
    Ok(out)
}

/// Relative L1 distance: `Σ|a - b| / Σ|b|`.
pub fn relative_l1(approx: &Mat, reference: &Mat) -> Result<f64> {
    if approx.rows() != reference.rows() || approx.cols() != reference.cols() {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            approx.rows(),
            approx.cols(),
            reference.rows(),
            reference.cols()
        )));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (a, b) in approx.data().iter().zip(reference.data()) {
        num += (a - b).abs();
        den += b.abs();
    }
    if den == 0.0 {
        return Err(Error::DegenerateReference);
    }
    Ok(num / den)
}

/// Mean cosine similarity between each row of a block and the block's
/// mean row. Measures how faithfully the mean-pooled row stands in for
/// the block. Cosine against a zero vector is defined as 0.
pub fn self_similarity(m: &Mat, row_start: usize, n_rows: usize) -> f64 {
    assert!(n_rows >= 1 && row_start + n_rows <= m.rows());
    let mean = m.mean_row(row_start, n_rows);
    let mean_norm = norm(&mean);
    if mean_norm == 0.0 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in row_start..row_start + n_rows {
        let r = m.row(i);
        let rn = norm(r);
        if rn > 0.0 {
            acc += dot(r, &mean) / (rn * mean_norm);
        }
    }
    acc / n_rows as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;
    use rand_distr::StandardNormal;

    fn randn_mat(rng: &mut ChaCha12Rng, rows: usize, cols: usize) -> Mat {
        Mat::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
    }

    /// Straightforward three-loop reference, written before the optimized
    /// path and kept deliberately naive.
    fn brute_force_attention(q: &Mat, k: &Mat, v: &Mat, causal: bool) -> Mat {
        let d = q.cols() as f64;
        let mut out = Mat::zeros(q.rows(), v.cols());
        for i in 0..q.rows() {
            let limit = if causal { i + 1 } else { k.rows() };
            let mut weights = Vec::new();
            for j in 0..limit {
                let mut s = 0.0;
                for t in 0..q.cols() {
                    s += q.get(i, t) * k.get(j, t);
                }
                weights.push((s / d.sqrt()).exp());
            }
            let total: f64 = weights.iter().sum();
            for j in 0..limit {
                for c in 0..v.cols() {
                    let cur = out.get(i, c);
                    out.set(i, c, cur + weights[j] / total * v.get(j, c));
                }
            }
        }
        out
    }

    #[test]
    fn single_row_returns_v_exactly() {
        let q = Mat::from_rows(&[vec![3.0, -1.0, 2.0, 0.5]]);
        let k = Mat::from_rows(&[vec![0.2, 0.4, -0.1, 1.0]]);
        let v = Mat::from_rows(&[vec![7.0, -2.0, 0.25, 9.0]]);
        let out = dense_attention(&q, &k, &v, true).unwrap();
        assert_eq!(out.row(0), v.row(0));
    }

    #[test]
    fn identical_keys_give_prefix_mean_of_v() {
        let n = 6;
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let q = randn_mat(&mut rng, n, 4);
        let k = Mat::from_fn(n, 4, |_, j| [0.3, -0.7, 1.1, 0.0][j]);
        let v = randn_mat(&mut rng, n, 4);
        let out = dense_attention(&q, &k, &v, true).unwrap();
        for i in 0..n {
            let mean = v.mean_row(0, i + 1);
            for (a, b) in out.row(i).iter().zip(&mean) {
                assert!((a - b).abs() < 1e-12, "row {i}");
            }
        }
    }

    #[test]
    fn matches_brute_force_on_random_instance() {
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        for causal in [false, true] {
            let q = randn_mat(&mut rng, 8, 4);
            let k = randn_mat(&mut rng, 8, 4);
            let v = randn_mat(&mut rng, 8, 4);
            let fast = dense_attention(&q, &k, &v, causal).unwrap();
            let slow = brute_force_attention(&q, &k, &v, causal);
            assert!(relative_l1(&fast, &slow).unwrap() < 1e-6);
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let q = Mat::zeros(4, 4);
        let k = Mat::zeros(4, 3);
        let v = Mat::zeros(4, 4);
        assert!(dense_attention(&q, &k, &v, false).is_err());
    }

    #[test]
    fn relative_l1_identical_is_zero() {
        let m = Mat::from_rows(&[vec![1.0, -2.0], vec![0.5, 3.0]]);
        assert_eq!(relative_l1(&m, &m).unwrap(), 0.0);
    }

    #[test]
    fn relative_l1_zero_approx_is_one() {
        let m = Mat::from_rows(&[vec![1.0, -2.0], vec![0.5, 3.0]]);
        let z = Mat::zeros(2, 2);
        assert!((relative_l1(&z, &m).unwrap() - 1.0).abs() < 1e-15);
    }

    // Scaling identity: a 10% elementwise inflation gives exactly 0.1.
    #[test]
    fn relative_l1_scaling_identity() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let m = randn_mat(&mut rng, 5, 7);
        let scaled = Mat::from_fn(5, 7, |i, j| 1.1 * m.get(i, j));
        let e = relative_l1(&scaled, &m).unwrap();
        assert!((e - 0.1).abs() < 1e-12, "{e}");
    }

    #[test]
    fn relative_l1_zero_reference_is_error() {
        let z = Mat::zeros(2, 2);
        assert!(matches!(
            relative_l1(&z, &z),
            Err(Error::DegenerateReference)
        ));
    }

    #[test]
    fn self_similarity_identical_rows_is_one() {
        let m = Mat::from_rows(&vec![vec![1.0, 2.0, -1.0]; 5]);
        assert!((self_similarity(&m, 0, 5) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn self_similarity_cancelling_rows_is_zero() {
        let m = Mat::from_rows(&[vec![1.0, -2.0, 3.0], vec![-1.0, 2.0, -3.0]]);
        assert_eq!(self_similarity(&m, 0, 2), 0.0);
    }

    // 64 i.i.d. standard-normal rows of dim 64: weak positive coherence.
    // Value computed once on this seeded instance and frozen.
    #[test]
    fn self_similarity_iid_gaussian_block() {
        let mut rng = ChaCha12Rng::seed_from_u64(64);
        let m = randn_mat(&mut rng, 64, 64);
        let score = self_similarity(&m, 0, 64);
        assert!(score > 0.0 && score < 0.35, "score {score}");
        assert!((score - SELF_SIM_FROZEN).abs() < 1e-12, "score {score}");
    }

    // Frozen from the run above; guards against accidental semantic drift.
    const SELF_SIM_FROZEN: f64 = 0.11433018692324257;
}

//! Shared brute-force oracles for the integration and acceptance suites.
//! Deliberately naive and independent of the library's optimized paths.

use blocktune::latent::SparseParams;
use blocktune::mat::Mat;
use blocktune::sparse::{build_coarse_mask, BlockGrid};

/// Dense-solve GP oracle: explicit Gauss-Jordan inverse of the kernel
/// matrix, standardization replicated by hand.
pub fn gp_oracle_posterior(
    obs: &[(f64, f64, f64)], // (s, y, noise_scale)
    length_scale: f64,
    noise_var: f64,
    s: f64,
) -> (f64, f64) {
    let n = obs.len();
    let mean = obs.iter().map(|o| o.1).sum::<f64>() / n as f64;
    let var = obs.iter().map(|o| (o.1 - mean).powi(2)).sum::<f64>() / n as f64;
    let std = var.sqrt().max(1e-12);
    let kern = |a: f64, b: f64| blocktune::gp::matern52(a, b, length_scale);
    let mut k = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            k[i][j] = kern(obs[i].0, obs[j].0);
            if i == j {
                k[i][j] += noise_var * obs[i].2;
            }
        }
    }
    let kinv = invert(&k);
    let kstar: Vec<f64> = obs.iter().map(|o| kern(s, o.0)).collect();
    let y: Vec<f64> = obs.iter().map(|o| (o.1 - mean) / std).collect();
    let mut mu = 0.0;
    let mut quad = 0.0;
    for i in 0..n {
        let mut ki_y = 0.0;
        let mut ki_k = 0.0;
        for j in 0..n {
            ki_y += kinv[i][j] * y[j];
            ki_k += kinv[i][j] * kstar[j];
        }
        mu += kstar[i] * ki_y;
        quad += kstar[i] * ki_k;
    }
    (mean + std * mu, std * std * (1.0 - quad).max(0.0))
}

fn invert(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut aug: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| aug[i][col].abs().partial_cmp(&aug[j][col].abs()).unwrap())
            .unwrap();
        aug.swap(col, pivot);
        let p = aug[col][col];
        for x in aug[col].iter_mut() {
            *x /= p;
        }
        for row in 0..n {
            if row != col {
                let f = aug[row][col];
                for j in 0..2 * n {
                    aug[row][j] -= f * aug[col][j];
                }
            }
        }
    }
    aug.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// Mask-and-renormalize sparse-attention oracle: materializes the full
/// score matrix, re-derives tile decisions from it, and recomputes the
/// masked softmax from scratch.
pub fn oracle_sparse_attention(
    q: &Mat,
    k: &Mat,
    v: &Mat,
    params: &SparseParams,
    grid: &BlockGrid,
) -> (Mat, f64) {
    let b = grid.block_size;
    let nk = grid.n_key_blocks;
    let nq = grid.n_query_blocks;
    let d = q.cols() as f64;
    let mask = build_coarse_mask(q, k, params, grid).unwrap();

    let full = Mat::from_fn(q.rows(), k.rows(), |i, j| {
        if grid.causal && j > i {
            f64::NEG_INFINITY
        } else {
            blocktune::mat::dot(q.row(i), k.row(j)) / d.sqrt()
        }
    });

    let tile_max = |qb: usize, kb: usize| -> f64 {
        let mut m = f64::NEG_INFINITY;
        for i in qb * b..(qb + 1) * b {
            for j in kb * b..(kb + 1) * b {
                m = m.max(full.get(i, j));
            }
        }
        m
    };

    let mut survived = vec![false; nq * nk];
    let mut n_survived = 0;
    for qb in 0..nq {
        let kept: Vec<usize> = (0..nk)
            .filter(|&kb| grid.admissible(qb, kb) && mask.kept(qb, kb))
            .collect();
        let qmax = kept
            .iter()
            .map(|&kb| tile_max(qb, kb))
            .fold(f64::NEG_INFINITY, f64::max);
        for &kb in &kept {
            if tile_max(qb, kb) - qmax >= params.lambda {
                survived[qb * nk + kb] = true;
                n_survived += 1;
            }
        }
    }

    let mut out = Mat::zeros(q.rows(), v.cols());
    for i in 0..q.rows() {
        let qb = i / b;
        let cols: Vec<usize> = (0..k.rows())
            .filter(|&j| survived[qb * nk + j / b] && full.get(i, j) > f64::NEG_INFINITY)
            .collect();
        let m = cols
            .iter()
            .map(|&j| full.get(i, j))
            .fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = cols.iter().map(|&j| (full.get(i, j) - m).exp()).sum();
        for &j in &cols {
            let w = (full.get(i, j) - m).exp() / denom;
            for c in 0..v.cols() {
                out.set(i, c, out.get(i, c) + w * v.get(j, c));
            }
        }
    }
    let sparsity = 1.0 - n_survived as f64 / grid.n_admissible() as f64;
    (out, sparsity)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    0.5 * (v[v.len() / 2] + v[(v.len() - 1) / 2])
}

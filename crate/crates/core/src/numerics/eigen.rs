//! Symmetric eigen-solvers: cyclic Jacobi for small dense matrices and
//! orthogonal (subspace) iteration for the leading eigenpairs of a large
//! operator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Tensor2;

/// Eigen-decomposition of a small symmetric matrix. Returns eigenvalues and
/// a matrix whose columns are the matching unit eigenvectors.
pub fn jacobi_eigen(a: &Tensor2) -> (Vec<f64>, Tensor2) {
    let n = a.rows();
    assert_eq!(n, a.cols(), "jacobi_eigen needs a square matrix");
    let mut m = a.clone();
    let mut v = Tensor2::identity(n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m.get(i, j).powi(2))
            .sum();
        let scale: f64 = m.sq_norm().max(f64::MIN_POSITIVE);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m.get(p, q);
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (m.get(q, q) - m.get(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m.get(k, p);
                    let mkq = m.get(k, q);
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let mpk = m.get(p, k);
                    let mqk = m.get(q, k);
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    ((0..n).map(|i| m.get(i, i)).collect(), v)
}

/// Modified Gram-Schmidt on the columns of `q`, in place.
fn orthonormalize_columns(q: &mut Tensor2) {
    let mut cols = q.transpose();
    let d = cols.rows();
    for j in 0..d {
        for prev in 0..j {
            let (done, rest) = cols.data_mut().split_at_mut(j * q.rows());
            let p = &done[prev * q.rows()..(prev + 1) * q.rows()];
            let c = &mut rest[..q.rows()];
            let dot: f64 = c.iter().zip(p).map(|(a, b)| a * b).sum();
            c.iter_mut().zip(p).for_each(|(a, b)| *a -= dot * b);
        }
        let c = cols.row_mut(j);
        let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-300 {
            c.iter_mut().for_each(|v| *v /= norm);
        }
    }
    *q = cols.transpose();
}

/// Leading `rank` eigenpairs (by absolute eigenvalue) of the symmetric
/// operator `apply: X ↦ M·X`, via orthogonal iteration followed by a
/// Rayleigh-Ritz rotation. Deterministic for a fixed `seed`.
///
/// Returns eigenvalues sorted by decreasing magnitude and an `n × rank`
/// matrix of the matching eigenvectors.
pub fn top_eigen<F>(n: usize, rank: usize, iterations: usize, seed: u64, mut apply: F) -> (Vec<f64>, Tensor2)
where
    F: FnMut(&Tensor2) -> Tensor2,
{
    let rank = rank.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = Tensor2::randn(n, rank, 1.0, &mut rng);
    orthonormalize_columns(&mut q);
    for _ in 0..iterations {
        q = apply(&q);
        orthonormalize_columns(&mut q);
    }
    let mq = apply(&q);
    let small = q.t_matmul(&mq).expect("shapes line up");
    let mut sym = small.clone();
    for i in 0..rank {
        for j in 0..rank {
            sym.set(i, j, 0.5 * (small.get(i, j) + small.get(j, i)));
        }
    }
    let (vals, vecs) = jacobi_eigen(&sym);
    let rotated = q.matmul(&vecs).expect("shapes line up");
    let mut order: Vec<usize> = (0..rank).collect();
    order.sort_by(|&a, &b| vals[b].abs().total_cmp(&vals[a].abs()).then(a.cmp(&b)));
    let mut out = Tensor2::zeros(n, rank);
    for (dst, &src) in order.iter().enumerate() {
        for i in 0..n {
            out.set(i, dst, rotated.get(i, src));
        }
    }
    (order.iter().map(|&i| vals[i]).collect(), out)
}

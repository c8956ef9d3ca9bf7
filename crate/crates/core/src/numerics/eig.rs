//! Symmetric eigendecomposition (cyclic Jacobi) and the Gram-matrix route
//! to top-k eigenvectors of a gradient second-moment matrix.

use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

const MAX_SWEEPS: usize = 64;

/// Relative tolerance for accepting the input as symmetric.
const SYMMETRY_RTOL: f64 = 1e-10;

/// Eigenvalues below RANK_RTOL * lambda_1 count as numerically zero.
const RANK_RTOL: f64 = 1e-12;

/// Full eigendecomposition of a symmetric matrix by cyclic Jacobi sweeps.
///
/// Returns eigenvalues in descending order (stable under ties, so equal
/// eigenvalues keep the diagonal order the sweep produced) and the matching
/// eigenvector columns, each signed so its largest-magnitude entry is
/// positive (lowest index wins magnitude ties).
pub fn sym_eig_full(m: &DenseMatrix) -> Result<(Vec<f64>, DenseMatrix)> {
    if m.rows() != m.cols() {
        return Err(Error::DimMismatch(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    if !m.is_finite() {
        return Err(Error::Contract("non-finite entry in matrix".into()));
    }
    let scale = m.max_abs();
    if m.asymmetry() > SYMMETRY_RTOL * scale {
        return Err(Error::Contract(format!(
            "matrix is not symmetric: max |M_ij - M_ji| = {} exceeds {}",
            m.asymmetry(),
            SYMMETRY_RTOL * scale
        )));
    }

    let n = m.rows();
    let mut a: Vec<f64> = m.data().to_vec();
    let mut v = DenseMatrix::identity(n);
    if n == 0 {
        return Ok((Vec::new(), v));
    }

    let term = 1e-15 * scale.max(f64::MIN_POSITIVE);
    for _sweep in 0..MAX_SWEEPS {
        let mut off_max = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off_max = off_max.max(a[p * n + q].abs());
            }
        }
        if off_max <= term {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() <= term {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    1.0 / (tau - (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for i in 0..n {
                    if i == p || i == q {
                        continue;
                    }
                    let aip = a[i * n + p];
                    let aiq = a[i * n + q];
                    a[i * n + p] = c * aip - s * aiq;
                    a[p * n + i] = a[i * n + p];
                    a[i * n + q] = s * aip + c * aiq;
                    a[q * n + i] = a[i * n + q];
                }
                for i in 0..n {
                    let vip = v.get(i, p);
                    let viq = v.get(i, q);
                    v.set(i, p, c * vip - s * viq);
                    v.set(i, q, s * vip + c * viq);
                }
            }
        }
    }

    let diag: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort: ties keep ascending original index.
    order.sort_by(|&i, &j| diag[j].partial_cmp(&diag[i]).unwrap());

    let eigenvalues: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
    let mut vectors = DenseMatrix::zeros(n, n);
    for (out_col, &src_col) in order.iter().enumerate() {
        for i in 0..n {
            vectors.set(i, out_col, v.get(i, src_col));
        }
    }
    fix_column_signs(&mut vectors);
    Ok((eigenvalues, vectors))
}

/// Top-k eigenpairs of a symmetric matrix, descending.
pub fn sym_eig_topk(m: &DenseMatrix, k: usize) -> Result<(Vec<f64>, DenseMatrix)> {
    let d = m.rows();
    if k == 0 || k > d {
        return Err(Error::Contract(format!("k = {k} out of range for a {d}x{d} matrix")));
    }
    let (vals, vecs) = sym_eig_full(m)?;
    let mut top = DenseMatrix::zeros(d, k);
    for j in 0..k {
        for i in 0..d {
            top.set(i, j, vecs.get(i, j));
        }
    }
    Ok((vals[..k].to_vec(), top))
}

/// Orthonormal basis for the top-k eigenspace of (1/m) G^T G, computed from
/// the m x m Gram matrix (1/m) G G^T so the p x p second-moment matrix is
/// never materialized. Returns a p x k matrix with orthonormal columns and
/// the leading min(m, k+1) eigenvalues of the second-moment matrix (for
/// eigengap diagnostics).
pub fn gram_topk(g: &DenseMatrix, k: usize) -> Result<(DenseMatrix, Vec<f64>)> {
    let (m, p) = (g.rows(), g.cols());
    if k == 0 || k > m.min(p) {
        return Err(Error::Contract(format!(
            "k = {k} out of range for {m} gradient rows of dimension {p}"
        )));
    }
    if !g.is_finite() {
        return Err(Error::Contract("non-finite entry in gradient rows".into()));
    }

    // S = (1/m) G G^T, filled symmetrically from one dot product per pair.
    let mut s = DenseMatrix::zeros(m, m);
    let inv_m = 1.0 / m as f64;
    for i in 0..m {
        for j in i..m {
            let mut acc = 0.0;
            let (ri, rj) = (g.row(i), g.row(j));
            for t in 0..p {
                acc += ri[t] * rj[t];
            }
            let val = acc * inv_m;
            s.set(i, j, val);
            s.set(j, i, val);
        }
    }

    let (vals, u) = sym_eig_full(&s)?;
    let lambda1 = vals[0].max(0.0);
    let rank = vals.iter().take_while(|&&l| l > RANK_RTOL * lambda1 && l > 0.0).count();
    if k > rank {
        return Err(Error::RankDeficient { requested: k, rank });
    }

    // v_i = G^T u_i / sqrt(m * lambda_i); same eigenvalue as (1/m) G^T G.
    let mut basis = DenseMatrix::zeros(p, k);
    for j in 0..k {
        let uj = u.column(j);
        let col = g.t_matvec(&uj);
        let inv_norm = 1.0 / (m as f64 * vals[j]).sqrt();
        for i in 0..p {
            basis.set(i, j, col[i] * inv_norm);
        }
    }

    // Modified Gram-Schmidt pass to pin orthonormality for clustered spectra.
    for j in 0..k {
        for prev in 0..j {
            let mut dot = 0.0;
            for i in 0..p {
                dot += basis.get(i, prev) * basis.get(i, j);
            }
            for i in 0..p {
                let val = basis.get(i, j) - dot * basis.get(i, prev);
                basis.set(i, j, val);
            }
        }
        let mut norm = 0.0;
        for i in 0..p {
            norm += basis.get(i, j) * basis.get(i, j);
        }
        let norm = norm.sqrt();
        if norm < 1e-12 {
            return Err(Error::RankDeficient { requested: k, rank: j });
        }
        for i in 0..p {
            basis.set(i, j, basis.get(i, j) / norm);
        }
    }
    fix_column_signs(&mut basis);

    let n_diag = vals.len().min(k + 1);
    Ok((basis, vals[..n_diag].to_vec()))
}

/// Makes the largest-magnitude entry of each column positive; among exact
/// magnitude ties the lowest row index decides.
fn fix_column_signs(m: &mut DenseMatrix) {
    for j in 0..m.cols() {
        let mut best = 0usize;
        let mut best_abs = m.get(0, j).abs();
        for i in 1..m.rows() {
            let a = m.get(i, j).abs();
            if a > best_abs {
                best_abs = a;
                best = i;
            }
        }
        if m.get(best, j) < 0.0 {
            for i in 0..m.rows() {
                m.set(i, j, -m.get(i, j));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;

    fn random_symmetric(n: usize, rng: &mut RngStream) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = rng.uniform(-1.0, 1.0);
                m.set(i, j, v);
                m.set(j, i, v);
            }
        }
        m
    }

    fn orthonormality_defect(v: &DenseMatrix) -> f64 {
        let k = v.cols();
        let mut worst = 0.0f64;
        for a in 0..k {
            for b in 0..k {
                let mut dot = 0.0;
                for i in 0..v.rows() {
                    dot += v.get(i, a) * v.get(i, b);
                }
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }

    #[test]
    fn diagonal_matrix_top1() {
        let m = DenseMatrix::from_rows(&[vec![3.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let (vals, v) = sym_eig_topk(&m, 1).unwrap();
        assert!((vals[0] - 3.0).abs() < 1e-14);
        assert!((v.get(0, 0) - 1.0).abs() < 1e-14);
        assert!(v.get(1, 0).abs() < 1e-14);
    }

    #[test]
    fn identity_degenerate_spectrum_tie_break() {
        let m = DenseMatrix::identity(2);
        let (vals, v) = sym_eig_topk(&m, 2).unwrap();
        assert_eq!(vals, vec![1.0, 1.0]);
        // Tie-break by index: columns come out as e1, e2.
        assert!((v.get(0, 0) - 1.0).abs() < 1e-14 && v.get(1, 0).abs() < 1e-14);
        assert!((v.get(1, 1) - 1.0).abs() < 1e-14 && v.get(0, 1).abs() < 1e-14);
    }

    #[test]
    fn random_6x6_matches_independent_eigensolver() {
        // Independent full-decomposition oracle on all 6 pairs, top 3 compared.
        let mut rng = RngStream::new(2024, 6);
        let m = random_symmetric(6, &mut rng);
        let (vals, vecs) = sym_eig_topk(&m, 3).unwrap();
        let (oracle_vals, oracle_vecs) = featproj_oracles::sym_eig_full(m.data(), 6);
        for i in 0..3 {
            assert!(
                (vals[i] - oracle_vals[i]).abs() <= 1e-12 * (1.0 + oracle_vals[i].abs()),
                "eigenvalue {i}: {} vs oracle {}",
                vals[i],
                oracle_vals[i]
            );
            // Compare up to sign (oracle uses its own convention).
            let mut dot = 0.0;
            for r in 0..6 {
                dot += vecs.get(r, i) * oracle_vecs[r * 6 + i];
            }
            assert!(
                (dot.abs() - 1.0).abs() < 1e-10,
                "eigenvector {i} misaligned with oracle: |dot| = {}",
                dot.abs()
            );
        }
    }

    #[test]
    fn residual_and_orthonormality_on_random_input() {
        let mut rng = RngStream::new(7, 1);
        for trial in 0..20 {
            let n = 3 + (trial % 6);
            let m = random_symmetric(n, &mut rng);
            let (vals, v) = sym_eig_topk(&m, n).unwrap();
            assert!(orthonormality_defect(&v) <= 1e-8);
            let bound = 1e-7 * (vals[0].abs() + 1.0);
            for j in 0..n {
                let col = v.column(j);
                let mv = m.matvec(&col);
                let mut res = 0.0;
                for i in 0..n {
                    let r = mv[i] - vals[j] * col[i];
                    res += r * r;
                }
                assert!(res.sqrt() <= bound, "residual {} > {}", res.sqrt(), bound);
            }
            // Descending order.
            for j in 1..n {
                assert!(vals[j - 1] >= vals[j]);
            }
        }
    }

    #[test]
    fn rejects_asymmetric_and_nonfinite() {
        let m = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![0.5, 1.0]]).unwrap();
        assert!(sym_eig_topk(&m, 1).is_err());
        let m = DenseMatrix::from_rows(&[vec![f64::NAN, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(sym_eig_topk(&m, 1).is_err());
    }

    #[test]
    fn gram_rank1_duplicate_rows() {
        let g = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let (basis, _) = gram_topk(&g, 1).unwrap();
        assert!((basis.get(0, 0) - 1.0).abs() < 1e-12);
        assert!(basis.get(1, 0).abs() < 1e-12);
    }

    #[test]
    fn gram_orthogonal_rows() {
        let g = DenseMatrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let (basis, _) = gram_topk(&g, 2).unwrap();
        // Dominant direction first (norm 2), then the norm-1 direction.
        assert!((basis.get(0, 0) - 1.0).abs() < 1e-12);
        assert!(basis.get(1, 0).abs() < 1e-12);
        assert!((basis.get(1, 1) - 1.0).abs() < 1e-12);
        assert!(basis.get(0, 1).abs() < 1e-12);
    }

    #[test]
    fn gram_rank_error_names_rank() {
        let g = DenseMatrix::from_rows(&[vec![1.0, 0.0, 0.0], vec![2.0, 0.0, 0.0]]).unwrap();
        match gram_topk(&g, 2) {
            Err(Error::RankDeficient { requested, rank }) => {
                assert_eq!(requested, 2);
                assert_eq!(rank, 1);
            }
            other => panic!("expected rank error, got {other:?}"),
        }
    }

    #[test]
    fn gram_matches_direct_eig_on_seeded_instance() {
        let mut rng = RngStream::new(55, 0);
        let (m, p, k) = (5, 20, 3);
        let mut rows = Vec::new();
        for _ in 0..m {
            rows.push((0..p).map(|_| rng.uniform(-1.0, 1.0)).collect::<Vec<_>>());
        }
        let g = DenseMatrix::from_rows(&rows).unwrap();
        let (basis, _) = gram_topk(&g, k).unwrap();

        // Direct route: materialize M = (1/m) G^T G and eigendecompose it.
        let mut full = DenseMatrix::zeros(p, p);
        for a in 0..p {
            for b in 0..p {
                let mut acc = 0.0;
                for i in 0..m {
                    acc += g.get(i, a) * g.get(i, b);
                }
                full.set(a, b, acc / m as f64);
            }
        }
        let (_, direct) = sym_eig_topk(&full, k).unwrap();

        // Same subspace: projector difference below 1e-8 elementwise.
        let mut worst = 0.0f64;
        for a in 0..p {
            for b in 0..p {
                let mut pg = 0.0;
                let mut pd = 0.0;
                for j in 0..k {
                    pg += basis.get(a, j) * basis.get(b, j);
                    pd += direct.get(a, j) * direct.get(b, j);
                }
                worst = worst.max((pg - pd).abs());
            }
        }
        assert!(worst < 1e-8, "projector mismatch {worst}");
    }
}

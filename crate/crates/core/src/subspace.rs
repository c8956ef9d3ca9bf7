//! Public gradient subspace: estimate the top-k eigenspace of the gradient
//! second-moment matrix on public samples, hold it as an orthonormal basis,
//! and project noisy gradients onto it.

use crate::error::{Error, Result};
use crate::models::{loss_and_per_sample_grad, LossView, Model};
use crate::numerics::{gram_topk, DenseMatrix, ParamVector};

const ORTHONORMALITY_TOL: f64 = 1e-8;

/// Orthonormal p x k basis of the public gradient subspace.
#[derive(Debug, Clone)]
pub struct ProjectionBasis {
    v_hat: DenseMatrix,
    refreshed_at_step: usize,
}

impl ProjectionBasis {
    /// Validates orthonormality (max |V^T V - I| <= 1e-8) before accepting
    /// the basis.
    pub fn new(v_hat: DenseMatrix, refreshed_at_step: usize) -> Result<Self> {
        let k = v_hat.cols();
        let mut worst = 0.0f64;
        for a in 0..k {
            for b in a..k {
                let mut dot = 0.0;
                for i in 0..v_hat.rows() {
                    dot += v_hat.get(i, a) * v_hat.get(i, b);
                }
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        if worst > ORTHONORMALITY_TOL {
            return Err(Error::Contract(format!(
                "basis columns are not orthonormal: defect {worst}"
            )));
        }
        Ok(Self { v_hat, refreshed_at_step })
    }

    /// The exact identity basis (k = p). Projection through it is a bitwise
    /// no-op, which the variant reduction tests rely on.
    pub fn identity(p: usize) -> Self {
        Self { v_hat: DenseMatrix::identity(p), refreshed_at_step: 0 }
    }

    pub fn p(&self) -> usize {
        self.v_hat.rows()
    }

    pub fn k(&self) -> usize {
        self.v_hat.cols()
    }

    pub fn refreshed_at_step(&self) -> usize {
        self.refreshed_at_step
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.v_hat
    }
}

/// V (V^T g): the Euclidean projection of g onto the basis span.
pub fn project(basis: &ProjectionBasis, g: &ParamVector) -> Result<ParamVector> {
    if g.dim() != basis.p() {
        return Err(Error::DimMismatch(format!(
            "gradient dimension {} vs basis rows {}",
            g.dim(),
            basis.p()
        )));
    }
    let coeffs = basis.v_hat.t_matvec(g.as_slice());
    Ok(ParamVector::from_vec(basis.v_hat.matvec(&coeffs)))
}

/// Diagnostics captured at basis refresh time.
#[derive(Debug, Clone, Copy)]
pub struct BasisDiagnostics {
    pub step: usize,
    pub leading_eigenvalue: f64,
    /// lambda_k - lambda_{k+1} when the spectrum extends past k.
    pub eigengap: Option<f64>,
}

/// Estimates the basis from full-loss per-sample gradients on the public
/// set (Gram route; the p x p second-moment matrix is never formed).
pub fn estimate_basis<M: Model>(
    model: &M,
    w: &ParamVector,
    public_set: &[&M::Sample],
    k: usize,
    step: usize,
) -> Result<(ProjectionBasis, BasisDiagnostics)> {
    let m = public_set.len();
    if m < k {
        return Err(Error::Contract(format!(
            "need at least k = {k} public samples, got {m}"
        )));
    }
    let (_, grads) = loss_and_per_sample_grad(model, w, public_set, LossView::Full)?;
    let (v_hat, eigs) = gram_topk(&grads, k)?;
    let diag = BasisDiagnostics {
        step,
        leading_eigenvalue: eigs[0],
        eigengap: if eigs.len() > k { Some(eigs[k - 1] - eigs[k]) } else { None },
    };
    Ok((ProjectionBasis { v_hat, refreshed_at_step: step }, diag))
}

/// The basis refreshes on step 0 and every `interval` steps after.
pub fn refresh_policy(step: usize, interval: usize) -> bool {
    debug_assert!(interval >= 1);
    step % interval == 0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{LinearModel, RegressionSample};
    use crate::numerics::{sym_eig_topk, RngStream};

    #[test]
    fn identity_basis_projects_bitwise() {
        let basis = ProjectionBasis::identity(5);
        let g = ParamVector::from_vec(vec![1.5, -2.25, 0.0, 3.0, -0.5]);
        let out = project(&basis, &g).unwrap();
        assert_eq!(out.as_slice(), g.as_slice());
    }

    #[test]
    fn axis_basis_in_r2() {
        let v = DenseMatrix::from_vec(2, 1, vec![1.0, 0.0]).unwrap();
        let basis = ProjectionBasis::new(v, 0).unwrap();
        let g = ParamVector::from_vec(vec![3.0, 4.0]);
        let out = project(&basis, &g).unwrap();
        assert_eq!(out.as_slice(), &[3.0, 0.0]);
    }

    #[test]
    fn projection_is_idempotent_and_contractive() {
        let mut rng = RngStream::new(31, 0);
        for _ in 0..100 {
            // Random orthonormal 2-column basis in R^6 via the Gram route.
            let rows: Vec<Vec<f64>> =
                (0..3).map(|_| (0..6).map(|_| rng.uniform(-1.0, 1.0)).collect()).collect();
            let g_mat = DenseMatrix::from_rows(&rows).unwrap();
            let (v, _) = gram_topk(&g_mat, 2).unwrap();
            let basis = ProjectionBasis::new(v, 0).unwrap();
            let g = ParamVector::from_vec((0..6).map(|_| rng.uniform(-2.0, 2.0)).collect());
            let once = project(&basis, &g).unwrap();
            let twice = project(&basis, &once).unwrap();
            let mut diff = 0.0f64;
            for i in 0..6 {
                diff += (once[i] - twice[i]).powi(2);
            }
            assert!(diff.sqrt() <= 1e-10 * g.norm().max(1.0), "not idempotent");
            assert!(once.norm() <= g.norm() * (1.0 + 1e-12), "projection grew the norm");
        }
    }

    #[test]
    fn full_basis_recovers_input_within_tolerance() {
        let mut rng = RngStream::new(32, 0);
        let rows: Vec<Vec<f64>> =
            (0..4).map(|_| (0..4).map(|_| rng.uniform(-1.0, 1.0)).collect()).collect();
        let g_mat = DenseMatrix::from_rows(&rows).unwrap();
        let (v, _) = gram_topk(&g_mat, 4).unwrap();
        let basis = ProjectionBasis::new(v, 0).unwrap();
        let g = ParamVector::from_vec(vec![0.3, -1.2, 2.0, 0.7]);
        let out = project(&basis, &g).unwrap();
        for i in 0..4 {
            assert!((out[i] - g[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn refresh_policy_matches_spec_examples() {
        assert!(refresh_policy(0, 50));
        assert!(!refresh_policy(49, 50));
        assert!(refresh_policy(100, 50));
    }

    // Linear-regression gradients are (r x, r): identical samples give a
    // rank-1 second moment along (x, 1).
    fn reg_sample(x: f64, y: f64) -> RegressionSample {
        RegressionSample { x: vec![x], y }
    }

    #[test]
    fn constant_gradient_set_gives_the_gradient_direction() {
        let model = LinearModel::new(1);
        let w = ParamVector::from_vec(vec![0.0, 0.0]);
        let samples = vec![reg_sample(1.0, 1.0), reg_sample(1.0, 1.0)];
        let refs: Vec<&RegressionSample> = samples.iter().collect();
        let (basis, _) = estimate_basis(&model, &w, &refs, 1, 0).unwrap();
        // gradient direction is proportional to (x, 1) = (1, 1)/sqrt(2)
        let s = 1.0 / 2f64.sqrt();
        assert!((basis.matrix().get(0, 0) - s).abs() < 1e-12);
        assert!((basis.matrix().get(1, 0) - s).abs() < 1e-12);
    }

    #[test]
    fn dominant_direction_wins_at_k1() {
        // Two orthogonal gradient directions with norms 2 and 1.
        // Gradients for w=0, sample (x, y): r = -y, grad = (-y x, -y).
        let model = LinearModel::new(1);
        let w = ParamVector::from_vec(vec![0.0, 0.0]);
        // sample A: x = 2/sqrt(2)... easier to target gradients directly:
        // (2, 0) requires y x = -2, y = 0: impossible with this model, so
        // approximate with a nearly-axis pair instead: gradients
        // g1 = (-y1 x1, -y1) = (2, eps) ~ dominant, g2 orthogonal-ish.
        // Simpler to validate through gram_topk directly here.
        let g = DenseMatrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let (basis, _) = gram_topk(&g, 1).unwrap();
        assert!((basis.get(0, 0) - 1.0).abs() < 1e-12);
        assert!(basis.get(1, 0).abs() < 1e-12);
        let _ = (model, w);
    }

    #[test]
    fn estimate_matches_explicit_second_moment_eig() {
        // Seeded linear-regression gradients, m = 8, p = 20 (19 features + bias).
        let model = LinearModel::new(19);
        let mut rng = RngStream::new(40, 0);
        let w = model.init_params(&mut rng);
        let samples: Vec<RegressionSample> = (0..8)
            .map(|_| RegressionSample {
                x: (0..19).map(|_| rng.uniform(-1.0, 1.0)).collect(),
                y: rng.uniform(-1.0, 1.0),
            })
            .collect();
        let refs: Vec<&RegressionSample> = samples.iter().collect();
        let (basis, _) = estimate_basis(&model, &w, &refs, 3, 0).unwrap();

        // Oracle: explicit 20x20 M(w) = (1/m) sum g g^T, direct eigensolve.
        let p = 20;
        let mut m_mat = DenseMatrix::zeros(p, p);
        for s in &samples {
            let (_, g) = model.private_loss_grad(w.as_slice(), s);
            for a in 0..p {
                for b in 0..p {
                    m_mat.set(a, b, m_mat.get(a, b) + g[a] * g[b] / 8.0);
                }
            }
        }
        let (_, direct) = sym_eig_topk(&m_mat, 3).unwrap();
        let mut worst = 0.0f64;
        for a in 0..p {
            for b in 0..p {
                let mut pg = 0.0;
                let mut pd = 0.0;
                for j in 0..3 {
                    pg += basis.matrix().get(a, j) * basis.matrix().get(b, j);
                    pd += direct.get(a, j) * direct.get(b, j);
                }
                worst = worst.max((pg - pd).abs());
            }
        }
        assert!(worst < 1e-8, "projector mismatch {worst}");
    }

    #[test]
    fn too_few_public_samples_is_an_error() {
        let model = LinearModel::new(3);
        let w = ParamVector::from_vec(vec![0.0; 4]);
        let samples = vec![reg_sample(1.0, 1.0)];
        let refs: Vec<&RegressionSample> = samples.iter().collect();
        assert!(estimate_basis(&model, &w, &refs, 2, 0).is_err());
    }

    #[test]
    fn noise_variance_reduction_factor() {
        // E ||P xi||^2 / ||xi||^2 = k/p for isotropic Gaussian noise.
        let (p, k, draws) = (40usize, 10usize, 1000usize);
        let mut rng = RngStream::new(50, 0);
        let rows: Vec<Vec<f64>> =
            (0..k + 4).map(|_| (0..p).map(|_| rng.normal()).collect()).collect();
        let g = DenseMatrix::from_rows(&rows).unwrap();
        let (v, _) = gram_topk(&g, k).unwrap();
        let basis = ProjectionBasis::new(v, 0).unwrap();
        let mut total = 0.0;
        for _ in 0..draws {
            let xi = ParamVector::from_vec((0..p).map(|_| rng.normal()).collect());
            let pxi = project(&basis, &xi).unwrap();
            total += (pxi.norm() / xi.norm()).powi(2);
        }
        let mean = total / draws as f64;
        let target = k as f64 / p as f64;
        assert!(
            (mean - target).abs() <= 0.1 * target,
            "noise ratio {mean} outside 10% of {target}"
        );
    }
}

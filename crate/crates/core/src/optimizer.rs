//! The training variants as one parameterized loop: plain SGD, DP-SGD
//! (per-sample clipping + Gaussian noise), projected DP-SGD, feature-DP,
//! and feature-projective DP-SGD.
//!
//! One step does, in order: per-sample private gradients, per-sample
//! clipping, noisy aggregation with a fixed denominator, subspace
//! projection of the noised aggregate, then the clean public-batch
//! gradient is added and the parameters move. Projection after noising is
//! enforced by type: the projector only accepts a [`NoisedAggregate`].

use serde::{Deserialize, Serialize};

use crate::accountant::{PrivacySpec, RdpCurve};
use crate::error::{Error, Result};
use crate::models::{loss_and_per_sample_grad, LossView, Model, TrainableMask};
use crate::numerics::{stream_label, DenseMatrix, ParamVector, RngStream};
use crate::subspace::{estimate_basis, project, refresh_policy, BasisDiagnostics, ProjectionBasis};

/// The training mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Sgd,
    DpSgd,
    ProjDpSgd,
    Fdp,
    FeatureProjective,
}

impl Variant {
    pub fn is_private(&self) -> bool {
        !matches!(self, Variant::Sgd)
    }

    pub fn uses_projection(&self) -> bool {
        matches!(self, Variant::ProjDpSgd | Variant::FeatureProjective)
    }

    pub fn uses_public_branch(&self) -> bool {
        matches!(self, Variant::Fdp | Variant::FeatureProjective)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Variant::Sgd => "sgd",
            Variant::DpSgd => "dpsgd",
            Variant::ProjDpSgd => "proj_dpsgd",
            Variant::Fdp => "fdp",
            Variant::FeatureProjective => "feature_projective",
        }
    }

    pub fn all() -> [Variant; 5] {
        [Variant::Sgd, Variant::DpSgd, Variant::ProjDpSgd, Variant::Fdp, Variant::FeatureProjective]
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(Variant::Sgd),
            "dpsgd" => Ok(Variant::DpSgd),
            "proj_dpsgd" => Ok(Variant::ProjDpSgd),
            "fdp" => Ok(Variant::Fdp),
            "feature_projective" => Ok(Variant::FeatureProjective),
            other => Err(Error::InvalidConfig(format!("unknown variant '{other}'"))),
        }
    }
}

/// Per-step diagnostics.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub step: usize,
    /// Mean per-sample gradient norm before clipping (0 for an empty batch).
    pub grad_norm_pre_clip: f64,
    /// Fraction of batch samples whose gradient exceeded the clip norm.
    pub clipped_fraction: f64,
    /// Norm of the clipped, aggregated signal before noise.
    pub signal_norm: f64,
    /// Norm of the injected noise term after the batch normalization.
    pub noise_norm: f64,
    /// Norm of the private update after projection.
    pub projected_norm: f64,
    /// Mean private loss over the private batch (NaN for an empty batch).
    pub loss_private: f64,
    /// Mean public loss over the public batch (NaN when the branch is off).
    pub loss_public: f64,
}

/// Rescales g to norm at most `clip_norm` (Eq.-3-style per-sample clipping).
pub fn clip_gradient(g: &ParamVector, clip_norm: f64) -> Result<ParamVector> {
    if clip_norm <= 0.0 {
        return Err(Error::Contract(format!("clip norm {clip_norm} must be > 0")));
    }
    if !g.is_finite() {
        return Err(Error::Contract("non-finite gradient".into()));
    }
    let norm = g.norm();
    if norm <= clip_norm {
        Ok(g.clone())
    } else {
        let mut out = g.clone();
        out.scale(clip_norm / norm);
        Ok(out)
    }
}

/// Clips every row of a per-sample gradient matrix in place. Returns the
/// mean pre-clip norm and the clipped fraction.
pub fn clip_rows_in_place(grads: &mut DenseMatrix, clip_norm: f64) -> Result<(f64, f64)> {
    if clip_norm <= 0.0 {
        return Err(Error::Contract(format!("clip norm {clip_norm} must be > 0")));
    }
    let b = grads.rows();
    if b == 0 {
        return Ok((0.0, 0.0));
    }
    let mut norm_total = 0.0;
    let mut clipped = 0usize;
    for i in 0..b {
        let row = grads.row_mut(i);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() {
            return Err(Error::Contract(format!("non-finite gradient in row {i}")));
        }
        norm_total += norm;
        if norm > clip_norm {
            clipped += 1;
            let s = clip_norm / norm;
            for v in row {
                *v *= s;
            }
        }
    }
    Ok((norm_total / b as f64, clipped as f64 / b as f64))
}

/// A privatized aggregate: proof that Gaussian noise has already been
/// added, so projection can only happen afterwards (post-processing).
#[derive(Debug)]
pub struct NoisedAggregate {
    values: ParamVector,
    noise_norm: f64,
    signal_norm: f64,
}

impl NoisedAggregate {
    pub fn noise_norm(&self) -> f64 {
        self.noise_norm
    }

    pub fn signal_norm(&self) -> f64 {
        self.signal_norm
    }
}

/// (1/denom) (sum_i g_i + nu) with nu ~ N(0, sigma^2 C^2 I) over trainable
/// coordinates. Every row must already be clipped to `clip_norm`; an
/// unclipped row is a privacy bug and fails loudly. `denom` is the fixed
/// batch normalizer (the expected batch size under Poisson sampling).
pub fn noisy_aggregate(
    per_sample: &DenseMatrix,
    clip_norm: f64,
    sigma: f64,
    denom: f64,
    mask: TrainableMask,
    rng: &mut RngStream,
) -> Result<NoisedAggregate> {
    if denom <= 0.0 {
        return Err(Error::Contract(format!("batch denominator {denom} must be > 0")));
    }
    if sigma < 0.0 {
        return Err(Error::Contract(format!("sigma {sigma} must be >= 0")));
    }
    let p = per_sample.cols();
    let tol = clip_norm * (1.0 + 1e-12);
    for i in 0..per_sample.rows() {
        let norm = per_sample.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > tol {
            return Err(Error::Contract(format!(
                "privacy bug: row {i} has norm {norm} above clip threshold {clip_norm}"
            )));
        }
    }

    let inv = 1.0 / denom;
    let mut sum = vec![0.0; p];
    for i in 0..per_sample.rows() {
        for (s, v) in sum.iter_mut().zip(per_sample.row(i).iter()) {
            *s += v;
        }
    }
    let mut signal_sq = 0.0;
    for s in &mut sum {
        *s *= inv;
        signal_sq += *s * *s;
    }

    let mut noise_sq = 0.0;
    if sigma > 0.0 {
        let std = sigma * clip_norm;
        if !std.is_finite() {
            return Err(Error::Contract("noise std is not finite; clip norm must be finite when sigma > 0".into()));
        }
        for (i, s) in sum.iter_mut().enumerate() {
            if mask.is_trainable(i) {
                let nu = std * rng.normal() * inv;
                noise_sq += nu * nu;
                *s += nu;
            }
        }
    }
    Ok(NoisedAggregate {
        values: ParamVector::from_vec(sum),
        noise_norm: noise_sq.sqrt(),
        signal_norm: signal_sq.sqrt(),
    })
}

/// Identity pass-through or projection onto an estimated basis. Only
/// applicable to already-noised aggregates.
#[derive(Debug, Clone)]
pub enum Projector {
    Identity,
    Basis(ProjectionBasis),
}

impl Projector {
    /// Applies the projector as a post-processing step on the noised
    /// aggregate. Identity is a bitwise no-op.
    pub fn denoise(&self, aggregate: NoisedAggregate) -> Result<ParamVector> {
        match self {
            Projector::Identity => Ok(aggregate.values),
            Projector::Basis(basis) => project(basis, &aggregate.values),
        }
    }
}

/// Per-step knobs shared by every variant. Plain SGD is clip_norm = +inf,
/// sigma = 0, identity projector, no public branch.
#[derive(Debug, Clone, Copy)]
pub struct StepParams {
    pub clip_norm: f64,
    pub sigma: f64,
    /// Fixed batch normalizer qn (the expected Poisson batch size).
    pub expected_batch: f64,
    pub eta: f64,
    pub public_branch: bool,
    pub step: usize,
}

/// One update of the unified loop (Algorithm-1 shape). The private batch
/// flows through clip -> aggregate+noise -> project; the public batch
/// contributes an unclipped, unnoised mean gradient of l_pub.
#[allow(clippy::too_many_arguments)]
pub fn fp_dp_step<M: Model>(
    model: &M,
    w: &ParamVector,
    priv_batch: &[&M::Sample],
    pub_batch: &[&M::Sample],
    projector: &Projector,
    params: &StepParams,
    noise_rng: &mut RngStream,
    private_view: LossView,
) -> Result<(ParamVector, StepRecord)> {
    let p = model.param_count();
    let mask = model.trainable_mask();

    let (losses, mut grads) = if priv_batch.is_empty() {
        (Vec::new(), DenseMatrix::zeros(0, p))
    } else {
        loss_and_per_sample_grad(model, w, priv_batch, private_view)?
    };
    let (pre_clip, clipped_fraction) = if params.clip_norm.is_finite() {
        clip_rows_in_place(&mut grads, params.clip_norm)?
    } else {
        let b = grads.rows();
        let mut total = 0.0;
        for i in 0..b {
            total += grads.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
        }
        (if b == 0 { 0.0 } else { total / b as f64 }, 0.0)
    };

    let noised = noisy_aggregate(
        &grads,
        params.clip_norm,
        params.sigma,
        params.expected_batch,
        mask,
        noise_rng,
    )?;
    let (noise_norm, signal_norm) = (noised.noise_norm(), noised.signal_norm());
    let g_private = projector.denoise(noised)?;
    let projected_norm = g_private.norm();

    let mut loss_public = f64::NAN;
    let mut update = g_private;
    if params.public_branch && !pub_batch.is_empty() {
        // Eq.-8 mean over the realized public batch; public data has no
        // sensitivity constraint, so the realized size is the denominator.
        let (pub_losses, pub_grads) =
            loss_and_per_sample_grad(model, w, pub_batch, LossView::Public)?;
        let inv = 1.0 / pub_batch.len() as f64;
        loss_public = pub_losses.iter().sum::<f64>() * inv;
        let mut g_pub = vec![0.0; p];
        for i in 0..pub_grads.rows() {
            for (s, v) in g_pub.iter_mut().zip(pub_grads.row(i).iter()) {
                *s += v;
            }
        }
        for (u, g) in update.as_mut_slice().iter_mut().zip(g_pub.iter()) {
            *u += g * inv;
        }
    }

    let mut w_next = w.clone();
    w_next.axpy(-params.eta, &update);

    let loss_private = if losses.is_empty() {
        f64::NAN
    } else {
        losses.iter().sum::<f64>() / losses.len() as f64
    };
    let record = StepRecord {
        step: params.step,
        grad_norm_pre_clip: pre_clip,
        clipped_fraction,
        signal_norm,
        noise_norm,
        projected_norm,
        loss_private,
        loss_public,
    };
    Ok((w_next, record))
}

/// Training hyperparameters shared by all variants.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrainHyper {
    pub eta: f64,
    /// Linear warmup fraction of total steps; 0 means constant eta.
    pub warmup_frac: f64,
    pub steps: usize,
    /// Per-step Poisson sampling rate q.
    pub sample_rate: f64,
    /// Projection dimension k (projection variants only).
    pub subspace_dim: usize,
    /// Basis refresh interval R in steps.
    pub refresh_interval: usize,
}

/// How the projection variants obtain their basis.
#[derive(Debug, Clone)]
pub enum BasisMode {
    /// Re-estimate from the public set per [`refresh_policy`].
    Periodic,
    /// Use a caller-supplied fixed basis (test hook; staleness checks off).
    Fixed(ProjectionBasis),
}

/// A full training request.
pub struct TrainPlan<'a, M: Model> {
    pub variant: Variant,
    pub model: &'a M,
    pub init: ParamVector,
    pub private_data: &'a [M::Sample],
    /// Public samples used only for basis estimation.
    pub basis_data: &'a [M::Sample],
    pub privacy: Option<PrivacySpec>,
    pub hyper: TrainHyper,
    pub basis_mode: BasisMode,
    /// Train the SGD baseline on psi(x) instead of raw inputs (the
    /// public-features-only row). Ignored by private variants.
    pub sgd_public_inputs: bool,
}

/// Training result.
#[derive(Debug)]
pub struct TrainOutcome {
    pub w_final: ParamVector,
    pub history: Vec<StepRecord>,
    /// Epsilon actually spent over the executed steps (0 for SGD).
    pub accounted_epsilon: f64,
    /// Set when the accountant halted training before the requested steps.
    pub halted_at: Option<usize>,
    pub basis_diagnostics: Vec<BasisDiagnostics>,
    pub warnings: Vec<String>,
}

fn poisson_batch<'a, T>(rng: &mut RngStream, data: &'a [T], q: f64) -> Vec<&'a T> {
    data.iter().filter(|_| rng.next_f64() < q).collect()
}

fn warmup_eta(hyper: &TrainHyper, step: usize) -> f64 {
    if hyper.warmup_frac <= 0.0 {
        return hyper.eta;
    }
    let warmup_steps = (hyper.warmup_frac * hyper.steps as f64).ceil() as usize;
    if step < warmup_steps {
        hyper.eta * (step + 1) as f64 / warmup_steps as f64
    } else {
        hyper.eta
    }
}

/// Runs the requested variant. All randomness (batches, noise) derives
/// from `run_rng`, and derived streams are per-purpose and per-step, so
/// trajectories are bit-reproducible and two variants sharing a seed see
/// identical batches and noise draws.
pub fn train<M: Model>(plan: &TrainPlan<'_, M>, run_rng: &RngStream) -> Result<TrainOutcome> {
    let hyper = &plan.hyper;
    let n = plan.private_data.len();
    if n == 0 {
        return Err(Error::Contract("empty private dataset".into()));
    }
    if !(0.0..=1.0).contains(&hyper.sample_rate) {
        return Err(Error::Contract(format!("sample rate {} outside [0, 1]", hyper.sample_rate)));
    }
    if hyper.refresh_interval == 0 {
        return Err(Error::Contract("refresh interval must be >= 1".into()));
    }

    let mut warnings = Vec::new();
    let (clip_norm, sigma, curve, eps_budget, delta) = match (&plan.privacy, plan.variant) {
        (_, Variant::Sgd) => (f64::INFINITY, 0.0, None, f64::INFINITY, 0.0),
        (Some(spec), _) => {
            if (spec.sample_rate - hyper.sample_rate).abs() > 1e-12 {
                return Err(Error::Contract(format!(
                    "privacy spec q = {} disagrees with hyper q = {}",
                    spec.sample_rate, hyper.sample_rate
                )));
            }
            if spec.steps != hyper.steps {
                return Err(Error::Contract(format!(
                    "privacy spec steps = {} disagrees with hyper steps = {}",
                    spec.steps, hyper.steps
                )));
            }
            let curve = RdpCurve::subsampled_gaussian(spec.sample_rate, spec.sigma, &spec.orders)?;
            (spec.clip_norm, spec.sigma, Some(curve), spec.epsilon, spec.delta)
        }
        (None, v) => {
            return Err(Error::Contract(format!(
                "variant {v} requires a calibrated privacy spec"
            )));
        }
    };

    // Projection setup; k is clamped to the public set size when needed.
    let mut k_eff = hyper.subspace_dim;
    if plan.variant.uses_projection() {
        if matches!(plan.basis_mode, BasisMode::Periodic) {
            let m = plan.basis_data.len();
            if m == 0 {
                return Err(Error::Contract("projection variant without public basis data".into()));
            }
            if k_eff > m {
                warnings.push(format!(
                    "subspace dim k = {k_eff} clamped to public set size m = {m}"
                ));
                k_eff = m;
            }
        }
        if k_eff == 0 {
            return Err(Error::Contract("subspace dimension must be >= 1".into()));
        }
    }

    let expected_batch = hyper.sample_rate * n as f64;
    let priv_root = run_rng.derive(stream_label::PRIV_BATCH);
    let pub_root = run_rng.derive(stream_label::PUB_BATCH);
    let noise_root = run_rng.derive(stream_label::NOISE);
    let basis_refs: Vec<&M::Sample> = plan.basis_data.iter().collect();

    let private_view = if plan.variant == Variant::Sgd && plan.sgd_public_inputs {
        LossView::Public
    } else {
        LossView::Private
    };

    let mut w = plan.init.clone();
    let mut history = Vec::with_capacity(hyper.steps);
    let mut basis_diagnostics = Vec::new();
    let mut projector = match &plan.basis_mode {
        BasisMode::Fixed(b) if plan.variant.uses_projection() => Projector::Basis(b.clone()),
        _ => Projector::Identity,
    };
    let fixed_basis = matches!(plan.basis_mode, BasisMode::Fixed(_));
    let mut halted_at = None;
    let mut executed = 0usize;

    for t in 0..hyper.steps {
        if let Some(curve) = &curve {
            let eps_next = curve.compose_and_convert(t + 1, delta)?;
            if eps_next > eps_budget * (1.0 + 1e-12) {
                halted_at = Some(t);
                break;
            }
        }

        if plan.variant.uses_projection() && !fixed_basis && refresh_policy(t, hyper.refresh_interval)
        {
            let (basis, diag) = estimate_basis(plan.model, &w, &basis_refs, k_eff, t)?;
            basis_diagnostics.push(diag);
            projector = Projector::Basis(basis);
        }
        if let Projector::Basis(b) = &projector {
            // Staleness contract: a periodic basis must date from the most
            // recent refresh point.
            if !fixed_basis {
                let expected = t - (t % hyper.refresh_interval);
                if b.refreshed_at_step() != expected {
                    return Err(Error::Contract(format!(
                        "stale basis: refreshed at {} but step {t} requires {expected}",
                        b.refreshed_at_step()
                    )));
                }
            }
        }

        let priv_batch =
            poisson_batch(&mut priv_root.derive(t as u64), plan.private_data, hyper.sample_rate);
        let pub_batch = if plan.variant.uses_public_branch() {
            poisson_batch(&mut pub_root.derive(t as u64), plan.private_data, hyper.sample_rate)
        } else {
            Vec::new()
        };

        let params = StepParams {
            clip_norm,
            sigma,
            expected_batch,
            eta: warmup_eta(hyper, t),
            public_branch: plan.variant.uses_public_branch(),
            step: t,
        };
        let mut noise_rng = noise_root.derive(t as u64);
        let (w_next, record) = fp_dp_step(
            plan.model,
            &w,
            &priv_batch,
            &pub_batch,
            &projector,
            &params,
            &mut noise_rng,
            private_view,
        )?;
        w = w_next;
        history.push(record);
        executed = t + 1;
    }

    let accounted_epsilon = match &curve {
        Some(curve) if executed > 0 => curve.compose_and_convert(executed, delta)?,
        _ => 0.0,
    };
    Ok(TrainOutcome {
        w_final: w,
        history,
        accounted_epsilon,
        halted_at,
        basis_diagnostics,
        warnings,
    })
}

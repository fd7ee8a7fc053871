//! Metric stage: SGD over the active latent triplets.
//!
//! For fixed latents the stage minimises
//!
//! ```text
//! H(M) = λ/2 ‖M - M_prev‖²_F + Σ_t [1 + margin(o_t) - (D²_M(o_t,q_t) - D²_M(o_t,p_t))]₊
//! ```
//!
//! over the triplets violated under `M_prev`, with margins frozen at their
//! `M_prev` values. Each step moves by `1/(λs)` along a stochastic
//! subgradient and rescales into the Frobenius ball of radius `δ`; the second
//! half of the iterates is averaged and projected onto the PSD cone once.
//!
//! [`run_metric_stage`] uses a low-rank representation of the iterates (see
//! [`lowrank`]); [`run_metric_stage_reference`] follows the textbook loop with
//! explicit `d x d` iterates and exists to cross-check it.

mod dense;
mod lowrank;

use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{derive_seed, TrainConfig};
use crate::error::{Error, Result};
use crate::latent::LatentModel;
use crate::linalg;
use crate::metric::{self, Metric};
use crate::triplet::{for_each_universe_triplet, hinge_argument, TripletConstraint};

pub(crate) use dense::dense_sgd;

/// Triplets violated under the metric the set was built with.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveSet {
    pub triplets: Vec<TripletConstraint>,
    /// Per-latent margins at construction time.
    pub margins_snapshot: Vec<f64>,
    /// Number of violated triplets before capping.
    pub violations: usize,
}

impl ActiveSet {
    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }
}

/// Collects every universe triplet with a positive hinge under `prev`.
///
/// When more than `cap` triplets are violated, `cap` of them are kept,
/// drawn uniformly without replacement with `seed`; the kept triplets stay in
/// enumeration order.
pub fn build_active_set(model: &LatentModel, prev: &Metric, cap: usize, seed: u64) -> Result<ActiveSet> {
    let dist = metric::pairwise_sq(prev, model.latents.view())?;
    let margins = &model.cluster_margins;
    let labels = &model.latent_labels;
    let violated = |t: &TripletConstraint| {
        hinge_argument(
            margins[t.anchor],
            dist[[t.anchor, t.positive]],
            dist[[t.anchor, t.negative]],
        ) > 0.0
    };

    let mut violations = 0usize;
    for_each_universe_triplet(labels, |t| {
        if violated(&t) {
            violations += 1;
        }
    });

    let triplets = if violations <= cap {
        let mut kept = Vec::with_capacity(violations);
        for_each_universe_triplet(labels, |t| {
            if violated(&t) {
                kept.push(t);
            }
        });
        kept
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut chosen = index::sample(&mut rng, violations, cap).into_vec();
        chosen.sort_unstable();
        let mut kept = Vec::with_capacity(cap);
        let mut next = chosen.iter().peekable();
        let mut k = 0usize;
        for_each_universe_triplet(labels, |t| {
            if violated(&t) {
                if next.peek() == Some(&&k) {
                    kept.push(t);
                    next.next();
                }
                k += 1;
            }
        });
        kept
    };
    Ok(ActiveSet {
        triplets,
        margins_snapshot: margins.clone(),
        violations,
    })
}

/// Subgradient of the single-triplet term of `H` at `current`:
/// `λ(M - M_prev) + [hinge > 0]((z_o-z_p)(z_o-z_p)ᵀ - (z_o-z_q)(z_o-z_q)ᵀ)`.
///
/// The hinge is tested under `current`; the margin comes from `model`.
pub fn hinge_subgradient(
    current: ArrayView2<'_, f64>,
    prev: ArrayView2<'_, f64>,
    triplet: &TripletConstraint,
    model: &LatentModel,
    lambda: f64,
) -> Result<Array2<f64>> {
    check_triplet(triplet, model.len())?;
    let z = &model.latents;
    let a: Array1<f64> = &z.row(triplet.anchor) - &z.row(triplet.positive);
    let b: Array1<f64> = &z.row(triplet.anchor) - &z.row(triplet.negative);
    let margin = model.cluster_margins[triplet.anchor];
    let mut g = (&current - &prev) * lambda;
    if triplet_is_active(current, a.view(), b.view(), margin) {
        add_outer(&mut g, a.view(), 1.0);
        add_outer(&mut g, b.view(), -1.0);
    }
    Ok(g)
}

fn triplet_is_active(m: ArrayView2<'_, f64>, a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>, margin: f64) -> bool {
    hinge_argument(margin, linalg::quad_form(m, a), linalg::quad_form(m, b)) > 0.0
}

fn add_outer(m: &mut Array2<f64>, v: ArrayView1<'_, f64>, scale: f64) {
    for (i, mut row) in m.rows_mut().into_iter().enumerate() {
        row.scaled_add(scale * v[i], &v);
    }
}

fn check_triplet(t: &TripletConstraint, m: usize) -> Result<()> {
    if t.anchor >= m || t.positive >= m || t.negative >= m {
        return Err(Error::TripletOutOfRange {
            anchor: t.anchor,
            positive: t.positive,
            negative: t.negative,
            len: m,
        });
    }
    Ok(())
}

/// Factor that maps a matrix of Frobenius norm `norm` into the ball of
/// radius `delta` (1 when already inside).
#[inline]
pub(crate) fn frobenius_scale(norm: f64, delta: f64) -> f64 {
    if norm > delta {
        delta / norm
    } else {
        1.0
    }
}

/// Radial projection onto `{M : ‖M‖_F ≤ δ}`.
pub fn frobenius_project(m: ArrayView2<'_, f64>, delta: f64) -> Array2<f64> {
    let scale = frobenius_scale(linalg::frobenius_norm(m), delta);
    if scale == 1.0 {
        m.to_owned()
    } else {
        &m * scale
    }
}

/// Nearest PSD matrix: symmetrise, then clamp negative eigenvalues to zero.
pub fn psd_project(m: ArrayView2<'_, f64>) -> Result<Metric> {
    let (r, c) = m.dim();
    if r != c {
        return Err(Error::DimensionMismatch { expected: r, found: c });
    }
    let sym = linalg::symmetrize(m);
    let (w, v) = linalg::symmetric_eigen(sym.view())?;
    if w.iter().all(|&lam| lam >= 0.0) {
        return Metric::from_matrix(sym);
    }
    Metric::from_matrix(linalg::reconstruct_clamped(&w, &v))
}

/// Mean of the iterates with 1-based index in `(S/2, S]`.
pub fn alpha_suffix_average(iterates: &[Array2<f64>], steps: usize) -> Result<Array2<f64>> {
    if steps == 0 || steps % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "suffix averaging needs a positive even step count, got {steps}"
        )));
    }
    if iterates.len() != steps {
        return Err(Error::InvalidArgument(format!(
            "expected {steps} iterates, got {}",
            iterates.len()
        )));
    }
    let tail = &iterates[steps / 2..];
    let mut sum = tail[0].clone();
    for m in &tail[1..] {
        if m.dim() != sum.dim() {
            return Err(Error::DimensionMismatch {
                expected: sum.nrows(),
                found: m.nrows(),
            });
        }
        sum += m;
    }
    Ok(sum * (2.0 / steps as f64))
}

/// `H(M)` restricted to `triplets`, with margins from `model`.
pub fn metric_upper_bound(
    candidate: ArrayView2<'_, f64>,
    prev: ArrayView2<'_, f64>,
    model: &LatentModel,
    triplets: &[TripletConstraint],
    lambda: f64,
) -> Result<f64> {
    let z = &model.latents;
    let mut hinge = 0.0;
    for t in triplets {
        check_triplet(t, model.len())?;
        let a: Array1<f64> = &z.row(t.anchor) - &z.row(t.positive);
        let b: Array1<f64> = &z.row(t.anchor) - &z.row(t.negative);
        let h = hinge_argument(
            model.cluster_margins[t.anchor],
            linalg::quad_form(candidate, a.view()),
            linalg::quad_form(candidate, b.view()),
        );
        hinge += h.max(0.0);
    }
    let diff = &candidate - &prev;
    Ok(0.5 * lambda * diff.iter().map(|v| v * v).sum::<f64>() + hinge)
}

/// Result of one metric stage.
#[derive(Debug, Clone)]
pub struct MetricStageOutput {
    pub metric: Metric,
    pub active_set_size: usize,
    pub violations: usize,
    /// Steps whose sampled triplet was still violated under the iterate.
    pub active_steps: usize,
    pub active_set_seconds: f64,
    pub sgd_seconds: f64,
}

fn check_stage_inputs(model: &LatentModel, prev: &Metric, cfg: &TrainConfig) -> Result<()> {
    cfg.validate()?;
    if cfg.inner_iters < 2 {
        return Err(Error::InvalidConfig(format!(
            "the metric stage needs at least 2 SGD steps, got {}",
            cfg.inner_iters
        )));
    }
    if model.dim() != prev.dim() {
        return Err(Error::DimensionMismatch {
            expected: prev.dim(),
            found: model.dim(),
        });
    }
    Ok(())
}

/// One metric stage. Returns `psd_project(prev)` when no triplet is active.
pub fn run_metric_stage(model: &LatentModel, prev: &Metric, cfg: &TrainConfig) -> Result<MetricStageOutput> {
    check_stage_inputs(model, prev, cfg)?;
    let started = Instant::now();
    let active = build_active_set(model, prev, cfg.active_set_cap, derive_seed(cfg.rng_seed, 0))?;
    let active_set_seconds = started.elapsed().as_secs_f64();

    let started = Instant::now();
    let (metric, active_steps) = if active.is_empty() {
        (psd_project(prev.matrix().view())?, 0)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.rng_seed, 1));
        let mut sampler = || active.triplets[rng.random_range(0..active.len())];
        let run = lowrank::LowRankSgd::new(model, prev, &active, cfg.lambda, cfg.delta)
            .run(cfg.inner_iters, &mut sampler)?;
        (psd_project(run.average.view())?, run.active_steps)
    };
    Ok(MetricStageOutput {
        metric,
        active_set_size: active.len(),
        violations: active.violations,
        active_steps,
        active_set_seconds,
        sgd_seconds: started.elapsed().as_secs_f64(),
    })
}

/// Textbook form of [`run_metric_stage`]: explicit `d x d` iterates, the
/// subgradient from [`hinge_subgradient`], per-step [`frobenius_project`],
/// [`alpha_suffix_average`] and [`psd_project`]. Same sampling sequence as
/// the fast path, so the two agree up to rounding.
pub fn run_metric_stage_reference(model: &LatentModel, prev: &Metric, cfg: &TrainConfig) -> Result<Metric> {
    check_stage_inputs(model, prev, cfg)?;
    let active = build_active_set(model, prev, cfg.active_set_cap, derive_seed(cfg.rng_seed, 0))?;
    if active.is_empty() {
        return psd_project(prev.matrix().view());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.rng_seed, 1));
    let p = prev.matrix();
    let mut current = p.clone();
    let mut iterates = Vec::with_capacity(cfg.inner_iters);
    for s in 1..=cfg.inner_iters {
        let t = active.triplets[rng.random_range(0..active.len())];
        let g = hinge_subgradient(current.view(), p.view(), &t, model, cfg.lambda)?;
        let stepped = &current - &(g * (1.0 / (cfg.lambda * s as f64)));
        current = frobenius_project(stepped.view(), cfg.delta);
        iterates.push(current.clone());
    }
    let avg = alpha_suffix_average(&iterates, cfg.inner_iters)?;
    psd_project(avg.view())
}

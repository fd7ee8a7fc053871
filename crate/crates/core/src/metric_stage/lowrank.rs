//! SGD on iterates of the form `M_s = α_s M_prev + β_s Σ_j w_j v_j v_jᵀ`.
//!
//! Every subgradient direction is `aaᵀ - bbᵀ` with `a`, `b` differences of two
//! latents, so an iterate is `M_prev` plus a weighted sum of latent-pair
//! outer products. The shrink toward `M_prev` and the radial projection only
//! touch the scalars `α`, `β`; a violated step adds two weighted pairs.
//! Quadratic forms go through the latent Gram matrix, the Frobenius norm is
//! tracked incrementally and the suffix average is accumulated lazily per
//! pair, so a step costs O(#pairs) rather than O(d²).

use std::collections::HashMap;

use ndarray::{Array2, Axis};

use super::{frobenius_scale, ActiveSet};
use crate::error::{Error, Result};
use crate::latent::LatentModel;
use crate::metric::Metric;
use crate::triplet::{hinge_argument, TripletConstraint};

const RENORMALISE_BELOW: f64 = 1e-100;
const RENORMALISE_ABOVE: f64 = 1e100;

pub(super) struct LowRankRun {
    /// Suffix average before the PSD projection.
    pub average: Array2<f64>,
    pub active_steps: usize,
}

pub(super) struct LowRankSgd<'a> {
    prev: &'a Array2<f64>,
    prev_sq_norm: f64,
    lambda: f64,
    delta: f64,
    margins: &'a [f64],
    /// Global latent index -> row in `latents`, `usize::MAX` when unused.
    compact: Vec<usize>,
    latents: Array2<f64>,
    gram: Array2<f64>,
    /// `latents · M_prev`.
    projected: Array2<f64>,
}

#[derive(Default)]
struct Pairs {
    slot: HashMap<(u32, u32), usize>,
    ends: Vec<(u32, u32)>,
    weight: Vec<f64>,
    acc: Vec<f64>,
    last: Vec<f64>,
}

impl Pairs {
    fn slot_for(&mut self, a: usize, b: usize, bsum: f64) -> usize {
        let key = (a.min(b) as u32, a.max(b) as u32);
        let next = self.ends.len();
        let slot = *self.slot.entry(key).or_insert(next);
        if slot == next {
            self.ends.push(key);
            self.weight.push(0.0);
            self.acc.push(0.0);
            self.last.push(bsum);
        }
        slot
    }

    fn flush(&mut self, slot: usize, bsum: f64) {
        self.acc[slot] += self.weight[slot] * (bsum - self.last[slot]);
        self.last[slot] = bsum;
    }

    fn add(&mut self, a: usize, b: usize, w: f64, bsum: f64) {
        let slot = self.slot_for(a, b, bsum);
        self.flush(slot, bsum);
        self.weight[slot] += w;
    }
}

impl<'a> LowRankSgd<'a> {
    pub fn new(model: &'a LatentModel, prev: &'a Metric, active: &ActiveSet, lambda: f64, delta: f64) -> Self {
        let mut compact = vec![usize::MAX; model.len()];
        let mut used = Vec::new();
        for t in &active.triplets {
            for i in [t.anchor, t.positive, t.negative] {
                if compact[i] == usize::MAX {
                    compact[i] = used.len();
                    used.push(i);
                }
            }
        }
        let latents = model.latents.select(Axis(0), &used);
        let gram = latents.dot(&latents.t());
        let projected = latents.dot(prev.matrix());
        let prev_sq_norm = prev.matrix().iter().map(|v| v * v).sum();
        Self {
            prev: prev.matrix(),
            prev_sq_norm,
            lambda,
            delta,
            margins: &model.cluster_margins,
            compact,
            latents,
            gram,
            projected,
        }
    }

    /// `(z_a - z_b)ᵀ M_prev (z_a - z_b)` for compact indices.
    fn prev_quad(&self, a: usize, b: usize) -> f64 {
        let (za, zb) = (self.latents.row(a), self.latents.row(b));
        let (ya, yb) = (self.projected.row(a), self.projected.row(b));
        za.iter()
            .zip(zb)
            .zip(ya.iter().zip(yb))
            .map(|((x1, x2), (y1, y2))| (x1 - x2) * (y1 - y2))
            .sum()
    }

    pub fn run<F: FnMut() -> TripletConstraint>(&self, steps: usize, sampler: &mut F) -> Result<LowRankRun> {
        let n = self.latents.nrows();
        let mut pairs = Pairs::default();
        let (mut alpha, mut beta) = (1.0f64, 1.0f64);
        // <M_prev, U> and ‖U‖²_F for the unscaled pair sum U
        let (mut cross, mut u_sq) = (0.0f64, 0.0f64);
        let (mut asum, mut bsum) = (0.0f64, 0.0f64);
        let mut active_steps = 0usize;
        let mut ra = vec![0.0; n];
        let mut rb = vec![0.0; n];

        for s in 1..=steps {
            let t = sampler();
            let (o, p, q) = (self.compact[t.anchor], self.compact[t.positive], self.compact[t.negative]);
            if o == usize::MAX || p == usize::MAX || q == usize::MAX {
                return Err(Error::InvalidArgument(format!(
                    "sampled triplet {t:?} is outside the active set"
                )));
            }
            // ra[x] = (z_o - z_p)·z_x, rb[x] = (z_o - z_q)·z_x
            let (go, gp, gq) = (self.gram.row(o), self.gram.row(p), self.gram.row(q));
            for x in 0..n {
                ra[x] = go[x] - gp[x];
                rb[x] = go[x] - gq[x];
            }
            let (mut ua, mut ub) = (0.0, 0.0);
            for (&(i, j), &w) in pairs.ends.iter().zip(&pairs.weight) {
                let (i, j) = (i as usize, j as usize);
                let ia = ra[i] - ra[j];
                let ib = rb[i] - rb[j];
                ua += w * ia * ia;
                ub += w * ib * ib;
            }
            let pa = self.prev_quad(o, p);
            let pb = self.prev_quad(o, q);
            let active = hinge_argument(self.margins[t.anchor], alpha * pa + beta * ua, alpha * pb + beta * ub) > 0.0;

            let inv = 1.0 / s as f64;
            alpha = (1.0 - inv) * alpha + inv;
            beta *= 1.0 - inv;
            if beta == 0.0 {
                // only at s = 1, where U is still empty
                debug_assert!(pairs.weight.iter().all(|&w| w == 0.0));
                beta = 1.0;
            }
            if active {
                active_steps += 1;
                let c = 1.0 / (self.lambda * s as f64 * beta);
                let (wa, wb) = (-c, c);
                let aa = ra[o] - ra[p];
                let bb = rb[o] - rb[q];
                let ab = ra[o] - ra[q];
                u_sq += 2.0 * wa * ua + wa * wa * aa * aa;
                let ub_after = ub + wa * ab * ab;
                u_sq += 2.0 * wb * ub_after + wb * wb * bb * bb;
                cross += wa * pa + wb * pb;
                pairs.add(o, p, wa, bsum);
                pairs.add(o, q, wb, bsum);
            }

            let sq = alpha * alpha * self.prev_sq_norm + 2.0 * alpha * beta * cross + beta * beta * u_sq;
            let norm = sq.max(0.0).sqrt();
            let theta = frobenius_scale(norm, self.delta);
            alpha *= theta;
            beta *= theta;
            debug_assert!(norm * theta <= self.delta * (1.0 + 1e-9));

            if !(alpha.is_finite() && beta.is_finite()) {
                return Err(Error::InvalidArgument(format!("SGD diverged at step {s}")));
            }
            if beta.abs() < RENORMALISE_BELOW || beta.abs() > RENORMALISE_ABOVE {
                for slot in 0..pairs.weight.len() {
                    pairs.flush(slot, bsum);
                    pairs.weight[slot] *= beta;
                }
                cross *= beta;
                u_sq *= beta * beta;
                beta = 1.0;
            }
            if 2 * s > steps {
                asum += alpha;
                bsum += beta;
            }
        }
        for slot in 0..pairs.weight.len() {
            pairs.flush(slot, bsum);
        }

        // Σ_j acc_j v_j v_jᵀ = Zᵀ C Z with a Laplacian-style coefficient matrix
        let mut coeff = Array2::<f64>::zeros((n, n));
        for (&(i, j), &c) in pairs.ends.iter().zip(&pairs.acc) {
            let (i, j) = (i as usize, j as usize);
            coeff[[i, i]] += c;
            coeff[[j, j]] += c;
            coeff[[i, j]] -= c;
            coeff[[j, i]] -= c;
        }
        let low_rank = self.latents.t().dot(&coeff.dot(&self.latents));
        let scale = 2.0 / steps as f64;
        let average = (self.prev * asum + low_rank) * scale;
        Ok(LowRankRun { average, active_steps })
    }
}

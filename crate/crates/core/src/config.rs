use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyperparameters for one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Latent examples per class as a percentage of that class's size.
    pub tau: f64,
    /// Weight of the proximal term anchoring latents to the previous outer
    /// iterate.
    pub gamma: f64,
    /// Strong-convexity weight of the metric subproblem; SGD step is `1/(λs)`.
    pub lambda: f64,
    /// Frobenius-norm radius of the metric.
    pub delta: f64,
    /// Outer alternations `K`.
    pub outer_iters: usize,
    /// SGD steps per metric stage `S` (even; the last `S/2` are averaged).
    pub inner_iters: usize,
    /// Assignment/update sweeps per latent stage.
    pub latent_em_iters: usize,
    pub rng_seed: u64,
    /// Upper bound on the number of active triplets kept per metric stage.
    pub active_set_cap: usize,
    /// Squared-distance difference below which two latents count as tied.
    pub tie_tolerance: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            tau: 10.0,
            gamma: 1.0,
            lambda: 100.0,
            delta: 100.0,
            outer_iters: 10,
            inner_iters: 10_000,
            latent_em_iters: 10,
            rng_seed: 0,
            active_set_cap: 1_000_000,
            tie_tolerance: 1e-12,
        }
    }
}

impl TrainConfig {
    /// Checks the ranges shared by every trainer. `outer_iters = 0` is
    /// accepted and means "return the initial state".
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.tau > 0.0 && self.tau <= 100.0) {
            return bad(format!("tau must be in (0, 100], got {}", self.tau));
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return bad(format!("gamma must be finite and >= 0, got {}", self.gamma));
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return bad(format!("lambda must be finite and > 0, got {}", self.lambda));
        }
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return bad(format!("delta must be finite and > 0, got {}", self.delta));
        }
        if self.inner_iters % 2 != 0 {
            return bad(format!("inner_iters must be even, got {}", self.inner_iters));
        }
        if self.latent_em_iters == 0 {
            return bad("latent_em_iters must be at least 1".into());
        }
        if self.active_set_cap == 0 {
            return bad("active_set_cap must be at least 1".into());
        }
        if !(self.tie_tolerance >= 0.0) {
            return bad(format!("tie_tolerance must be >= 0, got {}", self.tie_tolerance));
        }
        Ok(())
    }

    /// Copy with `rng_seed` replaced by an independent stream derived from it.
    pub fn with_stream(&self, stream: u64) -> Self {
        Self {
            rng_seed: derive_seed(self.rng_seed, stream),
            ..self.clone()
        }
    }
}

/// Mixes a base seed with a stream index (splitmix64 finaliser).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

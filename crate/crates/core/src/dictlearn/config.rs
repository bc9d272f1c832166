use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::patches::PatchConfig;
use crate::prox::Regularizer;
use crate::scalar::Scalar;

/// Hyperparameters and budgets for one reconstruction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig<T> {
    /// Weight of the patch-model terms relative to data fidelity.
    pub lambda: T,
    /// Weight of the row-sparse / low-rank penalty on the codes.
    pub gamma: T,
    /// Coupling weight between the first and second coefficient levels.
    pub mu1: T,
    /// Coupling weight of every deeper level.
    pub mu2: T,
    /// Number of dictionary layers, 1 to 4. One layer is the shallow model.
    pub layers: usize,
    pub regularizer: Regularizer,
    pub patch: PatchConfig,
    pub outer_iters: usize,
    /// Proximal-gradient iterations per code update.
    pub inner_iters: usize,
    /// Dictionary and code passes on the zero-filled images before the
    /// first image update.
    #[serde(default)]
    pub warmup_sweeps: usize,
    /// Stop once the relative objective change falls below this.
    pub tol: T,
    pub seed: u64,
}

impl<T: Scalar> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            lambda: T::of(0.1),
            gamma: T::of(0.05),
            mu1: T::one(),
            mu2: T::one(),
            layers: 3,
            regularizer: Regularizer::RowSparse,
            patch: PatchConfig::default(),
            outer_iters: 50,
            inner_iters: 30,
            warmup_sweeps: 5,
            tol: T::of(1e-4),
            seed: 0,
        }
    }
}

impl<T: Scalar> SolverConfig<T> {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda", self.lambda),
            ("gamma", self.gamma),
            ("mu1", self.mu1),
            ("mu2", self.mu2),
            ("tol", self.tol),
        ] {
            if !(v >= T::zero()) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be finite and non-negative"
                )));
            }
        }
        if !(1..=4).contains(&self.layers) {
            return Err(Error::InvalidArgument(format!(
                "layer count {} outside 1..=4",
                self.layers
            )));
        }
        if self.inner_iters == 0 {
            return Err(Error::InvalidArgument("inner iteration budget must be positive".into()));
        }
        atom_counts(self.patch.patch_len(), self.layers).map(|_| ())
    }

    /// Weight of coupling term `k`: `||Z_{k-1} - D_k Z_k||` where level `-1`
    /// is the patch matrix. Term 0 (the patch fit) has weight one.
    pub fn coupling_weight(&self, k: usize) -> T {
        match k {
            0 => T::one(),
            1 => self.mu1,
            _ => self.mu2,
        }
    }
}

/// Atom counts per layer: a complete first layer, halved at each deeper layer.
pub fn atom_counts(patch_len: usize, layers: usize) -> Result<Vec<usize>> {
    let counts: Vec<usize> = (0..layers).map(|k| patch_len >> k).collect();
    if counts.contains(&0) {
        return Err(Error::InvalidArgument(format!(
            "{layers} layers cannot halve {patch_len} atoms"
        )));
    }
    Ok(counts)
}

use serde::{Deserialize, Serialize};

use crate::detection::FeatureDescriptor;

/// Complementary-filter appearance memory, kept at unit norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppearanceMemory {
    descriptor: FeatureDescriptor,
    alpha: f64,
}

impl AppearanceMemory {
    /// Seeds the memory; a zero seed yields `None`.
    pub fn new(seed: &FeatureDescriptor, alpha: f64) -> Option<Self> {
        assert!((0.0..=1.0).contains(&alpha), "alpha {alpha} outside [0, 1]");
        Some(Self { descriptor: seed.normalized()?, alpha })
    }

    pub fn descriptor(&self) -> &FeatureDescriptor {
        &self.descriptor
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Cosine similarity to the memory, clamped to `[0, 1]`; zero for a zero vector.
    pub fn similarity(&self, f: &FeatureDescriptor) -> f64 {
        match self.descriptor.cosine(f) {
            Some(c) => c.clamp(0.0, 1.0),
            None => {
                log::debug!("zero-norm descriptor scored against appearance memory");
                0.0
            }
        }
    }

    /// `F ← normalize(α F + (1 − α) F_target)`.
    pub fn update(&self, target: &FeatureDescriptor) -> Self {
        assert_eq!(target.dim(), self.descriptor.dim(), "descriptor dimension mismatch");
        let blended = self.descriptor.blend(self.alpha, target, 1.0 - self.alpha);
        // An exactly cancelling blend has no direction; keep the previous memory.
        let descriptor = blended.normalized().unwrap_or_else(|| self.descriptor.clone());
        Self { descriptor, alpha: self.alpha }
    }
}

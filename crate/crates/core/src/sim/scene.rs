//! Scripted scene objects.

use std::f64::consts::TAU;
use std::sync::Arc;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::detection::{FeatureDescriptor, ObjectSnapshot, SceneSnapshot};
use crate::geometry::Aabb3;

const LATENT_STREAM: u64 = 4 << 56;

/// Closed-form trajectory of an object's center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MotionScript {
    Static {
        position: [f64; 3],
    },
    /// Piecewise-linear through `(t, position)` knots, held constant outside them.
    Waypoints {
        points: Vec<(f64, [f64; 3])>,
    },
    /// `center + amplitude · sin(2π (t / period) + phase)` per axis.
    Sinusoid {
        center: [f64; 3],
        amplitude: [f64; 3],
        period: f64,
        #[serde(default)]
        phase: f64,
    },
}

impl MotionScript {
    pub fn validate(&self) -> Result<(), String> {
        match self {
            MotionScript::Static { .. } => Ok(()),
            MotionScript::Waypoints { points } => {
                if points.is_empty() {
                    return Err("waypoint script needs at least one point".into());
                }
                if points.windows(2).any(|w| !(w[1].0 > w[0].0)) {
                    return Err("waypoint times must be strictly increasing".into());
                }
                Ok(())
            }
            MotionScript::Sinusoid { period, .. } => {
                if *period > 0.0 && period.is_finite() {
                    Ok(())
                } else {
                    Err(format!("sinusoid period {period} must be positive"))
                }
            }
        }
    }

    pub fn position(&self, t: f64) -> Vector3<f64> {
        match self {
            MotionScript::Static { position } => Vector3::from(*position),
            MotionScript::Waypoints { points } => {
                let (first, last) = (points[0], points[points.len() - 1]);
                if t <= first.0 {
                    return Vector3::from(first.1);
                }
                if t >= last.0 {
                    return Vector3::from(last.1);
                }
                let i = points.partition_point(|(tk, _)| *tk <= t);
                let (t0, p0) = points[i - 1];
                let (t1, p1) = points[i];
                let s = (t - t0) / (t1 - t0);
                Vector3::from(p0) + (Vector3::from(p1) - Vector3::from(p0)) * s
            }
            MotionScript::Sinusoid { center, amplitude, period, phase } => {
                Vector3::from(*center) + Vector3::from(*amplitude) * (TAU * t / period + phase).sin()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneObject {
    pub id: u32,
    /// Full extents along world x, y, z, metres.
    pub size: [f64; 3],
    pub motion: MotionScript,
    /// Occluders hide what is behind them and are never detected themselves.
    #[serde(default)]
    pub occluder: bool,
}

/// Scene objects together with their latent appearance descriptors.
#[derive(Debug, Clone)]
pub struct Scene {
    objects: Vec<SceneObject>,
    latents: Vec<Arc<FeatureDescriptor>>,
}

impl Scene {
    /// Draws each object's latent descriptor from a stream keyed by seed and id.
    pub fn new(mut objects: Vec<SceneObject>, seed: u64, descriptor_dim: usize) -> Result<Self, String> {
        objects.sort_by_key(|o| o.id);
        if objects.windows(2).any(|w| w[0].id == w[1].id) {
            return Err("scene object ids must be unique".into());
        }
        for o in &objects {
            if o.size.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
                return Err(format!("object {} has a non-positive size", o.id));
            }
            o.motion.validate().map_err(|e| format!("object {}: {e}", o.id))?;
        }
        let latents = objects
            .iter()
            .map(|o| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(LATENT_STREAM | o.id as u64);
                Arc::new(FeatureDescriptor::random_unit(&mut rng, descriptor_dim))
            })
            .collect();
        Ok(Self { objects, latents })
    }

    pub fn objects(&self) -> &[SceneObject] {
        &self.objects
    }

    pub fn object(&self, id: u32) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn snapshot(&self, t: f64) -> SceneSnapshot {
        scene_step(&self.objects, &self.latents, t)
    }
}

/// World boxes of every object at time `t`.
pub fn scene_step(objects: &[SceneObject], latents: &[Arc<FeatureDescriptor>], t: f64) -> SceneSnapshot {
    let objects = objects
        .iter()
        .zip(latents)
        .map(|(o, latent)| ObjectSnapshot {
            id: o.id,
            extent: Aabb3 { center: o.motion.position(t), size: Vector3::from(o.size) },
            latent: Arc::clone(latent),
            occluder: o.occluder,
        })
        .collect();
    SceneSnapshot { timestamp: t, objects }
}

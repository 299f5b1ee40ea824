//! Detector interface and the synthetic, failure-injecting detector.
//!
//! Appearance is modelled with one latent unit vector per scene object.
//! Every emitted descriptor is `normalize(latent + σ_f · n)` with `n` standard
//! normal, so descriptors of one object stay correlated while distinct objects
//! are close to orthogonal.

pub mod log;

use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::geometry::{iou, project_box, Aabb3, BoundingBox, CameraModel, CameraPose};

pub const DEFAULT_DESCRIPTOR_DIM: usize = 256;

/// Dense appearance vector attached to a detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureDescriptor(Vec<f64>);

impl FeatureDescriptor {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    /// Uniformly distributed unit vector.
    pub fn random_unit<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Self {
        loop {
            let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let d = Self(v);
            if let Some(u) = d.normalized() {
                return u;
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &FeatureDescriptor) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    /// Unit-norm copy; `None` for a zero (or non-finite) vector.
    pub fn normalized(&self) -> Option<FeatureDescriptor> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| Self(self.0.iter().map(|v| v / n).collect()))
    }

    /// Cosine similarity; `None` if either vector has zero norm.
    pub fn cosine(&self, other: &FeatureDescriptor) -> Option<f64> {
        let n = self.norm() * other.norm();
        (n > 0.0 && n.is_finite()).then(|| self.dot(other) / n)
    }

    /// `a·self + b·other`, element-wise.
    pub fn blend(&self, a: f64, other: &FeatureDescriptor, b: f64) -> FeatureDescriptor {
        Self(self.0.iter().zip(&other.0).map(|(x, y)| a * x + b * y).collect())
    }

    fn perturbed<R: Rng + ?Sized>(&self, sigma: f64, rng: &mut R) -> FeatureDescriptor {
        if sigma == 0.0 {
            return self.normalized().unwrap_or_else(|| FeatureDescriptor::random_unit(rng, self.dim()));
        }
        let noisy = Self(self.0.iter().map(|v| v + sigma * rng.sample::<f64, _>(StandardNormal)).collect());
        noisy.normalized().unwrap_or_else(|| FeatureDescriptor::random_unit(rng, self.dim()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub descriptor: FeatureDescriptor,
    pub confidence: f64,
}

/// One camera frame worth of detections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSet {
    pub timestamp: f64,
    pub detections: Vec<Detection>,
}

impl DetectionSet {
    pub fn empty(timestamp: f64) -> Self {
        Self { timestamp, detections: Vec::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }

    pub fn len(&self) -> usize {
        self.detections.len()
    }
}

/// One scene object as seen by the detector at a single instant.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectSnapshot {
    pub id: u32,
    pub extent: Aabb3,
    pub latent: Arc<FeatureDescriptor>,
    pub occluder: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSnapshot {
    pub timestamp: f64,
    /// Sorted by ascending id.
    pub objects: Vec<ObjectSnapshot>,
}

/// How one non-occluder object appears in the image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Appearance {
    pub id: u32,
    /// Unclamped projection of the 3-D extent.
    pub projected: BoundingBox,
    /// Projection clipped to the image rectangle, if any part is inside.
    pub in_image: Option<BoundingBox>,
    /// Fraction of the in-image box hidden by nearer occluders.
    pub occlusion: f64,
    pub depth: f64,
}

/// Projects every detectable object and computes its occlusion fraction.
pub fn observe(snapshot: &SceneSnapshot, pose: &CameraPose, cam: &CameraModel) -> Vec<Appearance> {
    let occluders: Vec<(BoundingBox, f64)> = snapshot
        .objects
        .iter()
        .filter(|o| o.occluder)
        .filter_map(|o| {
            let b = project_box(cam, pose, &o.extent)?;
            Some((b, pose.to_camera_frame(&o.extent.center).z))
        })
        .collect();

    snapshot
        .objects
        .iter()
        .filter(|o| !o.occluder)
        .filter_map(|o| {
            let projected = project_box(cam, pose, &o.extent)?;
            let depth = pose.to_camera_frame(&o.extent.center).z;
            let in_image = projected.intersect(&cam.image_box()).filter(|b| b.w >= 1.0 && b.h >= 1.0);
            let occlusion = in_image.map_or(0.0, |b| {
                let covering: Vec<BoundingBox> =
                    occluders.iter().filter(|(_, d)| *d < depth).filter_map(|(ob, _)| ob.intersect(&b)).collect();
                union_area(&covering) / b.area()
            });
            Some(Appearance { id: o.id, projected, in_image, occlusion: occlusion.clamp(0.0, 1.0), depth })
        })
        .collect()
}

/// Area of a union of rectangles by coordinate compression.
pub fn union_area(boxes: &[BoundingBox]) -> f64 {
    if boxes.is_empty() {
        return 0.0;
    }
    let mut xs: Vec<f64> = boxes.iter().flat_map(|b| [b.x, b.right()]).collect();
    let mut ys: Vec<f64> = boxes.iter().flat_map(|b| [b.y, b.bottom()]).collect();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    xs.dedup();
    ys.dedup();
    let mut area = 0.0;
    for xw in xs.windows(2) {
        for yw in ys.windows(2) {
            let (mx, my) = (0.5 * (xw[0] + xw[1]), 0.5 * (yw[0] + yw[1]));
            if boxes.iter().any(|b| mx > b.x && mx < b.right() && my > b.y && my < b.bottom()) {
                area += (xw[1] - xw[0]) * (yw[1] - yw[0]);
            }
        }
    }
    area
}

fn default_sigma_c() -> f64 {
    2.0
}
fn default_sigma_s() -> f64 {
    0.05
}
fn default_sigma_f() -> f64 {
    0.1
}
fn default_p_drop() -> f64 {
    0.05
}
fn default_o_thr() -> f64 {
    0.6
}
fn default_dim() -> usize {
    DEFAULT_DESCRIPTOR_DIM
}
fn default_fp_size() -> [f64; 2] {
    [16.0, 160.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticDetectorConfig {
    /// Standard deviation of the box-center perturbation, pixels.
    #[serde(default = "default_sigma_c")]
    pub sigma_center: f64,
    /// Standard deviation of the multiplicative size perturbation.
    #[serde(default = "default_sigma_s")]
    pub sigma_size: f64,
    /// Per-component standard deviation of descriptor noise.
    #[serde(default = "default_sigma_f")]
    pub sigma_feature: f64,
    #[serde(default = "default_p_drop")]
    pub p_drop: f64,
    /// Expected number of false positives per frame.
    #[serde(default)]
    pub fp_rate: f64,
    #[serde(default)]
    pub p_duplicate: f64,
    /// Occlusion fraction at or above which an object is not detected.
    #[serde(default = "default_o_thr")]
    pub occlusion_threshold: f64,
    #[serde(default = "default_dim")]
    pub descriptor_dim: usize,
    /// Side-length range of false-positive boxes, pixels.
    #[serde(default = "default_fp_size")]
    pub fp_size: [f64; 2],
    #[serde(default)]
    pub seed: u64,
}

impl Default for SyntheticDetectorConfig {
    fn default() -> Self {
        Self {
            sigma_center: default_sigma_c(),
            sigma_size: default_sigma_s(),
            sigma_feature: default_sigma_f(),
            p_drop: default_p_drop(),
            fp_rate: 0.0,
            p_duplicate: 0.0,
            occlusion_threshold: default_o_thr(),
            descriptor_dim: default_dim(),
            fp_size: default_fp_size(),
            seed: 0,
        }
    }
}

impl SyntheticDetectorConfig {
    /// A detector that reports ground truth exactly.
    pub fn perfect() -> Self {
        Self { sigma_center: 0.0, sigma_size: 0.0, sigma_feature: 0.0, p_drop: 0.0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, p) in [("p_drop", self.p_drop), ("p_duplicate", self.p_duplicate), ("occlusion_threshold", self.occlusion_threshold)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("{name} = {p} is not a probability"));
            }
        }
        for (name, s) in [("sigma_center", self.sigma_center), ("sigma_size", self.sigma_size), ("sigma_feature", self.sigma_feature), ("fp_rate", self.fp_rate)] {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(format!("{name} = {s} must be a non-negative number"));
            }
        }
        if self.descriptor_dim == 0 {
            return Err("descriptor_dim must be positive".into());
        }
        if !(self.fp_size[0] >= 1.0 && self.fp_size[1] >= self.fp_size[0]) {
            return Err(format!("fp_size {:?} must be an increasing range starting at >= 1 px", self.fp_size));
        }
        Ok(())
    }
}

const STREAM_OBJECT: u64 = 1;
const STREAM_FALSE_POSITIVE: u64 = 2;
const STREAM_QUERY: u64 = 3;

/// Deterministic keyed sub-stream of the detector seed.
fn substream(seed: u64, tag: u64, index: u64, sub: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((tag << 56) | ((index & 0xff_ffff_ffff) << 16) | (sub & 0xffff));
    rng
}

/// Ground-truth-driven detector with dropout, noise, duplicates and false positives.
///
/// Each frame and each feature query draws from its own keyed sub-stream, so the
/// detection stream for a seed does not depend on which boxes the tracker queries.
#[derive(Debug, Clone)]
pub struct SyntheticDetector {
    cfg: SyntheticDetectorConfig,
    frames: u64,
    queries: u64,
}

impl SyntheticDetector {
    pub fn new(cfg: SyntheticDetectorConfig) -> Self {
        Self { cfg, frames: 0, queries: 0 }
    }

    pub fn config(&self) -> &SyntheticDetectorConfig {
        &self.cfg
    }

    pub fn detect(&mut self, snapshot: &SceneSnapshot, pose: &CameraPose, cam: &CameraModel) -> DetectionSet {
        let frame = self.frames;
        self.frames += 1;
        let cfg = &self.cfg;
        let mut out = DetectionSet::empty(snapshot.timestamp);

        let latents = |id: u32| snapshot.objects.iter().find(|o| o.id == id).map(|o| &o.latent);
        for app in observe(snapshot, pose, cam) {
            let Some(visible) = app.in_image else { continue };
            if app.occlusion >= cfg.occlusion_threshold {
                continue;
            }
            let latent = latents(app.id).expect("appearance refers to a snapshot object");
            let mut rng = substream(cfg.seed, STREAM_OBJECT, frame, app.id as u64);
            if rng.random::<f64>() < cfg.p_drop {
                continue;
            }
            let confidence = (0.95 - 0.5 * app.occlusion).clamp(0.0, 1.0);
            out.detections.push(self.perturbed_detection(&visible, latent, confidence, &mut rng));
            if rng.random::<f64>() < cfg.p_duplicate {
                out.detections.push(self.perturbed_detection(&visible, latent, 0.8 * confidence, &mut rng));
            }
        }

        if cfg.fp_rate > 0.0 {
            let mut rng = substream(cfg.seed, STREAM_FALSE_POSITIVE, frame, 0);
            let count = Poisson::new(cfg.fp_rate).map(|p| p.sample(&mut rng) as usize).unwrap_or(0);
            for _ in 0..count {
                let w = rng.random_range(cfg.fp_size[0]..=cfg.fp_size[1]).min(cam.width());
                let h = rng.random_range(cfg.fp_size[0]..=cfg.fp_size[1]).min(cam.height());
                let x = rng.random_range(0.0..=(cam.width() - w));
                let y = rng.random_range(0.0..=(cam.height() - h));
                let descriptor = FeatureDescriptor::random_unit(&mut rng, cfg.descriptor_dim);
                let confidence = rng.random_range(0.3..0.9);
                out.detections.push(Detection { bbox: BoundingBox { x, y, w, h }, descriptor, confidence });
            }
        }
        out
    }

    fn perturbed_detection(&self, gt: &BoundingBox, latent: &FeatureDescriptor, confidence: f64, rng: &mut ChaCha8Rng) -> Detection {
        let cfg = &self.cfg;
        let c = gt.center();
        let mut n = || rng.sample::<f64, _>(StandardNormal);
        let (ncx, ncy, nw, nh) = (n(), n(), n(), n());
        let bbox = if cfg.sigma_center == 0.0 && cfg.sigma_size == 0.0 {
            *gt
        } else {
            let w = (gt.w * (1.0 + cfg.sigma_size * nw)).max(1.0);
            let h = (gt.h * (1.0 + cfg.sigma_size * nh)).max(1.0);
            let (cx, cy) = (c.u + cfg.sigma_center * ncx, c.v + cfg.sigma_center * ncy);
            BoundingBox { x: cx - 0.5 * w, y: cy - 0.5 * h, w, h }
        };
        Detection { bbox, descriptor: latent.perturbed(cfg.sigma_feature, rng), confidence }
    }

    /// Descriptor of whatever the given box actually covers: the object with the
    /// highest IOU against it (lowest id on ties), or a random unit vector when the
    /// box covers no object.
    pub fn extract_target_feature(
        &mut self,
        snapshot: &SceneSnapshot,
        pose: &CameraPose,
        cam: &CameraModel,
        bbox: &BoundingBox,
    ) -> FeatureDescriptor {
        let query = self.queries;
        self.queries += 1;
        let mut rng = substream(self.cfg.seed, STREAM_QUERY, query, 0);
        let mut best: Option<(f64, u32)> = None;
        for app in observe(snapshot, pose, cam) {
            let Some(b) = app.in_image else { continue };
            let score = iou(&b, bbox);
            if score > 0.0 && best.is_none_or(|(s, id)| score > s || (score == s && app.id < id)) {
                best = Some((score, app.id));
            }
        }
        match best.and_then(|(_, id)| snapshot.objects.iter().find(|o| o.id == id)) {
            Some(obj) => obj.latent.perturbed(self.cfg.sigma_feature, &mut rng),
            None => FeatureDescriptor::random_unit(&mut rng, self.cfg.descriptor_dim),
        }
    }
}

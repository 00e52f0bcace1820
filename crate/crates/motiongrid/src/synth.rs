//! Synthetic scene generator and scorer — the verification backbone.
//!
//! Scenes are boxes (static walls, moving actors on straight constant-
//! velocity paths) plus an optional flat ground plane, observed by a
//! spinning range sensor on a moving ego. Each frame casts the full ray
//! pattern from the current ego pose and keeps the nearest intersection per
//! ray, so occlusion — and with it every shadowing situation the grids must
//! handle — falls out of the construction. Every echo carries ground truth
//! (did an actor surface produce it?), which [`evaluate`] scores labels
//! against without ever looking at grid internals.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::ego::{mat_mul, mat_transpose, mat_vec, rot_xyz, OdometrySample, Transform};
use crate::error::DataError;
use crate::frame::{Echo, Label, LabeledFrame, ScanFrame};
use crate::geometry::Vec3;
use crate::scalar::GridScalar;

/// Axis-aligned box, min/max corners in meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Box3<S = f64> {
    pub min: Vec3<S>,
    pub max: Vec3<S>,
}

impl<S: GridScalar> Box3<S> {
    pub fn new(min: Vec3<S>, max: Vec3<S>) -> Self {
        Self { min, max }
    }

    pub fn translated(&self, d: Vec3<S>) -> Self {
        Self {
            min: self.min + d,
            max: self.max + d,
        }
    }

    fn has_positive_extent(&self) -> bool {
        self.min.is_finite()
            && self.max.is_finite()
            && (0..3).all(|a| self.min.axis(a) < self.max.axis(a))
    }

    /// Distance along the unit ray `o + t·dir` to this box, if hit in front
    /// of the origin (slab intersection). An origin inside the box hits the
    /// exit face.
    fn ray_distance(&self, o: Vec3<S>, dir: Vec3<S>) -> Option<S> {
        let mut t_near = S::neg_infinity();
        let mut t_far = S::infinity();
        for a in 0..3 {
            let d = dir.axis(a);
            let (lo, hi) = (self.min.axis(a), self.max.axis(a));
            if d == S::zero() {
                if o.axis(a) < lo || o.axis(a) > hi {
                    return None;
                }
            } else {
                let ta = (lo - o.axis(a)) / d;
                let tb = (hi - o.axis(a)) / d;
                let (tn, tf) = if ta <= tb { (ta, tb) } else { (tb, ta) };
                t_near = t_near.max(tn);
                t_far = t_far.min(tf);
                if t_near > t_far {
                    return None;
                }
            }
        }
        let eps = S::from_f64_const(1e-9);
        if t_near > eps {
            Some(t_near)
        } else if t_far > eps {
            Some(t_far)
        } else {
            None
        }
    }
}

/// A moving box: `shape` is its pose at frame 0, moved by `velocity` (m/s,
/// world frame) in a straight line.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Actor<S = f64> {
    pub shape: Box3<S>,
    pub velocity: Vec3<S>,
}

/// Spinning-sensor ray pattern: `azimuth_steps` directions over a full turn
/// per elevation row, rows spread evenly over [elevation_min, elevation_max]
/// radians. Returns beyond `max_range` meters are dropped.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
#[serde(bound(
    serialize = "S: Serialize",
    deserialize = "S: GridScalar + Deserialize<'de>"
))]
pub struct SensorSpec<S = f64> {
    pub azimuth_steps: usize,
    pub elevation_steps: usize,
    pub elevation_min: S,
    pub elevation_max: S,
    pub max_range: S,
}

impl<S: GridScalar> Default for SensorSpec<S> {
    fn default() -> Self {
        Self {
            azimuth_steps: 1024,
            elevation_steps: 32,
            elevation_min: S::from_f64_const(-0.35),
            elevation_max: S::from_f64_const(0.10),
            max_range: S::from_f64_const(80.0),
        }
    }
}

/// Full scene description; serializable as a human-editable JSON file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
#[serde(bound(
    serialize = "S: Serialize",
    deserialize = "S: GridScalar + Deserialize<'de>"
))]
pub struct SceneSpec<S = f64> {
    pub duration_frames: usize,
    /// Scan frequency in Hz; timestamps are frame_index / frame_rate.
    pub frame_rate: f64,
    /// Flat ground plane height (meters, world z); omit for no ground.
    pub ground_z: Option<S>,
    pub static_boxes: Vec<Box3<S>>,
    pub actors: Vec<Actor<S>>,
    /// Per-frame ego velocities; sample k moves the ego between frames k−1
    /// and k. Empty means a static ego. Timestamps in these entries are
    /// ignored; the generated log carries frame timestamps.
    pub ego_trajectory: Vec<OdometrySample<S>>,
    pub sensor: SensorSpec<S>,
    /// Standard deviation of Gaussian range noise along each ray (meters).
    pub noise_sigma: S,
}

impl<S: GridScalar> Default for SceneSpec<S> {
    fn default() -> Self {
        Self {
            duration_frames: 10,
            frame_rate: 10.0,
            ground_z: None,
            static_boxes: Vec::new(),
            actors: Vec::new(),
            ego_trajectory: Vec::new(),
            sensor: SensorSpec::default(),
            noise_sigma: S::zero(),
        }
    }
}

impl<S: GridScalar> SceneSpec<S> {
    fn validate(&self) -> Result<(), DataError> {
        if !(self.frame_rate.is_finite() && self.frame_rate > 0.0) {
            return Err(DataError::InvalidSpec(format!(
                "frame_rate must be positive, got {}",
                self.frame_rate
            )));
        }
        for (n, b) in self.static_boxes.iter().enumerate() {
            if !b.has_positive_extent() {
                return Err(DataError::InvalidSpec(format!(
                    "static box {n} must have positive extent on every axis"
                )));
            }
        }
        for (n, a) in self.actors.iter().enumerate() {
            if !a.shape.has_positive_extent() {
                return Err(DataError::InvalidSpec(format!(
                    "actor box {n} must have positive extent on every axis"
                )));
            }
            if !a.velocity.is_finite() {
                return Err(DataError::InvalidSpec(format!(
                    "actor {n} velocity must be finite"
                )));
            }
        }
        if self.sensor.azimuth_steps == 0 || self.sensor.elevation_steps == 0 {
            return Err(DataError::InvalidSpec(
                "sensor needs at least one azimuth and one elevation step".into(),
            ));
        }
        if !(self.sensor.elevation_min <= self.sensor.elevation_max) {
            return Err(DataError::InvalidSpec(
                "sensor elevation_min must not exceed elevation_max".into(),
            ));
        }
        if !(self.sensor.max_range > S::zero()) {
            return Err(DataError::InvalidSpec(
                "sensor max_range must be positive".into(),
            ));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= S::zero()) {
            return Err(DataError::InvalidSpec(
                "noise_sigma must be non-negative".into(),
            ));
        }
        if !self.ego_trajectory.is_empty() && self.ego_trajectory.len() < self.duration_frames {
            return Err(DataError::InvalidSpec(format!(
                "ego trajectory has {} samples for {} frames",
                self.ego_trajectory.len(),
                self.duration_frames
            )));
        }
        Ok(())
    }
}

/// Per-echo ground truth: whether an actor surface produced the echo.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EchoTruth {
    pub is_dynamic: bool,
    pub actor_id: Option<u32>,
}

/// Truth for a whole sequence; `frames[k][n]` matches echo `n` of frame `k`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub frames: Vec<Vec<EchoTruth>>,
}

/// Generate a labeled synthetic sequence: per frame, the sensor ray pattern
/// is cast from the integrated ego pose against ground, static boxes, and
/// the actors' current poses; the nearest hit per ray becomes an echo
/// (occlusion is therefore exact), optionally perturbed along the ray by
/// Gaussian noise. Echo positions are in the *current sensor frame* with the
/// sensor at the origin. Deterministic for a given (spec, seed).
///
/// The returned odometry log matches the ego trajectory exactly, so a
/// pipeline consuming it can compensate the motion without error.
pub fn generate_scene<S: GridScalar>(
    spec: &SceneSpec<S>,
    seed: u64,
) -> Result<(Vec<ScanFrame<S>>, GroundTruth, Vec<OdometrySample<S>>), DataError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = spec.noise_sigma.to_f64_lossy();
    let noise = (sigma > 0.0).then(|| Normal::new(0.0, sigma).unwrap());
    let dt = 1.0 / spec.frame_rate;

    // Precompute the ray pattern in the sensor frame (unit directions).
    let sensor = &spec.sensor;
    let mut pattern = Vec::with_capacity(sensor.azimuth_steps * sensor.elevation_steps);
    for e in 0..sensor.elevation_steps {
        let el = if sensor.elevation_steps == 1 {
            sensor.elevation_min
        } else {
            let f = S::from_usize(e).unwrap()
                / S::from_usize(sensor.elevation_steps - 1).unwrap();
            sensor.elevation_min + (sensor.elevation_max - sensor.elevation_min) * f
        };
        for a in 0..sensor.azimuth_steps {
            let az = S::from_f64_const(std::f64::consts::TAU)
                * S::from_usize(a).unwrap()
                / S::from_usize(sensor.azimuth_steps).unwrap();
            pattern.push(Vec3::new(
                el.cos() * az.cos(),
                el.cos() * az.sin(),
                el.sin(),
            ));
        }
    }

    let mut frames = Vec::with_capacity(spec.duration_frames);
    let mut truth = GroundTruth::default();
    let mut odometry = Vec::with_capacity(spec.duration_frames);

    // Ego pose in world coordinates, integrated frame to frame with the same
    // rotation convention the compensation transform uses.
    let mut ego_pos = Vec3::zero();
    let mut ego_rot = Transform::<S>::identity().r;

    for k in 0..spec.duration_frames {
        let timestamp = k as f64 / spec.frame_rate;
        let (v, w) = spec
            .ego_trajectory
            .get(k)
            .map(|s| (s.v, s.w))
            .unwrap_or((Vec3::zero(), Vec3::zero()));
        if k > 0 {
            // Sample k describes the motion over (t_{k-1}, t_k].
            let dt_s = S::from_f64_const(dt);
            ego_pos = ego_pos + mat_vec(&ego_rot, v * dt_s);
            ego_rot = mat_mul(&ego_rot, &rot_xyz(w.x * dt_s, w.y * dt_s, w.z * dt_s));
        }
        odometry.push(OdometrySample { timestamp, v, w });

        let shift = S::from_usize(k).unwrap() / S::from_f64_const(spec.frame_rate);
        let actor_boxes: Vec<Box3<S>> = spec
            .actors
            .iter()
            .map(|a| a.shape.translated(a.velocity * shift))
            .collect();

        let ego_rot_inv = mat_transpose(&ego_rot);
        let mut echoes = Vec::new();
        let mut frame_truth = Vec::new();
        for dir_sensor in &pattern {
            let dir = mat_vec(&ego_rot, *dir_sensor);

            // Nearest surface along the ray: ground plane, walls, actors.
            let mut best: Option<(S, Option<u32>)> = None;
            let mut consider = |t: S, id: Option<u32>| {
                if t <= sensor.max_range && best.map_or(true, |(bt, _)| t < bt) {
                    best = Some((t, id));
                }
            };
            if let Some(gz) = spec.ground_z {
                if dir.z != S::zero() {
                    let t = (gz - ego_pos.z) / dir.z;
                    if t > S::from_f64_const(1e-9) {
                        consider(t, None);
                    }
                }
            }
            for b in &spec.static_boxes {
                if let Some(t) = b.ray_distance(ego_pos, dir) {
                    consider(t, None);
                }
            }
            for (id, b) in actor_boxes.iter().enumerate() {
                if let Some(t) = b.ray_distance(ego_pos, dir) {
                    consider(t, Some(id as u32));
                }
            }

            let Some((mut t, actor_id)) = best else { continue };
            if let Some(n) = &noise {
                let dt_noise = S::from_f64_const(n.sample(&mut rng));
                t = (t + dt_noise).max(S::from_f64_const(1e-6));
            }
            let hit_world = ego_pos + dir * t;
            let hit_sensor = mat_vec(&ego_rot_inv, hit_world - ego_pos);
            echoes.push(Echo::at(hit_sensor));
            frame_truth.push(EchoTruth {
                is_dynamic: actor_id.is_some(),
                actor_id,
            });
        }

        frames.push(ScanFrame {
            scan_id: k as u64,
            timestamp,
            sensor_origin: Vec3::zero(),
            echoes,
        });
        truth.frames.push(frame_truth);
    }
    Ok((frames, truth, odometry))
}

/// Binary detection metrics for the Dynamic class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub iou: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// No true positives at all — precision/recall/IoU degenerate to 0 by
    /// convention rather than erroring.
    pub zero_tp: bool,
}

/// Score labels against ground truth over all echoes of every frame from
/// `warmup_frames` (positional) onward. The grids need history before their
/// labels mean anything, hence the warmup skip. IoU = TP/(TP+FP+FN);
/// ratios with a zero denominator are reported as 0 with `zero_tp` set.
pub fn evaluate(
    labels: &[LabeledFrame],
    truth: &GroundTruth,
    warmup_frames: usize,
) -> Result<Metrics, DataError> {
    if labels.len() != truth.frames.len() {
        return Err(DataError::LengthMismatch {
            labels: labels.len(),
            truth: truth.frames.len(),
        });
    }
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (frame, frame_truth) in labels.iter().zip(&truth.frames).skip(warmup_frames) {
        if frame.labels.len() != frame_truth.len() {
            return Err(DataError::LengthMismatch {
                labels: frame.labels.len(),
                truth: frame_truth.len(),
            });
        }
        for (label, t) in frame.labels.iter().zip(frame_truth) {
            match (*label == Label::Dynamic, t.is_dynamic) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    Ok(Metrics {
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
        iou: ratio(tp, tp + fp + fn_),
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        zero_tp: tp == 0,
    })
}

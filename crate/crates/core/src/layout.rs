//! Similarity-pose optimization of instance meshes against extracted point
//! clouds, plus scene assembly and the F-score layout metric.
//!
//! The optimizer runs Adam over the seven pose parameters on an
//! epoch-structured schedule: within every epoch the first
//! `warmup_3d_iters` iterations minimize only the 3D chamfer term and the
//! remainder minimize the joint 3D + projected-2D objective. Adam moments
//! reset at each epoch boundary, and the pose returned is the one whose
//! end-of-epoch joint loss is smallest.

use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chamfer::{loss_and_grad_cached, ChamferWeights, NnIndex, TargetCache};
use crate::error::Error;
use crate::geom::{PinholeCamera, PointCloud, PoseParams, TriangleMesh};

/// Instances whose target cloud is smaller than this are skipped by the
/// pipeline (with a structured warning) rather than optimized.
pub const MIN_TARGET_POINTS: usize = 50;

/// Default F-score inlier threshold, in scene units.
pub const DEFAULT_FSCORE_TAU: f64 = 0.02;

/// Pose-optimization hyperparameters. The defaults are the published
/// schedule and must not drift.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct OptimConfig {
    /// Weight of the 3D chamfer term.
    pub lambda1: f64,
    /// Weight of the projected 2D chamfer term.
    pub lambda2: f64,
    /// Number of epochs; Adam moments reset at each epoch boundary.
    pub epochs: usize,
    /// Iterations per epoch.
    pub iters_per_epoch: usize,
    /// Iterations at the start of EVERY epoch optimizing only the 3D term.
    pub warmup_3d_iters: usize,
    /// Adam learning rate.
    pub lr: f64,
    /// Adam first-moment decay.
    pub beta1: f64,
    /// Adam second-moment decay.
    pub beta2: f64,
    /// Adam denominator offset.
    pub epsilon: f64,
    /// Both clouds are uniformly subsampled to at most this many points.
    pub max_points: usize,
    /// Seed for every random choice the optimizer makes.
    pub seed: u64,
    /// Whether the 2D term is used at all (requires a camera).
    pub use_2d: bool,
    /// Record the loss of every iteration into the trace.
    pub record_iter_losses: bool,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 5e-2,
            epochs: 20,
            iters_per_epoch: 2000,
            warmup_3d_iters: 1200,
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_points: 4096,
            seed: 0,
            use_2d: true,
            record_iter_losses: false,
        }
    }
}

/// Record of one optimization run.
#[derive(Clone, Debug)]
pub struct OptimTrace {
    /// End-of-epoch joint loss, one per epoch.
    pub epoch_losses: Vec<f64>,
    /// End-of-epoch pose, one per epoch.
    pub epoch_poses: Vec<PoseParams>,
    /// Index of the epoch with the smallest end-of-epoch loss.
    pub best_epoch: usize,
    /// Per-iteration losses (all epochs concatenated) when requested.
    pub iter_losses: Option<Vec<f64>>,
    /// The subsampled clouds the losses were evaluated on, kept so recorded
    /// losses can be re-verified.
    pub moving_used: PointCloud,
    pub target_used: PointCloud,
}

/// Deterministic uniform subsample without replacement (partial
/// Fisher-Yates); clouds at or under the budget pass through unchanged.
pub fn subsample<R: Rng>(cloud: &PointCloud, max_points: usize, rng: &mut R) -> PointCloud {
    if cloud.len() <= max_points || max_points == 0 {
        return cloud.clone();
    }
    let mut indices: Vec<usize> = (0..cloud.len()).collect();
    for i in 0..max_points {
        let j = rng.random_range(i..indices.len());
        indices.swap(i, j);
    }
    indices.truncate(max_points);
    cloud.select(&indices)
}

/// Closed-form pose initialization: centroid offset for translation, bounding
/// box diagonal ratio for scale, identity rotation.
pub fn init_pose(moving: &PointCloud, target: &PointCloud) -> Result<PoseParams, Error> {
    let c_moving = moving.centroid()?;
    let c_target = target.centroid()?;
    let d_moving = moving.aabb()?.diagonal();
    let d_target = target.aabb()?.diagonal();
    if d_moving <= 0.0 {
        return Err(Error::DegenerateCloud("moving cloud has zero extent"));
    }
    if d_target <= 0.0 {
        return Err(Error::DegenerateCloud("target cloud has zero extent"));
    }
    Ok(PoseParams {
        translation: c_target - c_moving,
        rotation: crate::geom::Vec3::ZERO,
        log_scale: (d_target / d_moving).ln(),
    })
}

/// Adam over the flat 7-parameter pose vector.
struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: [f64; 7],
    v: [f64; 7],
    t: i32,
}

impl Adam {
    fn new(cfg: &OptimConfig) -> Self {
        Self {
            lr: cfg.lr,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.epsilon,
            m: [0.0; 7],
            v: [0.0; 7],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64; 7], grad: &[f64; 7]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for k in 0..7 {
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * grad[k];
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * grad[k] * grad[k];
            let m_hat = self.m[k] / bc1;
            let v_hat = self.v[k] / bc2;
            params[k] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Optimizes the similarity pose aligning `moving` to `target`.
///
/// Bit-deterministic for identical inputs, seed, and config. Aborts with
/// `NonFiniteLoss` the moment the objective or its gradient stops being
/// finite. Returns the best end-of-epoch pose and the full trace.
pub fn optimize_pose(
    moving: &PointCloud,
    target: &PointCloud,
    camera: Option<&PinholeCamera>,
    cfg: &OptimConfig,
) -> Result<(PoseParams, OptimTrace), Error> {
    if moving.is_empty() || target.is_empty() {
        return Err(Error::EmptyInput("optimize_pose cloud"));
    }
    if cfg.epochs == 0 || cfg.iters_per_epoch == 0 {
        return Err(Error::InvalidInput(String::from(
            "epochs and iters_per_epoch must be positive",
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let moving_used = subsample(moving, cfg.max_points, &mut rng);
    let target_used = subsample(target, cfg.max_points, &mut rng);

    let joint_2d = cfg.use_2d && camera.is_some();
    let joint_cam = if joint_2d { camera } else { None };
    let cache = TargetCache::new(&target_used, joint_cam)?;

    let warmup_weights = ChamferWeights {
        lambda1: cfg.lambda1,
        lambda2: cfg.lambda2,
        use_2d: false,
    };
    let joint_weights = ChamferWeights {
        lambda1: cfg.lambda1,
        lambda2: cfg.lambda2,
        use_2d: joint_2d,
    };

    let mut pose = init_pose(&moving_used, &target_used)?;
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut epoch_poses = Vec::with_capacity(cfg.epochs);
    let mut iter_losses = cfg
        .record_iter_losses
        .then(|| Vec::with_capacity(cfg.epochs * cfg.iters_per_epoch));
    let mut best: Option<(f64, usize)> = None;

    for epoch in 0..cfg.epochs {
        let mut adam = Adam::new(cfg);
        let mut params = pose.to_vector();
        for iter in 0..cfg.iters_per_epoch {
            let weights = if iter < cfg.warmup_3d_iters {
                &warmup_weights
            } else {
                &joint_weights
            };
            let current = PoseParams::from_vector(&params);
            let (loss, grad) =
                loss_and_grad_cached(&current, &moving_used, &cache, joint_cam, weights)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, iter });
            }
            if let Some(out) = iter_losses.as_mut() {
                out.push(loss);
            }
            adam.step(&mut params, &grad);
        }
        pose = PoseParams::from_vector(&params);

        // End-of-epoch selection always uses the joint objective, including
        // for epochs that ended inside the warmup phase.
        let (loss, _) =
            loss_and_grad_cached(&pose, &moving_used, &cache, joint_cam, &joint_weights)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                iter: cfg.iters_per_epoch,
            });
        }
        epoch_losses.push(loss);
        epoch_poses.push(pose);
        // Strict improvement keeps the earliest epoch on exact ties.
        if best.map_or(true, |(b, _)| loss < b) {
            best = Some((loss, epoch));
        }
    }

    let (_, best_epoch) = best.expect("at least one epoch ran");
    Ok((
        epoch_poses[best_epoch],
        OptimTrace {
            epoch_losses,
            epoch_poses: epoch_poses.clone(),
            best_epoch,
            iter_losses,
            moving_used,
            target_used,
        },
    ))
}

/// F-score between clouds at inlier threshold `tau`, in percent.
///
/// Precision is the fraction of `a` within `tau` of `b`, recall the fraction
/// of `b` within `tau` of `a`, and the score `2PR/(P+R) * 100` (zero when
/// both vanish).
pub fn fscore(a: &PointCloud, b: &PointCloud, tau: f64) -> Result<f64, Error> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput("fscore cloud"));
    }
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::InvalidInput(String::from(
            "fscore threshold must be finite and positive",
        )));
    }
    let tau_sq = tau * tau;
    let pa: Vec<[f64; 3]> = a.points.iter().map(|p| p.to_array()).collect();
    let pb: Vec<[f64; 3]> = b.points.iter().map(|p| p.to_array()).collect();
    let ia = NnIndex::build(pa.clone())?;
    let ib = NnIndex::build(pb.clone())?;
    let within = |pts: &[[f64; 3]], index: &NnIndex<3>| -> f64 {
        let hits = pts.iter().filter(|p| index.nearest(p).1 <= tau_sq).count();
        hits as f64 / pts.len() as f64
    };
    let precision = within(&pa, &ib);
    let recall = within(&pb, &ia);
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * precision * recall / (precision + recall) * 100.0)
}

/// One placed object: a mesh and the pose that carries it into the scene.
#[derive(Clone, Debug)]
pub struct SceneInstance {
    pub name: String,
    pub mesh: TriangleMesh,
    pub pose: PoseParams,
}

/// A node of the assembled scene. Vertices stay untouched; the pose is the
/// node transform.
#[derive(Clone, Debug)]
pub struct SceneNode {
    pub name: String,
    pub mesh: TriangleMesh,
    pub pose: PoseParams,
    pub is_background: bool,
}

/// Assembled scene: one node per instance plus an optional background node.
#[derive(Clone, Debug, Default)]
pub struct SceneGraph {
    pub nodes: Vec<SceneNode>,
}

/// Collects optimized instances (and optionally a background) into a scene
/// graph. No welding or vertex rewriting happens; each mesh is carried
/// as-is under its node transform.
pub fn assemble_scene(
    instances: Vec<SceneInstance>,
    background: Option<SceneInstance>,
) -> SceneGraph {
    let mut nodes: Vec<SceneNode> = instances
        .into_iter()
        .map(|inst| SceneNode {
            name: inst.name,
            mesh: inst.mesh,
            pose: inst.pose,
            is_background: false,
        })
        .collect();
    if let Some(bg) = background {
        nodes.push(SceneNode {
            name: bg.name,
            mesh: bg.mesh,
            pose: bg.pose,
            is_background: true,
        });
    }
    SceneGraph { nodes }
}

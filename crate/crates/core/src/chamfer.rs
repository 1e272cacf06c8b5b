//! Exact nearest-neighbor search and the chamfer alignment losses.
//!
//! The 3D/2D chamfer distances here are squared-distance, mean-aggregated,
//! and bidirectional:
//!
//! ```text
//! CD(A, B) = 1/|A| sum_a min_b |a - b|^2  +  1/|B| sum_b min_a |a - b|^2
//! ```
//!
//! [`loss_and_grad`] evaluates the pose alignment objective
//! `lambda1 * CD_3D(pose(M), PC) + lambda2 * CD_2D(proj(pose(M)), proj(PC))`
//! together with its analytic gradient in the pose parameters, holding the
//! nearest-neighbor correspondences of the current evaluation fixed (the
//! usual chamfer subgradient).

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::Error;
use crate::geom::{
    project_camera_point, rotation_jacobian, PinholeCamera, PointCloud, PoseParams, Vec3,
};

/// Squared Euclidean distance, the one comparison kernel used by every
/// search path so results are bit-identical across them.
#[inline]
pub fn dist_sq<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    let mut acc = 0.0;
    for k in 0..D {
        let d = a[k] - b[k];
        acc += d * d;
    }
    acc
}

const LEAF_SIZE: usize = 12;

/// Exact kd-tree over `D`-dimensional points (`D` = 2 or 3 in practice).
///
/// Queries return the true nearest neighbor; when several points tie on
/// distance, the lowest original point index wins. Build and query are fully
/// deterministic for identical input.
pub struct NnIndex<const D: usize> {
    pts: Vec<[f64; D]>,
    /// Permutation of point indices laid out as an implicit median tree:
    /// node over [lo, hi) keeps its median element at lo + (hi - lo) / 2.
    order: Vec<u32>,
    /// Split axis per tree node, stored at the node's median slot.
    axis: Vec<u8>,
}

impl<const D: usize> NnIndex<D> {
    pub fn build(pts: Vec<[f64; D]>) -> Result<Self, Error> {
        if pts.is_empty() {
            return Err(Error::EmptyInput("nearest-neighbor index"));
        }
        for p in &pts {
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(alloc::string::String::from(
                    "nearest-neighbor index input contains non-finite coordinates",
                )));
            }
        }
        let mut order: Vec<u32> = (0..pts.len() as u32).collect();
        let mut axis = alloc::vec![0u8; pts.len()];
        Self::split(&pts, &mut order, &mut axis, 0);
        Ok(Self { pts, order, axis })
    }

    fn split(pts: &[[f64; D]], order: &mut [u32], axis: &mut [u8], offset: usize) {
        if order.len() <= LEAF_SIZE {
            return;
        }
        // Widest-extent axis; ties resolve to the lowest axis index.
        let mut lo = [f64::INFINITY; D];
        let mut hi = [f64::NEG_INFINITY; D];
        for &i in order.iter() {
            let p = &pts[i as usize];
            for k in 0..D {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let mut ax = 0;
        let mut best = hi[0] - lo[0];
        for k in 1..D {
            let ext = hi[k] - lo[k];
            if ext > best {
                best = ext;
                ax = k;
            }
        }
        let mid = order.len() / 2;
        // (coordinate, index) ordering keeps the partition deterministic even
        // under duplicate coordinates.
        order.select_nth_unstable_by(mid, |&a, &b| {
            pts[a as usize][ax]
                .total_cmp(&pts[b as usize][ax])
                .then(a.cmp(&b))
        });
        axis[offset + mid] = ax as u8;
        let (left, rest) = order.split_at_mut(mid);
        let right = &mut rest[1..];
        Self::split(pts, left, axis, offset);
        Self::split(pts, right, axis, offset + mid + 1);
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.pts.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.pts.is_empty()
    }

    /// Index and squared distance of the nearest point to `q`.
    pub fn nearest(&self, q: &[f64; D]) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(q, 0, self.order.len(), &mut best);
        best
    }

    #[inline]
    fn consider(&self, q: &[f64; D], candidate: u32, best: &mut (usize, f64)) {
        let i = candidate as usize;
        let d = dist_sq(q, &self.pts[i]);
        if d < best.1 || (d == best.1 && i < best.0) {
            *best = (i, d);
        }
    }

    fn search(&self, q: &[f64; D], lo: usize, hi: usize, best: &mut (usize, f64)) {
        if hi - lo <= LEAF_SIZE {
            for &i in &self.order[lo..hi] {
                self.consider(q, i, best);
            }
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let ax = self.axis[mid] as usize;
        let pivot = self.pts[self.order[mid] as usize][ax];
        self.consider(q, self.order[mid], best);
        let delta = q[ax] - pivot;
        let (near, far) = if delta < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(q, near.0, near.1, best);
        // `<=` so equal-distance candidates across the plane stay reachable
        // and the lowest-index tie-break remains exact.
        if delta * delta <= best.1 {
            self.search(q, far.0, far.1, best);
        }
    }

    /// The `k` nearest points to `q`, ascending by (squared distance, index).
    ///
    /// Exact: the result is the set of `k` lexicographically smallest
    /// (distance², index) pairs, so ties resolve deterministically. Returns
    /// fewer than `k` entries only when the index holds fewer points.
    pub fn knn(&self, q: &[f64; D], k: usize) -> Vec<(usize, f64)> {
        let k = k.min(self.pts.len());
        if k == 0 {
            return Vec::new();
        }
        // Kept sorted ascending; worst candidate is the last element.
        let mut found: Vec<(f64, u32)> = Vec::with_capacity(k + 1);
        self.search_k(q, 0, self.order.len(), k, &mut found);
        found.into_iter().map(|(d, i)| (i as usize, d)).collect()
    }

    #[inline]
    fn consider_k(&self, q: &[f64; D], candidate: u32, k: usize, found: &mut Vec<(f64, u32)>) {
        let d = dist_sq(q, &self.pts[candidate as usize]);
        if found.len() == k {
            let worst = found[k - 1];
            if (d, candidate) >= worst {
                return;
            }
        }
        let pos = found.partition_point(|&e| e < (d, candidate));
        found.insert(pos, (d, candidate));
        found.truncate(k);
    }

    fn search_k(&self, q: &[f64; D], lo: usize, hi: usize, k: usize, found: &mut Vec<(f64, u32)>) {
        if hi - lo <= LEAF_SIZE {
            for &i in &self.order[lo..hi] {
                self.consider_k(q, i, k, found);
            }
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let ax = self.axis[mid] as usize;
        let pivot = self.pts[self.order[mid] as usize][ax];
        self.consider_k(q, self.order[mid], k, found);
        let delta = q[ax] - pivot;
        let (near, far) = if delta < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search_k(q, near.0, near.1, k, found);
        if found.len() < k || delta * delta <= found[found.len() - 1].0 {
            self.search_k(q, far.0, far.1, k, found);
        }
    }
}

fn points_as_arrays(cloud: &PointCloud) -> Vec<[f64; 3]> {
    cloud.points.iter().map(|p| p.to_array()).collect()
}

fn mean_nearest_sq(from: &[[f64; 3]], to: &NnIndex<3>) -> f64 {
    let mut acc = 0.0;
    for p in from {
        acc += to.nearest(p).1;
    }
    acc / from.len() as f64
}

/// Bidirectional mean-of-squared-distances chamfer between 3D clouds.
///
/// Symmetric in its arguments and zero exactly on identical clouds. Errors
/// with `EmptyInput` when either side is empty.
pub fn chamfer3d(a: &PointCloud, b: &PointCloud) -> Result<f64, Error> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput("chamfer3d cloud"));
    }
    let pa = points_as_arrays(a);
    let pb = points_as_arrays(b);
    let ia = NnIndex::build(pa.clone())?;
    let ib = NnIndex::build(pb.clone())?;
    Ok(mean_nearest_sq(&pa, &ib) + mean_nearest_sq(&pb, &ia))
}

/// Projects a cloud, dropping culled points; returns (pixel, original index).
fn project_cloud(cam: &PinholeCamera, cloud: &PointCloud) -> Vec<([f64; 2], usize)> {
    let cfw = cam.camera_from_world();
    let mut out = Vec::with_capacity(cloud.len());
    for (i, &p) in cloud.points.iter().enumerate() {
        if let Some(px) = project_camera_point(cam, cfw.apply(p)) {
            out.push(([px.u, px.v], i));
        }
    }
    out
}

/// Bidirectional mean-of-squared-distances chamfer between the projections
/// of two clouds, in pixel units.
///
/// Culled points are excluded from both the means and the matches. A side
/// whose points are all culled raises `AllPointsCulled`.
pub fn chamfer2d(cam: &PinholeCamera, a: &PointCloud, b: &PointCloud) -> Result<f64, Error> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput("chamfer2d cloud"));
    }
    let pa: Vec<[f64; 2]> = project_cloud(cam, a).into_iter().map(|(p, _)| p).collect();
    let pb: Vec<[f64; 2]> = project_cloud(cam, b).into_iter().map(|(p, _)| p).collect();
    if pa.is_empty() {
        return Err(Error::AllPointsCulled("first"));
    }
    if pb.is_empty() {
        return Err(Error::AllPointsCulled("second"));
    }
    let ia = NnIndex::build(pa.clone())?;
    let ib = NnIndex::build(pb.clone())?;
    let mut fwd = 0.0;
    for p in &pa {
        fwd += ib.nearest(p).1;
    }
    let mut rev = 0.0;
    for p in &pb {
        rev += ia.nearest(p).1;
    }
    Ok(fwd / pa.len() as f64 + rev / pb.len() as f64)
}

/// Term weights for the alignment objective.
#[derive(Clone, Copy, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ChamferWeights {
    /// Weight of the 3D chamfer term.
    pub lambda1: f64,
    /// Weight of the projected 2D chamfer term.
    pub lambda2: f64,
    /// Whether the 2D term participates at all. `lambda2 == 0` disables it
    /// identically to `use_2d = false` (the 2D term is then never evaluated).
    pub use_2d: bool,
}

impl Default for ChamferWeights {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 5e-2,
            use_2d: true,
        }
    }
}

/// Precomputed search structures for a fixed target cloud, shared across
/// every iteration of a pose optimization. Only the moving cloud's index is
/// rebuilt per evaluation.
pub struct TargetCache {
    pts: Vec<[f64; 3]>,
    index: NnIndex<3>,
    /// Target projections and their index; `None` when no camera was given
    /// or when every target point is culled (surfaced as `AllPointsCulled`
    /// only if the 2D term is actually evaluated).
    proj: Option<(Vec<[f64; 2]>, NnIndex<2>)>,
}

impl TargetCache {
    pub fn new(target: &PointCloud, camera: Option<&PinholeCamera>) -> Result<Self, Error> {
        if target.is_empty() {
            return Err(Error::EmptyInput("loss_and_grad cloud"));
        }
        let pts = points_as_arrays(target);
        let index = NnIndex::build(pts.clone())?;
        let proj = match camera {
            Some(cam) => {
                let projected: Vec<[f64; 2]> = project_cloud(cam, target)
                    .into_iter()
                    .map(|(p, _)| p)
                    .collect();
                if projected.is_empty() {
                    None
                } else {
                    let idx = NnIndex::build(projected.clone())?;
                    Some((projected, idx))
                }
            }
            None => None,
        };
        Ok(Self { pts, index, proj })
    }
}

/// Objective value and gradient in the seven pose parameters
/// (translation xyz, axis-angle xyz, log-scale).
///
/// `moving` is the object-space cloud the pose applies to; `target` is fixed
/// in world space. The camera is required only when the 2D term is active.
/// Correspondences and the culled set are held fixed while differentiating,
/// so at correspondence-switch boundaries this is a subgradient.
pub fn loss_and_grad(
    pose: &PoseParams,
    moving: &PointCloud,
    target: &PointCloud,
    camera: Option<&PinholeCamera>,
    weights: &ChamferWeights,
) -> Result<(f64, [f64; 7]), Error> {
    let cache = TargetCache::new(target, camera)?;
    loss_and_grad_cached(pose, moving, &cache, camera, weights)
}

/// [`loss_and_grad`] against a prebuilt [`TargetCache`]; identical results.
pub fn loss_and_grad_cached(
    pose: &PoseParams,
    moving: &PointCloud,
    cache: &TargetCache,
    camera: Option<&PinholeCamera>,
    weights: &ChamferWeights,
) -> Result<(f64, [f64; 7]), Error> {
    if moving.is_empty() {
        return Err(Error::EmptyInput("loss_and_grad cloud"));
    }
    let use_2d = weights.use_2d && weights.lambda2 != 0.0;
    let cam = match (use_2d, camera) {
        (true, Some(c)) => Some(c),
        (true, None) => {
            return Err(Error::InvalidInput(alloc::string::String::from(
                "2d chamfer term requires a camera",
            )))
        }
        (false, _) => None,
    };

    let transform = pose.to_transform();
    let moved: Vec<[f64; 3]> = moving
        .points
        .iter()
        .map(|&p| transform.apply(p).to_array())
        .collect();
    let target_pts = &cache.pts;

    let n_moved = moved.len() as f64;
    let n_target = target_pts.len() as f64;

    // Gradient of the loss in each moved point, accumulated across terms.
    let mut point_grad = alloc::vec![Vec3::ZERO; moved.len()];

    // --- 3D term ---
    let moved_index = NnIndex::build(moved.clone())?;
    let target_index = &cache.index;
    let mut loss3_fwd = 0.0;
    for (i, p) in moved.iter().enumerate() {
        let (j, d) = target_index.nearest(p);
        loss3_fwd += d;
        let diff = Vec3::from_array(*p) - Vec3::from_array(target_pts[j]);
        point_grad[i] += diff * (2.0 * weights.lambda1 / n_moved);
    }
    let mut loss3_rev = 0.0;
    for q in target_pts.iter() {
        let (i, d) = moved_index.nearest(q);
        loss3_rev += d;
        let diff = Vec3::from_array(moved[i]) - Vec3::from_array(*q);
        point_grad[i] += diff * (2.0 * weights.lambda1 / n_target);
    }
    let loss3 = loss3_fwd / n_moved + loss3_rev / n_target;

    // --- 2D term ---
    let mut loss2 = 0.0;
    if let Some(cam) = cam {
        let cfw = cam.camera_from_world();
        // Projected moving points keep their camera-frame position for the
        // projection Jacobian.
        let mut proj_moving: Vec<([f64; 2], usize, Vec3)> = Vec::with_capacity(moved.len());
        for (i, p) in moved.iter().enumerate() {
            let p_cam = cfw.apply(Vec3::from_array(*p));
            if let Some(px) = project_camera_point(cam, p_cam) {
                proj_moving.push(([px.u, px.v], i, p_cam));
            }
        }
        if proj_moving.is_empty() {
            return Err(Error::AllPointsCulled("moving"));
        }
        let (proj_target, pt_index) = match &cache.proj {
            Some((pts, idx)) => (pts, idx),
            None => return Err(Error::AllPointsCulled("target")),
        };
        let n_pm = proj_moving.len() as f64;
        let n_pt = proj_target.len() as f64;
        let pm_pixels: Vec<[f64; 2]> = proj_moving.iter().map(|(px, _, _)| *px).collect();
        let pm_index = NnIndex::build(pm_pixels.clone())?;

        // Pixel-space gradient per projected moving point.
        let mut pixel_grad = alloc::vec![[0.0f64; 2]; proj_moving.len()];
        let mut loss2_fwd = 0.0;
        for (k, px) in pm_pixels.iter().enumerate() {
            let (j, d) = pt_index.nearest(px);
            loss2_fwd += d;
            let q = proj_target[j];
            pixel_grad[k][0] += (px[0] - q[0]) * (2.0 / n_pm);
            pixel_grad[k][1] += (px[1] - q[1]) * (2.0 / n_pm);
        }
        let mut loss2_rev = 0.0;
        for q in proj_target.iter() {
            let (k, d) = pm_index.nearest(q);
            loss2_rev += d;
            let px = pm_pixels[k];
            pixel_grad[k][0] += (px[0] - q[0]) * (2.0 / n_pt);
            pixel_grad[k][1] += (px[1] - q[1]) * (2.0 / n_pt);
        }
        loss2 = loss2_fwd / n_pm + loss2_rev / n_pt;

        // Chain pixel gradients back to the moved points:
        // d(u, v)/d(p_world) = J_pix(p_cam) * R_cw.
        let r_cw = cfw.rotation;
        for (k, (_, i, p_cam)) in proj_moving.iter().enumerate() {
            let g = pixel_grad[k];
            if g[0] == 0.0 && g[1] == 0.0 {
                continue;
            }
            let z_inv = 1.0 / p_cam.z;
            // Rows of J_pix.
            let ju = Vec3::new(cam.fx * z_inv, 0.0, -cam.fx * p_cam.x * z_inv * z_inv);
            let jv = Vec3::new(0.0, cam.fy * z_inv, -cam.fy * p_cam.y * z_inv * z_inv);
            // g^T J_pix R_cw  ==  R_cw^T (J_pix^T g).
            let cam_space = ju * g[0] + jv * g[1];
            point_grad[*i] += r_cw.transpose() * cam_space * weights.lambda2;
        }
    }

    // --- Fold per-point gradients into the pose parameters ---
    // moved_i = s R p_i + T, so
    //   d moved_i / dT      = I
    //   d moved_i / d logS  = s R p_i = moved_i - T
    //   d moved_i / d r_k   = s (dR/dr_k) p_i
    let jac = rotation_jacobian(pose.rotation);
    let mut grad = [0.0f64; 7];
    for (i, g) in point_grad.iter().enumerate() {
        if g.x == 0.0 && g.y == 0.0 && g.z == 0.0 {
            continue;
        }
        grad[0] += g.x;
        grad[1] += g.y;
        grad[2] += g.z;
        let moved_i = Vec3::from_array(moved[i]);
        grad[6] += g.dot(moved_i - pose.translation);
        let p_obj = moving.points[i] * transform.scale;
        grad[3] += g.dot(jac[0] * p_obj);
        grad[4] += g.dot(jac[1] * p_obj);
        grad[5] += g.dot(jac[2] * p_obj);
    }

    Ok((weights.lambda1 * loss3 + weights.lambda2 * loss2, grad))
}

//! Point-cloud extraction from depth maps, per-instance segmentation,
//! statistical cleanup, normal estimation, and plane-based background
//! reconstruction.

use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chamfer::NnIndex;
use crate::error::Error;
use crate::geom::{
    sym_eigen, unproject, Mat3, PinholeCamera, Pixel2, Point3, PointCloud, TriangleMesh, Vec2,
    Vec3,
};
use crate::image::ImageBuf;

/// Per-pixel depth in scene units (camera-frame Z). Non-positive values mark
/// invalid pixels; valid values must be finite.
#[derive(Clone, Debug)]
pub struct DepthMap {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f32>,
}

impl DepthMap {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: alloc::vec![0.0; (width * height) as usize],
        }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.data[(y * self.width + x) as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: f32) {
        self.data[(y * self.width + x) as usize] = v;
    }
}

/// Binary per-pixel instance mask with its label and id.
#[derive(Clone, Debug)]
pub struct InstanceMask {
    pub width: u32,
    pub height: u32,
    pub data: Vec<bool>,
    pub label: String,
    pub id: u32,
}

impl InstanceMask {
    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[(y * self.width + x) as usize]
    }
}

/// A point cloud that remembers which pixel produced each point.
#[derive(Clone, Debug)]
pub struct Pointmap {
    pub cloud: PointCloud,
    /// Flat source-pixel index (`y * width + x`) per point.
    pub pixel_index: Vec<u32>,
    pub width: u32,
    pub height: u32,
}

/// Lifts every valid depth pixel to a world-space point through the camera.
///
/// Points are unprojected at pixel centers; colors are copied per point when
/// an image is supplied. Errors with `ShapeMismatch` when dimensions
/// disagree and `EmptyInput` when no pixel is valid.
pub fn depth_to_pointmap(
    cam: &PinholeCamera,
    depth: &DepthMap,
    colors: Option<&ImageBuf>,
) -> Result<Pointmap, Error> {
    if depth.width != cam.width || depth.height != cam.height {
        return Err(Error::ShapeMismatch("depth dimensions do not match camera"));
    }
    if let Some(img) = colors {
        if img.width != depth.width || img.height != depth.height {
            return Err(Error::ShapeMismatch("color dimensions do not match depth"));
        }
    }
    let mut points = Vec::new();
    let mut point_colors = colors.map(|_| Vec::new());
    let mut pixel_index = Vec::new();
    for y in 0..depth.height {
        for x in 0..depth.width {
            let d = depth.get(x, y);
            if !(d.is_finite() && d > 0.0) {
                continue;
            }
            let p = unproject(cam, Pixel2::center_of(x, y), f64::from(d))?;
            points.push(p);
            pixel_index.push(y * depth.width + x);
            if let (Some(out), Some(img)) = (point_colors.as_mut(), colors) {
                out.push(img.get(x, y));
            }
        }
    }
    if points.is_empty() {
        return Err(Error::EmptyInput("depth map has no valid pixels"));
    }
    let mut cloud = PointCloud::new(points);
    cloud.colors = point_colors;
    Ok(Pointmap {
        cloud,
        pixel_index,
        width: depth.width,
        height: depth.height,
    })
}

/// Selects the points of `pointmap` whose source pixel is set in `mask`.
///
/// Errors with `EmptyInstance` when the mask selects nothing (callers may
/// skip such instances).
pub fn segment_instance(pointmap: &Pointmap, mask: &InstanceMask) -> Result<PointCloud, Error> {
    if mask.width != pointmap.width || mask.height != pointmap.height {
        return Err(Error::ShapeMismatch("mask dimensions do not match pointmap"));
    }
    let indices: Vec<usize> = pointmap
        .pixel_index
        .iter()
        .enumerate()
        .filter(|(_, &px)| mask.data[px as usize])
        .map(|(i, _)| i)
        .collect();
    if indices.is_empty() {
        return Err(Error::EmptyInstance);
    }
    Ok(pointmap.cloud.select(&indices))
}

/// Result of statistical outlier removal.
#[derive(Clone, Debug)]
pub struct OutlierResult {
    pub cloud: PointCloud,
    /// Original indices of the dropped points.
    pub removed: Vec<usize>,
    /// True when the cloud was too small to filter and passed through
    /// unchanged (callers should warn).
    pub passthrough: bool,
}

/// Statistical outlier removal: drops points whose mean distance to their
/// `k` nearest neighbors exceeds the global mean by more than
/// `sigma_mult` standard deviations.
///
/// Clouds with at most `k` points pass through unchanged with the
/// `passthrough` flag set.
pub fn remove_outliers(cloud: &PointCloud, k: usize, sigma_mult: f64) -> Result<OutlierResult, Error> {
    if cloud.is_empty() {
        return Err(Error::EmptyInput("remove_outliers cloud"));
    }
    if k == 0 {
        return Err(Error::InvalidInput(String::from(
            "remove_outliers requires k >= 1",
        )));
    }
    if cloud.len() <= k {
        return Ok(OutlierResult {
            cloud: cloud.clone(),
            removed: Vec::new(),
            passthrough: true,
        });
    }
    let pts: Vec<[f64; 3]> = cloud.points.iter().map(|p| p.to_array()).collect();
    let index = NnIndex::build(pts.clone())?;
    // Mean distance to the k nearest neighbors, self excluded: the first
    // entry of a (k+1)-NN query over the point's own index is always at
    // distance zero (the point itself or an exact duplicate).
    let mean_dists: Vec<f64> = pts
        .iter()
        .map(|p| {
            let neighbors = index.knn(p, k + 1);
            let sum: f64 = neighbors[1..].iter().map(|(_, d)| d.sqrt()).sum();
            sum / (neighbors.len() - 1) as f64
        })
        .collect();
    let n = mean_dists.len() as f64;
    let mean = mean_dists.iter().sum::<f64>() / n;
    let var = mean_dists.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n;
    let threshold = mean + sigma_mult * var.sqrt();
    let mut keep = Vec::with_capacity(cloud.len());
    let mut removed = Vec::new();
    for (i, d) in mean_dists.iter().enumerate() {
        if *d > threshold {
            removed.push(i);
        } else {
            keep.push(i);
        }
    }
    if keep.is_empty() {
        // Degenerate parameterization (e.g. negative sigma_mult on uniform
        // data); refuse to delete the whole cloud.
        return Err(Error::InvalidInput(String::from(
            "outlier threshold removed every point",
        )));
    }
    Ok(OutlierResult {
        cloud: cloud.select(&keep),
        removed,
        passthrough: false,
    })
}

/// Default neighborhood size for outlier removal.
pub const OUTLIER_K: usize = 16;
/// Default standard-deviation multiplier for outlier removal.
pub const OUTLIER_SIGMA_MULT: f64 = 2.0;

/// Result of normal estimation.
#[derive(Clone, Debug)]
pub struct NormalsResult {
    /// Input cloud with `normals` populated; degenerate neighborhoods get a
    /// zero normal.
    pub cloud: PointCloud,
    /// Indices whose neighborhood was degenerate (normal invalid).
    pub invalid: Vec<usize>,
}

/// Per-point normals from the smallest eigenvector of the k-nearest-neighbor
/// covariance, oriented toward `viewpoint` (the camera origin).
///
/// Degenerate neighborhoods (coincident or collinear) yield a zero normal
/// and are reported in `invalid`.
pub fn estimate_normals(
    cloud: &PointCloud,
    k: usize,
    viewpoint: Point3,
) -> Result<NormalsResult, Error> {
    if cloud.is_empty() {
        return Err(Error::EmptyInput("estimate_normals cloud"));
    }
    if k < 2 || cloud.len() <= k {
        return Err(Error::InvalidInput(String::from(
            "estimate_normals requires 2 <= k < cloud size",
        )));
    }
    let pts: Vec<[f64; 3]> = cloud.points.iter().map(|p| p.to_array()).collect();
    let index = NnIndex::build(pts.clone())?;
    let mut normals = Vec::with_capacity(cloud.len());
    let mut invalid = Vec::new();
    for (i, p) in cloud.points.iter().enumerate() {
        // Neighborhood includes the point itself.
        let neighbors = index.knn(&p.to_array(), k + 1);
        let m = neighbors.len() as f64;
        let mut mean = Vec3::ZERO;
        for (j, _) in &neighbors {
            mean += cloud.points[*j];
        }
        mean = mean * (1.0 / m);
        let mut cov = Mat3::ZERO;
        for (j, _) in &neighbors {
            let d = cloud.points[*j] - mean;
            cov = cov + Mat3::outer(d, d);
        }
        cov = cov * (1.0 / m);
        let (eigvals, eigvecs) = sym_eigen(&cov);
        // Rank check: a plane needs two spread directions. Coincident or
        // collinear neighborhoods leave the normal undefined.
        let scale = eigvals[2].abs().max(1e-300);
        let degenerate = eigvals[2] <= 0.0 || eigvals[1] / scale <= 1e-9;
        if degenerate {
            normals.push(Vec3::ZERO);
            invalid.push(i);
            continue;
        }
        let mut n = eigvecs[0];
        if n.dot(viewpoint - *p) < 0.0 {
            n = -n;
        }
        normals.push(n);
    }
    let mut out = cloud.clone();
    out.normals = Some(normals);
    Ok(NormalsResult { cloud: out, invalid })
}

/// Default neighborhood size for normal estimation.
pub const NORMALS_K: usize = 16;

/// An infinite plane `n · x = d` with unit normal, plus the indices of the
/// cloud points it explains.
#[derive(Clone, Debug)]
pub struct Plane {
    pub normal: Vec3,
    pub offset: f64,
    /// Indices into the cloud `fit_planes` was called with.
    pub inliers: Vec<usize>,
}

impl Plane {
    /// Signed distance from the plane.
    #[inline]
    pub fn signed_distance(&self, p: Point3) -> f64 {
        self.normal.dot(p) - self.offset
    }

    /// Orthogonal projection onto the plane.
    #[inline]
    pub fn project(&self, p: Point3) -> Point3 {
        p - self.normal * self.signed_distance(p)
    }
}

/// Default inlier tolerance for plane extraction, in scene units.
pub const PLANE_INLIER_TOL: f64 = 0.01;
/// Default minimum inlier fraction of the remaining cloud.
pub const PLANE_MIN_INLIER_FRACTION: f64 = 0.05;
/// Default cap on the number of extracted planes.
pub const MAX_PLANES: usize = 6;
/// RANSAC hypothesis count per extracted plane.
const PLANE_RANSAC_ITERS: usize = 512;

/// Canonical sign: positive offset; for offsets at zero, the first nonzero
/// normal component is positive.
fn canonicalize(normal: Vec3, offset: f64) -> (Vec3, f64) {
    let flip = if offset != 0.0 {
        offset < 0.0
    } else {
        let lead = [normal.x, normal.y, normal.z]
            .into_iter()
            .find(|c| *c != 0.0)
            .unwrap_or(1.0);
        lead < 0.0
    };
    if flip {
        (-normal, -offset)
    } else {
        (normal, offset)
    }
}

/// Least-squares plane through the selected points: centroid plus smallest
/// covariance eigenvector. `None` when the selection is degenerate.
fn lsq_plane(points: &[Point3], selection: &[usize]) -> Option<(Vec3, f64)> {
    if selection.len() < 3 {
        return None;
    }
    let m = selection.len() as f64;
    let mut mean = Vec3::ZERO;
    for &i in selection {
        mean += points[i];
    }
    mean = mean * (1.0 / m);
    let mut cov = Mat3::ZERO;
    for &i in selection {
        let d = points[i] - mean;
        cov = cov + Mat3::outer(d, d);
    }
    cov = cov * (1.0 / m);
    let (eigvals, eigvecs) = sym_eigen(&cov);
    let scale = eigvals[2].abs().max(1e-300);
    if eigvals[2] <= 0.0 || eigvals[1] / scale <= 1e-12 {
        return None;
    }
    let n = eigvecs[0];
    Some(canonicalize(n, n.dot(mean)))
}

fn collect_inliers(points: &[Point3], active: &[usize], n: Vec3, d: f64, tol: f64) -> Vec<usize> {
    active
        .iter()
        .copied()
        .filter(|&i| (n.dot(points[i]) - d).abs() <= tol)
        .collect()
}

/// Sequential RANSAC multi-plane extraction.
///
/// Repeatedly finds the plane with the most inliers among the not-yet-claimed
/// points (hypotheses from random point triples, then a least-squares refit
/// and inlier reselection), removes its inliers, and continues until
/// `max_planes` planes are found or no candidate reaches `min_inliers`.
/// Deterministic for a fixed seed. Inlier indices refer to the input cloud.
pub fn fit_planes(
    cloud: &PointCloud,
    max_planes: usize,
    inlier_tol: f64,
    min_inliers: usize,
    seed: u64,
) -> Result<Vec<Plane>, Error> {
    if cloud.is_empty() {
        return Err(Error::EmptyInput("fit_planes cloud"));
    }
    if !(inlier_tol.is_finite() && inlier_tol > 0.0) {
        return Err(Error::InvalidInput(String::from(
            "plane inlier tolerance must be finite and positive",
        )));
    }
    let min_inliers = min_inliers.max(3);
    let points = &cloud.points;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut active: Vec<usize> = (0..points.len()).collect();
    let mut planes = Vec::new();

    while planes.len() < max_planes && active.len() >= min_inliers {
        // Hypothesis search over random triples of active points.
        let mut best: Option<(usize, Vec3, f64)> = None;
        for _ in 0..PLANE_RANSAC_ITERS {
            let a = active[rng.random_range(0..active.len())];
            let b = active[rng.random_range(0..active.len())];
            let c = active[rng.random_range(0..active.len())];
            if a == b || b == c || a == c {
                continue;
            }
            let n = match ((points[b] - points[a]).cross(points[c] - points[a])).normalized() {
                Some(n) => n,
                None => continue,
            };
            let d = n.dot(points[a]);
            let count = active
                .iter()
                .filter(|&&i| (n.dot(points[i]) - d).abs() <= inlier_tol)
                .count();
            if best.as_ref().map_or(true, |(bc, _, _)| count > *bc) {
                best = Some((count, n, d));
            }
        }
        let (count, n0, d0) = match best {
            Some(b) => b,
            None => break,
        };
        if count < min_inliers {
            break;
        }

        // Refine: least-squares refit on the hypothesis inliers, then
        // reselect inliers against the refined plane, then refit once more.
        let mut inliers = collect_inliers(points, &active, n0, d0, inlier_tol);
        let (mut n, mut d) = (canonicalize(n0, d0).0, canonicalize(n0, d0).1);
        for _ in 0..2 {
            match lsq_plane(points, &inliers) {
                Some((rn, rd)) => {
                    n = rn;
                    d = rd;
                    inliers = collect_inliers(points, &active, n, d, inlier_tol);
                }
                None => break,
            }
        }
        if inliers.len() < min_inliers {
            break;
        }

        let claimed: alloc::collections::BTreeSet<usize> = inliers.iter().copied().collect();
        active.retain(|i| !claimed.contains(i));
        planes.push(Plane {
            normal: n,
            offset: d,
            inliers,
        });
    }
    Ok(planes)
}

/// Default grid resolution (vertices per side) for plane meshing.
pub const PLANE_GRID_RES: usize = 64;

/// Builds a regular grid mesh over a plane's inlier footprint.
///
/// Inliers are first projected exactly onto the plane (planar smoothing);
/// the mesh spans their 2D bounding rectangle in plane coordinates with
/// `res` vertices per side and `2 * (res - 1)^2` triangles. Vertex colors
/// copy the nearest projected inlier's color when the cloud has colors.
/// Errors with `DegeneratePlane` when the inliers are collinear (or fewer
/// than 3).
pub fn plane_to_mesh(plane: &Plane, inliers: &PointCloud, res: usize) -> Result<TriangleMesh, Error> {
    if inliers.len() < 3 {
        return Err(Error::DegeneratePlane);
    }
    if res < 2 {
        return Err(Error::InvalidInput(String::from(
            "plane grid resolution must be at least 2",
        )));
    }
    let n = plane
        .normal
        .normalized()
        .ok_or(Error::DegeneratePlane)?;

    // Deterministic tangent frame: seed with the world axis least aligned
    // with the normal (ties resolve to the lowest axis index).
    let dots = [n.x.abs(), n.y.abs(), n.z.abs()];
    let mut seed_axis = 0;
    for k in 1..3 {
        if dots[k] < dots[seed_axis] {
            seed_axis = k;
        }
    }
    let seed = [Vec3::X, Vec3::Y, Vec3::Z][seed_axis];
    let t1 = seed
        .cross(n)
        .normalized()
        .ok_or(Error::DegeneratePlane)?;
    let t2 = n.cross(t1);
    let origin = n * plane.offset;

    // Plane-coordinate footprint of the projected inliers.
    let coords: Vec<[f64; 2]> = inliers
        .points
        .iter()
        .map(|&p| {
            let q = plane.project(p) - origin;
            [q.dot(t1), q.dot(t2)]
        })
        .collect();
    // Collinearity check via the 2D scatter: a valid footprint spreads in
    // two directions.
    let m = coords.len() as f64;
    let mean = [
        coords.iter().map(|c| c[0]).sum::<f64>() / m,
        coords.iter().map(|c| c[1]).sum::<f64>() / m,
    ];
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for c in &coords {
        let dx = c[0] - mean[0];
        let dy = c[1] - mean[1];
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    // Eigenvalues of the 2x2 scatter; collinear points have lambda_min = 0.
    let tr = sxx + syy;
    let det = sxx * syy - sxy * sxy;
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    let lambda_min = tr / 2.0 - disc;
    let lambda_max = tr / 2.0 + disc;
    if lambda_max <= 0.0 || lambda_min / lambda_max <= 1e-12 {
        return Err(Error::DegeneratePlane);
    }

    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for c in &coords {
        for k in 0..2 {
            lo[k] = lo[k].min(c[k]);
            hi[k] = hi[k].max(c[k]);
        }
    }

    let color_source = match inliers.colors.as_ref() {
        Some(colors) => Some((NnIndex::build(coords.clone())?, colors)),
        None => None,
    };

    let mut vertices = Vec::with_capacity(res * res);
    let mut vertex_colors = inliers.colors.as_ref().map(|_| Vec::with_capacity(res * res));
    let step = 1.0 / (res - 1) as f64;
    for gy in 0..res {
        for gx in 0..res {
            let fx = gx as f64 * step;
            let fy = gy as f64 * step;
            let u = lo[0] + fx * (hi[0] - lo[0]);
            let v = lo[1] + fy * (hi[1] - lo[1]);
            vertices.push(origin + t1 * u + t2 * v);
            if let Some((index, colors)) = &color_source {
                let (j, _) = index.nearest(&[u, v]);
                vertex_colors.as_mut().unwrap().push(colors[j]);
            }
        }
    }

    let mut triangles = Vec::with_capacity(2 * (res - 1) * (res - 1));
    let mut uvs = Vec::with_capacity(2 * (res - 1) * (res - 1));
    let uv_at = |gx: usize, gy: usize| Vec2::new(gx as f64 * step, gy as f64 * step);
    for gy in 0..res - 1 {
        for gx in 0..res - 1 {
            let v00 = (gy * res + gx) as u32;
            let v10 = v00 + 1;
            let v01 = v00 + res as u32;
            let v11 = v01 + 1;
            triangles.push([v00, v10, v11]);
            uvs.push([uv_at(gx, gy), uv_at(gx + 1, gy), uv_at(gx + 1, gy + 1)]);
            triangles.push([v00, v11, v01]);
            uvs.push([uv_at(gx, gy), uv_at(gx + 1, gy + 1), uv_at(gx, gy + 1)]);
        }
    }

    let mut mesh = TriangleMesh::new(vertices, triangles);
    mesh.vertex_colors = vertex_colors;
    mesh.uvs = Some(uvs);
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{look_at, project, RigidTransform};
    use alloc::vec;
    use approx::assert_relative_eq;

    fn identity_camera(width: u32, height: u32) -> PinholeCamera {
        PinholeCamera::new(
            100.0,
            100.0,
            f64::from(width) / 2.0,
            f64::from(height) / 2.0,
            width,
            height,
            RigidTransform::IDENTITY,
        )
        .unwrap()
    }

    #[test]
    fn constant_depth_yields_plane_at_z1() {
        let cam = identity_camera(8, 6);
        let depth = DepthMap {
            width: 8,
            height: 6,
            data: vec![1.0; 48],
        };
        let pm = depth_to_pointmap(&cam, &depth, None).unwrap();
        assert_eq!(pm.cloud.len(), 48);
        for p in &pm.cloud.points {
            assert_relative_eq!(p.z, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn point_count_equals_valid_pixels_and_roundtrip_reprojects() {
        let cam = identity_camera(16, 12);
        let mut depth = DepthMap::new(16, 12);
        let mut valid = 0;
        for y in 0..12 {
            for x in 0..16 {
                // Mix of valid, zero, negative, and non-finite pixels.
                let v = match (x + y) % 4 {
                    0 => 0.5 + (x as f32) * 0.1,
                    1 => 0.0,
                    2 => -1.0,
                    _ => {
                        if y % 3 == 0 {
                            f32::NAN
                        } else {
                            2.0
                        }
                    }
                };
                if v.is_finite() && v > 0.0 {
                    valid += 1;
                }
                depth.set(x, y, v);
            }
        }
        let pm = depth_to_pointmap(&cam, &depth, None).unwrap();
        assert_eq!(pm.cloud.len(), valid);
        // Re-projecting each point lands on its source pixel center.
        for (p, &pix) in pm.cloud.points.iter().zip(&pm.pixel_index) {
            let px = project(&cam, *p).unwrap();
            let x = (pix as usize) % 16;
            let y = (pix as usize) / 16;
            assert!((px.u - (x as f64 + 0.5)).abs() < 1e-5);
            assert!((px.v - (y as f64 + 0.5)).abs() < 1e-5);
        }
    }

    #[test]
    fn depth_errors() {
        let cam = identity_camera(4, 4);
        let empty = DepthMap::new(4, 4);
        assert!(matches!(
            depth_to_pointmap(&cam, &empty, None),
            Err(Error::EmptyInput(_))
        ));
        let wrong = DepthMap::new(5, 4);
        assert!(matches!(
            depth_to_pointmap(&cam, &wrong, None),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn colors_are_copied_per_valid_pixel() {
        let cam = identity_camera(4, 2);
        let mut depth = DepthMap::new(4, 2);
        depth.set(1, 0, 1.0);
        depth.set(2, 1, 2.0);
        let mut img = ImageBuf::new(4, 2);
        img.set(1, 0, [0.25, 0.5, 0.75]);
        img.set(2, 1, [0.1, 0.2, 0.3]);
        let pm = depth_to_pointmap(&cam, &depth, Some(&img)).unwrap();
        let colors = pm.cloud.colors.as_ref().unwrap();
        assert_eq!(colors.len(), 2);
        assert_eq!(colors[0], [0.25, 0.5, 0.75]);
        assert_eq!(colors[1], [0.1, 0.2, 0.3]);
    }

    fn full_pointmap(width: u32, height: u32) -> Pointmap {
        let cam = identity_camera(width, height);
        let depth = DepthMap {
            width,
            height,
            data: vec![1.0; (width * height) as usize],
        };
        depth_to_pointmap(&cam, &depth, None).unwrap()
    }

    fn mask_from(pm: &Pointmap, f: impl Fn(u32, u32) -> bool) -> InstanceMask {
        let data = (0..pm.width * pm.height)
            .map(|i| f(i % pm.width, i / pm.width))
            .collect();
        InstanceMask {
            width: pm.width,
            height: pm.height,
            data,
            label: String::from("test"),
            id: 1,
        }
    }

    #[test]
    fn segmentation_masks_select_and_partition() {
        let pm = full_pointmap(8, 8);
        let all = mask_from(&pm, |_, _| true);
        assert_eq!(segment_instance(&pm, &all).unwrap().len(), 64);

        let none = mask_from(&pm, |_, _| false);
        assert!(matches!(
            segment_instance(&pm, &none),
            Err(Error::EmptyInstance)
        ));

        let checker = mask_from(&pm, |x, y| (x + y) % 2 == 0);
        let inv_checker = mask_from(&pm, |x, y| (x + y) % 2 == 1);
        let a = segment_instance(&pm, &checker).unwrap();
        let b = segment_instance(&pm, &inv_checker).unwrap();
        assert_eq!(a.len(), 32);
        assert_eq!(a.len() + b.len(), pm.cloud.len());
        // Disjoint masks covering all pixels partition the cloud exactly.
        let mut merged: Vec<_> = a.points.iter().chain(b.points.iter()).copied().collect();
        let mut original = pm.cloud.points.clone();
        let key = |p: &Vec3| (p.x.to_bits(), p.y.to_bits(), p.z.to_bits());
        merged.sort_by_key(key);
        original.sort_by_key(key);
        assert_eq!(merged, original);
    }

    fn grid_cloud(n_side: usize, spacing: f64) -> PointCloud {
        let mut pts = Vec::new();
        for x in 0..n_side {
            for y in 0..n_side {
                pts.push(Vec3::new(x as f64 * spacing, y as f64 * spacing, 0.0));
            }
        }
        PointCloud::new(pts)
    }

    #[test]
    fn outlier_spike_is_removed_grid_intact() {
        let mut cloud = grid_cloud(10, 0.1);
        cloud.points.push(Vec3::new(50.0, 50.0, 50.0));
        let result = remove_outliers(&cloud, 16, 2.0).unwrap();
        assert!(!result.passthrough);
        assert_eq!(result.removed, vec![100]);
        assert_eq!(result.cloud.len(), 100);
        // Output is a subset of the input.
        for p in &result.cloud.points {
            assert!(cloud.points.contains(p));
        }
    }

    #[test]
    fn clean_cloud_unchanged_at_loose_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cloud = PointCloud::new(
            (0..200)
                .map(|_| {
                    Vec3::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    )
                })
                .collect(),
        );
        let result = remove_outliers(&cloud, 16, 10.0).unwrap();
        assert_eq!(result.cloud.len(), cloud.len());
        assert!(result.removed.is_empty());
    }

    #[test]
    fn multiple_spikes_reported_in_order_and_survivors_keep_order() {
        let mut cloud = grid_cloud(10, 0.1);
        cloud.points.insert(0, Vec3::new(-40.0, 0.0, 0.0));
        cloud.points.push(Vec3::new(30.0, 0.0, 0.0));
        let result = remove_outliers(&cloud, 16, 2.0).unwrap();
        assert_eq!(result.removed, vec![0, 101]);
        assert_eq!(result.cloud.points, grid_cloud(10, 0.1).points);
    }

    #[test]
    fn small_cloud_passes_through() {
        let cloud = grid_cloud(3, 1.0); // 9 points <= k = 16
        let result = remove_outliers(&cloud, 16, 2.0).unwrap();
        assert!(result.passthrough);
        assert_eq!(result.cloud.points, cloud.points);
    }

    #[test]
    fn plane_normals_are_unit_oriented_and_accurate() {
        let cloud = grid_cloud(12, 0.1); // z = 0 plane
        let viewpoint = Vec3::new(0.3, 0.2, 5.0);
        let result = estimate_normals(&cloud, 8, viewpoint).unwrap();
        assert!(result.invalid.is_empty());
        let normals = result.cloud.normals.as_ref().unwrap();
        for (p, n) in result.cloud.points.iter().zip(normals) {
            assert_relative_eq!(n.norm(), 1.0, epsilon = 1e-6);
            // Within 1 degree of +-Z.
            assert!(n.z.abs() > (1.0f64).to_radians().cos());
            // Oriented toward the viewpoint.
            assert!(n.dot(viewpoint - *p) >= 0.0);
        }
    }

    #[test]
    fn degenerate_neighborhood_flags_invalid_normal() {
        let mut pts = vec![Vec3::ZERO; 10];
        // A line: collinear neighborhoods are degenerate too.
        for i in 0..10 {
            pts.push(Vec3::new(i as f64, 0.0, 0.0) + Vec3::new(20.0, 0.0, 0.0));
        }
        let cloud = PointCloud::new(pts);
        let result = estimate_normals(&cloud, 4, Vec3::new(0.0, 0.0, 10.0)).unwrap();
        assert_eq!(result.invalid.len(), cloud.len());
        let normals = result.cloud.normals.as_ref().unwrap();
        assert!(normals.iter().all(|n| *n == Vec3::ZERO));
    }

    fn noisy_plane_cloud(
        rng: &mut ChaCha8Rng,
        n: usize,
        normal: Vec3,
        offset: f64,
        sigma: f64,
    ) -> Vec<Vec3> {
        let n_unit = normal.normalized().unwrap();
        let seed = if n_unit.x.abs() < 0.9 { Vec3::X } else { Vec3::Y };
        let t1 = seed.cross(n_unit).normalized().unwrap();
        let t2 = n_unit.cross(t1);
        (0..n)
            .map(|_| {
                let u = rng.random_range(-1.0..1.0);
                let v = rng.random_range(-1.0..1.0);
                // Box-Muller for approximately Gaussian perpendicular noise.
                let r: f64 = rng.random_range(1e-12..1.0);
                let theta: f64 = rng.random_range(0.0..core::f64::consts::TAU);
                let g = (-2.0 * r.ln()).sqrt() * theta.cos();
                n_unit * (offset + g * sigma) + t1 * u + t2 * v
            })
            .collect()
    }

    #[test]
    fn single_noisy_plane_recovered_within_tolerance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let truth_n = Vec3::new(0.3, 0.8, 0.52).normalized().unwrap();
        let truth_d = 0.7;
        let cloud = PointCloud::new(noisy_plane_cloud(&mut rng, 800, truth_n, truth_d, 0.005));
        let planes = fit_planes(&cloud, 6, 0.01, 40, 7).unwrap();
        assert_eq!(planes.len(), 1);
        let p = &planes[0];
        let cos = p.normal.dot(truth_n).abs();
        assert!(cos > (1.0f64).to_radians().cos(), "normal off: cos = {cos}");
        assert!((p.offset.abs() - truth_d).abs() < 0.01);
        // Reported inliers actually satisfy the tolerance.
        for &i in &p.inliers {
            assert!(p.signed_distance(cloud.points[i]).abs() <= 0.01 + 1e-12);
        }
    }

    #[test]
    fn two_orthogonal_planes_recovered_disjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut pts = noisy_plane_cloud(&mut rng, 500, Vec3::Z, 0.0, 0.002);
        pts.extend(noisy_plane_cloud(&mut rng, 500, Vec3::X, 1.0, 0.002));
        let cloud = PointCloud::new(pts);
        let planes = fit_planes(&cloud, 6, 0.01, 100, 3).unwrap();
        assert_eq!(planes.len(), 2);
        let mut seen = alloc::collections::BTreeSet::new();
        for plane in &planes {
            for &i in &plane.inliers {
                assert!(seen.insert(i), "inlier sets overlap at {i}");
            }
        }
        // One normal near Z, one near X (order by inlier count is not
        // guaranteed between equal-size planes, so check as a set).
        let mut matched_z = false;
        let mut matched_x = false;
        for plane in &planes {
            if plane.normal.dot(Vec3::Z).abs() > 0.999 {
                matched_z = true;
            }
            if plane.normal.dot(Vec3::X).abs() > 0.999 {
                matched_x = true;
            }
        }
        assert!(matched_z && matched_x);
    }

    #[test]
    fn pure_noise_with_high_min_inliers_finds_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let cloud = PointCloud::new(
            (0..500)
                .map(|_| {
                    Vec3::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    )
                })
                .collect(),
        );
        let planes = fit_planes(&cloud, 6, 0.01, 300, 5).unwrap();
        assert!(planes.is_empty());
    }

    #[test]
    fn fit_planes_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let cloud = PointCloud::new(noisy_plane_cloud(&mut rng, 400, Vec3::Y, 0.5, 0.004));
        let a = fit_planes(&cloud, 6, 0.01, 20, 99).unwrap();
        let b = fit_planes(&cloud, 6, 0.01, 20, 99).unwrap();
        assert_eq!(a.len(), b.len());
        for (pa, pb) in a.iter().zip(&b) {
            assert_eq!(pa.normal, pb.normal);
            assert_eq!(pa.offset, pb.offset);
            assert_eq!(pa.inliers, pb.inliers);
        }
    }

    #[test]
    fn plane_mesh_spans_square_and_lies_on_plane() {
        let plane = Plane {
            normal: Vec3::Z,
            offset: 0.25,
            inliers: vec![],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let inliers = PointCloud::new(
            (0..100)
                .map(|_| {
                    Vec3::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        0.25 + rng.random_range(-0.004..0.004),
                    )
                })
                .collect(),
        );
        let mesh = plane_to_mesh(&plane, &inliers, PLANE_GRID_RES).unwrap();
        assert_eq!(mesh.vertices.len(), 64 * 64);
        assert_eq!(mesh.triangles.len(), 2 * 63 * 63);
        for v in &mesh.vertices {
            assert!((plane.normal.dot(*v) - plane.offset).abs() < 1e-9);
        }
        // The mesh spans the inliers' projected bounding rectangle.
        let mesh_aabb = mesh.aabb().unwrap();
        assert!(mesh_aabb.max.x - mesh_aabb.min.x > 1.8);
        assert!(mesh_aabb.max.y - mesh_aabb.min.y > 1.8);
    }

    #[test]
    fn plane_mesh_colors_match_nearest_inlier() {
        let plane = Plane {
            normal: Vec3::Z,
            offset: 0.0,
            inliers: vec![],
        };
        // Four corner points with distinct colors.
        let mut inliers = PointCloud::new(vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(1.0, 1.0, 0.0),
        ]);
        let palette = [
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [1.0, 1.0, 0.0],
        ];
        inliers.colors = Some(palette.to_vec());
        let mesh = plane_to_mesh(&plane, &inliers, 4).unwrap();
        let colors = mesh.vertex_colors.as_ref().unwrap();
        for (v, c) in mesh.vertices.iter().zip(colors) {
            // Expected: color of the nearest of the four inliers.
            let mut best = (f64::INFINITY, 0);
            for (i, p) in inliers.points.iter().enumerate() {
                let d = (*v - *p).norm_sq();
                if d < best.0 {
                    best = (d, i);
                }
            }
            assert_eq!(*c, palette[best.1]);
        }
    }

    #[test]
    fn collinear_inliers_are_degenerate() {
        let plane = Plane {
            normal: Vec3::Z,
            offset: 0.0,
            inliers: vec![],
        };
        let line = PointCloud::new(
            (0..10)
                .map(|i| Vec3::new(i as f64 * 0.37, i as f64 * 0.11, 0.0))
                .collect(),
        );
        assert!(matches!(
            plane_to_mesh(&plane, &line, 8),
            Err(Error::DegeneratePlane)
        ));
        let two = PointCloud::new(vec![Vec3::ZERO, Vec3::X]);
        assert!(matches!(
            plane_to_mesh(&plane, &two, 8),
            Err(Error::DegeneratePlane)
        ));
    }

    #[test]
    fn normals_orient_toward_offset_camera() {
        // Slanted plane, camera well off-axis: all normals point at it.
        let mut pts = Vec::new();
        for x in 0..15 {
            for y in 0..15 {
                let fx = x as f64 * 0.1;
                let fy = y as f64 * 0.1;
                pts.push(Vec3::new(fx, fy, 0.3 * fx - 0.2 * fy));
            }
        }
        let cloud = PointCloud::new(pts);
        let cam_pos = look_at(Vec3::new(-2.0, 3.0, 4.0), Vec3::ZERO, Vec3::Y).translation;
        let result = estimate_normals(&cloud, NORMALS_K, cam_pos).unwrap();
        let normals = result.cloud.normals.as_ref().unwrap();
        for (p, n) in result.cloud.points.iter().zip(normals) {
            assert!(n.dot(cam_pos - *p) >= 0.0);
        }
    }
}

//! Software rasterization into G-buffers, depth-edge detection, the
//! 7-channel geometric conditioning tensor, and the default 10-view camera
//! rig.
//!
//! The rasterizer is perspective-correct and z-buffered. Determinism does
//! not depend on triangle submission order: at equal depth the lower
//! triangle id wins, giving every pixel a total order over candidates.

use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::Error;
use crate::geom::{look_at, Aabb, PinholeCamera, Point3, TriangleMesh, Vec3};
use crate::image::BinaryMask;

/// Triangle id marking an uncovered G-buffer pixel.
pub const EMPTY_ID: u32 = u32::MAX;

/// Camera-space near plane for clipping (scene units).
const NEAR_CLIP: f64 = 1e-6;

/// Per-view geometry buffers: camera-depth, world normal, world position,
/// triangle id, and barycentric coordinates of the source triangle.
///
/// `tri_id == EMPTY_ID` marks uncovered pixels; all other fields are zero
/// there. Where covered, depth is positive and the normal is unit length.
#[derive(Clone, Debug)]
pub struct GBuffer {
    pub width: u32,
    pub height: u32,
    pub depth: Vec<f32>,
    pub normal: Vec<[f32; 3]>,
    pub position: Vec<[f32; 3]>,
    pub tri_id: Vec<u32>,
    pub bary: Vec<[f32; 3]>,
}

impl GBuffer {
    pub fn new(width: u32, height: u32) -> Self {
        let n = (width as usize) * (height as usize);
        Self {
            width,
            height,
            depth: alloc::vec![0.0; n],
            normal: alloc::vec![[0.0; 3]; n],
            position: alloc::vec![[0.0; 3]; n],
            tri_id: alloc::vec![EMPTY_ID; n],
            bary: alloc::vec![[0.0; 3]; n],
        }
    }

    #[inline]
    pub fn idx(&self, x: u32, y: u32) -> usize {
        (y * self.width + x) as usize
    }

    #[inline]
    pub fn covered(&self, x: u32, y: u32) -> bool {
        self.tri_id[self.idx(x, y)] != EMPTY_ID
    }

    /// Number of covered pixels.
    pub fn coverage(&self) -> usize {
        self.tri_id.iter().filter(|&&id| id != EMPTY_ID).count()
    }
}

/// Rasterization options.
#[derive(Clone, Copy, Debug, Default)]
pub struct RasterOptions {
    /// Interpolate area-weighted vertex normals instead of flat geometric
    /// face normals.
    pub smooth_normals: bool,
}

/// Rasterizes `mesh` into a G-buffer through `cam` with flat normals.
pub fn rasterize(mesh: &TriangleMesh, cam: &PinholeCamera) -> Result<GBuffer, Error> {
    rasterize_opts(mesh, cam, &RasterOptions::default())
}

/// A polygon vertex mid-clip: camera-space position plus barycentric
/// coordinates in the original triangle.
#[derive(Clone, Copy)]
struct ClipVertex {
    p: Vec3,
    bary: Vec3,
}

/// Clips the triangle against `z >= NEAR_CLIP` (Sutherland-Hodgman),
/// interpolating barycentrics; returns up to 4 vertices.
fn clip_near(tri: &[ClipVertex; 3], out: &mut Vec<ClipVertex>) {
    out.clear();
    for i in 0..3 {
        let cur = tri[i];
        let next = tri[(i + 1) % 3];
        let cur_in = cur.p.z >= NEAR_CLIP;
        let next_in = next.p.z >= NEAR_CLIP;
        if cur_in {
            out.push(cur);
        }
        if cur_in != next_in {
            let t = (NEAR_CLIP - cur.p.z) / (next.p.z - cur.p.z);
            out.push(ClipVertex {
                p: cur.p + (next.p - cur.p) * t,
                bary: cur.bary + (next.bary - cur.bary) * t,
            });
        }
    }
}

/// Rasterizes `mesh` into a G-buffer through `cam`.
///
/// Near-plane clipped, perspective-correct, z-buffered with a lower-id
/// tie-break; both winding orders render (no backface culling) and normals
/// are oriented toward the camera.
pub fn rasterize_opts(
    mesh: &TriangleMesh,
    cam: &PinholeCamera,
    opts: &RasterOptions,
) -> Result<GBuffer, Error> {
    if mesh.vertices.is_empty() || mesh.triangles.is_empty() {
        return Err(Error::EmptyInput("rasterize mesh"));
    }
    let mut gbuf = GBuffer::new(cam.width, cam.height);
    // Working z-buffer in f64 so the id tie-break sees exact depths.
    let mut zbuf = alloc::vec![f64::INFINITY; gbuf.depth.len()];

    let vertex_normals = opts.smooth_normals.then(|| {
        let mut acc = alloc::vec![Vec3::ZERO; mesh.vertices.len()];
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let [a, b, c] = mesh.corners(t);
            // Unnormalized cross product = area weighting.
            let n = (b - a).cross(c - a);
            for &v in tri {
                acc[v as usize] += n;
            }
        }
        acc.into_iter()
            .map(|n| n.normalized().unwrap_or(Vec3::ZERO))
            .collect::<Vec<_>>()
    });

    let cfw = cam.camera_from_world();
    let cam_pos = cam.position();
    let width_f = f64::from(cam.width);
    let height_f = f64::from(cam.height);

    let mut clipped: Vec<ClipVertex> = Vec::with_capacity(4);
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let corners = mesh.corners(t);
        let face_n = {
            let n = mesh.face_normal(t);
            // A plane's camera side is constant over the plane, so one
            // corner decides the flip for every pixel of the triangle.
            if n.dot(cam_pos - corners[0]) < 0.0 {
                -n
            } else {
                n
            }
        };
        let cam_space = [
            cfw.apply(corners[0]),
            cfw.apply(corners[1]),
            cfw.apply(corners[2]),
        ];
        if cam_space.iter().all(|p| p.z < NEAR_CLIP) {
            continue;
        }
        clip_near(
            &[
                ClipVertex {
                    p: cam_space[0],
                    bary: Vec3::X,
                },
                ClipVertex {
                    p: cam_space[1],
                    bary: Vec3::Y,
                },
                ClipVertex {
                    p: cam_space[2],
                    bary: Vec3::Z,
                },
            ],
            &mut clipped,
        );
        if clipped.len() < 3 {
            continue;
        }

        // Fan-triangulate the clipped polygon and scan each piece.
        let screen: Vec<[f64; 2]> = clipped
            .iter()
            .map(|v| {
                [
                    cam.fx * v.p.x / v.p.z + cam.cx,
                    cam.fy * v.p.y / v.p.z + cam.cy,
                ]
            })
            .collect();
        for fan in 1..clipped.len() - 1 {
            let idx3 = [0, fan, fan + 1];
            let s = [screen[idx3[0]], screen[idx3[1]], screen[idx3[2]]];
            let area2 = (s[1][0] - s[0][0]) * (s[2][1] - s[0][1])
                - (s[1][1] - s[0][1]) * (s[2][0] - s[0][0]);
            if area2 == 0.0 {
                continue;
            }
            let x_lo = s.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
            let x_hi = s.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
            let y_lo = s.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
            let y_hi = s.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max);
            // First and last pixel centers inside the bbox.
            let px_lo = (x_lo - 0.5).ceil().max(0.0) as u32;
            let px_hi = (x_hi - 0.5).floor().min(width_f - 1.0);
            let py_lo = (y_lo - 0.5).ceil().max(0.0) as u32;
            let py_hi = (y_hi - 0.5).floor().min(height_f - 1.0);
            if px_hi < 0.0 || py_hi < 0.0 {
                continue;
            }
            let (px_hi, py_hi) = (px_hi as u32, py_hi as u32);

            let verts = [clipped[idx3[0]], clipped[idx3[1]], clipped[idx3[2]]];
            for py in py_lo..=py_hi {
                for px in px_lo..=px_hi {
                    let pc = [f64::from(px) + 0.5, f64::from(py) + 0.5];
                    // Screen barycentrics via edge functions, normalized by
                    // the signed area so both windings rasterize.
                    let e0 = (s[1][0] - pc[0]) * (s[2][1] - pc[1])
                        - (s[1][1] - pc[1]) * (s[2][0] - pc[0]);
                    let e1 = (s[2][0] - pc[0]) * (s[0][1] - pc[1])
                        - (s[2][1] - pc[1]) * (s[0][0] - pc[0]);
                    let e2 = (s[0][0] - pc[0]) * (s[1][1] - pc[1])
                        - (s[0][1] - pc[1]) * (s[1][0] - pc[0]);
                    let l = [e0 / area2, e1 / area2, e2 / area2];
                    if l.iter().any(|&w| w < 0.0) {
                        continue;
                    }
                    // Perspective-correct weights.
                    let w = [
                        l[0] / verts[0].p.z,
                        l[1] / verts[1].p.z,
                        l[2] / verts[2].p.z,
                    ];
                    let denom = w[0] + w[1] + w[2];
                    let z = 1.0 / denom;
                    let i = gbuf.idx(px, py);
                    let id = t as u32;
                    if z > zbuf[i] || (z == zbuf[i] && id >= gbuf.tri_id[i]) {
                        continue;
                    }
                    // True barycentrics in the original triangle.
                    let b = (verts[0].bary * w[0] + verts[1].bary * w[1] + verts[2].bary * w[2])
                        * z;
                    let pos = corners[0] * b.x + corners[1] * b.y + corners[2] * b.z;
                    let n = match &vertex_normals {
                        Some(vn) => {
                            let [ia, ib, ic] = *tri;
                            let sn = vn[ia as usize] * b.x
                                + vn[ib as usize] * b.y
                                + vn[ic as usize] * b.z;
                            let sn = sn.normalized().unwrap_or(face_n);
                            if sn.dot(cam_pos - pos) < 0.0 {
                                -sn
                            } else {
                                sn
                            }
                        }
                        None => face_n,
                    };
                    zbuf[i] = z;
                    gbuf.depth[i] = z as f32;
                    gbuf.tri_id[i] = id;
                    gbuf.normal[i] = [n.x as f32, n.y as f32, n.z as f32];
                    gbuf.position[i] = [pos.x as f32, pos.y as f32, pos.z as f32];
                    gbuf.bary[i] = [b.x as f32, b.y as f32, b.z as f32];
                }
            }
        }
    }
    Ok(gbuf)
}

/// Default relative threshold for depth-gradient edges.
pub const EDGE_REL_THRESHOLD: f64 = 0.05;

/// Depth-discontinuity edge map.
///
/// A covered pixel is an edge when its central-difference depth gradient
/// magnitude exceeds `rel_threshold` times the scene depth range, or when it
/// sits on a silhouette (a 4-neighbor is uncovered, or the image border).
/// Uncovered pixels are never edges.
pub fn edge_map(gbuf: &GBuffer, rel_threshold: f64) -> BinaryMask {
    let mut mask = BinaryMask::new(gbuf.width, gbuf.height);
    let mut d_min = f64::INFINITY;
    let mut d_max = f64::NEG_INFINITY;
    for (i, &id) in gbuf.tri_id.iter().enumerate() {
        if id != EMPTY_ID {
            let d = f64::from(gbuf.depth[i]);
            d_min = d_min.min(d);
            d_max = d_max.max(d);
        }
    }
    if d_min > d_max {
        return mask; // Empty G-buffer: empty edge map.
    }
    let threshold = rel_threshold * (d_max - d_min);

    let depth_at = |x: u32, y: u32| -> Option<f64> {
        let i = gbuf.idx(x, y);
        (gbuf.tri_id[i] != EMPTY_ID).then(|| f64::from(gbuf.depth[i]))
    };
    for y in 0..gbuf.height {
        for x in 0..gbuf.width {
            if depth_at(x, y).is_none() {
                continue;
            }
            // Silhouette: image border or an uncovered 4-neighbor.
            let border = x == 0 || y == 0 || x == gbuf.width - 1 || y == gbuf.height - 1;
            let silhouette = border
                || depth_at(x - 1, y).is_none()
                || depth_at(x + 1, y).is_none()
                || depth_at(x, y - 1).is_none()
                || depth_at(x, y + 1).is_none();
            if silhouette {
                mask.set(x, y, true);
                continue;
            }
            let gx = (depth_at(x + 1, y).unwrap() - depth_at(x - 1, y).unwrap()) / 2.0;
            let gy = (depth_at(x, y + 1).unwrap() - depth_at(x, y - 1).unwrap()) / 2.0;
            if (gx * gx + gy * gy).sqrt() > threshold {
                mask.set(x, y, true);
            }
        }
    }
    mask
}

/// Grows a mask by `radius` pixels (Chebyshev metric).
pub fn dilate_mask(mask: &BinaryMask, radius: u32) -> BinaryMask {
    let mut out = BinaryMask::new(mask.width, mask.height);
    let r = radius as i64;
    for y in 0..mask.height {
        for x in 0..mask.width {
            if !mask.get(x, y) {
                continue;
            }
            let x_lo = (x as i64 - r).max(0) as u32;
            let x_hi = (x as i64 + r).min(mask.width as i64 - 1) as u32;
            let y_lo = (y as i64 - r).max(0) as u32;
            let y_hi = (y as i64 + r).min(mask.height as i64 - 1) as u32;
            for ny in y_lo..=y_hi {
                for nx in x_lo..=x_hi {
                    out.set(nx, ny, true);
                }
            }
        }
    }
    out
}

/// 7-channel per-pixel conditioning tensor.
///
/// Channels 0-2: normal mapped by `(n + 1) / 2`; channels 3-5: world
/// position min-max normalized to the supplied bounds; channel 6: edge flag.
/// Background pixels are all zero; every value lies in `[0, 1]`.
#[derive(Clone, Debug)]
pub struct ConditionTensor {
    pub width: u32,
    pub height: u32,
    pub data: Vec<[f32; 7]>,
}

impl ConditionTensor {
    #[inline]
    pub fn idx(&self, x: u32, y: u32) -> usize {
        (y * self.width + x) as usize
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [f32; 7] {
        self.data[self.idx(x, y)]
    }
}

/// Extent below which a bounds axis is considered flat.
const DEGENERATE_AXIS: f64 = 1e-12;

/// Packs a G-buffer and its edge map into the conditioning tensor.
///
/// `bounds` is the scene mesh's AABB so every view of one scene shares a
/// single position encoding. Axes with (near-)zero extent normalize to 0.5;
/// if all three axes are flat the bounds are unusable → `DegenerateBounds`.
pub fn pack_condition(
    gbuf: &GBuffer,
    edges: &BinaryMask,
    bounds: &Aabb,
) -> Result<ConditionTensor, Error> {
    if edges.width != gbuf.width || edges.height != gbuf.height {
        return Err(Error::ShapeMismatch("edge map dimensions do not match G-buffer"));
    }
    let ext = bounds.extent();
    let ext = [ext.x, ext.y, ext.z];
    if ext.iter().all(|&e| e < DEGENERATE_AXIS) {
        return Err(Error::DegenerateBounds);
    }
    let mins = [bounds.min.x, bounds.min.y, bounds.min.z];
    let mut data = alloc::vec![[0.0f32; 7]; gbuf.tri_id.len()];
    for (i, px) in data.iter_mut().enumerate() {
        if gbuf.tri_id[i] == EMPTY_ID {
            continue;
        }
        for k in 0..3 {
            px[k] = ((f64::from(gbuf.normal[i][k]) + 1.0) / 2.0).clamp(0.0, 1.0) as f32;
        }
        for k in 0..3 {
            px[3 + k] = if ext[k] < DEGENERATE_AXIS {
                0.5
            } else {
                (((f64::from(gbuf.position[i][k])) - mins[k]) / ext[k]).clamp(0.0, 1.0) as f32
            };
        }
        if edges.data[i] {
            px[6] = 1.0;
        }
    }
    Ok(ConditionTensor {
        width: gbuf.width,
        height: gbuf.height,
        data,
    })
}

/// One camera of a view rig with its prior weight.
#[derive(Clone, Debug)]
pub struct RigView {
    pub camera: PinholeCamera,
    pub weight: f64,
    pub name: String,
}

/// An ordered set of views; weights are the w_i priors of confidence
/// weighting.
#[derive(Clone, Debug, Default)]
pub struct ViewRig {
    pub views: Vec<RigView>,
}

impl ViewRig {
    pub fn validate(&self) -> Result<(), Error> {
        if self.views.is_empty() {
            return Err(Error::EmptyInput("view rig"));
        }
        for v in &self.views {
            if !(v.weight.is_finite() && v.weight > 0.0) {
                return Err(Error::InvalidInput(String::from(
                    "rig weights must be finite and positive",
                )));
            }
        }
        Ok(())
    }
}

/// Default view resolution for conditioning maps.
pub const DEFAULT_VIEW_RES: u32 = 768;

/// Weight of the six principal views.
pub const PRINCIPAL_WEIGHT: f64 = 1.0;
/// Weight of the four oblique views.
pub const OBLIQUE_WEIGHT: f64 = 0.1;

/// Focal length that frames an object of the given diagonal, seen from
/// `radius` away, inside `margin` of the half-image.
pub fn framing_focal(radius: f64, diagonal: f64, image_px: u32, margin: f64) -> Result<f64, Error> {
    if !(radius.is_finite() && diagonal.is_finite() && radius > diagonal / 2.0 && diagonal > 0.0) {
        return Err(Error::InvalidInput(String::from(
            "framing requires 0 < diagonal / 2 < radius",
        )));
    }
    Ok(margin * (f64::from(image_px) / 2.0) * (radius - diagonal / 2.0) / (diagonal / 2.0))
}

/// The standard 10-view rig around `center` at distance `radius`.
///
/// Six principal views along the world axes (weight 1.0) and four oblique
/// views (weight 0.1) at azimuths {45°, 135°, 225°, 325°} with elevations
/// alternating −20°/+20° starting at −20°. Azimuth is measured around +Y
/// from +X toward +Z; every optical axis passes through `center`.
pub fn default_rig(
    center: Point3,
    radius: f64,
    width: u32,
    height: u32,
    focal: f64,
) -> Result<ViewRig, Error> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::InvalidInput(String::from(
            "rig radius must be finite and positive",
        )));
    }
    let cx = f64::from(width) / 2.0;
    let cy = f64::from(height) / 2.0;
    let mut views = Vec::with_capacity(10);
    let principal: [(&str, Vec3); 6] = [
        ("principal_px", Vec3::X),
        ("principal_nx", -Vec3::X),
        ("principal_py", Vec3::Y),
        ("principal_ny", -Vec3::Y),
        ("principal_pz", Vec3::Z),
        ("principal_nz", -Vec3::Z),
    ];
    for (name, dir) in principal {
        let eye = center + dir * radius;
        let camera = PinholeCamera::new(
            focal,
            focal,
            cx,
            cy,
            width,
            height,
            look_at(eye, center, Vec3::Y),
        )?;
        views.push(RigView {
            camera,
            weight: PRINCIPAL_WEIGHT,
            name: String::from(name),
        });
    }
    let azimuths = [45.0f64, 135.0, 225.0, 325.0];
    for (k, az_deg) in azimuths.into_iter().enumerate() {
        let el_deg: f64 = if k % 2 == 0 { -20.0 } else { 20.0 };
        let az = az_deg.to_radians();
        let el = el_deg.to_radians();
        let dir = Vec3::new(el.cos() * az.cos(), el.sin(), el.cos() * az.sin());
        let eye = center + dir * radius;
        let camera = PinholeCamera::new(
            focal,
            focal,
            cx,
            cy,
            width,
            height,
            look_at(eye, center, Vec3::Y),
        )?;
        let el_tag = if el_deg < 0.0 { "m20" } else { "p20" };
        views.push(RigView {
            camera,
            weight: OBLIQUE_WEIGHT,
            name: alloc::format!("oblique_az{}_el{}", az_deg as i64, el_tag),
        });
    }
    Ok(ViewRig { views })
}

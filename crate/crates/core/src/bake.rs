//! Texture baking: per-view confidence maps, texel-centric atlas gathering
//! over the mesh UV layout, atlas dilation, and a fallback per-triangle UV
//! parameterization for meshes that arrive without one.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::Error;
use crate::geom::{PinholeCamera, TriangleMesh, Vec2, Vec3};
use crate::image::{BinaryMask, ScalarBuf};
use crate::propagate::{point_visibility, KnownViewSet, DEPTH_TOL};
use crate::render::{GBuffer, EMPTY_ID};

/// Maximum angle (degrees) between surface normal and view direction for a
/// pixel to contribute texture.
pub const VIEW_ANGLE_LIMIT_DEG: f64 = 60.0;

/// Default atlas side length in texels.
pub const DEFAULT_ATLAS_RES: u32 = 2048;

/// Default dilation radius (texels) used to pad charts before export.
pub const DILATE_RADIUS: u32 = 4;

/// Per-pixel contribution weight of one view: `weight * cos(theta)` where
/// `theta` is the angle between the surface normal and the direction to the
/// camera, zeroed beyond `alpha_deg`, on depth-discontinuity edges, and on
/// uncovered pixels.
pub fn view_confidence(
    gbuf: &GBuffer,
    cam: &PinholeCamera,
    edges: &BinaryMask,
    weight: f64,
    alpha_deg: f64,
) -> Result<ScalarBuf, Error> {
    if edges.width != gbuf.width || edges.height != gbuf.height {
        return Err(Error::ShapeMismatch("edge mask does not match G-buffer"));
    }
    if !weight.is_finite() || weight < 0.0 {
        return Err(Error::InvalidInput(alloc::format!(
            "view weight must be finite and non-negative, got {weight}"
        )));
    }
    if !(alpha_deg > 0.0 && alpha_deg <= 90.0) {
        return Err(Error::InvalidInput(alloc::format!(
            "angle limit must be in (0, 90] degrees, got {alpha_deg}"
        )));
    }
    let cos_alpha = alpha_deg.to_radians().cos();
    let cam_pos = cam.position();
    let mut conf = ScalarBuf::new(gbuf.width, gbuf.height);
    for y in 0..gbuf.height {
        for x in 0..gbuf.width {
            let i = gbuf.idx(x, y);
            if gbuf.tri_id[i] == EMPTY_ID || edges.data[i] {
                continue;
            }
            let p = Vec3::new(
                f64::from(gbuf.position[i][0]),
                f64::from(gbuf.position[i][1]),
                f64::from(gbuf.position[i][2]),
            );
            let n = Vec3::new(
                f64::from(gbuf.normal[i][0]),
                f64::from(gbuf.normal[i][1]),
                f64::from(gbuf.normal[i][2]),
            );
            let dir = match (cam_pos - p).normalized() {
                Some(d) => d,
                None => continue,
            };
            let cos = n.dot(dir).clamp(-1.0, 1.0);
            if cos >= cos_alpha {
                conf.set(x, y, (weight * cos) as f32);
            }
        }
    }
    Ok(conf)
}

/// Square texture atlas accumulated per texel. `color` is the normalized
/// (confidence-weighted mean) color, `confidence` the total accumulated
/// confidence, `valid` whether any view contributed.
#[derive(Clone, Debug)]
pub struct TexelAtlas {
    pub res: u32,
    pub color: Vec<[f32; 3]>,
    pub confidence: Vec<f32>,
    pub valid: Vec<bool>,
}

impl TexelAtlas {
    pub fn new(res: u32) -> Self {
        let n = (res as usize) * (res as usize);
        Self {
            res,
            color: vec![[0.0; 3]; n],
            confidence: vec![0.0; n],
            valid: vec![false; n],
        }
    }

    #[inline]
    pub fn idx(&self, tx: u32, ty: u32) -> usize {
        (ty as usize) * (self.res as usize) + (tx as usize)
    }
}

/// Assigns each texel center to the UV triangle containing it; contested
/// texels go to the lowest triangle id. `EMPTY_ID` marks unowned texels.
fn uv_ownership(uvs: &[[Vec2; 3]], res: u32) -> Vec<u32> {
    let n = (res as usize) * (res as usize);
    let mut owner = vec![EMPTY_ID; n];
    let scale = f64::from(res);
    for (t, corners) in uvs.iter().enumerate() {
        let pa = [corners[0].x * scale, corners[0].y * scale];
        let pb = [corners[1].x * scale, corners[1].y * scale];
        let pc = [corners[2].x * scale, corners[2].y * scale];
        let area2 = (pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]);
        if area2 == 0.0 {
            continue;
        }
        let min_x = pa[0].min(pb[0]).min(pc[0]);
        let max_x = pa[0].max(pb[0]).max(pc[0]);
        let min_y = pa[1].min(pb[1]).min(pc[1]);
        let max_y = pa[1].max(pb[1]).max(pc[1]);
        if max_x < 0.5 || max_y < 0.5 || min_x > scale - 0.5 || min_y > scale - 0.5 {
            continue;
        }
        let tx_lo = ((min_x - 0.5).ceil().max(0.0)) as u32;
        let tx_hi = ((max_x - 0.5).floor().min(scale - 1.0)) as u32;
        let ty_lo = ((min_y - 0.5).ceil().max(0.0)) as u32;
        let ty_hi = ((max_y - 0.5).floor().min(scale - 1.0)) as u32;
        for ty in ty_lo..=ty_hi {
            for tx in tx_lo..=tx_hi {
                let i = (ty as usize) * (res as usize) + (tx as usize);
                if owner[i] != EMPTY_ID {
                    continue; // Ascending ids: first owner is the lowest.
                }
                let px = f64::from(tx) + 0.5;
                let py = f64::from(ty) + 0.5;
                let e0 = ((pc[0] - pb[0]) * (py - pb[1]) - (pc[1] - pb[1]) * (px - pb[0])) / area2;
                let e1 = ((pa[0] - pc[0]) * (py - pc[1]) - (pa[1] - pc[1]) * (px - pc[0])) / area2;
                let e2 = ((pb[0] - pa[0]) * (py - pa[1]) - (pb[1] - pa[1]) * (px - pa[0])) / area2;
                if e0 >= 0.0 && e1 >= 0.0 && e2 >= 0.0 {
                    owner[i] = t as u32;
                }
            }
        }
    }
    owner
}

/// Barycentric coordinates of UV point `p` in triangle `(a, b, c)`.
fn uv_barycentric(a: Vec2, b: Vec2, c: Vec2, p: Vec2) -> [f64; 3] {
    let denom = (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y);
    let l1 = ((p.x - a.x) * (c.y - a.y) - (c.x - a.x) * (p.y - a.y)) / denom;
    let l2 = ((b.x - a.x) * (p.y - a.y) - (p.x - a.x) * (b.y - a.y)) / denom;
    [1.0 - l1 - l2, l1, l2]
}

/// Bakes the views into a texture atlas over the mesh's UV layout.
///
/// Texel-centric gather: each texel owned by a UV triangle maps to a 3D
/// surface point; every view in which that point passes the z-visibility
/// test contributes its bilinear color sample weighted by the bilinear
/// sample of the view's confidence map. Texels with zero total confidence
/// are flagged invalid.
pub fn bake(
    mesh: &TriangleMesh,
    views: &KnownViewSet,
    confs: &[ScalarBuf],
    atlas_res: u32,
) -> Result<TexelAtlas, Error> {
    let uvs = mesh.uvs.as_ref().ok_or(Error::MissingUvs)?;
    if uvs.len() != mesh.triangles.len() {
        return Err(Error::ShapeMismatch("uvs length != triangles length"));
    }
    if confs.len() != views.views.len() {
        return Err(Error::ShapeMismatch("one confidence map per view required"));
    }
    for (kv, conf) in views.views.iter().zip(confs) {
        if conf.width != kv.camera.width || conf.height != kv.camera.height {
            return Err(Error::ShapeMismatch("confidence map does not match view"));
        }
        if kv.image.width != kv.camera.width || kv.image.height != kv.camera.height {
            return Err(Error::ShapeMismatch("view image does not match camera"));
        }
    }
    if atlas_res == 0 {
        return Err(Error::InvalidInput(alloc::string::String::from(
            "atlas resolution must be positive",
        )));
    }

    let owner = uv_ownership(uvs, atlas_res);
    let mut atlas = TexelAtlas::new(atlas_res);
    let inv_res = 1.0 / f64::from(atlas_res);
    for ty in 0..atlas_res {
        for tx in 0..atlas_res {
            let i = atlas.idx(tx, ty);
            let t = owner[i];
            if t == EMPTY_ID {
                continue;
            }
            let uv = Vec2::new(
                (f64::from(tx) + 0.5) * inv_res,
                (f64::from(ty) + 0.5) * inv_res,
            );
            let corner_uvs = &uvs[t as usize];
            let bary = uv_barycentric(corner_uvs[0], corner_uvs[1], corner_uvs[2], uv);
            let [va, vb, vc] = mesh.corners(t as usize);
            let pos = va * bary[0] + vb * bary[1] + vc * bary[2];

            let mut acc = [0.0f64; 3];
            let mut csum = 0.0f64;
            for (kv, conf) in views.views.iter().zip(confs) {
                let (u, v) = match point_visibility(&kv.camera, &kv.gbuf, pos, DEPTH_TOL) {
                    Some(uv) => uv,
                    None => continue,
                };
                let c = f64::from(conf.sample_bilinear(u, v));
                if c <= 0.0 {
                    continue;
                }
                let color = kv.image.sample_bilinear(u, v);
                for k in 0..3 {
                    acc[k] += c * f64::from(color[k]);
                }
                csum += c;
            }
            if csum > 0.0 {
                atlas.color[i] = [
                    (acc[0] / csum) as f32,
                    (acc[1] / csum) as f32,
                    (acc[2] / csum) as f32,
                ];
                atlas.confidence[i] = csum as f32;
                atlas.valid[i] = true;
            }
        }
    }
    Ok(atlas)
}

/// Grows valid regions outward by `radius` texels (Chebyshev metric).
///
/// Each invalid texel within `radius` of a valid one takes the color of a
/// nearest valid texel (ties broken by a fixed neighbor scan order); its
/// confidence stays zero but it becomes valid. Originally valid texels are
/// untouched; invalid texels farther than `radius` stay invalid.
pub fn dilate_atlas(atlas: &TexelAtlas, radius: u32) -> TexelAtlas {
    let mut out = atlas.clone();
    if radius == 0 || atlas.res == 0 {
        return out;
    }
    const UNFILLED: u32 = u32::MAX;
    let res = atlas.res as i64;
    let mut gen: Vec<u32> = atlas
        .valid
        .iter()
        .map(|v| if *v { 0 } else { UNFILLED })
        .collect();
    for pass in 1..=radius {
        let prev: Vec<u32> = gen.clone();
        for ty in 0..res {
            for tx in 0..res {
                let i = (ty * res + tx) as usize;
                if prev[i] != UNFILLED {
                    continue;
                }
                'scan: for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        if dx == 0 && dy == 0 {
                            continue;
                        }
                        let (nx, ny) = (tx + dx, ty + dy);
                        if nx < 0 || ny < 0 || nx >= res || ny >= res {
                            continue;
                        }
                        let j = (ny * res + nx) as usize;
                        if prev[j] < pass {
                            out.color[i] = out.color[j];
                            out.valid[i] = true;
                            gen[i] = pass;
                            break 'scan;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Fallback parameterization: each triangle gets its own right-angled chart
/// in a uniform grid, sized so charts stay at least two texels apart at
/// `atlas_res`. Distorts shape; meant only to make UV-less meshes bakeable.
pub fn auto_uv_atlas(mesh: &TriangleMesh, atlas_res: u32) -> Result<TriangleMesh, Error> {
    let n = mesh.triangles.len();
    if n == 0 {
        return Err(Error::EmptyInput("mesh has no triangles"));
    }
    if atlas_res == 0 {
        return Err(Error::InvalidInput(alloc::string::String::from(
            "atlas resolution must be positive",
        )));
    }
    let grid = (n as f64).sqrt().ceil() as usize;
    let cell = 1.0 / grid as f64;
    let pad = 2.0 / f64::from(atlas_res);
    if cell - 2.0 * pad < 1.0 / f64::from(atlas_res) {
        return Err(Error::InvalidInput(alloc::format!(
            "atlas resolution {atlas_res} too small for {n} triangle charts"
        )));
    }
    let mut uvs = Vec::with_capacity(n);
    for t in 0..n {
        let cx = (t % grid) as f64;
        let cy = (t / grid) as f64;
        let lo = Vec2::new(cx * cell + pad, cy * cell + pad);
        let hi = Vec2::new((cx + 1.0) * cell - pad, (cy + 1.0) * cell - pad);
        uvs.push([lo, Vec2::new(hi.x, lo.y), Vec2::new(lo.x, hi.y)]);
    }
    let mut out = mesh.clone();
    out.uvs = Some(uvs);
    Ok(out)
}

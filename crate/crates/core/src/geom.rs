//! Geometric foundations: vectors, rotations, rigid transforms, point clouds,
//! triangle meshes, pinhole cameras, and similarity poses.
//!
//! Conventions, fixed across the toolkit:
//! - Camera frame: +Z forward, +X right, +Y down.
//! - Pixel origin: top-left. A pixel (ix, iy) covers [ix, ix+1) x [iy, iy+1)
//!   and its center has continuous coordinates (ix + 0.5, iy + 0.5).
//! - Poses apply scale, then rotation, then translation:
//!   p' = exp(log_scale) * R(rotation) * p + translation.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use rand::Rng;

use crate::error::Error;

// ---------------------------------------------------------------------------
// Vectors and matrices
// ---------------------------------------------------------------------------

/// 2D vector, used for UV coordinates and in-plane parameterizations.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Self = Self { x: 0.0, y: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn dot(self, o: Self) -> f64 {
        self.x * o.x + self.y * o.y
    }

    #[inline]
    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }
}

impl core::ops::Add for Vec2 {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y)
    }
}

impl core::ops::Sub for Vec2 {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y)
    }
}

impl core::ops::Mul<f64> for Vec2 {
    type Output = Self;
    #[inline]
    fn mul(self, s: f64) -> Self {
        Self::new(self.x * s, self.y * s)
    }
}

/// 3D vector. Doubles as a point; the distinction is carried by context.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// Points are vectors; the alias marks intent at API boundaries.
pub type Point3 = Vec3;

impl Vec3 {
    pub const ZERO: Self = Self { x: 0.0, y: 0.0, z: 0.0 };
    pub const X: Self = Self { x: 1.0, y: 0.0, z: 0.0 };
    pub const Y: Self = Self { x: 0.0, y: 1.0, z: 0.0 };
    pub const Z: Self = Self { x: 0.0, y: 0.0, z: 1.0 };

    #[inline]
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    #[inline]
    pub const fn splat(v: f64) -> Self {
        Self { x: v, y: v, z: v }
    }

    #[inline]
    pub fn dot(self, o: Self) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(self, o: Self) -> Self {
        Self::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    #[inline]
    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Unit vector, or `None` when the norm underflows.
    #[inline]
    pub fn normalized(self) -> Option<Self> {
        let n = self.norm();
        if n > 1e-300 {
            Some(self * (1.0 / n))
        } else {
            None
        }
    }

    #[inline]
    pub fn distance_sq(self, o: Self) -> f64 {
        (self - o).norm_sq()
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    #[inline]
    pub fn min_by_component(self, o: Self) -> Self {
        Self::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    #[inline]
    pub fn max_by_component(self, o: Self) -> Self {
        Self::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }

    #[inline]
    pub fn axis(self, i: usize) -> f64 {
        match i {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }

    #[inline]
    pub const fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    #[inline]
    pub const fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }
}

impl core::ops::Add for Vec3 {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl core::ops::AddAssign for Vec3 {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl core::ops::Sub for Vec3 {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl core::ops::Mul<f64> for Vec3 {
    type Output = Self;
    #[inline]
    fn mul(self, s: f64) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }
}

impl core::ops::Neg for Vec3 {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

/// Row-major 3x3 matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Mat3 {
    pub m: [[f64; 3]; 3],
}

impl Mat3 {
    pub const IDENTITY: Self = Self {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    pub const ZERO: Self = Self { m: [[0.0; 3]; 3] };

    #[inline]
    pub const fn from_rows(r0: [f64; 3], r1: [f64; 3], r2: [f64; 3]) -> Self {
        Self { m: [r0, r1, r2] }
    }

    /// Outer product `a b^T`.
    #[inline]
    pub fn outer(a: Vec3, b: Vec3) -> Self {
        Self::from_rows(
            [a.x * b.x, a.x * b.y, a.x * b.z],
            [a.y * b.x, a.y * b.y, a.y * b.z],
            [a.z * b.x, a.z * b.y, a.z * b.z],
        )
    }

    #[inline]
    pub fn from_cols(c0: Vec3, c1: Vec3, c2: Vec3) -> Self {
        Self {
            m: [
                [c0.x, c1.x, c2.x],
                [c0.y, c1.y, c2.y],
                [c0.z, c1.z, c2.z],
            ],
        }
    }

    #[inline]
    pub fn col(&self, j: usize) -> Vec3 {
        Vec3::new(self.m[0][j], self.m[1][j], self.m[2][j])
    }

    #[inline]
    pub fn row(&self, i: usize) -> Vec3 {
        Vec3::from_array(self.m[i])
    }

    /// Cross-product matrix: `skew(v) * w == v.cross(w)`.
    #[inline]
    pub fn skew(v: Vec3) -> Self {
        Self::from_rows([0.0, -v.z, v.y], [v.z, 0.0, -v.x], [-v.y, v.x, 0.0])
    }

    #[inline]
    pub fn transpose(&self) -> Self {
        Self::from_rows(
            [self.m[0][0], self.m[1][0], self.m[2][0]],
            [self.m[0][1], self.m[1][1], self.m[2][1]],
            [self.m[0][2], self.m[1][2], self.m[2][2]],
        )
    }

    #[inline]
    pub fn det(&self) -> f64 {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Deviation from a proper rotation: max |R^T R - I| entry and |det - 1|.
    pub fn rotation_defect(&self) -> f64 {
        let g = self.transpose() * *self;
        let mut worst = (self.det() - 1.0).abs();
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g.m[i][j] - target).abs());
            }
        }
        worst
    }
}

impl core::ops::Add for Mat3 {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        let mut m = self.m;
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] += o.m[i][j];
            }
        }
        Self { m }
    }
}

impl core::ops::Mul<f64> for Mat3 {
    type Output = Self;
    #[inline]
    fn mul(self, s: f64) -> Self {
        let mut m = self.m;
        for row in &mut m {
            for v in row {
                *v *= s;
            }
        }
        Self { m }
    }
}

impl core::ops::Mul<Vec3> for Mat3 {
    type Output = Vec3;
    #[inline]
    fn mul(self, v: Vec3) -> Vec3 {
        Vec3::new(
            self.m[0][0] * v.x + self.m[0][1] * v.y + self.m[0][2] * v.z,
            self.m[1][0] * v.x + self.m[1][1] * v.y + self.m[1][2] * v.z,
            self.m[2][0] * v.x + self.m[2][1] * v.y + self.m[2][2] * v.z,
        )
    }
}

impl core::ops::Mul<Mat3> for Mat3 {
    type Output = Mat3;
    fn mul(self, o: Mat3) -> Mat3 {
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.m[i][0] * o.m[0][j] + self.m[i][1] * o.m[1][j] + self.m[i][2] * o.m[2][j];
            }
        }
        Mat3 { m }
    }
}

/// Eigen-decomposition of a symmetric 3x3 matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues ascending with matching unit eigenvectors. The input is
/// symmetrized first, so slight asymmetry from accumulation error is harmless.
pub fn sym_eigen(m: &Mat3) -> ([f64; 3], [Vec3; 3]) {
    let mut a = [[0.0f64; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            a[i][j] = 0.5 * (m.m[i][j] + m.m[j][i]);
        }
    }
    let mut v = Mat3::IDENTITY.m;

    for _sweep in 0..32 {
        let off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
        if off < 1e-30 {
            break;
        }
        for p in 0..2 {
            for q in (p + 1)..3 {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..3 {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..3 {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in &mut v {
                    let vp = row[p];
                    let vq = row[q];
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }

    let vm = Mat3 { m: v };
    let mut pairs = [
        (a[0][0], vm.col(0)),
        (a[1][1], vm.col(1)),
        (a[2][2], vm.col(2)),
    ];
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    (
        [pairs[0].0, pairs[1].0, pairs[2].0],
        [pairs[0].1, pairs[1].1, pairs[2].1],
    )
}

// ---------------------------------------------------------------------------
// Rigid transforms and axis-angle rotations
// ---------------------------------------------------------------------------

/// Rigid transform `p -> R p + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RigidTransform {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl RigidTransform {
    pub const IDENTITY: Self = Self {
        rotation: Mat3::IDENTITY,
        translation: Vec3::ZERO,
    };

    #[inline]
    pub fn apply(&self, p: Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// Inverse of a rigid transform: `p -> R^T (p - t)`.
    #[inline]
    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Row-major 4x4 homogeneous matrix.
    pub fn to_matrix_rows(&self) -> [f64; 16] {
        let r = &self.rotation.m;
        let t = self.translation;
        [
            r[0][0], r[0][1], r[0][2], t.x,
            r[1][0], r[1][1], r[1][2], t.y,
            r[2][0], r[2][1], r[2][2], t.z,
            0.0, 0.0, 0.0, 1.0,
        ]
    }

    /// Parse a row-major 4x4 homogeneous matrix; the last row must be
    /// (0, 0, 0, 1) within 1e-9.
    pub fn from_matrix_rows(m: &[f64; 16]) -> Result<Self, Error> {
        let bottom_ok = (m[12]).abs() < 1e-9
            && (m[13]).abs() < 1e-9
            && (m[14]).abs() < 1e-9
            && (m[15] - 1.0).abs() < 1e-9;
        if !bottom_ok {
            return Err(Error::InvalidInput(alloc::string::String::from(
                "homogeneous matrix bottom row must be (0, 0, 0, 1)",
            )));
        }
        Ok(Self {
            rotation: Mat3::from_rows(
                [m[0], m[1], m[2]],
                [m[4], m[5], m[6]],
                [m[8], m[9], m[10]],
            ),
            translation: Vec3::new(m[3], m[7], m[11]),
        })
    }
}

/// Rotation matrix from an axis-angle vector (Rodrigues).
///
/// The vector's direction is the rotation axis, its norm the angle in radians.
/// A series expansion keeps the map smooth through the zero rotation.
pub fn rotation_from_axis_angle(r: Vec3) -> Mat3 {
    let theta_sq = r.norm_sq();
    // R = I + a K + b K^2 with K = skew(r), a = sin(t)/t, b = (1 - cos(t))/t^2.
    let (a, b) = if theta_sq < 1e-8 {
        (1.0 - theta_sq / 6.0, 0.5 - theta_sq / 24.0)
    } else {
        let theta = theta_sq.sqrt();
        (theta.sin() / theta, (1.0 - theta.cos()) / theta_sq)
    };
    let k = Mat3::skew(r);
    Mat3::IDENTITY + k * a + (k * k) * b
}

/// Partial derivatives of the Rodrigues map: `out[k] = dR/dr_k`.
///
/// Uses the closed form
///   dR/dr_k = (r_k [r]x + [ r x (I - R) e_k ]x) / |r|^2 * R
/// away from the origin, and the exact limit `dR/dr_k = [e_k]x` at it.
pub fn rotation_jacobian(r: Vec3) -> [Mat3; 3] {
    let theta_sq = r.norm_sq();
    if theta_sq < 1e-14 {
        return [
            Mat3::skew(Vec3::X),
            Mat3::skew(Vec3::Y),
            Mat3::skew(Vec3::Z),
        ];
    }
    let rot = rotation_from_axis_angle(r);
    let k = Mat3::skew(r);
    let inv = 1.0 / theta_sq;
    let basis = [Vec3::X, Vec3::Y, Vec3::Z];
    let mut out = [Mat3::IDENTITY; 3];
    for (i, e) in basis.iter().enumerate() {
        let i_minus_r_e = *e - rot * *e;
        let term = k * r.axis(i) + Mat3::skew(r.cross(i_minus_r_e));
        out[i] = (term * inv) * rot;
    }
    out
}

/// Camera extrinsics looking from `eye` toward `target`.
///
/// The image x axis is horizontal (perpendicular to `up`), and the image up
/// direction matches world `up`. When the view direction is nearly parallel
/// to `up`, a fixed fallback axis keeps the result well defined.
pub fn look_at(eye: Vec3, target: Vec3, up: Vec3) -> RigidTransform {
    let forward = (target - eye)
        .normalized()
        .unwrap_or(Vec3::Z);
    let mut right = forward.cross(up);
    if right.norm_sq() < 1e-12 {
        // Pick the axis least aligned with the view direction.
        let ax = forward.x.abs();
        let ay = forward.y.abs();
        let az = forward.z.abs();
        let alt = if ax <= ay && ax <= az {
            Vec3::X
        } else if ay <= az {
            Vec3::Y
        } else {
            Vec3::Z
        };
        right = forward.cross(alt);
    }
    let right = right.normalized().expect("fallback axis is not parallel");
    let down = forward.cross(right);
    RigidTransform {
        rotation: Mat3::from_cols(right, down, forward),
        translation: eye,
    }
}

// ---------------------------------------------------------------------------
// Point clouds and meshes
// ---------------------------------------------------------------------------

/// Unordered point set with optional per-point colors and normals.
///
/// Invariants (checked by [`PointCloud::validate`]):
/// - every coordinate is finite;
/// - `colors`/`normals`, when present, have the same length as `points`;
/// - colors lie in [0, 1] per channel;
/// - normals have unit length within 1e-6, except all-zero normals which mark
///   points whose normal estimate was degenerate.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    pub colors: Option<Vec<[f32; 3]>>,
    pub normals: Option<Vec<Vec3>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Self {
        Self {
            points,
            colors: None,
            normals: None,
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<(), Error> {
        for p in &self.points {
            if !p.is_finite() {
                return Err(Error::InvalidInput(alloc::string::String::from(
                    "point cloud contains a non-finite coordinate",
                )));
            }
        }
        if let Some(colors) = &self.colors {
            if colors.len() != self.points.len() {
                return Err(Error::ShapeMismatch("colors length != points length"));
            }
            for c in colors {
                if c.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
                    return Err(Error::InvalidInput(alloc::string::String::from(
                        "point color outside [0, 1]",
                    )));
                }
            }
        }
        if let Some(normals) = &self.normals {
            if normals.len() != self.points.len() {
                return Err(Error::ShapeMismatch("normals length != points length"));
            }
            for n in normals {
                if !n.is_finite() {
                    return Err(Error::InvalidInput(alloc::string::String::from(
                        "point normal is non-finite",
                    )));
                }
                let len = n.norm();
                if len != 0.0 && (len - 1.0).abs() > 1e-6 {
                    return Err(Error::InvalidInput(alloc::string::String::from(
                        "point normal is neither unit nor the degenerate zero marker",
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn centroid(&self) -> Result<Point3, Error> {
        if self.is_empty() {
            return Err(Error::EmptyInput("point cloud"));
        }
        let mut sum = Vec3::ZERO;
        for p in &self.points {
            sum += *p;
        }
        Ok(sum * (1.0 / self.points.len() as f64))
    }

    pub fn aabb(&self) -> Result<Aabb, Error> {
        Aabb::from_points(&self.points)
    }

    /// Keeps the points at `indices`, carrying colors/normals along.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            colors: self
                .colors
                .as_ref()
                .map(|c| indices.iter().map(|&i| c[i]).collect()),
            normals: self
                .normals
                .as_ref()
                .map(|n| indices.iter().map(|&i| n[i]).collect()),
        }
    }
}

/// Axis-aligned bounding box.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn from_points(points: &[Point3]) -> Result<Self, Error> {
        let first = *points.first().ok_or(Error::EmptyInput("point set"))?;
        let mut b = Self {
            min: first,
            max: first,
        };
        for p in &points[1..] {
            b.min = b.min.min_by_component(*p);
            b.max = b.max.max_by_component(*p);
        }
        Ok(b)
    }

    #[inline]
    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    #[inline]
    pub fn diagonal(&self) -> f64 {
        (self.max - self.min).norm()
    }

    #[inline]
    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }
}

/// Indexed triangle mesh with optional vertex colors and per-corner UVs.
///
/// UVs are stored per corner (three per triangle, parallel to `triangles`) so
/// charts can seam without duplicating vertices.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Point3>,
    pub triangles: Vec<[u32; 3]>,
    pub vertex_colors: Option<Vec<[f32; 3]>>,
    pub uvs: Option<Vec<[Vec2; 3]>>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Point3>, triangles: Vec<[u32; 3]>) -> Self {
        Self {
            vertices,
            triangles,
            vertex_colors: None,
            uvs: None,
        }
    }

    #[inline]
    pub fn corners(&self, tri: usize) -> [Point3; 3] {
        let [a, b, c] = self.triangles[tri];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    #[inline]
    pub fn area(&self, tri: usize) -> f64 {
        let [a, b, c] = self.corners(tri);
        (b - a).cross(c - a).norm() * 0.5
    }

    /// Unit geometric normal; zero for degenerate triangles.
    #[inline]
    pub fn face_normal(&self, tri: usize) -> Vec3 {
        let [a, b, c] = self.corners(tri);
        (b - a).cross(c - a).normalized().unwrap_or(Vec3::ZERO)
    }

    pub fn aabb(&self) -> Result<Aabb, Error> {
        Aabb::from_points(&self.vertices)
    }

    pub fn validate(&self) -> Result<(), Error> {
        for v in &self.vertices {
            if !v.is_finite() {
                return Err(Error::InvalidInput(alloc::string::String::from(
                    "mesh vertex is non-finite",
                )));
            }
        }
        for (i, t) in self.triangles.iter().enumerate() {
            if t.iter().any(|&k| k as usize >= self.vertices.len()) {
                return Err(Error::InvalidInput(alloc::format!(
                    "triangle {i} references a vertex out of range"
                )));
            }
            if self.area(i) <= 1e-12 {
                return Err(Error::InvalidInput(alloc::format!(
                    "triangle {i} is degenerate (area <= 1e-12)"
                )));
            }
        }
        if let Some(colors) = &self.vertex_colors {
            if colors.len() != self.vertices.len() {
                return Err(Error::ShapeMismatch("vertex_colors length != vertices length"));
            }
        }
        if let Some(uvs) = &self.uvs {
            if uvs.len() != self.triangles.len() {
                return Err(Error::ShapeMismatch("uvs length != triangles length"));
            }
        }
        Ok(())
    }

    /// Area-weighted uniform surface sampling.
    ///
    /// Colors are interpolated barycentrically when present; normals are the
    /// face normals. Deterministic for a given RNG state.
    pub fn sample_surface<R: Rng>(&self, n: usize, rng: &mut R) -> Result<PointCloud, Error> {
        if self.triangles.is_empty() {
            return Err(Error::EmptyInput("mesh has no triangles"));
        }
        let mut cumulative = Vec::with_capacity(self.triangles.len());
        let mut total = 0.0f64;
        for i in 0..self.triangles.len() {
            total += self.area(i);
            cumulative.push(total);
        }
        if total <= 0.0 {
            return Err(Error::DegenerateCloud("mesh has zero surface area"));
        }

        let mut points = Vec::with_capacity(n);
        let mut normals = Vec::with_capacity(n);
        let mut colors = self
            .vertex_colors
            .as_ref()
            .map(|_| Vec::with_capacity(n));
        for _ in 0..n {
            let target = rng.random::<f64>() * total;
            let tri = cumulative.partition_point(|&c| c < target).min(self.triangles.len() - 1);
            let [a, b, c] = self.corners(tri);
            // Uniform barycentric sample; fold the parallelogram half over.
            let mut u = rng.random::<f64>();
            let mut v = rng.random::<f64>();
            if u + v > 1.0 {
                u = 1.0 - u;
                v = 1.0 - v;
            }
            let w = 1.0 - u - v;
            points.push(a * w + b * u + c * v);
            normals.push(self.face_normal(tri));
            if let Some(out) = colors.as_mut() {
                let vc = self.vertex_colors.as_ref().unwrap();
                let [ia, ib, ic] = self.triangles[tri];
                let ca = vc[ia as usize];
                let cb = vc[ib as usize];
                let cc = vc[ic as usize];
                out.push([
                    (ca[0] as f64 * w + cb[0] as f64 * u + cc[0] as f64 * v) as f32,
                    (ca[1] as f64 * w + cb[1] as f64 * u + cc[1] as f64 * v) as f32,
                    (ca[2] as f64 * w + cb[2] as f64 * u + cc[2] as f64 * v) as f32,
                ]);
            }
        }
        Ok(PointCloud {
            points,
            colors,
            normals: Some(normals),
        })
    }
}

// ---------------------------------------------------------------------------
// Cameras
// ---------------------------------------------------------------------------

/// Continuous pixel coordinates; the center of integer pixel (ix, iy) is
/// (ix + 0.5, iy + 0.5).
#[derive(Clone, Copy, Debug, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Pixel2 {
    pub u: f64,
    pub v: f64,
}

impl Pixel2 {
    #[inline]
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    /// Center of the integer pixel (ix, iy).
    #[inline]
    pub fn center_of(ix: u32, iy: u32) -> Self {
        Self::new(ix as f64 + 0.5, iy as f64 + 0.5)
    }
}

/// Depth below which a point counts as behind the camera and is culled.
pub const CULL_EPSILON: f64 = 1e-8;

/// Pinhole camera: intrinsics plus a rigid camera-to-world transform.
///
/// Camera frame: +Z forward, +X right, +Y down, pixel origin top-left.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PinholeCamera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub world_from_camera: RigidTransform,
}

impl PinholeCamera {
    /// Validates intrinsics and the rotation (orthonormal, det +1, both
    /// within 1e-6).
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
        world_from_camera: RigidTransform,
    ) -> Result<Self, Error> {
        let cam = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            world_from_camera,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !(self.fx.is_finite() && self.fy.is_finite() && self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidInput(alloc::string::String::from(
                "focal lengths must be finite and positive",
            )));
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) || self.width == 0 || self.height == 0 {
            return Err(Error::InvalidInput(alloc::string::String::from(
                "principal point must be finite and image size nonzero",
            )));
        }
        if !self.world_from_camera.translation.is_finite()
            || self.world_from_camera.rotation.rotation_defect() > 1e-6
        {
            return Err(Error::NonOrthonormal);
        }
        Ok(())
    }

    /// Inverse extrinsics, `p_cam = R^T (p_world - t)`.
    #[inline]
    pub fn camera_from_world(&self) -> RigidTransform {
        self.world_from_camera.inverse()
    }

    /// Camera center in world coordinates.
    #[inline]
    pub fn position(&self) -> Vec3 {
        self.world_from_camera.translation
    }

    #[inline]
    pub fn contains(&self, px: Pixel2) -> bool {
        px.u >= 0.0 && px.v >= 0.0 && px.u < self.width as f64 && px.v < self.height as f64
    }
}

/// Projects a camera-frame point; `None` when it lies at or behind the
/// near-zero plane (Z <= [`CULL_EPSILON`]).
#[inline]
pub fn project_camera_point(cam: &PinholeCamera, p_cam: Vec3) -> Option<Pixel2> {
    if p_cam.z <= CULL_EPSILON {
        return None;
    }
    Some(Pixel2::new(
        cam.fx * p_cam.x / p_cam.z + cam.cx,
        cam.fy * p_cam.y / p_cam.z + cam.cy,
    ))
}

/// Projects a world-space point through the camera; `None` when culled.
///
/// The result may fall outside the image bounds; callers clip as needed.
#[inline]
pub fn project(cam: &PinholeCamera, p_world: Vec3) -> Option<Pixel2> {
    project_camera_point(cam, cam.camera_from_world().apply(p_world))
}

/// Lifts a pixel at the given camera-frame depth back to a world-space point.
///
/// Inverse of [`project`]: `project(cam, unproject(cam, px, d)?)` returns
/// `px` within 1e-6 px for depths in [1e-3, 1e3].
#[inline]
pub fn unproject(cam: &PinholeCamera, px: Pixel2, depth: f64) -> Result<Point3, Error> {
    if !(depth.is_finite() && depth > 0.0) {
        return Err(Error::InvalidDepth(depth));
    }
    let p_cam = Vec3::new(
        (px.u - cam.cx) / cam.fx * depth,
        (px.v - cam.cy) / cam.fy * depth,
        depth,
    );
    Ok(cam.world_from_camera.apply(p_cam))
}

// ---------------------------------------------------------------------------
// Similarity poses
// ---------------------------------------------------------------------------

/// Similarity pose: translation, axis-angle rotation, and log-scale.
///
/// Application order is scale, then rotation, then translation:
/// `p' = exp(log_scale) * R(rotation) * p + translation`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PoseParams {
    pub translation: Vec3,
    pub rotation: Vec3,
    pub log_scale: f64,
}

impl PoseParams {
    pub const IDENTITY: Self = Self {
        translation: Vec3::ZERO,
        rotation: Vec3::ZERO,
        log_scale: 0.0,
    };

    #[inline]
    pub fn scale(&self) -> f64 {
        self.log_scale.exp()
    }

    /// Materializes the pose for repeated application.
    #[inline]
    pub fn to_transform(&self) -> PoseTransform {
        PoseTransform {
            scale: self.scale(),
            rotation: rotation_from_axis_angle(self.rotation),
            translation: self.translation,
        }
    }

    /// Flat parameter vector (translation, rotation, log_scale), the layout
    /// shared with gradient vectors.
    #[inline]
    pub fn to_vector(&self) -> [f64; 7] {
        [
            self.translation.x,
            self.translation.y,
            self.translation.z,
            self.rotation.x,
            self.rotation.y,
            self.rotation.z,
            self.log_scale,
        ]
    }

    #[inline]
    pub fn from_vector(v: &[f64; 7]) -> Self {
        Self {
            translation: Vec3::new(v[0], v[1], v[2]),
            rotation: Vec3::new(v[3], v[4], v[5]),
            log_scale: v[6],
        }
    }
}

/// Materialized similarity transform `p -> s R p + t`.
#[derive(Clone, Copy, Debug)]
pub struct PoseTransform {
    pub scale: f64,
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl PoseTransform {
    #[inline]
    pub fn apply(&self, p: Vec3) -> Vec3 {
        self.rotation * (p * self.scale) + self.translation
    }

    /// Row-major 4x4 homogeneous matrix of the similarity.
    pub fn to_matrix_rows(&self) -> [f64; 16] {
        let r = &self.rotation.m;
        let s = self.scale;
        let t = self.translation;
        [
            r[0][0] * s, r[0][1] * s, r[0][2] * s, t.x,
            r[1][0] * s, r[1][1] * s, r[1][2] * s, t.y,
            r[2][0] * s, r[2][1] * s, r[2][2] * s, t.z,
            0.0, 0.0, 0.0, 1.0,
        ]
    }
}

/// Applies a similarity pose to a cloud: scale, rotate, then translate.
///
/// Normals, when present, are rotated only (valid because the scale is
/// uniform); colors pass through. Errors with `EmptyInput` on empty clouds.
pub fn apply_pose(pose: &PoseParams, cloud: &PointCloud) -> Result<PointCloud, Error> {
    if cloud.is_empty() {
        return Err(Error::EmptyInput("point cloud"));
    }
    let t = pose.to_transform();
    Ok(PointCloud {
        points: cloud.points.iter().map(|&p| t.apply(p)).collect(),
        colors: cloud.colors.clone(),
        normals: cloud
            .normals
            .as_ref()
            .map(|ns| ns.iter().map(|&n| t.rotation * n).collect()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn assert_vec3_eq(a: Vec3, b: Vec3, eps: f64) {
        assert_relative_eq!(a.x, b.x, epsilon = eps, max_relative = eps);
        assert_relative_eq!(a.y, b.y, epsilon = eps, max_relative = eps);
        assert_relative_eq!(a.z, b.z, epsilon = eps, max_relative = eps);
    }

    #[test]
    fn rodrigues_matches_known_rotations() {
        // 90 degrees around Z maps X to Y.
        let r = rotation_from_axis_angle(Vec3::new(0.0, 0.0, core::f64::consts::FRAC_PI_2));
        assert_vec3_eq(r * Vec3::X, Vec3::Y, 1e-12);
        // 180 degrees around X maps Y to -Y.
        let r = rotation_from_axis_angle(Vec3::new(core::f64::consts::PI, 0.0, 0.0));
        assert_vec3_eq(r * Vec3::Y, -Vec3::Y, 1e-12);
        // Zero rotation is the identity.
        let r = rotation_from_axis_angle(Vec3::ZERO);
        assert_eq!(r, Mat3::IDENTITY);
    }

    #[test]
    fn rodrigues_is_a_rotation_for_random_axes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let r = Vec3::new(
                rng.random_range(-4.0..4.0),
                rng.random_range(-4.0..4.0),
                rng.random_range(-4.0..4.0),
            );
            let m = rotation_from_axis_angle(r);
            assert!(m.rotation_defect() < 1e-12);
        }
    }

    #[test]
    fn rodrigues_series_branch_matches_stable_closed_form() {
        // On either side of the series threshold, compare against the
        // closed form written with the cancellation-free half-angle
        // identity b = 2 sin^2(t/2) / t^2.
        let axis = Vec3::new(1.0, 2.0, -0.5).normalized().unwrap();
        for theta in [0.2e-4, 0.99e-4, 1.01e-4, 5e-4] {
            let r = axis * theta;
            let got = rotation_from_axis_angle(r);
            let a = theta.sin() / theta;
            let s = (theta / 2.0).sin() / theta;
            let b = 2.0 * s * s;
            let k = Mat3::skew(r);
            let reference = Mat3::IDENTITY + k * a + (k * k) * b;
            for i in 0..3 {
                for j in 0..3 {
                    assert_abs_diff_eq!(got.m[i][j], reference.m[i][j], epsilon = 1e-13);
                }
            }
        }
    }

    #[test]
    fn rotation_jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-6;
        for trial in 0..50 {
            // Include tiny angles to exercise the limit branch.
            let scale = if trial % 10 == 0 { 1e-9 } else { 2.0 };
            let r = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ) * scale;
            let v = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let jac = rotation_jacobian(r);
            for k in 0..3 {
                let mut rp = r;
                let mut rm = r;
                match k {
                    0 => {
                        rp.x += h;
                        rm.x -= h;
                    }
                    1 => {
                        rp.y += h;
                        rm.y -= h;
                    }
                    _ => {
                        rp.z += h;
                        rm.z -= h;
                    }
                }
                let fd = (rotation_from_axis_angle(rp) * v - rotation_from_axis_angle(rm) * v)
                    * (1.0 / (2.0 * h));
                let an = jac[k] * v;
                assert_vec3_eq(an, fd, 1e-6);
            }
        }
    }

    #[test]
    fn apply_pose_scales_rotates_then_translates() {
        // T=(1,0,0), r=(0,0,pi/2), logS=ln 2 maps (1,0,0) -> (1,2,0).
        let pose = PoseParams {
            translation: Vec3::X,
            rotation: Vec3::new(0.0, 0.0, core::f64::consts::FRAC_PI_2),
            log_scale: 2.0f64.ln(),
        };
        let cloud = PointCloud::new(vec![Vec3::X]);
        let out = apply_pose(&pose, &cloud).unwrap();
        assert_vec3_eq(out.points[0], Vec3::new(1.0, 2.0, 0.0), 1e-12);
    }

    #[test]
    fn apply_pose_rejects_empty_cloud() {
        let e = apply_pose(&PoseParams::IDENTITY, &PointCloud::new(vec![])).unwrap_err();
        assert!(matches!(e, Error::EmptyInput(_)));
    }

    #[test]
    fn apply_pose_rotates_normals_without_scaling() {
        let pose = PoseParams {
            translation: Vec3::new(3.0, -1.0, 2.0),
            rotation: Vec3::new(0.3, -0.2, 0.9),
            log_scale: 1.2,
        };
        let mut cloud = PointCloud::new(vec![Vec3::X, Vec3::Y]);
        cloud.normals = Some(vec![Vec3::Z, Vec3::X]);
        let out = apply_pose(&pose, &cloud).unwrap();
        for n in out.normals.as_ref().unwrap() {
            assert_relative_eq!(n.norm(), 1.0, epsilon = 1e-12);
        }
    }

    fn test_camera() -> PinholeCamera {
        PinholeCamera::new(
            500.0,
            480.0,
            320.0,
            240.0,
            640,
            480,
            look_at(Vec3::new(0.4, -0.3, -3.0), Vec3::ZERO, Vec3::Y),
        )
        .unwrap()
    }

    #[test]
    fn camera_rejects_non_orthonormal_rotation() {
        let mut wfc = RigidTransform::IDENTITY;
        wfc.rotation.m[0][0] = 1.5;
        let e = PinholeCamera::new(500.0, 500.0, 320.0, 240.0, 640, 480, wfc).unwrap_err();
        assert_eq!(e, Error::NonOrthonormal);
    }

    #[test]
    fn principal_ray_hits_principal_point() {
        let cam = PinholeCamera::new(
            500.0,
            500.0,
            320.0,
            240.0,
            640,
            480,
            RigidTransform::IDENTITY,
        )
        .unwrap();
        let px = project(&cam, Vec3::new(0.0, 0.0, 2.0)).unwrap();
        assert_relative_eq!(px.u, 320.0, epsilon = 1e-12);
        assert_relative_eq!(px.v, 240.0, epsilon = 1e-12);
    }

    #[test]
    fn points_behind_camera_are_culled() {
        let cam = PinholeCamera::new(
            500.0,
            500.0,
            320.0,
            240.0,
            640,
            480,
            RigidTransform::IDENTITY,
        )
        .unwrap();
        assert!(project(&cam, Vec3::new(0.0, 0.0, -1.0)).is_none());
        assert!(project(&cam, Vec3::new(0.0, 0.0, 0.0)).is_none());
        assert!(project(&cam, Vec3::new(0.0, 0.0, 1e-9)).is_none());
    }

    #[test]
    fn unproject_rejects_invalid_depth() {
        let cam = test_camera();
        assert!(matches!(
            unproject(&cam, Pixel2::new(10.0, 10.0), 0.0),
            Err(Error::InvalidDepth(_))
        ));
        assert!(matches!(
            unproject(&cam, Pixel2::new(10.0, 10.0), -2.0),
            Err(Error::InvalidDepth(_))
        ));
    }

    #[test]
    fn project_unproject_round_trip_across_depth_range() {
        let cam = test_camera();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let px = Pixel2::new(
                rng.random_range(0.0..cam.width as f64),
                rng.random_range(0.0..cam.height as f64),
            );
            // Log-uniform depth over [1e-3, 1e3].
            let depth = 10f64.powf(rng.random_range(-3.0..3.0));
            let p = unproject(&cam, px, depth).unwrap();
            let back = project(&cam, p).expect("unprojected point must be in front");
            assert!(
                (back.u - px.u).abs() < 1e-6 && (back.v - px.v).abs() < 1e-6,
                "round trip drifted: ({}, {}) vs ({}, {}) at depth {depth}",
                back.u,
                back.v,
                px.u,
                px.v
            );
        }
    }

    #[test]
    fn identity_camera_unprojects_principal_point_to_axis() {
        let cam = PinholeCamera::new(
            500.0,
            500.0,
            320.0,
            240.0,
            640,
            480,
            RigidTransform::IDENTITY,
        )
        .unwrap();
        let p = unproject(&cam, Pixel2::new(320.0, 240.0), 2.5).unwrap();
        assert_vec3_eq(p, Vec3::new(0.0, 0.0, 2.5), 1e-12);
    }

    #[test]
    fn look_at_centers_target_and_keeps_up_up() {
        let eye = Vec3::new(0.0, 0.0, -5.0);
        let cam = PinholeCamera::new(400.0, 400.0, 128.0, 128.0, 256, 256, look_at(eye, Vec3::ZERO, Vec3::Y))
            .unwrap();
        let center = project(&cam, Vec3::ZERO).unwrap();
        assert_relative_eq!(center.u, 128.0, epsilon = 1e-9);
        assert_relative_eq!(center.v, 128.0, epsilon = 1e-9);
        // A point above the target must land above the image center.
        let above = project(&cam, Vec3::new(0.0, 1.0, 0.0)).unwrap();
        assert!(above.v < 128.0);
        // Rotation is proper.
        assert!(cam.world_from_camera.rotation.rotation_defect() < 1e-12);
    }

    #[test]
    fn look_at_handles_view_parallel_to_up() {
        let t = look_at(Vec3::new(0.0, 5.0, 0.0), Vec3::ZERO, Vec3::Y);
        assert!(t.rotation.rotation_defect() < 1e-12);
    }

    #[test]
    fn rigid_inverse_round_trips() {
        let t = look_at(Vec3::new(1.0, 2.0, 3.0), Vec3::new(-2.0, 0.5, 1.0), Vec3::Y);
        let p = Vec3::new(0.3, -1.2, 2.2);
        assert_vec3_eq(t.inverse().apply(t.apply(p)), p, 1e-12);
        let m = t.to_matrix_rows();
        let t2 = RigidTransform::from_matrix_rows(&m).unwrap();
        assert_vec3_eq(t2.apply(p), t.apply(p), 1e-12);
    }

    #[test]
    fn sym_eigen_recovers_planar_normal() {
        // Scatter of points spread in X and Y only: smallest eigenvector is Z.
        let m = Mat3::from_rows([4.0, 0.2, 0.0], [0.2, 3.0, 0.0], [0.0, 0.0, 1e-4]);
        let (vals, vecs) = sym_eigen(&m);
        assert!(vals[0] <= vals[1] && vals[1] <= vals[2]);
        assert_relative_eq!(vecs[0].z.abs(), 1.0, epsilon = 1e-9);
        assert_relative_eq!(vecs[0].norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn sym_eigen_reconstructs_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let a = Vec3::new(rng.random(), rng.random(), rng.random());
            let b = Vec3::new(rng.random(), rng.random(), rng.random());
            // Symmetric PSD-ish matrix a a^T + b b^T.
            let mut m = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    m[i][j] = a.axis(i) * a.axis(j) + b.axis(i) * b.axis(j);
                }
            }
            let m = Mat3 { m };
            let (vals, vecs) = sym_eigen(&m);
            for k in 0..3 {
                let mv = m * vecs[k];
                assert_vec3_eq(mv, vecs[k] * vals[k], 1e-8);
            }
        }
    }

    #[test]
    fn surface_sampling_is_area_weighted_and_deterministic() {
        // Two right triangles: one with area 0.5, one with area 2.0.
        let mesh = TriangleMesh::new(
            vec![
                Vec3::ZERO,
                Vec3::X,
                Vec3::Y,
                Vec3::new(10.0, 0.0, 0.0),
                Vec3::new(12.0, 0.0, 0.0),
                Vec3::new(10.0, 2.0, 0.0),
            ],
            vec![[0, 1, 2], [3, 4, 5]],
        );
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cloud = mesh.sample_surface(10_000, &mut rng).unwrap();
        let near_big = cloud.points.iter().filter(|p| p.x > 5.0).count();
        let frac = near_big as f64 / 10_000.0;
        // Expected fraction 2.0 / 2.5 = 0.8.
        assert!((frac - 0.8).abs() < 0.02, "area weighting off: {frac}");

        let mut rng2 = ChaCha8Rng::seed_from_u64(5);
        let cloud2 = mesh.sample_surface(10_000, &mut rng2).unwrap();
        assert_eq!(cloud.points, cloud2.points);
    }

    #[test]
    fn aabb_and_centroid() {
        let cloud = PointCloud::new(vec![
            Vec3::new(-1.0, 0.0, 2.0),
            Vec3::new(3.0, -2.0, 0.0),
            Vec3::new(1.0, 2.0, 4.0),
        ]);
        let bb = cloud.aabb().unwrap();
        assert_eq!(bb.min, Vec3::new(-1.0, -2.0, 0.0));
        assert_eq!(bb.max, Vec3::new(3.0, 2.0, 4.0));
        assert_vec3_eq(cloud.centroid().unwrap(), Vec3::new(1.0, 0.0, 2.0), 1e-12);
    }

    #[test]
    fn validation_catches_contract_violations() {
        let mut cloud = PointCloud::new(vec![Vec3::ZERO]);
        cloud.colors = Some(vec![[0.5, 0.5, 1.5]]);
        assert!(cloud.validate().is_err());
        cloud.colors = Some(vec![[0.5, 0.5, 1.0]]);
        assert!(cloud.validate().is_ok());
        cloud.normals = Some(vec![Vec3::new(0.5, 0.5, 0.5)]);
        assert!(cloud.validate().is_err());

        let degenerate = TriangleMesh::new(vec![Vec3::ZERO, Vec3::X, Vec3::X * 2.0], vec![[0, 1, 2]]);
        assert!(degenerate.validate().is_err());
    }
}

//! Core 3D/2D types: poses, pinhole intrinsics, meshes, and projection.
//!
//! Conventions: object-to-camera poses act as `x_cam = R * x_obj + t`; pixel
//! coordinates put integer values at pixel centers so the principal point
//! `(cx, cy)` lies on a pixel center. Mesh units are carried through verbatim;
//! diameters and metric thresholds inherit them.

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// 3D point or vector in object/camera coordinates (mesh units).
pub type Vec3 = Vector3<f64>;
/// 2D point in pixel coordinates.
pub type Pixel2 = Vector2<f64>;
/// 3x3 real matrix.
pub type Mat3 = Matrix3<f64>;

/// Depth at or below this value counts as behind the camera plane.
pub const MIN_DEPTH: f64 = 1e-12;

/// Rigid object-to-camera transform.
///
/// The rotation is kept orthonormal with determinant +1 (tolerance 1e-9,
/// checked on construction); fields are read-only to preserve that.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Mat3,
    translation: Vec3,
}

impl Pose {
    /// Builds a pose, validating the rotation and translation invariants.
    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self> {
        if !rotation.iter().all(|v| v.is_finite()) || !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidPose("non-finite component".into()));
        }
        let err = linalg::orthonormality_error(&rotation);
        if err > 1e-9 {
            return Err(Error::InvalidPose(format!(
                "rotation orthonormality error {err:.3e} exceeds 1e-9"
            )));
        }
        Ok(Self { rotation, translation })
    }

    pub fn identity() -> Self {
        Self { rotation: Mat3::identity(), translation: Vec3::zeros() }
    }

    /// Rotation followed by the given translation.
    pub fn from_axis_angle(axis: Vec3, angle: f64, translation: Vec3) -> Result<Self> {
        Ok(Self { rotation: axis_angle_to_rotation(axis, angle)?, translation })
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    /// Applies the transform to an object-space point.
    pub fn transform_point(&self, x: &Vec3) -> Vec3 {
        self.rotation * x + self.translation
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose { rotation: rt, translation: -(rt * self.translation) }
    }

    /// Returns the pose with `offset` added to the camera-frame z translation.
    pub fn with_z_offset(&self, offset: f64) -> Pose {
        Pose {
            rotation: self.rotation,
            translation: Vec3::new(self.translation.x, self.translation.y, self.translation.z + offset),
        }
    }
}

/// Pinhole camera parameters (zero skew, no distortion).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub image_width: u32,
    pub image_height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, image_width: u32, image_height: u32) -> Result<Self> {
        let k = Self { fx, fy, cx, cy, image_width, image_height };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidIntrinsics(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if self.image_width == 0 || self.image_height == 0 {
            return Err(Error::InvalidIntrinsics("image dimensions must be positive".into()));
        }
        if !(0.0 <= self.cx && self.cx < self.image_width as f64)
            || !(0.0 <= self.cy && self.cy < self.image_height as f64)
        {
            return Err(Error::InvalidIntrinsics(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, self.image_width, self.image_height
            )));
        }
        Ok(())
    }

    /// Projects a camera-frame point; errors if its depth is not positive.
    pub fn project_camera_point(&self, pc: &Vec3) -> Result<Pixel2> {
        if pc.z <= MIN_DEPTH {
            return Err(Error::NonPositiveDepth { depth: pc.z });
        }
        Ok(Pixel2::new(
            self.fx * pc.x / pc.z + self.cx,
            self.fy * pc.y / pc.z + self.cy,
        ))
    }

    /// True if a pixel lies inside the image bounds (centers-at-integers).
    pub fn contains_pixel(&self, p: &Pixel2) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x < self.image_width as f64 && p.y < self.image_height as f64
    }
}

/// Projects an object-space point through a pose and intrinsics.
///
/// The result may lie outside the image bounds; no clamping is applied.
pub fn project_point(k: &CameraIntrinsics, pose: &Pose, x: &Vec3) -> Result<Pixel2> {
    k.project_camera_point(&pose.transform_point(x))
}

/// Triangle mesh with a cached diameter.
#[derive(Debug, Clone)]
pub struct MeshModel {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    diameter: f64,
}

impl MeshModel {
    /// Validates indices and caches the exact pairwise diameter.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::InvalidMesh(format!(
                "need at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if let Some(v) = vertices.iter().find(|v| !(v.x.is_finite() && v.y.is_finite() && v.z.is_finite())) {
            return Err(Error::InvalidMesh(format!("non-finite vertex {v:?}")));
        }
        for (i, f) in faces.iter().enumerate() {
            if f.iter().any(|&ix| ix >= vertices.len()) {
                return Err(Error::InvalidMesh(format!(
                    "face {i} indexes vertex {:?} beyond {}",
                    f,
                    vertices.len()
                )));
            }
        }
        let diameter = diameter_of_points(&vertices);
        Ok(Self { vertices, faces, diameter })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    /// Maximum pairwise vertex distance, computed once at construction.
    pub fn diameter(&self) -> f64 {
        self.diameter
    }
}

/// Exact maximum pairwise Euclidean distance of a point set.
///
/// Quadratic scan; large sets are split across threads. Needs two points.
pub fn diameter_of_points(points: &[Vec3]) -> f64 {
    assert!(points.len() >= 2, "diameter needs at least two points");
    let row_max = |i: usize| -> f64 {
        let pi = points[i];
        points[i + 1..]
            .iter()
            .map(|pj| (pi - pj).norm_squared())
            .fold(0.0_f64, f64::max)
    };
    let best_sq = if points.len() > 2048 {
        use rayon::prelude::*;
        (0..points.len() - 1).into_par_iter().map(row_max).reduce(|| 0.0, f64::max)
    } else {
        (0..points.len() - 1).map(row_max).fold(0.0, f64::max)
    };
    best_sq.sqrt()
}

/// Maximum pairwise distance between mesh vertices.
pub fn mesh_diameter(mesh: &MeshModel) -> f64 {
    mesh.diameter()
}

/// The 8 corners of the mesh's axis-aligned bounding box plus its center.
///
/// Corner `i` takes the maximum coordinate on axis `a` iff bit `a` of `i` is
/// set (bit 0 = x, bit 1 = y, bit 2 = z); the box center comes last. The box
/// is computed in object coordinates as stored, without re-centering.
pub fn cuboid_keypoints(mesh: &MeshModel) -> [Vec3; 9] {
    let verts = mesh.vertices();
    let mut lo = verts[0];
    let mut hi = verts[0];
    for v in verts {
        lo = lo.inf(v);
        hi = hi.sup(v);
    }
    let pick = |bit: bool, lo: f64, hi: f64| if bit { hi } else { lo };
    let mut out = [Vec3::zeros(); 9];
    for (i, slot) in out.iter_mut().take(8).enumerate() {
        *slot = Vec3::new(
            pick(i & 1 != 0, lo.x, hi.x),
            pick(i & 2 != 0, lo.y, hi.y),
            pick(i & 4 != 0, lo.z, hi.z),
        );
    }
    out[8] = (lo + hi) / 2.0;
    out
}

/// Rodrigues rotation about `axis` by `angle` radians.
pub fn axis_angle_to_rotation(axis: Vec3, angle: f64) -> Result<Mat3> {
    let norm = axis.norm();
    if norm <= 0.0 || !norm.is_finite() {
        return Err(Error::ZeroAxis);
    }
    let u = axis / norm;
    let (s, c) = angle.sin_cos();
    let k = Mat3::new(0.0, -u.z, u.y, u.z, 0.0, -u.x, -u.y, u.x, 0.0);
    Ok(Mat3::identity() + s * k + (1.0 - c) * (k * k))
}

/// Inverse of [`axis_angle_to_rotation`]; the angle is normalized to [0, π].
///
/// For the identity rotation the axis is reported as +z with angle 0.
pub fn rotation_to_axis_angle(r: &Mat3) -> (Vec3, f64) {
    let cos_angle = ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let angle = cos_angle.acos();
    if angle < 1e-12 {
        return (Vec3::new(0.0, 0.0, 1.0), 0.0);
    }
    if std::f64::consts::PI - angle < 1e-6 {
        // near π the skew part vanishes; recover the axis from R + I
        let b = r + Mat3::identity();
        let col = (0..3)
            .max_by(|&i, &j| b.column(i).norm().total_cmp(&b.column(j).norm()))
            .unwrap();
        let axis = b.column(col).normalize().into_owned();
        return (axis, angle);
    }
    let axis = Vec3::new(
        r[(2, 1)] - r[(1, 2)],
        r[(0, 2)] - r[(2, 0)],
        r[(1, 0)] - r[(0, 1)],
    ) / (2.0 * angle.sin());
    (axis.normalize(), angle)
}

/// Axis-aligned box mesh centered at `center`, 12 triangles per subdivision
/// cell. `subdiv >= 1` splits each face into a `subdiv x subdiv` grid, which
/// gives denser vertex sets for rendering and metric tests.
pub fn make_box_mesh(center: Vec3, extent: Vec3, subdiv: usize) -> MeshModel {
    assert!(subdiv >= 1);
    assert!(extent.x > 0.0 && extent.y > 0.0 && extent.z > 0.0);
    let half = extent / 2.0;
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    // one grid per box face: (fixed axis, sign)
    for axis in 0..3 {
        for &sign in &[-1.0_f64, 1.0] {
            let (ua, va) = match axis {
                0 => (1, 2),
                1 => (0, 2),
                _ => (0, 1),
            };
            let base = vertices.len();
            for i in 0..=subdiv {
                for j in 0..=subdiv {
                    let fu = -1.0 + 2.0 * i as f64 / subdiv as f64;
                    let fv = -1.0 + 2.0 * j as f64 / subdiv as f64;
                    let mut p = Vec3::zeros();
                    p[axis] = sign * half[axis];
                    p[ua] = fu * half[ua];
                    p[va] = fv * half[va];
                    vertices.push(center + p);
                }
            }
            let stride = subdiv + 1;
            for i in 0..subdiv {
                for j in 0..subdiv {
                    let a = base + i * stride + j;
                    let b = a + 1;
                    let c = a + stride;
                    let d = c + 1;
                    faces.push([a, b, d]);
                    faces.push([a, d, c]);
                }
            }
        }
    }
    MeshModel::new(vertices, faces).expect("box mesh is always valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_cube() -> MeshModel {
        let vertices = (0..8)
            .map(|i| {
                Vec3::new(
                    (i & 1) as f64,
                    ((i >> 1) & 1) as f64,
                    ((i >> 2) & 1) as f64,
                )
            })
            .collect();
        // faces are irrelevant for bbox/diameter; one valid face suffices
        MeshModel::new(vertices, vec![[0, 1, 2]]).unwrap()
    }

    #[test]
    fn project_optical_axis_point() {
        let k = CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap();
        let p = project_point(&k, &Pose::identity(), &Vec3::new(0.0, 0.0, 1.0)).unwrap();
        assert_relative_eq!(p.x, 320.0);
        assert_relative_eq!(p.y, 240.0);
    }

    #[test]
    fn project_offset_point() {
        let k = CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap();
        let p = project_point(&k, &Pose::identity(), &Vec3::new(0.1, 0.0, 1.0)).unwrap();
        assert_relative_eq!(p.x, 370.0);
        assert_relative_eq!(p.y, 240.0);
    }

    #[test]
    fn project_zero_depth_fails() {
        let k = CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap();
        let pose = Pose::new(Mat3::identity(), Vec3::new(0.0, 0.0, -1.0)).unwrap();
        let err = project_point(&k, &pose, &Vec3::new(0.0, 0.0, 1.0));
        assert!(matches!(err, Err(Error::NonPositiveDepth { .. })));
    }

    #[test]
    fn projection_composition_law() {
        let k = CameraIntrinsics::new(420.0, 430.0, 200.0, 210.0, 416, 416).unwrap();
        let p1 = Pose::from_axis_angle(Vec3::new(0.3, -1.0, 0.5), 0.7, Vec3::new(0.1, 0.0, 0.2)).unwrap();
        let p2 = Pose::from_axis_angle(Vec3::new(1.0, 0.2, 0.0), -0.4, Vec3::new(0.0, 0.05, 2.0)).unwrap();
        let x = Vec3::new(0.2, -0.1, 0.4);
        let lhs = project_point(&k, &p2.compose(&p1), &x).unwrap();
        let rhs = project_point(&k, &p2, &p1.transform_point(&x)).unwrap();
        assert!((lhs - rhs).norm() < 1e-9);
    }

    #[test]
    fn cuboid_of_unit_cube() {
        let kps = cuboid_keypoints(&unit_cube());
        for (i, kp) in kps.iter().take(8).enumerate() {
            assert_relative_eq!(kp.x, (i & 1) as f64);
            assert_relative_eq!(kp.y, ((i >> 1) & 1) as f64);
            assert_relative_eq!(kp.z, ((i >> 2) & 1) as f64);
        }
        assert_relative_eq!(kps[8], Vec3::new(0.5, 0.5, 0.5));
    }

    #[test]
    fn cuboid_of_single_triangle() {
        let mesh = MeshModel::new(
            vec![Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let kps = cuboid_keypoints(&mesh);
        assert_relative_eq!(kps[8], Vec3::new(0.5, 0.5, 0.0));
        for kp in &kps[..8] {
            assert!(kp.z == 0.0);
            assert!((0.0..=1.0).contains(&kp.x) && (0.0..=1.0).contains(&kp.y));
        }
    }

    #[test]
    fn cuboid_contains_all_vertices_and_centroid_is_corner_mean() {
        let mesh = make_box_mesh(Vec3::new(0.05, -0.3, 0.12), Vec3::new(0.2, 0.1, 0.34), 3);
        let kps = cuboid_keypoints(&mesh);
        let mut lo = kps[0];
        let mut hi = kps[0];
        for kp in &kps[..8] {
            lo = lo.inf(kp);
            hi = hi.sup(kp);
        }
        for v in mesh.vertices() {
            assert!(v.x >= lo.x - 1e-12 && v.x <= hi.x + 1e-12);
            assert!(v.y >= lo.y - 1e-12 && v.y <= hi.y + 1e-12);
            assert!(v.z >= lo.z - 1e-12 && v.z <= hi.z + 1e-12);
        }
        let mean = kps[..8].iter().sum::<Vec3>() / 8.0;
        assert!((mean - kps[8]).norm() < 1e-12);
    }

    #[test]
    fn diameter_of_unit_cube() {
        // brute-force oracle over all pairs
        let mesh = unit_cube();
        let mut expect = 0.0_f64;
        for a in mesh.vertices() {
            for b in mesh.vertices() {
                expect = expect.max((a - b).norm());
            }
        }
        assert_relative_eq!(mesh.diameter(), expect);
        assert_relative_eq!(mesh.diameter(), 3.0_f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn diameter_of_two_points() {
        let d = diameter_of_points(&[Vec3::zeros(), Vec3::new(0.0, 0.0, 2.0)]);
        assert_relative_eq!(d, 2.0);
    }

    #[test]
    fn diameter_of_regular_tetrahedron() {
        // alternate cube corners form a regular tetrahedron, edge 2*sqrt(2);
        // scaling by 1/(2*sqrt(2)) makes every pair exactly 1 apart
        let scale = 1.0 / (2.0 * 2.0_f64.sqrt());
        let pts = [
            Vec3::new(1.0, 1.0, 1.0),
            Vec3::new(1.0, -1.0, -1.0),
            Vec3::new(-1.0, 1.0, -1.0),
            Vec3::new(-1.0, -1.0, 1.0),
        ]
        .map(|p| p * scale);
        assert_relative_eq!(diameter_of_points(&pts), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn axis_angle_basics() {
        let r = axis_angle_to_rotation(Vec3::new(0.0, 0.0, 1.0), 0.0).unwrap();
        assert!((r - Mat3::identity()).norm() < 1e-15);
        let r = axis_angle_to_rotation(Vec3::new(0.0, 0.0, 1.0), std::f64::consts::FRAC_PI_2).unwrap();
        let v = r * Vec3::new(1.0, 0.0, 0.0);
        assert!((v - Vec3::new(0.0, 1.0, 0.0)).norm() < 1e-12);
        assert!(axis_angle_to_rotation(Vec3::zeros(), 1.0).is_err());
    }

    #[test]
    fn mesh_diameter_bounds_box_edges() {
        let mesh = make_box_mesh(Vec3::zeros(), Vec3::new(0.3, 0.2, 0.6), 1);
        let kps = cuboid_keypoints(&mesh);
        let mut max_edge = 0.0_f64;
        for a in 0..8usize {
            for b in 0..8usize {
                // axis-aligned edges differ in exactly one bit
                if (a ^ b).count_ones() == 1 {
                    max_edge = max_edge.max((kps[a] - kps[b]).norm());
                }
            }
        }
        assert!(mesh_diameter(&mesh) >= max_edge - 1e-12);
    }
}

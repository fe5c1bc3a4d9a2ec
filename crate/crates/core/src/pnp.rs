//! Pose recovery from 2D-3D correspondences.
//!
//! The solver follows the control-point formulation: four virtual control
//! points spanning the data's principal axes, barycentric re-expression of
//! every object point, a linear system whose nullspace holds the camera-frame
//! control points, and a small set of scale-combination cases refined by
//! Gauss-Newton on the pairwise control-point distances. Planar point sets
//! fall back to three control points.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{project_point, CameraIntrinsics, Mat3, Pixel2, Pose, Vec3};
use crate::linalg::{lstsq, sym_eigen};

/// One 2D-3D pair fed to the solver.
#[derive(Debug, Clone, Copy)]
pub struct Correspondence {
    pub object_point: Vec3,
    pub image_point: Pixel2,
}

impl Correspondence {
    pub fn new(object_point: Vec3, image_point: Pixel2) -> Self {
        Self { object_point, image_point }
    }
}

/// Solver output: the pose, its pixel residual, and which scale-combination
/// case won (1, 2 or 3 nullspace vectors).
#[derive(Debug, Clone)]
pub struct PnPSolution {
    pub pose: Pose,
    pub reprojection_rms: f64,
    pub beta_case_used: u8,
}

/// Root-mean-square pixel distance between observed and reprojected points.
pub fn reprojection_rms(corrs: &[Correspondence], k: &CameraIntrinsics, pose: &Pose) -> Result<f64> {
    if corrs.is_empty() {
        return Err(Error::InvalidArgument("reprojection_rms needs at least one correspondence".into()));
    }
    let mut sum_sq = 0.0;
    for c in corrs {
        let p = project_point(k, pose, &c.object_point)?;
        sum_sq += (p - c.image_point).norm_squared();
    }
    Ok((sum_sq / corrs.len() as f64).sqrt())
}

/// Least-squares rigid alignment `dst ≈ R * src + t` via the quaternion
/// profile-matrix method. `src` must contain at least three non-collinear
/// points; the result always has determinant +1.
pub fn horn_align(src: &[Vec3], dst: &[Vec3]) -> Result<Pose> {
    if src.len() != dst.len() {
        return Err(Error::LengthMismatch { left: src.len(), right: dst.len() });
    }
    let n = src.len();
    if n < 3 {
        return Err(Error::DegenerateConfiguration(format!(
            "alignment needs at least 3 points, got {n}"
        )));
    }
    let c_src: Vec3 = src.iter().sum::<Vec3>() / n as f64;
    let c_dst: Vec3 = dst.iter().sum::<Vec3>() / n as f64;

    // collinearity check on the source cloud
    let mut cov = Mat3::zeros();
    for p in src {
        let d = p - c_src;
        cov += d * d.transpose();
    }
    let cov_eig = sym_eigen(&DMatrix::from_column_slice(3, 3, cov.as_slice()));
    if cov_eig.values[1] <= 1e-16 * cov_eig.values[2].max(f64::MIN_POSITIVE) {
        return Err(Error::DegenerateConfiguration(
            "source points are collinear or coincident".into(),
        ));
    }

    // cross-covariance S = Σ src' dst'^T
    let mut s = Mat3::zeros();
    for (p, q) in src.iter().zip(dst) {
        s += (p - c_src) * (q - c_dst).transpose();
    }
    let (sxx, sxy, sxz) = (s[(0, 0)], s[(0, 1)], s[(0, 2)]);
    let (syx, syy, syz) = (s[(1, 0)], s[(1, 1)], s[(1, 2)]);
    let (szx, szy, szz) = (s[(2, 0)], s[(2, 1)], s[(2, 2)]);
    let profile = DMatrix::from_row_slice(
        4,
        4,
        &[
            sxx + syy + szz, syz - szy,       szx - sxz,        sxy - syx,
            syz - szy,       sxx - syy - szz, sxy + syx,        szx + sxz,
            szx - sxz,       sxy + syx,       -sxx + syy - szz, syz + szy,
            sxy - syx,       szx + sxz,       syz + szy,        -sxx - syy + szz,
        ],
    );
    let eig = sym_eigen(&profile);
    // largest eigenvalue's eigenvector is the optimal unit quaternion
    let q = eig.vectors.column(3);
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    let rot = Mat3::new(
        1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z),       2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),       1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),       2.0 * (y * z + w * x),       1.0 - 2.0 * (x * x + y * y),
    );
    let t = c_dst - rot * c_src;
    Pose::new(rot, t)
}

/// Recovers a pose from `>= 4` correspondences.
///
/// Errors with `DegenerateConfiguration` for coincident/collinear object
/// points and `BehindCamera` when no scale case keeps the points in front of
/// the camera. Among the tried cases, the one with the smallest reprojection
/// RMS is returned.
pub fn epnp_solve(corrs: &[Correspondence], k: &CameraIntrinsics) -> Result<PnPSolution> {
    let n = corrs.len();
    if n < 4 {
        return Err(Error::DegenerateConfiguration(format!(
            "need at least 4 correspondences, got {n}"
        )));
    }

    // principal axes of the object points
    let centroid: Vec3 = corrs.iter().map(|c| c.object_point).sum::<Vec3>() / n as f64;
    let mut cov = Mat3::zeros();
    for c in corrs {
        let d = c.object_point - centroid;
        cov += d * d.transpose();
    }
    cov /= n as f64;
    let cov_eig = sym_eigen(&DMatrix::from_column_slice(3, 3, cov.as_slice()));
    let std = [
        cov_eig.values[2].max(0.0).sqrt(),
        cov_eig.values[1].max(0.0).sqrt(),
        cov_eig.values[0].max(0.0).sqrt(),
    ];
    let axis = |j: usize| -> Vec3 {
        let col = cov_eig.vectors.column(2 - j);
        Vec3::new(col[0], col[1], col[2])
    };
    if std[0] <= f64::MIN_POSITIVE.sqrt() {
        return Err(Error::DegenerateConfiguration("object points coincide".into()));
    }
    if std[1] < 1e-8 * std[0] {
        return Err(Error::DegenerateConfiguration("object points are collinear".into()));
    }
    let planar = std[2] < 1e-8 * std[0];
    let nc = if planar { 3 } else { 4 };

    let mut ctrl_world = vec![centroid];
    for (j, &sigma) in std.iter().enumerate().take(nc - 1) {
        ctrl_world.push(centroid + sigma * axis(j));
    }

    // barycentric coordinates of every object point
    let mut alphas = vec![vec![0.0; nc]; n];
    if planar {
        for (i, c) in corrs.iter().enumerate() {
            let d = c.object_point - centroid;
            let a1 = axis(0).dot(&d) / std[0];
            let a2 = axis(1).dot(&d) / std[1];
            alphas[i] = vec![1.0 - a1 - a2, a1, a2];
        }
    } else {
        let basis = Mat3::from_columns(&[
            std[0] * axis(0),
            std[1] * axis(1),
            std[2] * axis(2),
        ]);
        let inv = basis
            .try_inverse()
            .ok_or_else(|| Error::DegenerateConfiguration("rank-deficient control basis".into()))?;
        for (i, c) in corrs.iter().enumerate() {
            let a = inv * (c.object_point - centroid);
            alphas[i] = vec![1.0 - a.x - a.y - a.z, a.x, a.y, a.z];
        }
    }

    // 2n x 3nc projection system
    let cols = 3 * nc;
    let mut m = DMatrix::<f64>::zeros(2 * n, cols);
    for (i, c) in corrs.iter().enumerate() {
        let (u, v) = (c.image_point.x, c.image_point.y);
        for j in 0..nc {
            let a = alphas[i][j];
            m[(2 * i, 3 * j)] = a * k.fx;
            m[(2 * i, 3 * j + 2)] = a * (k.cx - u);
            m[(2 * i + 1, 3 * j + 1)] = a * k.fy;
            m[(2 * i + 1, 3 * j + 2)] = a * (k.cy - v);
        }
    }
    let mtm = m.transpose() * &m;
    let eig = sym_eigen(&mtm);

    // nullspace basis: 4 eigenvectors with the smallest eigenvalues, each a
    // stack of nc candidate control points
    let basis_count = 4.min(cols);
    let mut basis: Vec<Vec<Vec3>> = Vec::with_capacity(basis_count);
    for b in 0..basis_count {
        let col = eig.vectors.column(b);
        basis.push(
            (0..nc)
                .map(|j| Vec3::new(col[3 * j], col[3 * j + 1], col[3 * j + 2]))
                .collect(),
        );
    }

    let mut pairs = Vec::new();
    for a in 0..nc {
        for b in (a + 1)..nc {
            pairs.push((a, b));
        }
    }
    let d2: Vec<f64> = pairs
        .iter()
        .map(|&(a, b)| (ctrl_world[a] - ctrl_world[b]).norm_squared())
        .collect();
    // per pair, the control-point difference of each basis vector
    let dv: Vec<Vec<Vec3>> = pairs
        .iter()
        .map(|&(a, b)| basis.iter().map(|bv| bv[a] - bv[b]).collect())
        .collect();

    let max_case = if planar { 2 } else { 3 };
    let mut best: Option<(f64, Pose, u8)> = None;
    let mut saw_behind = false;

    for case in 1..=max_case {
        let Some(mut betas) = initial_betas(case, &dv, &d2) else { continue };
        refine_betas(&mut betas, &dv, &d2);

        // camera-frame control points for this case
        let mut ctrl_cam: Vec<Vec3> = (0..nc)
            .map(|j| {
                betas
                    .iter()
                    .enumerate()
                    .map(|(mi, &beta)| beta * basis[mi][j])
                    .sum()
            })
            .collect();
        let mean_depth: f64 = corrs
            .iter()
            .enumerate()
            .map(|(i, _)| {
                (0..nc).map(|j| alphas[i][j] * ctrl_cam[j].z).sum::<f64>()
            })
            .sum::<f64>()
            / n as f64;
        if mean_depth == 0.0 {
            continue;
        }
        if mean_depth < 0.0 {
            for p in &mut ctrl_cam {
                *p = -*p;
            }
        }
        let Ok(pose) = horn_align(&ctrl_world, &ctrl_cam) else { continue };
        match reprojection_rms(corrs, k, &pose) {
            Ok(rms) => {
                if best.as_ref().is_none_or(|(b, _, _)| rms < *b) {
                    best = Some((rms, pose, case as u8));
                }
            }
            Err(Error::NonPositiveDepth { .. }) => {
                saw_behind = true;
                continue;
            }
            Err(e) => return Err(e),
        }
    }

    match best {
        Some((rms, pose, case)) => Ok(PnPSolution { pose, reprojection_rms: rms, beta_case_used: case }),
        None if saw_behind => Err(Error::BehindCamera),
        None => Err(Error::DegenerateConfiguration(
            "no scale case produced a usable pose".into(),
        )),
    }
}

/// Linearized seed for the scale coefficients of a given case.
fn initial_betas(case: usize, dv: &[Vec<Vec3>], d2: &[f64]) -> Option<Vec<f64>> {
    let np = dv.len();
    match case {
        1 => {
            let mut num = 0.0;
            let mut den = 0.0;
            for (p, &dsq) in d2.iter().enumerate() {
                let nv = dv[p][0].norm_squared();
                num += nv * dsq;
                den += nv * nv;
            }
            if den <= 0.0 {
                return None;
            }
            Some(vec![(num / den).max(0.0).sqrt()])
        }
        2 => {
            // unknowns [b11, b12, b22]
            let mut a = DMatrix::<f64>::zeros(np, 3);
            let mut rhs = DVector::<f64>::zeros(np);
            for p in 0..np {
                let (va, vb) = (dv[p][0], dv[p][1]);
                a[(p, 0)] = va.norm_squared();
                a[(p, 1)] = 2.0 * va.dot(&vb);
                a[(p, 2)] = vb.norm_squared();
                rhs[p] = d2[p];
            }
            let y = lstsq(&a, &rhs);
            let b1 = y[0].abs().sqrt();
            let b2 = y[1].signum() * y[2].abs().sqrt();
            Some(vec![b1, b2])
        }
        3 => {
            // unknowns [b11, b12, b13, b22, b23, b33]
            if np < 6 {
                return None;
            }
            let mut a = DMatrix::<f64>::zeros(np, 6);
            let mut rhs = DVector::<f64>::zeros(np);
            for p in 0..np {
                let (va, vb, vc) = (dv[p][0], dv[p][1], dv[p][2]);
                a[(p, 0)] = va.norm_squared();
                a[(p, 1)] = 2.0 * va.dot(&vb);
                a[(p, 2)] = 2.0 * va.dot(&vc);
                a[(p, 3)] = vb.norm_squared();
                a[(p, 4)] = 2.0 * vb.dot(&vc);
                a[(p, 5)] = vc.norm_squared();
                rhs[p] = d2[p];
            }
            let y = lstsq(&a, &rhs);
            let b1 = y[0].abs().sqrt();
            let b2 = y[1].signum() * y[3].abs().sqrt();
            let b3 = y[2].signum() * y[5].abs().sqrt();
            Some(vec![b1, b2, b3])
        }
        _ => None,
    }
}

/// Gauss-Newton on the squared pairwise control-point distances.
///
/// At most 10 iterations, stopping when the step norm drops below 1e-12.
fn refine_betas(betas: &mut [f64], dv: &[Vec<Vec3>], d2: &[f64]) {
    let np = dv.len();
    let nb = betas.len();
    for _ in 0..10 {
        let mut jac = DMatrix::<f64>::zeros(np, nb);
        let mut res = DVector::<f64>::zeros(np);
        for p in 0..np {
            let combined: Vec3 = dv[p]
                .iter()
                .take(nb)
                .enumerate()
                .map(|(mi, v)| betas[mi] * v)
                .sum();
            res[p] = combined.norm_squared() - d2[p];
            for mi in 0..nb {
                jac[(p, mi)] = 2.0 * combined.dot(&dv[p][mi]);
            }
        }
        let step = lstsq(&jac, &(-res));
        for (b, s) in betas.iter_mut().zip(step.iter()) {
            *b += s;
        }
        if step.norm() < 1e-12 {
            break;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{cuboid_keypoints, make_box_mesh, rotation_to_axis_angle};
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn test_intrinsics() -> CameraIntrinsics {
        CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap()
    }

    fn rotation_angle_between(a: &Mat3, b: &Mat3) -> f64 {
        rotation_to_axis_angle(&(a.transpose() * b)).1
    }

    fn random_rotation(rng: &mut impl Rng) -> Mat3 {
        // uniform rotation from a normalized 4-normal quaternion
        let q: [f64; 4] = std::array::from_fn(|_| {
            rand_distr::StandardNormal.sample_iter(&mut *rng).next().unwrap()
        });
        let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        let (w, x, y, z) = (q[0] / norm, q[1] / norm, q[2] / norm, q[3] / norm);
        Mat3::new(
            1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z),       2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),       1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),       2.0 * (y * z + w * x),       1.0 - 2.0 * (x * x + y * y),
        )
    }

    #[test]
    fn rms_exact_is_zero() {
        let k = test_intrinsics();
        let pose = Pose::new(Mat3::identity(), Vec3::new(0.0, 0.0, 5.0)).unwrap();
        let corrs: Vec<Correspondence> = cuboid_keypoints(&make_box_mesh(Vec3::zeros(), Vec3::new(1.0, 1.0, 1.0), 1))
            .iter()
            .map(|x| Correspondence::new(*x, project_point(&k, &pose, x).unwrap()))
            .collect();
        assert!(reprojection_rms(&corrs, &k, &pose).unwrap() < 1e-9);
    }

    #[test]
    fn rms_three_four_five() {
        let k = test_intrinsics();
        let pose = Pose::new(Mat3::identity(), Vec3::new(0.0, 0.0, 5.0)).unwrap();
        let x = Vec3::new(0.1, 0.2, 0.0);
        let exact = project_point(&k, &pose, &x).unwrap();
        let corrs = [Correspondence::new(x, exact + Pixel2::new(3.0, 4.0))];
        assert_relative_eq!(reprojection_rms(&corrs, &k, &pose).unwrap(), 5.0, epsilon = 1e-12);
    }

    #[test]
    fn rms_two_points() {
        let k = test_intrinsics();
        let pose = Pose::new(Mat3::identity(), Vec3::new(0.0, 0.0, 5.0)).unwrap();
        let xs = [Vec3::new(0.1, 0.2, 0.0), Vec3::new(-0.2, 0.1, 0.1)];
        let corrs = [
            Correspondence::new(xs[0], project_point(&k, &pose, &xs[0]).unwrap()),
            Correspondence::new(xs[1], project_point(&k, &pose, &xs[1]).unwrap() + Pixel2::new(0.0, 2.0)),
        ];
        assert_relative_eq!(
            reprojection_rms(&corrs, &k, &pose).unwrap(),
            2.0_f64.sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn horn_identity() {
        let src = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
        ];
        let pose = horn_align(&src, &src).unwrap();
        assert!((pose.rotation() - Mat3::identity()).norm() < 1e-12);
        assert!(pose.translation().norm() < 1e-12);
    }

    #[test]
    fn horn_recovers_rigid_transform() {
        let src = vec![
            Vec3::new(0.3, 0.0, 0.1),
            Vec3::new(1.0, 0.2, 0.0),
            Vec3::new(0.0, 1.1, 0.4),
            Vec3::new(-0.3, 0.0, 1.0),
        ];
        let rot = crate::geometry::axis_angle_to_rotation(
            Vec3::new(0.0, 0.0, 1.0),
            30.0_f64.to_radians(),
        )
        .unwrap();
        let t = Vec3::new(1.0, 2.0, 3.0);
        let dst: Vec<Vec3> = src.iter().map(|p| rot * p + t).collect();
        let pose = horn_align(&src, &dst).unwrap();
        assert!((pose.rotation() - rot).norm() < 1e-10);
        assert!((pose.translation() - t).norm() < 1e-10);
    }

    #[test]
    fn horn_rejects_collinear() {
        let src = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(2.0, 0.0, 0.0),
        ];
        assert!(matches!(
            horn_align(&src, &src),
            Err(Error::DegenerateConfiguration(_))
        ));
    }

    #[test]
    fn epnp_exact_cuboid() {
        let k = test_intrinsics();
        let mesh = make_box_mesh(Vec3::zeros(), Vec3::new(1.0, 1.0, 1.0), 1);
        let pose = Pose::new(Mat3::identity(), Vec3::new(0.0, 0.0, 5.0)).unwrap();
        let corrs: Vec<Correspondence> = cuboid_keypoints(&mesh)
            .iter()
            .map(|x| Correspondence::new(*x, project_point(&k, &pose, x).unwrap()))
            .collect();
        let sol = epnp_solve(&corrs, &k).unwrap();
        assert!(rotation_angle_between(sol.pose.rotation(), pose.rotation()) < 1e-6);
        assert!((sol.pose.translation() - pose.translation()).norm() < 1e-6);
        assert!(sol.reprojection_rms < 1e-6);
    }

    #[test]
    fn epnp_rejects_coincident_points() {
        let k = test_intrinsics();
        let x = Vec3::new(0.1, 0.2, 0.3);
        let corrs = vec![Correspondence::new(x, Pixel2::new(100.0, 100.0)); 4];
        assert!(matches!(
            epnp_solve(&corrs, &k),
            Err(Error::DegenerateConfiguration(_))
        ));
    }

    #[test]
    fn epnp_planar_points() {
        let k = test_intrinsics();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let points: Vec<Vec3> = vec![
            Vec3::new(-0.5, -0.5, 0.0),
            Vec3::new(0.5, -0.5, 0.0),
            Vec3::new(0.5, 0.5, 0.0),
            Vec3::new(-0.5, 0.5, 0.0),
            Vec3::new(0.0, 0.2, 0.0),
            Vec3::new(-0.2, 0.1, 0.0),
        ];
        for _ in 0..20 {
            let rot = random_rotation(&mut rng);
            let t = Vec3::new(0.1, -0.1, 4.0 + rng.random::<f64>() * 4.0);
            let pose = Pose::new(rot, t).unwrap();
            if points.iter().any(|p| pose.transform_point(p).z <= 0.5) {
                continue;
            }
            let corrs: Vec<Correspondence> = points
                .iter()
                .map(|x| Correspondence::new(*x, project_point(&k, &pose, x).unwrap()))
                .collect();
            let sol = epnp_solve(&corrs, &k).unwrap();
            assert!(
                rotation_angle_between(sol.pose.rotation(), pose.rotation()) < 1e-5,
                "planar rotation error too large"
            );
            assert!((sol.pose.translation() - t).norm() / t.norm() < 1e-5);
        }
    }

    #[test]
    fn epnp_random_round_trips() {
        let k = test_intrinsics();
        let mesh = make_box_mesh(Vec3::zeros(), Vec3::new(0.2, 0.15, 0.1), 1);
        let kps = cuboid_keypoints(&mesh);
        let diam = mesh.diameter();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut tried = 0;
        while tried < 100 {
            let rot = random_rotation(&mut rng);
            let depth = diam * (4.0 + 6.0 * rng.random::<f64>());
            let t = Vec3::new(
                depth * 0.2 * (rng.random::<f64>() - 0.5),
                depth * 0.2 * (rng.random::<f64>() - 0.5),
                depth,
            );
            let pose = Pose::new(rot, t).unwrap();
            let corrs: Vec<Correspondence> = kps
                .iter()
                .map(|x| Correspondence::new(*x, project_point(&k, &pose, x).unwrap()))
                .collect();
            let sol = epnp_solve(&corrs, &k).unwrap();
            assert!(
                rotation_angle_between(sol.pose.rotation(), pose.rotation()) < 1e-4,
                "rotation error {} too large",
                rotation_angle_between(sol.pose.rotation(), pose.rotation())
            );
            assert!((sol.pose.translation() - t).norm() / t.norm() < 1e-4);
            tried += 1;
        }
    }

    #[test]
    fn epnp_noise_statistics() {
        // reference setup plus 1px Gaussian noise: the recovered pose stays
        // within 2 degrees and the residual within 3 sigma (medians, 100 draws)
        let k = test_intrinsics();
        let mesh = make_box_mesh(Vec3::new(0.5, 0.5, 0.5), Vec3::new(1.0, 1.0, 1.0), 1);
        let kps = cuboid_keypoints(&mesh);
        let pose = Pose::new(Mat3::identity(), Vec3::new(0.0, 0.0, 5.0)).unwrap();
        let exact: Vec<Pixel2> = kps
            .iter()
            .map(|x| project_point(&k, &pose, x).unwrap())
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let noise = rand_distr::Normal::new(0.0, 1.0).unwrap();
        let mut rot = Vec::new();
        let mut rms = Vec::new();
        for _ in 0..100 {
            let corrs: Vec<Correspondence> = kps
                .iter()
                .zip(&exact)
                .map(|(x, p)| {
                    Correspondence::new(
                        *x,
                        p + Pixel2::new(noise.sample(&mut rng), noise.sample(&mut rng)),
                    )
                })
                .collect();
            let sol = epnp_solve(&corrs, &k).unwrap();
            rot.push(rotation_angle_between(sol.pose.rotation(), pose.rotation()));
            rms.push(sol.reprojection_rms);
        }
        rot.sort_by(f64::total_cmp);
        rms.sort_by(f64::total_cmp);
        assert!(rot[50].to_degrees() < 2.0, "median rotation error {}", rot[50].to_degrees());
        assert!(rms[50] <= 3.0, "median rms {}", rms[50]);
    }

    #[test]
    fn epnp_scale_equivariance() {
        let k = test_intrinsics();
        let mesh = make_box_mesh(Vec3::zeros(), Vec3::new(0.2, 0.15, 0.1), 1);
        let kps = cuboid_keypoints(&mesh);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rot = random_rotation(&mut rng);
        let t = Vec3::new(0.05, -0.02, 1.5);
        let pose = Pose::new(rot, t).unwrap();
        let corrs: Vec<Correspondence> = kps
            .iter()
            .map(|x| Correspondence::new(*x, project_point(&k, &pose, x).unwrap()))
            .collect();
        let sol = epnp_solve(&corrs, &k).unwrap();

        let s = 3.7;
        let scaled_pose = Pose::new(rot, t * s).unwrap();
        let scaled: Vec<Correspondence> = kps
            .iter()
            .map(|x| {
                Correspondence::new(x * s, project_point(&k, &scaled_pose, &(x * s)).unwrap())
            })
            .collect();
        let sol_s = epnp_solve(&scaled, &k).unwrap();
        assert!(rotation_angle_between(sol.pose.rotation(), sol_s.pose.rotation()) < 1e-6);
        assert!((sol_s.pose.translation() - sol.pose.translation() * s).norm() < 1e-6 * (t.norm() * s));
    }
}

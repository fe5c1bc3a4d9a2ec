//! Pose annotations ("r r r t" rows) and key=value intrinsics files.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Mat3, Pose, Vec3};
use crate::linalg::{nearest_rotation, orthonormality_error};

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line, msg: msg.into() }
}

/// Reads a pose as three whitespace-separated rows of `r r r t` (row-major
/// rotation with the translation in the last column).
///
/// Rotations with orthonormality error up to 1e-2 are projected back onto the
/// nearest proper rotation (logged when the drift exceeds the pose
/// tolerance); anything worse is rejected.
pub fn load_pose_annotation(path: &Path) -> Result<Pose> {
    let text = fs::read_to_string(path)?;
    let rows: Vec<(usize, Vec<f64>)> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| {
            let values = l
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| parse_err(path, i + 1, format!("bad number {t:?}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok((i + 1, values))
        })
        .collect::<Result<_>>()?;
    if rows.len() != 3 {
        return Err(parse_err(path, rows.last().map_or(1, |r| r.0), format!(
            "expected 3 pose rows, found {}",
            rows.len()
        )));
    }
    let mut rot = Mat3::zeros();
    let mut t = Vec3::zeros();
    for (r, (line, values)) in rows.iter().enumerate() {
        if values.len() != 4 {
            return Err(parse_err(path, *line, format!(
                "expected 4 values per row, found {}",
                values.len()
            )));
        }
        for c in 0..3 {
            rot[(r, c)] = values[c];
        }
        t[r] = values[3];
    }

    let err = orthonormality_error(&rot);
    if err > 1e-2 {
        return Err(Error::InvalidRotation { err });
    }
    if err > 1e-9 {
        let fixed = nearest_rotation(&rot)?;
        log::warn!(
            "{}: rotation drift {err:.3e} re-orthonormalized",
            path.display()
        );
        rot = fixed;
    }
    Pose::new(rot, t)
}

/// Writes a pose in the format read by [`load_pose_annotation`]; the float
/// formatting round-trips exactly.
pub fn save_pose_annotation(pose: &Pose, path: &Path) -> Result<()> {
    let r = pose.rotation();
    let t = pose.translation();
    let mut out = String::new();
    for row in 0..3 {
        out.push_str(&format!(
            "{} {} {} {}\n",
            r[(row, 0)],
            r[(row, 1)],
            r[(row, 2)],
            t[row]
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads intrinsics from `key=value` lines: fx, fy, cx, cy, width, height.
/// `#` comments and blank lines are allowed.
pub fn load_intrinsics(path: &Path) -> Result<CameraIntrinsics> {
    let text = fs::read_to_string(path)?;
    let mut fx = None;
    let mut fy = None;
    let mut cx = None;
    let mut cy = None;
    let mut width = None;
    let mut height = None;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse_err(path, i + 1, "expected key=value"))?;
        let value = value.trim();
        let parse_f = || -> Result<f64> {
            value
                .parse()
                .map_err(|_| parse_err(path, i + 1, format!("bad number {value:?}")))
        };
        match key.trim() {
            "fx" => fx = Some(parse_f()?),
            "fy" => fy = Some(parse_f()?),
            "cx" => cx = Some(parse_f()?),
            "cy" => cy = Some(parse_f()?),
            "width" => {
                width = Some(value.parse::<u32>().map_err(|_| {
                    parse_err(path, i + 1, format!("bad width {value:?}"))
                })?)
            }
            "height" => {
                height = Some(value.parse::<u32>().map_err(|_| {
                    parse_err(path, i + 1, format!("bad height {value:?}"))
                })?)
            }
            other => return Err(parse_err(path, i + 1, format!("unknown key {other:?}"))),
        }
    }
    let missing = |what: &str| parse_err(path, 1, format!("missing key {what}"));
    CameraIntrinsics::new(
        fx.ok_or_else(|| missing("fx"))?,
        fy.ok_or_else(|| missing("fy"))?,
        cx.ok_or_else(|| missing("cx"))?,
        cy.ok_or_else(|| missing("cy"))?,
        width.ok_or_else(|| missing("width"))?,
        height.ok_or_else(|| missing("height"))?,
    )
}

/// Writes intrinsics in the format read by [`load_intrinsics`].
pub fn save_intrinsics(k: &CameraIntrinsics, path: &Path) -> Result<()> {
    fs::write(
        path,
        format!(
            "fx={}\nfy={}\ncx={}\ncy={}\nwidth={}\nheight={}\n",
            k.fx, k.fy, k.cx, k.cy, k.image_width, k.image_height
        ),
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::axis_angle_to_rotation;

    #[test]
    fn identity_pose_round_trip() {
        let f = tempfile::NamedTempFile::new().unwrap();
        fs::write(f.path(), "1 0 0 0\n0 1 0 0\n0 0 1 0\n").unwrap();
        let pose = load_pose_annotation(f.path()).unwrap();
        assert_eq!(pose.rotation(), &Mat3::identity());
        assert_eq!(pose.translation(), &Vec3::zeros());
    }

    #[test]
    fn pose_save_load_round_trip() {
        let rot = axis_angle_to_rotation(Vec3::new(0.3, -0.4, 1.0), 0.73).unwrap();
        let pose = Pose::new(rot, Vec3::new(0.0123, -4.5e-3, 1.0 / 7.0)).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        save_pose_annotation(&pose, f.path()).unwrap();
        let loaded = load_pose_annotation(f.path()).unwrap();
        for r in 0..3 {
            for c in 0..3 {
                assert!((loaded.rotation()[(r, c)] - pose.rotation()[(r, c)]).abs() < 1e-9);
            }
            assert!((loaded.translation()[r] - pose.translation()[r]).abs() < 1e-9);
        }
    }

    #[test]
    fn drifted_rotation_is_repaired() {
        let rot = axis_angle_to_rotation(Vec3::new(0.0, 1.0, 0.2), 0.5).unwrap();
        let mut drifted = rot;
        drifted[(0, 1)] += 1e-4;
        let pose_text = (0..3)
            .map(|r| format!("{} {} {} 0", drifted[(r, 0)], drifted[(r, 1)], drifted[(r, 2)]))
            .collect::<Vec<_>>()
            .join("\n");
        let f = tempfile::NamedTempFile::new().unwrap();
        fs::write(f.path(), pose_text).unwrap();
        let pose = load_pose_annotation(f.path()).unwrap();
        assert!(orthonormality_error(pose.rotation()) < 1e-9);
        assert!((pose.rotation() - rot).norm() < 1e-3);
    }

    #[test]
    fn badly_broken_rotation_rejected() {
        let f = tempfile::NamedTempFile::new().unwrap();
        fs::write(f.path(), "1 0.5 0 0\n0 1 0 0\n0 0 1 0\n").unwrap();
        assert!(matches!(
            load_pose_annotation(f.path()),
            Err(Error::InvalidRotation { .. })
        ));
    }

    #[test]
    fn two_row_pose_fails() {
        let f = tempfile::NamedTempFile::new().unwrap();
        fs::write(f.path(), "1 0 0 0\n0 1 0 0\n").unwrap();
        assert!(matches!(load_pose_annotation(f.path()), Err(Error::Parse { .. })));
    }

    #[test]
    fn intrinsics_round_trip_and_errors() {
        let k = CameraIntrinsics::new(572.4114, 573.57043, 325.2611, 242.049, 640, 480).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        save_intrinsics(&k, f.path()).unwrap();
        let loaded = load_intrinsics(f.path()).unwrap();
        assert_eq!(loaded, k);

        fs::write(f.path(), "fx=500\nfy=500\ncx=320\ncy=240\nwidth=640\n").unwrap();
        assert!(matches!(load_intrinsics(f.path()), Err(Error::Parse { .. })));

        fs::write(f.path(), "fx=-1\nfy=500\ncx=320\ncy=240\nwidth=640\nheight=480\n").unwrap();
        assert!(matches!(load_intrinsics(f.path()), Err(Error::InvalidIntrinsics(_))));
    }
}

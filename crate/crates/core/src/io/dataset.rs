//! Dataset index: per-class mesh, symmetry flag, and annotated images with
//! train/test split labels, all referenced from one TOML file.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::geometry::CameraIntrinsics;
use crate::metrics::{ClassSpec, MeshRegistry, PoseInstance};

#[derive(Debug, Deserialize)]
struct IndexFile {
    #[serde(default = "default_version")]
    version: u32,
    intrinsics: String,
    #[serde(default)]
    classes: Vec<ClassFile>,
}

fn default_version() -> u32 {
    1
}

#[derive(Debug, Deserialize)]
struct ClassFile {
    id: u32,
    name: String,
    mesh: String,
    #[serde(default)]
    symmetric: bool,
    #[serde(default)]
    images: Vec<ImageFile>,
}

#[derive(Debug, Deserialize)]
struct ImageFile {
    #[serde(default)]
    id: Option<String>,
    image: String,
    pose: String,
    #[serde(default = "default_split")]
    split: String,
}

fn default_split() -> String {
    "test".into()
}

/// One annotated image of a class.
#[derive(Debug, Clone)]
pub struct DatasetImage {
    pub id: String,
    pub image_path: PathBuf,
    pub pose_path: PathBuf,
    pub split: String,
}

/// One object class with its mesh and annotated images.
#[derive(Debug, Clone)]
pub struct DatasetClass {
    pub id: u32,
    pub name: String,
    pub mesh_path: PathBuf,
    pub symmetric: bool,
    pub images: Vec<DatasetImage>,
}

/// Validated dataset layout; every referenced file existed at load time.
#[derive(Debug, Clone)]
pub struct DatasetIndex {
    pub root: PathBuf,
    pub intrinsics_path: PathBuf,
    pub classes: Vec<DatasetClass>,
}

impl DatasetIndex {
    /// Loads and validates an index: unique class ids, unique image ids per
    /// class, and existence of every referenced file (fail-fast).
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let parsed: IndexFile = toml::from_str(&text)
            .map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))?;
        if parsed.version != 1 {
            return Err(Error::UnsupportedFormat(format!(
                "dataset index version {} (expected 1)",
                parsed.version
            )));
        }
        let root = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
        let resolve = |rel: &str| -> Result<PathBuf> {
            let p = root.join(rel);
            if !p.exists() {
                return Err(Error::Dataset(format!("missing file: {}", p.display())));
            }
            Ok(p)
        };

        let intrinsics_path = resolve(&parsed.intrinsics)?;
        let mut ids = BTreeSet::new();
        let mut classes = Vec::new();
        for class in parsed.classes {
            if !ids.insert(class.id) {
                return Err(Error::Dataset(format!("duplicate class id {}", class.id)));
            }
            let mesh_path = resolve(&class.mesh)?;
            let mut image_ids = BTreeSet::new();
            let mut images = Vec::new();
            for img in class.images {
                let image_path = resolve(&img.image)?;
                let pose_path = resolve(&img.pose)?;
                let id = img.id.unwrap_or_else(|| {
                    image_path
                        .file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_default()
                });
                if !image_ids.insert(id.clone()) {
                    return Err(Error::Dataset(format!(
                        "duplicate image id {id:?} in class {}",
                        class.name
                    )));
                }
                images.push(DatasetImage { id, image_path, pose_path, split: img.split });
            }
            classes.push(DatasetClass {
                id: class.id,
                name: class.name,
                mesh_path,
                symmetric: class.symmetric,
                images,
            });
        }
        Ok(Self { root, intrinsics_path, classes })
    }

    pub fn intrinsics(&self) -> Result<CameraIntrinsics> {
        super::load_intrinsics(&self.intrinsics_path)
    }

    /// Loads every class mesh into an evaluation registry.
    pub fn registry(&self) -> Result<MeshRegistry> {
        let mut reg = MeshRegistry::new();
        for class in &self.classes {
            reg.insert(
                class.id,
                ClassSpec {
                    name: class.name.clone(),
                    mesh: super::load_ply(&class.mesh_path)?,
                    symmetric: class.symmetric,
                },
            );
        }
        Ok(reg)
    }

    pub fn class_by_name(&self, name: &str) -> Option<&DatasetClass> {
        self.classes.iter().find(|c| c.name == name)
    }

    /// Finds an image by `<class-name>/<image-id>`.
    pub fn find_image(&self, image_ref: &str) -> Result<(&DatasetClass, &DatasetImage)> {
        let (class_name, image_id) = image_ref.split_once('/').ok_or_else(|| {
            Error::InvalidArgument(format!(
                "image reference {image_ref:?} must be <class>/<image-id>"
            ))
        })?;
        let class = self
            .class_by_name(class_name)
            .ok_or_else(|| Error::Dataset(format!("no class named {class_name:?}")))?;
        let image = class
            .images
            .iter()
            .find(|i| i.id == image_id)
            .ok_or_else(|| {
                Error::Dataset(format!("no image {image_id:?} in class {class_name:?}"))
            })?;
        Ok((class, image))
    }

    /// Pairs each ground-truth annotation in `split` with the predicted pose
    /// at `<pred_dir>/<class-name>/<image-id>.txt`.
    pub fn load_prediction_instances(
        &self,
        pred_dir: &Path,
        split: &str,
    ) -> Result<Vec<PoseInstance>> {
        let mut out = Vec::new();
        for class in &self.classes {
            for img in class.images.iter().filter(|i| i.split == split) {
                let pred_path = pred_dir.join(&class.name).join(format!("{}.txt", img.id));
                if !pred_path.exists() {
                    return Err(Error::Dataset(format!(
                        "missing prediction: {}",
                        pred_path.display()
                    )));
                }
                out.push(PoseInstance {
                    predicted: super::load_pose_annotation(&pred_path)?,
                    ground_truth: super::load_pose_annotation(&img.pose_path)?,
                    class_id: class.id,
                });
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_box_mesh, Pose, Vec3};

    fn build_fixture(dir: &Path) -> PathBuf {
        let mesh = make_box_mesh(Vec3::zeros(), Vec3::new(0.2, 0.2, 0.2), 1);
        crate::io::save_ply_ascii(&mesh, &dir.join("box.ply")).unwrap();
        let k = CameraIntrinsics::new(420.0, 420.0, 208.0, 208.0, 416, 416).unwrap();
        crate::io::save_intrinsics(&k, &dir.join("camera.txt")).unwrap();
        std::fs::create_dir_all(dir.join("rgb")).unwrap();
        std::fs::create_dir_all(dir.join("poses")).unwrap();
        image::RgbImage::new(416, 416).save(dir.join("rgb/0000.png")).unwrap();
        let pose = Pose::new(crate::geometry::Mat3::identity(), Vec3::new(0.0, 0.0, 1.5)).unwrap();
        crate::io::save_pose_annotation(&pose, &dir.join("poses/0000.txt")).unwrap();
        let index = r#"
version = 1
intrinsics = "camera.txt"

[[classes]]
id = 0
name = "box"
mesh = "box.ply"
symmetric = false

[[classes.images]]
image = "rgb/0000.png"
pose = "poses/0000.txt"
split = "test"
"#;
        let index_path = dir.join("index.toml");
        std::fs::write(&index_path, index).unwrap();
        index_path
    }

    #[test]
    fn loads_and_validates() {
        let dir = tempfile::tempdir().unwrap();
        let index_path = build_fixture(dir.path());
        let index = DatasetIndex::load(&index_path).unwrap();
        assert_eq!(index.classes.len(), 1);
        assert_eq!(index.classes[0].images[0].id, "0000");
        assert!(index.intrinsics().is_ok());
        assert_eq!(index.registry().unwrap().len(), 1);
        let (class, image) = index.find_image("box/0000").unwrap();
        assert_eq!(class.name, "box");
        assert_eq!(image.split, "test");
    }

    #[test]
    fn dangling_path_fails_fast() {
        let dir = tempfile::tempdir().unwrap();
        let index_path = build_fixture(dir.path());
        std::fs::remove_file(dir.path().join("box.ply")).unwrap();
        assert!(matches!(DatasetIndex::load(&index_path), Err(Error::Dataset(_))));
    }

    #[test]
    fn duplicate_class_id_fails() {
        let dir = tempfile::tempdir().unwrap();
        let index_path = build_fixture(dir.path());
        let mut text = std::fs::read_to_string(&index_path).unwrap();
        text.push_str("\n[[classes]]\nid = 0\nname = \"other\"\nmesh = \"box.ply\"\n");
        std::fs::write(&index_path, text).unwrap();
        assert!(matches!(DatasetIndex::load(&index_path), Err(Error::Dataset(_))));
    }

    #[test]
    fn prediction_instances_pair_up() {
        let dir = tempfile::tempdir().unwrap();
        let index_path = build_fixture(dir.path());
        let index = DatasetIndex::load(&index_path).unwrap();
        let pred_dir = dir.path().join("preds");
        std::fs::create_dir_all(pred_dir.join("box")).unwrap();
        let pose = Pose::new(crate::geometry::Mat3::identity(), Vec3::new(0.0, 0.0, 1.52)).unwrap();
        crate::io::save_pose_annotation(&pose, &pred_dir.join("box/0000.txt")).unwrap();
        let instances = index.load_prediction_instances(&pred_dir, "test").unwrap();
        assert_eq!(instances.len(), 1);
        assert!((instances[0].predicted.translation().z - 1.52).abs() < 1e-12);

        std::fs::remove_file(pred_dir.join("box/0000.txt")).unwrap();
        assert!(index.load_prediction_instances(&pred_dir, "test").is_err());
    }
}

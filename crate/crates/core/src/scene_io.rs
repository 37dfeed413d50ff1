//! Scene files and pose tables.
//!
//! A scene file is JSON with the camera intrinsics and a list of instances,
//! each naming a mesh source and a 12-number pose (row-major rotation, then
//! translation):
//!
//! ```json
//! {"camera": {"fx": 280, "fy": 280, "cx": 159.5, "cy": 119.5,
//!             "width": 320, "height": 240, "near": 0.01, "far": 10},
//!  "instances": [{"mesh": "builtin:mug", "pose": [1,0,0, 0,1,0, 0,0,1, 0,0,0.5]}]}
//! ```
//!
//! Mesh sources are `builtin:<name>` or a path to an OBJ/PLY file, relative
//! to the scene file. Meshes without a descriptor sidecar get procedural
//! descriptors; `builtin:cylinder-sym` is the cylinder with axisymmetric ones.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{axisymmetric_descriptors, procedural_descriptors};
use crate::geometry::{PinholeCamera, RigidPose};
use crate::mesh::{builtin, MeshDb, MeshId, TriMesh};
use crate::mesh_io::{load_mesh, sidecar_path};
use crate::scene::{Instance, Scene};

pub const BUILTIN_PREFIX: &str = "builtin:";

/// Builtin name of the cylinder carrying axisymmetric descriptors.
pub const SYMMETRIC_CYLINDER: &str = "cylinder-sym";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceEntry {
    pub mesh: String,
    pub pose: RigidPose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    pub camera: PinholeCamera,
    pub instances: Vec<InstanceEntry>,
}

impl SceneFile {
    pub fn read<R: Read>(input: R) -> Result<Self> {
        let file: SceneFile = serde_json::from_reader(input)?;
        file.camera.validate()?;
        Ok(file)
    }

    pub fn write<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }

    /// Loads every distinct mesh source once and builds the scene. Relative
    /// paths are resolved against `base_dir`.
    pub fn resolve(&self, base_dir: &Path) -> Result<(Scene, MeshDb)> {
        let mut db = MeshDb::new();
        let mut ids: BTreeMap<&str, MeshId> = BTreeMap::new();
        let mut scene = Scene::new(self.camera);
        for entry in &self.instances {
            let id = match ids.get(entry.mesh.as_str()) {
                Some(&id) => id,
                None => {
                    let mesh = load_source(&entry.mesh, base_dir)?;
                    let id = db.add(entry.mesh.clone(), mesh);
                    ids.insert(&entry.mesh, id);
                    id
                }
            };
            scene.instances.push(Instance {
                mesh: id,
                pose: entry.pose,
            });
        }
        scene.validate(&db)?;
        Ok((scene, db))
    }

    /// Inverse of [`SceneFile::resolve`], naming meshes by their database names.
    pub fn from_scene(scene: &Scene, meshes: &MeshDb) -> Result<Self> {
        let instances = scene
            .instances
            .iter()
            .map(|i| {
                let name = meshes.name(i.mesh).ok_or(Error::UnknownMesh(i.mesh))?;
                Ok(InstanceEntry {
                    mesh: name.to_string(),
                    pose: i.pose,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            camera: scene.camera,
            instances,
        })
    }
}

/// Mesh for a scene-file source string.
pub fn load_source(source: &str, base_dir: &Path) -> Result<TriMesh> {
    if let Some(name) = source.strip_prefix(BUILTIN_PREFIX) {
        return builtin_source(name);
    }
    let path = resolve_path(source, base_dir);
    let mesh = load_mesh(&path)?;
    if sidecar_path(&path).exists() {
        Ok(mesh)
    } else {
        procedural_descriptors(&mesh)
    }
}

/// Annotated builtin mesh by bare name.
pub fn builtin_source(name: &str) -> Result<TriMesh> {
    let unknown = || Error::invalid(format!("unknown builtin mesh '{name}'"));
    if name == SYMMETRIC_CYLINDER {
        return axisymmetric_descriptors(&builtin("cylinder").ok_or_else(unknown)?);
    }
    procedural_descriptors(&builtin(name).ok_or_else(unknown)?)
}

fn resolve_path(source: &str, base_dir: &Path) -> PathBuf {
    let p = Path::new(source);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base_dir.join(p)
    }
}

pub fn load_scene(path: &Path) -> Result<(Scene, MeshDb)> {
    let file = SceneFile::read(fs::File::open(path)?)?;
    file.resolve(path.parent().unwrap_or(Path::new(".")))
}

/// One row of a pose table.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseRecord {
    pub scene_id: String,
    pub instance_id: usize,
    pub mesh: String,
    pub gt: RigidPose,
    pub est: RigidPose,
}

fn pose_header() -> Vec<String> {
    let mut h = vec!["scene_id".to_string(), "instance_id".to_string(), "mesh".to_string()];
    h.extend((0..12).map(|k| format!("gt_{k}")));
    h.extend((0..12).map(|k| format!("est_{k}")));
    h
}

/// Pose table CSV: `scene_id, instance_id, mesh, gt_0..gt_11, est_0..est_11`.
pub fn write_pose_csv<W: Write>(records: &[PoseRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(pose_header())?;
    for r in records {
        let mut row = vec![r.scene_id.clone(), r.instance_id.to_string(), r.mesh.clone()];
        row.extend(r.gt.to_array().iter().map(|v| v.to_string()));
        row.extend(r.est.to_array().iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_pose_csv<R: Read>(input: R) -> Result<Vec<PoseRecord>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.len() != 27 {
        return Err(Error::parse("pose csv", format!("expected 27 columns, found {}", header.len())));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let ctx = || format!("row {}", i + 1);
        let nums: Vec<f64> = (3..27)
            .map(|k| {
                rec[k]
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::parse("pose csv", format!("{}: bad number in column {k}", ctx())))
            })
            .collect::<Result<_>>()?;
        let instance_id = rec[1]
            .trim()
            .parse()
            .map_err(|_| Error::parse("pose csv", format!("{}: bad instance id", ctx())))?;
        out.push(PoseRecord {
            scene_id: rec[0].to_string(),
            instance_id,
            mesh: rec[2].to_string(),
            gt: RigidPose::from_array(&nums[..12])?,
            est: RigidPose::from_array(&nums[12..])?,
        });
    }
    Ok(out)
}

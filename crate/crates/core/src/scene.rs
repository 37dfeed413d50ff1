use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PinholeCamera, RigidPose};
use crate::mesh::{MeshDb, MeshId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub mesh: MeshId,
    pub pose: RigidPose,
}

/// A camera plus placed mesh instances. Instance ids are indices into `instances`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub camera: PinholeCamera,
    pub instances: Vec<Instance>,
}

impl Scene {
    pub fn new(camera: PinholeCamera) -> Self {
        Self {
            camera,
            instances: Vec::new(),
        }
    }

    pub fn with_instance(mut self, mesh: MeshId, pose: RigidPose) -> Self {
        self.instances.push(Instance { mesh, pose });
        self
    }

    pub fn instance(&self, id: usize) -> Result<&Instance> {
        self.instances.get(id).ok_or(Error::UnknownInstance(id))
    }

    pub fn poses(&self) -> Vec<RigidPose> {
        self.instances.iter().map(|i| i.pose).collect()
    }

    pub fn validate(&self, meshes: &MeshDb) -> Result<()> {
        self.camera.validate()?;
        for inst in &self.instances {
            meshes.get(inst.mesh)?;
        }
        Ok(())
    }

    /// Same camera, only instance `id`.
    pub fn isolate(&self, id: usize) -> Result<Scene> {
        Ok(Scene {
            camera: self.camera,
            instances: vec![*self.instance(id)?],
        })
    }
}

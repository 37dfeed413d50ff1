//! C ABI over the pose refinement library.
//!
//! Objects are opaque handles created by `pr_*_new` / `pr_rasterize` and
//! released with the matching `pr_*_free`. Every fallible call returns a
//! [`PrStatus`]; on failure `pr_last_error_message` describes the error for
//! the calling thread. Poses are 12 doubles: row-major rotation, then
//! translation. Images are row-major, channel planes stacked.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use poserefine::geometry::{PinholeCamera, RigidPose};
use poserefine::gradient::Corrections;
use poserefine::image::DescriptorImage;
use poserefine::mesh::{MeshDb, TriMesh};
use poserefine::metrics::{add_error, adds_error, auc, ModelPointSet};
use poserefine::raster::{rasterize, FrameBuffers};
use poserefine::refine::{refine, RefinementConfig};
use poserefine::scene::Scene;
use poserefine::scene_io::{builtin_source, load_scene};
use poserefine::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    DataError = 3,
    NumericFailure = 4,
    Io = 5,
    Panic = 6,
}

/// Mesh database handle.
pub struct PrMeshDb(MeshDb);

/// Scene handle: camera plus posed instances.
pub struct PrScene(Scene);

/// Rasterized frame handle.
pub struct PrFrame(FrameBuffers);

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PrCamera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub near: f64,
    pub far: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PrRefineConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub lr_decay: f64,
    pub boundary_suppression: bool,
    pub mask_dilation: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> PrStatus {
    match e {
        Error::InvalidInput(_)
        | Error::UnknownInstance(_)
        | Error::UnknownMesh(_)
        | Error::BehindCamera { .. }
        | Error::UndefinedMetric(_) => PrStatus::InvalidInput,
        Error::DegenerateMatrix { .. } | Error::NumericFailure { .. } => PrStatus::NumericFailure,
        Error::Io(_) => PrStatus::Io,
        _ => PrStatus::DataError,
    }
}

fn fail(status: PrStatus, msg: impl Into<String>) -> PrStatus {
    set_error(msg.into());
    status
}

/// Runs `f`, converting errors and panics to status codes.
fn guard<F: FnOnce() -> Result<(), PrStatus>>(f: F) -> PrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PrStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(PrStatus::Panic, "internal panic"),
    }
}

trait OrStatus<T> {
    fn or_status(self) -> Result<T, PrStatus>;
}

impl<T> OrStatus<T> for poserefine::Result<T> {
    fn or_status(self) -> Result<T, PrStatus> {
        self.map_err(|e| fail(status_of(&e), e.to_string()))
    }
}

unsafe fn deref<'a, T>(p: *const T) -> Result<&'a T, PrStatus> {
    p.as_ref().ok_or_else(|| fail(PrStatus::NullPointer, "null pointer argument"))
}

unsafe fn deref_mut<'a, T>(p: *mut T) -> Result<&'a mut T, PrStatus> {
    p.as_mut().ok_or_else(|| fail(PrStatus::NullPointer, "null pointer argument"))
}

unsafe fn slice<'a, T>(p: *const T, len: usize) -> Result<&'a [T], PrStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(PrStatus::NullPointer, "null array argument"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize) -> Result<&'a mut [T], PrStatus> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(fail(PrStatus::NullPointer, "null array argument"));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn string<'a>(p: *const c_char) -> Result<&'a str, PrStatus> {
    if p.is_null() {
        return Err(fail(PrStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(PrStatus::InvalidInput, "string is not valid UTF-8"))
}

unsafe fn pose(p: *const f64) -> Result<RigidPose, PrStatus> {
    RigidPose::from_array(slice(p, 12)?).or_status()
}

fn copy_out<T: Copy>(src: &[T], out: &mut [T]) -> Result<(), PrStatus> {
    if out.len() != src.len() {
        return Err(fail(
            PrStatus::InvalidInput,
            format!("output buffer holds {} values, {} needed", out.len(), src.len()),
        ));
    }
    out.copy_from_slice(src);
    Ok(())
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pr_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn pr_mesh_db_new() -> *mut PrMeshDb {
    Box::into_raw(Box::new(PrMeshDb(MeshDb::new())))
}

/// # Safety
/// `db` must come from `pr_mesh_db_new` (or be null) and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pr_mesh_db_free(db: *mut PrMeshDb) {
    if !db.is_null() {
        drop(Box::from_raw(db));
    }
}

/// # Safety
/// `db` must be a live handle; `count` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pr_mesh_db_len(db: *const PrMeshDb, count: *mut usize) -> PrStatus {
    guard(|| {
        *deref_mut(count)? = deref(db)?.0.len();
        Ok(())
    })
}

/// Adds a builtin mesh (`box`, `cube`, `cylinder`, `cylinder-sym`, `mug`,
/// `sphere`) with procedural descriptors.
///
/// # Safety
/// `db` must be a live handle, `name` a NUL-terminated string and `id` writable.
#[no_mangle]
pub unsafe extern "C" fn pr_mesh_db_add_builtin(db: *mut PrMeshDb, name: *const c_char, id: *mut usize) -> PrStatus {
    guard(|| {
        let db = deref_mut(db)?;
        let name = string(name)?;
        let out = deref_mut(id)?;
        let mesh = builtin_source(name).or_status()?;
        *out = db.0.add(format!("builtin:{name}"), mesh);
        Ok(())
    })
}

/// Adds a mesh from vertex positions (`3 * vertex_count`), triangle indices
/// (`3 * face_count`) and optional per-vertex descriptors
/// (`descriptor_dim * vertex_count`; pass null for zeros).
///
/// # Safety
/// Arrays must hold the stated number of elements.
#[no_mangle]
pub unsafe extern "C" fn pr_mesh_db_add_mesh(
    db: *mut PrMeshDb,
    name: *const c_char,
    vertices: *const f64,
    vertex_count: usize,
    faces: *const u32,
    face_count: usize,
    descriptors: *const f64,
    descriptor_dim: usize,
    id: *mut usize,
) -> PrStatus {
    guard(|| {
        let db = deref_mut(db)?;
        let name = string(name)?;
        let out = deref_mut(id)?;
        let v = slice(vertices, 3 * vertex_count)?;
        let f = slice(faces, 3 * face_count)?;
        let verts = v.chunks_exact(3).map(|c| nalgebra::Vector3::new(c[0], c[1], c[2])).collect();
        let tris = f.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        let mut mesh = TriMesh::new(verts, tris, descriptor_dim).or_status()?;
        if !descriptors.is_null() {
            let d = slice(descriptors, descriptor_dim * vertex_count)?;
            mesh.set_descriptors(descriptor_dim, d.to_vec()).or_status()?;
        }
        *out = db.0.add(name, mesh);
        Ok(())
    })
}

/// # Safety
/// `camera` must point to a valid `PrCamera`; `scene` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pr_scene_new(camera: *const PrCamera, scene: *mut *mut PrScene) -> PrStatus {
    guard(|| {
        let c = deref(camera)?;
        let out = deref_mut(scene)?;
        let cam = PinholeCamera::new(c.fx, c.fy, c.cx, c.cy, c.width, c.height, c.near, c.far).or_status()?;
        *out = Box::into_raw(Box::new(PrScene(Scene::new(cam))));
        Ok(())
    })
}

/// Loads a JSON scene file together with the meshes it names.
///
/// # Safety
/// `path` must be a NUL-terminated string; `scene` and `db` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pr_scene_load(path: *const c_char, scene: *mut *mut PrScene, db: *mut *mut PrMeshDb) -> PrStatus {
    guard(|| {
        let path = string(path)?;
        let out_scene = deref_mut(scene)?;
        let out_db = deref_mut(db)?;
        let (s, m) = load_scene(Path::new(path)).or_status()?;
        *out_scene = Box::into_raw(Box::new(PrScene(s)));
        *out_db = Box::into_raw(Box::new(PrMeshDb(m)));
        Ok(())
    })
}

/// # Safety
/// `scene` must come from this library (or be null) and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pr_scene_free(scene: *mut PrScene) {
    if !scene.is_null() {
        drop(Box::from_raw(scene));
    }
}

/// # Safety
/// `scene` must be live and `pose` must hold 12 doubles.
#[no_mangle]
pub unsafe extern "C" fn pr_scene_add_instance(
    scene: *mut PrScene,
    mesh: usize,
    pose12: *const f64,
    instance: *mut usize,
) -> PrStatus {
    guard(|| {
        let s = deref_mut(scene)?;
        let p = pose(pose12)?;
        let out = deref_mut(instance)?;
        s.0.instances.push(poserefine::scene::Instance { mesh, pose: p });
        *out = s.0.instances.len() - 1;
        Ok(())
    })
}

/// # Safety
/// `scene` must be live and `count` writable.
#[no_mangle]
pub unsafe extern "C" fn pr_scene_instance_count(scene: *const PrScene, count: *mut usize) -> PrStatus {
    guard(|| {
        *deref_mut(count)? = deref(scene)?.0.instances.len();
        Ok(())
    })
}

/// # Safety
/// `scene` must be live and `pose` must have room for 12 doubles.
#[no_mangle]
pub unsafe extern "C" fn pr_scene_get_pose(scene: *const PrScene, instance: usize, pose12: *mut f64) -> PrStatus {
    guard(|| {
        let s = deref(scene)?;
        let out = slice_mut(pose12, 12)?;
        let inst = s.0.instance(instance).or_status()?;
        out.copy_from_slice(&inst.pose.to_array());
        Ok(())
    })
}

/// # Safety
/// `scene` must be live and `pose` must hold 12 doubles.
#[no_mangle]
pub unsafe extern "C" fn pr_scene_set_pose(scene: *mut PrScene, instance: usize, pose12: *const f64) -> PrStatus {
    guard(|| {
        let s = deref_mut(scene)?;
        let p = pose(pose12)?;
        let n = s.0.instances.len();
        let inst = s
            .0
            .instances
            .get_mut(instance)
            .ok_or_else(|| fail(PrStatus::InvalidInput, format!("instance {instance} out of range ({n})")))?;
        inst.pose = p;
        Ok(())
    })
}

/// Renders `scene`; release the frame with `pr_frame_free`.
///
/// # Safety
/// Handles must be live and `frame` writable.
#[no_mangle]
pub unsafe extern "C" fn pr_rasterize(scene: *const PrScene, db: *const PrMeshDb, frame: *mut *mut PrFrame) -> PrStatus {
    guard(|| {
        let s = deref(scene)?;
        let m = deref(db)?;
        let out = deref_mut(frame)?;
        let fb = rasterize(&s.0, &m.0).or_status()?;
        *out = Box::into_raw(Box::new(PrFrame(fb)));
        Ok(())
    })
}

/// # Safety
/// `frame` must come from `pr_rasterize` (or be null) and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pr_frame_free(frame: *mut PrFrame) {
    if !frame.is_null() {
        drop(Box::from_raw(frame));
    }
}

/// # Safety
/// `frame` must be live; output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn pr_frame_shape(
    frame: *const PrFrame,
    width: *mut usize,
    height: *mut usize,
    descriptor_dim: *mut usize,
) -> PrStatus {
    guard(|| {
        let f = &deref(frame)?.0;
        *deref_mut(width)? = f.width();
        *deref_mut(height)? = f.height();
        *deref_mut(descriptor_dim)? = f.descriptor().dim();
        Ok(())
    })
}

/// Copies the descriptor image (`dim * width * height` doubles).
///
/// # Safety
/// `out` must have room for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pr_frame_copy_descriptor(frame: *const PrFrame, out: *mut f64, len: usize) -> PrStatus {
    guard(|| copy_out(deref(frame)?.0.descriptor().data(), slice_mut(out, len)?))
}

/// Copies the depth buffer (`width * height` doubles, infinity on background).
///
/// # Safety
/// `out` must have room for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pr_frame_copy_depth(frame: *const PrFrame, out: *mut f64, len: usize) -> PrStatus {
    guard(|| copy_out(deref(frame)?.0.depth(), slice_mut(out, len)?))
}

/// Copies instance ids (`width * height`, -1 on background).
///
/// # Safety
/// `out` must have room for `len` values.
#[no_mangle]
pub unsafe extern "C" fn pr_frame_copy_instance_ids(frame: *const PrFrame, out: *mut i32, len: usize) -> PrStatus {
    guard(|| copy_out(deref(frame)?.0.instance_ids(), slice_mut(out, len)?))
}

#[no_mangle]
pub extern "C" fn pr_refine_config_default() -> PrRefineConfig {
    let d = RefinementConfig::default();
    PrRefineConfig {
        iterations: d.iterations,
        learning_rate: d.learning_rate,
        lr_decay: d.lr_decay,
        boundary_suppression: d.corrections.boundary_suppression,
        mask_dilation: d.corrections.mask_dilation,
    }
}

/// Refines every pose of `scene` in place against an observed descriptor
/// image of the camera's size and the meshes' descriptor dimension.
/// `initial_loss` and `final_loss` may be null.
///
/// # Safety
/// Handles must be live; `observed` must hold `observed_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pr_refine(
    scene: *mut PrScene,
    db: *const PrMeshDb,
    observed: *const f64,
    observed_len: usize,
    config: *const PrRefineConfig,
    initial_loss: *mut f64,
    final_loss: *mut f64,
) -> PrStatus {
    guard(|| {
        let s = deref_mut(scene)?;
        let m = deref(db)?;
        let c = deref(config)?;
        let data = slice(observed, observed_len)?;
        let (w, h) = (s.0.camera.width, s.0.camera.height);
        let dim = match s.0.instances.first() {
            Some(i) => m.0.get(i.mesh).or_status()?.descriptor_dim(),
            None => return Err(fail(PrStatus::InvalidInput, "scene has no instances")),
        };
        let image = DescriptorImage::from_data(dim, w, h, data.to_vec()).or_status()?;
        let cfg = RefinementConfig {
            iterations: c.iterations,
            learning_rate: c.learning_rate,
            lr_decay: c.lr_decay,
            corrections: Corrections {
                boundary_suppression: c.boundary_suppression,
                mask_dilation: c.mask_dilation,
            },
            ..RefinementConfig::default()
        };
        let (refined, trace) = refine(&s.0, &m.0, &image, &cfg).or_status()?;
        s.0 = refined;
        if let Some(v) = initial_loss.as_mut() {
            *v = trace.initial_loss().unwrap_or(f64::NAN);
        }
        if let Some(v) = final_loss.as_mut() {
            *v = trace.final_loss().unwrap_or(f64::NAN);
        }
        Ok(())
    })
}

unsafe fn pose_metric(
    db: *const PrMeshDb,
    mesh: usize,
    gt: *const f64,
    est: *const f64,
    out: *mut f64,
    f: fn(&RigidPose, &RigidPose, &ModelPointSet) -> f64,
) -> PrStatus {
    guard(|| {
        let m = deref(db)?;
        let (g, e) = (pose(gt)?, pose(est)?);
        let o = deref_mut(out)?;
        let model = ModelPointSet::from_mesh(m.0.get(mesh).or_status()?).or_status()?;
        *o = f(&g, &e, &model);
        Ok(())
    })
}

/// ADD error over the vertices of `mesh`.
///
/// # Safety
/// `gt` and `est` must hold 12 doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pr_add_error(
    db: *const PrMeshDb,
    mesh: usize,
    gt: *const f64,
    est: *const f64,
    out: *mut f64,
) -> PrStatus {
    pose_metric(db, mesh, gt, est, out, add_error)
}

/// ADD-S error over the vertices of `mesh`.
///
/// # Safety
/// `gt` and `est` must hold 12 doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pr_adds_error(
    db: *const PrMeshDb,
    mesh: usize,
    gt: *const f64,
    est: *const f64,
    out: *mut f64,
) -> PrStatus {
    pose_metric(db, mesh, gt, est, out, adds_error)
}

/// Area under the accuracy-threshold curve from 0 to `max_threshold`, in percent.
///
/// # Safety
/// `errors` must hold `count` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pr_auc(errors: *const f64, count: usize, max_threshold: f64, out: *mut f64) -> PrStatus {
    guard(|| {
        let e = slice(errors, count)?;
        let o = deref_mut(out)?;
        *o = auc(e, max_threshold).or_status()?;
        Ok(())
    })
}

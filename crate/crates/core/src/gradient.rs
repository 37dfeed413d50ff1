//! Backward pass: approximate loss gradients with respect to instance poses.
//!
//! The rendered descriptor image is treated as moving rigidly with the surface
//! in screen space, so `dA(u)/dp = -grad A(u)` where `grad A` is taken with the
//! central-difference kernel `1/2 [-1, 0, 1]` (and its transpose). The
//! per-pixel screen-space field is `g(u) = sum_c upstream_c(u) * grad A_c(u)` and
//! chained through the projection and the linearized pose:
//!
//! ```text
//! dL/d(delta) = - sum_u g(u)^T * J_proj(X_cam(u)) * J_pose(X_obj(u))
//! ```
//!
//! Two boundary corrections apply:
//!
//! * pixels of an object that border a strictly nearer object get no
//!   screen-space term for their own object (moving the occluded object does
//!   not move the occlusion boundary);
//! * the instance mask is dilated by one pixel so residuals just outside the
//!   rendered silhouette reach the pose. Dilated-into pixels borrow the surface
//!   point of the adjacent instance pixel and use the unsuppressed term.

use std::ops::Deref;

use nalgebra::{RowVector6, Vector6};

use crate::error::{Error, Result};
use crate::geometry::pose_jacobian;
use crate::image::{DescriptorImage, Mask};
use crate::mesh::MeshDb;
use crate::raster::FrameBuffers;
use crate::scene::Scene;

/// Depth margin below which a neighbor does not count as occluding.
pub const OCCLUSION_DEPTH_EPS: f64 = 1e-6;

/// Upstream loss gradient with respect to the rendered descriptor image.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelGradient(DescriptorImage);

impl PixelGradient {
    pub fn new(image: DescriptorImage) -> Result<Self> {
        if image.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("pixel gradient has non-finite values"));
        }
        Ok(Self(image))
    }

    pub fn zeros(dim: usize, width: usize, height: usize) -> Self {
        Self(DescriptorImage::zeros(dim, width, height))
    }

    pub fn into_inner(self) -> DescriptorImage {
        self.0
    }
}

impl Deref for PixelGradient {
    type Target = DescriptorImage;
    fn deref(&self) -> &DescriptorImage {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryClass {
    Interior,
    BoundaryForeground,
    BoundaryOccluded,
    Background,
}

impl BoundaryClass {
    pub fn code(self) -> u8 {
        match self {
            BoundaryClass::Background => 0,
            BoundaryClass::Interior => 1,
            BoundaryClass::BoundaryForeground => 2,
            BoundaryClass::BoundaryOccluded => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryClassification {
    width: usize,
    height: usize,
    classes: Vec<BoundaryClass>,
}

impl BoundaryClassification {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn classes(&self) -> &[BoundaryClass] {
        &self.classes
    }

    pub fn get(&self, x: usize, y: usize) -> BoundaryClass {
        self.classes[y * self.width + x]
    }

    pub fn count(&self, class: BoundaryClass) -> usize {
        self.classes.iter().filter(|&&c| c == class).count()
    }

    /// Same classification with every occluded boundary pixel demoted to a
    /// foreground boundary, which disables suppression.
    pub fn without_suppression(&self) -> Self {
        let classes = self
            .classes
            .iter()
            .map(|&c| match c {
                BoundaryClass::BoundaryOccluded => BoundaryClass::BoundaryForeground,
                other => other,
            })
            .collect();
        Self {
            width: self.width,
            height: self.height,
            classes,
        }
    }

    /// Marks every pixel as an occluded boundary.
    pub fn all_occluded(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            classes: vec![BoundaryClass::BoundaryOccluded; width * height],
        }
    }
}

fn neighbors4(x: usize, y: usize, w: usize, h: usize) -> impl Iterator<Item = (usize, usize)> {
    let xs = [x.wrapping_sub(1), x + 1, x, x];
    let ys = [y, y, y.wrapping_sub(1), y + 1];
    xs.into_iter()
        .zip(ys)
        .filter(move |&(nx, ny)| nx < w && ny < h)
}

const NEIGHBORS8: [(isize, isize); 8] = [
    (-1, 0),
    (1, 0),
    (0, -1),
    (0, 1),
    (-1, -1),
    (1, -1),
    (-1, 1),
    (1, 1),
];

/// Classifies pixels by their 4-neighborhood in the instance and depth buffers.
pub fn classify_boundaries(buffers: &FrameBuffers) -> BoundaryClassification {
    let (w, h) = (buffers.width(), buffers.height());
    let ids = buffers.instance_ids();
    let depth = buffers.depth();
    let mut classes = vec![BoundaryClass::Background; w * h];
    for y in 0..h {
        for x in 0..w {
            let idx = y * w + x;
            let id = ids[idx];
            if id < 0 {
                continue;
            }
            let mut differs = false;
            let mut occluded = false;
            for (nx, ny) in neighbors4(x, y, w, h) {
                let n = ny * w + nx;
                if ids[n] != id {
                    differs = true;
                    if ids[n] >= 0 && depth[n] < depth[idx] - OCCLUSION_DEPTH_EPS {
                        occluded = true;
                    }
                }
            }
            classes[idx] = if occluded {
                BoundaryClass::BoundaryOccluded
            } else if differs {
                BoundaryClass::BoundaryForeground
            } else {
                BoundaryClass::Interior
            };
        }
    }
    BoundaryClassification {
        width: w,
        height: h,
        classes,
    }
}

/// `sum_c upstream_c(u) * grad A_c(u)` at one pixel; out-of-image neighbors
/// replicate the border pixel.
#[inline]
fn sobel_term(desc: &DescriptorImage, upstream: &DescriptorImage, x: usize, y: usize) -> [f64; 2] {
    let (w, h) = (desc.width(), desc.height());
    let n = w * h;
    let xl = x.saturating_sub(1);
    let xr = (x + 1).min(w - 1);
    let yu = y.saturating_sub(1);
    let yd = (y + 1).min(h - 1);
    let d = desc.data();
    let u = upstream.data();
    let mut g = [0.0; 2];
    for c in 0..desc.dim() {
        let off = c * n;
        let up = u[off + y * w + x];
        if up == 0.0 {
            continue;
        }
        let dx = 0.5 * (d[off + y * w + xr] - d[off + y * w + xl]);
        let dy = 0.5 * (d[off + yd * w + x] - d[off + yu * w + x]);
        g[0] += up * dx;
        g[1] += up * dy;
    }
    g
}

/// Per-pixel 2-vector field, stored row-major as `[gx, gy]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScreenGradient {
    width: usize,
    height: usize,
    data: Vec<[f64; 2]>,
}

impl ScreenGradient {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[[f64; 2]] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> [f64; 2] {
        self.data[y * self.width + x]
    }

    pub fn magnitude(&self) -> Vec<f64> {
        self.data.iter().map(|g| g[0].hypot(g[1])).collect()
    }
}

fn check_dims(buffers: &FrameBuffers, upstream: &DescriptorImage) -> Result<()> {
    buffers.descriptor().check_same_shape(upstream)
}

/// Screen-space field over the whole image. Occluded boundary and background
/// pixels are zero.
pub fn screen_space_gradient(
    buffers: &FrameBuffers,
    upstream: &PixelGradient,
    classes: &BoundaryClassification,
) -> Result<ScreenGradient> {
    check_dims(buffers, upstream)?;
    let (w, h) = (buffers.width(), buffers.height());
    if classes.width != w || classes.height != h {
        return Err(Error::invalid("classification size does not match buffers"));
    }
    let desc = buffers.descriptor();
    let mut data = vec![[0.0; 2]; w * h];
    for y in 0..h {
        for x in 0..w {
            let idx = y * w + x;
            data[idx] = match classes.classes[idx] {
                BoundaryClass::Interior | BoundaryClass::BoundaryForeground => {
                    sobel_term(desc, upstream, x, y)
                }
                BoundaryClass::BoundaryOccluded | BoundaryClass::Background => [0.0; 2],
            };
        }
    }
    Ok(ScreenGradient {
        width: w,
        height: h,
        data,
    })
}

/// Pixels whose residual is attributed to `instance`, each paired with the
/// instance pixel that supplies its surface point. Row-major order.
fn gradient_support(buffers: &FrameBuffers, instance: i32, dilate: bool) -> Vec<(usize, usize)> {
    let (w, h) = (buffers.width(), buffers.height());
    let ids = buffers.instance_ids();
    let depth = buffers.depth();
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let idx = y * w + x;
            if ids[idx] == instance {
                out.push((idx, idx));
                continue;
            }
            if !dilate {
                continue;
            }
            let source = NEIGHBORS8.iter().find_map(|&(dx, dy)| {
                let nx = x as isize + dx;
                let ny = y as isize + dy;
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    return None;
                }
                let n = ny as usize * w + nx as usize;
                (ids[n] == instance).then_some(n)
            });
            if let Some(src) = source {
                let nearer_other = ids[idx] >= 0 && depth[idx] < depth[src] - OCCLUSION_DEPTH_EPS;
                if !nearer_other {
                    out.push((idx, src));
                }
            }
        }
    }
    out
}

/// Instance mask grown by one pixel (8-connected), excluding grown-into pixels
/// owned by a nearer object.
pub fn dilated_instance_gradient_mask(buffers: &FrameBuffers, instance: i32) -> Mask {
    let mut mask = Mask::new(buffers.width(), buffers.height());
    let w = buffers.width();
    for (idx, _) in gradient_support(buffers, instance, true) {
        mask.set(idx % w, idx / w, true);
    }
    mask
}

/// Toggles for the two boundary corrections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Corrections {
    pub boundary_suppression: bool,
    pub mask_dilation: bool,
}

impl Default for Corrections {
    fn default() -> Self {
        Self {
            boundary_suppression: true,
            mask_dilation: true,
        }
    }
}

impl Corrections {
    pub const ALL: [Corrections; 4] = [
        Corrections {
            boundary_suppression: true,
            mask_dilation: true,
        },
        Corrections {
            boundary_suppression: false,
            mask_dilation: true,
        },
        Corrections {
            boundary_suppression: true,
            mask_dilation: false,
        },
        Corrections {
            boundary_suppression: false,
            mask_dilation: false,
        },
    ];

    pub fn label(&self) -> &'static str {
        match (self.boundary_suppression, self.mask_dilation) {
            (true, true) => "suppression+dilation",
            (false, true) => "dilation-only",
            (true, false) => "suppression-only",
            (false, false) => "none",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseGradient {
    /// `dL/d(delta)` ordered `(alpha, beta, gamma, a, b, c)`.
    pub gradient: Vector6<f64>,
    /// Pixels that contributed (size of the attribution mask).
    pub support_pixels: usize,
    /// True when the instance covers no pixel; the gradient is then zero.
    pub invisible: bool,
}

/// Gradient of the loss with respect to the linearized pose of `instance`.
#[allow(clippy::too_many_arguments)]
pub fn backprop_to_pose(
    buffers: &FrameBuffers,
    upstream: &PixelGradient,
    classes: &BoundaryClassification,
    scene: &Scene,
    meshes: &MeshDb,
    instance: usize,
    corrections: &Corrections,
) -> Result<PoseGradient> {
    check_dims(buffers, upstream)?;
    let inst = scene.instance(instance)?;
    let mesh = meshes.get(inst.mesh)?;
    let pose = &inst.pose;
    let cam = &scene.camera;
    let w = buffers.width();
    let id = instance as i32;
    let support = gradient_support(buffers, id, corrections.mask_dilation);
    let own = support.iter().filter(|(p, s)| p == s).count();
    if own == 0 {
        return Ok(PoseGradient {
            gradient: Vector6::zeros(),
            support_pixels: 0,
            invisible: true,
        });
    }
    let desc = buffers.descriptor();
    let faces = buffers.face_ids();
    let barys = buffers.barycentrics();
    let mut grad = Vector6::zeros();
    for &(idx, src) in &support {
        let (x, y) = (idx % w, idx / w);
        let g = if idx == src {
            match classes.classes[idx] {
                BoundaryClass::BoundaryOccluded if corrections.boundary_suppression => continue,
                _ => sobel_term(desc, upstream, x, y),
            }
        } else {
            sobel_term(desc, upstream, x, y)
        };
        if g[0] == 0.0 && g[1] == 0.0 {
            continue;
        }
        let x_obj = mesh.surface_point(faces[src] as usize, &barys[src]);
        let x_cam = pose.transform_point(&x_obj);
        let j_proj = cam.projection_jacobian_unchecked(&x_cam);
        let j = j_proj * pose_jacobian(pose, &x_obj);
        let row: RowVector6<f64> = j.row(0) * g[0] + j.row(1) * g[1];
        grad -= row.transpose();
    }
    Ok(PoseGradient {
        gradient: grad,
        support_pixels: support.len(),
        invisible: false,
    })
}

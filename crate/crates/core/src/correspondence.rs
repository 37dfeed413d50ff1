//! Real/synthetic frame pairs, pixel correspondences, and the descriptor
//! losses (contrastive with hard-negative normalization, background).
//!
//! The segmentation cross-entropy term of the combined training loss is not
//! included: it supervises a segmentation head that this crate does not have.

use std::collections::HashSet;
use std::io::{Read, Write};

use nalgebra::{Vector2, Vector3};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::RigidPose;
use crate::image::DescriptorImage;
use crate::raster::FrameBuffers;
use crate::sampling::{rng_from_seed, uniform_in, uniform_rotation};
use crate::scene::Scene;

pub const DEFAULT_MARGIN: f64 = 0.5;
pub const DEFAULT_BACKGROUND_WEIGHT: f64 = 0.1;
/// Depth agreement required for a reprojected pixel to count as visible, in meters.
pub const VISIBILITY_TOLERANCE: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pixel {
    pub x: u32,
    pub y: u32,
}

impl Pixel {
    pub fn new(x: u32, y: u32) -> Self {
        Self { x, y }
    }

    fn index(&self, width: usize) -> usize {
        self.y as usize * width + self.x as usize
    }

    fn from_index(idx: usize, width: usize) -> Self {
        Self::new((idx % width) as u32, (idx / width) as u32)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorrespondenceSet {
    pub positives: Vec<(Pixel, Pixel)>,
    pub negatives: Vec<(Pixel, Pixel)>,
    pub background_a: Vec<Pixel>,
    pub background_b: Vec<Pixel>,
    pub margin: f64,
}

impl CorrespondenceSet {
    pub fn new(margin: f64) -> Self {
        Self {
            margin,
            ..Default::default()
        }
    }

    /// Checks pixel bounds against frames of size `width x height`.
    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        if !(self.margin > 0.0) {
            return Err(Error::invalid("margin must be positive"));
        }
        let ok = |p: &Pixel| (p.x as usize) < width && (p.y as usize) < height;
        let pairs = self.positives.iter().chain(&self.negatives);
        if pairs.clone().any(|(a, b)| !ok(a) || !ok(b))
            || self.background_a.iter().chain(&self.background_b).any(|p| !ok(p))
        {
            return Err(Error::invalid("correspondence pixel out of bounds"));
        }
        Ok(())
    }

    /// CSV with columns `frame,ua_x,ua_y,ub_x,ub_y,polarity`. Pair rows use frame
    /// `AB` and polarity `+` or `-`; background rows use frame `A` or `B`,
    /// polarity `bg`, and leave the `ub` columns empty.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["frame", "ua_x", "ua_y", "ub_x", "ub_y", "polarity"])?;
        for (list, pol) in [(&self.positives, "+"), (&self.negatives, "-")] {
            for (a, b) in list {
                w.write_record([
                    "AB".to_string(),
                    a.x.to_string(),
                    a.y.to_string(),
                    b.x.to_string(),
                    b.y.to_string(),
                    pol.to_string(),
                ])?;
            }
        }
        for (list, frame) in [(&self.background_a, "A"), (&self.background_b, "B")] {
            for p in list {
                w.write_record([frame, &p.x.to_string(), &p.y.to_string(), "", "", "bg"])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R, margin: f64) -> Result<Self> {
        let mut set = CorrespondenceSet::new(margin);
        let mut r = csv::Reader::from_reader(input);
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let field = |i: usize| -> Result<u32> {
                rec.get(i)
                    .unwrap_or("")
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse("correspondence csv", format!("row {}: bad column {i}", line + 1)))
            };
            let frame = rec.get(0).unwrap_or("");
            let pol = rec.get(5).unwrap_or("");
            match (frame, pol) {
                ("AB", "+") => set
                    .positives
                    .push((Pixel::new(field(1)?, field(2)?), Pixel::new(field(3)?, field(4)?))),
                ("AB", "-") => set
                    .negatives
                    .push((Pixel::new(field(1)?, field(2)?), Pixel::new(field(3)?, field(4)?))),
                ("A", "bg") => set.background_a.push(Pixel::new(field(1)?, field(2)?)),
                ("B", "bg") => set.background_b.push(Pixel::new(field(1)?, field(2)?)),
                _ => {
                    return Err(Error::parse(
                        "correspondence csv",
                        format!("row {}: unknown frame/polarity {frame}/{pol}", line + 1),
                    ))
                }
            }
        }
        Ok(set)
    }
}

/// Region in which synthetic objects are placed: camera depth range and the
/// fraction of the image border excluded for the projected object origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewVolume {
    pub depth_min: f64,
    pub depth_max: f64,
    pub border: f64,
}

impl Default for ViewVolume {
    fn default() -> Self {
        Self {
            depth_min: 0.4,
            depth_max: 0.7,
            border: 0.15,
        }
    }
}

impl ViewVolume {
    pub fn sample_translation<R: Rng + ?Sized>(&self, scene: &Scene, rng: &mut R) -> Vector3<f64> {
        let cam = &scene.camera;
        let z = uniform_in(rng, self.depth_min, self.depth_max);
        let (w, h) = (cam.width as f64 - 1.0, cam.height as f64 - 1.0);
        let u = uniform_in(rng, self.border * w, (1.0 - self.border) * w);
        let v = uniform_in(rng, self.border * h, (1.0 - self.border) * h);
        cam.unproject(&Vector2::new(u, v), z)
    }
}

/// Synthetic counterpart of `scene_a`: same objects, each keeping its
/// orientation with probability one half (otherwise uniform on SO(3)), and a
/// freshly sampled translation.
pub fn generate_pair_scene(scene_a: &Scene, volume: &ViewVolume, seed: u64) -> Result<Scene> {
    if scene_a.instances.is_empty() {
        return Err(Error::invalid("pair generation needs a nonempty scene"));
    }
    let mut rng = rng_from_seed(seed);
    let mut out = scene_a.clone();
    for inst in &mut out.instances {
        let rotation = if rng.random_bool(0.5) {
            *inst.pose.rotation()
        } else {
            uniform_rotation(&mut rng)
        };
        let translation = volume.sample_translation(scene_a, &mut rng);
        inst.pose = RigidPose::new(rotation, translation)?;
    }
    Ok(out)
}

fn pixel_center(idx: usize, width: usize) -> Vector2<f64> {
    Vector2::new((idx % width) as f64, (idx / width) as f64)
}

/// Samples positive matches by reprojecting frame-A surface points into frame B
/// (accepting only pixels where the same instance is visible at the expected
/// depth), negative pairs among covered pixels, and all background pixels.
#[allow(clippy::too_many_arguments)]
pub fn generate_correspondences(
    buffers_a: &FrameBuffers,
    scene_a: &Scene,
    buffers_b: &FrameBuffers,
    scene_b: &Scene,
    n_pos: usize,
    n_neg: usize,
    margin: f64,
    seed: u64,
) -> Result<CorrespondenceSet> {
    if buffers_a.width() != buffers_b.width() || buffers_a.height() != buffers_b.height() {
        return Err(Error::invalid("frames have different sizes"));
    }
    let width = buffers_a.width();
    let covered = |fb: &FrameBuffers| -> Vec<usize> { (0..fb.pixel_count()).filter(|&i| fb.is_covered(i)).collect() };
    let mut covered_a = covered(buffers_a);
    let covered_b = covered(buffers_b);
    if covered_a.is_empty() || covered_b.is_empty() {
        return Err(Error::EmptyCorrespondences);
    }
    let mut rng = rng_from_seed(seed);
    let mut set = CorrespondenceSet::new(margin);

    covered_a.shuffle(&mut rng);
    let cam_b = &scene_b.camera;
    for &ia in &covered_a {
        if set.positives.len() >= n_pos {
            break;
        }
        let k = buffers_a.instance_ids()[ia] as usize;
        let (Ok(inst_a), Ok(inst_b)) = (scene_a.instance(k), scene_b.instance(k)) else {
            continue;
        };
        let x_cam_a = scene_a.camera.unproject(&pixel_center(ia, width), buffers_a.depth()[ia]);
        let x_obj = inst_a.pose.inverse_transform_point(&x_cam_a);
        let x_cam_b = inst_b.pose.transform_point(&x_obj);
        let Ok(p) = cam_b.project(&x_cam_b) else {
            continue;
        };
        let (bx, by) = (p[0].round(), p[1].round());
        if bx < 0.0 || by < 0.0 || bx >= cam_b.width as f64 || by >= cam_b.height as f64 {
            continue;
        }
        let ib = by as usize * width + bx as usize;
        if buffers_b.instance_ids()[ib] != k as i32 {
            continue;
        }
        if (buffers_b.depth()[ib] - x_cam_b[2]).abs() > VISIBILITY_TOLERANCE {
            continue;
        }
        set.positives
            .push((Pixel::from_index(ia, width), Pixel::from_index(ib, width)));
    }

    let positive_set: HashSet<(Pixel, Pixel)> = set.positives.iter().copied().collect();
    let max_attempts = n_neg.saturating_mul(10);
    let mut attempts = 0;
    while set.negatives.len() < n_neg && attempts < max_attempts {
        attempts += 1;
        let a = Pixel::from_index(covered_a[rng.random_range(0..covered_a.len())], width);
        let b = Pixel::from_index(covered_b[rng.random_range(0..covered_b.len())], width);
        if !positive_set.contains(&(a, b)) {
            set.negatives.push((a, b));
        }
    }

    let background = |fb: &FrameBuffers| -> Vec<Pixel> {
        (0..fb.pixel_count())
            .filter(|&i| !fb.is_covered(i))
            .map(|i| Pixel::from_index(i, width))
            .collect()
    };
    set.background_a = background(buffers_a);
    set.background_b = background(buffers_b);
    Ok(set)
}

fn descriptor_at(img: &DescriptorImage, p: &Pixel, out: &mut [f64]) {
    let idx = p.index(img.width());
    let n = img.pixel_count();
    for (c, o) in out.iter_mut().enumerate() {
        *o = img.data()[c * n + idx];
    }
}

fn accumulate(img: &mut DescriptorImage, p: &Pixel, scale: f64, v: &[f64]) {
    let idx = p.index(img.width());
    let n = img.pixel_count();
    let data = img.data_mut();
    for (c, &x) in v.iter().enumerate() {
        data[c * n + idx] += scale * x;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveLoss {
    pub value: f64,
    pub positive: f64,
    pub negative: f64,
    pub hard_negatives: usize,
    pub grad_a: DescriptorImage,
    pub grad_b: DescriptorImage,
}

/// Mean squared distance over positives plus the squared hinge
/// `max(0, margin - dist)^2` summed over negatives and divided by the number of
/// hard negatives (zero when there are none).
pub fn contrastive_loss(
    desc_a: &DescriptorImage,
    desc_b: &DescriptorImage,
    corr: &CorrespondenceSet,
) -> Result<ContrastiveLoss> {
    desc_a.check_same_shape(desc_b)?;
    corr.validate(desc_a.width(), desc_a.height())?;
    if corr.positives.is_empty() && corr.negatives.is_empty() {
        return Err(Error::UndefinedLoss);
    }
    let dim = desc_a.dim();
    let mut grad_a = DescriptorImage::zeros(dim, desc_a.width(), desc_a.height());
    let mut grad_b = grad_a.clone();
    let mut fa = vec![0.0; dim];
    let mut fb = vec![0.0; dim];
    let mut diff = vec![0.0; dim];

    let mut positive = 0.0;
    if !corr.positives.is_empty() {
        let inv = 1.0 / corr.positives.len() as f64;
        for (ua, ub) in &corr.positives {
            descriptor_at(desc_a, ua, &mut fa);
            descriptor_at(desc_b, ub, &mut fb);
            for c in 0..dim {
                diff[c] = fa[c] - fb[c];
            }
            positive += diff.iter().map(|d| d * d).sum::<f64>();
            accumulate(&mut grad_a, ua, 2.0 * inv, &diff);
            accumulate(&mut grad_b, ub, -2.0 * inv, &diff);
        }
        positive *= inv;
    }

    // First pass finds the hard negatives, which fixes the normalizer.
    let mut hard = Vec::new();
    for (ua, ub) in &corr.negatives {
        descriptor_at(desc_a, ua, &mut fa);
        descriptor_at(desc_b, ub, &mut fb);
        let dist = fa.iter().zip(&fb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        if corr.margin - dist > 0.0 {
            hard.push((*ua, *ub, dist));
        }
    }
    let mut negative = 0.0;
    if !hard.is_empty() {
        let inv = 1.0 / hard.len() as f64;
        for (ua, ub, dist) in &hard {
            let slack = corr.margin - dist;
            negative += slack * slack;
            if *dist > 0.0 {
                descriptor_at(desc_a, ua, &mut fa);
                descriptor_at(desc_b, ub, &mut fb);
                for c in 0..dim {
                    diff[c] = fa[c] - fb[c];
                }
                let scale = -2.0 * slack / dist * inv;
                accumulate(&mut grad_a, ua, scale, &diff);
                accumulate(&mut grad_b, ub, -scale, &diff);
            }
        }
        negative *= inv;
    }
    Ok(ContrastiveLoss {
        value: positive + negative,
        positive,
        negative,
        hard_negatives: hard.len(),
        grad_a,
        grad_b,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundLoss {
    pub value: f64,
    pub grad: DescriptorImage,
}

/// `weight * mean over background pixels of |f(u)|^2`; zero for an empty set.
pub fn background_loss(desc: &DescriptorImage, background: &[Pixel], weight: f64) -> Result<BackgroundLoss> {
    let mut grad = DescriptorImage::zeros(desc.dim(), desc.width(), desc.height());
    if background.is_empty() {
        return Ok(BackgroundLoss { value: 0.0, grad });
    }
    if background
        .iter()
        .any(|p| p.x as usize >= desc.width() || p.y as usize >= desc.height())
    {
        return Err(Error::invalid("background pixel out of bounds"));
    }
    let inv = 1.0 / background.len() as f64;
    let mut f = vec![0.0; desc.dim()];
    let mut value = 0.0;
    for p in background {
        descriptor_at(desc, p, &mut f);
        value += f.iter().map(|v| v * v).sum::<f64>();
        accumulate(&mut grad, p, 2.0 * weight * inv, &f);
    }
    Ok(BackgroundLoss {
        value: weight * value * inv,
        grad,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CombinedLoss {
    pub value: f64,
    pub contrastive: f64,
    pub background_a: f64,
    pub background_b: f64,
    pub grad_a: DescriptorImage,
    pub grad_b: DescriptorImage,
}

/// Contrastive loss plus the background loss of both frames.
pub fn combined_loss(
    desc_a: &DescriptorImage,
    desc_b: &DescriptorImage,
    corr: &CorrespondenceSet,
    background_weight: f64,
) -> Result<CombinedLoss> {
    let c = contrastive_loss(desc_a, desc_b, corr)?;
    let ba = background_loss(desc_a, &corr.background_a, background_weight)?;
    let bb = background_loss(desc_b, &corr.background_b, background_weight)?;
    let mut grad_a = c.grad_a;
    for (g, x) in grad_a.data_mut().iter_mut().zip(ba.grad.data()) {
        *g += x;
    }
    let mut grad_b = c.grad_b;
    for (g, x) in grad_b.data_mut().iter_mut().zip(bb.grad.data()) {
        *g += x;
    }
    Ok(CombinedLoss {
        value: c.value + ba.value + bb.value,
        contrastive: c.value,
        background_a: ba.value,
        background_b: bb.value,
        grad_a,
        grad_b,
    })
}

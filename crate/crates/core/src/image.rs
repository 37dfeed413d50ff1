//! Dense image containers.

use crate::error::{Error, Result};

/// Multi-channel real image stored channel-major (`D x H x W`).
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorImage {
    dim: usize,
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl DescriptorImage {
    pub fn zeros(dim: usize, width: usize, height: usize) -> Self {
        Self {
            dim,
            width,
            height,
            data: vec![0.0; dim * width * height],
        }
    }

    pub fn from_data(dim: usize, width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * width * height {
            return Err(Error::invalid(format!(
                "image data has {} values, expected {dim}x{height}x{width}",
                data.len()
            )));
        }
        Ok(Self {
            dim,
            width,
            height,
            data,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.pixel_count();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.pixel_count();
        &mut self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: usize, x: usize, y: usize) -> f64 {
        self.data[c * self.pixel_count() + y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, x: usize, y: usize, v: f64) {
        let n = self.pixel_count();
        self.data[c * n + y * self.width + x] = v;
    }

    /// Descriptor vector at linear pixel index.
    pub fn pixel(&self, idx: usize) -> Vec<f64> {
        let n = self.pixel_count();
        (0..self.dim).map(|c| self.data[c * n + idx]).collect()
    }

    pub fn same_shape(&self, other: &DescriptorImage) -> bool {
        self.dim == other.dim && self.width == other.width && self.height == other.height
    }

    pub fn check_same_shape(&self, other: &DescriptorImage) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "image shape mismatch: {}x{}x{} vs {}x{}x{}",
                self.dim, self.height, self.width, other.dim, other.height, other.width
            )))
        }
    }
}

/// Binary image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn from_data(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid("mask data length does not match its size"));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

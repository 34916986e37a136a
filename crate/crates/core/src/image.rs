//! Single-channel planar images.

use crate::error::{Error, Result};
use crate::tensor::Tensor4;

/// Row-major single-channel image.
#[derive(Clone, Debug, PartialEq)]
pub struct Image<T> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

/// Binary label image: 0 = background, 1 = foreground.
pub type Mask = Image<u8>;

/// Intensity image with values in [0, 1].
pub type Frame = Image<f32>;

impl<T: Copy> Image<T> {
    pub fn new(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::dim(format!(
                "image dims must be positive, got {height}x{width}"
            )));
        }
        if data.len() != height * width {
            return Err(Error::dim(format!(
                "image {height}x{width} needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: T) -> Self {
        assert!(height > 0 && width > 0, "image dims must be positive");
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        assert!(height > 0 && width > 0, "image dims must be positive");
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> T {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, value: T) {
        self.data[y * self.width + x] = value;
    }

    pub fn same_dims<U>(&self, other: &Image<U>) -> bool {
        self.height == other.height && self.width == other.width
    }
}

impl Mask {
    /// Errors unless every pixel is 0 or 1.
    pub fn check_binary(&self) -> Result<()> {
        match self.data.iter().position(|&v| v > 1) {
            None => Ok(()),
            Some(i) => Err(Error::Domain(format!(
                "mask is not binary: value {} at ({}, {})",
                self.data[i],
                i / self.width,
                i % self.width
            ))),
        }
    }

    pub fn complement(&self) -> Mask {
        Image {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| 1 - v.min(1)).collect(),
        }
    }

    pub fn count_foreground(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    /// Number of 4-adjacent pixel pairs with differing labels.
    pub fn boundary_length(&self) -> usize {
        let (h, w) = self.dims();
        let mut n = 0;
        for y in 0..h {
            for x in 0..w {
                let v = self.get(y, x);
                if x + 1 < w && self.get(y, x + 1) != v {
                    n += 1;
                }
                if y + 1 < h && self.get(y + 1, x) != v {
                    n += 1;
                }
            }
        }
        n
    }

    pub fn to_tensor(&self) -> Tensor4 {
        let data = self.data.iter().map(|&v| v as f32).collect();
        Tensor4::from_vec((1, 1, self.height, self.width), data).expect("mask dims are valid")
    }
}

impl Frame {
    pub fn to_tensor(&self) -> Tensor4 {
        Tensor4::from_vec((1, 1, self.height, self.width), self.data.clone())
            .expect("frame dims are valid")
    }
}

//! Image containers and defocus-group bookkeeping.

use crate::{Error, Result};

/// A square real-valued image with an odd side length, stored row-major.
///
/// Pixel `(row, col)` sits at in-plane coordinates `(x, y) = (col - c, row - c)`
/// where `c = (side - 1) / 2` is the center pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    side: usize,
    pixel_size: f64,
    data: Vec<f64>,
}

impl Image {
    pub fn new(side: usize, pixel_size: f64, data: Vec<f64>) -> Result<Self> {
        if side == 0 || side % 2 == 0 {
            return Err(Error::Precondition(format!(
                "image side must be odd and positive, got {side}"
            )));
        }
        if data.len() != side * side {
            return Err(Error::shape(side * side, data.len()));
        }
        if !(pixel_size > 0.0 && pixel_size.is_finite()) {
            return Err(Error::Precondition(format!(
                "pixel size must be positive, got {pixel_size}"
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite pixel at index {pos}")));
        }
        Ok(Image {
            side,
            pixel_size,
            data,
        })
    }

    pub fn zeros(side: usize, pixel_size: f64) -> Result<Self> {
        Image::new(side, pixel_size, vec![0.0; side * side])
    }

    pub fn from_fn(
        side: usize,
        pixel_size: f64,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(side * side);
        for row in 0..side {
            for col in 0..side {
                data.push(f(row, col));
            }
        }
        Image::new(side, pixel_size, data)
    }

    /// Builds an image without re-validating; callers guarantee the invariants.
    pub(crate) fn from_parts(side: usize, pixel_size: f64, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), side * side);
        Image {
            side,
            pixel_size,
            data,
        }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn center(&self) -> usize {
        (self.side - 1) / 2
    }

    pub fn pixel_size(&self) -> f64 {
        self.pixel_size
    }

    pub fn pixels(&self) -> &[f64] {
        &self.data
    }

    pub fn pixels_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.side + col]
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Rounds every pixel to the nearest `f32`, the precision of MRC mode 2.
    pub fn quantize_f32(&mut self) {
        for v in &mut self.data {
            *v = *v as f32 as f64;
        }
    }

    pub(crate) fn check_same_shape(&self, other: &Image) -> Result<()> {
        if self.side != other.side {
            return Err(Error::shape(
                format!("{0}x{0}", self.side),
                format!("{0}x{0}", other.side),
            ));
        }
        Ok(())
    }

    /// Bilinear sample at fractional in-plane coordinates; zero outside the grid.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        let c = self.center() as f64;
        let fx = x + c;
        let fy = y + c;
        let x0 = fx.floor();
        let y0 = fy.floor();
        let tx = fx - x0;
        let ty = fy - y0;
        let (x0, y0) = (x0 as isize, y0 as isize);
        let n = self.side as isize;
        let at = |r: isize, c: isize| -> f64 {
            if r < 0 || c < 0 || r >= n || c >= n {
                0.0
            } else {
                self.data[r as usize * self.side + c as usize]
            }
        };
        (1.0 - ty) * ((1.0 - tx) * at(y0, x0) + tx * at(y0, x0 + 1))
            + ty * ((1.0 - tx) * at(y0 + 1, x0) + tx * at(y0 + 1, x0 + 1))
    }

    /// Rotates the image content by `theta` radians about the center pixel
    /// (content at polar angle `phi` moves to `phi + theta`), bilinear interpolation.
    pub fn rotated(&self, theta: f64) -> Image {
        let (s, co) = theta.sin_cos();
        let c = self.center() as f64;
        let mut out = vec![0.0; self.data.len()];
        for row in 0..self.side {
            let y = row as f64 - c;
            for col in 0..self.side {
                let x = col as f64 - c;
                let sx = co * x + s * y;
                let sy = -s * x + co * y;
                out[row * self.side + col] = self.sample_bilinear(sx, sy);
            }
        }
        Image::from_parts(self.side, self.pixel_size, out)
    }

    /// Mirror `y -> -y` (reverses row order).
    pub fn flipped_rows(&self) -> Image {
        let n = self.side;
        let mut out = vec![0.0; self.data.len()];
        for row in 0..n {
            out[row * n..(row + 1) * n].copy_from_slice(&self.data[(n - 1 - row) * n..(n - row) * n]);
        }
        Image::from_parts(n, self.pixel_size, out)
    }

    /// Applies an in-plane alignment: optional mirror first, then rotation.
    pub fn aligned(&self, theta: f64, reflected: bool) -> Image {
        if reflected {
            self.flipped_rows().rotated(theta)
        } else {
            self.rotated(theta)
        }
    }
}

/// Unit quaternion `(w, x, y, z)` describing a 3D orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quaternion(pub [f64; 4]);

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion([1.0, 0.0, 0.0, 0.0]);

    pub fn normalized(q: [f64; 4]) -> Result<Self> {
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::Domain("quaternion with zero or non-finite norm".into()));
        }
        Ok(Quaternion([q[0] / n, q[1] / n, q[2] / n, q[3] / n]))
    }

    /// Rotation by `angle` radians about `axis` (need not be normalized).
    pub fn from_axis_angle(axis: [f64; 3], angle: f64) -> Self {
        let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        let (s, c) = (0.5 * angle).sin_cos();
        Quaternion([c, s * axis[0] / n, s * axis[1] / n, s * axis[2] / n])
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Hamilton product `self * other` (apply `other` first).
    pub fn mul(&self, other: &Quaternion) -> Quaternion {
        let [a1, b1, c1, d1] = self.0;
        let [a2, b2, c2, d2] = other.0;
        Quaternion([
            a1 * a2 - b1 * b2 - c1 * c2 - d1 * d2,
            a1 * b2 + b1 * a2 + c1 * d2 - d1 * c2,
            a1 * c2 - b1 * d2 + c1 * a2 + d1 * b2,
            a1 * d2 + b1 * c2 - c1 * b2 + d1 * a2,
        ])
    }

    pub fn rotation_matrix(&self) -> [[f64; 3]; 3] {
        let [w, x, y, z] = self.0;
        [
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ]
    }

    pub fn rotate(&self, v: [f64; 3]) -> [f64; 3] {
        let r = self.rotation_matrix();
        [
            r[0][0] * v[0] + r[0][1] * v[1] + r[0][2] * v[2],
            r[1][0] * v[0] + r[1][1] * v[1] + r[1][2] * v[2],
            r[2][0] * v[0] + r[2][1] * v[1] + r[2][2] * v[2],
        ]
    }

    /// Viewing direction in the object frame: the third row of the rotation matrix.
    pub fn viewing_direction(&self) -> [f64; 3] {
        self.rotation_matrix()[2]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub rotation: Quaternion,
    /// Noiseless, CTF-free projection. Absent when only orientations are known.
    pub clean: Option<Image>,
}

/// `n` equally shaped images with defocus-group labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageStack {
    images: Vec<Image>,
    group_of: Vec<usize>,
    n_groups: usize,
    truth: Option<Vec<GroundTruth>>,
    defocus_um: Option<Vec<f64>>,
}

impl ImageStack {
    pub fn new(images: Vec<Image>, group_of: Vec<usize>) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::Precondition("image stack must not be empty".into()));
        }
        if group_of.len() != images.len() {
            return Err(Error::shape(
                format!("{} group labels", images.len()),
                group_of.len(),
            ));
        }
        let side = images[0].side();
        let pixel_size = images[0].pixel_size();
        for (i, img) in images.iter().enumerate() {
            if img.side() != side || img.pixel_size() != pixel_size {
                return Err(Error::Precondition(format!(
                    "image {i} is {}x{} at {} A/px, expected {side}x{side} at {pixel_size} A/px",
                    img.side(),
                    img.side(),
                    img.pixel_size()
                )));
            }
        }
        let n_groups = group_of.iter().max().map_or(0, |g| g + 1);
        Ok(ImageStack {
            images,
            group_of,
            n_groups,
            truth: None,
            defocus_um: None,
        })
    }

    /// Declares the number of defocus groups explicitly (some may be empty).
    pub fn with_group_count(mut self, n_groups: usize) -> Result<Self> {
        if n_groups < self.n_groups {
            return Err(Error::Precondition(format!(
                "group label {} out of range for {n_groups} groups",
                self.n_groups - 1
            )));
        }
        self.n_groups = n_groups;
        Ok(self)
    }

    pub fn with_truth(mut self, truth: Vec<GroundTruth>) -> Result<Self> {
        if truth.len() != self.images.len() {
            return Err(Error::shape(
                format!("{} truth records", self.images.len()),
                truth.len(),
            ));
        }
        for (i, t) in truth.iter().enumerate() {
            if (t.rotation.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::Domain(format!(
                    "truth quaternion {i} has norm {}",
                    t.rotation.norm()
                )));
            }
            if let Some(clean) = &t.clean {
                self.images[0].check_same_shape(clean)?;
            }
        }
        self.truth = Some(truth);
        Ok(self)
    }

    pub fn with_defocus(mut self, defocus_um: Vec<f64>) -> Result<Self> {
        if defocus_um.len() != self.images.len() {
            return Err(Error::shape(self.images.len(), defocus_um.len()));
        }
        self.defocus_um = Some(defocus_um);
        Ok(self)
    }

    /// Attaches clean images to existing truth records (or creates records with
    /// identity rotations when none exist).
    pub fn attach_clean(mut self, clean: Vec<Image>) -> Result<Self> {
        if clean.len() != self.images.len() {
            return Err(Error::shape(self.images.len(), clean.len()));
        }
        let mut truth = self.truth.take().unwrap_or_else(|| {
            vec![
                GroundTruth {
                    rotation: Quaternion::IDENTITY,
                    clean: None
                };
                clean.len()
            ]
        });
        for (t, c) in truth.iter_mut().zip(clean) {
            t.clean = Some(c);
        }
        self.with_truth(truth)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn side(&self) -> usize {
        self.images[0].side()
    }

    pub fn pixel_size(&self) -> f64 {
        self.images[0].pixel_size()
    }

    pub fn images(&self) -> &[Image] {
        &self.images
    }

    pub fn image(&self, i: usize) -> &Image {
        &self.images[i]
    }

    pub fn group_of(&self) -> &[usize] {
        &self.group_of
    }

    pub fn n_groups(&self) -> usize {
        self.n_groups
    }

    pub fn truth(&self) -> Option<&[GroundTruth]> {
        self.truth.as_deref()
    }

    pub fn defocus_um(&self) -> Option<&[f64]> {
        self.defocus_um.as_deref()
    }

    /// Clean images, when every truth record carries one.
    pub fn clean_images(&self) -> Option<Vec<&Image>> {
        self.truth()?.iter().map(|t| t.clean.as_ref()).collect()
    }

    pub fn split_by_group(&self) -> Vec<(usize, Vec<usize>)> {
        split_by_group(&self.group_of)
    }
}

/// Partitions image indices by group label; groups ascending, indices in stack order.
pub fn split_by_group(group_of: &[usize]) -> Vec<(usize, Vec<usize>)> {
    let n_groups = group_of.iter().max().map_or(0, |g| g + 1);
    let mut lists = vec![Vec::new(); n_groups];
    for (i, &g) in group_of.iter().enumerate() {
        lists[g].push(i);
    }
    lists
        .into_iter()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .collect()
}

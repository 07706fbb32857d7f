//! Multi-channel probability volumes.

use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Voxel grid of u8 probabilities (value / 255). Voxel `(i, j, k)` covers
/// `[i, i+1)·spacing` along each axis and its sample sits at the center.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub channels: Vec<Vec<u8>>,
}

impl Volume {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], channels: usize) -> Self {
        let n = dims[0] * dims[1] * dims[2];
        Volume {
            dims,
            spacing,
            channels: vec![vec![0; n]; channels],
        }
    }

    pub fn voxel_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.contains(&0) || self.spacing.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Domain("volume dims and spacing must be positive".into()));
        }
        let n = self.voxel_count();
        if self.channels.iter().any(|c| c.len() != n) {
            return Err(Error::Domain("channel length does not match dims".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.dims[1] + j) * self.dims[0] + i
    }

    /// Scan-space position of a voxel center.
    #[inline]
    pub fn center(&self, i: usize, j: usize, k: usize) -> Vec3 {
        Vec3::new(
            (i as f64 + 0.5) * self.spacing[0],
            (j as f64 + 0.5) * self.spacing[1],
            (k as f64 + 0.5) * self.spacing[2],
        )
    }

    pub fn extent(&self) -> Vec3 {
        Vec3::new(
            self.dims[0] as f64 * self.spacing[0],
            self.dims[1] as f64 * self.spacing[1],
            self.dims[2] as f64 * self.spacing[2],
        )
    }

    /// Trilinear sample in [0, 1]; 0 outside the volume.
    pub fn sample(&self, channel: usize, p: &Vec3) -> f64 {
        let data = &self.channels[channel];
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let extent = self.dims[a] as f64 * self.spacing[a];
            if !(p[a] >= 0.0 && p[a] <= extent) {
                return 0.0;
            }
            let u = (p[a] / self.spacing[a] - 0.5).clamp(0.0, (self.dims[a] - 1) as f64);
            let i = (u.floor() as usize).min(self.dims[a].saturating_sub(2));
            base[a] = i;
            frac[a] = if self.dims[a] > 1 { u - i as f64 } else { 0.0 };
        }
        let mut acc = 0.0;
        for c in 0..8 {
            let o = [c & 1, (c >> 1) & 1, (c >> 2) & 1];
            let mut w = 1.0;
            let mut idx = [0usize; 3];
            for a in 0..3 {
                w *= if o[a] == 1 { frac[a] } else { 1.0 - frac[a] };
                idx[a] = (base[a] + o[a]).min(self.dims[a] - 1);
            }
            if w != 0.0 {
                acc += w * data[self.index(idx[0], idx[1], idx[2])] as f64;
            }
        }
        acc / 255.0
    }
}

/// Converts a probability in [0, 1] to the stored byte.
#[inline]
pub fn quantize(p: f64) -> u8 {
    (p.clamp(0.0, 1.0) * 255.0).round() as u8
}

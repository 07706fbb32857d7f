use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;

/// Log-scales and translations of one z station.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AffineKeypoint {
    pub log_sx: f64,
    pub log_sy: f64,
    pub tx: f64,
    pub ty: f64,
}

impl AffineKeypoint {
    #[inline]
    pub fn as_array(&self) -> [f64; 4] {
        [self.log_sx, self.log_sy, self.tx, self.ty]
    }

    #[inline]
    pub fn from_array(a: [f64; 4]) -> Self {
        AffineKeypoint {
            log_sx: a[0],
            log_sy: a[1],
            tx: a[2],
            ty: a[3],
        }
    }
}

/// Per-slice anisotropic xy scaling and translation, with parameters
/// linearly interpolated between evenly spaced z stations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerSliceAffine {
    pub keypoints: Vec<AffineKeypoint>,
}

/// Affine parameters interpolated at one z.
#[derive(Debug, Clone, Copy)]
pub struct AffineAt {
    pub lower: usize,
    pub alpha: f64,
    /// d(alpha)/dz; zero when z is clamped to the station range.
    pub dalpha_dz: f64,
    pub params: [f64; 4],
    pub dparams_dz: [f64; 4],
}

impl PerSliceAffine {
    pub fn identity(n: usize) -> Self {
        assert!(n >= 2, "need at least two affine keypoints");
        PerSliceAffine {
            keypoints: vec![AffineKeypoint::default(); n],
        }
    }

    /// Identity scales with a constant translation.
    pub fn translation(n: usize, tx: f64, ty: f64) -> Self {
        let mut a = Self::identity(n);
        for k in &mut a.keypoints {
            k.tx = tx;
            k.ty = ty;
        }
        a
    }

    pub fn at(&self, z: f64, z_range: (f64, f64)) -> AffineAt {
        let n = self.keypoints.len();
        let span = (n - 1) as f64;
        let dtau = span / (z_range.1 - z_range.0);
        let tau = (z - z_range.0) * dtau;
        let (lower, alpha, dalpha_dz) = if tau <= 0.0 {
            (0, 0.0, 0.0)
        } else if tau >= span {
            (n - 2, 1.0, 0.0)
        } else {
            let l = (tau.floor() as usize).min(n - 2);
            (l, tau - l as f64, dtau)
        };
        let a = self.keypoints[lower].as_array();
        let b = self.keypoints[lower + 1].as_array();
        let mut params = [0.0; 4];
        let mut dparams_dz = [0.0; 4];
        for i in 0..4 {
            params[i] = (1.0 - alpha) * a[i] + alpha * b[i];
            dparams_dz[i] = (b[i] - a[i]) * dalpha_dz;
        }
        AffineAt {
            lower,
            alpha,
            dalpha_dz,
            params,
            dparams_dz,
        }
    }

    pub fn forward(&self, x: &Vec3, z_range: (f64, f64)) -> Vec3 {
        let p = self.at(x.z, z_range).params;
        Vec3::new(x.x * p[0].exp() + p[2], x.y * p[1].exp() + p[3], x.z)
    }

    /// Exact inverse; z is unchanged by the stage so the parameters
    /// interpolated at the output z are the forward ones.
    pub fn inverse(&self, y: &Vec3, z_range: (f64, f64)) -> Vec3 {
        let p = self.at(y.z, z_range).params;
        Vec3::new((y.x - p[2]) * (-p[0]).exp(), (y.y - p[3]) * (-p[1]).exp(), y.z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const ZR: (f64, f64) = (0.0, 10.0);

    #[test]
    fn zero_parameters_are_identity() {
        let a = PerSliceAffine::identity(3);
        let x = Vec3::new(1.5, -2.0, 4.0);
        assert_eq!(a.forward(&x, ZR), x);
        assert_eq!(a.inverse(&x, ZR), x);
    }

    #[test]
    fn uniform_scale_doubles_x() {
        let mut a = PerSliceAffine::identity(4);
        for k in &mut a.keypoints {
            k.log_sx = 2f64.ln();
        }
        let y = a.forward(&Vec3::new(3.0, 5.0, 1.0), ZR);
        assert_relative_eq!(y, Vec3::new(6.0, 5.0, 1.0), epsilon = 1e-12);
    }

    #[test]
    fn translation_interpolates_linearly() {
        let mut a = PerSliceAffine::identity(2);
        a.keypoints[1].tx = 1.0;
        let y = a.forward(&Vec3::new(0.0, 0.0, 5.0), ZR);
        assert_relative_eq!(y.x, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn inverse_undoes_forward() {
        let a = PerSliceAffine {
            keypoints: vec![
                AffineKeypoint { log_sx: 0.1, log_sy: -0.2, tx: 3.0, ty: -1.0 },
                AffineKeypoint { log_sx: -0.3, log_sy: 0.05, tx: 0.5, ty: 2.0 },
                AffineKeypoint { log_sx: 0.2, log_sy: 0.1, tx: -2.0, ty: 0.0 },
            ],
        };
        for z in [-3.0, 0.0, 2.5, 7.7, 10.0, 12.0] {
            let x = Vec3::new(1.25, -4.5, z);
            assert_relative_eq!(a.inverse(&a.forward(&x, ZR), ZR), x, epsilon = 1e-12);
        }
    }
}

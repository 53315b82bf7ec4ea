//! Rotation and shear of joint coordinates (column vectors, `v' = A v`).

use serde::{Deserialize, Serialize};

use crate::rng::RngStream;
use crate::skeleton::SkeletonSequence;

pub type Mat3 = [[f64; 3]; 3];

pub const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// Range of the main-axis rotation angle.
pub const MAIN_ANGLE_MAX: f64 = std::f64::consts::PI / 6.0;
/// Range of the two perturbation angles.
pub const MINOR_ANGLE_MAX: f64 = std::f64::consts::PI / 180.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        self as usize
    }
}

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn transpose(a: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[j][i];
        }
    }
    out
}

pub fn det(a: &Mat3) -> f64 {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
        - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

#[inline]
pub fn mat_vec(a: &Mat3, v: [f64; 3]) -> [f64; 3] {
    [
        a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
        a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
        a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
    ]
}

pub fn rot_x(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]]
}

pub fn rot_y(b: f64) -> Mat3 {
    let (s, c) = b.sin_cos();
    [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]
}

pub fn rot_z(g: f64) -> Mat3 {
    let (s, c) = g.sin_cos();
    [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationSample {
    pub main_axis: Axis,
    /// Angles about X, Y, Z in radians.
    pub angles: [f64; 3],
    pub matrix: Mat3,
}

impl RotationSample {
    /// `R = R_Z(gamma) R_Y(beta) R_X(alpha)`.
    pub fn from_angles(main_axis: Axis, angles: [f64; 3]) -> Self {
        let matrix = mat_mul(
            &rot_z(angles[2]),
            &mat_mul(&rot_y(angles[1]), &rot_x(angles[0])),
        );
        Self {
            main_axis,
            angles,
            matrix,
        }
    }
}

/// Draws the main axis, then the X, Y, Z angles in that order.
pub fn sample_rotation(rng: &mut RngStream) -> RotationSample {
    let main_axis = Axis::ALL[rng.below(3)];
    let mut angles = [0.0; 3];
    for (i, a) in angles.iter_mut().enumerate() {
        let hi = if i == main_axis.index() {
            MAIN_ANGLE_MAX
        } else {
            MINOR_ANGLE_MAX
        };
        *a = rng.uniform_in(0.0, hi);
    }
    RotationSample::from_angles(main_axis, angles)
}

pub fn apply_matrix(seq: &SkeletonSequence, m: &Mat3) -> SkeletonSequence {
    seq.map_points(|v| mat_vec(m, v))
}

pub fn apply_rotation(seq: &SkeletonSequence, r: &RotationSample) -> SkeletonSequence {
    apply_matrix(seq, &r.matrix)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShearSample {
    /// `[s_X^Y, s_X^Z, s_Y^X, s_Y^Z, s_Z^X, s_Z^Y]`.
    pub factors: [f64; 6],
    pub matrix: Mat3,
}

impl ShearSample {
    pub fn from_factors(f: [f64; 6]) -> Self {
        let matrix = [[1.0, f[0], f[1]], [f[2], 1.0, f[3]], [f[4], f[5], 1.0]];
        Self { factors: f, matrix }
    }
}

pub fn sample_shear(rng: &mut RngStream) -> ShearSample {
    let mut f = [0.0; 6];
    for x in &mut f {
        *x = rng.uniform_in(-1.0, 1.0);
    }
    ShearSample::from_factors(f)
}

pub fn apply_shear(seq: &SkeletonSequence, s: &ShearSample) -> SkeletonSequence {
    apply_matrix(seq, &s.matrix)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq() -> SkeletonSequence {
        SkeletonSequence::from_flat(2, 1, 3, (0..18).map(|i| (i as f64 * 0.37).sin()).collect())
            .unwrap()
    }

    #[test]
    fn zero_angles_identity() {
        let r = RotationSample::from_angles(Axis::X, [0.0; 3]);
        assert_eq!(r.matrix, IDENTITY);
        let s = seq();
        assert_eq!(apply_rotation(&s, &r), s);
    }

    #[test]
    fn quarter_turn_about_z() {
        let r = rot_z(std::f64::consts::FRAC_PI_2);
        let v = mat_vec(&r, [1.0, 0.0, 0.0]);
        assert!((v[0]).abs() < 1e-15 && (v[1] - 1.0).abs() < 1e-15 && v[2] == 0.0);
    }

    #[test]
    fn sampled_rotation_is_orthonormal_and_in_range() {
        let mut rng = RngStream::new(2);
        for _ in 0..500 {
            let r = sample_rotation(&mut rng);
            let rtr = mat_mul(&transpose(&r.matrix), &r.matrix);
            for i in 0..3 {
                for j in 0..3 {
                    assert!((rtr[i][j] - IDENTITY[i][j]).abs() < 1e-12);
                }
            }
            assert!((det(&r.matrix) - 1.0).abs() < 1e-12);
            for (i, &a) in r.angles.iter().enumerate() {
                let hi = if i == r.main_axis.index() {
                    MAIN_ANGLE_MAX
                } else {
                    MINOR_ANGLE_MAX
                };
                assert!((0.0..=hi).contains(&a));
            }
        }
    }

    #[test]
    fn shear_identity_and_single_factor() {
        let s = seq();
        assert_eq!(apply_shear(&s, &ShearSample::from_factors([0.0; 6])), s);
        let sh = ShearSample::from_factors([1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(mat_vec(&sh.matrix, [0.0, 1.0, 0.0]), [1.0, 1.0, 0.0]);
        for k in 0..6 {
            let mut f = [0.0; 6];
            f[k] = 0.73;
            assert!((det(&ShearSample::from_factors(f).matrix) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn sampled_shear_in_range() {
        let mut rng = RngStream::new(8);
        for _ in 0..500 {
            let s = sample_shear(&mut rng);
            assert!(s.factors.iter().all(|f| (-1.0..=1.0).contains(f)));
            for i in 0..3 {
                assert_eq!(s.matrix[i][i], 1.0);
            }
        }
    }
}

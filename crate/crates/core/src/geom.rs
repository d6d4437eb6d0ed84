//! Small fixed-size linear algebra: 3-vectors and rotation matrices.

use std::fmt;
use std::ops::{Add, AddAssign, Index, Mul, Neg, Sub};

use rand::Rng;

use crate::error::{Error, Result};

/// Orthonormality tolerance for validated constructors.
pub const ROTATION_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: Vec3) -> Vec3 {
        Vec3::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn distance(self, other: Vec3) -> f64 {
        (self - other).norm()
    }

    pub fn distance_squared(self, other: Vec3) -> f64 {
        (self - other).norm_squared()
    }

    pub fn scale(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }

    /// Unit vector in the same direction, or `None` when the norm is at most `eps`.
    pub fn normalized(self, eps: f64) -> Option<Vec3> {
        let n = self.norm();
        (n > eps).then(|| self.scale(1.0 / n))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Largest absolute componentwise difference.
    pub fn max_abs_diff(self, other: Vec3) -> f64 {
        (self.x - other.x)
            .abs()
            .max((self.y - other.y).abs())
            .max((self.z - other.z).abs())
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        self.x += o.x;
        self.y += o.y;
        self.z += o.z;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        self.scale(s)
    }
}

impl Index<usize> for Vec3 {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

/// A 3×3 matrix stored row-major. Values built through the public
/// constructors are elements of SO(3); the `_unchecked` constructors are for
/// callers that guarantee this themselves (frames, products of rotations).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RotationMatrix {
    rows: [[f64; 3]; 3],
}

impl RotationMatrix {
    pub const IDENTITY: RotationMatrix = RotationMatrix {
        rows: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    pub fn identity() -> Self {
        Self::IDENTITY
    }

    /// Validated constructor from row-major entries.
    pub fn from_rows(rows: [[f64; 3]; 3], tol: f64) -> Result<Self> {
        if is_rotation(&rows, tol) {
            Ok(Self { rows })
        } else {
            Err(Error::NotARotation)
        }
    }

    pub fn from_rows_unchecked(rows: [[f64; 3]; 3]) -> Self {
        Self { rows }
    }

    /// Matrix whose columns are `c0`, `c1`, `c2`.
    pub fn from_columns_unchecked(c0: Vec3, c1: Vec3, c2: Vec3) -> Self {
        Self {
            rows: [[c0.x, c1.x, c2.x], [c0.y, c1.y, c2.y], [c0.z, c1.z, c2.z]],
        }
    }

    /// Parses 9 row-major values, validating orthonormality within `tol`.
    pub fn from_row_major_slice(values: &[f64], tol: f64) -> Result<Self> {
        if values.len() != 9 {
            return Err(Error::DimensionMismatch(format!(
                "rotation needs 9 values, got {}",
                values.len()
            )));
        }
        let mut rows = [[0.0; 3]; 3];
        for (i, v) in values.iter().enumerate() {
            rows[i / 3][i % 3] = *v;
        }
        Self::from_rows(rows, tol)
    }

    /// Rotation by `angle` radians about `axis` (Rodrigues).
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Result<Self> {
        let a = axis
            .normalized(0.0)
            .filter(|a| a.is_finite())
            .ok_or_else(|| Error::InvalidArgument("rotation axis must be nonzero".into()))?;
        let (s, c) = angle.sin_cos();
        let t = 1.0 - c;
        Ok(Self {
            rows: [
                [
                    t * a.x * a.x + c,
                    t * a.x * a.y - s * a.z,
                    t * a.x * a.z + s * a.y,
                ],
                [
                    t * a.x * a.y + s * a.z,
                    t * a.y * a.y + c,
                    t * a.y * a.z - s * a.x,
                ],
                [
                    t * a.x * a.z - s * a.y,
                    t * a.y * a.z + s * a.x,
                    t * a.z * a.z + c,
                ],
            ],
        })
    }

    pub fn rows(&self) -> &[[f64; 3]; 3] {
        &self.rows
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.rows[row][col]
    }

    pub fn row(&self, i: usize) -> Vec3 {
        Vec3::from_array(self.rows[i])
    }

    pub fn column(&self, j: usize) -> Vec3 {
        Vec3::new(self.rows[0][j], self.rows[1][j], self.rows[2][j])
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        let r = &self.rows;
        [
            r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
        ]
    }

    pub fn transpose(&self) -> Self {
        let r = &self.rows;
        Self {
            rows: [
                [r[0][0], r[1][0], r[2][0]],
                [r[0][1], r[1][1], r[2][1]],
                [r[0][2], r[1][2], r[2][2]],
            ],
        }
    }

    /// `self · p`.
    pub fn apply(&self, p: Vec3) -> Vec3 {
        Vec3::new(self.row(0).dot(p), self.row(1).dot(p), self.row(2).dot(p))
    }

    /// `selfᵀ · p`.
    pub fn apply_transpose(&self, p: Vec3) -> Vec3 {
        Vec3::new(
            self.column(0).dot(p),
            self.column(1).dot(p),
            self.column(2).dot(p),
        )
    }

    /// Matrix product `self · other`.
    pub fn compose(&self, other: &RotationMatrix) -> RotationMatrix {
        let mut rows = [[0.0; 3]; 3];
        for (i, row) in rows.iter_mut().enumerate() {
            for (j, e) in row.iter_mut().enumerate() {
                *e = (0..3).map(|k| self.rows[i][k] * other.rows[k][j]).sum();
            }
        }
        Self { rows }
    }

    pub fn trace(&self) -> f64 {
        self.rows[0][0] + self.rows[1][1] + self.rows[2][2]
    }

    pub fn determinant(&self) -> f64 {
        det3(&self.rows)
    }

    /// Rotation angle in `[0, π]`, from `atan2(sin, cos)` so that small
    /// angles keep full precision.
    pub fn angle(&self) -> f64 {
        let r = &self.rows;
        let skew = Vec3::new(r[2][1] - r[1][2], r[0][2] - r[2][0], r[1][0] - r[0][1]);
        (skew.norm() / 2.0).atan2((self.trace() - 1.0) / 2.0)
    }

    /// Unit rotation axis (sign unspecified), or `None` when the matrix is
    /// the identity within `eps`. Computed as the null direction of `R − I`
    /// from the largest cross product of its rows.
    pub fn rotation_axis(&self, eps: f64) -> Option<Vec3> {
        let d = |i: usize| {
            let mut r = self.rows[i];
            r[i] -= 1.0;
            Vec3::from_array(r)
        };
        let (r0, r1, r2) = (d(0), d(1), d(2));
        [r0.cross(r1), r1.cross(r2), r2.cross(r0)]
            .into_iter()
            .max_by(|a, b| a.norm_squared().total_cmp(&b.norm_squared()))
            .and_then(|c| c.normalized(eps * eps))
    }

    /// Largest absolute entrywise difference (∞-norm of the difference as a vector).
    pub fn max_abs_diff(&self, other: &RotationMatrix) -> f64 {
        self.to_row_major()
            .iter()
            .zip(other.to_row_major().iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        is_rotation(&self.rows, tol)
    }
}

impl Mul for RotationMatrix {
    type Output = RotationMatrix;
    fn mul(self, rhs: RotationMatrix) -> RotationMatrix {
        self.compose(&rhs)
    }
}

impl Mul<Vec3> for RotationMatrix {
    type Output = Vec3;
    fn mul(self, rhs: Vec3) -> Vec3 {
        self.apply(rhs)
    }
}

/// Nine whitespace-separated decimals, row-major.
impl fmt::Display for RotationMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = self.to_row_major();
        for (i, x) in v.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{x:.12}")?;
        }
        Ok(())
    }
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// True iff `MᵀM = I` elementwise and `det M = +1`, both within `tol`.
pub fn is_rotation(m: &[[f64; 3]; 3], tol: f64) -> bool {
    if m.iter().flatten().any(|v| !v.is_finite()) {
        return false;
    }
    for i in 0..3 {
        for j in 0..3 {
            let g: f64 = (0..3).map(|k| m[k][i] * m[k][j]).sum();
            let expected = if i == j { 1.0 } else { 0.0 };
            if (g - expected).abs() > tol {
                return false;
            }
        }
    }
    (det3(m) - 1.0).abs() <= tol
}

/// Basic rotation about the z-axis.
pub fn rotation_about_z(theta: f64) -> RotationMatrix {
    let (s, c) = theta.sin_cos();
    RotationMatrix {
        rows: [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]],
    }
}

/// Haar-uniform rotation: a uniformly random unit quaternion (Shoemake's
/// subgroup algorithm) converted to a matrix.
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> RotationMatrix {
    let u1: f64 = rng.random();
    let u2: f64 = rng.random();
    let u3: f64 = rng.random();
    let tau = std::f64::consts::TAU;
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    let q = [
        b * (tau * u3).cos(),
        a * (tau * u2).sin(),
        a * (tau * u2).cos(),
        b * (tau * u3).sin(),
    ];
    quaternion_to_matrix(q)
}

/// `q = [w, x, y, z]`, assumed unit.
fn quaternion_to_matrix(q: [f64; 4]) -> RotationMatrix {
    let [w, x, y, z] = q;
    RotationMatrix {
        rows: [
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
        ],
    }
}

/// Uniform direction on the unit sphere.
pub fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    let z: f64 = rng.random_range(-1.0..=1.0);
    let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let r = (1.0 - z * z).max(0.0).sqrt();
    Vec3::new(r * phi.cos(), r * phi.sin(), z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn assert_vec_eq(a: Vec3, b: Vec3, tol: f64) {
        assert!(a.max_abs_diff(b) <= tol, "{a:?} != {b:?}");
    }

    #[test]
    fn rz_examples() {
        assert_eq!(rotation_about_z(0.0), RotationMatrix::identity());
        assert_vec_eq(rotation_about_z(FRAC_PI_2).apply(Vec3::X), Vec3::Y, 1e-15);
        assert_vec_eq(
            rotation_about_z(PI).apply(Vec3::new(1.0, 2.0, 3.0)),
            Vec3::new(-1.0, -2.0, 3.0),
            1e-15,
        );
    }

    #[test]
    fn is_rotation_examples() {
        assert!(is_rotation(RotationMatrix::IDENTITY.rows(), 1e-12));
        let reflection = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]];
        assert!(!is_rotation(&reflection, 1e-12));
        assert!(rotation_about_z(0.3).is_valid(1e-12));
        assert!(!is_rotation(
            &[[2.0, 0.0, 0.0], [0.0, 0.5, 0.0], [0.0, 0.0, 1.0]],
            1e-12
        ));
    }

    #[test]
    fn random_rotation_is_deterministic_per_seed() {
        let a = random_rotation(&mut ChaCha8Rng::seed_from_u64(11));
        let b = random_rotation(&mut ChaCha8Rng::seed_from_u64(11));
        assert_eq!(a, b);
    }

    #[test]
    fn haar_trace_moments() {
        // For Haar measure on SO(3): E[tr R] = 0 and E[(tr R)^2] = 1.
        // Oracle: tr R = 4w^2 - 1 for the unit quaternion (w, x, y, z),
        // averaged over Gaussian-normalised quaternions, an independent route.
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 10_000;
        let (mut m1, mut m2) = (0.0, 0.0);
        for _ in 0..n {
            let r = random_rotation(&mut rng);
            assert!(r.is_valid(1e-12));
            let t = r.trace();
            m1 += t;
            m2 += t * t;
        }
        let (m1, m2) = (m1 / n as f64, m2 / n as f64);

        let mut orng = ChaCha8Rng::seed_from_u64(77);
        let (mut o1, mut o2) = (0.0, 0.0);
        for _ in 0..n {
            let q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(&mut orng));
            let nn: f64 = q.iter().map(|v| v * v).sum();
            let t = 4.0 * q[0] * q[0] / nn - 1.0;
            o1 += t;
            o2 += t * t;
        }
        let (o1, o2) = (o1 / n as f64, o2 / n as f64);

        assert!(m1.abs() < 0.05, "mean trace {m1}");
        assert!((m2 - 1.0).abs() < 0.05, "mean trace^2 {m2}");
        assert!((m1 - o1).abs() < 0.05 && (m2 - o2).abs() < 0.07);
    }

    #[test]
    fn compose_inverse_and_subgroup() {
        let r = random_rotation(&mut ChaCha8Rng::seed_from_u64(3));
        assert!(
            r.compose(&r.transpose())
                .max_abs_diff(&RotationMatrix::IDENTITY)
                < 1e-12
        );
        assert_eq!(
            RotationMatrix::IDENTITY.apply(Vec3::new(1.0, -2.0, 0.5)),
            Vec3::new(1.0, -2.0, 0.5)
        );
        let (a, b) = (0.7, -2.1);
        let ab = rotation_about_z(a) * rotation_about_z(b);
        assert!(ab.max_abs_diff(&rotation_about_z(a + b)) < 1e-12);
    }

    #[test]
    fn axis_angle_round_trip() {
        let axis = Vec3::new(1.0, 2.0, -0.5);
        let r = RotationMatrix::from_axis_angle(axis, 2.5).unwrap();
        assert!(r.is_valid(1e-12));
        assert_abs_diff_eq!(r.angle(), 2.5, epsilon = 1e-12);
        let recovered = r.rotation_axis(1e-8).unwrap();
        let unit = axis.normalized(0.0).unwrap();
        assert!(recovered.cross(unit).norm() < 1e-12);
        assert!(RotationMatrix::IDENTITY.rotation_axis(1e-8).is_none());
    }

    #[test]
    fn display_is_row_major() {
        let s = rotation_about_z(FRAC_PI_2).to_string();
        let v: Vec<f64> = s.split_whitespace().map(|t| t.parse().unwrap()).collect();
        assert_eq!(v.len(), 9);
        assert_abs_diff_eq!(v[1], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v[3], 1.0, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn rz_is_rotation(theta in -100.0f64..100.0) {
            prop_assert!(rotation_about_z(theta).is_valid(1e-12));
        }

        #[test]
        fn rz_commute(a in -10.0f64..10.0, b in -10.0f64..10.0) {
            let ab = rotation_about_z(a) * rotation_about_z(b);
            let ba = rotation_about_z(b) * rotation_about_z(a);
            prop_assert!(ab.max_abs_diff(&ba) < 1e-12);
        }

        #[test]
        fn closure_and_norm_preservation(
            s1 in any::<u64>(),
            s2 in any::<u64>(),
            p in proptest::array::uniform3(-10.0f64..10.0),
        ) {
            let r1 = random_rotation(&mut ChaCha8Rng::seed_from_u64(s1));
            let r2 = random_rotation(&mut ChaCha8Rng::seed_from_u64(s2));
            prop_assert!(r1.compose(&r2).is_valid(1e-11));
            let p = Vec3::from_array(p);
            prop_assert!((r1.apply(p).norm() - p.norm()).abs() < 1e-12);
        }
    }
}

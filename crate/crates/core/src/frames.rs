//! Polar centrifugal reference frames (PCRF) and their two-stage composition
//! (CRF).
//!
//! A polar frame attached to a query point `q` has its third axis `w` along
//! `q/‖q‖`, its first axis `u` horizontal (`u ⊥ z`) and `v = w × u`. Expressing
//! points in that basis is invariant to rotations about `z`, and any rotation
//! of the input becomes a rotation about `z` in frame coordinates. Composing
//! a second polar frame, built from the query's normal expressed in the first
//! frame, removes that last degree of freedom.

use nalgebra::{Matrix3, SymmetricEigen};

use crate::cloud::{PointCloud, NORMAL_UNIT_TOL};
use crate::error::{Error, Result};
use crate::geom::{RotationMatrix, Vec3};
use crate::sampling::k_nearest;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrameKind {
    Polar,
    Composed,
}

/// Orthonormal basis `[u v w]` (columns) with the data it was built from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Frame {
    pub u: Vec3,
    pub v: Vec3,
    pub w: Vec3,
    pub kind: FrameKind,
    pub query_index: Option<usize>,
    pub normal: Option<Vec3>,
}

impl Frame {
    /// The basis as a matrix with columns `u`, `v`, `w`.
    pub fn basis(&self) -> RotationMatrix {
        RotationMatrix::from_columns_unchecked(self.u, self.v, self.w)
    }

    /// Coordinates of `p` in this frame, `Bᵀp`.
    pub fn transform(&self, p: Vec3) -> Vec3 {
        Vec3::new(self.u.dot(p), self.v.dot(p), self.w.dot(p))
    }

    pub fn with_query_index(mut self, index: usize) -> Self {
        self.query_index = Some(index);
        self
    }

    fn from_basis(b: RotationMatrix, kind: FrameKind, normal: Option<Vec3>) -> Self {
        Frame {
            u: b.column(0),
            v: b.column(1),
            w: b.column(2),
            kind,
            query_index: None,
            normal,
        }
    }
}

/// What `crf_basis` does when the normal, seen from the first frame, lies on
/// that frame's polar axis.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SecondStage {
    /// Use the polar-frame fallback axis.
    #[default]
    Fallback,
    /// Report [`Error::NormalRadial`].
    Strict,
}

/// Polar frame of `q`.
///
/// When `w` is within `eps` of `±z` the horizontal axis is undefined; `u` is
/// then `y` projected off `w` (exactly `(0, 1, 0)` on the axis).
pub fn pcrf_basis(q: Vec3, eps: f64) -> Result<Frame> {
    let norm = q.norm();
    if !(norm > eps) {
        return Err(Error::QueryAtOrigin { norm });
    }
    let w = q.scale(1.0 / norm);
    let rho = w.x.hypot(w.y);
    let u = if rho > eps {
        Vec3::new(-w.y / rho, w.x / rho, 0.0)
    } else {
        let y = Vec3::Y - w.scale(w.y);
        y.scale(1.0 / y.norm())
    };
    let v = w.cross(u);
    Ok(Frame {
        u,
        v,
        w,
        kind: FrameKind::Polar,
        query_index: None,
        normal: None,
    })
}

/// True when `q` falls on the fallback branch of [`pcrf_basis`].
pub fn is_polar_degenerate(q: Vec3, eps: f64) -> bool {
    let n = q.norm();
    n > eps && (q.x / n).hypot(q.y / n) <= eps
}

pub fn pcrf_transform(frame: &Frame, p: Vec3) -> Vec3 {
    frame.transform(p)
}

/// Composed frame `B = B¹·B²` with the default fallback on the second stage.
pub fn crf_basis(q: Vec3, n: Vec3, eps: f64) -> Result<Frame> {
    crf_basis_with(q, n, eps, SecondStage::Fallback)
}

/// Composed frame: `B¹ = pcrf(q)`, `n′ = B¹ᵀn`, `B² = pcrf(n′)`, `B = B¹B²`.
pub fn crf_basis_with(q: Vec3, n: Vec3, eps: f64, second: SecondStage) -> Result<Frame> {
    if !n.is_finite() || (n.norm() - 1.0).abs() > NORMAL_UNIT_TOL {
        return Err(Error::InvalidArgument(format!(
            "normal must be unit length, got norm {}",
            n.norm()
        )));
    }
    let first = pcrf_basis(q, eps)?;
    let n_local = first.transform(n);
    if second == SecondStage::Strict && n_local.x.hypot(n_local.y) <= eps {
        return Err(Error::NormalRadial);
    }
    let second = pcrf_basis(n_local, eps)?;
    let b = first.basis() * second.basis();
    Ok(Frame::from_basis(b, FrameKind::Composed, Some(n)))
}

pub fn crf_transform(frame: &Frame, p: Vec3) -> Vec3 {
    debug_assert_eq!(frame.kind, FrameKind::Composed);
    frame.transform(p)
}

/// Angle `θ` with `R = B′·Rz(θ)·Bᵀ`, where `B = pcrf(q)` and `B′ = pcrf(Rq)`.
pub fn factor_rotation(r: &RotationMatrix, q: Vec3, eps: f64) -> Result<f64> {
    let b = pcrf_basis(q, eps)?.basis();
    let b_rot = pcrf_basis(r.apply(q), eps)?.basis();
    let m = b_rot.transpose() * *r * b;
    Ok(m.entry(1, 0).atan2(m.entry(0, 0)))
}

/// Factorization `R = W·Rz(θ)·Wᵀ` with `W` the polar frame of the rotation
/// axis of `R`. The identity factors through the `z` axis with `θ = 0`.
pub fn axis_factorization(r: &RotationMatrix, eps: f64) -> Result<(Frame, f64)> {
    let axis = r.rotation_axis(eps).unwrap_or(Vec3::Z);
    let w = pcrf_basis(axis, eps)?;
    let theta = factor_rotation(r, axis, eps)?;
    Ok((w, theta))
}

/// The map `X ↦ leftᵀ·X·right` carrying SO(3) onto the basic-rotation subgroup
/// when `left` and `right` factor `X`.
pub fn subgroup_map(
    left: &RotationMatrix,
    x: &RotationMatrix,
    right: &RotationMatrix,
) -> RotationMatrix {
    left.transpose() * *x * *right
}

/// Sign rule shared by normal estimation and mesh sampling: point away from
/// the origin; if `|n·q| ≤ eps`, make the first component larger than `eps`
/// in magnitude positive.
pub fn orient_normal(n: Vec3, q: Vec3, eps: f64) -> Vec3 {
    let d = n.dot(q);
    if d > eps {
        return n;
    }
    if d < -eps {
        return -n;
    }
    match n.to_array().into_iter().find(|c| c.abs() > eps) {
        Some(c) if c < 0.0 => -n,
        _ => n,
    }
}

/// Applies [`orient_normal`] to every normal of the cloud.
pub fn orient_normals(cloud: &PointCloud, eps: f64) -> PointCloud {
    match cloud.normals() {
        None => cloud.clone(),
        Some(ns) => {
            let oriented = cloud
                .points()
                .iter()
                .zip(ns)
                .map(|(q, n)| orient_normal(*n, *q, eps))
                .collect();
            PointCloud::from_parts_unchecked(cloud.points().to_vec(), Some(oriented))
        }
    }
}

/// Normal at every point from the covariance of its `k` nearest neighbors
/// (the point included): the eigenvector of the smallest eigenvalue,
/// oriented by [`orient_normal`].
pub fn estimate_normals(cloud: &PointCloud, k: usize, eps: f64) -> Result<PointCloud> {
    if k < 3 {
        return Err(Error::InvalidArgument(format!(
            "k must be at least 3, got {k}"
        )));
    }
    if cloud.len() < k {
        return Err(Error::TooFewPoints {
            needed: k,
            got: cloud.len(),
        });
    }
    let pts = cloud.points();
    let mut normals = Vec::with_capacity(pts.len());
    for (i, q) in pts.iter().enumerate() {
        let group = k_nearest(pts, *q, k);
        let n = smallest_principal_axis(group.iter().map(|&j| pts[j]), eps).map_err(
            |(lambda0, lambda1)| Error::DegenerateNeighborhood {
                index: i,
                lambda0,
                lambda1,
            },
        )?;
        normals.push(orient_normal(n, *q, eps));
    }
    PointCloud::with_normals(pts.to_vec(), normals)
}

/// Unit eigenvector of the smallest covariance eigenvalue, or the two
/// smallest eigenvalues when they are within `eps` of each other.
fn smallest_principal_axis(
    points: impl Iterator<Item = Vec3> + Clone,
    eps: f64,
) -> std::result::Result<Vec3, (f64, f64)> {
    let count = points.clone().count() as f64;
    let mut mean = Vec3::ZERO;
    for p in points.clone() {
        mean += p;
    }
    let mean = mean.scale(1.0 / count);
    let mut cov = Matrix3::<f64>::zeros();
    for p in points {
        let d = p - mean;
        let d = nalgebra::Vector3::new(d.x, d.y, d.z);
        cov += d * d.transpose();
    }
    cov /= count;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let (l0, l1) = (eig.eigenvalues[order[0]], eig.eigenvalues[order[1]]);
    if l1 - l0 <= eps {
        return Err((l0, l1));
    }
    let col = eig.eigenvectors.column(order[0]);
    let n = Vec3::new(col[0], col[1], col[2]);
    Ok(n.scale(1.0 / n.norm()))
}

use crate::error::{Error, Result};
use crate::geom::{RotationMatrix, Vec3};

/// Tolerance on `‖n‖ = 1` for stored normals.
pub const NORMAL_UNIT_TOL: f64 = 1e-9;

/// Ordered points with optional per-point unit normals.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    points: Vec<Vec3>,
    normals: Option<Vec<Vec3>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidCloud("point cloud is empty".into()));
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidCloud(format!("point {i} is not finite")));
        }
        Ok(Self {
            points,
            normals: None,
        })
    }

    pub fn with_normals(points: Vec<Vec3>, normals: Vec<Vec3>) -> Result<Self> {
        Self::new(points)?.set_normals(normals)
    }

    /// Replaces the normals, validating length and unit norm.
    pub fn set_normals(mut self, normals: Vec<Vec3>) -> Result<Self> {
        if normals.len() != self.points.len() {
            return Err(Error::LengthMismatch(format!(
                "{} normals for {} points",
                normals.len(),
                self.points.len()
            )));
        }
        if let Some(i) = normals
            .iter()
            .position(|n| !n.is_finite() || (n.norm() - 1.0).abs() > NORMAL_UNIT_TOL)
        {
            return Err(Error::InvalidCloud(format!(
                "normal {i} is not unit length"
            )));
        }
        self.normals = Some(normals);
        Ok(self)
    }

    pub fn without_normals(mut self) -> Self {
        self.normals = None;
        self
    }

    pub fn from_arrays(points: &[[f64; 3]]) -> Result<Self> {
        Self::new(points.iter().copied().map(Vec3::from_array).collect())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always false for a constructed cloud; present for API symmetry.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn point(&self, i: usize) -> Vec3 {
        self.points[i]
    }

    pub fn normals(&self) -> Option<&[Vec3]> {
        self.normals.as_deref()
    }

    pub fn has_normals(&self) -> bool {
        self.normals.is_some()
    }

    /// Every point (and normal) rotated by `r`.
    pub fn rotated(&self, r: &RotationMatrix) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| r.apply(*p)).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|ns| ns.iter().map(|n| r.apply(*n)).collect()),
        }
    }

    /// Rows reordered so that row `i` of the result is row `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<PointCloud> {
        if perm.len() != self.len() {
            return Err(Error::LengthMismatch("permutation length".into()));
        }
        Ok(PointCloud {
            points: perm.iter().map(|&i| self.points[i]).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|ns| perm.iter().map(|&i| ns[i]).collect()),
        })
    }

    /// Subset of rows in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<PointCloud> {
        if indices.is_empty() {
            return Err(Error::InvalidCloud("empty selection".into()));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::InvalidArgument(format!(
                "index {bad} out of range for {} points",
                self.len()
            )));
        }
        Ok(PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|ns| indices.iter().map(|&i| ns[i]).collect()),
        })
    }

    pub fn centroid(&self) -> Vec3 {
        let mut c = Vec3::ZERO;
        for p in &self.points {
            c += *p;
        }
        c.scale(1.0 / self.points.len() as f64)
    }

    /// Largest pairwise distance.
    pub fn diameter(&self) -> f64 {
        let mut best = 0.0f64;
        for (i, a) in self.points.iter().enumerate() {
            for b in &self.points[i + 1..] {
                best = best.max(a.distance_squared(*b));
            }
        }
        best.sqrt()
    }

    /// Index of the point nearest to `p`, lowest index on ties.
    pub fn nearest_index(&self, p: Vec3) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (i, q) in self.points.iter().enumerate() {
            let d = q.distance_squared(p);
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }

    pub(crate) fn from_parts_unchecked(points: Vec<Vec3>, normals: Option<Vec<Vec3>>) -> Self {
        Self { points, normals }
    }
}

//! Down-sampling and grouping operators.
//!
//! Everything here depends on the input only through pairwise distances or
//! through linear combinations of the coordinates, so each operator either
//! commutes with rotations of the cloud or is invariant to them. Ties are
//! always broken by the lowest index.

use std::fmt;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geom::Vec3;

/// Dense row-major matrix of reals.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Pairwise Euclidean distances, `n × n`.
pub type DistanceMatrix = Matrix;
/// Per-point features, `n × c`.
pub type FeatureMatrix = Matrix;
/// Caller-supplied weights standing in for a learned layer.
pub type LinearMap = Matrix;

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "matrix entries must be finite".into(),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let src = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, b) in dst.iter_mut().zip(src) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    /// Rows reordered so that row `i` of the result is row `perm[i]`.
    pub fn permute_rows(&self, perm: &[usize]) -> Matrix {
        Matrix::from_fn(perm.len(), self.cols, |i, j| self[(perm[i], j)])
    }

    /// Numerically stable softmax of every row.
    pub fn row_softmax(&self) -> Matrix {
        let mut out = self.clone();
        for i in 0..self.rows {
            let row = &mut out.data[i * self.cols..(i + 1) * self.cols];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Whitespace-separated rows, one line per row.
impl fmt::Display for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.rows {
            let line: Vec<String> = self.row(i).iter().map(|v| format!("{v:.9e}")).collect();
            writeln!(f, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

pub fn pairwise_distances(cloud: &PointCloud) -> DistanceMatrix {
    let pts = cloud.points();
    let n = pts.len();
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let d = pts[i].distance(pts[j]);
            m[(i, j)] = d;
            m[(j, i)] = d;
        }
    }
    m
}

/// First index picked by farthest-point sampling.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FpsStart {
    /// The point farthest from the origin.
    #[default]
    MaxNorm,
    Index(usize),
}

/// Index of the largest-norm point, lowest index on ties.
pub fn argmax_norm(points: &[Vec3]) -> usize {
    let mut best = (f64::NEG_INFINITY, 0);
    for (i, p) in points.iter().enumerate() {
        let n = p.norm_squared();
        if n > best.0 {
            best = (n, i);
        }
    }
    best.1
}

/// Greedy farthest-point sampling of `m` indices.
pub fn fps(cloud: &PointCloud, m: usize, start: FpsStart) -> Result<Vec<usize>> {
    let pts = cloud.points();
    let n = pts.len();
    if m == 0 || m > n {
        return Err(Error::InvalidArgument(format!(
            "fps needs 1 <= m <= {n}, got {m}"
        )));
    }
    let first = match start {
        FpsStart::MaxNorm => argmax_norm(pts),
        FpsStart::Index(k) if k < n => k,
        FpsStart::Index(k) => {
            return Err(Error::InvalidArgument(format!(
                "start index {k} out of range for {n} points"
            )))
        }
    };
    let mut selected = Vec::with_capacity(m);
    let mut min_dist = vec![f64::INFINITY; n];
    let mut taken = vec![false; n];
    let mut current = first;
    for _ in 0..m {
        selected.push(current);
        taken[current] = true;
        let c = pts[current];
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for (i, p) in pts.iter().enumerate() {
            let d = p.distance_squared(c);
            if d < min_dist[i] {
                min_dist[i] = d;
            }
            if !taken[i] && min_dist[i] > best.0 {
                best = (min_dist[i], i);
            }
        }
        current = best.1;
    }
    Ok(selected)
}

/// The `k` indices nearest to `center`, ascending by distance, lowest index
/// on ties.
pub fn k_nearest(points: &[Vec3], center: Vec3, k: usize) -> Vec<usize> {
    let mut order: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| (p.distance_squared(center), i))
        .collect();
    let k = k.min(order.len());
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < order.len() {
        order.select_nth_unstable_by(k, cmp);
        order.truncate(k);
    }
    order.sort_unstable_by(cmp);
    order.into_iter().map(|(_, i)| i).collect()
}

/// k-NN groups around each center (the center itself included).
pub fn knn(cloud: &PointCloud, center_indices: &[usize], k: usize) -> Result<Vec<Vec<usize>>> {
    let n = cloud.len();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "knn needs 1 <= k <= {n}, got {k}"
        )));
    }
    center_indices
        .iter()
        .map(|&c| {
            if c >= n {
                return Err(Error::InvalidArgument(format!(
                    "center index {c} out of range for {n} points"
                )));
            }
            Ok(k_nearest(cloud.points(), cloud.point(c), k))
        })
        .collect()
}

/// Symmetric Chamfer distance with squared point distances, mean-reduced in
/// each direction.
pub fn chamfer(a: &PointCloud, b: &PointCloud) -> f64 {
    directed_chamfer(a.points(), b.points()) + directed_chamfer(b.points(), a.points())
}

fn directed_chamfer(from: &[Vec3], to: &[Vec3]) -> f64 {
    let total: f64 = from
        .iter()
        .map(|p| {
            to.iter()
                .map(|q| p.distance_squared(*q))
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    total / from.len() as f64
}

/// Attention down-sampling with logits `map · D`: output point `r` is
/// `Σⱼ softmax(row r)ⱼ · pⱼ`.
pub fn attention_sample(cloud: &PointCloud, map: &LinearMap) -> Result<PointCloud> {
    if map.cols() != cloud.len() {
        return Err(Error::DimensionMismatch(format!(
            "map has {} columns for {} points",
            map.cols(),
            cloud.len()
        )));
    }
    let logits = map.matmul(&pairwise_distances(cloud))?;
    attention_sample_logits(cloud, &logits)
}

/// Attention down-sampling from raw `m × n` logits, bypassing the distance map.
pub fn attention_sample_logits(cloud: &PointCloud, logits: &Matrix) -> Result<PointCloud> {
    if logits.cols() != cloud.len() {
        return Err(Error::DimensionMismatch(format!(
            "logits have {} columns for {} points",
            logits.cols(),
            cloud.len()
        )));
    }
    if logits.rows() == 0 {
        return Err(Error::DimensionMismatch("no output rows".into()));
    }
    let weights = logits.row_softmax();
    let pts = cloud.points();
    let out = (0..weights.rows())
        .map(|r| {
            let mut acc = Vec3::ZERO;
            for (wt, p) in weights.row(r).iter().zip(pts) {
                acc += p.scale(*wt);
            }
            acc
        })
        .collect();
    PointCloud::new(out)
}

/// Output of [`relation_module`].
#[derive(Clone, Debug, PartialEq)]
pub struct Relation {
    /// Residual-refined features `W·(F·ψ) + F`.
    pub features: FeatureMatrix,
    /// Row-stochastic affinity `softmax((F·φa)(F·φb)ᵀ)`.
    pub weights: Matrix,
}

pub fn relation_module(
    features: &FeatureMatrix,
    phi_a: &LinearMap,
    phi_b: &LinearMap,
    psi: &LinearMap,
) -> Result<Relation> {
    let c = features.cols();
    if phi_a.rows() != c || phi_b.rows() != c || psi.rows() != c {
        return Err(Error::DimensionMismatch(format!(
            "maps must take {c} input channels"
        )));
    }
    if phi_a.cols() != phi_b.cols() {
        return Err(Error::DimensionMismatch(
            "phi_a and phi_b must map to the same width".into(),
        ));
    }
    if psi.cols() != c {
        return Err(Error::DimensionMismatch(format!(
            "psi must map {c} channels to {c}"
        )));
    }
    let a = features.matmul(phi_a)?;
    let b = features.matmul(phi_b)?;
    let weights = a.matmul(&b.transpose())?.row_softmax();
    let mut refined = weights.matmul(&features.matmul(psi)?)?;
    for (r, f) in refined.data.iter_mut().zip(&features.data) {
        *r += f;
    }
    Ok(Relation {
        features: refined,
        weights,
    })
}

/// Which index of the affinity matrix is averaged out before the argmax.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum AnchorAverage {
    /// Average over the first index: score of column `j` is `mean_i W[i][j]`.
    #[default]
    Column,
    /// Average over the second index: score of row `i` is `mean_j W[i][j]`.
    Row,
}

/// Argmax of the averaged affinity, lowest index on ties. `W` is expected to
/// be row-stochastic.
pub fn anchor_from_relation(w: &Matrix, average: AnchorAverage) -> usize {
    let scores: Vec<f64> = match average {
        AnchorAverage::Column => (0..w.cols())
            .map(|j| (0..w.rows()).map(|i| w[(i, j)]).sum::<f64>() / w.rows() as f64)
            .collect(),
        AnchorAverage::Row => (0..w.rows())
            .map(|i| w.row(i).iter().sum::<f64>() / w.cols() as f64)
            .collect(),
    };
    let mut best = (f64::NEG_INFINITY, 0);
    for (i, s) in scores.into_iter().enumerate() {
        if s > best.0 {
            best = (s, i);
        }
    }
    best.1
}

//! Rotation estimation between a source cloud and a target cloud.
//!
//! The anchor-based estimators pick one point in each cloud, build its
//! composed frame and return `R* = B_t·B_sᵀ`, which maps the source onto the
//! target when the two anchors correspond. The ICP baseline alternates
//! nearest-neighbor matching and a Kabsch fit, rotation only.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3, SVD};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::frames::{crf_basis, estimate_normals};
use crate::geom::{RotationMatrix, Vec3};
use crate::sampling::{
    anchor_from_relation, argmax_norm, relation_module, AnchorAverage, FeatureMatrix, LinearMap,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    CrfAnchorGeometric,
    CrfAnchorRelational,
    Icp,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::CrfAnchorGeometric => "crf_anchor_geometric",
            Method::CrfAnchorRelational => "crf_anchor_relational",
            Method::Icp => "icp",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "crf_anchor_geometric" | "geometric" => Ok(Method::CrfAnchorGeometric),
            "crf_anchor_relational" | "relational" => Ok(Method::CrfAnchorRelational),
            "icp" => Ok(Method::Icp),
            other => Err(Error::InvalidArgument(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimationReport {
    pub method: Method,
    /// Rotation taking the source onto the target.
    pub predicted_rotation: RotationMatrix,
    pub anchor_source: Option<usize>,
    pub anchor_target: Option<usize>,
    /// Average Distance between the target and the aligned source, when the
    /// two clouds have the same length (correspondence by index).
    pub ad: Option<f64>,
    /// `ad < 0.1 · diameter(target)`.
    pub correct: Option<bool>,
    /// ICP iterations performed; zero for the anchor methods.
    pub iterations: usize,
}

/// Inputs to the relation-module anchor: per-point features for each cloud
/// and the three maps of the module.
#[derive(Clone, Debug)]
pub struct RelationalInputs {
    pub source_features: FeatureMatrix,
    pub target_features: FeatureMatrix,
    pub phi_a: LinearMap,
    pub phi_b: LinearMap,
    pub psi: LinearMap,
    pub average: AnchorAverage,
}

#[derive(Clone, Debug)]
pub struct EstimateParams {
    pub k_neighbors: usize,
    pub eps: f64,
    pub icp_max_iter: usize,
    pub icp_tol: f64,
    pub relational: Option<RelationalInputs>,
}

impl Default for EstimateParams {
    fn default() -> Self {
        Self {
            k_neighbors: crate::DEFAULT_K,
            eps: crate::DEFAULT_EPS,
            icp_max_iter: 2000,
            icp_tol: 1e-7,
            relational: None,
        }
    }
}

/// The point farthest from the origin, lowest index on ties.
pub fn select_anchor_geometric(cloud: &PointCloud) -> usize {
    argmax_norm(cloud.points())
}

/// Anchor chosen by the relation module over per-point features.
pub fn select_anchor_relational(
    features: &FeatureMatrix,
    phi_a: &LinearMap,
    phi_b: &LinearMap,
    psi: &LinearMap,
    average: AnchorAverage,
) -> Result<usize> {
    let rel = relation_module(features, phi_a, phi_b, psi)?;
    Ok(anchor_from_relation(&rel.weights, average))
}

pub fn estimate_rotation(
    source: &PointCloud,
    target: &PointCloud,
    method: Method,
    params: &EstimateParams,
) -> Result<EstimationReport> {
    if method == Method::Icp {
        return icp_rotation(source, target, params.icp_max_iter, params.icp_tol);
    }
    let source = ensure_normals(source, params)?;
    let target = ensure_normals(target, params)?;
    let (a_s, a_t) = match method {
        Method::CrfAnchorGeometric => (
            select_anchor_geometric(&source),
            select_anchor_geometric(&target),
        ),
        Method::CrfAnchorRelational => {
            let rel = params.relational.as_ref().ok_or_else(|| {
                Error::InvalidArgument("relational anchor needs features and maps".into())
            })?;
            for (name, f, c) in [
                ("source", &rel.source_features, &source),
                ("target", &rel.target_features, &target),
            ] {
                if f.rows() != c.len() {
                    return Err(Error::DimensionMismatch(format!(
                        "{name} features have {} rows for {} points",
                        f.rows(),
                        c.len()
                    )));
                }
            }
            (
                select_anchor_relational(
                    &rel.source_features,
                    &rel.phi_a,
                    &rel.phi_b,
                    &rel.psi,
                    rel.average,
                )?,
                select_anchor_relational(
                    &rel.target_features,
                    &rel.phi_a,
                    &rel.phi_b,
                    &rel.psi,
                    rel.average,
                )?,
            )
        }
        Method::Icp => unreachable!(),
    };
    let normal = |c: &PointCloud, i: usize| c.normals().expect("normals ensured")[i];
    let b_s = crf_basis(source.point(a_s), normal(&source, a_s), params.eps)?.basis();
    let b_t = crf_basis(target.point(a_t), normal(&target, a_t), params.eps)?.basis();
    let predicted = b_t * b_s.transpose();
    let mut report = EstimationReport {
        method,
        predicted_rotation: predicted,
        anchor_source: Some(a_s),
        anchor_target: Some(a_t),
        ad: None,
        correct: None,
        iterations: 0,
    };
    score(&mut report, &source, &target);
    Ok(report)
}

fn ensure_normals(cloud: &PointCloud, params: &EstimateParams) -> Result<PointCloud> {
    if cloud.has_normals() {
        Ok(cloud.clone())
    } else {
        estimate_normals(cloud, params.k_neighbors, params.eps)
    }
}

fn score(report: &mut EstimationReport, source: &PointCloud, target: &PointCloud) {
    if source.len() != target.len() {
        return;
    }
    let ad = average_distance(
        target,
        std::slice::from_ref(source),
        &[report.predicted_rotation],
    )
    .expect("lengths checked");
    let diameter = target.diameter();
    report.ad = Some(ad);
    report.correct = (diameter > 0.0).then_some(ad < 0.1 * diameter);
}

/// Every point and normal rotated by `r`.
pub fn align(source: &PointCloud, r: &RotationMatrix) -> PointCloud {
    source.rotated(r)
}

/// `AD = 1/(K·N) Σₖ Σᵢ ‖pᵢ − R̂ₖ·p̂ₖᵢ‖`.
pub fn average_distance(
    target: &PointCloud,
    rotated: &[PointCloud],
    predicted: &[RotationMatrix],
) -> Result<f64> {
    if rotated.len() != predicted.len() || rotated.is_empty() {
        return Err(Error::LengthMismatch(format!(
            "{} rotated clouds and {} predictions",
            rotated.len(),
            predicted.len()
        )));
    }
    let n = target.len();
    if let Some(bad) = rotated.iter().find(|c| c.len() != n) {
        return Err(Error::LengthMismatch(format!(
            "rotated cloud has {} points, target {n}",
            bad.len()
        )));
    }
    let mut total = 0.0;
    for (cloud, r) in rotated.iter().zip(predicted) {
        for (p, q) in target.points().iter().zip(cloud.points()) {
            total += p.distance(r.apply(*q));
        }
    }
    Ok(total / (rotated.len() * n) as f64)
}

/// Fraction of trials with `ad < 0.1 · diameter`.
pub fn pose_accuracy(ad_values: &[f64], diameter: f64) -> f64 {
    if ad_values.is_empty() {
        return 0.0;
    }
    let threshold = 0.1 * diameter;
    ad_values.iter().filter(|&&ad| ad < threshold).count() as f64 / ad_values.len() as f64
}

/// Angle in degrees of `predicted · truth`, where `truth` maps the target
/// onto the source.
pub fn angle_error_deg(predicted: &RotationMatrix, truth: &RotationMatrix) -> f64 {
    (*predicted * *truth).angle().to_degrees()
}

/// Least-squares rotation `R` minimizing `Σ‖qᵢ − R·pᵢ‖²` (no translation).
pub fn kabsch_rotation(p: &PointCloud, q: &PointCloud) -> Result<RotationMatrix> {
    kabsch_points(p.points(), q.points())
}

fn kabsch_points(p: &[Vec3], q: &[Vec3]) -> Result<RotationMatrix> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch(format!(
            "{} source points, {} target points",
            p.len(),
            q.len()
        )));
    }
    // H = Σ pᵢ qᵢᵀ
    let mut h = Matrix3::<f64>::zeros();
    for (a, b) in p.iter().zip(q) {
        h += Vector3::new(a.x, a.y, a.z) * Vector3::new(b.x, b.y, b.z).transpose();
    }
    let svd = SVD::new(h, true, true);
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    if !(s[0] > 0.0) || s[1] <= 1e-10 * s[0] {
        return Err(Error::DegenerateConfiguration(format!(
            "cross-covariance rank < 2 (singular values {:.3e}, {:.3e}, {:.3e})",
            s[0], s[1], s[2]
        )));
    }
    let u = svd.u.expect("requested");
    let v_t = svd.v_t.expect("requested");
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let r = v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * u.transpose();
    let rows = [
        [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
        [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
        [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
    ];
    Ok(RotationMatrix::from_rows_unchecked(rows))
}

/// Rotation-only ICP: match every rotated source point to its nearest target
/// point, fit the incremental rotation with Kabsch, and stop when that
/// increment turns by less than `tol` radians or after `max_iter` rounds.
pub fn icp_rotation(
    source: &PointCloud,
    target: &PointCloud,
    max_iter: usize,
    tol: f64,
) -> Result<EstimationReport> {
    if max_iter == 0 {
        return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
    }
    let tgt = target.points();
    let mut r = RotationMatrix::IDENTITY;
    let mut moved: Vec<Vec3> = source.points().to_vec();
    let mut matched = vec![Vec3::ZERO; moved.len()];
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        for (m, p) in matched.iter_mut().zip(&moved) {
            *m = tgt[nearest(tgt, *p)];
        }
        let step = kabsch_points(&moved, &matched)?;
        r = step * r;
        for m in moved.iter_mut() {
            *m = step.apply(*m);
        }
        if step.angle() < tol {
            break;
        }
    }
    let mut report = EstimationReport {
        method: Method::Icp,
        predicted_rotation: r,
        anchor_source: None,
        anchor_target: None,
        ad: None,
        correct: None,
        iterations,
    };
    score(&mut report, source, target);
    Ok(report)
}

fn nearest(points: &[Vec3], p: Vec3) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (i, q) in points.iter().enumerate() {
        let dx = q.x - p.x;
        let dy = q.y - p.y;
        let dz = q.z - p.z;
        let d = dx * dx + dy * dy + dz * dz;
        if d < best.0 {
            best = (d, i);
        }
    }
    best.1
}

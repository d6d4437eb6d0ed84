//! Invariance and equivariance suite behind `centrifugal verify`.
//!
//! Every check draws random rotations (and points from the cloud), evaluates a
//! module's invariant and records the largest residual. Samples too close to
//! a singular configuration to be numerically meaningful are skipped and
//! counted. A [`Fault`] deliberately breaks one invariant so the harness can
//! be shown to catch it.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::cloud::PointCloud;
use crate::distribution::{build_mixture, uniform_weights, NoiseFrame};
use crate::error::{Error, Result};
use crate::estimation::{
    average_distance, estimate_rotation, kabsch_rotation, EstimateParams, Method,
};
use crate::frames::{axis_factorization, crf_basis, estimate_normals, pcrf_basis, subgroup_map};
use crate::geom::{random_rotation, random_unit_vector, rotation_about_z, RotationMatrix, Vec3};
use crate::io::normalize_unit_sphere;
use crate::sampling::{
    argmax_norm, attention_sample, chamfer, fps, knn, pairwise_distances, relation_module,
    FpsStart, Matrix,
};

/// Samples whose singular quantity (polar radius, normal tilt, eigen gap)
/// falls below this are skipped.
pub const CONDITIONING_GUARD: f64 = 1e-4;

/// Relative gap below which two competing distances count as a tie.
const TIE_GAP: f64 = 1e-9;

/// Deliberate corruption of one invariant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// Polar frames get an extra twist that depends on the query's x
    /// coordinate.
    PcrfSkew,
    /// The second polar frame is built from the world-frame normal.
    CrfWorldNormal,
    /// Relation weights are scaled off the simplex.
    SoftmaxUnnormalized,
}

impl Fault {
    pub const ALL: [Fault; 3] = [
        Fault::PcrfSkew,
        Fault::CrfWorldNormal,
        Fault::SoftmaxUnnormalized,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Fault::PcrfSkew => "pcrf-skew",
            Fault::CrfWorldNormal => "crf-world-normal",
            Fault::SoftmaxUnnormalized => "softmax-unnormalized",
        }
    }
}

impl fmt::Display for Fault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Fault {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Fault::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown fault '{s}'")))
    }
}

#[derive(Clone, Debug)]
pub struct VerifyConfig {
    /// Random samples per cheap check; expensive checks use fewer.
    pub trials: usize,
    pub seed: u64,
    pub eps: f64,
    pub k: usize,
    pub fault: Option<Fault>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            trials: 200,
            seed: 0,
            eps: crate::DEFAULT_EPS,
            k: crate::DEFAULT_K,
            fault: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub tolerance: f64,
    pub max_residual: f64,
    pub evaluated: usize,
    pub skipped: usize,
    pub note: Option<String>,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_residual <= self.tolerance
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<36} max_residual={:.3e} tol={:.0e} evaluated={} skipped={}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.max_residual,
            self.tolerance,
            self.evaluated,
            self.skipped
        )?;
        if let Some(note) = &self.note {
            write!(f, " ({note})")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct VerifyReport {
    pub n_points: usize,
    pub normals_source: &'static str,
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckResult::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed())
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "points: {}  normals: {}",
            self.n_points, self.normals_source
        )?;
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        let failed = self.failures().count();
        write!(
            f,
            "{}/{} checks passed",
            self.checks.len() - failed,
            self.checks.len()
        )
    }
}

struct Acc {
    result: CheckResult,
}

impl Acc {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Acc {
            result: CheckResult {
                name,
                tolerance,
                max_residual: 0.0,
                evaluated: 0,
                skipped: 0,
                note: None,
            },
        }
    }

    fn record(&mut self, residual: f64) {
        self.result.evaluated += 1;
        // NaN must fail
        if !(residual <= self.result.max_residual) {
            self.result.max_residual = if residual.is_nan() {
                f64::INFINITY
            } else {
                residual
            };
        }
    }

    fn skip(&mut self) {
        self.result.skipped += 1;
    }

    fn note(mut self, note: impl Into<String>) -> Self {
        self.result.note = Some(note.into());
        self
    }

    fn done(mut self) -> CheckResult {
        if self.result.evaluated == 0 && self.result.note.is_none() {
            self.result.note = Some("every sample near-degenerate".into());
        }
        self.result
    }
}

/// Points uniform in the unit ball.
pub fn random_cloud<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<PointCloud> {
    let points = (0..n)
        .map(|_| {
            let r: f64 = rng.random::<f64>().cbrt();
            random_unit_vector(rng).scale(r)
        })
        .collect();
    PointCloud::new(points)
}

struct Ctx<'a> {
    cfg: &'a VerifyConfig,
    cloud: PointCloud,
    normals: Vec<Vec3>,
    rng: ChaCha8Rng,
}

impl Ctx<'_> {
    fn pts(&self) -> &[Vec3] {
        self.cloud.points()
    }

    fn pick(&mut self) -> usize {
        self.rng.random_range(0..self.cloud.len())
    }

    fn polar(&self, q: Vec3) -> Result<RotationMatrix> {
        let b = pcrf_basis(q, self.cfg.eps)?.basis();
        Ok(match self.cfg.fault {
            Some(Fault::PcrfSkew) => b * rotation_about_z(1e-3 * q.x),
            _ => b,
        })
    }

    fn composed(&self, q: Vec3, n: Vec3) -> Result<RotationMatrix> {
        match self.cfg.fault {
            Some(Fault::CrfWorldNormal) => {
                Ok(pcrf_basis(q, self.cfg.eps)?.basis() * pcrf_basis(n, self.cfg.eps)?.basis())
            }
            _ => Ok(crf_basis(q, n, self.cfg.eps)?.basis()),
        }
    }

    fn gaussian_matrix(&mut self, rows: usize, cols: usize, scale: f64) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| {
            scale * self.rng.sample::<f64, _>(StandardNormal)
        })
    }
}

fn well_conditioned(q: Vec3) -> bool {
    let n = q.norm();
    n > CONDITIONING_GUARD && (q.x / n).hypot(q.y / n) > CONDITIONING_GUARD
}

fn cloud_residual(a: &[Vec3], b: &[Vec3]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.max_abs_diff(*y))
        .fold(0.0, f64::max)
}

/// Runs the suite on `cloud` after normalizing it to the unit sphere. Missing
/// normals are estimated; if the cloud is too degenerate for that, random
/// unit normals stand in.
pub fn run(cloud: &PointCloud, cfg: &VerifyConfig) -> Result<VerifyReport> {
    if cloud.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            got: cloud.len(),
        });
    }
    if cfg.trials == 0 {
        return Err(Error::InvalidArgument("trials must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let cloud = normalize_unit_sphere(cloud)?;
    let k = cfg.k.min(cloud.len());
    let (normals, normals_source) = match cloud.normals() {
        Some(ns) => (ns.to_vec(), "input"),
        None => match estimate_normals(&cloud, k, cfg.eps) {
            Ok(c) => (c.normals().expect("estimated").to_vec(), "estimated"),
            Err(Error::DegenerateNeighborhood { .. }) => (
                (0..cloud.len())
                    .map(|_| random_unit_vector(&mut rng))
                    .collect(),
                "random (estimation degenerate)",
            ),
            Err(e) => return Err(e),
        },
    };
    let cloud = PointCloud::with_normals(cloud.points().to_vec(), normals.clone())?;
    let mut ctx = Ctx {
        cfg,
        cloud,
        normals,
        rng,
    };

    let mut checks = vec![
        pcrf_rz_invariance(&mut ctx)?,
        pcrf_axis_fallback(&mut ctx)?,
        pcrf_conjugation(&mut ctx)?,
        rotation_factorization(&mut ctx)?,
        crf_invariance(&mut ctx)?,
        subgroup_equivariance(&mut ctx)?,
        normal_equivariance(&mut ctx)?,
        distance_invariance(&mut ctx),
    ];
    checks.extend(fps_knn_equivariance(&mut ctx)?);
    checks.extend(attention_checks(&mut ctx)?);
    checks.extend(chamfer_checks(&mut ctx)?);
    checks.extend(mixture_checks(&mut ctx)?);
    checks.extend(relation_checks(&mut ctx)?);
    checks.push(exact_recovery(&mut ctx)?);
    checks.push(kabsch_check(&mut ctx)?);
    checks.push(ad_oracle(&mut ctx)?);

    Ok(VerifyReport {
        n_points: ctx.cloud.len(),
        normals_source,
        checks,
    })
}

fn pcrf_rz_invariance(ctx: &mut Ctx) -> Result<CheckResult> {
    let mut acc = Acc::new("pcrf_rz_invariance", 1e-10);
    for _ in 0..ctx.cfg.trials {
        let (i, j) = (ctx.pick(), ctx.pick());
        let (q, p) = (ctx.pts()[i], ctx.pts()[j]);
        let rz = rotation_about_z(ctx.rng.random_range(0.0..TAU));
        if !well_conditioned(q) {
            acc.skip();
            continue;
        }
        let lhs = ctx.polar(rz.apply(q))?.apply_transpose(rz.apply(p));
        let rhs = ctx.polar(q)?.apply_transpose(p);
        acc.record(lhs.max_abs_diff(rhs));
    }
    Ok(acc.done())
}

/// On the polar axis a z-rotation fixes the query, so the fallback frame must
/// come back unchanged and orthonormal.
fn pcrf_axis_fallback(ctx: &mut Ctx) -> Result<CheckResult> {
    let mut acc = Acc::new("pcrf_axis_fallback_stable", 1e-12);
    for t in 0..ctx.cfg.trials.min(50) {
        let i = ctx.pick();
        let s = ctx.pts()[i].norm().max(0.5);
        let q = Vec3::new(0.0, 0.0, if t % 2 == 0 { s } else { -s });
        let rz = rotation_about_z(ctx.rng.random_range(0.0..TAU));
        let b = ctx.polar(q)?;
        let b_rot = ctx.polar(rz.apply(q))?;
        let ortho = (b.transpose() * b).max_abs_diff(&RotationMatrix::IDENTITY);
        let det = (b.determinant() - 1.0).abs();
        acc.record(b_rot.max_abs_diff(&b).max(ortho).max(det));
    }
    Ok(acc.done())
}

fn pcrf_conjugation(ctx: &mut Ctx) -> Result<CheckResult> {
    let mut acc = Acc::new("pcrf_conjugation", 1e-9);
    for _ in 0..ctx.cfg.trials {
        let (i, j) = (ctx.pick(), ctx.pick());
        let (q, p) = (ctx.pts()[i], ctx.pts()[j]);
        let r = random_rotation(&mut ctx.rng);
        if !well_conditioned(q) || !well_conditioned(r.apply(q)) {
            acc.skip();
            continue;
        }
        let b = ctx.polar(q)?;
        let b_rot = ctx.polar(r.apply(q))?;
        let m = b_rot.transpose() * r * b;
        let theta = m.entry(1, 0).atan2(m.entry(0, 0));
        let rz = rotation_about_z(theta);
        let reconstruction = r.max_abs_diff(&(b_rot * rz * b.transpose()));
        let coords = b_rot
            .apply_transpose(r.apply(p))
            .max_abs_diff(rz.apply(b.apply_transpose(p)));
        acc.record(reconstruction.max(coords));
    }
    Ok(acc.done())
}

fn rotation_factorization(ctx: &mut Ctx) -> Result<CheckResult> {
    let mut acc = Acc::new("rotation_factorization", 1e-9);
    for _ in 0..ctx.cfg.trials {
        let r = random_rotation(&mut ctx.rng);
        if r.angle() < CONDITIONING_GUARD {
            acc.skip();
            continue;
        }
        let (w, theta) = axis_factorization(&r, ctx.cfg.eps)?;
        let w = w.basis();
        acc.record(r.max_abs_diff(&(w * rotation_about_z(theta) * w.transpose())));
    }
    Ok(acc.done())
}

fn crf_invariance(ctx: &mut Ctx) -> Result<CheckResult> {
    let mut acc = Acc::new("crf_rotation_invariance", 1e-9);
    for _ in 0..ctx.cfg.trials {
        let (i, j) = (ctx.pick(), ctx.pick());
        let (q, n, p) = (ctx.pts()[i], ctx.normals[i], ctx.pts()[j]);
        let r = random_rotation(&mut ctx.rng);
        if !well_conditioned(q) || !well_conditioned(r.apply(q)) {
            acc.skip();
            continue;
        }
        let n1 = pcrf_basis(q, ctx.cfg.eps)?.transform(n);
        if n1.x.hypot(n1.y) <= CONDITIONING_GUARD {
            acc.skip();
            continue;
        }
        let lhs = ctx
            .composed(r.apply(q), r.apply(n))?
            .apply_transpose(r.apply(p));
        let rhs = ctx.composed(q, n)?.apply_transpose(p);
        acc.record(lhs.max_abs_diff(rhs));
    }
    Ok(acc.done())
}

/// `η(X) = W′ᵀXW` with `W′` the polar frame of the rotation axis of `R` and
/// `W` the polar frame of a cloud point: `η(RX) = Rz(θ)·η(X)`.
fn subgroup_equivariance(ctx: &mut Ctx) -> Result<CheckResult> {
    let mut acc = Acc::new("subgroup_equivariance", 1e-9);
    for _ in 0..ctx.cfg.trials {
        let i = ctx.pick();
        let q = ctx.pts()[i];
        let r = random_rotation(&mut ctx.rng);
        let x = random_rotation(&mut ctx.rng);
        if !well_conditioned(q) || r.angle() < CONDITIONING_GUARD {
            acc.skip();
            continue;
        }
        let (w_left, theta) = axis_factorization(&r, ctx.cfg.eps)?;
        let w_left = w_left.basis();
        let w = ctx.polar(q)?;
        let lhs = subgroup_map(&w_left, &(r * x), &w);
        let rhs = rotation_about_z(theta) * subgroup_map(&w_left, &x, &w);
        acc.record(lhs.max_abs_diff(&rhs));
    }
    Ok(acc.done())
}

fn sorted_sq_distances(pts: &[Vec3], center: Vec3) -> Vec<f64> {
    let mut d: Vec<f64> = pts.iter().map(|p| p.distance_squared(center)).collect();
    d.sort_by(f64::total_cmp);
    d
}

/// True when consecutive entries among the first `count + 1` sorted values
/// are closer than the tie gap.
fn has_near_tie(sorted: &[f64], count: usize) -> bool {
    sorted
        .windows(2)
        .take(count.min(sorted.len().saturating_sub(1)))
        .any(|w| w[1] - w[0] <= TIE_GAP * w[1].max(1e-300))
}

fn normal_equivariance(ctx: &mut Ctx) -> Result<CheckResult> {
    let mut acc = Acc::new("normal_equivariance", 1e-9);
    let k = ctx.cfg.k.min(ctx.cloud.len());
    let bare = ctx.cloud.clone().without_normals();
    let base = match estimate_normals(&bare, k, ctx.cfg.eps) {
        Ok(c) => c,
        Err(Error::DegenerateNeighborhood { .. }) => {
            return Ok(acc.note("skipped: neighborhoods degenerate").done());
        }
        Err(e) => return Err(e),
    };
    let base_normals = base.normals().expect("estimated");
    let pts = ctx.cloud.points().to_vec();
    let stable: Vec<bool> = pts
        .iter()
        .zip(base_normals)
        .map(|(p, n)| n.dot(*p).abs() > 1e-6 && !has_near_tie(&sorted_sq_distances(&pts, *p), k))
        .collect();
    for _ in 0..2 {
        let r = random_rotation(&mut ctx.rng);
        let rotated = match estimate_normals(&bare.rotated(&r), k, ctx.cfg.eps) {
            Ok(c) => c,
            Err(Error::DegenerateNeighborhood { .. }) => {
                acc.skip();
                continue;
            }
            Err(e) => return Err(e),
        };
        for ((n, n_rot), ok) in base_normals
            .iter()
            .zip(rotated.normals().expect("estimated"))
            .zip(&stable)
        {
            if *ok {
                acc.record(r.apply(*n).max_abs_diff(*n_rot));
            } else {
                acc.skip();
            }
        }
    }
    Ok(acc.done())
}

fn distance_invariance(ctx: &mut Ctx) -> CheckResult {
    let mut acc = Acc::new("pairwise_distance_invariance", 1e-12);
    let d = pairwise_distances(&ctx.cloud);
    for _ in 0..2 {
        let r = random_rotation(&mut ctx.rng);
        acc.record(d.max_abs_diff(&pairwise_distances(&ctx.cloud.rotated(&r))));
    }
    acc.done()
}

/// Smallest relative gap between the winner and runner-up over every
/// selection step of farthest-point sampling from the max-norm start.
fn fps_margin(pts: &[Vec3], selected: &[usize]) -> f64 {
    let norms = sorted_sq_distances(pts, Vec3::ZERO);
    let n = norms.len();
    let mut margin = if n > 1 {
        (norms[n - 1] - norms[n - 2]) / norms[n - 1].max(1e-300)
    } else {
        f64::INFINITY
    };
    let mut min_d = vec![f64::INFINITY; pts.len()];
    let mut taken = vec![false; pts.len()];
    for (step, &s) in selected.iter().enumerate() {
        taken[s] = true;
        for (m, p) in min_d.iter_mut().zip(pts) {
            *m = m.min(p.distance_squared(pts[s]));
        }
        if step + 1 == selected.len() {
            break;
        }
        let (mut best, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for (i, &d) in min_d.iter().enumerate() {
            if taken[i] {
                continue;
            }
            if d > best {
                second = best;
                best = d;
            } else if d > second {
                second = d;
            }
        }
        if second.is_finite() && best > 0.0 {
            margin = margin.min((best - second) / best);
        }
    }
    margin
}

fn fps_knn_equivariance(ctx: &mut Ctx) -> Result<Vec<CheckResult>> {
    let mut fps_acc = Acc::new("fps_equivariance", 0.0).note("residual = mismatched indices");
    let mut knn_acc = Acc::new("knn_equivariance", 0.0).note("residual = mismatched groups");
    let m = ctx.cloud.len().min(32);
    let k = ctx.cfg.k.min(ctx.cloud.len());
    let selected = fps(&ctx.cloud, m, FpsStart::MaxNorm)?;
    let fps_stable = fps_margin(ctx.pts(), &selected) > TIE_GAP;
    let groups = knn(&ctx.cloud, &selected, k)?;
    let group_stable: Vec<bool> = selected
        .iter()
        .map(|&c| !has_near_tie(&sorted_sq_distances(ctx.pts(), ctx.pts()[c]), k))
        .collect();
    for _ in 0..4 {
        let r = random_rotation(&mut ctx.rng);
        let rotated = ctx.cloud.rotated(&r);
        if fps_stable {
            let sel_rot = fps(&rotated, m, FpsStart::MaxNorm)?;
            let mismatches = selected
                .iter()
                .zip(&sel_rot)
                .filter(|(a, b)| a != b)
                .count();
            fps_acc.record(mismatches as f64);
        } else {
            fps_acc.skip();
        }
        let groups_rot = knn(&rotated, &selected, k)?;
        let mut mismatches = 0usize;
        for ((g, g_rot), ok) in groups.iter().zip(&groups_rot).zip(&group_stable) {
            if !ok {
                knn_acc.skip();
            } else if g != g_rot {
                mismatches += 1;
            }
        }
        knn_acc.record(mismatches as f64);
    }
    Ok(vec![fps_acc.done(), knn_acc.done()])
}

fn attention_checks(ctx: &mut Ctx) -> Result<Vec<CheckResult>> {
    let mut equi = Acc::new("attention_equivariance", 1e-10);
    let mut hull = Acc::new("attention_inside_unit_ball", 1e-12);
    let n = ctx.cloud.len();
    for _ in 0..4 {
        let map = ctx.gaussian_matrix(n.min(32), n, 1.0);
        let r = random_rotation(&mut ctx.rng);
        let s = attention_sample(&ctx.cloud, &map)?;
        let s_rot = attention_sample(&ctx.cloud.rotated(&r), &map)?;
        let expected: Vec<Vec3> = s.points().iter().map(|p| r.apply(*p)).collect();
        equi.record(cloud_residual(&expected, s_rot.points()));
        for p in s.points() {
            hull.record((p.norm() - 1.0).max(0.0));
        }
    }
    Ok(vec![equi.done(), hull.done()])
}

fn chamfer_checks(ctx: &mut Ctx) -> Result<Vec<CheckResult>> {
    let mut inv = Acc::new("chamfer_rotation_invariance", 1e-12);
    let mut sym = Acc::new("chamfer_symmetry", 1e-12);
    let mut zero = Acc::new("chamfer_identity_zero", 0.0);
    zero.record(chamfer(&ctx.cloud, &ctx.cloud).abs());
    for _ in 0..4 {
        let jittered: Vec<Vec3> = ctx
            .pts()
            .to_vec()
            .into_iter()
            .step_by(2)
            .map(|p| {
                let d = Vec3::new(
                    ctx.rng.sample(StandardNormal),
                    ctx.rng.sample(StandardNormal),
                    ctx.rng.sample(StandardNormal),
                );
                p + d.scale(0.05)
            })
            .collect();
        let b = PointCloud::new(jittered)?;
        let r = random_rotation(&mut ctx.rng);
        let c = chamfer(&ctx.cloud, &b);
        inv.record((c - chamfer(&ctx.cloud.rotated(&r), &b.rotated(&r))).abs());
        sym.record((c - chamfer(&b, &ctx.cloud)).abs());
    }
    Ok(vec![zero.done(), inv.done(), sym.done()])
}

/// Whether the cloud-anchored frame of the covariant sampler is uniquely
/// determined: unique farthest point and a unique point farthest from its
/// line.
fn covariant_anchor_stable(pts: &[Vec3]) -> bool {
    fn top_two_gap(values: &[f64]) -> (f64, f64) {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        (v[n - 1], v[n - 1] - v[n - 2])
    }
    let norms: Vec<f64> = pts.iter().map(|p| p.norm()).collect();
    let (top, gap) = top_two_gap(&norms);
    if gap <= TIE_GAP * top {
        return false;
    }
    let e1 = pts[argmax_norm(pts)].scale(1.0 / top);
    let orth: Vec<f64> = pts
        .iter()
        .map(|p| (*p - e1.scale(e1.dot(*p))).norm())
        .collect();
    let (top, gap) = top_two_gap(&orth);
    top > CONDITIONING_GUARD && gap > TIE_GAP * top
}

fn mixture_checks(ctx: &mut Ctx) -> Result<Vec<CheckResult>> {
    let mut sigma = Acc::new("mixture_sigma_invariance", 1e-12);
    let mut cov = Acc::new("covariant_sampling_equivariance", 1e-10);
    let base = build_mixture(&ctx.cloud, None)?;
    let r = random_rotation(&mut ctx.rng);
    let rotated = build_mixture(&ctx.cloud.rotated(&r), None)?;
    sigma.record((base.sigma() - rotated.sigma()).abs());
    if !covariant_anchor_stable(ctx.pts()) {
        return Ok(vec![
            sigma.done(),
            cov.note("skipped: cloud frame not uniquely determined")
                .done(),
        ]);
    }
    let base = base.with_noise_frame(NoiseFrame::Covariant);
    let rotated = rotated.with_noise_frame(NoiseFrame::Covariant);
    let weights = uniform_weights(ctx.cloud.len());
    for _ in 0..ctx.cfg.trials {
        let seed: u64 = ctx.rng.random();
        let x = base.sample_point(&weights, &mut ChaCha8Rng::seed_from_u64(seed))?;
        let x_rot = rotated.sample_point(&weights, &mut ChaCha8Rng::seed_from_u64(seed))?;
        cov.record(r.apply(x).max_abs_diff(x_rot));
    }
    Ok(vec![sigma.done(), cov.done()])
}

fn relation_checks(ctx: &mut Ctx) -> Result<Vec<CheckResult>> {
    let mut rows = Acc::new("relation_row_sums", 1e-12);
    let mut perm = Acc::new("relation_permutation_equivariance", 1e-12);
    let n = ctx.cloud.len().min(64);
    let (c, width) = (8, 4);
    for _ in 0..8 {
        let f = ctx.gaussian_matrix(n, c, 0.5);
        let phi_a = ctx.gaussian_matrix(c, width, 0.5);
        let phi_b = ctx.gaussian_matrix(c, width, 0.5);
        let psi = ctx.gaussian_matrix(c, c, 0.5);
        let mut rel = relation_module(&f, &phi_a, &phi_b, &psi)?;
        if ctx.cfg.fault == Some(Fault::SoftmaxUnnormalized) {
            rel.weights = Matrix::from_fn(n, n, |i, j| 1.01 * rel.weights[(i, j)]);
        }
        for i in 0..n {
            rows.record((rel.weights.row(i).iter().sum::<f64>() - 1.0).abs());
        }
        let mut order: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            order.swap(i, ctx.rng.random_range(0..=i));
        }
        let permuted = relation_module(&f.permute_rows(&order), &phi_a, &phi_b, &psi)?;
        let expected_w = Matrix::from_fn(n, n, |i, j| rel.weights[(order[i], order[j])]);
        let expected_f = rel.features.permute_rows(&order);
        perm.record(
            permuted
                .weights
                .max_abs_diff(&expected_w)
                .max(permuted.features.max_abs_diff(&expected_f)),
        );
    }
    Ok(vec![rows.done(), perm.done()])
}

fn exact_recovery(ctx: &mut Ctx) -> Result<CheckResult> {
    let mut acc = Acc::new("exact_recovery_ad", 1e-8);
    let pts = ctx.pts();
    let a = argmax_norm(pts);
    let q = pts[a];
    let n1 = pcrf_basis(q, ctx.cfg.eps)?.transform(ctx.normals[a]);
    let norms = sorted_sq_distances(pts, Vec3::ZERO);
    let m = norms.len();
    if norms[m - 1] - norms[m - 2] <= TIE_GAP * norms[m - 1] {
        return Ok(acc.note("skipped: farthest point not unique").done());
    }
    if n1.x.hypot(n1.y) <= CONDITIONING_GUARD {
        return Ok(acc.note("skipped: anchor normal radial").done());
    }
    let params = EstimateParams {
        k_neighbors: ctx.cfg.k,
        eps: ctx.cfg.eps,
        ..EstimateParams::default()
    };
    for _ in 0..ctx.cfg.trials.min(20) {
        let r = random_rotation(&mut ctx.rng);
        if !well_conditioned(r.apply(q)) {
            acc.skip();
            continue;
        }
        let source = ctx.cloud.rotated(&r);
        let report = estimate_rotation(&source, &ctx.cloud, Method::CrfAnchorGeometric, &params)?;
        acc.record(report.ad.unwrap_or(f64::INFINITY));
    }
    Ok(acc.done())
}

fn kabsch_check(ctx: &mut Ctx) -> Result<CheckResult> {
    let mut scatter = Matrix3::<f64>::zeros();
    for p in ctx.pts() {
        let v = nalgebra::Vector3::new(p.x, p.y, p.z);
        scatter += v * v.transpose();
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(scatter)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    let ratio = ev[1] / ev[0];
    let r = random_rotation(&mut ctx.rng);
    let rotated = ctx.cloud.rotated(&r);
    if ratio <= 1e-11 {
        let mut acc = Acc::new("kabsch_degenerate_detected", 0.0);
        let detected = matches!(
            kabsch_rotation(&ctx.cloud, &rotated),
            Err(Error::DegenerateConfiguration(_))
        );
        acc.record(if detected { 0.0 } else { 1.0 });
        return Ok(acc.done());
    }
    let mut acc = Acc::new("kabsch_recovery", 1e-9);
    if ratio <= 1e-9 {
        return Ok(acc.note("skipped: near the rank threshold").done());
    }
    for _ in 0..ctx.cfg.trials.min(20) {
        let r = random_rotation(&mut ctx.rng);
        let est = kabsch_rotation(&ctx.cloud, &ctx.cloud.rotated(&r))?;
        acc.record(est.max_abs_diff(&r));
    }
    Ok(acc.done())
}

fn ad_oracle(ctx: &mut Ctx) -> Result<CheckResult> {
    let mut acc = Acc::new("ad_oracle", 1e-12);
    for _ in 0..4 {
        let truths: Vec<RotationMatrix> = (0..4).map(|_| random_rotation(&mut ctx.rng)).collect();
        let preds: Vec<RotationMatrix> = (0..4).map(|_| random_rotation(&mut ctx.rng)).collect();
        let rotated: Vec<PointCloud> = truths.iter().map(|r| ctx.cloud.rotated(r)).collect();
        let lib = average_distance(&ctx.cloud, &rotated, &preds)?;
        let mut total = 0.0;
        for (cloud, pred) in rotated.iter().zip(&preds) {
            let m = pred.rows();
            for (p, s) in ctx.pts().iter().zip(cloud.points()) {
                let mut sq = 0.0;
                for row in 0..3 {
                    let x = m[row][0] * s.x + m[row][1] * s.y + m[row][2] * s.z;
                    sq += (p[row] - x) * (p[row] - x);
                }
                total += sq.sqrt();
            }
        }
        let oracle = total / (rotated.len() * ctx.cloud.len()) as f64;
        acc.record((lib - oracle).abs());
    }
    Ok(acc.done())
}

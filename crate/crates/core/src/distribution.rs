//! Continuous distribution over points, and through the composed frames,
//! over rotations.
//!
//! Every input point carries an isotropic Gaussian whose standard deviation
//! is the average nearest-neighbor distance of the cloud. A draw perturbs
//! every center independently and sums the perturbed centers with a weight
//! vector.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::frames::{crf_basis, pcrf_basis, Frame};
use crate::geom::{RotationMatrix, Vec3};
use crate::sampling::argmax_norm;

/// Coordinate frame in which the Gaussian offsets are drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NoiseFrame {
    /// Offsets drawn directly in world coordinates.
    #[default]
    World,
    /// Offsets drawn in a frame anchored to the cloud itself, so that the
    /// same random stream produces samples that rotate with the cloud.
    Covariant,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixtureDistribution {
    centers: Vec<Vec3>,
    sigma: f64,
    weights: Vec<f64>,
    noise_frame: NoiseFrame,
    anchor: RotationMatrix,
}

impl MixtureDistribution {
    pub fn centers(&self) -> &[Vec3] {
        &self.centers
    }

    /// Per-axis standard deviation of every component.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn noise_frame(&self) -> NoiseFrame {
        self.noise_frame
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn with_sigma(mut self, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        self.sigma = sigma;
        Ok(self)
    }

    pub fn with_noise_frame(mut self, frame: NoiseFrame) -> Self {
        self.noise_frame = frame;
        self
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        check_weights(&weights, self.centers.len())?;
        self.weights = weights;
        Ok(self)
    }

    /// `Σᵢ wᵢ·(pᵢ + σ·ξᵢ)` with `ξᵢ` standard normal, drawn in order of `i`.
    pub fn sample_point<R: Rng + ?Sized>(&self, weights: &[f64], rng: &mut R) -> Result<Vec3> {
        check_weights(weights, self.centers.len())?;
        let mut acc = Vec3::ZERO;
        for (center, w) in self.centers.iter().zip(weights) {
            let xi = Vec3::new(
                StandardNormal.sample(rng),
                StandardNormal.sample(rng),
                StandardNormal.sample(rng),
            );
            let offset = match self.noise_frame {
                NoiseFrame::World => xi,
                NoiseFrame::Covariant => self.anchor.apply(xi),
            };
            acc += (*center + offset.scale(self.sigma)).scale(*w);
        }
        Ok(acc)
    }

    /// Sample with the distribution's own weights.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec3> {
        self.sample_point(&self.weights, rng)
    }
}

fn check_weights(weights: &[f64], n: usize) -> Result<()> {
    if weights.len() != n {
        return Err(Error::LengthMismatch(format!(
            "{} weights for {n} components",
            weights.len()
        )));
    }
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::InvalidArgument("weights must be finite".into()));
    }
    Ok(())
}

/// Mixture over the cloud with `σ` equal to the mean nearest-neighbor
/// distance. Weights default to uniform `1/N`.
pub fn build_mixture(cloud: &PointCloud, weights: Option<Vec<f64>>) -> Result<MixtureDistribution> {
    let pts = cloud.points();
    let n = pts.len();
    if n < 2 {
        return Err(Error::TooFewPoints { needed: 2, got: n });
    }
    let weights = match weights {
        Some(w) => {
            check_weights(&w, n)?;
            w
        }
        None => uniform_weights(n),
    };
    let sigma = mean_nearest_neighbor_distance(pts);
    if !(sigma > 0.0) {
        return Err(Error::AllPointsCoincident);
    }
    Ok(MixtureDistribution {
        centers: pts.to_vec(),
        sigma,
        weights,
        noise_frame: NoiseFrame::World,
        anchor: covariant_anchor(pts),
    })
}

fn mean_nearest_neighbor_distance(pts: &[Vec3]) -> f64 {
    let mut nearest = vec![f64::INFINITY; pts.len()];
    for i in 0..pts.len() {
        for j in (i + 1)..pts.len() {
            let d = pts[i].distance_squared(pts[j]);
            nearest[i] = nearest[i].min(d);
            nearest[j] = nearest[j].min(d);
        }
    }
    nearest.iter().map(|d| d.sqrt()).sum::<f64>() / pts.len() as f64
}

/// Orthonormal frame determined by the cloud alone: first axis toward the
/// farthest-from-origin point `a`, second axis toward the point with the
/// largest component orthogonal to `a`. Rotating the cloud rotates this
/// frame. Clouds whose points are all on the line through `a` fall back to
/// the polar frame of `a`; clouds at the origin to the identity.
fn covariant_anchor(pts: &[Vec3]) -> RotationMatrix {
    let a = pts[argmax_norm(pts)];
    let Some(e1) = a.normalized(crate::DEFAULT_EPS) else {
        return RotationMatrix::IDENTITY;
    };
    let orth = |p: &Vec3| *p - e1.scale(e1.dot(*p));
    let best = argmax_norm(&pts.iter().map(orth).collect::<Vec<_>>());
    match orth(&pts[best]).normalized(crate::DEFAULT_EPS) {
        Some(e2) => RotationMatrix::from_columns_unchecked(e1, e2, e1.cross(e2)),
        None => pcrf_basis(a, crate::DEFAULT_EPS)
            .map(|f| f.basis())
            .unwrap_or(RotationMatrix::IDENTITY),
    }
}

/// Draws a point from the mixture and returns the composed frame at it,
/// borrowing the normal of the nearest cloud point (lowest index on ties).
pub fn sample_rotation<R: Rng + ?Sized>(
    dist: &MixtureDistribution,
    cloud: &PointCloud,
    weights: &[f64],
    rng: &mut R,
    eps: f64,
) -> Result<Frame> {
    let normals = cloud
        .normals()
        .ok_or_else(|| Error::InvalidCloud("sample_rotation needs normals".into()))?;
    if cloud.len() != dist.len() {
        return Err(Error::LengthMismatch(format!(
            "cloud has {} points, distribution {}",
            cloud.len(),
            dist.len()
        )));
    }
    let p = dist.sample_point(weights, rng)?;
    let nearest = cloud.nearest_index(p);
    Ok(crf_basis(p, normals[nearest], eps)?.with_query_index(nearest))
}

pub fn uniform_weights(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// Symmetric Dirichlet(α) weight vector.
pub fn dirichlet_weights<R: Rng + ?Sized>(n: usize, alpha: f64, rng: &mut R) -> Result<Vec<f64>> {
    let gamma = Gamma::new(alpha, 1.0)
        .map_err(|e| Error::InvalidArgument(format!("dirichlet alpha {alpha}: {e}")))?;
    let mut w: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
    let total: f64 = w.iter().sum();
    if total > 0.0 {
        w.iter_mut().for_each(|x| *x /= total);
    } else {
        // every draw underflowed; put all mass on one component
        let k = rng.random_range(0..n);
        w.iter_mut()
            .enumerate()
            .for_each(|(i, x)| *x = if i == k { 1.0 } else { 0.0 });
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::crf_basis;
    use crate::geom::{random_rotation, random_unit_vector};
    use crate::DEFAULT_EPS as EPS;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> PointCloud {
        PointCloud::new(
            (0..n)
                .map(|_| random_unit_vector(rng).scale(rng.random_range(0.2..1.0)))
                .collect(),
        )
        .unwrap()
    }

    fn one_hot(n: usize, k: usize) -> Vec<f64> {
        (0..n).map(|i| if i == k { 1.0 } else { 0.0 }).collect()
    }

    #[test]
    fn sigma_small_cases() {
        let two = PointCloud::from_arrays(&[[0.0, 0.0, 0.0], [0.0, 0.7, 0.0]]).unwrap();
        assert_eq!(build_mixture(&two, None).unwrap().sigma(), 0.7);
        let line = PointCloud::from_arrays(&[
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [2.0, 0.0, 0.0],
            [3.0, 0.0, 0.0],
        ])
        .unwrap();
        let m = build_mixture(&line, None).unwrap();
        assert_eq!(m.sigma(), 1.0);
        assert_eq!(m.weights(), &[0.25; 4]);
        let single = PointCloud::from_arrays(&[[1.0, 0.0, 0.0]]).unwrap();
        assert!(matches!(
            build_mixture(&single, None),
            Err(Error::TooFewPoints { .. })
        ));
    }

    #[test]
    fn sigma_matches_exhaustive_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = random_cloud(&mut rng, 1024);
        let pts = c.points();
        let mut total = 0.0;
        for i in 0..pts.len() {
            let mut best = f64::INFINITY;
            for j in 0..pts.len() {
                if i != j {
                    best = best.min(pts[i].distance(pts[j]));
                }
            }
            total += best;
        }
        let oracle = total / pts.len() as f64;
        assert!((build_mixture(&c, None).unwrap().sigma() - oracle).abs() < 1e-12);
    }

    #[test]
    fn degenerate_sigma_collapses_to_weighted_centers() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = random_cloud(&mut rng, 20);
        let m = build_mixture(&c, None).unwrap().with_sigma(1e-15).unwrap();
        let p = m.sample_point(&one_hot(20, 7), &mut rng).unwrap();
        assert!(p.max_abs_diff(c.point(7)) < 1e-12);
        let p = m.sample_point(&uniform_weights(20), &mut rng).unwrap();
        assert!(p.max_abs_diff(c.centroid()) < 1e-10);
        assert!(m.sample_point(&[1.0; 3], &mut rng).is_err());
    }

    #[test]
    fn one_hot_sample_mean_converges() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = random_cloud(&mut rng, 5);
        let s = 0.2;
        let m = build_mixture(&c, None).unwrap().with_sigma(s).unwrap();
        let w = one_hot(5, 2);
        let n = 100_000;
        let mut mean = Vec3::ZERO;
        for _ in 0..n {
            mean += m.sample_point(&w, &mut rng).unwrap();
        }
        let mean = mean.scale(1.0 / n as f64);
        assert!(mean.max_abs_diff(c.point(2)) < 4.0 * s / (n as f64).sqrt());
    }

    #[test]
    fn samples_are_linear_in_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c = random_cloud(&mut rng, 30);
        let m = build_mixture(&c, None).unwrap();
        let w1: Vec<f64> = (0..30).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w2: Vec<f64> = (0..30).map(|_| rng.random_range(-1.0..1.0)).collect();
        let sum: Vec<f64> = w1.iter().zip(&w2).map(|(a, b)| a + b).collect();
        let draw = |w: &[f64]| {
            m.sample_point(w, &mut ChaCha8Rng::seed_from_u64(99))
                .unwrap()
        };
        let lhs = draw(&sum);
        let rhs = draw(&w1) + draw(&w2) - draw(&[0.0; 30]);
        assert!(lhs.max_abs_diff(rhs) < 1e-12);
    }

    #[test]
    fn sigma_is_rotation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = random_cloud(&mut rng, 200);
        let r = random_rotation(&mut rng);
        let a = build_mixture(&c, None).unwrap().sigma();
        let b = build_mixture(&c.rotated(&r), None).unwrap().sigma();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn covariant_samples_rotate_with_cloud() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let c = random_cloud(&mut rng, 64);
            let r = random_rotation(&mut rng);
            let w = dirichlet_weights(64, 0.1, &mut rng).unwrap();
            let seed: u64 = rng.random();
            let a = build_mixture(&c, None)
                .unwrap()
                .with_noise_frame(NoiseFrame::Covariant);
            let b = build_mixture(&c.rotated(&r), None)
                .unwrap()
                .with_noise_frame(NoiseFrame::Covariant);
            let pa = a
                .sample_point(&w, &mut ChaCha8Rng::seed_from_u64(seed))
                .unwrap();
            let pb = b
                .sample_point(&w, &mut ChaCha8Rng::seed_from_u64(seed))
                .unwrap();
            assert!(r.apply(pa).max_abs_diff(pb) < 1e-10);
        }
    }

    #[test]
    fn sampled_rotations() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts = random_cloud(&mut rng, 40);
        let normals: Vec<Vec3> = (0..40).map(|_| random_unit_vector(&mut rng)).collect();
        let cloud = PointCloud::with_normals(pts.points().to_vec(), normals.clone()).unwrap();
        let m = build_mixture(&cloud, None)
            .unwrap()
            .with_sigma(1e-15)
            .unwrap();

        let f = sample_rotation(&m, &cloud, &one_hot(40, 11), &mut rng, EPS).unwrap();
        let expected = crf_basis(cloud.point(11), normals[11], EPS).unwrap();
        assert!(f.basis().max_abs_diff(&expected.basis()) < 1e-9);
        assert_eq!(f.query_index, Some(11));

        let m = build_mixture(&cloud, None).unwrap();
        for _ in 0..200 {
            let w = dirichlet_weights(40, 0.1, &mut rng).unwrap();
            let f = sample_rotation(&m, &cloud, &w, &mut rng, EPS).unwrap();
            assert!(f.basis().is_valid(1e-10));
        }
        assert!(sample_rotation(
            &m,
            &cloud.clone().without_normals(),
            &uniform_weights(40),
            &mut rng,
            EPS
        )
        .is_err());
    }

    #[test]
    fn sampled_rotations_are_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let pts = random_cloud(&mut rng, 50);
            let normals: Vec<Vec3> = (0..50).map(|_| random_unit_vector(&mut rng)).collect();
            let cloud = PointCloud::with_normals(pts.points().to_vec(), normals).unwrap();
            let r = random_rotation(&mut rng);
            let moved = cloud.rotated(&r);
            let w = dirichlet_weights(50, 0.1, &mut rng).unwrap();
            let seed: u64 = rng.random();
            let da = build_mixture(&cloud, None)
                .unwrap()
                .with_noise_frame(NoiseFrame::Covariant);
            let db = build_mixture(&moved, None)
                .unwrap()
                .with_noise_frame(NoiseFrame::Covariant);
            let fa = sample_rotation(&da, &cloud, &w, &mut ChaCha8Rng::seed_from_u64(seed), EPS)
                .unwrap();
            let fb = sample_rotation(&db, &moved, &w, &mut ChaCha8Rng::seed_from_u64(seed), EPS)
                .unwrap();
            assert_eq!(fa.query_index, fb.query_index);
            assert!((r * fa.basis()).max_abs_diff(&fb.basis()) < 1e-8);
        }
    }

    #[test]
    fn dirichlet_is_on_simplex() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w = dirichlet_weights(100, 0.1, &mut rng).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w.iter().all(|x| *x >= 0.0));
        assert!(dirichlet_weights(10, -1.0, &mut rng).is_err());
    }
}

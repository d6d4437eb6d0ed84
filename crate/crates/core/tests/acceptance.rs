//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::f64::consts::TAU;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use centrifugal::distribution::{build_mixture, uniform_weights, NoiseFrame};
use centrifugal::estimation::{
    average_distance, estimate_rotation, icp_rotation, pose_accuracy, EstimateParams, Method,
};
use centrifugal::frames::{
    axis_factorization, crf_basis, factor_rotation, pcrf_basis, subgroup_map,
};
use centrifugal::geom::{random_rotation, random_unit_vector, rotation_about_z};
use centrifugal::io::{
    fixture_path, normalize_unit_sphere, read_mesh, sample_mesh_surface, TriangleMesh,
};
use centrifugal::sampling::{
    anchor_from_relation, attention_sample, chamfer, fps, knn, pairwise_distances, relation_module,
    AnchorAverage, FpsStart, Matrix,
};
use centrifugal::{PointCloud, RotationMatrix, Vec3, DEFAULT_EPS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn gaussian_vec(rng: &mut ChaCha8Rng) -> Vec3 {
    Vec3::new(
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    )
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| {
        scale * rng.sample::<f64, _>(StandardNormal)
    })
}

fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> PointCloud {
    PointCloud::new((0..n).map(|_| gaussian_vec(rng)).collect()).unwrap()
}

fn elapsed_ok(start: Instant, budget: Duration) -> (bool, String) {
    let t = start.elapsed();
    (
        t < budget,
        format!("{:.3}s of {:.0}s", t.as_secs_f64(), budget.as_secs_f64()),
    )
}

/// Polar basis from its defining formulas, for queries off the polar axis.
fn polar_oracle(q: Vec3) -> [Vec3; 3] {
    let w = q.scale(1.0 / q.norm());
    let zw = Vec3::Z.cross(w);
    let u = zw.scale(1.0 / zw.norm());
    [u, w.cross(u), w]
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let start = Instant::now();
    let (mut generic, mut axis, mut oracle) = (0.0f64, 0.0f64, 0.0f64);
    for t in 0..1000 {
        let q = if t < 50 {
            let s = rng.random_range(0.1..2.0);
            Vec3::new(0.0, 0.0, if t % 2 == 0 { s } else { -s })
        } else {
            gaussian_vec(&mut rng)
        };
        let p = gaussian_vec(&mut rng);
        let rz = rotation_about_z(rng.random_range(0.0..TAU));
        let g = pcrf_basis(q, DEFAULT_EPS).unwrap();
        let g_rot = pcrf_basis(rz.apply(q), DEFAULT_EPS).unwrap();
        let r = g_rot.transform(rz.apply(p)).max_abs_diff(g.transform(p));
        if t < 50 {
            axis = axis.max(r);
        } else {
            generic = generic.max(r);
            let [u, v, w] = polar_oracle(q);
            oracle = oracle
                .max(g.u.max_abs_diff(u))
                .max(g.v.max_abs_diff(v))
                .max(g.w.max_abs_diff(w));
        }
    }
    let (fast, time) = elapsed_ok(start, Duration::from_secs(1));
    let worst = generic.max(axis);
    outcome(
        worst < 1e-10 && oracle < 1e-12 && fast,
        format!(
            "max residual {worst:.3e} (generic q {generic:.3e}, z-axis q {axis:.3e}), \
             basis vs formula {oracle:.3e}, {time}"
        ),
    )
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let start = Instant::now();
    let (mut conj, mut fact) = (0.0f64, 0.0f64);
    let mut n = 0;
    while n < 1000 {
        let q = gaussian_vec(&mut rng);
        let r = random_rotation(&mut rng);
        let rq = r.apply(q);
        if q.x.hypot(q.y) <= 1e-6 * q.norm() || rq.x.hypot(rq.y) <= 1e-6 * rq.norm() {
            continue;
        }
        n += 1;
        let theta = factor_rotation(&r, q, DEFAULT_EPS).unwrap();
        let b = pcrf_basis(q, DEFAULT_EPS).unwrap().basis();
        let b_rot = pcrf_basis(rq, DEFAULT_EPS).unwrap().basis();
        conj = conj.max(r.max_abs_diff(&(b_rot * rotation_about_z(theta) * b.transpose())));
        let (w, phi) = axis_factorization(&r, DEFAULT_EPS).unwrap();
        let w = w.basis();
        fact = fact.max(r.max_abs_diff(&(w * rotation_about_z(phi) * w.transpose())));
    }
    let (fast, time) = elapsed_ok(start, Duration::from_secs(1));
    outcome(
        conj < 1e-9 && fact < 1e-9 && fast,
        format!("R vs B'Rz(t)B^T {conj:.3e}, R vs W Rz(t) W^T {fact:.3e}, {time}"),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let start = Instant::now();
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let q = gaussian_vec(&mut rng);
        let n = random_unit_vector(&mut rng);
        let p = gaussian_vec(&mut rng);
        let r = random_rotation(&mut rng);
        let b = crf_basis(q, n, DEFAULT_EPS).unwrap();
        let b_rot = crf_basis(r.apply(q), r.apply(n), DEFAULT_EPS).unwrap();
        worst = worst.max(b_rot.transform(r.apply(p)).max_abs_diff(b.transform(p)));
    }
    let (fast, time) = elapsed_ok(start, Duration::from_secs(1));
    outcome(
        worst < 1e-9 && fast,
        format!("max |r(Rp) - r(p)| {worst:.3e}, {time}"),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let r = random_rotation(&mut rng);
        let x = random_rotation(&mut rng);
        let q = gaussian_vec(&mut rng);
        let (w_left, theta) = axis_factorization(&r, DEFAULT_EPS).unwrap();
        let w_left = w_left.basis();
        let w = pcrf_basis(q, DEFAULT_EPS).unwrap().basis();
        let lhs = subgroup_map(&w_left, &(r * x), &w);
        let rhs = rotation_about_z(theta) * subgroup_map(&w_left, &x, &w);
        worst = worst.max(lhs.max_abs_diff(&rhs));
    }
    outcome(
        worst < 1e-9,
        format!("max |eta(RX) - Rz(t) eta(X)| {worst:.3e} over 500 triples"),
    )
}

fn asymmetric_cloud(n: usize, seed: u64) -> PointCloud {
    let mesh = read_mesh(fixture_path("asymmetric.off")).unwrap();
    let raw =
        sample_mesh_surface(&mesh, n, &mut ChaCha8Rng::seed_from_u64(seed), DEFAULT_EPS).unwrap();
    normalize_unit_sphere(&raw).unwrap()
}

fn criterion_5() -> Outcome {
    let target = asymmetric_cloud(1024, 505);
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let params = EstimateParams::default();
    let start = Instant::now();
    let (mut geo_ads, mut icp_ads) = (Vec::new(), Vec::new());
    let (mut large, mut large_icp_correct) = (0, 0);
    for _ in 0..200 {
        let r = random_rotation(&mut rng);
        let source = target.rotated(&r);
        let geo = estimate_rotation(&source, &target, Method::CrfAnchorGeometric, &params).unwrap();
        geo_ads.push(geo.ad.unwrap());
        let icp = icp_rotation(&source, &target, params.icp_max_iter, params.icp_tol).unwrap();
        icp_ads.push(icp.ad.unwrap());
        if r.angle() > std::f64::consts::FRAC_PI_2 {
            large += 1;
            large_icp_correct += icp.correct.unwrap() as usize;
        }
    }
    let (fast, time) = elapsed_ok(start, Duration::from_secs(30));
    let diameter = target.diameter();
    let worst_ad = geo_ads.iter().copied().fold(0.0, f64::max);
    let geo_acc = pose_accuracy(&geo_ads, diameter);
    let icp_acc = pose_accuracy(&icp_ads, diameter);
    outcome(
        worst_ad < 1e-8 && geo_acc == 1.0 && icp_acc < geo_acc && fast,
        format!(
            "geometric max AD {worst_ad:.3e}, accuracy {geo_acc:.3}; ICP accuracy {icp_acc:.3} \
             ({large_icp_correct}/{large} on rotations > 90 deg); {time}"
        ),
    )
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let target = random_cloud(&mut rng, 1024);
        let rotated: Vec<PointCloud> = (0..16)
            .map(|_| target.rotated(&random_rotation(&mut rng)))
            .collect();
        let preds: Vec<RotationMatrix> = (0..16).map(|_| random_rotation(&mut rng)).collect();
        let lib = average_distance(&target, &rotated, &preds).unwrap();
        let mut total = 0.0;
        for (cloud, pred) in rotated.iter().zip(&preds) {
            let m = pred.to_row_major();
            for i in 0..target.len() {
                let (p, s) = (target.point(i), cloud.point(i));
                let x = m[0] * s.x + m[1] * s.y + m[2] * s.z;
                let y = m[3] * s.x + m[4] * s.y + m[5] * s.z;
                let z = m[6] * s.x + m[7] * s.y + m[8] * s.z;
                total += ((p.x - x).powi(2) + (p.y - y).powi(2) + (p.z - z).powi(2)).sqrt();
            }
        }
        let oracle = total / (16.0 * 1024.0);
        worst = worst.max((lib - oracle).abs());
    }
    outcome(
        worst < 1e-12,
        format!("max |AD - oracle| {worst:.3e} over 50 instances"),
    )
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let (mut dist, mut attn, mut sigma, mut sample) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let (mut fps_bad, mut knn_bad) = (0, 0);
    for _ in 0..100 {
        let cloud = random_cloud(&mut rng, 128);
        let r = random_rotation(&mut rng);
        let rotated = cloud.rotated(&r);

        dist = dist.max(pairwise_distances(&cloud).max_abs_diff(&pairwise_distances(&rotated)));

        let sel = fps(&cloud, 16, FpsStart::MaxNorm).unwrap();
        fps_bad += (sel != fps(&rotated, 16, FpsStart::MaxNorm).unwrap()) as usize;
        knn_bad += (knn(&cloud, &sel, 8).unwrap() != knn(&rotated, &sel, 8).unwrap()) as usize;

        let map = gaussian_matrix(&mut rng, 16, 128, 1.0);
        let a = attention_sample(&cloud, &map).unwrap();
        let a_rot = attention_sample(&rotated, &map).unwrap();
        for (p, p_rot) in a.points().iter().zip(a_rot.points()) {
            attn = attn.max(r.apply(*p).max_abs_diff(*p_rot));
        }

        let m = build_mixture(&cloud, None)
            .unwrap()
            .with_noise_frame(NoiseFrame::Covariant);
        let m_rot = build_mixture(&rotated, None)
            .unwrap()
            .with_noise_frame(NoiseFrame::Covariant);
        sigma = sigma.max((m.sigma() - m_rot.sigma()).abs());
        let w = uniform_weights(cloud.len());
        for _ in 0..10 {
            let seed: u64 = rng.random();
            let x = m
                .sample_point(&w, &mut ChaCha8Rng::seed_from_u64(seed))
                .unwrap();
            let x_rot = m_rot
                .sample_point(&w, &mut ChaCha8Rng::seed_from_u64(seed))
                .unwrap();
            sample = sample.max(r.apply(x).max_abs_diff(x_rot));
        }
    }
    let worst = dist.max(attn).max(sigma).max(sample);
    outcome(
        worst < 1e-10 && fps_bad == 0 && knn_bad == 0,
        format!(
            "distances {dist:.3e}, attention {attn:.3e}, sigma {sigma:.3e}, covariant samples \
             {sample:.3e}, fps mismatches {fps_bad}, knn mismatches {knn_bad} over 100 clouds"
        ),
    )
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let (mut rows, mut perm) = (0.0f64, 0.0f64);
    let mut zero_psi_exact = true;
    let mut anchor_bad = 0;
    for _ in 0..100 {
        let n = rng.random_range(2..48);
        let (c, width) = (6, 5);
        let f = gaussian_matrix(&mut rng, n, c, 1.0);
        let phi_a = gaussian_matrix(&mut rng, c, width, 0.5);
        let phi_b = gaussian_matrix(&mut rng, c, width, 0.5);
        let psi = gaussian_matrix(&mut rng, c, c, 0.5);
        let rel = relation_module(&f, &phi_a, &phi_b, &psi).unwrap();
        for i in 0..n {
            rows = rows.max((rel.weights.row(i).iter().sum::<f64>() - 1.0).abs());
        }
        let zero = relation_module(&f, &phi_a, &phi_b, &Matrix::zeros(c, c)).unwrap();
        zero_psi_exact &= zero.features == f;

        let mut order: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let p = relation_module(&f.permute_rows(&order), &phi_a, &phi_b, &psi).unwrap();
        let w_expected = Matrix::from_fn(n, n, |i, j| rel.weights[(order[i], order[j])]);
        perm = perm
            .max(p.weights.max_abs_diff(&w_expected))
            .max(p.features.max_abs_diff(&rel.features.permute_rows(&order)));

        // random row-stochastic matrix against a brute-force column-mean argmax
        let m = rng.random_range(1..40);
        let mut w = Matrix::from_fn(m, m, |_, _| rng.random::<f64>());
        if rng.random_bool(0.2) {
            let j = rng.random_range(0..m);
            for i in 0..m {
                w[(i, (j + 1) % m)] = w[(i, j)];
            }
        }
        for i in 0..m {
            let s: f64 = w.row(i).iter().sum();
            for j in 0..m {
                w[(i, j)] /= s;
            }
        }
        let mut best = (f64::NEG_INFINITY, 0);
        for j in 0..m {
            let mut col = 0.0;
            for i in 0..m {
                col += w[(i, j)];
            }
            if col / m as f64 > best.0 {
                best = (col / m as f64, j);
            }
        }
        anchor_bad += (anchor_from_relation(&w, AnchorAverage::Column) != best.1) as usize;
    }
    outcome(
        rows < 1e-12 && zero_psi_exact && perm < 1e-12 && anchor_bad == 0,
        format!(
            "row sums {rows:.3e}, psi=0 exact {zero_psi_exact}, permutation {perm:.3e}, \
             anchor mismatches {anchor_bad}/100"
        ),
    )
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let (mut sym, mut inv, mut oracle) = (0.0f64, 0.0f64, 0.0f64);
    let mut identity_zero = true;
    for _ in 0..50 {
        let (na, nb) = (rng.random_range(1..200), rng.random_range(1..200));
        let a = random_cloud(&mut rng, na);
        let b = random_cloud(&mut rng, nb);
        let r = random_rotation(&mut rng);
        let c = chamfer(&a, &b);
        identity_zero &= chamfer(&a, &a) == 0.0;
        sym = sym.max((c - chamfer(&b, &a)).abs());
        inv = inv.max((c - chamfer(&a.rotated(&r), &b.rotated(&r))).abs());
        let directed = |x: &PointCloud, y: &PointCloud| {
            let mut total = 0.0;
            for i in 0..x.len() {
                let mut best = f64::INFINITY;
                for j in 0..y.len() {
                    let d = x.point(i) - y.point(j);
                    best = best.min(d.x * d.x + d.y * d.y + d.z * d.z);
                }
                total += best;
            }
            total / x.len() as f64
        };
        oracle = oracle.max((c - (directed(&a, &b) + directed(&b, &a))).abs());
    }
    outcome(
        identity_zero && sym < 1e-12 && inv < 1e-12 && oracle < 1e-12,
        format!(
            "identity zero {identity_zero}, symmetry {sym:.3e}, rotation {inv:.3e}, \
             naive oracle {oracle:.3e} over 50 pairs"
        ),
    )
}

fn criterion_10() -> Outcome {
    // two disjoint triangles with areas 1 and 3
    let mesh = TriangleMesh::new(
        vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(2.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(5.0, 0.0, 0.0),
            Vec3::new(8.0, 0.0, 0.0),
            Vec3::new(5.0, 2.0, 0.0),
        ],
        vec![[0, 1, 2], [3, 4, 5]],
    )
    .unwrap();
    let n = 100_000;
    let cloud =
        sample_mesh_surface(&mesh, n, &mut ChaCha8Rng::seed_from_u64(1010), DEFAULT_EPS).unwrap();
    let small = cloud.points().iter().filter(|p| p.x < 3.0).count() as f64;
    let expected = n as f64 * 0.25;
    let sd = (n as f64 * 0.25 * 0.75).sqrt();
    let binomial = (small - expected).abs() <= 3.0 * sd;

    let mut norm_err = 0.0f64;
    let fixtures = ["asymmetric.off", "sphere.off", "plane.off", "collinear.xyz"];
    for name in &fixtures[..3] {
        let mesh = read_mesh(fixture_path(name)).unwrap();
        let c = sample_mesh_surface(&mesh, 1024, &mut ChaCha8Rng::seed_from_u64(7), DEFAULT_EPS)
            .unwrap();
        let c = normalize_unit_sphere(&c).unwrap();
        let max_norm = c.points().iter().map(|p| p.norm()).fold(0.0, f64::max);
        norm_err = norm_err
            .max((max_norm - 1.0).abs())
            .max(c.centroid().norm());
    }

    let start = Instant::now();
    let mut failed_runs = Vec::new();
    for name in fixtures {
        let status = Command::new(env!("CARGO_BIN_EXE_centrifugal"))
            .arg("verify")
            .arg("--input")
            .arg(fixture_path(name))
            .output()
            .expect("binary runs");
        if !status.status.success() {
            failed_runs.push(format!(
                "{name}: {}",
                String::from_utf8_lossy(&status.stdout)
                    .lines()
                    .chain(String::from_utf8_lossy(&status.stderr).lines())
                    .filter(|l| l.starts_with("FAIL") || l.starts_with("error"))
                    .collect::<Vec<_>>()
                    .join("; ")
            ));
        }
    }
    let (fast, time) = elapsed_ok(start, Duration::from_secs(60));
    outcome(
        binomial && norm_err < 1e-12 && failed_runs.is_empty() && fast,
        format!(
            "small-triangle count {small} vs {expected} +/- {:.0}, normalization error \
             {norm_err:.3e}, verify on {} fixtures in {time}{}",
            3.0 * sd,
            fixtures.len(),
            if failed_runs.is_empty() {
                String::new()
            } else {
                format!(", failures: {}", failed_runs.join(" | "))
            }
        ),
    )
}

fn main() {
    assert!(Path::new(&fixture_path("asymmetric.off")).exists());
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 10] = [
        ("PCRF basic-rotation invariance", criterion_1),
        ("PCRF conjugation and factorization", criterion_2),
        ("CRF full rotation invariance", criterion_3),
        ("subgroup equivariance", criterion_4),
        ("exact rotation recovery", criterion_5),
        ("Average Distance oracle", criterion_6),
        ("sampling equivariance", criterion_7),
        ("relation-module contracts", criterion_8),
        ("Chamfer contracts", criterion_9),
        ("ingestion and verify CLI", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        failed += !o.pass as usize;
        println!(
            "criterion {:>2} {} {name}: {}",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!(
        "acceptance: {}/{} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

//! `centrifugal` command-line front end.
//!
//! Exit codes: 0 success, 1 data error or failed verification, 2 usage error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::cloud::PointCloud;
use crate::distribution::{
    build_mixture, dirichlet_weights, sample_rotation, uniform_weights, NoiseFrame,
};
use crate::error::{Error, Result};
use crate::estimation::{
    angle_error_deg, estimate_rotation, pose_accuracy, EstimateParams, EstimationReport, Method,
    RelationalInputs,
};
use crate::frames::{crf_basis, estimate_normals};
use crate::geom::{random_rotation, Vec3};
use crate::io::{
    is_mesh_path, normalize_unit_sphere, parse_off, read_cloud, read_mesh, sample_mesh_surface,
    write_xyz,
};
use crate::sampling::{
    fps, k_nearest, pairwise_distances, relation_module, AnchorAverage, FeatureMatrix, FpsStart,
    LinearMap, Matrix,
};
use crate::verify::{self, Fault, VerifyConfig};

/// Shape used by `benchmark` when no input is given.
const BUILTIN_ASYMMETRIC: &str = include_str!("../fixtures/asymmetric.off");

#[derive(Parser, Debug)]
#[command(
    name = "centrifugal",
    version,
    about = "Centrifugal reference frames for rotation-invariant point clouds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Neighborhood size for normal estimation and grouping
    #[arg(long, default_value_t = crate::DEFAULT_K, value_parser = positive)]
    k: usize,
    /// Singularity guard
    #[arg(long, default_value_t = crate::DEFAULT_EPS, value_parser = non_negative)]
    eps: f64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a mesh (or read a cloud), normalize to the unit sphere, write XYZ
    Ingest {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 1024, value_parser = positive)]
        n_points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Replace face normals by k-NN estimates
        #[arg(long)]
        reestimate_normals: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Estimate normals and write a 6-column XYZ
    Normals {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Write k-NN neighborhoods expressed in the composed frame of each center
    Crf {
        #[arg(short, long)]
        input: PathBuf,
        /// CSV destination (stdout when absent)
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Comma-separated center indices
        #[arg(long, value_delimiter = ',', required_unless_present = "fps_centers")]
        centers: Vec<usize>,
        /// Use this many farthest-point-sampled centers instead
        #[arg(long, conflicts_with = "centers", value_parser = positive)]
        fps_centers: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Run the invariance suite and print the largest residual of every check
    Verify {
        /// Mesh or cloud; a random cloud in the unit ball when absent
        #[arg(short, long)]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 1024, value_parser = positive)]
        n_points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200, value_parser = positive)]
        trials: usize,
        /// Break one invariant on purpose; the run must then fail
        #[arg(long, value_parser = parse_fault)]
        inject_fault: Option<Fault>,
        #[command(flatten)]
        common: Common,
    },
    /// Estimate the rotation taking SOURCE onto TARGET
    Estimate {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long, default_value = "geometric", value_parser = parse_method)]
        method: Method,
        #[arg(long, default_value_t = 1024, value_parser = positive)]
        n_points: usize,
        /// Seed for mesh sampling and the relational maps
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = AverageArg::Column)]
        anchor_average: AverageArg,
        /// Write the relation-module affinity matrices here
        #[arg(long)]
        dump_relation: Option<PathBuf>,
        #[arg(long, default_value_t = 2000, value_parser = positive)]
        max_iter: usize,
        #[arg(long, default_value_t = 1e-7, value_parser = non_negative)]
        tol: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Random-rotation trials reporting AD and accuracy per method
    Benchmark {
        /// Mesh or cloud; the built-in asymmetric shape when absent
        #[arg(short, long)]
        input: Option<PathBuf>,
        /// CSV destination (stdout when absent)
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long, default_value_t = 1024, value_parser = positive)]
        n_points: usize,
        #[arg(long, default_value_t = 16, value_parser = positive)]
        trials: usize,
        /// Standard deviation of Gaussian noise added to the source points
        #[arg(long, default_value_t = 0.0, value_parser = non_negative)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(
            long = "method",
            value_delimiter = ',',
            default_values = ["geometric", "icp"],
            value_parser = parse_method
        )]
        methods: Vec<Method>,
        #[arg(long, default_value_t = 2000, value_parser = positive)]
        max_iter: usize,
        #[arg(long, default_value_t = 1e-7, value_parser = non_negative)]
        tol: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Draw rotations from the mixture distribution over the cloud
    SampleRot {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long, default_value_t = 10, value_parser = positive)]
        count: usize,
        #[arg(long, default_value_t = 1024, value_parser = positive)]
        n_points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = WeightsArg::Uniform)]
        weights: WeightsArg,
        /// Dirichlet concentration
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        /// Draw the Gaussian offsets in the cloud's own frame
        #[arg(long)]
        covariant: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Farthest-point sampling; prints the selected indices
    Fps {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long, value_parser = positive)]
        m: usize,
        /// "max-norm" or a point index
        #[arg(long, default_value = "max-norm", value_parser = parse_start)]
        start: FpsStart,
        /// Write the pairwise distance matrix here
        #[arg(long)]
        dump_distances: Option<PathBuf>,
    },
    /// Chamfer distance between two clouds
    Chamfer { a: PathBuf, b: PathBuf },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum AverageArg {
    Column,
    Row,
}

impl From<AverageArg> for AnchorAverage {
    fn from(a: AverageArg) -> Self {
        match a {
            AverageArg::Column => AnchorAverage::Column,
            AverageArg::Row => AnchorAverage::Row,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum WeightsArg {
    Uniform,
    Dirichlet,
}

fn positive(s: &str) -> std::result::Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

fn non_negative(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
        Ok(_) => Err("must be finite and non-negative".into()),
        Err(e) => Err(e.to_string()),
    }
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_fault(s: &str) -> std::result::Result<Fault, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_start(s: &str) -> std::result::Result<FpsStart, String> {
    if s == "max-norm" {
        return Ok(FpsStart::MaxNorm);
    }
    s.parse()
        .map(FpsStart::Index)
        .map_err(|_| format!("expected \"max-norm\" or an index, got {s:?}"))
}

/// Parses `args` (program name first), runs the command and maps the outcome
/// to an exit code.
pub fn run_from_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {}: {e}", e.kind());
            ExitCode::from(1)
        }
    }
}

fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(path) => fs::write(path, text).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Meshes are surface-sampled with face normals; clouds are read as is.
fn load(path: &Path, n_points: usize, seed: u64, eps: f64) -> Result<PointCloud> {
    if is_mesh_path(path) {
        let mesh = read_mesh(path)?;
        sample_mesh_surface(&mesh, n_points, &mut ChaCha8Rng::seed_from_u64(seed), eps)
    } else {
        read_cloud(path)
    }
}

fn with_normals(cloud: PointCloud, common: &Common) -> Result<PointCloud> {
    if cloud.has_normals() {
        Ok(cloud)
    } else {
        estimate_normals(&cloud, common.k.min(cloud.len()), common.eps)
    }
}

fn run(command: Command) -> Result<bool> {
    match command {
        Command::Ingest {
            input,
            output,
            n_points,
            seed,
            reestimate_normals,
            common,
        } => {
            let cloud = normalize_unit_sphere(&load(&input, n_points, seed, common.eps)?)?;
            let cloud = if reestimate_normals {
                let k = common.k.min(cloud.len());
                estimate_normals(&cloud.without_normals(), k, common.eps)?
            } else {
                cloud
            };
            write_xyz(&output, &cloud)?;
            println!("wrote {} points to {}", cloud.len(), output.display());
        }
        Command::Normals {
            input,
            output,
            common,
        } => {
            let cloud = read_cloud(&input)?.without_normals();
            let cloud = estimate_normals(&cloud, common.k.min(cloud.len()), common.eps)?;
            write_xyz(&output, &cloud)?;
            println!(
                "wrote {} points with normals to {}",
                cloud.len(),
                output.display()
            );
        }
        Command::Crf {
            input,
            output,
            centers,
            fps_centers,
            common,
        } => {
            let cloud = with_normals(read_cloud(&input)?, &common)?;
            let centers = match fps_centers {
                Some(m) => fps(&cloud, m, FpsStart::MaxNorm)?,
                None => centers,
            };
            emit(
                output.as_deref(),
                &crf_neighborhoods(&cloud, &centers, &common)?,
            )?;
        }
        Command::Verify {
            input,
            n_points,
            seed,
            trials,
            inject_fault,
            common,
        } => {
            let cloud = match &input {
                Some(path) => load(path, n_points, seed, common.eps)?,
                None => verify::random_cloud(n_points, &mut ChaCha8Rng::seed_from_u64(seed))?,
            };
            let cfg = VerifyConfig {
                trials,
                seed,
                eps: common.eps,
                k: common.k,
                fault: inject_fault,
            };
            let report = verify::run(&cloud, &cfg)?;
            if let Some(f) = inject_fault {
                println!("injected fault: {f}");
            }
            println!("{report}");
            return Ok(report.passed());
        }
        Command::Estimate {
            source,
            target,
            method,
            n_points,
            seed,
            anchor_average,
            dump_relation,
            max_iter,
            tol,
            common,
        } => {
            let source = load(&source, n_points, seed, common.eps)?;
            let target = load(&target, n_points, seed, common.eps)?;
            let mut params = EstimateParams {
                k_neighbors: common.k,
                eps: common.eps,
                icp_max_iter: max_iter,
                icp_tol: tol,
                relational: None,
            };
            if method == Method::CrfAnchorRelational {
                let rel =
                    relational_inputs(&source, &target, &common, seed, anchor_average.into())?;
                if let Some(path) = &dump_relation {
                    dump_relations(path, &rel)?;
                }
                params.relational = Some(rel);
            }
            let report = estimate_rotation(&source, &target, method, &params)?;
            print!("{}", report_csv(&report));
        }
        Command::Benchmark {
            input,
            output,
            n_points,
            trials,
            noise,
            seed,
            methods,
            max_iter,
            tol,
            common,
        } => {
            let raw = match &input {
                Some(path) => load(path, n_points, seed, common.eps)?,
                None => {
                    let mesh = parse_off(BUILTIN_ASYMMETRIC, Path::new("<builtin asymmetric>"))?;
                    sample_mesh_surface(
                        &mesh,
                        n_points,
                        &mut ChaCha8Rng::seed_from_u64(seed),
                        common.eps,
                    )?
                }
            };
            let target = with_normals(normalize_unit_sphere(&raw)?, &common)?;
            let params = EstimateParams {
                k_neighbors: common.k,
                eps: common.eps,
                icp_max_iter: max_iter,
                icp_tol: tol,
                relational: None,
            };
            let bench = benchmark(&target, trials, noise, seed, &methods, &params, &common)?;
            match &output {
                Some(path) => {
                    emit(Some(path), &bench.csv)?;
                    print!("{}", bench.summary);
                }
                None => print!("{}{}", bench.csv, bench.summary),
            }
        }
        Command::SampleRot {
            input,
            output,
            count,
            n_points,
            seed,
            weights,
            alpha,
            covariant,
            common,
        } => {
            let cloud = with_normals(load(&input, n_points, seed, common.eps)?, &common)?;
            let mut dist = build_mixture(&cloud, None)?;
            if covariant {
                dist = dist.with_noise_frame(NoiseFrame::Covariant);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut text = String::new();
            for _ in 0..count {
                let w = match weights {
                    WeightsArg::Uniform => uniform_weights(cloud.len()),
                    WeightsArg::Dirichlet => dirichlet_weights(cloud.len(), alpha, &mut rng)?,
                };
                let frame = sample_rotation(&dist, &cloud, &w, &mut rng, common.eps)?;
                writeln!(text, "{}", frame.basis()).expect("string write");
            }
            emit(output.as_deref(), &text)?;
        }
        Command::Fps {
            input,
            m,
            start,
            dump_distances,
        } => {
            let cloud = read_cloud(&input)?;
            if let Some(path) = &dump_distances {
                emit(Some(path), &pairwise_distances(&cloud).to_string())?;
            }
            let selected = fps(&cloud, m, start)?;
            let text: String = selected.iter().map(|i| format!("{i}\n")).collect();
            print!("{text}");
        }
        Command::Chamfer { a, b } => {
            let d = crate::sampling::chamfer(&read_cloud(&a)?, &read_cloud(&b)?);
            println!("{d:.12e}");
        }
    }
    Ok(true)
}

fn crf_neighborhoods(cloud: &PointCloud, centers: &[usize], common: &Common) -> Result<String> {
    let normals = cloud.normals().expect("normals ensured");
    let k = common.k.min(cloud.len());
    let mut text = String::from("center,neighbor,x,y,z\n");
    for &c in centers {
        if c >= cloud.len() {
            return Err(Error::InvalidArgument(format!(
                "center {c} out of range for {} points",
                cloud.len()
            )));
        }
        let frame = crf_basis(cloud.point(c), normals[c], common.eps)?;
        for j in k_nearest(cloud.points(), cloud.point(c), k) {
            let p = frame.transform(cloud.point(j));
            writeln!(text, "{c},{j},{:.9e},{:.9e},{:.9e}", p.x, p.y, p.z).expect("string write");
        }
    }
    Ok(text)
}

const REPORT_HEADER: &str =
    "method,ad,correct,anchor_src,anchor_tgt,iterations,r00,r01,r02,r10,r11,r12,r20,r21,r22";

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn report_csv(report: &EstimationReport) -> String {
    let rotation: Vec<String> = report
        .predicted_rotation
        .to_row_major()
        .iter()
        .map(|x| format!("{x:.12}"))
        .collect();
    format!(
        "{REPORT_HEADER}\n{},{},{},{},{},{},{}\n",
        report.method,
        opt(report.ad.map(|a| format!("{a:.6e}"))),
        opt(report.correct),
        opt(report.anchor_source),
        opt(report.anchor_target),
        report.iterations,
        rotation.join(",")
    )
}

/// Per-point features that do not change under rotation: norm, squared norm,
/// mean and max distance to the k nearest neighbors.
fn invariant_features(cloud: &PointCloud, k: usize) -> FeatureMatrix {
    let pts = cloud.points();
    let k = k.min(pts.len());
    let mut data = Vec::with_capacity(pts.len() * 4);
    for p in pts {
        let d: Vec<f64> = k_nearest(pts, *p, k)
            .iter()
            .map(|&j| pts[j].distance(*p))
            .collect();
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        let max = d.iter().copied().fold(0.0, f64::max);
        data.extend([p.norm(), p.norm_squared(), mean, max]);
    }
    Matrix::from_vec(pts.len(), 4, data).expect("sized")
}

fn random_map(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> LinearMap {
    Matrix::from_fn(rows, cols, |_, _| {
        0.5 * rng.sample::<f64, _>(StandardNormal)
    })
}

fn relational_inputs(
    source: &PointCloud,
    target: &PointCloud,
    common: &Common,
    seed: u64,
    average: AnchorAverage,
) -> Result<RelationalInputs> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(RelationalInputs {
        source_features: invariant_features(source, common.k),
        target_features: invariant_features(target, common.k),
        phi_a: random_map(4, 4, &mut rng),
        phi_b: random_map(4, 4, &mut rng),
        psi: random_map(4, 4, &mut rng),
        average,
    })
}

fn dump_relations(path: &Path, rel: &RelationalInputs) -> Result<()> {
    let mut text = String::new();
    for (name, f) in [
        ("source", &rel.source_features),
        ("target", &rel.target_features),
    ] {
        let r = relation_module(f, &rel.phi_a, &rel.phi_b, &rel.psi)?;
        writeln!(text, "# {name} {}x{}", r.weights.rows(), r.weights.cols()).expect("string write");
        writeln!(text, "{}", r.weights).expect("string write");
    }
    emit(Some(path), &text)
}

struct Benchmark {
    csv: String,
    summary: String,
}

fn benchmark(
    target: &PointCloud,
    trials: usize,
    noise: f64,
    seed: u64,
    methods: &[Method],
    params: &EstimateParams,
    common: &Common,
) -> Result<Benchmark> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0, noise).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let diameter = target.diameter();
    let mut csv = String::from("trial,method,ad,correct,angle_error_deg,anchor_src,anchor_tgt\n");
    let mut ads: Vec<Vec<f64>> = vec![Vec::new(); methods.len()];
    for trial in 0..trials {
        let r = random_rotation(&mut rng);
        let rotated = target.rotated(&r);
        let source = if noise > 0.0 {
            let pts: Vec<Vec3> = rotated
                .points()
                .iter()
                .map(|p| {
                    *p + Vec3::new(
                        jitter.sample(&mut rng),
                        jitter.sample(&mut rng),
                        jitter.sample(&mut rng),
                    )
                })
                .collect();
            PointCloud::with_normals(pts, rotated.normals().expect("normals ensured").to_vec())?
        } else {
            rotated
        };
        for (m, &method) in methods.iter().enumerate() {
            let mut params = params.clone();
            if method == Method::CrfAnchorRelational {
                params.relational = Some(relational_inputs(
                    &source,
                    target,
                    common,
                    seed,
                    AnchorAverage::Column,
                )?);
            }
            let report = estimate_rotation(&source, target, method, &params)?;
            let ad = report.ad.expect("same length");
            ads[m].push(ad);
            writeln!(
                csv,
                "{trial},{method},{ad:.6e},{},{:.6},{},{}",
                opt(report.correct),
                angle_error_deg(&report.predicted_rotation, &r),
                opt(report.anchor_source),
                opt(report.anchor_target)
            )
            .expect("string write");
        }
    }
    let mut summary = String::new();
    for (method, ad) in methods.iter().zip(&ads) {
        let mean = ad.iter().sum::<f64>() / ad.len() as f64;
        writeln!(
            summary,
            "# summary method={method} trials={} mean_ad={mean:.6e} accuracy={:.4}",
            ad.len(),
            pose_accuracy(ad, diameter)
        )
        .expect("string write");
    }
    Ok(Benchmark { csv, summary })
}

//! Monte Carlo estimates of the geometric mean error `int log d(x, a) dmu`,
//! codebooks built from `Lambda_k`, and the `R_k` diagnostic.

mod kdtree;

use num_bigint::BigInt;
use num_rational::BigRational;
use rayon::prelude::*;
use serde::Serialize;

use crate::carpet::{ratio_to_f64, Carpet};
use crate::error::{CarpetError, Result};
use crate::partition::{
    enumerate_lambda_k, exact_sum, shard_rng, square_bounds, DigitSampler, EnumOptions,
    PartitionLambdaK,
};
use crate::sum::{tree_reduce, NeumaierSum};

pub use kdtree::KdTree;

/// Every sampler and reduction splits its work into chunks of this size, so
/// results do not depend on the number of threads.
const SHARD: usize = 1 << 14;

pub const DEFAULT_CLOUD_SIZE: usize = 1_000_000;
pub const DEFAULT_DEPTH: usize = 40;
pub const DEFAULT_SEED: u64 = 0x5EED;
pub const DEFAULT_FLOOR: f64 = 1e-300;
const MIN_DEPTH: usize = 20;

#[derive(Clone, Debug)]
pub struct SampleCloud {
    pub points: Vec<[f64; 2]>,
    pub seed: u64,
    pub depth: usize,
}

impl SampleCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// `size` i.i.d. points of the measure, each truncated to `depth` digits.
pub fn draw_cloud(carpet: &Carpet, size: usize, depth: usize, seed: u64) -> Result<SampleCloud> {
    if size == 0 {
        return Err(CarpetError::Argument("cloud size must be >= 1".into()));
    }
    if depth < MIN_DEPTH {
        return Err(CarpetError::Argument(format!(
            "cloud depth must be >= {MIN_DEPTH} (got {depth})"
        )));
    }
    let sampler = DigitSampler::new(carpet);
    let points = (0..size.div_ceil(SHARD))
        .into_par_iter()
        .flat_map_iter(|s| {
            let mut rng = shard_rng(seed, s as u64);
            let count = SHARD.min(size - s * SHARD);
            let mut buf = Vec::with_capacity(depth);
            let sampler = &sampler;
            (0..count)
                .map(|_| {
                    sampler.fill(&mut rng, &mut buf, depth);
                    sampler.point(&buf)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(SampleCloud {
        points,
        seed,
        depth,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CodebookOrigin {
    LambdaCenters,
    Refined,
    External,
}

#[derive(Clone, Debug)]
pub struct Codebook {
    pub points: Vec<[f64; 2]>,
    pub origin: CodebookOrigin,
}

impl Codebook {
    pub fn new(points: Vec<[f64; 2]>, origin: CodebookOrigin) -> Result<Self> {
        if points.is_empty() {
            return Err(CarpetError::Argument("codebook must be nonempty".into()));
        }
        Ok(Codebook { points, origin })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// The centre of every approximate square of the partition.
pub fn lambda_codebook(carpet: &Carpet, lk: &PartitionLambdaK) -> Codebook {
    let points = lk
        .words
        .par_iter()
        .map(|w| {
            let [x, y, wd, ht] = square_bounds(carpet, w);
            [x + wd / 2.0, y + ht / 2.0]
        })
        .collect();
    Codebook {
        points,
        origin: CodebookOrigin::LambdaCenters,
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Distortion {
    /// Mean of `log max(d(x, a), floor)`.
    pub estimate: f64,
    /// Sample standard deviation over `sqrt(N)`.
    pub stderr: f64,
    pub samples: usize,
    /// Samples closer to the codebook than the floor.
    pub floored: usize,
    pub floor: f64,
}

fn nearest_logs(cloud: &SampleCloud, tree: &KdTree, floor: f64) -> Vec<(Vec<f64>, usize)> {
    cloud
        .points
        .par_chunks(SHARD)
        .map(|chunk| {
            let mut floored = 0;
            let logs = chunk
                .iter()
                .map(|&x| {
                    let (_, d2) = tree.nearest(x).expect("nonempty codebook");
                    let d = d2.sqrt();
                    if d < floor {
                        floored += 1;
                    }
                    d.max(floor).ln()
                })
                .collect();
            (logs, floored)
        })
        .collect()
}

fn chunked_sum(parts: Vec<NeumaierSum>) -> f64 {
    tree_reduce(parts, |a, b| a + b).map_or(0.0, |s| s.value())
}

/// Monte Carlo estimate of `int log d(x, a) dmu` with a distance floor.
pub fn log_distortion(cloud: &SampleCloud, codebook: &Codebook, floor: f64) -> Result<Distortion> {
    if cloud.is_empty() || codebook.is_empty() {
        return Err(CarpetError::Argument(
            "cloud and codebook must be nonempty".into(),
        ));
    }
    let tree = KdTree::new(&codebook.points);
    Ok(distortion_with(cloud, &tree, floor))
}

fn distortion_with(cloud: &SampleCloud, tree: &KdTree, floor: f64) -> Distortion {
    let chunks = nearest_logs(cloud, tree, floor);
    let n = cloud.len() as f64;
    let mean = chunked_sum(
        chunks
            .iter()
            .map(|(v, _)| v.iter().copied().sum::<NeumaierSum>())
            .collect(),
    ) / n;
    let ss = chunked_sum(
        chunks
            .iter()
            .map(|(v, _)| {
                v.iter()
                    .map(|x| (x - mean) * (x - mean))
                    .sum::<NeumaierSum>()
            })
            .collect(),
    );
    let stderr = if cloud.len() > 1 {
        (ss / (n - 1.0)).sqrt() / n.sqrt()
    } else {
        0.0
    };
    Distortion {
        estimate: mean,
        stderr,
        samples: cloud.len(),
        floored: chunks.iter().map(|(_, f)| f).sum(),
        floor,
    }
}

#[derive(Clone, Copy, Debug)]
pub struct RefineOptions {
    pub iters: usize,
    /// Lower bound on the distances inside the Weiszfeld weights.
    pub cell_floor: f64,
    /// Distance floor of the objective.
    pub floor: f64,
}

impl RefineOptions {
    /// `cell_floor = m^-(k+5)`.
    pub fn for_level(carpet: &Carpet, k: usize, iters: usize) -> Self {
        RefineOptions {
            iters,
            cell_floor: f64::from(carpet.m()).powi(-(k as i32 + 5)),
            floor: DEFAULT_FLOOR,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Refinement {
    pub codebook: Codebook,
    /// Objective of every iterate, starting with the input codebook.
    pub objectives: Vec<f64>,
    pub best_iter: usize,
}

/// Alternates nearest-centre assignment with the per-cell update
/// `c <- sum(x / d^2) / sum(1 / d^2)`, `d = max(|x - c|, cell_floor)`,
/// and returns the iterate with the smallest floored objective.
pub fn refine_codebook(
    cloud: &SampleCloud,
    codebook: &Codebook,
    opts: &RefineOptions,
) -> Result<Refinement> {
    if cloud.is_empty() || codebook.is_empty() {
        return Err(CarpetError::Argument(
            "cloud and codebook must be nonempty".into(),
        ));
    }
    let mut current = codebook.points.clone();
    let mut tree = KdTree::new(&current);
    let mut objectives = vec![distortion_with(cloud, &tree, opts.floor).estimate];
    let mut best = (0, current.clone());
    for iter in 1..=opts.iters {
        let assign: Vec<usize> = cloud
            .points
            .par_iter()
            .map(|&x| tree.nearest(x).expect("nonempty").0)
            .collect();
        let mut acc = vec![[NeumaierSum::new(); 3]; current.len()];
        for (x, &c) in cloud.points.iter().zip(&assign) {
            let ctr = current[c];
            let d = ((x[0] - ctr[0]).powi(2) + (x[1] - ctr[1]).powi(2))
                .sqrt()
                .max(opts.cell_floor);
            let w = 1.0 / (d * d);
            acc[c][0] += w * x[0];
            acc[c][1] += w * x[1];
            acc[c][2] += w;
        }
        for (c, a) in current.iter_mut().zip(&acc) {
            let total = a[2].value();
            if total > 0.0 {
                *c = [a[0].value() / total, a[1].value() / total];
            }
        }
        tree = KdTree::new(&current);
        let obj = distortion_with(cloud, &tree, opts.floor).estimate;
        if obj < objectives[best.0] {
            best = (iter, current.clone());
        }
        objectives.push(obj);
    }
    let origin = if best.0 == 0 {
        codebook.origin
    } else {
        CodebookOrigin::Refined
    };
    Ok(Refinement {
        codebook: Codebook {
            points: best.1,
            origin,
        },
        objectives,
        best_iter: best.0,
    })
}

/// Exact anchors of the partition: `sum mu log m^-|w|` and `sum mu log |F_w|`.
pub fn anchors(carpet: &Carpet, lk: &PartitionLambdaK) -> (f64, f64) {
    let log_m = f64::from(carpet.m()).ln();
    let weighted: Vec<BigRational> = lk
        .words
        .iter()
        .zip(&lk.masses)
        .map(|(w, mu)| mu * BigRational::from_integer(BigInt::from(w.len())))
        .collect();
    let lower = -log_m * ratio_to_f64(&exact_sum(&weighted));
    let upper = lk
        .words
        .iter()
        .zip(&lk.masses)
        .map(|(w, mu)| {
            let [_, _, wd, ht] = square_bounds(carpet, w);
            ratio_to_f64(mu) * wd.hypot(ht).ln()
        })
        .sum::<NeumaierSum>()
        .value();
    (lower, upper)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct QuantDiagnostics {
    pub k: usize,
    pub phi_k: usize,
    pub lower_anchor: f64,
    pub upper_anchor: f64,
    /// Distortion estimate of the partition-centre codebook.
    pub e_hat_est: f64,
    pub stderr: f64,
    pub floored: usize,
    /// `log(phi_k) / s0 + e_hat_est`.
    pub r_k: f64,
    /// Distortion of the refined codebook, when refinement ran.
    pub refined_est: Option<f64>,
}

impl QuantDiagnostics {
    /// `e_hat_est <= upper_anchor + 3 stderr`.
    pub fn below_upper_anchor(&self) -> bool {
        self.e_hat_est <= self.upper_anchor + 3.0 * self.stderr
    }
}

#[derive(Clone, Copy, Debug)]
pub struct QuantOptions {
    pub enum_opts: EnumOptions,
    pub floor: f64,
    pub refine_iters: usize,
}

impl Default for QuantOptions {
    fn default() -> Self {
        QuantOptions {
            enum_opts: EnumOptions::default(),
            floor: DEFAULT_FLOOR,
            refine_iters: 0,
        }
    }
}

pub fn r_k_diagnostic(
    carpet: &Carpet,
    k: usize,
    cloud: &SampleCloud,
    opts: &QuantOptions,
) -> Result<QuantDiagnostics> {
    let lk = enumerate_lambda_k(carpet, k, &opts.enum_opts)?;
    let (lower_anchor, upper_anchor) = anchors(carpet, &lk);
    let book = lambda_codebook(carpet, &lk);
    let dist = log_distortion(cloud, &book, opts.floor)?;
    let refined_est = if opts.refine_iters > 0 {
        let ro = RefineOptions {
            floor: opts.floor,
            ..RefineOptions::for_level(carpet, k, opts.refine_iters)
        };
        let r = refine_codebook(cloud, &book, &ro)?;
        Some(r.objectives[r.best_iter])
    } else {
        None
    };
    let phi = lk.phi_k();
    Ok(QuantDiagnostics {
        k,
        phi_k: phi,
        lower_anchor,
        upper_anchor,
        e_hat_est: dist.estimate,
        stderr: dist.stderr,
        floored: dist.floored,
        r_k: (phi as f64).ln() / carpet.params().s0 + dist.estimate,
        refined_est,
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct BallCheck {
    pub center: [f64; 2],
    pub eps: f64,
    /// Fraction of the cloud inside the closed ball.
    pub empirical: f64,
    pub stderr: f64,
    /// `C eps^t`.
    pub bound: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct BallReport {
    pub skipped: Option<String>,
    pub exponent: f64,
    pub constant: f64,
    pub checks: Vec<BallCheck>,
}

impl BallReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Compares the empirical mass of balls around `centers` sampled points with
/// `C eps^t`. A check passes when `empirical <= C eps^t + 3 stderr`, the
/// stderr being binomial. Skipped when a single row is occupied.
pub fn ball_bound_check(
    carpet: &Carpet,
    cloud: &SampleCloud,
    centers: usize,
    radii: &[f64],
    seed: u64,
) -> Result<BallReport> {
    let p = carpet.params();
    let mut report = BallReport {
        skipped: None,
        exponent: p.ball_exponent,
        constant: p.c_ball,
        checks: Vec::new(),
    };
    if !p.ball_bound_applicable() {
        report.skipped = Some("q_max = 1: the ball exponent vanishes".into());
        return Ok(report);
    }
    if cloud.is_empty() {
        return Err(CarpetError::Argument("cloud must be nonempty".into()));
    }
    let ctrs = draw_cloud(carpet, centers.max(1), cloud.depth, seed)?.points;
    let ctrs = &ctrs[..centers];
    let n = cloud.len() as f64;
    let r2: Vec<f64> = radii.iter().map(|r| r * r).collect();
    let counts: Vec<Vec<usize>> = ctrs
        .par_iter()
        .map(|c| {
            let mut counts = vec![0usize; radii.len()];
            for x in &cloud.points {
                let d2 = (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2);
                for (slot, r) in counts.iter_mut().zip(&r2) {
                    if d2 <= *r {
                        *slot += 1;
                    }
                }
            }
            counts
        })
        .collect();
    for (c, cnt) in ctrs.iter().zip(counts) {
        for (&eps, hits) in radii.iter().zip(cnt) {
            let emp = hits as f64 / n;
            let stderr = (emp * (1.0 - emp) / n).sqrt();
            let bound = p.c_ball * eps.powf(p.ball_exponent);
            report.checks.push(BallCheck {
                center: *c,
                eps,
                empirical: emp,
                stderr,
                bound,
                passed: emp <= bound + 3.0 * stderr,
            });
        }
    }
    Ok(report)
}

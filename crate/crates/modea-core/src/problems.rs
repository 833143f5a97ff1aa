//! Continuous single-objective test problems.
//!
//! Every base function is written so its global minimum value is exactly `0`
//! at the origin of the internal coordinate system. An instance applies a
//! random shift `z` and rotation `M` and evaluates `f(Mᵀ(x − z))`, so the
//! global optimizer of the instance is `x = z` and the optimum value stays `0`.
//! Search bounds are `[-5, 5]` on every dimension; shifts are drawn from
//! `U(-4, 4)` so the optimizer is always interior.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::rng::{stream, Stream};

/// Lower search bound on every dimension.
pub const LOWER_BOUND: f64 = -5.0;
/// Upper search bound on every dimension.
pub const UPPER_BOUND: f64 = 5.0;
/// Shifts are drawn from `U(-SHIFT_RANGE, SHIFT_RANGE)`.
pub const SHIFT_RANGE: f64 = 4.0;
/// Dimensionalities the catalog is exercised at.
pub const CATALOG_DIMS: [usize; 4] = [2, 5, 10, 20];

/// Base function identifiers. The first six form the training half of the
/// catalog, the last six are held out for out-of-distribution evaluation;
/// both halves mix unimodal, multimodal, separable and non-separable shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FnId {
    Sphere,
    Rosenbrock,
    Rastrigin,
    Ackley,
    Griewank,
    Schwefel12,
    Ellipsoid,
    Levy,
    BentCigar,
    Discus,
    Weierstrass,
    HappyCat,
}

/// Functions available for building training tasks.
pub const TRAIN_FNS: [FnId; 6] = [
    FnId::Sphere,
    FnId::Rosenbrock,
    FnId::Rastrigin,
    FnId::Ackley,
    FnId::Griewank,
    FnId::Schwefel12,
];

/// Functions held out for out-of-distribution problem evaluation.
pub const HOLDOUT_FNS: [FnId; 6] = [
    FnId::Ellipsoid,
    FnId::Levy,
    FnId::BentCigar,
    FnId::Discus,
    FnId::Weierstrass,
    FnId::HappyCat,
];

impl FnId {
    /// All twelve catalog functions, training half first.
    pub fn all() -> [FnId; 12] {
        [
            FnId::Sphere,
            FnId::Rosenbrock,
            FnId::Rastrigin,
            FnId::Ackley,
            FnId::Griewank,
            FnId::Schwefel12,
            FnId::Ellipsoid,
            FnId::Levy,
            FnId::BentCigar,
            FnId::Discus,
            FnId::Weierstrass,
            FnId::HappyCat,
        ]
    }

    /// Stable numeric code, used when deriving instance RNG streams.
    pub fn code(self) -> u64 {
        FnId::all().iter().position(|&f| f == self).unwrap() as u64
    }

    /// Catalog name as used in descriptors and reports.
    pub fn name(self) -> &'static str {
        match self {
            FnId::Sphere => "sphere",
            FnId::Rosenbrock => "rosenbrock",
            FnId::Rastrigin => "rastrigin",
            FnId::Ackley => "ackley",
            FnId::Griewank => "griewank",
            FnId::Schwefel12 => "schwefel12",
            FnId::Ellipsoid => "ellipsoid",
            FnId::Levy => "levy",
            FnId::BentCigar => "bent_cigar",
            FnId::Discus => "discus",
            FnId::Weierstrass => "weierstrass",
            FnId::HappyCat => "happy_cat",
        }
    }
}

/// Compact serializable description of a problem instance. Shift and rotation
/// are regenerated from `(fn_id, dim, seed)`, so descriptors stay small and
/// instances round-trip exactly.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProblemDescriptor {
    pub fn_id: FnId,
    pub dim: usize,
    pub seed: u64,
}

impl ProblemDescriptor {
    pub fn new(fn_id: FnId, dim: usize, seed: u64) -> Self {
        ProblemDescriptor { fn_id, dim, seed }
    }

    /// Stable identifier used in report tables and bounds files.
    pub fn label(&self) -> String {
        format!("{}-d{}-s{}", self.fn_id.name(), self.dim, self.seed)
    }

    pub fn build(&self) -> Result<ProblemInstance, CoreError> {
        ProblemInstance::new(self.fn_id, self.dim, self.seed)
    }
}

/// A concrete shifted/rotated problem with an evaluation counter.
#[derive(Debug)]
pub struct ProblemInstance {
    descriptor: ProblemDescriptor,
    /// Shift vector; also the global optimizer.
    shift: Vec<f64>,
    /// Rotation matrix, row-major `dim × dim`.
    rotation: Vec<f64>,
    evals: AtomicU64,
}

impl ProblemInstance {
    /// Build an instance deterministically from `(fn_id, dim, seed)`.
    pub fn new(fn_id: FnId, dim: usize, seed: u64) -> Result<Self, CoreError> {
        if dim == 0 {
            return Err(CoreError::InvalidArgument("dim must be >= 1".into()));
        }
        let mut rng = stream(seed, "problem-instance", &[fn_id.code(), dim as u64]);
        let shift: Vec<f64> = (0..dim)
            .map(|_| rng.random_range(-SHIFT_RANGE..SHIFT_RANGE))
            .collect();
        let rotation = random_rotation(dim, &mut rng);
        Ok(ProblemInstance {
            descriptor: ProblemDescriptor::new(fn_id, dim, seed),
            shift,
            rotation,
            evals: AtomicU64::new(0),
        })
    }

    pub fn descriptor(&self) -> &ProblemDescriptor {
        &self.descriptor
    }

    pub fn dim(&self) -> usize {
        self.descriptor.dim
    }

    /// `(lower, upper)` bound shared by every dimension.
    pub fn bounds(&self) -> (f64, f64) {
        (LOWER_BOUND, UPPER_BOUND)
    }

    /// The known optimum value (0 for the whole catalog).
    pub fn f_star(&self) -> f64 {
        0.0
    }

    /// The global optimizer in search coordinates.
    pub fn optimizer(&self) -> &[f64] {
        &self.shift
    }

    /// Euclidean diameter of the search box.
    pub fn diameter(&self) -> f64 {
        (UPPER_BOUND - LOWER_BOUND) * (self.dim() as f64).sqrt()
    }

    /// Number of `evaluate` calls so far.
    pub fn evals(&self) -> u64 {
        self.evals.load(Ordering::Relaxed)
    }

    pub fn reset_evals(&self) {
        self.evals.store(0, Ordering::Relaxed);
    }

    /// Evaluate `f(Mᵀ(x − z))`, incrementing the evaluation counter.
    /// Rejects points with the wrong dimension or non-finite entries.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64, CoreError> {
        let d = self.dim();
        if x.len() != d {
            return Err(CoreError::InvalidPoint(format!(
                "expected {} dims, got {}",
                d,
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::InvalidPoint("non-finite coordinate".into()));
        }
        self.evals.fetch_add(1, Ordering::Relaxed);
        // y = Mᵀ (x − z)
        let mut y = vec![0.0; d];
        for j in 0..d {
            let mut acc = 0.0;
            for i in 0..d {
                acc += self.rotation[i * d + j] * (x[i] - self.shift[i]);
            }
            y[j] = acc;
        }
        Ok(base_eval(self.descriptor.fn_id, &y))
    }
}

/// Evaluate a base function in internal (unshifted, unrotated) coordinates.
/// Each body is arranged so `base_eval(f, 0) == 0` exactly.
pub fn base_eval(fn_id: FnId, y: &[f64]) -> f64 {
    let d = y.len();
    let df = d as f64;
    match fn_id {
        FnId::Sphere => y.iter().map(|v| v * v).sum(),
        FnId::Rosenbrock => {
            // Classic valley with the optimum moved to the origin via z = y + 1.
            let z: Vec<f64> = y.iter().map(|v| v + 1.0).collect();
            (0..d.saturating_sub(1))
                .map(|i| {
                    let a = z[i] * z[i] - z[i + 1];
                    let b = z[i] - 1.0;
                    100.0 * a * a + b * b
                })
                .sum()
        }
        FnId::Rastrigin => y
            .iter()
            .map(|v| v * v - 10.0 * (2.0 * std::f64::consts::PI * v).cos() + 10.0)
            .sum(),
        FnId::Ackley => {
            let rms = (y.iter().map(|v| v * v).sum::<f64>() / df).sqrt();
            let mean_cos = y
                .iter()
                .map(|v| (2.0 * std::f64::consts::PI * v).cos())
                .sum::<f64>()
                / df;
            20.0 * (1.0 - (-0.2 * rms).exp()) + (std::f64::consts::E - mean_cos.exp())
        }
        FnId::Griewank => {
            let s = y.iter().map(|v| v * v).sum::<f64>() / 4000.0;
            let p: f64 = y
                .iter()
                .enumerate()
                .map(|(i, v)| (v / ((i + 1) as f64).sqrt()).cos())
                .product();
            s + (1.0 - p)
        }
        FnId::Schwefel12 => {
            let mut acc = 0.0;
            let mut prefix = 0.0;
            for &v in y {
                prefix += v;
                acc += prefix * prefix;
            }
            acc
        }
        FnId::Ellipsoid => y
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let e = if d == 1 {
                    0.0
                } else {
                    6.0 * i as f64 / (df - 1.0)
                };
                10f64.powf(e) * v * v
            })
            .sum(),
        FnId::Levy => {
            // Optimum moved to the origin: w = 1 + y/4.
            let w: Vec<f64> = y.iter().map(|v| 1.0 + v / 4.0).collect();
            let pi = std::f64::consts::PI;
            let mut acc = (pi * w[0]).sin().powi(2);
            for i in 0..d - 1 {
                let t = w[i] - 1.0;
                acc += t * t * (1.0 + 10.0 * (pi * w[i] + 1.0).sin().powi(2));
            }
            let t = w[d - 1] - 1.0;
            acc + t * t * (1.0 + (2.0 * pi * w[d - 1]).sin().powi(2))
        }
        FnId::BentCigar => {
            y[0] * y[0] + 1e6 * y.iter().skip(1).map(|v| v * v).sum::<f64>()
        }
        FnId::Discus => {
            1e6 * y[0] * y[0] + y.iter().skip(1).map(|v| v * v).sum::<f64>()
        }
        FnId::Weierstrass => {
            // Finite-sum Weierstrass, a = 0.5, b = 3, k = 0..=11. Computed as
            // Σ_i (w(y_i) − w(0)) so the value at the origin is exactly zero.
            const A: f64 = 0.5;
            const B: f64 = 3.0;
            const KMAX: u32 = 11;
            let term = |t: f64| -> f64 {
                let mut acc = 0.0;
                for k in 0..=KMAX {
                    let ak = A.powi(k as i32);
                    let bk = B.powi(k as i32);
                    acc += ak * (2.0 * std::f64::consts::PI * bk * (t + 0.5)).cos();
                }
                acc
            };
            let w0 = term(0.0);
            y.iter().map(|&v| term(v) - w0).sum()
        }
        FnId::HappyCat => {
            // Optimum moved to the origin: z = y − 1 puts the known optimum
            // (−1, …, −1) at y = 0.
            let z: Vec<f64> = y.iter().map(|v| v - 1.0).collect();
            let norm2: f64 = z.iter().map(|v| v * v).sum();
            let sum: f64 = z.iter().sum();
            let bowl = (norm2 - df).powi(2).powf(0.125);
            bowl + (0.5 * norm2 + sum) / df + 0.5
        }
    }
}

/// Draw a random rotation matrix (row-major `dim × dim`) via QR decomposition
/// of a standard-Gaussian matrix. Gram-Schmidt leaves the R diagonal positive,
/// which makes the factorization unique; a final column flip pins det = +1 so
/// the result is a proper rotation.
pub fn random_rotation(dim: usize, rng: &mut Stream) -> Vec<f64> {
    assert!(dim >= 1, "rotation needs dim >= 1");
    let normal = rand_distr::StandardNormal;
    // Columns of the Gaussian matrix, orthonormalized in place.
    let mut cols: Vec<Vec<f64>> = (0..dim)
        .map(|_| (0..dim).map(|_| rng.sample::<f64, _>(normal)).collect())
        .collect();
    for j in 0..dim {
        // Two projection passes for numerical robustness.
        for _ in 0..2 {
            for k in 0..j {
                let dot: f64 = (0..dim).map(|i| cols[k][i] * cols[j][i]).sum();
                for i in 0..dim {
                    cols[j][i] -= dot * cols[k][i];
                }
            }
        }
        let norm: f64 = (0..dim).map(|i| cols[j][i] * cols[j][i]).sum::<f64>().sqrt();
        if norm < 1e-12 {
            // Vanishingly unlikely for Gaussian draws; fall back to a basis vector.
            for i in 0..dim {
                cols[j][i] = if i == j { 1.0 } else { 0.0 };
            }
        } else {
            for i in 0..dim {
                cols[j][i] /= norm;
            }
        }
    }
    if det_sign(&cols, dim) < 0.0 {
        for i in 0..dim {
            cols[dim - 1][i] = -cols[dim - 1][i];
        }
    }
    let mut m = vec![0.0; dim * dim];
    for (j, col) in cols.iter().enumerate() {
        for i in 0..dim {
            m[i * dim + j] = col[i];
        }
    }
    m
}

/// Sign of the determinant of a matrix given as columns, via elimination.
fn det_sign(cols: &[Vec<f64>], dim: usize) -> f64 {
    let mut a = vec![0.0; dim * dim];
    for (j, col) in cols.iter().enumerate() {
        for i in 0..dim {
            a[i * dim + j] = col[i];
        }
    }
    let mut sign = 1.0;
    for p in 0..dim {
        let mut piv = p;
        for r in p + 1..dim {
            if a[r * dim + p].abs() > a[piv * dim + p].abs() {
                piv = r;
            }
        }
        if a[piv * dim + p] == 0.0 {
            return 0.0;
        }
        if piv != p {
            for c in 0..dim {
                a.swap(p * dim + c, piv * dim + c);
            }
            sign = -sign;
        }
        if a[p * dim + p] < 0.0 {
            sign = -sign;
        }
        for r in p + 1..dim {
            let f = a[r * dim + p] / a[p * dim + p];
            for c in p..dim {
                a[r * dim + c] -= f * a[p * dim + c];
            }
        }
    }
    sign
}

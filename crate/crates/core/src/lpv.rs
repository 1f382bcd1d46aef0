//! Polytopic LPV plants `ẋ = (A₀ + Σ ρᵢ Aᵢ) x + B u` over an axis-aligned
//! parameter box, plus parameter trajectories.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{lambda_min, rank, sym_sqrt, Mat};
use crate::projection::HyperRectangle;

/// Slack allowed when checking that a parameter lies in the box.
pub const PARAM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PolytopicLpvSystem {
    a0: Mat,
    ai: Vec<Mat>,
    b: Mat,
    q: Mat,
    r: Mat,
    param_box: Vec<(f64, f64)>,
}

impl PolytopicLpvSystem {
    pub fn new(a0: Mat, ai: Vec<Mat>, b: Mat, q: Mat, r: Mat, param_box: Vec<(f64, f64)>) -> Result<Self> {
        let n = a0.rows();
        if !a0.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "A0 is {:?}, must be square",
                a0.shape()
            )));
        }
        if ai.len() != param_box.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} parameter matrices but {} parameter intervals",
                ai.len(),
                param_box.len()
            )));
        }
        for (i, a) in ai.iter().enumerate() {
            if a.shape() != (n, n) {
                return Err(Error::DimensionMismatch(format!(
                    "A{} is {:?}, expected {n}x{n}",
                    i + 1,
                    a.shape()
                )));
            }
        }
        if b.rows() != n || b.cols() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "B is {:?}, expected {n}xm",
                b.shape()
            )));
        }
        let m = b.cols();
        if q.shape() != (n, n) {
            return Err(Error::DimensionMismatch(format!(
                "Q is {:?}, expected {n}x{n}",
                q.shape()
            )));
        }
        if r.shape() != (m, m) {
            return Err(Error::DimensionMismatch(format!(
                "R is {:?}, expected {m}x{m}",
                r.shape()
            )));
        }
        for (name, w) in [("Q", &q), ("R", &r)] {
            if w.asymmetry() > 1e-12 * (1.0 + w.norm_inf()) {
                return Err(Error::InvalidInput(format!("{name} must be symmetric")));
            }
        }
        if lambda_min(&q)? < -1e-10 {
            return Err(Error::InvalidInput("Q must be positive semidefinite".into()));
        }
        if lambda_min(&r)? <= 0.0 {
            return Err(Error::InvalidInput("R must be positive definite".into()));
        }
        for (i, &(lo, hi)) in param_box.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidInput(format!(
                    "parameter interval {} = [{lo}, {hi}] is empty or non-finite",
                    i + 1
                )));
            }
        }
        Ok(Self {
            a0,
            ai,
            b,
            q: q.symmetrize(),
            r: r.symmetrize(),
            param_box,
        })
    }

    /// The example plant `A(ρ) = [−ρ, 1; −0.2, 1]`, `B = [1; 0.5]`,
    /// `Q = I`, `R = 2`, `ρ ∈ [0.5, 2]`.
    pub fn case_study() -> Self {
        Self::new(
            Mat::from_rows(&[[0.0, 1.0], [-0.2, 1.0]]),
            vec![Mat::from_rows(&[[-1.0, 0.0], [0.0, 0.0]])],
            Mat::from_rows(&[[1.0], [0.5]]),
            Mat::identity(2),
            Mat::from_rows(&[[2.0]]),
            vec![(0.5, 2.0)],
        )
        .expect("case-study data is consistent")
    }

    pub fn n(&self) -> usize {
        self.a0.rows()
    }

    pub fn m(&self) -> usize {
        self.b.cols()
    }

    pub fn p(&self) -> usize {
        self.ai.len()
    }

    pub fn a0(&self) -> &Mat {
        &self.a0
    }

    pub fn ai(&self) -> &[Mat] {
        &self.ai
    }

    pub fn b(&self) -> &Mat {
        &self.b
    }

    pub fn q(&self) -> &Mat {
        &self.q
    }

    pub fn r(&self) -> &Mat {
        &self.r
    }

    pub fn param_box(&self) -> &[(f64, f64)] {
        &self.param_box
    }

    pub fn contains_param(&self, rho: &[f64]) -> bool {
        rho.len() == self.p()
            && rho
                .iter()
                .zip(&self.param_box)
                .all(|(r, (lo, hi))| *r >= lo - PARAM_TOL && *r <= hi + PARAM_TOL)
    }

    /// Clamps a parameter vector onto the box.
    pub fn clamp_param(&self, rho: &[f64]) -> Vec<f64> {
        rho.iter()
            .zip(&self.param_box)
            .map(|(r, (lo, hi))| r.clamp(*lo, *hi))
            .collect()
    }

    /// `A(ρ) = A₀ + Σ ρᵢ Aᵢ`.
    pub fn eval_a(&self, rho: &[f64]) -> Result<Mat> {
        if rho.len() != self.p() {
            return Err(Error::DimensionMismatch(format!(
                "parameter has {} entries, system has p = {}",
                rho.len(),
                self.p()
            )));
        }
        if !self.contains_param(rho) {
            return Err(Error::ParamOutOfRange { rho: rho.to_vec() });
        }
        Ok(self.eval_a_unchecked(rho))
    }

    /// `A(ρ)` without the box check.
    pub fn eval_a_unchecked(&self, rho: &[f64]) -> Mat {
        self.ai
            .iter()
            .zip(rho)
            .fold(self.a0.clone(), |acc, (a, r)| &acc + &a.scale(*r))
    }

    /// `A(ρ) − B K`.
    pub fn closed_loop(&self, rho: &[f64], k: &Mat) -> Result<Mat> {
        if k.shape() != (self.m(), self.n()) {
            return Err(Error::DimensionMismatch(format!(
                "gain is {:?}, expected {}x{}",
                k.shape(),
                self.m(),
                self.n()
            )));
        }
        Ok(&self.eval_a(rho)? - &(&self.b * k))
    }

    /// Vertices of the parameter box in lexicographic low/high order
    /// (first coordinate most significant).
    pub fn param_vertices(&self) -> Vec<Vec<f64>> {
        box_vertices(&self.param_box)
    }

    /// Uniform grid with `density` points per non-degenerate axis (endpoints
    /// included); a degenerate axis contributes its single value.
    pub fn param_grid(&self, density: usize) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> = self
            .param_box
            .iter()
            .map(|&(lo, hi)| linspace(lo, hi, density))
            .collect();
        cartesian(&axes)
    }

    pub fn to_spec(&self) -> SystemSpec {
        SystemSpec {
            n: self.n(),
            m: self.m(),
            p: self.p(),
            a0: self.a0.to_rows(),
            ai: self.ai.iter().map(Mat::to_rows).collect(),
            b: self.b.to_rows(),
            q: self.q.to_rows(),
            r: self.r.to_rows(),
            param_box: self.param_box.iter().map(|&(lo, hi)| [lo, hi]).collect(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: SystemSpec =
            serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("system spec: {e}")))?;
        spec.into_system()
    }
}

pub(crate) fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if lo == hi || count <= 1 {
        return vec![lo];
    }
    (0..count)
        .map(|i| {
            if i + 1 == count {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (count - 1) as f64
            }
        })
        .collect()
}

pub(crate) fn cartesian(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    axes.iter().fold(vec![Vec::new()], |acc, axis| {
        acc.iter()
            .flat_map(|prefix| {
                axis.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push(*v);
                    p
                })
            })
            .collect()
    })
}

pub(crate) fn box_vertices(bounds: &[(f64, f64)]) -> Vec<Vec<f64>> {
    let axes: Vec<Vec<f64>> = bounds.iter().map(|&(lo, hi)| vec![lo, hi]).collect();
    cartesian(&axes)
}

/// JSON form of a system: matrices are row-major nested arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    #[serde(rename = "A0")]
    pub a0: Vec<Vec<f64>>,
    #[serde(rename = "Ai")]
    pub ai: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    #[serde(rename = "R")]
    pub r: Vec<Vec<f64>>,
    pub param_box: Vec<[f64; 2]>,
}

impl SystemSpec {
    pub fn into_system(self) -> Result<PolytopicLpvSystem> {
        let mat = |name: &str, rows: &[Vec<f64>], r: usize, c: usize| -> Result<Mat> {
            let m = Mat::try_from_rows(rows).map_err(|e| Error::InvalidInput(format!("field \"{name}\": {e}")))?;
            if m.shape() != (r, c) {
                return Err(Error::InvalidInput(format!(
                    "field \"{name}\" is {}x{}, expected {r}x{c}",
                    m.rows(),
                    m.cols()
                )));
            }
            Ok(m)
        };
        let (n, m, p) = (self.n, self.m, self.p);
        if n == 0 || m == 0 {
            return Err(Error::InvalidInput("n and m must be positive".into()));
        }
        if self.ai.len() != p {
            return Err(Error::InvalidInput(format!(
                "field \"Ai\" has {} matrices, expected p = {p}",
                self.ai.len()
            )));
        }
        if self.param_box.len() != p {
            return Err(Error::InvalidInput(format!(
                "field \"param_box\" has {} intervals, expected p = {p}",
                self.param_box.len()
            )));
        }
        let a0 = mat("A0", &self.a0, n, n)?;
        let ai = self
            .ai
            .iter()
            .enumerate()
            .map(|(i, a)| mat(&format!("Ai[{i}]"), a, n, n))
            .collect::<Result<Vec<_>>>()?;
        let b = mat("B", &self.b, n, m)?;
        let q = mat("Q", &self.q, n, n)?;
        let r = mat("R", &self.r, m, m)?;
        let param_box = self.param_box.iter().map(|[lo, hi]| (*lo, *hi)).collect();
        PolytopicLpvSystem::new(a0, ai, b, q, r, param_box)
    }
}

/// Closed-loop vertex matrices `A(v_P) − B·unvec(v_C)` for every vertex
/// pair of `𝒫 × 𝒞`, `2^(p + mn)` in total, in lexicographic order with the
/// parameter coordinates most significant.
pub fn closed_loop_vertices(sys: &PolytopicLpvSystem, gain_box: &HyperRectangle) -> Result<Vec<Mat>> {
    let (n, m) = (sys.n(), sys.m());
    if gain_box.dim() != m * n {
        return Err(Error::DimensionMismatch(format!(
            "gain box has dimension {}, expected m*n = {}",
            gain_box.dim(),
            m * n
        )));
    }
    let mut bounds = sys.param_box.clone();
    bounds.extend(gain_box.lo().iter().zip(gain_box.hi()).map(|(l, h)| (*l, *h)));
    box_vertices(&bounds)
        .into_iter()
        .map(|v| {
            let (rho, k) = v.split_at(sys.p());
            let k = Mat::unvec(k, m, n)?;
            Ok(&sys.eval_a_unchecked(rho) - &(sys.b() * &k))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum AssumptionVerdict {
    Pass,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionSample {
    pub rho: Vec<f64>,
    pub controllability_rank: usize,
    pub observability_rank: usize,
}

/// Grid-based stabilizability/detectability screen. Full-rank
/// controllability and observability are sufficient conditions only, so
/// rank deficiency is reported as inconclusive rather than failure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub verdict: AssumptionVerdict,
    pub samples_checked: usize,
    pub offending: Vec<AssumptionSample>,
}

fn krylov(a: &Mat, b: &Mat) -> Mat {
    let n = a.rows();
    let cols = b.cols();
    let mut out = Mat::zeros(n, n * cols);
    let mut block = b.clone();
    for k in 0..n {
        for i in 0..n {
            for j in 0..cols {
                out[(i, k * cols + j)] = block[(i, j)];
            }
        }
        block = a * &block;
    }
    out
}

pub fn controllability_matrix(a: &Mat, b: &Mat) -> Mat {
    krylov(a, b)
}

/// Observability matrix of `(A, C)`, returned transposed as
/// `[Cᵀ, AᵀCᵀ, …]` (same rank).
pub fn observability_matrix_t(a: &Mat, c: &Mat) -> Mat {
    krylov(&a.transpose(), &c.transpose())
}

pub fn assumption_report(sys: &PolytopicLpvSystem, grid_density: usize) -> Result<AssumptionReport> {
    if grid_density < 2 {
        return Err(Error::InvalidInput("grid density must be at least 2".into()));
    }
    let n = sys.n();
    let q_half = sym_sqrt(sys.q())?;
    let grid = sys.param_grid(grid_density);
    let mut offending = Vec::new();
    for rho in &grid {
        let a = sys.eval_a_unchecked(rho);
        let cr = rank(&controllability_matrix(&a, sys.b()));
        let or = rank(&observability_matrix_t(&a, &q_half));
        if cr < n || or < n {
            offending.push(AssumptionSample {
                rho: rho.clone(),
                controllability_rank: cr,
                observability_rank: or,
            });
        }
    }
    Ok(AssumptionReport {
        verdict: if offending.is_empty() {
            AssumptionVerdict::Pass
        } else {
            AssumptionVerdict::Inconclusive
        },
        samples_checked: grid.len(),
        offending,
    })
}

/// Admissible parameter signal `ρ(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ParamTrajectory {
    Constant {
        value: Vec<f64>,
    },
    /// `values[k]` holds on `[times[k], times[k+1])`; `times[0] = 0`.
    PiecewiseConstant {
        times: Vec<f64>,
        values: Vec<Vec<f64>>,
    },
    /// `ρᵢ(t) = centerᵢ + amplitudeᵢ · sin(2π frequencyᵢ t)`.
    Sinusoid {
        center: Vec<f64>,
        amplitude: Vec<f64>,
        frequency: Vec<f64>,
    },
}

impl ParamTrajectory {
    pub fn constant(value: Vec<f64>) -> Self {
        Self::Constant { value }
    }

    pub fn piecewise(times: Vec<f64>, values: Vec<Vec<f64>>) -> Self {
        Self::PiecewiseConstant { times, values }
    }

    /// Checks well-formedness and that every value the trajectory can emit
    /// lies inside the parameter box of `sys`.
    pub fn validate(&self, sys: &PolytopicLpvSystem) -> Result<()> {
        let p = sys.p();
        let check_len = |v: &[f64], what: &str| {
            if v.len() != p {
                Err(Error::InvalidInput(format!(
                    "trajectory {what} has {} entries, expected p = {p}",
                    v.len()
                )))
            } else {
                Ok(())
            }
        };
        match self {
            Self::Constant { value } => {
                check_len(value, "value")?;
                if !sys.contains_param(value) {
                    return Err(Error::ParamOutOfRange { rho: value.clone() });
                }
            }
            Self::PiecewiseConstant { times, values } => {
                if times.is_empty() || times.len() != values.len() {
                    return Err(Error::InvalidInput(
                        "piecewise trajectory needs one value per switch time".into(),
                    ));
                }
                if times[0] != 0.0 {
                    return Err(Error::InvalidInput("first switch time must be 0".into()));
                }
                if times.windows(2).any(|w| w[1] <= w[0]) || times.iter().any(|t| !t.is_finite()) {
                    return Err(Error::InvalidInput("switch times must be strictly increasing".into()));
                }
                for v in values {
                    check_len(v, "value")?;
                    if !sys.contains_param(v) {
                        return Err(Error::ParamOutOfRange { rho: v.clone() });
                    }
                }
            }
            Self::Sinusoid {
                center,
                amplitude,
                frequency,
            } => {
                check_len(center, "center")?;
                check_len(amplitude, "amplitude")?;
                check_len(frequency, "frequency")?;
                for i in 0..p {
                    let (lo, hi) = sys.param_box()[i];
                    let a = amplitude[i].abs();
                    if center[i] - a < lo - PARAM_TOL || center[i] + a > hi + PARAM_TOL {
                        return Err(Error::ParamOutOfRange {
                            rho: vec![center[i] - a, center[i] + a],
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// `ρ(t)`, right-continuous at switches.
    pub fn value_at(&self, t: f64) -> Vec<f64> {
        match self {
            Self::Constant { value } => value.clone(),
            Self::PiecewiseConstant { times, values } => {
                let k = times.partition_point(|&s| s <= t).saturating_sub(1);
                values[k].clone()
            }
            Self::Sinusoid {
                center,
                amplitude,
                frequency,
            } => center
                .iter()
                .zip(amplitude)
                .zip(frequency)
                .map(|((c, a), f)| c + a * (2.0 * std::f64::consts::PI * f * t).sin())
                .collect(),
        }
    }

    /// Switch instants strictly inside `(0, horizon)`.
    pub fn switch_times(&self, horizon: f64) -> Vec<f64> {
        match self {
            Self::PiecewiseConstant { times, .. } => {
                times.iter().copied().filter(|&t| t > 0.0 && t < horizon).collect()
            }
            _ => Vec::new(),
        }
    }

    pub fn is_piecewise_constant(&self) -> bool {
        !matches!(self, Self::Sinusoid { .. })
    }
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::routh::check_hurwitz;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::linalg::{sym_eig, sym_eigen, Mat};

/// A certificate is declared when `max_i λmax(AᵢᵀX + XAᵢ)` is below `-FEASIBILITY_TOL`.
pub const FEASIBILITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LmiMargins {
    pub lambda_min_x: f64,
    /// `λmax(AᵢᵀX + XAᵢ)` per matrix.
    pub margins: Vec<f64>,
}

impl LmiMargins {
    pub fn worst(&self) -> f64 {
        self.margins.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn holds(&self) -> bool {
        self.lambda_min_x > 0.0 && self.margins.iter().all(|m| *m < 0.0)
    }
}

fn lyap_form(a: &Mat, x: &Mat) -> Mat {
    (&(&a.transpose() * x) + &(x * a)).symmetrize()
}

/// Independent check of `X ≻ 0` and `AᵢᵀX + XAᵢ ≺ 0`.
pub fn verify_lmi(x: &Mat, mats: &[Mat]) -> Result<LmiMargins> {
    let lambda_min_x = sym_eig(x)?[0];
    let margins = mats
        .iter()
        .map(|a| {
            if a.shape() != x.shape() {
                return Err(Error::DimensionMismatch(format!(
                    "matrix is {:?}, X is {:?}",
                    a.shape(),
                    x.shape()
                )));
            }
            Ok(*sym_eig(&lyap_form(a, x))?.last().expect("non-empty"))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LmiMargins { lambda_min_x, margins })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CertVerdict {
    Certified,
    /// No certificate found within budget. Not a proof of infeasibility.
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityCertificate {
    pub x: Vec<Vec<f64>>,
    pub lambda_min_x: f64,
    pub margins: Vec<f64>,
    /// Best objective `max_i λmax(AᵢᵀX + XAᵢ)` reached by the search.
    pub phi: f64,
    pub feasible: bool,
    pub verdict: CertVerdict,
    pub vertex_count: usize,
    pub iterations: usize,
    pub restarts: usize,
}

impl StabilityCertificate {
    pub fn x_mat(&self) -> Mat {
        Mat::from_rows(&self.x)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LmiSearchOptions {
    pub restarts: usize,
    pub max_iters: usize,
    /// Search stops early once the objective is below `-stop_margin`.
    pub stop_margin: f64,
    /// Eigenvalues of `X` are kept in `[1, max_eig]`.
    pub max_eig: f64,
    pub seed: u64,
    pub execution: Execution,
}

impl Default for LmiSearchOptions {
    fn default() -> Self {
        Self {
            restarts: 8,
            max_iters: 3000,
            stop_margin: 1e-3,
            max_eig: 1e6,
            seed: 0,
            execution: Execution::default(),
        }
    }
}

/// Objective and a subgradient `Avvᵀ + vvᵀAᵀ` from the active matrix's top
/// eigenvector `v`.
fn phi_and_subgradient(x: &Mat, mats: &[Mat]) -> (f64, Mat) {
    let mut best = (f64::NEG_INFINITY, Mat::zeros(x.rows(), x.cols()));
    for a in mats {
        let (vals, vecs) = sym_eigen(&lyap_form(a, x)).expect("symmetric by construction");
        let top = *vals.last().expect("non-empty");
        if top > best.0 {
            let n = x.rows();
            let v: Vec<f64> = (0..n).map(|i| vecs[(i, n - 1)]).collect();
            let av = a.mul_vec(&v);
            let mut g = Mat::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    g[(i, j)] = av[i] * v[j] + v[i] * av[j];
                }
            }
            best = (top, g);
        }
    }
    best
}

fn project(x: &Mat, max_eig: f64) -> Mat {
    let (vals, vecs) = sym_eigen(&x.symmetrize()).expect("symmetric by construction");
    let clamped: Vec<f64> = vals.iter().map(|v| v.clamp(1.0, max_eig)).collect();
    (&(&vecs * &Mat::diag(&clamped)) * &vecs.transpose()).symmetrize()
}

struct RunResult {
    x: Mat,
    phi: f64,
    iterations: usize,
}

fn single_run(mats: &[Mat], start: Mat, opts: &LmiSearchOptions) -> RunResult {
    let mut x = project(&start, opts.max_eig);
    let (mut phi, mut g) = phi_and_subgradient(&x, mats);
    let mut best = RunResult {
        x: x.clone(),
        phi,
        iterations: 0,
    };
    let base_step = 0.5 * x.norm_fro().max(1.0);
    for k in 0..opts.max_iters {
        if best.phi < -opts.stop_margin {
            break;
        }
        let gn = g.norm_fro();
        if gn == 0.0 {
            break;
        }
        let step = base_step / ((k + 1) as f64).sqrt();
        x = project(&(&x - &g.scale(step / gn)), opts.max_eig);
        (phi, g) = phi_and_subgradient(&x, mats);
        if phi < best.phi {
            best.x = x.clone();
            best.phi = phi;
        }
        best.iterations = k + 1;
    }
    best
}

/// Searches for a common quadratic Lyapunov matrix `X ⪰ I` with
/// `AᵢᵀX + XAᵢ ≺ 0` for every input matrix.
///
/// Local projected-subgradient descent on `max_i λmax(AᵢᵀX + XAᵢ)` with
/// seeded restarts. A positive verdict is always re-checked with
/// [`verify_lmi`]; a negative one only means nothing was found.
pub fn find_common_lyapunov(mats: &[Mat], opts: &LmiSearchOptions) -> Result<StabilityCertificate> {
    let n = match mats.first() {
        Some(a) => a.rows(),
        None => return Err(Error::InvalidInput("no matrices to certify".into())),
    };
    for (index, a) in mats.iter().enumerate() {
        if a.shape() != (n, n) {
            return Err(Error::DimensionMismatch(format!("matrix {index} is {:?}", a.shape())));
        }
        if !check_hurwitz(a) {
            return Err(Error::NotHurwitzInput { index });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let starts: Vec<Mat> = (0..opts.restarts.max(1))
        .map(|r| {
            if r == 0 {
                return Mat::identity(n);
            }
            let g = Mat::from_row_major(n, n, (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect()).expect("finite");
            let scale = 10f64.powf(rng.gen_range(0.0..2.0));
            &Mat::identity(n) + &(&g * &g.transpose()).scale(scale)
        })
        .collect();
    let runs = opts.execution.map(&starts, |s| single_run(mats, s.clone(), opts));
    let iterations = runs.iter().map(|r| r.iterations).sum();
    // first restart (in seed order) that met the stopping margin, else the best one
    let best = match runs.iter().position(|r| r.phi < -opts.stop_margin) {
        Some(i) => runs.into_iter().nth(i).expect("index in range"),
        None => runs
            .into_iter()
            .reduce(|a, b| if b.phi < a.phi { b } else { a })
            .expect("at least one restart"),
    };

    let check = verify_lmi(&best.x, mats)?;
    let feasible = best.phi < -FEASIBILITY_TOL && check.holds() && check.worst() < -FEASIBILITY_TOL;
    Ok(StabilityCertificate {
        x: best.x.to_rows(),
        lambda_min_x: check.lambda_min_x,
        margins: check.margins,
        phi: best.phi,
        feasible,
        verdict: if feasible {
            CertVerdict::Certified
        } else {
            CertVerdict::Unknown
        },
        vertex_count: mats.len(),
        iterations,
        restarts: opts.restarts.max(1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_certifies_minus_identity() {
        let m = verify_lmi(&Mat::identity(2), &[Mat::identity(2).scale(-1.0)]).unwrap();
        assert_eq!(m.lambda_min_x, 1.0);
        assert_eq!(m.margins, vec![-2.0]);
        let cert = find_common_lyapunov(&[Mat::identity(2).scale(-1.0)], &LmiSearchOptions::default()).unwrap();
        assert!(cert.feasible);
        assert_eq!(cert.phi, -2.0);
        assert_eq!(cert.x_mat(), Mat::identity(2));
    }

    #[test]
    fn skew_matrix_is_marginal() {
        let m = verify_lmi(&Mat::identity(2), &[Mat::from_rows(&[[0.0, 1.0], [-1.0, 0.0]])]).unwrap();
        assert!(m.margins[0].abs() < 1e-15);
        assert!(!m.holds());
    }

    #[test]
    fn rejects_non_hurwitz_and_asymmetric() {
        let unstable = Mat::from_rows(&[[1.0, 0.0], [0.0, -1.0]]);
        assert!(matches!(
            find_common_lyapunov(&[Mat::identity(2).scale(-1.0), unstable], &LmiSearchOptions::default()),
            Err(Error::NotHurwitzInput { index: 1 })
        ));
        let x = Mat::from_rows(&[[1.0, 1.0], [0.0, 1.0]]);
        assert!(matches!(
            verify_lmi(&x, &[Mat::identity(2)]),
            Err(Error::NotSymmetric { .. })
        ));
    }

    #[test]
    fn common_certificate_for_compatible_pair() {
        // both matrices share X = I
        let a1 = Mat::from_rows(&[[-1.0, 2.0], [-2.0, -1.0]]);
        let a2 = Mat::from_rows(&[[-2.0, -1.0], [1.0, -3.0]]);
        let cert = find_common_lyapunov(&[a1.clone(), a2.clone()], &LmiSearchOptions::default()).unwrap();
        assert!(cert.feasible);
        assert!(verify_lmi(&cert.x_mat(), &[a1, a2]).unwrap().holds());
    }

    #[test]
    fn incompatible_pair_has_no_certificate() {
        let a1 = Mat::from_rows(&[[-0.1, 1.0], [-10.0, -0.1]]);
        let a2 = Mat::from_rows(&[[-0.1, 10.0], [-1.0, -0.1]]);
        let mats = [a1, a2];
        let cert = find_common_lyapunov(&mats, &LmiSearchOptions::default()).unwrap();
        assert_eq!(cert.verdict, CertVerdict::Unknown);
        assert!(!cert.feasible);

        // grid oracle over trace-normalised X = [a, c; c, 1 − a]
        let steps = 200;
        for i in 1..steps {
            let a = i as f64 / steps as f64;
            let bound = (a * (1.0 - a)).sqrt();
            for j in 1..steps {
                let c = -bound + 2.0 * bound * j as f64 / steps as f64;
                let x = Mat::from_rows(&[[a, c], [c, 1.0 - a]]);
                let worst = verify_lmi(&x, &mats).unwrap().worst();
                assert!(worst > 0.0, "X = {x:?} gives {worst}");
            }
        }
    }
}

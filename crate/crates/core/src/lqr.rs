//! Frozen-parameter LQR machinery: Lyapunov and Riccati solves, the policy
//! cost `f_K = tr(P_K)` and its gradient `2(RK − BᵀP_K)Y_K`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cert::check_hurwitz;
use crate::error::{Error, Result};
use crate::linalg::{inverse, kron, solve_linear, Mat};
use crate::lpv::PolytopicLpvSystem;

const NEWTON_MAX_STEPS: usize = 100;

/// Solves `AᵀP + PA + W = 0` for Hurwitz `A` through the vectorized system
/// `(I ⊗ Aᵀ + Aᵀ ⊗ I) vec(P) = −vec(W)`.
///
/// The dual equation `AY + YAᵀ + W = 0` is the same call with `Aᵀ`.
pub fn solve_lyapunov(a: &Mat, w: &Mat) -> Result<Mat> {
    let n = a.rows();
    if !a.is_square() || w.shape() != (n, n) {
        return Err(Error::DimensionMismatch(format!(
            "Lyapunov equation with A {:?} and W {:?}",
            a.shape(),
            w.shape()
        )));
    }
    if !check_hurwitz(a) {
        return Err(Error::NotHurwitz);
    }
    solve_lyapunov_unchecked(a, w)
}

/// [`solve_lyapunov`] without the Hurwitz gate.
pub(crate) fn solve_lyapunov_unchecked(a: &Mat, w: &Mat) -> Result<Mat> {
    let n = a.rows();
    let at = a.transpose();
    let eye = Mat::identity(n);
    let op = &kron(&eye, &at) + &kron(&at, &eye);
    let rhs: Vec<f64> = w.vec().into_iter().map(|v| -v).collect();
    let p = solve_linear(&op, &Mat::column(&rhs))?;
    Ok(Mat::unvec(p.as_slice(), n, n)?.symmetrize())
}

/// `AᵀP + PA − PBR⁻¹BᵀP + Q`.
pub fn care_residual(a: &Mat, b: &Mat, q: &Mat, r: &Mat, p: &Mat) -> Result<Mat> {
    let rinv = inverse(r)?;
    let pb = p * b;
    let quad = &(&pb * &rinv) * &pb.transpose();
    Ok(&(&(&(&a.transpose() * p) + &(p * a)) - &quad) + q)
}

/// Bass' stabilizing gain `K = BᵀZ⁻¹`, where `Z` solves
/// `(A + βI)Z + Z(A + βI)ᵀ = 2BBᵀ` with `β > ‖A‖∞`.
fn bass_gain(a: &Mat, b: &Mat) -> Result<Mat> {
    let n = a.rows();
    let beta = 1.0 + a.norm_inf();
    // with M = −(A + βI)ᵀ the equation reads MᵀZ + ZM + 2BBᵀ = 0
    let shifted = &a.scale(-1.0) - &Mat::identity(n).scale(beta);
    let z = solve_lyapunov_unchecked(&shifted.transpose(), &(b * &b.transpose()).scale(2.0))?;
    let zinv = inverse(&z)?;
    Ok(&b.transpose() * &zinv)
}

fn random_stabilizer(a: &Mat, b: &Mat, seed: u64) -> Option<Mat> {
    let (n, m) = (a.rows(), b.cols());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut radius = 1.0;
    for _round in 0..12 {
        for _ in 0..500 {
            let k = Mat::from_row_major(m, n, (0..m * n).map(|_| rng.gen_range(-radius..radius)).collect())
                .expect("finite");
            if check_hurwitz(&(a - &(b * &k))) {
                return Some(k);
            }
        }
        radius *= 2.0;
    }
    None
}

/// Initial stabilizing gain: zero if `A` is already Hurwitz, else Bass'
/// method, else a seeded random search in an expanding box.
pub fn stabilizing_gain(a: &Mat, b: &Mat, seed: u64) -> Result<Mat> {
    let (n, m) = (a.rows(), b.cols());
    if check_hurwitz(a) {
        return Ok(Mat::zeros(m, n));
    }
    if let Ok(k) = bass_gain(a, b) {
        if check_hurwitz(&(a - &(b * &k))) {
            return Ok(k);
        }
    }
    random_stabilizer(a, b, seed).ok_or(Error::NoStabilizingInit)
}

/// Stabilizing CARE solution `P*` and optimal gain `K* = R⁻¹BᵀP*` by
/// Newton–Kleinman iteration.
pub fn solve_care(a: &Mat, b: &Mat, q: &Mat, r: &Mat) -> Result<(Mat, Mat)> {
    solve_care_seeded(a, b, q, r, 0)
}

pub fn solve_care_seeded(a: &Mat, b: &Mat, q: &Mat, r: &Mat, seed: u64) -> Result<(Mat, Mat)> {
    let n = a.rows();
    let m = b.cols();
    if !a.is_square() || b.rows() != n || q.shape() != (n, n) || r.shape() != (m, m) {
        return Err(Error::DimensionMismatch("CARE data dimensions".into()));
    }
    let rinv = inverse(r)?;
    let rinv_bt = &rinv * &b.transpose();
    let mut k = stabilizing_gain(a, b, seed)?;
    let tol = 1e-9 * (1.0 + q.norm_inf());
    let mut prev: Option<Mat> = None;
    for _ in 0..NEWTON_MAX_STEPS {
        let ak = a - &(b * &k);
        let w = q + &(&(&k.transpose() * r) * &k);
        let p = solve_lyapunov(&ak, &w)?;
        k = &rinv_bt * &p;
        let settled = prev
            .as_ref()
            .is_some_and(|pp| (&p - pp).max_abs() <= 1e-14 * (1.0 + p.max_abs()));
        let res = care_residual(a, b, q, r, &p)?.norm_inf();
        if res <= tol * 1e-2 || (settled && res <= tol) {
            if !check_hurwitz(&(a - &(b * &k))) {
                return Err(Error::NotHurwitz);
            }
            return Ok((p, k));
        }
        prev = Some(p);
    }
    Err(Error::NotConverged {
        iterations: NEWTON_MAX_STEPS,
    })
}

/// Cost, gradient and both Lyapunov solutions for a gain at frozen `ρ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LqrEvaluation {
    pub k: Mat,
    /// Solves `A_KᵀP + PA_K + Q + KᵀRK = 0`.
    pub p: Mat,
    /// Solves `A_K Y + Y A_Kᵀ + I = 0`.
    pub y: Mat,
    /// `tr(P_K)`.
    pub cost: f64,
    /// `2(RK − BᵀP_K)Y_K`, same shape as `K`.
    pub grad: Mat,
}

pub fn evaluate_plant(a: &Mat, b: &Mat, q: &Mat, r: &Mat, k: &Mat) -> Result<LqrEvaluation> {
    let n = a.rows();
    if k.shape() != (b.cols(), n) {
        return Err(Error::DimensionMismatch(format!(
            "gain is {:?}, expected {}x{n}",
            k.shape(),
            b.cols()
        )));
    }
    let ak = a - &(b * k);
    let w = q + &(&(&k.transpose() * r) * k);
    let p = solve_lyapunov(&ak, &w)?;
    let y = solve_lyapunov_unchecked(&ak.transpose(), &Mat::identity(n))?;
    let grad = (&(&(r * k) - &(&b.transpose() * &p)) * &y).scale(2.0);
    Ok(LqrEvaluation {
        k: k.clone(),
        cost: p.trace(),
        p,
        y,
        grad,
    })
}

/// [`evaluate_plant`] for `A(ρ)` of an LPV system. Fails with
/// [`Error::NotHurwitz`] when `K` does not stabilize `A(ρ)`.
pub fn evaluate(sys: &PolytopicLpvSystem, rho: &[f64], k: &Mat) -> Result<LqrEvaluation> {
    let a = sys.eval_a(rho)?;
    evaluate_plant(&a, sys.b(), sys.q(), sys.r(), k)
}

/// `K*_ρ` with its CARE solution.
pub fn optimal_gain(sys: &PolytopicLpvSystem, rho: &[f64]) -> Result<(Mat, Mat)> {
    let a = sys.eval_a(rho)?;
    solve_care(&a, sys.b(), sys.q(), sys.r())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sym_eig;
    use approx::assert_abs_diff_eq;

    fn scalar(v: f64) -> Mat {
        Mat::from_rows(&[[v]])
    }

    #[test]
    fn lyapunov_closed_forms() {
        let p = solve_lyapunov(&Mat::identity(2).scale(-1.0), &Mat::identity(2)).unwrap();
        assert!((&p - &Mat::identity(2).scale(0.5)).max_abs() < 1e-15);
        let p = solve_lyapunov(&Mat::diag(&[-1.0, -2.0]), &Mat::identity(2)).unwrap();
        assert!((&p - &Mat::diag(&[0.5, 0.25])).max_abs() < 1e-15);
        assert!(matches!(
            solve_lyapunov(&Mat::identity(2), &Mat::identity(2)),
            Err(Error::NotHurwitz)
        ));
    }

    #[test]
    fn scalar_care() {
        let (p, k) = solve_care(&scalar(-1.0), &scalar(1.0), &scalar(1.0), &scalar(1.0)).unwrap();
        let root = 2f64.sqrt() - 1.0;
        assert_abs_diff_eq!(p[(0, 0)], root, epsilon = 1e-10);
        assert_abs_diff_eq!(k[(0, 0)], root, epsilon = 1e-10);
    }

    #[test]
    fn care_zero_weight_on_stable_plant() {
        let a = Mat::from_rows(&[[-1.0, 2.0], [0.0, -3.0]]);
        let (p, k) = solve_care(&a, &Mat::from_rows(&[[0.0], [1.0]]), &Mat::zeros(2, 2), &scalar(1.0)).unwrap();
        assert!(p.max_abs() < 1e-12);
        assert!(k.max_abs() < 1e-12);
    }

    #[test]
    fn care_needs_bass_on_unstable_plant() {
        let sys = PolytopicLpvSystem::case_study();
        let a = sys.eval_a(&[1.25]).unwrap();
        assert!(!check_hurwitz(&a));
        let (p, k) = solve_care(&a, sys.b(), sys.q(), sys.r()).unwrap();
        let res = care_residual(&a, sys.b(), sys.q(), sys.r(), &p).unwrap();
        assert!(res.norm_inf() < 1e-9 * 2.0);
        assert!(sym_eig(&p).unwrap()[0] > 0.0);
        assert!(check_hurwitz(&(&a - &(sys.b() * &k))));
    }

    #[test]
    fn scalar_evaluation_closed_form() {
        let e = evaluate_plant(&scalar(-1.0), &scalar(1.0), &scalar(1.0), &scalar(1.0), &scalar(1.0)).unwrap();
        assert_abs_diff_eq!(e.p[(0, 0)], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(e.y[(0, 0)], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(e.cost, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(e.grad[(0, 0)], 0.25, epsilon = 1e-15);
    }

    #[test]
    fn gradient_vanishes_at_optimum() {
        let sys = PolytopicLpvSystem::case_study();
        for rho in [0.5, 1.25, 2.0] {
            let (_, k) = optimal_gain(&sys, &[rho]).unwrap();
            let e = evaluate(&sys, &[rho], &k).unwrap();
            assert!(e.grad.max_abs() < 1e-7, "rho={rho}: {:?}", e.grad);
        }
    }

    #[test]
    fn evaluate_rejects_destabilizing_gain() {
        let sys = PolytopicLpvSystem::case_study();
        assert!(matches!(
            evaluate(&sys, &[1.0], &Mat::zeros(1, 2)),
            Err(Error::NotHurwitz)
        ));
    }

    #[test]
    fn uncontrollable_unstable_mode_fails_init() {
        let a = Mat::diag(&[1.0, -1.0]);
        let b = Mat::from_rows(&[[0.0], [1.0]]);
        assert!(matches!(
            solve_care(&a, &b, &Mat::identity(2), &scalar(1.0)),
            Err(Error::NoStabilizingInit)
        ));
    }
}

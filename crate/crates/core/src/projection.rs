//! The gain box `𝒞`, its inequality description `g(K) ≥ 0`, and the
//! projection matrix `M = I − Jᵀ F⁻¹ J` with `F = 2 diag(g) + J Jᵀ` that
//! turns the LQR gradient into the controller's vector field.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{solve_linear, Mat};
use crate::lpv::PolytopicLpvSystem;
use crate::lqr::evaluate;

/// Points with `min g ≥ -INSIDE_TOL` count as inside the box.
pub const INSIDE_TOL: f64 = 1e-9;

/// Axis-aligned box `∏ [loᵢ, hiᵢ]` in `vec(K)` coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperRectangle {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl HyperRectangle {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::DimensionMismatch(format!(
                "box bounds have lengths {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        for (i, (l, h)) in lo.iter().zip(&hi).enumerate() {
            if !(l.is_finite() && h.is_finite() && l < h) {
                return Err(Error::InvalidInput(format!(
                    "box coordinate {} needs lo < hi, got [{l}, {h}]",
                    i + 1
                )));
            }
        }
        Ok(Self { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    /// `g(k) = (k − lo, hi − k)`.
    pub fn g(&self, k: &[f64]) -> Vec<f64> {
        assert_eq!(k.len(), self.dim());
        let lower = k.iter().zip(&self.lo).map(|(k, l)| k - l);
        let upper = k.iter().zip(&self.hi).map(|(k, h)| h - k);
        lower.chain(upper).collect()
    }

    pub fn min_g(&self, k: &[f64]) -> f64 {
        self.g(k).into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, k: &[f64]) -> bool {
        self.min_g(k) >= 0.0
    }

    pub fn clamp(&self, k: &[f64]) -> Vec<f64> {
        k.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(v, (l, h))| v.clamp(*l, *h))
            .collect()
    }

    /// Box grown by `eps` on every side.
    pub fn inflate(&self, eps: f64) -> Result<Self> {
        Self::new(
            self.lo.iter().map(|l| l - eps).collect(),
            self.hi.iter().map(|h| h + eps).collect(),
        )
    }

    pub fn vertices(&self) -> Vec<Vec<f64>> {
        let bounds: Vec<(f64, f64)> = self.lo.iter().copied().zip(self.hi.iter().copied()).collect();
        crate::lpv::box_vertices(&bounds)
    }
}

/// `g`, its Jacobian `J`, and the projection pieces `F`, `M` at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintEval {
    pub g: Vec<f64>,
    pub j: Mat,
    pub f: Mat,
    pub m: Mat,
}

pub fn constraint_jacobian(dim: usize) -> Mat {
    let mut j = Mat::zeros(2 * dim, dim);
    for i in 0..dim {
        j[(i, i)] = 1.0;
        j[(dim + i, i)] = -1.0;
    }
    j
}

pub fn eval_constraints(gain_box: &HyperRectangle, k: &[f64]) -> Result<ConstraintEval> {
    eval_constraints_tol(gain_box, k, INSIDE_TOL)
}

/// [`eval_constraints`] accepting points up to `tol` outside the box. Just
/// outside a face `M` stays well defined and points back inward.
pub fn eval_constraints_tol(gain_box: &HyperRectangle, k: &[f64], tol: f64) -> Result<ConstraintEval> {
    let dim = gain_box.dim();
    if k.len() != dim {
        return Err(Error::DimensionMismatch(format!(
            "point has {} entries, box has {dim}",
            k.len()
        )));
    }
    let g = gain_box.g(k);
    let min_g = g.iter().copied().fold(f64::INFINITY, f64::min);
    if min_g < -tol || !min_g.is_finite() {
        return Err(Error::OutsideManifold { min_g });
    }
    let j = constraint_jacobian(dim);
    let mut f = &j * &j.transpose();
    for (i, gi) in g.iter().enumerate() {
        f[(i, i)] += 2.0 * gi;
    }
    let finv_j = solve_linear(&f, &j)?;
    let m = (&Mat::identity(dim) - &(&j.transpose() * &finv_j)).symmetrize();
    Ok(ConstraintEval { g, j, f, m })
}

/// Controller vector field `vec(K̇) = −α M(vec K) vec(∇f_K)` at frozen `ρ`.
pub fn projected_gradient(
    sys: &PolytopicLpvSystem,
    rho: &[f64],
    k: &Mat,
    gain_box: &HyperRectangle,
    alpha: f64,
) -> Result<Vec<f64>> {
    let cons = eval_constraints(gain_box, &k.vec())?;
    let eval = evaluate(sys, rho, k)?;
    Ok(cons
        .m
        .mul_vec(&eval.grad.vec())
        .into_iter()
        .map(|v| -alpha * v)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sym_eig;
    use crate::lqr::solve_care;
    use approx::assert_abs_diff_eq;

    fn unit() -> HyperRectangle {
        HyperRectangle::new(vec![0.0], vec![1.0]).unwrap()
    }

    #[test]
    fn interior_point_of_unit_interval() {
        let c = eval_constraints(&unit(), &[0.5]).unwrap();
        assert_eq!(c.g, vec![0.5, 0.5]);
        assert_eq!(c.f, Mat::from_rows(&[[2.0, -1.0], [-1.0, 2.0]]));
        assert_abs_diff_eq!(c.m[(0, 0)], 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn boundary_point_annihilates_motion() {
        let c = eval_constraints(&unit(), &[0.0]).unwrap();
        assert_eq!(c.g, vec![0.0, 1.0]);
        assert_eq!(c.f, Mat::from_rows(&[[1.0, -1.0], [-1.0, 3.0]]));
        assert_abs_diff_eq!(c.m[(0, 0)], 0.0, epsilon = 1e-15);
        // outward direction is projected to zero
        assert_abs_diff_eq!(c.m.mul_vec(&[-1.0])[0], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn huge_box_gives_identity() {
        let b = HyperRectangle::new(vec![-1e6; 3], vec![1e6; 3]).unwrap();
        let c = eval_constraints(&b, &[0.0, 0.0, 0.0]).unwrap();
        assert!((&c.m - &Mat::identity(3)).norm_inf() < 1e-5);
    }

    #[test]
    fn outside_is_rejected() {
        assert!(matches!(
            eval_constraints(&unit(), &[1.1]),
            Err(Error::OutsideManifold { .. })
        ));
        // drift inside the tolerance band is accepted
        assert!(eval_constraints(&unit(), &[1.0 + 1e-10]).is_ok());
    }

    #[test]
    fn m_matches_per_coordinate_closed_form() {
        // each coordinate decouples: M_ii = 2ab / (2ab + a + b)
        let b = HyperRectangle::new(vec![-1.0, 0.0, 2.0], vec![1.0, 3.0, 2.5]).unwrap();
        let k = [0.3, 2.9, 2.1];
        let c = eval_constraints(&b, &k).unwrap();
        for (i, ki) in k.iter().enumerate() {
            let (a, bb) = (ki - b.lo()[i], b.hi()[i] - ki);
            assert_abs_diff_eq!(c.m[(i, i)], 2.0 * a * bb / (2.0 * a * bb + a + bb), epsilon = 1e-14);
            for j in 0..3 {
                if i != j {
                    assert_abs_diff_eq!(c.m[(i, j)], 0.0, epsilon = 1e-14);
                }
            }
        }
        assert!(c.m.asymmetry() <= 1e-12);
        assert!(sym_eig(&c.f).unwrap()[0] > 0.0);
    }

    #[test]
    fn projected_gradient_vanishes_at_optimum_and_descends() {
        let sys = PolytopicLpvSystem::case_study();
        let b = HyperRectangle::new(vec![-0.94, 4.49], vec![-0.23, 5.97]).unwrap();
        let rho = [1.25];
        let a = sys.eval_a(&rho).unwrap();
        let (_, kstar) = solve_care(&a, sys.b(), sys.q(), sys.r()).unwrap();
        let v = projected_gradient(&sys, &rho, &kstar, &b, 1.0).unwrap();
        assert!(v.iter().all(|x| x.abs() < 1e-7), "{v:?}");

        let k = Mat::from_rows(&[[-0.5, 5.5]]);
        let grad = evaluate(&sys, &rho, &k).unwrap().grad.vec();
        let v = projected_gradient(&sys, &rho, &k, &b, 1.0).unwrap();
        let inner: f64 = v.iter().zip(&grad).map(|(a, b)| a * b).sum();
        assert!(inner < 0.0);
    }

    #[test]
    fn outward_gradient_on_face_is_zeroed() {
        // scalar plant, gain sitting on the upper face, gradient pushing outward
        let sys = PolytopicLpvSystem::new(
            Mat::from_rows(&[[-1.0]]),
            vec![],
            Mat::from_rows(&[[1.0]]),
            Mat::identity(1),
            Mat::identity(1),
            vec![],
        )
        .unwrap();
        // k* = √2 − 1 ≈ 0.414 lies above the box, so the gradient points up
        let b = HyperRectangle::new(vec![0.0], vec![0.2]).unwrap();
        let k = Mat::from_rows(&[[0.2]]);
        let v = projected_gradient(&sys, &[], &k, &b, 1.0).unwrap();
        assert_abs_diff_eq!(v[0], 0.0, epsilon = 1e-15);
    }
}

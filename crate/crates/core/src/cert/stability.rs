use serde::Serialize;

use super::poly::MultiPoly;
use super::routh::seed_rows;
use crate::error::{Error, Result};
use crate::lpv::PolytopicLpvSystem;

/// Largest state dimension accepted for the symbolic construction.
pub const MAX_SYMBOLIC_N: usize = 5;

/// Polynomials `f₁, …, fₙ` in `(vec K, ρ)` whose joint positivity is
/// equivalent to `A(ρ) − BK` being Hurwitz.
///
/// Variable order: the `mn` entries of `vec(K)` (column-major), then the
/// `p` parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityPolynomials {
    pub polys: Vec<MultiPoly>,
    pub var_names: Vec<String>,
    pub gain_vars: usize,
    pub param_vars: usize,
}

impl StabilityPolynomials {
    pub fn point(&self, k_vec: &[f64], rho: &[f64]) -> Vec<f64> {
        assert_eq!(k_vec.len(), self.gain_vars);
        assert_eq!(rho.len(), self.param_vars);
        let mut pt = k_vec.to_vec();
        pt.extend_from_slice(rho);
        pt
    }

    /// Values `fᵢ(K, ρ)`.
    pub fn eval(&self, k_vec: &[f64], rho: &[f64]) -> Vec<f64> {
        let pt = self.point(k_vec, rho);
        self.polys.iter().map(|f| f.eval(&pt)).collect()
    }

    pub fn all_positive(&self, k_vec: &[f64], rho: &[f64]) -> bool {
        self.eval(k_vec, rho).iter().all(|v| *v > 0.0)
    }

    pub fn display(&self) -> Vec<String> {
        self.polys.iter().map(|f| f.to_string_with(&self.var_names)).collect()
    }
}

fn poly_matmul(a: &[Vec<MultiPoly>], b: &[Vec<MultiPoly>], nvars: usize) -> Vec<Vec<MultiPoly>> {
    let n = a.len();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| (0..n).fold(MultiPoly::zero(nvars), |acc, k| &acc + &(&a[i][k] * &b[k][j])))
                .collect()
        })
        .collect()
}

/// Symbolic `A(ρ) − BK` over the variables `(vec K, ρ)`.
fn symbolic_closed_loop(sys: &PolytopicLpvSystem) -> Vec<Vec<MultiPoly>> {
    let (n, m, p) = (sys.n(), sys.m(), sys.p());
    let nvars = m * n + p;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = Vec::with_capacity(n);
        for j in 0..n {
            let mut e = MultiPoly::constant(nvars, sys.a0()[(i, j)]);
            for (l, al) in sys.ai().iter().enumerate() {
                e = &e + &MultiPoly::var(nvars, m * n + l).scale(al[(i, j)]);
            }
            for k in 0..m {
                // K[k][j] is entry j*m + k of vec(K)
                e = &e - &MultiPoly::var(nvars, j * m + k).scale(sys.b()[(i, k)]);
            }
            row.push(e);
        }
        out.push(row);
    }
    out
}

/// Symbolic characteristic polynomial coefficients `1, c₁, …, cₙ` of
/// `A(ρ) − BK` (Faddeev–LeVerrier over polynomial entries).
pub fn symbolic_char_poly(sys: &PolytopicLpvSystem) -> Vec<MultiPoly> {
    let n = sys.n();
    let nvars = sys.m() * n + sys.p();
    let a = symbolic_closed_loop(sys);
    let mut coeffs = vec![MultiPoly::constant(nvars, 1.0)];
    let mut mk: Vec<Vec<MultiPoly>> = vec![vec![MultiPoly::zero(nvars); n]; n];
    for k in 1..=n {
        let mut next = poly_matmul(&a, &mk, nvars);
        for (i, row) in next.iter_mut().enumerate() {
            row[i] = &row[i] + &coeffs[k - 1];
        }
        mk = next;
        let am = poly_matmul(&a, &mk, nvars);
        let tr = (0..n).fold(MultiPoly::zero(nvars), |acc, i| &acc + &am[i][i]);
        coeffs.push(tr.scale(-1.0 / k as f64));
    }
    coeffs
}

/// Builds `f₁ = c₁, f₂ = R̃₃,₁, …, fₙ₋₁ = R̃ₙ,₁, fₙ = cₙ` from the
/// division-free Routh recursion
/// `R̃ᵢ,ⱼ = R̃ᵢ₋₁,₁ R̃ᵢ₋₂,ⱼ₊₁ − R̃ᵢ₋₂,₁ R̃ᵢ₋₁,ⱼ₊₁`.
pub fn stability_polynomials(sys: &PolytopicLpvSystem) -> Result<StabilityPolynomials> {
    let n = sys.n();
    if n > MAX_SYMBOLIC_N {
        return Err(Error::DegreeGuard { n, max: MAX_SYMBOLIC_N });
    }
    let (m, p) = (sys.m(), sys.p());
    let nvars = m * n + p;
    let coeffs = symbolic_char_poly(sys);
    let zero = MultiPoly::zero(nvars);
    let (top, second) = seed_rows(&coeffs, zero.clone());
    let width = top.len();
    let mut rows = vec![top, second];
    // rows index 2..n-1 hold R̃₃ … R̃ₙ (1-based row numbers)
    for i in 2..n {
        let (prev2, prev1) = (&rows[i - 2], &rows[i - 1]);
        let at = |row: &Vec<MultiPoly>, j: usize| row.get(j).cloned().unwrap_or_else(|| zero.clone());
        let row: Vec<MultiPoly> = (0..width)
            .map(|j| &(&prev1[0] * &at(prev2, j + 1)) - &(&prev2[0] * &at(prev1, j + 1)))
            .collect();
        rows.push(row);
    }
    let mut polys = Vec::with_capacity(n);
    polys.push(coeffs[1].clone());
    for row in rows.iter().take(n).skip(2) {
        polys.push(row[0].clone());
    }
    if n >= 2 {
        polys.push(coeffs[n].clone());
    }

    let mut var_names: Vec<String> = (1..=m * n).map(|i| format!("K{i}")).collect();
    if p == 1 {
        var_names.push("rho".into());
    } else {
        var_names.extend((1..=p).map(|i| format!("rho{i}")));
    }
    Ok(StabilityPolynomials {
        polys,
        var_names,
        gain_vars: m * n,
        param_vars: p,
    })
}

//! Gain-box construction and stability-containment checks.
//!
//! Both problems are nonconvex and are solved by sampling plus local
//! search. Their verdicts are numerical evidence, not proofs.

use std::cmp::Ordering;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cert::{check_hurwitz, stability_polynomials, MultiPoly, StabilityPolynomials};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::linalg::Mat;
use crate::lpv::{closed_loop_vertices, PolytopicLpvSystem};
use crate::lqr::optimal_gain;
use crate::projection::HyperRectangle;

/// Largest parameter dimension accepted by the grid construction.
pub const MAX_PARAMS: usize = 3;

/// Default declaration threshold on the containment distances.
pub const DEFAULT_DELTA_SAFE: f64 = 1e-3;

const INV_PHI: f64 = 0.618_033_988_749_894_8;

#[derive(Debug, Clone, Copy)]
pub struct GainBoxOptions {
    pub grid_density: usize,
    pub refine_tol: f64,
    pub epsilon: f64,
    pub execution: Execution,
}

impl Default for GainBoxOptions {
    fn default() -> Self {
        Self {
            grid_density: 64,
            refine_tol: 1e-6,
            epsilon: 0.01,
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainSample {
    pub rho: Vec<f64>,
    /// `vec(K*_ρ)`.
    pub k: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainBoxResult {
    pub tight_lo: Vec<f64>,
    pub tight_hi: Vec<f64>,
    #[serde(rename = "box")]
    pub gain_box: HyperRectangle,
    pub epsilon: f64,
    pub samples: Vec<GainSample>,
}

impl GainBoxResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    /// Writes the samples as CSV with header `rho1..rhop,K1..Kmn`.
    pub fn write_samples_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let (p, d) = match self.samples.first() {
            Some(s) => (s.rho.len(), s.k.len()),
            None => (0, self.tight_lo.len()),
        };
        let header: Vec<String> = (1..=p)
            .map(|i| format!("rho{i}"))
            .chain((1..=d).map(|i| format!("K{i}")))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for s in &self.samples {
            let row: Vec<String> = s.rho.iter().chain(&s.k).map(|v| format!("{v:.16e}")).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn care_sample(sys: &PolytopicLpvSystem, rho: &[f64]) -> Result<GainSample> {
    let (_, k) = optimal_gain(sys, rho).map_err(|e| Error::CareFailure {
        rho: rho.to_vec(),
        reason: e.to_string(),
    })?;
    Ok(GainSample {
        rho: rho.to_vec(),
        k: k.vec(),
    })
}

/// Golden-section minimisation of `h` on `[a, b]`; every evaluated point is
/// appended to `seen`.
fn golden_section(
    mut a: f64,
    mut b: f64,
    tol: f64,
    seen: &mut Vec<GainSample>,
    mut h: impl FnMut(f64, &mut Vec<GainSample>) -> Result<f64>,
) -> Result<(f64, f64)> {
    let mut best = (a, h(a, seen)?);
    let hb = h(b, seen)?;
    if hb < best.1 {
        best = (b, hb);
    }
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut hc, mut hd) = (h(c, seen)?, h(d, seen)?);
    while (b - a).abs() > tol {
        if hc < hd {
            b = d;
            d = c;
            hd = hc;
            c = b - INV_PHI * (b - a);
            hc = h(c, seen)?;
        } else {
            a = c;
            c = d;
            hc = hd;
            d = a + INV_PHI * (b - a);
            hd = h(d, seen)?;
        }
    }
    for (x, v) in [(c, hc), (d, hd)] {
        if v < best.1 {
            best = (x, v);
        }
    }
    Ok(best)
}

/// Refines the extreme of `sign · K_coord` starting from a grid point by
/// golden-section sweeps along each parameter axis.
fn refine_extreme(
    sys: &PolytopicLpvSystem,
    start: &GainSample,
    coord: usize,
    sign: f64,
    spacing: &[f64],
    tol: f64,
) -> Result<Vec<GainSample>> {
    let mut seen = Vec::new();
    let mut rho = start.rho.clone();
    let mut best = -sign * start.k[coord];
    for _sweep in 0..10 {
        let before = best;
        for (j, &(lo, hi)) in sys.param_box().iter().enumerate() {
            if hi <= lo {
                continue;
            }
            let a = (rho[j] - spacing[j]).max(lo);
            let b = (rho[j] + spacing[j]).min(hi);
            let base = rho.clone();
            let (x, v) = golden_section(a, b, tol, &mut seen, |t, seen| {
                let mut r = base.clone();
                r[j] = t;
                let s = care_sample(sys, &r)?;
                let v = -sign * s.k[coord];
                seen.push(s);
                Ok(v)
            })?;
            if v < best {
                best = v;
                rho[j] = x;
            }
        }
        if before - best <= tol {
            break;
        }
    }
    Ok(seen)
}

/// Over-approximates `{vec K*_ρ : ρ ∈ 𝒫}` by a box, then grows it by
/// `epsilon` on every side so the optimal gains lie strictly inside.
pub fn compute_gain_box(sys: &PolytopicLpvSystem, opts: &GainBoxOptions) -> Result<GainBoxResult> {
    if sys.p() > MAX_PARAMS {
        return Err(Error::InvalidInput(format!(
            "gain-box grid supports at most {MAX_PARAMS} parameters, got {}",
            sys.p()
        )));
    }
    if opts.grid_density < 5 {
        return Err(Error::InvalidInput("grid density must be at least 5".into()));
    }
    if !(opts.epsilon > 0.0 && opts.epsilon.is_finite()) {
        return Err(Error::InvalidInput("epsilon must be positive".into()));
    }
    if opts.refine_tol.is_nan() || opts.refine_tol <= 0.0 {
        return Err(Error::InvalidInput("refinement tolerance must be positive".into()));
    }

    let grid = sys.param_grid(opts.grid_density);
    let mut samples = opts
        .execution
        .map(&grid, |rho| care_sample(sys, rho))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let spacing: Vec<f64> = sys
        .param_box()
        .iter()
        .map(|(lo, hi)| (hi - lo) / (opts.grid_density - 1) as f64)
        .collect();
    let dim = sys.m() * sys.n();
    let tasks: Vec<(usize, f64)> = (0..dim).flat_map(|i| [(i, -1.0), (i, 1.0)]).collect();
    let refined = opts.execution.map(&tasks, |&(coord, sign)| {
        let start = samples
            .iter()
            .min_by(|a, b| (-sign * a.k[coord]).total_cmp(&(-sign * b.k[coord])))
            .expect("non-empty grid");
        refine_extreme(sys, start, coord, sign, &spacing, opts.refine_tol)
    });
    for r in refined {
        samples.extend(r?);
    }

    let mut tight_lo = vec![f64::INFINITY; dim];
    let mut tight_hi = vec![f64::NEG_INFINITY; dim];
    for s in &samples {
        for i in 0..dim {
            tight_lo[i] = tight_lo[i].min(s.k[i]);
            tight_hi[i] = tight_hi[i].max(s.k[i]);
        }
    }
    let gain_box = HyperRectangle::new(
        tight_lo.iter().map(|v| v - opts.epsilon).collect(),
        tight_hi.iter().map(|v| v + opts.epsilon).collect(),
    )?;
    Ok(GainBoxResult {
        tight_lo,
        tight_hi,
        gain_box,
        epsilon: opts.epsilon,
        samples,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct ContainmentOptions {
    pub multistarts: usize,
    pub seed: u64,
    pub delta_safe: f64,
    /// Random points of `𝒞 × 𝒫` screened for a direct violation.
    pub screen_samples: usize,
    pub execution: Execution,
}

impl Default for ContainmentOptions {
    fn default() -> Self {
        Self {
            multistarts: 32,
            seed: 0,
            delta_safe: DEFAULT_DELTA_SAFE,
            screen_samples: 2000,
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContainmentWitness {
    /// Closest point of the box.
    pub k_box: Vec<f64>,
    /// Point with `fᵢ(k_boundary, ρ) ≤ 0`.
    pub k_boundary: Vec<f64>,
    pub rho: Vec<f64>,
    /// `fᵢ(k_boundary, ρ)`, re-evaluated from the polynomial.
    pub f_value: f64,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContainmentReport {
    /// Best distance found per polynomial; `+∞` (JSON `null`) when no
    /// point with `fᵢ ≤ 0` was reached.
    pub d: Vec<f64>,
    pub witnesses: Vec<Option<ContainmentWitness>>,
    pub contained: bool,
    pub delta_safe: f64,
    /// Every box vertex with every parameter vertex gives a Hurwitz matrix.
    /// Necessary for containment, not sufficient.
    pub vertex_check: bool,
    pub polynomials: Vec<String>,
}

impl ContainmentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }
}

struct Problem<'a> {
    f: &'a MultiPoly,
    grad: Vec<MultiPoly>,
    gain_box: &'a HyperRectangle,
    params: &'a [(f64, f64)],
}

impl Problem<'_> {
    fn dim(&self) -> usize {
        self.gain_box.dim()
    }

    fn f_at(&self, kp: &[f64], rho: &[f64]) -> f64 {
        let mut pt = kp.to_vec();
        pt.extend_from_slice(rho);
        self.f.eval(&pt)
    }

    fn grad_at(&self, kp: &[f64], rho: &[f64]) -> Vec<f64> {
        let mut pt = kp.to_vec();
        pt.extend_from_slice(rho);
        self.grad.iter().map(|g| g.eval(&pt)).collect()
    }

    /// Layout of `z`: `(k_box, k_boundary, ρ)`.
    fn split<'z>(&self, z: &'z [f64]) -> (&'z [f64], &'z [f64], &'z [f64]) {
        let d = self.dim();
        (&z[..d], &z[d..2 * d], &z[2 * d..])
    }

    fn project(&self, z: &mut [f64]) {
        let d = self.dim();
        let kc = self.gain_box.clamp(&z[..d]);
        z[..d].copy_from_slice(&kc);
        for (j, &(lo, hi)) in self.params.iter().enumerate() {
            z[2 * d + j] = z[2 * d + j].clamp(lo, hi);
        }
    }

    fn penalty(&self, z: &[f64], mu: f64) -> f64 {
        let (kc, kp, rho) = self.split(z);
        let dist: f64 = kc.iter().zip(kp).map(|(a, b)| (a - b).powi(2)).sum();
        dist + mu * self.f_at(kp, rho).max(0.0).powi(2)
    }

    fn penalty_grad(&self, z: &[f64], mu: f64) -> Vec<f64> {
        let d = self.dim();
        let (kc, kp, rho) = self.split(z);
        let viol = self.f_at(kp, rho).max(0.0);
        let gf = self.grad_at(kp, rho);
        let mut g = vec![0.0; z.len()];
        for i in 0..d {
            g[i] = 2.0 * (kc[i] - kp[i]);
            g[d + i] = -2.0 * (kc[i] - kp[i]) + 2.0 * mu * viol * gf[i];
        }
        for j in 0..rho.len() {
            g[2 * d + j] = 2.0 * mu * viol * gf[d + j];
        }
        g
    }

    /// Projected gradient descent with backtracking on the penalty.
    fn descend(&self, z: &mut Vec<f64>, mu: f64) {
        let mut step: f64 = 1.0;
        let mut val = self.penalty(z, mu);
        for _ in 0..400 {
            let g = self.penalty_grad(z, mu);
            let mut accepted = false;
            while step > 1e-18 {
                let mut cand: Vec<f64> = z.iter().zip(&g).map(|(a, b)| a - step * b).collect();
                self.project(&mut cand);
                let moved: f64 = cand.iter().zip(z.iter()).map(|(a, b)| (a - b).powi(2)).sum();
                let cv = self.penalty(&cand, mu);
                if cv <= val - 1e-4 * moved / step {
                    accepted = moved > 0.0;
                    *z = cand;
                    val = cv;
                    break;
                }
                step *= 0.5;
            }
            if !accepted || step <= 1e-18 {
                break;
            }
            step = (step * 2.0).min(1.0);
        }
    }

    /// Newton steps on `k_boundary` until `f ≤ 0`.
    fn restore(&self, kp: &mut [f64], rho: &[f64]) -> bool {
        for _ in 0..100 {
            let f = self.f_at(kp, rho);
            if f <= 0.0 {
                return true;
            }
            let g = self.grad_at(kp, rho);
            let gk: f64 = g[..kp.len()].iter().map(|v| v * v).sum();
            if gk < 1e-300 {
                return false;
            }
            let t = (f + 1e-12 * (1.0 + f.abs())) / gk;
            for (k, gi) in kp.iter_mut().zip(&g) {
                *k -= t * gi;
            }
        }
        self.f_at(kp, rho) <= 0.0
    }

    fn witness(&self, kp: Vec<f64>, rho: Vec<f64>) -> ContainmentWitness {
        let kc = self.gain_box.clamp(&kp);
        let distance = kc.iter().zip(&kp).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        ContainmentWitness {
            f_value: self.f_at(&kp, &rho),
            k_box: kc,
            k_boundary: kp,
            rho,
            distance,
        }
    }

    fn local_search(&self, start: Vec<f64>) -> Option<ContainmentWitness> {
        let mut z = start;
        self.project(&mut z);
        let mut mu = 1.0;
        while mu <= 1e8 {
            self.descend(&mut z, mu);
            mu *= 10.0;
        }
        let d = self.dim();
        let rho = z[2 * d..].to_vec();
        let mut kp = z[d..2 * d].to_vec();
        if !self.restore(&mut kp, &rho) {
            return None;
        }
        Some(self.witness(kp, rho))
    }
}

fn witness_order(a: &ContainmentWitness, b: &ContainmentWitness) -> Ordering {
    let key = |w: &ContainmentWitness| {
        w.k_boundary
            .iter()
            .chain(&w.k_box)
            .chain(&w.rho)
            .copied()
            .collect::<Vec<f64>>()
    };
    a.distance.total_cmp(&b.distance).then_with(|| {
        key(a)
            .iter()
            .zip(key(b).iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    })
}

fn random_point(rng: &mut ChaCha8Rng, bounds: impl Iterator<Item = (f64, f64)>) -> Vec<f64> {
    bounds
        .map(|(lo, hi)| if hi > lo { rng.gen_range(lo..=hi) } else { lo })
        .collect()
}

/// Distance from the box to the zero set of one stability polynomial.
fn distance_for(problem: &Problem<'_>, index: usize, opts: &ContainmentOptions) -> Option<ContainmentWitness> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(index as u64 + 1)));
    let box_bounds = || {
        problem
            .gain_box
            .lo()
            .iter()
            .copied()
            .zip(problem.gain_box.hi().iter().copied())
    };

    // direct screen: corners, then random points
    let mut screen: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for kv in problem.gain_box.vertices() {
        for rv in crate::lpv::box_vertices(problem.params) {
            screen.push((kv.clone(), rv));
        }
    }
    for _ in 0..opts.screen_samples {
        screen.push((
            random_point(&mut rng, box_bounds()),
            random_point(&mut rng, problem.params.iter().copied()),
        ));
    }
    let direct = screen
        .into_iter()
        .filter(|(k, r)| problem.f_at(k, r) <= 0.0)
        .map(|(k, r)| problem.witness(k, r))
        .min_by(witness_order);
    if direct.is_some() {
        return direct;
    }

    let d = problem.dim();
    let starts: Vec<Vec<f64>> = (0..opts.multistarts.max(1))
        .map(|_| {
            let kc = random_point(&mut rng, box_bounds());
            let rho = random_point(&mut rng, problem.params.iter().copied());
            let mut z = kc.clone();
            z.extend(kc.iter().map(|v| v + rng.gen_range(-1e-3..1e-3)));
            z.extend(rho);
            debug_assert_eq!(z.len(), 2 * d + problem.params.len());
            z
        })
        .collect();
    opts.execution
        .map(&starts, |s| problem.local_search(s.clone()))
        .into_iter()
        .flatten()
        .min_by(witness_order)
}

/// Estimates, for each stability polynomial `fᵢ`, the distance between the
/// box and the set `{K : fᵢ(K, ρ) ≤ 0 for some ρ ∈ 𝒫}`.
///
/// The reported distances are upper bounds on the true minima (local
/// search), so containment is declared only when every distance exceeds
/// `delta_safe`.
pub fn verify_containment(
    sys: &PolytopicLpvSystem,
    gain_box: &HyperRectangle,
    opts: &ContainmentOptions,
) -> Result<ContainmentReport> {
    let polys = stability_polynomials(sys)?;
    verify_containment_with(sys, &polys, gain_box, opts)
}

/// [`verify_containment`] with precomputed polynomials.
pub fn verify_containment_with(
    sys: &PolytopicLpvSystem,
    polys: &StabilityPolynomials,
    gain_box: &HyperRectangle,
    opts: &ContainmentOptions,
) -> Result<ContainmentReport> {
    if gain_box.dim() != polys.gain_vars {
        return Err(Error::DimensionMismatch(format!(
            "box has {} coordinates, gain has {}",
            gain_box.dim(),
            polys.gain_vars
        )));
    }
    let mut d = Vec::with_capacity(polys.polys.len());
    let mut witnesses = Vec::with_capacity(polys.polys.len());
    for (i, f) in polys.polys.iter().enumerate() {
        let problem = Problem {
            f,
            grad: f.gradient(),
            gain_box,
            params: sys.param_box(),
        };
        let w = distance_for(&problem, i, opts);
        // a short witness must still violate fᵢ ≤ 0 on exact re-evaluation
        let w = w.filter(|w| w.distance >= opts.delta_safe || f.eval(&polys.point(&w.k_boundary, &w.rho)) <= 0.0);
        d.push(w.as_ref().map_or(f64::INFINITY, |w| w.distance));
        witnesses.push(w);
    }
    let vertex_check = closed_loop_vertices(sys, gain_box)?.iter().all(check_hurwitz);
    Ok(ContainmentReport {
        contained: d.iter().all(|v| *v > opts.delta_safe),
        d,
        witnesses,
        delta_safe: opts.delta_safe,
        vertex_check,
        polynomials: polys.display(),
    })
}

/// Gain sample at `ρ` as a matrix, for callers that need `K*_ρ` directly.
pub fn sample_gain(sample: &GainSample, m: usize, n: usize) -> Mat {
    Mat::unvec(&sample.k, m, n).expect("sample length matches m·n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scalar_system(lo: f64, hi: f64) -> PolytopicLpvSystem {
        // a(ρ) = ρ, b = q = r = 1
        PolytopicLpvSystem::new(
            Mat::from_rows(&[[0.0]]),
            vec![Mat::from_rows(&[[1.0]])],
            Mat::from_rows(&[[1.0]]),
            Mat::identity(1),
            Mat::identity(1),
            vec![(lo, hi)],
        )
        .unwrap()
    }

    #[test]
    fn scalar_bounds_match_closed_form() {
        let sys = scalar_system(-2.0, -1.0);
        let res = compute_gain_box(
            &sys,
            &GainBoxOptions {
                grid_density: 9,
                ..Default::default()
            },
        )
        .unwrap();
        let kstar = |a: f64| a + (a * a + 1.0).sqrt();
        assert_abs_diff_eq!(res.tight_lo[0], kstar(-2.0), epsilon = 1e-9);
        assert_abs_diff_eq!(res.tight_hi[0], kstar(-1.0), epsilon = 1e-9);
        assert_abs_diff_eq!(res.gain_box.lo()[0], kstar(-2.0) - 0.01, epsilon = 1e-9);
        for s in &res.samples {
            assert!(res.tight_lo[0] <= s.k[0] && s.k[0] <= res.tight_hi[0]);
        }
    }

    #[test]
    fn two_parameters_extremes_at_corners() {
        // a(ρ) = ρ₁ + ρ₂ over [−2, −1] × [−1, 0]
        let sys = PolytopicLpvSystem::new(
            Mat::from_rows(&[[0.0]]),
            vec![Mat::from_rows(&[[1.0]]), Mat::from_rows(&[[1.0]])],
            Mat::from_rows(&[[1.0]]),
            Mat::identity(1),
            Mat::identity(1),
            vec![(-2.0, -1.0), (-1.0, 0.0)],
        )
        .unwrap();
        let res = compute_gain_box(
            &sys,
            &GainBoxOptions {
                grid_density: 6,
                ..Default::default()
            },
        )
        .unwrap();
        let kstar = |a: f64| a + (a * a + 1.0).sqrt();
        assert_abs_diff_eq!(res.tight_lo[0], kstar(-3.0), epsilon = 1e-9);
        assert_abs_diff_eq!(res.tight_hi[0], kstar(-1.0), epsilon = 1e-9);
    }

    #[test]
    fn constant_system_gives_epsilon_cube() {
        let sys = scalar_system(-1.0, -1.0);
        let res = compute_gain_box(&sys, &GainBoxOptions::default()).unwrap();
        assert_eq!(res.tight_lo, res.tight_hi);
        assert_abs_diff_eq!(res.gain_box.hi()[0] - res.gain_box.lo()[0], 0.02, epsilon = 1e-12);
    }

    #[test]
    fn rejects_small_grid_and_bad_epsilon() {
        let sys = scalar_system(-2.0, -1.0);
        let small = GainBoxOptions {
            grid_density: 4,
            ..Default::default()
        };
        assert!(compute_gain_box(&sys, &small).is_err());
        let bad = GainBoxOptions {
            epsilon: 0.0,
            ..Default::default()
        };
        assert!(compute_gain_box(&sys, &bad).is_err());
    }

    #[test]
    fn scalar_containment_distance() {
        // closed loop ρ − k is stable iff k > ρ, so the worst case is ρ = hi
        let sys = scalar_system(-2.0, -1.0);
        let b = HyperRectangle::new(vec![-0.5], vec![1.0]).unwrap();
        let rep = verify_containment(&sys, &b, &ContainmentOptions::default()).unwrap();
        assert_eq!(rep.d.len(), 1);
        assert_abs_diff_eq!(rep.d[0], 0.5, epsilon = 1e-6);
        assert!(rep.contained);
        assert!(rep.vertex_check);

        let crossing = HyperRectangle::new(vec![-1.5], vec![1.0]).unwrap();
        let rep = verify_containment(&sys, &crossing, &ContainmentOptions::default()).unwrap();
        assert_eq!(rep.d[0], 0.0);
        assert!(!rep.contained);
        assert!(rep.witnesses[0].as_ref().unwrap().f_value <= 0.0);
    }

    #[test]
    fn uncontrollable_positive_constant_is_infinitely_far() {
        let sys = PolytopicLpvSystem::new(
            Mat::diag(&[-1.0, -2.0]),
            vec![],
            Mat::zeros(2, 1),
            Mat::identity(2),
            Mat::identity(1),
            vec![],
        )
        .unwrap();
        let b = HyperRectangle::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let rep = verify_containment(&sys, &b, &ContainmentOptions::default()).unwrap();
        assert!(rep.d.iter().all(|d| d.is_infinite()));
        assert!(rep.contained);
        assert!(rep.to_json().contains("null"));
    }

    #[test]
    fn samples_csv_layout() {
        let sys = scalar_system(-2.0, -1.0);
        let res = compute_gain_box(
            &sys,
            &GainBoxOptions {
                grid_density: 5,
                ..Default::default()
            },
        )
        .unwrap();
        let mut buf = Vec::new();
        res.write_samples_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("rho1,K1\n"));
        assert_eq!(text.lines().count(), res.samples.len() + 1);
    }
}

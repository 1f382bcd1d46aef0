//! Closed-loop simulation of the plant driven by a gain that follows the
//! projected LQR gradient flow, plus the static-gain baseline and cost
//! comparisons.

mod integrator;
mod svg;
mod trace;

use std::fmt;

use serde::Serialize;

pub use integrator::{dopri_step, integrate_segment, rk4_step, Integrator, SolverSettings, StepSize};
pub use svg::trace_svg;
pub use trace::{SimEvent, SimTrace};

use crate::cert::check_hurwitz;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::linalg::Mat;
use crate::lpv::{ParamTrajectory, PolytopicLpvSystem};
use crate::lqr::{evaluate_plant, optimal_gain};
use crate::projection::{eval_constraints_tol, HyperRectangle};

/// Gains drifting at most this far outside the box are clamped back.
pub const CLAMP_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub x0: Vec<f64>,
    /// Initial gain, strictly inside the box.
    pub k0: Mat,
    pub alpha: f64,
    pub horizon: f64,
    /// Fixed step for RK4, initial and largest step for RK45.
    pub dt: f64,
    pub trajectory: ParamTrajectory,
    pub solver: SolverSettings,
}

/// A failed run with everything recorded up to the failure.
#[derive(Debug, Clone)]
pub struct SimAbort {
    pub error: Error,
    pub trace: Box<SimTrace>,
}

impl fmt::Display for SimAbort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let at = self.trace.t.last().copied().unwrap_or(0.0);
        write!(f, "simulation aborted at t = {at}: {}", self.error)
    }
}

impl std::error::Error for SimAbort {}

impl From<SimAbort> for Error {
    fn from(a: SimAbort) -> Self {
        a.error
    }
}

enum GainLaw<'a> {
    Flow { gain_box: &'a HyperRectangle, alpha: f64 },
    Fixed(&'a Mat),
}

struct Runner<'a> {
    sys: &'a PolytopicLpvSystem,
    law: GainLaw<'a>,
}

impl Runner<'_> {
    fn dims(&self) -> (usize, usize) {
        (self.sys.n(), self.sys.m())
    }

    fn gain(&self, y: &[f64]) -> Mat {
        let (n, m) = self.dims();
        match self.law {
            GainLaw::Flow { .. } => Mat::unvec(&y[n..n + m * n], m, n).expect("state layout"),
            GainLaw::Fixed(k) => k.clone(),
        }
    }

    fn cost_rate(&self, x: &[f64], k: &Mat) -> f64 {
        let u = k.mul_vec(x);
        self.sys.q().quad_form(x) + self.sys.r().quad_form(&u)
    }

    /// Right-hand side over the state `(x, vec K, J)` (the gain block is
    /// absent for a fixed gain).
    fn rhs(&self, rho: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        let (n, _) = self.dims();
        let a = self.sys.eval_a_unchecked(&self.sys.clamp_param(rho));
        let k = self.gain(y);
        let x = &y[..n];
        let mut dy = (&a - &(self.sys.b() * &k)).mul_vec(x);
        if let GainLaw::Flow { gain_box, alpha } = self.law {
            let cons = eval_constraints_tol(gain_box, &k.vec(), CLAMP_TOL)?;
            let eval = evaluate_plant(&a, self.sys.b(), self.sys.q(), self.sys.r(), &k)?;
            dy.extend(cons.m.mul_vec(&eval.grad.vec()).into_iter().map(|v| -alpha * v));
        }
        dy.push(self.cost_rate(x, &k));
        Ok(dy)
    }

    fn record(&self, trace: &mut SimTrace, t: f64, y: &[f64], rho: &[f64], min_g: f64) {
        let (n, _) = self.dims();
        let k = self.gain(y);
        trace.t.push(t);
        trace.x.push(y[..n].to_vec());
        trace.k.push(k.vec());
        trace.rho.push(rho.to_vec());
        trace.cost_rate.push(self.cost_rate(&y[..n], &k));
        trace.cost.push(*y.last().expect("cost entry"));
        trace.min_g.push(min_g);
    }

    fn min_g(&self, y: &[f64]) -> f64 {
        match self.law {
            GainLaw::Flow { gain_box, .. } => gain_box.min_g(&self.gain(y).vec()),
            GainLaw::Fixed(_) => f64::NAN,
        }
    }

    fn run(
        &self,
        y0: Vec<f64>,
        trajectory: &ParamTrajectory,
        horizon: f64,
        dt: f64,
        solver: &SolverSettings,
        trace: &mut SimTrace,
    ) -> Result<()> {
        let (n, m) = self.dims();
        let mut y = y0;
        self.record(trace, 0.0, &y, &trajectory.value_at(0.0), self.min_g(&y));
        let mut cuts = vec![0.0];
        cuts.extend(trajectory.switch_times(horizon));
        cuts.push(horizon);
        let piecewise = trajectory.is_piecewise_constant();
        let mut h = dt;
        for (seg, w) in cuts.windows(2).enumerate() {
            let (a, b) = (w[0], w[1]);
            let seg_rho = trajectory.value_at(a);
            if seg > 0 {
                trace.events.push(SimEvent::Switch {
                    t: a,
                    rho: seg_rho.clone(),
                });
            }
            let rho_at = |t: f64| {
                if piecewise {
                    seg_rho.clone()
                } else {
                    trajectory.value_at(t)
                }
            };
            let mut f = |t: f64, y: &[f64]| self.rhs(&rho_at(t), y);
            let mut events = Vec::new();
            let mut rows: Vec<(f64, Vec<f64>, f64)> = Vec::new();
            let step = StepSize { initial: h, max: dt };
            let result = integrate_segment(&mut f, a, b, &mut y, step, solver, |t, y| {
                let mut min_g = self.min_g(y);
                if let GainLaw::Flow { gain_box, .. } = self.law {
                    if min_g < 0.0 {
                        if min_g < -CLAMP_TOL {
                            rows.push((t, y.clone(), min_g));
                            return Err(Error::DriftTooLarge { drift: -min_g });
                        }
                        let clamped = gain_box.clamp(&y[n..n + m * n]);
                        y[n..n + m * n].copy_from_slice(&clamped);
                        events.push(SimEvent::Clamp { t, drift: -min_g });
                    }
                    min_g = min_g.min(gain_box.min_g(&y[n..n + m * n]));
                }
                rows.push((t, y.clone(), min_g));
                Ok(())
            });
            for (t, y, g) in &rows {
                self.record(trace, *t, y, &rho_at(*t), *g);
            }
            trace.events.extend(events);
            trace.events.sort_by(|p, q| p.time().total_cmp(&q.time()));
            h = result?;
        }
        Ok(())
    }
}

fn check_x0(sys: &PolytopicLpvSystem, x0: &[f64]) -> Result<()> {
    if x0.len() != sys.n() || x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("x0 must hold {} finite entries", sys.n())));
    }
    Ok(())
}

fn check_timing(horizon: f64, dt: f64) -> Result<()> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidInput("horizon must be positive".into()));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidInput("dt must be positive".into()));
    }
    Ok(())
}

impl SimConfig {
    pub fn validate(&self, sys: &PolytopicLpvSystem, gain_box: &HyperRectangle) -> Result<()> {
        check_x0(sys, &self.x0)?;
        check_timing(self.horizon, self.dt)?;
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidInput("alpha must be positive".into()));
        }
        if self.k0.shape() != (sys.m(), sys.n()) {
            return Err(Error::DimensionMismatch(format!(
                "K0 is {:?}, expected {}x{}",
                self.k0.shape(),
                sys.m(),
                sys.n()
            )));
        }
        if gain_box.dim() != sys.m() * sys.n() {
            return Err(Error::DimensionMismatch(format!(
                "gain box has {} coordinates, expected {}",
                gain_box.dim(),
                sys.m() * sys.n()
            )));
        }
        let min_g = gain_box.min_g(&self.k0.vec());
        if min_g <= 0.0 {
            return Err(Error::OutsideManifold { min_g });
        }
        self.trajectory.validate(sys)
    }
}

/// Integrates the plant together with the gain flow
/// `vec K̇ = −α M(vec K) vec ∇f_K(ρ(t))`.
///
/// Switch times are integration breakpoints. On failure the returned
/// [`SimAbort`] carries the trace up to the last accepted step.
pub fn simulate_closed_loop(
    sys: &PolytopicLpvSystem,
    gain_box: &HyperRectangle,
    cfg: &SimConfig,
) -> std::result::Result<SimTrace, SimAbort> {
    let mut trace = SimTrace::empty(
        (sys.n(), sys.m(), sys.p()),
        cfg.trajectory.clone(),
        cfg.x0.clone(),
        cfg.horizon,
        true,
    );
    if let Err(error) = cfg.validate(sys, gain_box) {
        return Err(SimAbort {
            error,
            trace: Box::new(trace),
        });
    }
    let runner = Runner {
        sys,
        law: GainLaw::Flow {
            gain_box,
            alpha: cfg.alpha,
        },
    };
    let mut y0 = cfg.x0.clone();
    y0.extend(cfg.k0.vec());
    y0.push(0.0);
    match runner.run(y0, &cfg.trajectory, cfg.horizon, cfg.dt, &cfg.solver, &mut trace) {
        Ok(()) => Ok(trace),
        Err(error) => Err(SimAbort {
            error,
            trace: Box::new(trace),
        }),
    }
}

/// Runs independent scenarios, in input order regardless of `execution`.
pub fn simulate_batch(
    sys: &PolytopicLpvSystem,
    gain_box: &HyperRectangle,
    configs: &[SimConfig],
    execution: Execution,
) -> Vec<std::result::Result<SimTrace, SimAbort>> {
    execution.map(configs, |cfg| simulate_closed_loop(sys, gain_box, cfg))
}

/// Parameter values a trajectory visits, for the static Hurwitz pre-check.
fn visited_params(trajectory: &ParamTrajectory, horizon: f64) -> Vec<Vec<f64>> {
    match trajectory {
        ParamTrajectory::Sinusoid { .. } => (0..=256)
            .map(|i| trajectory.value_at(horizon * i as f64 / 256.0))
            .collect(),
        _ => {
            let mut ts = vec![0.0];
            ts.extend(trajectory.switch_times(horizon));
            ts.iter().map(|t| trajectory.value_at(*t)).collect()
        }
    }
}

/// Integrates `ẋ = (A(ρ(t)) − BK)x` with a fixed gain and the same cost
/// accounting as [`simulate_closed_loop`].
pub fn simulate_static(
    sys: &PolytopicLpvSystem,
    k_fixed: &Mat,
    x0: &[f64],
    trajectory: &ParamTrajectory,
    horizon: f64,
    dt: f64,
    solver: &SolverSettings,
) -> std::result::Result<SimTrace, SimAbort> {
    let mut trace = SimTrace::empty(
        (sys.n(), sys.m(), sys.p()),
        trajectory.clone(),
        x0.to_vec(),
        horizon,
        false,
    );
    let checks = || -> Result<()> {
        check_x0(sys, x0)?;
        check_timing(horizon, dt)?;
        trajectory.validate(sys)?;
        for rho in visited_params(trajectory, horizon) {
            if !check_hurwitz(&sys.closed_loop(&sys.clamp_param(&rho), k_fixed)?) {
                return Err(Error::NotHurwitz);
            }
        }
        Ok(())
    };
    if let Err(error) = checks() {
        return Err(SimAbort {
            error,
            trace: Box::new(trace),
        });
    }
    let runner = Runner {
        sys,
        law: GainLaw::Fixed(k_fixed),
    };
    let mut y0 = x0.to_vec();
    y0.push(0.0);
    match runner.run(y0, trajectory, horizon, dt, solver, &mut trace) {
        Ok(()) => Ok(trace),
        Err(error) => Err(SimAbort {
            error,
            trace: Box::new(trace),
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostComparison {
    pub cost_a: f64,
    pub cost_b: f64,
    /// `J_B − J_A`.
    pub difference: f64,
    /// `(J_B − J_A) / J_B`; zero when both costs vanish.
    pub relative_reduction: f64,
}

/// Compares the final costs of two runs of the same scenario.
pub fn compare_costs(a: &SimTrace, b: &SimTrace) -> Result<CostComparison> {
    if a.trajectory != b.trajectory {
        return Err(Error::MismatchedScenarios("parameter trajectories differ".into()));
    }
    if a.x0 != b.x0 {
        return Err(Error::MismatchedScenarios("initial states differ".into()));
    }
    if a.horizon != b.horizon {
        return Err(Error::MismatchedScenarios("horizons differ".into()));
    }
    let (ja, jb) = (a.final_cost(), b.final_cost());
    let difference = jb - ja;
    Ok(CostComparison {
        cost_a: ja,
        cost_b: jb,
        difference,
        relative_reduction: if jb == 0.0 { 0.0 } else { difference / jb },
    })
}

/// Trapezoidal integral of the logged cost rate.
pub fn trapezoid_cost(trace: &SimTrace) -> f64 {
    trace
        .t
        .windows(2)
        .zip(trace.cost_rate.windows(2))
        .map(|(t, c)| 0.5 * (t[1] - t[0]) * (c[0] + c[1]))
        .sum()
}

/// `V = xᵀP_K x + f_K − f_{K*}` at every row of a frozen-parameter trace.
pub fn lyapunov_values(sys: &PolytopicLpvSystem, rho: &[f64], trace: &SimTrace) -> Result<Vec<f64>> {
    let a = sys.eval_a(rho)?;
    let (p_star, _) = optimal_gain(sys, rho)?;
    let f_star = p_star.trace();
    trace
        .x
        .iter()
        .zip(&trace.k)
        .map(|(x, k)| {
            let k = Mat::unvec(k, sys.m(), sys.n())?;
            let e = evaluate_plant(&a, sys.b(), sys.q(), sys.r(), &k)?;
            Ok(e.p.quad_form(x) + e.cost - f_star)
        })
        .collect()
}

/// Least-squares slope `λ` of `ln ‖x(t)‖ ≈ c − λt`, over rows where the
/// state is above `floor`.
pub fn decay_rate(trace: &SimTrace, floor: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = trace
        .t
        .iter()
        .zip(&trace.x)
        .filter_map(|(t, x)| {
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            (norm > floor).then(|| (*t, norm.ln()))
        })
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let (mt, ml) = pts.iter().fold((0.0, 0.0), |(a, b), (t, l)| (a + t / k, b + l / k));
    let (num, den) = pts.iter().fold((0.0, 0.0), |(n, d), (t, l)| {
        (n + (t - mt) * (l - ml), d + (t - mt).powi(2))
    });
    (den > 0.0).then(|| -num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lqr::solve_care;
    use approx::assert_abs_diff_eq;

    fn reference_box() -> HyperRectangle {
        HyperRectangle::new(vec![-0.94, 4.49], vec![-0.23, 5.97]).unwrap()
    }

    fn config(rho: f64, x0: Vec<f64>) -> SimConfig {
        SimConfig {
            x0,
            k0: Mat::from_rows(&[[-0.5, 5.0]]),
            alpha: 100.0,
            horizon: 2.0,
            dt: 0.01,
            trajectory: ParamTrajectory::constant(vec![rho]),
            solver: SolverSettings::default(),
        }
    }

    #[test]
    fn frozen_parameter_gain_converges() {
        let sys = PolytopicLpvSystem::case_study();
        let trace = simulate_closed_loop(&sys, &reference_box(), &config(1.0, vec![1.0, -1.0])).unwrap();
        let (_, kstar) = optimal_gain(&sys, &[1.0]).unwrap();
        let err: f64 = trace
            .final_k()
            .iter()
            .zip(kstar.vec())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(err < 1e-3, "{err}");
        assert!(trace.cost.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn zero_state_stays_zero_while_gain_moves() {
        let sys = PolytopicLpvSystem::case_study();
        let trace = simulate_closed_loop(&sys, &reference_box(), &config(2.0, vec![0.0, 0.0])).unwrap();
        assert!(trace.x.iter().all(|x| x.iter().all(|v| *v == 0.0)));
        assert_eq!(trace.final_cost(), 0.0);
        assert!(trace.final_k() != trace.k[0].as_slice());
    }

    #[test]
    fn static_optimal_gain_cost_matches_value_function() {
        let sys = PolytopicLpvSystem::case_study();
        let a = sys.eval_a(&[1.25]).unwrap();
        let (p, k) = solve_care(&a, sys.b(), sys.q(), sys.r()).unwrap();
        let x0 = [1.0, 2.0];
        let traj = ParamTrajectory::constant(vec![1.25]);
        let trace = simulate_static(&sys, &k, &x0, &traj, 200.0, 0.05, &SolverSettings::default()).unwrap();
        assert_abs_diff_eq!(trace.final_cost(), p.quad_form(&x0), epsilon = 1e-6 * p.quad_form(&x0));
        assert!(trace.min_g.iter().all(|v| v.is_nan()));
    }

    #[test]
    fn static_rejects_destabilizing_gain() {
        let sys = PolytopicLpvSystem::case_study();
        let traj = ParamTrajectory::constant(vec![1.0]);
        let err = simulate_static(
            &sys,
            &Mat::zeros(1, 2),
            &[1.0, 0.0],
            &traj,
            1.0,
            0.1,
            &SolverSettings::default(),
        )
        .unwrap_err();
        assert_eq!(err.error, Error::NotHurwitz);
        assert!(err.trace.is_empty());
    }

    #[test]
    fn batch_modes_return_identical_traces_in_order() {
        let sys = PolytopicLpvSystem::case_study();
        let configs: Vec<SimConfig> = [0.6, 1.25, 1.9].iter().map(|r| config(*r, vec![1.0, -1.0])).collect();
        let seq = simulate_batch(&sys, &reference_box(), &configs, Execution::Sequential);
        let par = simulate_batch(&sys, &reference_box(), &configs, Execution::Parallel);
        for ((a, b), cfg) in seq.iter().zip(&par).zip(&configs) {
            let (a, b) = (a.as_ref().unwrap(), b.as_ref().unwrap());
            assert_eq!(a, b);
            assert_eq!(a.trajectory, cfg.trajectory);
        }
    }

    #[test]
    fn switching_run_logs_events_and_stays_in_box() {
        let sys = PolytopicLpvSystem::case_study();
        let mut cfg = config(1.0, vec![2.0, -1.0]);
        cfg.trajectory = ParamTrajectory::piecewise(vec![0.0, 0.5, 1.2], vec![vec![2.0], vec![0.5], vec![1.3]]);
        let trace = simulate_closed_loop(&sys, &reference_box(), &cfg).unwrap();
        let switches: Vec<f64> = trace
            .events
            .iter()
            .filter_map(|e| match e {
                SimEvent::Switch { t, .. } => Some(*t),
                _ => None,
            })
            .collect();
        assert_eq!(switches, vec![0.5, 1.2]);
        assert!(trace.t.contains(&0.5) && trace.t.contains(&1.2));
        assert!(trace.worst_min_g() >= -CLAMP_TOL);
        let csv = trace.to_csv();
        assert!(csv.starts_with("t,x1,x2,K1,K2,rho1,cost_rate,cost,min_g\n"));
        assert!(csv.contains("# switch t=5.0000000000000000e-1"));
        assert!(trace_svg(&trace).contains("<polyline"));
    }

    #[test]
    fn identical_traces_compare_to_zero_and_mismatch_is_caught() {
        let sys = PolytopicLpvSystem::case_study();
        let cfg = config(1.0, vec![1.0, 1.0]);
        let a = simulate_closed_loop(&sys, &reference_box(), &cfg).unwrap();
        let cmp = compare_costs(&a, &a).unwrap();
        assert_eq!(cmp.relative_reduction, 0.0);
        let b = simulate_closed_loop(&sys, &reference_box(), &config(1.0, vec![2.0, 1.0])).unwrap();
        assert!(matches!(compare_costs(&a, &b), Err(Error::MismatchedScenarios(_))));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let sys = PolytopicLpvSystem::case_study();
        let mut cfg = config(1.0, vec![1.0, 1.0]);
        cfg.k0 = Mat::from_rows(&[[-0.94, 5.0]]);
        assert!(matches!(
            simulate_closed_loop(&sys, &reference_box(), &cfg).unwrap_err().error,
            Error::OutsideManifold { .. }
        ));
        let mut cfg = config(1.0, vec![1.0, 1.0]);
        cfg.dt = 0.0;
        assert!(simulate_closed_loop(&sys, &reference_box(), &cfg).is_err());
    }
}

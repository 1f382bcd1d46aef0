//! Property tests of the closed loop and the gain box on the bundled case
//! study and on small random systems.

use lpvflow::bounds::{compute_gain_box, GainBoxOptions};
use lpvflow::linalg::sym_eig;
use lpvflow::lpv::closed_loop_vertices;
use lpvflow::lqr::{evaluate, optimal_gain};
use lpvflow::projection::eval_constraints;
use lpvflow::sim::{
    compare_costs, decay_rate, simulate_closed_loop, simulate_static, trapezoid_cost, SimConfig, SolverSettings,
};
use lpvflow::{HyperRectangle, Mat, ParamTrajectory, PolytopicLpvSystem};
use proptest::prelude::*;

fn reference_box() -> HyperRectangle {
    HyperRectangle::new(vec![-0.94, 4.49], vec![-0.23, 5.97]).unwrap()
}

fn interior(u: [f64; 2]) -> Mat {
    let b = reference_box();
    let k: Vec<f64> = (0..2)
        .map(|i| b.lo()[i] + (0.02 + 0.96 * u[i]) * (b.hi()[i] - b.lo()[i]))
        .collect();
    Mat::unvec(&k, 1, 2).unwrap()
}

fn frozen(rho: f64, x0: Vec<f64>, k0: Mat, horizon: f64, dt: f64, solver: SolverSettings) -> SimConfig {
    SimConfig {
        x0,
        k0,
        alpha: 100.0,
        horizon,
        dt,
        trajectory: ParamTrajectory::constant(vec![rho]),
        solver,
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn norm(v: &[f64]) -> f64 {
    dist(v, &vec![0.0; v.len()])
}

/// Trapezoid rule on every sample and on every other sample, combined by
/// Richardson extrapolation so the quadrature error is O(dt^4).
fn extrapolated_trapezoid(t: &[f64], c: &[f64]) -> f64 {
    let fine: f64 = t
        .windows(2)
        .zip(c.windows(2))
        .map(|(t, c)| 0.5 * (t[1] - t[0]) * (c[0] + c[1]))
        .sum();
    let t2: Vec<f64> = t.iter().step_by(2).copied().collect();
    let c2: Vec<f64> = c.iter().step_by(2).copied().collect();
    let coarse: f64 = t2
        .windows(2)
        .zip(c2.windows(2))
        .map(|(t, c)| 0.5 * (t[1] - t[0]) * (c[0] + c[1]))
        .sum();
    (4.0 * fine - coarse) / 3.0
}

fn switching(times: &[f64], values: &[f64]) -> ParamTrajectory {
    let mut t = vec![0.0];
    for dwell in times {
        t.push(t.last().unwrap() + dwell);
    }
    t.truncate(values.len());
    ParamTrajectory::piecewise(t, values.iter().map(|v| vec![*v]).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    /// Cost accumulated by the integrator agrees with an independent
    /// quadrature of the logged rate once the step is small.
    #[test]
    fn accumulated_cost_matches_trapezoid(
        rho in 0.5f64..2.0,
        x0 in prop::array::uniform2(-5.0f64..5.0),
        u in prop::array::uniform2(0.0f64..1.0),
    ) {
        prop_assume!(norm(&x0) > 0.1);
        let cfg = frozen(rho, x0.to_vec(), interior(u), 0.1, 5e-6, SolverSettings::rk4());
        let trace = simulate_closed_loop(&PolytopicLpvSystem::case_study(), &reference_box(), &cfg).unwrap();
        prop_assert_eq!(trace.t.len() % 2, 1);
        let (j, jt) = (trace.final_cost(), extrapolated_trapezoid(&trace.t, &trace.cost_rate));
        prop_assert!((j - jt).abs() <= 1e-8 * j, "J {j} vs quadrature {jt}");
        prop_assert!((j - trapezoid_cost(&trace)).abs() <= 1e-6 * j);
        prop_assert!(trace.cost.windows(2).all(|w| w[1] >= w[0]));
    }

    /// Fixed optimal gain: the cost converges to the value function.
    #[test]
    fn static_optimal_cost_is_value_function(
        rho in 0.5f64..2.0,
        x0 in prop::array::uniform2(-5.0f64..5.0),
    ) {
        let sys = PolytopicLpvSystem::case_study();
        let (p, k) = optimal_gain(&sys, &[rho]).unwrap();
        let traj = ParamTrajectory::constant(vec![rho]);
        let trace = simulate_static(&sys, &k, &x0, &traj, 30.0, 0.05, &SolverSettings::default()).unwrap();
        let expected = p.quad_form(&x0);
        prop_assert!((trace.final_cost() - expected).abs() <= 1e-6 * expected.max(1.0));
    }

    /// Starting the flow at the optimum keeps it there, so both controllers
    /// accrue the same cost.
    #[test]
    fn dynamic_at_optimum_matches_static(
        rho in 0.5f64..2.0,
        x0 in prop::array::uniform2(-5.0f64..5.0),
    ) {
        prop_assume!(norm(&x0) > 0.1);
        let sys = PolytopicLpvSystem::case_study();
        let (_, k) = optimal_gain(&sys, &[rho]).unwrap();
        let solver = SolverSettings::default();
        let dynamic = simulate_closed_loop(&sys, &reference_box(), &frozen(rho, x0.to_vec(), k.clone(), 3.0, 0.01, solver)).unwrap();
        let fixed = simulate_static(&sys, &k, &x0, &ParamTrajectory::constant(vec![rho]), 3.0, 0.01, &solver).unwrap();
        let cmp = compare_costs(&dynamic, &fixed).unwrap();
        prop_assert!(cmp.relative_reduction.abs() < 1e-3, "{cmp:?}");
    }

    /// Inflating with a larger margin gives a superset, and every sampled
    /// optimal gain lies within the tight bounds.
    #[test]
    fn gain_box_is_monotone_in_margin(e1 in 0.0f64..0.2, extra in 0.0f64..0.2) {
        let sys = PolytopicLpvSystem::case_study();
        let opts = |epsilon| GainBoxOptions { grid_density: 12, epsilon, ..GainBoxOptions::default() };
        let small = compute_gain_box(&sys, &opts(e1)).unwrap();
        let large = compute_gain_box(&sys, &opts(e1 + extra)).unwrap();
        for i in 0..2 {
            prop_assert!(large.gain_box.lo()[i] <= small.gain_box.lo()[i]);
            prop_assert!(large.gain_box.hi()[i] >= small.gain_box.hi()[i]);
            prop_assert!((small.gain_box.hi()[i] - small.tight_hi[i] - e1).abs() < 1e-12);
        }
        for s in &small.samples {
            for i in 0..2 {
                prop_assert!(small.tight_lo[i] <= s.k[i] && s.k[i] <= small.tight_hi[i]);
            }
        }
    }

    /// Every closed-loop vertex equals `A(ρ) − B K` at the matching corner
    /// pair, and the enumeration covers `2^(p + mn)` corners.
    #[test]
    fn vertex_enumeration_matches_direct_evaluation(
        entries in prop::collection::vec(-2.0f64..2.0, 14),
        widths in prop::array::uniform4(0.1f64..1.0),
    ) {
        let m = |s: &[f64]| Mat::from_row_major(2, 2, s.to_vec()).unwrap();
        let sys = PolytopicLpvSystem::new(
            m(&entries[0..4]),
            vec![m(&entries[4..8]), m(&entries[8..12])],
            Mat::column(&entries[12..14]),
            Mat::identity(2),
            Mat::identity(1),
            vec![(0.0, widths[0]), (-1.0, -1.0 + widths[1])],
        ).unwrap();
        let gain_box = HyperRectangle::new(vec![0.0, 1.0], vec![widths[2], 1.0 + widths[3]]).unwrap();
        let vertices = closed_loop_vertices(&sys, &gain_box).unwrap();
        prop_assert_eq!(vertices.len(), 16);
        let mut direct = Vec::new();
        for rho in sys.param_vertices() {
            for k in gain_box.vertices() {
                direct.push(sys.closed_loop(&rho, &Mat::unvec(&k, 1, 2).unwrap()).unwrap());
            }
        }
        for v in &vertices {
            prop_assert!(direct.iter().any(|d| (d - v).max_abs() < 1e-12));
        }
    }

    /// Projection matrix: symmetric, positive definite inside, and it
    /// annihilates the outward normal on an active face.
    #[test]
    fn projection_respects_faces(u in prop::array::uniform2(0.0f64..1.0), face in 0usize..4, v in prop::array::uniform2(-1.0f64..1.0)) {
        let b = reference_box();
        let mut k = interior(u).vec();
        let ev = eval_constraints(&b, &k).unwrap();
        prop_assert!(ev.m.asymmetry() <= 1e-12);
        prop_assert!(sym_eig(&ev.m).unwrap()[0] > 0.0);
        let (axis, upper) = (face % 2, face >= 2);
        k[axis] = if upper { b.hi()[axis] } else { b.lo()[axis] };
        let on_face = eval_constraints(&b, &k).unwrap();
        let mut w = v.to_vec();
        w[axis] = if upper { v[axis].abs() + 0.1 } else { -v[axis].abs() - 0.1 };
        prop_assert!(on_face.m.mul_vec(&w)[axis].abs() < 1e-12);
        prop_assert!(sym_eig(&on_face.m).unwrap()[0] >= -1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    /// Frozen parameter, any interior gain and large initial state: the
    /// closed loop converges to the origin and the optimal gain. The slowest
    /// optimal closed-loop pole is near -0.4, hence the long horizon.
    #[test]
    fn frozen_region_of_attraction(
        rho in 0.5f64..2.0,
        u in prop::array::uniform2(0.0f64..1.0),
        dir in prop::array::uniform2(-1.0f64..1.0),
        radius in 0.0f64..1e3,
    ) {
        let n = norm(&dir).max(1e-12);
        let x0: Vec<f64> = dir.iter().map(|d| d / n * radius).collect();
        let sys = PolytopicLpvSystem::case_study();
        let (_, kstar) = optimal_gain(&sys, &[rho]).unwrap();
        let cfg = frozen(rho, x0.clone(), interior(u), 40.0, 0.1, SolverSettings { rtol: 1e-8, atol: 1e-8, ..SolverSettings::default() });
        let trace = simulate_closed_loop(&sys, &reference_box(), &cfg).unwrap();
        prop_assert!(dist(trace.final_k(), &kstar.vec()) < 1e-3);
        prop_assert!(norm(trace.final_x()) <= 1e-6 * radius.max(1.0));
        prop_assert!(evaluate(&sys, &[rho], &Mat::unvec(trace.final_k(), 1, 2).unwrap()).is_ok());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    /// Under arbitrary switching inside the certified box the state decays
    /// exponentially. The horizon covers several periods of the slowest
    /// oscillation so the log-linear fit is not dominated by the transient.
    #[test]
    fn switching_state_decays(
        dwell in prop::collection::vec(0.05f64..0.5, 40),
        values in prop::collection::vec(0.5f64..2.0, 40),
        x0 in prop::array::uniform2(-10.0f64..10.0),
        u in prop::array::uniform2(0.0f64..1.0),
    ) {
        prop_assume!(norm(&x0) > 1.0);
        let cfg = SimConfig {
            x0: x0.to_vec(),
            k0: interior(u),
            alpha: 100.0,
            horizon: 10.0,
            dt: 0.05,
            trajectory: switching(&dwell, &values),
            solver: SolverSettings { rtol: 1e-7, atol: 1e-7, ..SolverSettings::default() },
        };
        let trace = simulate_closed_loop(&PolytopicLpvSystem::case_study(), &reference_box(), &cfg).unwrap();
        let rate = decay_rate(&trace, 1e-9).unwrap();
        prop_assert!(rate > 0.0, "decay rate {rate}");
        prop_assert!(trace.worst_min_g() >= -1e-6);
    }
}

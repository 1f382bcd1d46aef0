//! Explicit Runge–Kutta steppers over one smooth segment.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// Classical fourth-order method with a fixed step.
    Rk4Fixed,
    /// Dormand–Prince 5(4) with error control.
    Rk45Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub integrator: Integrator,
    pub rtol: f64,
    pub atol: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            integrator: Integrator::Rk45Adaptive,
            rtol: 1e-9,
            atol: 1e-9,
        }
    }
}

impl SolverSettings {
    pub fn rk4() -> Self {
        Self {
            integrator: Integrator::Rk4Fixed,
            ..Self::default()
        }
    }
}

const MAX_STEPS: usize = 10_000_000;

fn axpy(y: &[f64], h: f64, terms: &[(f64, &[f64])]) -> Vec<f64> {
    let mut out = y.to_vec();
    for (c, k) in terms {
        if *c != 0.0 {
            for (o, v) in out.iter_mut().zip(k.iter()) {
                *o += h * c * v;
            }
        }
    }
    out
}

pub fn rk4_step<F>(f: &mut F, t: f64, y: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>>,
{
    let k1 = f(t, y)?;
    let k2 = f(t + 0.5 * h, &axpy(y, h, &[(0.5, &k1)]))?;
    let k3 = f(t + 0.5 * h, &axpy(y, h, &[(0.5, &k2)]))?;
    let k4 = f(t + h, &axpy(y, h, &[(1.0, &k3)]))?;
    Ok(axpy(
        y,
        h,
        &[(1.0 / 6.0, &k1), (1.0 / 3.0, &k2), (1.0 / 3.0, &k3), (1.0 / 6.0, &k4)],
    ))
}

/// One Dormand–Prince step: fifth-order solution and the embedded error
/// estimate.
pub fn dopri_step<F>(f: &mut F, t: f64, y: &[f64], h: f64) -> Result<(Vec<f64>, Vec<f64>)>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>>,
{
    let k1 = f(t, y)?;
    let k2 = f(t + h / 5.0, &axpy(y, h, &[(1.0 / 5.0, &k1)]))?;
    let k3 = f(t + 3.0 * h / 10.0, &axpy(y, h, &[(3.0 / 40.0, &k1), (9.0 / 40.0, &k2)]))?;
    let k4 = f(
        t + 4.0 * h / 5.0,
        &axpy(y, h, &[(44.0 / 45.0, &k1), (-56.0 / 15.0, &k2), (32.0 / 9.0, &k3)]),
    )?;
    let k5 = f(
        t + 8.0 * h / 9.0,
        &axpy(
            y,
            h,
            &[
                (19372.0 / 6561.0, &k1),
                (-25360.0 / 2187.0, &k2),
                (64448.0 / 6561.0, &k3),
                (-212.0 / 729.0, &k4),
            ],
        ),
    )?;
    let k6 = f(
        t + h,
        &axpy(
            y,
            h,
            &[
                (9017.0 / 3168.0, &k1),
                (-355.0 / 33.0, &k2),
                (46732.0 / 5247.0, &k3),
                (49.0 / 176.0, &k4),
                (-5103.0 / 18656.0, &k5),
            ],
        ),
    )?;
    let y5 = axpy(
        y,
        h,
        &[
            (35.0 / 384.0, &k1),
            (500.0 / 1113.0, &k3),
            (125.0 / 192.0, &k4),
            (-2187.0 / 6784.0, &k5),
            (11.0 / 84.0, &k6),
        ],
    );
    let k7 = f(t + h, &y5)?;
    // fifth- minus fourth-order weights
    let e = [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];
    let ks = [&k1, &k2, &k3, &k4, &k5, &k6, &k7];
    let err: Vec<f64> = (0..y.len())
        .map(|i| h * ks.iter().zip(e).map(|(k, c)| c * k[i]).sum::<f64>())
        .collect();
    Ok((y5, err))
}

fn error_norm(err: &[f64], y0: &[f64], y1: &[f64], s: &SolverSettings) -> f64 {
    let sum: f64 = err
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let scale = s.atol + s.rtol * a.abs().max(b.abs());
            (e / scale).powi(2)
        })
        .sum();
    (sum / err.len().max(1) as f64).sqrt()
}

/// Stage failures that a smaller step can avoid.
fn recoverable(e: &Error) -> bool {
    matches!(e, Error::NotHurwitz | Error::OutsideManifold { .. })
}

/// Step sizes for one segment. RK4 takes steps of `max`; RK45 starts at
/// `initial` and never exceeds `max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSize {
    pub initial: f64,
    pub max: f64,
}

impl StepSize {
    pub fn fixed(h: f64) -> Self {
        Self { initial: h, max: h }
    }
}

/// Integrates `y' = f(t, y)` from `t0` to `t1`, calling `accept` after every
/// accepted step (it may adjust the state). Returns the initial step to
/// carry into the next segment; a final step shortened to land on `t1` does
/// not shrink it.
pub fn integrate_segment<F, A>(
    f: &mut F,
    t0: f64,
    t1: f64,
    y: &mut Vec<f64>,
    h: StepSize,
    settings: &SolverSettings,
    mut accept: A,
) -> Result<f64>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>>,
    A: FnMut(f64, &mut Vec<f64>) -> Result<()>,
{
    let span = t1 - t0;
    if span <= 0.0 {
        return Ok(h.initial);
    }
    match settings.integrator {
        Integrator::Rk4Fixed => {
            let steps = ((span / h.max) - 1e-9).ceil().max(1.0) as usize;
            let step = span / steps as f64;
            for i in 0..steps {
                let t = t0 + i as f64 * step;
                *y = rk4_step(f, t, y, step)?;
                let t_end = if i + 1 == steps { t1 } else { t0 + (i + 1) as f64 * step };
                accept(t_end, y)?;
            }
            Ok(h.max)
        }
        Integrator::Rk45Adaptive => {
            let h_max = h.max;
            let mut step = h.initial.min(h_max);
            let mut t = t0;
            for _ in 0..MAX_STEPS {
                if t >= t1 {
                    return Ok(step.min(h_max));
                }
                let last = t + step >= t1 - 1e-12 * t1.abs().max(1.0);
                let this = if last { t1 - t } else { step };
                let h_min = 1e-13 * t.abs().max(1.0);
                match dopri_step(f, t, y, this) {
                    Ok((y_new, err)) => {
                        let en = error_norm(&err, y, &y_new, settings);
                        if en <= 1.0 {
                            t = if last { t1 } else { t + this };
                            *y = y_new;
                            accept(t, y)?;
                            let grow = if en == 0.0 {
                                5.0
                            } else {
                                (0.9 * en.powf(-0.2)).clamp(0.2, 5.0)
                            };
                            let proposal = (this * grow).min(h_max);
                            step = if last { step.max(proposal) } else { proposal };
                        } else {
                            step = this * (0.9 * en.powf(-0.2)).max(0.2);
                        }
                    }
                    Err(e) if recoverable(&e) && this > h_min => step = this * 0.25,
                    Err(e) => return Err(e),
                }
                if step < h_min {
                    return Err(Error::NotConverged { iterations: 0 });
                }
            }
            Err(Error::NotConverged { iterations: MAX_STEPS })
        }
    }
}

//! Numerical ODE integration of smooth velocity fields: single trajectories
//! and data-parallel particle ensembles.
//!
//! Only the smooth approximating fields are integrated numerically; the
//! singular field's flows all have closed forms and live in `flow`.

use crate::error::{Error, Result};
use crate::field::{SmoothField, SmoothFieldParams};
use crate::flow::{validate_times, Trajectory};
use crate::geom::{Point3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Step-control scheme.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum Method {
    /// Classic fixed-step RK4; each sample interval is covered by uniform
    /// substeps of length at most `dt`.
    Rk4Fixed { dt: f64 },
    /// Runge–Kutta–Fehlberg 4(5) with per-step error control.
    Rkf45 {
        atol: f64,
        rtol: f64,
        dt_min: f64,
        dt_max: f64,
    },
}

impl Default for Method {
    fn default() -> Method {
        // The smooth fields have gradients of order eps^-2 near the neck;
        // adaptivity is required there.
        Method::Rkf45 {
            atol: 1e-9,
            rtol: 1e-9,
            dt_min: 1e-12,
            dt_max: 1e-2,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IntegratorOpts {
    #[serde(flatten)]
    pub method: Method,
    pub t_end: f64,
    /// Strictly increasing, starting at 0, within [0, t_end].
    pub sample_times: Vec<f64>,
}

impl IntegratorOpts {
    /// Default adaptive method sampled at n+1 uniform times in [0, t_end].
    pub fn uniform(t_end: f64, n: usize) -> IntegratorOpts {
        let sample_times = (0..=n).map(|k| k as f64 * t_end / n as f64).collect();
        IntegratorOpts {
            method: Method::default(),
            t_end,
            sample_times,
        }
    }

    pub fn with_method(mut self, method: Method) -> IntegratorOpts {
        self.method = method;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "t_end must be positive, got {}",
                self.t_end
            )));
        }
        match self.method {
            Method::Rk4Fixed { dt } => {
                if !(dt > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "dt must be positive, got {dt}"
                    )));
                }
            }
            Method::Rkf45 {
                atol,
                rtol,
                dt_min,
                dt_max,
            } => {
                if !(atol > 0.0 && rtol > 0.0) {
                    return Err(Error::InvalidParameter(
                        "atol and rtol must be positive".into(),
                    ));
                }
                if !(dt_min > 0.0 && dt_min <= dt_max) {
                    return Err(Error::InvalidParameter(format!(
                        "need 0 < dt_min <= dt_max, got [{dt_min}, {dt_max}]"
                    )));
                }
            }
        }
        validate_times(&self.sample_times)?;
        if *self.sample_times.last().unwrap() > self.t_end {
            return Err(Error::InvalidParameter("sample times exceed t_end".into()));
        }
        Ok(())
    }
}

fn rk4_step<F>(field: &F, p: Point3, h: f64) -> Point3
where
    F: Fn(Point3) -> Vector3,
{
    let k1 = field(p);
    let k2 = field(p + k1 * (h / 2.0));
    let k3 = field(p + k2 * (h / 2.0));
    let k4 = field(p + k3 * h);
    p + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

// Fehlberg 4(5) tableau.
const A2: [f64; 1] = [1.0 / 4.0];
const A3: [f64; 2] = [3.0 / 32.0, 9.0 / 32.0];
const A4: [f64; 3] = [1932.0 / 2197.0, -7200.0 / 2197.0, 7296.0 / 2197.0];
const A5: [f64; 4] = [439.0 / 216.0, -8.0, 3680.0 / 513.0, -845.0 / 4104.0];
const A6: [f64; 5] = [
    -8.0 / 27.0,
    2.0,
    -3544.0 / 2565.0,
    1859.0 / 4104.0,
    -11.0 / 40.0,
];
const B5: [f64; 6] = [
    16.0 / 135.0,
    0.0,
    6656.0 / 12825.0,
    28561.0 / 56430.0,
    -9.0 / 50.0,
    2.0 / 55.0,
];
const B4: [f64; 6] = [
    25.0 / 216.0,
    0.0,
    1408.0 / 2565.0,
    2197.0 / 4104.0,
    -1.0 / 5.0,
    0.0,
];

/// One RKF45 step: returns the 5th-order update and the 4th/5th difference.
fn rkf45_step<F>(field: &F, p: Point3, h: f64) -> (Point3, Vector3)
where
    F: Fn(Point3) -> Vector3,
{
    let k1 = field(p);
    let k2 = field(p + k1 * (A2[0] * h));
    let k3 = field(p + (k1 * A3[0] + k2 * A3[1]) * h);
    let k4 = field(p + (k1 * A4[0] + k2 * A4[1] + k3 * A4[2]) * h);
    let k5 = field(p + (k1 * A5[0] + k2 * A5[1] + k3 * A5[2] + k4 * A5[3]) * h);
    let k6 = field(p + (k1 * A6[0] + k2 * A6[1] + k3 * A6[2] + k4 * A6[3] + k5 * A6[4]) * h);
    let ks = [k1, k2, k3, k4, k5, k6];
    let mut high = Vector3::ZERO;
    let mut low = Vector3::ZERO;
    for (i, k) in ks.into_iter().enumerate() {
        high = high + k * B5[i];
        low = low + k * B4[i];
    }
    (p + high * h, (high - low) * h)
}

fn error_norm(err: Vector3, from: Point3, to: Point3, atol: f64, rtol: f64) -> f64 {
    let comp = |e: f64, a: f64, b: f64| e.abs() / (atol + rtol * a.abs().max(b.abs()));
    comp(err.x, from.x, to.x)
        .max(comp(err.y, from.y, to.y))
        .max(comp(err.z, from.z, to.z))
}

/// Samples of one march plus the time and place of a step underflow, when
/// one happened.
type MarchOutcome = (Vec<Point3>, Option<(f64, Point3)>);

/// Marches from t = 0, recording each sample time. On step underflow,
/// returns the samples recorded so far padded with the last good state,
/// plus the failure location.
fn march<F>(field: &F, p0: Point3, opts: &IntegratorOpts) -> MarchOutcome
where
    F: Fn(Point3) -> Vector3,
{
    let times = &opts.sample_times;
    let mut points = Vec::with_capacity(times.len());
    points.push(p0);
    let mut state = p0;
    let mut t = 0.0;
    let mut failure = None;

    match opts.method {
        Method::Rk4Fixed { dt } => {
            for &target in &times[1..] {
                let span = target - t;
                let n = (span / dt).ceil().max(1.0) as usize;
                let h = span / n as f64;
                for _ in 0..n {
                    state = rk4_step(field, state, h);
                }
                t = target;
                points.push(state);
            }
        }
        Method::Rkf45 {
            atol,
            rtol,
            dt_min,
            dt_max,
        } => {
            let mut dt = dt_max;
            'samples: for &target in &times[1..] {
                while t < target {
                    let h = dt.min(target - t);
                    let (next, err) = rkf45_step(field, state, h);
                    let en = error_norm(err, state, next, atol, rtol);
                    if en <= 1.0 {
                        t += h;
                        state = next;
                    } else if h <= dt_min {
                        failure = Some((t, state));
                        break 'samples;
                    }
                    let scale = if en > 0.0 { 0.9 * en.powf(-0.2) } else { 5.0 };
                    dt = (h * scale.clamp(0.2, 5.0)).clamp(dt_min, dt_max);
                }
                points.push(state);
            }
            // Pad failed trajectories with the last good state.
            while points.len() < times.len() {
                points.push(state);
            }
        }
    }
    (points, failure)
}

/// Integrates one trajectory of a smooth field, sampling at
/// `opts.sample_times`. Deterministic: fixed evaluation order.
pub fn integrate_trajectory<F>(field: F, p0: Point3, opts: &IntegratorOpts) -> Result<Trajectory>
where
    F: Fn(Point3) -> Vector3,
{
    opts.validate()?;
    let (points, failure) = march(&field, p0, opts);
    if let Some((t, position)) = failure {
        let dt_min = match opts.method {
            Method::Rkf45 { dt_min, .. } => dt_min,
            Method::Rk4Fixed { .. } => 0.0,
        };
        return Err(Error::StepUnderflow {
            t,
            position,
            dt_min,
        });
    }
    Ok(Trajectory {
        times: opts.sample_times.clone(),
        points,
        origin_hit_time: None,
    })
}

/// A stiffness failure for one particle; the trajectory is frozen at the
/// last accepted state from that time on.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ParticleFailure {
    pub id: u64,
    pub t: f64,
    pub position: Point3,
}

/// Positions of a particle batch advected by one smooth field.
#[derive(Clone, Debug)]
pub struct Ensemble {
    pub ids: Vec<u64>,
    pub initial: Vec<Point3>,
    pub sample_times: Vec<f64>,
    /// positions[particle][time index]
    pub positions: Vec<Vec<Point3>>,
    pub params: SmoothFieldParams,
    pub opts: IntegratorOpts,
    pub seed: u64,
    pub failures: Vec<ParticleFailure>,
}

/// Metadata written next to the ensemble CSV.
#[derive(Clone, Debug, Serialize)]
pub struct EnsembleSidecar<'a> {
    pub params: SmoothFieldParams,
    pub opts: &'a IntegratorOpts,
    pub seed: u64,
    pub particles: usize,
    pub failure_count: usize,
    pub failures: &'a [ParticleFailure],
}

impl Ensemble {
    /// Per-cell results are identical to running `integrate_trajectory` on
    /// each particle independently; output order follows input order.
    pub fn failure_rate(&self) -> f64 {
        self.failures.len() as f64 / self.ids.len().max(1) as f64
    }

    pub fn sidecar(&self) -> EnsembleSidecar<'_> {
        EnsembleSidecar {
            params: self.params,
            opts: &self.opts,
            seed: self.seed,
            particles: self.ids.len(),
            failure_count: self.failures.len(),
            failures: &self.failures,
        }
    }

    /// `id,t,x,y,z` rows ordered by (id, t), full round-trip precision.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "id,t,x,y,z")?;
        for (i, id) in self.ids.iter().enumerate() {
            for (k, &t) in self.sample_times.iter().enumerate() {
                let p = self.positions[i][k];
                writeln!(w, "{},{},{},{},{}", id, t, p.x, p.y, p.z)?;
            }
        }
        Ok(())
    }
}

/// Advects `points` under the smooth field described by `params`,
/// data-parallel across particles. Per-particle stiffness failures are
/// collected, not fatal; `seed` is recorded as provenance of the points.
pub fn integrate_ensemble(
    params: SmoothFieldParams,
    points: &[Point3],
    opts: &IntegratorOpts,
    seed: u64,
) -> Result<Ensemble> {
    opts.validate()?;
    let field = SmoothField::new(params)?;
    let per: Vec<MarchOutcome> = points
        .par_iter()
        .map(|&p0| march(&|q| field.eval(q), p0, opts))
        .collect();
    let mut positions = Vec::with_capacity(points.len());
    let mut failures = Vec::new();
    for (i, (pts, failure)) in per.into_iter().enumerate() {
        if let Some((t, position)) = failure {
            failures.push(ParticleFailure {
                id: i as u64,
                t,
                position,
            });
        }
        positions.push(pts);
    }
    Ok(Ensemble {
        ids: (0..points.len() as u64).collect(),
        initial: points.to_vec(),
        sample_times: opts.sample_times.clone(),
        positions,
        params: params.validated()?,
        opts: opts.clone(),
        seed,
        failures,
    })
}

//! Scripted desk-scale experiments: the two-subsequence selection study,
//! the gallery of post-origin continuations, the piecewise interpolant
//! demonstration, and figure-data generation.

use crate::circle::{is_measure_preserving, CircleMap};
use crate::error::{Error, Result};
use crate::field::{SmoothField, SmoothFieldParams};
use crate::flow::{write_trajectories_csv, FlowSpec};
use crate::geom::{Point3, Vector3};
use crate::integrate::{integrate_trajectory, Ensemble, IntegratorOpts};
use crate::measure::{compression_constant, l1_flow_distance, ParaboloidSlice};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::path::{Path, PathBuf};

fn linspace(t_end: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| k as f64 * t_end / (n - 1) as f64).collect()
}

/// Sup over sample times of the mean distance between ensemble particles
/// and the analytic flow started from the same points.
pub fn ensemble_l1_to_analytic(ens: &Ensemble, spec: &FlowSpec) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (k, &t) in ens.sample_times.iter().enumerate() {
        let mut acc = 0.0;
        for (i, p0) in ens.initial.iter().enumerate() {
            acc += (ens.positions[i][k] - spec.eval(t, *p0)?).norm();
        }
        worst = worst.max(acc / ens.initial.len() as f64);
    }
    Ok(worst)
}

/// Each step may rise by at most `slack`, and the last entry must not
/// exceed the first. Lengths below 2 are trivially monotone.
fn monotone_with_slack(values: &[f64], slack: f64) -> bool {
    if values.len() < 2 {
        return true;
    }
    values.windows(2).all(|w| w[1] <= slack * w[0])
        && values.last().unwrap() <= values.first().unwrap()
}

// ---------------------------------------------------------------------------
// Two-subsequence selection experiment
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TwoSubsequenceConfig {
    /// Decreasing neck sizes; even indices target `theta`, odd `phi`.
    pub eps_list: Vec<f64>,
    pub theta: f64,
    pub phi: f64,
    pub particles: usize,
    pub seed: u64,
    pub t_end: f64,
    pub time_samples: usize,
    pub region: ParaboloidSlice,
}

impl Default for TwoSubsequenceConfig {
    fn default() -> Self {
        TwoSubsequenceConfig {
            eps_list: vec![0.4, 0.2, 0.1, 0.05],
            theta: PI,
            phi: FRAC_PI_2,
            particles: 20_000,
            seed: 0,
            t_end: 1.0,
            time_samples: 33,
            region: ParaboloidSlice::reference(),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ConvergenceRow {
    pub eps: f64,
    pub theta_target: f64,
    /// L¹ distance to the analytic flow this member was built toward.
    pub distance_to_target: f64,
    /// L¹ distance to the other subsequence's limit flow.
    pub distance_to_other: f64,
    pub failures: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct TwoSubsequenceReport {
    pub config: TwoSubsequenceConfig,
    pub rows: Vec<ConvergenceRow>,
    /// l1 distance between the two analytic limit flows on the region.
    pub reference_distance: f64,
    pub even_monotone: bool,
    pub odd_monotone: bool,
    /// Every member keeps a floor distance to the other limit flow.
    pub other_bounded: bool,
    pub passed: bool,
}

/// Integrates one particle ensemble per eps, alternating the built-in
/// rotation target between `theta` (even indices) and `phi` (odd indices),
/// and records the distance of each member to both analytic limits.
pub fn run_two_subsequence(config: &TwoSubsequenceConfig) -> Result<TwoSubsequenceReport> {
    for &angle in &[config.theta, config.phi] {
        if !(angle > 0.0 && angle <= TAU) {
            return Err(Error::InvalidParameter(format!(
                "rotation targets must lie in (0, 2*pi], got {angle}"
            )));
        }
    }
    if config.eps_list.is_empty() {
        return Err(Error::InvalidParameter("eps_list must not be empty".into()));
    }
    for w in config.eps_list.windows(2) {
        if !(w[1] < w[0]) {
            return Err(Error::InvalidParameter(
                "eps_list must decrease strictly".into(),
            ));
        }
    }
    if config.time_samples < 2 || config.particles == 0 {
        return Err(Error::InvalidParameter(
            "need particles and at least 2 time samples".into(),
        ));
    }

    let times = linspace(config.t_end, config.time_samples);
    let points = config.region.sample(config.particles, config.seed)?;
    let flow_theta = FlowSpec::rotation(config.theta)?;
    let flow_phi = FlowSpec::rotation(config.phi)?;
    let reference_distance = l1_flow_distance(
        |t, p| flow_theta.eval(t, p),
        |t, p| flow_phi.eval(t, p),
        &config.region,
        &times,
        config.particles,
        config.seed,
    )?;

    let opts = IntegratorOpts {
        method: Default::default(),
        t_end: config.t_end,
        sample_times: times,
    };
    let mut rows = Vec::with_capacity(config.eps_list.len());
    for (n, &eps) in config.eps_list.iter().enumerate() {
        let even = n % 2 == 0;
        let target_angle = if even { config.theta } else { config.phi };
        let params = SmoothFieldParams::new(eps, target_angle);
        let ens = crate::integrate::integrate_ensemble(params, &points, &opts, config.seed)?;
        if ens.failure_rate() > 0.01 {
            return Err(Error::Experiment(format!(
                "integration failure rate {:.2}% exceeds 1% at eps = {eps}",
                100.0 * ens.failure_rate()
            )));
        }
        let (target_flow, other_flow) = if even {
            (&flow_theta, &flow_phi)
        } else {
            (&flow_phi, &flow_theta)
        };
        rows.push(ConvergenceRow {
            eps,
            theta_target: target_angle,
            distance_to_target: ensemble_l1_to_analytic(&ens, target_flow)?,
            distance_to_other: ensemble_l1_to_analytic(&ens, other_flow)?,
            failures: ens.failures.len(),
        });
    }

    let even_d: Vec<f64> = rows
        .iter()
        .step_by(2)
        .map(|r| r.distance_to_target)
        .collect();
    let odd_d: Vec<f64> = rows
        .iter()
        .skip(1)
        .step_by(2)
        .map(|r| r.distance_to_target)
        .collect();
    let even_monotone = monotone_with_slack(&even_d, 2.0);
    let odd_monotone = monotone_with_slack(&odd_d, 2.0);
    // Distance to the other subsequence's limit must stay bounded below:
    // the members approach one flow without drifting toward the other.
    let other_bounded = rows
        .iter()
        .all(|r| r.distance_to_other >= 0.25 * reference_distance);
    Ok(TwoSubsequenceReport {
        config: config.clone(),
        rows,
        reference_distance,
        even_monotone,
        odd_monotone,
        other_bounded,
        passed: even_monotone && odd_monotone && other_bounded,
    })
}

// ---------------------------------------------------------------------------
// Continuation gallery
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PsiGalleryConfig {
    pub samples: usize,
    pub intersection_pairs: usize,
    pub seed: u64,
}

impl Default for PsiGalleryConfig {
    fn default() -> Self {
        PsiGalleryConfig {
            samples: 1_000_000,
            intersection_pairs: 10_000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GalleryEntry {
    pub name: String,
    pub measure_preserving: bool,
    pub compression_l: f64,
    /// Finite-difference flow Jacobians sampled on θ ∈ (0, π).
    pub jacobian_first_half: f64,
    /// Finite-difference flow Jacobians sampled on θ ∈ (π, 2π).
    pub jacobian_second_half: f64,
    pub jacobian_sign_flips: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct PsiGalleryReport {
    pub config: PsiGalleryConfig,
    pub entries: Vec<GalleryEntry>,
    /// Image gap of the double cover's witness pair (θ, θ+π) at t = 1/2.
    pub doubling_witness_gap: f64,
    pub doubling_witness_theta: f64,
    /// Smallest image separation among distinct rotation-flow pairs.
    pub rotation_min_separation: f64,
    pub rotation_pairs_checked: usize,
    pub passed: bool,
}

/// Measure verdicts, compression constants, Jacobian sign structure, and
/// the injectivity/self-intersection contrast between the rotation flow and
/// the double-cover flow.
pub fn run_psi_gallery(config: &PsiGalleryConfig) -> Result<PsiGalleryReport> {
    let region = ParaboloidSlice::reference();
    let cases: Vec<(String, CircleMap, FlowSpec)> = vec![
        (
            "rotation(pi)".into(),
            CircleMap::Rotation(PI),
            FlowSpec::rotation(PI)?,
        ),
        (
            "psi1".into(),
            CircleMap::Psi1,
            FlowSpec::general(CircleMap::Psi1),
        ),
        (
            "psi2".into(),
            CircleMap::Psi2,
            FlowSpec::general(CircleMap::Psi2),
        ),
    ];
    let mut entries = Vec::new();
    for (i, (name, map, spec)) in cases.iter().enumerate() {
        let mp = is_measure_preserving(map, 32, config.samples, config.seed + i as u64, 0.05)?;
        let report = compression_constant(
            |t, p| spec.eval(t, p),
            &region,
            0.4,
            0.2,
            config.samples,
            config.seed + i as u64,
        )?;
        let jac =
            |theta: f64| spec.jacobian_det_fd(0.6, Point3::from_cylindrical(0.5, theta, 1.0), 1e-5);
        let first = jac(FRAC_PI_2)?;
        let second = jac(1.5 * PI)?;
        entries.push(GalleryEntry {
            name: name.clone(),
            measure_preserving: mp,
            compression_l: report.compression_l,
            jacobian_first_half: first,
            jacobian_second_half: second,
            jacobian_sign_flips: first.signum() != second.signum(),
        });
    }

    // ψ₂ glues θ and θ+π: the two trajectories meet off the origin.
    let psi2 = FlowSpec::general(CircleMap::Psi2);
    let witness_theta = FRAC_PI_2 / 2.0;
    let a = psi2.eval(
        0.5,
        Point3::new(witness_theta.cos(), witness_theta.sin(), 1.0),
    )?;
    let b = psi2.eval(
        0.5,
        Point3::new((witness_theta + PI).cos(), (witness_theta + PI).sin(), 1.0),
    )?;
    let doubling_witness_gap = a.dist(b);

    // Rotation flows are injective off the origin: distinct starts keep
    // distinct images.
    let rotation = FlowSpec::rotation(PI)?;
    let pts = region.sample(2 * config.intersection_pairs, config.seed + 17)?;
    let mut min_sep = f64::INFINITY;
    for pair in pts.chunks_exact(2) {
        let qa = rotation.eval(0.5, pair[0])?;
        let qb = rotation.eval(0.5, pair[1])?;
        min_sep = min_sep.min(qa.dist(qb));
    }

    let verdicts_ok = entries.iter().all(|e| e.measure_preserving)
        && !entries[0].jacobian_sign_flips
        && entries[1].jacobian_sign_flips
        && !entries[2].jacobian_sign_flips;
    let passed = verdicts_ok && doubling_witness_gap <= 1e-10 && min_sep > 1e-9;
    Ok(PsiGalleryReport {
        config: config.clone(),
        entries,
        doubling_witness_gap,
        doubling_witness_theta: witness_theta,
        rotation_min_separation: min_sep,
        rotation_pairs_checked: config.intersection_pairs,
        passed,
    })
}

// ---------------------------------------------------------------------------
// Piecewise interpolant demonstration
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InterpolantConfig {
    /// Decreasing bridge half-heights; starts need z² > eps².
    pub eps_list: Vec<f64>,
    /// Number of unit-circle starting angles.
    pub samples: usize,
    pub time_samples: usize,
    pub t_end: f64,
}

impl Default for InterpolantConfig {
    fn default() -> Self {
        InterpolantConfig {
            eps_list: vec![0.4, 0.2, 0.1],
            samples: 512,
            time_samples: 2048,
            t_end: 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct InterpolantRow {
    pub eps: f64,
    pub distance_to_flow: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct InterpolantWitness {
    pub eps: f64,
    pub t: f64,
    pub theta_a: f64,
    pub theta_b: f64,
    /// Distance between the two trajectories at the meeting point.
    pub position_gap: f64,
    /// Norm of the velocity difference there: nonzero means no vector field
    /// can generate both trajectories.
    pub velocity_gap: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct InterpolantReport {
    pub config: InterpolantConfig,
    pub rows: Vec<InterpolantRow>,
    pub distances_decreasing: bool,
    pub pre_bridge_max_gap: f64,
    pub post_bridge_max_gap: f64,
    pub witnesses: Vec<InterpolantWitness>,
    pub passed: bool,
}

/// The half-flip continuation flow, shared by the interpolant pieces.
fn half_flip_flow() -> FlowSpec {
    FlowSpec::general(CircleMap::Psi1)
}

/// The three-piece map that tracks the half-flip flow from a unit-circle
/// start: the analytic flow until t₁ = (z²−ε²)/4, a straight-line bridge
/// across the neck during [t₁, t₂ = (z²+ε²)/4], and the half-flip flow
/// afterwards.
///
/// The bridge lands on the flow's own position at t₂ (the mirrored
/// near-origin point with the angle flipped), so the map converges to the
/// half-flip flow as ε → 0: the bridge window has length ε²/2 and its
/// endpoints shrink to the origin together.
pub fn interpolant_eval(eps: f64, t: f64, theta: f64) -> Result<Point3> {
    let x = Point3::new(theta.cos(), theta.sin(), 1.0);
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "eps must lie in (0, 1), got {eps}"
        )));
    }
    let t1 = (1.0 - eps * eps) / 4.0;
    let t2 = (1.0 + eps * eps) / 4.0;
    let flow = half_flip_flow();
    if t <= t1 || t >= t2 {
        flow.eval(t, x)
    } else {
        let a = flow.eval(t1, x)?;
        let b = flow.eval(t2, x)?;
        let s = (t - t1) / (t2 - t1);
        Ok(Point3::new(
            (1.0 - s) * a.x + s * b.x,
            (1.0 - s) * a.y + s * b.y,
            (1.0 - s) * a.z + s * b.z,
        ))
    }
}

/// Constant velocity of the bridge segment for a given start.
fn bridge_velocity(eps: f64, theta: f64) -> Result<Vector3> {
    let x = Point3::new(theta.cos(), theta.sin(), 1.0);
    let t1 = (1.0 - eps * eps) / 4.0;
    let t2 = (1.0 + eps * eps) / 4.0;
    let flow = half_flip_flow();
    let a = flow.eval(t1, x)?;
    let b = flow.eval(t2, x)?;
    Ok((b - a) * (1.0 / (t2 - t1)))
}

/// L¹ distances of the interpolant to the half-flip flow per eps, exactness
/// of the outer pieces, and a non-flow witness: two starts whose bridges
/// cross at one space-time point with different velocities.
pub fn run_interpolant_demo(config: &InterpolantConfig) -> Result<InterpolantReport> {
    if config.eps_list.is_empty() || config.samples == 0 || config.time_samples < 2 {
        return Err(Error::InvalidParameter(
            "empty interpolant configuration".into(),
        ));
    }
    for w in config.eps_list.windows(2) {
        if !(w[1] < w[0]) {
            return Err(Error::InvalidParameter(
                "eps_list must decrease strictly".into(),
            ));
        }
    }
    let flow = half_flip_flow();
    let thetas: Vec<f64> = (0..config.samples)
        .map(|k| (k as f64 + 0.5) / config.samples as f64 * TAU)
        .collect();
    let times = linspace(config.t_end, config.time_samples);

    let mut rows = Vec::new();
    let mut pre_gap: f64 = 0.0;
    let mut post_gap: f64 = 0.0;
    let mut witnesses = Vec::new();
    for &eps in &config.eps_list {
        let t1 = (1.0 - eps * eps) / 4.0;
        let t2 = (1.0 + eps * eps) / 4.0;
        let mut worst: f64 = 0.0;
        for &t in &times {
            let mut acc = 0.0;
            for &th in &thetas {
                let x = Point3::new(th.cos(), th.sin(), 1.0);
                let gap = (interpolant_eval(eps, t, th)? - flow.eval(t, x)?).norm();
                acc += gap;
                if t < t1 {
                    pre_gap = pre_gap.max(gap);
                } else if t > t2 {
                    post_gap = post_gap.max(gap);
                }
            }
            worst = worst.max(acc / thetas.len() as f64);
        }
        rows.push(InterpolantRow {
            eps,
            distance_to_flow: worst,
        });

        // Witness: θ and its flip image swap endpoints, so their bridges
        // cross at the common midpoint time with opposite lateral velocity.
        let theta_a = 1.25 * PI;
        let theta_b = 3.0 * PI - theta_a; // ψ₁(θ_a)
        let t_mid = 0.5 * (t1 + t2);
        let pa = interpolant_eval(eps, t_mid, theta_a)?;
        let pb = interpolant_eval(eps, t_mid, theta_b)?;
        let va = bridge_velocity(eps, theta_a)?;
        let vb = bridge_velocity(eps, theta_b)?;
        witnesses.push(InterpolantWitness {
            eps,
            t: t_mid,
            theta_a,
            theta_b,
            position_gap: pa.dist(pb),
            velocity_gap: (va - vb).norm(),
        });
    }

    let distances: Vec<f64> = rows.iter().map(|r| r.distance_to_flow).collect();
    let distances_decreasing = distances.windows(2).all(|w| w[1] < w[0]);
    let witnesses_ok = witnesses
        .iter()
        .all(|w| w.position_gap < 1e-12 && w.velocity_gap > 1e-6);
    let passed = distances_decreasing && pre_gap == 0.0 && post_gap == 0.0 && witnesses_ok;
    Ok(InterpolantReport {
        config: config.clone(),
        rows,
        distances_decreasing,
        pre_bridge_max_gap: pre_gap,
        post_bridge_max_gap: post_gap,
        witnesses,
        passed,
    })
}

// ---------------------------------------------------------------------------
// Figure data
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Figure {
    /// One rotation-flow trajectory through the origin.
    Fig1,
    /// One smooth-field trajectory spiraling through the neck.
    Fig2,
}

#[derive(Clone, Debug, Serialize)]
pub struct FigureInfo {
    pub path: PathBuf,
    pub rows: usize,
    /// Net turns accumulated inside the neck (fig2 only); reported, not
    /// asserted.
    pub winding_turns: Option<f64>,
}

/// Writes figure trajectory data as `id,t,x,y,z` CSV.
pub fn emit_figure_data(which: Figure, out_path: &Path) -> Result<FigureInfo> {
    match which {
        Figure::Fig1 => {
            let spec = FlowSpec::rotation(PI)?;
            let times = linspace(1.0, 401);
            let tr = spec.trajectory(Point3::new(0.5, 0.0, 1.0), &times)?;
            let mut f = std::fs::File::create(out_path)?;
            write_trajectories_csv(&mut f, &[tr])?;
            Ok(FigureInfo {
                path: out_path.to_path_buf(),
                rows: 401,
                winding_turns: None,
            })
        }
        Figure::Fig2 => {
            let eps = 0.2;
            let field = SmoothField::new(SmoothFieldParams::new(eps, PI))?;
            let opts = IntegratorOpts {
                method: Default::default(),
                t_end: 1.0,
                sample_times: linspace(1.0, 1001),
            };
            let tr = integrate_trajectory(|q| field.eval(q), Point3::new(0.5, 0.0, 1.0), &opts)?;
            // Net rotation while inside the neck slab.
            let mut winding = 0.0;
            for w in tr.points.windows(2) {
                if w[0].z.abs() < eps && w[1].z.abs() < eps {
                    let d = (w[1].theta() - w[0].theta() + PI).rem_euclid(TAU) - PI;
                    winding += d;
                }
            }
            let mut f = std::fs::File::create(out_path)?;
            write_trajectories_csv(&mut f, &[tr])?;
            Ok(FigureInfo {
                path: out_path.to_path_buf(),
                rows: 1001,
                winding_turns: Some(winding / TAU),
            })
        }
    }
}

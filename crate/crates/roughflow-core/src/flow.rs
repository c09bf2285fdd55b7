//! Closed-form evaluation of the field's flow families, their non-unique
//! post-origin continuations, ODE-residual and Jacobian self-checks, the
//! inverse map for invertible continuations, and the transport-equation
//! representation formula.
//!
//! Every trajectory starting in P⁺ reaches the origin at the singular time
//! t* = z²/4 and can be continued into P⁻ with an arbitrary reassignment of
//! its azimuthal angle. A continuation is selected by a circle map ψ applied
//! to the incoming angle; rigid rotations are the special case ψ = θ + Θ.

use crate::circle::CircleMap;
use crate::error::{Error, Result};
use crate::field::{classify, eval_b, Region};
use crate::geom::{add_angle, Point3, Vector3};
use std::io::Write;

/// Width of the time guard band around the singular time, in units of the
/// finite-difference step: residual and Jacobian stencils refuse to straddle
/// the kink at t*.
pub const KINK_GUARD_FACTOR: f64 = 10.0;

/// Post-origin continuation rule.
#[derive(Clone, Debug)]
pub enum Continuation {
    /// Rotate every trajectory's angle by a fixed Θ ∈ (0, 2π].
    Rotation(f64),
    /// Send the incoming angle θ through an arbitrary circle map.
    GeneralMap(CircleMap),
}

/// A selector for one analytic flow of the singular field.
#[derive(Clone, Debug)]
pub struct FlowSpec {
    continuation: Continuation,
    label: String,
}

impl FlowSpec {
    /// The flow that rotates by Θ after the origin. Θ must lie in (0, 2π];
    /// Θ = 2π continues every trajectory straight through.
    pub fn rotation(theta: f64) -> Result<FlowSpec> {
        if !(theta > 0.0 && theta <= std::f64::consts::TAU) {
            return Err(Error::InvalidParameter(format!(
                "rotation angle must lie in (0, 2*pi], got {theta}"
            )));
        }
        Ok(FlowSpec {
            continuation: Continuation::Rotation(theta),
            label: format!("rotation({theta})"),
        })
    }

    /// The flow X_ψ whose post-origin angle is ψ(θ).
    pub fn general(map: CircleMap) -> FlowSpec {
        let label = format!("psi({})", map.label());
        FlowSpec {
            continuation: Continuation::GeneralMap(map),
            label,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> FlowSpec {
        self.label = label.into();
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn continuation(&self) -> &Continuation {
        &self.continuation
    }

    fn continued_angle(&self, theta: f64) -> f64 {
        match &self.continuation {
            Continuation::Rotation(th) => add_angle(theta, *th),
            Continuation::GeneralMap(m) => m.eval(theta),
        }
    }

    /// Evaluates the flow map X(t, p) for t ≥ 0.
    ///
    /// Exterior points stand still; P⁻ points sink forever; P⁺ points funnel
    /// to the origin at t* = z²/4 and continue into P⁻ with their angle
    /// remapped. The two P⁺ branches meet continuously at the origin.
    pub fn eval(&self, t: f64, p: Point3) -> Result<Point3> {
        if !(t >= 0.0) {
            return Err(Error::BadTime(t));
        }
        if p.is_origin() {
            return Err(Error::OriginSingularity);
        }
        if t == 0.0 {
            return Ok(p);
        }
        match classify(p) {
            Region::Origin => Err(Error::OriginSingularity),
            Region::Exterior => Ok(p),
            Region::PMinusInterior | Region::PMinusBoundary => {
                let u = p.z * p.z + 4.0 * t;
                let f = fourth_root(u) / (-p.z).sqrt();
                Ok(Point3::new(p.x * f, p.y * f, -u.sqrt()))
            }
            Region::PPlusInterior | Region::PPlusBoundary => {
                let tstar = p.z * p.z / 4.0;
                if t <= tstar {
                    let u = p.z * p.z - 4.0 * t;
                    let f = fourth_root(u) / p.z.sqrt();
                    Ok(Point3::new(p.x * f, p.y * f, u.sqrt()))
                } else {
                    let u = 4.0 * t - p.z * p.z;
                    let rho = p.radius() / p.z.sqrt() * fourth_root(u);
                    let phi = self.continued_angle(p.theta());
                    Ok(Point3::new(rho * phi.cos(), rho * phi.sin(), -u.sqrt()))
                }
            }
        }
    }

    /// |d/dt X(t, p) − b(X(t, p))| by central differences in t.
    ///
    /// Refuses stencils that straddle t = 0 or come within the guard band of
    /// the singular time, where the flow is only piecewise smooth.
    pub fn residual(&self, t: f64, p: Point3, h: f64) -> Result<f64> {
        if !(h > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "h must be positive, got {h}"
            )));
        }
        if p.is_origin() {
            return Err(Error::OriginSingularity);
        }
        if t - h < 0.0 {
            return Err(Error::BadTime(t));
        }
        if classify(p).in_p_plus() {
            let tstar = p.z * p.z / 4.0;
            if (t - tstar).abs() <= KINK_GUARD_FACTOR * h {
                return Err(Error::StencilCrossing { point: p, t });
            }
        }
        let fwd = self.eval(t + h, p)?;
        let bwd = self.eval(t - h, p)?;
        let vel = (fwd - bwd) * (1.0 / (2.0 * h));
        let b = eval_b(self.eval(t, p)?)?;
        Ok((vel - b).norm())
    }

    /// Preimage of q under X(t, ·), defined for invertible continuations.
    ///
    /// Points below the origin's light cone (q₃² > 4t) flow back up within
    /// P⁻; shallower P⁻ points came through the origin from P⁺ and have
    /// their angle pulled back through the continuation's inverse.
    pub fn inverse(&self, t: f64, q: Point3) -> Result<Point3> {
        if !(t >= 0.0) {
            return Err(Error::BadTime(t));
        }
        if q.is_origin() {
            return Err(Error::OriginSingularity);
        }
        let inverse_map = match &self.continuation {
            Continuation::Rotation(th) => CircleMap::Rotation(*th)
                .inverse()
                .expect("rotations always invert"),
            Continuation::GeneralMap(m) => {
                m.inverse().ok_or_else(|| Error::NotInvertible(m.label()))?
            }
        };
        if t == 0.0 {
            return Ok(q);
        }
        match classify(q) {
            Region::Origin => Err(Error::OriginSingularity),
            Region::Exterior => Ok(q),
            Region::PPlusInterior | Region::PPlusBoundary => {
                let z0 = (q.z * q.z + 4.0 * t).sqrt();
                let f = z0.sqrt() / q.z.sqrt();
                Ok(Point3::new(q.x * f, q.y * f, z0))
            }
            Region::PMinusInterior | Region::PMinusBoundary => {
                let d = q.z * q.z - 4.0 * t;
                if d > 0.0 {
                    let z0 = -d.sqrt();
                    let f = d.sqrt().sqrt() / (-q.z).sqrt();
                    Ok(Point3::new(q.x * f, q.y * f, z0))
                } else if d < 0.0 {
                    let z0 = (-d).sqrt();
                    let rho0 = q.radius() * z0.sqrt() / (-q.z).sqrt();
                    let theta0 = inverse_map.eval(q.theta());
                    Ok(Point3::from_cylindrical(rho0, theta0, z0))
                } else {
                    // The preimage degenerates to the origin itself.
                    Err(Error::OriginSingularity)
                }
            }
        }
    }

    /// Spatial Jacobian determinant of X(t, ·) at p by central differences.
    ///
    /// The whole 7-point stencil must sit in one smooth branch: same region
    /// of P, same side of every stencil point's singular time (outside the
    /// guard band), and no continuation breakpoint inside the stencil's
    /// angular spread.
    pub fn jacobian_det_fd(&self, t: f64, p: Point3, h: f64) -> Result<f64> {
        if !(h > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "h must be positive, got {h}"
            )));
        }
        if !(t >= 0.0) {
            return Err(Error::BadTime(t));
        }
        let offsets = [
            Vector3::new(h, 0.0, 0.0),
            Vector3::new(0.0, h, 0.0),
            Vector3::new(0.0, 0.0, h),
        ];
        let mut stencil = vec![p];
        for o in offsets {
            stencil.push(p + o);
            stencil.push(p + -o);
        }
        let group = region_group(p)?;
        for &q in &stencil[1..] {
            if region_group(q)? != group {
                return Err(Error::StencilCrossing { point: p, t });
            }
        }
        if group == BranchGroup::PPlus {
            for &q in &stencil {
                let tstar = q.z * q.z / 4.0;
                if (t - tstar).abs() <= KINK_GUARD_FACTOR * h {
                    return Err(Error::StencilCrossing { point: p, t });
                }
            }
            let post_singular = t > p.z * p.z / 4.0;
            if post_singular {
                if let Continuation::GeneralMap(m) = &self.continuation {
                    let th0 = p.theta();
                    for &q in &stencil[1..] {
                        for &beta in m.breakpoints() {
                            if short_arc_contains(th0, q.theta(), beta) {
                                return Err(Error::StencilCrossing { point: p, t });
                            }
                        }
                    }
                }
            }
        }
        let mut cols = [Vector3::ZERO; 3];
        for (i, o) in offsets.into_iter().enumerate() {
            let fwd = self.eval(t, p + o)?;
            let bwd = self.eval(t, p + -o)?;
            cols[i] = (fwd - bwd) * (1.0 / (2.0 * h));
        }
        Ok(det3(cols))
    }

    /// Samples the flow at the given times (strictly increasing, starting
    /// at 0). Records the singular time for P⁺ starts.
    pub fn trajectory(&self, p: Point3, times: &[f64]) -> Result<Trajectory> {
        validate_times(times)?;
        let points = times
            .iter()
            .map(|&t| self.eval(t, p))
            .collect::<Result<Vec<_>>>()?;
        Ok(Trajectory {
            times: times.to_vec(),
            points,
            origin_hit_time: singular_time(p).ok(),
        })
    }
}

/// Time z²/4 at which a trajectory from the upper paraboloid reaches the
/// origin. Defined for P⁺ points only (boundary included).
pub fn singular_time(p: Point3) -> Result<f64> {
    if classify(p).in_p_plus() {
        Ok(p.z * p.z / 4.0)
    } else {
        Err(Error::WrongRegion {
            point: p,
            expected: "the upper paraboloid",
        })
    }
}

/// Solution of the transport equation with initial data `u0`, evaluated by
/// the representation formula u(t, q) = u0(X(t, ·)⁻¹(q)).
pub fn transport_eval<F>(u0: F, spec: &FlowSpec, t: f64, q: Point3) -> Result<f64>
where
    F: Fn(Point3) -> f64,
{
    Ok(u0(spec.inverse(t, q)?))
}

/// One sampled trajectory.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub points: Vec<Point3>,
    /// Singular time z²/4 when the start lies in P⁺.
    pub origin_hit_time: Option<f64>,
}

pub(crate) fn validate_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::InvalidParameter(
            "need at least one sample time".into(),
        ));
    }
    if times[0] != 0.0 {
        return Err(Error::InvalidParameter(format!(
            "sample times must start at 0, got {}",
            times[0]
        )));
    }
    for w in times.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::InvalidParameter(format!(
                "sample times must increase strictly ({} then {})",
                w[0], w[1]
            )));
        }
    }
    Ok(())
}

/// Writes trajectories as `id,t,x,y,z` CSV, ordered by (id, t), with full
/// round-trip precision.
pub fn write_trajectories_csv<W: Write>(w: &mut W, trajectories: &[Trajectory]) -> Result<()> {
    writeln!(w, "id,t,x,y,z")?;
    for (id, tr) in trajectories.iter().enumerate() {
        for (&t, p) in tr.times.iter().zip(&tr.points) {
            writeln!(w, "{},{},{},{},{}", id, t, p.x, p.y, p.z)?;
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum BranchGroup {
    PPlus,
    PMinus,
    Exterior,
}

fn region_group(p: Point3) -> Result<BranchGroup> {
    match classify(p) {
        Region::Origin => Err(Error::OriginSingularity),
        Region::Exterior => Ok(BranchGroup::Exterior),
        r if r.in_p_plus() => Ok(BranchGroup::PPlus),
        _ => Ok(BranchGroup::PMinus),
    }
}

fn fourth_root(u: f64) -> f64 {
    u.sqrt().sqrt()
}

/// Signed angular gap from a to b, in (−π, π].
fn signed_gap(a: f64, b: f64) -> f64 {
    let m = (b - a).rem_euclid(std::f64::consts::TAU);
    if m > std::f64::consts::PI {
        m - std::f64::consts::TAU
    } else {
        m
    }
}

/// Whether `beta` lies on the shorter arc from a to b.
fn short_arc_contains(a: f64, b: f64, beta: f64) -> bool {
    let d = signed_gap(a, b);
    let x = signed_gap(a, beta);
    if d >= 0.0 {
        (0.0..=d).contains(&x)
    } else {
        (d..=0.0).contains(&x)
    }
}

fn det3(cols: [Vector3; 3]) -> f64 {
    let [a, b, c] = cols;
    a.x * (b.y * c.z - b.z * c.y) - b.x * (a.y * c.z - a.z * c.y) + c.x * (a.y * b.z - a.z * b.y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::classify;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI, TAU};

    fn rot(theta: f64) -> FlowSpec {
        FlowSpec::rotation(theta).unwrap()
    }

    #[test]
    fn singular_time_examples() {
        assert_eq!(singular_time(Point3::new(0.5, 0.0, 1.0)).unwrap(), 0.25);
        assert_eq!(singular_time(Point3::new(0.0, 0.0, 2.0)).unwrap(), 1.0);
        assert!((singular_time(Point3::new(0.1, 0.1, 0.2)).unwrap() - 0.01).abs() < 1e-12);
        assert!(matches!(
            singular_time(Point3::new(0.0, 0.0, -1.0)),
            Err(Error::WrongRegion { .. })
        ));
        assert!(singular_time(Point3::new(5.0, 5.0, 0.1)).is_err());
    }

    #[test]
    fn flow_eval_worked_examples() {
        // P⁻ axis point keeps sinking: X₃ = −√(z² + 4t).
        let q = rot(PI).eval(2.0, Point3::new(0.0, 0.0, -1.0)).unwrap();
        assert!(q.dist(Point3::new(0.0, 0.0, -3.0)) < 1e-12);

        // Boundary start of P⁺, past the singular time, rotated by π.
        let q = rot(PI).eval(0.5, Point3::new(1.0, 0.0, 1.0)).unwrap();
        assert!(q.dist(Point3::new(-1.0, 0.0, -1.0)) < 1e-12);

        // The identity continuation passes the unit circle straight through.
        let id = FlowSpec::general(CircleMap::identity());
        for k in 0..8 {
            let th = k as f64 / 8.0 * TAU;
            let q = id.eval(0.5, Point3::new(th.cos(), th.sin(), 1.0)).unwrap();
            assert!(
                q.dist(Point3::new(th.cos(), th.sin(), -1.0)) < 1e-12,
                "theta {th}"
            );
        }
    }

    #[test]
    fn time_zero_is_the_identity() {
        let p = Point3::new(0.3, -0.2, 0.7);
        for spec in [rot(PI), rot(TAU), FlowSpec::general(CircleMap::Psi2)] {
            assert_eq!(spec.eval(0.0, p).unwrap(), p);
        }
    }

    #[test]
    fn exterior_points_never_move() {
        let p = Point3::new(5.0, 5.0, 5.0);
        for &t in &[0.1, 1.0, 77.0] {
            assert_eq!(rot(PI).eval(t, p).unwrap(), p);
        }
    }

    #[test]
    fn origin_input_is_rejected() {
        assert!(matches!(
            rot(PI).eval(1.0, Point3::ORIGIN),
            Err(Error::OriginSingularity)
        ));
        assert!(matches!(
            rot(PI).inverse(1.0, Point3::ORIGIN),
            Err(Error::OriginSingularity)
        ));
        assert!(matches!(
            rot(PI).eval(-0.5, Point3::new(1.0, 0.0, 1.0)),
            Err(Error::BadTime(_))
        ));
    }

    #[test]
    fn flow_hits_the_origin_exactly_at_tstar() {
        let p = Point3::new(0.5, 0.1, 1.0);
        let tstar = p.z * p.z / 4.0;
        let q = rot(PI).eval(tstar, p).unwrap();
        assert_eq!(q, Point3::ORIGIN);
        // Fourth-root contact: approach rate |X| ~ (4δ)^(1/4) near t*.
        for &delta in &[1e-8, 1e-10] {
            let before = rot(PI).eval(tstar - delta, p).unwrap();
            let after = rot(PI).eval(tstar + delta, p).unwrap();
            let bound = 2.0 * (4.0 * delta).powf(0.25);
            assert!(before.dist(Point3::ORIGIN) < bound);
            assert!(after.dist(Point3::ORIGIN) < bound);
        }
    }

    #[test]
    fn rotation_matches_explicit_matrix_form() {
        // cos/sin of the summed angle against the rotation-matrix entries.
        let theta = 1.234;
        let spec = rot(theta);
        for k in 0..32 {
            let th0 = k as f64 / 32.0 * TAU;
            let p = Point3::from_cylindrical(0.6, th0, 1.1);
            let t = 0.9;
            let q = spec.eval(t, p).unwrap();
            let u = 4.0 * t - p.z * p.z;
            let f = u.sqrt().sqrt() / p.z.sqrt();
            let expect = Point3::new(
                (p.x * theta.cos() - p.y * theta.sin()) * f,
                (p.x * theta.sin() + p.y * theta.cos()) * f,
                -u.sqrt(),
            );
            assert!(q.dist(expect) < 1e-12, "theta0 {th0}");
        }
    }

    #[test]
    fn rotation_agrees_with_general_rotation_map() {
        let a = rot(FRAC_PI_2);
        let b = FlowSpec::general(CircleMap::Rotation(FRAC_PI_2));
        for k in 0..64 {
            let th0 = k as f64 / 64.0 * TAU;
            let p = Point3::from_cylindrical(0.4, th0, 0.9);
            let t = 0.7;
            assert!(a.eval(t, p).unwrap().dist(b.eval(t, p).unwrap()) < 1e-12);
        }
    }

    #[test]
    fn residual_examples() {
        let r = rot(PI)
            .residual(2.0, Point3::new(0.0, 0.0, -1.0), 1e-5)
            .unwrap();
        assert!(r < 1e-8, "residual {r:e}");
        let r = rot(PI)
            .residual(3.0, Point3::new(5.0, 5.0, 5.0), 1e-3)
            .unwrap();
        assert_eq!(r, 0.0);
        let psi2 = FlowSpec::general(CircleMap::Psi2);
        let r = psi2
            .residual(0.6, Point3::new(1.0, 0.0, 1.0), 1e-5)
            .unwrap();
        assert!(r < 1e-8, "residual {r:e}");
    }

    #[test]
    fn residual_rejects_the_guard_band() {
        let p = Point3::new(0.5, 0.0, 1.0); // t* = 0.25
        assert!(matches!(
            rot(PI).residual(0.25 + 5e-5, p, 1e-5),
            Err(Error::StencilCrossing { .. })
        ));
        assert!(matches!(
            rot(PI).residual(1e-6, p, 1e-5),
            Err(Error::BadTime(_))
        ));
    }

    #[test]
    fn residual_shrinks_at_second_order_on_every_branch() {
        let cases = [
            (Point3::new(0.3, 0.2, 1.0), 0.8),   // past the singular time
            (Point3::new(0.4, 0.1, 1.4), 0.3),   // before the singular time
            (Point3::new(0.2, -0.3, -0.8), 0.6), // lower paraboloid
        ];
        for spec in [rot(PI), FlowSpec::general(CircleMap::Psi2)] {
            for &(p, t) in &cases {
                let r1 = spec.residual(t, p, 1e-3).unwrap();
                let r2 = spec.residual(t, p, 5e-4).unwrap();
                let ratio = r1 / r2;
                assert!((3.0..5.0).contains(&ratio), "{p:?} at {t}: ratio {ratio}");
            }
        }
    }

    #[test]
    fn inverse_worked_examples() {
        let q = rot(PI).inverse(0.5, Point3::new(-1.0, 0.0, -1.0)).unwrap();
        assert!(q.dist(Point3::new(1.0, 0.0, 1.0)) < 1e-12);

        let q0 = Point3::new(0.2, -0.1, 0.9);
        assert_eq!(rot(1.0).inverse(0.0, q0).unwrap(), q0);

        let q = rot(FRAC_PI_2)
            .inverse(2.0, Point3::new(0.0, 0.0, -3.0))
            .unwrap();
        assert!(q.dist(Point3::new(0.0, 0.0, -1.0)) < 1e-12);
    }

    #[test]
    fn inverse_rejects_non_invertible_continuations() {
        let psi2 = FlowSpec::general(CircleMap::Psi2);
        assert!(matches!(
            psi2.inverse(0.5, Point3::new(0.1, 0.0, -0.5)),
            Err(Error::NotInvertible(_))
        ));
        // The half-flip is its own inverse, so its flow inverts fine.
        let psi1 = FlowSpec::general(CircleMap::Psi1);
        let p = Point3::new(0.4, 0.3, 1.0);
        let q = psi1.eval(0.6, p).unwrap();
        assert!(psi1.inverse(0.6, q).unwrap().dist(p) < 1e-10);
    }

    #[test]
    fn inverse_rejects_the_degenerate_cone_surface() {
        // Points with q₃² = 4t have the origin as preimage.
        let t = 0.25f64;
        let q = Point3::new(0.0, 0.0, -1.0);
        assert!(matches!(
            rot(PI).inverse(t, q),
            Err(Error::OriginSingularity)
        ));
    }

    #[test]
    fn transport_examples() {
        let spec = rot(PI);
        // Constants are transported to themselves.
        for &(t, q) in &[
            (0.3, Point3::new(0.1, 0.0, -0.7)),
            (1.0, Point3::new(2.0, 2.0, 0.5)),
        ] {
            assert_eq!(transport_eval(|_| 1.0, &spec, t, q).unwrap(), 1.0);
        }
        // z-coordinate data: the preimage of (−1,0,−1) at t = 1/2 is (1,0,1).
        let v = transport_eval(|p| p.z, &spec, 0.5, Point3::new(-1.0, 0.0, -1.0)).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        // At t = 0 transport is the identity on the data.
        let v = transport_eval(|p| p.x, &spec, 0.0, Point3::new(0.4, 0.2, 0.9)).unwrap();
        assert_eq!(v, 0.4);
    }

    #[test]
    fn transport_propagates_inverse_errors() {
        let psi2 = FlowSpec::general(CircleMap::Psi2);
        let r = transport_eval(|p| p.x, &psi2, 0.5, Point3::new(0.1, 0.0, -0.5));
        assert!(matches!(r, Err(Error::NotInvertible(_))));
    }

    #[test]
    fn jacobian_is_one_at_time_zero() {
        for spec in [rot(PI), FlowSpec::general(CircleMap::Psi1)] {
            let d = spec
                .jacobian_det_fd(0.0, Point3::new(0.1, 0.2, -0.8), 1e-5)
                .unwrap();
            assert!((d - 1.0).abs() < 1e-6, "det {d}");
        }
    }

    #[test]
    fn jacobian_of_rotation_flow_is_one() {
        // Exact value from the closed form: the radial/vertical part has
        // determinant 1 and the rotation contributes another factor 1.
        let d = rot(PI)
            .jacobian_det_fd(2.0, Point3::new(0.1, 0.0, -1.0), 1e-5)
            .unwrap();
        assert!((d - 1.0).abs() < 1e-4, "det {d}");
        let d = rot(PI)
            .jacobian_det_fd(0.6, Point3::new(0.3, 0.1, 1.0), 1e-5)
            .unwrap();
        assert!((d - 1.0).abs() < 1e-4, "det {d}");
    }

    #[test]
    fn jacobian_sign_tracks_the_half_flip() {
        // ψ₁ has slope +1 on (0, π) and −1 on (π, 2π).
        let psi1 = FlowSpec::general(CircleMap::Psi1);
        let up = psi1
            .jacobian_det_fd(0.6, Point3::from_cylindrical(0.5, FRAC_PI_2, 1.0), 1e-5)
            .unwrap();
        let down = psi1
            .jacobian_det_fd(0.6, Point3::from_cylindrical(0.5, 1.5 * PI, 1.0), 1e-5)
            .unwrap();
        assert!(up > 0.5, "up {up}");
        assert!(down < -0.5, "down {down}");
    }

    #[test]
    fn jacobian_rejects_branch_crossing_stencils() {
        // Stencil pokes out of P⁺ near the boundary.
        let r = rot(PI).jacobian_det_fd(0.1, Point3::new(0.999999, 0.0, 1.0), 1e-4);
        assert!(matches!(r, Err(Error::StencilCrossing { .. })));
        // Stencil straddles the ψ₁ breakpoint at θ = π.
        let psi1 = FlowSpec::general(CircleMap::Psi1);
        let p = Point3::from_cylindrical(0.5, PI, 1.0);
        let r = psi1.jacobian_det_fd(0.6, p, 1e-5);
        assert!(matches!(r, Err(Error::StencilCrossing { .. })));
        // Guard band around the singular time.
        let r = rot(PI).jacobian_det_fd(0.25, Point3::new(0.2, 0.0, 1.0), 1e-5);
        assert!(matches!(r, Err(Error::StencilCrossing { .. })));
    }

    #[test]
    fn distinct_rotations_give_distinct_flows() {
        let p = Point3::new(0.3, 0.2, 1.0);
        let t = 0.8;
        let a = rot(PI).eval(t, p).unwrap();
        let b = rot(FRAC_PI_2).eval(t, p).unwrap();
        assert!(a.dist(b) > 0.1);
    }

    #[test]
    fn trajectory_and_csv_format() {
        let times = [0.0, 0.1, 0.2, 0.5, 1.0];
        let tr = rot(PI)
            .trajectory(Point3::new(0.5, 0.0, 1.0), &times)
            .unwrap();
        assert_eq!(tr.origin_hit_time, Some(0.25));
        assert_eq!(tr.points[0], Point3::new(0.5, 0.0, 1.0));
        let mut buf = Vec::new();
        write_trajectories_csv(&mut buf, &[tr]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("id,t,x,y,z"));
        assert_eq!(lines.count(), times.len());
        // Full round-trip precision: the value parses back bitwise.
        let first_row = text.lines().nth(1).unwrap();
        let x: f64 = first_row.split(',').nth(2).unwrap().parse().unwrap();
        assert_eq!(x, 0.5);
    }

    #[test]
    fn trajectory_validates_times() {
        let spec = rot(PI);
        assert!(spec
            .trajectory(Point3::new(0.1, 0.0, -1.0), &[0.1, 0.2])
            .is_err());
        assert!(spec
            .trajectory(Point3::new(0.1, 0.0, -1.0), &[0.0, 0.2, 0.2])
            .is_err());
        assert!(spec.trajectory(Point3::new(0.1, 0.0, -1.0), &[]).is_err());
    }

    proptest! {
        #[test]
        fn semigroup_on_p_minus(
            ratio in 0.0f64..0.999,
            th in 0.0f64..TAU,
            z in -2.0f64..-0.1,
            t in 0.0f64..2.0,
            s in 0.0f64..2.0,
        ) {
            let p = Point3::from_cylindrical(ratio * (-z).sqrt(), th, z);
            prop_assume!(classify(p).in_p_minus());
            let spec = rot(PI);
            let one = spec.eval(s, spec.eval(t, p).unwrap()).unwrap();
            let two = spec.eval(s + t, p).unwrap();
            prop_assert!(one.dist(two) < 1e-10, "{one:?} vs {two:?}");
        }

        #[test]
        fn p_minus_trajectories_stay_in_p_minus(
            ratio in 0.0f64..0.999,
            th in 0.0f64..TAU,
            z in -2.0f64..-0.1,
            t in 0.0f64..3.0,
        ) {
            let p = Point3::from_cylindrical(ratio * (-z).sqrt(), th, z);
            prop_assume!(classify(p).in_p_minus());
            let q = rot(PI).eval(t, p).unwrap();
            prop_assert!(classify(q).in_p_minus(), "{q:?}");
        }

        #[test]
        fn p_plus_trajectories_stay_in_p_plus_before_tstar(
            ratio in 0.0f64..0.999,
            th in 0.0f64..TAU,
            z in 0.1f64..2.0,
            frac in 0.0f64..0.99,
        ) {
            let p = Point3::from_cylindrical(ratio * z.sqrt(), th, z);
            prop_assume!(classify(p).in_p_plus());
            let t = frac * z * z / 4.0;
            let q = rot(PI).eval(t, p).unwrap();
            prop_assert!(classify(q).in_p_plus(), "{q:?}");
        }

        #[test]
        fn inverse_round_trips(
            ratio in 0.05f64..0.95,
            th in 0.0f64..TAU,
            z in 0.2f64..1.5,
            t in 0.01f64..1.5,
        ) {
            let p = Point3::from_cylindrical(ratio * z.sqrt(), th, z);
            prop_assume!(classify(p).in_p_plus());
            // Skip starts whose image lands on the degenerate cone surface.
            prop_assume!((z * z - 4.0 * t).abs() > 1e-6);
            let spec = rot(2.0);
            let q = spec.eval(t, p).unwrap();
            prop_assume!(!q.is_origin());
            let back = spec.inverse(t, q).unwrap();
            prop_assert!(back.dist(p) < 1e-10, "{back:?} vs {p:?}");
            let fwd = spec.eval(t, back).unwrap();
            prop_assert!(fwd.dist(q) < 1e-10);
        }
    }
}

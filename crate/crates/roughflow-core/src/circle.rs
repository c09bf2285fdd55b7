//! Measure-preserving maps of the circle 𝕊¹ = ℝ/2πℤ, empirical push-forward
//! testing, and the correspondence between post-origin flow continuations and
//! circle maps.
//!
//! The circle is identified with [0, 2π] with the endpoints glued. The
//! built-in maps follow their defining formulas on the closed interval, so
//! endpoint identities (the half-flip being an involution, the double cover
//! being two-to-one) hold without special-casing.

use crate::error::{Error, Result};
use crate::flow::FlowSpec;
use crate::geom::{add_angle, circ_dist, wrap_angle, Point3};
use crate::rng::stream_rng;
use rand::RngExt;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::{PI, TAU};
use std::io::{BufRead, Write};

/// Grid resolution for tabulated (sampled) maps.
pub const SAMPLED_GRID: usize = 4096;

/// A measurable map [0, 2π] → [0, 2π].
#[derive(Clone, Debug)]
pub enum CircleMap {
    /// θ ↦ θ + Θ mod 2π. Θ = 2π is the identity.
    Rotation(f64),
    /// Fixes [0, π), flips [π, 2π] (θ ↦ 3π − θ). A piecewise isometry.
    Psi1,
    /// The double cover: 2θ on [0, π), 2(θ − π) on [π, 2π]. Two-to-one.
    Psi2,
    /// θ ↦ α. Not measure preserving.
    Constant(f64),
    /// Tabulated on the uniform `SAMPLED_GRID`, circularly interpolated.
    Sampled(Vec<f64>),
}

impl CircleMap {
    pub fn identity() -> CircleMap {
        CircleMap::Rotation(TAU)
    }

    /// Evaluates the map. Inputs already in the closed interval [0, 2π] pass
    /// through unwrapped (so the formulas' endpoint values are honored);
    /// anything else is reduced mod 2π first.
    pub fn eval(&self, theta: f64) -> f64 {
        let th = if (0.0..=TAU).contains(&theta) {
            theta
        } else {
            wrap_angle(theta)
        };
        match self {
            CircleMap::Rotation(t) => add_angle(th, *t),
            CircleMap::Psi1 => {
                if th < PI {
                    th
                } else {
                    3.0 * PI - th
                }
            }
            CircleMap::Psi2 => {
                if th < PI {
                    2.0 * th
                } else {
                    let v = 2.0 * (th - PI);
                    // Only θ = 2π lands on 2π; reduce to the glued endpoint.
                    if v >= TAU {
                        v - TAU
                    } else {
                        v
                    }
                }
            }
            CircleMap::Constant(a) => *a,
            CircleMap::Sampled(tab) => sampled_eval(tab, th),
        }
    }

    /// Whether the map has an inverse; `None` when undecided (sampled maps).
    pub fn invertible(&self) -> Option<bool> {
        match self {
            CircleMap::Rotation(_) | CircleMap::Psi1 => Some(true),
            CircleMap::Psi2 | CircleMap::Constant(_) => Some(false),
            CircleMap::Sampled(_) => None,
        }
    }

    /// Closed-form inverse, when one exists.
    pub fn inverse(&self) -> Option<CircleMap> {
        match self {
            CircleMap::Rotation(t) => {
                let inv = TAU - t;
                Some(CircleMap::Rotation(if inv <= 0.0 { TAU } else { inv }))
            }
            CircleMap::Psi1 => Some(CircleMap::Psi1),
            _ => None,
        }
    }

    /// Angles at which the map is discontinuous as a circle map. Post-origin
    /// flow Jacobians are undefined across these.
    pub fn breakpoints(&self) -> &'static [f64] {
        match self {
            // The half-flip jumps at the glued endpoint and at π.
            CircleMap::Psi1 => &[0.0, PI],
            // The double cover is continuous on the circle; rotations and
            // constants are too. Sampled maps are piecewise linear between
            // grid nodes and treated as smooth at this resolution.
            _ => &[],
        }
    }

    pub fn label(&self) -> String {
        match self {
            CircleMap::Rotation(t) if *t == TAU => "identity".to_string(),
            CircleMap::Rotation(t) => format!("rotation({t})"),
            CircleMap::Psi1 => "psi1".to_string(),
            CircleMap::Psi2 => "psi2".to_string(),
            CircleMap::Constant(a) => format!("constant({a})"),
            CircleMap::Sampled(_) => "sampled".to_string(),
        }
    }

    /// Tabulates the map on the uniform grid.
    pub fn to_sampled(&self) -> CircleMap {
        match self {
            CircleMap::Sampled(_) => self.clone(),
            _ => {
                let tab = (0..SAMPLED_GRID)
                    .map(|k| self.eval(k as f64 * TAU / SAMPLED_GRID as f64))
                    .collect();
                CircleMap::Sampled(tab)
            }
        }
    }
}

/// Linear interpolation on the circle between adjacent grid samples.
/// Positions within 1e-9 of a node snap to it, so node lookups are exact
/// despite the round trip through θ = k·2π/n.
fn sampled_eval(tab: &[f64], th: f64) -> f64 {
    let n = tab.len();
    let pos = th / TAU * n as f64;
    let mut i = (pos.floor() as usize) % n;
    let mut s = pos - pos.floor();
    if s > 1.0 - 1e-9 {
        i = (i + 1) % n;
        s = 0.0;
    } else if s < 1e-9 {
        s = 0.0;
    }
    if s == 0.0 {
        return wrap_angle(tab[i]);
    }
    let j = (i + 1) % n;
    let mut d = (tab[j] - tab[i]).rem_euclid(TAU);
    if d > PI {
        d -= TAU;
    }
    wrap_angle(tab[i] + s * d)
}

/// Bin counts of mapped angles over [0, 2π).
#[derive(Clone, Debug, Serialize)]
pub struct Histogram {
    pub bin_count: usize,
    pub counts: Vec<u64>,
    pub total: u64,
}

impl Histogram {
    /// max |count − total/bins| / (total/bins) over the bins.
    pub fn max_relative_deviation(&self) -> f64 {
        let expected = self.total as f64 / self.bin_count as f64;
        self.counts
            .iter()
            .map(|&c| (c as f64 - expected).abs() / expected)
            .fold(0.0, f64::max)
    }
}

const SAMPLE_CHUNK: usize = 1 << 16;

/// Histogram of `map` over stratified-uniform points of [0, 2π].
///
/// Sample k lives in stratum [k, k+1)·2π/samples with a jittered offset.
/// Chunks of strata draw from sub-seeded generators, so the result is
/// deterministic for a given seed regardless of thread count.
pub fn pushforward_histogram(
    map: &CircleMap,
    bins: usize,
    samples: usize,
    seed: u64,
) -> Result<Histogram> {
    if bins < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 bins, got {bins}"
        )));
    }
    if samples < bins {
        return Err(Error::InvalidParameter(format!(
            "need at least as many samples as bins ({samples} < {bins})"
        )));
    }
    let n_chunks = samples.div_ceil(SAMPLE_CHUNK);
    let counts = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, c as u64);
            let mut local = vec![0u64; bins];
            let lo = c * SAMPLE_CHUNK;
            let hi = samples.min(lo + SAMPLE_CHUNK);
            for k in lo..hi {
                let u: f64 = rng.random();
                let th = (k as f64 + u) * TAU / samples as f64;
                let v = map.eval(th);
                let b = ((v / TAU) * bins as f64) as usize;
                local[b.min(bins - 1)] += 1;
            }
            local
        })
        .reduce(
            || vec![0u64; bins],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );
    Ok(Histogram {
        bin_count: bins,
        counts,
        total: samples as u64,
    })
}

/// Empirical verdict on ψ#𝓛¹ = 𝓛¹: true iff the push-forward histogram
/// deviates from uniform by at most `tol` in relative terms.
pub fn is_measure_preserving(
    map: &CircleMap,
    bins: usize,
    samples: usize,
    seed: u64,
    tol: f64,
) -> Result<bool> {
    Ok(pushforward_histogram(map, bins, samples, seed)?.max_relative_deviation() <= tol)
}

/// Reads the post-origin circle map off a flow evaluator: maps the unit
/// circle at z = 1 through the flow at t = 1/2 and records the image angles.
///
/// At that time the image must lie on the unit circle at z = −1 to within
/// 1e-8; an image off that circle means the evaluator is not one of this
/// field's flows.
pub fn extract_psi_from<F>(flow: F) -> Result<CircleMap>
where
    F: Fn(f64, Point3) -> Result<Point3>,
{
    let mut tab = Vec::with_capacity(SAMPLED_GRID);
    for k in 0..SAMPLED_GRID {
        let th = k as f64 * TAU / SAMPLED_GRID as f64;
        let p = Point3::new(th.cos(), th.sin(), 1.0);
        let q = flow(0.5, p)?;
        let gap = (q.z + 1.0).abs().max((q.radius() - 1.0).abs());
        if gap > 1e-8 {
            return Err(Error::OffReferenceCircle { theta: th, gap });
        }
        tab.push(wrap_angle(q.y.atan2(q.x)));
    }
    Ok(CircleMap::Sampled(tab))
}

/// `extract_psi_from` applied to an analytic flow.
pub fn extract_psi(spec: &FlowSpec) -> Result<CircleMap> {
    extract_psi_from(|t, p| spec.eval(t, p))
}

/// The flow whose post-origin continuation applies `map` to the angle.
pub fn build_flow_from_psi(map: CircleMap) -> FlowSpec {
    FlowSpec::general(map)
}

/// Monte-Carlo check of the cone-set identity: for angle intervals E, the
/// solid cone 𝐄 = {θ ∈ E, r ∈ [0, √|z|], z ∈ [−1, 0]} satisfies
/// 4·𝓛³(𝐄) = 𝓛¹(E). Returns (4·estimate, 𝓛¹(E)).
pub fn cone_set_measure_check(
    intervals: &[(f64, f64)],
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let mut sorted = intervals.to_vec();
    for &(lo, hi) in &sorted {
        if !(0.0 <= lo && lo <= hi && hi <= TAU) {
            return Err(Error::EmptyRange { lo, hi });
        }
    }
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in sorted.windows(2) {
        if w[0].1 > w[1].0 {
            return Err(Error::InvalidParameter(format!(
                "intervals [{},{}] and [{},{}] overlap",
                w[0].0, w[0].1, w[1].0, w[1].1
            )));
        }
    }
    let arc: f64 = sorted.iter().map(|&(lo, hi)| hi - lo).sum();
    if samples == 0 {
        return Err(Error::InvalidParameter("samples must be positive".into()));
    }

    // Uniform points of the box [−1,1]² × [−1,0], volume 4.
    let n_chunks = samples.div_ceil(SAMPLE_CHUNK);
    let hits: u64 = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, c as u64);
            let lo = c * SAMPLE_CHUNK;
            let hi = samples.min(lo + SAMPLE_CHUNK);
            let mut count = 0u64;
            for _ in lo..hi {
                let x = rng.random_range(-1.0..1.0);
                let y = rng.random_range(-1.0..1.0);
                let z = rng.random_range(-1.0..0.0);
                if x * x + y * y <= -z {
                    let th = wrap_angle(f64::atan2(y, x));
                    if sorted.iter().any(|&(a, b)| a <= th && th <= b) {
                        count += 1;
                    }
                }
            }
            count
        })
        .sum();
    let est_l3 = 4.0 * hits as f64 / samples as f64;
    Ok((4.0 * est_l3, arc))
}

/// Writes a map tabulated on the grid as `theta,psi_theta` CSV.
pub fn write_sampled_csv<W: Write>(map: &CircleMap, w: &mut W) -> Result<()> {
    let sampled = map.to_sampled();
    let CircleMap::Sampled(tab) = &sampled else {
        unreachable!()
    };
    writeln!(w, "theta,psi_theta")?;
    for (k, v) in tab.iter().enumerate() {
        writeln!(w, "{},{}", k as f64 * TAU / SAMPLED_GRID as f64, v)?;
    }
    Ok(())
}

/// Reads a `theta,psi_theta` CSV back into a sampled map.
pub fn read_sampled_csv<R: BufRead>(r: R) -> Result<CircleMap> {
    let mut tab = Vec::with_capacity(SAMPLED_GRID);
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if i == 0 {
            if line.trim() != "theta,psi_theta" {
                return Err(Error::InvalidParameter(format!(
                    "unexpected header `{line}`"
                )));
            }
            continue;
        }
        let mut parts = line.split(',');
        let (Some(_), Some(v)) = (parts.next(), parts.next()) else {
            return Err(Error::InvalidParameter(format!("bad row {i}: `{line}`")));
        };
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|e| Error::InvalidParameter(format!("bad value in row {i}: {e}")))?;
        tab.push(v);
    }
    if tab.len() != SAMPLED_GRID {
        return Err(Error::InvalidParameter(format!(
            "expected {SAMPLED_GRID} rows, got {}",
            tab.len()
        )));
    }
    Ok(CircleMap::Sampled(tab))
}

/// Largest circular gap between two maps on the tabulation grid.
pub fn grid_distance(a: &CircleMap, b: &CircleMap) -> f64 {
    (0..SAMPLED_GRID)
        .map(|k| {
            let th = k as f64 * TAU / SAMPLED_GRID as f64;
            circ_dist(a.eval(th), b.eval(th))
        })
        .fold(0.0, f64::max)
}

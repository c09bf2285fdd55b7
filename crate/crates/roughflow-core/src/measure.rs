//! Empirical verification of the measure conditions a flow must satisfy:
//! compression-constant estimation by forward binning, flow distances in
//! L¹ on a fixed reference region, and uniform region samplers.

use crate::error::{Error, Result};
use crate::geom::Point3;
use crate::rng::stream_rng;
use rand::RngExt;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::{PI, TAU};
use std::io::Write;
use std::path::Path;

const SAMPLE_CHUNK: usize = 1 << 14;
const MIN_OCCUPIED_CELLS: usize = 10;

/// Which paraboloid the slice belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Plus,
    Minus,
}

/// A z-slice of one paraboloid: {x² + y² ≤ |z|, z ∈ [z_min, z_max]}.
/// The default reference region for local flow comparisons is the P⁺
/// slice z ∈ [0.5, 1].
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ParaboloidSlice {
    pub sign: Sign,
    pub z_min: f64,
    pub z_max: f64,
}

impl ParaboloidSlice {
    pub fn plus(z_min: f64, z_max: f64) -> Result<ParaboloidSlice> {
        let s = ParaboloidSlice {
            sign: Sign::Plus,
            z_min,
            z_max,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn minus(z_min: f64, z_max: f64) -> Result<ParaboloidSlice> {
        let s = ParaboloidSlice {
            sign: Sign::Minus,
            z_min,
            z_max,
        };
        s.validate()?;
        Ok(s)
    }

    /// The default reference region.
    pub fn reference() -> ParaboloidSlice {
        ParaboloidSlice {
            sign: Sign::Plus,
            z_min: 0.5,
            z_max: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.sign {
            Sign::Plus => 0.0 < self.z_min && self.z_min < self.z_max,
            Sign::Minus => self.z_min < self.z_max && self.z_max < 0.0,
        };
        if ok && self.z_max.is_finite() && self.z_min.is_finite() {
            Ok(())
        } else {
            Err(Error::EmptyRange {
                lo: self.z_min,
                hi: self.z_max,
            })
        }
    }

    /// |z| bounds of the slice, low to high.
    fn abs_bounds(&self) -> (f64, f64) {
        match self.sign {
            Sign::Plus => (self.z_min, self.z_max),
            Sign::Minus => (-self.z_max, -self.z_min),
        }
    }

    /// Lebesgue volume: the slice at height z is a disk of area π|z|.
    pub fn volume(&self) -> f64 {
        let (a, b) = self.abs_bounds();
        PI * (b * b - a * a) / 2.0
    }

    /// Analytic mean of the z-coordinate under the uniform measure.
    pub fn mean_z(&self) -> f64 {
        let (a, b) = self.abs_bounds();
        let m = 2.0 / 3.0 * (b * b * b - a * a * a) / (b * b - a * a);
        match self.sign {
            Sign::Plus => m,
            Sign::Minus => -m,
        }
    }

    /// n points uniform w.r.t. 𝓛³ on the slice, deterministic per seed.
    ///
    /// |z| is drawn with density ∝ |z| (disk area grows linearly), then the
    /// disk point uniformly; membership x² + y² ≤ |z| holds exactly.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<Point3>> {
        self.validate()?;
        if n == 0 {
            return Err(Error::InvalidParameter("need at least one sample".into()));
        }
        let (a, b) = self.abs_bounds();
        let z_sign = match self.sign {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        };
        let n_chunks = n.div_ceil(SAMPLE_CHUNK);
        let pts: Vec<Point3> = (0..n_chunks)
            .into_par_iter()
            .flat_map_iter(|c| {
                let mut rng = stream_rng(seed, c as u64);
                let lo = c * SAMPLE_CHUNK;
                let hi = n.min(lo + SAMPLE_CHUNK);
                (lo..hi)
                    .map(|_| {
                        let u: f64 = rng.random();
                        let m = (a * a + u * (b * b - a * a)).sqrt();
                        let r = m.sqrt() * rng.random::<f64>().sqrt();
                        let th = rng.random::<f64>() * TAU;
                        let (mut x, mut y) = (r * th.cos(), r * th.sin());
                        // Guard the last ulp so membership is exact.
                        if x * x + y * y > m {
                            let fix = (m / (x * x + y * y)).sqrt() * (1.0 - f64::EPSILON);
                            x *= fix;
                            y *= fix;
                        }
                        Point3::new(x, y, z_sign * m)
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        Ok(pts)
    }
}

/// Outcome of a compression-constant estimate.
#[derive(Clone, Debug, Serialize)]
pub struct MeasureReport {
    /// Estimated compression constant: the maximal cell-density ratio.
    pub compression_l: f64,
    pub max_cell_ratio: f64,
    pub cell_size: f64,
    pub sample_count: usize,
    pub time: f64,
    pub occupied_cells: usize,
    /// Expected count per fully-covered cell under measure preservation.
    pub expected_per_cell: f64,
    /// Relative Poisson scale 1/√expected; pass bands are 5σ wide.
    pub sigma_stat: f64,
}

/// Estimates the compression constant of `flow` at time `t` by pushing
/// uniform samples of `region` forward and binning the images into cubic
/// cells of side `grid_cell`.
///
/// The per-cell density ratio is (count / samples) · volume / cell³; for a
/// measure-preserving flow every fully covered cell concentrates around 1
/// with Poisson scale 1/√expected. Choose `grid_cell` so that the expected
/// count supports the tolerance you will assert.
pub fn compression_constant<F>(
    flow: F,
    region: &ParaboloidSlice,
    t: f64,
    grid_cell: f64,
    samples: usize,
    seed: u64,
) -> Result<MeasureReport>
where
    F: Fn(f64, Point3) -> Result<Point3> + Sync,
{
    if !(grid_cell > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "grid_cell must be positive, got {grid_cell}"
        )));
    }
    let pts = region.sample(samples, seed)?;
    let maps: Vec<HashMap<(i64, i64, i64), u64>> = pts
        .par_chunks(SAMPLE_CHUNK)
        .map(|chunk| -> Result<HashMap<(i64, i64, i64), u64>> {
            let mut local = HashMap::new();
            for &p in chunk {
                let q = flow(t, p)?;
                let key = (
                    (q.x / grid_cell).floor() as i64,
                    (q.y / grid_cell).floor() as i64,
                    (q.z / grid_cell).floor() as i64,
                );
                *local.entry(key).or_insert(0) += 1;
            }
            Ok(local)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut cells: HashMap<(i64, i64, i64), u64> = HashMap::new();
    for m in maps {
        for (k, v) in m {
            *cells.entry(k).or_insert(0) += v;
        }
    }
    if cells.len() < MIN_OCCUPIED_CELLS {
        return Err(Error::InsufficientResolution {
            occupied: cells.len(),
            min: MIN_OCCUPIED_CELLS,
        });
    }
    let expected = samples as f64 * grid_cell.powi(3) / region.volume();
    let max_count = cells.values().copied().max().unwrap_or(0);
    let max_ratio = max_count as f64 / expected;
    Ok(MeasureReport {
        compression_l: max_ratio,
        max_cell_ratio: max_ratio,
        cell_size: grid_cell,
        sample_count: samples,
        time: t,
        occupied_cells: cells.len(),
        expected_per_cell: expected,
        sigma_stat: 1.0 / expected.sqrt(),
    })
}

/// Sup over `times` of the Monte-Carlo L¹ distance between two flow maps on
/// the reference region: max_t mean_p |A(t, p) − B(t, p)|.
///
/// Chunk sums are reduced in index order, so the value is bit-for-bit
/// reproducible per seed regardless of thread count.
pub fn l1_flow_distance<A, B>(
    flow_a: A,
    flow_b: B,
    region: &ParaboloidSlice,
    times: &[f64],
    samples: usize,
    seed: u64,
) -> Result<f64>
where
    A: Fn(f64, Point3) -> Result<Point3> + Sync,
    B: Fn(f64, Point3) -> Result<Point3> + Sync,
{
    if times.is_empty() {
        return Err(Error::InvalidParameter("need at least one time".into()));
    }
    let pts = region.sample(samples, seed)?;
    let mut worst: f64 = 0.0;
    for &t in times {
        let partials: Vec<f64> = pts
            .par_chunks(SAMPLE_CHUNK)
            .map(|chunk| -> Result<f64> {
                let mut acc = 0.0;
                for &p in chunk {
                    acc += (flow_a(t, p)? - flow_b(t, p)?).norm();
                }
                Ok(acc)
            })
            .collect::<Result<Vec<_>>>()?;
        let mean = partials.iter().sum::<f64>() / samples as f64;
        worst = worst.max(mean);
    }
    Ok(worst)
}

/// Appends one row to the experiment distance log, creating the file with
/// its `experiment,eps,theta,t_max,distance` header if needed.
pub fn append_distance_log(
    path: &Path,
    experiment: &str,
    eps: f64,
    theta: f64,
    t_max: f64,
    distance: f64,
) -> Result<()> {
    let fresh = !path.exists() || std::fs::metadata(path)?.len() == 0;
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)?;
    if fresh {
        writeln!(f, "experiment,eps,theta,t_max,distance")?;
    }
    writeln!(f, "{},{},{},{},{}", experiment, eps, theta, t_max, distance)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circle::{build_flow_from_psi, CircleMap};
    use crate::flow::FlowSpec;
    use std::f64::consts::FRAC_PI_2;

    fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut acc = f(a) + f(b);
        for k in 1..n {
            let x = a + k as f64 * h;
            acc += if k % 2 == 1 { 4.0 * f(x) } else { 2.0 * f(x) };
        }
        acc * h / 3.0
    }

    #[test]
    fn slice_mean_matches_quadrature_oracle() {
        let slice = ParaboloidSlice::plus(0.5, 1.0).unwrap();
        // Moment oracle: ∫ z·πz dz / ∫ πz dz over [0.5, 1] = 7/9.
        let num = simpson(|z| z * PI * z, 0.5, 1.0, 512);
        let den = simpson(|z| PI * z, 0.5, 1.0, 512);
        assert!((num / den - 7.0 / 9.0).abs() < 1e-12);
        assert!((slice.mean_z() - 7.0 / 9.0).abs() < 1e-12);

        let n = 100_000;
        let pts = slice.sample(n, 101).unwrap();
        let mean = pts.iter().map(|p| p.z).sum::<f64>() / n as f64;
        // Var(z) = E[z²] − E[z]² = 0.625 − (7/9)².
        let var: f64 = 0.625 - (7.0 / 9.0) * (7.0 / 9.0);
        let sigma = (var / n as f64).sqrt();
        assert!((mean - 7.0 / 9.0).abs() < 3.0 * sigma, "mean {mean}");
    }

    #[test]
    fn samples_lie_in_the_region_exactly() {
        for slice in [
            ParaboloidSlice::plus(0.5, 1.0).unwrap(),
            ParaboloidSlice::minus(-2.0, -0.3).unwrap(),
        ] {
            let pts = slice.sample(20_000, 7).unwrap();
            for p in pts {
                assert!(p.radius2() <= p.z.abs(), "{p:?}");
                let (a, b) = slice.abs_bounds();
                assert!((a..=b).contains(&p.z.abs()));
            }
        }
        let single = ParaboloidSlice::plus(0.5, 1.0)
            .unwrap()
            .sample(1, 0)
            .unwrap();
        assert_eq!(single.len(), 1);
    }

    #[test]
    fn slice_validation() {
        assert!(ParaboloidSlice::plus(-0.5, 1.0).is_err());
        assert!(ParaboloidSlice::plus(1.0, 0.5).is_err());
        assert!(ParaboloidSlice::minus(-1.0, 0.5).is_err());
        assert!(ParaboloidSlice::reference().validate().is_ok());
    }

    #[test]
    fn sampling_is_deterministic() {
        let slice = ParaboloidSlice::reference();
        assert_eq!(
            slice.sample(10_000, 5).unwrap(),
            slice.sample(10_000, 5).unwrap()
        );
        assert_ne!(
            slice.sample(10_000, 5).unwrap(),
            slice.sample(10_000, 6).unwrap()
        );
    }

    #[test]
    fn identity_flow_has_unit_compression() {
        let region = ParaboloidSlice::reference();
        let report = compression_constant(|_, p| Ok(p), &region, 0.0, 0.25, 200_000, 3).unwrap();
        let band = 5.0 * report.sigma_stat;
        assert!(
            (report.compression_l - 1.0).abs() <= band,
            "L = {} (band {band})",
            report.compression_l
        );
        assert_eq!(report.compression_l, report.max_cell_ratio);
    }

    #[test]
    fn rotation_flow_has_unit_compression() {
        let region = ParaboloidSlice::reference();
        let spec = FlowSpec::rotation(PI).unwrap();
        let report =
            compression_constant(|t, p| spec.eval(t, p), &region, 0.4, 0.25, 200_000, 4).unwrap();
        let band = 5.0 * report.sigma_stat;
        assert!(
            (report.compression_l - 1.0).abs() <= band,
            "L = {} (band {band})",
            report.compression_l
        );
    }

    #[test]
    fn measure_preserving_continuations_have_unit_compression() {
        // Forward binning handles the non-invertible double cover too: each
        // image point has two preimages of half density.
        let region = ParaboloidSlice::reference();
        for map in [CircleMap::Psi1, CircleMap::Psi2] {
            let spec = build_flow_from_psi(map.clone());
            let report =
                compression_constant(|t, p| spec.eval(t, p), &region, 0.4, 0.25, 200_000, 8)
                    .unwrap();
            let band = 5.0 * report.sigma_stat;
            assert!(
                (report.compression_l - 1.0).abs() <= band,
                "{}: L = {} (band {band})",
                map.label(),
                report.compression_l
            );
        }
    }

    #[test]
    fn constant_map_flow_compresses_without_bound() {
        // All angles collapse to one ray; density ratios blow up as the
        // grid refines.
        let region = ParaboloidSlice::reference();
        let spec = build_flow_from_psi(CircleMap::Constant(PI));
        let coarse =
            compression_constant(|t, p| spec.eval(t, p), &region, 0.4, 0.1, 200_000, 5).unwrap();
        let fine =
            compression_constant(|t, p| spec.eval(t, p), &region, 0.4, 0.05, 200_000, 5).unwrap();
        assert!(
            coarse.compression_l > 10.0,
            "coarse L = {}",
            coarse.compression_l
        );
        assert!(fine.compression_l > coarse.compression_l);
    }

    #[test]
    fn insufficient_resolution_is_reported() {
        let region = ParaboloidSlice::reference();
        let r = compression_constant(|_, p| Ok(p), &region, 0.0, 50.0, 1_000, 0);
        assert!(matches!(r, Err(Error::InsufficientResolution { .. })));
    }

    #[test]
    fn l1_distance_examples() {
        let region = ParaboloidSlice::reference();
        let times: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
        let a = FlowSpec::rotation(PI).unwrap();
        let b = FlowSpec::rotation(FRAC_PI_2).unwrap();

        let same = l1_flow_distance(
            |t, p| a.eval(t, p),
            |t, p| a.eval(t, p),
            &region,
            &times,
            20_000,
            1,
        )
        .unwrap();
        assert_eq!(same, 0.0);

        let gap = l1_flow_distance(
            |t, p| a.eval(t, p),
            |t, p| b.eval(t, p),
            &region,
            &times,
            20_000,
            1,
        )
        .unwrap();
        assert!(gap >= 0.1, "gap {gap}");

        // A rotation and its circle-map form are the same flow.
        let c = FlowSpec::general(CircleMap::Rotation(PI));
        let zero = l1_flow_distance(
            |t, p| a.eval(t, p),
            |t, p| c.eval(t, p),
            &region,
            &times,
            20_000,
            1,
        )
        .unwrap();
        assert!(zero < 1e-12);
    }

    #[test]
    fn l1_distance_is_a_pseudometric_on_tested_flows() {
        let region = ParaboloidSlice::reference();
        let times: Vec<f64> = (0..=5).map(|k| k as f64 / 5.0).collect();
        let specs = [
            FlowSpec::rotation(PI).unwrap(),
            FlowSpec::rotation(FRAC_PI_2).unwrap(),
            FlowSpec::rotation(1.0).unwrap(),
        ];
        let d = |i: usize, j: usize| {
            l1_flow_distance(
                |t, p| specs[i].eval(t, p),
                |t, p| specs[j].eval(t, p),
                &region,
                &times,
                10_000,
                2,
            )
            .unwrap()
        };
        let (dab, dba) = (d(0, 1), d(1, 0));
        assert!((dab - dba).abs() < 1e-12);
        let (dac, dcb) = (d(0, 2), d(2, 1));
        assert!(dab <= dac + dcb + 1e-9, "triangle: {dab} vs {dac} + {dcb}");
        assert_eq!(d(0, 0), 0.0);
    }

    #[test]
    fn distance_log_appends_with_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("distances.csv");
        append_distance_log(&path, "two-subsequence", 0.4, PI, 1.0, 0.123).unwrap();
        append_distance_log(&path, "two-subsequence", 0.2, PI, 1.0, 0.045).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "experiment,eps,theta,t_max,distance");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("two-subsequence,0.4,"));
    }
}

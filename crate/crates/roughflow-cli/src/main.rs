//! roughflow - field evaluation, flow evaluation, circle-map tools, and the
//! experiment suite, with JSON configs and CSV/JSON outputs.
//!
//! Exit codes: 0 success, 1 experiment-assertion failure, 2 usage error,
//! 3 numerical failure (structured JSON error report on stderr).

use roughflow_core::circle::{is_measure_preserving, pushforward_histogram, write_sampled_csv};
use roughflow_core::experiments::{
    emit_figure_data, run_interpolant_demo, run_psi_gallery, run_two_subsequence, Figure,
    InterpolantConfig, PsiGalleryConfig, TwoSubsequenceConfig,
};
use roughflow_core::measure::{append_distance_log, compression_constant, ParaboloidSlice};
use roughflow_core::{CircleMap, FlowSpec, Point3, SmoothField, SmoothFieldParams};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const USAGE: &str = "\
roughflow - a singular divergence-free field, its non-unique flows, and
smooth-approximation selection experiments

USAGE:
  roughflow <COMMAND> [OPTIONS]

COMMANDS:
  eval-field        Evaluate the singular field (or a smooth member) at a point
  eval-flow         Evaluate an analytic flow map at (t, point)
  psi               Circle-map tools: uniformity check, CSV export
  measure           Compression-constant report for a flow
  two-subsequence   Alternating-target selection experiment
  psi-gallery       Continuation gallery: verdicts, Jacobians, intersections
  interpolant-demo  Piecewise interpolant vs the half-flip flow
  figures           Trajectory CSV data for the standard figures

COMMON OPTIONS:
  --config FILE     JSON file with defaults; explicit flags override it
  --seed N          RNG seed (default 0)
  --out-dir DIR     Output directory (default out); created if absent
  --threads N       Worker cap (default: hardware parallelism; the
                    ROUGHFLOW_THREADS environment variable is the fallback)

EVAL-FIELD OPTIONS:
  --point X,Y,Z     Evaluation point (required)
  --smooth          Use the smooth family instead of the singular field
  --eps E           Neck size for --smooth (required with --smooth)
  --theta T         Target rotation in (0, 2*pi] for --smooth (required)
  --mollify-width W Transition width (default eps/4)

EVAL-FLOW OPTIONS:
  --kind K          rotation | identity | psi1 | psi2 | constant (required)
  --theta T         Rotation angle, radians (required for rotation)
  --alpha A         Constant angle, radians (required for constant)
  --t T             Evaluation time >= 0 (required)
  --point X,Y,Z     Starting point (required)

PSI OPTIONS:
  --map K           rotation | identity | psi1 | psi2 | constant (required)
  --theta T         Rotation angle (for rotation)
  --alpha A         Constant angle (for constant)
  --check           Print the measure-preservation verdict as JSON
  --bins N          Histogram bins for --check (default 32)
  --samples N       Samples for --check (default 1000000)
  --tol X           Relative tolerance for --check (default 0.05)
  --export          Also write the tabulated map CSV under out-dir/psi/

MEASURE OPTIONS:
  --flow K          rotation | identity | psi1 | psi2 | constant (required)
  --theta T         Rotation angle (for rotation)
  --alpha A         Constant angle (for constant)
  --t T             Push-forward time (default 0.4)
  --cell C          Grid cell size (default 0.2)
  --samples N       Sample count (default 1000000)
  --slice A,B       Reference slice z-range (default 0.5,1)

TWO-SUBSEQUENCE OPTIONS:
  --eps E1,E2,...   Decreasing neck sizes (default 0.4,0.2,0.1,0.05)
  --theta T         Even-index target (default pi)
  --phi P           Odd-index target (default pi/2)
  --particles N     Ensemble size (default 20000)
  --time-samples N  Sample times on [0, t-end] (default 33)
  --t-end T         Horizon (default 1)

PSI-GALLERY OPTIONS:
  --samples N       Verdict/compression samples (default 1000000)
  --pairs N         Intersection pairs to test (default 10000)

INTERPOLANT-DEMO OPTIONS:
  --eps E1,E2,...   Decreasing bridge sizes (default 0.4,0.2,0.1)
  --samples N       Starting angles (default 512)
  --time-samples N  Time grid size (default 2048)
  --t-end T         Horizon (default 0.5)

FIGURES OPTIONS:
  --which F         fig1 | fig2 (required)

Angles are radians. All numeric output uses full round-trip precision;
every command is deterministic given (config, seed).
";

// ---------------------------------------------------------------------------
// Argument handling
// ---------------------------------------------------------------------------

#[derive(Debug)]
struct UsageError(String);

type UsageResult<T> = Result<T, UsageError>;

struct Opts {
    command: String,
    values: BTreeMap<String, String>,
}

const COMMON_KEYS: &[&str] = &["config", "seed", "out-dir", "threads"];

fn known_keys(command: &str) -> Option<&'static [&'static str]> {
    match command {
        "eval-field" => Some(&["point", "smooth", "eps", "theta", "mollify-width"]),
        "eval-flow" => Some(&["kind", "theta", "alpha", "t", "point"]),
        "psi" => Some(&[
            "map", "theta", "alpha", "check", "bins", "samples", "tol", "export",
        ]),
        "measure" => Some(&["flow", "theta", "alpha", "t", "cell", "samples", "slice"]),
        "two-subsequence" => Some(&["eps", "theta", "phi", "particles", "time-samples", "t-end"]),
        "psi-gallery" => Some(&["samples", "pairs"]),
        "interpolant-demo" => Some(&["eps", "samples", "time-samples", "t-end"]),
        "figures" => Some(&["which"]),
        _ => None,
    }
}

/// Flags that take no value.
const SWITCHES: &[&str] = &["smooth", "check", "export"];

fn parse_args(argv: &[String]) -> UsageResult<Opts> {
    if argv.is_empty() {
        return Err(UsageError("missing command".into()));
    }
    let command = argv[0].clone();
    let keys =
        known_keys(&command).ok_or_else(|| UsageError(format!("unknown command `{command}`")))?;
    let mut values = BTreeMap::new();
    let mut i = 1;
    while i < argv.len() {
        let arg = &argv[i];
        let Some(name) = arg.strip_prefix("--") else {
            return Err(UsageError(format!("unexpected argument `{arg}`")));
        };
        if !keys.contains(&name) && !COMMON_KEYS.contains(&name) {
            return Err(UsageError(format!(
                "unknown flag `--{name}` for `{command}`"
            )));
        }
        if SWITCHES.contains(&name) {
            values.insert(name.to_string(), "true".to_string());
            i += 1;
        } else {
            let value = argv
                .get(i + 1)
                .ok_or_else(|| UsageError(format!("flag `--{name}` needs a value")))?;
            values.insert(name.to_string(), value.clone());
            i += 2;
        }
    }
    // Config-file values fill whatever flags did not set.
    if let Some(path) = values.get("config").cloned() {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| UsageError(format!("cannot read config `{path}`: {e}")))?;
        let json: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| UsageError(format!("config `{path}` is not valid JSON: {e}")))?;
        let obj = json
            .as_object()
            .ok_or_else(|| UsageError(format!("config `{path}` must be a JSON object")))?;
        for (key, value) in obj {
            if !keys.contains(&key.as_str()) && !COMMON_KEYS.contains(&key.as_str()) {
                return Err(UsageError(format!(
                    "unknown config key `{key}` for `{command}`"
                )));
            }
            if values.contains_key(key) {
                continue;
            }
            let rendered = match value {
                serde_json::Value::String(s) => s.clone(),
                serde_json::Value::Bool(b) => b.to_string(),
                serde_json::Value::Number(n) => n.to_string(),
                serde_json::Value::Array(items) => items
                    .iter()
                    .map(|v| match v {
                        serde_json::Value::Number(n) => Ok(n.to_string()),
                        serde_json::Value::String(s) => Ok(s.clone()),
                        other => Err(UsageError(format!(
                            "config key `{key}` has unsupported element {other}"
                        ))),
                    })
                    .collect::<UsageResult<Vec<_>>>()?
                    .join(","),
                other => {
                    return Err(UsageError(format!(
                        "config key `{key}` has unsupported value {other}"
                    )))
                }
            };
            values.insert(key.clone(), rendered);
        }
    }
    Ok(Opts { command, values })
}

impl Opts {
    fn str(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    fn required(&self, key: &str) -> UsageResult<&str> {
        self.str(key)
            .ok_or_else(|| UsageError(format!("missing required flag `--{key}`")))
    }

    fn f64(&self, key: &str, default: f64) -> UsageResult<f64> {
        match self.str(key) {
            None => Ok(default),
            Some(s) => s
                .parse()
                .map_err(|_| UsageError(format!("flag `--{key}`: bad number `{s}`"))),
        }
    }

    fn f64_required(&self, key: &str) -> UsageResult<f64> {
        let s = self.required(key)?;
        s.parse()
            .map_err(|_| UsageError(format!("flag `--{key}`: bad number `{s}`")))
    }

    fn usize(&self, key: &str, default: usize) -> UsageResult<usize> {
        match self.str(key) {
            None => Ok(default),
            Some(s) => s
                .parse()
                .map_err(|_| UsageError(format!("flag `--{key}`: bad integer `{s}`"))),
        }
    }

    fn u64(&self, key: &str, default: u64) -> UsageResult<u64> {
        match self.str(key) {
            None => Ok(default),
            Some(s) => s
                .parse()
                .map_err(|_| UsageError(format!("flag `--{key}`: bad integer `{s}`"))),
        }
    }

    fn switch(&self, key: &str) -> bool {
        self.str(key) == Some("true")
    }

    fn f64_list(&self, key: &str, default: &[f64]) -> UsageResult<Vec<f64>> {
        match self.str(key) {
            None => Ok(default.to_vec()),
            Some(s) => s
                .split(',')
                .map(|part| {
                    part.trim()
                        .parse()
                        .map_err(|_| UsageError(format!("flag `--{key}`: bad number `{part}`")))
                })
                .collect(),
        }
    }

    fn point(&self, key: &str) -> UsageResult<Point3> {
        let parts = self.f64_list(key, &[])?;
        if parts.len() != 3 {
            return Err(UsageError(format!("flag `--{key}` needs X,Y,Z")));
        }
        Ok(Point3::new(parts[0], parts[1], parts[2]))
    }

    fn seed(&self) -> UsageResult<u64> {
        self.u64("seed", 0)
    }

    fn out_dir(&self, command: &str) -> UsageResult<PathBuf> {
        let base = self.str("out-dir").unwrap_or("out");
        Ok(Path::new(base).join(command))
    }
}

fn circle_map_from(opts: &Opts, kind_key: &str) -> UsageResult<CircleMap> {
    let kind = opts.required(kind_key)?;
    match kind {
        "rotation" => Ok(CircleMap::Rotation(opts.f64_required("theta")?)),
        "identity" => Ok(CircleMap::identity()),
        "psi1" => Ok(CircleMap::Psi1),
        "psi2" => Ok(CircleMap::Psi2),
        "constant" => Ok(CircleMap::Constant(opts.f64_required("alpha")?)),
        other => Err(UsageError(format!("unknown map kind `{other}`"))),
    }
}

fn flow_from(opts: &Opts, kind_key: &str) -> UsageResult<Result<FlowSpec, roughflow_core::Error>> {
    let kind = opts.required(kind_key)?;
    Ok(match kind {
        "rotation" => FlowSpec::rotation(opts.f64_required("theta")?),
        "identity" => Ok(FlowSpec::general(CircleMap::identity())),
        "psi1" => Ok(FlowSpec::general(CircleMap::Psi1)),
        "psi2" => Ok(FlowSpec::general(CircleMap::Psi2)),
        "constant" => Ok(FlowSpec::general(CircleMap::Constant(
            opts.f64_required("alpha")?,
        ))),
        other => return Err(UsageError(format!("unknown flow kind `{other}`"))),
    })
}

fn configure_threads(opts: &Opts) -> UsageResult<()> {
    let from_flag = opts.str("threads").map(|s| s.to_string());
    let from_env = std::env::var("ROUGHFLOW_THREADS").ok();
    if let Some(s) = from_flag.or(from_env) {
        let n: usize = s
            .parse()
            .map_err(|_| UsageError(format!("bad thread count `{s}`")))?;
        // Ignore the error when a global pool already exists.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

enum Outcome {
    Success,
    AssertionFailed,
}

fn run(opts: &Opts) -> UsageResult<roughflow_core::Result<Outcome>> {
    match opts.command.as_str() {
        "eval-field" => {
            let p = opts.point("point")?;
            if opts.switch("smooth") {
                let params =
                    SmoothFieldParams::new(opts.f64_required("eps")?, opts.f64_required("theta")?);
                let params = match opts.str("mollify-width") {
                    Some(_) => params.with_mollify_width(opts.f64_required("mollify-width")?),
                    None => params,
                };
                Ok(SmoothField::new(params).map(|field| {
                    let b = field.eval(p);
                    println!("{},{},{}", b.x, b.y, b.z);
                    Outcome::Success
                }))
            } else {
                Ok(roughflow_core::eval_b(p).map(|b| {
                    println!("{},{},{}", b.x, b.y, b.z);
                    Outcome::Success
                }))
            }
        }
        "eval-flow" => {
            let t = opts.f64_required("t")?;
            let p = opts.point("point")?;
            Ok(flow_from(opts, "kind")?
                .and_then(|spec| spec.eval(t, p))
                .map(|q| {
                    println!("{},{},{}", q.x, q.y, q.z);
                    Outcome::Success
                }))
        }
        "psi" => {
            let map = circle_map_from(opts, "map")?;
            let bins = opts.usize("bins", 32)?;
            let samples = opts.usize("samples", 1_000_000)?;
            let tol = opts.f64("tol", 0.05)?;
            let seed = opts.seed()?;
            let check = opts.switch("check");
            let export = opts.switch("export");
            Ok((|| {
                if check {
                    let hist = pushforward_histogram(&map, bins, samples, seed)?;
                    let verdict = is_measure_preserving(&map, bins, samples, seed, tol)?;
                    let out = serde_json::json!({
                        "map": map.label(),
                        "measure_preserving": verdict,
                        "bins": bins,
                        "samples": samples,
                        "tol": tol,
                        "max_relative_deviation": hist.max_relative_deviation(),
                    });
                    println!("{}", serde_json::to_string_pretty(&out).expect("json"));
                }
                if export {
                    let dir = opts.out_dir("psi").map_err(usage_to_core)?;
                    std::fs::create_dir_all(&dir)?;
                    let name = map.label().replace('(', "_").replace(')', "");
                    let path = dir.join(format!("{name}.csv"));
                    let mut f = std::fs::File::create(&path)?;
                    write_sampled_csv(&map, &mut f)?;
                    println!("{}", path.display());
                }
                if !check && !export {
                    return Err(roughflow_core::Error::InvalidParameter(
                        "psi needs --check and/or --export".into(),
                    ));
                }
                Ok(Outcome::Success)
            })())
        }
        "measure" => {
            let spec = flow_from(opts, "flow")?;
            let t = opts.f64("t", 0.4)?;
            let cell = opts.f64("cell", 0.2)?;
            let samples = opts.usize("samples", 1_000_000)?;
            let seed = opts.seed()?;
            let slice = opts.f64_list("slice", &[0.5, 1.0])?;
            if slice.len() != 2 {
                return Err(UsageError("--slice needs A,B".into()));
            }
            let dir = opts.out_dir("measure")?;
            Ok((|| {
                let spec = spec?;
                let region = if slice[0] > 0.0 {
                    ParaboloidSlice::plus(slice[0], slice[1])?
                } else {
                    ParaboloidSlice::minus(slice[0], slice[1])?
                };
                let report =
                    compression_constant(|t, p| spec.eval(t, p), &region, t, cell, samples, seed)?;
                let json = serde_json::to_string_pretty(&report).expect("json");
                println!("{json}");
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("report.json"), json)?;
                Ok(Outcome::Success)
            })())
        }
        "two-subsequence" => {
            let defaults = TwoSubsequenceConfig::default();
            let config = TwoSubsequenceConfig {
                eps_list: opts.f64_list("eps", &defaults.eps_list)?,
                theta: opts.f64("theta", defaults.theta)?,
                phi: opts.f64("phi", defaults.phi)?,
                particles: opts.usize("particles", defaults.particles)?,
                seed: opts.seed()?,
                t_end: opts.f64("t-end", defaults.t_end)?,
                time_samples: opts.usize("time-samples", defaults.time_samples)?,
                region: defaults.region,
            };
            let dir = opts.out_dir("two-subsequence")?;
            Ok((|| {
                let report = run_two_subsequence(&config)?;
                std::fs::create_dir_all(&dir)?;
                let json = serde_json::to_string_pretty(&report).expect("json");
                std::fs::write(dir.join("report.json"), &json)?;
                let log = dir.join("distances.csv");
                let _ = std::fs::remove_file(&log);
                for row in &report.rows {
                    append_distance_log(
                        &log,
                        "two-subsequence",
                        row.eps,
                        row.theta_target,
                        config.t_end,
                        row.distance_to_target,
                    )?;
                }
                println!("{json}");
                Ok(if report.passed {
                    Outcome::Success
                } else {
                    Outcome::AssertionFailed
                })
            })())
        }
        "psi-gallery" => {
            let defaults = PsiGalleryConfig::default();
            let config = PsiGalleryConfig {
                samples: opts.usize("samples", defaults.samples)?,
                intersection_pairs: opts.usize("pairs", defaults.intersection_pairs)?,
                seed: opts.seed()?,
            };
            let dir = opts.out_dir("psi-gallery")?;
            Ok((|| {
                let report = run_psi_gallery(&config)?;
                std::fs::create_dir_all(&dir)?;
                let json = serde_json::to_string_pretty(&report).expect("json");
                std::fs::write(dir.join("report.json"), &json)?;
                println!("{json}");
                Ok(if report.passed {
                    Outcome::Success
                } else {
                    Outcome::AssertionFailed
                })
            })())
        }
        "interpolant-demo" => {
            let defaults = InterpolantConfig::default();
            let config = InterpolantConfig {
                eps_list: opts.f64_list("eps", &defaults.eps_list)?,
                samples: opts.usize("samples", defaults.samples)?,
                time_samples: opts.usize("time-samples", defaults.time_samples)?,
                t_end: opts.f64("t-end", defaults.t_end)?,
            };
            let dir = opts.out_dir("interpolant-demo")?;
            Ok((|| {
                let report = run_interpolant_demo(&config)?;
                std::fs::create_dir_all(&dir)?;
                let json = serde_json::to_string_pretty(&report).expect("json");
                std::fs::write(dir.join("report.json"), &json)?;
                println!("{json}");
                Ok(if report.passed {
                    Outcome::Success
                } else {
                    Outcome::AssertionFailed
                })
            })())
        }
        "figures" => {
            let which = match opts.required("which")? {
                "fig1" => Figure::Fig1,
                "fig2" => Figure::Fig2,
                other => return Err(UsageError(format!("unknown figure `{other}`"))),
            };
            let dir = opts.out_dir("figures")?;
            Ok((|| {
                std::fs::create_dir_all(&dir)?;
                let name = match which {
                    Figure::Fig1 => "fig1.csv",
                    Figure::Fig2 => "fig2.csv",
                };
                let info = emit_figure_data(which, &dir.join(name))?;
                println!("{}", serde_json::to_string_pretty(&info).expect("json"));
                Ok(Outcome::Success)
            })())
        }
        _ => unreachable!("command validated during parsing"),
    }
}

fn usage_to_core(e: UsageError) -> roughflow_core::Error {
    roughflow_core::Error::InvalidParameter(e.0)
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    if argv.is_empty() || argv[0] == "--help" || argv[0] == "-h" || argv[0] == "help" {
        eprint!("{USAGE}");
        return ExitCode::from(2);
    }
    let opts = match parse_args(&argv) {
        Ok(opts) => opts,
        Err(UsageError(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("run `roughflow --help` for usage");
            return ExitCode::from(2);
        }
    };
    if let Err(UsageError(msg)) = configure_threads(&opts) {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    match run(&opts) {
        Err(UsageError(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("run `roughflow --help` for usage");
            ExitCode::from(2)
        }
        Ok(Ok(Outcome::Success)) => ExitCode::SUCCESS,
        Ok(Ok(Outcome::AssertionFailed)) => ExitCode::from(1),
        Ok(Err(e)) => {
            let report = serde_json::json!({
                "error": e.to_string(),
                "kind": e.kind(),
            });
            eprintln!("{}", serde_json::to_string(&report).expect("json"));
            ExitCode::from(3)
        }
    }
}

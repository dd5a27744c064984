//! Batch front end behind the `entropylab` binary.
//!
//! Exit codes: 0 success, 1 a statistical check failed, 2 the certificate search ran
//! out of budget, 3 verification failure or unreadable input, 64 usage error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::construction::{
    self, assemble_from_certificate, find_certificate_in_mode, levels_for, verify_certificate,
    Certificate, SearchLimits, VerifyMode,
};
use crate::error::Error;
use crate::gaussian_lab::{
    fernique_check, rotation_test, scalar_identity_check, sudakov_ratio, GaussianFamily, McReport,
    NormalStream, ScalarIdentity, Verdict, SUDAKOV_CEILING,
};
use crate::pseudometric::{entropy_profile, write_profile_csv, EntropyRow, Mode};
use crate::torus::{orbit_metric, AveragingFamily, TrigPoly, DEFAULT_FAMILY_LENGTH};

pub const EXIT_OK: i32 = 0;
pub const EXIT_STATISTICAL: i32 = 1;
pub const EXIT_BUDGET: i32 = 2;
pub const EXIT_VERIFICATION: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "entropylab", version, about = "Orbit entropy and certified counterexamples for moving averages on the circle")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Search, verify and assemble the counterexample for `r0` separated orbit points.
    Construct(ConstructArgs),
    /// Re-verify a certificate (same as `construct --verify-only`).
    Verify(VerifyArgs),
    /// Covering and packing numbers of a function's orbit metric.
    Entropy(EntropyArgs),
    /// Monte Carlo suites for the Gaussian inequalities.
    Gaussian(GaussianArgs),
}

#[derive(Debug, Args)]
struct ConstructArgs {
    /// reciprocal, dyadic or explicit:<path to JSON array of a_j>
    #[arg(long, default_value = "reciprocal")]
    family: String,
    /// Number of separated orbit points; uses r = 4 r0^2 + 2 r0 levels.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    r0: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// full or sampled:N
    #[arg(long, default_value = "full")]
    mode: String,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Only verify this certificate JSON.
    #[arg(long, value_name = "CERT")]
    verify_only: Option<PathBuf>,
    #[arg(long)]
    max_m: Option<u64>,
    #[arg(long = "max-J")]
    max_j: Option<usize>,
    #[arg(long)]
    growth: Option<usize>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    certificate: PathBuf,
    #[arg(long, default_value = "full")]
    mode: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum CoveringMode {
    Exact,
    Greedy,
}

#[derive(Debug, Args)]
struct EntropyArgs {
    /// Trigonometric polynomial JSON ([{"k","re","im"}, ...]).
    #[arg(long = "f", value_name = "PATH")]
    function: PathBuf,
    #[arg(long, default_value = "reciprocal")]
    family: String,
    /// Strictly descending scales, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    deltas: Vec<f64>,
    /// Orbit indices, comma separated (default 1..=n-max).
    #[arg(long, value_delimiter = ',')]
    indices: Vec<usize>,
    #[arg(long, default_value_t = 16)]
    n_max: usize,
    #[arg(long, value_enum, default_value_t = CoveringMode::Exact)]
    covering: CoveringMode,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also plot delta * sqrt(log N(delta)) against delta.
    #[arg(long)]
    svg: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
enum Suite {
    Fernique,
    Sudakov,
    Rotation,
    Scalar,
}

#[derive(Debug, Args)]
struct GaussianArgs {
    #[arg(long, value_enum)]
    suite: Suite,
    /// Random families in the suite (default 20 fernique, 50 sudakov, 2 per angle rotation).
    #[arg(long)]
    families: Option<usize>,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Everything needed to reproduce a run.
#[derive(Debug, Serialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum RunConfig {
    Construct(ConstructConfig),
    Verify(VerifyConfig),
    Entropy(EntropyConfig),
    Gaussian(GaussianConfig),
}

#[derive(Debug, Serialize)]
pub struct ConstructConfig {
    pub family: String,
    pub r0: Option<u64>,
    pub seed: u64,
    pub mode: String,
    pub limits: SearchLimits,
    pub verify_only: Option<PathBuf>,
    pub max_full_r: usize,
}

#[derive(Debug, Serialize)]
pub struct VerifyConfig {
    pub certificate: PathBuf,
    pub mode: String,
    pub seed: u64,
    pub max_full_r: usize,
}

#[derive(Debug, Serialize)]
pub struct EntropyConfig {
    pub function: PathBuf,
    pub family: String,
    pub deltas: Vec<f64>,
    pub indices: Vec<usize>,
    pub covering: Mode,
}

#[derive(Debug, Serialize)]
pub struct GaussianConfig {
    pub suite: String,
    pub families: usize,
    pub samples: usize,
    pub seed: u64,
}

/// A failure mapped to its exit code.
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }

    fn input(message: impl Into<String>) -> Self {
        Self { code: EXIT_VERIFICATION, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::BudgetExhausted { .. } => EXIT_BUDGET,
            _ => EXIT_VERIFICATION,
        };
        Self { code, message: e.to_string() }
    }
}

type CliResult = std::result::Result<i32, Failure>;

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Construct(a) => cmd_construct(a),
        Command::Verify(a) => cmd_verify(&a.certificate, &a.mode, a.seed, a.out.as_deref()),
        Command::Entropy(a) => cmd_entropy(a),
        Command::Gaussian(a) => cmd_gaussian(a),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("entropylab: {}", f.message);
            f.code
        }
    }
}

fn parse_family(spec: &str) -> std::result::Result<AveragingFamily, Failure> {
    match spec {
        "reciprocal" => Ok(AveragingFamily::reciprocal(DEFAULT_FAMILY_LENGTH)?),
        "dyadic" => Ok(AveragingFamily::dyadic(DEFAULT_FAMILY_LENGTH)?),
        _ => {
            let path = spec
                .strip_prefix("explicit:")
                .ok_or_else(|| Failure::usage(format!("unknown family {spec:?}")))?;
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::input(format!("cannot read {path}: {e}")))?;
            let values: Vec<f64> = serde_json::from_str(&text)
                .map_err(|e| Failure::input(format!("{path}: expected a JSON array of numbers: {e}")))?;
            Ok(AveragingFamily::explicit(values)?)
        }
    }
}

fn parse_mode(mode: &str, seed: u64) -> std::result::Result<VerifyMode, Failure> {
    let parsed = VerifyMode::from_str(mode).map_err(|e| Failure::usage(e.to_string()))?;
    Ok(match parsed {
        VerifyMode::Sampled { count, .. } => VerifyMode::Sampled { count, seed },
        full => full,
    })
}

fn write_file(dir: &Path, name: &str, contents: &[u8]) -> std::result::Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::input(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Failure::input(format!("cannot write {}: {e}", path.display())))
}

fn to_json<T: Serialize>(value: &T) -> std::result::Result<Vec<u8>, Failure> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Failure::input(e.to_string()))?;
    s.push('\n');
    Ok(s.into_bytes())
}

#[derive(Serialize)]
struct ConstructSummary<'a> {
    family: &'a AveragingFamily,
    r0: usize,
    r: usize,
    #[serde(rename = "J")]
    windows: &'a [usize],
    part: crate::torus::Part,
    witness_indices: &'a [usize],
    witness_min_gap: Option<f64>,
    g_norm: f64,
    f_norm: f64,
    f_sup_bound: f64,
    separation_min: f64,
    separation_floor: f64,
    worst_zero_case: f64,
    worst_one_case: f64,
    min_pair_gap: f64,
    packing_at_one_fortieth: usize,
    entropy_certified: bool,
}

fn cmd_construct(a: ConstructArgs) -> CliResult {
    let mut limits = SearchLimits { seed: a.seed, ..SearchLimits::default() };
    if let Some(v) = a.max_m {
        limits.max_m = v;
    }
    if let Some(v) = a.max_j {
        limits.max_j = v;
    }
    if let Some(v) = a.growth {
        limits.growth = v;
    }
    let config = RunConfig::Construct(ConstructConfig {
        family: a.family.clone(),
        r0: a.r0,
        seed: a.seed,
        mode: a.mode.clone(),
        limits: limits.clone(),
        verify_only: a.verify_only.clone(),
        max_full_r: construction::max_full_r(),
    });
    if let Some(cert) = &a.verify_only {
        return cmd_verify(cert, &a.mode, a.seed, Some(&a.out));
    }
    let r0 = a.r0.ok_or_else(|| Failure::usage("--r0 is required"))? as usize;
    let family = parse_family(&a.family)?;
    let mode = parse_mode(&a.mode, a.seed)?;
    write_file(&a.out, "run_config.json", &to_json(&config)?)?;

    let r = levels_for(r0);
    let cert = find_certificate_in_mode(&family, r, &limits, mode)?;
    write_file(&a.out, "certificate.json", cert.to_json()?.as_bytes())?;
    let ce = assemble_from_certificate(cert, r0)?;

    let mut csv = Vec::new();
    ce.separation.to_csv(&mut csv)?;
    write_file(&a.out, "separation.csv", &csv)?;
    write_file(&a.out, "f.json", &to_json(&ce.f)?)?;

    let sep = &ce.separation;
    let separation_min = (0..sep.size())
        .flat_map(|s| (0..sep.size()).filter(move |t| *t != s).map(move |t| (s, t)))
        .map(|(s, t)| sep.dist(s, t))
        .fold(f64::INFINITY, f64::min);
    let report = ce.cert.report();
    let summary = ConstructSummary {
        family: &ce.cert.family,
        r0,
        r,
        windows: &ce.cert.windows,
        part: ce.witness.part,
        witness_indices: &ce.witness.indices,
        witness_min_gap: ce.witness.min_gap,
        g_norm: ce.g_norm(),
        f_norm: ce.f_norm(),
        f_sup_bound: ce.sup_bound(),
        separation_min,
        separation_floor: construction::separation_floor(),
        worst_zero_case: report.worst_zero_case,
        worst_one_case: report.worst_one_case,
        min_pair_gap: report.min_pair_gap,
        packing_at_one_fortieth: ce.packing_at_scale,
        entropy_certified: ce.packing_at_scale >= r0,
    };
    let json = to_json(&summary)?;
    write_file(&a.out, "summary.json", &json)?;
    print!("{}", String::from_utf8_lossy(&json));
    Ok(EXIT_OK)
}

fn cmd_verify(path: &Path, mode: &str, seed: u64, out: Option<&Path>) -> CliResult {
    let mode = parse_mode(mode, seed)?;
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))?;
    let cert = Certificate::from_json(&text)?;
    let report = verify_certificate(&cert, mode)?;
    let json = to_json(&report)?;
    if let Some(dir) = out {
        let config = RunConfig::Verify(VerifyConfig {
            certificate: path.to_path_buf(),
            mode: format!("{mode:?}"),
            seed,
            max_full_r: construction::max_full_r(),
        });
        write_file(dir, "verify_config.json", &to_json(&config)?)?;
        write_file(dir, "verification.json", &json)?;
    }
    print!("{}", String::from_utf8_lossy(&json));
    if report.passed() {
        Ok(EXIT_OK)
    } else {
        eprintln!("entropylab: {}", report.describe_failure());
        Ok(EXIT_VERIFICATION)
    }
}

fn cmd_entropy(a: EntropyArgs) -> CliResult {
    if a.deltas.is_empty() {
        return Err(Failure::usage("--deltas needs at least one value"));
    }
    if a.deltas.iter().any(|d| !(*d > 0.0)) || a.deltas.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(Failure::usage("--deltas must be positive and strictly descending"));
    }
    let indices: Vec<usize> = if a.indices.is_empty() { (1..=a.n_max).collect() } else { a.indices.clone() };
    if indices.is_empty() {
        return Err(Failure::usage("no orbit indices"));
    }
    let family = parse_family(&a.family)?;
    let text = fs::read_to_string(&a.function)
        .map_err(|e| Failure::input(format!("cannot read {}: {e}", a.function.display())))?;
    let f: TrigPoly = serde_json::from_str(&text)
        .map_err(|e| Failure::input(format!("{}: {e}", a.function.display())))?;
    let mode = match a.covering {
        CoveringMode::Exact => Mode::Exact,
        CoveringMode::Greedy => Mode::Greedy,
    };
    let metric = orbit_metric(&f, &family, &indices)?;
    let rows = entropy_profile(&metric, &a.deltas, mode)?;
    let mut csv = Vec::new();
    write_profile_csv(&rows, &mut csv)?;
    let svg = a.svg.then(|| entropy_svg(&rows));
    match &a.out {
        Some(dir) => {
            let config = RunConfig::Entropy(EntropyConfig {
                function: a.function.clone(),
                family: a.family.clone(),
                deltas: a.deltas.clone(),
                indices,
                covering: mode,
            });
            write_file(dir, "entropy_config.json", &to_json(&config)?)?;
            write_file(dir, "entropy.csv", &csv)?;
            if let Some(svg) = &svg {
                write_file(dir, "entropy.svg", svg.as_bytes())?;
            }
        }
        None => {
            print!("{}", String::from_utf8_lossy(&csv));
            if let Some(svg) = &svg {
                write_file(Path::new("."), "entropy.svg", svg.as_bytes())?;
            }
        }
    }
    Ok(EXIT_OK)
}

/// Line plot of `delta * sqrt(log N(delta))` against `delta`.
pub fn entropy_svg(rows: &[EntropyRow]) -> String {
    let (w, h, pad) = (480.0, 320.0, 40.0);
    let points: Vec<(f64, f64)> =
        rows.iter().map(|r| (r.delta, r.delta * (r.covering as f64).ln().sqrt())).collect();
    let x_max = points.iter().map(|p| p.0).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let y_max = points.iter().map(|p| p.1).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let sx = |x: f64| pad + x / x_max * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - y / y_max * (h - 2.0 * pad);
    let mut sorted = points.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut path = String::new();
    for (i, (x, y)) in sorted.iter().enumerate() {
        let _ = write!(path, "{}{:.2},{:.2}", if i == 0 { "M" } else { " L" }, sx(*x), sy(*y));
    }
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    );
    let _ = writeln!(
        svg,
        "<line x1=\"{pad}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{pad}\" y1=\"{pad}\" x2=\"{pad}\" y2=\"{b}\" stroke=\"black\"/>",
        b = h - pad,
        r = w - pad
    );
    let _ = writeln!(svg, "<path d=\"{path}\" fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\"/>");
    for (x, y) in &sorted {
        let _ = writeln!(svg, "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"steelblue\"/>", sx(*x), sy(*y));
    }
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">delta (max {x_max:.4})</text>",
        w / 2.0,
        h - 8.0
    );
    let _ = writeln!(
        svg,
        "<text x=\"12\" y=\"{}\" font-size=\"12\" transform=\"rotate(-90 12 {})\" text-anchor=\"middle\">delta sqrt(log N) (max {y_max:.4})</text>",
        h / 2.0,
        h / 2.0
    );
    svg.push_str("</svg>\n");
    svg
}

#[derive(Debug, Serialize)]
struct SuiteEntry {
    name: String,
    report: McReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    extra: Option<serde_json::Value>,
}

#[derive(Debug, Serialize)]
struct SuiteReport {
    suite: Suite,
    pass: usize,
    fail: usize,
    inconclusive: usize,
    entries: Vec<SuiteEntry>,
}

/// Random family sizes for a suite: `N` in `1..=max_n`, `J` in `1..=max_j`.
fn suite_family(seed: u64, index: usize, max_n: usize, max_j: usize) -> crate::error::Result<GaussianFamily> {
    let mut s = NormalStream::substream(seed, index as u64 + 1);
    let n = 1 + (s.uniform() * max_n as f64) as usize;
    let j = 1 + (s.uniform() * max_j as f64) as usize;
    GaussianFamily::random_uniform(n.min(max_n), j.min(max_j), seed.wrapping_mul(1_000_003).wrapping_add(index as u64))
}

fn cmd_gaussian(a: GaussianArgs) -> CliResult {
    let families = a.families.unwrap_or(match a.suite {
        Suite::Fernique => 20,
        Suite::Sudakov => 50,
        Suite::Rotation => 2,
        Suite::Scalar => 0,
    });
    let mut entries = Vec::new();
    let mut sudakov_csv = String::from("family,delta,covering,numerator\n");
    match a.suite {
        Suite::Fernique => {
            let single = GaussianFamily::new(vec![vec![1.0]])?;
            let r = fernique_check(&single, a.samples, a.seed)?;
            entries.push(SuiteEntry {
                name: "single normal".into(),
                extra: Some(serde_json::json!({ "median_level": r.median_level })),
                report: r.sup,
            });
            for i in 0..families {
                let fam = suite_family(a.seed, i, 32, 64)?;
                let r = fernique_check(&fam, a.samples, a.seed.wrapping_add(i as u64))?;
                entries.push(SuiteEntry {
                    name: format!("family {i} ({}x{})", fam.len(), fam.width()),
                    extra: Some(serde_json::json!({ "median_level": r.median_level })),
                    report: r.sup,
                });
            }
        }
        Suite::Sudakov => {
            for i in 0..families {
                let fam = suite_family(a.seed, i, 20, 32)?;
                let r = sudakov_ratio(&fam, None, a.samples, a.seed.wrapping_add(i as u64))?;
                for row in &r.detail {
                    let _ = writeln!(sudakov_csv, "{i},{},{},{}", row.delta, row.covering, row.numerator);
                }
                let verdict = if r.ratio <= SUDAKOV_CEILING { Verdict::Pass } else { Verdict::Fail };
                entries.push(SuiteEntry {
                    name: format!("family {i} ({}x{})", fam.len(), fam.width()),
                    report: McReport {
                        estimate: r.ratio,
                        std_error: 0.0,
                        samples: a.samples,
                        bound: Some(SUDAKOV_CEILING),
                        check: crate::gaussian_lab::CheckKind::UpperBound,
                        verdict,
                    },
                    extra: Some(serde_json::json!({
                        "expected_sup": r.sup.estimate,
                        "expected_sup_se": r.sup.std_error,
                        "covering_mode": r.covering_mode,
                    })),
                });
            }
        }
        Suite::Rotation => {
            for (t, theta) in [0.0, std::f64::consts::FRAC_PI_4, 1.0].into_iter().enumerate() {
                for i in 0..families {
                    let fam = suite_family(a.seed, 100 * t + i, 3, 4)?;
                    let r = rotation_test(&fam, theta, a.samples, a.seed.wrapping_add((100 * t + i) as u64))?;
                    entries.push(SuiteEntry {
                        name: format!("theta {theta} family {i} ({}x{})", fam.len(), fam.width()),
                        report: r,
                        extra: None,
                    });
                }
            }
        }
        Suite::Scalar => {
            let checks = [
                ("mgf lambda=0.5 sigma=1", ScalarIdentity::Mgf { lambda: 0.5, sigma: 1.0 }),
                ("mgf lambda=1 sigma=1", ScalarIdentity::Mgf { lambda: 1.0, sigma: 1.0 }),
                ("mgf lambda=1 sigma=2", ScalarIdentity::Mgf { lambda: 1.0, sigma: 2.0 }),
                ("tail integral, first moment", ScalarIdentity::TailIntegral { moment: 1 }),
                ("tail integral, second moment", ScalarIdentity::TailIntegral { moment: 2 }),
                ("moment ratio p=1", ScalarIdentity::MomentRatio { p: 1.0 }),
                ("moment ratio p=2", ScalarIdentity::MomentRatio { p: 2.0 }),
                ("moment ratio p=4", ScalarIdentity::MomentRatio { p: 4.0 }),
            ];
            for (i, (name, kind)) in checks.into_iter().enumerate() {
                let r = scalar_identity_check(kind, a.samples, a.seed.wrapping_add(i as u64))?;
                entries.push(SuiteEntry { name: name.into(), report: r, extra: None });
            }
        }
    }
    let count = |v: Verdict| entries.iter().filter(|e| e.report.verdict == v).count();
    let report = SuiteReport {
        suite: a.suite,
        pass: count(Verdict::Pass),
        fail: count(Verdict::Fail),
        inconclusive: count(Verdict::Inconclusive),
        entries,
    };
    let json = to_json(&report)?;
    if let Some(dir) = &a.out {
        let config = RunConfig::Gaussian(GaussianConfig {
            suite: format!("{:?}", a.suite).to_lowercase(),
            families,
            samples: a.samples,
            seed: a.seed,
        });
        write_file(dir, "gaussian_config.json", &to_json(&config)?)?;
        write_file(dir, "gaussian_report.json", &json)?;
        if a.suite == Suite::Sudakov {
            write_file(dir, "sudakov.csv", sudakov_csv.as_bytes())?;
        }
    }
    print!("{}", String::from_utf8_lossy(&json));
    if report.inconclusive > 0 {
        eprintln!(
            "entropylab: {} inconclusive checks; raise --samples to resolve them",
            report.inconclusive
        );
    }
    Ok(if report.fail > 0 { EXIT_STATISTICAL } else { EXIT_OK })
}

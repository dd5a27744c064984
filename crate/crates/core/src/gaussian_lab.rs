//! Finite Gaussian processes `G_n = sum_j A[n][j] g_j` and Monte Carlo checks of
//! the inequalities used to bound their suprema.
//!
//! Randomness comes from ChaCha8 seeded by a `u64`; standard normals are produced
//! by Box-Muller from 53-bit uniforms, both outputs used in order. A fixed seed and
//! sample count reproduce every report bit for bit.
//!
//! Verdicts use three standard errors:
//!
//! * upper-bound checks pass when `estimate + 3 se <= bound`, fail when
//!   `estimate - 3 se > bound`, and are inconclusive in between;
//! * two-sided checks pass when `|estimate - target| <= 3 se`.

use std::f64::consts::{PI, TAU};
use std::io::Write;

use num_bigint::BigInt;
use num_complex::Complex64;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::phase::{unit, Accumulator, Magnitude};
use crate::pseudometric::{covering_number, FinitePseudoMetric, Mode, DEFAULT_EXACT_CAP};
use crate::torus::{orbit_images, AveragingFamily, TranslationFamily, TrigPoly};

/// Number of standard errors in every verdict band.
pub const SE_BAND: f64 = 3.0;
/// Largest `lambda * sigma` accepted by the MGF check.
pub const MAX_MGF_EXPONENT: f64 = 3.0;
/// Ceiling asserted for the empirical Sudakov ratio.
pub const SUDAKOV_CEILING: f64 = 6.0;
/// Factor in the median bound on the expected supremum.
pub const FERNIQUE_FACTOR: f64 = 6.0;

/// Standard normal stream: ChaCha8 uniforms through Box-Muller.
#[derive(Debug, Clone)]
pub struct NormalStream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl NormalStream {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed), spare: None }
    }

    /// Independent substream `stream` of the generator seeded by `seed`.
    pub fn substream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng, spare: None }
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let radius = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (TAU * u2).sin_cos();
        self.spare = Some(radius * s);
        radius * c
    }

    pub fn fill(&mut self, out: &mut [f64]) {
        for z in out {
            *z = self.normal();
        }
    }
}

/// Rows of `A`: `G_n = sum_j A[n][j] g_j` for i.i.d. standard normals `g_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FamilyJson", into = "FamilyJson")]
pub struct GaussianFamily {
    rows: Vec<Vec<f64>>,
    width: usize,
}

#[derive(Serialize, Deserialize)]
struct FamilyJson {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
}

impl TryFrom<FamilyJson> for GaussianFamily {
    type Error = Error;

    fn try_from(raw: FamilyJson) -> Result<Self> {
        Self::new(raw.a)
    }
}

impl From<GaussianFamily> for FamilyJson {
    fn from(fam: GaussianFamily) -> Self {
        Self { a: fam.rows }
    }
}

impl GaussianFamily {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let width = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || width == 0 {
            return Err(Error::Precondition("coefficient matrix must be nonempty".into()));
        }
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::Precondition("coefficient matrix rows differ in length".into()));
        }
        if rows.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Precondition("coefficient matrix has non-finite entries".into()));
        }
        Ok(Self { rows, width })
    }

    /// Entries uniform on `[-1, 1]`.
    pub fn random_uniform(n: usize, j: usize, seed: u64) -> Result<Self> {
        let mut s = NormalStream::new(seed);
        Self::new((0..n).map(|_| (0..j).map(|_| 2.0 * s.uniform() - 1.0).collect()).collect())
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Number of processes `N`.
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Number of driving normals `J`.
    pub fn width(&self) -> usize {
        self.width
    }

    /// `Var G_n = sum_j A[n][j]^2`.
    pub fn variance(&self, n: usize) -> f64 {
        self.rows[n].iter().map(|a| a * a).sum()
    }

    /// `G = A g` for one draw `g`.
    pub fn realize(&self, normals: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(&self.rows) {
            *o = row.iter().zip(normals).map(|(a, g)| a * g).sum();
        }
    }

    /// Appends one row.
    pub fn with_row(&self, row: Vec<f64>) -> Result<Self> {
        let mut rows = self.rows.clone();
        rows.push(row);
        Self::new(rows)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    /// Nothing is asserted; the verdict is a vacuous pass.
    EstimateOnly,
    /// `estimate <= bound`.
    UpperBound,
    /// `estimate == bound`.
    TwoSided,
}

/// A Monte Carlo estimate with its standard error and verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub estimate: f64,
    pub std_error: f64,
    pub samples: usize,
    pub bound: Option<f64>,
    pub check: CheckKind,
    pub verdict: Verdict,
}

impl McReport {
    pub fn estimate_only(estimate: f64, std_error: f64, samples: usize) -> Self {
        Self { estimate, std_error, samples, bound: None, check: CheckKind::EstimateOnly, verdict: Verdict::Pass }
    }

    pub fn upper_bound(estimate: f64, std_error: f64, samples: usize, bound: f64) -> Self {
        let verdict = if estimate + SE_BAND * std_error <= bound {
            Verdict::Pass
        } else if estimate - SE_BAND * std_error > bound {
            Verdict::Fail
        } else {
            Verdict::Inconclusive
        };
        Self { estimate, std_error, samples, bound: Some(bound), check: CheckKind::UpperBound, verdict }
    }

    /// Two-sided check with an absolute `slack` for rounding on top of the 3-SE band.
    pub fn two_sided(estimate: f64, std_error: f64, samples: usize, target: f64, slack: f64) -> Self {
        let verdict = if (estimate - target).abs() <= SE_BAND * std_error + slack {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        Self { estimate, std_error, samples, bound: Some(target), check: CheckKind::TwoSided, verdict }
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

/// Running mean and variance (Welford).
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    fn std_error(&self) -> f64 {
        (self.variance() / self.n as f64).sqrt()
    }
}

fn check_samples(samples: usize, min: usize) -> Result<()> {
    if samples < min {
        return Err(Error::Precondition(format!("need at least {min} samples, got {samples}")));
    }
    Ok(())
}

/// `d_G(n, n') = ||G_n - G_n'||_2`, the Euclidean distance between rows.
pub fn exact_metric(fam: &GaussianFamily) -> Result<FinitePseudoMetric> {
    let rows = fam.rows();
    FinitePseudoMetric::from_fn(rows.len(), |i, j| {
        rows[i].iter().zip(&rows[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    })
}

/// Samples of `sup_n |G_n|`.
pub fn sup_samples(fam: &GaussianFamily, samples: usize, seed: u64) -> Vec<f64> {
    let mut stream = NormalStream::new(seed);
    let mut g = vec![0.0; fam.width()];
    let mut values = vec![0.0; fam.len()];
    (0..samples)
        .map(|_| {
            stream.fill(&mut g);
            fam.realize(&g, &mut values);
            values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
        })
        .collect()
}

/// Estimate of `E sup_n |G_n|`.
pub fn simulate_sup(fam: &GaussianFamily, samples: usize, seed: u64) -> Result<McReport> {
    check_samples(samples, 100)?;
    let mut m = Moments::default();
    for x in sup_samples(fam, samples, seed) {
        m.push(x);
    }
    Ok(McReport::estimate_only(m.mean, m.std_error(), samples))
}

/// Empirical `||G_i - G_j||_2` compared with [`exact_metric`].
pub fn metric_check(fam: &GaussianFamily, i: usize, j: usize, samples: usize, seed: u64) -> Result<McReport> {
    check_samples(samples, 100)?;
    if i >= fam.len() || j >= fam.len() {
        return Err(Error::IndexOutOfRange { index: i.max(j), length: fam.len() });
    }
    let mut stream = NormalStream::new(seed);
    let mut g = vec![0.0; fam.width()];
    let mut values = vec![0.0; fam.len()];
    let mut m = Moments::default();
    for _ in 0..samples {
        stream.fill(&mut g);
        fam.realize(&g, &mut values);
        let d = values[i] - values[j];
        m.push(d * d);
    }
    let estimate = m.mean.sqrt();
    // delta method for the square root
    let se = if estimate > 0.0 { m.std_error() / (2.0 * estimate) } else { 0.0 };
    Ok(McReport::two_sided(estimate, se, samples, exact_metric(fam)?.dist(i, j), 1e-12))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FerniqueReport {
    /// `E sup |G_n|` checked against `6 s*`.
    pub sup: McReport,
    /// `s*`: smallest sample value with empirical `P(sup <= s) >= 1/2`.
    pub median_level: f64,
}

/// Checks `E sup_n |G_n| <= 6 s*` where `P(sup_n |G_n| <= s*) >= 1/2`.
pub fn fernique_check(fam: &GaussianFamily, samples: usize, seed: u64) -> Result<FerniqueReport> {
    check_samples(samples, 10_000)?;
    let mut xs = sup_samples(fam, samples, seed);
    let mut m = Moments::default();
    for &x in &xs {
        m.push(x);
    }
    xs.sort_by(f64::total_cmp);
    let median_level = xs[samples.div_ceil(2) - 1];
    Ok(FerniqueReport {
        sup: McReport::upper_bound(m.mean, m.std_error(), samples, FERNIQUE_FACTOR * median_level),
        median_level,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SudakovRow {
    pub delta: f64,
    pub covering: usize,
    /// `delta * sqrt(log N(delta))`.
    pub numerator: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SudakovReport {
    /// `max_delta delta sqrt(log N(delta)) / E sup |G_n|`.
    pub ratio: f64,
    pub sup: McReport,
    pub detail: Vec<SudakovRow>,
    /// `exact`, or `greedy` when the family exceeds the exact cap (covering then over-counts).
    pub covering_mode: Mode,
}

/// Scales just below every distinct positive distance, where the covering number jumps.
pub fn default_sudakov_grid(metric: &FinitePseudoMetric) -> Vec<f64> {
    let mut d: Vec<f64> = metric.rows().into_iter().flatten().filter(|x| *x > 0.0).collect();
    d.sort_by(|a, b| b.total_cmp(a));
    d.dedup();
    d.into_iter().map(|x| x * (1.0 - 1e-9)).collect()
}

/// Empirical lower bound for the constant in `delta sqrt(log N) <= R E sup |G|`.
///
/// `deltas = None` uses [`default_sudakov_grid`].
pub fn sudakov_ratio(
    fam: &GaussianFamily,
    deltas: Option<&[f64]>,
    samples: usize,
    seed: u64,
) -> Result<SudakovReport> {
    let metric = exact_metric(fam)?;
    let grid = match deltas {
        Some(d) => d.to_vec(),
        None => default_sudakov_grid(&metric),
    };
    if grid.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::Precondition("deltas must be positive".into()));
    }
    let covering_mode = if metric.size() <= DEFAULT_EXACT_CAP { Mode::Exact } else { Mode::Greedy };
    let detail = grid
        .iter()
        .map(|&delta| {
            let covering = covering_number(&metric, delta, covering_mode)?;
            Ok(SudakovRow { delta, covering, numerator: delta * (covering as f64).ln().sqrt() })
        })
        .collect::<Result<Vec<_>>>()?;
    let sup = simulate_sup(fam, samples, seed)?;
    let top = detail.iter().map(|r| r.numerator).fold(0.0, f64::max);
    let ratio = if top == 0.0 {
        0.0
    } else if sup.estimate > 0.0 {
        top / sup.estimate
    } else {
        f64::INFINITY
    };
    Ok(SudakovReport { ratio, sup, detail, covering_mode })
}

/// CSV with header `delta,covering,numerator`.
pub fn write_sudakov_csv<W: Write>(rows: &[SudakovRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["delta", "covering", "numerator"])?;
    for r in rows {
        w.write_record([r.delta.to_string(), r.covering.to_string(), r.numerator.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Second-moment matrix `E[X_a X_b]` with entrywise standard errors from `samples` draws.
fn second_moments(
    samples: usize,
    dim: usize,
    mut draw: impl FnMut(&mut [f64]),
) -> (Vec<f64>, Vec<f64>) {
    let mut acc = vec![Moments::default(); dim * dim];
    let mut x = vec![0.0; dim];
    for _ in 0..samples {
        draw(&mut x);
        for a in 0..dim {
            for b in a..dim {
                acc[a * dim + b].push(x[a] * x[b]);
            }
        }
    }
    let mean = acc.iter().map(|m| m.mean).collect();
    let se = acc.iter().map(|m| m.std_error()).collect();
    (mean, se)
}

/// Compares the covariance of `(G, H)` with that of `(G sin t + H cos t, G cos t - H sin t)`.
///
/// `G` and `H` are independent copies of the family. The two covariances are
/// estimated from independent draws; the report's estimate is the largest
/// `|difference| / SE` over the upper triangle and passes iff it is at most 3.
pub fn rotation_test(fam: &GaussianFamily, theta: f64, samples: usize, seed: u64) -> Result<McReport> {
    check_samples(samples, 10_000)?;
    let n = fam.len();
    let width = fam.width();
    let (sin, cos) = theta.sin_cos();
    let mut plain = NormalStream::substream(seed, 0);
    let mut rotated = NormalStream::substream(seed, 1);
    let mut g = vec![0.0; width];
    let mut h = vec![0.0; width];
    let mut gv = vec![0.0; n];
    let mut hv = vec![0.0; n];
    let (m1, s1) = second_moments(samples, 2 * n, |x| {
        plain.fill(&mut g);
        plain.fill(&mut h);
        fam.realize(&g, &mut x[..n]);
        fam.realize(&h, &mut x[n..]);
    });
    let (m2, s2) = second_moments(samples, 2 * n, |x| {
        rotated.fill(&mut g);
        rotated.fill(&mut h);
        fam.realize(&g, &mut gv);
        fam.realize(&h, &mut hv);
        for i in 0..n {
            x[i] = gv[i] * sin + hv[i] * cos;
            x[n + i] = gv[i] * cos - hv[i] * sin;
        }
    });
    let dim = 2 * n;
    let mut worst: f64 = 0.0;
    for a in 0..dim {
        for b in a..dim {
            let k = a * dim + b;
            let diff = (m1[k] - m2[k]).abs();
            let se = (s1[k] * s1[k] + s2[k] * s2[k]).sqrt();
            let z = if se > 0.0 {
                diff / se
            } else if diff <= 1e-12 {
                0.0
            } else {
                f64::INFINITY
            };
            worst = worst.max(z);
        }
    }
    let verdict = if worst <= SE_BAND { Verdict::Pass } else { Verdict::Fail };
    Ok(McReport {
        estimate: worst,
        std_error: 0.0,
        samples,
        bound: Some(SE_BAND),
        check: CheckKind::UpperBound,
        verdict,
    })
}

/// One-dimensional normal identities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalarIdentity {
    /// `E e^{lambda X} = e^{lambda^2 sigma^2 / 2}` for `X ~ N(0, sigma^2)`.
    Mgf { lambda: f64, sigma: f64 },
    /// `E|g|^moment = moment * int_0^inf t^{moment-1} P(|g| > t) dt` for `moment` in {1, 2},
    /// with the integral taken over the empirical tail and compared to the closed-form moment.
    TailIntegral { moment: u32 },
    /// `||g||_p / ||g||_2 = (2^{p/2} Gamma((p+1)/2) / sqrt pi)^{1/p}`.
    MomentRatio { p: f64 },
}

/// `(E|Z|^p)^{1/p}` for a standard normal `Z`.
pub fn normal_moment_ratio(p: f64) -> f64 {
    ((p / 2.0).exp2() * gamma((p + 1.0) / 2.0) / PI.sqrt()).powf(1.0 / p)
}

pub fn scalar_identity_check(kind: ScalarIdentity, samples: usize, seed: u64) -> Result<McReport> {
    check_samples(samples, 10_000)?;
    let mut stream = NormalStream::new(seed);
    match kind {
        ScalarIdentity::Mgf { lambda, sigma } => {
            if !(sigma > 0.0) || !lambda.is_finite() {
                return Err(Error::Precondition("need sigma > 0 and finite lambda".into()));
            }
            if (lambda * sigma).abs() > MAX_MGF_EXPONENT {
                return Err(Error::Precondition(format!(
                    "lambda * sigma = {} exceeds {MAX_MGF_EXPONENT}; the estimator variance explodes",
                    lambda * sigma
                )));
            }
            let mut m = Moments::default();
            for _ in 0..samples {
                m.push((lambda * sigma * stream.normal()).exp());
            }
            let target = (lambda * lambda * sigma * sigma / 2.0).exp();
            Ok(McReport::two_sided(m.mean, m.std_error(), samples, target, 1e-12 * target))
        }
        ScalarIdentity::TailIntegral { moment } => {
            if moment != 1 && moment != 2 {
                return Err(Error::Precondition("tail integral moment must be 1 or 2".into()));
            }
            let mut xs: Vec<f64> = (0..samples).map(|_| stream.normal().abs()).collect();
            let mut m = Moments::default();
            for &x in &xs {
                m.push(x.powi(moment as i32));
            }
            xs.sort_by(f64::total_cmp);
            let integral = tail_integral(&xs, moment, 1 << 14);
            let target = normal_moment_ratio(moment as f64).powi(moment as i32);
            Ok(McReport::two_sided(integral, m.std_error(), samples, target, 1e-12))
        }
        ScalarIdentity::MomentRatio { p } => {
            if !(1.0..=8.0).contains(&p) {
                return Err(Error::Precondition(format!("p = {p} must lie in [1, 8]")));
            }
            // delta method on R = A^{1/p} B^{-1/2}, A = mean |Z|^p, B = mean Z^2
            let zs: Vec<f64> = (0..samples).map(|_| stream.normal()).collect();
            let n = samples as f64;
            let a = zs.iter().map(|z| z.abs().powf(p)).sum::<f64>() / n;
            let b = zs.iter().map(|z| z * z).sum::<f64>() / n;
            let (mut vaa, mut vbb, mut vab) = (0.0, 0.0, 0.0);
            for z in &zs {
                let (da, db) = (z.abs().powf(p) - a, z * z - b);
                vaa += da * da;
                vbb += db * db;
                vab += da * db;
            }
            let (vaa, vbb, vab) = (vaa / (n - 1.0), vbb / (n - 1.0), vab / (n - 1.0));
            let ratio = a.powf(1.0 / p) / b.sqrt();
            let (ga, gb) = (ratio / (p * a), -ratio / (2.0 * b));
            let var = (ga * ga * vaa + 2.0 * ga * gb * vab + gb * gb * vbb).max(0.0);
            Ok(McReport::two_sided(ratio, (var / n).sqrt(), samples, normal_moment_ratio(p), 1e-12))
        }
    }
}

/// `moment * int_0^max t^{moment-1} P_emp(|g| > t) dt` by the trapezoid rule on `steps` cells.
fn tail_integral(sorted: &[f64], moment: u32, steps: usize) -> f64 {
    let n = sorted.len() as f64;
    let top = *sorted.last().unwrap_or(&0.0);
    if top == 0.0 {
        return 0.0;
    }
    let h = top / steps as f64;
    let survival = |t: f64| (sorted.len() - sorted.partition_point(|x| *x <= t)) as f64 / n;
    let integrand = |t: f64| t.powi(moment as i32 - 1) * survival(t);
    let mut s = 0.5 * (integrand(0.0) + integrand(top));
    for i in 1..steps {
        s += integrand(i as f64 * h);
    }
    moment as f64 * s * h
}

/// `F = J^{-1/2} sum_{j<=J} g_j T_{b_j} f` for one draw of `g_1..g_J`.
pub fn randomized_average(f: &TrigPoly, trans: &TranslationFamily, big_j: usize, seed: u64) -> Result<TrigPoly> {
    if big_j == 0 {
        return Err(Error::Precondition("J must be at least 1".into()));
    }
    let mut stream = NormalStream::new(seed);
    let g: Vec<f64> = (0..big_j).map(|_| stream.normal()).collect();
    let scale = 1.0 / (big_j as f64).sqrt();
    Ok(TrigPoly::from_terms(f.terms().map(|(k, c)| {
        let mut acc = Accumulator::default();
        for (j, gj) in g.iter().enumerate() {
            acc.add(unit(trans.phase(j + 1, k)) * *gj);
        }
        (k.clone(), c * acc.value() * scale)
    })))
}

/// Rows `A[n][j] = J^{-1/2} (S_n f)(x + b_j)` at the rational point `x = p / q`.
///
/// For real `f` the Gaussian process `sum_j A[n][j] g_j` is `S_n F(x, .)` with `F`
/// the randomized average of `f`, so `d_G(n, n')^2` averaged over `x` equals
/// `||S_n f - S_n' f||_2^2`.
pub fn orbit_bridge_family(
    f: &TrigPoly,
    family: &AveragingFamily,
    trans: &TranslationFamily,
    ns: &[usize],
    big_j: usize,
    x: (u64, u64),
) -> Result<GaussianFamily> {
    let images = orbit_images(f, family, ns)?;
    bridge_rows(&images, trans, big_j, x)
}

fn bridge_rows(images: &[TrigPoly], trans: &TranslationFamily, big_j: usize, (p, q): (u64, u64)) -> Result<GaussianFamily> {
    if big_j == 0 || q == 0 {
        return Err(Error::Precondition("J and the grid denominator must be positive".into()));
    }
    let scale = 1.0 / (big_j as f64).sqrt();
    let rows = images
        .iter()
        .map(|img| {
            (1..=big_j)
                .map(|j| {
                    let value = translated_value(img, trans, j, p, q);
                    value.re * scale
                })
                .collect()
        })
        .collect();
    GaussianFamily::new(rows)
}

/// `(T_{b_j} h)(p / q)` with every phase reduced exactly.
fn translated_value(h: &TrigPoly, trans: &TranslationFamily, j: usize, p: u64, q: u64) -> Complex64 {
    let mut acc = Accumulator::default();
    for (k, c) in h.terms() {
        let at_x = Magnitude::new(&(k * BigInt::from(p))).frac_over(q);
        acc.add(c * unit(at_x + trans.phase(j, k)));
    }
    acc.value()
}

/// `q^{-1} sum_{p<q} d_G(n, n')^2` for the bridge families at `x = p / q`.
///
/// Exact (up to rounding) when `q` exceeds twice the largest frequency of `f`.
pub fn bridge_mean_square_metric(
    f: &TrigPoly,
    family: &AveragingFamily,
    trans: &TranslationFamily,
    ns: &[usize],
    big_j: usize,
    q: u64,
) -> Result<Vec<Vec<f64>>> {
    let images = orbit_images(f, family, ns)?;
    let size = ns.len();
    let mut sum = vec![vec![0.0; size]; size];
    for p in 0..q {
        let fam = bridge_rows(&images, trans, big_j, (p, q))?;
        let d = exact_metric(&fam)?;
        for (i, row) in sum.iter_mut().enumerate() {
            for (j, s) in row.iter_mut().enumerate() {
                *s += d.dist(i, j) * d.dist(i, j);
            }
        }
    }
    for v in sum.iter_mut().flatten() {
        *v /= q as f64;
    }
    Ok(sum)
}

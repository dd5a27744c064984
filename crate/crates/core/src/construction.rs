//! Certified construction of a bounded function whose moving-average orbit is
//! `1/40`-separated in `r0` places.
//!
//! The pipeline is
//!
//! 1. [`find_certificate`]: window lengths `J_1 < .. < J_r` and frequency steps
//!    `m_1..m_r` such that for every `alpha in {0,1}^r`, with
//!    `n(alpha) = sum_s alpha_s m_s` and `beta_s = J_s^{-1} sum_{j<=J_s} e^{2 pi i a_j n(alpha)}`,
//!    `|1 - beta_s| < 1/10` when `alpha_s = 0` and `|1 - beta_s| > 1/2` when `alpha_s = 1`;
//! 2. [`build_g`]: `g = 2^{-r/2} sum_alpha e^{2 pi i n(alpha) x}`, a unit vector;
//! 3. [`separation_matrix`]: the orbit points `S_{J_s} g` are pairwise more than `1/5` apart;
//! 4. [`select_subfamily`]: either the real or the imaginary parts keep `r0` of them
//!    pairwise more than `1/20` apart, provided `r = 4 r0^2 + 2 r0`;
//! 5. [`assemble_counterexample`]: `f` is that part of `g`, and the exact packing
//!    number of its orbit metric at `1/40` certifies `N_f(1/40) >= r0`.
//!
//! Search strategy. Level `s` only tries steps `m_s = L_{s-1} q`, where `L_{s-1}` is the
//! lcm of the denominators of `a_1..a_{J_{s-1}}`. Every phase `a_j m_s` with `j <= J_{s-1}`
//! is then exactly an integer, so the verdicts of the lower windows never change when
//! higher levels are added. Level `s` picks the smallest window `J_s` that is blind
//! (deviation `< 1/10`) to every sum of lower steps and a `q` that triggers it
//! (deviation `> 3/4` alone and `> 1/2` on top of every lower sum).

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use num_bigint::{BigInt, BigUint};
use num_complex::Complex64;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase::{unit, Accumulator, Magnitude};
use crate::pseudometric::{packing_number, FinitePseudoMetric, Mode};
use crate::torus::{
    de_bigint_vec, multiplier_checkpoints_mag, orbit_images, orbit_metric, ser_bigint_vec,
    AveragingFamily, Part, TrigPoly,
};

/// Deviation an untriggered window must stay below.
pub const ZERO_THRESHOLD: f64 = 0.1;
/// Deviation a triggered window must exceed.
pub const ONE_THRESHOLD: f64 = 0.5;
/// Deviation a fresh step must reach on its own window during search.
pub const TRIGGER_THRESHOLD: f64 = 0.75;
/// Slack applied to every threshold comparison.
pub const SAFETY: f64 = 1e-9;
/// Lower bound on `|beta_s - beta_t|` whenever `alpha_s != alpha_t`.
pub const PAIR_GAP: f64 = ONE_THRESHOLD - ZERO_THRESHOLD;
/// Required separation of the orbit points of `g`.
pub const G_SEPARATION: f64 = 0.2;
/// Required separation of the selected orbit points of `f`.
pub const F_SEPARATION: f64 = 0.05;
/// Scale at which the entropy of `f`'s orbit is certified.
pub const ENTROPY_SCALE: f64 = 1.0 / 40.0;
/// Default number of sampled vectors in sampled verification.
pub const DEFAULT_SAMPLES: usize = 4096;
/// Default cap on `r` for full verification; overridden by `ENTROPYLAB_MAX_FULL_R`.
pub const DEFAULT_MAX_FULL_R: usize = 22;

/// `(2/5) / sqrt 2`, the floor on `||S_{J_s} g - S_{J_t} g||` implied by the thresholds.
pub fn separation_floor() -> f64 {
    PAIR_GAP / std::f64::consts::SQRT_2
}

/// Cap on `r` for full verification and for materializing `g`.
pub fn max_full_r() -> usize {
    std::env::var("ENTROPYLAB_MAX_FULL_R")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(DEFAULT_MAX_FULL_R)
        .min(40)
}

/// `r = 4 r0^2 + 2 r0`, the number of levels needed to keep `r0` separated parts.
pub fn levels_for(r0: usize) -> usize {
    4 * r0 * r0 + 2 * r0
}

/// A vector in `{0,1}^r`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AlphaVector {
    bits: Vec<u8>,
}

impl AlphaVector {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if bits.iter().any(|b| *b > 1) {
            return Err(Error::Precondition("alpha entries must be 0 or 1".into()));
        }
        Ok(Self { bits })
    }

    /// Bit `s` of `index` is `alpha_{s+1}`.
    pub fn from_index(index: u64, r: usize) -> Self {
        Self { bits: (0..r).map(|s| ((index >> s) & 1) as u8).collect() }
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// `n(alpha) = sum_s alpha_s m_s`.
    pub fn frequency(&self, m: &[BigInt]) -> BigInt {
        self.bits
            .iter()
            .zip(m)
            .filter(|(b, _)| **b == 1)
            .fold(BigInt::zero(), |acc, (_, ms)| acc + ms)
    }
}

impl fmt::Display for AlphaVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.bits {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

/// Extremes of the verified deviations at one level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelMargin {
    /// Largest `|1 - beta_s|` over vectors with `alpha_s = 0` (must be `< 1/10`).
    pub max_zero_deviation: f64,
    /// Smallest `|1 - beta_s|` over vectors with `alpha_s = 1` (must be `> 1/2`).
    pub min_one_deviation: f64,
}

impl Default for LevelMargin {
    fn default() -> Self {
        Self { max_zero_deviation: 0.0, min_one_deviation: f64::INFINITY }
    }
}

impl LevelMargin {
    fn merge(self, other: Self) -> Self {
        Self {
            max_zero_deviation: self.max_zero_deviation.max(other.max_zero_deviation),
            min_one_deviation: self.min_one_deviation.min(other.min_one_deviation),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Margins {
    pub worst_zero_case: f64,
    pub worst_one_case: f64,
    pub per_s: Vec<LevelMargin>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerifiedMode {
    Full,
    Sampled,
}

/// Window lengths and frequency steps together with the margins they were verified at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub r: usize,
    #[serde(rename = "J")]
    pub windows: Vec<usize>,
    #[serde(serialize_with = "ser_bigint_vec", deserialize_with = "de_bigint_vec")]
    pub m: Vec<BigInt>,
    pub family: AveragingFamily,
    pub margins: Margins,
    pub verified_mode: VerifiedMode,
    pub seed: u64,
}

impl Certificate {
    /// Checks the structural invariants (lengths, increasing windows within the family).
    pub fn check_shape(&self) -> Result<()> {
        if self.r == 0 {
            return Err(Error::Precondition("r must be at least 1".into()));
        }
        if self.windows.len() != self.r || self.m.len() != self.r {
            return Err(Error::Precondition(format!(
                "expected {} windows and steps, got {} and {}",
                self.r,
                self.windows.len(),
                self.m.len()
            )));
        }
        if self.windows[0] == 0 || self.windows.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Precondition("windows must be strictly increasing and positive".into()));
        }
        let top = *self.windows.last().unwrap();
        if top > self.family.length() {
            return Err(Error::IndexOutOfRange { index: top, length: self.family.length() });
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cert: Self = serde_json::from_str(s)?;
        cert.check_shape()?;
        Ok(cert)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum VerifyMode {
    Full,
    Sampled { count: usize, seed: u64 },
}

impl FromStr for VerifyMode {
    type Err = Error;

    /// `full`, `sampled` or `sampled:N` (seed 0).
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "sampled" => Ok(Self::Sampled { count: DEFAULT_SAMPLES, seed: 0 }),
            _ => {
                let count = s
                    .strip_prefix("sampled:")
                    .and_then(|c| c.parse::<usize>().ok())
                    .filter(|c| *c > 0)
                    .ok_or_else(|| Error::Parse(format!("unknown verification mode {s:?}")))?;
                Ok(Self::Sampled { count, seed: 0 })
            }
        }
    }
}

/// One violated inequality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub alpha: AlphaVector,
    /// 1-based level, or the first level of a violating pair.
    pub s: usize,
    /// Second level of a pair violation.
    pub t: Option<usize>,
    pub value: f64,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// `alpha_s = 0` but `|1 - beta_s| >= 1/10`.
    ZeroCase,
    /// `alpha_s = 1` but `|1 - beta_s| <= 1/2`.
    OneCase,
    /// `alpha_s != alpha_t` but `|beta_s - beta_t| <= 2/5`.
    PairGap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub mode: VerifyMode,
    pub vectors_checked: usize,
    pub per_s: Vec<LevelMargin>,
    pub worst_zero_case: f64,
    pub worst_one_case: f64,
    /// Smallest `|beta_s - beta_t|` over checked pairs with `alpha_s != alpha_t`.
    pub min_pair_gap: f64,
    pub pairs_checked: u64,
    pub injective: bool,
    /// First violations found, capped at a few dozen.
    pub violations: Vec<Violation>,
    pub violation_count: u64,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.injective && self.violation_count == 0
    }

    pub fn margins(&self) -> Margins {
        Margins {
            worst_zero_case: self.worst_zero_case,
            worst_one_case: self.worst_one_case,
            per_s: self.per_s.clone(),
        }
    }

    /// Short human-readable reason for a failed report.
    pub fn describe_failure(&self) -> String {
        if !self.injective {
            return "n(alpha) is not injective".into();
        }
        match self.violations.first() {
            Some(v) => {
                let which = match (v.kind, v.t) {
                    (ViolationKind::PairGap, Some(t)) => format!("pair gap at s={}, t={t}", v.s),
                    (ViolationKind::ZeroCase, _) => format!("zero case at s={}", v.s),
                    _ => format!("one case at s={}", v.s),
                };
                format!(
                    "{} violations; first: alpha={} {which} value={:.12}",
                    self.violation_count, v.alpha, v.value
                )
            }
            None => "no violations".into(),
        }
    }
}

const MAX_LISTED_VIOLATIONS: usize = 32;

#[derive(Default)]
struct Partial {
    per_s: Vec<LevelMargin>,
    min_pair_gap: f64,
    pairs: u64,
    violations: Vec<Violation>,
    count: u64,
    table: Vec<(usize, Vec<Complex64>)>,
}

impl Partial {
    fn new(r: usize) -> Self {
        Self {
            per_s: vec![LevelMargin::default(); r],
            min_pair_gap: f64::INFINITY,
            ..Default::default()
        }
    }

    fn push(&mut self, v: Violation) {
        self.count += 1;
        if self.violations.len() < MAX_LISTED_VIOLATIONS {
            self.violations.push(v);
        }
    }

    fn absorb(&mut self, alpha: &AlphaVector, betas: &[Complex64]) {
        let bits = alpha.bits();
        for (s, beta) in betas.iter().enumerate() {
            let dev = (Complex64::new(1.0, 0.0) - beta).norm();
            let lm = &mut self.per_s[s];
            if bits[s] == 0 {
                lm.max_zero_deviation = lm.max_zero_deviation.max(dev);
                if dev >= ZERO_THRESHOLD - SAFETY {
                    self.push(Violation {
                        alpha: alpha.clone(),
                        s: s + 1,
                        t: None,
                        value: dev,
                        kind: ViolationKind::ZeroCase,
                    });
                }
            } else {
                lm.min_one_deviation = lm.min_one_deviation.min(dev);
                if dev <= ONE_THRESHOLD + SAFETY {
                    self.push(Violation {
                        alpha: alpha.clone(),
                        s: s + 1,
                        t: None,
                        value: dev,
                        kind: ViolationKind::OneCase,
                    });
                }
            }
        }
        for s in 0..betas.len() {
            for t in s + 1..betas.len() {
                if bits[s] != bits[t] {
                    let gap = (betas[s] - betas[t]).norm();
                    self.pairs += 1;
                    self.min_pair_gap = self.min_pair_gap.min(gap);
                    if gap <= PAIR_GAP + SAFETY {
                        self.push(Violation {
                            alpha: alpha.clone(),
                            s: s + 1,
                            t: Some(t + 1),
                            value: gap,
                            kind: ViolationKind::PairGap,
                        });
                    }
                }
            }
        }
    }

    fn merge(mut self, other: Self) -> Self {
        for (a, b) in self.per_s.iter_mut().zip(other.per_s) {
            *a = a.merge(b);
        }
        self.min_pair_gap = self.min_pair_gap.min(other.min_pair_gap);
        self.pairs += other.pairs;
        self.count += other.count;
        // each side holds its own first violations, so sorting keeps the global first ones
        // whatever way the work was split
        self.violations.extend(other.violations);
        self.violations.sort_by(|a, b| {
            a.alpha.bits().iter().rev().cmp(b.alpha.bits().iter().rev()).then(a.s.cmp(&b.s)).then(a.t.cmp(&b.t))
        });
        self.violations.truncate(MAX_LISTED_VIOLATIONS);
        self.table.extend(other.table);
        self
    }
}

/// All `2^r` frequencies `n(alpha)`, indexed so that bit `s` of the index is `alpha_{s+1}`.
pub fn all_frequencies(m: &[BigInt]) -> Vec<BigInt> {
    let mut n = vec![BigInt::zero()];
    for ms in m {
        let upper: Vec<BigInt> = n.iter().map(|x| x + ms).collect();
        n.extend(upper);
    }
    n
}

/// Checks every level threshold and the pairwise multiplier gap.
///
/// Full mode enumerates all of `{0,1}^r` (requires `r <= max_full_r()`); sampled mode
/// draws `count` vectors from a seeded generator. The report lists the offending
/// `(alpha, s)` pairs when something fails; `Err` is reserved for unusable input.
pub fn verify_certificate(cert: &Certificate, mode: VerifyMode) -> Result<VerificationReport> {
    run_verification(cert, mode, false).map(|(report, _)| report)
}

/// Largest `2^r * r` for which full verification keeps the multiplier table.
const TABLE_CAP: usize = 1 << 22;

/// `table[index][s] = beta_{s+1}(n(alpha))` with bit `s` of `index` equal to `alpha_{s+1}`.
type MultiplierTable = Vec<Vec<Complex64>>;

fn run_verification(
    cert: &Certificate,
    mode: VerifyMode,
    keep_table: bool,
) -> Result<(VerificationReport, Option<MultiplierTable>)> {
    cert.check_shape()?;
    let r = cert.r;
    let (alphas, freqs): (Vec<AlphaVector>, Vec<BigInt>) = match mode {
        VerifyMode::Full => {
            let cap = max_full_r();
            if r > cap {
                return Err(Error::Precondition(format!(
                    "full verification needs r <= {cap} (ENTROPYLAB_MAX_FULL_R), got r = {r}"
                )));
            }
            let freqs = all_frequencies(&cert.m);
            let alphas = (0..1u64 << r).map(|i| AlphaVector::from_index(i, r)).collect();
            (alphas, freqs)
        }
        VerifyMode::Sampled { count, seed } => {
            if count == 0 {
                return Err(Error::Precondition("sample count must be positive".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let alphas: Vec<AlphaVector> = (0..count)
                .map(|_| AlphaVector { bits: (0..r).map(|_| rng.gen_range(0..2u8)).collect() })
                .collect();
            let freqs = alphas.iter().map(|a| a.frequency(&cert.m)).collect();
            (alphas, freqs)
        }
    };

    let injective = match mode {
        VerifyMode::Full => {
            let mut seen = HashSet::with_capacity(freqs.len());
            freqs.iter().all(|n| seen.insert(n))
        }
        VerifyMode::Sampled { .. } => {
            let mut seen = std::collections::HashMap::with_capacity(freqs.len());
            alphas.iter().zip(&freqs).all(|(a, n)| match seen.insert(n, a) {
                Some(prev) => prev == a,
                None => true,
            })
        }
    };

    let family = &cert.family;
    let windows = &cert.windows;
    let keep = keep_table && mode == VerifyMode::Full && (1usize << r) * r <= TABLE_CAP;
    let mut partial = alphas
        .par_iter()
        .zip(freqs.par_iter())
        .enumerate()
        .try_fold(
            || Partial::new(r),
            |mut acc, (index, (alpha, n))| -> Result<Partial> {
                let betas = multiplier_checkpoints_mag(family, &Magnitude::new(n), windows)?;
                acc.absorb(alpha, &betas);
                if keep {
                    acc.table.push((index, betas));
                }
                Ok(acc)
            },
        )
        .try_reduce(|| Partial::new(r), |a, b| Ok(a.merge(b)))?;
    let table = keep.then(|| {
        partial.table.sort_by_key(|(i, _)| *i);
        std::mem::take(&mut partial.table).into_iter().map(|(_, b)| b).collect()
    });

    let worst_zero_case = partial.per_s.iter().map(|m| m.max_zero_deviation).fold(0.0, f64::max);
    let worst_one_case =
        partial.per_s.iter().map(|m| m.min_one_deviation).fold(f64::INFINITY, f64::min);
    let report = VerificationReport {
        mode,
        vectors_checked: alphas.len(),
        per_s: partial.per_s,
        worst_zero_case,
        worst_one_case,
        min_pair_gap: partial.min_pair_gap,
        pairs_checked: partial.pairs,
        injective,
        violations: partial.violations,
        violation_count: partial.count,
    };
    Ok((report, table))
}

/// A certificate that passed [`verify_certificate`], with the report it passed.
#[derive(Clone, PartialEq)]
pub struct VerifiedCertificate {
    cert: Certificate,
    report: VerificationReport,
    table: Option<std::sync::Arc<MultiplierTable>>,
}

impl VerifiedCertificate {
    /// Verifies `cert` and records the resulting margins in it.
    pub fn verify(mut cert: Certificate, mode: VerifyMode) -> Result<Self> {
        let (report, table) = run_verification(&cert, mode, true)?;
        if !report.passed() {
            return Err(Error::VerificationFailed(report.describe_failure()));
        }
        cert.margins = report.margins();
        cert.verified_mode = match mode {
            VerifyMode::Full => VerifiedMode::Full,
            VerifyMode::Sampled { .. } => VerifiedMode::Sampled,
        };
        Ok(Self { cert, report, table: table.map(std::sync::Arc::new) })
    }

    pub fn certificate(&self) -> &Certificate {
        &self.cert
    }

    pub fn report(&self) -> &VerificationReport {
        &self.report
    }

    pub fn into_certificate(self) -> Certificate {
        self.cert
    }
}

impl fmt::Debug for VerifiedCertificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VerifiedCertificate")
            .field("cert", &self.cert)
            .field("report", &self.report)
            .finish_non_exhaustive()
    }
}

impl std::ops::Deref for VerifiedCertificate {
    type Target = Certificate;

    fn deref(&self) -> &Certificate {
        &self.cert
    }
}

/// Every level scans at least this many windows (subject to `max_j`).
pub const MIN_SCAN: usize = 1024;

/// Budget for [`find_certificate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchLimits {
    /// Small multipliers `q = 1..=max_m` tried at every level.
    pub max_m: u64,
    /// Hard cap on any window length.
    pub max_j: usize,
    /// Level `s` scans windows up to `max(MIN_SCAN, growth * (J_{s-1} + 10))`.
    pub growth: usize,
    /// Blind windows tried with bit-pattern multipliers per level.
    pub pattern_windows: usize,
    /// Seeded random bit patterns tried per window.
    pub random_patterns: usize,
    pub seed: u64,
}

impl Default for SearchLimits {
    fn default() -> Self {
        Self {
            max_m: 16,
            max_j: 1 << 22,
            growth: 16,
            pattern_windows: 50,
            random_patterns: 2,
            seed: 0,
        }
    }
}

/// Deviation `|1 - beta_J(k)|` for every `J` in `1..=upto`.
fn deviation_prefix(family: &AveragingFamily, k: &Magnitude, upto: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(upto);
    for_each_deviation(family, k, upto, |_, d| out.push(d));
    out
}

/// Calls `visit(J, |1 - beta_J(k)|)` for `J = 1..=upto`.
#[inline]
fn for_each_deviation(family: &AveragingFamily, k: &Magnitude, upto: usize, mut visit: impl FnMut(usize, f64)) {
    let mut acc = Accumulator::default();
    for j in 1..=upto {
        acc.add(unit(family.phase(j, k)));
        let v = acc.value();
        let inv = 1.0 / j as f64;
        let (re, im) = (1.0 - v.re * inv, v.im * inv);
        visit(j, (re * re + im * im).sqrt());
    }
}

fn deviation_at(family: &AveragingFamily, k: &Magnitude, window: usize) -> f64 {
    let mut acc = Accumulator::default();
    for j in 1..=window {
        acc.add(unit(family.phase(j, k)));
    }
    (Complex64::new(1.0, 0.0) - acc.value() / window as f64).norm()
}

/// `0b1010...` with `bits` binary digits.
fn alternating_pattern(bits: usize) -> BigUint {
    if bits == 0 {
        return BigUint::zero();
    }
    // ones at positions bits-1, bits-3, ...
    let word = if (bits - 1) % 2 == 0 { 0x5555_5555u32 } else { 0xAAAA_AAAAu32 };
    let mut q = BigUint::from_slice(&vec![word; bits.div_ceil(32)]);
    let excess = q.bits().saturating_sub(bits as u64);
    if excess > 0 {
        q &= (BigUint::one() << bits) - BigUint::one();
    }
    q
}

fn random_pattern(bits: usize, rng: &mut ChaCha8Rng) -> BigUint {
    let words: Vec<u64> = (0..bits.div_ceil(64)).map(|_| rng.gen()).collect();
    let mut q = BigUint::from_slice(
        &words.iter().flat_map(|w| [*w as u32, (*w >> 32) as u32]).collect::<Vec<_>>(),
    );
    let excess = q.bits().saturating_sub(bits as u64);
    q >>= excess;
    q.set_bit(0, true);
    q.set_bit(bits.saturating_sub(1) as u64, true);
    q
}

struct Level<'a> {
    family: &'a AveragingFamily,
    lows: &'a [BigInt],
    lcm: BigInt,
    prev: usize,
    upper: usize,
    /// `max_n |1 - beta_J(n)|` over nonzero lower sums, indexed by `J - 1`.
    worst_low: Vec<f64>,
}

impl Level<'_> {
    fn blind(&self, window: usize) -> bool {
        window > self.prev && self.worst_low[window - 1] < ZERO_THRESHOLD - SAFETY
    }

    /// Smallest margin of `m` at `window` over the trigger and lower-sum conditions.
    fn trigger_margin(&self, m: &BigInt, window: usize) -> f64 {
        let own = deviation_at(self.family, &Magnitude::new(m), window) - TRIGGER_THRESHOLD;
        if own <= SAFETY {
            return own;
        }
        let lowest = self
            .lows
            .par_iter()
            .filter(|n| !n.is_zero())
            .map(|n| deviation_at(self.family, &Magnitude::new(&(n + m)), window))
            .reduce(|| f64::INFINITY, f64::min);
        own.min(lowest - ONE_THRESHOLD)
    }

    fn collides(&self, m: &BigInt, low_set: &HashSet<&BigInt>) -> bool {
        m.is_zero() || self.lows.iter().any(|n| low_set.contains(&(n + m)))
    }
}

/// Searches for a certificate with `r` levels and returns it fully verified.
///
/// Fails with [`Error::BudgetExhausted`] when a level has no blind window within its
/// scan range or no candidate step triggers one; the error carries the best margin seen.
pub fn find_certificate(
    family: &AveragingFamily,
    r: usize,
    limits: &SearchLimits,
) -> Result<VerifiedCertificate> {
    let mode = if r <= max_full_r() {
        VerifyMode::Full
    } else {
        VerifyMode::Sampled { count: DEFAULT_SAMPLES, seed: limits.seed }
    };
    find_certificate_in_mode(family, r, limits, mode)
}

/// [`find_certificate`] with an explicit final verification mode.
pub fn find_certificate_in_mode(
    family: &AveragingFamily,
    r: usize,
    limits: &SearchLimits,
    mode: VerifyMode,
) -> Result<VerifiedCertificate> {
    if r == 0 {
        return Err(Error::Precondition("r must be at least 1".into()));
    }
    if limits.max_j == 0 || limits.growth == 0 {
        return Err(Error::Precondition("search limits must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(limits.seed);
    let mut windows: Vec<usize> = Vec::with_capacity(r);
    let mut steps: Vec<BigInt> = Vec::with_capacity(r);
    let mut lows: Vec<BigInt> = vec![BigInt::zero()];

    for level in 1..=r {
        let prev = windows.last().copied().unwrap_or(0);
        let upper = limits
            .max_j
            .min(family.length())
            .min(MIN_SCAN.max((prev + 10).saturating_mul(limits.growth)));
        if upper <= prev {
            return Err(Error::BudgetExhausted {
                level,
                r,
                reason: format!("window cap {upper} leaves no room above J = {prev}"),
                best_margin: None,
            });
        }
        let low_mags: Vec<Magnitude> =
            lows.iter().filter(|n| !n.is_zero()).map(Magnitude::new).collect();
        let worst_low = low_mags
            .par_iter()
            .fold(
                || vec![0.0f64; upper],
                |mut acc, mag| {
                    for_each_deviation(family, mag, upper, |j, d| {
                        let a = &mut acc[j - 1];
                        *a = a.max(d);
                    });
                    acc
                },
            )
            .reduce(
                || vec![0.0f64; upper],
                |mut a, b| {
                    for (x, y) in a.iter_mut().zip(b) {
                        *x = x.max(y);
                    }
                    a
                },
            );
        let lcm = BigInt::from(family.denominator_lcm(prev));
        let lv = Level { family, lows: &lows, lcm, prev, upper, worst_low };
        let blind: Vec<usize> = (prev + 1..=upper).filter(|&w| lv.blind(w)).collect();
        if blind.is_empty() {
            let closest = lv.worst_low[prev..].iter().cloned().fold(f64::INFINITY, f64::min);
            return Err(Error::BudgetExhausted {
                level,
                r,
                reason: format!(
                    "no window in ({prev}, {upper}] is blind to the lower frequencies \
                     (smallest worst deviation {closest:.4})"
                ),
                best_margin: Some(ZERO_THRESHOLD - closest),
            });
        }
        let low_set: HashSet<&BigInt> = lows.iter().collect();
        let (window, step) = search_level(&lv, &blind, &low_set, limits, &mut rng).map_err(
            |best| Error::BudgetExhausted {
                level,
                r,
                reason: format!(
                    "no step triggers a blind window in ({prev}, {upper}] \
                     ({} blind windows, best margin {best:.4})",
                    blind.len()
                ),
                best_margin: Some(best),
            },
        )?;
        let mut next = lows.clone();
        next.extend(lows.iter().map(|n| n + &step));
        lows = next;
        windows.push(window);
        steps.push(step);
    }

    let cert = Certificate {
        r,
        windows,
        m: steps,
        family: family.clone(),
        margins: Margins { worst_zero_case: 0.0, worst_one_case: 0.0, per_s: Vec::new() },
        verified_mode: VerifiedMode::Full,
        seed: limits.seed,
    };
    VerifiedCertificate::verify(cert, mode)
        .map_err(|e| Error::ConstructionFault(format!("searched certificate failed verification: {e}")))
}

/// Returns the chosen `(J_s, m_s)` or the best margin seen.
fn search_level(
    lv: &Level<'_>,
    blind: &[usize],
    low_set: &HashSet<&BigInt>,
    limits: &SearchLimits,
    rng: &mut ChaCha8Rng,
) -> std::result::Result<(usize, BigInt), f64> {
    let mut best_margin = f64::NEG_INFINITY;
    let mut found: Option<(usize, BigInt)> = None;

    // Small multipliers: one prefix pass per q gives every window it triggers.
    let small: Vec<(usize, BigInt, f64)> = (1..=limits.max_m)
        .into_par_iter()
        .map(|q| {
            let m = &lv.lcm * BigInt::from(q);
            if lv.collides(&m, low_set) {
                return None;
            }
            let own = deviation_prefix(lv.family, &Magnitude::new(&m), lv.upper);
            let mut best = f64::NEG_INFINITY;
            for &w in blind {
                let own_margin = own[w - 1] - TRIGGER_THRESHOLD;
                if own_margin <= SAFETY {
                    best = best.max(own_margin);
                    continue;
                }
                let margin = lv.trigger_margin(&m, w);
                if margin > SAFETY {
                    return Some((w, m, margin));
                }
                best = best.max(margin);
            }
            Some((usize::MAX, m, best))
        })
        .flatten()
        .collect();
    for (w, m, margin) in small {
        if w != usize::MAX {
            if found.as_ref().is_none_or(|(fw, _)| w < *fw) {
                found = Some((w, m));
            }
        } else {
            best_margin = best_margin.max(margin);
        }
    }

    // Bit patterns sized to the window: only useful below the best small-multiplier window.
    let limit = found.as_ref().map_or(usize::MAX, |(w, _)| *w);
    for &w in blind.iter().take(limits.pattern_windows).filter(|w| **w < limit) {
        let bits = w - lv.prev;
        let mut patterns = vec![alternating_pattern(bits)];
        if bits > 1 {
            patterns.push(alternating_pattern(bits - 1));
        }
        patterns.extend((0..limits.random_patterns).map(|_| random_pattern(bits, rng)));
        for q in patterns {
            let m = &lv.lcm * BigInt::from(q);
            if lv.collides(&m, low_set) {
                continue;
            }
            let margin = lv.trigger_margin(&m, w);
            if margin > SAFETY {
                return Ok((w, m));
            }
            best_margin = best_margin.max(margin);
        }
    }
    found.ok_or(best_margin)
}

/// `g = 2^{-r/2} sum_alpha e^{2 pi i n(alpha) x}`.
pub fn build_g(cert: &VerifiedCertificate) -> Result<TrigPoly> {
    let cap = max_full_r();
    if cert.r > cap {
        return Err(Error::Precondition(format!("g has 2^{} terms, above the cap 2^{cap}", cert.r)));
    }
    let c = Complex64::new((-(cert.r as f64) / 2.0).exp2(), 0.0);
    let freqs = all_frequencies(&cert.m);
    let expected = freqs.len();
    let g = TrigPoly::from_terms(freqs.into_iter().map(|k| (k, c)));
    if g.len() != expected {
        return Err(Error::ConstructionFault(format!(
            "g has {} distinct frequencies, expected {expected}",
            g.len()
        )));
    }
    Ok(g)
}

/// Orbit points `S_{J_s} g` and their pairwise distances, checked against `1/5` and the floor.
pub fn separation(cert: &VerifiedCertificate, g: &TrigPoly) -> Result<(FinitePseudoMetric, Vec<TrigPoly>)> {
    let images = match &cert.table {
        // g's coefficient at n(alpha) is 2^{-r/2}; reuse the verified multipliers
        Some(table) if *g == build_g(cert)? => {
            let c = (-(cert.r as f64) / 2.0).exp2();
            let freqs = all_frequencies(&cert.m);
            (0..cert.r)
                .map(|s| {
                    TrigPoly::from_terms(
                        freqs.iter().zip(table.iter()).map(|(k, row)| (k.clone(), row[s] * c)),
                    )
                })
                .collect()
        }
        _ => orbit_images(g, &cert.family, &cert.windows)?,
    };
    let metric = FinitePseudoMetric::from_fn(images.len(), |s, t| images[s].l2_dist(&images[t]))?
        .with_labels(cert.windows.iter().map(|w| w.to_string()).collect())?;
    let floor = separation_floor();
    for s in 0..metric.size() {
        for t in s + 1..metric.size() {
            let d = metric.dist(s, t);
            if d <= G_SEPARATION || d < floor - SAFETY {
                return Err(Error::ConstructionFault(format!(
                    "||S_J g - S_J' g|| = {d:.12} at J = {}, J' = {} is below the floor {floor:.12}",
                    cert.windows[s], cert.windows[t]
                )));
            }
        }
    }
    Ok((metric, images))
}

/// Pairwise distances `||S_{J_s} g - S_{J_t} g||_2` over the certificate's windows.
pub fn separation_matrix(cert: &VerifiedCertificate, g: &TrigPoly) -> Result<FinitePseudoMetric> {
    separation(cert, g).map(|(m, _)| m)
}

/// `r0` functions whose real (or imaginary) parts stay more than a quarter of the gap apart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparatedFamily {
    pub part: Part,
    /// Positions (0-based) of the selected functions in the input list.
    pub positions: Vec<usize>,
    /// Window lengths `J_s` of the selected positions, when known.
    pub indices: Vec<usize>,
    pub functions: Vec<TrigPoly>,
    /// Smallest pairwise distance; `None` for a single function.
    pub min_gap: Option<f64>,
}

/// Picks `part` and `r0` inputs whose parts are pairwise more than `alpha_gap / 4` apart.
///
/// Requires `functions.len() == 4 r0^2 + 2 r0` and every pair of inputs more than
/// `alpha_gap` apart. Real parts are preferred; the lexicographically first valid
/// subset is returned.
pub fn select_subfamily(functions: &[TrigPoly], alpha_gap: f64, r0: usize) -> Result<SeparatedFamily> {
    if r0 == 0 {
        return Err(Error::Precondition("r0 must be at least 1".into()));
    }
    let r = functions.len();
    if r != levels_for(r0) {
        return Err(Error::Precondition(format!(
            "need exactly {} functions for r0 = {r0}, got {r}",
            levels_for(r0)
        )));
    }
    for s in 0..r {
        for t in s + 1..r {
            let d = functions[s].l2_dist(&functions[t]);
            if d <= alpha_gap {
                return Err(Error::Precondition(format!(
                    "functions {s} and {t} are only {d:.6} apart, need > {alpha_gap}"
                )));
            }
        }
    }
    let threshold = alpha_gap / 4.0;
    for part in [Part::Real, Part::Imaginary] {
        let parts: Vec<TrigPoly> = functions.iter().map(|h| h.component_part(part)).collect();
        let far: Vec<Vec<bool>> = (0..r)
            .map(|s| (0..r).map(|t| s != t && parts[s].l2_dist(&parts[t]) > threshold).collect())
            .collect();
        if let Some(positions) = first_clique(&far, r0) {
            let selected: Vec<TrigPoly> = positions.iter().map(|&i| parts[i].clone()).collect();
            let min_gap = min_pairwise(&selected);
            return Ok(SeparatedFamily {
                part,
                indices: Vec::new(),
                positions,
                functions: selected,
                min_gap,
            });
        }
    }
    Err(Error::ConstructionFault(format!(
        "neither part keeps {r0} of {r} functions more than {threshold} apart"
    )))
}

fn min_pairwise(fs: &[TrigPoly]) -> Option<f64> {
    let mut best: Option<f64> = None;
    for s in 0..fs.len() {
        for t in s + 1..fs.len() {
            let d = fs[s].l2_dist(&fs[t]);
            best = Some(best.map_or(d, |b: f64| b.min(d)));
        }
    }
    best
}

/// Lexicographically first `size`-subset that is pairwise adjacent in `adj`.
fn first_clique(adj: &[Vec<bool>], size: usize) -> Option<Vec<usize>> {
    fn extend(adj: &[Vec<bool>], size: usize, start: usize, chosen: &mut Vec<usize>) -> bool {
        if chosen.len() == size {
            return true;
        }
        for v in start..adj.len() {
            if adj.len() - v < size - chosen.len() {
                break;
            }
            if chosen.iter().all(|&u| adj[u][v]) {
                chosen.push(v);
                if extend(adj, size, v + 1, chosen) {
                    return true;
                }
                chosen.pop();
            }
        }
        false
    }
    let mut chosen = Vec::with_capacity(size);
    extend(adj, size, 0, &mut chosen).then_some(chosen)
}

/// Everything produced by [`assemble_counterexample`].
#[derive(Debug, Clone)]
pub struct Counterexample {
    pub f: TrigPoly,
    pub g: TrigPoly,
    pub witness: SeparatedFamily,
    pub cert: VerifiedCertificate,
    pub separation: FinitePseudoMetric,
    /// Orbit metric of `f` over the selected windows.
    pub witness_metric: FinitePseudoMetric,
    /// Exact packing number of `witness_metric` at `1/40`.
    pub packing_at_scale: usize,
}

impl Counterexample {
    pub fn f_norm(&self) -> f64 {
        self.f.l2_norm()
    }

    pub fn g_norm(&self) -> f64 {
        self.g.l2_norm()
    }

    /// `sum |c_k|`, a bound on `sup |f|`.
    pub fn sup_bound(&self) -> f64 {
        self.f.l1_coeff_norm()
    }
}

/// Runs the whole pipeline for `r0` separated orbit points.
pub fn assemble_counterexample(
    family: &AveragingFamily,
    r0: usize,
    limits: &SearchLimits,
) -> Result<Counterexample> {
    if r0 == 0 {
        return Err(Error::Precondition("r0 must be at least 1".into()));
    }
    let cert = find_certificate(family, levels_for(r0), limits)?;
    assemble_from_certificate(cert, r0)
}

/// Builds `g`, selects the witness and certifies the entropy of `f` for a given certificate.
pub fn assemble_from_certificate(cert: VerifiedCertificate, r0: usize) -> Result<Counterexample> {
    let g = build_g(&cert)?;
    let g_norm = g.l2_norm();
    if (g_norm - 1.0).abs() > 1e-12 {
        return Err(Error::ConstructionFault(format!("||g|| = {g_norm} is not 1")));
    }
    let (separation, images) = separation(&cert, &g)?;
    let mut witness = select_subfamily(&images, G_SEPARATION, r0)?;
    witness.indices = witness.positions.iter().map(|&p| cert.windows[p]).collect();
    if let Some(gap) = witness.min_gap {
        if gap <= F_SEPARATION {
            return Err(Error::ConstructionFault(format!("witness gap {gap} is not above 1/20")));
        }
    }
    let f = g.component_part(witness.part);
    if f.l2_norm() > 1.0 + 1e-12 {
        return Err(Error::ConstructionFault(format!("||f|| = {} exceeds 1", f.l2_norm())));
    }
    let witness_metric = orbit_metric(&f, &cert.family, &witness.indices)?;
    let packing_at_scale = packing_number(&witness_metric, ENTROPY_SCALE, Mode::Exact)?;
    if packing_at_scale < r0 {
        return Err(Error::ConstructionFault(format!(
            "packing number at 1/40 is {packing_at_scale}, below r0 = {r0}"
        )));
    }
    Ok(Counterexample { f, g, witness, cert, separation, witness_metric, packing_at_scale })
}

/// `(|ab - 1|, |a - 1| + |b - 1|)`; the first never exceeds the second when `|a| <= 1`.
pub fn product_deviation_bound(a: Complex64, b: Complex64) -> (f64, f64) {
    let one = Complex64::new(1.0, 0.0);
    ((a * b - one).norm(), (a - one).norm() + (b - one).norm())
}

/// `(Re(ab), |a - 1| + Re b)`; the first never exceeds the second when `|b| <= 1`.
pub fn real_part_bound(a: Complex64, b: Complex64) -> (f64, f64) {
    ((a * b).re, (a - Complex64::new(1.0, 0.0)).norm() + b.re)
}

/// `(|1 - e^{2 pi i lambda}|, 2 pi |lambda|)`.
pub fn phase_deviation_bound(lambda: f64) -> (f64, f64) {
    let z = Complex64::new(0.0, std::f64::consts::TAU * lambda).exp();
    ((Complex64::new(1.0, 0.0) - z).norm(), std::f64::consts::TAU * lambda.abs())
}

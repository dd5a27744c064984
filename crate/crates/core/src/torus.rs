//! Trigonometric polynomials on the circle `R/Z` and the operators acting on them.
//!
//! Every operator here is diagonal in frequency:
//!
//! * translation `T_b f(x) = f(x + b)` multiplies `c_k` by `e^{2 pi i k b}`;
//! * the moving average `S_n f(x) = n^{-1} sum_{j<=n} f(x + a_j)` multiplies
//!   `c_k` by `n^{-1} sum_{j<=n} e^{2 pi i a_j k}` (see [`multiplier_avg`]).
//!
//! Norms and distances are evaluated through Parseval on the coefficient map,
//! so they are exact up to floating point rounding of the coefficients.
//! Frequencies are arbitrary-precision integers and every phase `k * a mod 1`
//! is reduced exactly (see [`crate::phase`]).

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_complex::Complex64;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use rayon::prelude::*;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::phase::{unit, Accumulator, Dyadic, Magnitude};
use crate::pseudometric::FinitePseudoMetric;

/// Coefficients below this modulus are dropped on normalization.
pub const PRUNE_EPS: f64 = 1e-15;

/// Default stored length of the closed-form averaging families.
pub const DEFAULT_FAMILY_LENGTH: usize = 1 << 24;

/// Golden-ratio conjugate `(sqrt 5 - 1) / 2`, the default rotation number.
pub const GOLDEN_CONJUGATE: f64 = 0.618_033_988_749_894_9;

/// Finite map from integer frequency to complex coefficient.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrigPoly {
    coeffs: BTreeMap<BigInt, Complex64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    Real,
    Imaginary,
}

impl fmt::Display for Part {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Part::Real => "real",
            Part::Imaginary => "imaginary",
        })
    }
}

impl TrigPoly {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: Complex64) -> Self {
        Self::monomial(BigInt::zero(), c)
    }

    /// `c * e^{2 pi i k x}`.
    pub fn monomial(k: impl Into<BigInt>, c: Complex64) -> Self {
        Self::from_terms([(k.into(), c)])
    }

    /// Sums repeated frequencies and prunes negligible coefficients.
    pub fn from_terms<I, K>(terms: I) -> Self
    where
        I: IntoIterator<Item = (K, Complex64)>,
        K: Into<BigInt>,
    {
        let mut coeffs: BTreeMap<BigInt, Complex64> = BTreeMap::new();
        for (k, c) in terms {
            *coeffs.entry(k.into()).or_default() += c;
        }
        let mut p = Self { coeffs };
        p.normalize();
        p
    }

    fn normalize(&mut self) {
        self.coeffs.retain(|_, c| c.norm() >= PRUNE_EPS);
    }

    pub fn coeff(&self, k: &BigInt) -> Complex64 {
        self.coeffs.get(k).copied().unwrap_or_default()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&BigInt, &Complex64)> {
        self.coeffs.iter()
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Largest `|k|` in the support (0 for the zero polynomial).
    pub fn max_abs_frequency(&self) -> BigInt {
        self.coeffs.keys().map(|k| k.abs()).max().unwrap_or_default()
    }

    /// Coefficient sum of moduli, an upper bound for the sup norm.
    pub fn l1_coeff_norm(&self) -> f64 {
        self.coeffs.values().map(|c| c.norm()).sum()
    }

    /// `c_{-k} = conj(c_k)` for all `k`, within `tol` relative to the largest coefficient.
    pub fn is_real_within(&self, tol: f64) -> bool {
        let scale = self.coeffs.values().map(|c| c.norm()).fold(0.0, f64::max).max(1.0);
        let keys: Vec<&BigInt> = self.coeffs.keys().collect();
        keys.iter().all(|k| {
            let mirror = self.coeff(&-(*k).clone());
            (self.coeff(k) - mirror.conj()).norm() <= tol * scale
        })
    }

    pub fn is_real(&self) -> bool {
        self.is_real_within(1e-12)
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self::from_terms(self.coeffs.iter().map(|(k, c)| (k.clone(), c * s)))
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::from_terms(self.terms().chain(other.terms()).map(|(k, c)| (k.clone(), *c)))
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self::from_terms(
            self.terms()
                .map(|(k, c)| (k.clone(), *c))
                .chain(other.terms().map(|(k, c)| (k.clone(), -c))),
        )
    }

    /// Coefficient convolution.
    pub fn multiply(&self, other: &Self) -> Self {
        Self::from_terms(self.terms().flat_map(|(k1, c1)| {
            other.terms().map(move |(k2, c2)| (k1 + k2, c1 * c2))
        }))
    }

    /// `sqrt(sum |c_k|^2)`.
    pub fn l2_norm(&self) -> f64 {
        norm_of(self.coeffs.values().copied())
    }

    pub fn l2_dist(&self, other: &Self) -> f64 {
        let mut acc = Vec::with_capacity(self.len() + other.len());
        let mut a = self.coeffs.iter().peekable();
        let mut b = other.coeffs.iter().peekable();
        loop {
            match (a.peek(), b.peek()) {
                (Some((ka, ca)), Some((kb, cb))) => match ka.cmp(kb) {
                    std::cmp::Ordering::Less => {
                        acc.push(**ca);
                        a.next();
                    }
                    std::cmp::Ordering::Greater => {
                        acc.push(-**cb);
                        b.next();
                    }
                    std::cmp::Ordering::Equal => {
                        acc.push(**ca - **cb);
                        a.next();
                        b.next();
                    }
                },
                (Some((_, ca)), None) => {
                    acc.push(**ca);
                    a.next();
                }
                (None, Some((_, cb))) => {
                    acc.push(-**cb);
                    b.next();
                }
                (None, None) => break,
            }
        }
        norm_of(acc.into_iter())
    }

    /// `sum c_k e^{2 pi i k x}` with the phase `k x` reduced exactly.
    pub fn eval(&self, x: f64) -> Complex64 {
        let mut acc = Accumulator::default();
        for (k, c) in &self.coeffs {
            acc.add(c * unit(Magnitude::new(k).frac_mul_f64(x)));
        }
        acc.value()
    }

    /// Evaluation at the rational point `p / q`.
    pub fn eval_rational(&self, p: u64, q: u64) -> Complex64 {
        let mut acc = Accumulator::default();
        for (k, c) in &self.coeffs {
            let kp = k * BigInt::from(p);
            acc.add(c * unit(Magnitude::new(&kp).frac_over(q)));
        }
        acc.value()
    }

    /// Translation `f(x + b)`.
    pub fn apply_t(&self, b: f64) -> Self {
        Self::from_terms(
            self.coeffs
                .iter()
                .map(|(k, c)| (k.clone(), c * unit(Magnitude::new(k).frac_mul_f64(b)))),
        )
    }

    /// Moving average `S_n f`.
    pub fn apply_s(&self, family: &AveragingFamily, n: usize) -> Result<Self> {
        family.check_index(n)?;
        let terms = self
            .coeffs
            .iter()
            .map(|(k, c)| Ok((k.clone(), c * multiplier_avg(family, n, k)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_terms(terms))
    }

    /// Real part `(c_k + conj c_{-k}) / 2` or imaginary part `(c_k - conj c_{-k}) / 2i`.
    pub fn component_part(&self, part: Part) -> Self {
        let half = Complex64::new(0.5, 0.0);
        let factor = match part {
            Part::Real => half,
            Part::Imaginary => Complex64::new(0.0, -0.5),
        };
        let sign = match part {
            Part::Real => 1.0,
            Part::Imaginary => -1.0,
        };
        let mut keys: Vec<BigInt> = self.coeffs.keys().cloned().collect();
        keys.extend(self.coeffs.keys().map(|k| -k));
        keys.sort();
        keys.dedup();
        Self::from_terms(keys.into_iter().map(|k| {
            let ck = self.coeff(&k);
            let mirror = self.coeff(&-&k).conj();
            let c = (ck + mirror * sign) * factor;
            (k, c)
        }))
    }

    /// `(1/J) sum_{j<=J} T_{b_j} f` for `b_j = (j - 1) w`.
    pub fn cesaro_t_average(&self, trans: &TranslationFamily, big_j: usize) -> Result<Self> {
        if big_j == 0 {
            return Err(Error::Precondition("J must be at least 1".into()));
        }
        Ok(Self::from_terms(self.coeffs.iter().map(|(k, c)| {
            (k.clone(), c * trans.averaged_character(k, big_j))
        })))
    }
}

fn norm_of(values: impl Iterator<Item = Complex64>) -> f64 {
    // scaled sum of squares keeps huge and tiny coefficients accurate
    let v: Vec<f64> = values.map(|c| c.norm()).collect();
    let scale = v.iter().cloned().fold(0.0, f64::max);
    if scale == 0.0 {
        return 0.0;
    }
    let mut s = 0.0;
    let mut comp = 0.0;
    for x in v {
        let t = (x / scale) * (x / scale);
        let y = t - comp;
        let z = s + y;
        comp = (z - s) - y;
        s = z;
    }
    scale * s.sqrt()
}

/// Free-function forms of the operator API.
pub fn apply_s(f: &TrigPoly, family: &AveragingFamily, n: usize) -> Result<TrigPoly> {
    f.apply_s(family, n)
}

pub fn apply_t(f: &TrigPoly, b: f64) -> TrigPoly {
    f.apply_t(b)
}

pub fn multiply(f: &TrigPoly, g: &TrigPoly) -> TrigPoly {
    f.multiply(g)
}

pub fn l2_norm(f: &TrigPoly) -> f64 {
    f.l2_norm()
}

pub fn l2_dist(f: &TrigPoly, g: &TrigPoly) -> f64 {
    f.l2_dist(g)
}

pub fn component_part(f: &TrigPoly, part: Part) -> TrigPoly {
    f.component_part(part)
}

pub fn eval(f: &TrigPoly, x: f64) -> Complex64 {
    f.eval(x)
}

pub fn cesaro_t_average(f: &TrigPoly, trans: &TranslationFamily, big_j: usize) -> Result<TrigPoly> {
    f.cesaro_t_average(trans, big_j)
}

#[derive(Serialize, Deserialize)]
struct TermJson {
    #[serde(serialize_with = "ser_bigint", deserialize_with = "de_bigint")]
    k: BigInt,
    re: f64,
    im: f64,
}

impl Serialize for TrigPoly {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let terms: Vec<TermJson> = self
            .coeffs
            .iter()
            .map(|(k, c)| TermJson { k: k.clone(), re: c.re, im: c.im })
            .collect();
        terms.serialize(s)
    }
}

impl<'de> Deserialize<'de> for TrigPoly {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let terms = Vec::<TermJson>::deserialize(d)?;
        let mut coeffs = BTreeMap::new();
        for t in terms {
            if coeffs.insert(t.k.clone(), Complex64::new(t.re, t.im)).is_some() {
                return Err(D::Error::custom(format!("duplicate frequency {}", t.k)));
            }
        }
        Ok(Self { coeffs })
    }
}

/// Writes an integer of any size as a bare JSON number.
pub(crate) fn ser_bigint<S: Serializer>(k: &BigInt, s: S) -> std::result::Result<S::Ok, S::Error> {
    let n: serde_json::Number = k.to_string().parse().map_err(serde::ser::Error::custom)?;
    n.serialize(s)
}

/// Accepts a JSON integer of any size or a decimal string.
pub(crate) fn de_bigint<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<BigInt, D::Error> {
    let v = serde_json::Value::deserialize(d)?;
    let text = match &v {
        serde_json::Value::Number(n) => n.to_string(),
        serde_json::Value::String(s) => s.clone(),
        other => return Err(D::Error::custom(format!("expected integer, got {other}"))),
    };
    text.parse::<BigInt>()
        .map_err(|e| D::Error::custom(format!("bad integer {text:?}: {e}")))
}

pub(crate) fn ser_bigint_vec<S: Serializer>(
    ks: &[BigInt],
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(ks.len()))?;
    for k in ks {
        let n: serde_json::Number = k.to_string().parse().map_err(serde::ser::Error::custom)?;
        seq.serialize_element(&n)?;
    }
    seq.end()
}

pub(crate) fn de_bigint_vec<'de, D: Deserializer<'de>>(
    d: D,
) -> std::result::Result<Vec<BigInt>, D::Error> {
    #[derive(Deserialize)]
    struct Wrap(#[serde(deserialize_with = "de_bigint")] BigInt);
    Ok(Vec::<Wrap>::deserialize(d)?.into_iter().map(|w| w.0).collect())
}

/// Translation amounts `a_j` of the moving averages.
#[derive(Debug, Clone, PartialEq)]
pub enum FamilyKind {
    /// `a_j = 1 / j`
    Reciprocal,
    /// `a_j = 2^{-j}`
    Dyadic,
    /// `a_j` given explicitly; each `f64` is used as the exact dyadic rational it encodes.
    Explicit(Vec<f64>),
}

/// A nonzero sequence `(a_j)` tending to zero, usable up to index `length`.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragingFamily {
    kind: FamilyKind,
    length: usize,
}

#[derive(Serialize, Deserialize)]
struct FamilyJson {
    kind: String,
    #[serde(default)]
    values: Vec<f64>,
    length: usize,
}

impl Serialize for AveragingFamily {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let (kind, values) = match &self.kind {
            FamilyKind::Reciprocal => ("reciprocal", Vec::new()),
            FamilyKind::Dyadic => ("dyadic", Vec::new()),
            FamilyKind::Explicit(v) => ("explicit", v.clone()),
        };
        FamilyJson { kind: kind.into(), values, length: self.length }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for AveragingFamily {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = FamilyJson::deserialize(d)?;
        let fam = match raw.kind.as_str() {
            "reciprocal" => Self::reciprocal(raw.length),
            "dyadic" => Self::dyadic(raw.length),
            "explicit" => {
                let mut f = Self::explicit(raw.values).map_err(D::Error::custom)?;
                if raw.length != f.length {
                    return Err(D::Error::custom("explicit family length must equal values.len()"));
                }
                f.length = raw.length;
                Ok(f)
            }
            other => return Err(D::Error::custom(format!("unknown family kind {other:?}"))),
        };
        fam.map_err(D::Error::custom)
    }
}

impl AveragingFamily {
    pub fn reciprocal(length: usize) -> Result<Self> {
        Self::closed_form(FamilyKind::Reciprocal, length)
    }

    pub fn dyadic(length: usize) -> Result<Self> {
        Self::closed_form(FamilyKind::Dyadic, length)
    }

    fn closed_form(kind: FamilyKind, length: usize) -> Result<Self> {
        if length == 0 {
            return Err(Error::Precondition("family length must be positive".into()));
        }
        Ok(Self { kind, length })
    }

    pub fn explicit(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Precondition("explicit family needs at least one value".into()));
        }
        if let Some(j) = values.iter().position(|a| *a == 0.0 || !a.is_finite()) {
            return Err(Error::Precondition(format!("a_{} must be finite and nonzero", j + 1)));
        }
        Ok(Self { length: values.len(), kind: FamilyKind::Explicit(values) })
    }

    pub fn kind(&self) -> &FamilyKind {
        &self.kind
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            FamilyKind::Reciprocal => "reciprocal",
            FamilyKind::Dyadic => "dyadic",
            FamilyKind::Explicit(_) => "explicit",
        }
    }

    fn check_index(&self, n: usize) -> Result<()> {
        if n == 0 || n > self.length {
            return Err(Error::IndexOutOfRange { index: n, length: self.length });
        }
        Ok(())
    }

    /// `a_j` rounded to `f64` (display only; phases never go through this).
    pub fn value(&self, j: usize) -> f64 {
        match &self.kind {
            FamilyKind::Reciprocal => 1.0 / j as f64,
            FamilyKind::Dyadic => (-(j as f64)).exp2(),
            FamilyKind::Explicit(v) => v[j - 1],
        }
    }

    /// Denominator of `a_j` as an exact rational.
    pub fn denominator(&self, j: usize) -> BigUint {
        match &self.kind {
            FamilyKind::Reciprocal => BigUint::from(j),
            FamilyKind::Dyadic => BigUint::one() << j,
            FamilyKind::Explicit(v) => BigUint::one() << Dyadic::from_f64(v[j - 1]).shift,
        }
    }

    /// `lcm` of the denominators of `a_1..a_n`; multiples of it have phase 0 at every `j <= n`.
    pub fn denominator_lcm(&self, n: usize) -> BigUint {
        match &self.kind {
            FamilyKind::Dyadic => BigUint::one() << n,
            _ => (1..=n).fold(BigUint::one(), |acc, j| acc.lcm(&self.denominator(j))),
        }
    }

    /// `a_j k mod 1`, reduced exactly.
    #[inline]
    pub fn phase(&self, j: usize, k: &Magnitude) -> f64 {
        match &self.kind {
            FamilyKind::Reciprocal => k.frac_over(j as u64),
            FamilyKind::Dyadic => k.frac_pow2(j as u64),
            FamilyKind::Explicit(v) => k.frac_mul_f64(v[j - 1]),
        }
    }

    /// Smallest index `L` such that `|a_j| <= threshold` for every stored `j >= L`.
    pub fn tail_index_below(&self, threshold: f64) -> Option<usize> {
        if !(threshold > 0.0) {
            return None;
        }
        let idx = match &self.kind {
            FamilyKind::Reciprocal => (1.0 / threshold).ceil().max(1.0) as usize,
            FamilyKind::Dyadic => (-threshold.log2()).ceil().max(1.0) as usize,
            FamilyKind::Explicit(v) => {
                let last_big = v.iter().rposition(|a| a.abs() > threshold);
                match last_big {
                    Some(i) => i + 2,
                    None => 1,
                }
            }
        };
        (idx <= self.length).then_some(idx)
    }
}

/// `n^{-1} sum_{j<=n} e^{2 pi i a_j k}`: the Fourier multiplier of `S_n` at frequency `k`.
pub fn multiplier_avg(family: &AveragingFamily, n: usize, k: &BigInt) -> Result<Complex64> {
    Ok(multiplier_checkpoints(family, k, &[n])?[0])
}

/// Multipliers of `S_n` at frequency `k` for every `n` in `ns`, in one pass to `max(ns)`.
pub fn multiplier_checkpoints(
    family: &AveragingFamily,
    k: &BigInt,
    ns: &[usize],
) -> Result<Vec<Complex64>> {
    let mag = Magnitude::new(k);
    multiplier_checkpoints_mag(family, &mag, ns)
}

pub(crate) fn multiplier_checkpoints_mag(
    family: &AveragingFamily,
    mag: &Magnitude,
    ns: &[usize],
) -> Result<Vec<Complex64>> {
    for &n in ns {
        family.check_index(n)?;
    }
    if mag.is_zero() {
        return Ok(vec![Complex64::new(1.0, 0.0); ns.len()]);
    }
    let mut order: Vec<usize> = (0..ns.len()).collect();
    order.sort_by_key(|&i| ns[i]);
    let mut out = vec![Complex64::default(); ns.len()];
    let mut acc = Accumulator::default();
    let mut j = 0;
    for i in order {
        let n = ns[i];
        while j < n {
            j += 1;
            acc.add(unit(family.phase(j, mag)));
        }
        out[i] = acc.value() / n as f64;
    }
    Ok(out)
}

/// Prefix multipliers `beta_n(k)` for every `n` in `1..=upto`.
pub fn multiplier_prefix(family: &AveragingFamily, k: &BigInt, upto: usize) -> Result<Vec<Complex64>> {
    family.check_index(upto)?;
    let mag = Magnitude::new(k);
    let mut acc = Accumulator::default();
    Ok((1..=upto)
        .map(|j| {
            acc.add(unit(family.phase(j, &mag)));
            acc.value() / j as f64
        })
        .collect())
}

/// Rotation by `w`: `b_j = (j - 1) w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TranslationFamily {
    pub w: f64,
}

impl Default for TranslationFamily {
    fn default() -> Self {
        Self { w: GOLDEN_CONJUGATE }
    }
}

impl TranslationFamily {
    pub fn new(w: f64) -> Self {
        Self { w }
    }

    /// `b_j` rounded to `f64` (the exact value is `(j - 1) * w`).
    pub fn b(&self, j: usize) -> f64 {
        (j - 1) as f64 * self.w
    }

    /// `k b_j mod 1`, exact.
    pub fn phase(&self, j: usize, k: &BigInt) -> f64 {
        let kj = k * BigInt::from(j - 1);
        Magnitude::new(&kj).frac_mul_f64(self.w)
    }

    /// `J^{-1} sum_{j<=J} e^{2 pi i k b_j}`.
    pub fn averaged_character(&self, k: &BigInt, big_j: usize) -> Complex64 {
        let mut acc = Accumulator::default();
        for j in 1..=big_j {
            acc.add(unit(self.phase(j, k)));
        }
        acc.value() / big_j as f64
    }

    /// Closed form `|sin(pi J k w)| / (J |sin(pi k w)|)` of the averaged character's modulus.
    pub fn cesaro_rate(&self, k: &BigInt, big_j: usize) -> f64 {
        let kw = Magnitude::new(k).frac_mul_f64(self.w);
        let jkw = Magnitude::new(&(k * BigInt::from(big_j))).frac_mul_f64(self.w);
        let den = (std::f64::consts::PI * kw).sin().abs();
        if den == 0.0 {
            return 1.0;
        }
        (std::f64::consts::PI * jkw).sin().abs() / (big_j as f64 * den)
    }
}

/// Orbit pseudo-metric `d_f(n, n') = ||S_n f - S_{n'} f||_2` over the indices `ns`.
pub fn orbit_metric(f: &TrigPoly, family: &AveragingFamily, ns: &[usize]) -> Result<FinitePseudoMetric> {
    let images = orbit_images(f, family, ns)?;
    FinitePseudoMetric::from_fn(ns.len(), |i, j| images[i].l2_dist(&images[j]))?
        .with_labels(ns.iter().map(|n| n.to_string()).collect())
}

/// `S_n f` for each `n` in `ns`, evaluating each frequency's multipliers in one pass.
///
/// The multipliers at `-k` are the conjugates of those at `k`, so each `|k|` is summed once.
pub fn orbit_images(f: &TrigPoly, family: &AveragingFamily, ns: &[usize]) -> Result<Vec<TrigPoly>> {
    if ns.is_empty() {
        return Err(Error::Precondition("index list is empty".into()));
    }
    let mut magnitudes: Vec<BigInt> = f.terms().map(|(k, _)| k.abs()).collect();
    magnitudes.sort();
    magnitudes.dedup();
    let table: Vec<Vec<Complex64>> = magnitudes
        .par_iter()
        .map(|k| multiplier_checkpoints(family, k, ns))
        .collect::<Result<_>>()?;
    let mut per_n: Vec<Vec<(BigInt, Complex64)>> = vec![Vec::with_capacity(f.len()); ns.len()];
    for (k, c) in f.terms() {
        let row = &table[magnitudes.binary_search(&k.abs()).expect("magnitude present")];
        let negative = k.is_negative();
        for (slot, m) in per_n.iter_mut().zip(row) {
            let m = if negative { m.conj() } else { *m };
            slot.push((k.clone(), c * m));
        }
    }
    Ok(per_n.into_iter().map(TrigPoly::from_terms).collect())
}

//! Finite pseudo-metric spaces and their covering / packing numbers.
//!
//! A [`FinitePseudoMetric`] is a validated symmetric distance matrix. Distinct
//! points may sit at distance zero. Covering numbers count closed balls
//! `{y : d(c, y) <= delta}` whose centers are points of the space itself.
//! Packing numbers count subsets whose pairwise distances are strictly
//! greater than `delta`.
//!
//! Exact mode solves the underlying set-cover / maximum-clique problem by
//! branch and bound over `u64` bitmasks, so it is capped (default 24 points,
//! hard limit 64). Greedy mode runs on any size and gives an upper bound for
//! covering and a lower bound for packing.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the number of points accepted by exact mode.
pub const DEFAULT_EXACT_CAP: usize = 24;

const TRIANGLE_TOL: f64 = 1e-12;
const BITMASK_LIMIT: usize = 64;

/// Symmetric, zero-diagonal distance matrix satisfying the triangle inequality.
#[derive(Debug, Clone, PartialEq)]
pub struct FinitePseudoMetric {
    size: usize,
    dist: Vec<f64>,
    labels: Option<Vec<String>>,
}

#[derive(Serialize, Deserialize)]
struct MetricJson {
    size: usize,
    dist: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
}

impl FinitePseudoMetric {
    /// Checks every invariant and returns the space.
    pub fn validate(matrix: Vec<Vec<f64>>) -> Result<Self> {
        let size = matrix.len();
        if size == 0 {
            return Err(Error::InvalidMatrix("empty matrix".into()));
        }
        let mut dist = Vec::with_capacity(size * size);
        for (i, row) in matrix.iter().enumerate() {
            if row.len() != size {
                return Err(Error::InvalidMatrix(format!(
                    "row {i} has {} entries, expected {size}",
                    row.len()
                )));
            }
            for (j, &d) in row.iter().enumerate() {
                if !d.is_finite() {
                    return Err(Error::InvalidMatrix(format!("entry ({i},{j}) is not finite")));
                }
                if d < 0.0 {
                    return Err(Error::InvalidMatrix(format!("entry ({i},{j}) is negative")));
                }
            }
            dist.extend_from_slice(row);
        }
        for i in 0..size {
            if dist[i * size + i] != 0.0 {
                return Err(Error::InvalidMatrix(format!("nonzero diagonal at {i}")));
            }
            for j in (i + 1)..size {
                if dist[i * size + j] != dist[j * size + i] {
                    return Err(Error::InvalidMatrix(format!("asymmetric at ({i},{j})")));
                }
            }
        }
        let diameter = dist.iter().cloned().fold(0.0, f64::max);
        let tol = TRIANGLE_TOL * diameter.max(1.0);
        for i in 0..size {
            for j in 0..size {
                let dij = dist[i * size + j];
                for k in 0..size {
                    if dist[i * size + k] > dij + dist[j * size + k] + tol {
                        return Err(Error::InvalidMatrix(format!(
                            "triangle inequality fails for ({i},{j},{k})"
                        )));
                    }
                }
            }
        }
        Ok(Self { size, dist, labels: None })
    }

    /// Builds a space from a symmetric distance function evaluated on the upper triangle.
    pub fn from_fn(size: usize, mut d: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut m = vec![vec![0.0; size]; size];
        for i in 0..size {
            for j in (i + 1)..size {
                let v = d(i, j);
                m[i][j] = v;
                m[j][i] = v;
            }
        }
        Self::validate(m)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.size {
            return Err(Error::InvalidMatrix(format!(
                "{} labels for {} points",
                labels.len(),
                self.size
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.size + j]
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.dist.chunks(self.size).map(|r| r.to_vec()).collect()
    }

    pub fn diameter(&self) -> f64 {
        self.dist.iter().cloned().fold(0.0, f64::max)
    }

    /// Smallest strictly positive distance, if any pair is separated.
    pub fn min_positive_distance(&self) -> Option<f64> {
        self.dist.iter().cloned().filter(|&d| d > 0.0).reduce(f64::min)
    }

    /// Restriction to the given point indices (in that order).
    pub fn subspace(&self, idx: &[usize]) -> Result<Self> {
        let sub = Self::from_fn(idx.len(), |a, b| self.dist(idx[a], idx[b]))?;
        match &self.labels {
            Some(l) => sub.with_labels(idx.iter().map(|&i| l[i].clone()).collect()),
            None => Ok(sub),
        }
    }

    /// All distances multiplied by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Precondition("scale factor must be positive".into()));
        }
        Ok(Self {
            size: self.size,
            dist: self.dist.iter().map(|d| d * c).collect(),
            labels: self.labels.clone(),
        })
    }

    /// Reads a header-free row-major CSV matrix.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|s| s.parse::<f64>().map_err(|e| Error::Parse(format!("{s:?}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Self::validate(rows)
    }

    pub fn to_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        for row in self.dist.chunks(self.size) {
            w.write_record(row.iter().map(|d| d.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    /// `{"size": n, "dist": [[...]]}` (plus `labels` when present).
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&MetricJson {
            size: self.size,
            dist: self.rows(),
            labels: self.labels.clone(),
        })?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: MetricJson = serde_json::from_str(s)?;
        if raw.size != raw.dist.len() {
            return Err(Error::InvalidMatrix(format!(
                "size {} disagrees with {} rows",
                raw.size,
                raw.dist.len()
            )));
        }
        let space = Self::validate(raw.dist)?;
        match raw.labels {
            Some(l) => space.with_labels(l),
            None => Ok(space),
        }
    }

    /// Bitmask of points inside the closed ball of radius `delta` around `c`.
    fn ball_mask(&self, c: usize, delta: f64) -> u64 {
        (0..self.size)
            .filter(|&y| self.dist(c, y) <= delta)
            .fold(0u64, |m, y| m | (1 << y))
    }
}

/// Exact (optimal) or greedy (bound-only) evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Greedy,
    Exact,
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0) || delta.is_nan() {
        return Err(Error::Precondition(format!("delta must be positive, got {delta}")));
    }
    Ok(())
}

fn check_cap(space: &FinitePseudoMetric, cap: usize) -> Result<()> {
    let cap = cap.min(BITMASK_LIMIT);
    if space.size > cap {
        return Err(Error::InstanceTooLarge { size: space.size, cap });
    }
    Ok(())
}

/// Minimal number of closed `delta`-balls (centered at points of the space)
/// covering the space; greedy mode returns an upper bound.
pub fn covering_number(space: &FinitePseudoMetric, delta: f64, mode: Mode) -> Result<usize> {
    covering_number_with_cap(space, delta, mode, DEFAULT_EXACT_CAP)
}

pub fn covering_number_with_cap(
    space: &FinitePseudoMetric,
    delta: f64,
    mode: Mode,
    cap: usize,
) -> Result<usize> {
    check_delta(delta)?;
    match mode {
        Mode::Greedy => Ok(greedy_cover(space, delta)),
        Mode::Exact => {
            check_cap(space, cap)?;
            Ok(exact_cover(space, delta))
        }
    }
}

/// Size of the largest subset with pairwise distances `> delta`; greedy mode
/// returns the size of a maximal such subset (a lower bound).
pub fn packing_number(space: &FinitePseudoMetric, delta: f64, mode: Mode) -> Result<usize> {
    packing_number_with_cap(space, delta, mode, DEFAULT_EXACT_CAP)
}

pub fn packing_number_with_cap(
    space: &FinitePseudoMetric,
    delta: f64,
    mode: Mode,
    cap: usize,
) -> Result<usize> {
    check_delta(delta)?;
    match mode {
        Mode::Greedy => Ok(greedy_packing(space, delta).len()),
        Mode::Exact => {
            check_cap(space, cap)?;
            Ok(exact_packing(space, delta).count_ones() as usize)
        }
    }
}

/// A largest `delta`-separated subset (exact mode), as point indices.
pub fn max_packing_set(space: &FinitePseudoMetric, delta: f64) -> Result<Vec<usize>> {
    check_delta(delta)?;
    check_cap(space, DEFAULT_EXACT_CAP)?;
    let mask = exact_packing(space, delta);
    Ok((0..space.size).filter(|&i| mask >> i & 1 == 1).collect())
}

fn greedy_cover(space: &FinitePseudoMetric, delta: f64) -> usize {
    let n = space.size;
    let mut covered = vec![false; n];
    let mut left = n;
    let mut count = 0;
    while left > 0 {
        let (best, _) = (0..n)
            .map(|c| {
                let gain = (0..n).filter(|&y| !covered[y] && space.dist(c, y) <= delta).count();
                (c, gain)
            })
            .fold((0, 0), |acc, x| if x.1 > acc.1 { x } else { acc });
        for y in 0..n {
            if !covered[y] && space.dist(best, y) <= delta {
                covered[y] = true;
                left -= 1;
            }
        }
        count += 1;
    }
    count
}

fn greedy_packing(space: &FinitePseudoMetric, delta: f64) -> Vec<usize> {
    let mut chosen: Vec<usize> = Vec::new();
    for i in 0..space.size {
        if chosen.iter().all(|&c| space.dist(c, i) > delta) {
            chosen.push(i);
        }
    }
    chosen
}

fn full_mask(n: usize) -> u64 {
    if n == 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

fn exact_cover(space: &FinitePseudoMetric, delta: f64) -> usize {
    let n = space.size;
    let balls: Vec<u64> = (0..n).map(|c| space.ball_mask(c, delta)).collect();
    let max_ball = balls.iter().map(|b| b.count_ones()).max().unwrap_or(1).max(1);
    let mut best = greedy_cover(space, delta);
    cover_branch(&balls, full_mask(n), 0, max_ball, &mut best);
    best
}

fn cover_branch(balls: &[u64], uncovered: u64, used: usize, max_ball: u32, best: &mut usize) {
    if uncovered == 0 {
        *best = (*best).min(used);
        return;
    }
    let lower = uncovered.count_ones().div_ceil(max_ball) as usize;
    if used + lower >= *best {
        return;
    }
    // Branch on the uncovered point with the fewest candidate balls.
    let mut pivot = 0;
    let mut fewest = u32::MAX;
    let mut rest = uncovered;
    while rest != 0 {
        let y = rest.trailing_zeros() as usize;
        rest &= rest - 1;
        let k = balls.iter().filter(|&&b| b >> y & 1 == 1).count() as u32;
        if k < fewest {
            fewest = k;
            pivot = y;
        }
    }
    let mut options: Vec<u64> = balls.iter().copied().filter(|&b| b >> pivot & 1 == 1).collect();
    options.sort_by_key(|b| std::cmp::Reverse((b & uncovered).count_ones()));
    options.dedup();
    for b in options {
        cover_branch(balls, uncovered & !b, used + 1, max_ball, best);
    }
}

fn exact_packing(space: &FinitePseudoMetric, delta: f64) -> u64 {
    let n = space.size;
    // far[i]: points strictly more than delta away from i.
    let far: Vec<u64> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i && space.dist(i, j) > delta)
                .fold(0u64, |m, j| m | (1 << j))
        })
        .collect();
    let mut best = 0u64;
    clique_branch(&far, 0, full_mask(n), &mut best);
    best
}

fn clique_branch(far: &[u64], current: u64, mut candidates: u64, best: &mut u64) {
    if candidates == 0 {
        if current.count_ones() > best.count_ones() {
            *best = current;
        }
        return;
    }
    while candidates != 0 {
        if current.count_ones() + candidates.count_ones() <= best.count_ones() {
            return;
        }
        let v = candidates.trailing_zeros() as usize;
        candidates &= candidates - 1;
        clique_branch(far, current | (1 << v), candidates & far[v], best);
    }
    if current.count_ones() > best.count_ones() {
        *best = current;
    }
}

/// One row of an entropy profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyRow {
    pub delta: f64,
    pub covering: usize,
    pub packing: usize,
}

/// Covering and packing counts for every delta of a strictly descending grid.
pub fn entropy_profile(
    space: &FinitePseudoMetric,
    deltas: &[f64],
    mode: Mode,
) -> Result<Vec<EntropyRow>> {
    if deltas.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(Error::Precondition("deltas must be strictly descending".into()));
    }
    deltas
        .iter()
        .map(|&delta| {
            Ok(EntropyRow {
                delta,
                covering: covering_number(space, delta, mode)?,
                packing: packing_number(space, delta, mode)?,
            })
        })
        .collect()
}

pub fn write_profile_csv<W: Write>(rows: &[EntropyRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["delta", "covering", "packing"])?;
    for r in rows {
        w.write_record([r.delta.to_string(), r.covering.to_string(), r.packing.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> FinitePseudoMetric {
        FinitePseudoMetric::from_fn(n, |i, j| (i as f64 - j as f64).abs()).unwrap()
    }

    #[test]
    fn validate_accepts_degenerate_and_two_point() {
        assert_eq!(FinitePseudoMetric::validate(vec![vec![0.0]]).unwrap().size(), 1);
        assert!(FinitePseudoMetric::validate(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).is_ok());
    }

    #[test]
    fn validate_rejects_bad_matrices() {
        let asym = FinitePseudoMetric::validate(vec![vec![0.0, 1.0], vec![2.0, 0.0]]);
        assert!(matches!(asym, Err(Error::InvalidMatrix(m)) if m.contains("asymmetric")));
        assert!(FinitePseudoMetric::validate(vec![vec![0.0, -1.0], vec![-1.0, 0.0]]).is_err());
        assert!(FinitePseudoMetric::validate(vec![vec![1.0]]).is_err());
        assert!(FinitePseudoMetric::validate(vec![vec![0.0, f64::NAN], vec![f64::NAN, 0.0]]).is_err());
        let tri = vec![vec![0.0, 1.0, 5.0], vec![1.0, 0.0, 1.0], vec![5.0, 1.0, 0.0]];
        assert!(FinitePseudoMetric::validate(tri).is_err());
        assert!(FinitePseudoMetric::validate(vec![vec![0.0, 1.0]]).is_err());
    }

    #[test]
    fn zero_distance_between_distinct_points_is_allowed() {
        let s = FinitePseudoMetric::validate(vec![vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(covering_number(&s, 0.1, Mode::Exact).unwrap(), 1);
        assert_eq!(packing_number(&s, 0.1, Mode::Exact).unwrap(), 1);
    }

    #[test]
    fn single_point_and_two_points() {
        let one = FinitePseudoMetric::validate(vec![vec![0.0]]).unwrap();
        for m in [Mode::Greedy, Mode::Exact] {
            assert_eq!(covering_number(&one, 0.3, m).unwrap(), 1);
            assert_eq!(packing_number(&one, 0.3, m).unwrap(), 1);
        }
        let two = line(2);
        assert_eq!(covering_number(&two, 0.4, Mode::Exact).unwrap(), 2);
    }

    #[test]
    fn five_collinear_points() {
        let s = line(5);
        assert_eq!(covering_number(&s, 1.0, Mode::Exact).unwrap(), 2);
        assert_eq!(packing_number(&s, 1.0, Mode::Exact).unwrap(), 3);
        assert_eq!(max_packing_set(&s, 1.0).unwrap(), vec![0, 2, 4]);
        let prof = entropy_profile(&s, &[4.0, 1.0, 0.5], Mode::Exact).unwrap();
        let cov: Vec<_> = prof.iter().map(|r| r.covering).collect();
        assert_eq!(cov, vec![1, 2, 5]);
    }

    #[test]
    fn profile_two_points() {
        let prof = entropy_profile(&line(2), &[2.0, 0.5], Mode::Exact).unwrap();
        assert_eq!(
            prof,
            vec![
                EntropyRow { delta: 2.0, covering: 1, packing: 1 },
                EntropyRow { delta: 0.5, covering: 2, packing: 2 }
            ]
        );
        let d = line(4).diameter();
        let prof = entropy_profile(&line(4), &[d], Mode::Exact).unwrap();
        assert_eq!(prof, vec![EntropyRow { delta: d, covering: 1, packing: 1 }]);
    }

    #[test]
    fn profile_rejects_unsorted_grid() {
        assert!(entropy_profile(&line(3), &[0.5, 1.0], Mode::Exact).is_err());
        assert!(entropy_profile(&line(3), &[1.0, 1.0], Mode::Exact).is_err());
    }

    #[test]
    fn nonpositive_delta_rejected() {
        assert!(covering_number(&line(3), 0.0, Mode::Greedy).is_err());
        assert!(packing_number(&line(3), -1.0, Mode::Exact).is_err());
    }

    #[test]
    fn exact_mode_over_cap_is_an_error() {
        let big = line(30);
        assert!(matches!(
            covering_number(&big, 1.0, Mode::Exact),
            Err(Error::InstanceTooLarge { size: 30, cap: 24 })
        ));
        assert!(packing_number(&big, 1.0, Mode::Exact).is_err());
        assert_eq!(covering_number(&big, 1.0, Mode::Greedy).unwrap(), 10);
        assert_eq!(covering_number_with_cap(&big, 1.0, Mode::Exact, 32).unwrap(), 10);
    }

    #[test]
    fn csv_and_json_round_trip() {
        let s = line(4).with_labels(vec!["a".into(), "b".into(), "c".into(), "d".into()]).unwrap();
        let mut buf = Vec::new();
        s.to_csv(&mut buf).unwrap();
        let back = FinitePseudoMetric::from_csv(buf.as_slice()).unwrap();
        assert_eq!(back.rows(), s.rows());
        let json = s.to_json().unwrap();
        assert!(json.starts_with("{\"size\":4,\"dist\":[[0.0,1.0"));
        assert_eq!(FinitePseudoMetric::from_json(&json).unwrap(), s);
        assert!(FinitePseudoMetric::from_json(r#"{"size":3,"dist":[[0]]}"#).is_err());
    }

    #[test]
    fn profile_csv_has_header() {
        let rows = entropy_profile(&line(3), &[1.5], Mode::Exact).unwrap();
        let mut buf = Vec::new();
        write_profile_csv(&rows, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "delta,covering,packing\n1.5,1,2\n");
    }
}

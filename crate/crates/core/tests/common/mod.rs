//! Independent oracles and generators shared by the integration suites.

#![allow(dead_code)]

use entropylab::FinitePseudoMetric;
use rand::Rng;

/// Shortest-path closure of random edge weights, so the triangle inequality holds.
/// About one edge in six has weight zero, which merges points into a pseudo-metric.
pub fn random_space(rng: &mut impl Rng, size: usize) -> FinitePseudoMetric {
    let mut d = vec![vec![0.0f64; size]; size];
    for i in 0..size {
        for j in i + 1..size {
            let w = if rng.gen_ratio(1, 6) { 0.0 } else { rng.gen_range(0.05..2.0) };
            d[i][j] = w;
            d[j][i] = w;
        }
    }
    for k in 0..size {
        for i in 0..size {
            for j in 0..size {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    // the closure can leave last-bit asymmetry
    for i in 0..size {
        for j in i + 1..size {
            let v = d[i][j].min(d[j][i]);
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    FinitePseudoMetric::validate(d).expect("closure is a pseudo-metric")
}

/// Smallest number of closed `delta`-balls centered at points that cover the space, by enumeration.
pub fn brute_covering(space: &FinitePseudoMetric, delta: f64) -> usize {
    let n = space.size();
    let mut best = n;
    for mask in 1u32..(1 << n) {
        let k = mask.count_ones() as usize;
        if k >= best {
            continue;
        }
        let covered = (0..n).all(|x| (0..n).any(|c| mask >> c & 1 == 1 && space.dist(c, x) <= delta));
        if covered {
            best = k;
        }
    }
    best
}

/// Largest subset with pairwise distances `> delta`, by enumeration.
pub fn brute_packing(space: &FinitePseudoMetric, delta: f64) -> usize {
    let n = space.size();
    let mut best = 1;
    for mask in 1u32..(1 << n) {
        let k = mask.count_ones() as usize;
        if k <= best {
            continue;
        }
        let members: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        let separated = members
            .iter()
            .enumerate()
            .all(|(a, &i)| members[a + 1..].iter().all(|&j| space.dist(i, j) > delta));
        if separated {
            best = k;
        }
    }
    best
}

/// Ten scales spread over `(0, diameter]`, plus each distinct distance exactly (ties are the hard case).
pub fn delta_grid(space: &FinitePseudoMetric, rng: &mut impl Rng) -> Vec<f64> {
    let diam = space.diameter().max(0.1);
    let mut grid: Vec<f64> = (1..=10).map(|i| diam * i as f64 / 10.0).collect();
    let rows = space.rows();
    let mut positive: Vec<f64> = rows.iter().flatten().copied().filter(|d| *d > 0.0).collect();
    positive.sort_by(f64::total_cmp);
    positive.dedup();
    if !positive.is_empty() {
        grid.push(positive[rng.gen_range(0..positive.len())]);
    }
    grid
}

use entropylab::torus::TranslationFamily;
use entropylab::{AveragingFamily, Part, TrigPoly};
use num_bigint::BigInt;
use num_complex::Complex64;

/// Up to `max_terms` random coefficients; with `huge`, frequencies reach a few hundred bits.
pub fn random_poly(rng: &mut impl Rng, max_terms: usize, huge: bool) -> TrigPoly {
    let terms = rng.gen_range(1..=max_terms);
    TrigPoly::from_terms((0..terms).map(|_| {
        let small = BigInt::from(rng.gen_range(-1000i64..=1000));
        let k = if huge && rng.gen_bool(0.5) {
            (BigInt::from(rng.gen::<i64>()) << rng.gen_range(0u32..300)) + small
        } else {
            small
        };
        (k, Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }))
}

pub fn random_family(rng: &mut impl Rng) -> AveragingFamily {
    match rng.gen_range(0..3) {
        0 => AveragingFamily::reciprocal(256).unwrap(),
        1 => AveragingFamily::dyadic(256).unwrap(),
        _ => AveragingFamily::explicit((0..256).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap(),
    }
}

/// `||S_n f|| - ||f||`, at most rounding when `S_n` contracts.
pub fn contraction_excess(f: &TrigPoly, family: &AveragingFamily, n: usize) -> f64 {
    f.apply_s(family, n).unwrap().l2_norm() - f.l2_norm()
}

pub fn isometry_error(f: &TrigPoly, b: f64) -> f64 {
    (f.apply_t(b).l2_norm() - f.l2_norm()).abs()
}

/// `||T(fg) - Tf Tg||` relative to `||f||_1 ||g||_1`.
pub fn multiplicativity_error(f: &TrigPoly, g: &TrigPoly, b: f64) -> f64 {
    let lhs = f.multiply(g).apply_t(b);
    let rhs = f.apply_t(b).multiply(&g.apply_t(b));
    lhs.l2_dist(&rhs) / (f.l1_coeff_norm() * g.l1_coeff_norm()).max(1.0)
}

pub fn commutation_error(f: &TrigPoly, family: &AveragingFamily, n: usize, b: f64) -> f64 {
    let st = f.apply_t(b).apply_s(family, n).unwrap();
    let ts = f.apply_s(family, n).unwrap().apply_t(b);
    st.l2_dist(&ts)
}

pub fn real_part_error(f: &TrigPoly, family: &AveragingFamily, n: usize) -> f64 {
    let a = f.component_part(Part::Real).apply_s(family, n).unwrap();
    let b = f.apply_s(family, n).unwrap().component_part(Part::Real);
    a.l2_dist(&b)
}

/// `x w mod 1` for an integer-valued `x`, with the product's rounding error recovered by FMA.
fn frac_of_product(x: f64, w: f64) -> f64 {
    let p = x * w;
    let err = x.mul_add(w, -p);
    ((p - p.floor()) + err).rem_euclid(1.0)
}

/// Compares the averaged character with `|sin(pi J k w)| / (J |sin(pi k w)|)` and the Cesaro
/// average's coefficient with `c * character`. Keep `|k| <= 1000` so the
/// closed form's denominator stays away from zero.
pub fn ergodic_rate_error(k: i64, big_j: usize, c: Complex64) -> f64 {
    let trans = TranslationFamily::default();
    let kb = BigInt::from(k);
    let character = trans.averaged_character(&kb, big_j);
    let kw = frac_of_product(k as f64, trans.w);
    let jkw = frac_of_product(k as f64 * big_j as f64, trans.w);
    let rate = if k == 0 {
        1.0
    } else {
        (std::f64::consts::PI * jkw).sin().abs() / (big_j as f64 * (std::f64::consts::PI * kw).sin().abs())
    };
    let avg = TrigPoly::monomial(k, c).cesaro_t_average(&trans, big_j).unwrap();
    let coeff_err = (avg.coeff(&kb) - c * character).norm();
    (character.norm() - rate).abs().max(coeff_err)
}

/// `||S_s h - S_t h||_2` by evaluating `h(x + a_j)` on `grid` equispaced points.
///
/// Exact for trigonometric polynomials when `grid` exceeds twice the largest `|k|`.
pub fn quadrature_orbit_distance(
    terms: &[(i64, Complex64)],
    values: &dyn Fn(usize) -> f64,
    s: usize,
    t: usize,
    grid: usize,
) -> f64 {
    let h = |x: f64| -> Complex64 {
        terms
            .iter()
            .map(|&(k, c)| c * Complex64::from_polar(1.0, std::f64::consts::TAU * k as f64 * x))
            .sum()
    };
    let avg = |n: usize, x: f64| -> Complex64 { (1..=n).map(|j| h(x + values(j))).sum::<Complex64>() / n as f64 };
    let mut total = 0.0;
    for i in 0..grid {
        let x = i as f64 / grid as f64;
        total += (avg(s, x) - avg(t, x)).norm_sqr();
    }
    (total / grid as f64).sqrt()
}

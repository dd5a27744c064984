//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
//!
//! Tolerances and sizes are pinned below; nothing here adapts to what the code produces.

mod common;

use std::f64::consts::{FRAC_PI_4, PI};
use std::time::{Duration, Instant};

use common::*;
use entropylab::construction::{
    assemble_counterexample, build_g, find_certificate, separation_floor, separation_matrix, Counterexample,
    SearchLimits, VerifiedCertificate, ENTROPY_SCALE, F_SEPARATION, G_SEPARATION, ONE_THRESHOLD, PAIR_GAP,
    ZERO_THRESHOLD,
};
use entropylab::gaussian_lab::{
    fernique_check, normal_moment_ratio, rotation_test, scalar_identity_check, sudakov_ratio, GaussianFamily,
    ScalarIdentity, FERNIQUE_FACTOR, SE_BAND, SUDAKOV_CEILING,
};
use entropylab::pseudometric::{covering_number, packing_number};
use entropylab::torus::DEFAULT_FAMILY_LENGTH;
use entropylab::{AveragingFamily, Mode, Part};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CERT_MARGIN: f64 = 1e-9;
const NORM_TOL: f64 = 1e-12;
const R0_ONE_BUDGET: Duration = Duration::from_secs(10);
const R0_TWO_BUDGET: Duration = Duration::from_secs(600);
const FERNIQUE_BUDGET: Duration = Duration::from_secs(120);
const ORACLE_BUDGET: Duration = Duration::from_secs(60);
const MC_SAMPLES: usize = 100_000;
const FERNIQUE_FAMILIES: usize = 20;
const FERNIQUE_MAX_N: usize = 32;
const FERNIQUE_MAX_J: usize = 64;
/// 0.75 quantile of a standard normal: the median of `|Z|`.
const HALF_NORMAL_MEDIAN: f64 = 0.674_489_750_196_081_7;
const MOMENT_RATIO_REL_TOL: f64 = 0.01;
const ROTATION_ANGLES: [f64; 3] = [0.0, FRAC_PI_4, 1.0];
const ROTATION_FAMILIES_PER_ANGLE: usize = 3;
const ORACLE_SPACES: usize = 200;
const ORACLE_MAX_SIZE: usize = 12;
const OPERATOR_CASES: usize = 1000;
const OPERATOR_TOL: f64 = 1e-12;
const SUDAKOV_FAMILIES: usize = 50;
const SUDAKOV_MAX_N: usize = 20;
const SUDAKOV_MAX_J: usize = 32;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn min_offdiagonal(m: &entropylab::FinitePseudoMetric) -> f64 {
    let mut best = f64::INFINITY;
    for s in 0..m.size() {
        for t in s + 1..m.size() {
            best = best.min(m.dist(s, t));
        }
    }
    best
}

fn certificate_thresholds(ce: &Counterexample) -> Result<(), String> {
    let report = ce.cert.report();
    ensure(report.passed() && report.vectors_checked == 1 << ce.cert.r, || {
        format!("verification: {} over {} vectors", report.describe_failure(), report.vectors_checked)
    })?;
    ensure(report.worst_zero_case <= ZERO_THRESHOLD - CERT_MARGIN, || {
        format!("zero-case deviation {} not below 1/10 by {CERT_MARGIN}", report.worst_zero_case)
    })?;
    ensure(report.worst_one_case >= ONE_THRESHOLD + CERT_MARGIN, || {
        format!("one-case deviation {} not above 1/2 by {CERT_MARGIN}", report.worst_one_case)
    })?;
    ensure((ce.g_norm() - 1.0).abs() <= NORM_TOL, || format!("||g|| = {}", ce.g_norm()))?;
    let closest = min_offdiagonal(&ce.separation);
    ensure(closest > G_SEPARATION, || format!("closest averaged images of g at {closest}"))
}

fn pipeline(r0: usize) -> Result<(Counterexample, Duration), String> {
    let family = AveragingFamily::reciprocal(DEFAULT_FAMILY_LENGTH).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let ce = assemble_counterexample(&family, r0, &SearchLimits::default()).map_err(|e| e.to_string())?;
    Ok((ce, start.elapsed()))
}

fn criterion_1() -> Outcome {
    let (ce, elapsed) = pipeline(1)?;
    certificate_thresholds(&ce)?;
    ensure(elapsed < R0_ONE_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!(
        "J = {:?}, deviations {:.6} / {:.6}",
        ce.cert.windows, ce.cert.report().worst_zero_case, ce.cert.report().worst_one_case
    ))
}

fn criterion_2() -> Outcome {
    let (ce, elapsed) = pipeline(2)?;
    certificate_thresholds(&ce)?;
    ensure(ce.witness.part == Part::Real && ce.f.is_real(), || format!("witness part {}", ce.witness.part))?;
    ensure(ce.f_norm() <= 1.0 + NORM_TOL, || format!("||f|| = {}", ce.f_norm()))?;
    ensure(ce.witness.indices.len() == 2, || format!("|I| = {}", ce.witness.indices.len()))?;
    let gap = min_offdiagonal(&ce.witness_metric);
    ensure(gap > F_SEPARATION, || format!("witness gap {gap}"))?;
    let packing = packing_number(&ce.witness_metric, ENTROPY_SCALE, Mode::Exact).map_err(|e| e.to_string())?;
    ensure(packing >= 2, || format!("packing number at 1/40 is {packing}"))?;
    ensure(elapsed < R0_TWO_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!("I = {:?}, gap {gap:.4}, packing {packing}", ce.witness.indices))
}

fn chain_consistency(name: &str, cert: &VerifiedCertificate) -> Result<String, String> {
    let report = cert.report();
    ensure(report.passed(), || format!("{name}: {}", report.describe_failure()))?;
    ensure(report.pairs_checked == 0 || report.min_pair_gap > PAIR_GAP, || {
        format!("{name}: pair gap {} not above 2/5", report.min_pair_gap)
    })?;
    let g = build_g(cert).map_err(|e| format!("{name}: {e}"))?;
    let sep = separation_matrix(cert, &g).map_err(|e| format!("{name}: {e}"))?;
    let closest = min_offdiagonal(&sep);
    ensure(cert.r == 1 || closest >= separation_floor(), || {
        format!("{name}: separation {closest} below {}", separation_floor())
    })?;
    Ok(format!("{name}: {} pairs, gap {:.4}, separation {:.4}", report.pairs_checked, report.min_pair_gap, closest))
}

fn criterion_3() -> Outcome {
    let reciprocal = AveragingFamily::reciprocal(DEFAULT_FAMILY_LENGTH).map_err(|e| e.to_string())?;
    let dyadic = AveragingFamily::dyadic(DEFAULT_FAMILY_LENGTH).map_err(|e| e.to_string())?;
    let mut lines = Vec::new();
    for (name, family, r) in [("reciprocal r=1", &reciprocal, 1), ("reciprocal r=2", &reciprocal, 2), ("dyadic r=6", &dyadic, 6)] {
        let cert = find_certificate(family, r, &SearchLimits::default()).map_err(|e| format!("{name}: {e}"))?;
        lines.push(chain_consistency(name, &cert)?);
    }
    Ok(lines.join("; "))
}

fn random_gaussian_family(rng: &mut ChaCha8Rng, max_n: usize, max_j: usize) -> GaussianFamily {
    let n = rng.gen_range(1..=max_n);
    let j = rng.gen_range(1..=max_j);
    GaussianFamily::random_uniform(n, j, rng.gen()).unwrap()
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for i in 0..FERNIQUE_FAMILIES {
        let fam = random_gaussian_family(&mut rng, FERNIQUE_MAX_N, FERNIQUE_MAX_J);
        let r = fernique_check(&fam, MC_SAMPLES, 400 + i as u64).map_err(|e| e.to_string())?;
        ensure(r.sup.passed(), || {
            format!("family {i}: E sup {} +- {} vs 6 s* = {}", r.sup.estimate, r.sup.std_error, FERNIQUE_FACTOR * r.median_level)
        })?;
        worst = worst.max((r.sup.estimate + SE_BAND * r.sup.std_error) / (FERNIQUE_FACTOR * r.median_level));
    }
    let single = GaussianFamily::new(vec![vec![1.0]]).unwrap();
    let r = fernique_check(&single, MC_SAMPLES, 499).map_err(|e| e.to_string())?;
    let mean_abs = (2.0 / PI).sqrt();
    ensure(r.sup.passed(), || format!("single normal: {:?}", r.sup))?;
    ensure((r.sup.estimate - mean_abs).abs() <= SE_BAND * r.sup.std_error, || {
        format!("single normal: E|Z| = {} +- {} vs {mean_abs}", r.sup.estimate, r.sup.std_error)
    })?;
    // standard error of the sample median of |Z|: sqrt(1/4n) / (2 phi(median))
    let density = 2.0 * (-HALF_NORMAL_MEDIAN * HALF_NORMAL_MEDIAN / 2.0).exp() / (2.0 * PI).sqrt();
    let median_se = (0.25 / MC_SAMPLES as f64).sqrt() / density;
    ensure((r.median_level - HALF_NORMAL_MEDIAN).abs() <= SE_BAND * median_se, || {
        format!("single normal: s* = {} vs {HALF_NORMAL_MEDIAN}", r.median_level)
    })?;
    let elapsed = start.elapsed();
    ensure(elapsed < FERNIQUE_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!(
        "largest (E sup + 3 SE) / 6 s* = {worst:.4}; single normal {:.4} vs 6 s* = {:.3}",
        r.sup.estimate,
        FERNIQUE_FACTOR * r.median_level
    ))
}

fn criterion_5() -> Outcome {
    let checks = [
        ScalarIdentity::Mgf { lambda: 0.5, sigma: 1.0 },
        ScalarIdentity::Mgf { lambda: 1.0, sigma: 1.0 },
        ScalarIdentity::Mgf { lambda: 1.0, sigma: 2.0 },
        ScalarIdentity::TailIntegral { moment: 1 },
        ScalarIdentity::TailIntegral { moment: 2 },
        ScalarIdentity::MomentRatio { p: 1.0 },
        ScalarIdentity::MomentRatio { p: 2.0 },
        ScalarIdentity::MomentRatio { p: 4.0 },
    ];
    for (i, kind) in checks.into_iter().enumerate() {
        let r = scalar_identity_check(kind, MC_SAMPLES, 500 + i as u64).map_err(|e| e.to_string())?;
        ensure(r.passed(), || format!("{kind:?}: {} +- {} vs {:?}", r.estimate, r.std_error, r.bound))?;
        if let ScalarIdentity::MomentRatio { p } = kind {
            let closed = match p as u32 {
                1 => (2.0 / PI).sqrt(),
                2 => 1.0,
                _ => 3f64.powf(0.25),
            };
            ensure((normal_moment_ratio(p) - closed).abs() <= 1e-12, || format!("closed form at p = {p}"))?;
            ensure((r.estimate - closed).abs() <= MOMENT_RATIO_REL_TOL * closed, || {
                format!("moment ratio p = {p}: {} vs {closed}", r.estimate)
            })?;
        }
    }
    Ok(format!("{} identities", checks.len()))
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for theta in ROTATION_ANGLES {
        for _ in 0..ROTATION_FAMILIES_PER_ANGLE {
            let fam = random_gaussian_family(&mut rng, 3, 4);
            let r = rotation_test(&fam, theta, MC_SAMPLES, rng.gen()).map_err(|e| e.to_string())?;
            ensure(r.passed(), || format!("theta {theta}: largest z-score {}", r.estimate))?;
            worst = worst.max(r.estimate);
            count += 1;
        }
    }
    Ok(format!("{count} families, largest entrywise z-score {worst:.3}"))
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut instances = 0;
    for i in 0..ORACLE_SPACES {
        let size = rng.gen_range(1..=ORACLE_MAX_SIZE);
        let space = random_space(&mut rng, size);
        for delta in delta_grid(&space, &mut rng) {
            let cover = covering_number(&space, delta, Mode::Exact).map_err(|e| e.to_string())?;
            let pack = packing_number(&space, delta, Mode::Exact).map_err(|e| e.to_string())?;
            let pack2 = packing_number(&space, 2.0 * delta, Mode::Exact).map_err(|e| e.to_string())?;
            ensure(cover == brute_covering(&space, delta), || format!("space {i}, delta {delta}: covering {cover}"))?;
            ensure(pack == brute_packing(&space, delta), || format!("space {i}, delta {delta}: packing {pack}"))?;
            ensure(pack2 <= cover && cover <= pack, || {
                format!("space {i}, delta {delta}: {pack2} <= {cover} <= {pack} fails")
            })?;
            instances += 1;
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < ORACLE_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!("{ORACLE_SPACES} spaces, {instances} (space, delta) pairs"))
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = [0.0f64; 6];
    for _ in 0..OPERATOR_CASES {
        let f = random_poly(&mut rng, 8, true);
        let g = random_poly(&mut rng, 8, true);
        let family = random_family(&mut rng);
        let n = rng.gen_range(1..=64);
        let b = rng.gen_range(-1.0..1.0);
        let errors = [
            contraction_excess(&f, &family, n),
            isometry_error(&f, b),
            multiplicativity_error(&f, &g, b),
            commutation_error(&f, &family, n, b),
            real_part_error(&f, &family, n),
            ergodic_rate_error(
                rng.gen_range(-1000..=1000),
                rng.gen_range(1..=2000),
                Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            ),
        ];
        for (w, e) in worst.iter_mut().zip(errors) {
            *w = w.max(e);
        }
    }
    let names = ["contraction", "isometry", "multiplicativity", "S-T commutation", "Re/S commutation", "ergodic rate"];
    for (name, w) in names.iter().zip(worst) {
        ensure(w <= OPERATOR_TOL, || format!("{name}: worst error {w:e}"))?;
    }
    Ok(format!("{OPERATOR_CASES} cases each, worst error {:.1e}", worst.iter().cloned().fold(f64::MIN, f64::max)))
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    for i in 0..SUDAKOV_FAMILIES {
        let fam = random_gaussian_family(&mut rng, SUDAKOV_MAX_N, SUDAKOV_MAX_J);
        let r = sudakov_ratio(&fam, None, MC_SAMPLES, 900 + i as u64).map_err(|e| e.to_string())?;
        ensure(r.ratio <= SUDAKOV_CEILING, || format!("family {i}: ratio {}", r.ratio))?;
        worst = worst.max(r.ratio);
    }
    Ok(format!("{SUDAKOV_FAMILIES} families, largest ratio {worst:.4}"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("counterexample r0 = 1, reciprocal family", criterion_1),
        ("counterexample r0 = 2, reciprocal family", criterion_2),
        ("pair gap and separation floor on verified certificates", criterion_3),
        ("Fernique suite", criterion_4),
        ("scalar normal identities", criterion_5),
        ("rotation invariance", criterion_6),
        ("covering/packing oracle and sandwich", criterion_7),
        ("operator algebra", criterion_8),
        ("Sudakov suite", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {} PASS {name}: {detail} ({secs:.1} s)", i + 1),
            Err(reason) => {
                failed += 1;
                println!("criterion {} FAIL {name}: {reason} ({secs:.1} s)", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

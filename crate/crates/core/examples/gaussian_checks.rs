// Monte Carlo checks of Fernique, Sudakov, rotation invariance and scalar normal identities.
//
// ```bash
// cargo run --release --example gaussian_checks
// ```

use entropylab::gaussian_lab::{
    fernique_check, metric_check, rotation_test, scalar_identity_check, sudakov_ratio, GaussianFamily,
    ScalarIdentity,
};
use entropylab::Result;

pub fn run_example() -> Result<()> {
    let fam = GaussianFamily::random_uniform(8, 16, 3)?;
    let samples = 20_000;

    let fernique = fernique_check(&fam, samples, 1)?;
    println!(
        "E sup |G| = {:.4} +- {:.4}, s* = {:.4}: {:?}",
        fernique.sup.estimate, fernique.sup.std_error, fernique.median_level, fernique.sup.verdict
    );

    let sudakov = sudakov_ratio(&fam, None, samples, 2)?;
    println!("Sudakov ratio {:.4} over {} scales", sudakov.ratio, sudakov.detail.len());

    let d = metric_check(&fam, 0, 1, samples, 4)?;
    println!("d(0, 1): simulated {:.4}, exact {:.4}: {:?}", d.estimate, d.bound.unwrap_or(f64::NAN), d.verdict);

    let small = GaussianFamily::random_uniform(2, 3, 5)?;
    let rot = rotation_test(&small, 1.0, samples, 6)?;
    println!("rotation by 1.0: largest z-score {:.3}: {:?}", rot.estimate, rot.verdict);

    for kind in [
        ScalarIdentity::Mgf { lambda: 1.0, sigma: 1.0 },
        ScalarIdentity::TailIntegral { moment: 2 },
        ScalarIdentity::MomentRatio { p: 4.0 },
    ] {
        let r = scalar_identity_check(kind, samples, 7)?;
        println!("{kind:?}: {:.4} vs {:.4}: {:?}", r.estimate, r.bound.unwrap_or(f64::NAN), r.verdict);
    }
    Ok(())
}

fn main() {
    run_example().expect("gaussian checks example");
}

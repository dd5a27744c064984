// Randomized translation averages and the Gaussian families they induce on an orbit.
//
// ```bash
// cargo run --release --example orbit_bridge
// ```

use entropylab::gaussian_lab::{bridge_mean_square_metric, orbit_bridge_family, randomized_average, simulate_sup};
use entropylab::torus::{orbit_metric, TranslationFamily};
use entropylab::{AveragingFamily, Result, TrigPoly};
use num_complex::Complex64;

pub fn run_example() -> Result<()> {
    let f = TrigPoly::from_terms([
        (2, Complex64::new(0.5, 0.0)),
        (-2, Complex64::new(0.5, 0.0)),
        (3, Complex64::new(0.25, 0.0)),
        (-3, Complex64::new(0.25, 0.0)),
    ]);
    let family = AveragingFamily::reciprocal(64)?;
    let trans = TranslationFamily::default();
    let ns = [1, 2, 5];

    let big_f = randomized_average(&f, &trans, 50, 11)?;
    println!("one draw of the randomized average has norm {:.4}", big_f.l2_norm());

    let fam = orbit_bridge_family(&f, &family, &trans, &ns, 50, (1, 7))?;
    let sup = simulate_sup(&fam, 10_000, 12)?;
    println!("E sup over the orbit at x = 1/7: {:.4} +- {:.4}", sup.estimate, sup.std_error);

    // averaged over a fine grid of x, the Gaussian metric squared is the L2 orbit metric squared
    let mean_sq = bridge_mean_square_metric(&f, &family, &trans, &ns, 50, 16)?;
    let orbit = orbit_metric(&f, &family, &ns)?;
    for i in 0..ns.len() {
        for j in i + 1..ns.len() {
            println!(
                "windows {} and {}: grid mean {:.6}, ||S f - S f||^2 {:.6}",
                ns[i],
                ns[j],
                mean_sq[i][j],
                orbit.dist(i, j).powi(2)
            );
        }
    }
    Ok(())
}

fn main() {
    run_example().expect("orbit bridge example");
}

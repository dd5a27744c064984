// Covering and packing numbers of the orbit `{S_n f}` of a small trigonometric polynomial.
//
// ```bash
// cargo run --example orbit_entropy
// ```

use entropylab::pseudometric::{covering_number, entropy_profile, max_packing_set, packing_number};
use entropylab::torus::orbit_metric;
use entropylab::{AveragingFamily, Mode, Result, TrigPoly};
use num_complex::Complex64;

pub fn run_example() -> Result<()> {
    // f(x) = cos(2 pi x) + 0.4 e^{2 pi i 5 x}
    let f = TrigPoly::from_terms([
        (1, Complex64::new(0.5, 0.0)),
        (-1, Complex64::new(0.5, 0.0)),
        (5, Complex64::new(0.4, 0.0)),
    ]);
    let family = AveragingFamily::reciprocal(1 << 10)?;
    let ns: Vec<usize> = (1..=12).collect();
    let metric = orbit_metric(&f, &family, &ns)?;
    println!("orbit of {} points, diameter {:.4}", metric.size(), metric.diameter());

    let deltas = [0.4, 0.2, 0.1, 0.05, 0.025];
    for row in entropy_profile(&metric, &deltas, Mode::Exact)? {
        println!("delta {:<6} covering {:>2}  packing {:>2}", row.delta, row.covering, row.packing);
    }

    // greedy counts bracket the exact ones
    let delta = 0.1;
    let exact = covering_number(&metric, delta, Mode::Exact)?;
    assert!(covering_number(&metric, delta, Mode::Greedy)? >= exact);
    assert!(packing_number(&metric, delta, Mode::Greedy)? <= packing_number(&metric, delta, Mode::Exact)?);
    let witness: Vec<usize> = max_packing_set(&metric, delta)?.iter().map(|&i| ns[i]).collect();
    println!("a largest 0.1-separated set of windows: {witness:?}");
    Ok(())
}

fn main() {
    run_example().expect("orbit entropy example");
}

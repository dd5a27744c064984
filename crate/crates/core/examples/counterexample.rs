// The full construction for one separated orbit point over the dyadic family.
//
// About half a minute on one core in release mode.
//
// ```bash
// cargo run --release --example counterexample
// ```

use entropylab::construction::{assemble_counterexample, SearchLimits};
use entropylab::{AveragingFamily, Result};

pub fn run_example() -> Result<()> {
    let family = AveragingFamily::dyadic(1 << 24)?;
    let ce = assemble_counterexample(&family, 1, &SearchLimits::default())?;
    println!("windows {:?}", ce.cert.windows);
    println!("||g|| = {:.15}, ||f|| = {:.6}, sup bound {:.1}", ce.g_norm(), ce.f_norm(), ce.sup_bound());
    let sep = &ce.separation;
    let mut closest = f64::INFINITY;
    for s in 0..sep.size() {
        for t in s + 1..sep.size() {
            closest = closest.min(sep.dist(s, t));
        }
    }
    println!("closest pair of averaged images of g: {closest:.4}");
    println!(
        "witness: {} part at windows {:?}, packing number at 1/40 = {}",
        ce.witness.part, ce.witness.indices, ce.packing_at_scale
    );
    println!("f has {} Fourier terms, largest frequency has {} bits", ce.f.len(), ce.f.max_abs_frequency().bits());
    Ok(())
}

fn main() {
    run_example().expect("counterexample example");
}

// Averaging operators `S_n`, translations `T_b` and their Fourier multipliers.
//
// ```bash
// cargo run --example operators
// ```

use entropylab::torus::{multiplier_avg, TranslationFamily};
use entropylab::{AveragingFamily, Part, Result, TrigPoly};
use num_bigint::BigInt;
use num_complex::Complex64;

pub fn run_example() -> Result<()> {
    let f = TrigPoly::from_terms([(3, Complex64::new(1.0, 0.0)), (-7, Complex64::new(0.0, 0.5))]);
    let dyadic = AveragingFamily::dyadic(64)?;

    // S_n multiplies each coefficient by n^{-1} sum_{j<=n} e^{2 pi i a_j k}
    let s4 = f.apply_s(&dyadic, 4)?;
    let beta = multiplier_avg(&dyadic, 4, &BigInt::from(3))?;
    println!("S_4 at k = 3: {:.6} (multiplier {:.6})", s4.coeff(&BigInt::from(3)), beta);
    assert!(s4.l2_norm() <= f.l2_norm() + 1e-12);

    // translations commute with averaging and preserve the norm
    let shifted = f.apply_t(0.3);
    let lhs = shifted.apply_s(&dyadic, 4)?;
    let rhs = s4.apply_t(0.3);
    println!("||S T f - T S f|| = {:.2e}", lhs.l2_dist(&rhs));
    println!("||T f|| - ||f|| = {:.2e}", shifted.l2_norm() - f.l2_norm());

    // huge frequencies keep full phase accuracy
    let big = TrigPoly::monomial(BigInt::from(2).pow(200) + 1, Complex64::new(1.0, 0.0));
    println!("S_1 on 2^200 + 1: {:.6}", big.apply_s(&dyadic, 1)?.coeff(&(BigInt::from(2).pow(200) + 1)));

    // Cesaro averages of rotations decay like the closed-form rate
    let rotation = TranslationFamily::default();
    let avg = f.cesaro_t_average(&rotation, 1000)?;
    let k = BigInt::from(3);
    println!(
        "Cesaro average at k = 3: |coefficient| {:.3e}, rate {:.3e}",
        avg.coeff(&k).norm(),
        rotation.cesaro_rate(&k, 1000)
    );

    let re = f.component_part(Part::Real);
    println!("Re f is real: {}, value at 0.1: {:.6}", re.is_real(), re.eval(0.1));
    Ok(())
}

fn main() {
    run_example().expect("operators example");
}

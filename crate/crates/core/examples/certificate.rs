// Search, serialize and re-verify a frequency certificate.
//
// ```bash
// cargo run --release --example certificate
// ```

use entropylab::construction::{find_certificate, verify_certificate, Certificate, SearchLimits, VerifyMode};
use entropylab::{AveragingFamily, Error, Result};

pub fn run_example() -> Result<()> {
    let family = AveragingFamily::reciprocal(1 << 16)?;
    let verified = find_certificate(&family, 2, &SearchLimits::default())?;
    println!("r = 2: windows {:?}, steps {:?}", verified.windows, verified.m);
    println!(
        "worst zero-case deviation {:.6}, worst one-case deviation {:.6}",
        verified.margins.worst_zero_case, verified.margins.worst_one_case
    );

    let json = verified.to_json()?;
    let cert = Certificate::from_json(&json)?;
    let report = verify_certificate(&cert, VerifyMode::Sampled { count: 3, seed: 7 })?;
    println!("sampled re-check of {} vectors passed: {}", report.vectors_checked, report.passed());

    // a single changed step breaks the certificate
    let mut tampered = cert.clone();
    tampered.m[1] += 1;
    let report = verify_certificate(&tampered, VerifyMode::Full)?;
    println!("tampered certificate passes: {}", report.passed());
    if !report.passed() {
        println!("  {}", report.describe_failure());
    }

    // with the default budget the reciprocal family runs out at the third level
    match find_certificate(&family, 3, &SearchLimits::default()) {
        Err(Error::BudgetExhausted { level, best_margin, .. }) => {
            println!("r = 3: budget exhausted at level {level}, best margin {best_margin:?}")
        }
        other => println!("r = 3: {other:?}"),
    }
    Ok(())
}

fn main() {
    run_example().expect("certificate example");
}

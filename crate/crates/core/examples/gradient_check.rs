//! Compare analytic decoder and loss gradients with central differences.

use sfr_core::gradcheck::{run_gradcheck, PASS_THRESHOLD};

fn main() -> sfr_core::Result<()> {
    let report = run_gradcheck(42, 20, 8, 2)?;
    println!("plane  max relative error {:e}", report.max_rel_plane);
    println!("depth  max relative error {:e}", report.max_rel_depth);
    println!("stage  max relative error {:e}", report.max_rel_stage);
    println!(
        "{} (threshold {PASS_THRESHOLD:e})",
        if report.passed() { "PASS" } else { "FAIL" }
    );
    Ok(())
}

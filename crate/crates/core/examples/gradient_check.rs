//! Finite-difference check of the compressor's analytic gradients.
//!
//! ```bash
//! cargo run --release -p tdc --example gradient_check -- 4
//! ```

use tdc::qformer::{grad_check, QFormerConfig, QueryType};

fn main() -> tdc::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    for query_type in [QueryType::AvgPool, QueryType::Learned] {
        let cfg = QFormerConfig { query_type, ..QFormerConfig::small() };
        for seed in 0..seeds {
            let report = grad_check(&cfg, seed)?;
            println!(
                "{query_type:?} seed {seed}: {} parameters, max rel err {:.3e} -> {}",
                report.parameters,
                report.max_rel_error,
                if report.passed { "pass" } else { "FAIL" }
            );
            let worst = report
                .tensors
                .iter()
                .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
                .expect("at least one tensor");
            println!("    worst tensor {} ({:.3e}, abs {:.3e})", worst.name, worst.max_rel_error, worst.max_abs_error);
        }
    }
    Ok(())
}

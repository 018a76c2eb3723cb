//! Desk-scale run of one panel of the ordinal simulation study: repeated
//! draws, the full pipeline per draw, and bias/SD/RMSE against the
//! per-sample overlap-weighted truth. Increase `reps` to 5000 to reproduce
//! the full-fidelity numbers.
//!
//! Run with: cargo run --release --example monte_carlo_ordinal

use hetfx::estimators::CenteringVariant;
use hetfx::report::render_mc_table;
use hetfx::simulation::{run_monte_carlo, DgpSpec, McConfig, Table};

fn main() -> hetfx::Result<()> {
    for (panel, n, reps) in [(1u8, 1000usize, 300usize), (2, 4000, 150)] {
        let spec = DgpSpec::from_panel(Table::Ordinal, panel, n, 42)?;
        let cfg = McConfig {
            spec,
            variants: vec![
                CenteringVariant::RawMean,
                CenteringVariant::CovariatePoly { q: 2 },
                CenteringVariant::IndexPoly { q: 2 },
            ],
            d_targets: vec![1, 2],
            reps,
        };
        let mut report = run_monte_carlo(&cfg)?;
        report.table = Some(Table::Ordinal.label().to_string());
        report.panel = Some(panel);
        print!("{}", render_mc_table(&report));
        println!();
    }
    Ok(())
}

use hetfx::estimators::CenteringVariant;
use hetfx::report::render_mc_table;
use hetfx::simulation::{run_monte_carlo, DgpSpec, McConfig, Table};

fn main() -> hetfx::Result<()> {
    for (panel, n, reps) in [(1u8, 1000usize, 200usize), (2, 1000, 200), (2, 4000, 150)] {
        let spec = DgpSpec::from_panel(Table::Multinomial, panel, n, 42)?;
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
        report.table = Some(Table::Multinomial.label().to_string());
        report.panel = Some(panel);
        print!("{}", render_mc_table(&report));
        println!();
    }
    Ok(())
}

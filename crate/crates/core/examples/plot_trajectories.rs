//! Draws dataset curves over the default constraint geometry as SVG.
//!
//! cargo run --example plot_trajectories -- [out.svg]

use safefm::config::default_constraints;
use safefm::dataset::{generate_dataset, DatasetSpec};
use safefm::plot::write_svg;

fn main() -> safefm::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "trajectories.svg".into());
    let spec = DatasetSpec {
        samples_per_class: 25,
        ..DatasetSpec::default()
    };
    let data = generate_dataset(&spec)?;
    write_svg(&out, &data, &default_constraints())?;
    println!("wrote {} curves to {out}", data.len());
    Ok(())
}

//! Generates a small two-class Bezier dataset and writes it as CSV.
//!
//! cargo run --release --example generate_dataset -- [out.csv]

use safefm::dataset::{generate_dataset, read_dataset, write_dataset, DatasetSpec};

fn main() -> safefm::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "dataset.csv".into());
    let spec = DatasetSpec {
        samples_per_class: 500,
        ..DatasetSpec::default()
    };
    let data = generate_dataset(&spec)?;
    write_dataset(&out, &data)?;
    assert_eq!(read_dataset(&out)?, data);

    for c in 0..2 {
        let ends: Vec<&[f64]> = data
            .iter()
            .filter(|s| s.class.id() == c)
            .map(|s| s.trajectory.select_waypoint(s.trajectory.horizon()).unwrap())
            .collect();
        let mean_x = ends.iter().map(|p| p[0]).sum::<f64>() / ends.len() as f64;
        let mean_y = ends.iter().map(|p| p[1]).sum::<f64>() / ends.len() as f64;
        println!("class {c}: {} curves, mean end point ({mean_x:.3}, {mean_y:.3})", ends.len());
    }
    println!("wrote {out}");
    Ok(())
}

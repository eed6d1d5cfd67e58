//! Prints the default JSON configuration and shows how a partial file is
//! completed with defaults.
//!
//! cargo run --example config_file

use safefm::config::Config;
use safefm::ClassLabel;

fn main() -> safefm::Result<()> {
    println!("{}", Config::default().to_json());

    let cfg = Config::from_json(
        r#"{
            "version": 1,
            "seed": 7,
            "constraints": [
                {"type": "disk_keepout", "center": [0.0, 0.0], "radius": 0.3, "phi0": 2.0},
                {"type": "disk_containment", "center": [1.0, 1.0], "radius": 0.2, "mask": "last", "classes": [0]}
            ]
        }"#,
    )?;
    let class1 = ClassLabel::new(1, 2)?;
    println!(
        "seeds: dataset {}, train {}, sampling {}; class 1 sees {} constraint(s)",
        cfg.dataset_spec().seed,
        cfg.train_config().seed,
        cfg.run_config().seed,
        cfg.constraints_for(class1)?.len()
    );

    match Config::from_json(r#"{"version": 1, "sampling": {"ode_step": 50}}"#) {
        Ok(_) => unreachable!("unknown keys are rejected"),
        Err(e) => println!("rejected: {e}"),
    }
    Ok(())
}

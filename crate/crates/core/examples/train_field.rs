//! Trains a small conditional vector field and saves a checkpoint.
//!
//! cargo run --release --example train_field -- [model.bin]

use safefm::commands::{fit, loss_csv};
use safefm::config::Config;
use safefm::dataset::generate_dataset;
use safefm::model::{load_model, save_model, smoothed};

fn main() -> safefm::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "model.bin".into());
    let mut cfg = Config::default();
    cfg.dataset.samples_per_class = 2000;
    cfg.model.hidden_width = 512;
    cfg.train.steps = 1500;

    let data = generate_dataset(&cfg.dataset_spec())?;
    let outcome = fit(&cfg, &data)?;
    let (first, last) = smoothed(&outcome.losses, 100);
    println!(
        "{} parameters, loss {first:.2} -> {last:.2} over {} steps",
        outcome.field.num_parameters(),
        outcome.losses.len()
    );

    save_model(&outcome.field, &out)?;
    assert_eq!(load_model(&out)?, outcome.field);
    std::fs::write(format!("{out}.loss.csv"), loss_csv(&outcome.losses)).map_err(|e| safefm::Error::Io {
        path: out.clone().into(),
        source: e,
    })?;
    println!("wrote {out}");
    Ok(())
}

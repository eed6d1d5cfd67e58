//! The full FM vs SafeFM comparison on the default configuration: trains
//! the default field (several minutes on one core), then samples 1000
//! trajectories per class with each method.
//!
//! cargo run --release --example table1 -- [samples_per_class]

use safefm::commands::fit;
use safefm::config::Config;
use safefm::dataset::generate_dataset;
use safefm::eval::table1_harness;

fn main() -> safefm::Result<()> {
    let mut cfg = Config::default();
    if let Some(n) = std::env::args().nth(1) {
        cfg.eval.samples_per_class = n.parse().expect("samples per class");
    }
    let data = generate_dataset(&cfg.dataset_spec())?;
    let field = fit(&cfg, &data)?.field;
    let table = table1_harness(&field, &cfg)?;
    print!("{}", table.to_text());
    print!("{}", table.to_csv());
    Ok(())
}

//! Writes a synthetic georeferenced scene, then runs ingest, split, train,
//! evaluate and predict from `examples/configs/demo.yaml`.
//!
//! `cargo run --release --example pipeline_end_to_end -- [dir]`
//!
//! The same directory then works with the CLI, e.g.
//! `terraseg evaluate --config <dir>/demo.yaml`.

use terraseg::pipeline::{cmd_evaluate, cmd_ingest, cmd_predict, cmd_split, cmd_train, load_config};
use terraseg::synthetic::{demo_scene, write_demo_scene};

const CONFIG: &str = include_str!("configs/demo.yaml");

fn main() -> terraseg::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TERRASEG_LOG", "info")).init();
    let dir = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("terraseg-demo"), Into::into);
    if dir.exists() {
        std::fs::remove_dir_all(&dir)?;
    }
    let scene = demo_scene(160, 96, 4, 4, 5, true, 42)?;
    write_demo_scene(&dir, "scene", &scene)?;
    let config_path = dir.join("demo.yaml");
    std::fs::write(&config_path, CONFIG)?;
    let cfg = load_config(&config_path)?;

    let ingest = cmd_ingest(&cfg)?;
    println!("ingested {} arrays into {}", ingest.arrays.len(), ingest.store.display());
    let split = cmd_split(&cfg)?;
    println!("fold sizes {:?}", split.manifest.sizes);
    let train = cmd_train(&cfg)?;
    println!("trained {} epochs, final train loss {:.4}", train.epochs_run, train.final_train_loss);
    let eval = cmd_evaluate(&cfg)?;
    println!("{}", serde_json::to_string_pretty(&eval.report)?);
    let pred = cmd_predict(&cfg)?;
    println!("prediction mask {}x{} at {}", pred.width, pred.height, pred.mask.display());
    Ok(())
}

//! Creates a chunked store with the dataset hierarchy, writes a region and
//! reads it back.
//!
//! `cargo run --example chunk_store -- [dir]`

use terraseg::dtype::DType;
use terraseg::store::{render_tree, ArraySpec, Codec, Store};
use terraseg::tensor::Tensor;

fn main() -> terraseg::Result<()> {
    let dir = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("terraseg-chunk-store"), Into::into);
    if dir.exists() {
        std::fs::remove_dir_all(&dir)?;
    }
    let store = Store::create(&dir)?;
    store.create_groups("Romania/2018/Labels")?;
    store.create_groups("Romania/2018/Sentinel-2")?;
    let spec = ArraySpec::new(&[53, 3, 3, 16, 16, 4], &[1, 1, 1, 16, 16, 4], DType::U16).codec(Codec::Deflate);
    let mut s2 = store.create_array("Romania/2018/Sentinel-2/10m", &spec)?;
    let labels = store.create_array("Romania/2018/Labels/clc", &ArraySpec::new(&[3, 3, 16, 16], &[1, 1, 16, 16], DType::U8).fill(255.0))?;

    let block = Tensor::from_vec(&[1, 1, 2, 16, 16, 4], (0..2 * 16 * 16 * 4).map(|i| f64::from(i % 4000)).collect())?;
    s2.write_region(&[14, 1, 0, 0, 0, 0], &block)?;
    let back = s2.read_region(&[14, 1, 0, 0, 0, 0], &[1, 1, 2, 16, 16, 4])?;
    println!("region round trip exact: {}", back == block);
    let empty = labels.read_region(&[0, 0, 0, 0], &[1, 1, 2, 2])?;
    println!("unwritten label chunk reads as fill: {:?}", empty.data());
    print!("{}", render_tree(&store.list_tree("")?));
    println!("store at {}", dir.display());
    Ok(())
}

//! Save compressor parameters to a TDCP checkpoint and load them back.
//!
//! ```bash
//! cargo run --release -p tdc --example checkpoint_roundtrip
//! ```

use tdc::qformer::{encode_tdcp, init_params, load_checkpoint, save_checkpoint, QFormerConfig, QueryType};

fn main() -> tdc::Result<()> {
    let cfg = QFormerConfig { query_type: QueryType::Learned, seed: 9, ..QFormerConfig::default() };
    let params = init_params(&cfg)?;
    let path = std::env::temp_dir().join("qformer.tdcp");
    save_checkpoint(&params, &path)?;
    let loaded = load_checkpoint(&path)?;
    let bytes = encode_tdcp(&params)?;
    println!("{} parameters in {} tensors, {} bytes", params.parameter_count(), params.tensors().len(), bytes.len());
    for (name, t) in params.tensors().iter().take(6) {
        println!("  {name:28} {:?}", t.shape());
    }
    println!("bitwise equal after reload: {}", loaded == params);

    let mut corrupted = bytes.clone();
    corrupted[0] = b'X';
    match tdc::qformer::decode_tdcp(&corrupted) {
        Err(e) => println!("corrupted magic rejected: {e}"),
        Ok(_) => println!("corrupted magic accepted?!"),
    }
    Ok(())
}

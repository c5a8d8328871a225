//! Regenerate `assets/colornames.bin`.

use rpcf::features::ColorNameTable;

fn main() -> std::io::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/assets/colornames.bin").into());
    std::fs::write(&path, ColorNameTable::synthesize().to_bytes())?;
    println!("wrote {path}");
    Ok(())
}

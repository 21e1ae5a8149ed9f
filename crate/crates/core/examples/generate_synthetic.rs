//! Regenerates the bundled synthetic snapshot set in `data/synthetic_cone`.
//!
//! ```text
//! cargo run -p nslb --example generate_synthetic [-- <dir>]
//! ```

use std::path::PathBuf;

use nslb::experiments::{write_synthetic_set, SnapshotManifest};

fn main() -> nslb::Result<()> {
    let dir = std::env::args_os()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/synthetic_cone"));
    let manifest = SnapshotManifest {
        c: 3.0,
        lambda: 0.5,
        mu: 0.3,
        t_s: 1.0,
        x_s: vec![0.0, 0.0],
        t_1: 0.5,
        n: 64,
        gap_min: 0.02,
        snapshots: (0..12).map(|i| format!("snapshot_{i:02}.nslb")).collect(),
    };
    write_synthetic_set(&dir, &manifest)?;
    println!("wrote {} snapshots to {}", manifest.snapshots.len(), dir.display());
    Ok(())
}

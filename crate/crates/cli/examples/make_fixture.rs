//! Regenerates the checked-in test fixtures.
//!
//! ```text
//! cargo run -p tog-cli --example make_fixture -- crates/cli/tests/fixtures
//! ```

#[path = "../tests/common/fixture.rs"]
mod fixture;

use std::path::PathBuf;

fn main() {
    let root = std::env::args_os()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures")));
    for sub in ["five_scenes", "symmetric"] {
        let dir = root.join(sub);
        if dir.exists() {
            std::fs::remove_dir_all(&dir).expect("clear old fixture");
        }
    }
    fixture::build(&root.join("five_scenes"));
    fixture::build_symmetric(&root.join("symmetric"));
    println!("fixtures written to {}", root.display());
}

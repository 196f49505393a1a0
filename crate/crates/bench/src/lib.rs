//! Fixtures shared by the benchmarks in `benches/`.

use std::path::PathBuf;

use lfstl::{load_scenario, Scenario};

/// One of the shipped scenario files, by stem.
pub fn shipped(stem: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(stem);
    load_scenario(path).expect("shipped scenario loads")
}

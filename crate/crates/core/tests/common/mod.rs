#![allow(dead_code)]

use std::path::PathBuf;

use advscore::ingest::{infer_counts_manifest, parse_count_table, DatasetManifest};
use advscore::model::FrequencyTable;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

pub fn table1() -> (FrequencyTable, DatasetManifest) {
    let bytes = std::fs::read(fixture("table1.csv")).unwrap();
    let manifest = infer_counts_manifest(&bytes[..]).unwrap();
    let table = parse_count_table(&bytes[..], &manifest).unwrap();
    (table, manifest)
}

#![no_main]

use hincrec::data::Dataset;
use libfuzzer_sys::fuzz_target;

const NODES: &str = "u0\tuser\nu1\tuser\nc0\tcourse\nv0\tvideo\nk0\tconcept\nk1\tconcept\n";

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(ds) = Dataset::from_tsv(NODES, text) {
        let (nodes, edges) = ds.to_tsv();
        let back = Dataset::from_tsv(&nodes, &edges).expect("written files reload");
        assert_eq!(back.graph.snapshot_digest(), ds.graph.snapshot_digest());
        assert_eq!(back.clicks, ds.clicks);
    }
});

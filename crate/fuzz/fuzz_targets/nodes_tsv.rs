#![no_main]

use hincrec::data::Dataset;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(ds) = Dataset::from_tsv(text, "") {
        let (nodes, edges) = ds.to_tsv();
        let back = Dataset::from_tsv(&nodes, &edges).expect("written files reload");
        assert_eq!(back.graph.counts(), ds.graph.counts());
    }
});

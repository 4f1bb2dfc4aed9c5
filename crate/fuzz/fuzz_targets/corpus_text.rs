#![no_main]

use hincrec::metapath::PathCorpus;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(corpus) = PathCorpus::from_text(text) {
        let back = PathCorpus::from_text(&corpus.to_text()).expect("written corpus reloads");
        assert!(back.iter().eq(corpus.iter()));
    }
});

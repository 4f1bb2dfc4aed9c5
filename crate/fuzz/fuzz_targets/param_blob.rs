#![no_main]

use hincrec::model::Model;
use hincrec::params::ParamStore;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(store) = ParamStore::from_blob(data) {
        let again = ParamStore::from_blob(&store.to_blob()).expect("written blobs reload");
        assert_eq!(again.to_blob(), store.to_blob());
    }
    let _ = Model::from_blob(data);
});

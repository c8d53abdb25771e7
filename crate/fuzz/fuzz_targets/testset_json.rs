#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(ts) = dmap_core::envs::testset::TestSet::from_bytes(data) {
        // accepted test sets are fully in-bounds and roundtrip
        for ctx in &ts.contexts {
            for c in ctx.components() {
                assert!(c.abs() <= ts.sigma + 1e-12);
            }
        }
        let json = ts.to_json();
        let again = dmap_core::envs::testset::TestSet::from_bytes(json.as_bytes()).expect("roundtrip");
        assert_eq!(again, ts);
    }
});

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok((samples, env, dims)) = dmap_core::distill::dataset_from_bytes(data) {
        let bytes = dmap_core::distill::dataset_bytes(&samples, &env, dims);
        let (again, env2, dims2) = dmap_core::distill::dataset_from_bytes(&bytes).expect("roundtrip");
        assert_eq!((again.len(), env2, dims2), (samples.len(), env, dims));
    }
});

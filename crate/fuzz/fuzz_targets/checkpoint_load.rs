#![no_main]

use libfuzzer_sys::fuzz_target;

// Checkpoint parsing must never panic or over-allocate on attacker-shaped
// bytes; on success the restored policy must be internally consistent.
fuzz_target!(|data: &[u8]| {
    if let Ok(policy) = dmap_core::io::policy_from_bytes(data) {
        let bytes = dmap_core::io::checkpoint_bytes(&policy);
        let again = dmap_core::io::policy_from_bytes(&bytes).expect("re-serialized checkpoint parses");
        assert_eq!(again.store.len(), policy.store.len());
    }
});

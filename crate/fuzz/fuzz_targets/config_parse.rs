#![no_main]
use antago_core::harness::{ConfigEntries, SimConfig};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    // Never panics; anything accepted must also validate.
    if let Ok(entries) = ConfigEntries::parse(data) {
        if let Ok(cfg) = SimConfig::from_entries(&entries) {
            cfg.validate().expect("parsed config failed validation");
        }
    }
});

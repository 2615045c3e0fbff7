#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    // default target, then a named one that may be missing
    if let Ok(ds) = cems_cli::io::parse_csv(data, None) {
        assert!(ds.joint().iter().all(|v| v.is_finite()));
    }
    let _ = cems_cli::io::parse_csv(data, Some(&["y".to_string()]));
});

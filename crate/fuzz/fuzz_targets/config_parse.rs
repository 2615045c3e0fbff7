#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = cems_cli::config::ConfigFile::parse(text) {
            for key in cems_cli::config::KNOWN_KEYS {
                let _ = cfg.get(key);
                let _ = cfg.pick::<f64>(key, None);
            }
        }
    }
});

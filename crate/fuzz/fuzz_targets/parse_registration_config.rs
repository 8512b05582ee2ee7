#![no_main]

use libfuzzer_sys::fuzz_target;
use warpreg::io::parse_registration_config;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = parse_registration_config(text) {
        cfg.validate().unwrap();
    }
});

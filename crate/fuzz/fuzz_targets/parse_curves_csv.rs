#![no_main]

use libfuzzer_sys::fuzz_target;
use warpreg::io::{parse_curves_csv, write_long_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(set) = parse_curves_csv(data) else {
        return;
    };
    assert_eq!(set.ids.len(), set.curves.len());
    // whatever parses must survive a write and re-read unchanged
    let mut buf = Vec::new();
    write_long_csv(&mut buf, "value", &set.ids, &set.curves).unwrap();
    let again = parse_curves_csv(&buf).unwrap();
    assert_eq!(again.ids, set.ids);
    assert_eq!(again.curves, set.curves);
});

#![no_main]

use flexid::experiment::parse_grid;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(grid) = parse_grid(text, "fuzz") {
        for cfg in &grid {
            cfg.validate().expect("grid entries are validated on load");
        }
    }
});

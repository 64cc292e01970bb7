#![no_main]

use flexid::vfa::ReferenceSpec;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = text.parse::<ReferenceSpec>() {
        assert_eq!(spec.to_string().parse::<ReferenceSpec>().unwrap(), spec);
    }
});

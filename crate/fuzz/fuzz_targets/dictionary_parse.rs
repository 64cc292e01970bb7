#![no_main]

use flexid::intent::EditDictionary;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(dict) = EditDictionary::parse(text, "fuzz") {
        let printed: String = dict.entries().iter().map(|e| format!("{}: {}\n", e.category, e.phrase)).collect();
        let again = EditDictionary::parse(&printed, "fuzz-reprint").expect("printed dictionary parses");
        assert_eq!(again, dict);
    }
});

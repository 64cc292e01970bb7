#![no_main]

use flexid::experiment::parse_run_config;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = parse_run_config(text, "fuzz") {
        let again = parse_run_config(&cfg.to_json(), "fuzz-reprint").expect("printed config parses");
        assert_eq!(again, cfg);
        assert_eq!(again.stack_hash(), cfg.stack_hash());
    }
});

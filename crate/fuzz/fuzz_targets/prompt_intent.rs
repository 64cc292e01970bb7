#![no_main]

use std::sync::OnceLock;

use flexid::intent::{detect_intent, normalize_prompt, EditDictionary};
use libfuzzer_sys::fuzz_target;

fn dict() -> &'static EditDictionary {
    static DICT: OnceLock<EditDictionary> = OnceLock::new();
    DICT.get_or_init(EditDictionary::default_dictionary)
}

fuzz_target!(|data: &[u8]| {
    let text = String::from_utf8_lossy(data);
    let prompt = normalize_prompt(&text);
    assert_eq!(normalize_prompt(&prompt.joined()).tokens, prompt.tokens);
    let intent = detect_intent(&prompt, dict());
    assert_eq!(intent.indicator == 1, !intent.matches.is_empty());
    for m in &intent.matches {
        assert!(m.position + m.tokens.len() <= prompt.tokens.len());
    }
});

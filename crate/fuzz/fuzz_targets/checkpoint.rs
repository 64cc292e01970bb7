#![no_main]

use flexid::harness::checkpoint::{checkpoint_from_str, checkpoint_to_string};
use libfuzzer_sys::fuzz_target;
use serde_json::Value;

/// Skips documents whose declared sizes would only exercise the allocator.
fn small_enough(doc: &Value) -> bool {
    let fields = [
        ("world", "dim"),
        ("world", "identities"),
        ("world", "attributes"),
        ("arch", "d_model"),
        ("arch", "blocks"),
        ("arch", "latent_tokens"),
        ("arch", "local_tokens"),
        ("arch", "sip_tokens"),
        ("arch", "sip_width"),
        ("arch", "time_features"),
        ("arch", "ffn_mult"),
        ("arch", "heads"),
    ];
    fields
        .iter()
        .all(|(section, key)| doc.get(section).and_then(|s| s.get(key)).and_then(Value::as_u64).is_none_or(|v| v <= 64))
}

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(doc) = serde_json::from_str::<Value>(text) else { return };
    if !small_enough(&doc) {
        return;
    }
    if let Ok(stack) = checkpoint_from_str(text, "fuzz") {
        let again = checkpoint_from_str(&checkpoint_to_string(&stack), "fuzz-reprint").expect("saved checkpoint loads");
        assert_eq!(again.params, stack.params);
        assert_eq!(again.meta, stack.meta);
    }
});

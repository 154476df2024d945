#![no_main]

use libfuzzer_sys::fuzz_target;
use rulecast::rules::{parse_rules, serialize_rules};

fuzz_target!(|data: &[u8]| {
    if let Ok(ruleset) = parse_rules(data) {
        // anything that parses must re-serialize and parse back unchanged
        let mut bytes = Vec::new();
        serialize_rules(&ruleset, &mut bytes).unwrap();
        let again = parse_rules(bytes.as_slice()).unwrap();
        assert_eq!(ruleset.rules.len(), again.rules.len());
    }
});

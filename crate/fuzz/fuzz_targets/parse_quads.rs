#![no_main]

use libfuzzer_sys::fuzz_target;
use rulecast::tkg::parse_quads;

fuzz_target!(|data: &[u8]| {
    let _ = parse_quads(data);
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use rulecast::tkg::{parse_dataset, ParseMode};

// NUL bytes split the input into the three splits.
fuzz_target!(|data: &[u8]| {
    let mut parts = data.splitn(3, |&b| b == 0);
    let train = parts.next().unwrap_or_default();
    let valid = parts.next().unwrap_or_default();
    let test = parts.next().unwrap_or_default();
    for mode in [ParseMode::Ids, ParseMode::Names] {
        let _ = parse_dataset(train, valid, test, mode);
    }
});

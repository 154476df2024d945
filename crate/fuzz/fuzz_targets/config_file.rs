#![no_main]

use libfuzzer_sys::fuzz_target;
use rulecast::config::Config;

fuzz_target!(|data: &str| {
    let mut config = Config::default();
    let _ = config.apply_file(data);
});

#![no_main]

use hardball::config::RunConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = RunConfig::from_toml(text) {
        // Anything accepted must survive a round trip unchanged.
        let again = RunConfig::from_toml(&cfg.to_toml()).expect("re-parse of serialized config");
        assert_eq!(again, cfg);
    }
});

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(config) = epifit_core::parse_region_config(text) {
        let round = epifit_core::parse_region_config(&config.to_config_string()).expect("own output parses");
        assert_eq!(round, config);
    }
});

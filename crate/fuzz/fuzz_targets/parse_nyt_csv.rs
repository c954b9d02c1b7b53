#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    // First line picks the region so the fuzzer can reach the row logic.
    let (region, body) = text.split_once('\n').unwrap_or(("", text));
    if let Ok(series) = epifit_core::parse_nyt_csv(body, region) {
        let round = epifit_core::parse_nyt_csv(&series.to_nyt_csv(), region).expect("own output parses");
        assert_eq!(round.daily_deaths, series.daily_deaths);
    }
});

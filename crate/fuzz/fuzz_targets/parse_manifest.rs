#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(manifest) = epifit_cli::manifest::parse_manifest(text) {
        let _ = epifit_cli::manifest::parse_manifest(&manifest.to_json()).expect("own output parses");
    }
});

//! Manifest parser. Anything that parses must survive a print/reparse cycle
//! unchanged.

#![no_main]

use castsearch::dataio::{parse_manifest, write_manifest};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(stream) = parse_manifest(text, "fuzz") else {
        return;
    };
    let mut bytes = Vec::new();
    write_manifest(&stream, &mut bytes).expect("parsed manifests reprint");
    let text = std::str::from_utf8(&bytes).expect("manifests are utf-8");
    let again = parse_manifest(text, "fuzz").expect("reprinted manifests reparse");
    assert_eq!(again, stream);
});

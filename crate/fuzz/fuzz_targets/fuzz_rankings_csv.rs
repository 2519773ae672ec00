//! Per-cast ranking CSV decoder.

#![no_main]

use castsearch::dataio::rankings_from_reader;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = rankings_from_reader(data);
});

//! Cache occupancy CSV decoder.

#![no_main]

use castsearch::dataio::cache_series_from_reader;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = cache_series_from_reader(data);
});

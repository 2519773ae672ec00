//! Gate-network checkpoint decoder, including network reconstruction.

#![no_main]

use castsearch::dataio::checkpoint_from_slice;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(ckpt) = checkpoint_from_slice(data) {
        let _ = ckpt.to_network();
    }
});

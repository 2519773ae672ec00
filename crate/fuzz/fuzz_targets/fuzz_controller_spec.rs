//! Controller spec decoder. Manual specs are built outright; learned specs
//! stop at threshold resolution because building them reads checkpoint files.

#![no_main]

use castsearch::dataio::controller_spec_from_slice;
use castsearch::ControllerKind;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(spec) = controller_spec_from_slice(data) {
        let _ = spec.thresholds();
        if spec.kind == ControllerKind::Manual {
            let _ = spec.build();
        }
    }
});

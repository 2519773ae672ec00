//! Decision trace decoder, walking the derived views a consumer would use.

#![no_main]

use castsearch::dataio::trace_from_str;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(trace) = trace_from_str(text, "fuzz") {
        let _ = trace.finalizations().count();
        for step in &trace.steps {
            let _ = step.scores.len();
        }
    }
});

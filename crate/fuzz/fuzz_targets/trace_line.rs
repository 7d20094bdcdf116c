#![no_main]
use libfuzzer_sys::fuzz_target;
use tensorclass::search::{parse_rle, parse_trace_line, rle};

fuzz_target!(|data: &[u8]| {
    let Ok(line) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(rec) = parse_trace_line(line) {
        assert!(rec.predictor < rec.k.len());
        assert_eq!(parse_rle(&rle(&rec.k)).unwrap(), rec.k);
    }
});

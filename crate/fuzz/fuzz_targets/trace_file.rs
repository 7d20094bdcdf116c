#![no_main]
use libfuzzer_sys::fuzz_target;
use tensorclass::search::SearchTrace;

fuzz_target!(|data: &[u8]| {
    let Ok(trace) = SearchTrace::read_text(data) else {
        return;
    };
    let mut buf = Vec::new();
    trace.write_text(&mut buf).expect("write to memory");
    assert_eq!(SearchTrace::read_text(buf.as_slice()).expect("own output loads"), trace);
});

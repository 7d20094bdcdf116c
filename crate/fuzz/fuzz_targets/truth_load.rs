#![no_main]
use libfuzzer_sys::fuzz_target;
use tensorclass::archive::{read_truth, write_truth};

fuzz_target!(|data: &[u8]| {
    let Ok(truth) = read_truth(data) else {
        return;
    };
    let mut buf = Vec::new();
    write_truth(&truth, &mut buf).expect("write to memory");
    assert_eq!(read_truth(buf.as_slice()).expect("own output loads"), truth);
});

#![no_main]
use libfuzzer_sys::fuzz_target;
use tensorclass::data::{read_csv, read_csv_with_schema, write_csv};

fuzz_target!(|data: &[u8]| {
    let Ok((ds, _)) = read_csv(data, "y") else {
        return;
    };
    // writing and reading back must reproduce the encoding exactly
    let mut buf = Vec::new();
    write_csv(&ds, &mut buf).expect("write to memory");
    let (back, report) = read_csv(buf.as_slice(), "y").expect("own output loads");
    assert_eq!(back, ds);
    assert!(report.dropped_constant.is_empty());
    let (again, report) = read_csv_with_schema(buf.as_slice(), ds.schema()).expect("loads against own schema");
    assert_eq!(again, ds);
    assert!(report.unseen_levels.is_empty());
});

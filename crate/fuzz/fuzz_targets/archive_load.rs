#![no_main]
use libfuzzer_sys::fuzz_target;
use tensorclass::archive::ModelArchive;

fuzz_target!(|data: &[u8]| {
    let Ok(archive) = ModelArchive::read(data) else {
        return;
    };
    let model = archive.model().expect("read validates the model");
    let mut buf = Vec::new();
    archive.write(&mut buf).expect("write to memory");
    assert_eq!(ModelArchive::read(buf.as_slice()).expect("own output loads"), archive);
    let x = vec![0; model.shape().predictors()];
    let p = model.predict_proba(&x).expect("in-range point");
    assert!(p.iter().all(|v| v.is_finite()));
});

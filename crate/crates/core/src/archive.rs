//! Versioned JSON files: the fitted model archive and the synthetic truth
//! sidecar.
//!
//! Both carry `format` and `version` fields that are checked before the
//! rest of the document is interpreted.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::Schema;
use crate::error::{Error, Result};
use crate::gibbs::FitResult;
use crate::oracles::SyntheticTruth;
use crate::predict::PredictiveModel;
use crate::priors::Hyperparams;
use crate::search::{InclusionSummary, SearchConfig};

pub const MODEL_FORMAT: &str = "tensorclass-model";
pub const MODEL_VERSION: u64 = 1;
pub const TRUTH_FORMAT: &str = "tensorclass-truth";
pub const TRUTH_VERSION: u64 = 1;

/// Everything needed to predict, plus how it was obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArchive {
    pub format: String,
    pub version: u64,
    pub schema: Schema,
    pub hyperparams: Hyperparams,
    pub search: SearchConfig,
    pub summary: InclusionSummary,
    pub class_frequencies: Vec<f64>,
    /// Draws over the selected predictors only.
    pub fit: FitResult,
}

impl ModelArchive {
    pub fn new(
        schema: Schema,
        hyperparams: Hyperparams,
        search: SearchConfig,
        summary: InclusionSummary,
        model: &PredictiveModel,
    ) -> Result<Self> {
        if model.selected() != summary.selected.as_slice() {
            return Err(Error::ShapeMismatch("model and summary select different predictors".into()));
        }
        if *model.shape() != schema.shape()? {
            return Err(Error::ShapeMismatch("model does not match the schema".into()));
        }
        Ok(ModelArchive {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            schema,
            hyperparams,
            search,
            summary,
            class_frequencies: model.class_frequencies().to_vec(),
            fit: model.fit().clone(),
        })
    }

    pub fn model(&self) -> Result<PredictiveModel> {
        PredictiveModel::new(
            self.schema.shape()?,
            self.summary.selected.clone(),
            self.fit.clone(),
            self.class_frequencies.clone(),
        )
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer(&mut w, self)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn read<R: Read>(r: R) -> Result<Self> {
        let value: Value = serde_json::from_reader(r)?;
        check_header(&value, MODEL_FORMAT, MODEL_VERSION)?;
        let archive: ModelArchive = serde_json::from_value(value)?;
        archive.model()?;
        Ok(archive)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        ModelArchive::read(BufReader::new(File::open(path)?))
    }
}

fn check_header(value: &Value, format: &str, supported: u64) -> Result<()> {
    let found = value.get("format").and_then(Value::as_str);
    if found != Some(format) {
        return Err(Error::Validation(format!("expected a `{format}` document, found {found:?}")));
    }
    match value.get("version").and_then(Value::as_u64) {
        Some(v) if v == supported => Ok(()),
        Some(v) => Err(Error::UnsupportedVersion { found: v, supported }),
        None => Err(Error::Validation("missing or non-integer `version`".into())),
    }
}

#[derive(Serialize, Deserialize)]
struct TruthFile {
    format: String,
    version: u64,
    levels: Vec<usize>,
    /// 1-based
    relevant: Vec<usize>,
    /// `P(Y = 1)` per combination of relevant levels, last fastest.
    table: Vec<f64>,
}

pub fn write_truth<W: Write>(truth: &SyntheticTruth, mut w: W) -> Result<()> {
    let file = TruthFile {
        format: TRUTH_FORMAT.into(),
        version: TRUTH_VERSION,
        levels: truth.shape().dims().to_vec(),
        relevant: truth.relevant().iter().map(|j| j + 1).collect(),
        table: truth.table().to_vec(),
    };
    serde_json::to_writer(&mut w, &file)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_truth<R: Read>(r: R) -> Result<SyntheticTruth> {
    let value: Value = serde_json::from_reader(r)?;
    check_header(&value, TRUTH_FORMAT, TRUTH_VERSION)?;
    let file: TruthFile = serde_json::from_value(value)?;
    let relevant = file
        .relevant
        .iter()
        .map(|&j| j.checked_sub(1).ok_or_else(|| Error::Validation("relevant indices are 1-based".into())))
        .collect::<Result<Vec<_>>>()?;
    SyntheticTruth::new(file.levels, relevant, file.table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::GibbsConfig;
    use crate::pipeline::run_two_stage;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_archive() -> ModelArchive {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let truth = SyntheticTruth::new(vec![3, 3, 3], vec![1], vec![0.05, 0.5, 0.95]).unwrap();
        let train = truth.sample(&mut rng, 150).unwrap();
        let hp = Hyperparams::new(1.0, 2, 0.5, 3).unwrap();
        let search = SearchConfig::new(200, 1);
        let out = run_two_stage(&train, &hp, &search, &GibbsConfig::new(60, 2)).unwrap();
        ModelArchive::new(train.schema().clone(), hp, search, out.summary, &out.model).unwrap()
    }

    #[test]
    fn round_trip_is_bitwise() {
        let a = small_archive();
        let mut buf = Vec::new();
        a.write(&mut buf).unwrap();
        let b = ModelArchive::read(buf.as_slice()).unwrap();
        assert_eq!(a, b);
        let (ma, mb) = (a.model().unwrap(), b.model().unwrap());
        for x in ma.shape().grid() {
            let (pa, pb) = (ma.predict_proba(&x).unwrap(), mb.predict_proba(&x).unwrap());
            assert!(pa.iter().zip(&pb).all(|(u, v)| u.to_bits() == v.to_bits()));
        }
    }

    #[test]
    fn version_checked_first() {
        let a = small_archive();
        let mut v = serde_json::to_value(&a).unwrap();
        v["version"] = 2.into();
        // numeric garbage after the header must not matter
        v["fit"] = "garbage".into();
        let r = ModelArchive::read(v.to_string().as_bytes());
        assert!(matches!(r, Err(Error::UnsupportedVersion { found: 2, supported: 1 })), "{r:?}");
        v["format"] = "other".into();
        assert!(matches!(ModelArchive::read(v.to_string().as_bytes()), Err(Error::Validation(_))));
    }

    #[test]
    fn corrupted_input_is_an_error() {
        let a = small_archive();
        let mut buf = Vec::new();
        a.write(&mut buf).unwrap();
        for cut in [0, 1, buf.len() / 3, buf.len() - 3] {
            assert!(ModelArchive::read(&buf[..cut]).is_err());
        }
        let text = String::from_utf8(buf).unwrap().replacen("\"draws\"", "\"drawz\"", 1);
        assert!(ModelArchive::read(text.as_bytes()).is_err());
    }

    #[test]
    fn truth_round_trip() {
        let t = SyntheticTruth::generate(&mut ChaCha8Rng::seed_from_u64(3), 15, 4, &[8, 10, 12]).unwrap();
        let mut buf = Vec::new();
        write_truth(&t, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("\"relevant\":[9,11,13]"));
        assert_eq!(read_truth(buf.as_slice()).unwrap(), t);
        let bad = text.replace("\"relevant\":[9,11,13]", "\"relevant\":[0,11,13]");
        assert!(read_truth(bad.as_bytes()).is_err());
    }

    #[test]
    fn truth_sample_round_trips_through_csv() {
        let t = SyntheticTruth::new(vec![2, 3], vec![1], vec![0.2, 0.4, 0.6]).unwrap();
        let ds = t.sample(&mut ChaCha8Rng::seed_from_u64(4), 40).unwrap();
        let mut buf = Vec::new();
        crate::data::write_csv(&ds, &mut buf).unwrap();
        let (back, _) = crate::data::read_csv(buf.as_slice(), "y").unwrap();
        let aligned = t.aligned_to(back.schema()).unwrap();
        for i in 0..back.len() {
            let f = aligned.prob_one(&back.row_usize(i)).unwrap();
            let g = t.prob_one(&ds.row_usize(i)).unwrap();
            let same_class = back.schema().response.levels[1] == "1";
            assert!((if same_class { f } else { 1.0 - f } - g).abs() < 1e-15);
        }
    }
}

//! Two-stage fitting: stochastic search over `(k, A)`, then Gibbs sampling
//! of the selected model.

use crate::data::Dataset;
use crate::error::Result;
use crate::gibbs::{run_gibbs, GibbsConfig};
use crate::predict::PredictiveModel;
use crate::priors::Hyperparams;
use crate::search::{run_search, summarize, InclusionSummary, Partition, SearchConfig, SearchTrace};
use crate::tensor::{Mixer, ModelIndex};

/// Weight a starting mixer puts on a level's own block.
pub const HANDOFF_WEIGHT: f64 = 0.95;

/// Mixers that put [`HANDOFF_WEIGHT`] on each level's block in `modal` and
/// spread the rest evenly.
pub fn handoff_mixers(modal: &[Partition]) -> Vec<Mixer> {
    modal
        .iter()
        .map(|part| {
            let k = part.block_count();
            let off = (1.0 - HANDOFF_WEIGHT) / (k - 1) as f64;
            let rows = (0..part.levels())
                .map(|v| {
                    let mut row = vec![off; k];
                    row[part.label(v)] = HANDOFF_WEIGHT;
                    row
                })
                .collect();
            Mixer::from_rows(rows).expect("rows are on the simplex")
        })
        .collect()
}

/// Gibbs sampling of the median probability model with the modal
/// clustering of each selected predictor as its starting point.
pub fn fit_selected(
    train: &Dataset,
    hp: &Hyperparams,
    summary: &InclusionSummary,
    config: &GibbsConfig,
) -> Result<PredictiveModel> {
    let reduced = train.select_columns(&summary.selected);
    let k = ModelIndex::new(summary.modal_k(), &reduced.shape()?)?;
    let mixers = handoff_mixers(&summary.modal);
    let fit = run_gibbs(&reduced, &k, hp, config, Some(&mixers))?;
    PredictiveModel::new(train.shape()?, summary.selected.clone(), fit, train.class_frequencies())
}

#[derive(Debug, Clone)]
pub struct TwoStage {
    pub trace: SearchTrace,
    pub summary: InclusionSummary,
    pub model: PredictiveModel,
}

pub fn run_two_stage(
    train: &Dataset,
    hp: &Hyperparams,
    search: &SearchConfig,
    gibbs: &GibbsConfig,
) -> Result<TwoStage> {
    let trace = run_search(train, hp, search)?;
    let summary = summarize(&trace, search.burnin)?;
    let model = fit_selected(train, hp, &summary, gibbs)?;
    Ok(TwoStage { trace, summary, model })
}

//! Glue from a dataset and [`SelectionParams`] to a [`SelectionResult`].

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::aggregation::{AggregatedSeries, AggregationKind};
use crate::error::{Error, Result};
use crate::features::{dataset_codes, DescriptorConfig, LatentCode, StructuralMatrix};
use crate::grid::{Dataset, FocusRange, Region};
use crate::selector::{
    select_salient, CombinedCost, Constraints, CostMatrix, PairBreakdown, SelectionParams,
};

/// Cost inputs of one focus range: structural matrix over the range's codes
/// and the normalized aggregate series.
#[derive(Debug, Clone)]
pub struct CostInputs {
    pub range: FocusRange,
    pub structural: Arc<StructuralMatrix>,
    pub series: Arc<AggregatedSeries>,
}

impl CostInputs {
    /// Builds both inputs from whole-dataset codes.
    pub fn build(
        dataset: &Dataset,
        codes: &[LatentCode],
        range: FocusRange,
        region: Option<&Region>,
        kind: AggregationKind,
    ) -> Result<Self> {
        Ok(Self {
            range,
            structural: Arc::new(range_structural(dataset, codes, range)?),
            series: Arc::new(AggregatedSeries::compute(dataset, range, region, kind)?),
        })
    }
}

/// Structural matrix over the codes of `range`, indexed range-relatively.
pub fn range_structural(
    dataset: &Dataset,
    codes: &[LatentCode],
    range: FocusRange,
) -> Result<StructuralMatrix> {
    check_code_count(dataset, codes)?;
    range.validate(dataset.len())?;
    StructuralMatrix::from_codes(&codes[range.start..=range.end])
}

pub fn check_code_count(dataset: &Dataset, codes: &[LatentCode]) -> Result<()> {
    if codes.len() != dataset.len() {
        return Err(Error::InvalidCode(format!(
            "{} latent codes supplied for a dataset of {} frames",
            codes.len(),
            dataset.len()
        )));
    }
    Ok(())
}

/// Codes for `region`, or `imported` when given (used as-is for any region).
pub fn resolve_codes(
    dataset: &Dataset,
    region: Option<&Region>,
    imported: Option<Vec<LatentCode>>,
) -> Result<Vec<LatentCode>> {
    match imported {
        Some(codes) => {
            check_code_count(dataset, &codes)?;
            Ok(codes)
        }
        None => dataset_codes(dataset, region, &DescriptorConfig::default()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Absolute frame indices, strictly increasing.
    pub steps: Vec<usize>,
    pub total_cost: f64,
    /// Breakdown per consecutive pair, with absolute frame indices.
    pub pair_costs: Vec<PairBreakdown>,
    pub params: SelectionParams,
}

/// Validates `params` and runs the exact selection on precomputed inputs.
pub fn run_selection(
    dataset: &Dataset,
    inputs: &CostInputs,
    params: &SelectionParams,
) -> Result<SelectionResult> {
    params.validate(dataset.len())?;
    if inputs.range != params.range {
        return Err(Error::constraint(
            "cost inputs were built for another range",
            &["range"],
        ));
    }
    let (pinned, excluded) = params.relative_sets()?;
    let cost = CombinedCost::new(
        params.weights(),
        params.k,
        &inputs.structural,
        &inputs.series.normalized,
    )?;
    let table = CostMatrix::tabulate(cost.len(), &cost);
    let selection = select_salient(
        cost.len(),
        params.k,
        &table,
        &Constraints::new(pinned, excluded),
    )?;
    let offset = params.range.start;
    let pair_costs = selection
        .steps
        .windows(2)
        .map(|w| {
            let b = cost.breakdown(w[0], w[1]);
            PairBreakdown {
                from: b.from + offset,
                to: b.to + offset,
                ..b
            }
        })
        .collect();
    Ok(SelectionResult {
        steps: selection.steps.iter().map(|s| s + offset).collect(),
        total_cost: selection.total_cost,
        pair_costs,
        params: params.clone(),
    })
}

/// One-shot selection: computes codes (or uses `imported`) and cost inputs.
pub fn select_on_dataset(
    dataset: &Dataset,
    params: &SelectionParams,
    imported: Option<Vec<LatentCode>>,
) -> Result<SelectionResult> {
    params.validate(dataset.len())?;
    let codes = resolve_codes(dataset, params.region.as_ref(), imported)?;
    let inputs = CostInputs::build(
        dataset,
        &codes,
        params.range,
        params.region.as_ref(),
        params.aggregation,
    )?;
    run_selection(dataset, &inputs, params)
}

//! Every tunable of the pipeline in one serializable record.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::evaluation::EvaluationConfig;
use crate::signal::CANONICAL_RATE;
use crate::statistical::StatisticalConfig;
use crate::structural::StructuralConfig;
use crate::synth::CorpusSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub synth: CorpusSpec,
    pub structural: StructuralConfig,
    pub statistical: StatisticalConfig,
    pub evaluation: EvaluationConfig,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.structural.validate(CANONICAL_RATE)?;
        self.statistical.validate(CANONICAL_RATE)?;
        self.evaluation.validate()
    }
}

use serde::{Deserialize, Serialize};

use super::instruction::InstructionTemplates;
use super::GenerationError;
use crate::corpus::Sample;
use crate::labels::StanceLabel;

/// One line of the instruction dataset handed to fine-tuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionRecord {
    pub sample_id: String,
    pub instruction: String,
    pub image_path: String,
    pub stance: StanceLabel,
    pub reference_comment: String,
}

/// Instruction records for every labeled sample; the sample's own stance is the
/// requested stance and its comment the reference. Unlabeled samples are skipped.
pub fn instruction_dataset(
    samples: &[Sample],
    templates: &InstructionTemplates,
    template_id: &str,
) -> Result<Vec<InstructionRecord>, GenerationError> {
    samples
        .iter()
        .filter_map(|s| s.stance.map(|st| (s, st)))
        .map(|(s, stance)| {
            let image_path = s
                .image
                .effective_image()
                .ok_or_else(|| GenerationError::MissingImage(s.sample_id.clone()))?
                .to_string();
            Ok(InstructionRecord {
                sample_id: s.sample_id.clone(),
                instruction: templates.render(template_id, &s.post_text, stance)?,
                image_path,
                stance,
                reference_comment: s.comment.text.clone(),
            })
        })
        .collect()
}

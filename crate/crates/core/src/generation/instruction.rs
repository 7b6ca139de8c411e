use std::collections::BTreeMap;
use std::path::Path;

use super::GenerationError;
use crate::corpus::Sample;
use crate::labels::StanceLabel;
use crate::template::Template;

/// Placeholder the vision-language backend replaces with the image.
pub const IMAGE_MARKER: &str = "<image>";

pub const INSTRUCTION_SLOTS: &[&str] = &["post_text", "stance", "image_marker"];

pub const DEFAULT_TEMPLATE: &str = "comment_v1";

const COMMENT_V1: &str = include_str!("../../templates/instruction/comment_v1.txt");

/// Versioned instruction templates keyed by id. Every template must use each
/// of `{post_text}`, `{stance}` and `{image_marker}` exactly once.
#[derive(Debug, Clone)]
pub struct InstructionTemplates {
    templates: BTreeMap<String, Template>,
}

impl Default for InstructionTemplates {
    fn default() -> Self {
        let mut t = Self {
            templates: BTreeMap::new(),
        };
        t.add(DEFAULT_TEMPLATE, COMMENT_V1)
            .expect("bundled instruction template is valid");
        t
    }
}

impl InstructionTemplates {
    pub fn add(&mut self, id: &str, source: &str) -> Result<(), GenerationError> {
        let t = Template::parse(id, source, INSTRUCTION_SLOTS)
            .map_err(|e| GenerationError::UnknownTemplate(e.to_string()))?;
        self.templates.insert(id.to_string(), t);
        Ok(())
    }

    /// Adds every `*.txt` in `dir`, keyed by file stem.
    pub fn load_dir(&mut self, dir: &Path) -> Result<(), GenerationError> {
        let io = |source| GenerationError::Io {
            path: dir.display().to_string(),
            source,
        };
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "txt"))
            .collect();
        paths.sort();
        for p in paths {
            let source = std::fs::read_to_string(&p).map_err(|source| GenerationError::Io {
                path: p.display().to_string(),
                source,
            })?;
            let id = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            self.add(id, &source)?;
        }
        Ok(())
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }

    pub fn render(
        &self,
        template_id: &str,
        post_text: &str,
        stance: StanceLabel,
    ) -> Result<String, GenerationError> {
        let t = self
            .templates
            .get(template_id)
            .ok_or_else(|| GenerationError::UnknownTemplate(format!("no template `{template_id}`")))?;
        t.render(&[
            ("post_text", post_text),
            ("stance", stance.directive()),
            ("image_marker", IMAGE_MARKER),
        ])
        .map_err(|e| GenerationError::UnknownTemplate(e.to_string()))
    }
}

/// Renders the instruction asking for a comment with `stance` toward the
/// author of `sample`'s post.
pub fn build_instruction(
    sample: &Sample,
    stance: StanceLabel,
    template_id: &str,
) -> Result<String, GenerationError> {
    if sample.image.effective_image().is_none() {
        return Err(GenerationError::MissingImage(sample.sample_id.clone()));
    }
    InstructionTemplates::default().render(template_id, &sample.post_text, stance)
}

use std::sync::{Arc, LazyLock};

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::AnnotationError;
use crate::chat::{ChatClient, ChatError, RetryPolicy};
use crate::corpus::Sample;
use crate::labels::{Author, StanceLabel, TopicCategory};
use crate::template::{Template, TemplateError};

pub const COARSE_TEMPLATE_V1: &str = include_str!("../../templates/labeler/coarse_v1.txt");
pub const COARSE_TEMPLATE_SLOTS: &[&str] = &["target", "post_text", "comment_text"];

const SYSTEM_PROMPT: &str = "You are a careful annotator of political social media replies.";

/// The whole reply must be exactly the two answer lines.
static RESPONSE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\A\s*STANCE:\s*(FAVOR|AGAINST)\s*\r?\n\s*TOPIC:\s*([A-Z_]+)\s*\z")
        .expect("response pattern")
});

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelLabel {
    pub labeler_id: String,
    pub sample_id: String,
    pub stance: StanceLabel,
    pub topic: TopicCategory,
    pub raw_response: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelerFailure {
    pub labeler_id: String,
    pub sample_id: String,
    pub reason: String,
    pub attempts: u32,
}

/// Everything the machine labelers said about one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarseOutcome {
    pub sample_id: String,
    pub labels: Vec<ModelLabel>,
    pub failures: Vec<LabelerFailure>,
}

pub fn parse_label_response(raw: &str) -> Option<(StanceLabel, TopicCategory)> {
    let caps = RESPONSE.captures(raw)?;
    let stance = caps[1].parse().ok()?;
    let topic = caps[2].parse().ok()?;
    Some((stance, topic))
}

pub fn coarse_template() -> Template {
    Template::parse("coarse_v1", COARSE_TEMPLATE_V1, COARSE_TEMPLATE_SLOTS)
        .expect("bundled labeler template is valid")
}

fn target_name(author: Author) -> &'static str {
    match author {
        Author::Harris => "Kamala Harris",
        Author::Trump => "Donald Trump",
        Author::Other => "a political account",
    }
}

/// A named machine labeler: prompt template + chat client + retry policy.
#[derive(Clone)]
pub struct MachineLabeler {
    pub id: String,
    client: Arc<dyn ChatClient>,
    template: Template,
    retry: RetryPolicy,
}

impl std::fmt::Debug for MachineLabeler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MachineLabeler")
            .field("id", &self.id)
            .field("template", &self.template.id)
            .finish()
    }
}

enum AttemptError {
    Chat(ChatError),
    Unparseable(String),
}

impl MachineLabeler {
    pub fn new(id: impl Into<String>, client: Arc<dyn ChatClient>) -> Self {
        Self {
            id: id.into(),
            client,
            template: coarse_template(),
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_template(mut self, id: &str, source: &str) -> Result<Self, TemplateError> {
        self.template = Template::parse(id, source, COARSE_TEMPLATE_SLOTS)?;
        Ok(self)
    }

    pub fn prompt_for(&self, sample: &Sample) -> String {
        self.template
            .render(&[
                ("target", target_name(sample.author)),
                ("post_text", &sample.post_text),
                ("comment_text", &sample.comment.text),
            ])
            .expect("all slots supplied")
    }

    pub fn label(&self, sample: &Sample) -> Result<ModelLabel, LabelerFailure> {
        let prompt = self.prompt_for(sample);
        let result = self.retry.run(|| {
            let raw = self
                .client
                .complete(SYSTEM_PROMPT, &prompt)
                .map_err(AttemptError::Chat)?;
            match parse_label_response(&raw) {
                Some(parsed) => Ok((parsed, raw)),
                None => Err(AttemptError::Unparseable(raw)),
            }
        });
        match result {
            Ok(((stance, topic), raw)) => Ok(ModelLabel {
                labeler_id: self.id.clone(),
                sample_id: sample.sample_id.clone(),
                stance,
                topic,
                raw_response: raw,
            }),
            Err((e, attempts)) => Err(LabelerFailure {
                labeler_id: self.id.clone(),
                sample_id: sample.sample_id.clone(),
                reason: match e {
                    AttemptError::Chat(c) => c.to_string(),
                    AttemptError::Unparseable(raw) => format!("unparseable response: {raw:?}"),
                },
                attempts,
            }),
        }
    }
}

/// Queries every labeler for one sample. Failed labelers are reported, never
/// filled in; labels keep the labeler order.
pub fn request_model_labels(
    sample: &Sample,
    labelers: &[MachineLabeler],
) -> Result<CoarseOutcome, AnnotationError> {
    if labelers.len() < 2 {
        return Err(AnnotationError::TooFewLabelers(labelers.len()));
    }
    let results: Vec<Result<ModelLabel, LabelerFailure>> =
        labelers.par_iter().map(|l| l.label(sample)).collect();
    let mut labels = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(l) => labels.push(l),
            Err(f) => failures.push(f),
        }
    }
    if labels.is_empty() {
        return Err(AnnotationError::AllLabelersFailed {
            sample_id: sample.sample_id.clone(),
            failures,
        });
    }
    Ok(CoarseOutcome {
        sample_id: sample.sample_id.clone(),
        labels,
        failures,
    })
}

/// Offline labeler backend: stance from negative-cue words in the reply,
/// topic from cue words in the post. Two instances with different cue lists
/// disagree on some inputs, which exercises the adjudication path.
#[derive(Debug, Clone)]
pub struct LexicalStanceChat {
    pub negative_cues: Vec<String>,
}

impl LexicalStanceChat {
    pub fn strict() -> Self {
        Self::with_cues(&[
            "no", "not", "never", "worst", "liar", "fake", "terrible", "disaster", "against",
            "fraud", "corrupt", "failed", "shame", "lies",
        ])
    }

    pub fn lenient() -> Self {
        Self::with_cues(&["worst", "liar", "fake", "disaster", "fraud", "corrupt", "lies"])
    }

    pub fn with_cues(cues: &[&str]) -> Self {
        Self {
            negative_cues: cues.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn section<'a>(prompt: &'a str, header: &str, next: &str) -> &'a str {
        let start = prompt.find(header).map(|i| i + header.len()).unwrap_or(0);
        let rest = &prompt[start..];
        let end = rest.find(next).unwrap_or(rest.len());
        &rest[..end]
    }
}

fn words_lower(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric() && c != '\'')
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
}

pub(crate) fn topic_from_cues(post: &str) -> TopicCategory {
    let words: Vec<String> = words_lower(post).collect();
    let has = |cands: &[&str]| words.iter().any(|w| cands.contains(&w.as_str()));
    if has(&["vote", "voting", "register", "polls", "ballot"]) {
        TopicCategory::CallsForVoterSupport
    } else if has(&["achieved", "delivered", "record", "built", "passed", "created"]) {
        TopicCategory::ReportingAchievements
    } else if has(&["freedom", "values", "believe", "policy", "rights", "future"]) {
        TopicCategory::SharingPoliticalIdeologies
    } else if has(&["rally", "tonight", "join", "watch", "interview", "live"]) {
        TopicCategory::SelfPromotion
    } else {
        TopicCategory::Other
    }
}

impl ChatClient for LexicalStanceChat {
    fn complete(&self, _system: &str, prompt: &str) -> Result<String, ChatError> {
        let post = Self::section(prompt, "):\n", "\n\nReply:");
        let reply = Self::section(prompt, "Reply:\n", "\n\nDecide");
        let negative = words_lower(reply).any(|w| self.negative_cues.iter().any(|c| *c == w));
        let stance = if negative {
            StanceLabel::Against
        } else {
            StanceLabel::Favor
        };
        Ok(format!("STANCE: {stance}\nTOPIC: {}", topic_from_cues(post)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chat::ScriptedChat;
    use crate::corpus::{Comment, MediaRef};

    fn sample() -> Sample {
        Sample {
            sample_id: "p#0/c".into(),
            post_id: "p".into(),
            author: Author::Harris,
            post_text: "Get out and vote this November, every voice matters for our future".into(),
            image: MediaRef::image("i.jpg"),
            comment: Comment {
                id: "c".into(),
                parent_post_id: "p".into(),
                text: "This is the worst campaign I have ever seen in my whole life".into(),
                media: vec![],
                stance: None,
                style: None,
            },
            stance: None,
            topic: None,
        }
    }

    fn scripted(id: &str, replies: Vec<Result<String, ChatError>>) -> MachineLabeler {
        MachineLabeler::new(id, Arc::new(ScriptedChat::new(replies)))
            .with_retry(RetryPolicy::immediate(3))
    }

    const FAVOR_VOTE: &str = "STANCE: FAVOR\nTOPIC: CALLS_FOR_VOTER_SUPPORT";

    #[test]
    fn parser_is_strict() {
        assert_eq!(
            parse_label_response(FAVOR_VOTE),
            Some((StanceLabel::Favor, TopicCategory::CallsForVoterSupport))
        );
        assert_eq!(
            parse_label_response("  stance: against\r\nTOPIC: OTHER \n"),
            Some((StanceLabel::Against, TopicCategory::Other))
        );
        assert_eq!(parse_label_response("Sure! STANCE: FAVOR\nTOPIC: OTHER"), None);
        assert_eq!(parse_label_response("STANCE: NEUTRAL\nTOPIC: OTHER"), None);
        assert_eq!(parse_label_response("STANCE: FAVOR\nTOPIC: WEATHER"), None);
        assert_eq!(parse_label_response("STANCE: FAVOR"), None);
    }

    #[test]
    fn three_agreeing_labelers() {
        let labelers: Vec<_> = ["gpt", "deepseek", "qwen"]
            .iter()
            .map(|id| scripted(id, vec![Ok(FAVOR_VOTE.into())]))
            .collect();
        let out = request_model_labels(&sample(), &labelers).unwrap();
        assert_eq!(out.labels.len(), 3);
        assert!(out.labels.iter().all(|l| l.stance == StanceLabel::Favor));
        assert!(out.failures.is_empty());
        let ids: Vec<_> = out.labels.iter().map(|l| l.labeler_id.as_str()).collect();
        assert_eq!(ids, ["gpt", "deepseek", "qwen"]);
    }

    #[test]
    fn timeout_is_recorded_not_fabricated() {
        let labelers = vec![
            scripted("a", vec![Ok(FAVOR_VOTE.into())]),
            scripted("b", vec![Err(ChatError::Timeout); 3]),
            scripted("c", vec![Ok(FAVOR_VOTE.into())]),
        ];
        let out = request_model_labels(&sample(), &labelers).unwrap();
        assert_eq!(out.labels.len(), 2);
        assert_eq!(out.failures.len(), 1);
        assert_eq!(out.failures[0].labeler_id, "b");
        assert_eq!(out.failures[0].attempts, 3);
    }

    #[test]
    fn retry_recovers_from_transient_error() {
        let labelers = vec![
            scripted("a", vec![Err(ChatError::Timeout), Ok(FAVOR_VOTE.into())]),
            scripted("b", vec![Ok("garbage".into()), Ok(FAVOR_VOTE.into())]),
        ];
        let out = request_model_labels(&sample(), &labelers).unwrap();
        assert_eq!(out.labels.len(), 2);
    }

    #[test]
    fn scripted_outputs_come_back_verbatim() {
        let script = [
            "STANCE: FAVOR\nTOPIC: SELF_PROMOTION",
            "STANCE: AGAINST\nTOPIC: OTHER",
            "STANCE: AGAINST\nTOPIC: REPORTING_ACHIEVEMENTS",
        ];
        let labelers: Vec<_> = script
            .iter()
            .enumerate()
            .map(|(i, r)| scripted(&format!("m{i}"), vec![Ok(r.to_string())]))
            .collect();
        let out = request_model_labels(&sample(), &labelers).unwrap();
        let got: Vec<_> = out.labels.iter().map(|l| (l.stance, l.topic)).collect();
        let expected: Vec<_> = script.iter().map(|r| parse_label_response(r).unwrap()).collect();
        assert_eq!(got, expected);
        assert_eq!(out.labels[1].raw_response, script[1]);
    }

    #[test]
    fn all_failed_and_too_few() {
        let labelers = vec![
            scripted("a", vec![Err(ChatError::Timeout); 3]),
            scripted("b", vec![Ok("nope".into()); 3]),
        ];
        assert!(matches!(
            request_model_labels(&sample(), &labelers),
            Err(AnnotationError::AllLabelersFailed { failures, .. }) if failures.len() == 2
        ));
        assert!(matches!(
            request_model_labels(&sample(), &labelers[..1]),
            Err(AnnotationError::TooFewLabelers(1))
        ));
    }

    #[test]
    fn lexical_backend_reads_prompt_sections() {
        let s = sample();
        let strict = MachineLabeler::new("strict", Arc::new(LexicalStanceChat::strict()));
        let label = strict.label(&s).unwrap();
        assert_eq!(label.stance, StanceLabel::Against);
        assert_eq!(label.topic, TopicCategory::CallsForVoterSupport);
    }

    #[test]
    fn prompt_contains_texts() {
        let l = scripted("a", vec![]);
        let p = l.prompt_for(&sample());
        assert!(p.contains("Kamala Harris"));
        assert!(p.contains(&sample().comment.text));
    }
}

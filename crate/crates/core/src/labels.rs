use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
#[error("unknown {kind} `{value}`")]
pub struct ParseLabelError {
    pub kind: &'static str,
    pub value: String,
}

macro_rules! closed_enum {
    ($(#[$meta:meta])* $name:ident, $kind:literal, { $($variant:ident => $wire:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $wire)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $wire),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = ParseLabelError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let upper = s.trim().to_ascii_uppercase();
                match upper.as_str() {
                    $($wire => Ok($name::$variant),)+
                    _ => Err(ParseLabelError { kind: $kind, value: s.to_string() }),
                }
            }
        }
    };
}

closed_enum!(
    /// Final stance of a comment towards the post's author. Ambiguous or neutral
    /// readings are never a final label; they stay in the annotation queue.
    StanceLabel, "stance", {
        Favor => "FAVOR",
        Against => "AGAINST",
    }
);

closed_enum!(
    /// Broad theme of a post.
    TopicCategory, "topic", {
        CallsForVoterSupport => "CALLS_FOR_VOTER_SUPPORT",
        SharingPoliticalIdeologies => "SHARING_POLITICAL_IDEOLOGIES",
        SelfPromotion => "SELF_PROMOTION",
        ReportingAchievements => "REPORTING_ACHIEVEMENTS",
        Other => "OTHER",
    }
);

closed_enum!(
    /// Rhetorical style of a comment.
    StyleCategory, "style", {
        Sarcasm => "SARCASM",
        DirectExpression => "DIRECT_EXPRESSION",
        Examples => "EXAMPLES",
        QuestionsCounterquestions => "QUESTIONS_COUNTERQUESTIONS",
        HumorIrony => "HUMOR_IRONY",
        Other => "OTHER",
    }
);

closed_enum!(
    /// Account a post was collected from.
    Author, "author", {
        Harris => "HARRIS",
        Trump => "TRUMP",
        Other => "OTHER",
    }
);

impl StanceLabel {
    /// Directive phrase used in instructions, e.g. "in favor of".
    pub fn directive(self) -> &'static str {
        match self {
            StanceLabel::Favor => "in favor of",
            StanceLabel::Against => "against",
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            StanceLabel::Favor => StanceLabel::Against,
            StanceLabel::Against => StanceLabel::Favor,
        }
    }
}

impl Author {
    /// Single-letter column tag used in per-target reports.
    pub fn target_tag(self) -> &'static str {
        match self {
            Author::Harris => "H",
            Author::Trump => "T",
            Author::Other => "O",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_names_round_trip() {
        for t in TopicCategory::ALL {
            let json = serde_json::to_string(t).unwrap();
            assert_eq!(json, format!("\"{}\"", t.as_str()));
            assert_eq!(t.as_str().parse::<TopicCategory>().unwrap(), *t);
        }
        assert_eq!("favor".parse::<StanceLabel>().unwrap(), StanceLabel::Favor);
        assert!("NEUTRAL".parse::<StanceLabel>().is_err());
    }
}

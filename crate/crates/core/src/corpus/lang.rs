//! Pluggable language identification.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

/// Result of one detection call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    /// ISO 639-1 code, or `"und"` when nothing could be determined.
    pub lang: String,
    pub confidence: f64,
}

pub trait LanguageDetector: Send + Sync {
    fn detect(&self, text: &str) -> Detection;
}

const LEXICONS: &[(&str, &str)] = &[
    ("en", include_str!("../../data/lexicon/en.txt")),
    ("es", include_str!("../../data/lexicon/es.txt")),
    ("fr", include_str!("../../data/lexicon/fr.txt")),
    ("de", include_str!("../../data/lexicon/de.txt")),
    ("pt", include_str!("../../data/lexicon/pt.txt")),
    ("it", include_str!("../../data/lexicon/it.txt")),
];

/// Function-word detector.
///
/// Each language has a list of frequent words; words listed under more than one
/// language are discarded so every remaining hit is discriminative. Confidence
/// is the winning language's share of all hits; a tie for the top count is
/// reported as `und`. Text whose letters are mostly
/// outside the Latin script is reported as `und` with confidence 1 for that
/// verdict (so it never passes an English check).
#[derive(Debug, Clone)]
pub struct LexiconDetector {
    words: HashMap<String, &'static str>,
}

impl Default for LexiconDetector {
    fn default() -> Self {
        let mut seen: HashMap<String, HashSet<&'static str>> = HashMap::new();
        for (lang, list) in LEXICONS {
            for w in list.split_whitespace() {
                seen.entry(w.to_lowercase()).or_default().insert(lang);
            }
        }
        let words = seen
            .into_iter()
            .filter(|(_, langs)| langs.len() == 1)
            .map(|(w, langs)| (w, *langs.iter().next().expect("one language")))
            .collect();
        Self { words }
    }
}

impl LanguageDetector for LexiconDetector {
    fn detect(&self, text: &str) -> Detection {
        let letters = text.chars().filter(|c| c.is_alphabetic()).count();
        let latin = text.chars().filter(|c| c.is_alphabetic() && is_latin(*c)).count();
        if letters == 0 {
            return Detection {
                lang: "und".into(),
                confidence: 0.0,
            };
        }
        if latin * 2 < letters {
            return Detection {
                lang: "und".into(),
                confidence: 1.0,
            };
        }

        let mut hits: Vec<(&'static str, usize)> = LEXICONS.iter().map(|(l, _)| (*l, 0)).collect();
        for token in text
            .split(|c: char| !(c.is_alphabetic() || c == '\''))
            .filter(|t| !t.is_empty())
        {
            if let Some(lang) = self.words.get(&token.to_lowercase()) {
                if let Some(slot) = hits.iter_mut().find(|(l, _)| l == lang) {
                    slot.1 += 1;
                }
            }
        }
        let total: usize = hits.iter().map(|(_, n)| n).sum();
        if total == 0 {
            return Detection {
                lang: "und".into(),
                confidence: 0.0,
            };
        }
        let (lang, best) = hits
            .iter()
            .fold(hits[0], |acc, &h| if h.1 > acc.1 { h } else { acc });
        if hits.iter().filter(|(_, n)| *n == best).count() > 1 {
            return Detection {
                lang: "und".into(),
                confidence: best as f64 / total as f64,
            };
        }
        Detection {
            lang: lang.to_string(),
            confidence: best as f64 / total as f64,
        }
    }
}

fn is_latin(c: char) -> bool {
    c.is_ascii_alphabetic() || ('\u{00C0}'..='\u{024F}').contains(&c)
}

//! Tweet text normalisation.
//!
//! Rules, applied in order and repeated until the text stops changing:
//!
//! 1. HTML entities emitted by the platform (`&amp;`, `&lt;`, `&gt;`,
//!    `&quot;`, `&#39;`, `&apos;`) are decoded.
//! 2. Characters in [`STRIP_SET`] are deleted.
//! 3. URLs (`http://`, `https://`, `www.`) and `@username` tokens are replaced
//!    by a space.
//! 4. Runs of one repeated functional mark (`. , ! ? ; :`) shrink to a single mark.
//! 5. Whitespace runs collapse to one ASCII space; ends are trimmed.
//!
//! Quotes, apostrophes, hashtags, emoji (including ZWJ sequences and flags) and
//! all other characters are kept.

use std::sync::LazyLock;

use regex::Regex;

/// Decorative characters removed outright.
pub const STRIP_SET: &[char] = &[
    '*', '_', '~', '^', '|', '\\', '<', '>', '=', '+', '[', ']', '{', '}', '`', '•', '·', '‣',
    '◦', '※', '¦', '§', '¶', '⁂', '†', '‡',
];

/// Marks whose repeated runs are collapsed.
pub const COLLAPSIBLE: &[char] = &['.', ',', '!', '?', ';', ':'];

static URL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)(?:https?://|www\.)\S*").expect("url pattern"));
static MENTION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"@\w+").expect("mention pattern"));

const ENTITIES: &[(&str, &str)] = &[
    ("&amp;", "&"),
    ("&lt;", "<"),
    ("&gt;", ">"),
    ("&quot;", "\""),
    ("&#39;", "'"),
    ("&apos;", "'"),
];

pub fn clean_text(raw: &str) -> String {
    let mut current = single_pass(raw);
    // Every rule only deletes or shortens, so a changed pass is strictly shorter
    // and the loop terminates.
    loop {
        let next = single_pass(&current);
        if next == current {
            return current;
        }
        current = next;
    }
}

fn single_pass(raw: &str) -> String {
    let mut text = raw.to_string();
    for (entity, plain) in ENTITIES {
        if text.contains(entity) {
            text = text.replace(entity, plain);
        }
    }
    text.retain(|c| !STRIP_SET.contains(&c));
    let text = URL.replace_all(&text, " ");
    let text = MENTION.replace_all(&text, " ");
    let text = collapse_repeats(&text);
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn collapse_repeats(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut prev: Option<char> = None;
    for c in text.chars() {
        if prev == Some(c) && COLLAPSIBLE.contains(&c) {
            continue;
        }
        out.push(c);
        prev = Some(c);
    }
    out
}

/// Whitespace-delimited word count of already cleaned text.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Inclusive word-count window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct LengthBounds {
    pub min_words: usize,
    pub max_words: usize,
}

impl Default for LengthBounds {
    fn default() -> Self {
        Self {
            min_words: 10,
            max_words: 128,
        }
    }
}

impl LengthBounds {
    pub fn passes(&self, text: &str) -> bool {
        let w = word_count(text);
        self.min_words <= w && w <= self.max_words
    }
}

pub fn passes_length_filter(text: &str) -> bool {
    LengthBounds::default().passes(text)
}

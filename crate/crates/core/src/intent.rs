//! Keyword parser and binary edit-intent indicator.
//!
//! A prompt has high edit intent when any phrase of the edit dictionary occurs
//! in it as a contiguous run of whole tokens. The last token of a phrase may
//! carry a `*` wildcard, in which case it matches any prompt token starting
//! with it (`laugh*` matches `laughing`).

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The dictionary shipped with the crate.
pub const DEFAULT_DICTIONARY: &str = include_str!("../data/edit_dictionary.txt");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditCategory {
    Expression,
    Pose,
    Style,
}

impl fmt::Display for EditCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EditCategory::Expression => "expression",
            EditCategory::Pose => "pose",
            EditCategory::Style => "style",
        })
    }
}

impl FromStr for EditCategory {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "expression" => Ok(EditCategory::Expression),
            "pose" => Ok(EditCategory::Pose),
            "style" => Ok(EditCategory::Style),
            other => Err(format!("unknown category `{other}` (expected expression, pose or style)")),
        }
    }
}

/// A dictionary phrase: lowercase tokens, optionally prefix-matching on the
/// last token.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Phrase {
    pub tokens: Vec<String>,
    pub prefix: bool,
}

impl Phrase {
    /// Parses `word word*` syntax.
    pub fn parse(text: &str) -> std::result::Result<Phrase, String> {
        let trimmed = text.trim();
        let (body, prefix) = match trimmed.strip_suffix('*') {
            Some(b) => (b, true),
            None => (trimmed, false),
        };
        if body.contains('*') {
            return Err("`*` is only allowed at the end of a phrase".into());
        }
        if prefix && body.ends_with(char::is_whitespace) {
            return Err("`*` must directly follow a word".into());
        }
        let tokens = normalize_prompt(body).tokens;
        if tokens.is_empty() {
            return Err("empty phrase".into());
        }
        Ok(Phrase { tokens, prefix })
    }

    /// Whether the phrase matches `tokens` starting at `start`.
    pub fn matches_at(&self, tokens: &[String], start: usize) -> bool {
        let n = self.tokens.len();
        if start + n > tokens.len() {
            return false;
        }
        self.tokens.iter().enumerate().all(|(i, want)| {
            let got = &tokens[start + i];
            if self.prefix && i + 1 == n {
                got.starts_with(want.as_str())
            } else {
                got == want
            }
        })
    }
}

impl fmt::Display for Phrase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.tokens.join(" "))?;
        if self.prefix {
            f.write_str("*")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DictionaryEntry {
    pub phrase: Phrase,
    pub category: EditCategory,
}

/// The edit-intent dictionary. Never empty.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EditDictionary {
    entries: Vec<DictionaryEntry>,
}

impl EditDictionary {
    /// Validates and wraps a list of entries.
    pub fn new(entries: Vec<DictionaryEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Validation("edit dictionary has no entries".into()));
        }
        for (i, e) in entries.iter().enumerate() {
            if entries[..i].contains(e) {
                return Err(Error::Validation(format!("duplicate dictionary entry `{}: {}`", e.category, e.phrase)));
            }
        }
        Ok(EditDictionary { entries })
    }

    /// Parses the dictionary text format. `source_name` only labels errors.
    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let mut entries: Vec<DictionaryEntry> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let err = |message: String| Error::Parse { source_name: source_name.to_string(), line: line_no, message };
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (cat, phrase) = line.split_once(':').ok_or_else(|| err("expected `category: phrase`".into()))?;
            let category: EditCategory = cat.trim().parse().map_err(err)?;
            let phrase = Phrase::parse(phrase).map_err(err)?;
            let entry = DictionaryEntry { phrase, category };
            if entries.contains(&entry) {
                return Err(err(format!("duplicate entry `{}: {}`", category, entry.phrase)));
            }
            entries.push(entry);
        }
        Self::new(entries)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn default_dictionary() -> Self {
        Self::parse(DEFAULT_DICTIONARY, "edit_dictionary.txt").expect("bundled dictionary is valid")
    }

    pub fn entries(&self) -> &[DictionaryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// A prompt and its normalised token list.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub raw: String,
    pub tokens: Vec<String>,
}

impl Prompt {
    /// Tokens joined by single spaces.
    pub fn joined(&self) -> String {
        self.tokens.join(" ")
    }
}

/// Lowercases, replaces every non-alphanumeric character with a space and
/// splits on whitespace.
pub fn normalize_prompt(raw: &str) -> Prompt {
    let cleaned: String =
        raw.chars().flat_map(char::to_lowercase).map(|c| if c.is_alphanumeric() { c } else { ' ' }).collect();
    Prompt { raw: raw.to_string(), tokens: cleaned.split_whitespace().map(str::to_string).collect() }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct IntentMatch {
    /// Prompt tokens covered by the match.
    pub tokens: Vec<String>,
    /// Index of the first covered token.
    pub position: usize,
    pub phrase: String,
    pub category: EditCategory,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct IntentResult {
    /// 1 for high edit intent, 0 otherwise.
    pub indicator: u8,
    /// In dictionary order, then by position.
    pub matches: Vec<IntentMatch>,
}

impl IntentResult {
    pub fn is_high(&self) -> bool {
        self.indicator == 1
    }

    /// Indicator for a prompt with no edit terms.
    pub fn low() -> Self {
        IntentResult { indicator: 0, matches: Vec::new() }
    }
}

pub fn detect_intent(prompt: &Prompt, dict: &EditDictionary) -> IntentResult {
    let mut matches = Vec::new();
    for entry in dict.entries() {
        let n = entry.phrase.tokens.len();
        for start in 0..prompt.tokens.len() {
            if entry.phrase.matches_at(&prompt.tokens, start) {
                matches.push(IntentMatch {
                    tokens: prompt.tokens[start..start + n].to_vec(),
                    position: start,
                    phrase: entry.phrase.to_string(),
                    category: entry.category,
                });
            }
        }
    }
    IntentResult { indicator: u8::from(!matches.is_empty()), matches }
}

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LEXICON: &str = include_str!("../../data/pos_lexicon.tsv");

/// Coarse part-of-speech tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PosTag {
    Noun,
    Verb,
    Adj,
    Adv,
    Other,
}

impl FromStr for PosTag {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "NOUN" => Ok(PosTag::Noun),
            "VERB" => Ok(PosTag::Verb),
            "ADJ" => Ok(PosTag::Adj),
            "ADV" => Ok(PosTag::Adv),
            "OTHER" => Ok(PosTag::Other),
            other => Err(Error::invalid("POS tag", other.to_string())),
        }
    }
}

impl fmt::Display for PosTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PosTag::Noun => "NOUN",
            PosTag::Verb => "VERB",
            PosTag::Adj => "ADJ",
            PosTag::Adv => "ADV",
            PosTag::Other => "OTHER",
        })
    }
}

const SUFFIXES: &[(&str, PosTag)] = &[
    ("ly", PosTag::Adv),
    ("ing", PosTag::Verb),
    ("ed", PosTag::Verb),
    ("ous", PosTag::Adj),
    ("ful", PosTag::Adj),
    ("ive", PosTag::Adj),
];

/// Lexicon-then-rules tagger.
///
/// Order: lexicon (case-insensitive), suffix rules (the stem must keep at
/// least two characters, so "red" is not a verb), capitalized word that
/// does not start a sentence → NOUN, otherwise OTHER.
#[derive(Debug, Clone)]
pub struct PosTagger {
    lexicon: HashMap<String, PosTag>,
}

impl PosTagger {
    /// The bundled English lexicon.
    pub fn english() -> Self {
        Self::parse_lexicon(LEXICON).expect("bundled lexicon is well formed")
    }

    pub fn empty() -> Self {
        PosTagger {
            lexicon: HashMap::new(),
        }
    }

    /// `word TAB tag` lines; `#` comments and blanks skipped; first entry wins.
    pub fn parse_lexicon(raw: &str) -> Result<Self> {
        let mut tagger = Self::empty();
        tagger.extend_from(raw)?;
        Ok(tagger)
    }

    pub fn load_lexicon(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_lexicon(&raw)
    }

    /// Adds entries from another lexicon text; existing words keep their tag.
    pub fn extend_from(&mut self, raw: &str) -> Result<()> {
        for (i, line) in raw.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (word, tag) = line
                .split_once('\t')
                .ok_or_else(|| Error::invalid("lexicon", format!("line {} lacks a TAB", i + 1)))?;
            let tag: PosTag = tag.parse()?;
            self.lexicon.entry(word.trim().to_lowercase()).or_insert(tag);
        }
        Ok(())
    }

    pub fn insert(&mut self, word: &str, tag: PosTag) {
        self.lexicon.insert(word.to_lowercase(), tag);
    }

    pub fn tag_word(&self, word: &str, sentence_initial: bool) -> PosTag {
        let lower = word.to_lowercase();
        if let Some(&tag) = self.lexicon.get(&lower) {
            return tag;
        }
        let n = lower.chars().count();
        for &(suffix, tag) in SUFFIXES {
            if lower.ends_with(suffix) && n >= suffix.len() + 2 {
                return tag;
            }
        }
        if !sentence_initial && word.chars().next().is_some_and(char::is_uppercase) {
            return PosTag::Noun;
        }
        PosTag::Other
    }

    /// Tags a word sequence; the first word and any word after `.`, `!`, `?`
    /// count as sentence-initial.
    pub fn tag<S: AsRef<str>>(&self, words: &[S]) -> Vec<PosTag> {
        let mut initial = true;
        words
            .iter()
            .map(|w| {
                let w = w.as_ref();
                let tag = self.tag_word(w, initial);
                initial = matches!(w, "." | "!" | "?");
                tag
            })
            .collect()
    }
}

impl Default for PosTagger {
    fn default() -> Self {
        Self::english()
    }
}

/// Tags with the bundled English lexicon.
pub fn pos_tag<S: AsRef<str>>(words: &[S]) -> Vec<PosTag> {
    PosTagger::english().tag(words)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suffix_lexicon_default() {
        let t = PosTagger::english();
        assert_eq!(t.tag(&["quickly"]), [PosTag::Adv]);
        assert_eq!(t.tag(&["run"]), [PosTag::Verb]);
        assert_eq!(t.tag(&["xyzzy"]), [PosTag::Other]);
        assert_eq!(t.tag(&["famous", "walking", "jumped"]), [PosTag::Adj, PosTag::Verb, PosTag::Verb]);
    }

    #[test]
    fn lexicon_beats_suffix_rules() {
        let mut t = PosTagger::empty();
        t.insert("early", PosTag::Adj);
        assert_eq!(t.tag(&["early"]), [PosTag::Adj]);
        assert_eq!(PosTagger::empty().tag(&["early"]), [PosTag::Adv]);
    }

    #[test]
    fn capitalized_mid_sentence_is_noun() {
        let t = PosTagger::empty();
        assert_eq!(
            t.tag(&["Then", "Zorp", "left", ".", "Blah"]),
            [PosTag::Other, PosTag::Noun, PosTag::Other, PosTag::Other, PosTag::Other]
        );
    }

    #[test]
    fn short_stems_do_not_match() {
        assert_eq!(PosTagger::empty().tag(&["red", "bed", "fly"]), [PosTag::Other; 3]);
    }
}

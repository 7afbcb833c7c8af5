//! Word segmentation and the two tokenizer kinds (whole-word and greedy
//! longest-match subword) sharing one vocabulary-id space with the backend.

use std::collections::HashMap;
use std::fs;
use std::ops::Range;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type TokenId = u32;

pub const UNK_TOKEN: &str = "<unk>";

/// Loadable tokenizer description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TokenizerSpec {
    /// One token per segmented word; ids come from the backend vocabulary.
    Word,
    /// Greedy longest match over `vocab`; ids are positions in `vocab`.
    Subword { vocab: Vec<String> },
}

impl TokenizerSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&raw).map_err(|e| Error::invalid("tokenizer spec", e.to_string()))
    }
}

/// Token-string ↔ id table.
#[derive(Debug, Clone)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    unk: TokenId,
}

impl Vocab {
    /// Builds a vocabulary. The unknown id is the position of `<unk>` if
    /// present, else 0. Duplicate entries keep their first id.
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::invalid("vocabulary", "empty vocabulary"));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            index.entry(t.clone()).or_insert(i as TokenId);
        }
        let unk = index.get(UNK_TOKEN).copied().unwrap_or(0);
        Ok(Vocab { tokens, index, unk })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn unk_id(&self) -> TokenId {
        self.unk
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    /// Exact lookup, then lowercase fallback.
    pub fn lookup(&self, token: &str) -> Option<TokenId> {
        self.id(token).or_else(|| {
            let lower = token.to_lowercase();
            (lower != token).then(|| self.id(&lower)).flatten()
        })
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub id: TokenId,
    /// Source text of the token, including any whitespace that precedes it.
    pub surface: String,
}

impl Token {
    /// The token text without its leading whitespace.
    pub fn piece(&self) -> &str {
        self.surface.trim_start()
    }
}

/// A surface word and the sub-tokens it was split into.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordSpan {
    pub word: String,
    pub tokens: Range<usize>,
    /// Byte range of the word in the source text.
    pub bytes: Range<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSeq {
    pub tokens: Vec<Token>,
    pub word_spans: Vec<WordSpan>,
}

impl TokenSeq {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn ids(&self) -> Vec<TokenId> {
        self.tokens.iter().map(|t| t.id).collect()
    }

    /// Concatenated token surfaces: the tokenized region of the source.
    pub fn detokenize(&self) -> String {
        self.tokens.iter().map(|t| t.surface.as_str()).collect()
    }

    /// Keeps the first `window` tokens and the word spans wholly inside them.
    pub fn truncate_to_window(&self, window: usize) -> TokenSeq {
        let window = window.max(1);
        let n = window.min(self.tokens.len());
        TokenSeq {
            tokens: self.tokens[..n].to_vec(),
            word_spans: self
                .word_spans
                .iter()
                .take_while(|s| s.tokens.end <= n)
                .cloned()
                .collect(),
        }
    }
}

/// See [`TokenSeq::truncate_to_window`].
pub fn truncate_to_window(seq: &TokenSeq, window: usize) -> TokenSeq {
    seq.truncate_to_window(window)
}

/// Splits text into words: maximal alphanumeric runs (allowing apostrophes
/// between alphanumerics), with every other non-space character standing
/// alone. Returns byte ranges into `text`.
pub fn segment_words(text: &str) -> Vec<Range<usize>> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let end_of = |i: usize| chars.get(i).map_or(text.len(), |c| c.0);
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (start, c) = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_alphanumeric() {
            let mut j = i + 1;
            while j < chars.len() {
                let cj = chars[j].1;
                if cj.is_alphanumeric() {
                    j += 1;
                } else if is_apostrophe(cj)
                    && chars.get(j + 1).is_some_and(|n| n.1.is_alphanumeric())
                {
                    j += 2;
                } else {
                    break;
                }
            }
            out.push(start..end_of(j));
            i = j;
        } else {
            out.push(start..end_of(i + 1));
            i += 1;
        }
    }
    out
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

pub fn is_punctuation_word(word: &str) -> bool {
    !word.chars().any(char::is_alphanumeric)
}

#[derive(Debug, Clone)]
enum Kind {
    Word,
    Subword { max_piece_chars: usize },
}

/// A tokenizer bound to a vocabulary. Cheap to clone.
#[derive(Debug, Clone)]
pub struct Tokenizer {
    kind: Kind,
    vocab: Arc<Vocab>,
}

impl Tokenizer {
    /// Whole-word tokenizer over `vocab`.
    pub fn word(vocab: Arc<Vocab>) -> Self {
        Tokenizer {
            kind: Kind::Word,
            vocab,
        }
    }

    pub fn subword(vocab: Arc<Vocab>) -> Self {
        let max_piece_chars = vocab
            .tokens()
            .iter()
            .map(|t| t.chars().count())
            .max()
            .unwrap_or(1);
        Tokenizer {
            kind: Kind::Subword { max_piece_chars },
            vocab,
        }
    }

    /// Builds a tokenizer from a spec. Word tokenizers take their vocabulary
    /// from the backend; subword tokenizers carry their own, which must then
    /// match the backend size when one is supplied.
    pub fn from_spec(spec: &TokenizerSpec, backend_vocab: Option<&[String]>) -> Result<Self> {
        match spec {
            TokenizerSpec::Word => {
                let vocab = backend_vocab.ok_or_else(|| {
                    Error::invalid("tokenizer spec", "word tokenizer needs the backend vocabulary")
                })?;
                Ok(Tokenizer::word(Arc::new(Vocab::new(vocab.to_vec())?)))
            }
            TokenizerSpec::Subword { vocab } => {
                if let Some(bv) = backend_vocab {
                    if bv.len() != vocab.len() {
                        return Err(Error::Contract(format!(
                            "subword vocabulary has {} entries but backend has {}",
                            vocab.len(),
                            bv.len()
                        )));
                    }
                }
                Ok(Tokenizer::subword(Arc::new(Vocab::new(vocab.clone())?)))
            }
        }
    }

    pub fn vocab(&self) -> &Arc<Vocab> {
        &self.vocab
    }

    pub fn is_subword(&self) -> bool {
        matches!(self.kind, Kind::Subword { .. })
    }

    /// Deterministic tokenization; unknown pieces map to the unknown id.
    pub fn tokenize(&self, text: &str) -> TokenSeq {
        let mut seq = TokenSeq::default();
        let mut cursor = 0;
        for range in segment_words(text) {
            let lead = &text[cursor..range.start];
            let word = &text[range.clone()];
            let first = seq.tokens.len();
            match self.kind {
                Kind::Word => seq.tokens.push(Token {
                    id: self.vocab.lookup(word).unwrap_or(self.vocab.unk_id()),
                    surface: format!("{lead}{word}"),
                }),
                Kind::Subword { max_piece_chars } => {
                    for (k, (id, piece)) in self.split_word(word, max_piece_chars).into_iter().enumerate() {
                        let surface = if k == 0 {
                            format!("{lead}{piece}")
                        } else {
                            piece.to_string()
                        };
                        seq.tokens.push(Token { id, surface });
                    }
                }
            }
            seq.word_spans.push(WordSpan {
                word: word.to_string(),
                tokens: first..seq.tokens.len(),
                bytes: range.clone(),
            });
            cursor = range.end;
        }
        seq
    }

    /// Ids of a single word or phrase, ignoring alignment.
    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        self.tokenize(text).ids()
    }

    fn split_word<'a>(&self, word: &'a str, max_piece_chars: usize) -> Vec<(TokenId, &'a str)> {
        let bounds: Vec<usize> = word
            .char_indices()
            .map(|(i, _)| i)
            .chain(std::iter::once(word.len()))
            .collect();
        let n_chars = bounds.len() - 1;
        let mut out = Vec::new();
        let mut at = 0;
        while at < n_chars {
            let longest = max_piece_chars.min(n_chars - at);
            let hit = (1..=longest).rev().find_map(|len| {
                let piece = &word[bounds[at]..bounds[at + len]];
                self.vocab.lookup(piece).map(|id| (id, len))
            });
            let (id, len) = hit.unwrap_or((self.vocab.unk_id(), 1));
            out.push((id, &word[bounds[at]..bounds[at + len]]));
            at += len;
        }
        out
    }

    /// Renders token ids as readable text: pieces joined by single spaces,
    /// punctuation attached to the left, sentence starts capitalized.
    pub fn render(&self, ids: &[TokenId]) -> String {
        let mut out = String::new();
        let mut capitalize = true;
        for &id in ids {
            let piece = self.vocab.token(id).unwrap_or(UNK_TOKEN);
            let punct = is_punctuation_word(piece);
            if !out.is_empty() && !punct {
                out.push(' ');
            }
            if capitalize && !punct {
                let mut chars = piece.chars();
                if let Some(c) = chars.next() {
                    out.extend(c.to_uppercase());
                    out.push_str(chars.as_str());
                }
                capitalize = false;
            } else {
                out.push_str(piece);
            }
            if matches!(piece, "." | "!" | "?") {
                capitalize = true;
            }
        }
        out
    }
}

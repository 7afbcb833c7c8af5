//! Documents, dataset ingestion, tokenization, sentence splitting and
//! stop words.

mod document;
mod sentences;
mod stopwords;
mod tokenizer;

pub use document::{load_jsonl, parse_jsonl, write_jsonl, Document, Label};
pub use sentences::{sentence_spans, split_sentences};
pub use stopwords::StopWordList;
pub use tokenizer::{
    is_punctuation_word, segment_words, truncate_to_window, Token, TokenId, TokenSeq, Tokenizer,
    TokenizerSpec, Vocab, WordSpan, UNK_TOKEN,
};

/// Context window used throughout: only the first 512 tokens of a document
/// are scored, detected, or attacked.
pub const DEFAULT_WINDOW: usize = 512;

/// Tokenizes a document's text.
pub fn tokenize(doc: &Document, tokenizer: &Tokenizer) -> TokenSeq {
    tokenizer.tokenize(&doc.text)
}

//! Query-free synonym substitution attacks.
//!
//! `dftfooler_perturb` replaces the words a language model predicts most
//! confidently with low-probability synonyms, so the rank histogram of the
//! text shifts away from the top bin. `random_perturb` is the baseline: the
//! same synonym gates, random word order, uniform choice, no model.
//! Neither path ever consults a detector.

use std::collections::HashSet;
use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    is_punctuation_word, segment_words, sentence_spans, Document, Label, StopWordList, TokenSeq, Tokenizer,
    DEFAULT_WINDOW,
};
use crate::decoding::stream_rng;
use crate::error::{Error, Result};
use crate::lexsem::{
    sentence_similarity, EmbeddingStore, PosTag, PosTagger, SentenceEncoder, DEFAULT_MAX_CANDIDATES,
    DEFAULT_MIN_COSINE,
};
use crate::lm_backend::{candidate_probability, score_tokens, LanguageModel, ScoringMode, TokenScore};
use crate::quality::QualityScorer;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackConfig {
    /// Maximum number of replaced words.
    #[serde(rename = "N")]
    pub n: usize,
    pub candidate_prob_ceiling: f64,
    pub sentence_sim_floor: f64,
    pub backend_mode: ScoringMode,
    /// Used by the random baseline only.
    pub seed: u64,
    /// Re-rank the remaining words after every accepted substitution.
    pub iterative: bool,
    pub max_candidates: usize,
    pub min_cosine: f64,
    pub window: usize,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            n: 10,
            candidate_prob_ceiling: 0.01,
            sentence_sim_floor: 0.7,
            backend_mode: ScoringMode::Causal,
            seed: 0,
            iterative: false,
            max_candidates: DEFAULT_MAX_CANDIDATES,
            min_cosine: DEFAULT_MIN_COSINE,
            window: DEFAULT_WINDOW,
        }
    }
}

impl AttackConfig {
    pub fn with_n(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("attack config", "N must be at least 1"));
        }
        if !(self.candidate_prob_ceiling > 0.0 && self.candidate_prob_ceiling < 1.0) {
            return Err(Error::invalid("attack config", "candidate_prob_ceiling must lie in (0, 1)"));
        }
        if !(self.sentence_sim_floor > 0.0 && self.sentence_sim_floor <= 1.0) {
            return Err(Error::invalid("attack config", "sentence_sim_floor must lie in (0, 1]"));
        }
        if self.max_candidates == 0 {
            return Err(Error::invalid("attack config", "max_candidates must be positive"));
        }
        if !(-1.0..=1.0).contains(&self.min_cosine) {
            return Err(Error::invalid("attack config", "min_cosine must lie in [-1, 1]"));
        }
        if self.window == 0 {
            return Err(Error::invalid("attack config", "window must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackMethod {
    Dftfooler,
    Random,
}

impl fmt::Display for AttackMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttackMethod::Dftfooler => "dftfooler",
            AttackMethod::Random => "random",
        })
    }
}

impl std::str::FromStr for AttackMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dftfooler" => Ok(AttackMethod::Dftfooler),
            "random" => Ok(AttackMethod::Random),
            other => Err(Error::invalid("attack method", format!("{other:?} (expected dftfooler or random)"))),
        }
    }
}

/// One accepted substitution and the gate values that admitted it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replacement {
    pub word_span_index: usize,
    pub original: String,
    pub replacement: String,
    /// Model scores of the original word; absent for the random baseline.
    pub original_prob: Option<f64>,
    pub original_rank: Option<u32>,
    pub replacement_prob: Option<f64>,
    pub sentence_sim: f64,
    pub word_cosine: f64,
    pub pos: PosTag,
    pub sentence_before: String,
    pub sentence_after: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub method: AttackMethod,
    pub original: Document,
    pub perturbed: Document,
    pub replacements: Vec<Replacement>,
    pub quality_before: f64,
    pub quality_after: f64,
    #[serde(default)]
    pub evaded: Option<bool>,
}

/// A word's importance: the (probability, rank) of its first sub-token.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WordImportance {
    pub word_span_index: usize,
    pub prob: f64,
    pub rank: u32,
}

/// Shared, read-only resources for attacking many documents.
#[derive(Clone)]
pub struct AttackContext {
    pub lm: Arc<dyn LanguageModel>,
    pub tokenizer: Tokenizer,
    pub store: Arc<EmbeddingStore>,
    pub encoder: SentenceEncoder,
    pub stopwords: Arc<StopWordList>,
    pub tagger: Arc<PosTagger>,
}

impl AttackContext {
    pub fn new(lm: Arc<dyn LanguageModel>, tokenizer: Tokenizer, store: Arc<EmbeddingStore>, encoder: SentenceEncoder) -> Self {
        AttackContext {
            lm,
            tokenizer,
            store,
            encoder,
            stopwords: Arc::new(StopWordList::english()),
            tagger: Arc::new(PosTagger::english()),
        }
    }

    pub fn with_stopwords(mut self, stopwords: StopWordList) -> Self {
        self.stopwords = Arc::new(stopwords);
        self
    }

    pub fn with_tagger(mut self, tagger: PosTagger) -> Self {
        self.tagger = Arc::new(tagger);
        self
    }

    pub fn quality_scorer(&self, window: usize) -> QualityScorer {
        let mut q = QualityScorer::new(self.lm.clone(), self.tokenizer.clone(), self.encoder.clone());
        q.window = window;
        q
    }

    fn attackable(&self, word: &str) -> bool {
        !is_punctuation_word(word) && !self.stopwords.contains(word)
    }
}

/// Orders attackable words of `seq` by ascending rank, then descending
/// probability, then position. Stop words and punctuation are left out.
pub fn order_by_importance(seq: &TokenSeq, scores: &[TokenScore], stopwords: &StopWordList) -> Vec<WordImportance> {
    let mut out: Vec<WordImportance> = seq
        .word_spans
        .iter()
        .enumerate()
        .filter(|(_, s)| !is_punctuation_word(&s.word) && !stopwords.contains(&s.word))
        .filter_map(|(i, s)| {
            let sc = scores.get(s.tokens.start)?;
            Some(WordImportance {
                word_span_index: i,
                prob: sc.prob,
                rank: sc.rank,
            })
        })
        .collect();
    sort_importance(&mut out);
    out
}

pub fn sort_importance(items: &mut [WordImportance]) {
    items.sort_by(|a, b| {
        a.rank
            .cmp(&b.rank)
            .then_with(|| b.prob.total_cmp(&a.prob))
            .then_with(|| a.word_span_index.cmp(&b.word_span_index))
    });
}

/// Importance ordering of the words in the first `cfg.window` tokens.
pub fn rank_word_importance(doc: &Document, ctx: &AttackContext, cfg: &AttackConfig) -> Result<Vec<WordImportance>> {
    let seq = ctx.tokenizer.tokenize(&doc.text).truncate_to_window(cfg.window);
    if seq.is_empty() {
        return Err(Error::EmptyText {
            id: doc.id.clone(),
            line: 0,
        });
    }
    let scores = score_tokens(ctx.lm.as_ref(), &seq, cfg.backend_mode)?;
    Ok(order_by_importance(&seq, &scores, &ctx.stopwords))
}

/// Copies the capitalization pattern of `template` onto `word`: all caps,
/// initial capital, or all lower.
pub fn match_case(template: &str, word: &str) -> String {
    let letters: Vec<char> = template.chars().filter(|c| c.is_alphabetic()).collect();
    if letters.len() > 1 && letters.iter().all(|c| c.is_uppercase()) {
        return word.to_uppercase();
    }
    let lower = word.to_lowercase();
    if template.chars().next().is_some_and(char::is_uppercase) {
        let mut cs = lower.chars();
        match cs.next() {
            Some(first) => first.to_uppercase().chain(cs).collect(),
            None => lower,
        }
    } else {
        lower
    }
}

fn is_single_word(s: &str) -> bool {
    let words = segment_words(s);
    words.len() == 1 && words[0] == (0..s.len()) && !is_punctuation_word(s)
}

/// Mutable view of a document under attack: the original text plus the
/// current string at every word span.
struct Working<'a> {
    text: &'a str,
    spans: Vec<Range<usize>>,
    current: Vec<String>,
    initial: Vec<bool>,
    tags: Vec<PosTag>,
}

impl<'a> Working<'a> {
    fn new(text: &'a str, full: &TokenSeq, tagger: &PosTagger) -> Self {
        let words: Vec<&str> = full.word_spans.iter().map(|s| s.word.as_str()).collect();
        let mut initial = Vec::with_capacity(words.len());
        let mut at_start = true;
        for w in &words {
            initial.push(at_start);
            at_start = matches!(*w, "." | "!" | "?");
        }
        Working {
            text,
            spans: full.word_spans.iter().map(|s| s.bytes.clone()).collect(),
            current: words.iter().map(|w| w.to_string()).collect(),
            initial,
            tags: tagger.tag(&words),
        }
    }

    /// Current text, optionally with one span overridden, and the byte
    /// range of every span in it.
    fn render(&self, over: Option<(usize, &str)>) -> (String, Vec<Range<usize>>) {
        let mut out = String::with_capacity(self.text.len() + 16);
        let mut ranges = Vec::with_capacity(self.spans.len());
        let mut cursor = 0;
        for (i, span) in self.spans.iter().enumerate() {
            out.push_str(&self.text[cursor..span.start]);
            let word = match over {
                Some((j, w)) if j == i => w,
                _ => self.current[i].as_str(),
            };
            let start = out.len();
            out.push_str(word);
            ranges.push(start..out.len());
            cursor = span.end;
        }
        out.push_str(&self.text[cursor..]);
        (out, ranges)
    }

    fn sentence_of(text: &str, at: usize) -> String {
        sentence_spans(text)
            .into_iter()
            .find(|r| r.start <= at && at < r.end)
            .map(|r| text[r].to_string())
            .unwrap_or_else(|| text.trim().to_string())
    }

    fn sentence_pair(&self, idx: usize, candidate: &str) -> (String, String) {
        let (before, r0) = self.render(None);
        let (after, r1) = self.render(Some((idx, candidate)));
        (Self::sentence_of(&before, r0[idx].start), Self::sentence_of(&after, r1[idx].start))
    }
}

/// A candidate that passed the synonym, POS and sentence gates.
struct Gated {
    word: String,
    cosine: f64,
    sim: f64,
    before: String,
    after: String,
}

fn gate_candidates(work: &Working<'_>, idx: usize, ctx: &AttackContext, cfg: &AttackConfig) -> Result<Vec<Gated>> {
    let original = &work.current[idx];
    let pos = work.tags[idx];
    let mut out = Vec::new();
    for (syn, cosine) in ctx.store.nearest_synonyms(original, cfg.max_candidates, cfg.min_cosine) {
        let word = match_case(original, &syn);
        if !is_single_word(&word) || word.eq_ignore_ascii_case(original) {
            continue;
        }
        if ctx.tagger.tag_word(&word, work.initial[idx]) != pos {
            continue;
        }
        let (before, after) = work.sentence_pair(idx, &word);
        let sim = sentence_similarity(&before, &after, &ctx.encoder)?;
        if sim < cfg.sentence_sim_floor {
            continue;
        }
        out.push(Gated {
            word,
            cosine,
            sim,
            before,
            after,
        });
    }
    Ok(out)
}

fn lowest_probability(
    gated: Vec<Gated>,
    seq: &TokenSeq,
    idx: usize,
    ctx: &AttackContext,
    cfg: &AttackConfig,
) -> Result<Option<(Gated, f64)>> {
    let mut best: Option<(Gated, f64)> = None;
    for g in gated {
        let p = candidate_probability(ctx.lm.as_ref(), seq, idx, &g.word, cfg.backend_mode)?;
        if p > cfg.candidate_prob_ceiling {
            continue;
        }
        if best.as_ref().is_none_or(|(_, bp)| p < *bp) {
            best = Some((g, p));
        }
    }
    Ok(best)
}

fn record(idx: usize, original: &str, g: Gated, pos: PosTag, scores: Option<(WordImportance, f64)>) -> Replacement {
    Replacement {
        word_span_index: idx,
        original: original.to_string(),
        replacement: g.word,
        original_prob: scores.map(|s| s.0.prob),
        original_rank: scores.map(|s| s.0.rank),
        replacement_prob: scores.map(|s| s.1),
        sentence_sim: g.sim,
        word_cosine: g.cosine,
        pos,
        sentence_before: g.before,
        sentence_after: g.after,
    }
}

fn prepare<'a>(doc: &'a Document, ctx: &AttackContext, cfg: &AttackConfig) -> Result<(Working<'a>, TokenSeq)> {
    cfg.validate()?;
    if doc.label != Label::Synthetic {
        log::warn!("attacking document {} labelled {}", doc.id, doc.label.as_str());
    }
    let full = ctx.tokenizer.tokenize(&doc.text);
    if full.is_empty() {
        return Err(Error::EmptyText {
            id: doc.id.clone(),
            line: 0,
        });
    }
    let seq = full.truncate_to_window(cfg.window);
    Ok((Working::new(&doc.text, &full, &ctx.tagger), seq))
}

/// Runs the four-step synonym search for one word of `doc` (without any
/// earlier substitutions). `None` when no candidate passes every gate.
pub fn find_replacement(doc: &Document, word_span_index: usize, ctx: &AttackContext, cfg: &AttackConfig) -> Result<Option<Replacement>> {
    let (work, seq) = prepare(doc, ctx, cfg)?;
    let Some(span) = seq.word_spans.get(word_span_index) else {
        return Err(Error::Precondition(format!("word span {word_span_index} is outside the window")));
    };
    if !ctx.attackable(&span.word) {
        return Err(Error::Precondition(format!("{:?} is a stop word or punctuation", span.word)));
    }
    let scores = score_tokens(ctx.lm.as_ref(), &seq, cfg.backend_mode)?;
    let first = &scores[span.tokens.start];
    let imp = WordImportance {
        word_span_index,
        prob: first.prob,
        rank: first.rank,
    };
    let gated = gate_candidates(&work, word_span_index, ctx, cfg)?;
    Ok(lowest_probability(gated, &seq, word_span_index, ctx, cfg)?
        .map(|(g, p)| record(word_span_index, &span.word, g, work.tags[word_span_index], Some((imp, p)))))
}

fn finish(
    method: AttackMethod,
    doc: &Document,
    work: &Working<'_>,
    replacements: Vec<Replacement>,
    ctx: &AttackContext,
    cfg: &AttackConfig,
) -> Result<AttackResult> {
    let mut perturbed = doc.clone();
    perturbed.text = work.render(None).0;
    perturbed.meta.insert("attack".into(), method.to_string());
    perturbed.meta.insert("replacements".into(), replacements.len().to_string());
    let scorer = ctx.quality_scorer(cfg.window);
    let quality_before = scorer.score(doc)?.aggregate;
    let quality_after = scorer.score(&perturbed)?.aggregate;
    Ok(AttackResult {
        method,
        original: doc.clone(),
        perturbed,
        replacements,
        quality_before,
        quality_after,
        evaded: None,
    })
}

/// Replaces up to `cfg.n` of the most confidently predicted words with
/// their lowest-probability admissible synonym.
pub fn dftfooler_perturb(doc: &Document, ctx: &AttackContext, cfg: &AttackConfig) -> Result<AttackResult> {
    let (mut work, mut seq) = prepare(doc, ctx, cfg)?;
    let lm = ctx.lm.as_ref();
    let mut replacements = Vec::new();
    let mut attempted = HashSet::new();
    let mut ranking = order_by_importance(&seq, &score_tokens(lm, &seq, cfg.backend_mode)?, &ctx.stopwords);
    let mut next = 0;
    while replacements.len() < cfg.n {
        if cfg.iterative && next > 0 {
            ranking = order_by_importance(&seq, &score_tokens(lm, &seq, cfg.backend_mode)?, &ctx.stopwords);
            ranking.retain(|w| !attempted.contains(&w.word_span_index));
            next = 0;
        }
        let Some(&imp) = ranking.get(next) else { break };
        next += 1;
        let idx = imp.word_span_index;
        attempted.insert(idx);
        if idx >= seq.word_spans.len() {
            continue;
        }
        let gated = gate_candidates(&work, idx, ctx, cfg)?;
        if let Some((g, p)) = lowest_probability(gated, &seq, idx, ctx, cfg)? {
            let original = work.current[idx].clone();
            work.current[idx] = g.word.clone();
            replacements.push(record(idx, &original, g, work.tags[idx], Some((imp, p))));
            seq = ctx.tokenizer.tokenize(&work.render(None).0).truncate_to_window(cfg.window);
        }
    }
    finish(AttackMethod::Dftfooler, doc, &work, replacements, ctx, cfg)
}

fn id_stream(id: &str) -> u64 {
    // FNV-1a, stable across platforms and runs.
    id.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Baseline: visits attackable words in a seeded random order and takes a
/// uniformly chosen synonym that passes the similarity gates. The language
/// model is only used for quality scoring.
pub fn random_perturb(doc: &Document, ctx: &AttackContext, cfg: &AttackConfig) -> Result<AttackResult> {
    let (mut work, seq) = prepare(doc, ctx, cfg)?;
    let mut rng = stream_rng(cfg.seed, id_stream(&doc.id));
    let mut order: Vec<usize> = seq
        .word_spans
        .iter()
        .enumerate()
        .filter(|(_, s)| ctx.attackable(&s.word))
        .map(|(i, _)| i)
        .collect();
    order.shuffle(&mut rng);
    let mut replacements = Vec::new();
    for idx in order {
        if replacements.len() >= cfg.n {
            break;
        }
        let mut gated = gate_candidates(&work, idx, ctx, cfg)?;
        if gated.is_empty() {
            continue;
        }
        let g = gated.swap_remove(rng.random_range(0..gated.len()));
        let original = work.current[idx].clone();
        work.current[idx] = g.word.clone();
        replacements.push(record(idx, &original, g, work.tags[idx], None));
    }
    finish(AttackMethod::Random, doc, &work, replacements, ctx, cfg)
}

pub fn perturb(method: AttackMethod, doc: &Document, ctx: &AttackContext, cfg: &AttackConfig) -> Result<AttackResult> {
    match method {
        AttackMethod::Dftfooler => dftfooler_perturb(doc, ctx, cfg),
        AttackMethod::Random => random_perturb(doc, ctx, cfg),
    }
}

/// Attacks every document in parallel; output order follows input order.
pub fn attack_corpus(method: AttackMethod, docs: &[Document], ctx: &AttackContext, cfg: &AttackConfig) -> Result<Vec<AttackResult>> {
    docs.par_iter().map(|d| perturb(method, d, ctx, cfg)).collect()
}

fn splice(text: &str, spans: &[Range<usize>], words: &[String]) -> String {
    let mut out = String::with_capacity(text.len());
    let mut cursor = 0;
    for (span, w) in spans.iter().zip(words) {
        out.push_str(&text[cursor..span.start]);
        out.push_str(w);
        cursor = span.end;
    }
    out.push_str(&text[cursor..]);
    out
}

fn sentence_containing(text: &str, word_index: usize) -> Option<String> {
    let at = segment_words(text).get(word_index)?.start;
    sentence_spans(text)
        .into_iter()
        .find(|r| r.start <= at && at < r.end)
        .map(|r| text[r].to_string())
}

fn violation(doc: &Document, message: String) -> Error {
    Error::Contract(format!("audit of {}: {message}", doc.id))
}

/// Re-derives every recorded gate value of `result` from the raw inputs and
/// checks the result's structural invariants: at most `cfg.n` replacements,
/// no stop word or punctuation touched, and the perturbed text equal to the
/// original outside the recorded spans.
pub fn audit(result: &AttackResult, ctx: &AttackContext, cfg: &AttackConfig) -> Result<()> {
    const TOL: f64 = 1e-9;
    let doc = &result.original;
    let fail = |m: String| Err(violation(doc, m));
    if result.replacements.len() > cfg.n {
        return fail(format!("{} replacements exceed N={}", result.replacements.len(), cfg.n));
    }
    let spans = segment_words(&doc.text);
    let mut words: Vec<String> = spans.iter().map(|r| doc.text[r.clone()].to_string()).collect();
    let pristine = words.clone();
    let original_scores = if cfg.iterative {
        None
    } else {
        let seq = ctx.tokenizer.tokenize(&doc.text).truncate_to_window(cfg.window);
        Some((seq.clone(), score_tokens(ctx.lm.as_ref(), &seq, cfg.backend_mode)?))
    };

    let mut seen = HashSet::new();
    for r in &result.replacements {
        let i = r.word_span_index;
        if !seen.insert(i) {
            return fail(format!("span {i} replaced twice"));
        }
        if i >= words.len() || pristine[i] != r.original {
            return fail(format!("span {i} does not hold {:?}", r.original));
        }
        if !ctx.attackable(&r.original) {
            return fail(format!("{:?} is a stop word or punctuation", r.original));
        }
        let state = splice(&doc.text, &spans, &words);
        let seq = ctx.tokenizer.tokenize(&state).truncate_to_window(cfg.window);
        if i >= seq.word_spans.len() {
            return fail(format!("span {i} lies outside the window"));
        }

        // step 1: embedding neighbour
        let cos = ctx.store.cosine(&r.original, &r.replacement);
        if cos.is_none_or(|c| (c - r.word_cosine).abs() > TOL) || r.word_cosine < cfg.min_cosine {
            return fail(format!("{}→{} cosine {:?} vs recorded {}", r.original, r.replacement, cos, r.word_cosine));
        }
        // step 2: same coarse tag in context
        let mut after_words = words.clone();
        after_words[i] = r.replacement.clone();
        let tag_before = ctx.tagger.tag(&words)[i];
        let tag_after = ctx.tagger.tag(&after_words)[i];
        if tag_before != r.pos || tag_after != r.pos {
            return fail(format!("{}→{} tags {tag_before}/{tag_after}, recorded {}", r.original, r.replacement, r.pos));
        }
        // step 3: containing sentence similarity
        let after_state = splice(&doc.text, &spans, &after_words);
        if sentence_containing(&state, i).as_deref() != Some(r.sentence_before.as_str())
            || sentence_containing(&after_state, i).as_deref() != Some(r.sentence_after.as_str())
        {
            return fail(format!("recorded sentences of span {i} do not match the text"));
        }
        let sim = sentence_similarity(&r.sentence_before, &r.sentence_after, &ctx.encoder)?;
        if (sim - r.sentence_sim).abs() > TOL || sim < cfg.sentence_sim_floor {
            return fail(format!("sentence similarity {sim} vs recorded {}", r.sentence_sim));
        }
        // step 4: low probability in place (model-guided attacks only)
        match result.method {
            AttackMethod::Dftfooler => {
                let p = candidate_probability(ctx.lm.as_ref(), &seq, i, &r.replacement, cfg.backend_mode)?;
                let recorded = r.replacement_prob.unwrap_or(f64::NAN);
                let gap = (p - recorded).abs();
                if gap.is_nan() || gap > TOL || p > cfg.candidate_prob_ceiling {
                    return fail(format!("candidate probability {p} vs recorded {recorded}"));
                }
                let (ref_seq, scores) = match &original_scores {
                    Some((s, sc)) => (s.clone(), sc.clone()),
                    None => (seq.clone(), score_tokens(ctx.lm.as_ref(), &seq, cfg.backend_mode)?),
                };
                let first = &scores[ref_seq.word_spans[i].tokens.start];
                if r.original_prob != Some(first.prob) || r.original_rank != Some(first.rank) {
                    return fail(format!("importance of span {i} does not match the model"));
                }
            }
            AttackMethod::Random => {
                if r.replacement_prob.is_some() || r.original_prob.is_some() {
                    return fail("random baseline recorded model scores".into());
                }
            }
        }
        words = after_words;
    }

    if splice(&doc.text, &spans, &words) != result.perturbed.text {
        return fail("perturbed text differs outside the recorded spans".into());
    }
    Ok(())
}

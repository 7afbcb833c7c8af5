use std::ops::Range;

const ABBREVIATIONS: &[&str] = &["mr.", "dr.", "u.s.", "e.g.", "i.e."];

/// Rule-based sentence splitter.
///
/// A sentence ends at a run of `.`, `!` or `?` (plus closing quotes or
/// brackets) that is followed by whitespace and an uppercase letter, or by
/// the end of the text. A run that closes a protected abbreviation never
/// ends a sentence.
pub fn split_sentences(text: &str) -> Vec<String> {
    sentence_spans(text)
        .into_iter()
        .map(|r| text[r].to_string())
        .collect()
}

/// Byte ranges of the sentences in `text`, trimmed of surrounding whitespace.
pub fn sentence_spans(text: &str) -> Vec<Range<usize>> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut spans = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < chars.len() {
        if !is_terminator(chars[i].1) {
            i += 1;
            continue;
        }
        let mut j = i + 1;
        while j < chars.len() && (is_terminator(chars[j].1) || is_closer(chars[j].1)) {
            j += 1;
        }
        let end = chars.get(j).map_or(text.len(), |c| c.0);
        let mut k = j;
        while k < chars.len() && chars[k].1.is_whitespace() {
            k += 1;
        }
        let boundary = if k == chars.len() {
            true
        } else {
            k > j && chars[k].1.is_uppercase() && !ends_with_abbreviation(&text[start..end])
        };
        if boundary {
            push_trimmed(text, start..end, &mut spans);
            start = end;
        }
        i = j;
    }
    push_trimmed(text, start..text.len(), &mut spans);
    spans
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '\u{201d}' | '\u{2019}')
}

fn ends_with_abbreviation(chunk: &str) -> bool {
    let last = chunk.split_whitespace().last().unwrap_or("");
    let last = last.trim_start_matches(['(', '"', '\'', '\u{201c}']);
    ABBREVIATIONS.iter().any(|a| last.eq_ignore_ascii_case(a))
}

fn push_trimmed(text: &str, range: Range<usize>, out: &mut Vec<Range<usize>>) {
    let slice = &text[range.clone()];
    let lead = slice.len() - slice.trim_start().len();
    let trail = slice.len() - slice.trim_end().len();
    if lead + trail < slice.len() {
        out.push(range.start + lead..range.end - trail);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_on_each_terminator() {
        assert_eq!(split_sentences("A. B? C!"), ["A.", "B?", "C!"]);
    }

    #[test]
    fn abbreviations_protected() {
        assert_eq!(
            split_sentences("Dr. Smith left. He ran."),
            ["Dr. Smith left.", "He ran."]
        );
        assert_eq!(
            split_sentences("Ask Mr. Jones about the U.S. Army. Fine."),
            ["Ask Mr. Jones about the U.S. Army.", "Fine."]
        );
        assert_eq!(split_sentences("Use tools, e.g. Hammers."), ["Use tools, e.g. Hammers."]);
    }

    #[test]
    fn no_terminator_single_sentence() {
        assert_eq!(split_sentences("no terminator"), ["no terminator"]);
        assert!(split_sentences("   ").is_empty());
    }

    #[test]
    fn lowercase_continuation_does_not_split() {
        assert_eq!(split_sentences("It cost 3.5 dollars. ok then."), ["It cost 3.5 dollars. ok then."]);
    }

    #[test]
    fn closing_quote_stays_with_sentence() {
        assert_eq!(
            split_sentences("He said \"Go.\" Then left!"),
            ["He said \"Go.\"", "Then left!"]
        );
    }
}

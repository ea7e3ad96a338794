//! Rule-based sentence segmentation.
//!
//! A boundary is placed after `.`, `!` or `?` (optionally followed by closing
//! quotes or brackets) when the next non-whitespace character, after at least
//! one whitespace character, is an uppercase letter, a quotation mark, `(` or
//! `[`. Nothing else ends a sentence, so abbreviations such as "Dr. Smith"
//! split just like any other terminal period.

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_closing(c: char) -> bool {
    matches!(c, '"' | '\'' | '\u{201D}' | '\u{2019}' | '\u{00BB}' | ')' | ']')
}

fn opens_sentence(c: char) -> bool {
    c.is_uppercase()
        || matches!(
            c,
            '"' | '\'' | '\u{201C}' | '\u{2018}' | '\u{201D}' | '\u{2019}' | '\u{00AB}' | '(' | '['
        )
}

/// Collapse internal whitespace runs to single spaces and trim both ends.
pub fn normalize_whitespace(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for word in s.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// Split `text` into sentences. Empty or all-whitespace input yields an empty
/// list.
pub fn split_sentences(text: &str) -> Vec<String> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut sentences = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;

    while i < chars.len() {
        if !is_terminal(chars[i].1) {
            i += 1;
            continue;
        }
        // Runs like "?!" or "..." are consumed as one terminal cluster.
        let mut j = i + 1;
        while j < chars.len() && is_terminal(chars[j].1) {
            j += 1;
        }
        while j < chars.len() && is_closing(chars[j].1) {
            j += 1;
        }
        let mut k = j;
        while k < chars.len() && chars[k].1.is_whitespace() {
            k += 1;
        }
        if k > j && k < chars.len() && opens_sentence(chars[k].1) {
            let end = chars[j].0;
            push_sentence(&mut sentences, &text[start..end]);
            start = chars[k].0;
            i = k;
        } else {
            i = j.max(i + 1);
        }
    }
    push_sentence(&mut sentences, &text[start..]);
    sentences
}

fn push_sentence(out: &mut Vec<String>, raw: &str) {
    let s = normalize_whitespace(raw);
    if !s.is_empty() {
        out.push(s);
    }
}

/// Word count used for generation targets: whitespace-delimited tokens.
pub fn word_count<S: AsRef<str>>(sentences: &[S]) -> usize {
    sentences.iter().map(|s| s.as_ref().split_whitespace().count()).sum()
}

//! Tokenization shared by the readability, fidelity and consistency gates and
//! by the mock backend's pictogram lookup.
//!
//! A *word* is a maximal run of letters or digits. A *numeric token* is a
//! maximal digit run, allowing a single `.` or `,` between digits (`0.5`,
//! `1,000`). A *unit token* is an alphabetic run that immediately follows a
//! numeric token, either glued (`400mg`) or separated by whitespace only
//! (`8 hours`).

/// Maximal letter-or-digit runs.
pub fn words(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        if c.is_alphanumeric() {
            if start.is_none() {
                start = Some(i);
            }
        } else if let Some(s) = start.take() {
            out.push(&text[s..i]);
        }
    }
    if let Some(s) = start {
        out.push(&text[s..]);
    }
    out
}

/// Number of sentences: a sentence closes at `.`, `!` or `?` once it holds at
/// least one word. Trailing words without a terminator form a final sentence,
/// so any text with a word has at least one sentence. A `.` or `,` between two
/// digits is a decimal separator, not a terminator.
pub fn sentence_count(text: &str) -> usize {
    let chars: Vec<char> = text.chars().collect();
    let mut sentences = 0;
    let mut open = false;
    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            open = true;
        } else if matches!(c, '.' | '!' | '?') {
            let decimal = c == '.'
                && i > 0
                && chars[i - 1].is_ascii_digit()
                && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit());
            if open && !decimal {
                sentences += 1;
                open = false;
            }
        }
    }
    if open {
        sentences += 1;
    }
    sentences
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TokenKind {
    Numeric,
    Alpha,
}

#[derive(Debug, Clone, Copy)]
struct Token<'a> {
    kind: TokenKind,
    text: &'a str,
    /// Only whitespace (or nothing) separates this token from the previous one.
    adjacent: bool,
}

fn lex(text: &str) -> Vec<Token<'_>> {
    let bytes: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let mut adjacent = true;
    while i < bytes.len() {
        let (pos, c) = bytes[i];
        if c.is_ascii_digit() {
            let mut j = i + 1;
            while j < bytes.len() {
                let cj = bytes[j].1;
                if cj.is_ascii_digit() {
                    j += 1;
                } else if (cj == '.' || cj == ',')
                    && bytes.get(j + 1).is_some_and(|(_, n)| n.is_ascii_digit())
                {
                    j += 2;
                } else {
                    break;
                }
            }
            let end = bytes.get(j).map_or(text.len(), |(p, _)| *p);
            out.push(Token {
                kind: TokenKind::Numeric,
                text: &text[pos..end],
                adjacent,
            });
            adjacent = true;
            i = j;
        } else if c.is_alphabetic() {
            let mut j = i + 1;
            while j < bytes.len() && bytes[j].1.is_alphabetic() {
                j += 1;
            }
            let end = bytes.get(j).map_or(text.len(), |(p, _)| *p);
            out.push(Token {
                kind: TokenKind::Alpha,
                text: &text[pos..end],
                adjacent,
            });
            adjacent = true;
            i = j;
        } else {
            if !c.is_whitespace() {
                adjacent = false;
            }
            i += 1;
        }
    }
    out
}

/// Numeric tokens in order of appearance (duplicates kept).
pub fn numeric_tokens(text: &str) -> Vec<String> {
    lex(text)
        .into_iter()
        .filter(|t| t.kind == TokenKind::Numeric)
        .map(|t| t.text.to_string())
        .collect()
}

/// Alphabetic tokens directly following a numeric token, lowercased.
pub fn unit_tokens(text: &str) -> Vec<String> {
    let toks = lex(text);
    toks.windows(2)
        .filter(|w| {
            w[0].kind == TokenKind::Numeric && w[1].kind == TokenKind::Alpha && w[1].adjacent
        })
        .map(|w| w[1].text.to_lowercase())
        .collect()
}

/// Lowercased alphanumeric tokens where numbers and letters are separated
/// (`400mg` yields `400`, `mg`). Used for token-level membership tests.
pub fn fine_tokens(text: &str) -> Vec<String> {
    lex(text)
        .into_iter()
        .map(|t| t.text.to_lowercase())
        .collect()
}

/// Case-insensitive phrase search on word boundaries.
pub fn contains_phrase(haystack: &str, phrase: &str) -> bool {
    let needle: Vec<String> = words(phrase).iter().map(|w| w.to_lowercase()).collect();
    if needle.is_empty() {
        return false;
    }
    let hay: Vec<String> = words(haystack).iter().map(|w| w.to_lowercase()).collect();
    hay.windows(needle.len()).any(|w| w == needle.as_slice())
}

/// Lowercase hex SHA-256 digest.
pub fn content_hash(text: &str) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn words_split_on_non_alphanumerics() {
        assert_eq!(
            words("Take 400mg, every 8 hours."),
            vec!["Take", "400mg", "every", "8", "hours"]
        );
        assert!(words("  ... ").is_empty());
    }

    #[test]
    fn sentences() {
        assert_eq!(sentence_count("Stop."), 1);
        assert_eq!(sentence_count("Stop"), 1);
        assert_eq!(sentence_count("Stop. Go"), 2);
        assert_eq!(sentence_count("Wait... really?!"), 2);
        assert_eq!(sentence_count("Take 0.5 mg."), 1);
        assert_eq!(sentence_count("..."), 0);
    }

    #[test]
    fn numerics_and_units() {
        let t = "You should take Ibuprofen 400mg every 8 hours unless you experience gastric discomfort.";
        assert_eq!(numeric_tokens(t), vec!["400", "8"]);
        assert_eq!(unit_tokens(t), vec!["mg", "hours"]);
        assert_eq!(
            numeric_tokens("Take 0.5 ml or 1,000 units."),
            vec!["0.5", "1,000"]
        );
        assert_eq!(unit_tokens("Step 3: (5) - mg"), Vec::<String>::new());
    }

    #[test]
    fn phrase_matching_respects_word_boundaries() {
        assert!(contains_phrase(
            "Stop if you have Stomach  Pain.",
            "stomach pain"
        ));
        assert!(!contains_phrase("stomachpain", "stomach pain"));
        assert!(!contains_phrase("doctors", "doctor"));
    }
}

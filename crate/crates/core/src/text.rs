//! Text normalisation shared by answer matching, the linker and the
//! classifiers.
//!
//! Normalisation applies Unicode compatibility composition (NFKC) and
//! lowercasing, turns every character that is neither alphanumeric nor a
//! combining mark into a separator, and joins the resulting tokens with
//! single spaces. Tokens keep byte spans into the original text so the
//! linker can report mention offsets.

use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    /// Byte offsets into the source string.
    pub start: usize,
    pub end: usize,
}

/// NFKC and lowercase, iterated to a fixed point so that lowercasing the
/// input first never changes the result.
fn fold(s: &str) -> String {
    let mut cur: String = s.nfkc().collect::<String>().to_lowercase();
    for _ in 0..4 {
        let next: String = cur.nfkc().collect::<String>().to_lowercase();
        if next == cur {
            break;
        }
        cur = next;
    }
    cur
}

fn is_token_char(c: char) -> bool {
    c.is_alphanumeric() || is_combining_mark(c)
}

/// Splits `s` into clusters of a base character followed by its combining
/// marks; each cluster is normalised on its own so spans stay exact.
fn clusters(s: &str) -> impl Iterator<Item = (usize, usize)> + '_ {
    let mut iter = s.char_indices().peekable();
    std::iter::from_fn(move || {
        let (start, c) = iter.next()?;
        let mut end = start + c.len_utf8();
        while let Some(&(i, next)) = iter.peek() {
            if !is_combining_mark(next) {
                break;
            }
            end = i + next.len_utf8();
            iter.next();
        }
        Some((start, end))
    })
}

pub fn tokens(s: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut current: Option<Token> = None;
    for (start, end) in clusters(s) {
        for c in fold(&s[start..end]).chars() {
            if is_token_char(c) {
                let tok = current.get_or_insert_with(|| Token {
                    text: String::new(),
                    start,
                    end,
                });
                tok.text.push(c);
                tok.end = end;
            } else if let Some(tok) = current.take() {
                out.push(tok);
            }
        }
    }
    out.extend(current);
    out
}

pub fn normalize(s: &str) -> String {
    let toks = tokens(s);
    let mut out = String::with_capacity(s.len());
    for (i, t) in toks.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(&t.text);
    }
    out
}

/// Normalised token strings of `s`.
pub fn words(s: &str) -> Vec<String> {
    tokens(s).into_iter().map(|t| t.text).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn punctuation_and_case() {
        assert_eq!(normalize("It was  NEW-york city"), "it was new york city");
        assert_eq!(normalize("The capital is Paris."), "the capital is paris");
        assert_eq!(normalize("  ...  "), "");
    }

    #[test]
    fn compatibility_forms() {
        // full-width letters and the fi ligature
        assert_eq!(normalize("ＰＡＲＩＳ"), "paris");
        assert_eq!(normalize("ﬁnal"), "final");
        // decomposed e + acute equals the precomposed form
        assert_eq!(normalize("Caf\u{0065}\u{0301}"), normalize("Caf\u{00e9}"));
    }

    #[test]
    fn spans_point_into_source() {
        let s = "Who rules  New-York?";
        let t = tokens(s);
        let texts: Vec<&str> = t.iter().map(|t| &s[t.start..t.end]).collect();
        assert_eq!(texts, vec!["Who", "rules", "New", "York"]);
    }

    proptest! {
        #[test]
        fn idempotent(s in "\\PC{0,40}") {
            let n = normalize(&s);
            prop_assert_eq!(normalize(&n), n.clone());
            prop_assert_eq!(normalize(&s.to_lowercase()), n);
        }

        #[test]
        fn spans_are_ordered(s in "\\PC{0,40}") {
            let t = tokens(&s);
            for w in t.windows(2) {
                prop_assert!(w[0].start < w[0].end && w[0].end <= w[1].end && w[0].start <= w[1].start);
            }
            for tok in &t {
                prop_assert!(s.is_char_boundary(tok.start) && s.is_char_boundary(tok.end));
            }
        }
    }
}

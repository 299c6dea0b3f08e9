use unicode_properties::{GeneralCategoryGroup, UnicodeGeneralCategory};

use super::Token;

/// True for characters in any Unicode punctuation category (Pc, Pd, Ps, Pe,
/// Pi, Pf, Po). Currency and math symbols such as `$` are not punctuation.
pub fn is_punctuation(c: char) -> bool {
    c.general_category_group() == GeneralCategoryGroup::Punctuation
}

/// Whitespace split, then every leading and trailing punctuation character
/// of a word becomes its own token. Inner punctuation (`C/T`, `IL-6`) stays.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut out: Vec<Token> = Vec::new();
    let mut push = |s: &str| {
        let index = out.len();
        out.push(Token {
            text: s.to_string(),
            index,
        });
    };
    for word in text.split_whitespace() {
        let chars: Vec<(usize, char)> = word.char_indices().collect();
        let n = chars.len();
        let mut lo = 0;
        while lo < n && is_punctuation(chars[lo].1) {
            let (at, c) = chars[lo];
            push(&word[at..at + c.len_utf8()]);
            lo += 1;
        }
        let mut hi = n;
        while hi > lo && is_punctuation(chars[hi - 1].1) {
            hi -= 1;
        }
        if lo < hi {
            let start = chars[lo].0;
            let end = chars.get(hi).map_or(word.len(), |&(at, _)| at);
            push(&word[start..end]);
        }
        for &(at, c) in &chars[hi..] {
            push(&word[at..at + c.len_utf8()]);
        }
    }
    out
}

pub fn detokenize(tokens: &[Token]) -> String {
    tokens.iter().map(|t| t.text.as_str()).collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn texts(s: &str) -> Vec<String> {
        tokenize(s).into_iter().map(|t| t.text).collect()
    }

    #[test]
    fn worked_example_has_ten_tokens() {
        let toks = texts("The symptoms suggest a possible case of rheumatoid arthritis.");
        assert_eq!(toks.len(), 10);
        assert_eq!(toks.last().unwrap(), ".");
        assert_eq!(toks[7], "rheumatoid");
    }

    #[test]
    fn empty_input() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("  \n\t ").is_empty());
    }

    #[test]
    fn detaches_brackets_and_periods() {
        assert_eq!(
            texts("rs7566605 genotype (near INSIG2)."),
            ["rs7566605", "genotype", "(", "near", "INSIG2", ")", "."]
        );
    }

    #[test]
    fn inner_punctuation_kept() {
        assert_eq!(texts("C/T IL-6, x"), ["C/T", "IL-6", ",", "x"]);
        assert_eq!(texts("\"modafinil\""), ["\"", "modafinil", "\""]);
        assert_eq!(texts("..."), [".", ".", "."]);
        assert_eq!(texts("@GENE$"), ["@", "GENE$"]);
        assert_eq!(texts("«word»"), ["«", "word", "»"]);
    }

    #[test]
    fn indices_are_consecutive() {
        for (i, t) in tokenize("a (b) c.").iter().enumerate() {
            assert_eq!(t.index, i);
        }
    }

    proptest! {
        #[test]
        fn retokenizing_joined_tokens_is_idempotent(s in "\\PC{0,60}") {
            let first = tokenize(&s);
            let again = tokenize(&detokenize(&first));
            prop_assert_eq!(&first, &again);
            prop_assert_eq!(first, tokenize(&s));
        }
    }
}

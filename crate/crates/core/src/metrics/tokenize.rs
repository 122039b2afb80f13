use std::sync::LazyLock;

use regex::Regex;

static PUNCT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"([\p{P}\p{S}])").unwrap());

/// Tokenizer options mirroring the `case:lc|tok:tercom|punct:yes` scoring
/// signature. Both flags default to on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenizeOptions {
    pub lowercase: bool,
    pub keep_punct: bool,
}

impl Default for TokenizeOptions {
    fn default() -> Self {
        Self {
            lowercase: true,
            keep_punct: true,
        }
    }
}

/// Tercom-style tokenization.
///
/// Whitespace is normalized, text is optionally Unicode-lowercased, and every
/// character in general category `P*` or `S*` becomes a standalone token when
/// `keep_punct` is set (otherwise such characters are dropped).
pub fn tokenize_tercom(text: &str, opts: TokenizeOptions) -> Vec<String> {
    let text = if opts.lowercase {
        text.to_lowercase()
    } else {
        text.to_owned()
    };
    let spaced = if opts.keep_punct {
        PUNCT.replace_all(&text, " $1 ")
    } else {
        PUNCT.replace_all(&text, " ")
    };
    spaced.split_whitespace().map(str::to_owned).collect()
}

/// Tokenizes with the default scoring signature.
pub fn tokenize(text: &str) -> Vec<String> {
    tokenize_tercom(text, TokenizeOptions::default())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_punctuation() {
        assert_eq!(tokenize("Hello, world!"), ["hello", ",", "world", "!"]);
    }

    #[test]
    fn lowercases() {
        assert_eq!(tokenize("ABC"), ["abc"]);
        let keep_case = TokenizeOptions {
            lowercase: false,
            ..Default::default()
        };
        assert_eq!(tokenize_tercom("ABC", keep_case), ["ABC"]);
    }

    #[test]
    fn normalizes_whitespace() {
        assert_eq!(tokenize("  a   b "), ["a", "b"]);
        assert!(tokenize("").is_empty());
        assert!(tokenize(" \t\n").is_empty());
    }

    #[test]
    fn symbols_split_like_punctuation() {
        assert_eq!(tokenize("5€+3$"), ["5", "€", "+", "3", "$"]);
        assert_eq!(tokenize("你好，世界。"), ["你好", "，", "世界", "。"]);
    }

    #[test]
    fn drop_punct_mode() {
        let opts = TokenizeOptions {
            keep_punct: false,
            ..Default::default()
        };
        assert_eq!(tokenize_tercom("Hello, world!", opts), ["hello", "world"]);
    }
}

//! Whitespace tokenizer with byte fallback.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use log::debug;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const BOS: &str = "<s>";
pub const SEP: &str = "</s>";
pub const TAG_ID: &str = "<ID>";
pub const TAG_OOD: &str = "<OOD>";
const BYTE_TOKENS: usize = 256;

fn byte_token(b: u8) -> String {
    format!("<0x{b:02X}>")
}

fn is_reserved_form(word: &str) -> bool {
    [PAD, UNK, BOS, SEP].contains(&word) || (word.len() == 6 && word.starts_with("<0x") && word.ends_with('>'))
}

/// Words to include after the fixed special and byte tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabSpec {
    pub words: Vec<String>,
}

impl VocabSpec {
    /// The `max_words` most frequent whitespace tokens of `texts`; ties
    /// broken lexicographically.
    pub fn from_texts<'a>(texts: impl IntoIterator<Item = &'a str>, max_words: usize) -> Self {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for t in texts {
            for w in t.split_whitespace() {
                *counts.entry(w).or_default() += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        Self {
            words: ranked
                .into_iter()
                .map(|(w, _)| w.to_owned())
                .filter(|w| !is_reserved_form(w))
                .take(max_words)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    pub fn new(spec: &VocabSpec) -> Self {
        let mut tokens: Vec<String> = [PAD, UNK, BOS, SEP].iter().map(|s| s.to_string()).collect();
        tokens.extend((0..BYTE_TOKENS).map(|b| byte_token(b as u8)));
        let mut seen: std::collections::HashSet<&str> = tokens.iter().map(String::as_str).collect();
        let mut extra = Vec::new();
        for w in &spec.words {
            if !is_reserved_form(w) && seen.insert(w) {
                extra.push(w.clone());
            }
        }
        tokens.extend(extra);
        Self::from_tokens(tokens).expect("constructed vocabulary has unique tokens")
    }

    fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::invalid(format!("duplicate vocabulary token {t}")));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    /// Appends new single-item tokens; fails without modifying anything if
    /// any is already present or repeated.
    pub fn add_tokens(&mut self, new: &[&str]) -> Result<()> {
        for (i, t) in new.iter().enumerate() {
            if self.contains(t) || new[..i].contains(t) {
                return Err(Error::invalid(format!("duplicate tag {t}: already in vocabulary")));
            }
            if t.split_whitespace().count() != 1 || t.split_whitespace().next() != Some(*t) {
                return Err(Error::invalid(format!(
                    "tag `{t}` must be a single whitespace-free token"
                )));
            }
        }
        for t in new {
            self.index.insert(t.to_string(), self.tokens.len() as u32);
            self.tokens.push(t.to_string());
        }
        Ok(())
    }

    pub fn encode_word(&self, word: &str, out: &mut Vec<u32>) {
        match self.id(word) {
            Some(id) => out.push(id),
            None => out.extend(word.bytes().map(|b| 4 + b as u32)),
        }
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        let mut out = Vec::new();
        for w in text.split_whitespace() {
            self.encode_word(w, &mut out);
        }
        out
    }

    /// Encodes a rendered `<s> SRC </s> TRG [<Tag>] </s>` input, keeping at
    /// most `max_len` ids. Excess is cut from the tail of the target segment
    /// first, then from the tail of the source segment. Returns the ids and
    /// whether anything was cut.
    pub fn encode_rendered(&self, rendered: &str, max_len: usize) -> (Vec<u32>, bool) {
        let ids = self.encode(rendered);
        if ids.len() <= max_len {
            return (ids, false);
        }
        let sep = self.id(SEP);
        let bos = self.id(BOS);
        let tag_ids: Vec<u32> = [TAG_ID, TAG_OOD].iter().filter_map(|t| self.id(t)).collect();

        let start = usize::from(ids.first().copied() == bos && bos.is_some());
        let Some(first_sep) = ids[start..].iter().position(|&i| Some(i) == sep).map(|p| p + start) else {
            debug!("truncating unstructured input of {} tokens", ids.len());
            return (ids[..max_len].to_vec(), true);
        };
        let mut tail_start = ids.len();
        if ids.last().copied() == sep && tail_start - 1 > first_sep {
            tail_start -= 1;
        }
        if tail_start > first_sep + 1 && tag_ids.contains(&ids[tail_start - 1]) {
            tail_start -= 1;
        }
        let src = &ids[start..first_sep];
        let tgt = &ids[first_sep + 1..tail_start];
        let fixed = start + 1 + (ids.len() - tail_start);
        let budget = max_len.saturating_sub(fixed);
        let keep_tgt = tgt.len().min(budget.saturating_sub(src.len()));
        let keep_src = src.len().min(budget - keep_tgt);

        let mut out = Vec::with_capacity(max_len);
        out.extend_from_slice(&ids[..start]);
        out.extend_from_slice(&src[..keep_src]);
        out.push(ids[first_sep]);
        out.extend_from_slice(&tgt[..keep_tgt]);
        out.extend_from_slice(&ids[tail_start..]);
        out.truncate(max_len);
        debug!("truncated rendered input from {} to {} tokens", ids.len(), out.len());
        (out, true)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut body = self.tokens.join("\n");
        body.push('\n');
        crate::corpus::write_file(path, body.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_tokens(text.lines().map(str::to_owned).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vocabulary {
        Vocabulary::new(&VocabSpec {
            words: ["hallo", "hello", "welt"].map(String::from).to_vec(),
        })
    }

    #[test]
    fn layout_and_lookup() {
        let v = vocab();
        assert_eq!(v.len(), 4 + 256 + 3);
        assert_eq!(v.id(BOS), Some(2));
        assert_eq!(v.encode("hallo welt"), vec![260, 262]);
    }

    #[test]
    fn unknown_words_fall_back_to_bytes() {
        let v = vocab();
        assert_eq!(v.encode("ab"), vec![4 + b'a' as u32, 4 + b'b' as u32]);
    }

    #[test]
    fn tags_are_single_items_after_extension() {
        let mut v = vocab();
        assert!(v.encode(TAG_ID).len() > 1);
        v.add_tokens(&[TAG_ID, TAG_OOD]).unwrap();
        assert_eq!(v.encode("<s> hallo </s> hello <ID> </s>").len(), 6);
        assert!(v.add_tokens(&[TAG_ID]).is_err());
        assert!(v.add_tokens(&["<X>", "<X>"]).is_err());
    }

    #[test]
    fn truncation_cuts_target_first() {
        let mut v = vocab();
        v.add_tokens(&[TAG_ID, TAG_OOD]).unwrap();
        let rendered = "<s> hallo hallo </s> hello hello hello hello <ID> </s>";
        let (ids, cut) = v.encode_rendered(rendered, 8);
        assert!(cut);
        assert_eq!(ids.len(), 8);
        assert_eq!(ids, v.encode("<s> hallo hallo </s> hello hello <ID> </s>"));
        let (ids, _) = v.encode_rendered(rendered, 5);
        assert_eq!(ids, v.encode("<s> hallo </s> <ID> </s>"));
        let (ids, cut) = v.encode_rendered(rendered, 100);
        assert!(!cut);
        assert_eq!(ids.len(), 10);
    }

    #[test]
    fn spec_from_texts_ranks_by_frequency() {
        let spec = VocabSpec::from_texts(["b a b", "c b a", "<s> x"], 2);
        assert_eq!(spec.words, ["b", "a"]);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut v = vocab();
        v.add_tokens(&[TAG_OOD]).unwrap();
        let p = dir.path().join("vocab.txt");
        v.save(&p).unwrap();
        assert_eq!(Vocabulary::load(&p).unwrap(), v);
    }
}

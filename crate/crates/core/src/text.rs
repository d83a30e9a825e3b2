//! Tokenisation shared by every text-consuming component.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenizerMode {
    /// Lower-cased alphanumeric runs; every other visible character is its
    /// own token. CJK ideographs end up as single-character tokens.
    #[default]
    Words,
    /// One token per non-whitespace character.
    Chars,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tokenizer {
    pub mode: TokenizerMode,
}

impl Tokenizer {
    pub fn new(mode: TokenizerMode) -> Self {
        Self { mode }
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        match self.mode {
            TokenizerMode::Chars => text.chars().filter(|c| !c.is_whitespace()).map(|c| c.to_string()).collect(),
            TokenizerMode::Words => {
                let mut out = Vec::new();
                let mut cur = String::new();
                for c in text.chars() {
                    if is_word_char(c) {
                        cur.extend(c.to_lowercase());
                    } else {
                        if !cur.is_empty() {
                            out.push(std::mem::take(&mut cur));
                        }
                        if !c.is_whitespace() {
                            out.push(c.to_string());
                        }
                    }
                }
                if !cur.is_empty() {
                    out.push(cur);
                }
                out
            }
        }
    }

    pub fn detokenize<S: AsRef<str>>(&self, tokens: &[S]) -> String {
        match self.mode {
            TokenizerMode::Chars => tokens.iter().map(AsRef::as_ref).collect(),
            TokenizerMode::Words => {
                let mut out = String::new();
                for t in tokens {
                    let t = t.as_ref();
                    let attach = t.chars().count() == 1 && t.chars().all(|c| matches!(c, '.' | ',' | '!' | '?' | ';' | ':'));
                    if !out.is_empty() && !attach {
                        out.push(' ');
                    }
                    out.push_str(t);
                }
                out
            }
        }
    }
}

fn is_word_char(c: char) -> bool {
    (c.is_alphanumeric() || c == '\'' || c == '_') && !is_cjk(c)
}

fn is_cjk(c: char) -> bool {
    matches!(c as u32, 0x3400..=0x4DBF | 0x4E00..=0x9FFF | 0xF900..=0xFAFF | 0x3040..=0x30FF)
}

use std::collections::HashMap;
use std::path::Path;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Number of symbols in a SMILES alphabet.
pub const CHARSET_SIZE: usize = 64;
/// Default maximum encoded SMILES length.
pub const DEFAULT_SMILES_LEN: usize = 100;

const DEFAULT_CHARSET: &str =
    "#%()+-./=@[]\\0123456789ABCDEFGHIKLMNOPRSTUVWYZabcdefghilmnorstuy";

/// Ordered alphabet of 64 distinct characters.
#[derive(Clone, Debug, PartialEq)]
pub struct Charset {
    chars: Vec<char>,
    index: HashMap<char, usize>,
}

impl Default for Charset {
    fn default() -> Self {
        Charset::new(DEFAULT_CHARSET.chars().collect()).expect("default charset is valid")
    }
}

impl Charset {
    pub fn new(chars: Vec<char>) -> Result<Self> {
        if chars.len() != CHARSET_SIZE {
            return Err(Error::config(format!(
                "charset needs {CHARSET_SIZE} characters, got {}",
                chars.len()
            )));
        }
        let mut index = HashMap::new();
        for (i, &c) in chars.iter().enumerate() {
            if index.insert(c, i).is_some() {
                return Err(Error::config(format!("charset repeats `{c}`")));
            }
        }
        Ok(Charset { chars, index })
    }

    /// One character per line; blank lines are not allowed.
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut chars = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let mut it = line.chars();
            match (it.next(), it.next()) {
                (Some(c), None) => chars.push(c),
                _ => {
                    return Err(Error::data_at(
                        format!("{source}:{}", n + 1),
                        format!("expected exactly one character, got `{line}`"),
                    ))
                }
            }
        }
        Charset::new(chars).map_err(|e| Error::data_at(source.to_string(), e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Charset::parse(&text, &path.display().to_string())
    }

    pub fn to_text(&self) -> String {
        self.chars.iter().map(|c| format!("{c}\n")).collect()
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn index_of(&self, c: char) -> Option<usize> {
        self.index.get(&c).copied()
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    /// Charset indices of the first `q` known characters; unknown ones are dropped.
    pub fn indices(&self, smiles: &str, q: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut skipped = 0usize;
        for c in smiles.chars() {
            match self.index_of(c) {
                Some(i) if out.len() < q => out.push(i),
                Some(_) => {}
                None => skipped += 1,
            }
        }
        if skipped > 0 {
            log::debug!("skipped {skipped} characters outside the charset in `{smiles}`");
        }
        out
    }
}

/// One-hot `[p, q]` matrix with column `t` encoding character `t`.
pub fn encode_smiles(smiles: &str, charset: &Charset, q: usize) -> Tensor {
    let mut out = Tensor::zeros(&[charset.len(), q]);
    for (t, i) in charset.indices(smiles, q).into_iter().enumerate() {
        out.set(i, t, 1.0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn charset_with_c_at_5() -> Charset {
        let mut chars: Vec<char> = Charset::default().chars().to_vec();
        let pos = chars.iter().position(|&c| c == 'C').unwrap();
        chars.swap(pos, 5);
        Charset::new(chars).unwrap()
    }

    #[test]
    fn default_charset_is_valid() {
        let cs = Charset::default();
        assert_eq!(cs.len(), 64);
        assert_eq!(Charset::parse(&cs.to_text(), "x").unwrap(), cs);
    }

    #[test]
    fn encodes_cc() {
        let cs = charset_with_c_at_5();
        let m = encode_smiles("CC", &cs, 100);
        for t in 0..2 {
            for r in 0..64 {
                assert_eq!(m.at(r, t), if r == 5 { 1.0 } else { 0.0 });
            }
        }
        assert!((2..100).all(|t| (0..64).all(|r| m.at(r, t) == 0.0)));
    }

    #[test]
    fn empty_and_truncated() {
        let cs = Charset::default();
        assert!(encode_smiles("", &cs, 100).data().iter().all(|&v| v == 0.0));
        let long = "C".repeat(150);
        let m = encode_smiles(&long, &cs, 100);
        assert_eq!(m.data().iter().sum::<f64>(), 100.0);
    }

    #[test]
    fn unknown_characters_are_compacted() {
        let cs = Charset::default();
        assert_eq!(cs.indices("C?C", 10), cs.indices("CC", 10));
    }

    #[test]
    fn rejects_bad_charsets() {
        assert!(Charset::new(vec!['a'; 64]).is_err());
        assert!(Charset::new(vec!['a', 'b']).is_err());
        let err = Charset::parse("a\nbc\n", "cs.txt").unwrap_err().to_string();
        assert!(err.contains("cs.txt:2"), "{err}");
    }
}

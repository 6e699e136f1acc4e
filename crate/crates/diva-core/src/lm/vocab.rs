//! Token table shared by the whole pipeline.
//!
//! The vocabulary is closed and fixed: control tokens, task keywords, the
//! 36-symbol cell alphabet, and dedicated coordinate tokens R1..R12 /
//! C1..C12 so structure answers never require digit arithmetic.

use crate::error::{Error, Result};
use std::collections::HashMap;
use std::io::{BufRead, Write};

pub type TokenId = u32;

/// Largest table side; coordinate tokens exist for 1..=MAX_GRID.
pub const MAX_GRID: usize = 12;

/// Cell alphabet: single-token symbols.
pub const ALPHABET: [char; 36] = [
    'A', 'B', 'C', 'D', 'E', 'F', 'G', 'H', 'I', 'J', 'K', 'L', 'M', 'N', 'O', 'P', 'Q', 'R',
    'S', 'T', 'U', 'V', 'W', 'X', 'Y', 'Z', '0', '1', '2', '3', '4', '5', '6', '7', '8', '9',
];

const SPECIALS: [&str; 11] = [
    "<pad>", "<bos>", "<eos>", "<sep>", "<row>", "<col>", "<tcr>", "<tce>", "<tsr>", "<rce>",
    "<qa>",
];

#[derive(Clone, Debug)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocab {
    /// The fixed vocabulary used everywhere: specials, task keywords,
    /// alphabet, coordinate tokens. Ids are dense from 0 in that order.
    pub fn standard() -> Vocab {
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        tokens.extend(ALPHABET.iter().map(|c| c.to_string()));
        tokens.extend((1..=MAX_GRID).map(|r| format!("R{r}")));
        tokens.extend((1..=MAX_GRID).map(|c| format!("C{c}")));
        Vocab::from_tokens(tokens).expect("standard vocab is well-formed")
    }

    pub fn from_tokens(tokens: Vec<String>) -> Result<Vocab> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if tok.is_empty() {
                return Err(Error::InvalidConfig(format!("empty token at id {i}")));
            }
            if index.insert(tok.clone(), i as TokenId).is_some() {
                return Err(Error::InvalidConfig(format!("duplicate token `{tok}`")));
            }
        }
        Ok(Vocab { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Result<TokenId> {
        self.index
            .get(token)
            .copied()
            .ok_or_else(|| Error::UnknownToken(token.to_string()))
    }

    pub fn token(&self, id: TokenId) -> Result<&str> {
        self.tokens
            .get(id as usize)
            .map(|s| s.as_str())
            .ok_or(Error::TokenOutOfRange(id))
    }

    pub fn decode(&self, ids: &[TokenId]) -> Result<Vec<String>> {
        ids.iter().map(|&i| self.token(i).map(String::from)).collect()
    }

    // Special-token accessors. `standard()` guarantees these exist.
    pub fn pad(&self) -> TokenId {
        self.index["<pad>"]
    }
    pub fn bos(&self) -> TokenId {
        self.index["<bos>"]
    }
    pub fn eos(&self) -> TokenId {
        self.index["<eos>"]
    }
    pub fn sep(&self) -> TokenId {
        self.index["<sep>"]
    }
    pub fn row_marker(&self) -> TokenId {
        self.index["<row>"]
    }
    pub fn col_marker(&self) -> TokenId {
        self.index["<col>"]
    }

    /// Token for one alphabet symbol.
    pub fn symbol(&self, c: char) -> Result<TokenId> {
        let mut buf = [0u8; 4];
        self.id(c.encode_utf8(&mut buf))
    }

    /// Encode a cell string symbol-by-symbol.
    pub fn encode_cell(&self, cell: &str) -> Result<Vec<TokenId>> {
        cell.chars().map(|c| self.symbol(c)).collect()
    }

    /// Row-coordinate token, 1-based.
    pub fn coord_row(&self, r: usize) -> Result<TokenId> {
        self.id(&format!("R{r}"))
    }

    /// Column-coordinate token, 1-based.
    pub fn coord_col(&self, c: usize) -> Result<TokenId> {
        self.id(&format!("C{c}"))
    }

    /// Inverse of `coord_row`, if `id` is a row-coordinate token.
    pub fn as_coord_row(&self, id: TokenId) -> Option<usize> {
        let tok = self.tokens.get(id as usize)?;
        let n: usize = tok.strip_prefix('R')?.parse().ok()?;
        (1..=MAX_GRID).contains(&n).then_some(n)
    }

    pub fn as_coord_col(&self, id: TokenId) -> Option<usize> {
        let tok = self.tokens.get(id as usize)?;
        let n: usize = tok.strip_prefix('C')?.parse().ok()?;
        (1..=MAX_GRID).contains(&n).then_some(n)
    }

    /// Inverse of `symbol`, if `id` is an alphabet token.
    pub fn as_symbol(&self, id: TokenId) -> Option<char> {
        let tok = self.tokens.get(id as usize)?;
        let mut chars = tok.chars();
        let c = chars.next()?;
        (chars.next().is_none() && ALPHABET.contains(&c)).then_some(c)
    }

    // ── File format: one token per line ─────────────────────────────

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        for tok in &self.tokens {
            writeln!(w, "{tok}")?;
        }
        Ok(())
    }

    pub fn read_from(r: impl BufRead) -> Result<Vocab> {
        let mut tokens = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                return Err(Error::LineParse {
                    line: lineno + 1,
                    msg: "empty token line".into(),
                });
            }
            if line.chars().any(|c| c.is_whitespace()) {
                return Err(Error::LineParse {
                    line: lineno + 1,
                    msg: format!("token `{line}` contains whitespace"),
                });
            }
            tokens.push(line);
        }
        Vocab::from_tokens(tokens).map_err(|e| match e {
            Error::InvalidConfig(msg) => Error::LineParse { line: 0, msg },
            other => other,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_vocab_is_dense_and_round_trips() {
        let v = Vocab::standard();
        assert_eq!(v.len(), 11 + 36 + 12 + 12);
        for id in 0..v.len() as TokenId {
            let tok = v.token(id).unwrap().to_string();
            assert_eq!(v.id(&tok).unwrap(), id);
        }
    }

    #[test]
    fn coordinate_tokens_round_trip() {
        let v = Vocab::standard();
        for r in 1..=MAX_GRID {
            let id = v.coord_row(r).unwrap();
            assert_eq!(v.as_coord_row(id), Some(r));
            assert_eq!(v.as_coord_col(id), None);
        }
        for c in 1..=MAX_GRID {
            let id = v.coord_col(c).unwrap();
            assert_eq!(v.as_coord_col(id), Some(c));
        }
        // the alphabet letters R and C are not coordinates
        let r_letter = v.symbol('R').unwrap();
        assert_eq!(v.as_coord_row(r_letter), None);
        assert_eq!(v.as_symbol(r_letter), Some('R'));
    }

    #[test]
    fn file_round_trip_is_lossless() {
        let v = Vocab::standard();
        let mut buf = Vec::new();
        v.write_to(&mut buf).unwrap();
        let back = Vocab::read_from(buf.as_slice()).unwrap();
        assert_eq!(back.len(), v.len());
        for id in 0..v.len() as TokenId {
            assert_eq!(back.token(id).unwrap(), v.token(id).unwrap());
        }
    }

    #[test]
    fn duplicate_tokens_rejected() {
        let r = Vocab::read_from("a\nb\na\n".as_bytes());
        assert!(r.is_err());
    }
}

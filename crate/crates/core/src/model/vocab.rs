use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// Index of a symbol in a [`Vocabulary`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenId(pub u32);

impl TokenId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for TokenId {
    fn from(i: usize) -> Self {
        TokenId(i as u32)
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub const BOS_SYMBOL: &str = "<bos>";
pub const EOS_SYMBOL: &str = "<eos>";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    symbols: Vec<String>,
    bos: TokenId,
    eos: TokenId,
    lookup: HashMap<String, TokenId>,
}

/// On-disk form: `{"symbols": [...], "bos": int, "eos": int}`.
#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    symbols: Vec<String>,
    bos: u32,
    eos: u32,
}

impl TryFrom<VocabularyRepr> for Vocabulary {
    type Error = Error;
    fn try_from(r: VocabularyRepr) -> Result<Self> {
        Vocabulary::new(r.symbols, TokenId(r.bos), TokenId(r.eos))
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr {
            symbols: v.symbols,
            bos: v.bos.0,
            eos: v.eos.0,
        }
    }
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.symbols == other.symbols && self.bos == other.bos && self.eos == other.eos
    }
}

impl Eq for Vocabulary {}

impl Vocabulary {
    pub fn new(symbols: Vec<String>, bos: TokenId, eos: TokenId) -> Result<Self> {
        ensure!(
            symbols.len() >= 2,
            Validation,
            "vocabulary needs at least 2 symbols, got {}",
            symbols.len()
        );
        ensure!(
            bos.index() < symbols.len(),
            Validation,
            "bos id {} out of range",
            bos
        );
        ensure!(
            eos.index() < symbols.len(),
            Validation,
            "eos id {} out of range",
            eos
        );
        let mut lookup = HashMap::with_capacity(symbols.len());
        for (i, s) in symbols.iter().enumerate() {
            if lookup.insert(s.clone(), TokenId::from(i)).is_some() {
                return Err(Error::Validation(format!("duplicate symbol {s:?}")));
            }
        }
        Ok(Self {
            symbols,
            bos,
            eos,
            lookup,
        })
    }

    /// Character-level vocabulary: `<bos>`, `<eos>`, then every distinct
    /// character of `text` in code-point order.
    pub fn from_text(text: &str) -> Result<Self> {
        let chars: BTreeSet<char> = text.chars().collect();
        let mut symbols = vec![BOS_SYMBOL.to_string(), EOS_SYMBOL.to_string()];
        symbols.extend(chars.into_iter().map(String::from));
        Self::new(symbols, TokenId(0), TokenId(1))
    }

    pub fn size(&self) -> usize {
        self.symbols.len()
    }

    pub fn bos(&self) -> TokenId {
        self.bos
    }

    pub fn eos(&self) -> TokenId {
        self.eos
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn id(&self, symbol: &str) -> Option<TokenId> {
        self.lookup.get(symbol).copied()
    }

    pub fn symbol(&self, id: TokenId) -> Option<&str> {
        self.symbols.get(id.index()).map(String::as_str)
    }

    pub fn contains(&self, id: TokenId) -> bool {
        id.index() < self.symbols.len()
    }

    /// Encodes `text` one character per token.
    pub fn encode_chars(&self, text: &str) -> Result<Vec<TokenId>> {
        let mut buf = [0u8; 4];
        text.chars()
            .map(|c| {
                self.id(c.encode_utf8(&mut buf))
                    .ok_or_else(|| Error::Validation(format!("character {c:?} not in vocabulary")))
            })
            .collect()
    }

    /// Concatenates symbols; `<bos>`/`<eos>` are dropped.
    pub fn decode(&self, tokens: &[TokenId]) -> String {
        tokens
            .iter()
            .filter(|&&t| t != self.bos && t != self.eos)
            .filter_map(|&t| self.symbol(t))
            .collect()
    }
}

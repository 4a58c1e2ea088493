//! Alphabet and word primitives for the free semigroup.
//!
//! A word of length `n` over an alphabet of size `|A|` is stored as the pair
//! `(n, rank)` where `rank` is the value of its digit string in base `|A|`
//! (first letter most significant). A full layer of length `n` is then a
//! bitmap of `|A|^n` bits and concatenation is `rank(u) * |A|^|v| + rank(v)`.

use crate::{Error, Measure, Q, Result};
use num_bigint::BigInt;
use num_traits::One;
use serde::{Deserialize, Serialize};

/// Alphabet of `size` letters, identified with ranks `0..size`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alphabet {
    size: u32,
}

impl Alphabet {
    pub fn new(size: u32) -> Result<Self> {
        if size == 0 {
            return Err(Error::OutOfRange("alphabet size must be >= 1".into()));
        }
        Ok(Alphabet { size })
    }

    pub fn size(&self) -> u32 {
        self.size
    }

    /// `|A|^n` as u64, or an error when it does not fit in 64 bits.
    pub fn layer_size(&self, n: u32) -> Result<u64> {
        let mut v: u64 = 1;
        for _ in 0..n {
            v = v
                .checked_mul(self.size as u64)
                .ok_or_else(|| Error::BoundOverflow(format!("|A|^{n} exceeds 64 bits")))?;
        }
        Ok(v)
    }

    /// Empty word.
    pub fn empty(&self) -> Word {
        Word { len: 0, rank: 0, base: self.size }
    }

    /// Single-letter word of the given rank.
    pub fn letter(&self, rank: u32) -> Result<Word> {
        if rank >= self.size {
            return Err(Error::OutOfRange(format!("letter rank {rank} >= |A| = {}", self.size)));
        }
        Ok(Word { len: 1, rank: rank as u64, base: self.size })
    }

    /// Word from explicit letter ranks, first letter first.
    pub fn word(&self, letters: &[u32]) -> Result<Word> {
        let mut rank: u64 = 0;
        for &l in letters {
            if l >= self.size {
                return Err(Error::OutOfRange(format!("letter rank {l} >= |A| = {}", self.size)));
            }
            rank = rank
                .checked_mul(self.size as u64)
                .and_then(|r| r.checked_add(l as u64))
                .ok_or_else(|| Error::BoundOverflow("word rank exceeds 64 bits".into()))?;
        }
        Ok(Word { len: letters.len() as u32, rank, base: self.size })
    }

    /// Parses the text syntax: lowercase letters `a`, `b`, ... by rank; the
    /// empty string is the empty word.
    pub fn parse(&self, text: &str) -> Result<Word> {
        let mut letters = Vec::with_capacity(text.len());
        for c in text.chars() {
            if !c.is_ascii_lowercase() {
                return Err(Error::InvalidWord(format!("bad letter {c:?} in {text:?}")));
            }
            letters.push(c as u32 - 'a' as u32);
        }
        self.word(&letters)
    }
}

/// A word in the free semigroup, stored as `(length, rank)`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Word {
    len: u32,
    rank: u64,
    base: u32,
}

impl std::fmt::Debug for Word {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Word({:?})", self.render())
    }
}

impl Word {
    pub fn from_rank(base: u32, len: u32, rank: u64) -> Self {
        debug_assert!({
            let mut cap: u128 = 1;
            for _ in 0..len {
                cap *= base as u128;
            }
            (rank as u128) < cap
        });
        Word { len, rank, base }
    }

    pub fn len(&self) -> u32 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn rank(&self) -> u64 {
        self.rank
    }

    pub fn alphabet_size(&self) -> u32 {
        self.base
    }

    /// Letter ranks, first letter first.
    pub fn letters(&self) -> Vec<u32> {
        let mut out = vec![0u32; self.len as usize];
        let mut r = self.rank;
        for i in (0..self.len as usize).rev() {
            out[i] = (r % self.base as u64) as u32;
            r /= self.base as u64;
        }
        out
    }

    pub fn render(&self) -> String {
        self.letters().iter().map(|&l| (b'a' + l as u8) as char).collect()
    }

    fn check_same_alphabet(&self, other: &Word) -> Result<()> {
        if self.base != other.base {
            return Err(Error::AlphabetMismatch(self.base, other.base));
        }
        Ok(())
    }

    /// Concatenation `self . other`.
    pub fn concat(&self, other: &Word) -> Result<Word> {
        self.check_same_alphabet(other)?;
        let mut shift: u64 = 1;
        for _ in 0..other.len {
            shift = shift
                .checked_mul(self.base as u64)
                .ok_or_else(|| Error::BoundOverflow("concatenation exceeds 64-bit ranks".into()))?;
        }
        let rank = self
            .rank
            .checked_mul(shift)
            .and_then(|r| r.checked_add(other.rank))
            .ok_or_else(|| Error::BoundOverflow("concatenation exceeds 64-bit ranks".into()))?;
        Ok(Word { len: self.len + other.len, rank, base: self.base })
    }

    /// True iff `other = self . x` for some (possibly empty) `x`.
    pub fn is_prefix_of(&self, other: &Word) -> Result<bool> {
        self.check_same_alphabet(other)?;
        if self.len > other.len {
            return Ok(false);
        }
        let mut shift: u64 = 1;
        for _ in 0..(other.len - self.len) {
            shift *= self.base as u64;
        }
        Ok(other.rank / shift == self.rank)
    }

    /// True iff `other = x . self` for some (possibly empty) `x`.
    pub fn is_suffix_of(&self, other: &Word) -> Result<bool> {
        self.check_same_alphabet(other)?;
        if self.len > other.len {
            return Ok(false);
        }
        let mut m: u64 = 1;
        for _ in 0..self.len {
            m *= self.base as u64;
        }
        Ok(other.rank % m == self.rank)
    }

    /// Prefix of the given length.
    pub fn prefix(&self, len: u32) -> Word {
        debug_assert!(len <= self.len);
        let mut r = self.rank;
        for _ in 0..(self.len - len) {
            r /= self.base as u64;
        }
        Word { len, rank: r, base: self.base }
    }

    /// Suffix of the given length.
    pub fn suffix(&self, len: u32) -> Word {
        debug_assert!(len <= self.len);
        let mut m: u64 = 1;
        for _ in 0..len {
            m *= self.base as u64;
        }
        Word { len, rank: self.rank % m, base: self.base }
    }

    /// Digit string reversed; an involution preserving length and mu.
    pub fn reverse(&self) -> Word {
        let mut letters = self.letters();
        letters.reverse();
        let mut rank: u64 = 0;
        for l in letters {
            rank = rank * self.base as u64 + l as u64;
        }
        Word { len: self.len, rank, base: self.base }
    }

    /// Exact measure `|A|^-|w|`.
    pub fn mu(&self) -> Measure {
        Q::new(BigInt::one(), BigInt::from(self.base).pow(self.len))
    }
}

/// Enumerates the full layer of length `n` in rank order.
pub fn layer(alphabet: Alphabet, n: u32) -> Result<impl Iterator<Item = Word>> {
    let size = alphabet.layer_size(n)?;
    let base = alphabet.size();
    Ok((0..size).map(move |rank| Word { len: n, rank, base }))
}

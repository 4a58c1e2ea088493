//! Fixed-width bitmaps backing the per-layer word sets.

/// A bitmap over `len` bits stored in 64-bit words.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Bitmap {
    len: u64,
    words: Vec<u64>,
}

impl Bitmap {
    pub fn zeros(len: u64) -> Self {
        let n = len.div_ceil(64) as usize;
        Bitmap { len, words: vec![0; n] }
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    #[inline]
    pub fn get(&self, i: u64) -> bool {
        debug_assert!(i < self.len);
        self.words[(i / 64) as usize] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: u64) {
        debug_assert!(i < self.len);
        self.words[(i / 64) as usize] |= 1 << (i % 64);
    }

    #[inline]
    pub fn clear(&mut self, i: u64) {
        debug_assert!(i < self.len);
        self.words[(i / 64) as usize] &= !(1 << (i % 64));
    }

    pub fn count(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    pub fn is_empty_set(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// First set bit, if any.
    pub fn first_one(&self) -> Option<u64> {
        for (i, &w) in self.words.iter().enumerate() {
            if w != 0 {
                return Some(i as u64 * 64 + w.trailing_zeros() as u64);
            }
        }
        None
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = u64> + '_ {
        self.words.iter().enumerate().flat_map(|(i, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    None
                } else {
                    let b = w.trailing_zeros() as u64;
                    w &= w - 1;
                    Some(i as u64 * 64 + b)
                }
            })
        })
    }

    pub fn union_with(&mut self, other: &Bitmap) {
        debug_assert_eq!(self.len, other.len);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    pub fn intersect_with(&mut self, other: &Bitmap) {
        debug_assert_eq!(self.len, other.len);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= b;
        }
    }

    pub fn intersection(&self, other: &Bitmap) -> Bitmap {
        let mut out = self.clone();
        out.intersect_with(other);
        out
    }

    pub fn intersects(&self, other: &Bitmap) -> bool {
        debug_assert_eq!(self.len, other.len);
        self.words.iter().zip(&other.words).any(|(a, b)| a & b != 0)
    }

    /// ORs `src` into `self` starting at bit position `offset`.
    ///
    /// `offset + src.len` must fit inside `self`. This is the hot loop of the
    /// layer-convolution product: a whole source layer lands at the rank
    /// offset of one prefix word.
    pub fn or_shifted(&mut self, src: &Bitmap, offset: u64) {
        debug_assert!(offset + src.len <= self.len);
        let word_off = (offset / 64) as usize;
        let bit_off = (offset % 64) as u32;
        let n = src.len.div_ceil(64) as usize;
        if bit_off == 0 {
            for i in 0..n {
                self.words[word_off + i] |= src.words[i];
            }
        } else {
            let mut carry = 0u64;
            for i in 0..n {
                let w = src.words[i];
                self.words[word_off + i] |= (w << bit_off) | carry;
                carry = w >> (64 - bit_off);
            }
            if carry != 0 {
                self.words[word_off + n] |= carry;
            }
        }
    }

    /// True when some bit in `[start, start + width)` is set.
    pub fn any_in_range(&self, start: u64, width: u64) -> bool {
        debug_assert!(start + width <= self.len);
        let mut i = start;
        let end = start + width;
        // Leading partial word.
        while i < end && i % 64 != 0 {
            if self.get(i) {
                return true;
            }
            i += 1;
        }
        while i + 64 <= end {
            if self.words[(i / 64) as usize] != 0 {
                return true;
            }
            i += 64;
        }
        while i < end {
            if self.get(i) {
                return true;
            }
            i += 1;
        }
        false
    }

    /// Number of set bits in `[start, start + width)`.
    pub fn count_range(&self, start: u64, width: u64) -> u64 {
        debug_assert!(start + width <= self.len);
        let mut total = 0;
        let mut i = start;
        let end = start + width;
        while i < end && i % 64 != 0 {
            total += self.get(i) as u64;
            i += 1;
        }
        while i + 64 <= end {
            total += self.words[(i / 64) as usize].count_ones() as u64;
            i += 64;
        }
        while i < end {
            total += self.get(i) as u64;
            i += 1;
        }
        total
    }

    pub fn as_words(&self) -> &[u64] {
        &self.words
    }

    pub fn from_words(len: u64, words: Vec<u64>) -> Self {
        debug_assert_eq!(words.len() as u64, len.div_ceil(64));
        Bitmap { len, words }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shifted_or_matches_bitwise_loop() {
        for offset in [0u64, 1, 3, 63, 64, 65, 100] {
            let mut src = Bitmap::zeros(130);
            for i in [0u64, 1, 63, 64, 77, 129] {
                src.set(i);
            }
            let mut fast = Bitmap::zeros(300);
            fast.or_shifted(&src, offset);
            let mut slow = Bitmap::zeros(300);
            for i in src.iter_ones() {
                slow.set(i + offset);
            }
            assert_eq!(fast, slow, "offset {offset}");
        }
    }

    #[test]
    fn range_queries() {
        let mut b = Bitmap::zeros(200);
        b.set(5);
        b.set(100);
        assert!(b.any_in_range(0, 10));
        assert!(!b.any_in_range(6, 90));
        assert_eq!(b.count_range(0, 200), 2);
        assert_eq!(b.count_range(5, 96), 2);
        assert_eq!(b.count_range(6, 94), 0);
        assert_eq!(b.first_one(), Some(5));
    }
}

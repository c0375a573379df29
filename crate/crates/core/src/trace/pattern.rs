use std::fmt;

use smallvec::SmallVec;

use crate::error::{Error, Result};

/// Non-zero mask of one kernel window: bit `i` is set iff activation `i` of
/// the window is non-zero. Windows up to 128 elements are stored inline.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct WindowPattern {
    len: u16,
    words: SmallVec<[u64; 2]>,
}

impl WindowPattern {
    fn word_count(len: usize) -> usize {
        len.div_ceil(64)
    }

    /// An all-zero window (every activation is zero, no bit set).
    pub fn empty(len: usize) -> Self {
        assert!(len <= usize::from(u16::MAX), "window too large");
        WindowPattern {
            len: len as u16,
            words: SmallVec::from_elem(0, Self::word_count(len)),
        }
    }

    /// A fully dense window (every bit set).
    pub fn dense(len: usize) -> Self {
        let mut p = Self::empty(len);
        for i in 0..len {
            p.set(i, true);
        }
        p
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let mut p = Self::empty(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            p.set(i, b);
        }
        p
    }

    /// Parses a `0`/`1` string, character `i` giving element `i`.
    pub fn from_mask_str(s: &str) -> Result<Self> {
        let mut p = Self::empty(s.len());
        for (i, c) in s.chars().enumerate() {
            match c {
                '0' => {}
                '1' => p.set(i, true),
                other => {
                    return Err(Error::invalid(
                        "mask",
                        "mask",
                        format!("unexpected character {other:?} in {s:?}"),
                    ))
                }
            }
        }
        Ok(p)
    }

    pub fn len(&self) -> usize {
        usize::from(self.len)
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len(), "bit {i} out of range");
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len(), "bit {i} out of range");
        let bit = 1u64 << (i % 64);
        if value {
            self.words[i / 64] |= bit;
        } else {
            self.words[i / 64] &= !bit;
        }
    }

    /// Number of non-zero activations.
    pub fn nnz(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    pub fn zero_count(&self) -> u32 {
        self.len as u32 - self.nnz()
    }

    pub fn to_mask_string(&self) -> String {
        (0..self.len())
            .map(|i| if self.get(i) { '1' } else { '0' })
            .collect()
    }

    /// Packed little-endian bytes, element `i` at byte `i / 8`, bit `i % 8`.
    pub fn write_packed(&self, out: &mut Vec<u8>) {
        let n = self.len().div_ceil(8);
        for b in 0..n {
            out.push((self.words[b / 8] >> ((b % 8) * 8)) as u8);
        }
    }

    /// Inverse of [`write_packed`](Self::write_packed). Returns `None` if any
    /// padding bit beyond `len` is set.
    pub fn read_packed(bytes: &[u8], len: usize) -> Option<Self> {
        debug_assert_eq!(bytes.len(), len.div_ceil(8));
        let mut p = Self::empty(len);
        for (b, &byte) in bytes.iter().enumerate() {
            p.words[b / 8] |= u64::from(byte) << ((b % 8) * 8);
        }
        let tail = len % 64;
        if tail != 0 && p.words.last().is_some_and(|w| w >> tail != 0) {
            return None;
        }
        Some(p)
    }
}

impl fmt::Debug for WindowPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "WindowPattern({})", self.to_mask_string())
    }
}

//! Bit streams packed LSB-first into bytes, with fixed-width and Elias-gamma codes.

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BitWriter {
    bytes: Vec<u8>,
    len: usize,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn push(&mut self, bit: bool) {
        if self.len % 8 == 0 {
            self.bytes.push(0);
        }
        if bit {
            *self.bytes.last_mut().unwrap() |= 1 << (self.len % 8);
        }
        self.len += 1;
    }

    /// Low `width` bits of `value`, most significant first.
    pub fn push_bits_msb(&mut self, value: u64, width: u32) {
        for k in (0..width).rev() {
            self.push(value >> k & 1 == 1);
        }
    }

    /// Elias-gamma code of `value >= 1`: `⌊log₂ v⌋` zeros, then `v` in binary.
    pub fn push_gamma(&mut self, value: u64) {
        assert!(value >= 1, "gamma code needs a positive value");
        let width = 64 - value.leading_zeros();
        for _ in 1..width {
            self.push(false);
        }
        self.push_bits_msb(value, width);
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn into_bits(self) -> Bits {
        Bits {
            bytes: self.bytes,
            len: self.len,
        }
    }
}

/// An owned bit string.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Bits {
    pub bytes: Vec<u8>,
    pub len: usize,
}

impl Bits {
    pub fn get(&self, i: usize) -> bool {
        self.bytes[i / 8] >> (i % 8) & 1 == 1
    }

    pub fn reader(&self) -> BitReader<'_> {
        BitReader::new(&self.bytes, self.len)
    }

    pub fn to_vec(&self) -> Vec<bool> {
        (0..self.len).map(|i| self.get(i)).collect()
    }
}

pub struct BitReader<'a> {
    bytes: &'a [u8],
    len: usize,
    pos: usize,
}

/// Longest gamma prefix accepted; lengths above 2^32 never occur in valid streams.
const MAX_GAMMA_ZEROS: u32 = 32;

impl<'a> BitReader<'a> {
    pub fn new(bytes: &'a [u8], len: usize) -> Self {
        debug_assert!(len <= bytes.len() * 8);
        Self { bytes, len, pos: 0 }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.len - self.pos
    }

    pub fn at_end(&self) -> bool {
        self.pos >= self.len
    }

    fn underflow(&self) -> Error {
        Error::corrupt(self.pos / 8, "bit stream ended early")
    }

    #[inline]
    pub fn read(&mut self) -> Result<bool> {
        if self.pos >= self.len {
            return Err(self.underflow());
        }
        let bit = self.bytes[self.pos / 8] >> (self.pos % 8) & 1 == 1;
        self.pos += 1;
        Ok(bit)
    }

    pub fn read_bits_msb(&mut self, width: u32) -> Result<u64> {
        if self.remaining() < width as usize {
            return Err(self.underflow());
        }
        let mut v = 0u64;
        for _ in 0..width {
            v = v << 1 | self.read()? as u64;
        }
        Ok(v)
    }

    pub fn read_gamma(&mut self) -> Result<u64> {
        let mut zeros = 0;
        while !self.read()? {
            zeros += 1;
            if zeros > MAX_GAMMA_ZEROS {
                return Err(Error::corrupt(self.pos / 8, "gamma code too long"));
            }
        }
        let rest = self.read_bits_msb(zeros)?;
        Ok(1 << zeros | rest)
    }
}

/// Bits needed for a fixed-width index below `count`: `⌈log₂ count⌉`.
pub fn index_width(count: u64) -> u32 {
    if count <= 1 {
        0
    } else {
        64 - (count - 1).leading_zeros()
    }
}

/// Length in bits of the gamma code of `value`.
pub fn gamma_len(value: u64) -> usize {
    2 * (63 - value.leading_zeros() as usize) + 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lsb_first_packing() {
        let mut w = BitWriter::new();
        for b in [true, false, false, false, false, false, false, false, true] {
            w.push(b);
        }
        let bits = w.into_bits();
        assert_eq!(bits.bytes, vec![0x01, 0x01]);
        assert_eq!(bits.len, 9);
    }

    #[test]
    fn gamma_codes() {
        let mut w = BitWriter::new();
        w.push_gamma(1);
        w.push_gamma(2);
        w.push_gamma(5);
        // 1 | 010 | 00101
        let expect = [true, false, true, false, false, false, true, false, true];
        assert_eq!(w.clone().into_bits().to_vec(), expect);
        let bits = w.into_bits();
        let mut r = bits.reader();
        assert_eq!(r.read_gamma().unwrap(), 1);
        assert_eq!(r.read_gamma().unwrap(), 2);
        assert_eq!(r.read_gamma().unwrap(), 5);
        assert!(r.at_end());
        assert!(r.read().is_err());
        assert_eq!(gamma_len(5), 5);
    }

    #[test]
    fn index_widths() {
        assert_eq!(index_width(0), 0);
        assert_eq!(index_width(1), 0);
        assert_eq!(index_width(2), 1);
        assert_eq!(index_width(3), 2);
        assert_eq!(index_width(4), 2);
        assert_eq!(index_width(5), 3);
    }

    #[test]
    fn runaway_gamma_rejected() {
        let bytes = [0u8; 16];
        let mut r = BitReader::new(&bytes, 128);
        assert!(r.read_gamma().is_err());
    }

    proptest! {
        #[test]
        fn mixed_codes_round_trip(values in prop::collection::vec((1u64..1 << 32, 0u32..41), 0..50)) {
            let mut w = BitWriter::new();
            for &(v, width) in &values {
                w.push_gamma(v);
                w.push_bits_msb(v & ((1u64 << width) - 1), width);
            }
            let bits = w.into_bits();
            let mut r = bits.reader();
            for &(v, width) in &values {
                prop_assert_eq!(r.read_gamma().unwrap(), v);
                prop_assert_eq!(r.read_bits_msb(width).unwrap(), v & ((1u64 << width) - 1));
            }
            prop_assert!(r.at_end());
        }
    }
}

//! Packed MSB-first bit buffer used for serialized payloads.

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Bits {
    bytes: Vec<u8>,
    len: usize,
}

impl Bits {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(bits: usize) -> Self {
        Self {
            bytes: Vec::with_capacity(bits.div_ceil(8)),
            len: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn push(&mut self, bit: bool) {
        if self.len % 8 == 0 {
            self.bytes.push(0);
        }
        if bit {
            self.bytes[self.len / 8] |= 0x80 >> (self.len % 8);
        }
        self.len += 1;
    }

    /// Appends the low `width` bits of `value`, most significant first.
    pub fn push_bits(&mut self, value: u64, width: usize) {
        for i in (0..width).rev() {
            self.push((value >> i) & 1 == 1);
        }
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        self.bytes[i / 8] & (0x80 >> (i % 8)) != 0
    }

    pub fn flip(&mut self, i: usize) {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        self.bytes[i / 8] ^= 0x80 >> (i % 8);
    }

    /// Reads `width` bits starting at `start` as an unsigned integer.
    pub fn read_bits(&self, start: usize, width: usize) -> u64 {
        (start..start + width).fold(0u64, |acc, i| (acc << 1) | self.get(i) as u64)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn from_bytes(bytes: Vec<u8>, len: usize) -> Self {
        assert!(len <= bytes.len() * 8);
        Self { bytes, len }
    }

    pub fn truncate(&mut self, len: usize) {
        if len < self.len {
            self.len = len;
            self.bytes.truncate(len.div_ceil(8));
            if len % 8 != 0 {
                let last = self.bytes.len() - 1;
                self.bytes[last] &= !(0xFFu8 >> (len % 8));
            }
        }
    }

    /// Copy of the bits in `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> Bits {
        let mut out = Bits::with_capacity(end - start);
        for i in start..end {
            out.push(self.get(i));
        }
        out
    }

    pub fn extend(&mut self, other: &Bits) {
        for i in 0..other.len() {
            self.push(other.get(i));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn msb_first_packing() {
        let mut b = Bits::new();
        b.push_bits(0b101, 3);
        b.push_bits(0xAB, 8);
        assert_eq!(b.len(), 11);
        assert_eq!(b.as_bytes(), &[0b1011_0101, 0b0110_0000]);
        assert_eq!(b.read_bits(3, 8), 0xAB);
    }

    #[test]
    fn truncate_clears_tail() {
        let mut b = Bits::new();
        b.push_bits(0xFFFF, 16);
        b.truncate(9);
        assert_eq!(b.as_bytes(), &[0xFF, 0x80]);
    }

    proptest! {
        #[test]
        fn values_read_back(vals in proptest::collection::vec((0u64..256, 1usize..9), 0..40)) {
            let mut b = Bits::new();
            for &(v, w) in &vals {
                b.push_bits(v & ((1 << w) - 1), w);
            }
            let mut pos = 0;
            for &(v, w) in &vals {
                prop_assert_eq!(b.read_bits(pos, w), v & ((1 << w) - 1));
                pos += w;
            }
            prop_assert_eq!(pos, b.len());
        }
    }
}

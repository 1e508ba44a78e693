use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde_with::{DeserializeFromStr, SerializeDisplay};

use crate::error::Error;

/// Deepest generation representable by a heap index in a u64.
pub const MAX_GENERATION: u32 = 62;

/// Node label in the binary genealogy: a bit string, root = empty string.
///
/// Stored as (generation, index) where `index` reads the bit string as a
/// binary number, so ordering by (generation, index) is breadth-first and
/// lexicographic within a generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, SerializeDisplay, DeserializeFromStr)]
pub struct UlamHarrisId {
    generation: u32,
    index: u64,
}

impl UlamHarrisId {
    pub const ROOT: UlamHarrisId = UlamHarrisId { generation: 0, index: 0 };

    pub fn new(generation: u32, index: u64) -> Option<Self> {
        if generation > MAX_GENERATION || (generation < 64 && index >> generation != 0) {
            return None;
        }
        Some(Self { generation, index })
    }

    pub fn generation(&self) -> u32 {
        self.generation
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn is_root(&self) -> bool {
        self.generation == 0
    }

    pub fn parent(&self) -> Option<Self> {
        (!self.is_root()).then(|| Self { generation: self.generation - 1, index: self.index >> 1 })
    }

    pub fn child(&self, bit: u8) -> Self {
        assert!(bit <= 1, "binary tree");
        assert!(self.generation < MAX_GENERATION, "generation limit reached");
        Self { generation: self.generation + 1, index: (self.index << 1) | bit as u64 }
    }

    /// Last bit of the label: 0 for the first child, 1 for the second.
    pub fn last_bit(&self) -> Option<u8> {
        (!self.is_root()).then_some((self.index & 1) as u8)
    }

    /// Position in breadth-first order of the complete tree.
    pub fn heap_index(&self) -> usize {
        ((1u64 << self.generation) - 1 + self.index) as usize
    }

    pub fn from_heap_index(h: usize) -> Self {
        let h = h as u64 + 1;
        let generation = 63 - h.leading_zeros();
        Self { generation, index: h - (1u64 << generation) }
    }
}

impl PartialOrd for UlamHarrisId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for UlamHarrisId {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.generation, self.index).cmp(&(other.generation, other.index))
    }
}

impl fmt::Display for UlamHarrisId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for k in (0..self.generation).rev() {
            f.write_str(if (self.index >> k) & 1 == 1 { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for UlamHarrisId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let s = s.trim();
        if s.len() > MAX_GENERATION as usize {
            return Err(Error::Data(format!("label longer than {MAX_GENERATION} bits")));
        }
        let mut index = 0u64;
        for c in s.chars() {
            index = (index << 1)
                | match c {
                    '0' => 0,
                    '1' => 1,
                    _ => return Err(Error::Data(format!("invalid character {c:?} in node label"))),
                };
        }
        Ok(Self { generation: s.len() as u32, index })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn root_prints_empty() {
        assert_eq!(UlamHarrisId::ROOT.to_string(), "");
        assert_eq!("".parse::<UlamHarrisId>().unwrap(), UlamHarrisId::ROOT);
    }

    #[test]
    fn labels_and_heap_indices() {
        let u: UlamHarrisId = "0110".parse().unwrap();
        assert_eq!(u.generation(), 4);
        assert_eq!(u.to_string(), "0110");
        assert_eq!(u.parent().unwrap().to_string(), "011");
        assert_eq!(u.child(1).to_string(), "01101");
        assert_eq!(UlamHarrisId::ROOT.child(0).heap_index(), 1);
        assert_eq!(UlamHarrisId::ROOT.child(1).heap_index(), 2);
        assert!("012".parse::<UlamHarrisId>().is_err());
    }

    #[test]
    fn ordering_is_breadth_first_then_lexicographic() {
        let mut ids: Vec<UlamHarrisId> = ["1", "00", "", "0", "01", "10"].iter().map(|s| s.parse().unwrap()).collect();
        ids.sort();
        let s: Vec<String> = ids.iter().map(|u| u.to_string()).collect();
        assert_eq!(s, vec!["", "0", "1", "00", "01", "10"]);
    }

    proptest! {
        #[test]
        fn heap_index_round_trip(h in 0usize..(1 << 24)) {
            let u = UlamHarrisId::from_heap_index(h);
            prop_assert_eq!(u.heap_index(), h);
            let parsed: UlamHarrisId = u.to_string().parse().unwrap();
            prop_assert_eq!(parsed, u);
        }

        #[test]
        fn children_know_their_parent(g in 0u32..40, idx in any::<u64>(), bit in 0u8..2) {
            let u = UlamHarrisId::new(g, idx & ((1u64 << g) - 1)).unwrap();
            let c = u.child(bit);
            prop_assert_eq!(c.parent(), Some(u));
            prop_assert_eq!(c.last_bit(), Some(bit));
            prop_assert_eq!(c.generation(), g + 1);
        }
    }
}

//! Flat parameter storage with a stable named layout.

use serde::{Deserialize, Serialize};

use super::real::Real;

/// One named block: offset into the flat vector plus a shape.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct BlockView {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
}

impl BlockView {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Ordered block descriptors; the flatten/unflatten round trip is the
/// identity because data is stored flat and views are just offsets.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct Layout {
    pub blocks: Vec<BlockView>,
}

impl Layout {
    pub fn push(&mut self, name: impl Into<String>, shape: &[usize]) {
        let offset = self.total_len();
        self.blocks.push(BlockView {
            name: name.into(),
            offset,
            shape: shape.to_vec(),
        });
    }

    pub fn total_len(&self) -> usize {
        self.blocks.last().map(|b| b.offset + b.len()).unwrap_or(0)
    }

    pub fn find(&self, name: &str) -> Option<&BlockView> {
        self.blocks.iter().find(|b| b.name == name)
    }
}

/// Flat parameter vector plus its layout.
#[derive(Clone, Debug)]
pub struct Params<T> {
    pub layout: Layout,
    pub data: Vec<T>,
}

impl<T: Real> Params<T> {
    pub fn zeros(layout: Layout) -> Self {
        let n = layout.total_len();
        Params {
            layout,
            data: vec![T::zero(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn block(&self, name: &str) -> &[T] {
        let b = self
            .layout
            .find(name)
            .unwrap_or_else(|| panic!("unknown parameter block '{name}'"));
        &self.data[b.offset..b.offset + b.len()]
    }

    pub fn block_mut(&mut self, name: &str) -> &mut [T] {
        let b = self
            .layout
            .find(name)
            .unwrap_or_else(|| panic!("unknown parameter block '{name}'"))
            .clone();
        &mut self.data[b.offset..b.offset + b.len()]
    }

    /// Cast to another element type (exact when widening f32 -> f64).
    pub fn cast<U: Real>(&self) -> Params<U> {
        Params {
            layout: self.layout.clone(),
            data: self.data.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        }
    }

    /// FNV-1a checksum over the exact bit patterns, for frozen-model asserts.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for v in &self.data {
            for b in v.to_f64().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_offsets_and_roundtrip() {
        let mut layout = Layout::default();
        layout.push("a", &[2, 3]);
        layout.push("b", &[4]);
        assert_eq!(layout.total_len(), 10);
        let mut p: Params<f64> = Params::zeros(layout);
        p.block_mut("b")[0] = 7.0;
        assert_eq!(p.data[6], 7.0);
        // flatten(unflatten(v)) is the identity: views alias the flat data.
        let flat: Vec<f64> = p.data.clone();
        let roundtrip: Vec<f64> = p
            .layout
            .blocks
            .iter()
            .flat_map(|b| p.data[b.offset..b.offset + b.len()].to_vec())
            .collect();
        assert_eq!(flat, roundtrip);
    }

    #[test]
    fn checksum_detects_mutation() {
        let mut layout = Layout::default();
        layout.push("w", &[8]);
        let mut p: Params<f64> = Params::zeros(layout);
        let c0 = p.checksum();
        p.data[3] = 1e-17;
        assert_ne!(c0, p.checksum());
    }
}

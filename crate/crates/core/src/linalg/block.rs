//! Three-field (B, E, p) block layout over a flat coefficient vector.

use std::ops::Range;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockLayout {
    pub nb: usize,
    pub ne: usize,
    pub np: usize,
}

impl BlockLayout {
    pub fn new(nb: usize, ne: usize, np: usize) -> Self {
        Self { nb, ne, np }
    }

    pub fn total(&self) -> usize {
        self.nb + self.ne + self.np
    }

    pub fn b(&self) -> Range<usize> {
        0..self.nb
    }

    pub fn e(&self) -> Range<usize> {
        self.nb..self.nb + self.ne
    }

    pub fn p(&self) -> Range<usize> {
        self.nb + self.ne..self.total()
    }

    pub fn split<'a>(&self, x: &'a [f64]) -> (&'a [f64], &'a [f64], &'a [f64]) {
        let (b, rest) = x.split_at(self.nb);
        let (e, p) = rest.split_at(self.ne);
        (b, e, p)
    }

    pub fn split_mut<'a>(&self, x: &'a mut [f64]) -> (&'a mut [f64], &'a mut [f64], &'a mut [f64]) {
        let (b, rest) = x.split_at_mut(self.nb);
        let (e, p) = rest.split_at_mut(self.ne);
        (b, e, p)
    }

    pub fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.total() {
            return Err(Error::Shape(format!("block vector of length {} for layout {:?}", x.len(), self)));
        }
        Ok(())
    }
}

/// Owned (B, E, p) triple.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BlockVector {
    pub b: Vec<f64>,
    pub e: Vec<f64>,
    pub p: Vec<f64>,
}

impl BlockVector {
    pub fn zeros(layout: BlockLayout) -> Self {
        Self { b: vec![0.0; layout.nb], e: vec![0.0; layout.ne], p: vec![0.0; layout.np] }
    }

    pub fn layout(&self) -> BlockLayout {
        BlockLayout::new(self.b.len(), self.e.len(), self.p.len())
    }

    pub fn from_flat(layout: BlockLayout, x: &[f64]) -> Result<Self> {
        layout.check(x)?;
        let (b, e, p) = layout.split(x);
        Ok(Self { b: b.to_vec(), e: e.to_vec(), p: p.to_vec() })
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.b.len() + self.e.len() + self.p.len());
        x.extend_from_slice(&self.b);
        x.extend_from_slice(&self.e);
        x.extend_from_slice(&self.p);
        x
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_roundtrip() {
        let v = BlockVector { b: vec![1.0, 2.0], e: vec![3.0], p: vec![] };
        let l = v.layout();
        assert_eq!(l.total(), 3);
        assert_eq!(l.e(), 2..3);
        assert_eq!(BlockVector::from_flat(l, &v.to_flat()).unwrap(), v);
        assert!(BlockVector::from_flat(l, &[0.0; 4]).is_err());
    }
}

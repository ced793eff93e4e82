use std::ops::Range;
use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One named tensor in a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

impl TensorSpec {
    pub fn new(name: impl Into<String>, shape: &[usize]) -> Self {
        TensorSpec { name: name.into(), shape: shape.to_vec() }
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Ordered list of tensors describing how a flat vector maps onto a model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    tensors: Vec<TensorSpec>,
    offsets: Vec<usize>,
    total: usize,
}

impl Layout {
    pub fn new(tensors: Vec<TensorSpec>) -> Self {
        let mut offsets = Vec::with_capacity(tensors.len());
        let mut total = 0;
        for t in &tensors {
            offsets.push(total);
            total += t.numel();
        }
        Layout { tensors, offsets, total }
    }

    pub fn tensors(&self) -> &[TensorSpec] {
        &self.tensors
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.tensors.iter().position(|t| t.name == name)
    }

    pub fn range(&self, index: usize) -> Range<usize> {
        let start = self.offsets[index];
        start..start + self.tensors[index].numel()
    }

    pub fn range_of(&self, name: &str) -> Result<Range<usize>> {
        self.index_of(name)
            .map(|i| self.range(i))
            .ok_or_else(|| Error::Layout(format!("no tensor named {name:?}")))
    }
}

/// Flat vector of all model weights together with its layout.
///
/// This is the unit of upload, averaging and serialization. Arithmetic is
/// only defined between vectors with identical layouts.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVec {
    values: Vec<f64>,
    layout: Arc<Layout>,
}

impl ParamVec {
    pub fn zeros(layout: Arc<Layout>) -> Self {
        ParamVec { values: vec![0.0; layout.len()], layout }
    }

    pub fn from_values(layout: Arc<Layout>, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::Layout(format!(
                "{} values for a layout of {} parameters",
                values.len(),
                layout.len()
            )));
        }
        Ok(ParamVec { values, layout })
    }

    /// Weights uniform in `[-scale, scale]`; tensors whose name ends in
    /// `bias` start at zero.
    pub fn uniform_init(layout: Arc<Layout>, scale: f64, rng: &mut crate::rng::Rng) -> Self {
        let mut p = ParamVec::zeros(layout);
        for i in 0..p.layout.tensors().len() {
            if p.layout.tensors()[i].name.ends_with("bias") {
                continue;
            }
            let r = p.layout.range(i);
            for v in &mut p.values[r] {
                *v = rng.random_range(-scale..=scale);
            }
        }
        p
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn tensor(&self, name: &str) -> Result<&[f64]> {
        Ok(&self.values[self.layout.range_of(name)?])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Result<&mut [f64]> {
        let r = self.layout.range_of(name)?;
        Ok(&mut self.values[r])
    }

    pub fn same_layout(&self, other: &ParamVec) -> bool {
        Arc::ptr_eq(&self.layout, &other.layout) || *self.layout == *other.layout
    }

    pub fn check_layout(&self, other: &ParamVec) -> Result<()> {
        if self.same_layout(other) {
            Ok(())
        } else {
            Err(Error::Layout("parameter layouts differ".into()))
        }
    }

    /// `self += other`
    pub fn add_assign(&mut self, other: &ParamVec) -> Result<()> {
        self.axpy(1.0, other)
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &ParamVec) -> Result<()> {
        self.check_layout(other)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn add(&self, other: &ParamVec) -> Result<ParamVec> {
        self.check_layout(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Ok(ParamVec { values, layout: self.layout.clone() })
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.values {
            *v *= factor;
        }
    }

    pub fn scaled(&self, factor: f64) -> ParamVec {
        let mut p = self.clone();
        p.scale(factor);
        p
    }

    pub fn dot(&self, other: &ParamVec) -> Result<f64> {
        self.check_layout(other)?;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum())
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Element-wise mean as an incremental left fold in the given order:
    /// `m_j = m_{j-1} + (x_j - m_{j-1}) / j`. Identical inputs are a fixed
    /// point, bitwise.
    pub fn mean<'a, I>(vectors: I) -> Result<ParamVec>
    where
        I: IntoIterator<Item = &'a ParamVec>,
    {
        let mut iter = vectors.into_iter();
        let first = iter.next().ok_or_else(|| Error::Input("mean of zero vectors".into()))?;
        let mut acc = first.clone();
        for (j, v) in iter.enumerate() {
            acc.check_layout(v)?;
            let count = (j + 2) as f64;
            for (m, x) in acc.values.iter_mut().zip(&v.values) {
                *m += (x - *m) / count;
            }
        }
        Ok(acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn layout() -> Arc<Layout> {
        Arc::new(Layout::new(vec![TensorSpec::new("w", &[2, 3]), TensorSpec::new("bias", &[3])]))
    }

    #[test]
    fn layout_length_is_sum_of_shapes() {
        let l = layout();
        assert_eq!(l.len(), 9);
        assert_eq!(l.range_of("bias").unwrap(), 6..9);
        assert!(l.range_of("nope").is_err());
    }

    #[test]
    fn arithmetic_requires_identical_layouts() {
        let a = ParamVec::zeros(layout());
        let other = Arc::new(Layout::new(vec![TensorSpec::new("w", &[9])]));
        let b = ParamVec::zeros(other);
        assert!(matches!(a.add(&b), Err(Error::Layout(_))));
        assert!(ParamVec::from_values(layout(), vec![0.0; 3]).is_err());
    }

    #[test]
    fn init_leaves_biases_zero() {
        let mut rng = crate::rng::seeded(3);
        let p = ParamVec::uniform_init(layout(), 0.05, &mut rng);
        assert!(p.tensor("bias").unwrap().iter().all(|&v| v == 0.0));
        assert!(p.tensor("w").unwrap().iter().all(|&v| v.abs() <= 0.05 && v != 0.0));
    }

    #[test]
    fn mean_of_zero_and_v_is_half_v() {
        let l = layout();
        let zero = ParamVec::zeros(l.clone());
        let v = ParamVec::from_values(l, (0..9).map(|i| i as f64 * 1.3 - 2.0).collect()).unwrap();
        let m = ParamVec::mean([&zero, &v]).unwrap();
        assert_eq!(m, v.scaled(0.5));
    }

    proptest! {
        #[test]
        fn mean_of_identical_vectors_is_exact(vals in prop::collection::vec(-1e6f64..1e6, 9), k in 1usize..12) {
            let v = ParamVec::from_values(layout(), vals).unwrap();
            let copies = vec![v.clone(); k];
            prop_assert_eq!(ParamVec::mean(&copies).unwrap(), v);
        }

        #[test]
        fn add_is_associative_under_left_fold(a in prop::collection::vec(-1e3f64..1e3, 9),
                                              b in prop::collection::vec(-1e3f64..1e3, 9),
                                              c in prop::collection::vec(-1e3f64..1e3, 9)) {
            let l = layout();
            let (a, b, c) = (ParamVec::from_values(l.clone(), a).unwrap(),
                             ParamVec::from_values(l.clone(), b).unwrap(),
                             ParamVec::from_values(l, c).unwrap());
            let left = a.add(&b).unwrap().add(&c).unwrap();
            let mut folded = a.clone();
            folded.add_assign(&b).unwrap();
            folded.add_assign(&c).unwrap();
            prop_assert_eq!(left, folded);
        }
    }
}

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One named tensor inside a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Layout descriptor mapping named tensors onto a flat vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    segments: Vec<Segment>,
    total: usize,
}

impl ParamLayout {
    pub fn builder() -> LayoutBuilder {
        LayoutBuilder { segments: Vec::new(), total: 0 }
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment(&self, name: &str) -> Result<&Segment> {
        self.segments
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::Model(format!("no parameter segment named `{name}`")))
    }

    pub fn slice<'a>(&self, name: &str, values: &'a [f64]) -> Result<&'a [f64]> {
        let seg = self.segment(name)?;
        Ok(&values[seg.offset..seg.offset + seg.len()])
    }

    pub fn slice_mut<'a>(&self, name: &str, values: &'a mut [f64]) -> Result<&'a mut [f64]> {
        let seg = self.segment(name)?;
        Ok(&mut values[seg.offset..seg.offset + seg.len()])
    }
}

pub struct LayoutBuilder {
    segments: Vec<Segment>,
    total: usize,
}

impl LayoutBuilder {
    pub fn push(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> &mut Self {
        let seg = Segment { name: name.into(), rows, cols, offset: self.total };
        self.total += seg.len();
        self.segments.push(seg);
        self
    }

    pub fn build(self) -> ParamLayout {
        ParamLayout { segments: self.segments, total: self.total }
    }
}

/// Flat parameter vector plus its layout descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub values: Vec<f64>,
    pub layout: ParamLayout,
}

impl ModelParams {
    pub fn new(values: Vec<f64>, layout: ParamLayout) -> Result<Self> {
        if values.len() != layout.total() {
            return Err(Error::Model(format!(
                "parameter vector has {} entries, layout expects {}",
                values.len(),
                layout.total()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Model("parameter vector contains non-finite entries".into()));
        }
        Ok(ModelParams { values, layout })
    }

    pub fn zeros(layout: ParamLayout) -> Self {
        ModelParams { values: vec![0.0; layout.total()], layout }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_offsets_are_contiguous() {
        let mut b = ParamLayout::builder();
        b.push("w", 3, 2).push("b", 3, 1);
        let layout = b.build();
        assert_eq!(layout.total(), 9);
        assert_eq!(layout.segment("b").unwrap().offset, 6);
        let values: Vec<f64> = (0..9).map(|i| i as f64).collect();
        assert_eq!(layout.slice("b", &values).unwrap(), &[6.0, 7.0, 8.0]);
    }

    #[test]
    fn params_length_must_match_layout() {
        let mut b = ParamLayout::builder();
        b.push("w", 2, 2);
        let layout = b.build();
        assert!(ModelParams::new(vec![0.0; 3], layout.clone()).is_err());
        assert!(ModelParams::new(vec![0.0; 4], layout.clone()).is_ok());
        assert!(ModelParams::new(vec![f64::NAN; 4], layout).is_err());
    }
}

use crate::error::{Error, Result};

/// Axis-aligned box `[lo, hi]` in `d` dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() {
            return Err(Error::InvalidDomain("dimension must be at least 1".into()));
        }
        if lo.len() != hi.len() {
            return Err(Error::InvalidDomain(format!(
                "lo has {} coordinates, hi has {}",
                lo.len(),
                hi.len()
            )));
        }
        if let Some(i) = (0..lo.len()).find(|&i| !(lo[i] < hi[i])) {
            return Err(Error::InvalidDomain(format!(
                "empty extent on axis {i}: [{}, {}]",
                lo[i], hi[i]
            )));
        }
        Ok(Self { lo, hi })
    }

    /// `[0,1]^d`.
    pub fn unit(d: usize) -> Self {
        Self::cube(d, 0.0, 1.0)
    }

    /// `[-1,1]^d`, the origin-centred cube of side 2.
    pub fn two_cube(d: usize) -> Self {
        Self::cube(d, -1.0, 1.0)
    }

    fn cube(d: usize, lo: f64, hi: f64) -> Self {
        assert!(d >= 1, "dimension must be at least 1");
        Self {
            lo: vec![lo; d],
            hi: vec![hi; d],
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    #[inline]
    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    #[inline]
    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    #[inline]
    pub fn extent(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|i| self.extent(i)).product()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| 0.5 * (a + b))
            .collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (a, b))| *a <= *v && *v <= *b)
    }
}

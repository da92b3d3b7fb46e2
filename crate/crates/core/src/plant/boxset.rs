use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Axis-aligned box `{v | lower ≤ v ≤ upper}`. A box with some
/// `lower_j > upper_j` is empty; a zero-dimensional box is the singleton `{()}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSet {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxSet {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension(format!(
                "box bounds have lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        if lower.iter().chain(&upper).any(|v| v.is_nan()) {
            return Err(Error::InvalidArgument("box bound is NaN".into()));
        }
        Ok(BoxSet { lower, upper })
    }

    /// `[-a, a]^k`
    pub fn symmetric(k: usize, half_width: f64) -> Self {
        BoxSet { lower: vec![-half_width; k], upper: vec![half_width; k] }
    }

    pub fn singleton(point: &[f64]) -> Self {
        BoxSet { lower: point.to_vec(), upper: point.to_vec() }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.iter().zip(&self.upper).any(|(l, u)| l > u)
    }

    /// Shrinks every bound by `eps` (Minkowski erosion by the ε-box).
    pub fn erode(&self, eps: f64) -> BoxSet {
        BoxSet {
            lower: self.lower.iter().map(|l| l + eps).collect(),
            upper: self.upper.iter().map(|u| u - eps).collect(),
        }
    }

    /// Componentwise containment; an empty box is contained in anything.
    pub fn is_subset_of(&self, other: &BoxSet) -> bool {
        self.dim() == other.dim()
            && (self.is_empty()
                || self
                    .lower
                    .iter()
                    .zip(&self.upper)
                    .zip(other.lower.iter().zip(&other.upper))
                    .all(|((l, u), (ol, ou))| l >= ol && u <= ou))
    }

    pub fn contains(&self, v: &[f64]) -> bool {
        v.len() == self.dim()
            && v.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (l, u))| *l <= *x && *x <= *u)
    }

    pub fn clamp(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(x, (l, u))| x.max(*l).min(*u))
            .collect()
    }

    /// `min_{v ∈ box} a·v`, solved per coordinate.
    pub fn min_linear(&self, a: &[f64]) -> f64 {
        a.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(a, (l, u))| (a * l).min(a * u))
            .sum()
    }

    /// `max_{v ∈ box} a·v`
    pub fn max_linear(&self, a: &[f64]) -> f64 {
        a.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(a, (l, u))| (a * l).max(a * u))
            .sum()
    }

    /// Largest `|bound|` per coordinate.
    pub fn magnitudes(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| l.abs().max(u.abs())).collect()
    }

    pub fn max_half_width(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (u - l))
            .fold(0.0, f64::max)
    }

    /// Concatenation `self × other`.
    pub fn product(&self, other: &BoxSet) -> BoxSet {
        BoxSet {
            lower: self.lower.iter().chain(&other.lower).copied().collect(),
            upper: self.upper.iter().chain(&other.upper).copied().collect(),
        }
    }

    pub fn select(&self, idx: &[usize]) -> BoxSet {
        BoxSet {
            lower: idx.iter().map(|&i| self.lower[i]).collect(),
            upper: idx.iter().map(|&i| self.upper[i]).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn erosion_of_symmetric_box() {
        let b = BoxSet::symmetric(3, 2.0).erode(0.5);
        assert_eq!(b, BoxSet::symmetric(3, 1.5));
        assert!(!BoxSet::symmetric(2, 1.0).erode(1.0).is_empty());
        assert!(BoxSet::symmetric(2, 1.0).erode(1.0 + 1e-12).is_empty());
    }

    #[test]
    fn zero_dimensional_box_is_a_singleton() {
        let b = BoxSet::symmetric(0, 1.0);
        assert!(!b.is_empty());
        assert_eq!(b.max_linear(&[]), 0.0);
        assert!(!b.erode(10.0).is_empty());
    }

    #[test]
    fn mismatched_bounds_rejected() {
        assert!(BoxSet::new(vec![0.0], vec![]).is_err());
        assert!(BoxSet::new(vec![f64::NAN], vec![1.0]).is_err());
    }

    #[test]
    fn linear_extremes_on_degenerate_box() {
        let b = BoxSet::singleton(&[0.0, 0.0]);
        assert_eq!(b.min_linear(&[3.0, -4.0]), 0.0);
        assert_eq!(b.max_linear(&[3.0, -4.0]), 0.0);
    }

    proptest! {
        #[test]
        fn erosion_empties_exactly_past_half_width(a in 0.0f64..10.0, eps in 0.0f64..20.0, k in 1usize..5) {
            let eroded = BoxSet::symmetric(k, a).erode(eps);
            prop_assert_eq!(eroded.is_empty(), eps > a);
            if !eroded.is_empty() {
                prop_assert!(eroded.is_subset_of(&BoxSet::symmetric(k, a)));
            }
        }

        #[test]
        fn linear_extremes_bracket_clamped_points(
            a in proptest::collection::vec(-5.0f64..5.0, 3),
            v in proptest::collection::vec(-10.0f64..10.0, 3),
        ) {
            let b = BoxSet::new(vec![-1.0, 0.0, 2.0], vec![1.0, 0.5, 3.0]).unwrap();
            let p = b.clamp(&v);
            prop_assert!(b.contains(&p));
            let val: f64 = a.iter().zip(&p).map(|(x, y)| x * y).sum();
            prop_assert!(b.min_linear(&a) <= val + 1e-12);
            prop_assert!(b.max_linear(&a) >= val - 1e-12);
        }
    }
}

//! Layout representation: elements, the discretization grid, token
//! encodings, reading order, and the empirical length distribution.
//!
//! An element is a class-labeled box in normalized page coordinates
//! `(x_center, y_center, width, height)`. The discrete token concatenates
//! one-hot blocks `[class: C+2][x: W][y: H][w: W][h: H]`; the continuous
//! token is the class one-hot plus the four raw coordinates. Class indices
//! `C` and `C+1` are the BOS/EOS sentinels.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One bounding box with a categorical class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Element {
    #[serde(rename = "c")]
    pub class_id: usize,
    /// `(x_center, y_center, width, height)` as fractions of the page.
    #[serde(rename = "b")]
    pub bbox: (f64, f64, f64, f64),
}

impl Element {
    /// Validates coordinate ranges: centers in `[0,1]`, sizes in `(0,1]`.
    pub fn new(class_id: usize, bbox: (f64, f64, f64, f64)) -> Result<Self> {
        let (x, y, w, h) = bbox;
        for (field, value, lo_open) in [
            ("x_center", x, false),
            ("y_center", y, false),
            ("width", w, true),
            ("height", h, true),
        ] {
            let ok = if lo_open {
                value > 0.0 && value <= 1.0
            } else {
                (0.0..=1.0).contains(&value)
            };
            if !ok {
                return Err(Error::InvalidCoordinate {
                    field,
                    value,
                    expected: if lo_open { "(0, 1]" } else { "[0, 1]" },
                });
            }
        }
        Ok(Element { class_id, bbox })
    }

    /// Clamps box edges into the page, then constructs. Used at ingestion.
    pub fn clamped(class_id: usize, bbox: (f64, f64, f64, f64)) -> Result<Self> {
        let (x, y, w, h) = bbox;
        let x0 = (x - w / 2.0).clamp(0.0, 1.0);
        let x1 = (x + w / 2.0).clamp(0.0, 1.0);
        let y0 = (y - h / 2.0).clamp(0.0, 1.0);
        let y1 = (y + h / 2.0).clamp(0.0, 1.0);
        if x1 <= x0 || y1 <= y0 {
            return Err(Error::InvalidCoordinate {
                field: if x1 <= x0 { "width" } else { "height" },
                value: if x1 <= x0 { x1 - x0 } else { y1 - y0 },
                expected: "positive extent after clamping",
            });
        }
        Element::new(class_id, ((x0 + x1) / 2.0, (y0 + y1) / 2.0, x1 - x0, y1 - y0))
    }

    /// Corners `(x0, y0, x1, y1)` of the box.
    pub fn corners(&self) -> (f64, f64, f64, f64) {
        let (x, y, w, h) = self.bbox;
        (x - w / 2.0, y - h / 2.0, x + w / 2.0, y + h / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.bbox.2 * self.bbox.3
    }

    /// Whether the box fits the page within `tol`.
    pub fn fits_page(&self, tol: f64) -> bool {
        let (x0, y0, x1, y1) = self.corners();
        x0 >= -tol && y0 >= -tol && x1 <= 1.0 + tol && y1 <= 1.0 + tol
    }
}

/// Ordered variable-length sequence of elements plus pixel page size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    /// `(width_px, height_px)`, for rendering only.
    pub page: (u32, u32),
    pub elements: Vec<Element>,
}

impl Layout {
    pub fn new(page: (u32, u32), elements: Vec<Element>) -> Self {
        Layout { page, elements }
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Element-level validity: coordinate ranges and the length cap.
    pub fn validate(&self, max_elements: usize) -> Result<()> {
        if self.elements.len() > max_elements {
            return Err(Error::InvalidArgument(format!(
                "layout has {} elements, max {}",
                self.elements.len(),
                max_elements
            )));
        }
        for e in &self.elements {
            Element::new(e.class_id, e.bbox)?;
        }
        Ok(())
    }
}

/// Discretization grid and class count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub h: usize,
    pub w: usize,
    /// Number of real classes; BOS/EOS are appended internally.
    pub c: usize,
}

impl GridConfig {
    pub fn new(h: usize, w: usize, c: usize) -> Result<Self> {
        let mut violations = Vec::new();
        if h < 2 {
            violations.push(format!("grid.h = {} (need >= 2)", h));
        }
        if w < 2 {
            violations.push(format!("grid.w = {} (need >= 2)", w));
        }
        if c < 1 {
            violations.push(format!("grid.c = {} (need >= 1)", c));
        }
        if !violations.is_empty() {
            return Err(Error::InvalidConfig { violations });
        }
        Ok(GridConfig { h, w, c })
    }

    /// Class index of the BOS sentinel.
    pub fn bos_class(&self) -> usize {
        self.c
    }

    /// Class index of the EOS sentinel.
    pub fn eos_class(&self) -> usize {
        self.c + 1
    }

    /// Length of the discrete token: `(C+2) + 2(H+W)`.
    pub fn discrete_len(&self) -> usize {
        self.c + 2 + 2 * (self.h + self.w)
    }

    /// Length of the continuous token: `(C+2) + 4`.
    pub fn continuous_len(&self) -> usize {
        self.c + 2 + 4
    }

    /// Sizes of the five discrete blocks `[class, x, y, w, h]`.
    pub fn block_sizes(&self) -> [usize; 5] {
        [self.c + 2, self.w, self.h, self.w, self.h]
    }

    /// Column offset of each block within the discrete token.
    pub fn block_offsets(&self) -> [usize; 5] {
        let s = self.block_sizes();
        [0, s[0], s[0] + s[1], s[0] + s[1] + s[2], s[0] + s[1] + s[2] + s[3]]
    }
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { h: 32, w: 32, c: 5 }
    }
}

#[inline]
fn bin(v: f64, n: usize) -> usize {
    ((v * n as f64).floor() as isize).clamp(0, n as isize - 1) as usize
}

/// Bin center of index `i` on an `n`-bin grid.
#[inline]
pub fn bin_center(i: usize, n: usize) -> f64 {
    (i as f64 + 0.5) / n as f64
}

/// Map a box to grid indices `(xi, yi, wi, hi)` with `floor(v·N)` clamped
/// to the top bin.
pub fn discretize_bbox(bbox: (f64, f64, f64, f64), grid: &GridConfig) -> Result<(usize, usize, usize, usize)> {
    // Validation reuses the Element rules so errors name the coordinate.
    Element::new(0, bbox)?;
    let (x, y, w, h) = bbox;
    Ok((bin(x, grid.w), bin(y, grid.h), bin(w, grid.w), bin(h, grid.h)))
}

/// A decoded discrete token.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Token {
    Element(Element),
    Bos,
    Eos,
}

/// Discrete output encoding: five one-hot blocks.
pub fn encode_output_token(element: &Element, grid: &GridConfig) -> Result<Vec<f32>> {
    if element.class_id >= grid.c {
        return Err(Error::InvalidArgument(format!(
            "class_id {} out of range [0, {})",
            element.class_id, grid.c
        )));
    }
    let (xi, yi, wi, hi) = discretize_bbox(element.bbox, grid)?;
    let mut v = vec![0.0f32; grid.discrete_len()];
    let off = grid.block_offsets();
    v[off[0] + element.class_id] = 1.0;
    v[off[1] + xi] = 1.0;
    v[off[2] + yi] = 1.0;
    v[off[3] + wi] = 1.0;
    v[off[4] + hi] = 1.0;
    Ok(v)
}

/// Discrete BOS/EOS: one-hot in the class block, zeros elsewhere.
pub fn sentinel_output_token(grid: &GridConfig, eos: bool) -> Vec<f32> {
    let mut v = vec![0.0f32; grid.discrete_len()];
    v[if eos { grid.eos_class() } else { grid.bos_class() }] = 1.0;
    v
}

/// Continuous input encoding: class one-hot plus raw coordinates.
pub fn encode_input_token(element: &Element, grid: &GridConfig) -> Result<Vec<f32>> {
    if element.class_id >= grid.c {
        return Err(Error::InvalidArgument(format!(
            "class_id {} out of range [0, {})",
            element.class_id, grid.c
        )));
    }
    Element::new(element.class_id, element.bbox)?;
    let mut v = vec![0.0f32; grid.continuous_len()];
    v[element.class_id] = 1.0;
    let base = grid.c + 2;
    let (x, y, w, h) = element.bbox;
    v[base] = x as f32;
    v[base + 1] = y as f32;
    v[base + 2] = w as f32;
    v[base + 3] = h as f32;
    Ok(v)
}

/// Continuous BOS/EOS: class one-hot, coordinates zero.
pub fn sentinel_input_token(grid: &GridConfig, eos: bool) -> Vec<f32> {
    let mut v = vec![0.0f32; grid.continuous_len()];
    v[if eos { grid.eos_class() } else { grid.bos_class() }] = 1.0;
    v
}

/// Decode a discrete token (or per-block logits) by block-wise argmax;
/// coordinates come back at bin centers.
pub fn decode_token(vector: &[f32], grid: &GridConfig) -> Result<Token> {
    if vector.len() != grid.discrete_len() {
        return Err(Error::MalformedToken(format!(
            "length {} != expected {}",
            vector.len(),
            grid.discrete_len()
        )));
    }
    let off = grid.block_offsets();
    let sizes = grid.block_sizes();
    let argmax = |b: usize| -> Result<usize> {
        let block = &vector[off[b]..off[b] + sizes[b]];
        let mut best = 0usize;
        let mut best_v = f32::NEG_INFINITY;
        let mut any_nonzero = false;
        for (i, &v) in block.iter().enumerate() {
            if v > best_v {
                best_v = v;
                best = i;
            }
            if v != 0.0 {
                any_nonzero = true;
            }
        }
        if !any_nonzero {
            return Err(Error::MalformedToken(format!("block {} is all zeros", b)));
        }
        Ok(best)
    };
    let class = argmax(0)?;
    if class == grid.bos_class() {
        return Ok(Token::Bos);
    }
    if class == grid.eos_class() {
        return Ok(Token::Eos);
    }
    // Real elements need a hit in every coordinate block.
    let (xi, yi, wi, hi) = (argmax(1)?, argmax(2)?, argmax(3)?, argmax(4)?);
    Ok(Token::Element(Element::new(
        class,
        (
            bin_center(xi, grid.w),
            bin_center(yi, grid.h),
            bin_center(wi, grid.w),
            bin_center(hi, grid.h),
        ),
    )?))
}

/// Assemble an element directly from sampled bin indices.
pub fn element_from_bins(
    class_id: usize,
    xi: usize,
    yi: usize,
    wi: usize,
    hi: usize,
    grid: &GridConfig,
) -> Result<Element> {
    Element::new(
        class_id,
        (
            bin_center(xi, grid.w),
            bin_center(yi, grid.h),
            bin_center(wi, grid.w),
            bin_center(hi, grid.h),
        ),
    )
}

/// Sort elements into reading order: lexicographic by the discretized
/// `(top edge, left edge)`. Stable, so permutation-invariant up to ties.
pub fn sort_layout(layout: &mut Layout, grid: &GridConfig) {
    layout.elements.sort_by_key(|e| {
        let (x0, y0, _, _) = e.corners();
        (bin(y0.clamp(0.0, 1.0), grid.h), bin(x0.clamp(0.0, 1.0), grid.w))
    });
}

/// Normalized histogram of layout lengths `p(s)`, `s = 1..=max_elements`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthDistribution {
    /// `probs[s-1]` is `p(s)`.
    probs: Vec<f64>,
    counts: Vec<u64>,
}

impl LengthDistribution {
    pub fn from_lengths(lengths: &[usize], max_elements: usize) -> Result<Self> {
        if lengths.is_empty() {
            return Err(Error::Dataset("empty dataset: no lengths to count".into()));
        }
        let mut counts = vec![0u64; max_elements];
        for &l in lengths {
            if l == 0 || l > max_elements {
                return Err(Error::Dataset(format!(
                    "length {} outside support 1..={}",
                    l, max_elements
                )));
            }
            counts[l - 1] += 1;
        }
        let total = lengths.len() as f64;
        let probs = counts.iter().map(|&c| c as f64 / total).collect();
        Ok(LengthDistribution { probs, counts })
    }

    pub fn from_dataset(layouts: &[Layout], max_elements: usize) -> Result<Self> {
        let lengths: Vec<usize> = layouts.iter().map(|l| l.len()).collect();
        Self::from_lengths(&lengths, max_elements)
    }

    /// Point mass at a single length (useful in tests).
    pub fn point_mass(s: usize, max_elements: usize) -> Result<Self> {
        Self::from_lengths(&[s], max_elements)
    }

    pub fn prob(&self, s: usize) -> f64 {
        if s == 0 || s > self.probs.len() {
            0.0
        } else {
            self.probs[s - 1]
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn max_len(&self) -> usize {
        self.probs.len()
    }

    /// Draw a length by inverse-CDF sampling.
    pub fn sample(&self, rng: &mut impl Rng) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i + 1;
            }
        }
        // Numerical tail: return the largest length with support.
        self.probs
            .iter()
            .rposition(|&p| p > 0.0)
            .map(|i| i + 1)
            .unwrap_or(1)
    }

    /// Total-variation distance to another distribution on the same support.
    pub fn tv_distance(&self, other: &LengthDistribution) -> f64 {
        let n = self.probs.len().max(other.probs.len());
        let mut d = 0.0;
        for s in 1..=n {
            d += (self.prob(s) - other.prob(s)).abs();
        }
        d / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid32() -> GridConfig {
        GridConfig { h: 32, w: 32, c: 5 }
    }

    #[test]
    fn discretize_boundary_and_midpoint() {
        let g = grid32();
        assert_eq!(discretize_bbox((0.0, 0.0, 0.5, 0.5), &g).unwrap(), (0, 0, 16, 16));
        assert_eq!(discretize_bbox((1.0, 1.0, 1.0, 1.0), &g).unwrap(), (31, 31, 31, 31));
        assert_eq!(discretize_bbox((0.37, 0.62, 0.10, 0.05), &g).unwrap(), (11, 19, 3, 1));
    }

    #[test]
    fn discretize_rejects_out_of_range_naming_field() {
        let g = grid32();
        let err = discretize_bbox((1.5, 0.5, 0.1, 0.1), &g).unwrap_err();
        assert!(err.to_string().contains("x_center"), "{}", err);
        let err = discretize_bbox((0.5, 0.5, 0.0, 0.1), &g).unwrap_err();
        assert!(err.to_string().contains("width"), "{}", err);
    }

    #[test]
    fn output_token_length_and_ones() {
        let g = grid32();
        let e = Element::new(2, (0.5, 0.5, 0.25, 0.1)).unwrap();
        let v = encode_output_token(&e, &g).unwrap();
        assert_eq!(v.len(), 135); // (5+2) + 2*(32+32)
        assert_eq!(v.iter().filter(|&&x| x == 1.0).count(), 5);
        assert_eq!(v.iter().filter(|&&x| x == 0.0).count(), 130);
    }

    #[test]
    fn bos_token_is_class_only() {
        let g = grid32();
        let v = sentinel_output_token(&g, false);
        assert_eq!(v[g.bos_class()], 1.0);
        assert_eq!(v.iter().filter(|&&x| x != 0.0).count(), 1);
        assert_eq!(decode_token(&v, &g).unwrap(), Token::Bos);
    }

    #[test]
    fn input_token_layout() {
        let g = grid32();
        let e = Element::new(2, (0.5, 0.5, 0.25, 0.1)).unwrap();
        let v = encode_input_token(&e, &g).unwrap();
        assert_eq!(v.len(), 11);
        assert_eq!(
            v,
            vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.5, 0.5, 0.25, 0.1]
        );
        let eos = sentinel_input_token(&g, true);
        assert_eq!(eos[g.eos_class()], 1.0);
        assert!(eos[g.c + 2..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn input_token_rejects_out_of_range_coordinate() {
        let g = grid32();
        let mut e = Element::new(1, (0.5, 0.5, 0.2, 0.2)).unwrap();
        e.bbox.0 = 1.2;
        assert!(encode_input_token(&e, &g).is_err());
        assert!(encode_output_token(&e, &g).is_err());
    }

    #[test]
    fn clamped_elements_fit_the_page() {
        // Overhanging box is pulled inside; degenerate boxes are rejected.
        let e = Element::clamped(0, (0.02, 0.5, 0.2, 0.4)).unwrap();
        assert!(e.fits_page(1e-6));
        assert!((e.bbox.2 - 0.12).abs() < 1e-12, "width shrinks to the page");
        assert!(Element::clamped(0, (-0.5, 0.5, 0.2, 0.2)).is_err());
    }

    #[test]
    fn decode_all_zero_vector_errors() {
        let g = grid32();
        let v = vec![0.0f32; g.discrete_len()];
        assert!(decode_token(&v, &g).is_err());
        assert!(decode_token(&[0.0f32; 3], &g).is_err());
    }

    #[test]
    fn roundtrip_within_half_bin() {
        let g = grid32();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            let e = Element::new(
                rng.random_range(0..g.c),
                (
                    rng.random::<f64>(),
                    rng.random::<f64>(),
                    rng.random::<f64>().max(1e-9),
                    rng.random::<f64>().max(1e-9),
                ),
            )
            .unwrap();
            let v = encode_output_token(&e, &g).unwrap();
            match decode_token(&v, &g).unwrap() {
                Token::Element(d) => {
                    assert_eq!(d.class_id, e.class_id);
                    let half_bin = 0.5 / 32.0;
                    assert!((d.bbox.0 - e.bbox.0).abs() <= half_bin + 1e-12);
                    assert!((d.bbox.1 - e.bbox.1).abs() <= half_bin + 1e-12);
                    assert!((d.bbox.2 - e.bbox.2).abs() <= half_bin + 1e-12);
                    assert!((d.bbox.3 - e.bbox.3).abs() <= half_bin + 1e-12);
                }
                other => panic!("expected element, got {:?}", other),
            }
        }
    }

    #[test]
    fn sort_is_stable_for_same_row() {
        let g = grid32();
        let a = Element::new(0, (0.8, 0.5, 0.1, 0.1)).unwrap();
        let b = Element::new(1, (0.1, 0.5, 0.1, 0.1)).unwrap();
        let mut layout = Layout::new((100, 100), vec![a, b]);
        sort_layout(&mut layout, &g);
        assert_eq!(layout.elements[0].class_id, 1, "x=0.1 comes first");
    }

    #[test]
    fn length_distribution_basics() {
        let d = LengthDistribution::from_lengths(&[3, 3, 5], 10).unwrap();
        assert!((d.prob(3) - 2.0 / 3.0).abs() < 1e-12);
        assert!((d.prob(5) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(d.prob(4), 0.0);
        let sum: f64 = d.probs().iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);

        let point = LengthDistribution::from_lengths(&[7, 7, 7], 10).unwrap();
        assert_eq!(point.prob(7), 1.0);

        assert!(LengthDistribution::from_lengths(&[], 10).is_err());
        assert!(LengthDistribution::from_lengths(&[11], 10).is_err());
        assert!(LengthDistribution::from_lengths(&[0], 10).is_err());
    }

    #[test]
    fn length_distribution_monte_carlo() {
        let d = LengthDistribution::from_lengths(&[1, 2, 2, 3, 3, 3, 8, 8], 10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let draws: Vec<usize> = (0..100_000).map(|_| d.sample(&mut rng)).collect();
        let emp = LengthDistribution::from_lengths(&draws, 10).unwrap();
        assert!(d.tv_distance(&emp) < 0.01);
    }

    proptest! {
        #[test]
        fn vector_length_law(c in 1usize..40, h in 2usize..64, w in 2usize..64) {
            let g = GridConfig { h, w, c };
            let e = Element::new(0, (0.5, 0.5, 0.5, 0.5)).unwrap();
            prop_assert_eq!(encode_output_token(&e, &g).unwrap().len(), (c + 2) + 2 * (h + w));
            prop_assert_eq!(encode_input_token(&e, &g).unwrap().len(), (c + 2) + 4);
        }

        #[test]
        fn sort_idempotent_and_permutation_invariant(seed in 0u64..500) {
            let g = grid32();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let elements: Vec<Element> = (0..10)
                .map(|_| {
                    Element::new(
                        rng.random_range(0..5),
                        (
                            rng.random::<f64>(),
                            rng.random::<f64>(),
                            rng.random::<f64>().max(0.01),
                            rng.random::<f64>().max(0.01),
                        ),
                    )
                    .unwrap()
                })
                .collect();
            let mut sorted = Layout::new((10, 10), elements.clone());
            sort_layout(&mut sorted, &g);
            // idempotence
            let mut twice = sorted.clone();
            sort_layout(&mut twice, &g);
            prop_assert_eq!(&twice, &sorted);
            // permutation invariance of the (class, key) multiset ordering
            let mut shuffled = elements;
            for i in (1..shuffled.len()).rev() {
                let j = rng.random_range(0..=i);
                shuffled.swap(i, j);
            }
            let mut resorted = Layout::new((10, 10), shuffled);
            sort_layout(&mut resorted, &g);
            let key = |e: &Element| {
                let (x0, y0, _, _) = e.corners();
                (
                    (y0.clamp(0.0, 1.0) * 32.0).floor() as i64,
                    (x0.clamp(0.0, 1.0) * 32.0).floor() as i64,
                )
            };
            let a: Vec<_> = sorted.elements.iter().map(key).collect();
            let b: Vec<_> = resorted.elements.iter().map(key).collect();
            prop_assert_eq!(a, b);
        }
    }
}

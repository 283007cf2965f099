//! Synthetic layout generators for smoke tests and desk-scale training.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::layout::{sort_layout, Element, GridConfig, Layout};

/// Deterministic two-column document layouts: a full-width title, then rows
/// of left/right column blocks, occasionally a wide figure. Coordinates sit
/// on grid-cell centers so discretization is exact.
///
/// Uses three classes (0 = title, 1 = text, 2 = figure); pass a grid with
/// `c >= 3`.
pub fn two_column_layouts(n: usize, grid: &GridConfig, seed: u64) -> Vec<Layout> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let snap_w = |v: f64| ((v * grid.w as f64).floor() + 0.5) / grid.w as f64;
    let snap_h = |v: f64| ((v * grid.h as f64).floor() + 0.5) / grid.h as f64;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut elements = Vec::new();
        // Title band across the top.
        elements.push(
            Element::new(
                0,
                (snap_w(0.5), snap_h(0.06), snap_w(0.8), snap_h(0.08)),
            )
            .unwrap(),
        );
        let rows = rng.random_range(2..=4usize);
        let mut y = 0.22;
        for _ in 0..rows {
            let h = 0.1 + 0.05 * rng.random_range(0..2) as f64;
            elements.push(
                Element::new(1, (snap_w(0.27), snap_h(y), snap_w(0.38), snap_h(h))).unwrap(),
            );
            elements.push(
                Element::new(1, (snap_w(0.73), snap_h(y), snap_w(0.38), snap_h(h))).unwrap(),
            );
            y += h + 0.06;
        }
        if rng.random::<f64>() < 0.5 && y < 0.8 {
            elements.push(
                Element::new(2, (snap_w(0.5), snap_h(y + 0.05), snap_w(0.7), snap_h(0.12)))
                    .unwrap(),
            );
        }
        let mut layout = Layout::new((850, 1100), elements);
        sort_layout(&mut layout, grid);
        out.push(layout);
    }
    out
}

/// Fully random valid layouts (no structure).
pub fn random_layouts(n: usize, max_elements: usize, n_classes: usize, seed: u64) -> Vec<Layout> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let l = rng.random_range(1..=max_elements);
            let elements = (0..l)
                .map(|_| {
                    let w = rng.random_range(0.05..0.5);
                    let h = rng.random_range(0.05..0.5);
                    let x = rng.random_range(w / 2.0..(1.0 - w / 2.0));
                    let y = rng.random_range(h / 2.0..(1.0 - h / 2.0));
                    Element::new(rng.random_range(0..n_classes), (x, y, w, h)).unwrap()
                })
                .collect();
            Layout::new((850, 1100), elements)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_layouts_are_valid_and_deterministic() {
        let grid = GridConfig { h: 16, w: 16, c: 3 };
        let a = two_column_layouts(10, &grid, 42);
        let b = two_column_layouts(10, &grid, 42);
        assert_eq!(a, b);
        for layout in &a {
            layout.validate(100).unwrap();
            assert!(layout.len() >= 5);
        }
    }
}

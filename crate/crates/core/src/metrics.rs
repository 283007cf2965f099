//! Quantitative layout evaluation: mean pairwise IoU, overlap index,
//! alignment score, Wasserstein distances over the class and bounding-box
//! marginals, and DocSim similarity with unique-match counting.
//!
//! All box arithmetic is in page-fraction units (page area = 1). Dataset
//! values are means over layouts; Wasserstein marginals pool elements
//! across layouts.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::layout::Layout;

/// Intersection area of two corner-form rects `(x0, y0, x1, y1)`.
fn rect_intersection(a: (f64, f64, f64, f64), b: (f64, f64, f64, f64)) -> f64 {
    let w = (a.2.min(b.2) - a.0.max(b.0)).max(0.0);
    let h = (a.3.min(b.3) - a.1.max(b.1)).max(0.0);
    w * h
}

fn rect_area(r: (f64, f64, f64, f64)) -> f64 {
    (r.2 - r.0).max(0.0) * (r.3 - r.1).max(0.0)
}

/// IoU of two corner-form rects.
pub fn iou_rect(a: (f64, f64, f64, f64), b: (f64, f64, f64, f64)) -> f64 {
    let inter = rect_intersection(a, b);
    let union = rect_area(a) + rect_area(b) - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Mean IoU over all unordered element pairs; `l < 2` gives 0.
pub fn mean_pairwise_iou(layout: &Layout) -> f64 {
    let l = layout.len();
    if l < 2 {
        return 0.0;
    }
    let rects: Vec<_> = layout.elements.iter().map(|e| e.corners()).collect();
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..l {
        for j in (i + 1)..l {
            sum += iou_rect(rects[i], rects[j]);
            pairs += 1;
        }
    }
    sum / pairs as f64
}

/// Mean of [`mean_pairwise_iou`] over layouts.
pub fn dataset_iou(layouts: &[Layout]) -> f64 {
    if layouts.is_empty() {
        return 0.0;
    }
    layouts.iter().map(mean_pairwise_iou).sum::<f64>() / layouts.len() as f64
}

/// Total pairwise intersection area inside the page (page-fraction units).
pub fn overlap_index(layout: &Layout) -> f64 {
    let l = layout.len();
    let rects: Vec<_> = layout.elements.iter().map(|e| e.corners()).collect();
    let mut sum = 0.0;
    for i in 0..l {
        for j in (i + 1)..l {
            sum += rect_intersection(rects[i], rects[j]);
        }
    }
    sum
}

pub fn dataset_overlap(layouts: &[Layout]) -> f64 {
    if layouts.is_empty() {
        return 0.0;
    }
    layouts.iter().map(overlap_index).sum::<f64>() / layouts.len() as f64
}

/// x-axis alignment score:
/// `(1/l) Σ_i −log(1 − min_{j≠i} min(|xL_i−xL_j|, |xC_i−xC_j|, |xR_i−xR_j|))`.
///
/// Edges are clamped into `[0,1]` so the log argument stays in `(0,1]`;
/// zero for layouts with fewer than two elements.
pub fn alignment_score(layout: &Layout) -> f64 {
    let l = layout.len();
    if l < 2 {
        return 0.0;
    }
    let edges: Vec<(f64, f64, f64)> = layout
        .elements
        .iter()
        .map(|e| {
            let (x0, _, x1, _) = e.corners();
            (
                x0.clamp(0.0, 1.0),
                e.bbox.0.clamp(0.0, 1.0),
                x1.clamp(0.0, 1.0),
            )
        })
        .collect();
    let mut total = 0.0;
    for i in 0..l {
        let mut best = f64::INFINITY;
        for j in 0..l {
            if i == j {
                continue;
            }
            let d = (edges[i].0 - edges[j].0)
                .abs()
                .min((edges[i].1 - edges[j].1).abs())
                .min((edges[i].2 - edges[j].2).abs());
            best = best.min(d);
        }
        total += -(1.0 - best).ln();
    }
    total / l as f64
}

pub fn dataset_alignment(layouts: &[Layout]) -> f64 {
    if layouts.is_empty() {
        return 0.0;
    }
    layouts.iter().map(alignment_score).sum::<f64>() / layouts.len() as f64
}

fn pooled_class_histogram(layouts: &[Layout], n_classes: usize) -> Vec<f64> {
    let mut counts = vec![0.0f64; n_classes];
    let mut total = 0.0;
    for layout in layouts {
        for e in &layout.elements {
            if e.class_id < n_classes {
                counts[e.class_id] += 1.0;
            }
            total += 1.0;
        }
    }
    if total > 0.0 {
        for c in counts.iter_mut() {
            *c /= total;
        }
    }
    counts
}

/// W1 between the pooled element-class marginals under the 0/1 ground
/// metric, which reduces to total variation: `½ Σ_c |p_c − q_c|`.
pub fn wasserstein_class(gen: &[Layout], real: &[Layout]) -> Result<f64> {
    if gen.iter().all(|l| l.is_empty()) || real.iter().all(|l| l.is_empty()) {
        return Err(Error::Dataset("wasserstein_class: empty element set".into()));
    }
    let n_classes = gen
        .iter()
        .chain(real)
        .flat_map(|l| l.elements.iter().map(|e| e.class_id))
        .max()
        .unwrap_or(0)
        + 1;
    let p = pooled_class_histogram(gen, n_classes);
    let q = pooled_class_histogram(real, n_classes);
    Ok(p.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum::<f64>() / 2.0)
}

/// Exact 1-d W1 between empirical samples via the quantile-function L1
/// distance. Breakpoints are compared with integer cross-multiplication, so
/// equal sample sets give exactly zero and the result is symmetric
/// bit-for-bit.
pub fn wasserstein_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Dataset("wasserstein_1d: empty sample set".into()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let n = a.len() as u64;
    let m = b.len() as u64;
    // Quantile steps live on a 1/(n·m) lattice; walk the merged breakpoints.
    let mut i = 0u64;
    let mut j = 0u64;
    let mut t_prev = 0u64;
    let mut acc = 0.0f64;
    while i < n && j < m {
        let ta = (i + 1) * m;
        let tb = (j + 1) * n;
        let t = ta.min(tb);
        acc += (a[i as usize] - b[j as usize]).abs() * ((t - t_prev) as f64);
        if ta == t {
            i += 1;
        }
        if tb == t {
            j += 1;
        }
        t_prev = t;
    }
    Ok(acc / ((n * m) as f64))
}

/// Sliced W1 between pooled 4-d box samples `(x_center, y_center, w, h)`:
/// the average over `n_proj` seeded random unit directions of the exact 1-d
/// W1 between the projected samples.
pub fn wasserstein_bbox(
    gen: &[Layout],
    real: &[Layout],
    n_proj: usize,
    seed: u64,
) -> Result<f64> {
    let boxes = |set: &[Layout]| -> Vec<[f64; 4]> {
        set.iter()
            .flat_map(|l| {
                l.elements
                    .iter()
                    .map(|e| [e.bbox.0, e.bbox.1, e.bbox.2, e.bbox.3])
            })
            .collect()
    };
    let xs = boxes(gen);
    let ys = boxes(real);
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::Dataset("wasserstein_bbox: empty element set".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..n_proj.max(1) {
        let mut dir = [0.0f64; 4];
        loop {
            let mut norm = 0.0;
            for d in dir.iter_mut() {
                *d = rng.sample(rand_distr::StandardNormal);
                norm += *d * *d;
            }
            let norm = norm.sqrt();
            if norm > 1e-12 {
                for d in dir.iter_mut() {
                    *d /= norm;
                }
                break;
            }
        }
        let pa: Vec<f64> = xs
            .iter()
            .map(|b| b[0] * dir[0] + b[1] * dir[1] + b[2] * dir[2] + b[3] * dir[3])
            .collect();
        let pb: Vec<f64> = ys
            .iter()
            .map(|b| b[0] * dir[0] + b[1] * dir[1] + b[2] * dir[2] + b[3] * dir[3])
            .collect();
        total += wasserstein_1d(&pa, &pb)?;
    }
    Ok(total / n_proj.max(1) as f64)
}

/// DocSim pair weight: zero across classes, otherwise
/// `sqrt(min(w_a,w_b)·min(h_a,h_b)) · 2^(−‖Δcenter‖₂ − 2‖Δsize‖₂)`.
pub fn docsim_pair_weight(a: &crate::layout::Element, b: &crate::layout::Element) -> f64 {
    if a.class_id != b.class_id {
        return 0.0;
    }
    let (ax, ay, aw, ah) = a.bbox;
    let (bx, by, bw, bh) = b.bbox;
    let alpha = (aw.min(bw) * ah.min(bh)).max(0.0).sqrt();
    let dc = ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt();
    let ds = ((aw - bw).powi(2) + (ah - bh).powi(2)).sqrt();
    alpha * (-dc - 2.0 * ds).exp2()
}

/// Minimum-cost assignment on a square matrix (shortest augmenting paths
/// with potentials, O(n³)). Returns `assign[col] = row`.
fn assignment_min_cost(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    // 1-indexed working arrays; column 0 is the virtual start.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1]; // p[j] = row matched to column j
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![usize::MAX; n];
    for j in 1..=n {
        if p[j] != 0 {
            assign[j - 1] = p[j] - 1;
        }
    }
    assign
}

/// Maximum-weight bipartite matching total for a (possibly rectangular)
/// weight matrix; unmatched rows and columns contribute zero.
fn max_weight_matching_total(weights: &[Vec<f64>]) -> f64 {
    let la = weights.len();
    let lb = weights.first().map(|r| r.len()).unwrap_or(0);
    if la == 0 || lb == 0 {
        return 0.0;
    }
    let n = la.max(lb);
    let mut w_max = 0.0f64;
    for row in weights {
        for &w in row {
            w_max = w_max.max(w);
        }
    }
    // Pad to square; maximize by minimizing (w_max − w).
    let cost: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let w = if i < la && j < lb { weights[i][j] } else { 0.0 };
                    w_max - w
                })
                .collect()
        })
        .collect();
    let assign = assignment_min_cost(&cost);
    let mut total = 0.0;
    for (j, &i) in assign.iter().enumerate() {
        if i != usize::MAX && i < la && j < lb {
            total += weights[i][j];
        }
    }
    total
}

/// DocSim similarity between two layouts: the maximum-weight matching over
/// same-class element pairs, normalized by `max(l_a, l_b)`. Empty input
/// gives 0.
pub fn docsim(a: &Layout, b: &Layout) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let weights: Vec<Vec<f64>> = a
        .elements
        .iter()
        .map(|ea| b.elements.iter().map(|eb| docsim_pair_weight(ea, eb)).collect())
        .collect();
    max_weight_matching_total(&weights) / a.len().max(b.len()) as f64
}

/// Count distinct real layouts selected as the best DocSim match by the
/// generated set (ties broken toward the lowest real index).
pub fn unique_matches(gen: &[Layout], real: &[Layout]) -> usize {
    if real.is_empty() {
        return 0;
    }
    let mut chosen = vec![false; real.len()];
    for g in gen {
        let mut best_idx = 0usize;
        let mut best = f64::NEG_INFINITY;
        for (i, r) in real.iter().enumerate() {
            let s = docsim(g, r);
            if s > best {
                best = s;
                best_idx = i;
            }
        }
        chosen[best_idx] = true;
    }
    chosen.iter().filter(|&&c| c).count()
}

/// One evaluation run over a generated set against a real set.
#[derive(Debug, Clone, Serialize)]
pub struct MetricReport {
    pub iou: f64,
    pub overlap: f64,
    pub alignment: f64,
    pub w_class: f64,
    pub w_bbox: f64,
    pub unique_matches: usize,
    pub n_generated: usize,
    pub n_real: usize,
    pub n_projections: usize,
    pub seed: u64,
}

impl MetricReport {
    /// Aligned text table with the usual column set.
    pub fn table(&self) -> String {
        let header = format!(
            "{:>8} {:>8} {:>10} {:>8} {:>8} {:>16}",
            "IoU", "Overlap", "Alignment", "W class", "W bbox", "# unique matches"
        );
        let row = format!(
            "{:>8.4} {:>8.4} {:>10.4} {:>8.4} {:>8.4} {:>16}",
            self.iou, self.overlap, self.alignment, self.w_class, self.w_bbox, self.unique_matches
        );
        format!("{}\n{}", header, row)
    }
}

/// Compute the full metric suite for generated layouts against real ones.
pub fn evaluate(
    gen: &[Layout],
    real: &[Layout],
    n_projections: usize,
    seed: u64,
) -> Result<MetricReport> {
    if gen.is_empty() || real.is_empty() {
        return Err(Error::Dataset("evaluate: empty layout set".into()));
    }
    Ok(MetricReport {
        iou: dataset_iou(gen),
        overlap: dataset_overlap(gen),
        alignment: dataset_alignment(gen),
        w_class: wasserstein_class(gen, real)?,
        w_bbox: wasserstein_bbox(gen, real, n_projections, seed)?,
        unique_matches: unique_matches(gen, real),
        n_generated: gen.len(),
        n_real: real.len(),
        n_projections,
        seed,
    })
}

/// Independent reference implementations used by tests and the acceptance
/// suite. These recompute the geometric metrics by brute force (grid
/// decomposition, permutation search) and must stay separate from the
/// closed-form paths above.
pub mod oracle {
    use super::docsim_pair_weight;
    use crate::layout::Layout;

    /// Pairwise-intersection sum via rasterization: each pair's overlap is
    /// accumulated cell by cell on an `n × n` grid with exact per-cell
    /// coverage.
    pub fn raster_overlap_index(layout: &Layout, n: usize) -> f64 {
        let rects: Vec<_> = layout.elements.iter().map(|e| e.corners()).collect();
        let mut total = 0.0;
        for i in 0..rects.len() {
            for j in (i + 1)..rects.len() {
                total += raster_intersection(rects[i], rects[j], n);
            }
        }
        total
    }

    /// Mean pairwise IoU with both intersection and union areas taken from
    /// the raster.
    pub fn raster_mean_iou(layout: &Layout, n: usize) -> f64 {
        let l = layout.len();
        if l < 2 {
            return 0.0;
        }
        let rects: Vec<_> = layout.elements.iter().map(|e| e.corners()).collect();
        let mut sum = 0.0;
        let mut pairs = 0usize;
        for i in 0..l {
            for j in (i + 1)..l {
                let inter = raster_intersection(rects[i], rects[j], n);
                let union = raster_area(rects[i], n) + raster_area(rects[j], n) - inter;
                if union > 0.0 {
                    sum += inter / union;
                }
                pairs += 1;
            }
        }
        sum / pairs as f64
    }

    fn cell_overlap(lo: f64, hi: f64, cell: usize, n: usize) -> f64 {
        let c0 = cell as f64 / n as f64;
        let c1 = (cell + 1) as f64 / n as f64;
        (hi.min(c1) - lo.max(c0)).max(0.0)
    }

    fn raster_area(r: (f64, f64, f64, f64), n: usize) -> f64 {
        raster_span(r.0, r.2, n)
            .map(|cx| cell_overlap(r.0, r.2, cx, n))
            .sum::<f64>()
            * raster_span(r.1, r.3, n)
                .map(|cy| cell_overlap(r.1, r.3, cy, n))
                .sum::<f64>()
    }

    fn raster_span(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = usize> {
        let first = (lo.max(0.0) * n as f64).floor() as usize;
        let last = ((hi.min(1.0) * n as f64).ceil() as usize).min(n);
        first..last.max(first)
    }

    fn raster_intersection(a: (f64, f64, f64, f64), b: (f64, f64, f64, f64), n: usize) -> f64 {
        let lo_x = a.0.max(b.0);
        let hi_x = a.2.min(b.2);
        let lo_y = a.1.max(b.1);
        let hi_y = a.3.min(b.3);
        if hi_x <= lo_x || hi_y <= lo_y {
            return 0.0;
        }
        let sx: f64 = raster_span(lo_x, hi_x, n)
            .map(|cx| {
                cell_overlap(a.0, a.2, cx, n).min(cell_overlap(b.0, b.2, cx, n))
            })
            .sum();
        let sy: f64 = raster_span(lo_y, hi_y, n)
            .map(|cy| {
                cell_overlap(a.1, a.3, cy, n).min(cell_overlap(b.1, b.3, cy, n))
            })
            .sum();
        sx * sy
    }

    /// Exhaustive maximum-weight DocSim matching over all permutations of
    /// the padded square; feasible for layouts up to ~8 elements.
    pub fn brute_force_docsim(a: &Layout, b: &Layout) -> f64 {
        if a.is_empty() || b.is_empty() {
            return 0.0;
        }
        let la = a.len();
        let lb = b.len();
        let n = la.max(lb);
        let mut perm: Vec<usize> = (0..n).collect();
        let mut best = f64::NEG_INFINITY;
        permute(&mut perm, 0, &mut |p| {
            let mut total = 0.0;
            for (i, &j) in p.iter().enumerate() {
                if i < la && j < lb {
                    total += docsim_pair_weight(&a.elements[i], &b.elements[j]);
                }
            }
            if total > best {
                best = total;
            }
        });
        best / n as f64
    }

    fn permute(items: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
        if k == items.len() {
            visit(items);
            return;
        }
        for i in k..items.len() {
            items.swap(k, i);
            permute(items, k + 1, visit);
            items.swap(k, i);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::Element;
    use crate::synth::random_layouts;

    fn layout(elements: Vec<Element>) -> Layout {
        Layout::new((100, 100), elements)
    }

    fn elem(class: usize, x: f64, y: f64, w: f64, h: f64) -> Element {
        Element::new(class, (x, y, w, h)).unwrap()
    }

    #[test]
    fn iou_basic_cases() {
        // identical boxes
        let a = elem(0, 0.5, 0.5, 0.4, 0.4);
        assert_eq!(mean_pairwise_iou(&layout(vec![a, a])), 1.0);
        // disjoint boxes
        let l = layout(vec![elem(0, 0.2, 0.2, 0.2, 0.2), elem(0, 0.8, 0.8, 0.2, 0.2)]);
        assert_eq!(mean_pairwise_iou(&l), 0.0);
        // corner-form rects (0,0)-(1,1) and (0.5,0)-(1.5,1): IoU = 1/3
        let got = iou_rect((0.0, 0.0, 1.0, 1.0), (0.5, 0.0, 1.5, 1.0));
        assert!((got - 1.0 / 3.0).abs() < 1e-12);
        // fewer than two elements
        assert_eq!(mean_pairwise_iou(&layout(vec![a])), 0.0);
        assert_eq!(mean_pairwise_iou(&layout(vec![])), 0.0);
    }

    #[test]
    fn overlap_index_cases() {
        let l = layout(vec![elem(0, 0.2, 0.2, 0.2, 0.2), elem(0, 0.8, 0.8, 0.2, 0.2)]);
        assert_eq!(overlap_index(&l), 0.0);
        // two identical quarter-area boxes overlap by their full area
        let q = elem(1, 0.5, 0.5, 0.5, 0.5);
        assert!((overlap_index(&layout(vec![q, q])) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn overlap_and_iou_match_raster_oracle() {
        for seed in 0..20 {
            let l = &random_layouts(1, 10, 4, seed)[0];
            let fast = overlap_index(l);
            let slow = oracle::raster_overlap_index(l, 512);
            assert!((fast - slow).abs() < 1e-3, "overlap {} vs raster {}", fast, slow);
            let fast_iou = mean_pairwise_iou(l);
            let slow_iou = oracle::raster_mean_iou(l, 512);
            assert!((fast_iou - slow_iou).abs() < 1e-3);
        }
    }

    #[test]
    fn alignment_cases() {
        // shared left edge -> 0
        let l = layout(vec![
            elem(0, 0.3, 0.2, 0.2, 0.1),
            elem(0, 0.3, 0.5, 0.2, 0.2),
            elem(0, 0.3, 0.8, 0.2, 0.1),
        ]);
        assert!(alignment_score(&l).abs() < 1e-12);
        // single element -> 0
        assert_eq!(alignment_score(&layout(vec![elem(0, 0.5, 0.5, 0.2, 0.2)])), 0.0);
        // three elements, nearest offset 0.1 per element -> -ln(0.9)
        // widths equal, so left/center/right offsets all equal the center offset
        let l = layout(vec![
            elem(0, 0.2, 0.2, 0.1, 0.1),
            elem(0, 0.3, 0.5, 0.1, 0.1),
            elem(0, 0.4, 0.8, 0.1, 0.1),
        ]);
        let expect = -(0.9f64).ln();
        assert!((alignment_score(&l) - expect).abs() < 1e-12);
        assert!((expect - 0.10536).abs() < 1e-5);
    }

    #[test]
    fn alignment_is_invariant_to_vertical_translation() {
        let l = layout(vec![
            elem(0, 0.2, 0.2, 0.1, 0.1),
            elem(1, 0.5, 0.3, 0.2, 0.1),
            elem(2, 0.7, 0.4, 0.15, 0.1),
        ]);
        let mut shifted = l.clone();
        for e in shifted.elements.iter_mut() {
            e.bbox.1 += 0.3;
        }
        assert_eq!(alignment_score(&l), alignment_score(&shifted));
    }

    #[test]
    fn wasserstein_class_cases() {
        let a = layout(vec![elem(0, 0.5, 0.5, 0.2, 0.2)]);
        let b = layout(vec![elem(1, 0.5, 0.5, 0.2, 0.2)]);
        // identical distributions
        assert_eq!(wasserstein_class(std::slice::from_ref(&a), std::slice::from_ref(&a)).unwrap(), 0.0);
        // delta_0 vs delta_1 -> 1
        assert_eq!(wasserstein_class(std::slice::from_ref(&a), std::slice::from_ref(&b)).unwrap(), 1.0);
        // (0.7, 0.3) vs (0.5, 0.5) -> 0.2
        let gen: Vec<Layout> = (0..10)
            .map(|i| layout(vec![elem(if i < 7 { 0 } else { 1 }, 0.5, 0.5, 0.2, 0.2)]))
            .collect();
        let real: Vec<Layout> = (0..10)
            .map(|i| layout(vec![elem(if i < 5 { 0 } else { 1 }, 0.5, 0.5, 0.2, 0.2)]))
            .collect();
        assert!((wasserstein_class(&gen, &real).unwrap() - 0.2).abs() < 1e-12);
        assert!(wasserstein_class(&[], &[a]).is_err());
    }

    #[test]
    fn wasserstein_1d_cases() {
        // identical sets -> exactly 0
        let x = vec![0.3, 0.1, 0.7, 0.5];
        assert_eq!(wasserstein_1d(&x, &x).unwrap(), 0.0);
        // point masses at 0 and 0.3 -> 0.3
        assert!((wasserstein_1d(&[0.0], &[0.3]).unwrap() - 0.3).abs() < 1e-15);
        // unequal sizes: {0, 1} vs {0.5}: integral |F^-1 - G^-1| = 0.5
        assert!((wasserstein_1d(&[0.0, 1.0], &[0.5]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn wasserstein_bbox_identity_and_symmetry() {
        let xs = random_layouts(20, 8, 3, 5);
        let ys = random_layouts(25, 8, 3, 6);
        assert_eq!(wasserstein_bbox(&xs, &xs, 16, 9).unwrap(), 0.0);
        let ab = wasserstein_bbox(&xs, &ys, 64, 9).unwrap();
        let ba = wasserstein_bbox(&ys, &xs, 64, 9).unwrap();
        assert_eq!(ab, ba, "sliced W1 must be symmetric under a shared seed");
        assert!(ab > 0.0);
    }

    #[test]
    fn wasserstein_bbox_axis_aligned_point_masses() {
        // All mass on one axis: single boxes differing by 0.3 in x_center.
        // Expected sliced distance = 0.3 * E|u_x|; with many projections this
        // converges to 0.3 * E|u1| for a random unit 4-vector.
        let a = layout(vec![elem(0, 0.3, 0.5, 0.2, 0.2)]);
        let b = layout(vec![elem(0, 0.6, 0.5, 0.2, 0.2)]);
        let got = wasserstein_bbox(&[a], &[b], 20_000, 4).unwrap();
        // E|u1| for a uniform unit 4-vector is 4/(3π)
        let expect = 0.3 * 4.0 / (3.0 * std::f64::consts::PI);
        assert!((got - expect).abs() < 0.005, "{} vs {}", got, expect);
        // and a single axis-aligned projection recovers the full 0.3
        assert!(
            (wasserstein_1d(&[0.3], &[0.6]).unwrap() - 0.3).abs() < 1e-15
        );
    }

    #[test]
    fn wasserstein_triangle_inequality_spot_check() {
        for seed in 0..5 {
            let a = random_layouts(5, 6, 3, seed);
            let b = random_layouts(5, 6, 3, seed + 100);
            let c = random_layouts(5, 6, 3, seed + 200);
            let ab = wasserstein_bbox(&a, &b, 64, 7).unwrap();
            let bc = wasserstein_bbox(&b, &c, 64, 7).unwrap();
            let ac = wasserstein_bbox(&a, &c, 64, 7).unwrap();
            assert!(ac <= ab + bc + 1e-12);
        }
    }

    #[test]
    fn docsim_self_match_and_disjoint_classes() {
        let l = layout(vec![
            elem(0, 0.3, 0.2, 0.2, 0.1),
            elem(1, 0.6, 0.5, 0.3, 0.2),
            elem(0, 0.4, 0.8, 0.2, 0.1),
        ]);
        let self_score = docsim(&l, &l);
        // self-match weight per pair is sqrt(area); identity matching
        let expect: f64 = l
            .elements
            .iter()
            .map(|e| (e.bbox.2 * e.bbox.3).sqrt())
            .sum::<f64>()
            / 3.0;
        assert!((self_score - expect).abs() < 1e-12);
        // disjoint class sets -> 0
        let other = layout(vec![elem(2, 0.3, 0.2, 0.2, 0.1)]);
        assert_eq!(docsim(&l, &other), 0.0);
        // empty -> 0
        assert_eq!(docsim(&l, &layout(vec![])), 0.0);
    }

    #[test]
    fn docsim_matches_brute_force() {
        for seed in 0..300 {
            let a = &random_layouts(1, 6, 3, seed)[0];
            let b = &random_layouts(1, 6, 3, seed + 1000)[0];
            let fast = docsim(a, b);
            let slow = oracle::brute_force_docsim(a, b);
            assert!(
                (fast - slow).abs() < 1e-9,
                "seed {}: hungarian {} vs brute force {}",
                seed,
                fast,
                slow
            );
        }
    }

    #[test]
    fn unique_matches_cases() {
        let reals = random_layouts(12, 6, 3, 50);
        // generated set identical to the real set: every layout self-matches
        assert_eq!(unique_matches(&reals, &reals), reals.len());
        // all generated identical -> 1
        let same: Vec<Layout> = vec![reals[3].clone(); 8];
        assert_eq!(unique_matches(&same, &reals), 1);
        // bound
        let gen = random_layouts(5, 6, 3, 51);
        assert!(unique_matches(&gen, &reals) <= gen.len().min(reals.len()));
    }

    #[test]
    fn evaluate_identical_sets() {
        let set = random_layouts(10, 8, 4, 3);
        let report = evaluate(&set, &set, 32, 11).unwrap();
        assert_eq!(report.w_class, 0.0);
        assert_eq!(report.w_bbox, 0.0);
        assert_eq!(report.unique_matches, 10);
        let table = report.table();
        assert!(table.contains("IoU"));
        assert!(table.contains("# unique matches"));
    }
}

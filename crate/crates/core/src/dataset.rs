//! Dataset ingestion and serialization.
//!
//! Ingestion reads COCO-style annotation JSON (pixel boxes in
//! `[x, y, w, h]` corner format) and produces normalized, filtered, sorted
//! layouts. The internal on-disk format is line-delimited JSON, one layout
//! per line: `{"page":[w,h],"elements":[{"c":0,"b":[x,y,w,h]}, ...]}`.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::{sort_layout, Element, GridConfig, Layout};

/// Record-level filters applied during ingestion.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetFilters {
    /// Drop boxes whose area fraction of the page is `<=` this value.
    pub min_area_frac: f64,
    /// Drop annotations tagged `iscrowd`.
    pub drop_crowd: bool,
    /// Drop layouts with more elements than this after box filtering.
    pub max_elements: usize,
}

impl Default for DatasetFilters {
    fn default() -> Self {
        DatasetFilters {
            min_area_frac: 0.02,
            drop_crowd: true,
            max_elements: 100,
        }
    }
}

/// Per-ingestion bookkeeping; drops are counted, not raised.
#[derive(Debug, Clone, Default, Serialize)]
pub struct IngestSummary {
    pub images: usize,
    pub kept_layouts: usize,
    pub dropped_small_boxes: usize,
    pub dropped_crowd: usize,
    pub dropped_degenerate: usize,
    pub dropped_long_layouts: usize,
    pub empty_layouts: usize,
    pub n_classes: usize,
    pub class_names: Vec<String>,
}

#[derive(Deserialize)]
struct CocoFile {
    #[serde(default)]
    images: Vec<CocoImage>,
    #[serde(default)]
    annotations: Vec<CocoAnnotation>,
    #[serde(default)]
    categories: Vec<CocoCategory>,
}

#[derive(Deserialize)]
struct CocoImage {
    id: u64,
    width: u32,
    height: u32,
}

#[derive(Deserialize)]
struct CocoAnnotation {
    image_id: u64,
    category_id: u64,
    bbox: [f64; 4],
    #[serde(default)]
    iscrowd: u8,
}

#[derive(Deserialize)]
struct CocoCategory {
    id: u64,
    #[serde(default)]
    name: String,
}

/// Parse and filter a COCO annotation file into normalized layouts.
///
/// Category ids map to contiguous class indices in ascending id order.
pub fn ingest_coco(
    path: &Path,
    filters: &DatasetFilters,
    grid: &GridConfig,
) -> Result<(Vec<Layout>, IngestSummary)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Dataset(format!("cannot read {}: {}", path.display(), e)))?;
    let coco: CocoFile = serde_json::from_str(&text)
        .map_err(|e| Error::Dataset(format!("malformed COCO JSON in {}: {}", path.display(), e)))?;
    ingest_coco_parsed(coco, filters, grid)
}

fn ingest_coco_parsed(
    coco: CocoFile,
    filters: &DatasetFilters,
    grid: &GridConfig,
) -> Result<(Vec<Layout>, IngestSummary)> {
    let mut class_of: BTreeMap<u64, usize> = BTreeMap::new();
    let mut class_names = Vec::new();
    for cat in &coco.categories {
        class_of.insert(cat.id, 0);
    }
    for (i, (_, slot)) in class_of.iter_mut().enumerate() {
        *slot = i;
    }
    for cat in &coco.categories {
        class_names.push((class_of[&cat.id], cat.name.clone()));
    }
    class_names.sort_by_key(|(i, _)| *i);

    let mut summary = IngestSummary {
        images: coco.images.len(),
        n_classes: class_of.len(),
        class_names: class_names.into_iter().map(|(_, n)| n).collect(),
        ..Default::default()
    };

    let mut per_image: BTreeMap<u64, Vec<Element>> = BTreeMap::new();
    let mut pages: BTreeMap<u64, (u32, u32)> = BTreeMap::new();
    for img in &coco.images {
        if img.width == 0 || img.height == 0 {
            return Err(Error::Dataset(format!("image {} has zero size", img.id)));
        }
        pages.insert(img.id, (img.width, img.height));
        per_image.insert(img.id, Vec::new());
    }

    for ann in &coco.annotations {
        let Some(&(pw, ph)) = pages.get(&ann.image_id) else {
            return Err(Error::Dataset(format!(
                "annotation references unknown image {}",
                ann.image_id
            )));
        };
        let Some(&class_id) = class_of.get(&ann.category_id) else {
            return Err(Error::Dataset(format!(
                "annotation references unknown category {}",
                ann.category_id
            )));
        };
        if filters.drop_crowd && ann.iscrowd != 0 {
            summary.dropped_crowd += 1;
            continue;
        }
        let [x, y, w, h] = ann.bbox;
        let (pw, ph) = (pw as f64, ph as f64);
        let cx = (x + w / 2.0) / pw;
        let cy = (y + h / 2.0) / ph;
        let nw = w / pw;
        let nh = h / ph;
        let area_frac = nw * nh;
        if area_frac <= filters.min_area_frac {
            summary.dropped_small_boxes += 1;
            continue;
        }
        match Element::clamped(class_id, (cx, cy, nw, nh)) {
            Ok(e) => per_image.get_mut(&ann.image_id).unwrap().push(e),
            Err(_) => summary.dropped_degenerate += 1,
        }
    }

    let mut layouts = Vec::new();
    for (id, elements) in per_image {
        if elements.is_empty() {
            summary.empty_layouts += 1;
            continue;
        }
        if elements.len() > filters.max_elements {
            summary.dropped_long_layouts += 1;
            continue;
        }
        let mut layout = Layout::new(pages[&id], elements);
        sort_layout(&mut layout, grid);
        layouts.push(layout);
    }
    summary.kept_layouts = layouts.len();
    Ok((layouts, summary))
}

/// Wire form of one layout line.
#[derive(Serialize, Deserialize)]
struct LayoutLine {
    page: (u32, u32),
    elements: Vec<Element>,
}

/// Write layouts as line-delimited JSON.
pub fn write_jsonl(path: &Path, layouts: &[Layout]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for l in layouts {
        let line = serde_json::to_string(&LayoutLine {
            page: l.page,
            elements: l.elements.clone(),
        })?;
        writeln!(f, "{}", line)?;
    }
    Ok(())
}

/// Read layouts from line-delimited JSON.
pub fn read_jsonl(path: &Path) -> Result<Vec<Layout>> {
    let f = std::fs::File::open(path)
        .map_err(|e| Error::Dataset(format!("cannot open {}: {}", path.display(), e)))?;
    let reader = BufReader::new(f);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: LayoutLine = serde_json::from_str(&line)
            .map_err(|e| Error::Dataset(format!("{}:{}: {}", path.display(), i + 1, e)))?;
        out.push(Layout::new(parsed.page, parsed.elements));
    }
    Ok(out)
}

/// Load a dataset from either supported format, sniffing the content:
/// a COCO file is one JSON object with an `images` key; the internal
/// format is one JSON object per line with a `page` key.
pub fn load_dataset(
    path: &Path,
    filters: &DatasetFilters,
    grid: &GridConfig,
) -> Result<(Vec<Layout>, Option<IngestSummary>)> {
    let f = std::fs::File::open(path)
        .map_err(|e| Error::Dataset(format!("cannot open {}: {}", path.display(), e)))?;
    let mut first_line = String::new();
    BufReader::new(f).read_line(&mut first_line)?;
    let looks_jsonl = serde_json::from_str::<LayoutLine>(first_line.trim()).is_ok();
    if looks_jsonl {
        Ok((read_jsonl(path)?, None))
    } else {
        let (layouts, summary) = ingest_coco(path, filters, grid)?;
        Ok((layouts, Some(summary)))
    }
}

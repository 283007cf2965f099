//! Python bindings: layouts, token encodings, the trained model, the
//! metric suite, and SVG rendering, driven in-process from Python.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use layoutgen::layout::{self, GridConfig};
use layoutgen::metrics;
use layoutgen::model::{load_checkpoint, save_checkpoint, DecoderVariant, LayoutVae, PriorKind};
use layoutgen::sample::{self, sampler_rng, SamplingConfig, Strategy};
use layoutgen::train::{self, TrainConfig};

fn py_err(e: layoutgen::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// One class-labeled bounding box in normalized page coordinates.
#[pyclass(name = "Element", from_py_object)]
#[derive(Clone)]
struct PyElement {
    inner: layout::Element,
}

#[pymethods]
impl PyElement {
    #[new]
    fn new(class_id: usize, bbox: (f64, f64, f64, f64)) -> PyResult<Self> {
        Ok(PyElement {
            inner: layout::Element::new(class_id, bbox).map_err(py_err)?,
        })
    }

    #[getter]
    fn class_id(&self) -> usize {
        self.inner.class_id
    }

    /// `(x_center, y_center, width, height)` as page fractions.
    #[getter]
    fn bbox(&self) -> (f64, f64, f64, f64) {
        self.inner.bbox
    }

    fn __repr__(&self) -> String {
        let (x, y, w, h) = self.inner.bbox;
        format!(
            "Element(class_id={}, bbox=({:.4}, {:.4}, {:.4}, {:.4}))",
            self.inner.class_id, x, y, w, h
        )
    }
}

/// An ordered sequence of elements plus a pixel page size.
#[pyclass(name = "Layout", from_py_object)]
#[derive(Clone)]
struct PyLayout {
    inner: layout::Layout,
}

#[pymethods]
impl PyLayout {
    #[new]
    #[pyo3(signature = (elements, page = (850, 1100)))]
    fn new(elements: Vec<PyElement>, page: (u32, u32)) -> Self {
        PyLayout {
            inner: layout::Layout::new(page, elements.into_iter().map(|e| e.inner).collect()),
        }
    }

    #[getter]
    fn page(&self) -> (u32, u32) {
        self.inner.page
    }

    #[getter]
    fn elements(&self) -> Vec<PyElement> {
        self.inner
            .elements
            .iter()
            .map(|&e| PyElement { inner: e })
            .collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Layout(page={:?}, n_elements={})",
            self.inner.page,
            self.inner.len()
        )
    }

    /// Raise if any element violates the coordinate invariants.
    fn validate(&self, max_elements: usize) -> PyResult<()> {
        self.inner.validate(max_elements).map_err(py_err)
    }

    /// Sort elements into reading order on an `h × w` grid.
    #[pyo3(signature = (h = 32, w = 32))]
    fn sorted(&self, h: usize, w: usize) -> PyResult<PyLayout> {
        let grid = GridConfig::new(h, w, 1).map_err(py_err)?;
        let mut layout = self.inner.clone();
        layout::sort_layout(&mut layout, &grid);
        Ok(PyLayout { inner: layout })
    }
}

/// Grid indices `(xi, yi, wi, hi)` for a box under an `h × w` grid.
#[pyfunction]
fn discretize_bbox(bbox: (f64, f64, f64, f64), h: usize, w: usize) -> PyResult<(usize, usize, usize, usize)> {
    let grid = GridConfig::new(h, w, 1).map_err(py_err)?;
    layout::discretize_bbox(bbox, &grid).map_err(py_err)
}

/// Discrete one-hot token of length `(C+2) + 2(H+W)`.
#[pyfunction]
fn encode_output_token(element: &PyElement, h: usize, w: usize, c: usize) -> PyResult<Vec<f32>> {
    let grid = GridConfig::new(h, w, c).map_err(py_err)?;
    layout::encode_output_token(&element.inner, &grid).map_err(py_err)
}

/// Continuous token of length `(C+2) + 4`.
#[pyfunction]
fn encode_input_token(element: &PyElement, h: usize, w: usize, c: usize) -> PyResult<Vec<f32>> {
    let grid = GridConfig::new(h, w, c).map_err(py_err)?;
    layout::encode_input_token(&element.inner, &grid).map_err(py_err)
}

/// Decode a discrete token (argmax per block); returns an `Element` or the
/// string `"BOS"` / `"EOS"`.
#[pyfunction]
fn decode_token(py: Python<'_>, vector: Vec<f32>, h: usize, w: usize, c: usize) -> PyResult<Py<PyAny>> {
    let grid = GridConfig::new(h, w, c).map_err(py_err)?;
    match layout::decode_token(&vector, &grid).map_err(py_err)? {
        layout::Token::Element(e) => Ok(PyElement { inner: e }.into_pyobject(py)?.into_any().unbind()),
        layout::Token::Bos => Ok("BOS".into_pyobject(py)?.into_any().unbind()),
        layout::Token::Eos => Ok("EOS".into_pyobject(py)?.into_any().unbind()),
    }
}

#[pyfunction]
fn mean_pairwise_iou(layout: &PyLayout) -> f64 {
    metrics::mean_pairwise_iou(&layout.inner)
}

#[pyfunction]
fn overlap_index(layout: &PyLayout) -> f64 {
    metrics::overlap_index(&layout.inner)
}

#[pyfunction]
fn alignment_score(layout: &PyLayout) -> f64 {
    metrics::alignment_score(&layout.inner)
}

#[pyfunction]
fn docsim(a: &PyLayout, b: &PyLayout) -> f64 {
    metrics::docsim(&a.inner, &b.inner)
}

#[pyfunction]
fn unique_matches(generated: Vec<PyLayout>, real: Vec<PyLayout>) -> usize {
    let g: Vec<_> = generated.into_iter().map(|l| l.inner).collect();
    let r: Vec<_> = real.into_iter().map(|l| l.inner).collect();
    metrics::unique_matches(&g, &r)
}

#[pyfunction]
fn wasserstein_class(generated: Vec<PyLayout>, real: Vec<PyLayout>) -> PyResult<f64> {
    let g: Vec<_> = generated.into_iter().map(|l| l.inner).collect();
    let r: Vec<_> = real.into_iter().map(|l| l.inner).collect();
    metrics::wasserstein_class(&g, &r).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (generated, real, n_proj = 128, seed = 0))]
fn wasserstein_bbox(
    generated: Vec<PyLayout>,
    real: Vec<PyLayout>,
    n_proj: usize,
    seed: u64,
) -> PyResult<f64> {
    let g: Vec<_> = generated.into_iter().map(|l| l.inner).collect();
    let r: Vec<_> = real.into_iter().map(|l| l.inner).collect();
    metrics::wasserstein_bbox(&g, &r, n_proj, seed).map_err(py_err)
}

#[pyfunction]
fn render_svg(layout: &PyLayout) -> String {
    layoutgen::svg::render_svg(&layout.inner, None)
}

/// Deterministic synthetic two-column layouts (16×16 grid, 3 classes).
#[pyfunction]
fn two_column_layouts(n: usize, seed: u64) -> Vec<PyLayout> {
    let grid = GridConfig { h: 16, w: 16, c: 3 };
    layoutgen::synth::two_column_layouts(n, &grid, seed)
        .into_iter()
        .map(|inner| PyLayout { inner })
        .collect()
}

/// Attention maps as nested lists indexed `[layer][head][query][key]`.
type AttentionMaps = Vec<Vec<Vec<Vec<f32>>>>;

/// The layout VAE, wrapped for Python.
#[pyclass(name = "Model")]
struct PyModel {
    inner: LayoutVae<f32>,
    length_dist: Option<layout::LengthDistribution>,
}

#[pymethods]
impl PyModel {
    /// Small model on a 16×16 grid with 3 classes, for desk-scale runs.
    /// `variant` is `"ar"` or `"nonar"`; `prior` is `"fixed"` or `"learned"`.
    #[staticmethod]
    #[pyo3(signature = (variant = "ar", prior = "fixed", seed = 0))]
    fn toy(variant: &str, prior: &str, seed: u64) -> PyResult<Self> {
        let variant = match variant {
            "ar" => DecoderVariant::Ar,
            "nonar" => DecoderVariant::NonAr,
            other => return Err(PyValueError::new_err(format!("unknown variant {:?}", other))),
        };
        let prior = match prior {
            "fixed" => PriorKind::Fixed,
            "learned" => PriorKind::Learned,
            other => return Err(PyValueError::new_err(format!("unknown prior {:?}", other))),
        };
        let config = layoutgen::model::ModelConfig {
            variant,
            prior,
            grid: GridConfig { h: 16, w: 16, c: 3 },
            block: layoutgen::attention::BlockConfig {
                d_model: 64,
                n_heads: 4,
                d_ff: 256,
                n_blocks: 2,
                dropout: 0.0,
            },
            d_z: 64,
            max_elements: 20,
        };
        Ok(PyModel {
            inner: LayoutVae::new(config, seed).map_err(py_err)?,
            length_dist: None,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let (inner, length_dist) = load_checkpoint(path.as_ref()).map_err(py_err)?;
        Ok(PyModel { inner, length_dist })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        save_checkpoint(&self.inner, self.length_dist.as_ref(), path.as_ref()).map_err(py_err)
    }

    #[getter]
    fn variant(&self) -> &'static str {
        match self.inner.config.variant {
            DecoderVariant::Ar => "ar",
            DecoderVariant::NonAr => "nonar",
        }
    }

    /// Train in place; returns `(final_recon, final_kl)`.
    #[pyo3(signature = (layouts, max_steps = 500, batch_size = 10, seed = 0, warmup_steps = 500))]
    fn train(
        &mut self,
        layouts: Vec<PyLayout>,
        max_steps: u64,
        batch_size: usize,
        seed: u64,
        warmup_steps: u64,
    ) -> PyResult<(f64, f64)> {
        let dataset: Vec<_> = layouts.into_iter().map(|l| l.inner).collect();
        let cfg = TrainConfig {
            epochs: Some(usize::MAX / 2),
            batch_size,
            max_steps: Some(max_steps),
            warmup_steps,
            seed,
            ..TrainConfig::default()
        };
        let report = train::train(&mut self.inner, &dataset, &cfg, None).map_err(py_err)?;
        self.length_dist = Some(report.length_dist);
        Ok((report.final_recon, report.final_kl))
    }

    /// Teacher-forced per-segment argmax accuracy on a dataset.
    fn accuracy(&self, layouts: Vec<PyLayout>) -> PyResult<f64> {
        let dataset: Vec<_> = layouts.into_iter().map(|l| l.inner).collect();
        train::teacher_forced_accuracy(&self.inner, &dataset).map_err(py_err)
    }

    /// Draw `n` layouts from the prior.
    #[pyo3(signature = (n, seed = 0, strategy = "categorical", max_len = 20, temperature = 1.0))]
    fn sample(
        &self,
        n: usize,
        seed: u64,
        strategy: &str,
        max_len: usize,
        temperature: f64,
    ) -> PyResult<Vec<PyLayout>> {
        let cfg = SamplingConfig {
            strategy: strategy.parse::<Strategy>().map_err(py_err)?,
            max_len: max_len.min(self.inner.config.max_elements),
            temperature,
            seed,
            page: (850, 1100),
        };
        let mut rng = sampler_rng(seed, 0);
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let layout = match self.inner.config.variant {
                DecoderVariant::Ar => sample::sample_ar(&self.inner, &cfg, &mut rng).map_err(py_err)?,
                DecoderVariant::NonAr => {
                    let dist = self.length_dist.as_ref().ok_or_else(|| {
                        PyValueError::new_err("model has no length distribution; train or load first")
                    })?;
                    sample::sample_nonar(&self.inner, dist, &cfg, &mut rng).map_err(py_err)?
                }
            };
            out.push(PyLayout { inner: layout });
        }
        Ok(out)
    }

    /// Decode the interpolation path between two seeded random latents
    /// (autoregressive checkpoints only).
    #[pyo3(signature = (steps = 11, seed = 0))]
    fn interpolate(&self, steps: usize, seed: u64) -> PyResult<Vec<PyLayout>> {
        if self.inner.config.variant != DecoderVariant::Ar {
            return Err(PyValueError::new_err("interpolate needs an autoregressive model"));
        }
        if steps < 2 {
            return Err(PyValueError::new_err("interpolate needs >= 2 steps"));
        }
        let mut rng = sampler_rng(seed, 0);
        let z1 = sample::standard_normal_tensor(1, self.inner.config.d_z, &mut rng);
        let z2 = sample::standard_normal_tensor(1, self.inner.config.d_z, &mut rng);
        let cfg = SamplingConfig {
            strategy: Strategy::Greedy,
            max_len: self.inner.config.max_elements,
            temperature: 1.0,
            seed,
            page: (850, 1100),
        };
        let mut out = Vec::with_capacity(steps);
        for i in 0..steps {
            let lambda = i as f64 / (steps - 1) as f64;
            let z = sample::interpolate(&z1, &z2, lambda).map_err(py_err)?;
            let (layout, _) = sample::sample_ar_with_z(&self.inner, &z, &cfg, &mut rng).map_err(py_err)?;
            out.push(PyLayout { inner: layout });
        }
        Ok(out)
    }

    /// Attention maps for one layout as nested lists
    /// `{"encoder"|"decoder": [layer][head][query][key]}`.
    fn attention(&self, layout: &PyLayout) -> PyResult<(AttentionMaps, AttentionMaps)> {
        let export = sample::export_attention(&self.inner, &layout.inner).map_err(py_err)?;
        Ok((export.encoder.weights, export.decoder.weights))
    }
}

#[pymodule]
fn layoutgen_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyElement>()?;
    m.add_class::<PyLayout>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(discretize_bbox, m)?)?;
    m.add_function(wrap_pyfunction!(encode_output_token, m)?)?;
    m.add_function(wrap_pyfunction!(encode_input_token, m)?)?;
    m.add_function(wrap_pyfunction!(decode_token, m)?)?;
    m.add_function(wrap_pyfunction!(mean_pairwise_iou, m)?)?;
    m.add_function(wrap_pyfunction!(overlap_index, m)?)?;
    m.add_function(wrap_pyfunction!(alignment_score, m)?)?;
    m.add_function(wrap_pyfunction!(docsim, m)?)?;
    m.add_function(wrap_pyfunction!(unique_matches, m)?)?;
    m.add_function(wrap_pyfunction!(wasserstein_class, m)?)?;
    m.add_function(wrap_pyfunction!(wasserstein_bbox, m)?)?;
    m.add_function(wrap_pyfunction!(render_svg, m)?)?;
    m.add_function(wrap_pyfunction!(two_column_layouts, m)?)?;
    Ok(())
}

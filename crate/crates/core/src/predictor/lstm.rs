//! Stacked LSTM regressor with a single-unit dense head.
//!
//! All parameters live in one flat vector. Per recurrent layer the layout is
//! the gate matrix (`4h x (in + h)`, row-major, gate blocks ordered
//! input/forget/cell/output) followed by its `4h` bias; the dense head
//! weights (`h_last`) and bias close the vector.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::trace::{NormStats, FEATURE_COUNT};

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct LayerSpan {
    pub input: usize,
    pub hidden: usize,
    pub weight: usize,
    pub bias: usize,
}

impl LayerSpan {
    fn width(&self) -> usize {
        self.input + self.hidden
    }

    fn end(&self) -> usize {
        self.bias + 4 * self.hidden
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmModel {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    /// Inverted dropout between recurrent layers, training only.
    pub dropout_rate: f64,
    /// History length H the model was trained on (0 when unset).
    pub history: usize,
    pub norm_stats: Option<NormStats>,
    pub params: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Activations of one layer at one step, kept for backpropagation.
#[derive(Debug, Clone, Default)]
struct StepCache {
    input: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    gates: Vec<f64>, // activated i, f, g, o
    tanh_c: Vec<f64>,
}

impl LstmModel {
    /// Parameters drawn uniformly from ±1/sqrt(h) with forget-gate bias 1.
    pub fn new(input_dim: usize, hidden: &[usize], dropout_rate: f64, seed: u64) -> Self {
        let mut model = Self::zeros(input_dim, hidden, dropout_rate);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for span in model.spans() {
            let k = 1.0 / (span.hidden as f64).sqrt();
            for p in &mut model.params[span.weight..span.bias] {
                *p = rng.gen_range(-k..k);
            }
            for j in 0..4 * span.hidden {
                model.params[span.bias + j] = if (span.hidden..2 * span.hidden).contains(&j) { 1.0 } else { 0.0 };
            }
        }
        let (hw, hb) = model.head_offsets();
        let k = 1.0 / (*hidden.last().unwrap() as f64).sqrt();
        for p in &mut model.params[hw..hb] {
            *p = rng.gen_range(-k..k);
        }
        model
    }

    pub fn zeros(input_dim: usize, hidden: &[usize], dropout_rate: f64) -> Self {
        assert!(!hidden.is_empty(), "at least one recurrent layer");
        let mut n = 0;
        let mut input = input_dim;
        for &h in hidden {
            n += 4 * h * (input + h) + 4 * h;
            input = h;
        }
        n += input + 1;
        LstmModel {
            input_dim,
            hidden: hidden.to_vec(),
            dropout_rate,
            history: 0,
            norm_stats: None,
            params: vec![0.0; n],
        }
    }

    /// Default predictor input: seven context features plus throughput.
    pub fn for_traces(hidden: &[usize], dropout_rate: f64, seed: u64) -> Self {
        Self::new(FEATURE_COUNT + 1, hidden, dropout_rate, seed)
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// `[input, hidden..., 1]`
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut v = vec![self.input_dim];
        v.extend(&self.hidden);
        v.push(1);
        v
    }

    pub(crate) fn spans(&self) -> Vec<LayerSpan> {
        let mut spans = Vec::with_capacity(self.hidden.len());
        let mut offset = 0;
        let mut input = self.input_dim;
        for &h in &self.hidden {
            let weight = offset;
            let bias = weight + 4 * h * (input + h);
            spans.push(LayerSpan { input, hidden: h, weight, bias });
            offset = bias + 4 * h;
            input = h;
        }
        spans
    }

    /// Offsets of the dense head weights and bias.
    pub(crate) fn head_offsets(&self) -> (usize, usize) {
        let start = self.spans().last().map(|s| s.end()).unwrap_or(0);
        (start, start + self.hidden.last().copied().unwrap_or(0))
    }

    /// Mask selecting only the dense head parameters.
    pub fn head_mask(&self) -> Vec<bool> {
        let (hw, _) = self.head_offsets();
        (0..self.params.len()).map(|i| i >= hw).collect()
    }

    fn check_sequence(&self, seq: &[f64]) -> Result<usize> {
        if seq.is_empty() || !seq.len().is_multiple_of(self.input_dim) {
            return Err(Error::Dimension {
                expected: format!("a non-empty multiple of {} values", self.input_dim),
                actual: format!("{} values", seq.len()),
            });
        }
        Ok(seq.len() / self.input_dim)
    }

    fn step(&self, span: &LayerSpan, x: &[f64], h: &[f64], c: &[f64], cache: &mut StepCache) -> (Vec<f64>, Vec<f64>) {
        let hs = span.hidden;
        let width = span.width();
        let w = &self.params[span.weight..span.bias];
        let b = &self.params[span.bias..span.end()];
        let mut gates = vec![0.0; 4 * hs];
        for (r, g) in gates.iter_mut().enumerate() {
            let row = &w[r * width..(r + 1) * width];
            let mut z = b[r];
            for (wi, xi) in row[..span.input].iter().zip(x) {
                z += wi * xi;
            }
            for (wi, hi) in row[span.input..].iter().zip(h) {
                z += wi * hi;
            }
            *g = if (2 * hs..3 * hs).contains(&r) { z.tanh() } else { sigmoid(z) };
        }
        let mut c_new = vec![0.0; hs];
        let mut h_new = vec![0.0; hs];
        let mut tanh_c = vec![0.0; hs];
        for j in 0..hs {
            c_new[j] = gates[hs + j] * c[j] + gates[j] * gates[2 * hs + j];
            tanh_c[j] = c_new[j].tanh();
            h_new[j] = gates[3 * hs + j] * tanh_c[j];
        }
        cache.input = x.to_vec();
        cache.h_prev = h.to_vec();
        cache.c_prev = c.to_vec();
        cache.gates = gates;
        cache.tanh_c = tanh_c;
        (h_new, c_new)
    }

    /// Run the stack over `seq` (row-major `steps x input_dim`), optionally
    /// applying dropout masks between layers. Returns the head output and caches.
    fn run(&self, seq: &[f64], masks: Option<&[Vec<f64>]>) -> Result<(f64, Vec<Vec<StepCache>>, Vec<f64>)> {
        let steps = self.check_sequence(seq)?;
        let spans = self.spans();
        let mut inputs: Vec<Vec<f64>> = seq.chunks(self.input_dim).map(|r| r.to_vec()).collect();
        let mut caches = Vec::with_capacity(spans.len());
        for (l, span) in spans.iter().enumerate() {
            let mut h = vec![0.0; span.hidden];
            let mut c = vec![0.0; span.hidden];
            let mut layer_cache = vec![StepCache::default(); steps];
            let mut outputs = Vec::with_capacity(steps);
            for t in 0..steps {
                let (hn, cn) = self.step(span, &inputs[t], &h, &c, &mut layer_cache[t]);
                h = hn;
                c = cn;
                let mut out = h.clone();
                if l + 1 < spans.len() {
                    if let Some(m) = masks {
                        let mask = &m[l * steps + t];
                        out.iter_mut().zip(mask).for_each(|(o, k)| *o *= k);
                    }
                }
                outputs.push(out);
            }
            caches.push(layer_cache);
            inputs = outputs;
        }
        let last = inputs.pop().unwrap();
        let (hw, hb) = self.head_offsets();
        let y = self.params[hb] + self.params[hw..hb].iter().zip(&last).map(|(w, h)| w * h).sum::<f64>();
        Ok((y, caches, last))
    }

    /// Deterministic forward pass on a normalized sequence; dropout is never applied.
    pub fn forward_normalized(&self, seq: &[f64]) -> Result<f64> {
        Ok(self.run(seq, None)?.0)
    }

    /// Squared error `(y - target)^2` for one sequence; its gradient is added into `grad`.
    /// With `rng` set, inverted dropout masks are sampled between recurrent layers.
    pub fn accumulate_gradient(
        &self,
        seq: &[f64],
        target: f64,
        rng: Option<&mut ChaCha8Rng>,
        grad: &mut [f64],
    ) -> Result<f64> {
        let steps = self.check_sequence(seq)?;
        let spans = self.spans();
        let masks: Option<Vec<Vec<f64>>> = match rng {
            Some(rng) if self.dropout_rate > 0.0 && spans.len() > 1 => {
                let keep = 1.0 - self.dropout_rate;
                Some(
                    spans[..spans.len() - 1]
                        .iter()
                        .flat_map(|s| std::iter::repeat_n(s.hidden, steps))
                        .map(|h| (0..h).map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect())
                        .collect(),
                )
            }
            _ => None,
        };
        let (y, caches, last) = self.run(seq, masks.as_deref())?;
        let dy = 2.0 * (y - target);

        let (hw, hb) = self.head_offsets();
        for (g, h) in grad[hw..hb].iter_mut().zip(&last) {
            *g += dy * h;
        }
        grad[hb] += dy;

        // gradient w.r.t. each step's output of the current layer
        let top = spans.last().unwrap().hidden;
        let mut d_out = vec![vec![0.0; top]; steps];
        for (d, w) in d_out[steps - 1].iter_mut().zip(&self.params[hw..hb]) {
            *d = dy * w;
        }

        for (l, span) in spans.iter().enumerate().rev() {
            let hs = span.hidden;
            let width = span.width();
            let cache = &caches[l];
            let mut dh_next = vec![0.0; hs];
            let mut dc_next = vec![0.0; hs];
            let mut d_in = vec![vec![0.0; span.input]; steps];
            let mut dz = vec![0.0; 4 * hs];
            for t in (0..steps).rev() {
                let s = &cache[t];
                let (gi, gf, gg, go) = (&s.gates[..hs], &s.gates[hs..2 * hs], &s.gates[2 * hs..3 * hs], &s.gates[3 * hs..]);
                for j in 0..hs {
                    let dh = d_out[t][j] + dh_next[j];
                    let dc = dh * go[j] * (1.0 - s.tanh_c[j] * s.tanh_c[j]) + dc_next[j];
                    dz[j] = dc * gg[j] * gi[j] * (1.0 - gi[j]);
                    dz[hs + j] = dc * s.c_prev[j] * gf[j] * (1.0 - gf[j]);
                    dz[2 * hs + j] = dc * gi[j] * (1.0 - gg[j] * gg[j]);
                    dz[3 * hs + j] = dh * s.tanh_c[j] * go[j] * (1.0 - go[j]);
                    dc_next[j] = dc * gf[j];
                }
                dh_next.iter_mut().for_each(|v| *v = 0.0);
                let w = &self.params[span.weight..span.bias];
                for (r, &dzr) in dz.iter().enumerate() {
                    grad[span.bias + r] += dzr;
                    if dzr == 0.0 {
                        continue;
                    }
                    let row = &w[r * width..(r + 1) * width];
                    let grow = &mut grad[span.weight + r * width..span.weight + (r + 1) * width];
                    for k in 0..span.input {
                        grow[k] += dzr * s.input[k];
                        d_in[t][k] += dzr * row[k];
                    }
                    for k in 0..hs {
                        grow[span.input + k] += dzr * s.h_prev[k];
                        dh_next[k] += dzr * row[span.input + k];
                    }
                }
            }
            if l > 0 {
                if let Some(m) = &masks {
                    for (t, d) in d_in.iter_mut().enumerate() {
                        d.iter_mut().zip(&m[(l - 1) * steps + t]).for_each(|(v, k)| *v *= k);
                    }
                }
                d_out = d_in;
            }
        }
        Ok((y - target) * (y - target))
    }

    /// Predict Mbit/s from raw windows: `x_window` is `H x FEATURE_COUNT`
    /// row-major, `y_window` holds the H throughput values.
    pub fn predict(&self, x_window: &[f64], y_window: &[f64]) -> Result<f64> {
        let steps = y_window.len();
        let n_feat = self.input_dim.saturating_sub(1);
        if steps == 0 || x_window.len() != steps * n_feat || (self.history != 0 && steps != self.history) {
            return Err(Error::Dimension {
                expected: format!("{} steps of {} features", if self.history == 0 { steps } else { self.history }, n_feat),
                actual: format!("{} steps, {} feature values", steps, x_window.len()),
            });
        }
        let mut seq = Vec::with_capacity(steps * self.input_dim);
        for t in 0..steps {
            seq.extend_from_slice(&x_window[t * n_feat..(t + 1) * n_feat]);
            seq.push(y_window[t]);
        }
        if let Some(stats) = &self.norm_stats {
            for row in seq.chunks_mut(self.input_dim) {
                stats.normalize_row(row);
            }
        }
        let y = self.forward_normalized(&seq)?;
        Ok(match &self.norm_stats {
            Some(stats) => stats.throughput().denormalize(y),
            None => y,
        })
    }
}

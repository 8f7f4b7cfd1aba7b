//! Small feed-forward network: a 1-D convolution per vector input, a dense
//! encoder per scalar input, one hidden dense layer, and a linear output.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetSpec {
    /// Length of each vector input, in input order.
    pub vectors: Vec<usize>,
    pub scalars: usize,
    pub filters: usize,
    pub kernel: usize,
    pub scalar_units: usize,
    pub hidden: usize,
    pub outputs: usize,
}

impl NetSpec {
    pub fn input_len(&self) -> usize {
        self.vectors.iter().sum::<usize>() + self.scalars
    }

    fn positions(&self, len: usize) -> usize {
        len + 1 - self.kernel
    }

    pub fn concat_len(&self) -> usize {
        self.vectors.iter().map(|&n| self.positions(n) * self.filters).sum::<usize>() + self.scalars * self.scalar_units
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel == 0 || self.filters == 0 || self.hidden == 0 || self.outputs == 0 {
            return Err(Error::Invalid("network sizes must be positive".into()));
        }
        if self.scalars > 0 && self.scalar_units == 0 {
            return Err(Error::Invalid("scalar_units must be positive".into()));
        }
        if let Some(n) = self.vectors.iter().find(|&&n| n < self.kernel) {
            return Err(Error::Invalid(format!("vector input of length {n} is shorter than the kernel {}", self.kernel)));
        }
        Ok(())
    }

    fn layout(&self) -> Layout {
        let mut off = 0;
        let mut conv = Vec::new();
        for _ in &self.vectors {
            conv.push((off, off + self.filters * self.kernel));
            off += self.filters * (self.kernel + 1);
        }
        let scalar = off;
        off += self.scalars * self.scalar_units * 2;
        let hidden_w = off;
        off += self.hidden * self.concat_len();
        let hidden_b = off;
        off += self.hidden;
        let out_w = off;
        off += self.outputs * self.hidden;
        let out_b = off;
        off += self.outputs;
        Layout { conv, scalar, hidden_w, hidden_b, out_w, out_b, total: off }
    }
}

/// Parameter offsets. Conv entries are (weights, bias) per vector input;
/// scalar encoders store all weights then all biases.
#[derive(Debug, Clone)]
struct Layout {
    conv: Vec<(usize, usize)>,
    scalar: usize,
    hidden_w: usize,
    hidden_b: usize,
    out_w: usize,
    out_b: usize,
    total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Net {
    pub spec: NetSpec,
    pub params: Vec<f64>,
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Cache {
    input: Vec<f64>,
    /// Post-ReLU encoder outputs.
    concat: Vec<f64>,
    hidden: Vec<f64>,
    pub output: Vec<f64>,
}

impl Net {
    /// Uniform ±1/sqrt(fan_in) init; the output layer is scaled by
    /// `out_scale` so a fresh policy starts near uniform.
    pub fn new(spec: NetSpec, seed: u64, out_scale: f64) -> Result<Self> {
        spec.validate()?;
        let lay = spec.layout();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; lay.total];
        let mut fill = |range: std::ops::Range<usize>, fan_in: usize, scale: f64, rng: &mut ChaCha8Rng| {
            let a = scale / (fan_in as f64).sqrt();
            for p in &mut params[range] {
                *p = rng.gen_range(-a..a);
            }
        };
        for &(w, b) in &lay.conv {
            fill(w..b, spec.kernel, 1.0, &mut rng);
        }
        let sw = lay.scalar;
        fill(sw..sw + spec.scalars * spec.scalar_units, 1, 1.0, &mut rng);
        fill(lay.hidden_w..lay.hidden_b, spec.concat_len(), 1.0, &mut rng);
        fill(lay.out_w..lay.out_b, spec.hidden, out_scale, &mut rng);
        Ok(Net { spec, params })
    }

    pub fn zeros(spec: NetSpec) -> Result<Self> {
        spec.validate()?;
        let n = spec.layout().total;
        Ok(Net { spec, params: vec![0.0; n] })
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn forward(&self, input: &[f64]) -> Result<Cache> {
        let s = &self.spec;
        if input.len() != s.input_len() {
            return Err(Error::Dimension { expected: format!("{} inputs", s.input_len()), actual: input.len().to_string() });
        }
        let lay = s.layout();
        let p = &self.params;
        let mut concat = Vec::with_capacity(s.concat_len());
        let mut at = 0;
        for (v, &len) in s.vectors.iter().enumerate() {
            let (w, b) = lay.conv[v];
            let x = &input[at..at + len];
            for pos in 0..s.positions(len) {
                for f in 0..s.filters {
                    let wf = &p[w + f * s.kernel..w + (f + 1) * s.kernel];
                    let z = p[b + f] + wf.iter().zip(&x[pos..pos + s.kernel]).map(|(a, c)| a * c).sum::<f64>();
                    concat.push(z.max(0.0));
                }
            }
            at += len;
        }
        let sw = lay.scalar;
        let sb = sw + s.scalars * s.scalar_units;
        for k in 0..s.scalars {
            let x = input[at + k];
            for u in 0..s.scalar_units {
                let i = k * s.scalar_units + u;
                concat.push((p[sw + i] * x + p[sb + i]).max(0.0));
            }
        }
        let c = concat.len();
        let mut hidden = vec![0.0; s.hidden];
        for (j, h) in hidden.iter_mut().enumerate() {
            let row = &p[lay.hidden_w + j * c..lay.hidden_w + (j + 1) * c];
            let z = p[lay.hidden_b + j] + row.iter().zip(&concat).map(|(a, b)| a * b).sum::<f64>();
            *h = z.max(0.0);
        }
        let mut output = vec![0.0; s.outputs];
        for (o, out) in output.iter_mut().enumerate() {
            let row = &p[lay.out_w + o * s.hidden..lay.out_w + (o + 1) * s.hidden];
            *out = p[lay.out_b + o] + row.iter().zip(&hidden).map(|(a, b)| a * b).sum::<f64>();
        }
        Ok(Cache { input: input.to_vec(), concat, hidden, output })
    }

    /// Add d(loss)/d(params) to `grad` given d(loss)/d(output).
    pub fn backward(&self, cache: &Cache, d_out: &[f64], grad: &mut [f64]) {
        let s = &self.spec;
        let lay = s.layout();
        let p = &self.params;
        let c = cache.concat.len();
        let mut d_hidden = vec![0.0; s.hidden];
        for (o, &g) in d_out.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad[lay.out_b + o] += g;
            let w = lay.out_w + o * s.hidden;
            for j in 0..s.hidden {
                grad[w + j] += g * cache.hidden[j];
                d_hidden[j] += g * p[w + j];
            }
        }
        let mut d_concat = vec![0.0; c];
        for j in 0..s.hidden {
            if cache.hidden[j] <= 0.0 {
                continue;
            }
            let g = d_hidden[j];
            if g == 0.0 {
                continue;
            }
            grad[lay.hidden_b + j] += g;
            let w = lay.hidden_w + j * c;
            let gw = &mut grad[w..w + c];
            for (gi, a) in gw.iter_mut().zip(&cache.concat) {
                *gi += g * a;
            }
            for (dc, wi) in d_concat.iter_mut().zip(&p[w..w + c]) {
                *dc += g * wi;
            }
        }
        let mut at = 0;
        let mut ci = 0;
        for (v, &len) in s.vectors.iter().enumerate() {
            let (w, b) = lay.conv[v];
            let x = &cache.input[at..at + len];
            for pos in 0..s.positions(len) {
                for f in 0..s.filters {
                    if cache.concat[ci] > 0.0 {
                        let g = d_concat[ci];
                        grad[b + f] += g;
                        for k in 0..s.kernel {
                            grad[w + f * s.kernel + k] += g * x[pos + k];
                        }
                    }
                    ci += 1;
                }
            }
            at += len;
        }
        let sw = lay.scalar;
        let sb = sw + s.scalars * s.scalar_units;
        for k in 0..s.scalars {
            let x = cache.input[at + k];
            for u in 0..s.scalar_units {
                let i = k * s.scalar_units + u;
                if cache.concat[ci] > 0.0 {
                    grad[sw + i] += d_concat[ci] * x;
                    grad[sb + i] += d_concat[ci];
                }
                ci += 1;
            }
        }
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Shannon entropy in nats.
pub fn entropy(probs: &[f64]) -> f64 {
    -probs.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// d/d(logits) of `advantage · (−log p[action]) − beta · H(p)`.
pub fn actor_logit_grad(probs: &[f64], action: usize, advantage: f64, beta: f64) -> Vec<f64> {
    let h = entropy(probs);
    probs
        .iter()
        .enumerate()
        .map(|(j, &pj)| {
            let onehot = if j == action { 1.0 } else { 0.0 };
            let ent = if pj > 0.0 { beta * pj * (pj.ln() + h) } else { 0.0 };
            advantage * (pj - onehot) + ent
        })
        .collect()
}

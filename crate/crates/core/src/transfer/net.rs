//! Encoders, decoders, discriminator and condition classifier.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::nn::conv::{ConvCache, ConvTCache};
use crate::nn::*;

/// Four-stage strided encoder: stride 1, then three stride-2 stages.
#[derive(Clone, Debug)]
pub struct ConvEncoder {
    pub stages: [Conv2d; 4],
}

#[derive(Clone, Debug)]
pub struct EncoderTape {
    caches: Vec<ConvCache>,
    acts: Vec<Vec<f64>>,
}

impl ConvEncoder {
    pub fn new(name: &str, cin: usize, widths: [usize; 4], rng: &mut ChaCha8Rng) -> Self {
        let gain = 2f64.sqrt();
        ConvEncoder {
            stages: [
                Conv2d::new(&format!("{name}.c0"), cin, widths[0], 3, 1, gain, rng),
                Conv2d::new(&format!("{name}.c1"), widths[0], widths[1], 3, 2, gain, rng),
                Conv2d::new(&format!("{name}.c2"), widths[1], widths[2], 3, 2, gain, rng),
                Conv2d::new(&format!("{name}.c3"), widths[2], widths[3], 3, 2, 1.0, rng),
            ],
        }
    }

    /// Returns the final (linear) feature map.
    pub fn forward(&self, x: &[f64], h: usize, w: usize) -> (Vec<f64>, EncoderTape) {
        let mut caches = Vec::with_capacity(4);
        let mut acts = Vec::with_capacity(4);
        let (mut cur, mut ch, mut cw) = (x.to_vec(), h, w);
        for (i, conv) in self.stages.iter().enumerate() {
            let (mut y, cache) = conv.forward(&cur, ch, cw);
            (ch, cw) = conv.out_dims(ch, cw);
            if i < 3 {
                leaky_relu(&mut y);
            }
            caches.push(cache);
            acts.push(y.clone());
            cur = y;
        }
        (cur, EncoderTape { caches, acts })
    }

    /// Accumulates gradients; returns the input gradient when requested.
    pub fn backward(&mut self, tape: &EncoderTape, gz: &[f64], want_input: bool) -> Option<Vec<f64>> {
        let mut g = gz.to_vec();
        for i in (0..4).rev() {
            if i < 3 {
                leaky_relu_backward(&tape.acts[i], &mut g);
            }
            if i == 0 && !want_input {
                self.stages[0].backward_params(&tape.caches[0], &g);
                return None;
            }
            g = self.stages[i].backward(&tape.caches[i], &g);
        }
        Some(g)
    }

    pub fn params(&self) -> Vec<&Param> {
        self.stages.iter().flat_map(|s| s.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.stages.iter_mut().flat_map(|s| s.params_mut()).collect()
    }
}

/// Three transposed-convolution stages and a 3×3 output convolution with a
/// sigmoid, mirroring [`ConvEncoder`].
#[derive(Clone, Debug)]
pub struct ConvDecoder {
    pub ups: [ConvT2d; 3],
    pub out: Conv2d,
}

#[derive(Clone, Debug)]
pub struct DecoderTape {
    caches: Vec<ConvTCache>,
    acts: Vec<Vec<f64>>,
    out_cache: ConvCache,
    output: Vec<f64>,
    h: usize,
    w: usize,
}

impl ConvDecoder {
    pub fn new(name: &str, cin: usize, widths: [usize; 3], cout: usize, rng: &mut ChaCha8Rng) -> Self {
        let gain = 2f64.sqrt();
        ConvDecoder {
            ups: [
                ConvT2d::new(&format!("{name}.t0"), cin, widths[0], gain, rng),
                ConvT2d::new(&format!("{name}.t1"), widths[0], widths[1], gain, rng),
                ConvT2d::new(&format!("{name}.t2"), widths[1], widths[2], gain, rng),
            ],
            out: Conv2d::new(&format!("{name}.out"), widths[2], cout, 3, 1, 1.0, rng),
        }
    }

    /// `cin×h×w` latent → `cout×8h×8w` values in `(0,1)`.
    pub fn forward(&self, z: &[f64], h: usize, w: usize) -> (Vec<f64>, DecoderTape) {
        let mut caches = Vec::with_capacity(3);
        let mut acts = Vec::with_capacity(3);
        let (mut cur, mut ch, mut cw) = (z.to_vec(), h, w);
        for up in &self.ups {
            let (mut y, cache) = up.forward(&cur, ch, cw);
            (ch, cw) = (2 * ch, 2 * cw);
            leaky_relu(&mut y);
            caches.push(cache);
            acts.push(y.clone());
            cur = y;
        }
        let (mut y, out_cache) = self.out.forward(&cur, ch, cw);
        y.iter_mut().for_each(|v| *v = sigmoid(*v));
        let tape = DecoderTape {
            caches,
            acts,
            out_cache,
            output: y.clone(),
            h: ch,
            w: cw,
        };
        (y, tape)
    }

    /// Takes the gradient with respect to the sigmoid output.
    pub fn backward(&mut self, tape: &DecoderTape, gy: &[f64]) -> Vec<f64> {
        let mut g = gy.to_vec();
        sigmoid_backward(&tape.output, &mut g);
        g = self.out.backward(&tape.out_cache, &g);
        for i in (0..3).rev() {
            leaky_relu_backward(&tape.acts[i], &mut g);
            g = self.ups[i].backward(&tape.caches[i], &g);
        }
        g
    }

    pub fn output_dims(tape: &DecoderTape) -> (usize, usize) {
        (tape.h, tape.w)
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut v: Vec<&Param> = self.ups.iter().flat_map(|s| s.params()).collect();
        v.extend(self.out.params());
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v: Vec<&mut Param> = self.ups.iter_mut().flat_map(|s| s.params_mut()).collect();
        v.extend(self.out.params_mut());
        v
    }
}

/// Four stride-2 stages, azimuthal average pooling per row, linear head, sigmoid.
#[derive(Clone, Debug)]
pub struct Discriminator {
    pub stages: [Conv2d; 4],
    pub head: Linear,
    rows: usize,
}

#[derive(Clone, Debug)]
pub struct DiscTape {
    caches: Vec<ConvCache>,
    acts: Vec<Vec<f64>>,
    pooled: Vec<f64>,
    cols: usize,
    score: f64,
}

impl Discriminator {
    pub fn new(h: usize, widths: [usize; 4], rng: &mut ChaCha8Rng) -> Self {
        let gain = 2f64.sqrt();
        let rows = h / 16;
        Discriminator {
            stages: [
                Conv2d::new("disc.c0", 1, widths[0], 3, 2, gain, rng),
                Conv2d::new("disc.c1", widths[0], widths[1], 3, 2, gain, rng),
                Conv2d::new("disc.c2", widths[1], widths[2], 3, 2, gain, rng),
                Conv2d::new("disc.c3", widths[2], widths[3], 3, 2, gain, rng),
            ],
            head: Linear::new("disc.head", widths[3] * rows, 1, 1.0, rng),
            rows,
        }
    }

    /// Probability-like score in `(0,1)`.
    pub fn forward(&self, y: &[f64], h: usize, w: usize) -> (f64, DiscTape) {
        let mut caches = Vec::with_capacity(4);
        let mut acts = Vec::with_capacity(4);
        let (mut cur, mut ch, mut cw) = (y.to_vec(), h, w);
        for conv in &self.stages {
            let (mut o, cache) = conv.forward(&cur, ch, cw);
            (ch, cw) = conv.out_dims(ch, cw);
            leaky_relu(&mut o);
            caches.push(cache);
            acts.push(o.clone());
            cur = o;
        }
        debug_assert_eq!(ch, self.rows);
        let pooled: Vec<f64> = cur.chunks_exact(cw).map(|row| row.iter().sum::<f64>() / cw as f64).collect();
        let logit = self.head.forward(&pooled)[0];
        let score = sigmoid(logit);
        let tape = DiscTape {
            caches,
            acts,
            pooled,
            cols: cw,
            score,
        };
        (score, tape)
    }

    /// Takes `d loss / d score`; accumulates parameter gradients and returns
    /// the input gradient.
    pub fn backward(&mut self, tape: &DiscTape, g_score: f64) -> Vec<f64> {
        let g_logit = g_score * tape.score * (1.0 - tape.score);
        let g_pooled = self.head.backward(&tape.pooled, &[g_logit]);
        let mut g: Vec<f64> = g_pooled
            .iter()
            .flat_map(|&v| std::iter::repeat_n(v / tape.cols as f64, tape.cols))
            .collect();
        for i in (0..4).rev() {
            leaky_relu_backward(&tape.acts[i], &mut g);
            g = self.stages[i].backward(&tape.caches[i], &g);
        }
        g
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut v: Vec<&Param> = self.stages.iter().flat_map(|s| s.params()).collect();
        v.extend(self.head.params());
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v: Vec<&mut Param> = self.stages.iter_mut().flat_map(|s| s.params_mut()).collect();
        v.extend(self.head.params_mut());
        v
    }
}

/// Two-layer perceptron on the condition latent.
#[derive(Clone, Debug)]
pub struct Classifier {
    pub hidden: Linear,
    pub out: Linear,
}

impl Classifier {
    pub fn new(zc_dim: usize, n_classes: usize, rng: &mut ChaCha8Rng) -> Self {
        Classifier {
            hidden: Linear::new("cls.hidden", zc_dim, zc_dim, 2f64.sqrt(), rng),
            out: Linear::new("cls.out", zc_dim, n_classes, 1.0, rng),
        }
    }

    pub fn forward(&self, z: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut h = self.hidden.forward(z);
        leaky_relu(&mut h);
        (self.out.forward(&h), h)
    }

    pub fn backward(&mut self, z: &[f64], hidden: &[f64], g_logits: &[f64]) -> Vec<f64> {
        let mut g = self.out.backward(hidden, g_logits);
        leaky_relu_backward(hidden, &mut g);
        self.hidden.backward(z, &g)
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut v: Vec<&Param> = self.hidden.params().into();
        v.extend(self.out.params());
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v: Vec<&mut Param> = self.hidden.params_mut().into();
        v.extend(self.out.params_mut());
        v
    }
}

pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

//! Spherical convolution backbone.
//!
//! An S² layer lifts the band-limited input to SO(3) by correlating it with
//! kernels supported on a few points around the north pole. Two SO(3) layers
//! follow, with kernels supported on rotations near the identity. Products
//! happen in the harmonic domain; bias and leaky ReLU act on grid samples.
//! A max over γ returns an S² feature field.
//!
//! A kernel that is a weighted sum of point masses `Σ_p w_p δ_{Q_p}` turns
//! the layer into `out(R) = Σ_p w_p h(R·Q_p)`, whose Wigner coefficients are
//! `ô^l = Ĥ^l (Σ_p w_p conj(D^l(Q_p)))^H`.

use std::sync::{Arc, Mutex};

use xdloc_harmonics::legendre::{lambda_table, tri_index};
use xdloc_harmonics::wigner::{big_d_matrices, degree_offset};
use xdloc_harmonics::{harmonic_index, s2_plan, so3_plan, wigner_count, RotationZYZ, S2Plan, So3Plan};
use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::Checkpoint;
use crate::error::{data_err, Result};
use crate::nn::{gemm, gemm_scaled, leaky_relu, leaky_relu_backward, Param};

#[derive(Clone, Debug, PartialEq)]
pub struct BackboneConfig {
    /// Bandwidth of the input grid (`2B × 2B` samples).
    pub input_b: usize,
    /// Bandwidth of all SO(3) feature maps.
    pub internal_b: usize,
    pub channels: [usize; 3],
}

impl Default for BackboneConfig {
    fn default() -> Self {
        BackboneConfig {
            input_b: 32,
            internal_b: 16,
            channels: [8, 8, 16],
        }
    }
}

impl BackboneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.internal_b < 2 || self.internal_b > self.input_b || self.channels.contains(&0) {
            return data_err("invalid backbone configuration");
        }
        Ok(())
    }

    /// Side of the output field (`2B'`).
    pub fn side(&self) -> usize {
        2 * self.internal_b
    }
}

/// Points `(θ, φ)` carrying the S² kernel: the pole and two rings of six.
pub fn s2_support(internal_b: usize) -> Vec<(f64, f64)> {
    let mut pts = vec![(0.0, 0.0)];
    for ring in 1..=2 {
        let theta = ring as f64 * std::f64::consts::PI / internal_b as f64;
        for k in 0..6 {
            pts.push((theta, k as f64 * std::f64::consts::PI / 3.0));
        }
    }
    pts
}

/// Rotations carrying the SO(3) kernels: tilts of the pole in six
/// directions on two rings, each with three twists, plus the pure twists.
pub fn so3_support(internal_b: usize) -> Vec<RotationZYZ> {
    let twist = std::f64::consts::PI / 8.0;
    let mut rots = Vec::new();
    for t in [-twist, 0.0, twist] {
        rots.push(RotationZYZ::new(0.0, 0.0, t));
    }
    for ring in 1..=2 {
        let beta = ring as f64 * std::f64::consts::PI / internal_b as f64;
        for k in 0..6 {
            let alpha = k as f64 * std::f64::consts::PI / 3.0;
            for t in [-twist, 0.0, twist] {
                rots.push(RotationZYZ::new(alpha, beta, -alpha + t));
            }
        }
    }
    rots
}

/// Complex matrix split into real and imaginary row-major parts.
#[derive(Clone, Debug, Default)]
struct Split {
    re: Vec<f64>,
    im: Vec<f64>,
}

impl Split {
    fn zeros(n: usize) -> Self {
        Split {
            re: vec![0.0; n],
            im: vec![0.0; n],
        }
    }
}

/// `C = A·B^H` with `A: m×k`, `B: n×k`.
fn mul_bh(m: usize, k: usize, n: usize, a: &Split, b: &Split, c: &mut Split) {
    gemm(m, k, n, &a.re, false, &b.re, true, 0.0, &mut c.re);
    gemm(m, k, n, &a.im, false, &b.im, true, 1.0, &mut c.re);
    gemm(m, k, n, &a.im, false, &b.re, true, 0.0, &mut c.im);
    gemm_scaled(m, k, n, -1.0, &a.re, false, &b.im, true, 1.0, &mut c.im);
}

/// `C = G·B` with `G: m×k`, `B: k×n`.
fn mul(m: usize, k: usize, n: usize, g: &Split, b: &Split, c: &mut Split) {
    gemm(m, k, n, &g.re, false, &b.re, false, 0.0, &mut c.re);
    gemm_scaled(m, k, n, -1.0, &g.im, false, &b.im, false, 1.0, &mut c.re);
    gemm(m, k, n, &g.re, false, &b.im, false, 0.0, &mut c.im);
    gemm(m, k, n, &g.im, false, &b.re, false, 1.0, &mut c.im);
}

/// `C += G^H·A` with `G: k×m`, `A: k×n`.
fn acc_hmul(m: usize, k: usize, n: usize, g: &Split, a: &Split, c: &mut Split) {
    gemm(m, k, n, &g.re, true, &a.re, false, 1.0, &mut c.re);
    gemm(m, k, n, &g.im, true, &a.im, false, 1.0, &mut c.re);
    gemm(m, k, n, &g.re, true, &a.im, false, 1.0, &mut c.im);
    gemm_scaled(m, k, n, -1.0, &g.im, true, &a.re, false, 1.0, &mut c.im);
}

/// Kernel spectra derived from the current weights.
#[derive(Debug)]
struct Kernels {
    /// `ĥ_o` for the S² layer, `[C1][B'²]`.
    s2: Split,
    /// Per SO(3) layer and degree: `B_l[(o,n)][(i,k)] = K_oi[l][n][k]`.
    so3: [Vec<Split>; 2],
}

/// Values kept from a forward pass for backpropagation.
#[derive(Clone, Debug)]
pub struct BackboneTape {
    f_hat: Vec<Complex64>,
    acts: [Vec<f64>; 3],
    a_mats: [Vec<Split>; 2],
    argmax: Vec<u32>,
    /// Column roll the caller removed from the input before the forward pass.
    pub(crate) phase: usize,
}

#[derive(Debug)]
pub struct Backbone {
    pub config: BackboneConfig,
    pub s2_weight: Param,
    pub s2_bias: Param,
    pub so3_weight: [Param; 2],
    pub so3_bias: [Param; 2],
    s2_basis: Split,
    so3_basis: Split,
    s2p: Arc<S2Plan>,
    so3p: Arc<So3Plan>,
    cache: Mutex<Option<(u64, Arc<Kernels>)>>,
    s2_grad: Option<Split>,
    so3_grad: [Vec<Split>; 2],
}

impl Clone for Backbone {
    fn clone(&self) -> Self {
        Backbone {
            config: self.config.clone(),
            s2_weight: self.s2_weight.clone(),
            s2_bias: self.s2_bias.clone(),
            so3_weight: self.so3_weight.clone(),
            so3_bias: self.so3_bias.clone(),
            s2_basis: self.s2_basis.clone(),
            so3_basis: self.so3_basis.clone(),
            s2p: self.s2p.clone(),
            so3p: self.so3p.clone(),
            cache: Mutex::new(None),
            s2_grad: self.s2_grad.clone(),
            so3_grad: self.so3_grad.clone(),
        }
    }
}

impl Backbone {
    pub fn new(config: BackboneConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let b = config.internal_b;
        let [c1, c2, c3] = config.channels;
        let s2_pts = s2_support(b);
        let so3_pts = so3_support(b);
        let (p1, p2) = (s2_pts.len(), so3_pts.len());

        let nh = b * b;
        let mut s2_basis = Split::zeros(p1 * nh);
        let mut table = vec![0.0; b * (b + 1) / 2];
        for (p, &(theta, phi)) in s2_pts.iter().enumerate() {
            lambda_table(b, theta, &mut table);
            for l in 0..b {
                let li = l as i64;
                for m in -li..=li {
                    let mut lam = table[tri_index(l, m.unsigned_abs() as usize)];
                    if m < 0 && m % 2 != 0 {
                        lam = -lam;
                    }
                    // conj(Y_l^m) = λ e^{-imφ}
                    let y = Complex64::from_polar(lam, -(m as f64) * phi);
                    let idx = p * nh + harmonic_index(l, m);
                    s2_basis.re[idx] = y.re;
                    s2_basis.im[idx] = y.im;
                }
            }
        }
        let nw = wigner_count(b);
        let mut so3_basis = Split::zeros(p2 * nw);
        for (p, rot) in so3_pts.iter().enumerate() {
            for (i, d) in big_d_matrices(b, rot).iter().enumerate() {
                so3_basis.re[p * nw + i] = d.re;
                so3_basis.im[p * nw + i] = -d.im;
            }
        }

        let gain = 2f64.sqrt();
        let s2_weight = Param::normal("bb.s2.w", &[c1, p1], gain / (p1 as f64).sqrt(), rng);
        let w2 = Param::normal("bb.so3a.w", &[c2, c1, p2], gain / ((c1 * p2) as f64).sqrt(), rng);
        let w3 = Param::normal("bb.so3b.w", &[c3, c2, p2], gain / ((c2 * p2) as f64).sqrt(), rng);
        Ok(Backbone {
            s2p: s2_plan(config.input_b, b)?,
            so3p: so3_plan(b, b)?,
            s2_weight,
            s2_bias: Param::zeros("bb.s2.b", &[c1]),
            so3_weight: [w2, w3],
            so3_bias: [Param::zeros("bb.so3a.b", &[c2]), Param::zeros("bb.so3b.b", &[c3])],
            s2_basis,
            so3_basis,
            cache: Mutex::new(None),
            s2_grad: None,
            so3_grad: [Vec::new(), Vec::new()],
            config,
        })
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![
            &self.s2_weight,
            &self.s2_bias,
            &self.so3_weight[0],
            &self.so3_bias[0],
            &self.so3_weight[1],
            &self.so3_bias[1],
        ]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let [w2, w3] = &mut self.so3_weight;
        let [b2, b3] = &mut self.so3_bias;
        vec![&mut self.s2_weight, &mut self.s2_bias, w2, b2, w3, b3]
    }

    fn layer_channels(&self, layer: usize) -> (usize, usize) {
        let c = self.config.channels;
        (c[layer], c[layer + 1])
    }

    fn kernels(&self) -> Arc<Kernels> {
        let key = Checkpoint::checksum(&[&self.s2_weight, &self.so3_weight[0], &self.so3_weight[1]]);
        let mut guard = self.cache.lock().expect("kernel cache poisoned");
        if let Some((k, kern)) = guard.as_ref() {
            if *k == key {
                return kern.clone();
            }
        }
        let kern = Arc::new(self.build_kernels());
        *guard = Some((key, kern.clone()));
        kern
    }

    fn build_kernels(&self) -> Kernels {
        let b = self.config.internal_b;
        let nh = b * b;
        let c1 = self.config.channels[0];
        let p1 = self.s2_weight.shape[1];
        let mut s2 = Split::zeros(c1 * nh);
        gemm(c1, p1, nh, &self.s2_weight.value, false, &self.s2_basis.re, false, 0.0, &mut s2.re);
        gemm(c1, p1, nh, &self.s2_weight.value, false, &self.s2_basis.im, false, 0.0, &mut s2.im);

        let nw = wigner_count(b);
        let so3 = [0, 1].map(|layer| {
            let (cin, cout) = self.layer_channels(layer);
            let w = &self.so3_weight[layer];
            let p2 = w.shape[2];
            let mut flat = Split::zeros(cout * cin * nw);
            gemm(cout * cin, p2, nw, &w.value, false, &self.so3_basis.re, false, 0.0, &mut flat.re);
            gemm(cout * cin, p2, nw, &w.value, false, &self.so3_basis.im, false, 0.0, &mut flat.im);
            (0..b)
                .map(|l| {
                    let d = 2 * l + 1;
                    let off = degree_offset(l);
                    let mut m = Split::zeros(cout * d * cin * d);
                    for o in 0..cout {
                        for i in 0..cin {
                            let src = (o * cin + i) * nw + off;
                            for n in 0..d {
                                for k in 0..d {
                                    let dst = (o * d + n) * (cin * d) + i * d + k;
                                    m.re[dst] = flat.re[src + n * d + k];
                                    m.im[dst] = flat.im[src + n * d + k];
                                }
                            }
                        }
                    }
                    m
                })
                .collect()
        });
        Kernels { s2, so3 }
    }

    /// Number of input samples expected.
    pub fn input_len(&self) -> usize {
        4 * self.config.input_b * self.config.input_b
    }

    /// Pooled field `[C3][2B'·2B']` (channel-major, rows β, columns α).
    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, BackboneTape)> {
        if input.len() != self.input_len() {
            return data_err(format!("backbone expects {} samples, got {}", self.input_len(), input.len()));
        }
        let kern = self.kernels();
        let b = self.config.internal_b;
        let nh = b * b;
        let nw = wigner_count(b);
        let grid = self.so3p.grid_len();
        let [c1, _, c3] = self.config.channels;

        let mut f_hat = vec![Complex64::new(0.0, 0.0); nh];
        self.s2p.forward(input, &mut f_hat);

        let mut act1 = vec![0.0; c1 * grid];
        let mut coeff = vec![Complex64::new(0.0, 0.0); nw];
        for o in 0..c1 {
            for l in 0..b {
                let li = l as i64;
                for m in -li..=li {
                    let fm = f_hat[harmonic_index(l, m)].conj();
                    for n in -li..=li {
                        let hi = o * nh + harmonic_index(l, n);
                        let h = Complex64::new(kern.s2.re[hi], kern.s2.im[hi]);
                        coeff[degree_offset(l) + ((m + li) as usize) * (2 * l + 1) + (n + li) as usize] = fm * h;
                    }
                }
            }
            let out = &mut act1[o * grid..(o + 1) * grid];
            self.so3p.inverse(&coeff, out);
            let bias = self.s2_bias.value[o];
            out.iter_mut().for_each(|v| *v += bias);
        }
        leaky_relu(&mut act1);

        let (act2, a2) = self.so3_layer(0, &kern, &act1);
        let (act3, a3) = self.so3_layer(1, &kern, &act2);

        let side = 2 * b;
        let cells = side * side;
        let mut pooled = vec![0.0; c3 * cells];
        let mut argmax = vec![0u32; c3 * cells];
        for (idx, run) in act3.chunks_exact(side).enumerate() {
            let mut best = (f64::NEG_INFINITY, 0u32);
            for (g, &v) in run.iter().enumerate() {
                if v > best.0 {
                    best = (v, g as u32);
                }
            }
            pooled[idx] = best.0;
            argmax[idx] = best.1;
        }
        let tape = BackboneTape {
            f_hat,
            acts: [act1, act2, act3],
            a_mats: [a2, a3],
            argmax,
            phase: 0,
        };
        Ok((pooled, tape))
    }

    fn so3_layer(&self, layer: usize, kern: &Kernels, input: &[f64]) -> (Vec<f64>, Vec<Split>) {
        let b = self.config.internal_b;
        let nw = wigner_count(b);
        let grid = self.so3p.grid_len();
        let (cin, cout) = self.layer_channels(layer);
        let mut h = vec![Complex64::new(0.0, 0.0); cin * nw];
        for i in 0..cin {
            self.so3p.forward(&input[i * grid..(i + 1) * grid], &mut h[i * nw..(i + 1) * nw]);
        }
        let mut out_coeff = vec![Complex64::new(0.0, 0.0); cout * nw];
        let mut a_mats = Vec::with_capacity(b);
        for l in 0..b {
            let d = 2 * l + 1;
            let off = degree_offset(l);
            let mut a = Split::zeros(d * cin * d);
            for i in 0..cin {
                for m in 0..d {
                    for k in 0..d {
                        let v = h[i * nw + off + m * d + k];
                        a.re[m * cin * d + i * d + k] = v.re;
                        a.im[m * cin * d + i * d + k] = v.im;
                    }
                }
            }
            let mut o_mat = Split::zeros(d * cout * d);
            mul_bh(d, cin * d, cout * d, &a, &kern.so3[layer][l], &mut o_mat);
            for o in 0..cout {
                for m in 0..d {
                    for n in 0..d {
                        let s = m * cout * d + o * d + n;
                        out_coeff[o * nw + off + m * d + n] = Complex64::new(o_mat.re[s], o_mat.im[s]);
                    }
                }
            }
            a_mats.push(a);
        }
        let mut act = vec![0.0; cout * grid];
        for o in 0..cout {
            let out = &mut act[o * grid..(o + 1) * grid];
            self.so3p.inverse(&out_coeff[o * nw..(o + 1) * nw], out);
            let bias = self.so3_bias[layer].value[o];
            out.iter_mut().for_each(|v| *v += bias);
        }
        leaky_relu(&mut act);
        (act, a_mats)
    }

    /// Accumulates gradients for `g_pooled` (same layout as the forward
    /// output) and returns the gradient with respect to the input samples.
    /// Weight gradients are staged until [`Backbone::flush_grads`].
    pub fn backward(&mut self, tape: &BackboneTape, g_pooled: &[f64]) -> Vec<f64> {
        let kern = self.kernels();
        let b = self.config.internal_b;
        let side = 2 * b;
        let grid = self.so3p.grid_len();
        let [c1, _, c3] = self.config.channels;
        let mut g3 = vec![0.0; c3 * grid];
        for (idx, &g) in g_pooled.iter().enumerate() {
            g3[idx * side + tape.argmax[idx] as usize] = g;
        }
        let g2 = self.so3_layer_backward(1, &kern, tape, g3);
        let mut g1 = self.so3_layer_backward(0, &kern, tape, g2);

        leaky_relu_backward(&tape.acts[0], &mut g1);
        let nh = b * b;
        let nw = wigner_count(b);
        let acc = self.s2_grad.get_or_insert_with(|| Split::zeros(c1 * nh));
        let mut gc = vec![Complex64::new(0.0, 0.0); nw];
        let mut g_f = vec![Complex64::new(0.0, 0.0); nh];
        for o in 0..c1 {
            let go = &g1[o * grid..(o + 1) * grid];
            self.s2_bias.grad[o] += go.iter().sum::<f64>();
            self.so3p.inverse_adjoint(go, &mut gc);
            for l in 0..b {
                let li = l as i64;
                let d = 2 * l + 1;
                for n in -li..=li {
                    let hi = o * nh + harmonic_index(l, n);
                    let h = Complex64::new(kern.s2.re[hi], kern.s2.im[hi]);
                    let mut s = Complex64::new(0.0, 0.0);
                    for m in -li..=li {
                        let g = gc[degree_offset(l) + ((m + li) as usize) * d + (n + li) as usize];
                        s += tape.f_hat[harmonic_index(l, m)] * g;
                        // the input enters conjugated
                        g_f[harmonic_index(l, m)] += g.conj() * h;
                    }
                    acc.re[hi] += s.re;
                    acc.im[hi] += s.im;
                }
            }
        }
        let mut g_in = vec![0.0; self.input_len()];
        self.s2p.forward_adjoint(&g_f, &mut g_in);
        g_in
    }

    fn so3_layer_backward(&mut self, layer: usize, kern: &Kernels, tape: &BackboneTape, mut g_out: Vec<f64>) -> Vec<f64> {
        let b = self.config.internal_b;
        let nw = wigner_count(b);
        let grid = self.so3p.grid_len();
        let (cin, cout) = self.layer_channels(layer);
        leaky_relu_backward(&tape.acts[layer + 1], &mut g_out);
        let mut gc = vec![Complex64::new(0.0, 0.0); cout * nw];
        for o in 0..cout {
            let go = &g_out[o * grid..(o + 1) * grid];
            self.so3_bias[layer].grad[o] += go.iter().sum::<f64>();
            self.so3p.inverse_adjoint(go, &mut gc[o * nw..(o + 1) * nw]);
        }
        if self.so3_grad[layer].is_empty() {
            self.so3_grad[layer] = (0..b).map(|l| Split::zeros((2 * l + 1).pow(2) * cin * cout)).collect();
        }
        let mut gh = vec![Complex64::new(0.0, 0.0); cin * nw];
        for l in 0..b {
            let d = 2 * l + 1;
            let off = degree_offset(l);
            let mut g = Split::zeros(d * cout * d);
            for o in 0..cout {
                for m in 0..d {
                    for n in 0..d {
                        let v = gc[o * nw + off + m * d + n];
                        g.re[m * cout * d + o * d + n] = v.re;
                        g.im[m * cout * d + o * d + n] = v.im;
                    }
                }
            }
            let mut ga = Split::zeros(d * cin * d);
            mul(d, cout * d, cin * d, &g, &kern.so3[layer][l], &mut ga);
            acc_hmul(cout * d, d, cin * d, &g, &tape.a_mats[layer][l], &mut self.so3_grad[layer][l]);
            for i in 0..cin {
                for m in 0..d {
                    for k in 0..d {
                        let s = m * cin * d + i * d + k;
                        gh[i * nw + off + m * d + k] = Complex64::new(ga.re[s], ga.im[s]);
                    }
                }
            }
        }
        let mut g_in = vec![0.0; cin * grid];
        for i in 0..cin {
            self.so3p.forward_adjoint(&gh[i * nw..(i + 1) * nw], &mut g_in[i * grid..(i + 1) * grid]);
        }
        g_in
    }

    /// Converts staged kernel-spectrum gradients into weight gradients.
    pub fn flush_grads(&mut self) {
        let b = self.config.internal_b;
        if let Some(acc) = self.s2_grad.take() {
            let (c1, p1) = (self.s2_weight.shape[0], self.s2_weight.shape[1]);
            let nh = b * b;
            // g_w = Re Σ g_ĥ·conj(basis)
            gemm(c1, nh, p1, &acc.re, false, &self.s2_basis.re, true, 1.0, &mut self.s2_weight.grad);
            gemm(c1, nh, p1, &acc.im, false, &self.s2_basis.im, true, 1.0, &mut self.s2_weight.grad);
        }
        let nw = wigner_count(b);
        for layer in 0..2 {
            if self.so3_grad[layer].is_empty() {
                continue;
            }
            let (cin, cout) = self.layer_channels(layer);
            let mut flat = Split::zeros(cout * cin * nw);
            for (l, g) in self.so3_grad[layer].iter().enumerate() {
                let d = 2 * l + 1;
                let off = degree_offset(l);
                for o in 0..cout {
                    for i in 0..cin {
                        for n in 0..d {
                            for k in 0..d {
                                let s = (o * d + n) * (cin * d) + i * d + k;
                                let dst = (o * cin + i) * nw + off + n * d + k;
                                flat.re[dst] = g.re[s];
                                flat.im[dst] = g.im[s];
                            }
                        }
                    }
                }
            }
            let w = &mut self.so3_weight[layer];
            let p2 = w.shape[2];
            gemm(cout * cin, nw, p2, &flat.re, false, &self.so3_basis.re, true, 1.0, &mut w.grad);
            gemm(cout * cin, nw, p2, &flat.im, false, &self.so3_basis.im, true, 1.0, &mut w.grad);
            self.so3_grad[layer].clear();
        }
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(|p| p.zero_grad());
        self.s2_grad = None;
        self.so3_grad = [Vec::new(), Vec::new()];
    }
}

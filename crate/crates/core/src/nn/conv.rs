//! 2-D convolution and transposed convolution via im2col.

use rand::Rng;

use super::{gemm, Param};

/// Sampling geometry of a strided convolution with circular width padding.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvGeom {
    pub channels: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub h_in: usize,
    pub w_in: usize,
    pub h_out: usize,
    pub w_out: usize,
}

impl ConvGeom {
    pub fn new(channels: usize, k: usize, stride: usize, pad: usize, h_in: usize, w_in: usize) -> Self {
        let h_out = (h_in + 2 * pad - k) / stride + 1;
        let w_out = (w_in + 2 * pad - k) / stride + 1;
        ConvGeom {
            channels,
            k,
            stride,
            pad,
            h_in,
            w_in,
            h_out,
            w_out,
        }
    }

    fn rows(&self) -> usize {
        self.channels * self.k * self.k
    }

    fn cols(&self) -> usize {
        self.h_out * self.w_out
    }

    /// Column index of each (kernel column, output column) pair.
    fn wrap(&self, kj: usize, ow: usize) -> usize {
        (ow * self.stride + kj + self.w_in - self.pad) % self.w_in
    }

    pub fn im2col(&self, x: &[f64]) -> Vec<f64> {
        let (k, hw) = (self.k, self.h_in * self.w_in);
        let mut cols = vec![0.0; self.rows() * self.cols()];
        for c in 0..self.channels {
            let plane = &x[c * hw..(c + 1) * hw];
            for ki in 0..k {
                for kj in 0..k {
                    let row = (c * k + ki) * k + kj;
                    let dst = &mut cols[row * self.cols()..(row + 1) * self.cols()];
                    for oh in 0..self.h_out {
                        let ih = (oh * self.stride + ki) as isize - self.pad as isize;
                        if ih < 0 || ih >= self.h_in as isize {
                            continue;
                        }
                        let src = &plane[ih as usize * self.w_in..(ih as usize + 1) * self.w_in];
                        for ow in 0..self.w_out {
                            dst[oh * self.w_out + ow] = src[self.wrap(kj, ow)];
                        }
                    }
                }
            }
        }
        cols
    }

    /// Adjoint of [`Self::im2col`].
    pub fn col2im(&self, cols: &[f64]) -> Vec<f64> {
        let (k, hw) = (self.k, self.h_in * self.w_in);
        let mut x = vec![0.0; self.channels * hw];
        for c in 0..self.channels {
            for ki in 0..k {
                for kj in 0..k {
                    let row = (c * k + ki) * k + kj;
                    let src = &cols[row * self.cols()..(row + 1) * self.cols()];
                    for oh in 0..self.h_out {
                        let ih = (oh * self.stride + ki) as isize - self.pad as isize;
                        if ih < 0 || ih >= self.h_in as isize {
                            continue;
                        }
                        let base = c * hw + ih as usize * self.w_in;
                        for ow in 0..self.w_out {
                            x[base + self.wrap(kj, ow)] += src[oh * self.w_out + ow];
                        }
                    }
                }
            }
        }
        x
    }
}

/// Convolution with `k×k` kernels, `pad = (k-1)/2`.
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub w: Param,
    pub b: Param,
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
}

#[derive(Clone, Debug)]
pub struct ConvCache {
    geom: ConvGeom,
    cols: Vec<f64>,
}

impl Conv2d {
    pub fn new(name: &str, cin: usize, cout: usize, k: usize, stride: usize, gain: f64, rng: &mut impl Rng) -> Self {
        let fan_in = (cin * k * k) as f64;
        Conv2d {
            w: Param::normal(format!("{name}.w"), &[cout, cin, k, k], gain / fan_in.sqrt(), rng),
            b: Param::zeros(format!("{name}.b"), &[cout]),
            cin,
            cout,
            k,
            stride,
        }
    }

    pub fn geom(&self, h: usize, w: usize) -> ConvGeom {
        ConvGeom::new(self.cin, self.k, self.stride, (self.k - 1) / 2, h, w)
    }

    /// Returns the `cout×h_out×w_out` output and the cache for backward.
    pub fn forward(&self, x: &[f64], h: usize, w: usize) -> (Vec<f64>, ConvCache) {
        let geom = self.geom(h, w);
        assert_eq!(x.len(), self.cin * h * w);
        let cols = geom.im2col(x);
        let n = geom.h_out * geom.w_out;
        let mut y = vec![0.0; self.cout * n];
        for (o, chunk) in y.chunks_exact_mut(n).enumerate() {
            chunk.iter_mut().for_each(|v| *v = self.b.value[o]);
        }
        gemm(self.cout, geom.rows(), n, &self.w.value, false, &cols, false, 1.0, &mut y);
        (y, ConvCache { geom, cols })
    }

    pub fn out_dims(&self, h: usize, w: usize) -> (usize, usize) {
        let g = self.geom(h, w);
        (g.h_out, g.w_out)
    }

    /// Accumulates parameter gradients; returns the input gradient.
    pub fn backward(&mut self, cache: &ConvCache, gy: &[f64]) -> Vec<f64> {
        let g = &cache.geom;
        let n = g.h_out * g.w_out;
        for (o, chunk) in gy.chunks_exact(n).enumerate() {
            self.b.grad[o] += chunk.iter().sum::<f64>();
        }
        gemm(self.cout, n, g.rows(), gy, false, &cache.cols, true, 1.0, &mut self.w.grad);
        let mut gcols = vec![0.0; g.rows() * n];
        gemm(g.rows(), self.cout, n, &self.w.value, true, gy, false, 0.0, &mut gcols);
        g.col2im(&gcols)
    }

    /// Backward without the input gradient (first layer).
    pub fn backward_params(&mut self, cache: &ConvCache, gy: &[f64]) {
        let g = &cache.geom;
        let n = g.h_out * g.w_out;
        for (o, chunk) in gy.chunks_exact(n).enumerate() {
            self.b.grad[o] += chunk.iter().sum::<f64>();
        }
        gemm(self.cout, n, g.rows(), gy, false, &cache.cols, true, 1.0, &mut self.w.grad);
    }

    pub fn params(&self) -> [&Param; 2] {
        [&self.w, &self.b]
    }

    pub fn params_mut(&mut self) -> [&mut Param; 2] {
        [&mut self.w, &mut self.b]
    }
}

/// Transposed convolution, kernel 4, stride 2, pad 1: doubles both sides.
#[derive(Clone, Debug)]
pub struct ConvT2d {
    pub w: Param,
    pub b: Param,
    pub cin: usize,
    pub cout: usize,
}

#[derive(Clone, Debug)]
pub struct ConvTCache {
    geom: ConvGeom,
    x: Vec<f64>,
}

impl ConvT2d {
    pub fn new(name: &str, cin: usize, cout: usize, gain: f64, rng: &mut impl Rng) -> Self {
        // each output pixel receives 4 of the 16 taps from every input channel
        let fan_in = (cin * 4) as f64;
        ConvT2d {
            w: Param::normal(format!("{name}.w"), &[cin, cout, 4, 4], gain / fan_in.sqrt(), rng),
            b: Param::zeros(format!("{name}.b"), &[cout]),
            cin,
            cout,
        }
    }

    fn geom(&self, h: usize, w: usize) -> ConvGeom {
        ConvGeom::new(self.cout, 4, 2, 1, 2 * h, 2 * w)
    }

    /// `cin×h×w` → `cout×2h×2w`.
    pub fn forward(&self, x: &[f64], h: usize, w: usize) -> (Vec<f64>, ConvTCache) {
        assert_eq!(x.len(), self.cin * h * w);
        let geom = self.geom(h, w);
        let n = h * w;
        let mut cols = vec![0.0; geom.rows() * n];
        gemm(geom.rows(), self.cin, n, &self.w.value, true, x, false, 0.0, &mut cols);
        let mut y = geom.col2im(&cols);
        let plane = 4 * n;
        for (o, chunk) in y.chunks_exact_mut(plane).enumerate() {
            chunk.iter_mut().for_each(|v| *v += self.b.value[o]);
        }
        (y, ConvTCache { geom, x: x.to_vec() })
    }

    pub fn backward(&mut self, cache: &ConvTCache, gy: &[f64]) -> Vec<f64> {
        let g = &cache.geom;
        let n = g.h_out * g.w_out;
        for (o, chunk) in gy.chunks_exact(4 * n).enumerate() {
            self.b.grad[o] += chunk.iter().sum::<f64>();
        }
        let gcols = g.im2col(gy);
        gemm(self.cin, n, g.rows(), &cache.x, false, &gcols, true, 1.0, &mut self.w.grad);
        let mut gx = vec![0.0; self.cin * n];
        gemm(self.cin, g.rows(), n, &self.w.value, false, &gcols, false, 0.0, &mut gx);
        gx
    }

    pub fn params(&self) -> [&Param; 2] {
        [&self.w, &self.b]
    }

    pub fn params_mut(&mut self) -> [&mut Param; 2] {
        [&mut self.w, &mut self.b]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    fn rand_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn col2im_is_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (k, s) in [(3, 1), (3, 2), (4, 2)] {
            let g = ConvGeom::new(2, k, s, (k - 1) / 2, 8, 8);
            let x = rand_vec(2 * 64, &mut rng);
            let c = rand_vec(g.rows() * g.cols(), &mut rng);
            assert!((dot(&g.im2col(&x), &c) - dot(&x, &g.col2im(&c))).abs() < 1e-10);
        }
    }

    #[test]
    fn circular_width_is_shift_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let conv = Conv2d::new("c", 2, 3, 3, 2, 1.0, &mut rng);
        let x = rand_vec(2 * 8 * 16, &mut rng);
        let (y, _) = conv.forward(&x, 8, 16);
        let (ys, _) = conv.forward(&crate::nn::roll_width(&x, 16, 2), 8, 16);
        let expect = crate::nn::roll_width(&y, 8, 1);
        assert!(ys.iter().zip(&expect).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn transposed_doubles_size_and_is_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = ConvT2d::new("t", 3, 2, 1.0, &mut rng);
        let x = rand_vec(3 * 4 * 4, &mut rng);
        let (y, cache) = t.forward(&x, 4, 4);
        assert_eq!(y.len(), 2 * 8 * 8);
        // with zero bias the map is linear; its input gradient is the adjoint
        let gy = rand_vec(y.len(), &mut rng);
        let mut tt = t.clone();
        let gx = tt.backward(&cache, &gy);
        assert!((dot(&y, &gy) - dot(&x, &gx)).abs() < 1e-10);
    }
}

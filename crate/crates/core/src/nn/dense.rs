//! Fully connected layer.

use rand::Rng;

use super::{gemm, Param};

#[derive(Clone, Debug)]
pub struct Linear {
    pub w: Param,
    pub b: Param,
    pub inputs: usize,
    pub outputs: usize,
}

impl Linear {
    pub fn new(name: &str, inputs: usize, outputs: usize, gain: f64, rng: &mut impl Rng) -> Self {
        Linear {
            w: Param::normal(format!("{name}.w"), &[outputs, inputs], gain / (inputs as f64).sqrt(), rng),
            b: Param::zeros(format!("{name}.b"), &[outputs]),
            inputs,
            outputs,
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.inputs);
        let mut y = self.b.value.clone();
        gemm(self.outputs, self.inputs, 1, &self.w.value, false, x, false, 1.0, &mut y);
        y
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, x: &[f64], gy: &[f64]) -> Vec<f64> {
        for (o, &g) in gy.iter().enumerate() {
            self.b.grad[o] += g;
            if g != 0.0 {
                let row = &mut self.w.grad[o * self.inputs..(o + 1) * self.inputs];
                row.iter_mut().zip(x).for_each(|(gw, &xv)| *gw += g * xv);
            }
        }
        let mut gx = vec![0.0; self.inputs];
        gemm(1, self.outputs, self.inputs, gy, false, &self.w.value, false, 0.0, &mut gx);
        gx
    }

    pub fn params(&self) -> [&Param; 2] {
        [&self.w, &self.b]
    }

    pub fn params_mut(&mut self) -> [&mut Param; 2] {
        [&mut self.w, &mut self.b]
    }
}

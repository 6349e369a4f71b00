//! Hardest-pair place losses within a domain and across domains.

use crate::error::{data_err, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MarginConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
    pub lambda5: f64,
    pub d_pos: f64,
    pub d_neg: f64,
}

impl Default for MarginConfig {
    fn default() -> Self {
        MarginConfig {
            lambda1: 0.5,
            lambda2: 0.5,
            lambda3: 1.0,
            lambda4: 0.5,
            lambda5: 1.0,
            d_pos: 5.0,
            d_neg: 20.0,
        }
    }
}

impl MarginConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lambda1 >= 0.0
            && 0.0 < self.lambda2
            && self.lambda2 <= self.lambda3
            && 0.0 < self.lambda4
            && self.lambda4 <= self.lambda5
            && 0.0 < self.d_pos
            && self.d_pos < self.d_neg;
        if !ok {
            return Err(crate::Error::Config("margins must satisfy 0<λ2≤λ3, 0<λ4≤λ5, 0<d_pos<d_neg".into()));
        }
        Ok(())
    }
}

/// Descriptors of one training tuple. For the cross-domain loss the anchor and
/// rotations come from one domain, positives and negatives from the other.
#[derive(Clone, Copy, Debug)]
pub struct Tuple<'a> {
    pub anchor: &'a [f64],
    pub rotations: &'a [Vec<f64>],
    pub positives: &'a [Vec<f64>],
    pub negatives: &'a [Vec<f64>],
}

#[derive(Clone, Debug, PartialEq)]
pub struct TupleGrads {
    pub anchor: Vec<f64>,
    pub rotations: Vec<Vec<f64>>,
    pub positives: Vec<Vec<f64>>,
    pub negatives: Vec<Vec<f64>>,
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn check(t: &Tuple) -> Result<()> {
    if t.positives.is_empty() || t.negatives.is_empty() || t.rotations.is_empty() {
        return data_err("tuple needs at least one rotation, positive and negative");
    }
    let d = t.anchor.len();
    if t.rotations.iter().chain(t.positives).chain(t.negatives).any(|v| v.len() != d) {
        return data_err("tuple descriptors differ in length");
    }
    Ok(())
}

/// `max_{i,j} [m + d(q,p_i) − d(q,n_j)]` with its arg-max; first wins on ties.
fn hardest(q: &[f64], pos: &[Vec<f64>], neg: &[Vec<f64>], margin: f64) -> (f64, usize, usize) {
    let dn: Vec<f64> = neg.iter().map(|n| distance(q, n)).collect();
    let mut best = (f64::NEG_INFINITY, 0, 0);
    for (i, p) in pos.iter().enumerate() {
        let dp = distance(q, p);
        for (j, &d) in dn.iter().enumerate() {
            let v = margin + dp - d;
            if v > best.0 {
                best = (v, i, j);
            }
        }
    }
    best
}

/// Hinged anchor term plus hinged hardest rotation term, and gradients.
fn tuple_loss(t: &Tuple, m_anchor: f64, m_rot: f64) -> Result<(f64, TupleGrads)> {
    check(t)?;
    let dim = t.anchor.len();
    let zeros = |n: usize| vec![vec![0.0; dim]; n];
    let mut g = TupleGrads {
        anchor: vec![0.0; dim],
        rotations: zeros(t.rotations.len()),
        positives: zeros(t.positives.len()),
        negatives: zeros(t.negatives.len()),
    };
    let (va, ia, ja) = hardest(t.anchor, t.positives, t.negatives, m_anchor);
    let mut best_rot = (f64::NEG_INFINITY, 0, 0, 0);
    for (k, r) in t.rotations.iter().enumerate() {
        let (v, i, j) = hardest(r, t.positives, t.negatives, m_rot);
        if v > best_rot.0 {
            best_rot = (v, k, i, j);
        }
    }
    let mut total = 0.0;
    let pull = |q: &[f64], gq: &mut Vec<f64>, p: usize, n: usize, g: &mut TupleGrads| {
        let (pp, nn) = (&t.positives[p], &t.negatives[n]);
        let (dp, dn) = (distance(q, pp), distance(q, nn));
        for c in 0..dim {
            if dp > 0.0 {
                let u = (q[c] - pp[c]) / dp;
                gq[c] += u;
                g.positives[p][c] -= u;
            }
            if dn > 0.0 {
                let u = (q[c] - nn[c]) / dn;
                gq[c] -= u;
                g.negatives[n][c] += u;
            }
        }
    };
    if va > 0.0 {
        total += va;
        let mut ga = std::mem::take(&mut g.anchor);
        pull(t.anchor, &mut ga, ia, ja, &mut g);
        g.anchor = ga;
    }
    if best_rot.0 > 0.0 {
        let (v, k, i, j) = best_rot;
        total += v;
        let mut gr = std::mem::take(&mut g.rotations[k]);
        pull(&t.rotations[k], &mut gr, i, j, &mut g);
        g.rotations[k] = gr;
    }
    Ok((total, g))
}

/// Within-domain loss with margins λ2 (anchor) and λ3 (rotations).
pub fn loss_view(t: &Tuple, margins: &MarginConfig) -> Result<f64> {
    Ok(tuple_loss(t, margins.lambda2, margins.lambda3)?.0)
}

pub fn loss_view_grad(t: &Tuple, margins: &MarginConfig) -> Result<(f64, TupleGrads)> {
    tuple_loss(t, margins.lambda2, margins.lambda3)
}

/// Cross-domain loss with margins λ4 (anchor) and λ5 (rotations).
pub fn loss_domain(t: &Tuple, margins: &MarginConfig) -> Result<f64> {
    Ok(tuple_loss(t, margins.lambda4, margins.lambda5)?.0)
}

pub fn loss_domain_grad(t: &Tuple, margins: &MarginConfig) -> Result<(f64, TupleGrads)> {
    tuple_loss(t, margins.lambda4, margins.lambda5)
}

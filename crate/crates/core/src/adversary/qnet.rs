use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QNetDims {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub actions: usize,
}

impl QNetDims {
    fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::new();
        let mut fan_in = self.input_dim;
        for &h in self.hidden.iter().chain(std::iter::once(&self.actions)) {
            shapes.push((h, fan_in));
            fan_in = h;
        }
        shapes
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub w: Matrix,
    pub b: Vec<f64>,
}

/// Feed-forward value network: ReLU hidden layers, linear output with one
/// value per adversary action.
#[derive(Clone, Debug, PartialEq)]
pub struct QNetParams {
    pub dims: QNetDims,
    pub layers: Vec<Dense>,
}

/// Activations of one forward pass, for backprop.
pub(crate) struct ForwardTrace {
    /// Input to each layer (post-activation of the previous one).
    pub inputs: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

impl QNetParams {
    pub fn zeros(dims: QNetDims) -> Self {
        let layers =
            dims.layer_shapes().into_iter().map(|(o, i)| Dense { w: Matrix::zeros(o, i), b: vec![0.0; o] }).collect();
        Self { dims, layers }
    }

    /// Weights uniform in ±1/√fan_in, biases zero.
    pub fn init(dims: QNetDims, rng: &mut Rng) -> Self {
        let layers = dims
            .layer_shapes()
            .into_iter()
            .map(|(o, i)| Dense { w: Matrix::uniform(o, i, 1.0 / (i as f64).sqrt(), rng), b: vec![0.0; o] })
            .collect();
        Self { dims, layers }
    }

    pub(crate) fn forward_trace(&self, x: &[f64]) -> ForwardTrace {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut a = x.to_vec();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = layer.b.clone();
            layer.w.matvec_acc(&a, &mut z);
            if k < last {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            inputs.push(std::mem::replace(&mut a, z));
        }
        ForwardTrace { inputs, output: a }
    }

    /// Unchecked forward pass.
    pub(crate) fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = layer.b.clone();
            layer.w.matvec_acc(&a, &mut z);
            if k < last {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            a = z;
        }
        a
    }

    /// Accumulates into `grad` the gradient of `Σ dout · Q(x)`.
    pub(crate) fn backward(&self, trace: &ForwardTrace, dout: &[f64], grad: &mut QNetParams) {
        let mut delta = dout.to_vec();
        for k in (0..self.layers.len()).rev() {
            let input = &trace.inputs[k];
            grad.layers[k].w.add_outer(&delta, input);
            for (b, d) in grad.layers[k].b.iter_mut().zip(&delta) {
                *b += d;
            }
            if k == 0 {
                break;
            }
            let mut prev = vec![0.0; input.len()];
            self.layers[k].w.t_matvec_acc(&delta, &mut prev);
            // ReLU: `input` is the post-activation of layer k-1
            for (d, a) in prev.iter_mut().zip(input) {
                if *a <= 0.0 {
                    *d = 0.0;
                }
            }
            delta = prev;
        }
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.as_slice().len() + l.b.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(l.w.as_slice());
            out.extend_from_slice(&l.b);
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::invalid("flat q-network vector has the wrong length"));
        }
        let mut off = 0;
        for l in &mut self.layers {
            let w = l.w.as_mut_slice();
            w.copy_from_slice(&flat[off..off + w.len()]);
            off += w.len();
            let nb = l.b.len();
            l.b.copy_from_slice(&flat[off..off + nb]);
            off += nb;
        }
        Ok(())
    }

    pub fn to_named(&self) -> BTreeMap<String, Vec<f64>> {
        let mut m = BTreeMap::new();
        for (k, l) in self.layers.iter().enumerate() {
            m.insert(format!("layer{k}.w"), l.w.as_slice().to_vec());
            m.insert(format!("layer{k}.b"), l.b.clone());
        }
        m
    }

    pub fn from_named(dims: QNetDims, named: &BTreeMap<String, Vec<f64>>) -> Result<Self> {
        let mut p = Self::zeros(dims);
        if named.len() != 2 * p.layers.len() {
            return Err(Error::Corruption("unexpected q-network weight blocks".into()));
        }
        for (k, l) in p.layers.iter_mut().enumerate() {
            for (name, dst) in
                [(format!("layer{k}.w"), l.w.as_mut_slice()), (format!("layer{k}.b"), l.b.as_mut_slice())]
            {
                let src = named.get(&name).ok_or_else(|| Error::Corruption(format!("missing block {name}")))?;
                if src.len() != dst.len() {
                    return Err(Error::Corruption(format!("block {name} has the wrong size")));
                }
                dst.copy_from_slice(src);
            }
        }
        Ok(p)
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.w.is_finite() && l.b.iter().all(|v| v.is_finite()))
    }
}

/// Action values for `state`.
pub fn q_values(params: &QNetParams, state: &[f64]) -> Result<Vec<f64>> {
    if state.len() != params.dims.input_dim {
        return Err(Error::invalid(format!(
            "state length {} but the q-network expects {}",
            state.len(),
            params.dims.input_dim
        )));
    }
    Ok(params.forward(state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::grad_check;

    fn dims() -> QNetDims {
        QNetDims { input_dim: 3, hidden: vec![5, 4], actions: 2 }
    }

    #[test]
    fn zero_net_gives_zero_values() {
        let q = q_values(&QNetParams::zeros(dims()), &[0.3, -1.0, 2.0]).unwrap();
        assert_eq!(q, vec![0.0, 0.0]);
    }

    #[test]
    fn deterministic_evaluation() {
        let p = QNetParams::init(dims(), &mut Rng::new(3));
        let s = [0.1, 0.2, 0.3];
        assert_eq!(q_values(&p, &s).unwrap(), q_values(&p, &s).unwrap());
        assert!(q_values(&p, &[0.0; 2]).is_err());
    }

    #[test]
    fn single_layer_is_affine() {
        // No hidden layers: Q = W s + b, checked by hand.
        let d = QNetDims { input_dim: 2, hidden: vec![], actions: 2 };
        let mut p = QNetParams::zeros(d);
        p.layers[0].w = Matrix::from_vec(2, 2, vec![1.0, 2.0, -0.5, 3.0]).unwrap();
        p.layers[0].b = vec![0.25, -1.0];
        let q = q_values(&p, &[2.0, -1.0]).unwrap();
        assert_eq!(q, vec![0.25, -5.0]);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let d = dims();
        let p = QNetParams::init(d.clone(), &mut Rng::new(8));
        let x = [0.7, -0.3, 0.9];
        let dout = [0.6, -1.3];
        let trace = p.forward_trace(&x);
        assert_eq!(trace.output, p.forward(&x));
        let mut g = QNetParams::zeros(d.clone());
        p.backward(&trace, &dout, &mut g);
        let loss = |flat: &[f64]| {
            let mut q = QNetParams::zeros(d.clone());
            q.set_flat(flat).unwrap();
            q.forward(&x).iter().zip(&dout).map(|(a, b)| a * b).sum::<f64>()
        };
        let r = grad_check(loss, &p.to_flat(), &g.to_flat(), 1e-6).unwrap();
        assert!(r.max_rel_error < 1e-6, "{r:?}");
    }

    #[test]
    fn named_round_trip() {
        let p = QNetParams::init(dims(), &mut Rng::new(1));
        assert_eq!(QNetParams::from_named(dims(), &p.to_named()).unwrap(), p);
    }
}

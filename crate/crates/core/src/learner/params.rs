use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LearnerDims {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub action_dim: usize,
}

/// All weights of the recurrent cell and its softmax head.
#[derive(Clone, Debug, PartialEq)]
pub struct LearnerParams {
    pub dims: LearnerDims,
    pub w_z: Matrix,
    pub u_z: Matrix,
    pub b_z: Vec<f64>,
    pub w_r: Matrix,
    pub u_r: Matrix,
    pub b_r: Vec<f64>,
    pub w_c: Matrix,
    pub u_c: Matrix,
    pub b_c: Vec<f64>,
    pub w_out: Matrix,
    pub b_out: Vec<f64>,
}

/// Weight block names in flattening order.
pub const BLOCK_NAMES: [&str; 11] = ["w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_c", "u_c", "b_c", "w_out", "b_out"];

const INIT_SCALE: f64 = 0.1;

impl LearnerParams {
    pub fn zeros(dims: LearnerDims) -> Self {
        let LearnerDims { input_dim: i, hidden_dim: h, action_dim: a } = dims;
        Self {
            dims,
            w_z: Matrix::zeros(h, i),
            u_z: Matrix::zeros(h, h),
            b_z: vec![0.0; h],
            w_r: Matrix::zeros(h, i),
            u_r: Matrix::zeros(h, h),
            b_r: vec![0.0; h],
            w_c: Matrix::zeros(h, i),
            u_c: Matrix::zeros(h, h),
            b_c: vec![0.0; h],
            w_out: Matrix::zeros(a, h),
            b_out: vec![0.0; a],
        }
    }

    /// Weights uniform in [-0.1, 0.1], biases zero.
    pub fn init(dims: LearnerDims, rng: &mut Rng) -> Self {
        let LearnerDims { input_dim: i, hidden_dim: h, action_dim: a } = dims;
        let mut p = Self::zeros(dims);
        p.w_z = Matrix::uniform(h, i, INIT_SCALE, rng);
        p.u_z = Matrix::uniform(h, h, INIT_SCALE, rng);
        p.w_r = Matrix::uniform(h, i, INIT_SCALE, rng);
        p.u_r = Matrix::uniform(h, h, INIT_SCALE, rng);
        p.w_c = Matrix::uniform(h, i, INIT_SCALE, rng);
        p.u_c = Matrix::uniform(h, h, INIT_SCALE, rng);
        p.w_out = Matrix::uniform(a, h, INIT_SCALE, rng);
        p
    }

    pub fn blocks(&self) -> [(&'static str, &[f64]); 11] {
        [
            ("w_z", self.w_z.as_slice()),
            ("u_z", self.u_z.as_slice()),
            ("b_z", &self.b_z),
            ("w_r", self.w_r.as_slice()),
            ("u_r", self.u_r.as_slice()),
            ("b_r", &self.b_r),
            ("w_c", self.w_c.as_slice()),
            ("u_c", self.u_c.as_slice()),
            ("b_c", &self.b_c),
            ("w_out", self.w_out.as_slice()),
            ("b_out", &self.b_out),
        ]
    }

    fn blocks_mut(&mut self) -> [&mut [f64]; 11] {
        [
            self.w_z.as_mut_slice(),
            self.u_z.as_mut_slice(),
            &mut self.b_z,
            self.w_r.as_mut_slice(),
            self.u_r.as_mut_slice(),
            &mut self.b_r,
            self.w_c.as_mut_slice(),
            self.u_c.as_mut_slice(),
            &mut self.b_c,
            self.w_out.as_mut_slice(),
            &mut self.b_out,
        ]
    }

    pub fn num_params(&self) -> usize {
        self.blocks().iter().map(|(_, b)| b.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for (_, b) in self.blocks() {
            out.extend_from_slice(b);
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::invalid("flat parameter vector has the wrong length"));
        }
        let mut offset = 0;
        for block in self.blocks_mut() {
            let n = block.len();
            block.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    pub fn from_flat(dims: LearnerDims, flat: &[f64]) -> Result<Self> {
        let mut p = Self::zeros(dims);
        p.set_flat(flat)?;
        Ok(p)
    }

    /// Named blocks, as stored in checkpoints.
    pub fn to_named(&self) -> BTreeMap<String, Vec<f64>> {
        self.blocks().iter().map(|(n, b)| (n.to_string(), b.to_vec())).collect()
    }

    pub fn from_named(dims: LearnerDims, named: &BTreeMap<String, Vec<f64>>) -> Result<Self> {
        let mut p = Self::zeros(dims);
        for (name, block) in BLOCK_NAMES.iter().zip(p.blocks_mut()) {
            let src = named.get(*name).ok_or_else(|| Error::Corruption(format!("missing weight block {name}")))?;
            if src.len() != block.len() {
                return Err(Error::Corruption(format!(
                    "block {name} has {} values, dims need {}",
                    src.len(),
                    block.len()
                )));
            }
            block.copy_from_slice(src);
        }
        if named.len() != BLOCK_NAMES.len() {
            return Err(Error::Corruption("unexpected weight blocks".into()));
        }
        Ok(p)
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|(_, b)| b.iter().all(|v| v.is_finite()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_round_trip() {
        let dims = LearnerDims { input_dim: 3, hidden_dim: 4, action_dim: 2 };
        let p = LearnerParams::init(dims, &mut Rng::new(1));
        assert_eq!(p.num_params(), 3 * (12 + 16 + 4) + 8 + 2);
        let q = LearnerParams::from_flat(dims, &p.to_flat()).unwrap();
        assert_eq!(p, q);
        let r = LearnerParams::from_named(dims, &p.to_named()).unwrap();
        assert_eq!(p, r);
    }

    #[test]
    fn init_is_bounded_with_zero_biases() {
        let dims = LearnerDims { input_dim: 3, hidden_dim: 10, action_dim: 21 };
        let p = LearnerParams::init(dims, &mut Rng::new(9));
        for (name, b) in p.blocks() {
            if name.starts_with('b') {
                assert!(b.iter().all(|v| *v == 0.0));
            } else {
                assert!(b.iter().all(|v| v.abs() <= 0.1));
            }
        }
    }
}

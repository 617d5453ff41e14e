use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use super::{glorot, relu_mask, Parameters};
use crate::error::{Error, Result};

/// Two-layer feed-forward head scored per frame and averaged last:
/// `o_t = w2 . relu(W1^T x_t + b1) + b2`, `raw = mean_t o_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    /// `D x H`
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array1<f64>,
    pub b2: f64,
}

impl HeadParams {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        HeadParams {
            w1: Array2::zeros((input_dim, hidden)),
            b1: Array1::zeros(hidden),
            w2: Array1::zeros(hidden),
            b2: 0.0,
        }
    }

    pub fn init<R: Rng>(input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        HeadParams {
            w1: glorot(input_dim, hidden, rng),
            b1: Array1::zeros(hidden),
            w2: glorot(hidden, 1, rng).into_shape_with_order(hidden).unwrap(),
            b2: 0.0,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn hidden(&self) -> usize {
        self.w1.ncols()
    }

    pub(crate) fn check_input(&self, x: &Array2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "head expects dim {}, got {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        Ok(())
    }

    /// Per-frame scores.
    pub fn frame_scores(&self, x: &Array2<f64>) -> Array1<f64> {
        let a = (x.dot(&self.w1) + &self.b1).mapv(|z| z.max(0.0));
        a.dot(&self.w2) + self.b2
    }

    /// Mean of the frame scores; averaging before the output layer keeps
    /// constant heads exact.
    pub fn raw(&self, x: &Array2<f64>) -> f64 {
        let a = (x.dot(&self.w1) + &self.b1).mapv(|z| z.max(0.0));
        a.mean_axis(Axis(0)).expect("at least one frame").dot(&self.w2) + self.b2
    }

    /// Adds `upstream * d raw / d theta` into `grad` and returns `raw`.
    pub fn backward(&self, x: &Array2<f64>, upstream: f64, grad: &mut HeadParams) -> f64 {
        let t = x.nrows() as f64;
        let z = x.dot(&self.w1) + &self.b1;
        let a = z.mapv(|v| v.max(0.0));
        let a_mean = a.mean_axis(Axis(0)).expect("at least one frame");
        let raw = a_mean.dot(&self.w2) + self.b2;

        grad.b2 += upstream;
        grad.w2.scaled_add(upstream, &a_mean);
        // dZ_t = (upstream / T) * w2 masked by the ReLU
        let mut dz = relu_mask(&z);
        dz *= &(&self.w2 * (upstream / t));
        grad.w1 += &x.t().dot(&dz);
        grad.b1 += &dz.sum_axis(Axis(0));
        raw
    }
}

impl Parameters for HeadParams {
    fn groups(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            ("w1", self.w1.as_slice().unwrap()),
            ("b1", self.b1.as_slice().unwrap()),
            ("w2", self.w2.as_slice().unwrap()),
            ("b2", std::slice::from_ref(&self.b2)),
        ]
    }

    fn groups_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![
            ("w1", self.w1.as_slice_mut().unwrap()),
            ("b1", self.b1.as_slice_mut().unwrap()),
            ("w2", self.w2.as_slice_mut().unwrap()),
            ("b2", std::slice::from_mut(&mut self.b2)),
        ]
    }

    fn zeros_like(&self) -> Self {
        HeadParams::zeros(self.input_dim(), self.hidden())
    }
}

use ndarray::{s, Array1, Array2, Axis};
use rand::Rng;

use super::{glorot, relu_mask, Parameters};
use crate::error::{Error, Result};

/// Encoder trunk plus a dataset embedding table and a decoder.
///
/// Per frame: `h_t = relu(W1^T x_t + b1)`, `u_t = [h_t, e_d]`,
/// `o_t = v2 . relu(V1^T u_t + c1) + c2`; the score is the mean of `o_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignNetParams {
    /// `D x H`
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    /// Row order of `table`.
    pub dataset_ids: Vec<String>,
    /// `|datasets| x E`
    pub table: Array2<f64>,
    /// `(H + E) x H'`
    pub v1: Array2<f64>,
    pub c1: Array1<f64>,
    pub v2: Array1<f64>,
    pub c2: f64,
}

impl AlignNetParams {
    pub fn zeros(
        input_dim: usize,
        hidden: usize,
        dataset_ids: Vec<String>,
        embed_dim: usize,
        decoder_hidden: usize,
    ) -> Self {
        AlignNetParams {
            w1: Array2::zeros((input_dim, hidden)),
            b1: Array1::zeros(hidden),
            table: Array2::zeros((dataset_ids.len(), embed_dim)),
            dataset_ids,
            v1: Array2::zeros((hidden + embed_dim, decoder_hidden)),
            c1: Array1::zeros(decoder_hidden),
            v2: Array1::zeros(decoder_hidden),
            c2: 0.0,
        }
    }

    pub fn init<R: Rng>(
        input_dim: usize,
        hidden: usize,
        dataset_ids: Vec<String>,
        embed_dim: usize,
        decoder_hidden: usize,
        rng: &mut R,
    ) -> Self {
        let n = dataset_ids.len();
        AlignNetParams {
            w1: glorot(input_dim, hidden, rng),
            b1: Array1::zeros(hidden),
            table: glorot(n, embed_dim, rng),
            dataset_ids,
            v1: glorot(hidden + embed_dim, decoder_hidden, rng),
            c1: Array1::zeros(decoder_hidden),
            v2: glorot(decoder_hidden, 1, rng)
                .into_shape_with_order(decoder_hidden)
                .unwrap(),
            c2: 0.0,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn hidden(&self) -> usize {
        self.w1.ncols()
    }

    pub fn embed_dim(&self) -> usize {
        self.table.ncols()
    }

    pub fn decoder_hidden(&self) -> usize {
        self.v1.ncols()
    }

    pub fn dataset_index(&self, dataset_id: &str) -> Result<usize> {
        self.dataset_ids
            .iter()
            .position(|d| d == dataset_id)
            .ok_or_else(|| Error::UnknownDataset(dataset_id.to_string()))
    }

    pub(crate) fn check_input(&self, x: &Array2<f64>, dataset: usize) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "alignnet expects dim {}, got {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        if dataset >= self.table.nrows() {
            return Err(Error::UnknownDataset(format!("#{dataset}")));
        }
        Ok(())
    }

    fn decoder_pre(&self, h: &Array2<f64>, dataset: usize) -> Array2<f64> {
        let hdim = self.hidden();
        let v_h = self.v1.slice(s![..hdim, ..]);
        let v_e = self.v1.slice(s![hdim.., ..]);
        // the embedding contribution is shared by all frames
        let shared = self.table.row(dataset).dot(&v_e) + &self.c1;
        h.dot(&v_h) + &shared
    }

    pub fn frame_scores(&self, x: &Array2<f64>, dataset: usize) -> Array1<f64> {
        let h = (x.dot(&self.w1) + &self.b1).mapv(|z| z.max(0.0));
        let g = self.decoder_pre(&h, dataset).mapv(|q| q.max(0.0));
        g.dot(&self.v2) + self.c2
    }

    pub fn raw(&self, x: &Array2<f64>, dataset: usize) -> f64 {
        let h = (x.dot(&self.w1) + &self.b1).mapv(|z| z.max(0.0));
        let g = self.decoder_pre(&h, dataset).mapv(|q| q.max(0.0));
        g.mean_axis(Axis(0)).expect("at least one frame").dot(&self.v2) + self.c2
    }

    /// Adds `upstream * d raw / d theta` into `grad` and returns `raw`.
    pub fn backward(
        &self,
        x: &Array2<f64>,
        dataset: usize,
        upstream: f64,
        grad: &mut AlignNetParams,
    ) -> f64 {
        let t = x.nrows() as f64;
        let hdim = self.hidden();
        let z = x.dot(&self.w1) + &self.b1;
        let h = z.mapv(|v| v.max(0.0));
        let q = self.decoder_pre(&h, dataset);
        let g = q.mapv(|v| v.max(0.0));
        let g_mean = g.mean_axis(Axis(0)).expect("at least one frame");
        let raw = g_mean.dot(&self.v2) + self.c2;

        grad.c2 += upstream;
        grad.v2.scaled_add(upstream, &g_mean);

        let mut dq = relu_mask(&q);
        dq *= &(&self.v2 * (upstream / t));
        let dq_sum = dq.sum_axis(Axis(0));
        grad.c1 += &dq_sum;
        {
            let mut gv_h = grad.v1.slice_mut(s![..hdim, ..]);
            gv_h += &h.t().dot(&dq);
        }
        {
            let e = self.table.row(dataset);
            let mut gv_e = grad.v1.slice_mut(s![hdim.., ..]);
            for (i, &ei) in e.iter().enumerate() {
                gv_e.row_mut(i).scaled_add(ei, &dq_sum);
            }
        }

        let v_h = self.v1.slice(s![..hdim, ..]);
        let v_e = self.v1.slice(s![hdim.., ..]);
        let de = v_e.dot(&dq_sum);
        grad.table.row_mut(dataset).scaled_add(1.0, &de);

        let mut dz = dq.dot(&v_h.t());
        dz *= &relu_mask(&z);
        grad.w1 += &x.t().dot(&dz);
        grad.b1 += &dz.sum_axis(Axis(0));
        raw
    }
}

impl Parameters for AlignNetParams {
    fn groups(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            ("w1", self.w1.as_slice().unwrap()),
            ("b1", self.b1.as_slice().unwrap()),
            ("table", self.table.as_slice().unwrap()),
            ("v1", self.v1.as_slice().unwrap()),
            ("c1", self.c1.as_slice().unwrap()),
            ("v2", self.v2.as_slice().unwrap()),
            ("c2", std::slice::from_ref(&self.c2)),
        ]
    }

    fn groups_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![
            ("w1", self.w1.as_slice_mut().unwrap()),
            ("b1", self.b1.as_slice_mut().unwrap()),
            ("table", self.table.as_slice_mut().unwrap()),
            ("v1", self.v1.as_slice_mut().unwrap()),
            ("c1", self.c1.as_slice_mut().unwrap()),
            ("v2", self.v2.as_slice_mut().unwrap()),
            ("c2", std::slice::from_mut(&mut self.c2)),
        ]
    }

    fn zeros_like(&self) -> Self {
        AlignNetParams::zeros(
            self.input_dim(),
            self.hidden(),
            self.dataset_ids.clone(),
            self.embed_dim(),
            self.decoder_hidden(),
        )
    }
}

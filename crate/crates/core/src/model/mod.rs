//! Trainable score predictors with hand-written backpropagation.

mod alignnet;
mod checkpoint;
mod head;

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::Rng;

use crate::corpus::{MOS_MAX, MOS_MIN};
use crate::error::{Error, Result};
use crate::frontend::EmbeddingMatrix;
use crate::seed::{stream_rng, STREAM_INIT};

pub use alignnet::AlignNetParams;
pub use checkpoint::{decode_params, encode_params, load_params, save_params, CHECKPOINT_MAGIC};
pub use head::HeadParams;

/// Named flat views over a parameter set.
///
/// Gradients share the parameter type, so optimizer updates and numeric
/// checks are written once against this trait.
pub trait Parameters: Clone + Send + Sync {
    fn groups(&self) -> Vec<(&'static str, &[f64])>;
    fn groups_mut(&mut self) -> Vec<(&'static str, &mut [f64])>;
    fn zeros_like(&self) -> Self;

    fn num_params(&self) -> usize {
        self.groups().iter().map(|(_, g)| g.len()).sum()
    }

    fn to_flat(&self) -> Vec<f64> {
        self.groups().into_iter().flat_map(|(_, g)| g.iter().copied()).collect()
    }

    /// `self += scale * other`, group by group.
    fn add_scaled(&mut self, other: &Self, scale: f64) {
        for ((_, dst), (_, src)) in self.groups_mut().into_iter().zip(other.groups()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }

    fn is_finite(&self) -> bool {
        self.groups().iter().all(|(_, g)| g.iter().all(|v| v.is_finite()))
    }

    /// Stable 64-bit hash of the exact parameter bits.
    fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for (_, g) in self.groups() {
            for v in g {
                for b in v.to_bits().to_le_bytes() {
                    h ^= u64::from(b);
                    h = h.wrapping_mul(0x0000_0100_0000_01b3);
                }
            }
        }
        h
    }
}

pub(crate) fn glorot<R: Rng>(fan_in: usize, fan_out: usize, rng: &mut R) -> Array2<f64> {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-a..a))
}

pub(crate) fn relu_mask(z: &Array2<f64>) -> Array2<f64> {
    z.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 })
}

/// A raw model output and its clamp to the rating scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScorePrediction {
    pub raw: f64,
    pub clipped: f64,
}

impl ScorePrediction {
    pub fn new(raw: f64) -> Self {
        ScorePrediction {
            raw,
            clipped: raw.clamp(MOS_MIN, MOS_MAX),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Head,
    AlignNet,
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "head" | "ssl-mos" | "sslmos" => Ok(ModelKind::Head),
            "alignnet" | "align-net" => Ok(ModelKind::AlignNet),
            other => Err(Error::Argument(format!("unknown model kind `{other}`"))),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Head => "head",
            ModelKind::AlignNet => "alignnet",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub hidden: usize,
    pub embed_dim: usize,
    pub decoder_hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kind: ModelKind::Head,
            hidden: 64,
            embed_dim: 16,
            decoder_hidden: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Head(HeadParams),
    AlignNet(AlignNetParams),
}

impl Model {
    /// Glorot-uniform weights and zero biases, deterministic in `seed`.
    pub fn init(config: &ModelConfig, input_dim: usize, dataset_ids: &[String], seed: u64) -> Result<Self> {
        if input_dim == 0 || config.hidden == 0 {
            return Err(Error::Argument("model dimensions must be positive".into()));
        }
        let mut rng = stream_rng(seed, STREAM_INIT);
        Ok(match config.kind {
            ModelKind::Head => Model::Head(HeadParams::init(input_dim, config.hidden, &mut rng)),
            ModelKind::AlignNet => {
                if dataset_ids.is_empty() || config.embed_dim == 0 || config.decoder_hidden == 0 {
                    return Err(Error::Argument(
                        "alignnet needs datasets and positive embedding/decoder sizes".into(),
                    ));
                }
                Model::AlignNet(AlignNetParams::init(
                    input_dim,
                    config.hidden,
                    dataset_ids.to_vec(),
                    config.embed_dim,
                    config.decoder_hidden,
                    &mut rng,
                ))
            }
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Head(_) => ModelKind::Head,
            Model::AlignNet(_) => ModelKind::AlignNet,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Model::Head(p) => p.input_dim(),
            Model::AlignNet(p) => p.input_dim(),
        }
    }

    pub fn dataset_ids(&self) -> &[String] {
        match self {
            Model::Head(_) => &[],
            Model::AlignNet(p) => &p.dataset_ids,
        }
    }

    /// Table row for `dataset_id`; the head ignores datasets and yields 0.
    pub fn dataset_index(&self, dataset_id: Option<&str>) -> Result<usize> {
        match (self, dataset_id) {
            (Model::Head(_), _) => Ok(0),
            (Model::AlignNet(p), Some(d)) => p.dataset_index(d),
            (Model::AlignNet(_), None) => {
                Err(Error::UnknownDataset("<none>: alignnet needs a dataset id".into()))
            }
        }
    }

    pub fn forward_index(&self, mat: &EmbeddingMatrix, dataset: usize) -> Result<ScorePrediction> {
        let raw = match self {
            Model::Head(p) => {
                p.check_input(&mat.data)?;
                p.raw(&mat.data)
            }
            Model::AlignNet(p) => {
                p.check_input(&mat.data, dataset)?;
                p.raw(&mat.data, dataset)
            }
        };
        Ok(ScorePrediction::new(raw))
    }

    pub fn forward(&self, mat: &EmbeddingMatrix, dataset_id: Option<&str>) -> Result<ScorePrediction> {
        self.forward_index(mat, self.dataset_index(dataset_id)?)
    }

    /// Accumulates `upstream * d raw / d theta` into `grad` (same variant).
    pub fn backward(&self, mat: &EmbeddingMatrix, dataset: usize, upstream: f64, grad: &mut Model) -> Result<f64> {
        match (self, grad) {
            (Model::Head(p), Model::Head(g)) => {
                p.check_input(&mat.data)?;
                Ok(p.backward(&mat.data, upstream, g))
            }
            (Model::AlignNet(p), Model::AlignNet(g)) => {
                p.check_input(&mat.data, dataset)?;
                Ok(p.backward(&mat.data, dataset, upstream, g))
            }
            _ => Err(Error::Shape("gradient buffer is a different model kind".into())),
        }
    }
}

impl Parameters for Model {
    fn groups(&self) -> Vec<(&'static str, &[f64])> {
        match self {
            Model::Head(p) => p.groups(),
            Model::AlignNet(p) => p.groups(),
        }
    }

    fn groups_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        match self {
            Model::Head(p) => p.groups_mut(),
            Model::AlignNet(p) => p.groups_mut(),
        }
    }

    fn zeros_like(&self) -> Self {
        match self {
            Model::Head(p) => Model::Head(p.zeros_like()),
            Model::AlignNet(p) => Model::AlignNet(p.zeros_like()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{concatenate, Array1, Axis};
    use rand::SeedableRng;

    fn mat(t: usize, d: usize, seed: u64) -> EmbeddingMatrix {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        EmbeddingMatrix::new(
            Array2::from_shape_simple_fn((t, d), || rng.random_range(-1.0..1.0)),
            100.0,
        )
        .unwrap()
    }

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("d{i}")).collect()
    }

    #[test]
    fn constant_head() {
        let mut p = HeadParams::zeros(5, 4);
        p.b2 = 3.2;
        let m = Model::Head(p);
        for s in 0..3 {
            let pred = m.forward(&mat(7, 5, s), None).unwrap();
            assert_eq!(pred.raw, 3.2);
            assert_eq!(pred.clipped, 3.2);
        }
        let mut p = HeadParams::zeros(5, 4);
        p.b2 = 7.0;
        let pred = Model::Head(p).forward(&mat(2, 5, 0), None).unwrap();
        assert_eq!((pred.raw, pred.clipped), (7.0, 5.0));
    }

    #[test]
    fn head_frame_duplication_and_permutation_invariance() {
        let m = Model::init(&ModelConfig { hidden: 8, ..Default::default() }, 6, &[], 1).unwrap();
        let x = mat(5, 6, 2);
        let base = m.forward(&x, None).unwrap().raw;
        let dup = EmbeddingMatrix::new(concatenate![Axis(0), x.data, x.data], 100.0).unwrap();
        assert!((m.forward(&dup, None).unwrap().raw - base).abs() < 1e-12);
        let perm = EmbeddingMatrix::new(x.data.select(Axis(0), &[4, 2, 0, 1, 3]), 100.0).unwrap();
        assert!((m.forward(&perm, None).unwrap().raw - base).abs() < 1e-12);
    }

    #[test]
    fn shape_and_lookup_errors() {
        let cfg = ModelConfig { kind: ModelKind::AlignNet, hidden: 4, embed_dim: 2, decoder_hidden: 3 };
        let m = Model::init(&cfg, 6, &ids(2), 0).unwrap();
        assert!(matches!(m.forward(&mat(3, 5, 0), Some("d0")), Err(Error::Shape(_))));
        assert!(matches!(m.forward(&mat(3, 6, 0), Some("zz")), Err(Error::UnknownDataset(_))));
        assert!(matches!(m.forward(&mat(3, 6, 0), None), Err(Error::UnknownDataset(_))));
        assert!(Model::init(&cfg, 6, &[], 0).is_err());
        let h = Model::init(&ModelConfig::default(), 6, &[], 0).unwrap();
        assert!(matches!(h.forward(&mat(3, 5, 0), None), Err(Error::Shape(_))));
    }

    #[test]
    fn alignnet_identical_rows_and_constant_decoder() {
        let cfg = ModelConfig { kind: ModelKind::AlignNet, hidden: 4, embed_dim: 3, decoder_hidden: 5 };
        let Model::AlignNet(mut p) = Model::init(&cfg, 6, &ids(3), 4).unwrap() else { unreachable!() };
        let row = p.table.row(0).to_owned();
        p.table.row_mut(2).assign(&row);
        let m = Model::AlignNet(p.clone());
        let x = mat(4, 6, 9);
        assert_eq!(m.forward(&x, Some("d0")).unwrap(), m.forward(&x, Some("d2")).unwrap());

        p.v2 = Array1::zeros(5);
        p.c2 = 2.5;
        let m = Model::AlignNet(p);
        assert_eq!(m.forward(&x, Some("d1")).unwrap().raw, 2.5);
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let cfg = ModelConfig { hidden: 10, ..Default::default() };
        let a = Model::init(&cfg, 20, &[], 3).unwrap();
        let b = Model::init(&cfg, 20, &[], 3).unwrap();
        let c = Model::init(&cfg, 20, &[], 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.fingerprint(), c.fingerprint());
        let Model::Head(p) = a else { unreachable!() };
        let bound = (6.0f64 / 30.0).sqrt();
        assert!(p.w1.iter().all(|v| v.abs() < bound));
        assert!(p.b1.iter().all(|&v| v == 0.0));
        assert_eq!(p.b2, 0.0);
    }

    #[test]
    fn clipping_definition() {
        for raw in [-3.0, 0.99, 1.0, 2.7, 5.0, 5.01, 42.0] {
            let p = ScorePrediction::new(raw);
            assert!((1.0..=5.0).contains(&p.clipped));
            if (1.0..=5.0).contains(&raw) {
                assert_eq!(p.clipped, raw);
            }
        }
    }
}

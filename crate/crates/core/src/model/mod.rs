//! Feed-forward embedding network with an optional batch-norm neck and a
//! bias-free linear classifier.
//!
//! ```text
//! x ──▶ [Linear ─ ReLU]* ─ Linear ──▶ embedding ──▶ BN? ──▶ × W ──▶ logits
//!                                        │
//!                                   metric loss
//! ```
//!
//! Metric losses read the pre-neck embedding; the classifier reads the
//! normalized features.

mod batchnorm;
pub mod checkpoint;

pub use batchnorm::{BatchNorm, BnCache};
pub use checkpoint::{load_checkpoint, save_checkpoint};

use crate::error::{Error, Result};
use crate::numerics::{matmul, matmul_nt, matmul_tn, Matrix, Rng};

pub const DEFAULT_BN_MOMENTUM: f64 = 0.9;
pub const DEFAULT_BN_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Affine layer `y = x W + b` with `W` stored as `in × out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    pub layers: Vec<Linear>,
    pub bn: Option<BatchNorm>,
    /// `D × C`, no bias.
    pub classifier: Matrix,
}

#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// Input of every linear layer (the first is the batch itself).
    pub inputs: Vec<Matrix>,
    /// Output of every linear layer before the ReLU.
    pub pre_activations: Vec<Matrix>,
    pub bn: Option<BnCache>,
    /// Classifier input: normalized embeddings, or the embeddings when the
    /// neck is disabled.
    pub neck: Matrix,
}

#[derive(Clone, Debug)]
pub struct Forward {
    pub embeddings: Matrix,
    pub logits: Matrix,
    pub cache: ForwardCache,
}

/// Gradients with the same layout as [`MlpModel`]'s parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelGrads {
    pub layers: Vec<Linear>,
    pub bn_scale: Option<Vec<f64>>,
    pub bn_shift: Option<Vec<f64>>,
    pub classifier: Matrix,
}

impl MlpModel {
    /// Builds a model for layer widths `dims = [F, h₁, …, D]` and `classes`
    /// outputs.
    ///
    /// Weights are uniform in `±sqrt(6 / fan_in)` for layers followed by a
    /// ReLU and `±sqrt(3 / fan_in)` for the embedding layer; biases start at
    /// zero. The classifier is uniform in `±1/sqrt(D)`. Draws are taken
    /// row-major, layer by layer, then the classifier.
    pub fn init(dims: &[usize], classes: usize, use_bn: bool, rng: &mut Rng) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::config("dims needs at least input and embedding widths"));
        }
        if let Some(pos) = dims.iter().position(|&d| d < 1) {
            return Err(Error::config(format!("dims[{pos}] must be >= 1")));
        }
        if classes < 2 {
            return Err(Error::config(format!("need at least 2 classes, got {classes}")));
        }
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let gain = if l == last { 3.0 } else { 6.0 };
                let bound = (gain / w[0] as f64).sqrt();
                let values = (0..w[0] * w[1]).map(|_| rng.uniform(-bound, bound)).collect();
                Linear {
                    weight: Matrix::from_vec(w[0], w[1], values).expect("sized"),
                    bias: vec![0.0; w[1]],
                }
            })
            .collect();
        let d = dims[dims.len() - 1];
        let bound = 1.0 / (d as f64).sqrt();
        let values = (0..d * classes).map(|_| rng.uniform(-bound, bound)).collect();
        Ok(MlpModel {
            layers,
            bn: use_bn.then(|| BatchNorm::new(d, DEFAULT_BN_MOMENTUM, DEFAULT_BN_EPS)),
            classifier: Matrix::from_vec(d, classes, values)?,
        })
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].weight.rows()];
        dims.extend(self.layers.iter().map(|l| l.weight.cols()));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.rows()
    }

    pub fn embedding_dim(&self) -> usize {
        self.classifier.rows()
    }

    pub fn classes(&self) -> usize {
        self.classifier.cols()
    }

    /// Checks the shape chain and BN invariants.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::config("model has no layers"));
        }
        for pair in self.layers.windows(2) {
            if pair[0].weight.cols() != pair[1].weight.rows() {
                return Err(Error::Shape {
                    op: "layer chain",
                    left: pair[0].weight.shape(),
                    right: pair[1].weight.shape(),
                });
            }
        }
        for layer in &self.layers {
            if layer.bias.len() != layer.weight.cols() {
                return Err(Error::config("bias length differs from layer width"));
            }
        }
        let d = self.layers.last().unwrap().weight.cols();
        if self.classifier.rows() != d {
            return Err(Error::Shape {
                op: "classifier",
                left: (d, 0),
                right: self.classifier.shape(),
            });
        }
        if let Some(bn) = &self.bn {
            if bn.dim() != d || bn.shift.len() != d || bn.running_mean.len() != d || bn.running_var.len() != d {
                return Err(Error::config("batch-norm width differs from embedding width"));
            }
            if bn.running_var.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::config("batch-norm running variance must be > 0"));
            }
        }
        Ok(())
    }

    /// Forward pass. In train mode the neck normalizes with batch
    /// statistics and the running statistics are updated; eval mode leaves
    /// the model untouched.
    pub fn forward(&mut self, x: &Matrix, mode: Mode) -> Result<Forward> {
        let (out, stats) = self.forward_impl(x, mode)?;
        if let (Some(bn), Some((mean, var))) = (self.bn.as_mut(), stats) {
            bn.update_running(&mean, &var);
        }
        Ok(out)
    }

    /// Eval-mode forward; a pure function of the model and the input.
    pub fn forward_eval(&self, x: &Matrix) -> Result<Forward> {
        Ok(self.forward_impl(x, Mode::Eval)?.0)
    }

    /// Train-mode forward without touching running statistics.
    pub fn forward_train_pure(&self, x: &Matrix) -> Result<Forward> {
        Ok(self.forward_impl(x, Mode::Train)?.0)
    }

    /// Eval-mode embeddings (pre-neck).
    pub fn embed(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward_eval(x)?.embeddings)
    }

    #[allow(clippy::type_complexity)]
    fn forward_impl(&self, x: &Matrix, mode: Mode) -> Result<(Forward, Option<(Vec<f64>, Vec<f64>)>)> {
        if x.cols() != self.input_dim() {
            return Err(Error::Shape {
                op: "forward input",
                left: x.shape(),
                right: self.layers[0].weight.shape(),
            });
        }
        if mode == Mode::Train && self.bn.is_some() && x.rows() < 2 {
            return Err(Error::Domain(
                "train-mode batch normalization needs at least 2 rows".into(),
            ));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut current = x.clone();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = matmul(&current, &layer.weight)?;
            for i in 0..z.rows() {
                for (v, b) in z.row_mut(i).iter_mut().zip(&layer.bias) {
                    *v += b;
                }
            }
            inputs.push(current);
            current = if l < last { z.map(|v| v.max(0.0)) } else { z.clone() };
            pre_activations.push(z);
        }
        let embeddings = current;
        let (neck, bn_cache, stats) = match &self.bn {
            Some(bn) => {
                let (out, cache, stats) = bn.apply(&embeddings, mode == Mode::Train);
                (out, Some(cache), stats)
            }
            None => (embeddings.clone(), None, None),
        };
        let logits = matmul(&neck, &self.classifier)?;
        if !embeddings.is_finite() || !logits.is_finite() {
            return Err(Error::NonFinite("forward pass output".into()));
        }
        Ok((
            Forward {
                embeddings,
                logits,
                cache: ForwardCache {
                    inputs,
                    pre_activations,
                    bn: bn_cache,
                    neck,
                },
            },
            stats,
        ))
    }

    /// Gradients of a scalar objective whose partial derivatives with
    /// respect to the embeddings and the logits are given.
    pub fn backward(&self, cache: &ForwardCache, grad_embeddings: &Matrix, grad_logits: &Matrix) -> Result<ModelGrads> {
        let b = cache.neck.rows();
        if grad_embeddings.shape() != (b, self.embedding_dim()) {
            return Err(Error::Shape {
                op: "backward grad_embeddings",
                left: (b, self.embedding_dim()),
                right: grad_embeddings.shape(),
            });
        }
        if grad_logits.shape() != (b, self.classes()) {
            return Err(Error::Shape {
                op: "backward grad_logits",
                left: (b, self.classes()),
                right: grad_logits.shape(),
            });
        }
        if cache.inputs.len() != self.layers.len() || cache.bn.is_some() != self.bn.is_some() {
            return Err(Error::Shape {
                op: "backward cache",
                left: (self.layers.len(), 0),
                right: (cache.inputs.len(), 0),
            });
        }

        let classifier = matmul_tn(&cache.neck, grad_logits)?;
        let grad_neck = matmul_nt(grad_logits, &self.classifier)?;
        let (mut grad, bn_scale, bn_shift) = match (&self.bn, &cache.bn) {
            (Some(bn), Some(bc)) => {
                let (dx, ds, dh) = bn.backward(bc, &grad_neck);
                (dx, Some(ds), Some(dh))
            }
            _ => (grad_neck, None, None),
        };
        grad.add_scaled(grad_embeddings, 1.0)?;

        let mut layers = Vec::with_capacity(self.layers.len());
        for l in (0..self.layers.len()).rev() {
            if l < self.layers.len() - 1 {
                let z = &cache.pre_activations[l];
                for (g, zv) in grad.as_mut_slice().iter_mut().zip(z.as_slice()) {
                    if *zv <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            let weight = matmul_tn(&cache.inputs[l], &grad)?;
            let mut bias = vec![0.0; grad.cols()];
            for i in 0..grad.rows() {
                for (bv, g) in bias.iter_mut().zip(grad.row(i)) {
                    *bv += g;
                }
            }
            if l > 0 {
                grad = matmul_nt(&grad, &self.layers[l].weight)?;
            }
            layers.push(Linear { weight, bias });
        }
        layers.reverse();
        Ok(ModelGrads {
            layers,
            bn_scale,
            bn_shift,
            classifier,
        })
    }

    /// Trainable parameter blocks in a fixed order, named for diagnostics.
    pub fn param_blocks_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<(String, &mut [f64])> = Vec::new();
        for (l, layer) in self.layers.iter_mut().enumerate() {
            out.push((format!("layer{l}.weight"), layer.weight.as_mut_slice()));
            out.push((format!("layer{l}.bias"), layer.bias.as_mut_slice()));
        }
        if let Some(bn) = self.bn.as_mut() {
            out.push(("bn.scale".into(), bn.scale.as_mut_slice()));
            out.push(("bn.shift".into(), bn.shift.as_mut_slice()));
        }
        out.push(("classifier".into(), self.classifier.as_mut_slice()));
        out
    }

    pub fn param_count(&mut self) -> usize {
        self.param_blocks_mut().iter().map(|(_, b)| b.len()).sum()
    }
}

impl ModelGrads {
    /// Gradient blocks in the same order as [`MlpModel::param_blocks_mut`].
    pub fn blocks(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for layer in &self.layers {
            out.push(layer.weight.as_slice());
            out.push(&layer.bias);
        }
        if let (Some(s), Some(h)) = (&self.bn_scale, &self.bn_shift) {
            out.push(s);
            out.push(h);
        }
        out.push(self.classifier.as_slice());
        out
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.blocks().concat()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::{cross_entropy_loss, fidi_loss, FidiConfig};
    use crate::numerics::gradcheck::relative_error_slices;

    fn batch(seed: u64, b: usize, f: usize) -> Matrix {
        let mut rng = Rng::new(seed);
        Matrix::from_vec(b, f, (0..b * f).map(|_| rng.normal()).collect()).unwrap()
    }

    #[test]
    fn init_is_deterministic_with_expected_shapes() {
        let a = MlpModel::init(&[8, 16, 4], 3, true, &mut Rng::new(1)).unwrap();
        let b = MlpModel::init(&[8, 16, 4], 3, true, &mut Rng::new(1)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.classifier.shape(), (4, 3));
        assert_eq!(a.dims(), vec![8, 16, 4]);
        let bn = a.bn.as_ref().unwrap();
        assert!(bn.running_mean.iter().all(|&v| v == 0.0));
        assert!(bn.running_var.iter().all(|&v| v == 1.0));
        a.validate().unwrap();
    }

    #[test]
    fn single_linear_map_is_valid() {
        let m = MlpModel::init(&[5, 3], 2, false, &mut Rng::new(0)).unwrap();
        assert_eq!(m.layers.len(), 1);
        let out = m.forward_eval(&batch(0, 4, 5)).unwrap();
        assert_eq!(out.embeddings.shape(), (4, 3));
    }

    #[test]
    fn init_rejects_bad_dims() {
        assert!(matches!(MlpModel::init(&[8, 0, 4], 3, false, &mut Rng::new(0)), Err(Error::Config(_))));
        assert!(MlpModel::init(&[8], 3, false, &mut Rng::new(0)).is_err());
        assert!(MlpModel::init(&[8, 4], 1, false, &mut Rng::new(0)).is_err());
    }

    #[test]
    fn eval_forward_is_pure() {
        let mut m = MlpModel::init(&[4, 6, 3], 3, true, &mut Rng::new(2)).unwrap();
        let x = batch(1, 5, 4);
        m.forward(&x, Mode::Train).unwrap();
        let before = m.clone();
        let a = m.forward(&x, Mode::Eval).unwrap();
        let b = m.forward(&x, Mode::Eval).unwrap();
        assert_eq!(a.embeddings, b.embeddings);
        assert_eq!(a.logits, b.logits);
        assert_eq!(m, before);
    }

    #[test]
    fn zero_classifier_gives_zero_logits() {
        let mut m = MlpModel::init(&[4, 3], 2, false, &mut Rng::new(2)).unwrap();
        m.classifier = Matrix::zeros(3, 2);
        let out = m.forward_eval(&batch(3, 4, 4)).unwrap();
        assert_eq!(out.logits.max_abs(), 0.0);
    }

    #[test]
    fn train_bn_output_has_zero_mean() {
        let mut m = MlpModel::init(&[4, 8, 3], 2, true, &mut Rng::new(4)).unwrap();
        let out = m.forward(&batch(5, 9, 4), Mode::Train).unwrap();
        let xh = &out.cache.bn.as_ref().unwrap().normalized;
        for j in 0..3 {
            let mean: f64 = (0..9).map(|i| xh[(i, j)]).sum::<f64>() / 9.0;
            assert!(mean.abs() < 1e-9);
        }
        assert_ne!(m.bn.as_ref().unwrap().running_mean, vec![0.0; 3]);
    }

    #[test]
    fn train_bn_needs_two_rows() {
        let mut m = MlpModel::init(&[4, 3], 2, true, &mut Rng::new(4)).unwrap();
        assert!(matches!(m.forward(&batch(0, 1, 4), Mode::Train), Err(Error::Domain(_))));
        assert!(m.forward(&batch(0, 1, 4), Mode::Eval).is_ok());
    }

    #[test]
    fn zero_logit_grad_gives_zero_classifier_grad() {
        let mut m = MlpModel::init(&[4, 5, 3], 3, true, &mut Rng::new(6)).unwrap();
        let out = m.forward(&batch(7, 6, 4), Mode::Train).unwrap();
        let ge = batch(8, 6, 3);
        let g = m.backward(&out.cache, &ge, &Matrix::zeros(6, 3)).unwrap();
        assert_eq!(g.classifier.max_abs(), 0.0);
    }

    #[test]
    fn dead_relu_unit_gets_no_incoming_gradient() {
        let mut m = MlpModel::init(&[3, 4, 2], 2, false, &mut Rng::new(9)).unwrap();
        // Hidden unit 1 is dead for every input.
        for r in 0..3 {
            m.layers[0].weight[(r, 1)] = 0.0;
        }
        m.layers[0].bias[1] = -1.0;
        let out = m.forward(&batch(10, 5, 3), Mode::Train).unwrap();
        let g = m
            .backward(&out.cache, &batch(11, 5, 2), &batch(12, 5, 2))
            .unwrap();
        for r in 0..3 {
            assert_eq!(g.layers[0].weight[(r, 1)], 0.0);
        }
        assert_eq!(g.layers[0].bias[1], 0.0);
    }

    #[test]
    fn backward_rejects_mismatched_shapes() {
        let mut m = MlpModel::init(&[4, 3], 2, false, &mut Rng::new(1)).unwrap();
        let out = m.forward(&batch(0, 5, 4), Mode::Train).unwrap();
        assert!(m.backward(&out.cache, &Matrix::zeros(4, 3), &Matrix::zeros(5, 2)).is_err());
    }

    /// Total objective evaluated through a pure train-mode forward.
    fn objective(m: &MlpModel, x: &Matrix, labels: &[usize], metric: bool, cls: bool) -> Result<f64> {
        let out = m.forward_train_pure(x)?;
        let mut v = 0.0;
        if metric {
            v += fidi_loss(&out.embeddings, labels, &FidiConfig::default())?.value;
        }
        if cls {
            v += cross_entropy_loss(&out.logits, labels)?.value;
        }
        Ok(v)
    }

    #[test]
    fn full_parameter_gradient_check() {
        let labels = [0, 0, 1, 1, 2, 2];
        let x = batch(13, 6, 5);
        for use_bn in [true, false] {
            for (metric, cls) in [(true, false), (false, true), (true, true)] {
                let m = MlpModel::init(&[5, 7, 4], 3, use_bn, &mut Rng::new(14)).unwrap();
                let out = m.forward_train_pure(&x).unwrap();
                let ge = if metric {
                    fidi_loss(&out.embeddings, &labels, &FidiConfig::default()).unwrap().grad_embeddings
                } else {
                    Matrix::zeros(6, 4)
                };
                let gl = if cls {
                    cross_entropy_loss(&out.logits, &labels).unwrap().grad_logits.unwrap()
                } else {
                    Matrix::zeros(6, 3)
                };
                let analytic = m.backward(&out.cache, &ge, &gl).unwrap().flatten();

                let mut numeric = Vec::new();
                let mut probe = m.clone();
                let n_blocks = probe.param_blocks_mut().len();
                for blk in 0..n_blocks {
                    let len = probe.param_blocks_mut()[blk].1.len();
                    for k in 0..len {
                        let orig = probe.param_blocks_mut()[blk].1[k];
                        let h = 1e-4;
                        probe.param_blocks_mut()[blk].1[k] = orig + h;
                        let plus = objective(&probe, &x, &labels, metric, cls).unwrap();
                        probe.param_blocks_mut()[blk].1[k] = orig - h;
                        let minus = objective(&probe, &x, &labels, metric, cls).unwrap();
                        probe.param_blocks_mut()[blk].1[k] = orig;
                        numeric.push((plus - minus) / (2.0 * h));
                    }
                }
                let err = relative_error_slices(&analytic, &numeric);
                assert!(err < 1e-5, "bn={use_bn} metric={metric} cls={cls}: {err}");
            }
        }
    }
}

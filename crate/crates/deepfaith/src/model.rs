//! The opaque model-under-explanation interface and in-repo trainable
//! predictors (linear-softmax and MLP) with analytic input gradients.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Instance};
use crate::error::{Error, Result};
use crate::Real;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Opaque predictor: class probabilities plus optional analytic input
/// gradients. Implementations must be deterministic for a fixed input.
pub trait PredictiveModel: Send + Sync {
    fn num_classes(&self) -> usize;
    fn predict_proba(&self, x: &Instance) -> Result<Vec<Real>>;
    /// Gradient of the class probability w.r.t. the input, flat `n * d`.
    /// `None` when the model has no analytic gradient.
    fn input_gradient(&self, _x: &Instance, _class: usize) -> Option<Vec<Real>> {
        None
    }
}

/// A model paired with the class whose probability is being explained.
#[derive(Clone, Copy)]
pub struct TargetedModel<'a> {
    pub model: &'a dyn PredictiveModel,
    pub target_class: usize,
}

impl<'a> TargetedModel<'a> {
    pub fn new(model: &'a dyn PredictiveModel, target_class: usize) -> Result<Self> {
        if target_class >= model.num_classes() {
            return Err(Error::OutOfRange {
                name: "target_class",
                value: target_class as f64,
            });
        }
        Ok(Self {
            model,
            target_class,
        })
    }

    /// Target-class probability.
    pub fn f_scalar(&self, x: &Instance) -> Result<Real> {
        Ok(self.model.predict_proba(x)?[self.target_class])
    }

    pub fn predict_proba(&self, x: &Instance) -> Result<Vec<Real>> {
        self.model.predict_proba(x)
    }

    pub fn argmax_class(&self, x: &Instance) -> Result<usize> {
        let p = self.model.predict_proba(x)?;
        Ok(p.iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap())
    }

    /// Analytic gradient when available, otherwise central finite
    /// differences with `h = 1e-4`.
    pub fn input_gradient(&self, x: &Instance) -> Result<Vec<Real>> {
        if let Some(g) = self.model.input_gradient(x, self.target_class) {
            return Ok(g);
        }
        self.fd_gradient(x, 1e-4)
    }

    pub fn fd_gradient(&self, x: &Instance, h: Real) -> Result<Vec<Real>> {
        let mut grad = vec![0.0; x.values().len()];
        let mut probe = x.clone();
        for i in 0..grad.len() {
            let orig = probe.values()[i];
            probe.values_mut()[i] = orig + h;
            let up = self.f_scalar(&probe)?;
            probe.values_mut()[i] = orig - h;
            let down = self.f_scalar(&probe)?;
            probe.values_mut()[i] = orig;
            grad[i] = (up - down) / (2.0 * h);
        }
        Ok(grad)
    }
}

/// Stub that always outputs the uniform distribution.
pub struct UniformModel {
    pub classes: usize,
}

impl PredictiveModel for UniformModel {
    fn num_classes(&self) -> usize {
        self.classes
    }

    fn predict_proba(&self, _x: &Instance) -> Result<Vec<Real>> {
        Ok(vec![1.0 / self.classes as Real; self.classes])
    }

    fn input_gradient(&self, x: &Instance, _class: usize) -> Option<Vec<Real>> {
        Some(vec![0.0; x.values().len()])
    }
}

/// Exactly additive two-class model: the target-class (index 1) probability
/// is `intercept + sum(coeffs[i] * x[i])`. Inputs must keep that value in
/// `[0, 1]`; used as the closed-form oracle task.
pub struct AdditiveProbModel {
    pub intercept: Real,
    pub coeffs: Vec<Real>,
}

impl PredictiveModel for AdditiveProbModel {
    fn num_classes(&self) -> usize {
        2
    }

    fn predict_proba(&self, x: &Instance) -> Result<Vec<Real>> {
        if x.values().len() != self.coeffs.len() {
            return Err(Error::ShapeMismatch(format!(
                "additive model expects {} features, got {}",
                self.coeffs.len(),
                x.values().len()
            )));
        }
        let p: Real = self.intercept
            + x.values()
                .iter()
                .zip(&self.coeffs)
                .map(|(x, c)| x * c)
                .sum::<Real>();
        Ok(vec![1.0 - p, p])
    }

    fn input_gradient(&self, _x: &Instance, class: usize) -> Option<Vec<Real>> {
        let sign = if class == 1 { 1.0 } else { -1.0 };
        Some(self.coeffs.iter().map(|c| sign * c).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(&self, z: Real) -> Real {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    fn derivative(&self, z: Real) -> Real {
        match self {
            Activation::Tanh => 1.0 - z.tanh().powi(2),
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DenseLayer {
    /// Row-major `out x in`.
    weights: Vec<Real>,
    biases: Vec<Real>,
    inputs: usize,
    outputs: usize,
}

impl DenseLayer {
    fn forward(&self, x: &[Real]) -> Vec<Real> {
        let mut out = self.biases.clone();
        for (o, out_v) in out.iter_mut().enumerate() {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            *out_v += row.iter().zip(x).map(|(w, v)| w * v).sum::<Real>();
        }
        out
    }
}

/// Feed-forward softmax classifier. Empty `hidden` gives linear-softmax.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpModel {
    version: u32,
    pub input_n: usize,
    pub input_d: usize,
    pub hidden: Vec<usize>,
    pub classes: usize,
    pub activation: Activation,
    layers: Vec<DenseLayer>,
    pub train_seed: u64,
}

fn softmax(logits: &[Real]) -> Vec<Real> {
    let max = logits.iter().copied().fold(Real::NEG_INFINITY, Real::max);
    let exps: Vec<Real> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: Real = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

impl MlpModel {
    pub fn new(
        input_n: usize,
        input_d: usize,
        hidden: Vec<usize>,
        classes: usize,
        activation: Activation,
        init_seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(init_seed);
        let mut sizes = vec![input_n * input_d];
        sizes.extend(&hidden);
        sizes.push(classes);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (inputs, outputs) = (w[0], w[1]);
                let scale = (1.0 / inputs as Real).sqrt();
                DenseLayer {
                    weights: (0..inputs * outputs)
                        .map(|_| rng.gen_range(-scale..scale))
                        .collect(),
                    biases: vec![0.0; outputs],
                    inputs,
                    outputs,
                }
            })
            .collect();
        Self {
            version: CHECKPOINT_VERSION,
            input_n,
            input_d,
            hidden,
            classes,
            activation,
            layers,
            train_seed: init_seed,
        }
    }

    /// Linear-softmax: no hidden layers. `weights` is `classes x (n*d)`.
    pub fn linear(input_n: usize, input_d: usize, classes: usize) -> Self {
        Self::new(input_n, input_d, vec![], classes, Activation::Tanh, 0)
    }

    pub fn weights_of_class(&self, class: usize) -> &[Real] {
        let l = &self.layers[0];
        &l.weights[class * l.inputs..(class + 1) * l.inputs]
    }

    pub fn set_linear_weights(&mut self, class: usize, weights: &[Real]) {
        let l = &mut self.layers[0];
        l.weights[class * l.inputs..(class + 1) * l.inputs].copy_from_slice(weights);
    }

    fn check_shape(&self, x: &Instance) -> Result<()> {
        if x.n() != self.input_n || x.d() != self.input_d {
            return Err(Error::ShapeMismatch(format!(
                "model expects {}x{}, got {}x{}",
                self.input_n,
                self.input_d,
                x.n(),
                x.d()
            )));
        }
        Ok(())
    }

    /// Pre-activations per layer, for backprop.
    fn forward_trace(&self, input: &[Real]) -> (Vec<Vec<Real>>, Vec<Real>) {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut cur = input.to_vec();
        for (li, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(&cur);
            cur = if li + 1 < self.layers.len() {
                z.iter().map(|&v| self.activation.apply(v)).collect()
            } else {
                z.clone()
            };
            pre.push(z);
        }
        let probs = softmax(&cur);
        (pre, probs)
    }

    /// Gradient of cross-entropy loss over a batch w.r.t. parameters,
    /// flattened in layer order (weights then biases per layer).
    fn loss_and_grad(&self, batch: &[(&Instance, usize)]) -> (Real, Vec<Vec<Real>>, Vec<Vec<Real>>) {
        let act = self.activation;
        let mut gw: Vec<Vec<Real>> = self.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect();
        let mut gb: Vec<Vec<Real>> = self.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect();
        let mut loss = 0.0;
        for &(x, label) in batch {
            let input = x.values();
            let (pre, probs) = self.forward_trace(input);
            loss += -(probs[label].max(1e-12)).ln();
            // delta at output: p - onehot
            let mut delta: Vec<Real> = probs.clone();
            delta[label] -= 1.0;
            for li in (0..self.layers.len()).rev() {
                let layer_input: Vec<Real> = if li == 0 {
                    input.to_vec()
                } else {
                    pre[li - 1].iter().map(|&z| act.apply(z)).collect()
                };
                let layer = &self.layers[li];
                for o in 0..layer.outputs {
                    gb[li][o] += delta[o];
                    for i in 0..layer.inputs {
                        gw[li][o * layer.inputs + i] += delta[o] * layer_input[i];
                    }
                }
                if li > 0 {
                    let mut next = vec![0.0; layer.inputs];
                    for (i, next_v) in next.iter_mut().enumerate() {
                        let mut acc = 0.0;
                        for o in 0..layer.outputs {
                            acc += layer.weights[o * layer.inputs + i] * delta[o];
                        }
                        *next_v = acc * act.derivative(pre[li - 1][i]);
                    }
                    delta = next;
                }
            }
        }
        let m = batch.len() as Real;
        loss /= m;
        for g in gw.iter_mut().chain(gb.iter_mut()) {
            for v in g {
                *v /= m;
            }
        }
        (loss, gw, gb)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let model: MlpModel = serde_json::from_str(&text)?;
        if model.version != CHECKPOINT_VERSION {
            return Err(Error::Invalid(format!(
                "unsupported checkpoint version {}",
                model.version
            )));
        }
        Ok(model)
    }
}

impl PredictiveModel for MlpModel {
    fn num_classes(&self) -> usize {
        self.classes
    }

    fn predict_proba(&self, x: &Instance) -> Result<Vec<Real>> {
        self.check_shape(x)?;
        let (_, probs) = self.forward_trace(x.values());
        Ok(probs)
    }

    fn input_gradient(&self, x: &Instance, class: usize) -> Option<Vec<Real>> {
        if self.check_shape(x).is_err() || class >= self.classes {
            return None;
        }
        let input = x.values();
        let (pre, probs) = self.forward_trace(input);
        // d p_class / d logits = p_class * (onehot - p)
        let mut delta: Vec<Real> = probs
            .iter()
            .enumerate()
            .map(|(k, &pk)| probs[class] * (if k == class { 1.0 } else { 0.0 } - pk))
            .collect();
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let mut next = vec![0.0; layer.inputs];
            for (i, next_v) in next.iter_mut().enumerate() {
                let mut acc = 0.0;
                for o in 0..layer.outputs {
                    acc += layer.weights[o * layer.inputs + i] * delta[o];
                }
                *next_v = acc;
            }
            if li > 0 {
                for (i, v) in next.iter_mut().enumerate() {
                    *v *= self.activation.derivative(pre[li - 1][i]);
                }
            }
            delta = next;
        }
        Some(delta)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainHyperparams {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: Real,
    pub momentum: Real,
}

impl Default for TrainHyperparams {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 32,
            learning_rate: 0.5,
            momentum: 0.9,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingCurve {
    pub epoch_losses: Vec<Real>,
    pub initial_loss: Real,
}

/// Mini-batch gradient descent with momentum on cross-entropy over the
/// training split. Deterministic for a fixed seed.
pub fn train_model(
    dataset: &Dataset,
    hidden: Vec<usize>,
    activation: Activation,
    hyper: &TrainHyperparams,
    seed: u64,
) -> Result<(MlpModel, TrainingCurve)> {
    if dataset.train_idx.is_empty() {
        return Err(Error::Empty);
    }
    let mut model = MlpModel::new(
        dataset.n(),
        dataset.d(),
        hidden,
        dataset.num_classes().max(2),
        activation,
        seed,
    );
    model.train_seed = seed;
    let train: Vec<(&Instance, usize)> = dataset.train_instances().collect();
    let (initial_loss, _, _) = model.loss_and_grad(&train);

    let mut vw: Vec<Vec<Real>> = model.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect();
    let mut vb: Vec<Vec<Real>> = model.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x5eed));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epoch_losses = Vec::with_capacity(hyper.epochs);
    let mut step = 0usize;
    for _epoch in 0..hyper.epochs {
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        let mut epoch_loss = 0.0;
        let mut batches = 0.0;
        for chunk in order.chunks(hyper.batch_size) {
            let batch: Vec<(&Instance, usize)> = chunk.iter().map(|&i| train[i]).collect();
            let (loss, gw, gb) = model.loss_and_grad(&batch);
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    step,
                    msg: format!("loss = {loss}"),
                });
            }
            for li in 0..model.layers.len() {
                for (v, g) in vw[li].iter_mut().zip(&gw[li]) {
                    *v = hyper.momentum * *v - hyper.learning_rate * g;
                }
                for (v, g) in vb[li].iter_mut().zip(&gb[li]) {
                    *v = hyper.momentum * *v - hyper.learning_rate * g;
                }
                for (w, v) in model.layers[li].weights.iter_mut().zip(&vw[li]) {
                    *w += v;
                }
                for (b, v) in model.layers[li].biases.iter_mut().zip(&vb[li]) {
                    *b += v;
                }
            }
            epoch_loss += loss;
            batches += 1.0;
            step += 1;
        }
        epoch_losses.push(epoch_loss / batches);
    }
    Ok((
        model,
        TrainingCurve {
            epoch_losses,
            initial_loss,
        },
    ))
}

/// Accuracy over an iterator of labeled instances.
pub fn accuracy<'a>(
    model: &dyn PredictiveModel,
    samples: impl Iterator<Item = (&'a Instance, usize)>,
) -> Result<Real> {
    let mut correct = 0usize;
    let mut total = 0usize;
    for (x, label) in samples {
        let p = model.predict_proba(x)?;
        let pred = p
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        correct += usize::from(pred == label);
        total += 1;
    }
    if total == 0 {
        return Err(Error::Empty);
    }
    Ok(correct as Real / total as Real)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_linear;
    use rand::Rng;

    #[test]
    fn uniform_stub_scalar() {
        let m = UniformModel { classes: 4 };
        let tm = TargetedModel::new(&m, 0).unwrap();
        let x = Instance::from_row(vec![1.0, 2.0]).unwrap();
        assert_eq!(tm.f_scalar(&x).unwrap(), 0.25);
    }

    #[test]
    fn zero_weight_linear_softmax_is_uniform() {
        let mut m = MlpModel::linear(3, 1, 4);
        for c in 0..4 {
            m.set_linear_weights(c, &[0.0, 0.0, 0.0]);
        }
        let x = Instance::from_row(vec![0.3, -1.0, 2.0]).unwrap();
        let p = m.predict_proba(&x).unwrap();
        for v in p {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn probabilities_sum_to_one() {
        let m = MlpModel::new(4, 1, vec![8], 3, Activation::Tanh, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let x = Instance::from_row((0..4).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
            let p = m.predict_proba(&x).unwrap();
            let sum: f64 = p.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(p.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn constant_model_zero_gradient() {
        let m = UniformModel { classes: 3 };
        let tm = TargetedModel::new(&m, 1).unwrap();
        let x = Instance::from_row(vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(tm.input_gradient(&x).unwrap(), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let m = MlpModel::new(5, 1, vec![7, 6], 3, Activation::Tanh, 13);
        let tm = TargetedModel::new(&m, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let x = Instance::from_row((0..5).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            let analytic = tm.input_gradient(&x).unwrap();
            let fd = tm.fd_gradient(&x, 1e-4).unwrap();
            for (a, f) in analytic.iter().zip(&fd) {
                let scale = a.abs().max(f.abs()).max(1e-6);
                assert!((a - f).abs() / scale < 1e-4, "analytic {a} vs fd {f}");
            }
        }
    }

    #[test]
    fn linear_softmax_two_class_gradient_closed_form() {
        let mut m = MlpModel::linear(3, 1, 2);
        let w0 = [0.5, -0.2, 0.1];
        let w1 = [0.3, 0.4, -0.6];
        m.set_linear_weights(0, &w0);
        m.set_linear_weights(1, &w1);
        let tm = TargetedModel::new(&m, 1).unwrap();
        let x = Instance::from_row(vec![0.2, 0.7, -0.3]).unwrap();
        let p = tm.f_scalar(&x).unwrap();
        let g = tm.input_gradient(&x).unwrap();
        for i in 0..3 {
            let expected = p * (1.0 - p) * (w1[i] - w0[i]);
            assert!((g[i] - expected).abs() < 1e-10);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let (ds, _) = synth_linear(6, 120, 3).unwrap();
        let hyper = TrainHyperparams {
            epochs: 10,
            ..Default::default()
        };
        let (a, _) = train_model(&ds, vec![8], Activation::Tanh, &hyper, 42).unwrap();
        let (b, _) = train_model(&ds, vec![8], Activation::Tanh, &hyper, 42).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn training_reaches_accuracy_and_reduces_loss() {
        let (ds, _) = synth_linear(8, 400, 9).unwrap();
        let (model, curve) = train_model(
            &ds,
            vec![16],
            Activation::Tanh,
            &TrainHyperparams::default(),
            1,
        )
        .unwrap();
        let acc = accuracy(&model, ds.test_instances()).unwrap();
        assert!(acc >= 0.9, "held-out accuracy {acc}");
        assert!(*curve.epoch_losses.last().unwrap() < curve.initial_loss);
    }

    #[test]
    fn checkpoint_roundtrip() {
        let (ds, _) = synth_linear(4, 60, 2).unwrap();
        let hyper = TrainHyperparams {
            epochs: 5,
            ..Default::default()
        };
        let (model, _) = train_model(&ds, vec![6], Activation::Tanh, &hyper, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.save(&path).unwrap();
        let loaded = MlpModel::load(&path).unwrap();
        let x = ds.instances[0].clone();
        assert_eq!(
            model.predict_proba(&x).unwrap(),
            loaded.predict_proba(&x).unwrap()
        );
    }

    #[test]
    fn shape_mismatch_rejected() {
        let m = MlpModel::linear(3, 1, 2);
        let x = Instance::from_row(vec![1.0, 2.0]).unwrap();
        assert!(m.predict_proba(&x).is_err());
    }
}

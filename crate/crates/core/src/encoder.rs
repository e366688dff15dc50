//! Feed-forward query encoder.
//!
//! Each hidden layer is affine followed by `tanh`; the last layer is affine
//! and produces the pre-activation `z`, whose `tanh` is the relaxed code
//! `u`. Batches are row-major: one sample per row.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};
use crate::hashcore::CodeMatrix;
use crate::scalar::Scalar;

/// Affine layer, `weights` is `out x in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub weights: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Scalar> Dense<T> {
    fn zeros(input: usize, output: usize) -> Self {
        Self {
            weights: Array2::zeros((output, input)),
            bias: Array1::zeros(output),
        }
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(self.weights.ncols(), self.weights.nrows())
    }

    fn is_finite(&self) -> bool {
        self.weights.iter().chain(self.bias.iter()).all(|x| x.is_finite())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Encoder<T> {
    layers: Vec<Dense<T>>,
}

/// Activations kept from a forward pass for backpropagation.
#[derive(Clone, Debug)]
pub struct ForwardPass<T> {
    /// Layer inputs: the batch itself, then every hidden activation.
    inputs: Vec<Array2<T>>,
    pub z: Array2<T>,
    pub u: Array2<T>,
}

/// Parameter gradients, laid out like the encoder's layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<Dense<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(Dense::is_finite)
    }

    pub fn flatten(&self) -> Vec<T> {
        flatten_layers(&self.layers)
    }
}

fn flatten_layers<T: Scalar>(layers: &[Dense<T>]) -> Vec<T> {
    layers
        .iter()
        .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
        .collect()
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(Error::invalid("encoder needs at least input and output dimensions"));
    }
    if dims.contains(&0) {
        return Err(Error::invalid("encoder dimensions must be positive"));
    }
    Ok(())
}

impl<T: Scalar> Encoder<T> {
    /// Uniform `±sqrt(6 / (fan_in + fan_out))` weights, zero biases.
    /// `dims` is `[input, hidden..., code_len]`.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        check_dims(dims)?;
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
                Dense {
                    weights: Array2::from_shape_simple_fn((fan_out, fan_in), || T::of(dist.sample(rng))),
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        check_dims(dims)?;
        Ok(Self {
            layers: dims.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
        })
    }

    pub fn from_layers(layers: Vec<Dense<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("encoder needs at least one layer"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.weights.nrows() {
                return Err(Error::dim("layer bias", l.weights.nrows(), l.bias.len()));
            }
            if l.weights.is_empty() {
                return Err(Error::invalid(format!("layer {i} is empty")));
            }
            if i > 0 && layers[i - 1].weights.nrows() != l.weights.ncols() {
                return Err(Error::dim("layer input", layers[i - 1].weights.nrows(), l.weights.ncols()));
            }
            if !l.is_finite() {
                return Err(Error::NonFinite(format!("layer {i} parameters")));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Dense<T>] {
        &self.layers
    }

    /// `[input, hidden..., code_len]`.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.weights.nrows()))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    pub fn code_len(&self) -> usize {
        self.layers[self.layers.len() - 1].weights.nrows()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(Dense::is_finite)
    }

    /// Parameters in layer order, each layer's weights (row-major) then bias.
    pub fn flat_params(&self) -> Vec<T> {
        flatten_layers(&self.layers)
    }

    pub fn set_flat_params(&mut self, params: &[T]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::dim("parameter vector", self.param_count(), params.len()));
        }
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|p| *p = it.next().unwrap());
        }
        Ok(())
    }

    /// Returns `(z, tanh(z))` for one feature vector.
    pub fn forward(&self, x: ArrayView1<'_, T>) -> Result<(Array1<T>, Array1<T>)> {
        let batch = x.insert_axis(Axis(0));
        let pass = self.forward_batch(batch)?;
        Ok((pass.z.row(0).to_owned(), pass.u.row(0).to_owned()))
    }

    pub fn forward_batch(&self, x: ArrayView2<'_, T>) -> Result<ForwardPass<T>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::dim("feature dimension", self.input_dim(), x.ncols()));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut next = h.dot(&layer.weights.t());
            next += &layer.bias;
            inputs.push(h);
            if i < last {
                next.mapv_inplace(|v| v.tanh());
            }
            h = next;
        }
        let z = h;
        let u = z.mapv(|v| v.tanh());
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("encoder output".into()));
        }
        Ok(ForwardPass { inputs, z, u })
    }

    /// Backpropagates `dJ/dz` (one row per sample) to parameter gradients.
    pub fn backward(&self, pass: &ForwardPass<T>, grad_z: ArrayView2<'_, T>) -> Result<Gradients<T>> {
        if grad_z.dim() != pass.z.dim() {
            return Err(Error::dim("gradient rows", pass.z.nrows(), grad_z.nrows()));
        }
        let mut grads: Vec<Dense<T>> = Vec::with_capacity(self.layers.len());
        let mut delta = grad_z.to_owned();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &pass.inputs[i];
            let g = Dense {
                weights: delta.t().dot(input),
                bias: delta.sum_axis(Axis(0)),
            };
            grads.push(g);
            if i > 0 {
                let mut back = delta.dot(&layer.weights);
                // input is tanh of the previous pre-activation
                Zip::from(&mut back).and(input).for_each(|b, &h| *b *= T::one() - h * h);
                delta = back;
            }
        }
        grads.reverse();
        Ok(Gradients { layers: grads })
    }
}

/// Update rule for the encoder parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptimizerKind {
    /// Plain gradient descent.
    Sgd,
    /// Adaptive moments with bias correction.
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Optimizer<T> {
    lr: T,
    kind: OptimizerKind,
    step: u64,
    first: Vec<Dense<T>>,
    second: Vec<Dense<T>>,
}

impl<T: Scalar> Optimizer<T> {
    /// `lr` must be non-negative; a zero rate leaves parameters untouched.
    pub fn new(lr: f64, kind: OptimizerKind) -> Result<Self> {
        if !lr.is_finite() || lr < 0.0 {
            return Err(Error::invalid(format!("learning rate {lr} must be finite and non-negative")));
        }
        Ok(Self {
            lr: T::of(lr),
            kind,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        })
    }

    pub fn sgd(lr: f64) -> Result<Self> {
        Self::new(lr, OptimizerKind::Sgd)
    }

    pub fn learning_rate(&self) -> T {
        self.lr
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn apply(&mut self, model: &mut Encoder<T>, grads: &Gradients<T>) -> Result<()> {
        if grads.layers.len() != model.layers.len() {
            return Err(Error::dim("gradient layers", model.layers.len(), grads.layers.len()));
        }
        self.step += 1;
        let lr = self.lr;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in model.layers.iter_mut().zip(&grads.layers) {
                    p.weights.scaled_add(-lr, &g.weights);
                    p.bias.scaled_add(-lr, &g.bias);
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                if self.first.is_empty() {
                    self.first = model.layers.iter().map(Dense::zeros_like).collect();
                    self.second = model.layers.iter().map(Dense::zeros_like).collect();
                }
                let (b1, b2, eps) = (T::of(beta1), T::of(beta2), T::of(eps));
                let t = self.step as i32;
                let c1 = T::one() - b1.powi(t);
                let c2 = T::one() - b2.powi(t);
                let update = |p: &mut T, m: &mut T, v: &mut T, g: T| {
                    *m = b1 * *m + (T::one() - b1) * g;
                    *v = b2 * *v + (T::one() - b2) * g * g;
                    let mh = *m / c1;
                    let vh = *v / c2;
                    *p -= lr * mh / (vh.sqrt() + eps);
                };
                for (((p, g), m), v) in model
                    .layers
                    .iter_mut()
                    .zip(&grads.layers)
                    .zip(&mut self.first)
                    .zip(&mut self.second)
                {
                    Zip::from(&mut p.weights)
                        .and(&mut m.weights)
                        .and(&mut v.weights)
                        .and(&g.weights)
                        .for_each(|p, m, v, &g| update(p, m, v, g));
                    Zip::from(&mut p.bias)
                        .and(&mut m.bias)
                        .and(&mut v.bias)
                        .and(&g.bias)
                        .for_each(|p, m, v, &g| update(p, m, v, g));
                }
            }
        }
        Ok(())
    }
}

/// What a batch of relaxed query codes is fitted against.
#[derive(Clone, Copy, Debug)]
pub struct BatchTarget<'a, T> {
    /// Database codes, `n x c`. Entries are ±1 for the asymmetric loss; the
    /// symmetric baseline passes relaxed codes here.
    pub db: ArrayView2<'a, T>,
    /// Similarity rows of the batch, `B x n`.
    pub signs: ArrayView2<'a, i8>,
    /// Weight of dissimilar pairs.
    pub neg_weight: T,
    /// Database codes of the batch points themselves (`B x c`), present
    /// when queries are sampled from the database.
    pub own: Option<ArrayView2<'a, T>>,
    pub gamma: T,
    /// Multiplier on loss and gradient; 1 for the plain batch sum.
    pub scale: T,
}

/// Batch loss and `dJ/dz`, given the relaxed codes `u = tanh(z)` (`B x c`).
///
/// Loss per query `i`: `sum_j w_ij (u_i.v_j - c S_ij)^2 + gamma |v_i - u_i|^2`.
pub fn batch_loss_grad_z<T: Scalar>(u: ArrayView2<'_, T>, target: &BatchTarget<'_, T>) -> Result<(f64, Array2<T>)> {
    let (b, c) = u.dim();
    if target.db.ncols() != c {
        return Err(Error::dim("database code length", c, target.db.ncols()));
    }
    if target.signs.dim() != (b, target.db.nrows()) {
        return Err(Error::dim("similarity rows", b, target.signs.nrows()));
    }
    let code_len = T::of(c as f64);
    let two = T::of(2.0);
    let mut residual = u.dot(&target.db.t());
    let mut loss = 0.0f64;
    Zip::from(&mut residual).and(target.signs).for_each(|r, &s| {
        let (w, cs) = if s > 0 {
            (T::one(), code_len)
        } else {
            (target.neg_weight, -code_len)
        };
        let diff = *r - cs;
        loss += (w * diff * diff).as_f64();
        *r = w * diff;
    });
    let mut grad_u = residual.dot(&target.db);
    grad_u.mapv_inplace(|g| g * two);
    if let Some(own) = target.own {
        if own.dim() != (b, c) {
            return Err(Error::dim("own code rows", b, own.nrows()));
        }
        let gamma = target.gamma;
        Zip::from(&mut grad_u).and(u).and(own).for_each(|g, &ui, &vi| {
            let d = ui - vi;
            loss += (gamma * d * d).as_f64();
            *g += two * gamma * d;
        });
    }
    Zip::from(&mut grad_u)
        .and(u)
        .for_each(|g, &ui| *g *= target.scale * (T::one() - ui * ui));
    Ok((loss * target.scale.as_f64(), grad_u))
}

/// `dJ/dz_i` for a single query, including the regularizer when `own` is
/// given.
pub fn loss_grad_z<T: Scalar>(
    u_i: ArrayView1<'_, T>,
    db: ArrayView2<'_, T>,
    signs: ArrayView1<'_, i8>,
    neg_weight: T,
    own: Option<ArrayView1<'_, T>>,
    gamma: T,
) -> Result<Array1<T>> {
    let own2 = own.map(|o| o.insert_axis(Axis(0)));
    if let Some(o) = &own2 {
        if o.ncols() != u_i.len() {
            return Err(Error::dim("own code length", u_i.len(), o.ncols()));
        }
    }
    let target = BatchTarget {
        db,
        signs: signs.insert_axis(Axis(0)),
        neg_weight,
        own: own2,
        gamma,
        scale: T::one(),
    };
    let (_, g) = batch_loss_grad_z(u_i.insert_axis(Axis(0)), &target)?;
    Ok(g.row(0).to_owned())
}

/// One descent step on the loss of the batch `x`. Returns the batch loss
/// before the step. The model is untouched if any gradient is non-finite.
pub fn minibatch_step<T: Scalar>(
    model: &mut Encoder<T>,
    optimizer: &mut Optimizer<T>,
    x: ArrayView2<'_, T>,
    target: &BatchTarget<'_, T>,
) -> Result<f64> {
    if x.nrows() == 0 {
        return Err(Error::invalid("empty minibatch"));
    }
    let pass = model.forward_batch(x)?;
    let (loss, grad_z) = batch_loss_grad_z(pass.u.view(), target)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("minibatch loss {loss}")));
    }
    let grads = model.backward(&pass, grad_z.view())?;
    if !grads.is_finite() {
        return Err(Error::NonFinite("parameter gradient".into()));
    }
    optimizer.apply(model, &grads)?;
    if !model.is_finite() {
        return Err(Error::NonFinite("parameters after update".into()));
    }
    Ok(loss)
}

const ENCODE_CHUNK: usize = 1024;

/// Hash codes `sign(z)` for feature rows.
pub fn encode_queries<T: Scalar>(model: &Encoder<T>, x: ArrayView2<'_, T>) -> Result<CodeMatrix> {
    relaxed_codes(model, x).and_then(|z| CodeMatrix::from_real_signs(z.view()))
}

/// Pre-activations `z` for feature rows, computed in bounded chunks.
fn relaxed_codes<T: Scalar>(model: &Encoder<T>, x: ArrayView2<'_, T>) -> Result<Array2<T>> {
    let mut z = Array2::zeros((x.nrows(), model.code_len()));
    let mut start = 0;
    while start < x.nrows() {
        let end = (start + ENCODE_CHUNK).min(x.nrows());
        let pass = model.forward_batch(x.slice(s![start..end, ..]))?;
        z.slice_mut(s![start..end, ..]).assign(&pass.z);
        start = end;
    }
    Ok(z)
}

/// `tanh(F(x))` for feature rows, chunked like [`encode_queries`].
pub fn relaxed_outputs<T: Scalar>(model: &Encoder<T>, x: ArrayView2<'_, T>) -> Result<Array2<T>> {
    relaxed_codes(model, x).map(|z| z.mapv(|v| v.tanh()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn zero_network_outputs_zero() {
        let m = Encoder::<f64>::zeros(&[3, 5, 2]).unwrap();
        let (z, u) = m.forward(array![1.0, -2.0, 0.5].view()).unwrap();
        assert_eq!(z, array![0.0, 0.0]);
        assert_eq!(u, array![0.0, 0.0]);
    }

    #[test]
    fn identity_layer() {
        let layer = Dense {
            weights: Array2::eye(2),
            bias: Array1::zeros(2),
        };
        let m = Encoder::from_layers(vec![layer]).unwrap();
        let (z, u) = m.forward(array![2.0, -2.0].view()).unwrap();
        assert_eq!(z, array![2.0, -2.0]);
        assert_abs_diff_eq!(u[0], 0.964_027_580_075_817, epsilon = 1e-12);
        assert_abs_diff_eq!(u[1], -0.964_027_580_075_817, epsilon = 1e-12);
    }

    #[test]
    fn outputs_stay_inside_unit_interval() {
        let m = Encoder::<f64>::new(&[4, 8, 6], &mut rng(1)).unwrap();
        let x = Array::from_shape_fn((20, 4), |(i, j)| (i as f64 - 10.0) * (j as f64 + 0.5));
        let pass = m.forward_batch(x.view()).unwrap();
        assert!(pass.u.iter().all(|v| v.abs() <= 1.0));
        assert_eq!(m.dims(), vec![4, 8, 6]);
        assert_eq!(m.code_len(), 6);
    }

    #[test]
    fn dimension_errors() {
        let m = Encoder::<f64>::zeros(&[3, 2]).unwrap();
        assert!(m.forward(array![1.0, 2.0].view()).is_err());
        assert!(Encoder::<f64>::zeros(&[3]).is_err());
        assert!(Encoder::<f64>::zeros(&[3, 0, 2]).is_err());
        let bad = vec![
            Dense { weights: Array2::<f64>::zeros((4, 3)), bias: Array1::zeros(4) },
            Dense { weights: Array2::zeros((2, 5)), bias: Array1::zeros(2) },
        ];
        assert!(Encoder::from_layers(bad).is_err());
    }

    #[test]
    fn xavier_bounds_and_zero_bias() {
        let m = Encoder::<f64>::new(&[10, 30], &mut rng(2)).unwrap();
        let limit = (6.0f64 / 40.0).sqrt();
        assert!(m.layers()[0].weights.iter().all(|w| w.abs() <= limit));
        assert!(m.layers()[0].bias.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn grad_z_hand_example() {
        let db = array![[1.0, 1.0]];
        let signs = array![1i8];
        let g = loss_grad_z(array![0.0, 0.0].view(), db.view(), signs.view(), 1.0, None, 0.0).unwrap();
        assert_eq!(g, array![-4.0, -4.0]);
    }

    #[test]
    fn grad_z_vanishes_at_stationary_point() {
        // u = v_i, and the pairwise term is balanced: one similar pair with
        // u.v = c is impossible for |u| < 1, so use a pair whose residual is
        // zero by construction: u.v_j = c S_ij with S = -1 and u = 0.
        let u = array![0.0, 0.0];
        let db = array![[1.0, -1.0], [-1.0, 1.0]];
        let signs = array![-1i8, -1];
        // residuals are 2 for both, contributions cancel: v_0 + v_1 = 0
        let g = loss_grad_z(u.view(), db.view(), signs.view(), 1.0, Some(u.view()), 5.0).unwrap();
        assert_eq!(g, array![0.0, 0.0]);
    }

    #[test]
    fn grad_z_damped_by_saturation() {
        let db = array![[1.0, 1.0, -1.0]];
        let signs = array![-1i8];
        let mut last = f64::INFINITY;
        for &x in &[0.9, 0.99, 0.999, 0.999_999] {
            let u = array![x, x, x];
            let g = loss_grad_z(u.view(), db.view(), signs.view(), 1.0, None, 0.0).unwrap();
            let mag = g.iter().map(|v: &f64| v.abs()).fold(0.0, f64::max);
            assert!(mag < last);
            last = mag;
        }
        assert!(last < 1e-4);
    }

    #[test]
    fn grad_z_dimension_mismatch() {
        let db = array![[1.0, 1.0, 1.0]];
        let signs = array![1i8];
        assert!(loss_grad_z(array![0.1, 0.2].view(), db.view(), signs.view(), 1.0, None, 0.0).is_err());
        let db2 = array![[1.0, 1.0]];
        let signs2 = array![1i8, 1];
        assert!(loss_grad_z(array![0.1, 0.2].view(), db2.view(), signs2.view(), 1.0, None, 0.0).is_err());
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let mut m = Encoder::<f64>::new(&[3, 4, 2], &mut rng(3)).unwrap();
        let before = m.clone();
        let mut opt = Optimizer::sgd(0.0).unwrap();
        let x = array![[0.1, 0.2, 0.3], [-1.0, 0.5, 0.0]];
        let db = array![[1.0, -1.0], [1.0, 1.0], [-1.0, -1.0]];
        let signs = array![[1i8, -1, -1], [-1, 1, -1]];
        let target = BatchTarget {
            db: db.view(),
            signs: signs.view(),
            neg_weight: 0.5,
            own: None,
            gamma: 0.0,
            scale: 1.0,
        };
        minibatch_step(&mut m, &mut opt, x.view(), &target).unwrap();
        assert_eq!(m, before);
        assert_eq!(opt.steps(), 1);
    }

    #[test]
    fn sgd_moves_by_lr_times_gradient() {
        let mut m = Encoder::from_layers(vec![Dense {
            weights: array![[0.5]],
            bias: array![0.0],
        }])
        .unwrap();
        let grads = Gradients {
            layers: vec![Dense {
                weights: array![[2.0]],
                bias: array![-1.0],
            }],
        };
        let mut opt = Optimizer::sgd(0.1).unwrap();
        opt.apply(&mut m, &grads).unwrap();
        assert_abs_diff_eq!(m.layers()[0].weights[[0, 0]], 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(m.layers()[0].bias[0], 0.1, epsilon = 1e-15);
        assert!(Optimizer::<f64>::sgd(-1.0).is_err());
    }

    #[test]
    fn adam_first_step_has_lr_magnitude() {
        let mut m = Encoder::from_layers(vec![Dense {
            weights: array![[0.0, 0.0]],
            bias: array![0.0],
        }])
        .unwrap();
        let grads = Gradients {
            layers: vec![Dense {
                weights: array![[3.0, -0.01]],
                bias: array![0.0],
            }],
        };
        let mut opt = Optimizer::new(0.01, OptimizerKind::adam()).unwrap();
        opt.apply(&mut m, &grads).unwrap();
        let w = &m.layers()[0].weights;
        assert_abs_diff_eq!(w[[0, 0]], -0.01, epsilon = 1e-8);
        assert_abs_diff_eq!(w[[0, 1]], 0.01, epsilon = 1e-6);
        assert_eq!(m.layers()[0].bias[0], 0.0);
    }

    #[test]
    fn non_finite_gradient_leaves_model_untouched() {
        let mut m = Encoder::<f64>::new(&[2, 2], &mut rng(4)).unwrap();
        let before = m.clone();
        let mut opt = Optimizer::sgd(0.1).unwrap();
        let x = array![[0.3, -0.3]];
        let db = array![[1.0, 1.0]];
        let signs = array![[1i8]];
        let target = BatchTarget {
            db: db.view(),
            signs: signs.view(),
            neg_weight: 1.0,
            own: None,
            gamma: 0.0,
            scale: f64::NAN,
        };
        let err = minibatch_step(&mut m, &mut opt, x.view(), &target).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
        assert_eq!(m, before);
    }

    #[test]
    fn encode_matches_sign_of_relaxed_outputs() {
        let m = Encoder::<f64>::new(&[5, 7, 9], &mut rng(5)).unwrap();
        let x = Array::from_shape_fn((2100, 5), |(i, j)| ((i * 7 + j * 3) % 11) as f64 / 5.0 - 1.0);
        let codes = encode_queries(&m, x.view()).unwrap();
        let pass = m.forward_batch(x.view()).unwrap();
        assert_eq!(codes, CodeMatrix::from_real_signs(pass.u.view()).unwrap());
        assert_eq!(codes.rows(), 2100);
    }

    #[test]
    fn flat_params_round_trip() {
        let m = Encoder::<f64>::new(&[3, 4, 2], &mut rng(6)).unwrap();
        let mut other = Encoder::zeros(&[3, 4, 2]).unwrap();
        other.set_flat_params(&m.flat_params()).unwrap();
        assert_eq!(other, m);
        assert!(other.set_flat_params(&[0.0]).is_err());
    }
}

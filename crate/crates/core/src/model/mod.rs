//! Sigmoid multilayer perceptron with exact first and second order information.
//!
//! # Parameter layout
//!
//! The flat parameter vector stores, for each layer in order, the weight
//! block (row-major, `fan_out × fan_in`, row `o` holds the incoming weights
//! of unit `o`) followed by the bias block (`fan_out`). This layout is fixed;
//! indices into a parameter vector are stable across runs.
//!
//! All losses are averaged over the examples of a batch and summed over
//! output units.

mod dual;

pub use dual::{Dual, Scalar};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::estimators::HvpOracle;
use crate::linalg::DenseMatrix;

/// Default upper bound on `N` for routines that materialise `N` HVPs.
pub const DEFAULT_HESSIAN_CAP: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    SoftmaxCrossEntropy,
    SigmoidBinaryCrossEntropy,
    LinearMse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    #[default]
    Sigmoid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: Activation,
    pub loss: LossKind,
}

/// Offsets of one layer inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerLayout {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weights: usize,
    pub bias: usize,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>, loss: LossKind) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::Precondition("an MLP needs at least two layers".into()));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::Precondition("layer sizes must be at least 1".into()));
        }
        Ok(Self {
            layer_sizes,
            hidden_activation: Activation::Sigmoid,
            loss,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("validated")
    }

    pub fn layout(&self) -> Vec<LayerLayout> {
        let mut offset = 0;
        self.layer_sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let weights = offset;
                let bias = weights + fan_in * fan_out;
                offset = bias + fan_out;
                LayerLayout {
                    fan_in,
                    fan_out,
                    weights,
                    bias,
                }
            })
            .collect()
    }

    /// `N = Σ (fan_in + 1) · fan_out`.
    pub fn num_params(&self) -> usize {
        self.layer_sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }

    fn check(&self, params_len: usize, batch: &Batch) -> Result<()> {
        check_dim(self.num_params(), params_len)?;
        if batch.inputs.cols() != self.input_dim() {
            return Err(Error::Precondition(format!(
                "batch input dim {} does not match network input {}",
                batch.inputs.cols(),
                self.input_dim()
            )));
        }
        if batch.targets.cols() != self.output_dim() {
            return Err(Error::Precondition(format!(
                "batch target dim {} does not match network output {}",
                batch.targets.cols(),
                self.output_dim()
            )));
        }
        if batch.is_empty() {
            return Err(Error::Precondition("batch is empty".into()));
        }
        Ok(())
    }
}

/// Inputs and targets, one example per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: DenseMatrix,
    pub targets: DenseMatrix,
}

impl Batch {
    pub fn new(inputs: DenseMatrix, targets: DenseMatrix) -> Result<Self> {
        if inputs.rows() != targets.rows() {
            return Err(Error::Precondition(format!(
                "{} input rows but {} target rows",
                inputs.rows(),
                targets.rows()
            )));
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rows `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Batch {
        let pick = |m: &DenseMatrix| {
            let mut data = Vec::with_capacity(indices.len() * m.cols());
            for &i in indices {
                data.extend_from_slice(m.row(i));
            }
            DenseMatrix::new(indices.len(), m.cols(), data).expect("rows of a valid matrix")
        };
        Batch {
            inputs: pick(&self.inputs),
            targets: pick(&self.targets),
        }
    }

    /// The same examples listed twice.
    pub fn duplicated(&self) -> Batch {
        let idx: Vec<usize> = (0..self.len()).chain(0..self.len()).collect();
        self.select(&idx)
    }
}

struct Workspace<T> {
    acts: Vec<Vec<T>>,
    deltas: Vec<Vec<T>>,
}

impl<T: Scalar> Workspace<T> {
    fn new(spec: &MlpSpec) -> Self {
        let zero = T::from_f64(0.0);
        Self {
            acts: spec.layer_sizes.iter().map(|&n| vec![zero; n]).collect(),
            deltas: spec.layer_sizes.iter().map(|&n| vec![zero; n]).collect(),
        }
    }
}

/// Fills `acts`: hidden layers hold sigmoid outputs, the last layer holds
/// the pre-activation fed to the loss.
fn forward<T: Scalar>(layout: &[LayerLayout], params: &[T], x: &[f64], acts: &mut [Vec<T>]) {
    for (a, &xi) in acts[0].iter_mut().zip(x) {
        *a = T::from_f64(xi);
    }
    let last = layout.len() - 1;
    for (l, lay) in layout.iter().enumerate() {
        let (head, tail) = acts.split_at_mut(l + 1);
        let input = &head[l];
        let output = &mut tail[0];
        for (o, out) in output.iter_mut().enumerate() {
            let row = &params[lay.weights + o * lay.fan_in..lay.weights + (o + 1) * lay.fan_in];
            let mut z = params[lay.bias + o];
            for (w, a) in row.iter().zip(input) {
                z += *w * *a;
            }
            *out = if l == last { z } else { z.sigmoid() };
        }
    }
}

/// Loss of one example and `∂loss/∂z` written into `delta`.
fn output_loss<T: Scalar>(loss: LossKind, z: &[T], t: &[f64], delta: &mut [T]) -> T {
    let mut total = T::from_f64(0.0);
    match loss {
        LossKind::SoftmaxCrossEntropy => {
            let m = z.iter().fold(f64::NEG_INFINITY, |m, zk| m.max(zk.value()));
            let shift = T::from_f64(m);
            let mut sum = T::from_f64(0.0);
            for &zk in z {
                sum += (zk - shift).exp();
            }
            let lse = shift + sum.ln();
            let t_sum: f64 = t.iter().sum();
            for ((d, &zk), &tk) in delta.iter_mut().zip(z).zip(t) {
                let p = (zk - lse).exp();
                total += (lse - zk).scale(tk);
                *d = p.scale(t_sum) - T::from_f64(tk);
            }
        }
        LossKind::SigmoidBinaryCrossEntropy => {
            for ((d, &zk), &tk) in delta.iter_mut().zip(z).zip(t) {
                total += zk.softplus() - zk.scale(tk);
                *d = zk.sigmoid() - T::from_f64(tk);
            }
        }
        LossKind::LinearMse => {
            for ((d, &zk), &tk) in delta.iter_mut().zip(z).zip(t) {
                let r = zk - T::from_f64(tk);
                total += r * r;
                *d = r.scale(2.0);
            }
        }
    }
    total
}

/// Accumulates `scale · ∂(δᵀz_out)/∂θ` into `grad`, starting from the output
/// delta already stored in `ws.deltas[last]`.
fn backward<T: Scalar>(layout: &[LayerLayout], params: &[T], ws: &mut Workspace<T>, grad: &mut [T], scale: f64) {
    let one = T::from_f64(1.0);
    let n_layers = layout.len();
    for d in ws.deltas[n_layers].iter_mut() {
        *d = d.scale(scale);
    }
    for l in (0..n_layers).rev() {
        let lay = layout[l];
        let (lower, upper) = ws.deltas.split_at_mut(l + 1);
        let delta = &upper[0];
        let input = &ws.acts[l];
        for (o, &d) in delta.iter().enumerate() {
            grad[lay.bias + o] += d;
            let g = &mut grad[lay.weights + o * lay.fan_in..lay.weights + (o + 1) * lay.fan_in];
            for (gi, &a) in g.iter_mut().zip(input) {
                *gi += d * a;
            }
        }
        if l > 0 {
            let prev = &mut lower[l];
            for (i, p) in prev.iter_mut().enumerate() {
                let mut s = T::from_f64(0.0);
                for (o, &d) in delta.iter().enumerate() {
                    s += params[lay.weights + o * lay.fan_in + i] * d;
                }
                let a = input[i];
                *p = s * a * (one - a);
            }
        }
    }
}

fn evaluate<T: Scalar>(spec: &MlpSpec, params: &[T], batch: &Batch, want_grad: bool) -> (T, Vec<T>) {
    let layout = spec.layout();
    let n_layers = layout.len();
    let inv_m = 1.0 / batch.len() as f64;
    let mut ws = Workspace::new(spec);
    let mut grad = vec![T::from_f64(0.0); if want_grad { params.len() } else { 0 }];
    let mut total = T::from_f64(0.0);
    for n in 0..batch.len() {
        forward(&layout, params, batch.inputs.row(n), &mut ws.acts);
        let (acts, deltas) = (&ws.acts, &mut ws.deltas);
        total += output_loss(spec.loss, &acts[n_layers], batch.targets.row(n), &mut deltas[n_layers]);
        if want_grad {
            backward(&layout, params, &mut ws, &mut grad, inv_m);
        }
    }
    (total.scale(inv_m), grad)
}

/// Mean loss over the batch.
pub fn loss(spec: &MlpSpec, params: &[f64], batch: &Batch) -> Result<f64> {
    spec.check(params.len(), batch)?;
    Ok(evaluate(spec, params, batch, false).0)
}

pub fn loss_and_gradient(spec: &MlpSpec, params: &[f64], batch: &Batch) -> Result<(f64, Vec<f64>)> {
    spec.check(params.len(), batch)?;
    Ok(evaluate(spec, params, batch, true))
}

/// Exact reverse-mode gradient of [`loss`].
pub fn gradient(spec: &MlpSpec, params: &[f64], batch: &Batch) -> Result<Vec<f64>> {
    loss_and_gradient(spec, params, batch).map(|(_, g)| g)
}

/// `H v` at `params`, by pushing the dual perturbation `θ + εv` through the
/// gradient computation.
pub fn hvp(spec: &MlpSpec, params: &[f64], batch: &Batch, v: &[f64]) -> Result<Vec<f64>> {
    spec.check(params.len(), batch)?;
    check_dim(params.len(), v.len())?;
    let dual: Vec<Dual> = params.iter().zip(v).map(|(&p, &d)| Dual::new(p, d)).collect();
    let (_, grad) = evaluate(spec, &dual, batch, true);
    Ok(grad.into_iter().map(|g| g.eps).collect())
}

/// Per-example `∂loss_n/∂z_out`, one row per example (not divided by the
/// batch size).
pub fn output_gradients(spec: &MlpSpec, params: &[f64], batch: &Batch) -> Result<DenseMatrix> {
    spec.check(params.len(), batch)?;
    let layout = spec.layout();
    let n_layers = layout.len();
    let mut ws = Workspace::<f64>::new(spec);
    let mut data = Vec::with_capacity(batch.len() * spec.output_dim());
    for n in 0..batch.len() {
        forward(&layout, params, batch.inputs.row(n), &mut ws.acts);
        output_loss(spec.loss, &ws.acts[n_layers], batch.targets.row(n), &mut ws.deltas[n_layers]);
        data.extend_from_slice(&ws.deltas[n_layers]);
    }
    DenseMatrix::new(batch.len(), spec.output_dim(), data)
}

/// Network outputs after the output nonlinearity implied by the loss
/// (softmax probabilities, sigmoid, or identity).
pub fn predict(spec: &MlpSpec, params: &[f64], inputs: &DenseMatrix) -> Result<DenseMatrix> {
    check_dim(spec.num_params(), params.len())?;
    check_dim(spec.input_dim(), inputs.cols())?;
    let layout = spec.layout();
    let n_layers = layout.len();
    let mut ws = Workspace::<f64>::new(spec);
    let mut data = Vec::with_capacity(inputs.rows() * spec.output_dim());
    for n in 0..inputs.rows() {
        forward(&layout, params, inputs.row(n), &mut ws.acts);
        let z = &ws.acts[n_layers];
        match spec.loss {
            LossKind::SoftmaxCrossEntropy => {
                let m = z.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
                let s: f64 = z.iter().map(|x| (x - m).exp()).sum();
                data.extend(z.iter().map(|x| (x - m).exp() / s));
            }
            LossKind::SigmoidBinaryCrossEntropy => data.extend(z.iter().map(|&x| dual::sigmoid_f64(x))),
            LossKind::LinearMse => data.extend_from_slice(z),
        }
    }
    DenseMatrix::new(inputs.rows(), spec.output_dim(), data)
}

fn check_cap(n: usize, cap: usize) -> Result<()> {
    if n > cap {
        Err(Error::Capacity { n, cap })
    } else {
        Ok(())
    }
}

/// The full Hessian, column `i` being `hvp(e_i)`, symmetrized.
pub fn exact_hessian(spec: &MlpSpec, params: &[f64], batch: &Batch) -> Result<DenseMatrix> {
    exact_hessian_with_cap(spec, params, batch, DEFAULT_HESSIAN_CAP)
}

pub fn exact_hessian_with_cap(spec: &MlpSpec, params: &[f64], batch: &Batch, cap: usize) -> Result<DenseMatrix> {
    let n = spec.num_params();
    check_cap(n, cap)?;
    spec.check(params.len(), batch)?;
    let mut e = vec![0.0; n];
    let mut columns = Vec::with_capacity(n);
    for i in 0..n {
        e[i] = 1.0;
        columns.push(hvp(spec, params, batch, &e)?);
        e[i] = 0.0;
    }
    DenseMatrix::from_columns(n, &columns)?.symmetrized()
}

/// Diagonal of the Gauss-Newton matrix `Jᵀ H_L J`, with `J` the Jacobian of
/// the output pre-activations and `H_L` the Hessian of the loss with
/// respect to them, averaged over the batch.
pub fn gauss_newton_diag(spec: &MlpSpec, params: &[f64], batch: &Batch) -> Result<Vec<f64>> {
    gauss_newton_diag_with_cap(spec, params, batch, DEFAULT_HESSIAN_CAP)
}

pub fn gauss_newton_diag_with_cap(spec: &MlpSpec, params: &[f64], batch: &Batch, cap: usize) -> Result<Vec<f64>> {
    let n = spec.num_params();
    check_cap(n, cap)?;
    spec.check(params.len(), batch)?;
    let layout = spec.layout();
    let n_layers = layout.len();
    let k_out = spec.output_dim();
    let inv_m = 1.0 / batch.len() as f64;
    let mut ws = Workspace::<f64>::new(spec);
    let mut jac = vec![vec![0.0; n]; k_out];
    let mut h_out = vec![0.0; k_out * k_out];
    let mut diag = vec![0.0; n];

    for ex in 0..batch.len() {
        forward(&layout, params, batch.inputs.row(ex), &mut ws.acts);
        let z = ws.acts[n_layers].clone();
        let t = batch.targets.row(ex);
        h_out.iter_mut().for_each(|x| *x = 0.0);
        match spec.loss {
            LossKind::SoftmaxCrossEntropy => {
                let m = z.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
                let s: f64 = z.iter().map(|x| (x - m).exp()).sum();
                let p: Vec<f64> = z.iter().map(|x| (x - m).exp() / s).collect();
                let t_sum: f64 = t.iter().sum();
                for a in 0..k_out {
                    for b in 0..k_out {
                        let d = if a == b { p[a] } else { 0.0 };
                        h_out[a * k_out + b] = t_sum * (d - p[a] * p[b]);
                    }
                }
            }
            LossKind::SigmoidBinaryCrossEntropy => {
                for a in 0..k_out {
                    let s = dual::sigmoid_f64(z[a]);
                    h_out[a * k_out + a] = s * (1.0 - s);
                }
            }
            LossKind::LinearMse => {
                for a in 0..k_out {
                    h_out[a * k_out + a] = 2.0;
                }
            }
        }
        for (k, row) in jac.iter_mut().enumerate() {
            row.iter_mut().for_each(|x| *x = 0.0);
            let out = &mut ws.deltas[n_layers];
            out.iter_mut().for_each(|x| *x = 0.0);
            out[k] = 1.0;
            backward(&layout, params, &mut ws, row, 1.0);
        }
        for (i, d) in diag.iter_mut().enumerate() {
            let mut s = 0.0;
            for a in 0..k_out {
                let ja = jac[a][i];
                if ja == 0.0 {
                    continue;
                }
                for b in 0..k_out {
                    s += ja * h_out[a * k_out + b] * jac[b][i];
                }
            }
            *d += inv_m * s;
        }
    }
    // H_L is PSD, so each entry is a nonnegative quadratic form up to roundoff.
    Ok(diag.into_iter().map(|d| d.max(0.0)).collect())
}

/// Each unit gets exactly `min(connections, fan_in)` incoming weights drawn
/// from `N(0, 1)`; all other weights and every bias are zero.
pub fn sparse_init(spec: &MlpSpec, seed: u64, connections: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = vec![0.0; spec.num_params()];
    for lay in spec.layout() {
        let k = connections.min(lay.fan_in);
        for o in 0..lay.fan_out {
            let row = lay.weights + o * lay.fan_in;
            let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, lay.fan_in, k).into_vec();
            picked.sort_unstable();
            for i in picked {
                let mut w: f64 = rng.sample(StandardNormal);
                while w == 0.0 {
                    w = rng.sample(StandardNormal);
                }
                params[row + i] = w;
            }
        }
    }
    params
}

/// Every weight and bias drawn from `N(0, std²)`.
pub fn gaussian_init(spec: &MlpSpec, seed: u64, std: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..spec.num_params())
        .map(|_| std * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// A network paired with the batch its loss is measured on.
#[derive(Debug, Clone, Copy)]
pub struct MlpObjective<'a> {
    pub spec: &'a MlpSpec,
    pub batch: &'a Batch,
}

impl<'a> MlpObjective<'a> {
    pub fn new(spec: &'a MlpSpec, batch: &'a Batch) -> Self {
        Self { spec, batch }
    }

    pub fn at(self, params: &'a [f64]) -> BoundHvp<'a> {
        BoundHvp {
            objective: self,
            params,
        }
    }
}

/// Hessian-vector products of an [`MlpObjective`] at fixed parameters.
#[derive(Debug, Clone, Copy)]
pub struct BoundHvp<'a> {
    pub objective: MlpObjective<'a>,
    pub params: &'a [f64],
}

impl HvpOracle for BoundHvp<'_> {
    fn dim(&self) -> usize {
        self.params.len()
    }

    fn hvp(&self, v: &[f64]) -> Result<Vec<f64>> {
        hvp(self.objective.spec, self.params, self.objective.batch, v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hot_batch(inputs: &[&[f64]], classes: &[usize], k: usize) -> Batch {
        let x = DenseMatrix::from_rows(inputs).unwrap();
        let mut t = DenseMatrix::zeros(classes.len(), k);
        for (n, &c) in classes.iter().enumerate() {
            t[(n, c)] = 1.0;
        }
        Batch::new(x, t).unwrap()
    }

    #[test]
    fn layout_and_count() {
        let spec = MlpSpec::new(vec![3, 4, 2], LossKind::LinearMse).unwrap();
        assert_eq!(spec.num_params(), 4 * 4 + 5 * 2);
        let l = spec.layout();
        assert_eq!(l[0], LayerLayout { fan_in: 3, fan_out: 4, weights: 0, bias: 12 });
        assert_eq!(l[1], LayerLayout { fan_in: 4, fan_out: 2, weights: 16, bias: 24 });
    }

    #[test]
    fn spec_validation() {
        assert!(MlpSpec::new(vec![3], LossKind::LinearMse).is_err());
        assert!(MlpSpec::new(vec![3, 0, 1], LossKind::LinearMse).is_err());
    }

    #[test]
    fn uniform_softmax_gives_ln_k() {
        let spec = MlpSpec::new(vec![2, 3, 4], LossKind::SoftmaxCrossEntropy).unwrap();
        let batch = one_hot_batch(&[&[0.3, -1.0], &[2.0, 0.5]], &[1, 3], 4);
        let l = loss(&spec, &vec![0.0; spec.num_params()], &batch).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn perfect_fit_mse_has_zero_loss_and_gradient() {
        // z = 2 x1 - x2 + 0.5
        let spec = MlpSpec::new(vec![2, 1], LossKind::LinearMse).unwrap();
        let params = vec![2.0, -1.0, 0.5];
        let x = DenseMatrix::from_rows(&[&[1.0, 0.0], &[0.5, 2.0], &[-1.0, 1.0]]).unwrap();
        let t = DenseMatrix::from_rows(&[&[2.5], &[-0.5], &[-2.5]]).unwrap();
        let batch = Batch::new(x, t).unwrap();
        assert_eq!(loss(&spec, &params, &batch).unwrap(), 0.0);
        assert!(gradient(&spec, &params, &batch).unwrap().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn shape_errors() {
        let spec = MlpSpec::new(vec![2, 1], LossKind::LinearMse).unwrap();
        let batch = Batch::new(DenseMatrix::zeros(2, 3), DenseMatrix::zeros(2, 1)).unwrap();
        assert!(matches!(loss(&spec, &[0.0; 3], &batch), Err(Error::Precondition(_))));
        let batch = Batch::new(DenseMatrix::zeros(2, 2), DenseMatrix::zeros(2, 1)).unwrap();
        assert!(matches!(loss(&spec, &[0.0; 4], &batch), Err(Error::DimensionMismatch { .. })));
        assert!(hvp(&spec, &[0.0; 3], &batch, &[1.0]).is_err());
        assert!(Batch::new(DenseMatrix::zeros(2, 2), DenseMatrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn capacity_guard() {
        let spec = MlpSpec::new(vec![10, 10], LossKind::LinearMse).unwrap();
        let batch = Batch::new(DenseMatrix::zeros(1, 10), DenseMatrix::zeros(1, 10)).unwrap();
        let p = vec![0.0; spec.num_params()];
        assert_eq!(
            exact_hessian_with_cap(&spec, &p, &batch, 50),
            Err(Error::Capacity { n: 110, cap: 50 })
        );
        assert!(matches!(
            gauss_newton_diag_with_cap(&spec, &p, &batch, 50),
            Err(Error::Capacity { .. })
        ));
    }

    #[test]
    fn gauss_newton_closed_form_for_linear_mse() {
        let spec = MlpSpec::new(vec![2, 1], LossKind::LinearMse).unwrap();
        let x = DenseMatrix::from_rows(&[&[1.0, 2.0], &[-0.5, 3.0], &[2.0, -1.0]]).unwrap();
        let t = DenseMatrix::from_rows(&[&[0.1], &[0.4], &[-0.2]]).unwrap();
        let batch = Batch::new(x.clone(), t).unwrap();
        let gn = gauss_newton_diag(&spec, &[0.3, -0.7, 0.2], &batch).unwrap();
        let m = 3.0;
        let sx1: f64 = (0..3).map(|n| x[(n, 0)] * x[(n, 0)]).sum();
        let sx2: f64 = (0..3).map(|n| x[(n, 1)] * x[(n, 1)]).sum();
        let expected = [2.0 / m * sx1, 2.0 / m * sx2, 2.0];
        for (g, e) in gn.iter().zip(expected) {
            assert!((g - e).abs() < 1e-12, "{g} vs {e}");
        }
    }

    #[test]
    fn gauss_newton_with_zero_inputs() {
        let spec = MlpSpec::new(vec![3, 2], LossKind::SigmoidBinaryCrossEntropy).unwrap();
        let batch = Batch::new(DenseMatrix::zeros(4, 3), DenseMatrix::zeros(4, 2)).unwrap();
        let p = gaussian_init(&spec, 1, 1.0);
        let gn = gauss_newton_diag(&spec, &p, &batch).unwrap();
        assert!(gn[..6].iter().all(|&g| g == 0.0));
        assert!(gn[6..].iter().all(|&g| g > 0.0));
    }

    #[test]
    fn sparse_init_counts() {
        let spec = MlpSpec::new(vec![784, 20, 8], LossKind::LinearMse).unwrap();
        let p = sparse_init(&spec, 42, 15);
        let l = spec.layout();
        for o in 0..20 {
            let row = &p[l[0].weights + o * 784..l[0].weights + (o + 1) * 784];
            assert_eq!(row.iter().filter(|&&w| w != 0.0).count(), 15);
        }
        for o in 0..8 {
            let row = &p[l[1].weights + o * 20..l[1].weights + (o + 1) * 20];
            assert_eq!(row.iter().filter(|&&w| w != 0.0).count(), 15);
        }
        assert!(p[l[0].bias..l[0].bias + 20].iter().all(|&b| b == 0.0));

        let small = MlpSpec::new(vec![8, 3], LossKind::LinearMse).unwrap();
        let q = sparse_init(&small, 1, 15);
        assert!(q[..24].iter().all(|&w| w != 0.0));
        assert!(q[24..].iter().all(|&b| b == 0.0));

        assert_eq!(sparse_init(&spec, 42, 15), p);
        assert_ne!(sparse_init(&spec, 43, 15), p);
    }

    #[test]
    fn softmax_output_gradients_sum_to_zero() {
        let spec = MlpSpec::new(vec![3, 5, 4], LossKind::SoftmaxCrossEntropy).unwrap();
        let batch = one_hot_batch(&[&[0.1, 2.0, -1.0], &[1.0, 1.0, 1.0], &[-3.0, 0.2, 0.7]], &[0, 2, 3], 4);
        let p = gaussian_init(&spec, 9, 1.0);
        let g = output_gradients(&spec, &p, &batch).unwrap();
        for n in 0..3 {
            assert!(g.row(n).iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn predict_softmax_rows_are_distributions() {
        let spec = MlpSpec::new(vec![2, 3, 3], LossKind::SoftmaxCrossEntropy).unwrap();
        let p = gaussian_init(&spec, 2, 1.0);
        let y = predict(&spec, &p, &DenseMatrix::from_rows(&[&[1.0, -2.0]]).unwrap()).unwrap();
        assert!((y.row(0).iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }
}

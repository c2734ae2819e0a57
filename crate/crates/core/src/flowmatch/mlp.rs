use nalgebra::DMatrix;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::VelocityField;
use crate::rng::{seeded_stream, stream};

/// Architecture header stored alongside the parameters in checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub widths: Vec<usize>,
    pub d: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub architecture: Architecture,
    pub params: Vec<f64>,
}

/// ReLU network `v̂(t, x)` with input `[t, x] ∈ R^{d+1}` and output in `R^d`.
///
/// Parameters are stored flat, layer by layer, each layer as a row-major
/// `out × in` weight matrix followed by its bias.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpVelocityModel {
    arch: Architecture,
    params: Vec<f64>,
}

/// Per-layer activations kept for the backward pass.
struct Tape {
    /// `inputs[l]` is the input to layer `l`.
    inputs: Vec<Array2<f64>>,
    output: Array2<f64>,
}

impl MlpVelocityModel {
    /// He-uniform hidden layers; the output layer is scaled down by
    /// `output_scale` (0 gives the zero field).
    pub fn new(d: usize, widths: &[usize], seed: u64, output_scale: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidArgument("model dimension must be positive".into()));
        }
        if widths.iter().any(|&w| w == 0) {
            return Err(Error::InvalidArgument("hidden widths must be positive".into()));
        }
        let arch = Architecture { widths: widths.to_vec(), d, seed };
        let mut model = Self { params: vec![0.0; Self::param_count_for(&arch)], arch };
        let mut rng = seeded_stream(seed, stream::INIT);
        let n_layers = model.n_layers();
        for l in 0..n_layers {
            let (out, inp) = model.layer_shape(l);
            let bound = (6.0 / inp as f64).sqrt() * if l + 1 == n_layers { output_scale } else { 1.0 };
            let (w_off, _) = model.layer_offsets(l);
            for p in &mut model.params[w_off..w_off + out * inp] {
                *p = bound * (2.0 * rng.random::<f64>() - 1.0);
            }
        }
        Ok(model)
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        let expected = Self::param_count_for(&ckpt.architecture);
        if ckpt.params.len() != expected {
            return Err(Error::DimensionMismatch { expected, got: ckpt.params.len() });
        }
        Ok(Self { arch: ckpt.architecture, params: ckpt.params })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint { architecture: self.arch.clone(), params: self.params.clone() }
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn sizes_of(arch: &Architecture) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(arch.widths.len() + 2);
        sizes.push(arch.d + 1);
        sizes.extend_from_slice(&arch.widths);
        sizes.push(arch.d);
        sizes
    }

    /// `Σ_l (n_{l-1} + 1) n_l`.
    pub fn param_count_for(arch: &Architecture) -> usize {
        Self::sizes_of(arch).windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn n_layers(&self) -> usize {
        self.arch.widths.len() + 1
    }

    /// `(out, in)` of layer `l`.
    fn layer_shape(&self, l: usize) -> (usize, usize) {
        let inp = if l == 0 { self.arch.d + 1 } else { self.arch.widths[l - 1] };
        let out = if l == self.arch.widths.len() { self.arch.d } else { self.arch.widths[l] };
        (out, inp)
    }

    /// Offsets of the weight block and the bias block of layer `l`.
    fn layer_offsets(&self, l: usize) -> (usize, usize) {
        let mut off = 0;
        for k in 0..l {
            let (o, i) = self.layer_shape(k);
            off += (i + 1) * o;
        }
        let (o, i) = self.layer_shape(l);
        (off, off + o * i)
    }

    pub fn weight(&self, l: usize) -> ArrayView2<'_, f64> {
        let (o, i) = self.layer_shape(l);
        let (w, _) = self.layer_offsets(l);
        ArrayView2::from_shape((o, i), &self.params[w..w + o * i]).expect("layer shape")
    }

    pub fn bias(&self, l: usize) -> ArrayView1<'_, f64> {
        let (o, _) = self.layer_shape(l);
        let (_, b) = self.layer_offsets(l);
        ArrayView1::from(&self.params[b..b + o])
    }

    fn forward(&self, inputs: ArrayView2<f64>) -> Tape {
        let n_layers = self.n_layers();
        let mut acts = Vec::with_capacity(n_layers);
        let mut a = inputs.to_owned();
        for l in 0..n_layers {
            let mut z = a.dot(&self.weight(l).t());
            z += &self.bias(l);
            if l + 1 < n_layers {
                z.mapv_inplace(|v| v.max(0.0));
            }
            acts.push(a);
            a = z;
        }
        Tape { inputs: acts, output: a }
    }

    /// Evaluates on a matrix of `[t, x]` rows.
    pub fn forward_inputs(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        if inputs.ncols() != self.arch.d + 1 {
            return Err(Error::DimensionMismatch { expected: self.arch.d + 1, got: inputs.ncols() });
        }
        Ok(self.forward(inputs).output)
    }

    pub fn model_eval(&self, t: f64, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        if x.len() != self.arch.d {
            return Err(Error::DimensionMismatch { expected: self.arch.d, got: x.len() });
        }
        Ok(VelocityField::eval(self, t, x))
    }

    /// Full-data loss `L_n = (1/n) Σ ‖v(t_i, X_{t_i}) - Y_i‖²` and its gradient.
    pub fn loss_and_grad(&self, inputs: ArrayView2<f64>, targets: ArrayView2<f64>) -> (f64, Vec<f64>) {
        let n = inputs.nrows() as f64;
        let tape = self.forward(inputs);
        let resid = &tape.output - &targets;
        let loss = resid.iter().map(|r| r * r).sum::<f64>() / n;

        let mut grad = vec![0.0; self.params.len()];
        let mut delta = resid * (2.0 / n);
        for l in (0..self.n_layers()).rev() {
            let input = &tape.inputs[l];
            let (o, i) = self.layer_shape(l);
            let (w_off, b_off) = self.layer_offsets(l);
            let gw = delta.t().dot(input);
            grad[w_off..w_off + o * i].copy_from_slice(gw.as_slice().expect("standard layout"));
            let gb = delta.sum_axis(Axis(0));
            grad[b_off..b_off + o].copy_from_slice(gb.as_slice().expect("standard layout"));
            if l > 0 {
                let mut back = delta.dot(&self.weight(l));
                // the layer input is the ReLU output of the previous layer
                back.zip_mut_with(input, |g, &a| {
                    if a <= 0.0 {
                        *g = 0.0
                    }
                });
                delta = back;
            }
        }
        (loss, grad)
    }

    pub fn loss(&self, inputs: ArrayView2<f64>, targets: ArrayView2<f64>) -> f64 {
        let out = self.forward(inputs).output;
        (&out - &targets).iter().map(|r| r * r).sum::<f64>() / inputs.nrows() as f64
    }

    /// `∏_l ‖W_l‖₂`, an upper bound on the Lipschitz constant in `(t, x)`.
    pub fn spectral_norm_product(&self) -> f64 {
        (0..self.n_layers())
            .map(|l| {
                let w = self.weight(l);
                let m = DMatrix::from_fn(w.nrows(), w.ncols(), |i, j| w[(i, j)]);
                m.singular_values().max()
            })
            .product()
    }
}

impl VelocityField for MlpVelocityModel {
    fn dim(&self) -> usize {
        self.arch.d
    }

    fn eval(&self, t: f64, x: ArrayView1<f64>) -> Array1<f64> {
        let mut input = Array2::zeros((1, self.arch.d + 1));
        input[(0, 0)] = t;
        input.slice_mut(s![0, 1..]).assign(&x);
        self.forward(input.view()).output.row(0).to_owned()
    }

    fn eval_batch(&self, t: ArrayView1<f64>, x: ArrayView2<f64>) -> Array2<f64> {
        let mut input = Array2::zeros((x.nrows(), self.arch.d + 1));
        input.column_mut(0).assign(&t);
        input.slice_mut(s![.., 1..]).assign(&x);
        self.forward(input.view()).output
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;

    use crate::rng::seeded;

    fn random_inputs(n: usize, d: usize, seed: u64) -> (Array2<f64>, Array2<f64>) {
        let mut rng = seeded(seed);
        let x = Array2::from_shape_simple_fn((n, d + 1), || 2.0 * rng.random::<f64>() - 1.0);
        let y = Array2::from_shape_simple_fn((n, d), || 2.0 * rng.random::<f64>() - 1.0);
        (x, y)
    }

    #[test]
    fn parameter_count_closed_form() {
        let m = MlpVelocityModel::new(2, &[16, 8], 0, 1.0).unwrap();
        assert_eq!(m.param_count(), 3 * 16 + 16 + 16 * 8 + 8 + 8 * 2 + 2);
        assert_eq!(m.params().len(), MlpVelocityModel::param_count_for(m.architecture()));
    }

    #[test]
    fn zero_output_layer_gives_zero_field() {
        let m = MlpVelocityModel::new(3, &[8], 5, 0.0).unwrap();
        let v = m.model_eval(0.3, array![1.0, -2.0, 0.5].view()).unwrap();
        assert!(v.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn evaluation_is_deterministic_and_checks_dims() {
        let m = MlpVelocityModel::new(2, &[8, 8], 5, 1.0).unwrap();
        let x = array![0.2, 0.9];
        assert_eq!(m.model_eval(0.5, x.view()).unwrap(), m.model_eval(0.5, x.view()).unwrap());
        assert!(m.model_eval(0.5, array![1.0].view()).is_err());
        assert!(m.forward_inputs(Array2::zeros((3, 2)).view()).is_err());
        assert_eq!(m, MlpVelocityModel::new(2, &[8, 8], 5, 1.0).unwrap());
    }

    #[test]
    fn batch_matches_single_evaluation() {
        let m = MlpVelocityModel::new(2, &[8, 4], 1, 1.0).unwrap();
        let (inputs, _) = random_inputs(10, 2, 4);
        let batch = m.forward_inputs(inputs.view()).unwrap();
        for i in 0..10 {
            let single = m.eval(inputs[(i, 0)], inputs.slice(s![i, 1..]));
            assert!((&single - &batch.row(i)).iter().all(|e| e.abs() < 1e-14));
        }
    }

    #[test]
    fn lipschitz_bounded_by_spectral_norm_product() {
        for seed in 0..10 {
            let m = MlpVelocityModel::new(2, &[12, 12], seed, 1.0).unwrap();
            let bound = m.spectral_norm_product();
            let mut rng = seeded(100 + seed);
            for _ in 0..50 {
                let x = array![rng.random::<f64>() * 4.0 - 2.0, rng.random::<f64>() * 4.0 - 2.0];
                let delta = array![rng.random::<f64>() * 0.2 - 0.1, rng.random::<f64>() * 0.2 - 0.1];
                let t = rng.random::<f64>();
                let a = m.eval(t, x.view());
                let b = m.eval(t, (&x + &delta).view());
                let change = (&a - &b).mapv(|e| e * e).sum().sqrt();
                assert!(change <= bound * delta.dot(&delta).sqrt() * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn loss_of_zero_model_is_mean_square_target() {
        let m = MlpVelocityModel::new(2, &[4], 0, 0.0).unwrap();
        let (x, y) = random_inputs(7, 2, 8);
        let expected = y.iter().map(|v| v * v).sum::<f64>() / 7.0;
        assert!((m.loss(x.view(), y.view()) - expected).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..4 {
            let mut m = MlpVelocityModel::new(2, &[16, 12], seed, 1.0).unwrap();
            // nonzero biases so that every parameter class is exercised
            let mut rng = seeded(seed + 50);
            for p in m.params_mut() {
                *p += 0.05 * (2.0 * rng.random::<f64>() - 1.0);
            }
            let (x, y) = random_inputs(8, 2, seed + 10);
            let (_, grad) = m.loss_and_grad(x.view(), y.view());
            let h = 1e-6;
            for _ in 0..25 {
                let k = rng.random_range(0..m.param_count());
                let base = m.params()[k];
                m.params_mut()[k] = base + h;
                let up = m.loss(x.view(), y.view());
                m.params_mut()[k] = base - h;
                let down = m.loss(x.view(), y.view());
                m.params_mut()[k] = base;
                let fd = (up - down) / (2.0 * h);
                let rel = (grad[k] - fd).abs() / grad[k].abs().max(fd.abs()).max(1e-6);
                assert!(rel < 1e-4, "param {k}: analytic {} fd {fd}", grad[k]);
            }
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = MlpVelocityModel::new(2, &[5, 3], 9, 1.0).unwrap();
        let json = serde_json::to_string(&m.to_checkpoint()).unwrap();
        let back = MlpVelocityModel::from_checkpoint(serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back, m);
        let mut bad = m.to_checkpoint();
        bad.params.pop();
        assert!(MlpVelocityModel::from_checkpoint(bad).is_err());
    }
}

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::ApproxError;

/// Output nonlinearity of the last layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum OutputHead {
    Identity,
    /// `ln(1 + e^z)`, strictly positive.
    Softplus,
    /// `center + half·tanh(z)` per output, mapping into `[low, high]`.
    TanhScaled { low: Vec<f64>, high: Vec<f64> },
}

/// Fully connected network with ELU hidden layers.
///
/// Parameters are stored flat, layer by layer: the weight matrix (row-major,
/// `out × in`) followed by the bias vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    head: OutputHead,
    pub params: Vec<f64>,
}

/// Intermediate values of a batched forward pass, needed by
/// [`Mlp::backward`].
#[derive(Clone, Debug)]
pub struct Tape {
    /// `acts[0]` is the input; `acts[l + 1]` is the activated output of layer `l`.
    acts: Vec<Array2<f64>>,
    /// Pre-activations per layer.
    pre: Vec<Array2<f64>>,
}

impl Tape {
    pub fn output(&self) -> &Array2<f64> {
        self.acts.last().expect("tape has at least the input")
    }
}

pub fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
}

#[inline]
fn elu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        z.exp_m1()
    }
}

#[inline]
fn elu_grad(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        z.exp()
    }
}

#[inline]
pub fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else {
        z.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl Mlp {
    /// Zero-initialized network. `sizes` lists the input width, the hidden
    /// widths and the output width.
    pub fn zeros(sizes: &[usize], head: OutputHead) -> Result<Self, ApproxError> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(ApproxError::InvalidNetwork(format!("bad layer sizes {sizes:?}")));
        }
        if let OutputHead::TanhScaled { low, high } = &head {
            let out = *sizes.last().unwrap();
            if low.len() != out || high.len() != out || low.iter().zip(high).any(|(l, h)| !(l < h)) {
                return Err(ApproxError::InvalidNetwork("tanh bounds do not match output".into()));
            }
        }
        Ok(Self { sizes: sizes.to_vec(), head, params: vec![0.0; param_count(sizes)] })
    }

    /// Uniform fan-in initialization, `U(±√(6/fan_in))` for hidden layers and
    /// `output_gain` times `U(±√(1/fan_in))` for the last layer. Biases start
    /// at zero.
    pub fn init(sizes: &[usize], head: OutputHead, output_gain: f64, rng: &mut dyn RngCore) -> Result<Self, ApproxError> {
        let mut net = Self::zeros(sizes, head)?;
        let layers = net.num_layers();
        let mut off = 0;
        for l in 0..layers {
            let (fan_in, fan_out) = (net.sizes[l], net.sizes[l + 1]);
            let limit = if l + 1 == layers {
                output_gain * (1.0 / fan_in as f64).sqrt()
            } else {
                (6.0 / fan_in as f64).sqrt()
            };
            for w in &mut net.params[off..off + fan_in * fan_out] {
                *w = if limit > 0.0 { rng.random_range(-limit..limit) } else { 0.0 };
            }
            off += (fan_in + 1) * fan_out;
        }
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn head(&self) -> &OutputHead {
        &self.head
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Overwrites the biases of the last layer.
    pub fn set_output_bias(&mut self, bias: &[f64]) -> Result<(), ApproxError> {
        let n = self.output_dim();
        if bias.len() != n {
            return Err(ApproxError::Dimension { expected: n, got: bias.len() });
        }
        let len = self.params.len();
        self.params[len - n..].copy_from_slice(bias);
        Ok(())
    }

    fn layer_offsets(&self, l: usize) -> (usize, usize) {
        let off: usize = self.sizes[..=l].windows(2).take(l).map(|w| (w[0] + 1) * w[1]).sum();
        (off, off + self.sizes[l] * self.sizes[l + 1])
    }

    fn weights(&self, l: usize) -> (ArrayView2<'_, f64>, &[f64]) {
        let (w0, b0) = self.layer_offsets(l);
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        let w = ArrayView2::from_shape((n_out, n_in), &self.params[w0..b0]).expect("layer shape");
        (w, &self.params[b0..b0 + n_out])
    }

    fn apply_head(&self, z: &mut Array2<f64>) {
        match &self.head {
            OutputHead::Identity => {}
            OutputHead::Softplus => z.mapv_inplace(softplus),
            OutputHead::TanhScaled { low, high } => {
                for mut row in z.rows_mut() {
                    for (j, v) in row.iter_mut().enumerate() {
                        let half = 0.5 * (high[j] - low[j]);
                        *v = low[j] + half + half * v.tanh();
                    }
                }
            }
        }
    }

    fn head_grad(&self, z: f64, j: usize) -> f64 {
        match &self.head {
            OutputHead::Identity => 1.0,
            OutputHead::Softplus => sigmoid(z),
            OutputHead::TanhScaled { low, high } => {
                let t = z.tanh();
                0.5 * (high[j] - low[j]) * (1.0 - t * t)
            }
        }
    }

    /// Batched forward pass; rows of `x` are samples.
    pub fn forward_batch(&self, x: ArrayView2<'_, f64>) -> Result<Tape, ApproxError> {
        if x.ncols() != self.input_dim() {
            return Err(ApproxError::Dimension { expected: self.input_dim(), got: x.ncols() });
        }
        let layers = self.num_layers();
        let mut acts = Vec::with_capacity(layers + 1);
        let mut pre = Vec::with_capacity(layers);
        acts.push(x.to_owned());
        for l in 0..layers {
            let (w, b) = self.weights(l);
            let mut z = acts[l].dot(&w.t());
            let b = ArrayView2::from_shape((1, b.len()), b).expect("bias shape");
            z += &b;
            let mut a = z.clone();
            if l + 1 == layers {
                self.apply_head(&mut a);
            } else {
                a.mapv_inplace(elu);
            }
            pre.push(z);
            acts.push(a);
        }
        Ok(Tape { acts, pre })
    }

    /// Output for one input vector.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, ApproxError> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("row shape");
        if x.len() != self.input_dim() {
            return Err(ApproxError::Dimension { expected: self.input_dim(), got: x.len() });
        }
        Ok(self.forward_batch(view)?.output().row(0).to_vec())
    }

    /// Reverse-mode gradients of `Σ_b upstream[b]·out[b]`. Returns the
    /// parameter gradient (flat, summed over the batch) and the input
    /// gradient (one row per sample).
    pub fn backward(&self, tape: &Tape, upstream: ArrayView2<'_, f64>) -> Result<(Vec<f64>, Array2<f64>), ApproxError> {
        let layers = self.num_layers();
        let out = tape.output();
        if upstream.dim() != out.dim() {
            return Err(ApproxError::Dimension { expected: out.ncols(), got: upstream.ncols() });
        }
        let mut grad = vec![0.0; self.params.len()];
        let mut delta: Array2<f64> = upstream.to_owned();
        // Output head.
        {
            let z = &tape.pre[layers - 1];
            for ((b, j), d) in delta.indexed_iter_mut() {
                *d *= self.head_grad(z[[b, j]], j);
            }
        }
        for l in (0..layers).rev() {
            let (w, _) = self.weights(l);
            let (w0, b0) = self.layer_offsets(l);
            let n_out = self.sizes[l + 1];
            let gw = delta.t().dot(&tape.acts[l]);
            for (g, v) in grad[w0..b0].iter_mut().zip(gw.iter()) {
                *g = *v;
            }
            let gb: Array1<f64> = delta.sum_axis(Axis(0));
            for (g, v) in grad[b0..b0 + n_out].iter_mut().zip(gb.iter()) {
                *g = *v;
            }
            let mut prev = delta.dot(&w);
            if l > 0 {
                let z = &tape.pre[l - 1];
                prev.zip_mut_with(z, |d, z| *d *= elu_grad(*z));
            }
            delta = prev;
        }
        Ok((grad, delta))
    }

    /// Gradients of `upstream · f(x)` for a single input.
    pub fn backward_single(&self, x: &[f64], upstream: &[f64]) -> Result<(Vec<f64>, Vec<f64>), ApproxError> {
        if upstream.len() != self.output_dim() {
            return Err(ApproxError::Dimension { expected: self.output_dim(), got: upstream.len() });
        }
        if x.len() != self.input_dim() {
            return Err(ApproxError::Dimension { expected: self.input_dim(), got: x.len() });
        }
        let tape = self.forward_batch(ArrayView2::from_shape((1, x.len()), x).unwrap())?;
        let up = ArrayView2::from_shape((1, upstream.len()), upstream).unwrap();
        let (g, dx) = self.backward(&tape, up)?;
        Ok((g, dx.row(0).to_vec()))
    }
}

//! MLP encoder with ReLU hidden layers and a linear output, plus the linear
//! classification head applied to its embeddings.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::rng::Rng;
use crate::{Error, Result};

/// Dense affine layer `y = x·W + b`, with `W` stored `in × out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(input_dim: usize, output_dim: usize) -> Self {
        Self {
            weight: Matrix::zeros(input_dim, output_dim),
            bias: vec![0.0; output_dim],
        }
    }

    /// Gaussian init with standard deviation `sqrt(gain / fan_in)`, zero bias.
    fn random(input_dim: usize, output_dim: usize, gain: f64, rng: &mut Rng) -> Self {
        let normal = Normal::new(0.0, (gain / input_dim as f64).sqrt()).expect("finite std");
        let data = (0..input_dim * output_dim)
            .map(|_| normal.sample(rng))
            .collect();
        Self {
            weight: Matrix::from_vec(input_dim, output_dim, data).expect("sized"),
            bias: vec![0.0; output_dim],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.cols()
    }

    fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let mut out = x.matmul(&self.weight)?;
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(&self.bias) {
                *o += b;
            }
        }
        Ok(out)
    }
}

/// Encoder layers and classification head.
///
/// Parameter gradients use the same type, so optimizers can walk params and
/// grads in lockstep through [`EncoderParams::tensors`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    layers: Vec<Layer>,
    head: Layer,
}

impl EncoderParams {
    pub fn new(layers: Vec<Layer>, head: Layer) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("encoder needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.output_dim() {
                return Err(Error::Shape(format!(
                    "layer {i}: bias length {} != output dim {}",
                    l.bias.len(),
                    l.output_dim()
                )));
            }
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::Shape(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    pair[0].output_dim(),
                    i + 1,
                    pair[1].input_dim()
                )));
            }
        }
        let embed_dim = layers.last().map(Layer::output_dim).unwrap_or(0);
        if head.input_dim() != embed_dim || head.output_dim() != 1 || head.bias.len() != 1 {
            return Err(Error::Shape(format!(
                "head must be {embed_dim}x1, got {}x{}",
                head.input_dim(),
                head.output_dim()
            )));
        }
        Ok(Self { layers, head })
    }

    /// He-initialised hidden layers, variance-preserving linear output and head.
    pub fn init(
        input_dim: usize,
        hidden: &[usize],
        embed_dim: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        if input_dim == 0 || embed_dim == 0 || hidden.contains(&0) {
            return Err(Error::Config("encoder dimensions must be >= 1".into()));
        }
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        dims.push(embed_dim);
        let n = dims.len() - 1;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, d)| Layer::random(d[0], d[1], if i + 1 < n { 2.0 } else { 1.0 }, rng))
            .collect();
        let head = Layer::random(embed_dim, 1, 1.0, rng);
        Self::new(layers, head)
    }

    /// All-zero parameters with the same shapes.
    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Layer::zeros(l.input_dim(), l.output_dim()))
                .collect(),
            head: Layer::zeros(self.head.input_dim(), 1),
        }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn head(&self) -> &Layer {
        &self.head
    }

    pub fn head_mut(&mut self) -> &mut Layer {
        &mut self.head
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn embed_dim(&self) -> usize {
        self.head.input_dim()
    }

    /// Parameter tensors in a fixed order: each layer's weight then bias, then the head.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len() + 2);
        for l in self.layers.iter().chain(std::iter::once(&self.head)) {
            out.push(l.weight.data());
            out.push(l.bias.as_slice());
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len() + 2);
        for l in self
            .layers
            .iter_mut()
            .chain(std::iter::once(&mut self.head))
        {
            out.push(l.weight.data_mut());
            out.push(l.bias.as_mut_slice());
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    /// Overwrites all parameters from a flat vector in [`Self::tensors`] order.
    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "{} values for {} parameters",
                flat.len(),
                self.param_count()
            )));
        }
        let mut offset = 0;
        for t in self.tensors_mut() {
            t.copy_from_slice(&flat[offset..offset + t.len()]);
            offset += t.len();
        }
        Ok(())
    }

    /// Element-wise `self += other`.
    pub fn accumulate(&mut self, other: &EncoderParams) -> Result<()> {
        if self.param_count() != other.param_count() {
            return Err(Error::Shape("parameter sets differ in size".into()));
        }
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            if a.len() != b.len() {
                return Err(Error::Shape("parameter tensors differ in shape".into()));
            }
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Intermediate values kept by [`mlp_forward`] for [`mlp_backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer: the network input followed by every hidden activation.
    layer_inputs: Vec<Matrix>,
    /// Pre-activation of each hidden layer.
    hidden_pre: Vec<Matrix>,
    output_shape: (usize, usize),
}

pub fn mlp_forward(params: &EncoderParams, inputs: &Matrix) -> Result<(Matrix, ForwardCache)> {
    if inputs.cols() != params.input_dim() {
        return Err(Error::Shape(format!(
            "encoder expects {} input columns, got {}",
            params.input_dim(),
            inputs.cols()
        )));
    }
    let n = params.layers.len();
    let mut layer_inputs = Vec::with_capacity(n);
    let mut hidden_pre = Vec::with_capacity(n - 1);
    let mut x = inputs.clone();
    for (i, layer) in params.layers.iter().enumerate() {
        let z = layer.forward(&x)?;
        layer_inputs.push(x);
        if i + 1 == n {
            let output_shape = z.shape();
            return Ok((
                z,
                ForwardCache {
                    layer_inputs,
                    hidden_pre,
                    output_shape,
                },
            ));
        }
        let mut a = z.clone();
        for v in a.data_mut() {
            *v = v.max(0.0);
        }
        hidden_pre.push(z);
        x = a;
    }
    unreachable!("encoder has at least one layer")
}

/// Returns encoder parameter gradients (head entries zero) and input gradients.
pub fn mlp_backward(
    params: &EncoderParams,
    cache: &ForwardCache,
    grad_embeddings: &Matrix,
) -> Result<(EncoderParams, Matrix)> {
    if grad_embeddings.shape() != cache.output_shape {
        return Err(Error::Shape(format!(
            "upstream gradient {:?} does not match encoder output {:?}",
            grad_embeddings.shape(),
            cache.output_shape
        )));
    }
    let mut grads = params.zeros_like();
    let mut g = grad_embeddings.clone();
    for i in (0..params.layers.len()).rev() {
        let layer = &params.layers[i];
        grads.layers[i].weight = cache.layer_inputs[i].t_matmul(&g)?;
        grads.layers[i].bias = g.column_sums();
        let mut g_prev = g.matmul_t(&layer.weight)?;
        if i > 0 {
            let pre = &cache.hidden_pre[i - 1];
            for (gv, &z) in g_prev.data_mut().iter_mut().zip(pre.data()) {
                if z <= 0.0 {
                    *gv = 0.0;
                }
            }
        }
        g = g_prev;
    }
    Ok((grads, g))
}

/// Classification logits for each embedding row.
pub fn head_forward(params: &EncoderParams, embeddings: &Matrix) -> Result<Vec<f64>> {
    if embeddings.cols() != params.embed_dim() {
        return Err(Error::Shape(format!(
            "head expects {} columns, got {}",
            params.embed_dim(),
            embeddings.cols()
        )));
    }
    Ok(params.head.forward(embeddings)?.into_data())
}

/// Gradients of the head parameters and of the embeddings, given `dL/dlogit`.
pub fn head_backward(
    params: &EncoderParams,
    embeddings: &Matrix,
    grad_logits: &[f64],
) -> Result<(Layer, Matrix)> {
    if grad_logits.len() != embeddings.rows() || embeddings.cols() != params.embed_dim() {
        return Err(Error::Shape(format!(
            "head backward: {} logit grads for {:?} embeddings",
            grad_logits.len(),
            embeddings.shape()
        )));
    }
    let g = Matrix::from_vec(grad_logits.len(), 1, grad_logits.to_vec())?;
    let layer = Layer {
        weight: embeddings.t_matmul(&g)?,
        bias: vec![grad_logits.iter().sum()],
    };
    let grad_emb = g.matmul_t(&params.head.weight)?;
    Ok((layer, grad_emb))
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::tensor::gradcheck::{finite_diff_grad, max_relative_error};

    fn identity_net(d: usize) -> EncoderParams {
        let layer = Layer {
            weight: Matrix::identity(d),
            bias: vec![0.0; d],
        };
        EncoderParams::new(vec![layer.clone(), layer], Layer::zeros(d, 1)).unwrap()
    }

    #[test]
    fn identity_network_passes_nonnegative_input() {
        let p = identity_net(2);
        let x = Matrix::from_rows(&[[1.0, 2.0]]).unwrap();
        let (z, _) = mlp_forward(&p, &x).unwrap();
        assert_eq!(z.data(), &[1.0, 2.0]);
    }

    #[test]
    fn final_layer_is_linear() {
        let layer = Layer {
            weight: Matrix::identity(2),
            bias: vec![0.0; 2],
        };
        let p = EncoderParams::new(vec![layer], Layer::zeros(2, 1)).unwrap();
        let x = Matrix::from_rows(&[[-3.0, 5.0]]).unwrap();
        let (z, _) = mlp_forward(&p, &x).unwrap();
        assert_eq!(z.data(), &[-3.0, 5.0]);
    }

    #[test]
    fn rejects_wrong_input_width_and_broken_chain() {
        let p = identity_net(2);
        let x = Matrix::from_rows(&[[1.0, 2.0, 3.0]]).unwrap();
        assert!(matches!(mlp_forward(&p, &x), Err(Error::Shape(_))));
        let bad = EncoderParams::new(
            vec![Layer::zeros(2, 3), Layer::zeros(2, 2)],
            Layer::zeros(2, 1),
        );
        assert!(bad.is_err());
    }

    /// Straightforward forward pass written independently of `mlp_forward`.
    fn reference_forward(p: &EncoderParams, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        let n = p.layers().len();
        for (li, l) in p.layers().iter().enumerate() {
            let mut z = l.bias.clone();
            for (j, zj) in z.iter_mut().enumerate() {
                for (i, ai) in a.iter().enumerate() {
                    *zj += ai * l.weight.get(i, j);
                }
            }
            if li + 1 < n {
                z.iter_mut()
                    .for_each(|v| *v = if *v > 0.0 { *v } else { 0.0 });
            }
            a = z;
        }
        a
    }

    #[test]
    fn random_net_matches_reference_forward() {
        let mut rng = seeded(11);
        let p = EncoderParams::init(5, &[7], 3, &mut rng).unwrap();
        let x =
            Matrix::from_rows(&[[0.3, -1.2, 0.8, 2.0, -0.5], [1.0, 1.0, -1.0, 0.0, 0.25]]).unwrap();
        let (z, _) = mlp_forward(&p, &x).unwrap();
        for r in 0..2 {
            let expected = reference_forward(&p, x.row(r));
            for (a, b) in z.row(r).iter().zip(&expected) {
                assert!((a - b).abs() < 1e-14, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_grads() {
        let mut rng = seeded(3);
        let p = EncoderParams::init(4, &[6, 5], 3, &mut rng).unwrap();
        let x = Matrix::from_rows(&[[1.0, -2.0, 0.5, 0.1]]).unwrap();
        let (z, cache) = mlp_forward(&p, &x).unwrap();
        let (g, gx) = mlp_backward(&p, &cache, &Matrix::zeros(z.rows(), z.cols())).unwrap();
        assert!(g.flatten().iter().all(|&v| v == 0.0));
        assert!(gx.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_layer_weight_gradient_is_summed_input() {
        let layer = Layer {
            weight: Matrix::from_rows(&[[0.5, -1.0], [2.0, 0.0], [1.0, 1.0]]).unwrap(),
            bias: vec![0.1, 0.2],
        };
        let p = EncoderParams::new(vec![layer], Layer::zeros(2, 1)).unwrap();
        let x = Matrix::from_rows(&[[1.0, 2.0, 3.0], [-1.0, 0.5, 4.0]]).unwrap();
        let (z, cache) = mlp_forward(&p, &x).unwrap();
        let ones = Matrix::from_vec(z.rows(), z.cols(), vec![1.0; z.rows() * z.cols()]).unwrap();
        let (g, _) = mlp_backward(&p, &cache, &ones).unwrap();
        let col_sums = x.column_sums();
        for (i, &s) in col_sums.iter().enumerate() {
            for j in 0..2 {
                assert_eq!(g.layers()[0].weight.get(i, j), s);
            }
        }
        assert_eq!(g.layers()[0].bias, vec![2.0, 2.0]);
    }

    #[test]
    fn mismatched_upstream_gradient_is_rejected() {
        let p = identity_net(2);
        let x = Matrix::from_rows(&[[1.0, 2.0]]).unwrap();
        let (_, cache) = mlp_forward(&p, &x).unwrap();
        assert!(mlp_backward(&p, &cache, &Matrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = seeded(5);
        let p = EncoderParams::init(4, &[6], 3, &mut rng).unwrap();
        let x = Matrix::from_rows(&[[0.7, -0.3, 1.1, 0.4], [-0.2, 0.9, 0.3, -1.4]]).unwrap();
        // loss = sum(z ⊙ c) for a fixed c
        let c = Matrix::from_rows(&[[0.3, -0.7, 1.2], [0.5, 0.1, -0.4]]).unwrap();
        let loss = |params: &EncoderParams, x: &Matrix| {
            let (z, _) = mlp_forward(params, x).unwrap();
            z.data()
                .iter()
                .zip(c.data())
                .map(|(a, b)| a * b)
                .sum::<f64>()
        };
        let (_, cache) = mlp_forward(&p, &x).unwrap();
        let (g, gx) = mlp_backward(&p, &cache, &c).unwrap();

        let flat = p.flatten();
        let numeric = finite_diff_grad(
            |v| {
                let mut q = p.clone();
                q.assign_flat(v).unwrap();
                loss(&q, &x)
            },
            &flat,
            1e-5,
        );
        // head parameters are not touched by the encoder loss
        assert!(max_relative_error(&g.flatten(), &numeric) < 1e-6);

        let numeric_x = finite_diff_grad(
            |v| loss(&p, &Matrix::from_vec(2, 4, v.to_vec()).unwrap()),
            x.data(),
            1e-5,
        );
        assert!(max_relative_error(gx.data(), &numeric_x) < 1e-6);
    }

    #[test]
    fn head_backward_matches_finite_differences() {
        let mut rng = seeded(9);
        let p = EncoderParams::init(3, &[4], 3, &mut rng).unwrap();
        let z = Matrix::from_rows(&[[0.2, -0.5, 1.0], [1.5, 0.3, -0.8]]).unwrap();
        let gl = [0.7, -1.3];
        let loss = |params: &EncoderParams, z: &Matrix| {
            head_forward(params, z)
                .unwrap()
                .iter()
                .zip(&gl)
                .map(|(a, b)| a * b)
                .sum::<f64>()
        };
        let (hg, gz) = head_backward(&p, &z, &gl).unwrap();
        let numeric_z = finite_diff_grad(
            |v| loss(&p, &Matrix::from_vec(2, 3, v.to_vec()).unwrap()),
            z.data(),
            1e-5,
        );
        assert!(max_relative_error(gz.data(), &numeric_z) < 1e-6);
        let w = p.head().weight.data().to_vec();
        let numeric_w = finite_diff_grad(
            |v| {
                let mut q = p.clone();
                q.head_mut().weight.data_mut().copy_from_slice(v);
                loss(&q, &z)
            },
            &w,
            1e-5,
        );
        assert!(max_relative_error(hg.weight.data(), &numeric_w) < 1e-6);
        assert!((hg.bias[0] - (0.7 - 1.3)).abs() < 1e-15);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-1000.0) >= 0.0 && sigmoid(-1000.0).is_finite());
        assert_eq!(sigmoid(1000.0), 1.0);
    }
}

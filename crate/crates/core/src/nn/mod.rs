//! Dense feed-forward viscosity network, its optimizer and checkpoint format.

mod checkpoint;
mod optim;

use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{BlockOp, Dd, ParamGrads, ParamId, Real, Saved, TapeError};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use optim::{AdamW, AdamWConfig, Plateau, LR_FLOOR};

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("expected {expected} features, got {got}")]
    FeatureSize { expected: usize, got: usize },
    #[error("parameter vector has {got} entries, expected {expected}")]
    ParamSize { expected: usize, got: usize },
    #[error("non-finite gradient, step rejected")]
    NonFiniteGradient,
    #[error("invalid architecture: {0}")]
    Architecture(String),
    #[error("checkpoint {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint truncated")]
    Truncated,
    #[error("checkpoint checksum mismatch")]
    Checksum,
    #[error("checkpoint is for a {got}D network, expected {expected}D")]
    DimMismatch { expected: usize, got: usize },
}

/// Number of input features per dimension.
pub fn feature_count(dim: usize) -> usize {
    if dim == 1 {
        19
    } else {
        29
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Gelu,
    Tanh,
}

impl Activation {
    fn id(self) -> u8 {
        match self {
            Activation::Gelu => 0,
            Activation::Tanh => 1,
        }
    }

    fn from_id(id: u8) -> Option<Self> {
        match id {
            0 => Some(Activation::Gelu),
            1 => Some(Activation::Tanh),
            _ => None,
        }
    }

    #[inline]
    fn value(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => 0.5 * x * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2)),
            Activation::Tanh => x.tanh(),
        }
    }

    #[inline]
    fn deriv(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => {
                let cdf = 0.5 * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2));
                let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
                cdf + x * pdf
            }
            Activation::Tanh => 1.0 - x.tanh().powi(2),
        }
    }

    fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::Gelu => x * 0.5 * ((x * std::f64::consts::FRAC_1_SQRT_2).erf() + 1.0),
            Activation::Tanh => x.tanh(),
        }
    }
}

#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus_t<T: Real>(x: T) -> T {
    // max(x, 0) + ln(1 + exp(-|x|))
    x.max(T::zero()) + ((-x.abs()).exp() + 1.0).ln()
}

/// Weights and biases of the network, flattened as `W_1, b_1, W_2, b_2, ...`
/// with each `W_l` row-major of shape `N_l x N_{l-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub sizes: Vec<usize>,
    pub theta: Vec<f64>,
    pub activation: Activation,
    pub seed: u64,
}

impl NetworkParams {
    /// Default architecture: 19 -> 120 x 6 -> 1 (seven affine layers) in 1D and
    /// 29 -> 160 x 7 -> 1 (eight) in 2D.
    pub fn init(dim: usize, seed: u64) -> Result<Self, NnError> {
        let (width, layers) = match dim {
            1 => (120, 7),
            2 => (160, 8),
            d => return Err(NnError::Architecture(format!("dimension {d}"))),
        };
        let mut sizes = vec![feature_count(dim)];
        sizes.extend(std::iter::repeat_n(width, layers - 1));
        sizes.push(1);
        Self::with_sizes(sizes, Activation::Gelu, seed)
    }

    /// Uniform `±sqrt(1/fan_in)` initialization from a seeded ChaCha stream.
    pub fn with_sizes(sizes: Vec<usize>, activation: Activation, seed: u64) -> Result<Self, NnError> {
        if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) || *sizes.last().unwrap() != 1 {
            return Err(NnError::Architecture(format!("{sizes:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut theta = Vec::with_capacity(param_count(&sizes));
        for w in sizes.windows(2) {
            let bound = (1.0 / w[0] as f64).sqrt();
            for _ in 0..w[0] * w[1] + w[1] {
                theta.push(rng.gen_range(-bound..bound));
            }
        }
        Ok(Self {
            sizes,
            theta,
            activation,
            seed,
        })
    }

    pub fn n_inputs(&self) -> usize {
        self.sizes[0]
    }

    pub fn n_params(&self) -> usize {
        self.theta.len()
    }

    pub fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Offsets of `(W_l, b_l)` in `theta`.
    fn layer(&self, l: usize) -> (usize, usize) {
        let mut off = 0;
        for w in self.sizes.windows(2).take(l) {
            off += w[0] * w[1] + w[1];
        }
        (off, off + self.sizes[l] * self.sizes[l + 1])
    }

    fn weights(&self, l: usize) -> (ArrayView2<'_, f64>, &[f64]) {
        let (w, b) = self.layer(l);
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        let wm = ArrayView2::from_shape((n_out, n_in), &self.theta[w..b]).expect("layer shape");
        (wm, &self.theta[b..b + n_out])
    }

    /// Single-sample forward pass.
    pub fn forward(&self, x: &[f64]) -> Result<f64, NnError> {
        Ok(self.forward_rows(x)?[0])
    }

    /// Batched forward pass; `x` holds one sample per row.
    pub fn forward_rows(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        let n = self.n_inputs();
        if x.is_empty() || x.len() % n != 0 {
            return Err(NnError::FeatureSize {
                expected: n,
                got: x.len(),
            });
        }
        Ok(self.run(x).0)
    }

    /// Forward pass keeping pre-activations for the backward sweep.
    fn run(&self, x: &[f64]) -> (Vec<f64>, Vec<Array2<f64>>) {
        let n = self.n_inputs();
        let rows = x.len() / n;
        let mut a = Array2::from_shape_vec((rows, n), x.to_vec()).expect("rows");
        let mut pre = Vec::with_capacity(self.n_layers() + 1);
        for l in 0..self.n_layers() {
            let (w, b) = self.weights(l);
            let mut z = a.dot(&w.t());
            z += &Array1::from(b.to_vec());
            let last = l + 1 == self.n_layers();
            let next = if last {
                z.mapv(softplus)
            } else {
                z.mapv(|v| self.activation.value(v))
            };
            pre.push(std::mem::replace(&mut a, next));
            pre.push(z);
        }
        (a.into_raw_vec_and_offset().0, pre)
    }

    /// Scalar-graph forward pass over arbitrary `Real` parameters. Slow; used
    /// as an independent oracle for the fused block op.
    pub fn forward_generic<T: Real>(&self, theta: &[T], x: &[T]) -> Result<T, NnError> {
        if theta.len() != self.n_params() {
            return Err(NnError::ParamSize {
                expected: self.n_params(),
                got: theta.len(),
            });
        }
        if x.len() != self.n_inputs() {
            return Err(NnError::FeatureSize {
                expected: self.n_inputs(),
                got: x.len(),
            });
        }
        let mut a = x.to_vec();
        for l in 0..self.n_layers() {
            let (w, b) = self.layer(l);
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let last = l + 1 == self.n_layers();
            a = (0..n_out)
                .map(|o| {
                    let mut z = theta[b + o];
                    for i in 0..n_in {
                        z = z + theta[w + o * n_in + i] * a[i];
                    }
                    if last {
                        softplus_t(z)
                    } else {
                        self.activation.apply(z)
                    }
                })
                .collect();
        }
        Ok(a[0])
    }

    /// Batched evaluation that records one block on `anchor`'s tape. When
    /// `param` is set the op deposits its parameter gradient there.
    pub fn apply<T: Real>(self: &Arc<Self>, anchor: &T, x: &[T], param: Option<ParamId>) -> Result<Vec<T>, NnError> {
        let n = self.n_inputs();
        if x.is_empty() || x.len() % n != 0 {
            return Err(NnError::FeatureSize {
                expected: n,
                got: x.len(),
            });
        }
        let op = NetworkOp {
            net: Arc::clone(self),
            param,
        };
        Ok(T::block_with(anchor, x, Arc::new(op)))
    }
}

pub fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// Fused batched network evaluation as a single tape block.
pub struct NetworkOp {
    pub net: Arc<NetworkParams>,
    pub param: Option<ParamId>,
}

impl BlockOp for NetworkOp {
    fn forward(&self, inputs: &[f64]) -> (Vec<f64>, Saved) {
        let (y, pre) = self.net.run(inputs);
        (y, Box::new(pre))
    }

    fn forward_dd(&self, inputs: &[Dd]) -> Vec<Dd> {
        let theta: Vec<Dd> = self.net.theta.iter().map(|&t| Dd::new(t)).collect();
        inputs
            .chunks(self.net.n_inputs())
            .map(|row| self.net.forward_generic(&theta, row).expect("row width checked by apply"))
            .collect()
    }

    fn backward(
        &self,
        _inputs: &[f64],
        saved: &Saved,
        out_adj: &[f64],
        in_adj: &mut [f64],
        params: &mut ParamGrads,
    ) -> Result<(), TapeError> {
        let pre = saved
            .downcast_ref::<Vec<Array2<f64>>>()
            .ok_or_else(|| TapeError::Region("network op: missing saved activations".into()))?;
        let net = &self.net;
        let nl = net.n_layers();
        let rows = out_adj.len();
        // pre = [a_0, z_1, a_1, z_2, ..., a_{L-1}, z_L]
        let mut delta = Array2::from_shape_vec((rows, 1), out_adj.to_vec()).expect("rows");
        for l in (0..nl).rev() {
            let a_in = &pre[2 * l];
            let z = &pre[2 * l + 1];
            let dz = if l + 1 == nl {
                &delta * &z.mapv(sigmoid)
            } else {
                &delta * &z.mapv(|v| net.activation.deriv(v))
            };
            if let Some(id) = self.param {
                let (w_off, b_off) = net.layer(l);
                let g = params.get_mut(id);
                let dw = dz.t().dot(a_in);
                for (dst, src) in g[w_off..b_off].iter_mut().zip(dw.iter()) {
                    *dst += src;
                }
                let db = dz.sum_axis(Axis(0));
                for (dst, src) in g[b_off..b_off + net.sizes[l + 1]].iter_mut().zip(db.iter()) {
                    *dst += src;
                }
            }
            let (w, _) = net.weights(l);
            delta = dz.dot(&w);
        }
        for (dst, src) in in_adj.iter_mut().zip(delta.iter()) {
            *dst += src;
        }
        Ok(())
    }

    fn param(&self) -> Option<ParamId> {
        self.param
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Tape, Var};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn default_shapes() {
        let n1 = NetworkParams::init(1, 0).unwrap();
        assert_eq!(n1.sizes, vec![19, 120, 120, 120, 120, 120, 120, 1]);
        assert_eq!(n1.n_params(), 19 * 120 + 120 + 5 * (120 * 120 + 120) + 121);
        assert_eq!(n1.n_params(), 75121);
        let n2 = NetworkParams::init(2, 0).unwrap();
        assert_eq!(n2.n_inputs(), 29);
        assert_eq!(n2.n_layers(), 8);
        assert!(NetworkParams::init(3, 0).is_err());
    }

    #[test]
    fn deterministic_init() {
        let a = NetworkParams::init(1, 42).unwrap();
        let b = NetworkParams::init(1, 42).unwrap();
        let c = NetworkParams::init(1, 43).unwrap();
        assert_eq!(a.theta, b.theta);
        assert_ne!(a.theta, c.theta);
        let bound = (1.0f64 / 19.0).sqrt();
        assert!(a.theta[..19 * 120].iter().all(|w| w.abs() <= bound));
    }

    #[test]
    fn zero_network_gives_ln2() {
        let mut n = NetworkParams::init(1, 1).unwrap();
        n.theta.iter_mut().for_each(|t| *t = 0.0);
        assert_relative_eq!(n.forward(&[0.3; 19]).unwrap(), std::f64::consts::LN_2, epsilon = 1e-15);
        assert!(matches!(n.forward(&[0.0; 18]), Err(NnError::FeatureSize { .. })));
    }

    #[test]
    fn matches_naive_oracle() {
        let n = NetworkParams::with_sizes(vec![5, 7, 6, 1], Activation::Gelu, 3).unwrap();
        let x = [0.1, -0.4, 0.9, 0.0, -1.0];
        // independent oracle: explicit loops, erf-based GeLU
        let mut a = x.to_vec();
        let mut off = 0;
        for l in 0..3 {
            let (ni, no) = (n.sizes[l], n.sizes[l + 1]);
            let w = &n.theta[off..off + ni * no];
            let b = &n.theta[off + ni * no..off + ni * no + no];
            off += ni * no + no;
            a = (0..no)
                .map(|o| {
                    let z: f64 = b[o] + (0..ni).map(|i| w[o * ni + i] * a[i]).sum::<f64>();
                    if l == 2 {
                        (1.0 + z.exp()).ln()
                    } else {
                        0.5 * z * (1.0 + libm::erf(z / 2f64.sqrt()))
                    }
                })
                .collect();
        }
        assert_relative_eq!(n.forward(&x).unwrap(), a[0], epsilon = 1e-12);
        assert_relative_eq!(n.forward_generic(&n.theta, &x).unwrap(), a[0], epsilon = 1e-12);
    }

    #[test]
    fn block_gradient_matches_scalar_graph() {
        let net = Arc::new(NetworkParams::with_sizes(vec![4, 6, 5, 1], Activation::Gelu, 9).unwrap());
        let rows = [[0.2, -0.3, 0.8, 0.1], [-0.9, 0.4, 0.0, 0.5], [0.3, 0.3, -0.2, -0.7]];
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();

        let t = Tape::new();
        let id = t.register_params(net.n_params());
        let x = t.vars(&flat);
        let y = net.apply(&x[0], &x, Some(id)).unwrap();
        let loss = Var::lincomb(&[1.0, -2.0, 0.5], &y);
        let g = t.backward(&loss).unwrap();

        let t2 = Tape::new();
        let th = t2.vars(&net.theta);
        let x2 = t2.vars(&flat);
        let y2: Vec<Var> = (0..3).map(|r| net.forward_generic(&th, &x2[4 * r..4 * r + 4]).unwrap()).collect();
        let loss2 = Var::lincomb(&[1.0, -2.0, 0.5], &y2);
        let g2 = t2.backward(&loss2).unwrap();

        assert_relative_eq!(loss.value(), loss2.value(), epsilon = 1e-13);
        for (p, q) in g.param(id).iter().zip(&th) {
            assert_relative_eq!(*p, g2.wrt(q), epsilon = 1e-12);
        }
        for (a, b) in x.iter().zip(&x2) {
            assert_relative_eq!(g.wrt(a), g2.wrt(b), epsilon = 1e-12);
        }
    }

    #[test]
    fn constant_features_still_record_parameter_gradient() {
        let net = Arc::new(NetworkParams::with_sizes(vec![2, 3, 1], Activation::Gelu, 1).unwrap());
        let t = Tape::new();
        let id = t.register_params(net.n_params());
        let anchor = t.var(0.0);
        let x = [Var::constant(0.5), Var::constant(-0.5)];
        let y = net.apply(&anchor, &x, Some(id)).unwrap();
        let g = t.backward(&y[0]).unwrap();
        assert!(g.param(id).iter().any(|v| *v != 0.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn output_positive(seed in 0u64..1000, x in proptest::collection::vec(-50.0f64..50.0, 3)) {
            let n = NetworkParams::with_sizes(vec![3, 8, 8, 1], Activation::Gelu, seed).unwrap();
            prop_assert!(n.forward(&x).unwrap() > 0.0);
        }

        #[test]
        fn parameter_gradient_matches_fd(seed in 0u64..1000, x in proptest::collection::vec(-1.0f64..1.0, 3)) {
            let net = Arc::new(NetworkParams::with_sizes(vec![3, 5, 4, 1], Activation::Gelu, seed).unwrap());
            let t = Tape::new();
            let id = t.register_params(net.n_params());
            let xv = t.vars(&x);
            let y = net.apply(&xv[0], &xv, Some(id)).unwrap();
            let g = t.backward(&y[0]).unwrap();
            let h = 1e-6;
            for j in (0..net.n_params()).step_by(3) {
                let mut p = (*net).clone();
                p.theta[j] += h;
                let up = p.forward(&x).unwrap();
                p.theta[j] -= 2.0 * h;
                let dn = p.forward(&x).unwrap();
                let fd = (up - dn) / (2.0 * h);
                let an = g.param(id)[j];
                prop_assert!((fd - an).abs() <= 1e-6 * an.abs().max(1e-3), "{} {} {}", j, fd, an);
            }
        }
    }
}

//! Scalar-in, scalar-out multilayer perceptron with sigmoid hidden units and
//! a linear output unit.
//!
//! Besides the plain forward pass the network propagates a second-order jet
//! `(a, ∂a/∂x, ∂²a/∂x²)` through every layer, which gives `N`, `N'` and `N''`
//! analytically. Reverse accumulation over the same jet gives the gradient of
//! any linear combination of the three channels with respect to every
//! parameter.
//!
//! # Parameter layout
//!
//! Parameters are stored as one flat vector. Layers appear in order from the
//! input side (hidden layers first, the output layer last). Each layer
//! contributes its weight matrix in row-major order (`out × in`, entry
//! `w[i][j]` connects unit `j` of the previous layer to unit `i`), followed by
//! its `out` biases. The threshold of a classic perceptron is absorbed into
//! the bias.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Logistic function `1 / (1 + e^{-x})`, evaluated without overflow.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `w₀ + Σⱼ wⱼ xⱼ`.
pub fn neuron_input(weights: &[f64], bias: f64, inputs: &[f64]) -> Result<f64> {
    if weights.len() != inputs.len() {
        return Err(Error::LengthMismatch {
            expected: weights.len(),
            actual: inputs.len(),
        });
    }
    Ok(bias + dot(weights, inputs))
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LayerShape {
    n_in: usize,
    n_out: usize,
    /// Offset of the weight block in the flat parameter vector.
    offset: usize,
}

impl LayerShape {
    fn weights_len(&self) -> usize {
        self.n_in * self.n_out
    }

    fn bias_offset(&self) -> usize {
        self.offset + self.weights_len()
    }

    fn end(&self) -> usize {
        self.bias_offset() + self.n_out
    }
}

fn layer_shapes(hidden_sizes: &[usize]) -> Vec<LayerShape> {
    let mut shapes = Vec::with_capacity(hidden_sizes.len() + 1);
    let mut n_in = 1;
    let mut offset = 0;
    for &n_out in hidden_sizes.iter().chain(std::iter::once(&1)) {
        let shape = LayerShape { n_in, n_out, offset };
        offset = shape.end();
        shapes.push(shape);
        n_in = n_out;
    }
    shapes
}

/// Number of parameters of a network with the given hidden widths.
pub fn param_count(hidden_sizes: &[usize]) -> usize {
    layer_shapes(hidden_sizes).last().map_or(0, LayerShape::end)
}

/// Weights and biases of the network, in the flat layout described in the
/// module docs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkSnapshot", into = "NetworkSnapshot")]
pub struct NetworkParams {
    hidden_sizes: Vec<usize>,
    params: Vec<f64>,
    #[serde(skip)]
    shapes: Vec<LayerShape>,
}

/// On-disk form: `{"hidden_sizes": [...], "params": [...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSnapshot {
    pub hidden_sizes: Vec<usize>,
    pub params: Vec<f64>,
}

impl TryFrom<NetworkSnapshot> for NetworkParams {
    type Error = Error;

    fn try_from(s: NetworkSnapshot) -> Result<Self> {
        NetworkParams::from_flat(&s.hidden_sizes, s.params)
    }
}

impl From<NetworkParams> for NetworkSnapshot {
    fn from(p: NetworkParams) -> Self {
        NetworkSnapshot {
            hidden_sizes: p.hidden_sizes,
            params: p.params,
        }
    }
}

fn check_sizes(hidden_sizes: &[usize]) -> Result<()> {
    if hidden_sizes.is_empty() {
        return Err(Error::InvalidNetwork("at least one hidden layer is required".into()));
    }
    if hidden_sizes.contains(&0) {
        return Err(Error::InvalidNetwork(format!(
            "hidden layer widths must be positive, got {hidden_sizes:?}"
        )));
    }
    Ok(())
}

impl NetworkParams {
    /// Builds a network from a flat parameter vector.
    pub fn from_flat(hidden_sizes: &[usize], params: Vec<f64>) -> Result<Self> {
        check_sizes(hidden_sizes)?;
        let expected = param_count(hidden_sizes);
        if params.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                actual: params.len(),
            });
        }
        if let Some(i) = params.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidNetwork(format!("parameter {i} is not finite")));
        }
        Ok(Self {
            hidden_sizes: hidden_sizes.to_vec(),
            params,
            shapes: layer_shapes(hidden_sizes),
        })
    }

    /// Uniform `[-r, r]` weights with `r = 1/√fan_in`, zero biases.
    pub fn init(hidden_sizes: &[usize], seed: u64) -> Result<Self> {
        check_sizes(hidden_sizes)?;
        let shapes = layer_shapes(hidden_sizes);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; param_count(hidden_sizes)];
        for s in &shapes {
            let r = 1.0 / (s.n_in as f64).sqrt();
            for w in &mut params[s.offset..s.bias_offset()] {
                *w = rng.gen_range(-r..=r);
            }
        }
        Ok(Self {
            hidden_sizes: hidden_sizes.to_vec(),
            params,
            shapes,
        })
    }

    pub fn hidden_sizes(&self) -> &[usize] {
        &self.hidden_sizes
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.params
    }

    pub(crate) fn as_flat_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn output_shape(&self) -> LayerShape {
        *self.shapes.last().expect("network has an output layer")
    }

    /// Output layer weights followed by the output bias.
    pub fn output_params(&self) -> &[f64] {
        let s = self.output_shape();
        &self.params[s.offset..s.end()]
    }

    pub fn output_params_mut(&mut self) -> &mut [f64] {
        let s = self.output_shape();
        &mut self.params[s.offset..s.end()]
    }

    /// Multiplies the network output by `factor` (scales the output layer).
    pub fn scale_output(&mut self, factor: f64) {
        for p in self.output_params_mut() {
            *p *= factor;
        }
    }

    fn weights(&self, s: &LayerShape) -> &[f64] {
        &self.params[s.offset..s.bias_offset()]
    }

    fn biases(&self, s: &LayerShape) -> &[f64] {
        &self.params[s.bias_offset()..s.end()]
    }

    /// `N(x)`.
    pub fn forward(&self, x: f64) -> f64 {
        let mut act = vec![x];
        let last = self.shapes.len() - 1;
        for (l, s) in self.shapes.iter().enumerate() {
            let w = self.weights(s);
            let b = self.biases(s);
            act = (0..s.n_out)
                .map(|i| {
                    let z = b[i] + dot(&w[i * s.n_in..(i + 1) * s.n_in], &act);
                    if l == last {
                        z
                    } else {
                        sigmoid(z)
                    }
                })
                .collect();
        }
        act[0]
    }

    /// `N`, `N'`, `N''` and the parameter gradient of each.
    pub fn forward_with_derivatives(&self, x: f64) -> NetEval {
        let mut ws = JetWorkspace::new(self);
        let [value, dx, dxx] = self.jet(x, &mut ws);
        let n = self.n_params();
        let mut grads = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        for (c, g) in grads.iter_mut().enumerate() {
            let mut cot = [0.0; 3];
            cot[c] = 1.0;
            self.jet_backward(&mut ws, cot, g);
        }
        let [grad_value, grad_dx, grad_dxx] = grads;
        NetEval {
            value,
            dx,
            dxx,
            grad_value,
            grad_dx,
            grad_dxx,
        }
    }

    /// Forward jet pass. Leaves the intermediate state in `ws` for
    /// [`Self::jet_backward`].
    pub(crate) fn jet(&self, x: f64, ws: &mut JetWorkspace) -> [f64; 3] {
        ws.inputs[0].set(0, x, 1.0, 0.0);
        let last = self.shapes.len() - 1;
        for (l, s) in self.shapes.iter().enumerate() {
            let w = self.weights(s);
            let b = self.biases(s);
            let (before, after) = ws.inputs.split_at_mut(l + 1);
            let input = &before[l];
            let pre = &mut ws.pre[l];
            for i in 0..s.n_out {
                let row = &w[i * s.n_in..(i + 1) * s.n_in];
                pre.set(
                    i,
                    b[i] + dot(row, &input.v),
                    dot(row, &input.d1),
                    dot(row, &input.d2),
                );
            }
            if l == last {
                return [pre.v[0], pre.d1[0], pre.d2[0]];
            }
            let out = &mut after[0];
            let act = &mut ws.act[l];
            for i in 0..s.n_out {
                let sv = sigmoid(pre.v[i]);
                let s1 = sv * (1.0 - sv);
                let s2 = s1 * (1.0 - 2.0 * sv);
                let s3 = s1 * (1.0 - 6.0 * sv + 6.0 * sv * sv);
                act[i] = [s1, s2, s3];
                let z1 = pre.d1[i];
                out.set(i, sv, s1 * z1, s2 * z1 * z1 + s1 * pre.d2[i]);
            }
        }
        unreachable!("output layer returns")
    }

    /// Adds `∂(c₀N + c₁N' + c₂N'')/∂θ` to `grad`, for the point of the last
    /// [`Self::jet`] call.
    pub(crate) fn jet_backward(&self, ws: &mut JetWorkspace, cot: [f64; 3], grad: &mut [f64]) {
        let last = self.shapes.len() - 1;
        let JetWorkspace {
            inputs,
            pre,
            act,
            adj_out,
            adj_pre,
        } = ws;
        adj_out.set(0, cot[0], cot[1], cot[2]);
        for l in (0..=last).rev() {
            let s = self.shapes[l];
            let zp = &pre[l];
            let g = &mut adj_pre[l];
            // adjoint of the pre-activation jet
            if l == last {
                g.set(0, adj_out.v[0], adj_out.d1[0], adj_out.d2[0]);
            } else {
                for i in 0..s.n_out {
                    let [s1, s2, s3] = act[l][i];
                    let (z1, z2) = (zp.d1[i], zp.d2[i]);
                    let (y0, y1, y2) = (adj_out.v[i], adj_out.d1[i], adj_out.d2[i]);
                    g.set(
                        i,
                        y0 * s1 + y1 * s2 * z1 + y2 * (s3 * z1 * z1 + s2 * z2),
                        y1 * s1 + y2 * 2.0 * s2 * z1,
                        y2 * s1,
                    );
                }
            }
            let input = &inputs[l];
            let (gw, gb) = grad[s.offset..s.end()].split_at_mut(s.weights_len());
            for i in 0..s.n_out {
                let (g0, g1, g2) = (g.v[i], g.d1[i], g.d2[i]);
                gb[i] += g0;
                let row = &mut gw[i * s.n_in..(i + 1) * s.n_in];
                for j in 0..s.n_in {
                    row[j] += g0 * input.v[j] + g1 * input.d1[j] + g2 * input.d2[j];
                }
            }
            if l > 0 {
                let w = self.weights(&s);
                adj_out.clear(s.n_in);
                for i in 0..s.n_out {
                    let (g0, g1, g2) = (g.v[i], g.d1[i], g.d2[i]);
                    for j in 0..s.n_in {
                        let wij = w[i * s.n_in + j];
                        adj_out.v[j] += wij * g0;
                        adj_out.d1[j] += wij * g1;
                        adj_out.d2[j] += wij * g2;
                    }
                }
            }
        }
    }
}

/// Value, input derivatives and parameter gradients of the network at one
/// input.
#[derive(Debug, Clone, PartialEq)]
pub struct NetEval {
    pub value: f64,
    pub dx: f64,
    pub dxx: f64,
    pub grad_value: Vec<f64>,
    pub grad_dx: Vec<f64>,
    pub grad_dxx: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct Jet {
    v: Vec<f64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
}

impl Jet {
    fn zeros(n: usize) -> Self {
        Self {
            v: vec![0.0; n],
            d1: vec![0.0; n],
            d2: vec![0.0; n],
        }
    }

    #[inline]
    fn set(&mut self, i: usize, v: f64, d1: f64, d2: f64) {
        self.v[i] = v;
        self.d1[i] = d1;
        self.d2[i] = d2;
    }

    fn clear(&mut self, n: usize) {
        self.v.clear();
        self.v.resize(n, 0.0);
        self.d1.clear();
        self.d1.resize(n, 0.0);
        self.d2.clear();
        self.d2.resize(n, 0.0);
    }
}

/// Scratch buffers for one jet forward/backward pass. Reusable across
/// points; one per thread.
#[derive(Debug, Clone)]
pub(crate) struct JetWorkspace {
    inputs: Vec<Jet>,
    pre: Vec<Jet>,
    act: Vec<Vec<[f64; 3]>>,
    adj_out: Jet,
    adj_pre: Vec<Jet>,
}

impl JetWorkspace {
    pub(crate) fn new(net: &NetworkParams) -> Self {
        let inputs = net.shapes.iter().map(|s| Jet::zeros(s.n_in)).collect();
        let pre = net.shapes.iter().map(|s| Jet::zeros(s.n_out)).collect();
        let act = net.shapes.iter().map(|s| vec![[0.0; 3]; s.n_out]).collect();
        let widest = net.shapes.iter().map(|s| s.n_out.max(s.n_in)).max().unwrap_or(1);
        let adj_pre = net.shapes.iter().map(|s| Jet::zeros(s.n_out)).collect();
        Self {
            inputs,
            pre,
            act,
            adj_out: Jet::zeros(widest),
            adj_pre,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    /// Straightforward forward pass written independently of the jet code.
    fn reference_forward(hidden: &[usize], p: &[f64], x: f64) -> f64 {
        let mut a = vec![x];
        let mut k = 0;
        let widths: Vec<usize> = hidden.iter().copied().chain([1]).collect();
        for (l, &n_out) in widths.iter().enumerate() {
            let n_in = a.len();
            let w = &p[k..k + n_out * n_in];
            let b = &p[k + n_out * n_in..k + n_out * n_in + n_out];
            k += n_out * n_in + n_out;
            let mut z = vec![0.0; n_out];
            for i in 0..n_out {
                z[i] = b[i];
                for j in 0..n_in {
                    z[i] += w[i * n_in + j] * a[j];
                }
                if l + 1 < widths.len() {
                    z[i] = 1.0 / (1.0 + (-z[i]).exp());
                }
            }
            a = z;
        }
        a[0]
    }

    fn randomized(hidden: &[usize], seed: u64) -> NetworkParams {
        let mut net = NetworkParams::init(hidden, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcdef);
        for p in net.as_flat_mut() {
            *p += rng.gen_range(-0.5..0.5);
        }
        net
    }

    fn rel_close(a: f64, b: f64, rel: f64, floor: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs()).max(floor)
    }

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_eq!(sigmoid(f64::INFINITY), 1.0);
        assert_eq!(sigmoid(f64::NEG_INFINITY), 0.0);
        assert!((sigmoid(1.0) - 0.731_058_578_6).abs() < 1e-10);
        assert!(sigmoid(800.0) <= 1.0 && sigmoid(-800.0) >= 0.0);
        assert!(!sigmoid(-1e308).is_nan());
    }

    #[test]
    fn neuron_input_examples() {
        assert_eq!(neuron_input(&[0.0; 3], 0.0, &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(neuron_input(&[1.0], 0.5, &[2.0]).unwrap(), 2.5);
        assert_eq!(neuron_input(&[1.0, -1.0], 1.0, &[3.0, 3.0]).unwrap(), 1.0);
        assert!(matches!(
            neuron_input(&[1.0], 0.0, &[1.0, 2.0]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn zero_hidden_layer_gives_half_per_unit() {
        let hidden = [4];
        let mut p = vec![0.0; param_count(&hidden)];
        let out = &mut p[8..];
        out[..4].copy_from_slice(&[1.0, -2.0, 0.5, 3.0]);
        out[4] = 0.25;
        let net = NetworkParams::from_flat(&hidden, p).unwrap();
        assert_eq!(net.forward(-3.0), 0.5 * 2.5 + 0.25);
    }

    #[test]
    fn constant_network() {
        // one hidden unit, input weight 0, output weight 2, output bias -1
        let net = NetworkParams::from_flat(&[1], vec![0.0, 0.0, 2.0, -1.0]).unwrap();
        for &x in &[-5.0, 0.0, 1.3] {
            let e = net.forward_with_derivatives(x);
            assert_eq!(e.value, 0.0);
            assert_eq!(e.dx, 0.0);
            assert_eq!(e.dxx, 0.0);
        }
    }

    #[test]
    fn forward_matches_reference() {
        for hidden in [vec![10], vec![5, 3]] {
            let net = randomized(&hidden, 42);
            let a = net.forward(0.3);
            let b = reference_forward(&hidden, net.as_flat(), 0.3);
            assert!((a - b).abs() < 1e-14, "{a} vs {b}");
        }
    }

    #[test]
    fn jet_value_is_forward_exactly() {
        for hidden in [vec![10], vec![6, 4]] {
            let net = randomized(&hidden, 3);
            for &x in &[-2.0, -0.1, 0.0, 0.7, 4.0] {
                assert_eq!(net.forward_with_derivatives(x).value, net.forward(x));
            }
        }
    }

    #[test]
    fn input_derivatives_match_finite_differences() {
        let h = 1e-3;
        for hidden in [vec![10], vec![6, 4]] {
            for seed in 0..5 {
                let net = randomized(&hidden, seed);
                for &x in &[-1.5, -0.2, 0.3, 1.1] {
                    let e = net.forward_with_derivatives(x);
                    let (fp, f0, fm) = (net.forward(x + h), net.forward(x), net.forward(x - h));
                    let d1 = (fp - fm) / (2.0 * h);
                    let d2 = (fp - 2.0 * f0 + fm) / (h * h);
                    assert!(rel_close(e.dx, d1, 1e-5, 1e-2), "dx {} vs {}", e.dx, d1);
                    assert!(rel_close(e.dxx, d2, 1e-4, 1e-2), "dxx {} vs {}", e.dxx, d2);
                }
            }
        }
    }

    #[test]
    fn parameter_gradients_match_perturbation() {
        let h = 1e-5;
        for hidden in [vec![10], vec![4, 3]] {
            let net = randomized(&hidden, 11);
            let x = 0.6;
            let e = net.forward_with_derivatives(x);
            for k in 0..net.n_params() {
                let mut up = net.clone();
                up.as_flat_mut()[k] += h;
                let mut dn = net.clone();
                dn.as_flat_mut()[k] -= h;
                let (eu, ed) = (up.forward_with_derivatives(x), dn.forward_with_derivatives(x));
                let fd = [
                    (eu.value - ed.value) / (2.0 * h),
                    (eu.dx - ed.dx) / (2.0 * h),
                    (eu.dxx - ed.dxx) / (2.0 * h),
                ];
                let an = [e.grad_value[k], e.grad_dx[k], e.grad_dxx[k]];
                for c in 0..3 {
                    assert!(
                        rel_close(an[c], fd[c], 1e-4, 1e-3),
                        "param {k} channel {c}: {} vs {}",
                        an[c],
                        fd[c]
                    );
                }
            }
        }
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let a = NetworkParams::init(&[10], 5).unwrap();
        let b = NetworkParams::init(&[10], 5).unwrap();
        let c = NetworkParams::init(&[10], 6).unwrap();
        assert_eq!(a.as_flat(), b.as_flat());
        assert_ne!(a.as_flat(), c.as_flat());
        assert_eq!(a.n_params(), 31);
        // biases zero, weights within 1/sqrt(fan-in)
        let p = a.as_flat();
        assert!(p[10..20].iter().all(|&b| b == 0.0));
        assert_eq!(p[30], 0.0);
        assert!(p[..10].iter().all(|w| w.abs() <= 1.0));
        let r = 1.0 / 10f64.sqrt();
        assert!(p[20..30].iter().all(|w| w.abs() <= r));
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(NetworkParams::init(&[], 1).is_err());
        assert!(NetworkParams::init(&[3, 0], 1).is_err());
        assert!(NetworkParams::from_flat(&[2], vec![0.0; 6]).is_err());
        assert!(NetworkParams::from_flat(&[1], vec![0.0, f64::NAN, 0.0, 0.0]).is_err());
    }

    #[test]
    fn snapshot_round_trip() {
        let net = randomized(&[5, 2], 9);
        let json = serde_json::to_string(&net).unwrap();
        assert!(json.starts_with("{\"hidden_sizes\":[5,2],\"params\":["));
        let back: NetworkParams = serde_json::from_str(&json).unwrap();
        assert_eq!(back, net);
        let bad = r#"{"hidden_sizes":[2],"params":[1.0]}"#;
        assert!(serde_json::from_str::<NetworkParams>(bad).is_err());
    }

    proptest! {
        #[test]
        fn sigmoid_symmetry(x in -700.0f64..700.0) {
            prop_assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() <= 2.0 * f64::EPSILON);
        }

        #[test]
        fn sigmoid_derivative_identity(x in -20.0f64..20.0) {
            let h = 1e-5;
            let fd = (sigmoid(x + h) - sigmoid(x - h)) / (2.0 * h);
            let s = sigmoid(x);
            let an = s * (1.0 - s);
            prop_assert!((fd - an).abs() <= 1e-6 * an.max(1e-4));
        }
    }
}

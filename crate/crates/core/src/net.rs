//! Two-hidden-layer network `u(t, x, y, s, wx, wy)` with exact derivatives.
//!
//! Forward mode carries the three tangents `du/dt`, `du/dx`, `du/dy` through
//! the hidden layers; one reverse sweep then differentiates any objective of
//! the form `a * u + bt * du/dt + bx * du/dx + by * du/dy` with respect to
//! every parameter. Because the seeds may touch the input-derivatives, the
//! reverse sweep includes the second-derivative terms of the activations.
//!
//! Two implementations share this contract: [`forward`]/[`param_gradient`]
//! work one sample at a time and serve as the reference, while
//! [`BatchEngine`] runs the same algebra on stacked matrices.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const INPUT_DIM: usize = 6;
/// Number of differentiated inputs: `t`, `x`, `y`.
pub const TANGENTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    /// Value, first and second derivative at `z`. The ReLU derivative at
    /// exactly zero is taken to be zero.
    #[inline]
    pub fn eval(self, z: f64) -> (f64, f64, f64) {
        match self {
            Activation::Tanh => {
                let a = z.tanh();
                let d = 1.0 - a * a;
                (a, d, -2.0 * a * d)
            }
            Activation::Relu => {
                if z > 0.0 {
                    (z, 1.0, 0.0)
                } else {
                    (0.0, 0.0, 0.0)
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "tanh" => Some(Activation::Tanh),
            "relu" => Some(Activation::Relu),
            _ => None,
        }
    }
}

/// Layer dimensions `[6, hidden1, hidden2, 1]` and the hidden activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkShape {
    pub hidden1: usize,
    pub hidden2: usize,
    pub activation: Activation,
}

impl NetworkShape {
    pub fn new(hidden1: usize, hidden2: usize, activation: Activation) -> Self {
        NetworkShape {
            hidden1,
            hidden2,
            activation,
        }
    }

    pub fn layer_dims(&self) -> [usize; 4] {
        [INPUT_DIM, self.hidden1, self.hidden2, 1]
    }

    pub fn from_dims(dims: &[usize], activation: Activation) -> Result<Self> {
        match dims {
            [INPUT_DIM, h1, h2, 1] if *h1 > 0 && *h2 > 0 => Ok(NetworkShape::new(*h1, *h2, activation)),
            _ => Err(Error::invalid(
                "layer_dims",
                format!("expected [6, h1, h2, 1] with positive hidden widths, got {dims:?}"),
            )),
        }
    }

    pub fn param_count(&self) -> usize {
        let l = self.layout();
        l.b3 + 1
    }

    fn layout(&self) -> Layout {
        let (h1, h2) = (self.hidden1, self.hidden2);
        let w1 = 0;
        let b1 = w1 + h1 * INPUT_DIM;
        let w2 = b1 + h1;
        let b2 = w2 + h2 * h1;
        let w3 = b2 + h2;
        let b3 = w3 + h2;
        Layout { w1, b1, w2, b2, w3, b3 }
    }
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w3: usize,
    b3: usize,
}

/// Weights and biases stored contiguously as `W1, b1, W2, b2, W3, b3`, each
/// matrix row-major with shape `(fan_out, fan_in)`.
///
/// Gradients and variational parameters reuse this type, so elementwise
/// arithmetic works directly on [`NetworkParams::as_slice`].
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    shape: NetworkShape,
    data: Vec<f64>,
}

impl NetworkParams {
    pub fn zeros(shape: NetworkShape) -> Self {
        NetworkParams {
            data: vec![0.0; shape.param_count()],
            shape,
        }
    }

    pub fn from_vec(shape: NetworkShape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.param_count() {
            return Err(Error::invalid(
                "params",
                format!("expected {} values, got {}", shape.param_count(), data.len()),
            ));
        }
        Ok(NetworkParams { shape, data })
    }

    pub fn shape(&self) -> &NetworkShape {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn w1(&self) -> ArrayView2<'_, f64> {
        let l = self.shape.layout();
        ArrayView2::from_shape((self.shape.hidden1, INPUT_DIM), &self.data[l.w1..l.b1]).unwrap()
    }

    pub fn b1(&self) -> ArrayView1<'_, f64> {
        let l = self.shape.layout();
        ArrayView1::from(&self.data[l.b1..l.w2])
    }

    pub fn w2(&self) -> ArrayView2<'_, f64> {
        let l = self.shape.layout();
        ArrayView2::from_shape((self.shape.hidden2, self.shape.hidden1), &self.data[l.w2..l.b2]).unwrap()
    }

    pub fn b2(&self) -> ArrayView1<'_, f64> {
        let l = self.shape.layout();
        ArrayView1::from(&self.data[l.b2..l.w3])
    }

    /// The single row of the output weight matrix.
    pub fn w3(&self) -> ArrayView1<'_, f64> {
        let l = self.shape.layout();
        ArrayView1::from(&self.data[l.w3..l.b3])
    }

    pub fn b3(&self) -> f64 {
        self.data[self.shape.layout().b3]
    }

    /// Mutable views of `(W1, b1, W2, b2, W3, b3)`.
    #[allow(clippy::type_complexity)]
    pub fn parts_mut(
        &mut self,
    ) -> (
        ArrayViewMut2<'_, f64>,
        ArrayViewMut1<'_, f64>,
        ArrayViewMut2<'_, f64>,
        ArrayViewMut1<'_, f64>,
        ArrayViewMut1<'_, f64>,
        &mut f64,
    ) {
        let l = self.shape.layout();
        let (h1, h2) = (self.shape.hidden1, self.shape.hidden2);
        let (w1, rest) = self.data.split_at_mut(l.b1);
        let (b1, rest) = rest.split_at_mut(l.w2 - l.b1);
        let (w2, rest) = rest.split_at_mut(l.b2 - l.w2);
        let (b2, rest) = rest.split_at_mut(l.w3 - l.b2);
        let (w3, b3) = rest.split_at_mut(l.b3 - l.w3);
        (
            ArrayViewMut2::from_shape((h1, INPUT_DIM), w1).unwrap(),
            ArrayViewMut1::from(b1),
            ArrayViewMut2::from_shape((h2, h1), w2).unwrap(),
            ArrayViewMut1::from(b2),
            ArrayViewMut1::from(w3),
            &mut b3[0],
        )
    }

    /// Named blocks in storage order with their matrix shapes.
    pub fn blocks(&self) -> Vec<(&'static str, (usize, usize), &[f64])> {
        let l = self.shape.layout();
        let (h1, h2) = (self.shape.hidden1, self.shape.hidden2);
        vec![
            ("W1", (h1, INPUT_DIM), &self.data[l.w1..l.b1]),
            ("b1", (h1, 1), &self.data[l.b1..l.w2]),
            ("W2", (h2, h1), &self.data[l.w2..l.b2]),
            ("b2", (h2, 1), &self.data[l.b2..l.w3]),
            ("W3", (1, h2), &self.data[l.w3..l.b3]),
            ("b3", (1, 1), &self.data[l.b3..]),
        ]
    }

    pub fn add_assign(&mut self, other: &NetworkParams) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, k: f64) {
        self.data.iter_mut().for_each(|v| *v *= k);
    }
}

/// Glorot-uniform weights in `+-sqrt(6 / (fan_in + fan_out))`, zero biases.
/// Draws come from ChaCha8 seeded with `seed`.
pub fn init_params(shape: NetworkShape, seed: u64) -> NetworkParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = NetworkParams::zeros(shape);
    let (mut w1, _, mut w2, _, mut w3, _) = p.parts_mut();
    let mut fill = |m: &mut [f64], fan_in: usize, fan_out: usize| {
        let lim = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for v in m.iter_mut() {
            *v = rng.random_range(-lim..lim);
        }
    };
    fill(w1.as_slice_mut().unwrap(), INPUT_DIM, shape.hidden1);
    fill(w2.as_slice_mut().unwrap(), shape.hidden1, shape.hidden2);
    fill(w3.as_slice_mut().unwrap(), shape.hidden2, 1);
    p
}

/// Network output and its `(t, x, y)` derivatives at one input, plus the
/// pre-activations needed by [`param_gradient`].
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub input: [f64; INPUT_DIM],
    pub output: f64,
    /// `(du/dt, du/dx, du/dy)`.
    pub input_grads: [f64; TANGENTS],
    pub z1: Vec<f64>,
    pub z2: Vec<f64>,
}

impl EvalRecord {
    pub fn spatial_grad(&self) -> (f64, f64) {
        (self.input_grads[1], self.input_grads[2])
    }
}

/// Adjoint seeds of a per-sample objective
/// `value * u + dt * du/dt + dx * du/dx + dy * du/dy`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Seeds {
    pub value: f64,
    pub dt: f64,
    pub dx: f64,
    pub dy: f64,
}

impl Seeds {
    pub fn value(a: f64) -> Self {
        Seeds {
            value: a,
            ..Default::default()
        }
    }

    fn grads(&self) -> [f64; TANGENTS] {
        [self.dt, self.dx, self.dy]
    }
}

pub fn forward(input: &[f64; INPUT_DIM], params: &NetworkParams) -> EvalRecord {
    let shape = params.shape;
    let act = shape.activation;
    let (w1, b1, w2, b2, w3) = (params.w1(), params.b1(), params.w2(), params.b2(), params.w3());

    let mut z1 = vec![0.0; shape.hidden1];
    let mut a1 = vec![0.0; shape.hidden1];
    let mut t1 = vec![[0.0; TANGENTS]; shape.hidden1];
    for j in 0..shape.hidden1 {
        let mut z = b1[j];
        for (k, x) in input.iter().enumerate() {
            z += w1[[j, k]] * x;
        }
        let (a, d, _) = act.eval(z);
        z1[j] = z;
        a1[j] = a;
        for d_in in 0..TANGENTS {
            t1[j][d_in] = d * w1[[j, d_in]];
        }
    }

    let mut z2 = vec![0.0; shape.hidden2];
    let mut output = params.b3();
    let mut input_grads = [0.0; TANGENTS];
    for j in 0..shape.hidden2 {
        let mut z = b2[j];
        let mut dz = [0.0; TANGENTS];
        for k in 0..shape.hidden1 {
            z += w2[[j, k]] * a1[k];
            for d_in in 0..TANGENTS {
                dz[d_in] += w2[[j, k]] * t1[k][d_in];
            }
        }
        let (a, d, _) = act.eval(z);
        z2[j] = z;
        output += w3[j] * a;
        for d_in in 0..TANGENTS {
            input_grads[d_in] += w3[j] * d * dz[d_in];
        }
    }

    EvalRecord {
        input: *input,
        output,
        input_grads,
        z1,
        z2,
    }
}

/// Parameter gradient of the seeded objective at the sample cached in
/// `record`.
pub fn param_gradient(seeds: &Seeds, record: &EvalRecord, params: &NetworkParams) -> NetworkParams {
    let shape = params.shape;
    let act = shape.activation;
    let (h1, h2) = (shape.hidden1, shape.hidden2);
    let (w1, w2, w3) = (params.w1(), params.w2(), params.w3());
    let bt = seeds.grads();

    // recompute the forward quantities from the cached pre-activations
    let l1: Vec<(f64, f64, f64)> = record.z1.iter().map(|&z| act.eval(z)).collect();
    let l2: Vec<(f64, f64, f64)> = record.z2.iter().map(|&z| act.eval(z)).collect();
    let t1: Vec<[f64; TANGENTS]> = (0..h1)
        .map(|j| [l1[j].1 * w1[[j, 0]], l1[j].1 * w1[[j, 1]], l1[j].1 * w1[[j, 2]]])
        .collect();
    let dz2: Vec<[f64; TANGENTS]> = (0..h2)
        .map(|j| {
            let mut dz = [0.0; TANGENTS];
            for k in 0..h1 {
                for d in 0..TANGENTS {
                    dz[d] += w2[[j, k]] * t1[k][d];
                }
            }
            dz
        })
        .collect();

    let mut grad = NetworkParams::zeros(shape);
    let (mut gw1, mut gb1, mut gw2, mut gb2, mut gw3, gb3) = grad.parts_mut();

    *gb3 = seeds.value;
    let mut z2_bar = vec![0.0; h2];
    let mut dz2_bar = vec![[0.0; TANGENTS]; h2];
    for j in 0..h2 {
        let (a, d, dd) = l2[j];
        let mut g = seeds.value * a;
        for k in 0..TANGENTS {
            g += bt[k] * d * dz2[j][k];
        }
        gw3[j] = g;
        let a_bar = seeds.value * w3[j];
        let mut zb = a_bar * d;
        for k in 0..TANGENTS {
            let t_bar = bt[k] * w3[j];
            zb += t_bar * dd * dz2[j][k];
            dz2_bar[j][k] = t_bar * d;
        }
        z2_bar[j] = zb;
    }

    let mut a1_bar = vec![0.0; h1];
    let mut t1_bar = vec![[0.0; TANGENTS]; h1];
    for j in 0..h2 {
        gb2[j] = z2_bar[j];
        for k in 0..h1 {
            let mut g = z2_bar[j] * l1[k].0;
            for d in 0..TANGENTS {
                g += dz2_bar[j][d] * t1[k][d];
                t1_bar[k][d] += w2[[j, k]] * dz2_bar[j][d];
            }
            gw2[[j, k]] = g;
            a1_bar[k] += w2[[j, k]] * z2_bar[j];
        }
    }

    for j in 0..h1 {
        let (_, d, dd) = l1[j];
        let mut zb = a1_bar[j] * d;
        for k in 0..TANGENTS {
            zb += t1_bar[j][k] * dd * w1[[j, k]];
        }
        gb1[j] = zb;
        for (k, x) in record.input.iter().enumerate() {
            gw1[[j, k]] = zb * x;
        }
        for k in 0..TANGENTS {
            gw1[[j, k]] += t1_bar[j][k] * d;
        }
    }
    grad
}

/// Reusable buffers for batched evaluation. After [`BatchEngine::forward`]
/// the caches describe the last batch until the next call.
#[derive(Debug, Default)]
pub struct BatchEngine {
    n: usize,
    tangents: bool,
    inputs: Array2<f64>,
    z1: Array2<f64>,
    g1: Array2<f64>,
    h1: Array2<f64>,
    /// `[A1; T1_t; T1_x; T1_y]`, each block `n x hidden1`.
    s1: Array2<f64>,
    /// `[Z2; dZ2_t; dZ2_x; dZ2_y]`.
    z2s: Array2<f64>,
    a2: Array2<f64>,
    g2: Array2<f64>,
    h2: Array2<f64>,
    zbar: Array2<f64>,
    s1bar: Array2<f64>,
    gw2: Array2<f64>,
    gw1: Array2<f64>,
}

/// Outputs of a batched forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutput {
    pub u: Array1<f64>,
    /// `n x 3` rows of `(du/dt, du/dx, du/dy)`; empty without tangents.
    pub grads: Array2<f64>,
}

impl BatchEngine {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward(&mut self, params: &NetworkParams, inputs: ArrayView2<'_, f64>, tangents: bool) -> BatchOutput {
        let shape = params.shape;
        let act = shape.activation;
        let (h1, h2) = (shape.hidden1, shape.hidden2);
        let n = inputs.nrows();
        let blocks = if tangents { 1 + TANGENTS } else { 1 };
        self.n = n;
        self.tangents = tangents;
        self.inputs = inputs.to_owned();

        let w1 = params.w1();
        resize(&mut self.z1, n, h1);
        general_mat_mul(1.0, &inputs, &w1.t(), 0.0, &mut self.z1);
        self.z1 += &params.b1();

        resize(&mut self.g1, n, h1);
        resize(&mut self.h1, n, h1);
        resize(&mut self.s1, blocks * n, h1);
        {
            let (mut a1, mut rest) = self.s1.view_mut().split_at(Axis(0), n);
            Zip::from(&mut a1)
                .and(&mut self.g1)
                .and(&mut self.h1)
                .and(&self.z1)
                .for_each(|a, g, h, &z| {
                    let (va, vg, vh) = act.eval(z);
                    *a = va;
                    *g = vg;
                    *h = vh;
                });
            if tangents {
                for d in 0..TANGENTS {
                    let (mut block, tail) = rest.split_at(Axis(0), n);
                    rest = tail;
                    let col = w1.column(d);
                    Zip::from(block.rows_mut()).and(self.g1.rows()).for_each(|mut out, g| {
                        Zip::from(&mut out).and(&g).and(&col).for_each(|o, &g, &w| *o = g * w);
                    });
                }
            }
        }

        resize(&mut self.z2s, blocks * n, h2);
        general_mat_mul(1.0, &self.s1, &params.w2().t(), 0.0, &mut self.z2s);
        {
            let mut z2 = self.z2s.slice_mut(s![..n, ..]);
            z2 += &params.b2();
        }

        resize(&mut self.a2, n, h2);
        resize(&mut self.g2, n, h2);
        resize(&mut self.h2, n, h2);
        Zip::from(&mut self.a2)
            .and(&mut self.g2)
            .and(&mut self.h2)
            .and(self.z2s.slice(s![..n, ..]))
            .for_each(|a, g, h, &z| {
                let (va, vg, vh) = act.eval(z);
                *a = va;
                *g = vg;
                *h = vh;
            });

        let w3 = params.w3();
        let mut u = self.a2.dot(&w3);
        u += params.b3();
        let grads = if tangents {
            let mut grads = Array2::zeros((n, TANGENTS));
            for d in 0..TANGENTS {
                let dz = self.z2s.slice(s![(d + 1) * n..(d + 2) * n, ..]);
                Zip::from(grads.column_mut(d))
                    .and(dz.rows())
                    .and(self.g2.rows())
                    .for_each(|out, dz, g| {
                        let mut acc = 0.0;
                        for ((&dz, &g), &w) in dz.iter().zip(g.iter()).zip(w3.iter()) {
                            acc += w * g * dz;
                        }
                        *out = acc;
                    });
            }
            grads
        } else {
            Array2::zeros((0, TANGENTS))
        };
        BatchOutput { u, grads }
    }

    /// Accumulate into `grad` the parameter gradient of
    /// `sum_k value[k] * u_k + sum_k sum_d tangent[k, d] * du_k/dd` for the
    /// batch of the last forward call. Tangent seeds require a forward pass
    /// with tangents.
    pub fn backward(
        &mut self,
        params: &NetworkParams,
        value: ArrayView1<'_, f64>,
        tangent: Option<ArrayView2<'_, f64>>,
        grad: &mut NetworkParams,
    ) {
        let shape = params.shape;
        let (h1, h2) = (shape.hidden1, shape.hidden2);
        let n = self.n;
        assert_eq!(value.len(), n, "value seeds must match the batch");
        assert!(
            tangent.is_none() || self.tangents,
            "tangent seeds need a forward pass with tangents"
        );
        let blocks = if self.tangents { 1 + TANGENTS } else { 1 };
        let w1 = params.w1();
        let w3 = params.w3();
        let (mut gw1, mut gb1, mut gw2, mut gb2, mut gw3, gb3) = grad.parts_mut();

        *gb3 += value.sum();
        // output layer
        Zip::from(&mut gw3)
            .and(self.a2.columns())
            .for_each(|g, a| *g += a.dot(&value));
        if let Some(bt) = tangent {
            for d in 0..TANGENTS {
                let dz = self.z2s.slice(s![(d + 1) * n..(d + 2) * n, ..]);
                let seed = bt.column(d);
                Zip::from(&mut gw3)
                    .and(dz.columns())
                    .and(self.g2.columns())
                    .for_each(|g, dz, gg| {
                        let mut acc = 0.0;
                        for ((&s, &dz), &gg) in seed.iter().zip(dz.iter()).zip(gg.iter()) {
                            acc += s * gg * dz;
                        }
                        *g += acc;
                    });
            }
        }

        // adjoints of [Z2; dZ2_t; dZ2_x; dZ2_y]
        resize(&mut self.zbar, blocks * n, h2);
        {
            let (mut z2bar, mut rest) = self.zbar.view_mut().split_at(Axis(0), n);
            Zip::from(z2bar.rows_mut())
                .and(self.g2.rows())
                .and(&value)
                .for_each(|mut row, g, &a| {
                    Zip::from(&mut row)
                        .and(&g)
                        .and(&w3)
                        .for_each(|o, &g, &w| *o = a * w * g);
                });
            if let Some(bt) = tangent {
                for d in 0..TANGENTS {
                    let dz = self.z2s.slice(s![(d + 1) * n..(d + 2) * n, ..]);
                    let (mut block, tail) = rest.split_at(Axis(0), n);
                    rest = tail;
                    Zip::from(block.rows_mut())
                        .and(z2bar.rows_mut())
                        .and(self.g2.rows())
                        .and(self.h2.rows())
                        .and(dz.rows())
                        .and(bt.column(d))
                        .for_each(|mut out, mut zb, g, h, dz, &b| {
                            for j in 0..h2 {
                                let t_bar = b * w3[j];
                                out[j] = t_bar * g[j];
                                zb[j] += t_bar * h[j] * dz[j];
                            }
                        });
                }
            } else if self.tangents {
                rest.fill(0.0);
            }
        }

        gb2 += &self.zbar.slice(s![..n, ..]).sum_axis(Axis(0));
        resize(&mut self.gw2, h2, h1);
        general_mat_mul(1.0, &self.zbar.t(), &self.s1, 0.0, &mut self.gw2);
        gw2 += &self.gw2;

        // adjoints of [A1; T1_t; T1_x; T1_y]
        resize(&mut self.s1bar, blocks * n, h1);
        general_mat_mul(1.0, &self.zbar, &params.w2(), 0.0, &mut self.s1bar);

        // s1bar's first block becomes the adjoint of Z1
        {
            let (mut z1bar, rest) = self.s1bar.view_mut().split_at(Axis(0), n);
            z1bar *= &self.g1;
            if tangent.is_some() {
                for d in 0..TANGENTS {
                    let tb = rest.slice(s![d * n..(d + 1) * n, ..]);
                    let col = w1.column(d);
                    Zip::from(z1bar.rows_mut())
                        .and(tb.rows())
                        .and(self.h1.rows())
                        .for_each(|mut zb, tb, h| {
                            for j in 0..h1 {
                                zb[j] += tb[j] * h[j] * col[j];
                            }
                        });
                    // direct dependence of T1_d on W1[:, d]
                    let mut gcol = gw1.column_mut(d);
                    Zip::from(&mut gcol)
                        .and(tb.columns())
                        .and(self.g1.columns())
                        .for_each(|g, tb, gg| *g += tb.dot(&gg));
                }
            }
        }
        let z1bar = self.s1bar.slice(s![..n, ..]);
        gb1 += &z1bar.sum_axis(Axis(0));
        resize(&mut self.gw1, h1, INPUT_DIM);
        general_mat_mul(1.0, &z1bar.t(), &self.inputs, 0.0, &mut self.gw1);
        gw1 += &self.gw1;
    }
}

fn resize(a: &mut Array2<f64>, rows: usize, cols: usize) {
    if a.dim() != (rows, cols) {
        *a = Array2::zeros((rows, cols));
    }
}

/// Forward pass without tangents over any number of rows, in chunks.
pub fn predict(params: &NetworkParams, inputs: ArrayView2<'_, f64>) -> Array1<f64> {
    const CHUNK: usize = 4096;
    let mut engine = BatchEngine::new();
    let mut out = Array1::zeros(inputs.nrows());
    let mut start = 0;
    while start < inputs.nrows() {
        let end = (start + CHUNK).min(inputs.nrows());
        let res = engine.forward(params, inputs.slice(s![start..end, ..]), false);
        out.slice_mut(s![start..end]).assign(&res.u);
        start = end;
    }
    out
}

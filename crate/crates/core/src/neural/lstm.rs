//! Single-layer LSTM with a linear read-out, forward and backward passes.
//!
//! All parameters live in one flat `Vec<f64>` so the optimiser, gradient
//! clipping and serialisation can treat them uniformly. Layout, in order:
//!
//! | block  | shape          | notes                                  |
//! |--------|----------------|----------------------------------------|
//! | `W`    | `4H x I`       | input weights, gate rows `i, f, g, o`  |
//! | `U`    | `4H x H`       | recurrent weights, same gate order     |
//! | `b`    | `4H`           | gate biases                            |
//! | `fc_W` | `O x H`        | read-out weights                       |
//! | `fc_b` | `O`            | read-out bias                          |
//!
//! Matrices are row-major.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::SimRng;

/// LSTM gates in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Input = 0,
    Forget = 1,
    Cell = 2,
    Output = 3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    input_size: usize,
    hidden_size: usize,
    output_size: usize,
    data: Vec<f64>,
}

/// Gradients share the parameter layout.
pub type Gradients = LstmParams;

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators so the loop vectorises; order is fixed so results are reproducible
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let j = 4 * k;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for j in 4 * chunks..a.len() {
        s += a[j] * b[j];
    }
    s
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

impl LstmParams {
    pub fn param_count(input_size: usize, hidden_size: usize, output_size: usize) -> usize {
        let g = 4 * hidden_size;
        g * input_size + g * hidden_size + g + output_size * hidden_size + output_size
    }

    pub fn zeros(input_size: usize, hidden_size: usize, output_size: usize) -> Self {
        Self {
            input_size,
            hidden_size,
            output_size,
            data: vec![0.0; Self::param_count(input_size, hidden_size, output_size)],
        }
    }

    pub fn from_flat(input_size: usize, hidden_size: usize, output_size: usize, data: Vec<f64>) -> Result<Self> {
        let expected = Self::param_count(input_size, hidden_size, output_size);
        if data.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "expected {expected} parameters for (I={input_size}, H={hidden_size}, O={output_size}), got {}",
                data.len()
            )));
        }
        Ok(Self {
            input_size,
            hidden_size,
            output_size,
            data,
        })
    }

    /// Uniform(-1/sqrt(H), 1/sqrt(H)) weights, zero biases except the forget
    /// gate bias which starts at 1.
    pub fn init(input_size: usize, hidden_size: usize, output_size: usize, rng: &mut SimRng) -> Self {
        let mut p = Self::zeros(input_size, hidden_size, output_size);
        let bound = 1.0 / (hidden_size as f64).sqrt();
        for w in p.wx_mut().iter_mut() {
            *w = rng.random_range(-bound..=bound);
        }
        for w in p.wh_mut().iter_mut() {
            *w = rng.random_range(-bound..=bound);
        }
        for w in p.fc_w_mut().iter_mut() {
            *w = rng.random_range(-bound..=bound);
        }
        let h = hidden_size;
        p.b_mut()[h..2 * h].fill(1.0);
        p
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden_size
    }

    pub fn output_size(&self) -> usize {
        self.output_size
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn same_shape(&self, other: &LstmParams) -> bool {
        self.input_size == other.input_size
            && self.hidden_size == other.hidden_size
            && self.output_size == other.output_size
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_size, self.hidden_size, self.output_size)
    }

    fn offsets(&self) -> [usize; 6] {
        let g = 4 * self.hidden_size;
        let wx = 0;
        let wh = wx + g * self.input_size;
        let b = wh + g * self.hidden_size;
        let fw = b + g;
        let fb = fw + self.output_size * self.hidden_size;
        [wx, wh, b, fw, fb, fb + self.output_size]
    }

    pub fn wx(&self) -> &[f64] {
        let o = self.offsets();
        &self.data[o[0]..o[1]]
    }
    pub fn wh(&self) -> &[f64] {
        let o = self.offsets();
        &self.data[o[1]..o[2]]
    }
    pub fn b(&self) -> &[f64] {
        let o = self.offsets();
        &self.data[o[2]..o[3]]
    }
    pub fn fc_w(&self) -> &[f64] {
        let o = self.offsets();
        &self.data[o[3]..o[4]]
    }
    pub fn fc_b(&self) -> &[f64] {
        let o = self.offsets();
        &self.data[o[4]..o[5]]
    }
    pub fn wx_mut(&mut self) -> &mut [f64] {
        let o = self.offsets();
        &mut self.data[o[0]..o[1]]
    }
    pub fn wh_mut(&mut self) -> &mut [f64] {
        let o = self.offsets();
        &mut self.data[o[1]..o[2]]
    }
    pub fn b_mut(&mut self) -> &mut [f64] {
        let o = self.offsets();
        &mut self.data[o[2]..o[3]]
    }
    pub fn fc_w_mut(&mut self) -> &mut [f64] {
        let o = self.offsets();
        &mut self.data[o[3]..o[4]]
    }
    pub fn fc_b_mut(&mut self) -> &mut [f64] {
        let o = self.offsets();
        &mut self.data[o[4]..o[5]]
    }

    /// Input weights of one gate (`H x I`, row-major).
    pub fn gate_input_weights(&self, gate: Gate) -> &[f64] {
        let n = self.hidden_size * self.input_size;
        &self.wx()[gate as usize * n..(gate as usize + 1) * n]
    }

    /// Recurrent weights of one gate (`H x H`, row-major).
    pub fn gate_recurrent_weights(&self, gate: Gate) -> &[f64] {
        let n = self.hidden_size * self.hidden_size;
        &self.wh()[gate as usize * n..(gate as usize + 1) * n]
    }

    pub fn gate_bias(&self, gate: Gate) -> &[f64] {
        let h = self.hidden_size;
        &self.b()[gate as usize * h..(gate as usize + 1) * h]
    }

    /// Named `(block, range)` pairs, used for per-tensor reporting.
    pub fn tensor_ranges(&self) -> Vec<(&'static str, std::ops::Range<usize>)> {
        let o = self.offsets();
        vec![
            ("W", o[0]..o[1]),
            ("U", o[1]..o[2]),
            ("b", o[2]..o[3]),
            ("fc_W", o[3]..o[4]),
            ("fc_b", o[4]..o[5]),
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }

    pub fn add_assign(&mut self, other: &LstmParams) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, k: f64) {
        for a in &mut self.data {
            *a *= k;
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_size {
            return Err(Error::ShapeMismatch(format!(
                "input has {} features, model expects {}",
                x.len(),
                self.input_size
            )));
        }
        Ok(())
    }
}

/// Recurrent state carried between cell steps.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden_size: usize) -> Self {
        Self {
            h: vec![0.0; hidden_size],
            c: vec![0.0; hidden_size],
        }
    }
}

/// Gate pre-activations `z = W x + U h + b` into `z` (length `4H`).
fn preactivations(p: &LstmParams, x: &[f64], h: &[f64], z: &mut [f64]) {
    let (ni, nh) = (p.input_size, p.hidden_size);
    let (wx, wh, b) = (p.wx(), p.wh(), p.b());
    for r in 0..4 * nh {
        z[r] = b[r] + dot(&wx[r * ni..(r + 1) * ni], x) + dot(&wh[r * nh..(r + 1) * nh], h);
    }
}

/// Apply activations in place, turning `z` into `[i, f, g, o]`.
fn activate(z: &mut [f64], nh: usize) {
    for v in &mut z[..2 * nh] {
        *v = sigmoid(*v);
    }
    for v in &mut z[2 * nh..3 * nh] {
        *v = v.tanh();
    }
    for v in &mut z[3 * nh..] {
        *v = sigmoid(*v);
    }
}

/// One LSTM step.
pub fn lstm_cell_forward(x: &[f64], state: &LstmState, p: &LstmParams) -> Result<LstmState> {
    p.check_input(x)?;
    let nh = p.hidden_size;
    if state.h.len() != nh || state.c.len() != nh {
        return Err(Error::ShapeMismatch(format!(
            "state has sizes ({}, {}), hidden size is {nh}",
            state.h.len(),
            state.c.len()
        )));
    }
    let mut z = vec![0.0; 4 * nh];
    preactivations(p, x, &state.h, &mut z);
    activate(&mut z, nh);
    let mut next = LstmState::zeros(nh);
    for k in 0..nh {
        let (i, f, g, o) = (z[k], z[nh + k], z[2 * nh + k], z[3 * nh + k]);
        next.c[k] = f * state.c[k] + i * g;
        next.h[k] = o * next.c[k].tanh();
    }
    Ok(next)
}

/// Cached activations of one forward pass, reused across calls.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    steps: usize,
    hidden: usize,
    /// `h_0 .. h_T`, each of length H.
    hs: Vec<f64>,
    /// `c_0 .. c_T`.
    cs: Vec<f64>,
    /// Post-activation gates `[i, f, g, o]` per step.
    gates: Vec<f64>,
    /// `tanh(c_t)` per step.
    tanh_c: Vec<f64>,
    output: Vec<f64>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        &self.output
    }

    pub fn final_hidden(&self) -> &[f64] {
        &self.hs[self.steps * self.hidden..]
    }

    /// Hidden states `h_1 .. h_T`.
    pub fn hidden_states(&self) -> impl Iterator<Item = &[f64]> {
        self.hs[self.hidden..].chunks(self.hidden)
    }

    pub fn cell_states(&self) -> impl Iterator<Item = &[f64]> {
        self.cs[self.hidden..].chunks(self.hidden)
    }

    pub fn gate_activations(&self) -> &[f64] {
        &self.gates
    }
}

/// Scratch buffers for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct BackwardScratch {
    dz: Vec<f64>,
    dh: Vec<f64>,
    dh_prev: Vec<f64>,
    dc: Vec<f64>,
}

impl LstmParams {
    fn check_sequence(&self, inputs: &[f64]) -> Result<usize> {
        if inputs.is_empty() || !inputs.len().is_multiple_of(self.input_size) {
            return Err(Error::ShapeMismatch(format!(
                "sequence length {} is not a positive multiple of input size {}",
                inputs.len(),
                self.input_size
            )));
        }
        Ok(inputs.len() / self.input_size)
    }

    /// Many-to-one forward pass from a zero state over `inputs`
    /// (`T x I`, oldest first). Returns the read-out of the last hidden state.
    pub fn forward(&self, inputs: &[f64]) -> Result<Vec<f64>> {
        let steps = self.check_sequence(inputs)?;
        let nh = self.hidden_size;
        let mut h = vec![0.0; nh];
        let mut c = vec![0.0; nh];
        let mut z = vec![0.0; 4 * nh];
        for t in 0..steps {
            let x = &inputs[t * self.input_size..(t + 1) * self.input_size];
            preactivations(self, x, &h, &mut z);
            activate(&mut z, nh);
            for k in 0..nh {
                c[k] = z[nh + k] * c[k] + z[k] * z[2 * nh + k];
                h[k] = z[3 * nh + k] * c[k].tanh();
            }
        }
        Ok(self.readout(&h))
    }

    fn readout(&self, h: &[f64]) -> Vec<f64> {
        let nh = self.hidden_size;
        let (fw, fb) = (self.fc_w(), self.fc_b());
        (0..self.output_size)
            .map(|r| fb[r] + dot(&fw[r * nh..(r + 1) * nh], h))
            .collect()
    }

    /// Forward pass that records everything the backward pass needs.
    pub fn forward_trace(&self, inputs: &[f64], trace: &mut Trace) -> Result<()> {
        let steps = self.check_sequence(inputs)?;
        let nh = self.hidden_size;
        trace.steps = steps;
        trace.hidden = nh;
        trace.hs.clear();
        trace.hs.resize((steps + 1) * nh, 0.0);
        trace.cs.clear();
        trace.cs.resize((steps + 1) * nh, 0.0);
        trace.gates.clear();
        trace.gates.resize(steps * 4 * nh, 0.0);
        trace.tanh_c.clear();
        trace.tanh_c.resize(steps * nh, 0.0);

        for t in 0..steps {
            let x = &inputs[t * self.input_size..(t + 1) * self.input_size];
            let (h_prev, h_rest) = trace.hs.split_at_mut((t + 1) * nh);
            let h_prev = &h_prev[t * nh..];
            let h_next = &mut h_rest[..nh];
            let z = &mut trace.gates[t * 4 * nh..(t + 1) * 4 * nh];
            preactivations(self, x, h_prev, z);
            activate(z, nh);
            let (c_prev, c_rest) = trace.cs.split_at_mut((t + 1) * nh);
            let c_prev = &c_prev[t * nh..];
            let c_next = &mut c_rest[..nh];
            let tc = &mut trace.tanh_c[t * nh..(t + 1) * nh];
            for k in 0..nh {
                c_next[k] = z[nh + k] * c_prev[k] + z[k] * z[2 * nh + k];
                tc[k] = c_next[k].tanh();
                h_next[k] = z[3 * nh + k] * tc[k];
            }
        }
        trace.output = self.readout(&trace.hs[steps * nh..]);
        Ok(())
    }

    /// Backpropagation through time. Adds `d(output . dy)/d(params)` into `grads`.
    pub fn backward(
        &self,
        inputs: &[f64],
        trace: &Trace,
        dy: &[f64],
        grads: &mut Gradients,
        scratch: &mut BackwardScratch,
    ) -> Result<()> {
        let steps = self.check_sequence(inputs)?;
        if !grads.same_shape(self) {
            return Err(Error::ShapeMismatch("gradient buffer shape differs from parameters".into()));
        }
        if dy.len() != self.output_size {
            return Err(Error::ShapeMismatch(format!(
                "output cotangent has {} entries, model outputs {}",
                dy.len(),
                self.output_size
            )));
        }
        if trace.steps != steps || trace.hidden != self.hidden_size {
            return Err(Error::ShapeMismatch("trace does not belong to this sequence".into()));
        }
        let (ni, nh, no) = (self.input_size, self.hidden_size, self.output_size);
        let o = self.offsets();
        let g = &mut grads.data;

        scratch.dz.clear();
        scratch.dz.resize(4 * nh, 0.0);
        scratch.dh.clear();
        scratch.dh.resize(nh, 0.0);
        scratch.dh_prev.clear();
        scratch.dh_prev.resize(nh, 0.0);
        scratch.dc.clear();
        scratch.dc.resize(nh, 0.0);

        // read-out layer
        let h_last = &trace.hs[steps * nh..];
        let fw = self.fc_w();
        for r in 0..no {
            g[o[4] + r] += dy[r];
            axpy(dy[r], h_last, &mut g[o[3] + r * nh..o[3] + (r + 1) * nh]);
            axpy(dy[r], &fw[r * nh..(r + 1) * nh], &mut scratch.dh);
        }

        let wh = self.wh();
        for t in (0..steps).rev() {
            let gates = &trace.gates[t * 4 * nh..(t + 1) * 4 * nh];
            let tc = &trace.tanh_c[t * nh..(t + 1) * nh];
            let c_prev = &trace.cs[t * nh..(t + 1) * nh];
            let h_prev = &trace.hs[t * nh..(t + 1) * nh];
            let x = &inputs[t * ni..(t + 1) * ni];
            let dz = &mut scratch.dz;
            for k in 0..nh {
                let (i, f, gg, og) = (gates[k], gates[nh + k], gates[2 * nh + k], gates[3 * nh + k]);
                let dh = scratch.dh[k];
                let d_o = dh * tc[k];
                let dc = scratch.dc[k] + dh * og * (1.0 - tc[k] * tc[k]);
                dz[k] = dc * gg * i * (1.0 - i);
                dz[nh + k] = dc * c_prev[k] * f * (1.0 - f);
                dz[2 * nh + k] = dc * i * (1.0 - gg * gg);
                dz[3 * nh + k] = d_o * og * (1.0 - og);
                scratch.dc[k] = dc * f;
            }
            scratch.dh_prev.fill(0.0);
            for r in 0..4 * nh {
                let d = dz[r];
                if d == 0.0 {
                    continue;
                }
                g[o[2] + r] += d;
                axpy(d, x, &mut g[o[0] + r * ni..o[0] + (r + 1) * ni]);
                axpy(d, h_prev, &mut g[o[1] + r * nh..o[1] + (r + 1) * nh]);
                axpy(d, &wh[r * nh..(r + 1) * nh], &mut scratch.dh_prev);
            }
            std::mem::swap(&mut scratch.dh, &mut scratch.dh_prev);
        }
        Ok(())
    }
}

/// Mean squared error over the output components and its gradient.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let e = p - t;
            loss += e * e;
            2.0 * e / n
        })
        .collect();
    (loss / n, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive, Purpose};

    #[test]
    fn zero_params_are_a_fixed_point() {
        let p = LstmParams::zeros(4, 3, 4);
        let s = lstm_cell_forward(&[1.0, -2.0, 3.0, 0.5], &LstmState::zeros(3), &p).unwrap();
        assert!(s.h.iter().chain(&s.c).all(|v| *v == 0.0));
        assert_eq!(p.forward(&[0.3; 20]).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn bias_only_head() {
        let mut p = LstmParams::zeros(4, 5, 4);
        p.fc_b_mut().copy_from_slice(&[-10.0, 0.0, 9.0, 0.0]);
        assert_eq!(p.forward(&[0.7; 12]).unwrap(), vec![-10.0, 0.0, 9.0, 0.0]);
    }

    #[test]
    fn saturated_gates_accumulate() {
        // H = 1: i, f, o saturated open, g = tanh(1). Hand computation:
        // c_k = k * tanh(1) (to within e^-100), h_k = tanh(c_k).
        let mut p = LstmParams::zeros(4, 1, 4);
        p.b_mut().copy_from_slice(&[100.0, 100.0, 1.0, 100.0]);
        let mut s = LstmState::zeros(1);
        let g = 1.0f64.tanh();
        for k in 1..=3 {
            s = lstm_cell_forward(&[0.0; 4], &s, &p).unwrap();
            let c = k as f64 * g;
            assert!((s.c[0] - c).abs() < 1e-12);
            assert!((s.h[0] - c.tanh()).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_cotangent_gives_zero_gradient() {
        let mut rng = derive(1, Purpose::ModelInit, 0, 0);
        let p = LstmParams::init(4, 3, 4, &mut rng);
        let x: Vec<f64> = (0..12).map(|k| (k as f64 * 0.37).sin()).collect();
        let mut trace = Trace::default();
        p.forward_trace(&x, &mut trace).unwrap();
        let mut g = p.zeros_like();
        p.backward(&x, &trace, &[0.0; 4], &mut g, &mut BackwardScratch::default())
            .unwrap();
        assert!(g.as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn bias_only_head_gradient_is_linear_path() {
        let mut p = LstmParams::zeros(4, 3, 4);
        p.fc_b_mut().copy_from_slice(&[-10.0, 0.0, 9.0, 0.0]);
        let x = vec![0.5; 8];
        let mut trace = Trace::default();
        p.forward_trace(&x, &mut trace).unwrap();
        let dy = [0.25, -1.0, 2.0, 0.5];
        let mut g = p.zeros_like();
        p.backward(&x, &trace, &dy, &mut g, &mut BackwardScratch::default()).unwrap();
        assert_eq!(g.fc_b(), &dy);
        assert!(g.wx().iter().chain(g.wh()).chain(g.b()).all(|v| *v == 0.0));
    }

    #[test]
    fn mse_examples() {
        let (l, g) = mse_loss(&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(l, 0.0);
        assert_eq!(g, vec![0.0; 4]);
        let (l, g) = mse_loss(&[1.0, 0.0, 0.0, 0.0], &[0.0; 4]);
        assert_eq!(l, 0.25);
        assert_eq!(g, vec![0.5, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn init_ranges() {
        let mut rng = derive(9, Purpose::ModelInit, 0, 0);
        let p = LstmParams::init(4, 512, 4, &mut rng);
        let bound = 1.0 / 512f64.sqrt();
        assert!(p.wx().iter().chain(p.wh()).chain(p.fc_w()).all(|w| w.abs() <= bound));
        assert!(p.gate_bias(Gate::Forget).iter().all(|b| *b == 1.0));
        assert!(p.gate_bias(Gate::Input).iter().all(|b| *b == 0.0));
        let mut rng2 = derive(9, Purpose::ModelInit, 0, 0);
        assert_eq!(p, LstmParams::init(4, 512, 4, &mut rng2));
    }

    #[test]
    fn shape_errors() {
        let p = LstmParams::zeros(4, 2, 4);
        assert!(matches!(p.forward(&[0.0; 7]), Err(Error::ShapeMismatch(_))));
        assert!(matches!(
            lstm_cell_forward(&[0.0; 3], &LstmState::zeros(2), &p),
            Err(Error::ShapeMismatch(_))
        ));
        assert!(LstmParams::from_flat(4, 2, 4, vec![0.0; 5]).is_err());
    }
}

//! Minimal reverse-mode-differentiable Q-network.
//!
//! The topology is fixed: a dense input layer with ReLU, a gated recurrent
//! cell over the observation window, and a dense output head producing one
//! Q-value per action. Parameters live in one flat `f64` vector so the
//! optimizer, finite-difference checks, weight sharing, and checkpointing
//! all operate on plain slices.
//!
//! Gate convention:
//!
//! ```text
//! z = sigmoid(Wz g + Uz h + bz)        update gate
//! r = sigmoid(Wr g + Ur h + br)        reset gate
//! c = tanh(Wh g + Uh (r . h) + bh)     candidate
//! h' = (1 - z) . h + z . c
//! ```
//!
//! where `g = relu(W_in x + b_in)` is the embedded observation. The hidden
//! state starts at zero each window; sequences are rebuilt from stored
//! observation windows rather than carrying hidden state across steps.

use crate::rng::Stream;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("non-finite {what} encountered; training diverged")]
    NonFinite { what: &'static str },
    #[error("checkpoint io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format error: {0}")]
    Format(String),
}

/// Network dimensions: observation width, hidden units, action count, and
/// the observation-window length used for history encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetDims {
    pub input: usize,
    pub hidden: usize,
    pub actions: usize,
    pub window: usize,
}

impl Default for NetDims {
    fn default() -> Self {
        NetDims {
            input: crate::env::OBS_DIM,
            hidden: 64,
            actions: crate::env::N_ACTIONS,
            window: 8,
        }
    }
}

/// Offsets of each parameter block in the flat vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layout {
    w_in: usize,
    b_in: usize,
    w_z: usize,
    u_z: usize,
    b_z: usize,
    w_r: usize,
    u_r: usize,
    b_r: usize,
    w_h: usize,
    u_h: usize,
    b_h: usize,
    w_out: usize,
    b_out: usize,
    len: usize,
}

impl Layout {
    fn new(d: NetDims) -> Self {
        let (i, h, a) = (d.input, d.hidden, d.actions);
        let mut off = 0;
        let mut take = |n: usize| {
            let at = off;
            off += n;
            at
        };
        Layout {
            w_in: take(h * i),
            b_in: take(h),
            w_z: take(h * h),
            u_z: take(h * h),
            b_z: take(h),
            w_r: take(h * h),
            u_r: take(h * h),
            b_r: take(h),
            w_h: take(h * h),
            u_h: take(h * h),
            b_h: take(h),
            w_out: take(a * h),
            b_out: take(a),
            len: off,
        }
    }
}

/// `y += W x` for a row-major `rows x cols` matrix.
fn matvec_acc(w: &[f64], x: &[f64], y: &mut [f64]) {
    let cols = x.len();
    for (r, yr) in y.iter_mut().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        let mut acc = 0.0;
        for (wv, xv) in row.iter().zip(x) {
            acc += wv * xv;
        }
        *yr += acc;
    }
}

/// `x += W^T d` for a row-major `rows x cols` matrix.
fn matvec_transpose_acc(w: &[f64], d: &[f64], x: &mut [f64]) {
    let cols = x.len();
    for (r, dv) in d.iter().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        for (xv, wv) in x.iter_mut().zip(row) {
            *xv += wv * dv;
        }
    }
}

/// `W += d (outer) x`.
fn outer_acc(dw: &mut [f64], d: &[f64], x: &[f64]) {
    let cols = x.len();
    for (r, dv) in d.iter().enumerate() {
        let row = &mut dw[r * cols..(r + 1) * cols];
        for (wv, xv) in row.iter_mut().zip(x) {
            *wv += dv * xv;
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Intermediate values of one forward pass, kept for backpropagation.
pub struct Tape {
    steps: Vec<StepTape>,
    final_hidden: Vec<f64>,
}

impl Tape {
    /// Hidden state after the last window step.
    pub fn final_hidden(&self) -> &[f64] {
        &self.final_hidden
    }
}

struct StepTape {
    x: Vec<f64>,
    pre_relu: Vec<f64>,
    embedded: Vec<f64>,
    h_prev: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    candidate: Vec<f64>,
}

/// A Q-network: fixed topology, flat parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    pub dims: NetDims,
    pub params: Vec<f64>,
    layout: Layout,
}

impl QNetwork {
    pub fn zeroed(dims: NetDims) -> Self {
        let layout = Layout::new(dims);
        QNetwork {
            dims,
            params: vec![0.0; layout.len],
            layout,
        }
    }

    /// Uniform `+-1/sqrt(fan_in)` initialization per layer, biases zero.
    pub fn init(dims: NetDims, rng: &mut Stream) -> Self {
        let mut net = Self::zeroed(dims);
        let l = net.layout;
        let (i, h) = (dims.input, dims.hidden);
        let mut fill = |range: std::ops::Range<usize>, fan_in: usize, net: &mut QNetwork| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for p in &mut net.params[range] {
                *p = rng.uniform(-bound, bound);
            }
        };
        fill(l.w_in..l.b_in, i, &mut net);
        fill(l.w_z..l.b_z, 2 * h, &mut net);
        fill(l.w_r..l.b_r, 2 * h, &mut net);
        fill(l.w_h..l.b_h, 2 * h, &mut net);
        fill(l.w_out..l.b_out, h, &mut net);
        net
    }

    pub fn n_params(&self) -> usize {
        self.layout.len
    }

    fn block(&self, at: usize, len: usize) -> &[f64] {
        &self.params[at..at + len]
    }

    /// Q-values for an observation window given as a flat slice of
    /// `steps * input` values (oldest step first).
    pub fn forward(&self, window: &[f64]) -> Vec<f64> {
        self.forward_cached(window).0
    }

    /// Forward pass that records the tape needed by [`Self::backward`].
    pub fn forward_cached(&self, window: &[f64]) -> (Vec<f64>, Tape) {
        let d = self.dims;
        assert!(
            !window.is_empty() && window.len() % d.input == 0,
            "window length {} is not a multiple of the input width {}",
            window.len(),
            d.input
        );
        let steps = window.len() / d.input;
        let l = self.layout;
        let h = d.hidden;
        let mut hidden = vec![0.0; h];
        let mut tape = Tape {
            steps: Vec::with_capacity(steps),
            final_hidden: Vec::new(),
        };
        for s in 0..steps {
            let x = &window[s * d.input..(s + 1) * d.input];

            let mut pre = self.block(l.b_in, h).to_vec();
            matvec_acc(self.block(l.w_in, h * d.input), x, &mut pre);
            let embedded: Vec<f64> = pre.iter().map(|&v| v.max(0.0)).collect();

            let mut az = self.block(l.b_z, h).to_vec();
            matvec_acc(self.block(l.w_z, h * h), &embedded, &mut az);
            matvec_acc(self.block(l.u_z, h * h), &hidden, &mut az);
            let z: Vec<f64> = az.iter().map(|&v| sigmoid(v)).collect();

            let mut ar = self.block(l.b_r, h).to_vec();
            matvec_acc(self.block(l.w_r, h * h), &embedded, &mut ar);
            matvec_acc(self.block(l.u_r, h * h), &hidden, &mut ar);
            let r: Vec<f64> = ar.iter().map(|&v| sigmoid(v)).collect();

            let gated: Vec<f64> = r.iter().zip(&hidden).map(|(rv, hv)| rv * hv).collect();
            let mut ah = self.block(l.b_h, h).to_vec();
            matvec_acc(self.block(l.w_h, h * h), &embedded, &mut ah);
            matvec_acc(self.block(l.u_h, h * h), &gated, &mut ah);
            let candidate: Vec<f64> = ah.iter().map(|&v| v.tanh()).collect();

            let next: Vec<f64> = (0..h)
                .map(|j| (1.0 - z[j]) * hidden[j] + z[j] * candidate[j])
                .collect();

            tape.steps.push(StepTape {
                x: x.to_vec(),
                pre_relu: pre,
                embedded,
                h_prev: hidden,
                z,
                r,
                candidate,
            });
            hidden = next;
        }

        let mut q = self.block(l.b_out, d.actions).to_vec();
        matvec_acc(self.block(l.w_out, d.actions * h), &hidden, &mut q);
        tape.final_hidden = hidden;
        (q, tape)
    }

    /// Accumulate `d(loss)/d(params)` into `grads` given the loss gradient
    /// with respect to the Q output. `grads` must have `n_params` length.
    pub fn backward(&self, tape: &Tape, d_q: &[f64], grads: &mut [f64]) {
        let d = self.dims;
        let l = self.layout;
        let h = d.hidden;
        assert_eq!(d_q.len(), d.actions);
        assert_eq!(grads.len(), l.len);

        // Output head.
        outer_acc(&mut grads[l.w_out..l.b_out], d_q, &tape.final_hidden);
        for (g, dv) in grads[l.b_out..l.b_out + d.actions].iter_mut().zip(d_q) {
            *g += dv;
        }
        let mut dh = vec![0.0; h];
        matvec_transpose_acc(self.block(l.w_out, d.actions * h), d_q, &mut dh);

        // Walk the window backwards through the recurrent cell.
        for step in tape.steps.iter().rev() {
            let mut daz = vec![0.0; h];
            let mut dah = vec![0.0; h];
            for j in 0..h {
                let dz = dh[j] * (step.candidate[j] - step.h_prev[j]);
                daz[j] = dz * step.z[j] * (1.0 - step.z[j]);
                let dc = dh[j] * step.z[j];
                dah[j] = dc * (1.0 - step.candidate[j] * step.candidate[j]);
            }
            // Gradient reaching the gated hidden product r . h_prev.
            let mut d_gated = vec![0.0; h];
            matvec_transpose_acc(self.block(l.u_h, h * h), &dah, &mut d_gated);
            let mut dar = vec![0.0; h];
            for j in 0..h {
                let dr = d_gated[j] * step.h_prev[j];
                dar[j] = dr * step.r[j] * (1.0 - step.r[j]);
            }

            let gated: Vec<f64> = step
                .r
                .iter()
                .zip(&step.h_prev)
                .map(|(rv, hv)| rv * hv)
                .collect();
            outer_acc(&mut grads[l.w_z..l.u_z], &daz, &step.embedded);
            outer_acc(&mut grads[l.u_z..l.b_z], &daz, &step.h_prev);
            outer_acc(&mut grads[l.w_r..l.u_r], &dar, &step.embedded);
            outer_acc(&mut grads[l.u_r..l.b_r], &dar, &step.h_prev);
            outer_acc(&mut grads[l.w_h..l.u_h], &dah, &step.embedded);
            outer_acc(&mut grads[l.u_h..l.b_h], &dah, &gated);
            for j in 0..h {
                grads[l.b_z + j] += daz[j];
                grads[l.b_r + j] += dar[j];
                grads[l.b_h + j] += dah[j];
            }

            // Into the embedded observation and the previous hidden state.
            let mut dg = vec![0.0; h];
            matvec_transpose_acc(self.block(l.w_z, h * h), &daz, &mut dg);
            matvec_transpose_acc(self.block(l.w_r, h * h), &dar, &mut dg);
            matvec_transpose_acc(self.block(l.w_h, h * h), &dah, &mut dg);

            let mut dh_prev = vec![0.0; h];
            for j in 0..h {
                dh_prev[j] = dh[j] * (1.0 - step.z[j]) + d_gated[j] * step.r[j];
            }
            matvec_transpose_acc(self.block(l.u_z, h * h), &daz, &mut dh_prev);
            matvec_transpose_acc(self.block(l.u_r, h * h), &dar, &mut dh_prev);

            // Dense input layer (ReLU gate).
            let da_in: Vec<f64> = dg
                .iter()
                .zip(&step.pre_relu)
                .map(|(dv, &pre)| if pre > 0.0 { *dv } else { 0.0 })
                .collect();
            outer_acc(&mut grads[l.w_in..l.b_in], &da_in, &step.x);
            for j in 0..h {
                grads[l.b_in + j] += da_in[j];
            }

            dh = dh_prev;
        }
    }

    /// Write a versioned binary checkpoint (dims + raw little-endian
    /// parameter bytes); round-trips bit-exactly.
    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(b"VECSIMQ1")?;
        for v in [
            self.dims.input as u64,
            self.dims.hidden as u64,
            self.dims.actions as u64,
            self.dims.window as u64,
            self.params.len() as u64,
        ] {
            f.write_all(&v.to_le_bytes())?;
        }
        for p in &self.params {
            f.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        let mut f = std::fs::File::open(path)?;
        let mut magic = [0u8; 8];
        f.read_exact(&mut magic)?;
        if &magic != b"VECSIMQ1" {
            return Err(NnError::Format("bad checkpoint magic".into()));
        }
        let read_u64 = |f: &mut std::fs::File| -> Result<u64, NnError> {
            let mut b = [0u8; 8];
            f.read_exact(&mut b)?;
            Ok(u64::from_le_bytes(b))
        };
        let input = read_u64(&mut f)? as usize;
        let hidden = read_u64(&mut f)? as usize;
        let actions = read_u64(&mut f)? as usize;
        let window = read_u64(&mut f)? as usize;
        let n = read_u64(&mut f)? as usize;
        let dims = NetDims {
            input,
            hidden,
            actions,
            window,
        };
        let mut net = Self::zeroed(dims);
        if net.params.len() != n {
            return Err(NnError::Format(format!(
                "parameter count {n} does not match dims {dims:?}"
            )));
        }
        let mut buf = vec![0u8; n * 8];
        f.read_exact(&mut buf)?;
        for (i, chunk) in buf.chunks_exact(8).enumerate() {
            net.params[i] = f64::from_le_bytes(chunk.try_into().unwrap());
        }
        Ok(net)
    }
}

/// Adaptive-moment estimation with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(lr: f64, n_params: usize) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    /// One update; rejects non-finite gradients so divergence surfaces as
    /// an error instead of poisoned parameters.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), NnError> {
        assert_eq!(params.len(), grads.len());
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(NnError::NonFinite { what: "gradient" });
        }
        self.t += 1;
        let t = self.t as f64;
        let bc1 = 1.0 - self.beta1.powf(t);
        let bc2 = 1.0 - self.beta2.powf(t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Domain;

    fn small_dims() -> NetDims {
        NetDims {
            input: 3,
            hidden: 4,
            actions: 3,
            window: 2,
        }
    }

    fn window_of(dims: NetDims, steps: usize, rng: &mut Stream) -> Vec<f64> {
        (0..steps * dims.input).map(|_| rng.uniform(-1.0, 1.0)).collect()
    }

    #[test]
    fn zero_net_outputs_zero() {
        let net = QNetwork::zeroed(small_dims());
        let q = net.forward(&vec![0.5; 3 * 2]);
        assert!(q.iter().all(|&v| v == 0.0), "{q:?}");
    }

    #[test]
    fn single_step_matches_unrolled_composition() {
        let dims = small_dims();
        let mut rng = Stream::new(5, Domain::WeightInit);
        let net = QNetwork::init(dims, &mut rng);
        let x: Vec<f64> = (0..dims.input).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let q = net.forward(&x);

        // Independent single-step composition straight from the equations.
        let l = Layout::new(dims);
        let h = dims.hidden;
        let get = |at: usize, n: usize| &net.params[at..at + n];
        let mv = |w: &[f64], x: &[f64]| -> Vec<f64> {
            let rows = w.len() / x.len();
            (0..rows)
                .map(|r| {
                    x.iter()
                        .enumerate()
                        .map(|(c, xv)| w[r * x.len() + c] * xv)
                        .sum::<f64>()
                })
                .collect()
        };
        let add = |a: Vec<f64>, b: &[f64]| -> Vec<f64> {
            a.iter().zip(b).map(|(x, y)| x + y).collect()
        };
        let g: Vec<f64> = add(mv(get(l.w_in, h * dims.input), &x), get(l.b_in, h))
            .iter()
            .map(|&v| v.max(0.0))
            .collect();
        let z: Vec<f64> = add(mv(get(l.w_z, h * h), &g), get(l.b_z, h))
            .iter()
            .map(|&v| 1.0 / (1.0 + (-v).exp()))
            .collect();
        let c: Vec<f64> = add(mv(get(l.w_h, h * h), &g), get(l.b_h, h))
            .iter()
            .map(|&v| v.tanh())
            .collect();
        // h0 = 0, so r never matters and h1 = z . c.
        let h1: Vec<f64> = z.iter().zip(&c).map(|(zv, cv)| zv * cv).collect();
        let oracle = add(mv(get(l.w_out, dims.actions * h), &h1), get(l.b_out, dims.actions));
        for (a, b) in q.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn forced_gates_keep_hidden_unchanged() {
        let dims = small_dims();
        let mut rng = Stream::new(8, Domain::WeightInit);
        let mut net = QNetwork::init(dims, &mut rng);
        let l = Layout::new(dims);
        // Update gate forced to 0 (huge negative bias), reset gate to 1.
        for j in 0..dims.hidden {
            net.params[l.b_z + j] = -1e9;
            net.params[l.b_r + j] = 1e9;
        }
        for j in l.w_z..l.b_z {
            net.params[j] = 0.0;
        }
        for j in l.w_r..l.b_r {
            net.params[j] = 0.0;
        }
        let mut rng2 = Stream::new(9, Domain::WeightInit);
        let step: Vec<f64> = (0..dims.input).map(|_| rng2.uniform(-1.0, 1.0)).collect();
        let mut window = step.clone();
        window.extend_from_slice(&step);
        let (_, tape_short) = net.forward_cached(&step);
        let (_, tape_long) = net.forward_cached(&window);
        // Duplicating the last observation must not move the hidden state.
        assert_eq!(tape_short.final_hidden(), tape_long.final_hidden());
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let dims = small_dims();
        let mut rng = Stream::new(3, Domain::WeightInit);
        let net = QNetwork::init(dims, &mut rng);
        let window = window_of(dims, 2, &mut rng);
        let (_, tape) = net.forward_cached(&window);
        let mut grads = vec![0.0; net.n_params()];
        net.backward(&tape, &vec![0.0; dims.actions], &mut grads);
        assert!(grads.iter().all(|&g| g == 0.0));
    }

    /// Central finite differences at h=1e-5 over every parameter.
    fn finite_diff_check(net: &QNetwork, window: &[f64], target: &[f64]) -> f64 {
        let loss = |net: &QNetwork| -> f64 {
            let q = net.forward(window);
            q.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum()
        };
        let (q, tape) = net.forward_cached(window);
        let d_q: Vec<f64> = q.iter().zip(target).map(|(a, b)| 2.0 * (a - b)).collect();
        let mut grads = vec![0.0; net.n_params()];
        net.backward(&tape, &d_q, &mut grads);

        let h = 1e-5;
        let mut worst: f64 = 0.0;
        let mut probe = net.clone();
        for i in 0..net.n_params() {
            let orig = probe.params[i];
            probe.params[i] = orig + h;
            let up = loss(&probe);
            probe.params[i] = orig - h;
            let down = loss(&probe);
            probe.params[i] = orig;
            let fd = (up - down) / (2.0 * h);
            // Relative error with a small scale floor so near-zero
            // gradients compare absolutely.
            let rel = (fd - grads[i]).abs() / fd.abs().max(grads[i].abs()).max(1e-3);
            worst = worst.max(rel);
        }
        worst
    }

    #[test]
    fn gradients_match_finite_differences() {
        let dims = small_dims();
        for seed in 0..5 {
            let mut rng = Stream::derive(77, Domain::WeightInit, seed);
            let net = QNetwork::init(dims, &mut rng);
            let window = window_of(dims, dims.window, &mut rng);
            let target: Vec<f64> = (0..dims.actions).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let worst = finite_diff_check(&net, &window, &target);
            assert!(worst < 1e-4, "seed {seed}: max rel err {worst}");
        }
    }

    #[test]
    fn output_layer_gradient_matches_closed_form() {
        let dims = small_dims();
        let mut rng = Stream::new(12, Domain::WeightInit);
        let net = QNetwork::init(dims, &mut rng);
        let window = window_of(dims, 2, &mut rng);
        let (q, tape) = net.forward_cached(&window);
        let target = 0.7;
        // Loss (q0 - y)^2: closed-form output-row gradient 2 (q0 - y) h.
        let mut d_q = vec![0.0; dims.actions];
        d_q[0] = 2.0 * (q[0] - target);
        let mut grads = vec![0.0; net.n_params()];
        net.backward(&tape, &d_q, &mut grads);
        let l = Layout::new(dims);
        for (j, hv) in tape.final_hidden().iter().enumerate() {
            let expected = 2.0 * (q[0] - target) * hv;
            assert!((grads[l.w_out + j] - expected).abs() < 1e-12);
        }
        assert!((grads[l.b_out] - 2.0 * (q[0] - target)).abs() < 1e-12);
    }

    #[test]
    fn adam_zero_gradient_is_identity() {
        let dims = small_dims();
        let mut rng = Stream::new(2, Domain::WeightInit);
        let mut net = QNetwork::init(dims, &mut rng);
        let before = net.params.clone();
        let mut opt = Adam::new(3e-4, net.n_params());
        opt.step(&mut net.params, &vec![0.0; before.len()]).unwrap();
        assert_eq!(net.params, before);
    }

    #[test]
    fn adam_is_deterministic() {
        let dims = small_dims();
        let run = || {
            let mut rng = Stream::new(4, Domain::WeightInit);
            let mut net = QNetwork::init(dims, &mut rng);
            let grads: Vec<f64> = (0..net.n_params()).map(|i| (i as f64).sin()).collect();
            let mut opt = Adam::new(1e-3, net.n_params());
            for _ in 0..10 {
                opt.step(&mut net.params, &grads).unwrap();
            }
            net.params
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn adam_descends_scalar_quadratic() {
        // f(w) = w^2 from w = 1: |w| strictly decreases over 100 steps.
        let mut w: Vec<f64> = vec![1.0];
        let mut opt = Adam::new(0.01, 1);
        let mut prev = w[0].abs();
        for _ in 0..100 {
            let grad = vec![2.0 * w[0]];
            opt.step(&mut w, &grad).unwrap();
            assert!(w[0].abs() < prev, "|w| did not decrease: {} -> {}", prev, w[0]);
            prev = w[0].abs();
        }
    }

    #[test]
    fn adam_rejects_non_finite_gradients() {
        let mut w: Vec<f64> = vec![1.0];
        let mut opt = Adam::new(0.01, 1);
        assert!(opt.step(&mut w, &[f64::NAN]).is_err());
    }

    #[test]
    fn checkpoint_round_trips_bit_exactly() {
        let dims = NetDims::default();
        let mut rng = Stream::new(6, Domain::WeightInit);
        let net = QNetwork::init(dims, &mut rng);
        let path = std::env::temp_dir().join("vecsim_ckpt_test.bin");
        net.save(&path).unwrap();
        let back = QNetwork::load(&path).unwrap();
        assert_eq!(net.dims, back.dims);
        assert_eq!(net.params, back.params); // exact, not approximate
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn forward_is_bit_stable() {
        let dims = NetDims::default();
        let mut rng = Stream::new(10, Domain::WeightInit);
        let net = QNetwork::init(dims, &mut rng);
        let window = window_of(dims, dims.window, &mut rng);
        assert_eq!(net.forward(&window), net.forward(&window));
    }
}

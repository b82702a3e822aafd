//! LSTM recurrence and backpropagation through time.
//!
//! Gate rows are stacked `[input, forget, cell, output]`, each `hidden` rows
//! tall, in both weight matrices and the bias.

use rand::Rng;

use super::Parameters;
use crate::seed::rng;

/// Dot product with four independent accumulators. The fixed summation
/// order keeps results reproducible and lets the compiler vectorize.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Inverted dropout: kept inputs are scaled by `1 / (1 - p)`.
pub(crate) fn dropout(inputs: &[Vec<f64>], p: f64, seed: Option<u64>) -> Vec<Vec<f64>> {
    match seed {
        Some(seed) if p > 0.0 => {
            let mut r = rng(seed);
            let keep = 1.0 / (1.0 - p);
            inputs
                .iter()
                .map(|x| {
                    x.iter()
                        .map(|v| if r.random::<f64>() < p { 0.0 } else { v * keep })
                        .collect()
                })
                .collect()
        }
        _ => inputs.to_vec(),
    }
}

/// Everything the backward pass needs from a forward run.
pub(crate) struct Trace {
    pub inputs: Vec<Vec<f64>>,
    /// Gate activations per step, `4 * hidden` each.
    pub gates: Vec<f64>,
    pub cells: Vec<f64>,
    pub hidden: Vec<f64>,
}

impl Trace {
    pub fn steps(&self) -> usize {
        self.inputs.len()
    }

    pub fn h(&self, t: usize, size: usize) -> &[f64] {
        &self.hidden[t * size..(t + 1) * size]
    }
}

pub(crate) fn run(p: &Parameters, input_dim: usize, size: usize, inputs: Vec<Vec<f64>>) -> Trace {
    let steps = inputs.len();
    let mut gates = vec![0.0; steps * 4 * size];
    let mut cells = vec![0.0; steps * size];
    let mut hidden = vec![0.0; steps * size];
    let zero = vec![0.0; size];
    // Input projections for all steps at once, one weight row at a time.
    let rows = 4 * size;
    let mut proj = vec![0.0; steps * rows];
    for r in 0..rows {
        let w = &p.w_ih[r * input_dim..(r + 1) * input_dim];
        for (t, x) in inputs.iter().enumerate() {
            proj[t * rows + r] = dot(w, x);
        }
    }
    for t in 0..steps {
        let (h_prev, c_prev) = if t == 0 {
            (&zero[..], &zero[..])
        } else {
            (
                &hidden[(t - 1) * size..t * size],
                &cells[(t - 1) * size..t * size],
            )
        };
        let mut z = p.bias.clone();
        for (r, zr) in z.iter_mut().enumerate() {
            *zr += proj[t * rows + r] + dot(&p.w_hh[r * size..(r + 1) * size], h_prev);
        }
        let mut c_new = vec![0.0; size];
        let mut h_new = vec![0.0; size];
        for j in 0..size {
            let i = sigmoid(z[j]);
            let f = sigmoid(z[size + j]);
            let g = z[2 * size + j].tanh();
            let o = sigmoid(z[3 * size + j]);
            let c = f * c_prev[j] + i * g;
            c_new[j] = c;
            h_new[j] = o * c.tanh();
            let base = t * 4 * size;
            gates[base + j] = i;
            gates[base + size + j] = f;
            gates[base + 2 * size + j] = g;
            gates[base + 3 * size + j] = o;
        }
        cells[t * size..(t + 1) * size].copy_from_slice(&c_new);
        hidden[t * size..(t + 1) * size].copy_from_slice(&h_new);
    }
    Trace {
        inputs,
        gates,
        cells,
        hidden,
    }
}

pub(crate) fn head(p: &Parameters, h: &[f64]) -> [f64; 2] {
    let size = h.len();
    [
        p.head_b[0] + dot(&p.head_w[..size], h),
        p.head_b[1] + dot(&p.head_w[size..], h),
    ]
}

/// Cross-entropy of one unit and its gradient with respect to the logits.
pub(crate) fn cross_entropy(logits: [f64; 2], label: bool) -> (f64, [f64; 2]) {
    let m = logits[0].max(logits[1]);
    let e = [(logits[0] - m).exp(), (logits[1] - m).exp()];
    let sum = e[0] + e[1];
    let lse = m + sum.ln();
    let target = usize::from(label);
    let mut grad = [e[0] / sum, e[1] / sum];
    grad[target] -= 1.0;
    (lse - logits[target], grad)
}

/// Accumulates parameter gradients given `dlogits[t]` for the steps that
/// carry a loss (`None` elsewhere).
pub(crate) fn backward(
    p: &Parameters,
    input_dim: usize,
    size: usize,
    trace: &Trace,
    dlogits: &[Option<[f64; 2]>],
    grad: &mut Parameters,
) {
    let mut dh_next = vec![0.0; size];
    let mut dc_next = vec![0.0; size];
    let rows = 4 * size;
    let steps = trace.steps();
    let mut dzs = vec![0.0; steps * rows];
    let zero = vec![0.0; size];
    for t in (0..steps).rev() {
        let dz = &mut dzs[t * rows..(t + 1) * rows];
        let h = trace.h(t, size);
        let mut dh = std::mem::take(&mut dh_next);
        if let Some(dy) = dlogits[t] {
            for k in 0..2 {
                axpy(dy[k], h, &mut grad.head_w[k * size..(k + 1) * size]);
                axpy(dy[k], &p.head_w[k * size..(k + 1) * size], &mut dh);
                grad.head_b[k] += dy[k];
            }
        }
        let c = &trace.cells[t * size..(t + 1) * size];
        let c_prev = if t == 0 {
            &zero[..]
        } else {
            &trace.cells[(t - 1) * size..t * size]
        };
        let gates = &trace.gates[t * 4 * size..(t + 1) * 4 * size];
        for j in 0..size {
            let (i, f, g, o) = (gates[j], gates[size + j], gates[2 * size + j], gates[3 * size + j]);
            let tc = c[j].tanh();
            let d_o = dh[j] * tc;
            let dc = dh[j] * o * (1.0 - tc * tc) + dc_next[j];
            dc_next[j] = dc * f;
            dz[j] = dc * g * i * (1.0 - i);
            dz[size + j] = dc * c_prev[j] * f * (1.0 - f);
            dz[2 * size + j] = dc * i * (1.0 - g * g);
            dz[3 * size + j] = d_o * o * (1.0 - o);
        }
        let h_prev = if t == 0 { &zero[..] } else { trace.h(t - 1, size) };
        dh_next = vec![0.0; size];
        for (r, &d) in dz.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            if t > 0 {
                axpy(d, h_prev, &mut grad.w_hh[r * size..(r + 1) * size]);
            }
            axpy(d, &p.w_hh[r * size..(r + 1) * size], &mut dh_next);
            grad.bias[r] += d;
        }
    }
    for r in 0..rows {
        let g = &mut grad.w_ih[r * input_dim..(r + 1) * input_dim];
        for (t, x) in trace.inputs.iter().enumerate() {
            let d = dzs[t * rows + r];
            if d != 0.0 {
                axpy(d, x, g);
            }
        }
    }
}

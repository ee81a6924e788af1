use ndarray::{Array2, ArrayView1, ArrayView2};
use rand_chacha::ChaCha8Rng;

use super::{glorot_uniform, sigmoid, ParamLayout};

/// Unidirectional LSTM. Gate order in the stacked weight rows: input,
/// forget, cell candidate, output.
#[derive(Debug, Clone, PartialEq)]
pub struct Lstm {
    pub input: usize,
    pub hidden: usize,
    w: usize,
    u: usize,
    b: usize,
}

#[derive(Debug, Clone, Default)]
pub struct LstmTrace {
    xs: Vec<Vec<f64>>,
    /// Post-activation gates per step, `[i | f | g | o]`.
    gates: Vec<Vec<f64>>,
    cells: Vec<Vec<f64>>,
    pub hidden: Vec<Vec<f64>>,
}

impl Lstm {
    pub fn new(layout: &mut ParamLayout, input: usize, hidden: usize) -> Self {
        let w = layout.alloc(4 * hidden * input);
        let u = layout.alloc(4 * hidden * hidden);
        let b = layout.alloc(4 * hidden);
        Self { input, hidden, w, u, b }
    }

    pub fn param_len(&self) -> usize {
        4 * self.hidden * (self.input + self.hidden + 1)
    }

    pub fn init(&self, params: &mut [f64], rng: &mut ChaCha8Rng) {
        let h = self.hidden;
        glorot_uniform(self.input, 4 * h, &mut params[self.w..self.w + 4 * h * self.input], rng);
        glorot_uniform(h, 4 * h, &mut params[self.u..self.u + 4 * h * h], rng);
        let bias = &mut params[self.b..self.b + 4 * h];
        bias.fill(0.0);
        bias[h..2 * h].fill(1.0);
    }

    pub fn forward(&self, params: &[f64], xs: &[Vec<f64>]) -> LstmTrace {
        let h = self.hidden;
        let u = &params[self.u..self.u + 4 * h * h];
        let b = &params[self.b..self.b + 4 * h];
        let mut trace = LstmTrace {
            xs: xs.to_vec(),
            ..Default::default()
        };
        if xs.is_empty() {
            return trace;
        }
        // input projections for all steps at once
        let zx = stack(xs, self.input).dot(&self.w_view(params).t());
        let mut h_prev = vec![0.0; h];
        let mut c_prev = vec![0.0; h];
        for t in 0..xs.len() {
            let mut z: Vec<f64> = zx.row(t).iter().zip(b).map(|(a, b)| a + b).collect();
            for (r, zr) in z.iter_mut().enumerate() {
                let ur = &u[r * h..(r + 1) * h];
                *zr += ur.iter().zip(&h_prev).map(|(a, b)| a * b).sum::<f64>();
            }
            for k in 0..h {
                z[k] = sigmoid(z[k]);
                z[h + k] = sigmoid(z[h + k]);
                z[2 * h + k] = z[2 * h + k].tanh();
                z[3 * h + k] = sigmoid(z[3 * h + k]);
            }
            let c: Vec<f64> = (0..h).map(|k| z[h + k] * c_prev[k] + z[k] * z[2 * h + k]).collect();
            let hv: Vec<f64> = (0..h).map(|k| z[3 * h + k] * c[k].tanh()).collect();
            trace.gates.push(z);
            trace.cells.push(c.clone());
            trace.hidden.push(hv.clone());
            h_prev = hv;
            c_prev = c;
        }
        trace
    }

    fn w_view<'a>(&self, params: &'a [f64]) -> ArrayView2<'a, f64> {
        let len = 4 * self.hidden * self.input;
        ArrayView2::from_shape((4 * self.hidden, self.input), &params[self.w..self.w + len]).expect("weight block shape")
    }

    /// Backpropagation through time. `dh[t]` is the loss gradient flowing
    /// into the hidden output at step `t`. Returns gradients for the inputs.
    pub fn backward(&self, params: &[f64], trace: &LstmTrace, dh: &[Vec<f64>], grad: &mut [f64]) -> Vec<Vec<f64>> {
        let h = self.hidden;
        let n = trace.xs.len();
        if n == 0 {
            return Vec::new();
        }
        let u = &params[self.u..self.u + 4 * h * h];
        let mut dzs = Array2::<f64>::zeros((n, 4 * h));
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        let zeros = vec![0.0; h];
        for t in (0..n).rev() {
            let g = &trace.gates[t];
            let c = &trace.cells[t];
            let c_prev = if t > 0 { &trace.cells[t - 1] } else { &zeros };
            let h_prev = if t > 0 { &trace.hidden[t - 1] } else { &zeros };
            let mut dz = dzs.row_mut(t);
            for k in 0..h {
                let (i, f, cand, o) = (g[k], g[h + k], g[2 * h + k], g[3 * h + k]);
                let tc = c[k].tanh();
                let dhk = dh[t][k] + dh_next[k];
                let dc = dhk * o * (1.0 - tc * tc) + dc_next[k];
                dz[k] = dc * cand * i * (1.0 - i);
                dz[h + k] = dc * c_prev[k] * f * (1.0 - f);
                dz[2 * h + k] = dc * i * (1.0 - cand * cand);
                dz[3 * h + k] = dhk * tc * o * (1.0 - o);
                dc_next[k] = dc * f;
            }
            dh_next.iter_mut().for_each(|v| *v = 0.0);
            for r in 0..4 * h {
                let d = dz[r];
                if d == 0.0 {
                    continue;
                }
                let gu = &mut grad[self.u + r * h..self.u + (r + 1) * h];
                for (gv, hv) in gu.iter_mut().zip(h_prev) {
                    *gv += d * hv;
                }
                grad[self.b + r] += d;
                for (dn, uv) in dh_next.iter_mut().zip(&u[r * h..(r + 1) * h]) {
                    *dn += d * uv;
                }
            }
        }
        let x = stack(&trace.xs, self.input);
        let gw = dzs.t().dot(&x);
        for (g, v) in grad[self.w..self.w + 4 * h * self.input].iter_mut().zip(gw.iter()) {
            *g += v;
        }
        let dx = dzs.dot(&self.w_view(params));
        dx.rows().into_iter().map(|r| r.to_vec()).collect()
    }
}

fn stack(rows: &[Vec<f64>], width: usize) -> Array2<f64> {
    let mut m = Array2::zeros((rows.len(), width));
    for (mut dst, src) in m.rows_mut().into_iter().zip(rows) {
        dst.assign(&ArrayView1::from(&src[..]));
    }
    m
}

/// Forward and backward LSTMs over the same sequence; each step's output is
/// `[forward_h | backward_h]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BiLstm {
    pub forward: Lstm,
    pub backward: Lstm,
}

#[derive(Debug, Clone)]
pub struct BiLstmTrace {
    fwd: LstmTrace,
    /// Trace of the backward LSTM over the reversed sequence.
    bwd: LstmTrace,
    pub outputs: Vec<Vec<f64>>,
}

impl BiLstm {
    pub fn new(layout: &mut ParamLayout, input: usize, hidden: usize) -> Self {
        Self {
            forward: Lstm::new(layout, input, hidden),
            backward: Lstm::new(layout, input, hidden),
        }
    }

    pub fn output_width(&self) -> usize {
        2 * self.forward.hidden
    }

    pub fn init(&self, params: &mut [f64], rng: &mut ChaCha8Rng) {
        self.forward.init(params, rng);
        self.backward.init(params, rng);
    }

    pub fn run(&self, params: &[f64], xs: &[Vec<f64>]) -> BiLstmTrace {
        let fwd = self.forward.forward(params, xs);
        let reversed: Vec<Vec<f64>> = xs.iter().rev().cloned().collect();
        let bwd = self.backward.forward(params, &reversed);
        let n = xs.len();
        let outputs = (0..n)
            .map(|t| {
                let mut v = fwd.hidden[t].clone();
                v.extend_from_slice(&bwd.hidden[n - 1 - t]);
                v
            })
            .collect();
        BiLstmTrace { fwd, bwd, outputs }
    }

    /// Final summary `[forward_h(last) | backward_h(first)]`; zeros for an
    /// empty sequence.
    pub fn summary(&self, trace: &BiLstmTrace) -> Vec<f64> {
        let h = self.forward.hidden;
        match (trace.fwd.hidden.last(), trace.bwd.hidden.last()) {
            (Some(f), Some(b)) => {
                let mut v = f.clone();
                v.extend_from_slice(b);
                v
            }
            _ => vec![0.0; 2 * h],
        }
    }

    /// `d_outputs[t]` is the gradient on step `t`'s concatenated output.
    pub fn backward(&self, params: &[f64], trace: &BiLstmTrace, d_outputs: &[Vec<f64>], grad: &mut [f64]) -> Vec<Vec<f64>> {
        let h = self.forward.hidden;
        let n = d_outputs.len();
        let dh_f: Vec<Vec<f64>> = d_outputs.iter().map(|d| d[..h].to_vec()).collect();
        let dh_b: Vec<Vec<f64>> = (0..n).map(|s| d_outputs[n - 1 - s][h..].to_vec()).collect();
        let mut dx = self.forward.backward(params, &trace.fwd, &dh_f, grad);
        let dx_b = self.backward.backward(params, &trace.bwd, &dh_b, grad);
        for (s, d) in dx_b.into_iter().enumerate() {
            for (a, b) in dx[n - 1 - s].iter_mut().zip(d) {
                *a += b;
            }
        }
        dx
    }
}

//! Multi-input Q-network: three ReLU branches, concatenation, a softmax
//! attention gate, ReLU hidden layers and a linear output.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::encoding::{StateEncoding, INPUT_DIMS};
use super::DrlError;

/// Layer widths. Fully determines the parameter layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetShape {
    pub inputs: [usize; 3],
    pub branch_width: usize,
    pub hidden: Vec<usize>,
    pub actions: usize,
}

impl NetShape {
    pub fn new(branch_width: usize, hidden: Vec<usize>, actions: usize) -> Self {
        NetShape {
            inputs: INPUT_DIMS,
            branch_width,
            hidden,
            actions,
        }
    }

    pub fn concat_width(&self) -> usize {
        3 * self.branch_width
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Dense {
    w: usize,
    b: usize,
    inp: usize,
    out: usize,
}

impl Dense {
    fn forward(&self, p: &[f64], x: &[f64], y: &mut [f64]) {
        for (o, yo) in y.iter_mut().enumerate() {
            let row = &p[self.w + o * self.inp..self.w + (o + 1) * self.inp];
            *yo = p[self.b + o] + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
        }
    }

    fn backward(&self, p: &[f64], x: &[f64], dy: &[f64], g: &mut [f64], mut dx: Option<&mut [f64]>) {
        for (o, &d) in dy.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            g[self.b + o] += d;
            let base = self.w + o * self.inp;
            for i in 0..self.inp {
                g[base + i] += d * x[i];
            }
            if let Some(dx) = dx.as_deref_mut() {
                for i in 0..self.inp {
                    dx[i] += p[base + i] * d;
                }
            }
        }
    }
}

/// Intermediate activations kept for backpropagation.
#[derive(Debug, Clone)]
pub struct Trace {
    pub branch: [Vec<f64>; 3],
    pub concat: Vec<f64>,
    pub attention: Vec<f64>,
    pub gated: Vec<f64>,
    pub hidden: Vec<Vec<f64>>,
    pub q: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    shape: NetShape,
    pub params: Vec<f64>,
    branches: [Dense; 3],
    attention: Dense,
    hidden: Vec<Dense>,
    output: Dense,
}

fn relu(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

impl QNetwork {
    /// All-zero parameters.
    pub fn zeros(shape: NetShape) -> Self {
        let mut next = 0;
        let mut dense = |inp: usize, out: usize| {
            let d = Dense {
                w: next,
                b: next + inp * out,
                inp,
                out,
            };
            next += inp * out + out;
            d
        };
        let f = shape.branch_width;
        let branches = [
            dense(shape.inputs[0], f),
            dense(shape.inputs[1], f),
            dense(shape.inputs[2], f),
        ];
        let attention = dense(3 * f, 3 * f);
        let mut width = 3 * f;
        let mut hidden = Vec::new();
        for &h in &shape.hidden {
            hidden.push(dense(width, h));
            width = h;
        }
        let output = dense(width, shape.actions);
        QNetwork {
            params: vec![0.0; next],
            shape,
            branches,
            attention,
            hidden,
            output,
        }
    }

    /// Xavier-uniform weights, zero biases.
    pub fn xavier(shape: NetShape, rng: &mut impl Rng) -> Self {
        let mut net = Self::zeros(shape);
        let layers: Vec<Dense> = net.layers().collect();
        for d in layers {
            let limit = (6.0 / (d.inp + d.out) as f64).sqrt();
            for w in &mut net.params[d.w..d.w + d.inp * d.out] {
                *w = rng.gen_range(-limit..limit);
            }
        }
        net
    }

    fn layers(&self) -> impl Iterator<Item = Dense> + '_ {
        self.branches
            .iter()
            .chain(std::iter::once(&self.attention))
            .chain(self.hidden.iter())
            .chain(std::iter::once(&self.output))
            .copied()
    }

    pub fn shape(&self) -> &NetShape {
        &self.shape
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn forward(&self, s: &StateEncoding) -> Result<Vec<f64>, DrlError> {
        self.check(s)?;
        Ok(self.trace(s).q)
    }

    pub fn check(&self, s: &StateEncoding) -> Result<(), DrlError> {
        let got = [s.a.len(), s.b.len(), s.c.len()];
        if got != self.shape.inputs {
            return Err(DrlError::Dimension {
                expected: self.shape.inputs,
                got,
            });
        }
        Ok(())
    }

    /// Forward pass keeping activations. Inputs must already be checked.
    pub fn trace(&self, s: &StateEncoding) -> Trace {
        let p = &self.params;
        let f = self.shape.branch_width;
        let inputs = [&s.a, &s.b, &s.c];
        let branch: [Vec<f64>; 3] = std::array::from_fn(|i| {
            let mut out = vec![0.0; f];
            self.branches[i].forward(p, inputs[i], &mut out);
            relu(&mut out);
            out
        });
        let concat: Vec<f64> = branch.iter().flatten().copied().collect();
        let n = concat.len();
        let mut scores = vec![0.0; n];
        self.attention.forward(p, &concat, &mut scores);
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut attention: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let total: f64 = attention.iter().sum();
        for a in &mut attention {
            *a /= total;
        }
        let gated: Vec<f64> = concat
            .iter()
            .zip(&attention)
            .map(|(z, a)| z * n as f64 * a)
            .collect();
        let mut hidden = Vec::with_capacity(self.hidden.len());
        let mut x = gated.clone();
        for d in &self.hidden {
            let mut h = vec![0.0; d.out];
            d.forward(p, &x, &mut h);
            relu(&mut h);
            hidden.push(h.clone());
            x = h;
        }
        let mut q = vec![0.0; self.shape.actions];
        self.output.forward(p, &x, &mut q);
        Trace {
            branch,
            concat,
            attention,
            gated,
            hidden,
            q,
        }
    }

    /// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(q).
    pub fn backward(&self, s: &StateEncoding, t: &Trace, dq: &[f64], grads: &mut [f64]) {
        let p = &self.params;
        let last = t.hidden.last().unwrap_or(&t.gated);
        let mut dx = vec![0.0; last.len()];
        self.output.backward(p, last, dq, grads, Some(&mut dx));
        for (i, d) in self.hidden.iter().enumerate().rev() {
            for (g, &h) in dx.iter_mut().zip(&t.hidden[i]) {
                if h <= 0.0 {
                    *g = 0.0;
                }
            }
            let x = if i == 0 { &t.gated } else { &t.hidden[i - 1] };
            let mut dprev = vec![0.0; x.len()];
            d.backward(p, x, &dx, grads, Some(&mut dprev));
            dx = dprev;
        }
        // Attention gate: y_j = z_j * n * a_j with a = softmax(W z + b).
        let n = t.concat.len() as f64;
        let da: Vec<f64> = dx
            .iter()
            .zip(&t.concat)
            .map(|(g, z)| g * z * n)
            .collect();
        let mean: f64 = t.attention.iter().zip(&da).map(|(a, d)| a * d).sum();
        let ds: Vec<f64> = t
            .attention
            .iter()
            .zip(&da)
            .map(|(a, d)| a * (d - mean))
            .collect();
        let mut dz: Vec<f64> = dx
            .iter()
            .zip(&t.attention)
            .map(|(g, a)| g * n * a)
            .collect();
        self.attention.backward(p, &t.concat, &ds, grads, Some(&mut dz));
        let f = self.shape.branch_width;
        let inputs = [&s.a, &s.b, &s.c];
        for i in 0..3 {
            let mut db = dz[i * f..(i + 1) * f].to_vec();
            for (g, &h) in db.iter_mut().zip(&t.branch[i]) {
                if h <= 0.0 {
                    *g = 0.0;
                }
            }
            self.branches[i].backward(p, inputs[i], &db, grads, None);
        }
    }

    /// Pre-activations of every ReLU unit, for kink-distance checks.
    pub fn relu_preactivations(&self, s: &StateEncoding) -> Vec<f64> {
        let p = &self.params;
        let f = self.shape.branch_width;
        let inputs = [&s.a, &s.b, &s.c];
        let mut out = Vec::new();
        for i in 0..3 {
            let mut pre = vec![0.0; f];
            self.branches[i].forward(p, inputs[i], &mut pre);
            out.extend_from_slice(&pre);
        }
        let t = self.trace(s);
        let mut x = t.gated;
        for d in &self.hidden {
            let mut pre = vec![0.0; d.out];
            d.forward(p, &x, &mut pre);
            out.extend_from_slice(&pre);
            relu(&mut pre);
            x = pre;
        }
        out
    }
}

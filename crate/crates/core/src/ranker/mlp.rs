use rand::Rng;
use serde::{Deserialize, Serialize};

/// Dense layer; `w` is `outputs × inputs`, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub inputs: usize,
    pub outputs: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Linear {
    /// He-uniform weights, zero bias.
    pub fn new(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let bound = (6.0 / inputs as f64).sqrt();
        let w = (0..inputs * outputs).map(|_| rng.gen_range(-bound..bound)).collect();
        Self { inputs, outputs, w, b: vec![0.0; outputs] }
    }

    fn forward(&self, x: &[f64], n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n * self.outputs];
        for (i, row) in out.chunks_mut(self.outputs).enumerate() {
            let xi = &x[i * self.inputs..(i + 1) * self.inputs];
            for (o, y) in row.iter_mut().enumerate() {
                let wo = &self.w[o * self.inputs..(o + 1) * self.inputs];
                *y = self.b[o] + wo.iter().zip(xi).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        out
    }
}

/// Intermediate values of a batched forward pass.
pub struct Trace {
    n: usize,
    /// `acts[l]` is the input of layer `l`; the last entry is the output.
    acts: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("non-empty trace")
    }

    pub fn rows(&self) -> usize {
        self.n
    }
}

/// Fully connected network with ReLU between layers and a linear output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    /// `dims = [input, hidden.., output]`.
    pub fn new(dims: &[usize], rng: &mut impl Rng) -> Self {
        assert!(dims.len() >= 2, "an MLP needs at least input and output sizes");
        Self { layers: dims.windows(2).map(|d| Linear::new(d[0], d[1], rng)).collect() }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").outputs
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Parameters in flat order: layer 0 weights, layer 0 biases, layer 1...
    pub fn params(&self) -> impl Iterator<Item = &f64> + '_ {
        self.layers.iter().flat_map(|l| l.w.iter().chain(&l.b))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers.iter_mut().flat_map(|l| l.w.iter_mut().chain(l.b.iter_mut()))
    }

    /// Forward pass over `n` row-major inputs.
    pub fn forward(&self, x: &[f64], n: usize) -> Trace {
        debug_assert_eq!(x.len(), n * self.input_dim());
        let mut acts = vec![x.to_vec()];
        let mut pre = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(acts.last().expect("input"), n);
            let a = if l + 1 < self.layers.len() { z.iter().map(|v| v.max(0.0)).collect() } else { z.clone() };
            pre.push(z);
            acts.push(a);
        }
        Trace { n, acts, pre }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x, 1).output().to_vec()
    }

    /// Gradient of the loss with respect to every parameter, flat order,
    /// given the gradient `d_out` with respect to the trace's output.
    pub fn backward(&self, trace: &Trace, d_out: &[f64]) -> Vec<f64> {
        let n = trace.n;
        let mut grads: Vec<Vec<f64>> = vec![Vec::new(); self.layers.len()];
        let mut delta = d_out.to_vec();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let input = &trace.acts[l];
            let (ni, no) = (layer.inputs, layer.outputs);
            let mut g = vec![0.0; no * ni + no];
            let (gw, gb) = g.split_at_mut(no * ni);
            for (o, row) in gw.chunks_mut(ni).enumerate() {
                for i in 0..n {
                    let d = delta[i * no + o];
                    if d != 0.0 {
                        for (r, x) in row.iter_mut().zip(&input[i * ni..(i + 1) * ni]) {
                            *r += d * x;
                        }
                    }
                }
            }
            for i in 0..n {
                for (b, d) in gb.iter_mut().zip(&delta[i * no..(i + 1) * no]) {
                    *b += d;
                }
            }
            grads[l] = g;
            if l > 0 {
                let prev_pre = &trace.pre[l - 1];
                let mut next = vec![0.0; n * ni];
                for (i, row) in next.chunks_mut(ni).enumerate() {
                    for o in 0..no {
                        let d = delta[i * no + o];
                        if d != 0.0 {
                            for (r, w) in row.iter_mut().zip(&layer.w[o * ni..(o + 1) * ni]) {
                                *r += d * w;
                            }
                        }
                    }
                    for (r, z) in row.iter_mut().zip(&prev_pre[i * ni..(i + 1) * ni]) {
                        if *z <= 0.0 {
                            *r = 0.0;
                        }
                    }
                }
                delta = next;
            }
        }
        grads.concat()
    }
}

/// Adam with L2 weight decay folded into the gradient.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(num_params: usize, lr: f64, weight_decay: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay, m: vec![0.0; num_params], v: vec![0.0; num_params], t: 0 }
    }

    pub fn step(&mut self, mlp: &mut Mlp, grads: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, g), m), v) in mlp.params_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            let g = g + self.weight_decay * *p;
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

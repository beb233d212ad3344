use rand::Rng;

use super::tensor::{elu_scalar, gemm, sigmoid_scalar, ConvGeom};
use super::{shape_err, standard_normal, NumericsError, ParamId, ParamSet, Result, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    AddRowBias(Var, Var),
    Conv3d { x: Var, k: Var, pad: bool },
    AddChannelBias(Var, Var),
    Elu(Var),
    Relu(Var),
    Sigmoid(Var),
    Exp(Var),
    Square(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sum(Var),
    Mean(Var),
    Concat(Vec<Var>),
    Reshape(Var),
    Reparameterize { mu: Var, log_var: Var, eps: Tensor },
    Dropout { x: Var, mask: Vec<f64> },
    Mse { pred: Var, target: Tensor },
    GaussianKl { mu: Var, log_var: Var },
    SoftmaxCrossEntropy { logits: Var, labels: Vec<usize>, probs: Tensor },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Define-by-run tape. Build a forward pass with the op methods, then call
/// [`Graph::backward`] on a scalar loss.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of every node that needed one, as returned by [`Graph::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return shape_err(op, a.shape(), b.shape());
    }
    Ok(())
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Constant input; no gradient flows into it.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Input whose gradient is reported by [`Gradients::get`].
    pub fn input_with_grad(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    pub fn param(&mut self, params: &ParamSet, id: ParamId) -> Var {
        self.push(params.value(id).clone(), Op::Param(id), true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = super::matmul(self.value(a), self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(y, Op::MatMul(a, b), ng))
    }

    /// Adds a `[n]` bias to every row of `x` (last axis of length n).
    pub fn add_row_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(b));
        let (_, cols) = xv.rows_cols();
        if bv.len() != cols {
            return shape_err("add_row_bias", &[cols], bv.shape());
        }
        let mut y = xv.clone();
        for row in y.data_mut().chunks_mut(cols) {
            for (v, bb) in row.iter_mut().zip(bv.data()) {
                *v += bb;
            }
        }
        let ng = self.ng(x) || self.ng(b);
        Ok(self.push(y, Op::AddRowBias(x, b), ng))
    }

    /// `x @ w + b`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let h = self.matmul(x, w)?;
        self.add_row_bias(h, b)
    }

    pub fn conv3d(&mut self, x: Var, k: Var, pad_last_only: bool) -> Result<Var> {
        let y = super::conv3d(self.value(x), self.value(k), pad_last_only)?;
        let ng = self.ng(x) || self.ng(k);
        Ok(self.push(
            y,
            Op::Conv3d {
                x,
                k,
                pad: pad_last_only,
            },
            ng,
        ))
    }

    /// Adds a per-channel bias to `[B, C, ...]`.
    pub fn add_channel_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(b));
        if xv.shape().len() < 2 || xv.shape()[1] != bv.len() {
            return shape_err("add_channel_bias", &[0, bv.len()], xv.shape());
        }
        let c = bv.len();
        let inner: usize = xv.shape()[2..].iter().product();
        let mut y = xv.clone();
        for (i, chunk) in y.data_mut().chunks_mut(inner).enumerate() {
            let bb = bv.data()[i % c];
            chunk.iter_mut().for_each(|v| *v += bb);
        }
        let ng = self.ng(x) || self.ng(b);
        Ok(self.push(y, Op::AddChannelBias(x, b), ng))
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let y = self.value(x).map(f);
        let ng = self.ng(x);
        self.push(y, op, ng)
    }

    pub fn elu(&mut self, x: Var) -> Var {
        self.unary(x, elu_scalar, Op::Elu(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid_scalar, Op::Sigmoid(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, f64::exp, Op::Exp(x))
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, |v| v * v, Op::Square(x))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        self.unary(x, |v| v * s, Op::Scale(x, s))
    }

    fn binary(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        same_shape(name, av, bv)?;
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        let y = Tensor::new(av.shape().to_vec(), data)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(y, op, ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let ng = self.ng(x);
        self.push(Tensor::scalar(s), Op::Sum(x), ng)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let s = v.data().iter().sum::<f64>() / v.len().max(1) as f64;
        let ng = self.ng(x);
        self.push(Tensor::scalar(s), Op::Mean(x), ng)
    }

    /// Concatenates along the last axis; leading axes must agree.
    pub fn concat(&mut self, xs: &[Var]) -> Result<Var> {
        let first = self
            .nodes
            .get(xs.first().ok_or_else(|| NumericsError::Invalid("concat of nothing".into()))?.0)
            .expect("valid var");
        let (rows, _) = first.value.rows_cols();
        let lead = first.value.shape()[..first.value.shape().len() - 1].to_vec();
        let mut widths = Vec::with_capacity(xs.len());
        for &x in xs {
            let v = self.value(x);
            let (r, c) = v.rows_cols();
            if r != rows || v.shape()[..v.shape().len() - 1] != lead[..] {
                return shape_err("concat", &lead, v.shape());
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&x, &w) in xs.iter().zip(&widths) {
                out.extend_from_slice(&self.value(x).data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead;
        shape.push(total);
        let y = Tensor::new(shape, out)?;
        let ng = xs.iter().any(|&x| self.ng(x));
        Ok(self.push(y, Op::Concat(xs.to_vec()), ng))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let y = self.value(x).reshape(shape)?;
        let ng = self.ng(x);
        Ok(self.push(y, Op::Reshape(x), ng))
    }

    /// `mu + exp(log_var / 2) * eps` with fresh `eps ~ N(0, I)`.
    pub fn reparameterize<R: Rng + ?Sized>(&mut self, mu: Var, log_var: Var, rng: &mut R) -> Result<Var> {
        let eps = standard_normal(self.value(mu).shape(), rng);
        self.reparameterize_with(mu, log_var, eps)
    }

    /// Same as [`Graph::reparameterize`] with caller-supplied noise.
    pub fn reparameterize_with(&mut self, mu: Var, log_var: Var, eps: Tensor) -> Result<Var> {
        let (m, lv) = (self.value(mu), self.value(log_var));
        same_shape("reparameterize", m, lv)?;
        same_shape("reparameterize", m, &eps)?;
        let data = m
            .data()
            .iter()
            .zip(lv.data())
            .zip(eps.data())
            .map(|((a, l), e)| a + (0.5 * l).exp() * e)
            .collect();
        let y = Tensor::new(m.shape().to_vec(), data)?;
        let ng = self.ng(mu) || self.ng(log_var);
        Ok(self.push(y, Op::Reparameterize { mu, log_var, eps }, ng))
    }

    /// Inverted dropout: zeroes each element with probability `p` and
    /// rescales survivors by `1 / (1 - p)`. Identity when `p == 0`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, p: f64, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(NumericsError::Invalid(format!("dropout rate {p} outside [0, 1)")));
        }
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..self.value(x).len())
            .map(|_| if p > 0.0 && rng.gen::<f64>() < p { 0.0 } else { keep })
            .collect();
        let xv = self.value(x);
        let data = xv.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let y = Tensor::new(xv.shape().to_vec(), data)?;
        let ng = self.ng(x);
        Ok(self.push(y, Op::Dropout { x, mask }, ng))
    }

    /// Mean squared error over all elements.
    pub fn mse(&mut self, pred: Var, target: Tensor) -> Result<Var> {
        let pv = self.value(pred);
        same_shape("mse", pv, &target)?;
        let n = pv.len().max(1) as f64;
        let s = pv
            .data()
            .iter()
            .zip(target.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / n;
        let ng = self.ng(pred);
        Ok(self.push(Tensor::scalar(s), Op::Mse { pred, target }, ng))
    }

    /// KL divergence of `N(mu, exp(log_var))` from `N(0, I)`, summed over
    /// latent dimensions and averaged over rows.
    pub fn gaussian_kl(&mut self, mu: Var, log_var: Var) -> Result<Var> {
        let (m, lv) = (self.value(mu), self.value(log_var));
        same_shape("gaussian_kl", m, lv)?;
        let (rows, _) = m.rows_cols();
        let s = m
            .data()
            .iter()
            .zip(lv.data())
            .map(|(a, l)| 0.5 * (a * a + l.exp() - 1.0 - l))
            .sum::<f64>()
            / rows as f64;
        let ng = self.ng(mu) || self.ng(log_var);
        Ok(self.push(Tensor::scalar(s), Op::GaussianKl { mu, log_var }, ng))
    }

    /// Mean negative log-likelihood of `labels` under a row-wise softmax.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let lv = self.value(logits);
        let (rows, cols) = lv.rows_cols();
        if labels.len() != rows || labels.iter().any(|&l| l >= cols) {
            return Err(NumericsError::Invalid(format!(
                "{} labels for {rows} rows of {cols} classes",
                labels.len()
            )));
        }
        let probs = softmax_rows(lv);
        let loss = labels
            .iter()
            .enumerate()
            .map(|(r, &l)| -(probs.data()[r * cols + l].max(1e-300)).ln())
            .sum::<f64>()
            / rows as f64;
        let ng = self.ng(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            ng,
        ))
    }

    /// Reverse pass from a scalar `loss`. Parameter gradients are added to
    /// the slots in `params`; other gradients are returned.
    pub fn backward(&self, loss: Var, params: &mut ParamSet) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return shape_err("backward", &[1], self.value(loss).shape());
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(dy) = grads[i].take() else { continue };
            self.propagate(node, &dy, &mut grads, params);
            grads[i] = Some(dy);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.ng(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    fn elementwise(&self, grads: &mut [Option<Tensor>], v: Var, dy: &Tensor, f: impl Fn(usize, f64) -> f64) {
        if !self.ng(v) {
            return;
        }
        let data = dy.data().iter().enumerate().map(|(i, &d)| f(i, d)).collect();
        let g = Tensor::new(self.value(v).shape().to_vec(), data).expect("same length");
        self.accumulate(grads, v, g);
    }

    fn propagate(&self, node: &Node, dy: &Tensor, grads: &mut [Option<Tensor>], params: &mut ParamSet) {
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::Param(id) => params.grad_mut(*id).add_assign(dy),
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                if self.ng(*a) {
                    let mut da = vec![0.0; m * k];
                    gemm(m, n, k, dy.data(), false, bv.data(), true, 0.0, &mut da);
                    self.accumulate(grads, *a, Tensor::new(vec![m, k], da).unwrap());
                }
                if self.ng(*b) {
                    let mut db = vec![0.0; k * n];
                    gemm(k, m, n, av.data(), true, dy.data(), false, 0.0, &mut db);
                    self.accumulate(grads, *b, Tensor::new(vec![k, n], db).unwrap());
                }
            }
            Op::AddRowBias(x, b) => {
                self.accumulate(grads, *x, dy.clone());
                if self.ng(*b) {
                    let cols = self.value(*b).len();
                    let mut db = vec![0.0; cols];
                    for row in dy.data().chunks(cols) {
                        for (acc, v) in db.iter_mut().zip(row) {
                            *acc += v;
                        }
                    }
                    self.accumulate(grads, *b, Tensor::new(self.value(*b).shape().to_vec(), db).unwrap());
                }
            }
            Op::Conv3d { x, k, pad } => {
                let (xv, kv) = (self.value(*x), self.value(*k));
                let g = ConvGeom::new(xv.shape(), kv.shape(), *pad).expect("validated in forward");
                let p = g.out_positions();
                let pl = g.patch_len();
                let mut cols = vec![0.0; pl * p];
                let mut dk = vec![0.0; kv.len()];
                let mut dx = self.ng(*x).then(|| vec![0.0; xv.len()]);
                let mut dcols = vec![0.0; pl * p];
                for bi in 0..g.batch {
                    let dyb = &dy.data()[bi * g.c_out * p..(bi + 1) * g.c_out * p];
                    if self.ng(*k) {
                        g.im2col(&xv.data()[bi * g.in_len()..(bi + 1) * g.in_len()], &mut cols);
                        gemm(g.c_out, p, pl, dyb, false, &cols, true, 1.0, &mut dk);
                    }
                    if let Some(dx) = dx.as_mut() {
                        gemm(pl, g.c_out, p, kv.data(), true, dyb, false, 0.0, &mut dcols);
                        g.col2im(&dcols, &mut dx[bi * g.in_len()..(bi + 1) * g.in_len()]);
                    }
                }
                if self.ng(*k) {
                    self.accumulate(grads, *k, Tensor::new(kv.shape().to_vec(), dk).unwrap());
                }
                if let Some(dx) = dx {
                    self.accumulate(grads, *x, Tensor::new(xv.shape().to_vec(), dx).unwrap());
                }
            }
            Op::AddChannelBias(x, b) => {
                self.accumulate(grads, *x, dy.clone());
                if self.ng(*b) {
                    let c = self.value(*b).len();
                    let inner: usize = y.shape()[2..].iter().product();
                    let mut db = vec![0.0; c];
                    for (i, chunk) in dy.data().chunks(inner).enumerate() {
                        db[i % c] += chunk.iter().sum::<f64>();
                    }
                    self.accumulate(grads, *b, Tensor::new(vec![c], db).unwrap());
                }
            }
            Op::Elu(x) => {
                let yd = y.data();
                let xd = self.value(*x).data();
                self.elementwise(grads, *x, dy, |i, d| if xd[i] >= 0.0 { d } else { d * (yd[i] + 1.0) });
            }
            Op::Relu(x) => {
                let xd = self.value(*x).data();
                self.elementwise(grads, *x, dy, |i, d| if xd[i] > 0.0 { d } else { 0.0 });
            }
            Op::Sigmoid(x) => {
                let yd = y.data();
                self.elementwise(grads, *x, dy, |i, d| d * yd[i] * (1.0 - yd[i]));
            }
            Op::Exp(x) => {
                let yd = y.data();
                self.elementwise(grads, *x, dy, |i, d| d * yd[i]);
            }
            Op::Square(x) => {
                let xd = self.value(*x).data();
                self.elementwise(grads, *x, dy, |i, d| 2.0 * d * xd[i]);
            }
            Op::Scale(x, s) => self.elementwise(grads, *x, dy, |_, d| d * s),
            Op::Add(a, b) => {
                self.accumulate(grads, *a, dy.clone());
                self.accumulate(grads, *b, dy.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, dy.clone());
                self.elementwise(grads, *b, dy, |_, d| -d);
            }
            Op::Mul(a, b) => {
                let (ad, bd) = (self.value(*a).data(), self.value(*b).data());
                self.elementwise(grads, *a, dy, |i, d| d * bd[i]);
                self.elementwise(grads, *b, dy, |i, d| d * ad[i]);
            }
            Op::Sum(x) => {
                let d = dy.item();
                self.elementwise(grads, *x, &Tensor::full(self.value(*x).shape(), d), |_, v| v);
            }
            Op::Mean(x) => {
                let n = self.value(*x).len().max(1) as f64;
                let d = dy.item() / n;
                self.elementwise(grads, *x, &Tensor::full(self.value(*x).shape(), d), |_, v| v);
            }
            Op::Concat(xs) => {
                let (rows, total) = y.rows_cols();
                let mut off = 0;
                for &x in xs {
                    let xv = self.value(x);
                    let (_, w) = xv.rows_cols();
                    if self.ng(x) {
                        let mut g = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            g.extend_from_slice(&dy.data()[r * total + off..r * total + off + w]);
                        }
                        self.accumulate(grads, x, Tensor::new(xv.shape().to_vec(), g).unwrap());
                    }
                    off += w;
                }
            }
            Op::Reshape(x) => {
                let g = dy.reshape(self.value(*x).shape()).expect("same length");
                self.accumulate(grads, *x, g);
            }
            Op::Reparameterize { mu, log_var, eps } => {
                self.accumulate(grads, *mu, dy.clone());
                let (lv, e) = (self.value(*log_var).data(), eps.data());
                self.elementwise(grads, *log_var, dy, |i, d| d * 0.5 * (0.5 * lv[i]).exp() * e[i]);
            }
            Op::Dropout { x, mask } => self.elementwise(grads, *x, dy, |i, d| d * mask[i]),
            Op::Mse { pred, target } => {
                let pd = self.value(*pred).data();
                let n = pd.len().max(1) as f64;
                let s = dy.item() * 2.0 / n;
                let td = target.data();
                self.elementwise(grads, *pred, &Tensor::zeros(target.shape()), |i, _| s * (pd[i] - td[i]));
            }
            Op::GaussianKl { mu, log_var } => {
                let (rows, _) = self.value(*mu).rows_cols();
                let s = dy.item() / rows as f64;
                let md = self.value(*mu).data();
                let ld = self.value(*log_var).data();
                let shape = self.value(*mu).shape();
                let z = Tensor::zeros(shape);
                self.elementwise(grads, *mu, &z, |i, _| s * md[i]);
                self.elementwise(grads, *log_var, &z, |i, _| s * 0.5 * (ld[i].exp() - 1.0));
            }
            Op::SoftmaxCrossEntropy { logits, labels, probs } => {
                let (rows, cols) = probs.rows_cols();
                let s = dy.item() / rows as f64;
                let pd = probs.data();
                self.elementwise(grads, *logits, &Tensor::zeros(probs.shape()), |i, _| {
                    let hit = if labels[i / cols] == i % cols { 1.0 } else { 0.0 };
                    s * (pd[i] - hit)
                });
            }
        }
    }
}

/// Row-wise softmax over the last axis.
pub(crate) fn softmax_rows(x: &Tensor) -> Tensor {
    let (_, cols) = x.rows_cols();
    let mut out = x.clone();
    for row in out.data_mut().chunks_mut(cols) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        row.iter_mut().for_each(|v| *v /= s);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_t(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Checks the analytic gradient of `f` with respect to every input
    /// against central differences.
    fn grad_check(inputs: Vec<Tensor>, f: impl Fn(&mut Graph, &[Var]) -> Var) {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.input_with_grad(t.clone())).collect();
        let loss = f(&mut g, &vars);
        let mut ps = ParamSet::new();
        let grads = g.backward(loss, &mut ps).unwrap();
        let eval = |ins: &[Tensor]| {
            let mut g = Graph::new();
            let vs: Vec<Var> = ins.iter().map(|t| g.input(t.clone())).collect();
            let l = f(&mut g, &vs);
            g.value(l).item()
        };
        let h = 1e-5;
        for (k, v) in vars.iter().enumerate() {
            let analytic = grads.get(*v).cloned().unwrap_or_else(|| Tensor::zeros(inputs[k].shape()));
            for i in 0..inputs[k].len() {
                let mut plus = inputs.clone();
                plus[k].data_mut()[i] += h;
                let mut minus = inputs.clone();
                minus[k].data_mut()[i] -= h;
                let num = (eval(&plus) - eval(&minus)) / (2.0 * h);
                let a = analytic.data()[i];
                let rel = (a - num).abs() / a.abs().max(num.abs()).max(1e-6);
                assert!(rel < 1e-5, "input {k} elem {i}: analytic {a} numeric {num}");
            }
        }
    }

    #[test]
    fn sum_of_squares_gradient() {
        let mut g = Graph::new();
        let mut ps = ParamSet::new();
        let id = ps.add("theta", Tensor::vector(vec![1.0, 2.0])).unwrap();
        let t = g.param(&ps, id);
        let sq = g.square(t);
        let l = g.sum(sq);
        g.backward(l, &mut ps).unwrap();
        assert_eq!(ps.grad(id).data(), &[2.0, 4.0]);
    }

    #[test]
    fn constant_loss_has_zero_param_grads() {
        let mut g = Graph::new();
        let mut ps = ParamSet::new();
        let id = ps.add("w", Tensor::vector(vec![1.0, -1.0])).unwrap();
        let _w = g.param(&ps, id);
        let c = g.input(Tensor::vector(vec![3.0]));
        let l = g.sum(c);
        g.backward(l, &mut ps).unwrap();
        assert!(ps.grad(id).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn grad_matmul_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        grad_check(
            vec![rand_t(&[3, 4], &mut rng), rand_t(&[4, 2], &mut rng), rand_t(&[2], &mut rng)],
            |g, v| {
                let y = g.linear(v[0], v[1], v[2]).unwrap();
                let s = g.square(y);
                g.sum(s)
            },
        );
    }

    #[test]
    fn grad_conv3d_and_channel_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for pad in [true, false] {
            grad_check(
                vec![
                    rand_t(&[2, 2, 4, 3, 5], &mut rng),
                    rand_t(&[3, 2, 3, 3, 3], &mut rng),
                    rand_t(&[3], &mut rng),
                ],
                move |g, v| {
                    let y = g.conv3d(v[0], v[1], pad).unwrap();
                    let y = g.add_channel_bias(y, v[2]).unwrap();
                    let s = g.square(y);
                    g.sum(s)
                },
            );
        }
    }

    #[test]
    fn grad_activations() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // keep away from the relu kink
        let x = rand_t(&[2, 5], &mut rng).map(|v| if v.abs() < 0.05 { v + 0.2 } else { v });
        grad_check(vec![x], |g, v| {
            let a = g.elu(v[0]);
            let b = g.sigmoid(a);
            let c = g.relu(v[0]);
            let d = g.exp(c);
            let e = g.mul(b, d).unwrap();
            let f = g.scale(e, -1.7);
            g.mean(f)
        });
    }

    #[test]
    fn grad_add_sub_concat_reshape() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        grad_check(
            vec![rand_t(&[2, 3], &mut rng), rand_t(&[2, 3], &mut rng), rand_t(&[2, 2], &mut rng)],
            |g, v| {
                let a = g.add(v[0], v[1]).unwrap();
                let b = g.sub(a, v[1]).unwrap();
                let b = g.mul(b, v[1]).unwrap();
                let c = g.concat(&[b, v[2], v[0]]).unwrap();
                let r = g.reshape(c, &[16]).unwrap();
                let s = g.square(r);
                g.sum(s)
            },
        );
    }

    #[test]
    fn grad_reparameterize_and_kl() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let eps = rand_t(&[3, 4], &mut rng);
        grad_check(
            vec![rand_t(&[3, 4], &mut rng), rand_t(&[3, 4], &mut rng)],
            move |g, v| {
                let z = g.reparameterize_with(v[0], v[1], eps.clone()).unwrap();
                let s = g.square(z);
                let a = g.mean(s);
                let kl = g.gaussian_kl(v[0], v[1]).unwrap();
                g.add(a, kl).unwrap()
            },
        );
    }

    #[test]
    fn grad_mse_and_cross_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let target = rand_t(&[3, 4], &mut rng);
        grad_check(vec![rand_t(&[3, 4], &mut rng)], move |g, v| {
            let m = g.mse(v[0], target.clone()).unwrap();
            let ce = g.softmax_cross_entropy(v[0], &[0, 3, 2]).unwrap();
            g.add(m, ce).unwrap()
        });
    }

    #[test]
    fn grad_dropout_fixed_mask() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = rand_t(&[4, 6], &mut rng);
        grad_check(vec![x], |g, v| {
            let mut r = ChaCha8Rng::seed_from_u64(99);
            let d = g.dropout(v[0], 0.3, &mut r).unwrap();
            let s = g.square(d);
            g.sum(s)
        });
    }

    #[test]
    fn kl_is_zero_at_standard_normal() {
        let mut g = Graph::new();
        let mu = g.input(Tensor::zeros(&[5, 3]));
        let lv = g.input(Tensor::zeros(&[5, 3]));
        let kl = g.gaussian_kl(mu, lv).unwrap();
        assert_eq!(g.value(kl).item(), 0.0);
    }

    #[test]
    fn cross_entropy_uniform_logits() {
        let mut g = Graph::new();
        let x = g.input(Tensor::zeros(&[2, 72]));
        let ce = g.softmax_cross_entropy(x, &[0, 71]).unwrap();
        assert!((g.value(ce).item() - 72f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn dropout_zero_rate_is_identity() {
        let mut g = Graph::new();
        let t = Tensor::vector(vec![1.0, 2.0, 3.0]);
        let x = g.input(t.clone());
        let y = g.dropout(x, 0.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(g.value(y), &t);
    }
}

//! Graph operations: forward values plus backward rules.
//!
//! Broadcasting is intentionally restricted to one case, a vector added to
//! every row of a matrix, which keeps each backward rule a few lines and
//! directly testable.

use crate::numerics::node::GradFn;
use crate::numerics::{Node, NumericsError, Result, Tensor};

const GELU_SCALE: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_CUBIC: f64 = 0.044_715;

// ---------------------------------------------------------------------------
// raw matrix kernels
// ---------------------------------------------------------------------------

fn dims2(t: &Tensor) -> (usize, usize) {
    (t.rows(), t.cols())
}

/// C = A·B for row-major [m,k]·[k,n].
pub(crate) fn matmul_raw(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k) = dims2(a);
    let (_, n) = dims2(b);
    let mut out = vec![0.0; m * n];
    let ad = a.data();
    let bd = b.data();
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = ad[i * k + p];
            let brow = &bd[p * n..(p + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow.iter()) {
                *o += aip * bv;
            }
        }
    }
    Tensor::new(vec![m, n], out).expect("matmul shape")
}

/// C = A·Bᵀ for [m,k]·[n,k]ᵀ.
fn matmul_nt(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k) = dims2(a);
    let (n, _) = dims2(b);
    let mut out = vec![0.0; m * n];
    let ad = a.data();
    let bd = b.data();
    for i in 0..m {
        let arow = &ad[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &bd[j * k..(j + 1) * k];
            out[i * n + j] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    Tensor::new(vec![m, n], out).expect("matmul_nt shape")
}

/// C = Aᵀ·B for [m,k]ᵀ·[m,n].
fn matmul_tn(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k) = dims2(a);
    let (_, n) = dims2(b);
    let mut out = vec![0.0; k * n];
    let ad = a.data();
    let bd = b.data();
    for i in 0..m {
        let arow = &ad[i * k..(i + 1) * k];
        let brow = &bd[i * n..(i + 1) * n];
        for (p, &aip) in arow.iter().enumerate() {
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow.iter()) {
                *o += aip * bv;
            }
        }
    }
    Tensor::new(vec![k, n], out).expect("matmul_tn shape")
}

fn require_2d(t: &Node, what: &str) -> Result<()> {
    if t.shape().len() != 2 {
        return Err(NumericsError::ShapeMismatch(format!(
            "{what} expects a matrix, got shape {:?}",
            t.shape()
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// ops
// ---------------------------------------------------------------------------

impl Node {
    /// Matrix product [m×k]·[k×n] → [m×n].
    pub fn matmul(&self, other: &Node) -> Result<Node> {
        require_2d(self, "matmul lhs")?;
        require_2d(other, "matmul rhs")?;
        let (ls, rs) = (self.shape(), other.shape());
        if ls[1] != rs[0] {
            return Err(NumericsError::ShapeMismatch(format!(
                "matmul {:?} x {:?}",
                ls, rs
            )));
        }
        let value = matmul_raw(&self.value(), &other.value());
        let b_ref = other.clone();
        let a_ref = self.clone();
        let parents: Vec<(Node, GradFn)> = vec![
            (
                self.clone(),
                Box::new(move |g, acc| acc.add_assign(&matmul_nt(g, &b_ref.value()))),
            ),
            (
                other.clone(),
                Box::new(move |g, acc| acc.add_assign(&matmul_tn(&a_ref.value(), g))),
            ),
        ];
        Ok(Node::from_op(value, parents, "matmul"))
    }

    pub fn transpose(&self) -> Result<Node> {
        require_2d(self, "transpose")?;
        let v = self.value();
        let (m, n) = dims2(&v);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = v.at2(i, j);
            }
        }
        drop(v);
        let value = Tensor::new(vec![n, m], out).expect("transpose shape");
        let parents: Vec<(Node, GradFn)> = vec![(
            self.clone(),
            Box::new(move |g, acc| {
                let (gm, gn) = dims2(g);
                for i in 0..gm {
                    for j in 0..gn {
                        acc.data_mut()[j * gm + i] += g.at2(i, j);
                    }
                }
            }),
        )];
        Ok(Node::from_op(value, parents, "transpose"))
    }

    /// Elementwise sum of two same-shape nodes.
    pub fn add(&self, other: &Node) -> Result<Node> {
        if self.shape() != other.shape() {
            return Err(NumericsError::ShapeMismatch(format!(
                "add {:?} + {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let mut value = self.value_clone();
        value.add_assign(&other.value());
        let pass: fn() -> GradFn = || Box::new(|g, acc| acc.add_assign(g));
        let parents = vec![(self.clone(), pass()), (other.clone(), pass())];
        Ok(Node::from_op(value, parents, "add"))
    }

    /// Add a vector to every row of a matrix (bias broadcast).
    pub fn add_row(&self, row: &Node) -> Result<Node> {
        require_2d(self, "add_row lhs")?;
        let rs = row.shape();
        let n = self.shape()[1];
        if rs != vec![n] {
            return Err(NumericsError::ShapeMismatch(format!(
                "add_row matrix {:?} + vector {:?}",
                self.shape(),
                rs
            )));
        }
        let v = self.value();
        let rv = row.value();
        let (m, _) = dims2(&v);
        let mut out = v.data().to_vec();
        for i in 0..m {
            for j in 0..n {
                out[i * n + j] += rv.data()[j];
            }
        }
        drop(v);
        drop(rv);
        let value = Tensor::new(vec![m, n], out).expect("add_row shape");
        let parents: Vec<(Node, GradFn)> = vec![
            (self.clone(), Box::new(|g, acc| acc.add_assign(g))),
            (
                row.clone(),
                Box::new(move |g, acc| {
                    let (gm, gn) = dims2(g);
                    for i in 0..gm {
                        for j in 0..gn {
                            acc.data_mut()[j] += g.at2(i, j);
                        }
                    }
                }),
            ),
        ];
        Ok(Node::from_op(value, parents, "add_row"))
    }

    /// Elementwise product of two same-shape nodes.
    pub fn mul(&self, other: &Node) -> Result<Node> {
        if self.shape() != other.shape() {
            return Err(NumericsError::ShapeMismatch(format!(
                "mul {:?} * {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let data: Vec<f64> = self
            .value()
            .data()
            .iter()
            .zip(other.value().data())
            .map(|(a, b)| a * b)
            .collect();
        let value = Tensor::new(self.shape(), data).expect("mul shape");
        let b_ref = other.clone();
        let a_ref = self.clone();
        let parents: Vec<(Node, GradFn)> = vec![
            (
                self.clone(),
                Box::new(move |g, acc| {
                    let b = b_ref.value();
                    for ((a, gv), bv) in acc.data_mut().iter_mut().zip(g.data()).zip(b.data()) {
                        *a += gv * bv;
                    }
                }),
            ),
            (
                other.clone(),
                Box::new(move |g, acc| {
                    let a = a_ref.value();
                    for ((o, gv), av) in acc.data_mut().iter_mut().zip(g.data()).zip(a.data()) {
                        *o += gv * av;
                    }
                }),
            ),
        ];
        Ok(Node::from_op(value, parents, "mul"))
    }

    /// Multiply by a compile-time constant.
    pub fn scale(&self, factor: f64) -> Node {
        let data: Vec<f64> = self.value().data().iter().map(|x| x * factor).collect();
        let value = Tensor::new(self.shape(), data).expect("scale shape");
        let parents: Vec<(Node, GradFn)> = vec![(
            self.clone(),
            Box::new(move |g, acc| {
                for (a, gv) in acc.data_mut().iter_mut().zip(g.data()) {
                    *a += gv * factor;
                }
            }),
        )];
        Node::from_op(value, parents, "scale")
    }

    /// Add a constant tensor (no gradient flows into the constant).
    pub fn add_const(&self, constant: &Tensor) -> Result<Node> {
        if self.shape() != constant.shape() {
            return Err(NumericsError::ShapeMismatch(format!(
                "add_const {:?} + {:?}",
                self.shape(),
                constant.shape()
            )));
        }
        let mut value = self.value_clone();
        value.add_assign(constant);
        let parents: Vec<(Node, GradFn)> =
            vec![(self.clone(), Box::new(|g, acc| acc.add_assign(g)))];
        Ok(Node::from_op(value, parents, "add_const"))
    }

    /// Elementwise product with a constant tensor (dropout and zero masks).
    pub fn mul_const(&self, constant: &Tensor) -> Result<Node> {
        if self.shape() != constant.shape() {
            return Err(NumericsError::ShapeMismatch(format!(
                "mul_const {:?} * {:?}",
                self.shape(),
                constant.shape()
            )));
        }
        let data: Vec<f64> = self
            .value()
            .data()
            .iter()
            .zip(constant.data())
            .map(|(a, b)| a * b)
            .collect();
        let value = Tensor::new(self.shape(), data).expect("mul_const shape");
        let mask = constant.clone();
        let parents: Vec<(Node, GradFn)> = vec![(
            self.clone(),
            Box::new(move |g, acc| {
                for ((a, gv), mv) in acc.data_mut().iter_mut().zip(g.data()).zip(mask.data()) {
                    *a += gv * mv;
                }
            }),
        )];
        Ok(Node::from_op(value, parents, "mul_const"))
    }

    fn unary(
        &self,
        op_tag: &'static str,
        fwd: impl Fn(f64) -> f64,
        // derivative as a function of (input, output)
        dfn: impl Fn(f64, f64) -> f64 + 'static,
    ) -> Node {
        let input = self.value_clone();
        let data: Vec<f64> = input.data().iter().map(|&x| fwd(x)).collect();
        let value = Tensor::new(self.shape(), data.clone()).expect("unary shape");
        let output = value.clone();
        let parents: Vec<(Node, GradFn)> = vec![(
            self.clone(),
            Box::new(move |g, acc| {
                for i in 0..g.data().len() {
                    acc.data_mut()[i] += g.data()[i] * dfn(input.data()[i], output.data()[i]);
                }
            }),
        )];
        Node::from_op(value, parents, op_tag)
    }

    pub fn sigmoid(&self) -> Node {
        self.unary("sigmoid", |x| 1.0 / (1.0 + (-x).exp()), |_, y| y * (1.0 - y))
    }

    pub fn tanh_act(&self) -> Node {
        self.unary("tanh", f64::tanh, |_, y| 1.0 - y * y)
    }

    pub fn relu(&self) -> Node {
        self.unary("relu", |x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    /// Tanh-approximated GELU: 0.5·x·(1 + tanh(√(2/π)(x + 0.044715·x³))).
    pub fn gelu(&self) -> Node {
        self.unary(
            "gelu",
            |x| {
                let u = GELU_SCALE * (x + GELU_CUBIC * x * x * x);
                0.5 * x * (1.0 + u.tanh())
            },
            |x, _| {
                let u = GELU_SCALE * (x + GELU_CUBIC * x * x * x);
                let t = u.tanh();
                let du = GELU_SCALE * (1.0 + 3.0 * GELU_CUBIC * x * x);
                0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
            },
        )
    }

    /// Softmax along `axis` (0 or 1 for matrices, 0 for vectors), with
    /// max-subtraction so large inputs cannot overflow.
    pub fn softmax(&self, axis: usize) -> Result<Node> {
        let shape = self.shape();
        let rank = shape.len();
        if axis >= rank.max(1) || rank > 2 {
            return Err(NumericsError::InvalidArgument(format!(
                "softmax axis {axis} on shape {shape:?}"
            )));
        }
        // Normalize to row-wise operation on a [slices × width] view.
        let row_wise = rank == 1 || axis == 1;
        let v = self.value_clone();
        let (m, n) = (v.rows(), v.cols());
        let (slices, width) = if row_wise { (m, n) } else { (n, m) };
        let get = |s: usize, w: usize| -> f64 {
            if row_wise {
                v.data()[s * width + w]
            } else {
                v.data()[w * slices + s]
            }
        };
        let mut out = vec![0.0; m * n];
        for s in 0..slices {
            let mut max = f64::NEG_INFINITY;
            for w in 0..width {
                max = max.max(get(s, w));
            }
            let mut sum = 0.0;
            let mut exps = vec![0.0; width];
            for w in 0..width {
                let e = (get(s, w) - max).exp();
                exps[w] = e;
                sum += e;
            }
            for w in 0..width {
                let idx = if row_wise { s * width + w } else { w * slices + s };
                out[idx] = exps[w] / sum;
            }
        }
        let value = Tensor::new(shape, out).expect("softmax shape");
        let y = value.clone();
        let parents: Vec<(Node, GradFn)> = vec![(
            self.clone(),
            Box::new(move |g, acc| {
                let idx = |s: usize, w: usize| -> usize {
                    if row_wise {
                        s * width + w
                    } else {
                        w * slices + s
                    }
                };
                for s in 0..slices {
                    let mut dot = 0.0;
                    for w in 0..width {
                        dot += g.data()[idx(s, w)] * y.data()[idx(s, w)];
                    }
                    for w in 0..width {
                        let i = idx(s, w);
                        acc.data_mut()[i] += y.data()[i] * (g.data()[i] - dot);
                    }
                }
            }),
        )];
        Ok(Node::from_op(value, parents, "softmax"))
    }

    /// Row-wise layer normalization with learned gain and shift.
    ///
    /// Uses the population variance over the last axis.
    pub fn layer_norm(&self, gamma: &Node, beta: &Node, eps: f64) -> Result<Node> {
        require_2d(self, "layer_norm input")?;
        let shape = self.shape();
        let (m, n) = (shape[0], shape[1]);
        if gamma.shape() != vec![n] || beta.shape() != vec![n] {
            return Err(NumericsError::ShapeMismatch(format!(
                "layer_norm gamma {:?} / beta {:?} against width {n}",
                gamma.shape(),
                beta.shape()
            )));
        }
        let x = self.value();
        let gv = gamma.value();
        let bv = beta.value();
        let mut out = vec![0.0; m * n];
        let mut x_hat = vec![0.0; m * n];
        let mut inv_std = vec![0.0; m];
        for i in 0..m {
            let row = &x.data()[i * n..(i + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let s = 1.0 / (var + eps).sqrt();
            inv_std[i] = s;
            for j in 0..n {
                let xh = (row[j] - mean) * s;
                x_hat[i * n + j] = xh;
                out[i * n + j] = xh * gv.data()[j] + bv.data()[j];
            }
        }
        drop(x);
        drop(gv);
        drop(bv);
        let value = Tensor::new(vec![m, n], out).expect("layer_norm shape");
        let x_hat = Tensor::new(vec![m, n], x_hat).expect("x_hat shape");
        let gamma_ref = gamma.clone();
        let xh_for_x = x_hat.clone();
        let inv_std_x = inv_std.clone();
        let xh_for_g = x_hat;
        let parents: Vec<(Node, GradFn)> = vec![
            (
                self.clone(),
                Box::new(move |g, acc| {
                    let gv = gamma_ref.value();
                    for i in 0..m {
                        let grow = &g.data()[i * n..(i + 1) * n];
                        let xrow = &xh_for_x.data()[i * n..(i + 1) * n];
                        let mut mean_gg = 0.0;
                        let mut mean_ggx = 0.0;
                        for j in 0..n {
                            let gg = grow[j] * gv.data()[j];
                            mean_gg += gg;
                            mean_ggx += gg * xrow[j];
                        }
                        mean_gg /= n as f64;
                        mean_ggx /= n as f64;
                        let s = inv_std_x[i];
                        for j in 0..n {
                            let gg = grow[j] * gv.data()[j];
                            acc.data_mut()[i * n + j] +=
                                (gg - mean_gg - xrow[j] * mean_ggx) * s;
                        }
                    }
                }),
            ),
            (
                gamma.clone(),
                Box::new(move |g, acc| {
                    for i in 0..m {
                        for j in 0..n {
                            acc.data_mut()[j] += g.data()[i * n + j] * xh_for_g.data()[i * n + j];
                        }
                    }
                }),
            ),
            (
                beta.clone(),
                Box::new(move |g, acc| {
                    for i in 0..m {
                        for j in 0..n {
                            acc.data_mut()[j] += g.data()[i * n + j];
                        }
                    }
                }),
            ),
        ];
        Ok(Node::from_op(value, parents, "layer_norm"))
    }

    /// Valid (unpadded) 1-d convolution.
    ///
    /// Input is [len × c_in], kernels are [k × c_in × c_out]; output is
    /// [(len − k)/stride + 1 × c_out].
    pub fn conv1d(&self, kernels: &Node, stride: usize) -> Result<Node> {
        require_2d(self, "conv1d input")?;
        let ks = kernels.shape();
        if ks.len() != 3 {
            return Err(NumericsError::ShapeMismatch(format!(
                "conv1d kernels must be [k, c_in, c_out], got {ks:?}"
            )));
        }
        let (len, c_in) = (self.shape()[0], self.shape()[1]);
        let (k, kc_in, c_out) = (ks[0], ks[1], ks[2]);
        if kc_in != c_in {
            return Err(NumericsError::ShapeMismatch(format!(
                "conv1d input channels {c_in} vs kernel channels {kc_in}"
            )));
        }
        if stride == 0 {
            return Err(NumericsError::InvalidArgument("conv1d stride 0".into()));
        }
        if len < k {
            return Err(NumericsError::ShapeMismatch(format!(
                "conv1d window {k} larger than input length {len}"
            )));
        }
        let out_len = (len - k) / stride + 1;
        let x = self.value();
        let kv = kernels.value();
        let mut out = vec![0.0; out_len * c_out];
        for j in 0..out_len {
            let base = j * stride;
            for t in 0..k {
                let xrow = &x.data()[(base + t) * c_in..(base + t + 1) * c_in];
                for (i, &xi) in xrow.iter().enumerate() {
                    let krow = &kv.data()[(t * c_in + i) * c_out..(t * c_in + i + 1) * c_out];
                    let orow = &mut out[j * c_out..(j + 1) * c_out];
                    for (o, &kvv) in orow.iter_mut().zip(krow.iter()) {
                        *o += xi * kvv;
                    }
                }
            }
        }
        drop(x);
        drop(kv);
        let value = Tensor::new(vec![out_len, c_out], out).expect("conv1d shape");
        let k_ref = kernels.clone();
        let x_ref = self.clone();
        let parents: Vec<(Node, GradFn)> = vec![
            (
                self.clone(),
                Box::new(move |g, acc| {
                    let kv = k_ref.value();
                    for j in 0..out_len {
                        let base = j * stride;
                        let grow = &g.data()[j * c_out..(j + 1) * c_out];
                        for t in 0..k {
                            for i in 0..c_in {
                                let krow = &kv.data()
                                    [(t * c_in + i) * c_out..(t * c_in + i + 1) * c_out];
                                let mut s = 0.0;
                                for (gv, kvv) in grow.iter().zip(krow.iter()) {
                                    s += gv * kvv;
                                }
                                acc.data_mut()[(base + t) * c_in + i] += s;
                            }
                        }
                    }
                }),
            ),
            (
                kernels.clone(),
                Box::new(move |g, acc| {
                    let x = x_ref.value();
                    for j in 0..out_len {
                        let base = j * stride;
                        let grow = &g.data()[j * c_out..(j + 1) * c_out];
                        for t in 0..k {
                            let xrow = &x.data()[(base + t) * c_in..(base + t + 1) * c_in];
                            for (i, &xi) in xrow.iter().enumerate() {
                                let arow = &mut acc.data_mut()
                                    [(t * c_in + i) * c_out..(t * c_in + i + 1) * c_out];
                                for (a, &gv) in arow.iter_mut().zip(grow.iter()) {
                                    *a += xi * gv;
                                }
                            }
                        }
                    }
                }),
            ),
        ];
        Ok(Node::from_op(value, parents, "conv1d"))
    }

    /// Column-wise max over all rows → [1 × c]. Ties route the gradient to
    /// the first (lowest-index) maximal row, which keeps backward
    /// deterministic.
    pub fn max_pool1d(&self) -> Result<Node> {
        require_2d(self, "max_pool1d")?;
        let (m, n) = (self.shape()[0], self.shape()[1]);
        let v = self.value();
        let mut out = vec![f64::NEG_INFINITY; n];
        let mut arg = vec![0usize; n];
        for i in 0..m {
            for j in 0..n {
                let x = v.at2(i, j);
                if x > out[j] {
                    out[j] = x;
                    arg[j] = i;
                }
            }
        }
        drop(v);
        let value = Tensor::new(vec![1, n], out).expect("max_pool shape");
        let parents: Vec<(Node, GradFn)> = vec![(
            self.clone(),
            Box::new(move |g, acc| {
                for j in 0..n {
                    acc.data_mut()[arg[j] * n + j] += g.data()[j];
                }
            }),
        )];
        Ok(Node::from_op(value, parents, "max_pool1d"))
    }

    /// Mean cross-entropy between logit rows and target class indices,
    /// computed in log-sum-exp form.
    pub fn cross_entropy(&self, targets: &[usize]) -> Result<Node> {
        require_2d(self, "cross_entropy logits")?;
        let (b, k) = (self.shape()[0], self.shape()[1]);
        if targets.len() != b {
            return Err(NumericsError::ShapeMismatch(format!(
                "cross_entropy {b} logit rows vs {} targets",
                targets.len()
            )));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= k) {
            return Err(NumericsError::OutOfRange(format!(
                "target class {bad} with {k} classes"
            )));
        }
        let v = self.value();
        let mut loss = 0.0;
        let mut probs = vec![0.0; b * k];
        for i in 0..b {
            let row = &v.data()[i * k..(i + 1) * k];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for j in 0..k {
                let e = (row[j] - max).exp();
                probs[i * k + j] = e;
                sum += e;
            }
            for j in 0..k {
                probs[i * k + j] /= sum;
            }
            let lse = max + sum.ln();
            loss += lse - row[targets[i]];
        }
        drop(v);
        loss /= b as f64;
        let probs = Tensor::new(vec![b, k], probs).expect("probs shape");
        let targets = targets.to_vec();
        let value = Tensor::scalar(loss);
        let parents: Vec<(Node, GradFn)> = vec![(
            self.clone(),
            Box::new(move |g, acc| {
                let go = g.scalar_value();
                for i in 0..b {
                    for j in 0..k {
                        let ind = if targets[i] == j { 1.0 } else { 0.0 };
                        acc.data_mut()[i * k + j] +=
                            go * (probs.data()[i * k + j] - ind) / b as f64;
                    }
                }
            }),
        )];
        Ok(Node::from_op(value, parents, "cross_entropy"))
    }

    /// Sum of all entries → scalar.
    pub fn sum(&self) -> Node {
        let total: f64 = self.value().data().iter().sum();
        let parents: Vec<(Node, GradFn)> = vec![(
            self.clone(),
            Box::new(|g, acc| {
                let gv = g.scalar_value();
                for a in acc.data_mut() {
                    *a += gv;
                }
            }),
        )];
        Node::from_op(Tensor::scalar(total), parents, "sum")
    }

    /// Look up rows of an embedding table; gradients scatter-add back.
    pub fn embed_rows(&self, ids: &[usize]) -> Result<Node> {
        require_2d(self, "embed_rows table")?;
        let (v_rows, d) = (self.shape()[0], self.shape()[1]);
        if let Some(&bad) = ids.iter().find(|&&i| i >= v_rows) {
            return Err(NumericsError::OutOfRange(format!(
                "embedding id {bad} with table of {v_rows} rows"
            )));
        }
        let table = self.value();
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            out.extend_from_slice(&table.data()[id * d..(id + 1) * d]);
        }
        drop(table);
        let value = Tensor::new(vec![ids.len(), d], out).expect("embed shape");
        let ids = ids.to_vec();
        let parents: Vec<(Node, GradFn)> = vec![(
            self.clone(),
            Box::new(move |g, acc| {
                for (i, &id) in ids.iter().enumerate() {
                    let grow = &g.data()[i * d..(i + 1) * d];
                    let arow = &mut acc.data_mut()[id * d..(id + 1) * d];
                    for (a, &gv) in arow.iter_mut().zip(grow.iter()) {
                        *a += gv;
                    }
                }
            }),
        )];
        Ok(Node::from_op(value, parents, "embed_rows"))
    }

    pub fn slice_cols(&self, start: usize, width: usize) -> Result<Node> {
        require_2d(self, "slice_cols")?;
        let (m, n) = (self.shape()[0], self.shape()[1]);
        if start + width > n {
            return Err(NumericsError::OutOfRange(format!(
                "slice_cols [{start}, {}) of {n} columns",
                start + width
            )));
        }
        let v = self.value();
        let mut out = Vec::with_capacity(m * width);
        for i in 0..m {
            out.extend_from_slice(&v.data()[i * n + start..i * n + start + width]);
        }
        drop(v);
        let value = Tensor::new(vec![m, width], out).expect("slice_cols shape");
        let parents: Vec<(Node, GradFn)> = vec![(
            self.clone(),
            Box::new(move |g, acc| {
                for i in 0..m {
                    for j in 0..width {
                        acc.data_mut()[i * n + start + j] += g.data()[i * width + j];
                    }
                }
            }),
        )];
        Ok(Node::from_op(value, parents, "slice_cols"))
    }

    pub fn slice_rows(&self, start: usize, count: usize) -> Result<Node> {
        require_2d(self, "slice_rows")?;
        let (m, n) = (self.shape()[0], self.shape()[1]);
        if start + count > m {
            return Err(NumericsError::OutOfRange(format!(
                "slice_rows [{start}, {}) of {m} rows",
                start + count
            )));
        }
        let v = self.value();
        let out = v.data()[start * n..(start + count) * n].to_vec();
        drop(v);
        let value = Tensor::new(vec![count, n], out).expect("slice_rows shape");
        let parents: Vec<(Node, GradFn)> = vec![(
            self.clone(),
            Box::new(move |g, acc| {
                for (a, &gv) in acc.data_mut()[start * n..(start + count) * n]
                    .iter_mut()
                    .zip(g.data())
                {
                    *a += gv;
                }
            }),
        )];
        Ok(Node::from_op(value, parents, "slice_rows"))
    }

    /// Gather arbitrary rows; duplicate indices accumulate on backward.
    pub fn gather_rows(&self, indices: &[usize]) -> Result<Node> {
        require_2d(self, "gather_rows")?;
        let (m, n) = (self.shape()[0], self.shape()[1]);
        if let Some(&bad) = indices.iter().find(|&&i| i >= m) {
            return Err(NumericsError::OutOfRange(format!(
                "gather_rows index {bad} of {m} rows"
            )));
        }
        let v = self.value();
        let mut out = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            out.extend_from_slice(&v.data()[i * n..(i + 1) * n]);
        }
        drop(v);
        let value = Tensor::new(vec![indices.len(), n], out).expect("gather shape");
        let indices = indices.to_vec();
        let parents: Vec<(Node, GradFn)> = vec![(
            self.clone(),
            Box::new(move |g, acc| {
                for (i, &idx) in indices.iter().enumerate() {
                    let grow = &g.data()[i * n..(i + 1) * n];
                    let arow = &mut acc.data_mut()[idx * n..(idx + 1) * n];
                    for (a, &gv) in arow.iter_mut().zip(grow.iter()) {
                        *a += gv;
                    }
                }
            }),
        )];
        Ok(Node::from_op(value, parents, "gather_rows"))
    }
}

/// Stack matrices with equal column counts into one tall matrix.
pub fn concat_rows(parts: &[Node]) -> Result<Node> {
    if parts.is_empty() {
        return Err(NumericsError::InvalidArgument("concat_rows of nothing".into()));
    }
    let n = parts[0].shape()[1];
    let mut data = Vec::new();
    let mut parents: Vec<(Node, GradFn)> = Vec::with_capacity(parts.len());
    let mut row_offset = 0usize;
    for part in parts {
        require_2d(part, "concat_rows part")?;
        let shape = part.shape();
        if shape[1] != n {
            return Err(NumericsError::ShapeMismatch(format!(
                "concat_rows widths {n} vs {}",
                shape[1]
            )));
        }
        data.extend_from_slice(part.value().data());
        let rows = shape[0];
        let start = row_offset;
        parents.push((
            part.clone(),
            Box::new(move |g, acc| {
                for (a, &gv) in acc
                    .data_mut()
                    .iter_mut()
                    .zip(&g.data()[start * n..(start + rows) * n])
                {
                    *a += gv;
                }
            }),
        ));
        row_offset += rows;
    }
    let value = Tensor::new(vec![row_offset, n], data).expect("concat_rows shape");
    Ok(Node::from_op(value, parents, "concat_rows"))
}

/// Concatenate matrices with equal row counts side by side.
pub fn concat_cols(parts: &[Node]) -> Result<Node> {
    if parts.is_empty() {
        return Err(NumericsError::InvalidArgument("concat_cols of nothing".into()));
    }
    let m = parts[0].shape()[0];
    let widths: Vec<usize> = parts.iter().map(|p| p.shape()[1]).collect();
    let total: usize = widths.iter().sum();
    for part in parts {
        require_2d(part, "concat_cols part")?;
        if part.shape()[0] != m {
            return Err(NumericsError::ShapeMismatch(format!(
                "concat_cols heights {m} vs {}",
                part.shape()[0]
            )));
        }
    }
    let mut data = vec![0.0; m * total];
    let mut col_offset = 0usize;
    let mut parents: Vec<(Node, GradFn)> = Vec::with_capacity(parts.len());
    for (part, &w) in parts.iter().zip(widths.iter()) {
        let v = part.value();
        for i in 0..m {
            data[i * total + col_offset..i * total + col_offset + w]
                .copy_from_slice(&v.data()[i * w..(i + 1) * w]);
        }
        drop(v);
        let start = col_offset;
        parents.push((
            part.clone(),
            Box::new(move |g, acc| {
                for i in 0..m {
                    for j in 0..w {
                        acc.data_mut()[i * w + j] += g.data()[i * total + start + j];
                    }
                }
            }),
        ));
        col_offset += w;
    }
    let value = Tensor::new(vec![m, total], data).expect("concat_cols shape");
    Ok(Node::from_op(value, parents, "concat_cols"))
}

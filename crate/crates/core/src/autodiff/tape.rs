//! Reverse-mode differentiation over a recorded operation sequence.
//!
//! A [`Tape`] owns every intermediate value of one forward pass. Operations
//! append nodes that reference earlier nodes by index, so creation order is
//! a topological order and the backward sweep is a single reverse walk.
//! Every forward output and every accumulated gradient is checked finite;
//! NaN or infinity anywhere is a hard error, not a warning.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::tensor::{check_finite_slice, widen, Real, Tensor};
use crate::error::{Error, Result};

static TAPE_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Handle to a value on a specific tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    id: usize,
    tape: u64,
}

/// Whether dropout masks inputs on this pass.
///
/// `Infer` is the deterministic identity used for plain prediction.
/// `MonteCarlo` applies the same masking as `Train` and exists so that
/// test-time dropout for uncertainty estimation is an explicit, auditable
/// mode rather than a silently reused training path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropoutMode {
    Train,
    Infer,
    MonteCarlo,
}

impl DropoutMode {
    fn masks(self) -> bool {
        matches!(self, DropoutMode::Train | DropoutMode::MonteCarlo)
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Matmul {
        a: usize,
        b: usize,
    },
    AddRow {
        a: usize,
        bias: usize,
    },
    Add {
        a: usize,
        b: usize,
    },
    Sub {
        a: usize,
        b: usize,
    },
    Mul {
        a: usize,
        b: usize,
    },
    Scale {
        a: usize,
        factor: Real,
    },
    AddConst {
        a: usize,
    },
    Relu {
        a: usize,
    },
    Sigmoid {
        a: usize,
    },
    Exp {
        a: usize,
    },
    Clamp {
        a: usize,
        lo: Real,
        hi: Real,
    },
    ConcatCols {
        a: usize,
        b: usize,
    },
    Dropout {
        a: usize,
        mask: Vec<Real>,
    },
    Softmax {
        a: usize,
    },
    SumAll {
        a: usize,
    },
    CrossEntropy {
        logits: usize,
        labels: Vec<usize>,
        probs: Vec<Real>,
    },
}

struct Node {
    op: Op,
    value: Tensor,
    needs_grad: bool,
}

/// Gradients produced by one backward sweep, indexed by tape position.
pub struct Grads {
    tape: u64,
    by_id: Vec<Option<Tensor>>,
}

impl Grads {
    /// Gradient of the loss w.r.t. `var`, if any path reached it.
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        if var.tape != self.tape {
            return None;
        }
        self.by_id.get(var.id).and_then(|g| g.as_ref())
    }

    /// Like [`get`](Self::get) but materializes the zero gradient of a
    /// disconnected tensor.
    pub fn get_or_zeros(&self, var: Var, shape: &[usize]) -> Tensor {
        match self.get(var) {
            Some(g) => g.clone(),
            None => Tensor::zeros(shape.to_vec()),
        }
    }
}

/// The computation record of one forward pass.
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: TAPE_COUNTER.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    /// Place a tensor on the tape. Gradient participation follows the
    /// tensor's `requires_grad` flag.
    pub fn leaf(&mut self, tensor: &Tensor) -> Var {
        self.push(Op::Leaf, tensor.clone(), tensor.requires_grad())
    }

    /// Place a tensor on the tape as a trainable parameter.
    pub fn param(&mut self, tensor: &Tensor) -> Var {
        self.push(Op::Leaf, tensor.clone().with_grad(), true)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.id].value
    }

    /// `[m, k] × [k, n] → [m, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_owned(&[a, b])?;
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::Dimension(format!("matmul {sa:?} × {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        matmul_nn(self.data(a), self.data(b), &mut out, m, k, n);
        self.emit(Op::Matmul { a: a.id, b: b.id }, vec![m, n], out, &[a, b])
    }

    /// Broadcast-add a bias row: `[m, n] + [n] → [m, n]`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        self.check_owned(&[a, bias])?;
        let (sa, sb) = (self.shape(a), self.shape(bias));
        if sa.len() != 2 || sb.len() != 1 || sa[1] != sb[0] {
            return Err(Error::Dimension(format!("add_row {sa:?} + {sb:?}")));
        }
        let (m, n) = (sa[0], sa[1]);
        let bias_data = self.data(bias);
        let mut out = Vec::with_capacity(m * n);
        for row in self.data(a).chunks_exact(n) {
            out.extend(row.iter().zip(bias_data).map(|(x, b)| x + b));
        }
        self.emit(
            Op::AddRow {
                a: a.id,
                bias: bias.id,
            },
            vec![m, n],
            out,
            &[a, bias],
        )
    }

    /// Dense (fully connected) layer: `input·weights + bias`, recorded for
    /// backward.
    pub fn dense(&mut self, input: Var, weights: Var, bias: Var) -> Result<Var> {
        let product = self.matmul(input, weights)?;
        self.add_row(product, bias)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "add", |x, y| x + y, |a, b| Op::Add { a, b })
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "sub", |x, y| x - y, |a, b| Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "mul", |x, y| x * y, |a, b| Op::Mul { a, b })
    }

    pub fn scale(&mut self, a: Var, factor: Real) -> Result<Var> {
        self.map(a, |x| x * factor, Op::Scale { a: a.id, factor })
    }

    pub fn add_const(&mut self, a: Var, offset: Real) -> Result<Var> {
        self.map(a, |x| x + offset, Op::AddConst { a: a.id })
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.map(a, |x| x.max(0.0), Op::Relu { a: a.id })
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.map(a, sigmoid, Op::Sigmoid { a: a.id })
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.map(a, Real::exp, Op::Exp { a: a.id })
    }

    pub fn clamp(&mut self, a: Var, lo: Real, hi: Real) -> Result<Var> {
        if lo > hi {
            return Err(Error::Parameter(format!("clamp bounds [{lo}, {hi}]")));
        }
        self.map(a, |x| x.clamp(lo, hi), Op::Clamp { a: a.id, lo, hi })
    }

    /// Column-wise concatenation: `[m, p] ⊕ [m, q] → [m, p + q]`.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_owned(&[a, b])?;
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[0] != sb[0] {
            return Err(Error::Dimension(format!("concat_cols {sa:?} ⊕ {sb:?}")));
        }
        let (m, p, q) = (sa[0], sa[1], sb[1]);
        let mut out = Vec::with_capacity(m * (p + q));
        for i in 0..m {
            out.extend_from_slice(&self.data(a)[i * p..(i + 1) * p]);
            out.extend_from_slice(&self.data(b)[i * q..(i + 1) * q]);
        }
        self.emit(
            Op::ConcatCols { a: a.id, b: b.id },
            vec![m, p + q],
            out,
            &[a, b],
        )
    }

    /// Inverted dropout: units are zeroed with probability `rate` and the
    /// survivors scaled by `1 / (1 − rate)`, so the expectation of the
    /// output equals the input and inference needs no rescaling.
    ///
    /// `Infer` mode (and rate 0) is the identity.
    pub fn dropout(
        &mut self,
        a: Var,
        rate: Real,
        mode: DropoutMode,
        rng: &mut ChaCha8Rng,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Parameter(format!(
                "dropout rate {rate} outside [0, 1)"
            )));
        }
        if !mode.masks() || rate == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 - rate;
        let inv_keep = 1.0 / keep;
        let threshold = widen(rate);
        let mask: Vec<Real> = (0..self.value(a).numel())
            .map(|_| {
                if rng.random::<f64>() < threshold {
                    0.0
                } else {
                    inv_keep
                }
            })
            .collect();
        self.dropout_with_mask(a, mask)
    }

    /// Dropout with a caller-supplied pre-scaled mask. Exposed so gradient
    /// checks can fix the mask while perturbing inputs.
    pub fn dropout_with_mask(&mut self, a: Var, mask: Vec<Real>) -> Result<Var> {
        self.check_owned(&[a])?;
        if mask.len() != self.value(a).numel() {
            return Err(Error::Dimension(format!(
                "dropout mask length {} vs input {}",
                mask.len(),
                self.value(a).numel()
            )));
        }
        let out: Vec<Real> = self.data(a).iter().zip(&mask).map(|(x, m)| x * m).collect();
        let shape = self.shape(a).to_vec();
        self.emit(Op::Dropout { a: a.id, mask }, shape, out, &[a])
    }

    /// Row-wise softmax over `[m, n]`, stabilized by per-row max
    /// subtraction so constant shifts of the logits cannot overflow.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        self.check_owned(&[a])?;
        let sa = self.shape(a);
        if sa.len() != 2 {
            return Err(Error::Dimension(format!(
                "softmax expects [batch, classes], got {sa:?}"
            )));
        }
        let (m, n) = (sa[0], sa[1]);
        let mut out = Vec::with_capacity(m * n);
        for row in self.data(a).chunks_exact(n) {
            softmax_row(row, &mut out);
        }
        self.emit(Op::Softmax { a: a.id }, vec![m, n], out, &[a])
    }

    /// Sum of every element, as a shape-`[]` scalar.
    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        self.check_owned(&[a])?;
        let total: Real = self.data(a).iter().sum();
        self.emit(Op::SumAll { a: a.id }, vec![], vec![total], &[a])
    }

    /// Mean of every element, as a shape-`[]` scalar.
    pub fn mean_all(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).numel();
        if n == 0 {
            return Err(Error::Usage("mean_all over empty tensor".into()));
        }
        let total = self.sum_all(a)?;
        self.scale(total, 1.0 / n as Real)
    }

    /// Mean cross-entropy of row-softmax(logits) against integer labels.
    /// Fused with log-softmax for numerical stability.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        self.check_owned(&[logits])?;
        let sl = self.shape(logits);
        if sl.len() != 2 || sl[0] != labels.len() {
            return Err(Error::Dimension(format!(
                "cross_entropy logits {sl:?} vs {} labels",
                labels.len()
            )));
        }
        let (m, n) = (sl[0], sl[1]);
        if let Some(&bad) = labels.iter().find(|&&l| l >= n) {
            return Err(Error::Parameter(format!(
                "label {bad} out of range for {n} classes"
            )));
        }
        let mut probs = Vec::with_capacity(m * n);
        let mut loss = 0.0;
        for (row, &label) in self.data(logits).chunks_exact(n).zip(labels) {
            let max = row.iter().cloned().fold(Real::NEG_INFINITY, Real::max);
            let log_sum: Real = row.iter().map(|x| (x - max).exp()).sum::<Real>().ln();
            loss -= row[label] - max - log_sum;
            softmax_row(row, &mut probs);
        }
        loss /= m as Real;
        self.emit(
            Op::CrossEntropy {
                logits: logits.id,
                labels: labels.to_vec(),
                probs,
            },
            vec![],
            vec![loss],
            &[logits],
        )
    }

    /// Reverse-mode sweep from a scalar loss. Consumes the tape; the record
    /// is cleared by construction once gradients are out.
    pub fn backward(self, loss: Var) -> Result<Grads> {
        self.check_owned(&[loss])?;
        let loss_value = &self.nodes[loss.id].value;
        if !loss_value.is_scalar() {
            return Err(Error::Usage(format!(
                "backward requires a scalar loss, got shape {:?}",
                loss_value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<Real>>> = vec![None; self.nodes.len()];
        grads[loss.id] = Some(vec![1.0]);

        for id in (0..=loss.id).rev() {
            if !self.nodes[id].needs_grad {
                continue;
            }
            let Some(gout) = grads[id].take() else {
                continue;
            };
            let put_back = matches!(self.nodes[id].op, Op::Leaf);
            self.propagate(id, &gout, &mut grads)?;
            if put_back {
                grads[id] = Some(gout);
            }
        }

        let by_id = grads
            .into_iter()
            .enumerate()
            .map(|(id, g)| {
                g.map(|data| {
                    let mut t = Tensor::zeros(self.nodes[id].value.shape().to_vec());
                    t.data_mut().copy_from_slice(&data);
                    t
                })
            })
            .collect();
        Ok(Grads {
            tape: self.id,
            by_id,
        })
    }

    fn propagate(&self, id: usize, gout: &[Real], grads: &mut [Option<Vec<Real>>]) -> Result<()> {
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::Matmul { a, b } => {
                let (m, k) = (self.dims(*a).0, self.dims(*a).1);
                let n = self.dims(*b).1;
                let mut da = vec![0.0; m * k];
                matmul_nt(gout, self.raw(*b), &mut da, m, n, k);
                self.accumulate(*a, &da, grads)?;
                let mut db = vec![0.0; k * n];
                matmul_tn(self.raw(*a), gout, &mut db, m, k, n);
                self.accumulate(*b, &db, grads)?;
            }
            Op::AddRow { a, bias } => {
                self.accumulate(*a, gout, grads)?;
                let n = self.dims(*a).1;
                let mut db = vec![0.0; n];
                for row in gout.chunks_exact(n) {
                    for (acc, g) in db.iter_mut().zip(row) {
                        *acc += g;
                    }
                }
                self.accumulate(*bias, &db, grads)?;
            }
            Op::Add { a, b } => {
                self.accumulate(*a, gout, grads)?;
                self.accumulate(*b, gout, grads)?;
            }
            Op::Sub { a, b } => {
                self.accumulate(*a, gout, grads)?;
                let neg: Vec<Real> = gout.iter().map(|g| -g).collect();
                self.accumulate(*b, &neg, grads)?;
            }
            Op::Mul { a, b } => {
                let da: Vec<Real> = gout.iter().zip(self.raw(*b)).map(|(g, y)| g * y).collect();
                self.accumulate(*a, &da, grads)?;
                let db: Vec<Real> = gout.iter().zip(self.raw(*a)).map(|(g, x)| g * x).collect();
                self.accumulate(*b, &db, grads)?;
            }
            Op::Scale { a, factor } => {
                let da: Vec<Real> = gout.iter().map(|g| g * factor).collect();
                self.accumulate(*a, &da, grads)?;
            }
            Op::AddConst { a } => {
                self.accumulate(*a, gout, grads)?;
            }
            Op::Relu { a } => {
                let da: Vec<Real> = gout
                    .iter()
                    .zip(self.raw(*a))
                    .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 })
                    .collect();
                self.accumulate(*a, &da, grads)?;
            }
            Op::Sigmoid { a } => {
                let da: Vec<Real> = gout
                    .iter()
                    .zip(self.nodes[id].value.data())
                    .map(|(g, y)| g * y * (1.0 - y))
                    .collect();
                self.accumulate(*a, &da, grads)?;
            }
            Op::Exp { a } => {
                let da: Vec<Real> = gout
                    .iter()
                    .zip(self.nodes[id].value.data())
                    .map(|(g, y)| g * y)
                    .collect();
                self.accumulate(*a, &da, grads)?;
            }
            Op::Clamp { a, lo, hi } => {
                let da: Vec<Real> = gout
                    .iter()
                    .zip(self.raw(*a))
                    .map(|(g, x)| if *x > *lo && *x < *hi { *g } else { 0.0 })
                    .collect();
                self.accumulate(*a, &da, grads)?;
            }
            Op::ConcatCols { a, b } => {
                let (m, p) = self.dims(*a);
                let q = self.dims(*b).1;
                let mut da = Vec::with_capacity(m * p);
                let mut db = Vec::with_capacity(m * q);
                for row in gout.chunks_exact(p + q) {
                    da.extend_from_slice(&row[..p]);
                    db.extend_from_slice(&row[p..]);
                }
                self.accumulate(*a, &da, grads)?;
                self.accumulate(*b, &db, grads)?;
            }
            Op::Dropout { a, mask } => {
                let da: Vec<Real> = gout.iter().zip(mask).map(|(g, m)| g * m).collect();
                self.accumulate(*a, &da, grads)?;
            }
            Op::Softmax { a } => {
                let n = self.dims(*a).1;
                let y = self.nodes[id].value.data();
                let mut da = Vec::with_capacity(y.len());
                for (grow, yrow) in gout.chunks_exact(n).zip(y.chunks_exact(n)) {
                    let dot: Real = grow.iter().zip(yrow).map(|(g, y)| g * y).sum();
                    da.extend(grow.iter().zip(yrow).map(|(g, y)| (g - dot) * y));
                }
                self.accumulate(*a, &da, grads)?;
            }
            Op::SumAll { a } => {
                let da = vec![gout[0]; self.raw(*a).len()];
                self.accumulate(*a, &da, grads)?;
            }
            Op::CrossEntropy {
                logits,
                labels,
                probs,
            } => {
                let n = self.dims(*logits).1;
                let batch = labels.len() as Real;
                let scale = gout[0] / batch;
                let mut da = probs.clone();
                for (i, &label) in labels.iter().enumerate() {
                    da[i * n + label] -= 1.0;
                }
                for v in &mut da {
                    *v *= scale;
                }
                self.accumulate(*logits, &da, grads)?;
            }
        }
        Ok(())
    }

    fn accumulate(&self, id: usize, grad: &[Real], grads: &mut [Option<Vec<Real>>]) -> Result<()> {
        if !self.nodes[id].needs_grad {
            return Ok(());
        }
        check_finite_slice(grad, "backward pass")?;
        match &mut grads[id] {
            Some(existing) => {
                for (acc, g) in existing.iter_mut().zip(grad) {
                    *acc += g;
                }
            }
            slot => *slot = Some(grad.to_vec()),
        }
        Ok(())
    }

    fn zip(
        &mut self,
        a: Var,
        b: Var,
        name: &str,
        f: impl Fn(Real, Real) -> Real,
        op: impl Fn(usize, usize) -> Op,
    ) -> Result<Var> {
        self.check_owned(&[a, b])?;
        if self.shape(a) != self.shape(b) {
            return Err(Error::Dimension(format!(
                "{name}: {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let out: Vec<Real> = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(x, y)| f(*x, *y))
            .collect();
        let shape = self.shape(a).to_vec();
        self.emit(op(a.id, b.id), shape, out, &[a, b])
    }

    fn map(&mut self, a: Var, f: impl Fn(Real) -> Real, op: Op) -> Result<Var> {
        self.check_owned(&[a])?;
        let out: Vec<Real> = self.data(a).iter().map(|x| f(*x)).collect();
        let shape = self.shape(a).to_vec();
        self.emit(op, shape, out, &[a])
    }

    fn emit(&mut self, op: Op, shape: Vec<usize>, data: Vec<Real>, inputs: &[Var]) -> Result<Var> {
        check_finite_slice(&data, "forward pass")?;
        let needs_grad = inputs.iter().any(|v| self.nodes[v.id].needs_grad);
        let mut value = Tensor::zeros(shape);
        value.data_mut().copy_from_slice(&data);
        Ok(self.push(op, value, needs_grad))
    }

    fn push(&mut self, op: Op, value: Tensor, needs_grad: bool) -> Var {
        let id = self.nodes.len();
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        Var { id, tape: self.id }
    }

    fn check_owned(&self, vars: &[Var]) -> Result<()> {
        for v in vars {
            if v.tape != self.id || v.id >= self.nodes.len() {
                return Err(Error::Usage("variable does not belong to this tape".into()));
            }
        }
        Ok(())
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.id].value.shape()
    }

    fn data(&self, v: Var) -> &[Real] {
        self.nodes[v.id].value.data()
    }

    fn raw(&self, id: usize) -> &[Real] {
        self.nodes[id].value.data()
    }

    fn dims(&self, id: usize) -> (usize, usize) {
        let s = self.nodes[id].value.shape();
        match s.len() {
            2 => (s[0], s[1]),
            1 => (1, s[0]),
            _ => (1, self.nodes[id].value.numel()),
        }
    }
}

pub(crate) fn sigmoid(x: Real) -> Real {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_row(row: &[Real], out: &mut Vec<Real>) {
    let max = row.iter().cloned().fold(Real::NEG_INFINITY, Real::max);
    let start = out.len();
    let mut sum = 0.0;
    for x in row {
        let e = (x - max).exp();
        sum += e;
        out.push(e);
    }
    for v in &mut out[start..] {
        *v /= sum;
    }
}

/// `C = A·B` with A `[m, k]`, B `[k, n]`.
fn matmul_nn(a: &[Real], b: &[Real], c: &mut [Real], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let c_row = &mut c[i * n..(i + 1) * n];
        for (l, &a_il) in a[i * k..(i + 1) * k].iter().enumerate() {
            let b_row = &b[l * n..(l + 1) * n];
            for (cv, bv) in c_row.iter_mut().zip(b_row) {
                *cv += a_il * bv;
            }
        }
    }
}

/// `C = A·Bᵀ` with A `[m, n]`, B `[k, n]`, C `[m, k]`.
fn matmul_nt(a: &[Real], b: &[Real], c: &mut [Real], m: usize, n: usize, k: usize) {
    for i in 0..m {
        let a_row = &a[i * n..(i + 1) * n];
        for j in 0..k {
            let b_row = &b[j * n..(j + 1) * n];
            c[i * k + j] = a_row.iter().zip(b_row).map(|(x, y)| x * y).sum();
        }
    }
}

/// `C = Aᵀ·B` with A `[m, k]`, B `[m, n]`, C `[k, n]`.
fn matmul_tn(a: &[Real], b: &[Real], c: &mut [Real], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let b_row = &b[i * n..(i + 1) * n];
        for (l, &a_il) in a[i * k..(i + 1) * k].iter().enumerate() {
            let c_row = &mut c[l * n..(l + 1) * n];
            for (cv, bv) in c_row.iter_mut().zip(b_row) {
                *cv += a_il * bv;
            }
        }
    }
}

//! Reverse-mode gradient tape over dense matrices.
//!
//! Forward calls push nodes onto the tape; [`Tape::backward`] walks the
//! nodes in reverse, applying each primitive's pullback. The primitive
//! set is exactly what the policy needs: affine maps, elementwise
//! nonlinearities, row softmax, masked log-softmax, batch
//! normalization (batch and running statistics), row gather/slice and
//! reductions. Gradients only flow into nodes reachable from trainable
//! leaves; everything else is skipped.

use crate::mat::{Mat, Scalar};

pub type NodeId = usize;

enum Op<T> {
    Leaf,
    /// a[r x k] * b[k x c]
    MatMul(NodeId, NodeId),
    /// a[r x k] * b[c x k]^T
    MatMulNT(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    /// a[r x c] + row[1 x c] broadcast over rows
    AddRow(NodeId, NodeId),
    Scale(NodeId, T),
    AddConst(NodeId, T),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Relu(NodeId),
    /// Row-wise softmax.
    SoftmaxRows(NodeId),
    /// Row vector log-softmax with blocked entries forced to -inf.
    MaskedLogSoftmax {
        src: NodeId,
        blocked: Vec<bool>,
    },
    MeanRows(NodeId),
    /// y = a[0][idx] as 1x1
    Pick {
        src: NodeId,
        idx: usize,
    },
    /// y = a[row] as 1xc
    GatherRow {
        src: NodeId,
        row: usize,
    },
    /// y = a[:, start..start+width]
    SliceCols {
        src: NodeId,
        start: usize,
    },
    ConcatCols(Vec<NodeId>),
    /// Batch statistics normalization over rows; saved stats reused by
    /// the pullback and harvested for running-statistics updates.
    BatchNormRows {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        mean: Vec<T>,
        inv_std: Vec<T>,
    },
    /// Normalization with fixed (running) statistics.
    NormAffineRows {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        mean: Vec<T>,
        inv_std: Vec<T>,
    },
}

struct Node<T> {
    value: Mat<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Batch statistics observed by one `batch_norm_rows` call, in call
/// order; the trainer folds these into running statistics.
#[derive(Debug, Clone)]
pub struct BnObservation<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
    pub rows: usize,
}

pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    bn_log: Vec<BnObservation<T>>,
}

/// Gradients of one backward pass, indexed by node id.
pub struct Grads<T> {
    grads: Vec<Option<Mat<T>>>,
}

impl<T: Scalar> Grads<T> {
    pub fn get(&self, id: NodeId) -> Option<&Mat<T>> {
        self.grads[id].as_ref()
    }
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            bn_log: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Mat<T> {
        &self.nodes[id].value
    }

    pub fn scalar_value(&self, id: NodeId) -> T {
        assert_eq!(self.nodes[id].value.shape(), (1, 1));
        self.nodes[id].value.get(0, 0)
    }

    /// Batch-norm statistics observed so far, in call order.
    pub fn bn_observations(&self) -> &[BnObservation<T>] {
        &self.bn_log
    }

    fn push(&mut self, value: Mat<T>, op: Op<T>, needs_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        self.nodes.len() - 1
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id].needs_grad
    }

    /// Trainable leaf: gradients will be produced for it.
    pub fn leaf(&mut self, value: Mat<T>) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    /// Frozen input: gradients never flow into it.
    pub fn constant(&mut self, value: Mat<T>) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.nodes[a].value.matmul(&self.nodes[b].value);
        let needs = self.needs(a) || self.needs(b);
        self.push(value, Op::MatMul(a, b), needs)
    }

    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.nodes[a].value.matmul_nt(&self.nodes[b].value);
        let needs = self.needs(a) || self.needs(b);
        self.push(value, Op::MatMulNT(a, b), needs)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.nodes[a].value.shape(), self.nodes[b].value.shape());
        let mut value = self.nodes[a].value.clone();
        value.add_assign(&self.nodes[b].value);
        let needs = self.needs(a) || self.needs(b);
        self.push(value, Op::Add(a, b), needs)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.nodes[a].value.shape(), self.nodes[b].value.shape());
        let b_val = &self.nodes[b].value;
        let value = Mat::from_vec(
            b_val.rows(),
            b_val.cols(),
            self.nodes[a]
                .value
                .data()
                .iter()
                .zip(b_val.data())
                .map(|(&x, &y)| x - y)
                .collect(),
        );
        let needs = self.needs(a) || self.needs(b);
        self.push(value, Op::Sub(a, b), needs)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.nodes[a].value.shape(), self.nodes[b].value.shape());
        let b_val = &self.nodes[b].value;
        let value = Mat::from_vec(
            b_val.rows(),
            b_val.cols(),
            self.nodes[a]
                .value
                .data()
                .iter()
                .zip(b_val.data())
                .map(|(&x, &y)| x * y)
                .collect(),
        );
        let needs = self.needs(a) || self.needs(b);
        self.push(value, Op::Mul(a, b), needs)
    }

    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        let row_val = &self.nodes[row].value;
        assert_eq!(row_val.rows(), 1);
        assert_eq!(self.nodes[a].value.cols(), row_val.cols());
        let mut value = self.nodes[a].value.clone();
        for i in 0..value.rows() {
            for (v, &r) in value.row_mut(i).iter_mut().zip(row_val.row(0)) {
                *v = *v + r;
            }
        }
        let needs = self.needs(a) || self.needs(row);
        self.push(value, Op::AddRow(a, row), needs)
    }

    pub fn scale(&mut self, a: NodeId, c: T) -> NodeId {
        let value = self.nodes[a].value.map(|x| x * c);
        let needs = self.needs(a);
        self.push(value, Op::Scale(a, c), needs)
    }

    pub fn add_const(&mut self, a: NodeId, c: T) -> NodeId {
        let value = self.nodes[a].value.map(|x| x + c);
        let needs = self.needs(a);
        self.push(value, Op::AddConst(a, c), needs)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let value = self.nodes[a].value.map(|x| x.tanh());
        let needs = self.needs(a);
        self.push(value, Op::Tanh(a), needs)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let one = T::one();
        let value = self.nodes[a].value.map(|x| one / (one + (-x).exp()));
        let needs = self.needs(a);
        self.push(value, Op::Sigmoid(a), needs)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let value = self.nodes[a].value.map(|x| x.max(T::zero()));
        let needs = self.needs(a);
        self.push(value, Op::Relu(a), needs)
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let src = &self.nodes[a].value;
        let mut value = src.clone();
        for i in 0..value.rows() {
            let row = value.row_mut(i);
            let mx = row.iter().cloned().fold(T::neg_infinity(), T::max);
            let mut z = T::zero();
            for v in row.iter_mut() {
                *v = (*v - mx).exp();
                z = z + *v;
            }
            for v in row.iter_mut() {
                *v = *v / z;
            }
        }
        let needs = self.needs(a);
        self.push(value, Op::SoftmaxRows(a), needs)
    }

    /// Log-softmax of a `1 x n` score row with `blocked` entries forced
    /// to probability zero. At least one entry must be free.
    pub fn masked_log_softmax(&mut self, a: NodeId, blocked: Vec<bool>) -> NodeId {
        let src = &self.nodes[a].value;
        assert_eq!(src.rows(), 1);
        assert_eq!(src.cols(), blocked.len());
        assert!(
            blocked.iter().any(|&b| !b),
            "all scores blocked: decoder contract violated"
        );
        let row = src.row(0);
        let mx = row
            .iter()
            .zip(&blocked)
            .filter(|(_, &b)| !b)
            .map(|(&v, _)| v)
            .fold(T::neg_infinity(), T::max);
        let mut z = T::zero();
        for (j, &v) in row.iter().enumerate() {
            if !blocked[j] {
                z = z + (v - mx).exp();
            }
        }
        let log_z = z.ln() + mx;
        let data: Vec<T> = row
            .iter()
            .enumerate()
            .map(|(j, &v)| {
                if blocked[j] {
                    T::neg_infinity()
                } else {
                    v - log_z
                }
            })
            .collect();
        let value = Mat::from_vec(1, blocked.len(), data);
        let needs = self.needs(a);
        self.push(value, Op::MaskedLogSoftmax { src: a, blocked }, needs)
    }

    pub fn mean_rows(&mut self, a: NodeId) -> NodeId {
        let src = &self.nodes[a].value;
        let (r, c) = src.shape();
        let inv = T::one() / T::from_f64(r as f64);
        let mut value = Mat::zeros(1, c);
        for i in 0..r {
            for (acc, &v) in value.row_mut(0).iter_mut().zip(src.row(i)) {
                *acc = *acc + v;
            }
        }
        for v in value.data_mut() {
            *v = *v * inv;
        }
        let needs = self.needs(a);
        self.push(value, Op::MeanRows(a), needs)
    }

    pub fn pick(&mut self, a: NodeId, idx: usize) -> NodeId {
        let src = &self.nodes[a].value;
        assert_eq!(src.rows(), 1);
        let value = Mat::from_vec(1, 1, vec![src.get(0, idx)]);
        let needs = self.needs(a);
        self.push(value, Op::Pick { src: a, idx }, needs)
    }

    pub fn gather_row(&mut self, a: NodeId, row: usize) -> NodeId {
        let src = &self.nodes[a].value;
        let value = Mat::from_vec(1, src.cols(), src.row(row).to_vec());
        let needs = self.needs(a);
        self.push(value, Op::GatherRow { src: a, row }, needs)
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, width: usize) -> NodeId {
        let src = &self.nodes[a].value;
        let (r, c) = src.shape();
        assert!(start + width <= c);
        let mut value = Mat::zeros(r, width);
        for i in 0..r {
            value
                .row_mut(i)
                .copy_from_slice(&src.row(i)[start..start + width]);
        }
        let needs = self.needs(a);
        self.push(value, Op::SliceCols { src: a, start }, needs)
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty());
        let r = self.nodes[parts[0]].value.rows();
        let total: usize = parts.iter().map(|&p| self.nodes[p].value.cols()).sum();
        let mut value = Mat::zeros(r, total);
        let mut offset = 0;
        for &p in parts {
            let src = &self.nodes[p].value;
            assert_eq!(src.rows(), r);
            for i in 0..r {
                value.row_mut(i)[offset..offset + src.cols()].copy_from_slice(src.row(i));
            }
            offset += src.cols();
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        self.push(value, Op::ConcatCols(parts.to_vec()), needs)
    }

    /// Normalization over the rows of `x` with batch statistics
    /// (biased variance), then a per-column affine with `gamma`/`beta`.
    /// The observed statistics are appended to the tape's log.
    pub fn batch_norm_rows(&mut self, x: NodeId, gamma: NodeId, beta: NodeId, eps: T) -> NodeId {
        let src = &self.nodes[x].value;
        let (r, c) = src.shape();
        let g = &self.nodes[gamma].value;
        let b = &self.nodes[beta].value;
        assert_eq!(g.shape(), (1, c));
        assert_eq!(b.shape(), (1, c));
        let inv_r = T::one() / T::from_f64(r as f64);

        let mut mean = vec![T::zero(); c];
        for i in 0..r {
            for (m, &v) in mean.iter_mut().zip(src.row(i)) {
                *m = *m + v;
            }
        }
        for m in &mut mean {
            *m = *m * inv_r;
        }
        let mut var = vec![T::zero(); c];
        for i in 0..r {
            for ((vv, &v), &m) in var.iter_mut().zip(src.row(i)).zip(&mean) {
                let d = v - m;
                *vv = *vv + d * d;
            }
        }
        for v in &mut var {
            *v = *v * inv_r;
        }
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();

        let mut value = Mat::zeros(r, c);
        for i in 0..r {
            for j in 0..c {
                let xhat = (src.get(i, j) - mean[j]) * inv_std[j];
                value.set(i, j, g.get(0, j) * xhat + b.get(0, j));
            }
        }
        self.bn_log.push(BnObservation {
            mean: mean.clone(),
            var,
            rows: r,
        });
        let needs = self.needs(x) || self.needs(gamma) || self.needs(beta);
        self.push(
            value,
            Op::BatchNormRows {
                x,
                gamma,
                beta,
                mean,
                inv_std,
            },
            needs,
        )
    }

    /// Normalization with fixed statistics (inference mode).
    pub fn norm_affine_rows(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        mean: Vec<T>,
        inv_std: Vec<T>,
    ) -> NodeId {
        let src = &self.nodes[x].value;
        let (r, c) = src.shape();
        assert_eq!(mean.len(), c);
        assert_eq!(inv_std.len(), c);
        let g = &self.nodes[gamma].value;
        let b = &self.nodes[beta].value;
        let mut value = Mat::zeros(r, c);
        for i in 0..r {
            for j in 0..c {
                let xhat = (src.get(i, j) - mean[j]) * inv_std[j];
                value.set(i, j, g.get(0, j) * xhat + b.get(0, j));
            }
        }
        let needs = self.needs(x) || self.needs(gamma) || self.needs(beta);
        self.push(
            value,
            Op::NormAffineRows {
                x,
                gamma,
                beta,
                mean,
                inv_std,
            },
            needs,
        )
    }

    /// Backward pass from a `1 x 1` node, seeding its gradient with
    /// `seed`. Returns per-node gradients for everything reachable from
    /// trainable leaves.
    pub fn backward(&self, root: NodeId, seed: T) -> Grads<T> {
        assert_eq!(
            self.nodes[root].value.shape(),
            (1, 1),
            "root must be scalar"
        );
        let mut grads: Vec<Option<Mat<T>>> = vec![None; self.nodes.len()];
        if !self.nodes[root].needs_grad {
            return Grads { grads };
        }
        grads[root] = Some(Mat::from_vec(1, 1, vec![seed]));

        for id in (0..=root).rev() {
            if grads[id].is_none() || !self.nodes[id].needs_grad {
                continue;
            }
            if matches!(self.nodes[id].op, Op::Leaf) {
                continue; // keep leaf gradients for the caller
            }
            let g = grads[id].take().unwrap();
            self.pullback(id, &g, &mut grads);
        }
        Grads { grads }
    }

    fn accumulate(&self, grads: &mut [Option<Mat<T>>], id: NodeId, delta: Mat<T>) {
        if !self.nodes[id].needs_grad {
            return;
        }
        match &mut grads[id] {
            Some(existing) => existing.add_assign(&delta),
            slot @ None => *slot = Some(delta),
        }
    }

    fn pullback(&self, id: NodeId, g: &Mat<T>, grads: &mut [Option<Mat<T>>]) {
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                // dA = G * B^T, dB = A^T * G
                if self.needs(*a) {
                    self.accumulate(grads, *a, g.matmul_nt(&self.nodes[*b].value));
                }
                if self.needs(*b) {
                    let a_val = &self.nodes[*a].value;
                    let (r, k) = a_val.shape();
                    let c = g.cols();
                    let mut db = Mat::zeros(k, c);
                    for i in 0..r {
                        for l in 0..k {
                            let av = a_val.get(i, l);
                            if av == T::zero() {
                                continue;
                            }
                            let grow = g.row(i);
                            let drow = db.row_mut(l);
                            for (d, &gv) in drow.iter_mut().zip(grow) {
                                *d = *d + av * gv;
                            }
                        }
                    }
                    self.accumulate(grads, *b, db);
                }
            }
            Op::MatMulNT(a, b) => {
                // C = A * B^T: dA = G * B, dB = G^T * A
                if self.needs(*a) {
                    self.accumulate(grads, *a, g.matmul(&self.nodes[*b].value));
                }
                if self.needs(*b) {
                    let a_val = &self.nodes[*a].value;
                    let (r, k) = a_val.shape();
                    let c = g.cols();
                    let mut db = Mat::zeros(c, k);
                    for i in 0..r {
                        let arow = a_val.row(i);
                        let grow = g.row(i);
                        for j in 0..c {
                            let gv = grow[j];
                            if gv == T::zero() {
                                continue;
                            }
                            let drow = db.row_mut(j);
                            for (d, &av) in drow.iter_mut().zip(arow) {
                                *d = *d + gv * av;
                            }
                        }
                    }
                    self.accumulate(grads, *b, db);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                if self.needs(*a) {
                    let bv = &self.nodes[*b].value;
                    let mut da = g.clone();
                    for (d, &b_) in da.data_mut().iter_mut().zip(bv.data()) {
                        *d = *d * b_;
                    }
                    self.accumulate(grads, *a, da);
                }
                if self.needs(*b) {
                    let av = &self.nodes[*a].value;
                    let mut db = g.clone();
                    for (d, &a_) in db.data_mut().iter_mut().zip(av.data()) {
                        *d = *d * a_;
                    }
                    self.accumulate(grads, *b, db);
                }
            }
            Op::AddRow(a, row) => {
                self.accumulate(grads, *a, g.clone());
                if self.needs(*row) {
                    let mut drow = Mat::zeros(1, g.cols());
                    for i in 0..g.rows() {
                        for (d, &gv) in drow.row_mut(0).iter_mut().zip(g.row(i)) {
                            *d = *d + gv;
                        }
                    }
                    self.accumulate(grads, *row, drow);
                }
            }
            Op::Scale(a, c) => {
                let c = *c;
                self.accumulate(grads, *a, g.map(|x| x * c));
            }
            Op::AddConst(a, _) => {
                self.accumulate(grads, *a, g.clone());
            }
            Op::Tanh(a) => {
                let y = &self.nodes[id].value;
                let mut da = g.clone();
                for (d, &yv) in da.data_mut().iter_mut().zip(y.data()) {
                    *d = *d * (T::one() - yv * yv);
                }
                self.accumulate(grads, *a, da);
            }
            Op::Sigmoid(a) => {
                let y = &self.nodes[id].value;
                let mut da = g.clone();
                for (d, &yv) in da.data_mut().iter_mut().zip(y.data()) {
                    *d = *d * yv * (T::one() - yv);
                }
                self.accumulate(grads, *a, da);
            }
            Op::Relu(a) => {
                let y = &self.nodes[id].value;
                let mut da = g.clone();
                for (d, &yv) in da.data_mut().iter_mut().zip(y.data()) {
                    if yv <= T::zero() {
                        *d = T::zero();
                    }
                }
                self.accumulate(grads, *a, da);
            }
            Op::SoftmaxRows(a) => {
                let y = &self.nodes[id].value;
                let (r, c) = y.shape();
                let mut da = Mat::zeros(r, c);
                for i in 0..r {
                    let dot = g
                        .row(i)
                        .iter()
                        .zip(y.row(i))
                        .fold(T::zero(), |acc, (&gv, &yv)| acc + gv * yv);
                    for j in 0..c {
                        da.set(i, j, y.get(i, j) * (g.get(i, j) - dot));
                    }
                }
                self.accumulate(grads, *a, da);
            }
            Op::MaskedLogSoftmax { src, blocked } => {
                // y_j = u_j - logsumexp(free u); dL/du_j = g_j - p_j * sum(free g)
                let y = &self.nodes[id].value;
                let c = y.cols();
                let gsum = (0..c)
                    .filter(|&j| !blocked[j])
                    .fold(T::zero(), |acc, j| acc + g.get(0, j));
                let mut da = Mat::zeros(1, c);
                for j in 0..c {
                    if blocked[j] {
                        continue;
                    }
                    let p = y.get(0, j).exp();
                    da.set(0, j, g.get(0, j) - p * gsum);
                }
                self.accumulate(grads, *src, da);
            }
            Op::MeanRows(a) => {
                let (r, c) = self.nodes[*a].value.shape();
                let inv = T::one() / T::from_f64(r as f64);
                let mut da = Mat::zeros(r, c);
                for i in 0..r {
                    for (d, &gv) in da.row_mut(i).iter_mut().zip(g.row(0)) {
                        *d = gv * inv;
                    }
                }
                self.accumulate(grads, *a, da);
            }
            Op::Pick { src, idx } => {
                let c = self.nodes[*src].value.cols();
                let mut da = Mat::zeros(1, c);
                da.set(0, *idx, g.get(0, 0));
                self.accumulate(grads, *src, da);
            }
            Op::GatherRow { src, row } => {
                let (r, c) = self.nodes[*src].value.shape();
                let mut da = Mat::zeros(r, c);
                da.row_mut(*row).copy_from_slice(g.row(0));
                self.accumulate(grads, *src, da);
            }
            Op::SliceCols { src, start } => {
                let (r, c) = self.nodes[*src].value.shape();
                let mut da = Mat::zeros(r, c);
                for i in 0..r {
                    da.row_mut(i)[*start..*start + g.cols()].copy_from_slice(g.row(i));
                }
                self.accumulate(grads, *src, da);
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let w = self.nodes[p].value.cols();
                    if self.needs(p) {
                        let r = g.rows();
                        let mut dp = Mat::zeros(r, w);
                        for i in 0..r {
                            dp.row_mut(i).copy_from_slice(&g.row(i)[offset..offset + w]);
                        }
                        self.accumulate(grads, p, dp);
                    }
                    offset += w;
                }
            }
            Op::BatchNormRows {
                x,
                gamma,
                beta,
                mean,
                inv_std,
            } => {
                let xv = &self.nodes[*x].value;
                let gv = &self.nodes[*gamma].value;
                let (r, c) = xv.shape();
                let inv_r = T::one() / T::from_f64(r as f64);

                if self.needs(*beta) {
                    let mut db = Mat::zeros(1, c);
                    for i in 0..r {
                        for (d, &gg) in db.row_mut(0).iter_mut().zip(g.row(i)) {
                            *d = *d + gg;
                        }
                    }
                    self.accumulate(grads, *beta, db);
                }
                if self.needs(*gamma) {
                    let mut dg = Mat::zeros(1, c);
                    for i in 0..r {
                        for j in 0..c {
                            let xhat = (xv.get(i, j) - mean[j]) * inv_std[j];
                            dg.set(0, j, dg.get(0, j) + g.get(i, j) * xhat);
                        }
                    }
                    self.accumulate(grads, *gamma, dg);
                }
                if self.needs(*x) {
                    // dxhat = g * gamma; dx via the standard batch-norm pullback.
                    let mut sum_dxh = vec![T::zero(); c];
                    let mut sum_dxh_xhat = vec![T::zero(); c];
                    for i in 0..r {
                        for j in 0..c {
                            let dxh = g.get(i, j) * gv.get(0, j);
                            let xhat = (xv.get(i, j) - mean[j]) * inv_std[j];
                            sum_dxh[j] = sum_dxh[j] + dxh;
                            sum_dxh_xhat[j] = sum_dxh_xhat[j] + dxh * xhat;
                        }
                    }
                    let mut dx = Mat::zeros(r, c);
                    for i in 0..r {
                        for j in 0..c {
                            let dxh = g.get(i, j) * gv.get(0, j);
                            let xhat = (xv.get(i, j) - mean[j]) * inv_std[j];
                            let val = inv_std[j]
                                * (dxh - inv_r * sum_dxh[j] - xhat * inv_r * sum_dxh_xhat[j]);
                            dx.set(i, j, val);
                        }
                    }
                    self.accumulate(grads, *x, dx);
                }
            }
            Op::NormAffineRows {
                x,
                gamma,
                beta,
                mean,
                inv_std,
            } => {
                let xv = &self.nodes[*x].value;
                let gv = &self.nodes[*gamma].value;
                let (r, c) = xv.shape();
                if self.needs(*beta) {
                    let mut db = Mat::zeros(1, c);
                    for i in 0..r {
                        for (d, &gg) in db.row_mut(0).iter_mut().zip(g.row(i)) {
                            *d = *d + gg;
                        }
                    }
                    self.accumulate(grads, *beta, db);
                }
                if self.needs(*gamma) {
                    let mut dg = Mat::zeros(1, c);
                    for i in 0..r {
                        for j in 0..c {
                            let xhat = (xv.get(i, j) - mean[j]) * inv_std[j];
                            dg.set(0, j, dg.get(0, j) + g.get(i, j) * xhat);
                        }
                    }
                    self.accumulate(grads, *gamma, dg);
                }
                if self.needs(*x) {
                    let mut dx = Mat::zeros(r, c);
                    for i in 0..r {
                        for j in 0..c {
                            dx.set(i, j, g.get(i, j) * gv.get(0, j) * inv_std[j]);
                        }
                    }
                    self.accumulate(grads, *x, dx);
                }
            }
        }
    }
}

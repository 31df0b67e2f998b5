use super::tensor::{axpy, dot, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub usize);

struct Node {
    value: Tensor,
    op: Op,
}

enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    OneMinus(NodeId),
    Scale(NodeId, f64),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    /// `W x + b` for a vector `x`.
    Affine {
        x: NodeId,
        w: NodeId,
        b: NodeId,
    },
    /// `W1 x1 + W2 x2 + b`; fuses the two matrix-vector products of a
    /// recurrent gate into one node.
    Affine2 {
        w1: NodeId,
        x1: NodeId,
        w2: NodeId,
        x2: NodeId,
        b: NodeId,
    },
    /// `M x`: every row of `M` dotted with `x`.
    MatVec {
        m: NodeId,
        x: NodeId,
    },
    /// `vᵀ M`: weighted sum of the rows of `M`.
    VecMat {
        v: NodeId,
        m: NodeId,
    },
    /// Row-wise affine map: `[n,k] -> [n,m]` with `y_i = W x_i + b`.
    LinearRows {
        x: NodeId,
        w: NodeId,
        b: NodeId,
    },
    /// `M + v` broadcast over rows.
    AddRowBroadcast {
        m: NodeId,
        v: NodeId,
    },
    /// Gather rows of an embedding table: `[n, dim]`.
    EmbedRows {
        table: NodeId,
        ids: Vec<usize>,
    },
    /// Same-padded 1-D convolution over rows of `[n, in_ch]`.
    Conv1d {
        x: NodeId,
        w: NodeId,
        b: NodeId,
        width: usize,
    },
    /// Channel-wise max over contiguous row segments of length `stride`.
    /// `argmax` holds, per output element, the flat input index that won
    /// (first maximum on ties).
    MaxPool {
        x: NodeId,
        stride: usize,
        argmax: Vec<usize>,
    },
    ConcatVec(NodeId, NodeId),
    ConcatCols(NodeId, NodeId),
    StackRows(Vec<NodeId>),
    Row {
        m: NodeId,
        row: usize,
    },
    Softmax(NodeId),
    /// `-ln p[target]` of a probability vector.
    CrossEntropy {
        p: NodeId,
        target: usize,
    },
    Sum(NodeId),
    AddN(Vec<NodeId>),
}

/// Operation recorder for reverse-mode differentiation.
///
/// Every method computes its result eagerly and records the operation so
/// [`Tape::backward`] can replay the chain rule in reverse. Nodes only ever
/// reference earlier nodes, so the tape is topologically ordered by
/// construction and a single reverse sweep visits each node exactly once.
///
/// Shape mismatches are contract violations and panic.
pub struct Tape {
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { value, op });
        id
    }

    /// Record an input or parameter.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "add: shape mismatch");
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x + y).collect();
        let out = Tensor::from_vec(va.shape(), data);
        self.push(out, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "sub: shape mismatch");
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x - y).collect();
        let out = Tensor::from_vec(va.shape(), data);
        self.push(out, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "mul: shape mismatch");
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect();
        let out = Tensor::from_vec(va.shape(), data);
        self.push(out, Op::Mul(a, b))
    }

    /// `1 - x`, elementwise.
    pub fn one_minus(&mut self, a: NodeId) -> NodeId {
        let va = self.value(a);
        let data = va.data().iter().map(|x| 1.0 - x).collect();
        let out = Tensor::from_vec(va.shape(), data);
        self.push(out, Op::OneMinus(a))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let va = self.value(a);
        let data = va.data().iter().map(|x| c * x).collect();
        let out = Tensor::from_vec(va.shape(), data);
        self.push(out, Op::Scale(a, c))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let va = self.value(a);
        let data = va.data().iter().map(|x| sigmoid(*x)).collect();
        let out = Tensor::from_vec(va.shape(), data);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let va = self.value(a);
        let data = va.data().iter().map(|x| x.tanh()).collect();
        let out = Tensor::from_vec(va.shape(), data);
        self.push(out, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let va = self.value(a);
        let data = va.data().iter().map(|x| x.max(0.0)).collect();
        let out = Tensor::from_vec(va.shape(), data);
        self.push(out, Op::Relu(a))
    }

    /// `W x + b` for vector `x`.
    pub fn affine(&mut self, x: NodeId, w: NodeId, b: NodeId) -> NodeId {
        let (vx, vw, vb) = (self.value(x), self.value(w), self.value(b));
        let (m, n) = (vw.rows(), vw.cols());
        assert_eq!(vx.shape(), [n], "affine: input dim mismatch");
        assert_eq!(vb.shape(), [m], "affine: bias dim mismatch");
        let mut data = vb.data().to_vec();
        for r in 0..m {
            data[r] += dot(vw.row(r), vx.data());
        }
        self.push(Tensor::vector(data), Op::Affine { x, w, b })
    }

    /// `W1 x1 + W2 x2 + b`.
    pub fn affine2(&mut self, w1: NodeId, x1: NodeId, w2: NodeId, x2: NodeId, b: NodeId) -> NodeId {
        let m = self.value(w1).rows();
        assert_eq!(self.value(w2).rows(), m, "affine2: row mismatch");
        assert_eq!(self.value(w1).cols(), self.value(x1).len(), "affine2: x1 dim");
        assert_eq!(self.value(w2).cols(), self.value(x2).len(), "affine2: x2 dim");
        assert_eq!(self.value(b).shape(), [m], "affine2: bias dim");
        let mut data = self.value(b).data().to_vec();
        for r in 0..m {
            data[r] += dot(self.value(w1).row(r), self.value(x1).data())
                + dot(self.value(w2).row(r), self.value(x2).data());
        }
        self.push(Tensor::vector(data), Op::Affine2 { w1, x1, w2, x2, b })
    }

    /// `M x` with `M` of shape `[r, c]`.
    pub fn matvec(&mut self, m: NodeId, x: NodeId) -> NodeId {
        let (vm, vx) = (self.value(m), self.value(x));
        assert_eq!(vm.cols(), vx.len(), "matvec: dim mismatch");
        let data = (0..vm.rows()).map(|r| dot(vm.row(r), vx.data())).collect();
        self.push(Tensor::vector(data), Op::MatVec { m, x })
    }

    /// `vᵀ M`: weighted sum of the rows of `M`.
    pub fn vecmat(&mut self, v: NodeId, m: NodeId) -> NodeId {
        let (vv, vm) = (self.value(v), self.value(m));
        assert_eq!(vv.len(), vm.rows(), "vecmat: dim mismatch");
        let mut data = vec![0.0; vm.cols()];
        for r in 0..vm.rows() {
            axpy(&mut data, vv.data()[r], vm.row(r));
        }
        self.push(Tensor::vector(data), Op::VecMat { v, m })
    }

    /// Row-wise affine map `[n,k] -> [n,m]`.
    pub fn linear_rows(&mut self, x: NodeId, w: NodeId, b: NodeId) -> NodeId {
        let (vx, vw, vb) = (self.value(x), self.value(w), self.value(b));
        let (n, k) = (vx.rows(), vx.cols());
        let (m, kw) = (vw.rows(), vw.cols());
        assert_eq!(k, kw, "linear_rows: input dim mismatch");
        assert_eq!(vb.shape(), [m], "linear_rows: bias dim mismatch");
        let mut data = vec![0.0; n * m];
        for i in 0..n {
            let xi = vx.row(i);
            let out = &mut data[i * m..(i + 1) * m];
            out.copy_from_slice(vb.data());
            for r in 0..m {
                out[r] += dot(vw.row(r), xi);
            }
        }
        self.push(Tensor::matrix(n, m, data), Op::LinearRows { x, w, b })
    }

    /// `M + v` broadcast over rows.
    pub fn add_row_broadcast(&mut self, m: NodeId, v: NodeId) -> NodeId {
        let (vm, vv) = (self.value(m), self.value(v));
        assert_eq!(vm.cols(), vv.len(), "add_row_broadcast: dim mismatch");
        let (n, c) = (vm.rows(), vm.cols());
        let mut data = vm.data().to_vec();
        for i in 0..n {
            for (j, b) in vv.data().iter().enumerate() {
                data[i * c + j] += b;
            }
        }
        self.push(Tensor::matrix(n, c, data), Op::AddRowBroadcast { m, v })
    }

    /// Gather rows `ids` of an embedding table.
    pub fn embed_rows(&mut self, table: NodeId, ids: &[usize]) -> NodeId {
        let vt = self.value(table);
        let d = vt.cols();
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            assert!(id < vt.rows(), "embed_rows: id {} out of range", id);
            data.extend_from_slice(vt.row(id));
        }
        self.push(
            Tensor::matrix(ids.len(), d, data),
            Op::EmbedRows {
                table,
                ids: ids.to_vec(),
            },
        )
    }

    /// Same-padded 1-D convolution. `x` is `[n, in_ch]`, `w` is
    /// `[out_ch, width * in_ch]` (taps ordered window-position-major), `b`
    /// is `[out_ch]`; the result is `[n, out_ch]`.
    pub fn conv1d(&mut self, x: NodeId, w: NodeId, b: NodeId, width: usize) -> NodeId {
        assert!(width >= 1, "conv1d: width must be at least 1");
        let (vx, vw, vb) = (self.value(x), self.value(w), self.value(b));
        let (n, in_ch) = (vx.rows(), vx.cols());
        let out_ch = vw.rows();
        assert_eq!(vw.cols(), width * in_ch, "conv1d: filter dim mismatch");
        assert_eq!(vb.shape(), [out_ch], "conv1d: bias dim mismatch");
        let left = (width - 1) / 2;
        let mut data = vec![0.0; n * out_ch];
        for t in 0..n {
            let out = &mut data[t * out_ch..(t + 1) * out_ch];
            out.copy_from_slice(vb.data());
            for j in 0..width {
                let src = t as isize + j as isize - left as isize;
                if src < 0 || src >= n as isize {
                    continue;
                }
                let xrow = vx.row(src as usize);
                for (o, slot) in out.iter_mut().enumerate() {
                    *slot += dot(&vw.row(o)[j * in_ch..(j + 1) * in_ch], xrow);
                }
            }
        }
        self.push(Tensor::matrix(n, out_ch, data), Op::Conv1d { x, w, b, width })
    }

    /// Channel-wise max over row segments `[t*stride, (t+1)*stride)`.
    /// Gradient routes to the first maximal position of each segment.
    pub fn segment_maxpool(&mut self, x: NodeId, stride: usize) -> NodeId {
        assert!(stride >= 1, "segment_maxpool: stride must be at least 1");
        let vx = self.value(x);
        let (n, ch) = (vx.rows(), vx.cols());
        let n_out = n.div_ceil(stride);
        let mut data = vec![0.0; n_out * ch];
        let mut argmax = vec![0; n_out * ch];
        for t in 0..n_out {
            let lo = t * stride;
            let hi = ((t + 1) * stride).min(n);
            for c in 0..ch {
                let mut best = f64::NEG_INFINITY;
                let mut best_at = lo * ch + c;
                for r in lo..hi {
                    let v = vx.data()[r * ch + c];
                    if v > best {
                        best = v;
                        best_at = r * ch + c;
                    }
                }
                data[t * ch + c] = best;
                argmax[t * ch + c] = best_at;
            }
        }
        self.push(
            Tensor::matrix(n_out, ch, data),
            Op::MaxPool { x, stride, argmax },
        )
    }

    pub fn concat_vec(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let mut data = self.value(a).data().to_vec();
        data.extend_from_slice(self.value(b).data());
        self.push(Tensor::vector(data), Op::ConcatVec(a, b))
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.rows(), vb.rows(), "concat_cols: row mismatch");
        let (n, ca, cb) = (va.rows(), va.cols(), vb.cols());
        let mut data = Vec::with_capacity(n * (ca + cb));
        for i in 0..n {
            data.extend_from_slice(va.row(i));
            data.extend_from_slice(vb.row(i));
        }
        self.push(Tensor::matrix(n, ca + cb, data), Op::ConcatCols(a, b))
    }

    /// Stack equal-length vectors into a matrix, one per row.
    pub fn stack_rows(&mut self, rows: &[NodeId]) -> NodeId {
        assert!(!rows.is_empty(), "stack_rows: no rows");
        let d = self.value(rows[0]).len();
        let mut data = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            assert_eq!(self.value(r).len(), d, "stack_rows: length mismatch");
            data.extend_from_slice(self.value(r).data());
        }
        self.push(Tensor::matrix(rows.len(), d, data), Op::StackRows(rows.to_vec()))
    }

    /// Extract one row of a matrix as a vector.
    pub fn row(&mut self, m: NodeId, row: usize) -> NodeId {
        let vm = self.value(m);
        assert!(row < vm.rows(), "row: index out of range");
        let data = vm.row(row).to_vec();
        self.push(Tensor::vector(data), Op::Row { m, row })
    }

    /// Numerically stable softmax of a vector.
    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        let va = self.value(a);
        assert_eq!(va.rank(), 1, "softmax: expects a vector");
        assert!(va.all_finite(), "softmax: non-finite input");
        let max = va.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut data: Vec<f64> = va.data().iter().map(|x| (x - max).exp()).collect();
        let sum: f64 = data.iter().sum();
        for v in &mut data {
            *v /= sum;
        }
        self.push(Tensor::vector(data), Op::Softmax(a))
    }

    /// `-ln p[target]` of a probability vector.
    pub fn cross_entropy(&mut self, p: NodeId, target: usize) -> NodeId {
        let vp = self.value(p);
        assert!(target < vp.len(), "cross_entropy: target out of range");
        let loss = -vp.data()[target].ln();
        self.push(Tensor::scalar(loss), Op::CrossEntropy { p, target })
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let total = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(total), Op::Sum(a))
    }

    /// Sum of same-shaped nodes.
    pub fn add_n(&mut self, terms: &[NodeId]) -> NodeId {
        assert!(!terms.is_empty(), "add_n: no terms");
        let shape = self.value(terms[0]).shape().to_vec();
        let mut data = vec![0.0; self.value(terms[0]).len()];
        for &t in terms {
            assert_eq!(self.value(t).shape(), shape, "add_n: shape mismatch");
            for (acc, v) in data.iter_mut().zip(self.value(t).data()) {
                *acc += v;
            }
        }
        self.push(Tensor::from_vec(&shape, data), Op::AddN(terms.to_vec()))
    }

    /// Reverse sweep from a scalar `loss`, returning one gradient tensor per
    /// node (same indexing as the tape). Deterministic for a fixed graph.
    pub fn backward(&self, loss: NodeId) -> Vec<Tensor> {
        assert!(
            self.value(loss).is_scalar(),
            "backward: loss must be a scalar"
        );
        let mut grads: Vec<Tensor> = self
            .nodes
            .iter()
            .map(|n| Tensor::zeros(n.value.shape()))
            .collect();
        grads[loss.0].data_mut()[0] = 1.0;

        for i in (0..self.nodes.len()).rev() {
            // The tape is topologically ordered: parents of node i always
            // sit strictly before i.
            let (head, tail) = grads.split_at_mut(i);
            let g = &tail[0];
            if g.data().iter().all(|v| *v == 0.0) {
                continue;
            }
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    add_assign(&mut head[a.0], g.data());
                    add_assign(&mut head[b.0], g.data());
                }
                Op::Sub(a, b) => {
                    add_assign(&mut head[a.0], g.data());
                    sub_assign(&mut head[b.0], g.data());
                }
                Op::Mul(a, b) => {
                    if a == b {
                        let va = self.value(*a).data().to_vec();
                        let da = head[a.0].data_mut();
                        for j in 0..da.len() {
                            da[j] += 2.0 * g.data()[j] * va[j];
                        }
                    } else {
                        let (va, vb) = (self.value(*a), self.value(*b));
                        {
                            let da = head[a.0].data_mut();
                            for j in 0..da.len() {
                                da[j] += g.data()[j] * vb.data()[j];
                            }
                        }
                        let db = head[b.0].data_mut();
                        for j in 0..db.len() {
                            db[j] += g.data()[j] * va.data()[j];
                        }
                    }
                }
                Op::OneMinus(a) => sub_assign(&mut head[a.0], g.data()),
                Op::Scale(a, c) => {
                    let da = head[a.0].data_mut();
                    for j in 0..da.len() {
                        da[j] += c * g.data()[j];
                    }
                }
                Op::Sigmoid(a) => {
                    let y = node.value.data();
                    let da = head[a.0].data_mut();
                    for j in 0..da.len() {
                        da[j] += g.data()[j] * y[j] * (1.0 - y[j]);
                    }
                }
                Op::Tanh(a) => {
                    let y = node.value.data();
                    let da = head[a.0].data_mut();
                    for j in 0..da.len() {
                        da[j] += g.data()[j] * (1.0 - y[j] * y[j]);
                    }
                }
                Op::Relu(a) => {
                    let y = node.value.data();
                    let da = head[a.0].data_mut();
                    for j in 0..da.len() {
                        if y[j] > 0.0 {
                            da[j] += g.data()[j];
                        }
                    }
                }
                Op::Affine { x, w, b } => {
                    let vx = self.value(*x);
                    let vw = self.value(*w);
                    {
                        let dw = head[w.0].data_mut();
                        let cols = vx.len();
                        for r in 0..vw.rows() {
                            axpy(&mut dw[r * cols..(r + 1) * cols], g.data()[r], vx.data());
                        }
                    }
                    {
                        let dx = head[x.0].data_mut();
                        for r in 0..vw.rows() {
                            axpy(dx, g.data()[r], vw.row(r));
                        }
                    }
                    add_assign(&mut head[b.0], g.data());
                }
                Op::Affine2 { w1, x1, w2, x2, b } => {
                    for (w, x) in [(w1, x1), (w2, x2)] {
                        let vx = self.value(*x);
                        let vw = self.value(*w);
                        {
                            let dw = head[w.0].data_mut();
                            let cols = vx.len();
                            for r in 0..vw.rows() {
                                axpy(&mut dw[r * cols..(r + 1) * cols], g.data()[r], vx.data());
                            }
                        }
                        let dx = head[x.0].data_mut();
                        for r in 0..vw.rows() {
                            axpy(dx, g.data()[r], vw.row(r));
                        }
                    }
                    add_assign(&mut head[b.0], g.data());
                }
                Op::MatVec { m, x } => {
                    let vx = self.value(*x);
                    let vm = self.value(*m);
                    {
                        let dm = head[m.0].data_mut();
                        let cols = vx.len();
                        for r in 0..vm.rows() {
                            axpy(&mut dm[r * cols..(r + 1) * cols], g.data()[r], vx.data());
                        }
                    }
                    let dx = head[x.0].data_mut();
                    for r in 0..vm.rows() {
                        axpy(dx, g.data()[r], vm.row(r));
                    }
                }
                Op::VecMat { v, m } => {
                    let vv = self.value(*v);
                    let vm = self.value(*m);
                    {
                        let dv = head[v.0].data_mut();
                        for r in 0..vm.rows() {
                            dv[r] += dot(vm.row(r), g.data());
                        }
                    }
                    let dm = head[m.0].data_mut();
                    let cols = vm.cols();
                    for r in 0..vm.rows() {
                        axpy(&mut dm[r * cols..(r + 1) * cols], vv.data()[r], g.data());
                    }
                }
                Op::LinearRows { x, w, b } => {
                    let vx = self.value(*x);
                    let vw = self.value(*w);
                    let (n, k) = (vx.rows(), vx.cols());
                    let m = vw.rows();
                    {
                        let dw = head[w.0].data_mut();
                        for i in 0..n {
                            let gi = &g.data()[i * m..(i + 1) * m];
                            let xi = vx.row(i);
                            for r in 0..m {
                                axpy(&mut dw[r * k..(r + 1) * k], gi[r], xi);
                            }
                        }
                    }
                    {
                        let dx = head[x.0].data_mut();
                        for i in 0..n {
                            let gi = &g.data()[i * m..(i + 1) * m];
                            let dxi = &mut dx[i * k..(i + 1) * k];
                            for r in 0..m {
                                axpy(dxi, gi[r], vw.row(r));
                            }
                        }
                    }
                    let db = head[b.0].data_mut();
                    for i in 0..n {
                        add_slice(db, &g.data()[i * m..(i + 1) * m]);
                    }
                }
                Op::AddRowBroadcast { m, v } => {
                    let c = self.value(*v).len();
                    let n = self.value(*m).rows();
                    add_assign(&mut head[m.0], g.data());
                    let dv = head[v.0].data_mut();
                    for i in 0..n {
                        add_slice(dv, &g.data()[i * c..(i + 1) * c]);
                    }
                }
                Op::EmbedRows { table, ids } => {
                    let d = self.value(*table).cols();
                    let dt = head[table.0].data_mut();
                    for (i, &id) in ids.iter().enumerate() {
                        add_slice(&mut dt[id * d..(id + 1) * d], &g.data()[i * d..(i + 1) * d]);
                    }
                }
                Op::Conv1d { x, w, b, width } => {
                    let vx = self.value(*x);
                    let vw = self.value(*w);
                    let (n, in_ch) = (vx.rows(), vx.cols());
                    let out_ch = vw.rows();
                    let left = (width - 1) / 2;
                    {
                        let dw = head[w.0].data_mut();
                        for t in 0..n {
                            let gt = &g.data()[t * out_ch..(t + 1) * out_ch];
                            for j in 0..*width {
                                let src = t as isize + j as isize - left as isize;
                                if src < 0 || src >= n as isize {
                                    continue;
                                }
                                let xrow = vx.row(src as usize);
                                for o in 0..out_ch {
                                    let base = o * *width * in_ch + j * in_ch;
                                    axpy(&mut dw[base..base + in_ch], gt[o], xrow);
                                }
                            }
                        }
                    }
                    {
                        let dx = head[x.0].data_mut();
                        for t in 0..n {
                            let gt = &g.data()[t * out_ch..(t + 1) * out_ch];
                            for j in 0..*width {
                                let src = t as isize + j as isize - left as isize;
                                if src < 0 || src >= n as isize {
                                    continue;
                                }
                                let drow = &mut dx[src as usize * in_ch..(src as usize + 1) * in_ch];
                                for o in 0..out_ch {
                                    axpy(drow, gt[o], &vw.row(o)[j * in_ch..(j + 1) * in_ch]);
                                }
                            }
                        }
                    }
                    let db = head[b.0].data_mut();
                    for t in 0..n {
                        add_slice(db, &g.data()[t * out_ch..(t + 1) * out_ch]);
                    }
                }
                Op::MaxPool { x, argmax, .. } => {
                    let dx = head[x.0].data_mut();
                    for (k, &src) in argmax.iter().enumerate() {
                        dx[src] += g.data()[k];
                    }
                }
                Op::ConcatVec(a, b) => {
                    let la = self.value(*a).len();
                    add_assign(&mut head[a.0], &g.data()[..la]);
                    add_assign(&mut head[b.0], &g.data()[la..]);
                }
                Op::ConcatCols(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let (n, ca, cb) = (va.rows(), va.cols(), vb.cols());
                    {
                        let da = head[a.0].data_mut();
                        for i in 0..n {
                            add_slice(
                                &mut da[i * ca..(i + 1) * ca],
                                &g.data()[i * (ca + cb)..i * (ca + cb) + ca],
                            );
                        }
                    }
                    let db = head[b.0].data_mut();
                    for i in 0..n {
                        add_slice(
                            &mut db[i * cb..(i + 1) * cb],
                            &g.data()[i * (ca + cb) + ca..(i + 1) * (ca + cb)],
                        );
                    }
                }
                Op::StackRows(rows) => {
                    let d = g.data().len() / rows.len();
                    for (i, r) in rows.iter().enumerate() {
                        add_assign(&mut head[r.0], &g.data()[i * d..(i + 1) * d]);
                    }
                }
                Op::Row { m, row } => {
                    let d = g.data().len();
                    let dm = head[m.0].data_mut();
                    add_slice(&mut dm[row * d..(row + 1) * d], g.data());
                }
                Op::Softmax(a) => {
                    let y = node.value.data();
                    let inner = dot(y, g.data());
                    let da = head[a.0].data_mut();
                    for j in 0..da.len() {
                        da[j] += y[j] * (g.data()[j] - inner);
                    }
                }
                Op::CrossEntropy { p, target } => {
                    let pt = self.value(*p).data()[*target];
                    head[p.0].data_mut()[*target] -= g.item() / pt;
                }
                Op::Sum(a) => {
                    let da = head[a.0].data_mut();
                    for v in da.iter_mut() {
                        *v += g.item();
                    }
                }
                Op::AddN(terms) => {
                    for t in terms {
                        add_assign(&mut head[t.0], g.data());
                    }
                }
            }
        }
        grads
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn add_assign(t: &mut Tensor, g: &[f64]) {
    add_slice(t.data_mut(), g);
}

#[inline]
fn sub_assign(t: &mut Tensor, g: &[f64]) {
    let out = t.data_mut();
    debug_assert_eq!(out.len(), g.len());
    for (o, v) in out.iter_mut().zip(g) {
        *o -= v;
    }
}

#[inline]
fn add_slice(out: &mut [f64], g: &[f64]) {
    debug_assert_eq!(out.len(), g.len());
    for (o, v) in out.iter_mut().zip(g) {
        *o += v;
    }
}

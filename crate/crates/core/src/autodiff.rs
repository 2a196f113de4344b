//! Reverse-mode automatic differentiation over dense rank-2 tensors.
//!
//! A [`Graph`] is a define-by-run tape: every operation computes its result
//! eagerly, appends a node recording its inputs, and returns a [`Tensor`]
//! handle. [`Graph::backward`] walks the tape in reverse insertion order and
//! accumulates adjoints into per-node gradient buffers. A graph lives for one
//! training step; parameters persist outside it and are re-bound as leaves
//! each step.
//!
//! The tape includes a gradient-reversal operation: identity in the forward
//! pass, `-lambda` scaling in the backward pass. Placing it between a feature
//! extractor and a domain discriminator turns joint gradient descent into the
//! adversarial min-max used for domain-invariant feature learning.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::Error;

/// Handle to a node in a [`Graph`]. Carries its shape so dimension checks do
/// not need a graph lookup.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tensor {
    id: usize,
    rows: usize,
    cols: usize,
}

impl Tensor {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_scalar(&self) -> bool {
        self.rows == 1 && self.cols == 1
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Matmul(usize, usize),
    AddRowBroadcast(usize, usize),
    Relu(usize),
    LogSoftmaxRows(usize),
    GradReverse(usize, f64),
    Add(usize, usize),
    Sub(usize, usize),
    MulElem(usize, usize),
    DivElem(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Square(usize),
    SumAll(usize),
    MeanAll(usize),
    GatherRows(usize, Vec<usize>),
    ConcatRows(usize, usize),
}

#[derive(Debug, Clone)]
struct Node {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    grad: Vec<f64>,
    op: Op,
}

/// Append-only computation tape. Node insertion order is topological order;
/// backward traverses it in exact reverse.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    fn push(&mut self, rows: usize, cols: usize, values: Vec<f64>, op: Op) -> Tensor {
        debug_assert_eq!(values.len(), rows * cols);
        let id = self.nodes.len();
        self.nodes.push(Node {
            rows,
            cols,
            values,
            grad: vec![0.0; rows * cols],
            op,
        });
        Tensor { id, rows, cols }
    }

    /// Inserts a leaf holding `values` in row-major order.
    pub fn leaf(&mut self, values: Vec<f64>, rows: usize, cols: usize) -> Result<Tensor, Error> {
        if rows == 0 || cols == 0 {
            return Err(Error::Contract(alloc::format!(
                "leaf shape {rows}x{cols} has a zero dimension"
            )));
        }
        if values.len() != rows * cols {
            return Err(Error::Contract(alloc::format!(
                "leaf of shape {rows}x{cols} needs {} values, got {}",
                rows * cols,
                values.len()
            )));
        }
        Ok(self.push(rows, cols, values, Op::Leaf))
    }

    /// Leaf of zeros; used as a stand-in for disabled loss components.
    pub fn zeros(&mut self, rows: usize, cols: usize) -> Tensor {
        self.push(rows, cols, vec![0.0; rows * cols], Op::Leaf)
    }

    /// 1x1 leaf.
    pub fn scalar_leaf(&mut self, value: f64) -> Tensor {
        self.push(1, 1, vec![value], Op::Leaf)
    }

    pub fn values(&self, t: Tensor) -> &[f64] {
        &self.nodes[t.id].values
    }

    pub fn grad(&self, t: Tensor) -> &[f64] {
        &self.nodes[t.id].grad
    }

    /// Value of a 1x1 tensor.
    pub fn scalar(&self, t: Tensor) -> f64 {
        debug_assert!(t.is_scalar());
        self.nodes[t.id].values[0]
    }

    /// Standard matrix product `a · b`.
    pub fn matmul(&mut self, a: Tensor, b: Tensor) -> Result<Tensor, Error> {
        if a.cols != b.rows {
            return Err(Error::Dimension {
                op: "matmul",
                lhs: a.shape(),
                rhs: b.shape(),
            });
        }
        let (m, k, n) = (a.rows, a.cols, b.cols);
        let av = &self.nodes[a.id].values;
        let bv = &self.nodes[b.id].values;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let aip = av[i * k + p];
                for j in 0..n {
                    out[i * n + j] += aip * bv[p * n + j];
                }
            }
        }
        Ok(self.push(m, n, out, Op::Matmul(a.id, b.id)))
    }

    /// Adds the single row `b` to every row of `a`.
    pub fn add_row_broadcast(&mut self, a: Tensor, b: Tensor) -> Result<Tensor, Error> {
        if b.rows != 1 || a.cols != b.cols {
            return Err(Error::Dimension {
                op: "add_row_broadcast",
                lhs: a.shape(),
                rhs: b.shape(),
            });
        }
        let (m, n) = a.shape();
        let av = &self.nodes[a.id].values;
        let bv = &self.nodes[b.id].values;
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            for j in 0..n {
                out.push(av[i * n + j] + bv[j]);
            }
        }
        Ok(self.push(m, n, out, Op::AddRowBroadcast(a.id, b.id)))
    }

    /// Elementwise `max(0, x)`. Backward uses subgradient 0 at exactly 0.
    pub fn relu(&mut self, a: Tensor) -> Tensor {
        let out: Vec<f64> = self.nodes[a.id]
            .values
            .iter()
            .map(|&x| if x > 0.0 { x } else { 0.0 })
            .collect();
        self.push(a.rows, a.cols, out, Op::Relu(a.id))
    }

    /// Row-wise log-softmax, stabilized by max subtraction.
    pub fn log_softmax_rows(&mut self, a: Tensor) -> Tensor {
        let (m, n) = a.shape();
        let av = &self.nodes[a.id].values;
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            let row = &av[i * n..(i + 1) * n];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = row.iter().map(|&x| libm::exp(x - max)).sum();
            let log_sum = libm::log(sum);
            out.extend(row.iter().map(|&x| x - max - log_sum));
        }
        self.push(m, n, out, Op::LogSoftmaxRows(a.id))
    }

    /// Identity forward; backward multiplies the upstream gradient by
    /// `-lambda`.
    pub fn grad_reverse(&mut self, a: Tensor, lambda: f64) -> Result<Tensor, Error> {
        if !(lambda >= 0.0) {
            return Err(Error::Parameter(alloc::format!(
                "grad_reverse lambda must be >= 0, got {lambda}"
            )));
        }
        let out = self.nodes[a.id].values.clone();
        Ok(self.push(a.rows, a.cols, out, Op::GradReverse(a.id, lambda)))
    }

    fn same_shape(&mut self, op: &'static str, a: Tensor, b: Tensor) -> Result<(), Error> {
        if a.shape() != b.shape() {
            return Err(Error::Dimension {
                op,
                lhs: a.shape(),
                rhs: b.shape(),
            });
        }
        Ok(())
    }

    fn zip_elementwise(
        &mut self,
        a: Tensor,
        b: Tensor,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Tensor {
        let out: Vec<f64> = self.nodes[a.id]
            .values
            .iter()
            .zip(&self.nodes[b.id].values)
            .map(|(&x, &y)| f(x, y))
            .collect();
        self.push(a.rows, a.cols, out, op)
    }

    pub fn add(&mut self, a: Tensor, b: Tensor) -> Result<Tensor, Error> {
        self.same_shape("add", a, b)?;
        Ok(self.zip_elementwise(a, b, |x, y| x + y, Op::Add(a.id, b.id)))
    }

    pub fn sub(&mut self, a: Tensor, b: Tensor) -> Result<Tensor, Error> {
        self.same_shape("sub", a, b)?;
        Ok(self.zip_elementwise(a, b, |x, y| x - y, Op::Sub(a.id, b.id)))
    }

    pub fn mul_elementwise(&mut self, a: Tensor, b: Tensor) -> Result<Tensor, Error> {
        self.same_shape("mul_elementwise", a, b)?;
        Ok(self.zip_elementwise(a, b, |x, y| x * y, Op::MulElem(a.id, b.id)))
    }

    pub fn div_elementwise(&mut self, a: Tensor, b: Tensor) -> Result<Tensor, Error> {
        self.same_shape("div_elementwise", a, b)?;
        Ok(self.zip_elementwise(a, b, |x, y| x / y, Op::DivElem(a.id, b.id)))
    }

    /// Multiplies every element by the constant `c`.
    pub fn scale(&mut self, a: Tensor, c: f64) -> Tensor {
        let out: Vec<f64> = self.nodes[a.id].values.iter().map(|&x| x * c).collect();
        self.push(a.rows, a.cols, out, Op::Scale(a.id, c))
    }

    /// Adds the constant `c` to every element.
    pub fn add_scalar(&mut self, a: Tensor, c: f64) -> Tensor {
        let out: Vec<f64> = self.nodes[a.id].values.iter().map(|&x| x + c).collect();
        self.push(a.rows, a.cols, out, Op::AddScalar(a.id))
    }

    pub fn square(&mut self, a: Tensor) -> Tensor {
        let out: Vec<f64> = self.nodes[a.id].values.iter().map(|&x| x * x).collect();
        self.push(a.rows, a.cols, out, Op::Square(a.id))
    }

    /// Sum of all elements as a 1x1 tensor.
    pub fn sum_all(&mut self, a: Tensor) -> Tensor {
        let s: f64 = self.nodes[a.id].values.iter().sum();
        self.push(1, 1, vec![s], Op::SumAll(a.id))
    }

    /// Mean of all elements as a 1x1 tensor.
    pub fn mean_all(&mut self, a: Tensor) -> Tensor {
        let s: f64 = self.nodes[a.id].values.iter().sum();
        let n = a.len() as f64;
        self.push(1, 1, vec![s / n], Op::MeanAll(a.id))
    }

    /// Selects rows of `a` by index, with repetition allowed; backward
    /// accumulates each output row's gradient into its source row.
    pub fn gather_rows(&mut self, a: Tensor, indices: &[usize]) -> Result<Tensor, Error> {
        if indices.is_empty() {
            return Err(Error::Contract("gather_rows with empty index list".into()));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= a.rows) {
            return Err(Error::Contract(alloc::format!(
                "gather_rows index {bad} out of range for {} rows",
                a.rows
            )));
        }
        let n = a.cols;
        let av = &self.nodes[a.id].values;
        let mut out = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            out.extend_from_slice(&av[i * n..(i + 1) * n]);
        }
        Ok(self.push(
            indices.len(),
            n,
            out,
            Op::GatherRows(a.id, indices.to_vec()),
        ))
    }

    /// Stacks `a` on top of `b`.
    pub fn concat_rows(&mut self, a: Tensor, b: Tensor) -> Result<Tensor, Error> {
        if a.cols != b.cols {
            return Err(Error::Dimension {
                op: "concat_rows",
                lhs: a.shape(),
                rhs: b.shape(),
            });
        }
        let mut out = self.nodes[a.id].values.clone();
        out.extend_from_slice(&self.nodes[b.id].values);
        Ok(self.push(a.rows + b.rows, a.cols, out, Op::ConcatRows(a.id, b.id)))
    }

    /// Resets every gradient buffer to exactly 0.0.
    pub fn zero_grad_all(&mut self) {
        for node in &mut self.nodes {
            for g in &mut node.grad {
                *g = 0.0;
            }
        }
    }

    /// Accumulates `d(root)/d(node)` into every node's gradient buffer.
    ///
    /// Each call computes adjoints from scratch and adds them, so calling
    /// twice without [`Graph::zero_grad_all`] doubles every gradient exactly.
    pub fn backward(&mut self, root: Tensor) -> Result<(), Error> {
        if !root.is_scalar() {
            return Err(Error::Contract(alloc::format!(
                "backward requires a 1x1 root, got {}x{}",
                root.rows,
                root.cols
            )));
        }
        let mut adjoint: Vec<Vec<f64>> = self
            .nodes
            .iter()
            .map(|n| vec![0.0; n.values.len()])
            .collect();
        adjoint[root.id][0] = 1.0;

        for id in (0..=root.id).rev() {
            // Parents always precede their node, so splitting at `id` gives
            // mutable access to parent adjoints while the node's own adjoint
            // is read from the tail.
            let (parent_adj, rest) = adjoint.split_at_mut(id);
            let g = &rest[0];
            let node = &self.nodes[id];
            match &node.op {
                Op::Leaf => {}
                Op::Matmul(a, b) => {
                    let (m, n) = (node.rows, node.cols);
                    let k = self.nodes[*a].cols;
                    let av = &self.nodes[*a].values;
                    let bv = &self.nodes[*b].values;
                    // a.grad += g · bᵀ
                    {
                        let ga = &mut parent_adj[*a];
                        for i in 0..m {
                            for p in 0..k {
                                let mut s = 0.0;
                                for j in 0..n {
                                    s += g[i * n + j] * bv[p * n + j];
                                }
                                ga[i * k + p] += s;
                            }
                        }
                    }
                    // b.grad += aᵀ · g
                    {
                        let gb = &mut parent_adj[*b];
                        for p in 0..k {
                            for i in 0..m {
                                let aip = av[i * k + p];
                                for j in 0..n {
                                    gb[p * n + j] += aip * g[i * n + j];
                                }
                            }
                        }
                    }
                }
                Op::AddRowBroadcast(a, b) => {
                    let (m, n) = (node.rows, node.cols);
                    for (ga, &gi) in parent_adj[*a].iter_mut().zip(g.iter()) {
                        *ga += gi;
                    }
                    let gb = &mut parent_adj[*b];
                    for i in 0..m {
                        for j in 0..n {
                            gb[j] += g[i * n + j];
                        }
                    }
                }
                Op::Relu(a) => {
                    let xs = &self.nodes[*a].values;
                    for ((ga, &x), &gi) in parent_adj[*a].iter_mut().zip(xs).zip(g.iter()) {
                        if x > 0.0 {
                            *ga += gi;
                        }
                    }
                }
                Op::LogSoftmaxRows(a) => {
                    // dx = g - softmax(x) * rowsum(g)
                    let (m, n) = (node.rows, node.cols);
                    let ga = &mut parent_adj[*a];
                    for i in 0..m {
                        let row_g = &g[i * n..(i + 1) * n];
                        let row_y = &node.values[i * n..(i + 1) * n];
                        let gsum: f64 = row_g.iter().sum();
                        for j in 0..n {
                            ga[i * n + j] += row_g[j] - libm::exp(row_y[j]) * gsum;
                        }
                    }
                }
                Op::GradReverse(a, lambda) => {
                    let neg = -*lambda;
                    for (ga, &gi) in parent_adj[*a].iter_mut().zip(g.iter()) {
                        *ga += neg * gi;
                    }
                }
                Op::Add(a, b) => {
                    for (ga, &gi) in parent_adj[*a].iter_mut().zip(g.iter()) {
                        *ga += gi;
                    }
                    for (gb, &gi) in parent_adj[*b].iter_mut().zip(g.iter()) {
                        *gb += gi;
                    }
                }
                Op::Sub(a, b) => {
                    for (ga, &gi) in parent_adj[*a].iter_mut().zip(g.iter()) {
                        *ga += gi;
                    }
                    for (gb, &gi) in parent_adj[*b].iter_mut().zip(g.iter()) {
                        *gb -= gi;
                    }
                }
                Op::MulElem(a, b) => {
                    let bv = &self.nodes[*b].values;
                    for ((ga, &y), &gi) in parent_adj[*a].iter_mut().zip(bv).zip(g.iter()) {
                        *ga += y * gi;
                    }
                    let av = &self.nodes[*a].values;
                    for ((gb, &x), &gi) in parent_adj[*b].iter_mut().zip(av).zip(g.iter()) {
                        *gb += x * gi;
                    }
                }
                Op::DivElem(a, b) => {
                    let bv = &self.nodes[*b].values;
                    for ((ga, &y), &gi) in parent_adj[*a].iter_mut().zip(bv).zip(g.iter()) {
                        *ga += gi / y;
                    }
                    let av = &self.nodes[*a].values;
                    for (((gb, &x), &y), &gi) in
                        parent_adj[*b].iter_mut().zip(av).zip(bv).zip(g.iter())
                    {
                        *gb -= gi * x / (y * y);
                    }
                }
                Op::Scale(a, c) => {
                    for (ga, &gi) in parent_adj[*a].iter_mut().zip(g.iter()) {
                        *ga += c * gi;
                    }
                }
                Op::AddScalar(a) => {
                    for (ga, &gi) in parent_adj[*a].iter_mut().zip(g.iter()) {
                        *ga += gi;
                    }
                }
                Op::Square(a) => {
                    let xs = &self.nodes[*a].values;
                    for ((ga, &x), &gi) in parent_adj[*a].iter_mut().zip(xs).zip(g.iter()) {
                        *ga += 2.0 * x * gi;
                    }
                }
                Op::SumAll(a) => {
                    let gi = g[0];
                    for ga in parent_adj[*a].iter_mut() {
                        *ga += gi;
                    }
                }
                Op::MeanAll(a) => {
                    let gi = g[0] / self.nodes[*a].values.len() as f64;
                    for ga in parent_adj[*a].iter_mut() {
                        *ga += gi;
                    }
                }
                Op::GatherRows(a, indices) => {
                    let n = node.cols;
                    let ga = &mut parent_adj[*a];
                    for (out_row, &src_row) in indices.iter().enumerate() {
                        for j in 0..n {
                            ga[src_row * n + j] += g[out_row * n + j];
                        }
                    }
                }
                Op::ConcatRows(a, b) => {
                    let split = self.nodes[*a].values.len();
                    for (ga, &gi) in parent_adj[*a].iter_mut().zip(&g[..split]) {
                        *ga += gi;
                    }
                    for (gb, &gi) in parent_adj[*b].iter_mut().zip(&g[split..]) {
                        *gb += gi;
                    }
                }
            }
        }

        for (node, adj) in self.nodes.iter_mut().zip(adjoint) {
            for (g, a) in node.grad.iter_mut().zip(adj) {
                *g += a;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(g: &mut Graph, values: &[f64], rows: usize, cols: usize) -> Tensor {
        g.leaf(values.to_vec(), rows, cols).unwrap()
    }

    #[test]
    fn matmul_identity() {
        let mut g = Graph::new();
        let a = leaf(&mut g, &[1.0, 2.0, 3.0, 4.0], 2, 2);
        let eye = leaf(&mut g, &[1.0, 0.0, 0.0, 1.0], 2, 2);
        let c = g.matmul(a, eye).unwrap();
        assert_eq!(g.values(c), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn matmul_hand_value() {
        let mut g = Graph::new();
        let a = leaf(&mut g, &[1.0, 2.0], 1, 2);
        let b = leaf(&mut g, &[3.0, 4.0], 2, 1);
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.values(c), &[11.0]);
    }

    #[test]
    fn matmul_shape_mismatch_names_both_shapes() {
        let mut g = Graph::new();
        let a = g.zeros(2, 3);
        let b = g.zeros(2, 3);
        match g.matmul(a, b) {
            Err(Error::Dimension { op, lhs, rhs }) => {
                assert_eq!(op, "matmul");
                assert_eq!(lhs, (2, 3));
                assert_eq!(rhs, (2, 3));
            }
            other => panic!("expected dimension error, got {other:?}"),
        }
    }

    #[test]
    fn add_row_broadcast_values_and_grad() {
        let mut g = Graph::new();
        let a = leaf(&mut g, &[1.0, 1.0], 1, 2);
        let b = leaf(&mut g, &[1.0, 2.0], 1, 2);
        let c = g.add_row_broadcast(a, b).unwrap();
        assert_eq!(g.values(c), &[2.0, 3.0]);

        let mut g = Graph::new();
        let a = leaf(&mut g, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0], 3, 2);
        let b = leaf(&mut g, &[0.5, -0.5], 1, 2);
        let c = g.add_row_broadcast(a, b).unwrap();
        let s = g.sum_all(c);
        g.backward(s).unwrap();
        // b receives the column sums of the upstream (all-ones) gradient.
        assert_eq!(g.grad(b), &[3.0, 3.0]);
    }

    #[test]
    fn add_row_broadcast_zero_is_identity() {
        let mut g = Graph::new();
        let a = leaf(&mut g, &[1.0, 1.0, 2.0, 2.0], 2, 2);
        let zero = leaf(&mut g, &[0.0, 0.0], 1, 2);
        let c = g.add_row_broadcast(a, zero).unwrap();
        assert_eq!(g.values(c), g.values(a));
    }

    #[test]
    fn relu_sign_split_and_zero_boundary() {
        let mut g = Graph::new();
        let a = leaf(&mut g, &[-1.0, 2.0], 1, 2);
        let r = g.relu(a);
        assert_eq!(g.values(r), &[0.0, 2.0]);

        let mut g = Graph::new();
        let a = leaf(&mut g, &[0.0], 1, 1);
        let r = g.relu(a);
        assert_eq!(g.values(r), &[0.0]);
        g.backward(r).unwrap();
        assert_eq!(g.grad(a), &[0.0]);
    }

    #[test]
    fn log_softmax_symmetric_and_stable() {
        let mut g = Graph::new();
        let a = leaf(&mut g, &[0.0, 0.0], 1, 2);
        let y = g.log_softmax_rows(a);
        let ln2 = libm::log(2.0);
        assert!((g.values(y)[0] + ln2).abs() < 1e-15);
        assert!((g.values(y)[1] + ln2).abs() < 1e-15);

        let mut g = Graph::new();
        let a = leaf(&mut g, &[1000.0, 0.0], 1, 2);
        let y = g.log_softmax_rows(a);
        let v = g.values(y);
        assert!(v.iter().all(|x| x.is_finite()));
        // Extended-precision reference: log1p(exp(-1000)) is exactly 0 in f64.
        assert_eq!(v[0], 0.0);
        assert_eq!(v[1], -1000.0);
    }

    #[test]
    fn log_softmax_rows_exp_sums_to_one() {
        let mut g = Graph::new();
        let a = leaf(&mut g, &[3.0, -2.0, 0.5, 1e6, -1e6, 12.0], 2, 3);
        let y = g.log_softmax_rows(a);
        for i in 0..2 {
            let s: f64 = g.values(y)[i * 3..(i + 1) * 3]
                .iter()
                .map(|&v| libm::exp(v))
                .sum();
            assert!((s - 1.0).abs() < 1e-12, "row {i} sums to {s}");
        }
    }

    #[test]
    fn grad_reverse_forward_bit_identity() {
        let mut g = Graph::new();
        let a = leaf(&mut g, &[1.0, 2.0], 1, 2);
        let r = g.grad_reverse(a, 0.7).unwrap();
        for (x, y) in g.values(a).iter().zip(g.values(r)) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn grad_reverse_backward_scales_by_minus_lambda() {
        let mut g = Graph::new();
        let a = leaf(&mut g, &[5.0, -3.0], 1, 2);
        let r = g.grad_reverse(a, 0.5).unwrap();
        let s = g.sum_all(r);
        g.backward(s).unwrap();
        assert_eq!(g.grad(a), &[-0.5, -0.5]);
    }

    #[test]
    fn grad_reverse_zero_lambda_zeroes_gradient() {
        let mut g = Graph::new();
        let a = leaf(&mut g, &[5.0, -3.0], 1, 2);
        let r = g.grad_reverse(a, 0.0).unwrap();
        let s = g.sum_all(r);
        g.backward(s).unwrap();
        assert_eq!(g.grad(a), &[0.0, 0.0]);
    }

    #[test]
    fn grad_reverse_rejects_negative_lambda() {
        let mut g = Graph::new();
        let a = g.zeros(1, 2);
        assert!(matches!(g.grad_reverse(a, -0.1), Err(Error::Parameter(_))));
    }

    #[test]
    fn sum_all_value_and_ones_gradient() {
        let mut g = Graph::new();
        let a = leaf(&mut g, &[1.0, 2.0, 3.0, 4.0], 2, 2);
        let s = g.sum_all(a);
        assert_eq!(g.scalar(s), 10.0);
        g.backward(s).unwrap();
        assert_eq!(g.grad(a), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_root() {
        let mut g = Graph::new();
        let a = g.zeros(2, 2);
        assert!(matches!(g.backward(a), Err(Error::Contract(_))));
    }

    #[test]
    fn backward_twice_doubles_gradients_exactly() {
        let mut g = Graph::new();
        let a = leaf(&mut g, &[1.5, -2.0, 0.25], 1, 3);
        let sq = g.square(a);
        let s = g.sum_all(sq);
        g.backward(s).unwrap();
        let once: Vec<f64> = g.grad(a).to_vec();
        g.backward(s).unwrap();
        for (g2, g1) in g.grad(a).iter().zip(&once) {
            assert_eq!(*g2, 2.0 * g1);
        }
        g.zero_grad_all();
        assert!(g.grad(a).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn gather_rows_accumulates_duplicate_indices() {
        let mut g = Graph::new();
        let a = leaf(&mut g, &[1.0, 2.0, 3.0, 4.0], 2, 2);
        let picked = g.gather_rows(a, &[0, 0, 1]).unwrap();
        assert_eq!(g.values(picked), &[1.0, 2.0, 1.0, 2.0, 3.0, 4.0]);
        let s = g.sum_all(picked);
        g.backward(s).unwrap();
        assert_eq!(g.grad(a), &[2.0, 2.0, 1.0, 1.0]);
    }

    #[test]
    fn concat_rows_splits_gradient() {
        let mut g = Graph::new();
        let a = leaf(&mut g, &[1.0, 2.0], 1, 2);
        let b = leaf(&mut g, &[3.0, 4.0, 5.0, 6.0], 2, 2);
        let c = g.concat_rows(a, b).unwrap();
        assert_eq!(c.shape(), (3, 2));
        assert_eq!(g.values(c), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let doubled = g.scale(c, 2.0);
        let s = g.sum_all(doubled);
        g.backward(s).unwrap();
        assert_eq!(g.grad(a), &[2.0, 2.0]);
        assert_eq!(g.grad(b), &[2.0, 2.0, 2.0, 2.0]);
    }

    #[test]
    fn mul_elementwise_with_shared_operand() {
        // x * x: both parents are the same node; gradient must be 2x.
        let mut g = Graph::new();
        let a = leaf(&mut g, &[3.0, -2.0], 1, 2);
        let p = g.mul_elementwise(a, a).unwrap();
        let s = g.sum_all(p);
        g.backward(s).unwrap();
        assert_eq!(g.grad(a), &[6.0, -4.0]);
    }
}

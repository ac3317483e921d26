//! Minimal reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every operation eagerly; [`Tape::backward`] walks the
//! records in reverse and returns the gradient of a scalar output with
//! respect to every recorded value.

use std::rc::Rc;

use crate::linalg::{matmul_into, Matrix};

/// Constant sparse matrix in CSR form.
#[derive(Clone, Debug, PartialEq)]
pub struct Sparse {
    pub rows: usize,
    pub cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl Sparse {
    /// Duplicate `(row, col)` entries are summed.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut sorted = triplets.to_vec();
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            assert!(r < rows && c < cols, "triplet out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().expect("previous entry") += v;
                continue;
            }
            indices.push(c);
            values.push(v);
            indptr[r + 1] += 1;
            last = Some((r, c));
        }
        for r in 0..rows {
            indptr[r + 1] += indptr[r];
        }
        Self {
            rows,
            cols,
            indptr,
            indices,
            values,
        }
    }

    /// Row selection matrix: output row `i` copies input row `idx[i]`.
    pub fn selection(idx: &[usize], cols: usize) -> Self {
        let t: Vec<_> = idx.iter().enumerate().map(|(i, &c)| (i, c, 1.0)).collect();
        Self::from_triplets(idx.len(), cols, &t)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_entries(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.indptr[r]..self.indptr[r + 1]).map(move |k| (self.indices[k], self.values[k]))
    }

    pub fn matmul(&self, x: &Matrix) -> Matrix {
        assert_eq!(self.cols, x.rows, "sparse matmul shape mismatch");
        let mut out = Matrix::zeros(self.rows, x.cols);
        for r in 0..self.rows {
            for (c, v) in self.row_entries(r) {
                let src = x.row(c);
                for (o, s) in out.row_mut(r).iter_mut().zip(src) {
                    *o += v * s;
                }
            }
        }
        out
    }

    /// `selfᵀ · g`, accumulated into `out`.
    fn transpose_matmul_into(&self, g: &Matrix, out: &mut Matrix) {
        for r in 0..self.rows {
            let grow = g.row(r);
            for (c, v) in self.row_entries(r) {
                for (o, s) in out.row_mut(c).iter_mut().zip(grow) {
                    *o += v * s;
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    /// Position on the tape; indexes the vector returned by [`Tape::backward`].
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    /// `a + 1·bias` with `bias` a single row.
    AddRow(Var, Var),
    /// Row `i` of `a` times scalar `s[i]` (`s` is a column).
    MulCol(Var, Var),
    ScaleRows(Var, Rc<Vec<f64>>),
    /// Elementwise product with a constant of the same shape.
    Mask(Var, Rc<Vec<f64>>),
    /// `a + c` for a constant `c` of the same shape.
    AddConst(Var),
    SpMM(Rc<Sparse>, Var),
    LeakyRelu(Var, f64),
    Elu(Var),
    Sin(Var),
    Concat(Vec<Var>),
    /// Softmax of a column within segments.
    SegmentSoftmax(Var, Rc<Vec<usize>>),
    /// `out[dst[e]] += alpha[e] · x[src[e]]`.
    EdgeAggregate {
        alpha: Var,
        x: Var,
        src: Rc<Vec<usize>>,
        dst: Rc<Vec<usize>>,
    },
    /// Weighted mean cross-entropy of softmax(logits) over selected rows.
    SoftmaxXent {
        logits: Var,
        rows: Rc<Vec<usize>>,
        targets: Rc<Vec<usize>>,
        weights: Rc<Vec<f64>>,
    },
}

struct Record {
    value: Matrix,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    records: Vec<Record>,
}

fn softmax_row(row: &[f64]) -> Vec<f64> {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// Max-subtracted softmax within each segment of `seg`.
pub fn segment_softmax(x: &[f64], seg: &[usize]) -> Vec<f64> {
    let nseg = seg.iter().copied().max().map_or(0, |m| m + 1);
    let mut mx = vec![f64::NEG_INFINITY; nseg];
    for (v, &s) in x.iter().zip(seg) {
        mx[s] = mx[s].max(*v);
    }
    let e: Vec<f64> = x.iter().zip(seg).map(|(v, &s)| (v - mx[s]).exp()).collect();
    let mut sum = vec![0.0; nseg];
    for (v, &s) in e.iter().zip(seg) {
        sum[s] += v;
    }
    e.iter().zip(seg).map(|(v, &s)| v / sum[s]).collect()
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.records.push(Record { value, op });
        Var(self.records.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.records[v.0].value
    }

    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Matrix {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "elementwise shape mismatch");
        Matrix::from_vec(x.rows, x.cols, x.data.iter().zip(&y.data).map(|(p, q)| f(*p, *q)).collect())
    }

    fn map(&self, a: Var, f: impl Fn(f64) -> f64) -> Matrix {
        let x = self.value(a);
        Matrix::from_vec(x.rows, x.cols, x.data.iter().map(|p| f(*p)).collect())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip_with(a, b, |p, q| p + q);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip_with(a, b, |p, q| p - q);
        self.push(v, Op::Sub(a, b))
    }

    pub fn add_row(&mut self, a: Var, bias: Var) -> Var {
        let (x, b) = (self.value(a), self.value(bias));
        assert_eq!((1, x.cols), b.shape(), "bias shape mismatch");
        let mut v = x.clone();
        for r in 0..v.rows {
            for (o, bb) in v.row_mut(r).iter_mut().zip(&b.data) {
                *o += bb;
            }
        }
        self.push(v, Op::AddRow(a, bias))
    }

    pub fn mul_col(&mut self, a: Var, s: Var) -> Var {
        let (x, c) = (self.value(a), self.value(s));
        assert_eq!((x.rows, 1), c.shape(), "column scale shape mismatch");
        let mut v = x.clone();
        for r in 0..v.rows {
            let k = c.data[r];
            v.row_mut(r).iter_mut().for_each(|o| *o *= k);
        }
        self.push(v, Op::MulCol(a, s))
    }

    pub fn scale_rows(&mut self, a: Var, s: Rc<Vec<f64>>) -> Var {
        let mut v = self.value(a).clone();
        assert_eq!(v.rows, s.len(), "row scale length mismatch");
        for r in 0..v.rows {
            let k = s[r];
            v.row_mut(r).iter_mut().for_each(|o| *o *= k);
        }
        self.push(v, Op::ScaleRows(a, s))
    }

    pub fn mask(&mut self, a: Var, m: Rc<Vec<f64>>) -> Var {
        let x = self.value(a);
        assert_eq!(x.data.len(), m.len(), "mask length mismatch");
        let v = Matrix::from_vec(x.rows, x.cols, x.data.iter().zip(m.iter()).map(|(p, q)| p * q).collect());
        self.push(v, Op::Mask(a, m))
    }

    pub fn add_const(&mut self, a: Var, c: &Matrix) -> Var {
        let x = self.value(a);
        assert_eq!(x.shape(), c.shape(), "constant shape mismatch");
        let v = Matrix::from_vec(x.rows, x.cols, x.data.iter().zip(&c.data).map(|(p, q)| p + q).collect());
        self.push(v, Op::AddConst(a))
    }

    pub fn spmm(&mut self, s: Rc<Sparse>, a: Var) -> Var {
        let v = s.matmul(self.value(a));
        self.push(v, Op::SpMM(s, a))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let v = self.map(a, |x| if x > 0.0 { x } else { slope * x });
        self.push(v, Op::LeakyRelu(a, slope))
    }

    pub fn elu(&mut self, a: Var) -> Var {
        let v = self.map(a, |x| if x > 0.0 { x } else { x.exp_m1() });
        self.push(v, Op::Elu(a))
    }

    pub fn sin(&mut self, a: Var) -> Var {
        let v = self.map(a, f64::sin);
        self.push(v, Op::Sin(a))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|p| self.value(*p).cols).sum();
        let mut v = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for p in parts {
                let x = self.value(*p);
                assert_eq!(x.rows, rows, "concat row mismatch");
                v.row_mut(r)[off..off + x.cols].copy_from_slice(x.row(r));
                off += x.cols;
            }
        }
        self.push(v, Op::Concat(parts.to_vec()))
    }

    pub fn segment_softmax(&mut self, a: Var, seg: Rc<Vec<usize>>) -> Var {
        let x = self.value(a);
        assert_eq!(x.cols, 1, "segment softmax expects a column");
        assert_eq!(x.rows, seg.len(), "segment length mismatch");
        let v = Matrix::from_vec(x.rows, 1, segment_softmax(&x.data, &seg));
        self.push(v, Op::SegmentSoftmax(a, seg))
    }

    pub fn edge_aggregate(&mut self, alpha: Var, x: Var, src: Rc<Vec<usize>>, dst: Rc<Vec<usize>>, n_out: usize) -> Var {
        let (a, xv) = (self.value(alpha), self.value(x));
        assert_eq!((src.len(), 1), a.shape(), "alpha shape mismatch");
        let mut v = Matrix::zeros(n_out, xv.cols);
        for e in 0..src.len() {
            let w = a.data[e];
            let s = xv.row(src[e]);
            for (o, si) in v.row_mut(dst[e]).iter_mut().zip(s) {
                *o += w * si;
            }
        }
        self.push(v, Op::EdgeAggregate { alpha, x, src, dst })
    }

    pub fn softmax_xent(&mut self, logits: Var, rows: Rc<Vec<usize>>, targets: Rc<Vec<usize>>, weights: Rc<Vec<f64>>) -> Var {
        let z = self.value(logits);
        let total: f64 = weights.iter().sum();
        let mut loss = 0.0;
        for (k, &r) in rows.iter().enumerate() {
            let row = z.row(r);
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
            loss += weights[k] * (lse - row[targets[k]]);
        }
        let v = Matrix::from_vec(1, 1, vec![loss / total]);
        self.push(
            v,
            Op::SoftmaxXent {
                logits,
                rows,
                targets,
                weights,
            },
        )
    }

    /// Gradients of the scalar `out` with respect to every record; entries
    /// never reached stay `None`.
    pub fn backward(&self, out: Var) -> Vec<Option<Matrix>> {
        assert_eq!(self.value(out).shape(), (1, 1), "backward needs a scalar");
        let mut grads: Vec<Option<Matrix>> = (0..self.records.len()).map(|_| None).collect();
        grads[out.0] = Some(Matrix::filled(1, 1, 1.0));
        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        grads
    }

    fn propagate(&self, i: usize, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let shape = |v: Var| self.records[v.0].value.shape();
        fn acc<'a>(grads: &'a mut [Option<Matrix>], v: Var, shape: (usize, usize)) -> &'a mut Matrix {
            grads[v.0].get_or_insert_with(|| Matrix::zeros(shape.0, shape.1))
        }
        match &self.records[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                matmul_into(g, &bv.transpose(), acc(grads, *a, shape(*a)));
                matmul_into(&av.transpose(), g, acc(grads, *b, shape(*b)));
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    let t = acc(grads, v, shape(v));
                    t.data.iter_mut().zip(&g.data).for_each(|(o, x)| *o += x);
                }
            }
            Op::Sub(a, b) => {
                let t = acc(grads, *a, shape(*a));
                t.data.iter_mut().zip(&g.data).for_each(|(o, x)| *o += x);
                let t = acc(grads, *b, shape(*b));
                t.data.iter_mut().zip(&g.data).for_each(|(o, x)| *o -= x);
            }
            Op::AddRow(a, bias) => {
                let t = acc(grads, *a, shape(*a));
                t.data.iter_mut().zip(&g.data).for_each(|(o, x)| *o += x);
                let t = acc(grads, *bias, shape(*bias));
                for r in 0..g.rows {
                    t.data.iter_mut().zip(g.row(r)).for_each(|(o, x)| *o += x);
                }
            }
            Op::MulCol(a, s) => {
                let (av, sv) = (self.value(*a), self.value(*s));
                let t = acc(grads, *a, shape(*a));
                for r in 0..g.rows {
                    let k = sv.data[r];
                    t.row_mut(r).iter_mut().zip(g.row(r)).for_each(|(o, x)| *o += k * x);
                }
                let t = acc(grads, *s, shape(*s));
                for r in 0..g.rows {
                    t.data[r] += g.row(r).iter().zip(av.row(r)).map(|(x, y)| x * y).sum::<f64>();
                }
            }
            Op::ScaleRows(a, s) => {
                let t = acc(grads, *a, shape(*a));
                for r in 0..g.rows {
                    let k = s[r];
                    t.row_mut(r).iter_mut().zip(g.row(r)).for_each(|(o, x)| *o += k * x);
                }
            }
            Op::Mask(a, m) => {
                let t = acc(grads, *a, shape(*a));
                t.data.iter_mut().zip(&g.data).zip(m.iter()).for_each(|((o, x), k)| *o += x * k);
            }
            Op::AddConst(a) => {
                let t = acc(grads, *a, shape(*a));
                t.data.iter_mut().zip(&g.data).for_each(|(o, x)| *o += x);
            }
            Op::SpMM(s, a) => {
                s.transpose_matmul_into(g, acc(grads, *a, shape(*a)));
            }
            Op::LeakyRelu(a, slope) => {
                let x = self.value(*a);
                let t = acc(grads, *a, shape(*a));
                for ((o, gx), xv) in t.data.iter_mut().zip(&g.data).zip(&x.data) {
                    *o += if *xv > 0.0 { *gx } else { slope * gx };
                }
            }
            Op::Elu(a) => {
                let x = self.value(*a);
                let t = acc(grads, *a, shape(*a));
                for ((o, gx), xv) in t.data.iter_mut().zip(&g.data).zip(&x.data) {
                    *o += if *xv > 0.0 { *gx } else { gx * xv.exp() };
                }
            }
            Op::Sin(a) => {
                let x = self.value(*a);
                let t = acc(grads, *a, shape(*a));
                for ((o, gx), xv) in t.data.iter_mut().zip(&g.data).zip(&x.data) {
                    *o += gx * xv.cos();
                }
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for p in parts {
                    let cols = shape(*p).1;
                    let t = acc(grads, *p, shape(*p));
                    for r in 0..g.rows {
                        t.row_mut(r).iter_mut().zip(&g.row(r)[off..off + cols]).for_each(|(o, x)| *o += x);
                    }
                    off += cols;
                }
            }
            Op::SegmentSoftmax(a, seg) => {
                let y = &self.records[i].value.data;
                let nseg = seg.iter().copied().max().map_or(0, |m| m + 1);
                let mut dot = vec![0.0; nseg];
                for e in 0..y.len() {
                    dot[seg[e]] += y[e] * g.data[e];
                }
                let t = acc(grads, *a, shape(*a));
                for e in 0..y.len() {
                    t.data[e] += y[e] * (g.data[e] - dot[seg[e]]);
                }
            }
            Op::EdgeAggregate { alpha, x, src, dst } => {
                let (av, xv) = (self.value(*alpha), self.value(*x));
                let ta = acc(grads, *alpha, shape(*alpha));
                for e in 0..src.len() {
                    ta.data[e] += g.row(dst[e]).iter().zip(xv.row(src[e])).map(|(p, q)| p * q).sum::<f64>();
                }
                let tx = acc(grads, *x, shape(*x));
                for e in 0..src.len() {
                    let w = av.data[e];
                    let gr = g.row(dst[e]).to_vec();
                    tx.row_mut(src[e]).iter_mut().zip(&gr).for_each(|(o, q)| *o += w * q);
                }
            }
            Op::SoftmaxXent {
                logits,
                rows,
                targets,
                weights,
            } => {
                let z = self.value(*logits).clone();
                let total: f64 = weights.iter().sum();
                let scale = g.data[0] / total;
                let t = acc(grads, *logits, shape(*logits));
                for (k, &r) in rows.iter().enumerate() {
                    let p = softmax_row(z.row(r));
                    for (c, pc) in p.iter().enumerate() {
                        let y = if c == targets[k] { 1.0 } else { 0.0 };
                        t.data[r * z.cols + c] += scale * weights[k] * (pc - y);
                    }
                }
            }
        }
    }
}

/// Row-wise softmax of a matrix.
pub fn softmax_rows(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for r in 0..m.rows {
        let p = softmax_row(m.row(r));
        out.row_mut(r).copy_from_slice(&p);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    /// Central-difference check of d(build)/d(leaf) for every leaf entry.
    fn check(leaves: Vec<Matrix>, build: impl Fn(&mut Tape, &[Var]) -> Var) -> f64 {
        let run = |vals: &[Matrix]| {
            let mut t = Tape::new();
            let vars: Vec<Var> = vals.iter().map(|m| t.leaf(m.clone())).collect();
            let out = build(&mut t, &vars);
            (t, vars, out)
        };
        let (t, vars, out) = run(&leaves);
        let grads = t.backward(out);
        let eps = 1e-6;
        let mut worst: f64 = 0.0;
        for (li, v) in vars.iter().enumerate() {
            for k in 0..leaves[li].data.len() {
                let mut plus = leaves.clone();
                plus[li].data[k] += eps;
                let mut minus = leaves.clone();
                minus[li].data[k] -= eps;
                let (tp, _, op) = run(&plus);
                let (tm, _, om) = run(&minus);
                let num = (tp.value(op).data[0] - tm.value(om).data[0]) / (2.0 * eps);
                let ana = grads[v.0].as_ref().map_or(0.0, |g| g.data[k]);
                worst = worst.max((ana - num).abs() / (ana.abs() + num.abs()).max(1e-6));
            }
        }
        worst
    }

    fn sum_all(t: &mut Tape, x: Var) -> Var {
        let (r, c) = t.value(x).shape();
        let ones_r = t.leaf(Matrix::filled(1, r, 1.0));
        let ones_c = t.leaf(Matrix::filled(c, 1, 1.0));
        let s = t.matmul(ones_r, x);
        t.matmul(s, ones_c)
    }

    #[test]
    fn dense_ops_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let leaves = vec![rand_matrix(&mut rng, 4, 3), rand_matrix(&mut rng, 3, 2), rand_matrix(&mut rng, 1, 2), rand_matrix(&mut rng, 4, 1)];
        let err = check(leaves, |t, v| {
            let h = t.matmul(v[0], v[1]);
            let h = t.add_row(h, v[2]);
            let h = t.mul_col(h, v[3]);
            let a = t.elu(h);
            let b = t.sin(h);
            let c = t.leaky_relu(h, 0.2);
            let d = t.sub(a, b);
            let e = t.add(d, c);
            let f = t.concat(&[e, a]);
            let f = t.scale_rows(f, Rc::new(vec![1.0, -2.0, 0.5, 3.0]));
            let f = t.mask(f, Rc::new((0..16).map(|i| (i % 3) as f64).collect()));
            let f = t.add_const(f, &Matrix::filled(4, 4, 0.3));
            let g = t.elu(f);
            sum_all(t, g)
        });
        assert!(err < 1e-6, "max rel err {err}");
    }

    #[test]
    fn graph_ops_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let src = Rc::new(vec![0, 1, 2, 2, 3, 0]);
        let dst = Rc::new(vec![1, 1, 0, 3, 3, 3]);
        let seg = dst.clone();
        let sp = Rc::new(Sparse::from_triplets(3, 4, &[(0, 1, 0.5), (0, 2, 0.5), (1, 3, 1.0), (2, 0, 2.0)]));
        let leaves = vec![rand_matrix(&mut rng, 6, 1), rand_matrix(&mut rng, 4, 3), rand_matrix(&mut rng, 3, 2)];
        let err = check(leaves, move |t, v| {
            let a = t.segment_softmax(v[0], seg.clone());
            let h = t.edge_aggregate(a, v[1], src.clone(), dst.clone(), 4);
            let p = t.spmm(sp.clone(), h);
            let z = t.matmul(p, v[2]);
            t.softmax_xent(z, Rc::new(vec![0, 2]), Rc::new(vec![1, 0]), Rc::new(vec![1.0, 3.0]))
        });
        assert!(err < 1e-6, "max rel err {err}");
    }

    #[test]
    fn segment_softmax_examples() {
        let w = segment_softmax(&[0.0, 3f64.ln()], &[0, 0]);
        assert!((w[0] - 0.25).abs() < 1e-12 && (w[1] - 0.75).abs() < 1e-12);
        assert_eq!(segment_softmax(&[5.0], &[0]), vec![1.0]);
        let w = segment_softmax(&[1.0, 1.0, 7.0], &[0, 0, 1]);
        assert_eq!(w, vec![0.5, 0.5, 1.0]);
    }

    #[test]
    fn sparse_duplicates_are_summed() {
        let s = Sparse::from_triplets(2, 2, &[(0, 1, 1.0), (0, 1, 2.0), (1, 0, 1.0)]);
        assert_eq!(s.nnz(), 2);
        let x = Matrix::from_rows(&[vec![1.0], vec![10.0]]);
        assert_eq!(s.matmul(&x).data, vec![30.0, 1.0]);
    }

    #[test]
    fn unreached_leaf_has_no_gradient() {
        let mut t = Tape::new();
        let a = t.leaf(Matrix::filled(1, 1, 2.0));
        let unused = t.leaf(Matrix::filled(2, 2, 1.0));
        let b = t.sin(a);
        let g = t.backward(b);
        assert!(g[unused.0].is_none());
        assert!((g[a.0].as_ref().unwrap().data[0] - 2f64.cos()).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn segment_softmax_sums_to_one_and_is_shift_invariant(
            x in proptest::collection::vec(-30.0f64..30.0, 1..30),
            shift in -100.0f64..100.0,
            nseg in 1usize..5,
        ) {
            let seg: Vec<usize> = (0..x.len()).map(|i| i % nseg).collect();
            let w = segment_softmax(&x, &seg);
            let shifted: Vec<f64> = x.iter().map(|v| v + shift).collect();
            let w2 = segment_softmax(&shifted, &seg);
            for s in 0..nseg.min(x.len()) {
                let total: f64 = w.iter().zip(&seg).filter(|(_, &g)| g == s).map(|(v, _)| v).sum();
                prop_assert!((total - 1.0).abs() < 1e-9);
            }
            for (a, b) in w.iter().zip(&w2) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}

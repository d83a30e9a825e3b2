//! Reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Tape`] records every operation of one forward pass. Parameters live in a
//! [`ParamStore`] and are referenced by id, so large tables (embeddings) are
//! never copied onto the tape. After [`Tape::backward`] the accumulated
//! parameter gradients are returned as a [`Grads`] vector aligned with the
//! store.

use super::tensor::{gemm, sigmoid, softmax_in_place, Mat};
use serde::{Deserialize, Serialize};

pub type ParamId = usize;

/// Named, ordered collection of trainable tensors.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Mat>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Mat) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(value);
        self.tensors.len() - 1
    }

    pub fn get(&self, id: ParamId) -> &Mat {
        &self.tensors[id]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Mat {
        &mut self.tensors[id]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Mat] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Mat] {
        &mut self.tensors
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.data().len()).sum()
    }
}

/// Gradients aligned with a [`ParamStore`]; `None` means the parameter was
/// not touched by the forward pass.
pub type Grads = Vec<Option<Mat>>;

/// Global L2 norm over all present gradients.
pub fn grad_norm(grads: &Grads) -> f64 {
    grads.iter().flatten().map(Mat::sum_sq).sum::<f64>().sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    AddBias(Var, Var),
    Mul(Var, Var),
    MulConst(Var, Mat),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Gather { table: Var, ids: Vec<usize> },
    ConcatCols(Vec<Var>),
    SliceCols { src: Var, start: usize },
    SegmentMax { src: Var, argmax: Vec<usize> },
    ScaleRows(Var, Var),
    Blend { new: Var, old: Var, keep_new: Vec<f64> },
    Softmax(Var),
    CrossEntropy { logits: Var, targets: Vec<Option<usize>>, probs: Mat, divisor: f64 },
}

struct Node {
    value: Option<Mat>,
    op: Op,
}

pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self { params, nodes: Vec::new() }
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        self.nodes.push(Node { value: Some(value), op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Mat {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(m), _) => m,
            (None, Op::Param(id)) => self.params.get(*id),
            _ => unreachable!("node without value"),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn input(&mut self, value: Mat) -> Var {
        self.push(value, Op::Input)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.nodes.push(Node { value: None, op: Op::Param(id) });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul(self.value(b));
        self.push(out, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        self.push(out, Op::Add(a, b))
    }

    /// Adds a `1 x C` row vector to every row of `a`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Var {
        let bv = self.value(bias);
        assert_eq!(bv.rows(), 1);
        assert_eq!(bv.cols(), self.value(a).cols());
        let mut out = self.value(a).clone();
        let b = bv.data().to_vec();
        for r in 0..out.rows() {
            for (x, y) in out.row_mut(r).iter_mut().zip(&b) {
                *x += y;
            }
        }
        self.push(out, Op::AddBias(a, bias))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape());
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
        let out = Mat::from_vec(av.rows(), av.cols(), data);
        self.push(out, Op::Mul(a, b))
    }

    /// Elementwise product with a constant (e.g. a dropout mask).
    pub fn mul_const(&mut self, a: Var, c: Mat) -> Var {
        let av = self.value(a);
        assert_eq!(av.shape(), c.shape());
        let data = av.data().iter().zip(c.data()).map(|(x, y)| x * y).collect();
        let out = Mat::from_vec(av.rows(), av.cols(), data);
        self.push(out, Op::MulConst(a, c))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(0.0));
        self.push(out, Op::Relu(a))
    }

    /// Row lookup: output row `i` is row `ids[i]` of `table`.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Var {
        let t = self.value(table);
        let mut out = Mat::zeros(ids.len(), t.cols());
        for (i, &id) in ids.iter().enumerate() {
            out.row_mut(i).copy_from_slice(t.row(id));
        }
        self.push(out, Op::Gather { table, ids: ids.to_vec() })
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Mat::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let pv = self.value(p);
            assert_eq!(pv.rows(), rows);
            for r in 0..rows {
                out.row_mut(r)[offset..offset + pv.cols()].copy_from_slice(pv.row(r));
            }
            offset += pv.cols();
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, src: Var, start: usize, width: usize) -> Var {
        let sv = self.value(src);
        assert!(start + width <= sv.cols());
        let mut out = Mat::zeros(sv.rows(), width);
        for r in 0..sv.rows() {
            out.row_mut(r).copy_from_slice(&sv.row(r)[start..start + width]);
        }
        self.push(out, Op::SliceCols { src, start })
    }

    /// Column-wise max over consecutive row segments of `src`. Each
    /// `(start, len)` segment yields one output row; ties go to the
    /// earliest row.
    pub fn segment_max(&mut self, src: Var, segments: &[(usize, usize)]) -> Var {
        let sv = self.value(src);
        let cols = sv.cols();
        let mut out = Mat::zeros(segments.len(), cols);
        let mut argmax = vec![0usize; segments.len() * cols];
        for (s, &(start, len)) in segments.iter().enumerate() {
            assert!(len > 0, "empty segment");
            for c in 0..cols {
                let mut best = start;
                let mut best_v = sv.get(start, c);
                for r in start + 1..start + len {
                    let v = sv.get(r, c);
                    if v > best_v {
                        best_v = v;
                        best = r;
                    }
                }
                out.set(s, c, best_v);
                argmax[s * cols + c] = best;
            }
        }
        self.push(out, Op::SegmentMax { src, argmax })
    }

    /// Multiplies row `i` of `a` by the scalar `w[i, 0]`.
    pub fn scale_rows(&mut self, a: Var, w: Var) -> Var {
        let (av, wv) = (self.value(a), self.value(w));
        assert_eq!(wv.cols(), 1);
        assert_eq!(wv.rows(), av.rows());
        let mut out = av.clone();
        for r in 0..out.rows() {
            let s = wv.get(r, 0);
            out.row_mut(r).iter_mut().for_each(|x| *x *= s);
        }
        self.push(out, Op::ScaleRows(a, w))
    }

    /// Row-wise select: row `i` is `new[i]` when `keep_new[i] == 1`, `old[i]`
    /// when it is 0 (intermediate values interpolate).
    pub fn blend(&mut self, new: Var, old: Var, keep_new: &[f64]) -> Var {
        let (nv, ov) = (self.value(new), self.value(old));
        assert_eq!(nv.shape(), ov.shape());
        assert_eq!(keep_new.len(), nv.rows());
        let mut out = Mat::zeros(nv.rows(), nv.cols());
        for r in 0..nv.rows() {
            let m = keep_new[r];
            for c in 0..nv.cols() {
                out.set(r, c, m * nv.get(r, c) + (1.0 - m) * ov.get(r, c));
            }
        }
        self.push(out, Op::Blend { new, old, keep_new: keep_new.to_vec() })
    }

    /// Row-wise softmax. Entries equal to `f64::NEG_INFINITY` get probability 0.
    pub fn softmax(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for r in 0..out.rows() {
            softmax_in_place(out.row_mut(r));
        }
        self.push(out, Op::Softmax(a))
    }

    /// Summed softmax cross-entropy over rows with a target, divided by
    /// `divisor`. Returns a `1 x 1` loss.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[Option<usize>], divisor: f64) -> Var {
        let lv = self.value(logits);
        assert_eq!(lv.rows(), targets.len());
        let mut probs = lv.clone();
        let mut loss = 0.0;
        for (r, t) in targets.iter().enumerate() {
            softmax_in_place(probs.row_mut(r));
            if let Some(t) = *t {
                loss -= probs.get(r, t).max(1e-300).ln();
            }
        }
        let out = Mat::from_vec(1, 1, vec![loss / divisor]);
        self.push(out, Op::CrossEntropy { logits, targets: targets.to_vec(), probs, divisor })
    }

    /// Runs the backward pass from a `1 x 1` output and returns the
    /// parameter gradients.
    pub fn backward(self, output: Var) -> Grads {
        let Tape { params, nodes } = self;
        assert_eq!(value_of(params, &nodes, output).shape(), (1, 1), "backward needs a scalar output");
        let mut grads: Vec<Option<Mat>> = (0..nodes.len()).map(|_| None).collect();
        let mut param_grads: Grads = (0..params.len()).map(|_| None).collect();
        grads[output.0] = Some(Mat::filled(1, 1, 1.0));

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &nodes[idx];
            let val = |v: Var| value_of(params, &nodes, v);
            match &node.op {
                Op::Input => {}
                Op::Param(id) => accumulate(&mut param_grads[*id], g),
                Op::MatMul(a, b) => {
                    let (av, bv) = (val(*a), val(*b));
                    let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                    let ga = slot(&mut grads, *a, m, k);
                    // dA = dC * B^T
                    gemm(m, n, k, g.data(), n, 1, bv.data(), 1, n, ga.data_mut(), 1.0);
                    let gb = slot(&mut grads, *b, k, n);
                    // dB = A^T * dC
                    gemm(k, m, n, av.data(), 1, k, g.data(), n, 1, gb.data_mut(), 1.0);
                }
                Op::Add(a, b) => {
                    add_into(&mut grads, *a, &g);
                    add_into(&mut grads, *b, &g);
                }
                Op::AddBias(a, b) => {
                    let mut gb = Mat::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (x, y) in gb.data_mut().iter_mut().zip(g.row(r)) {
                            *x += y;
                        }
                    }
                    add_into(&mut grads, *b, &gb);
                    add_into(&mut grads, *a, &g);
                }
                Op::Mul(a, b) => {
                    let ga = zip_map(&g, val(*b), |x, y| x * y);
                    let gb = zip_map(&g, val(*a), |x, y| x * y);
                    add_into(&mut grads, *a, &ga);
                    add_into(&mut grads, *b, &gb);
                }
                Op::MulConst(a, c) => {
                    let ga = zip_map(&g, c, |x, y| x * y);
                    add_into(&mut grads, *a, &ga);
                }
                Op::Sigmoid(a) => {
                    let y = node.value.as_ref().unwrap();
                    let ga = zip_map(&g, y, |x, y| x * y * (1.0 - y));
                    add_into(&mut grads, *a, &ga);
                }
                Op::Tanh(a) => {
                    let y = node.value.as_ref().unwrap();
                    let ga = zip_map(&g, y, |x, y| x * (1.0 - y * y));
                    add_into(&mut grads, *a, &ga);
                }
                Op::Relu(a) => {
                    let y = node.value.as_ref().unwrap();
                    let ga = zip_map(&g, y, |x, y| if y > 0.0 { x } else { 0.0 });
                    add_into(&mut grads, *a, &ga);
                }
                Op::Gather { table, ids } => {
                    let (r, c) = val(*table).shape();
                    let gt = slot(&mut grads, *table, r, c);
                    for (i, &id) in ids.iter().enumerate() {
                        for (x, y) in gt.row_mut(id).iter_mut().zip(g.row(i)) {
                            *x += y;
                        }
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let (r, c) = val(p).shape();
                        let gp = slot(&mut grads, p, r, c);
                        for row in 0..r {
                            for (x, y) in gp.row_mut(row).iter_mut().zip(&g.row(row)[offset..offset + c]) {
                                *x += y;
                            }
                        }
                        offset += c;
                    }
                }
                Op::SliceCols { src, start } => {
                    let (r, c) = val(*src).shape();
                    let gs = slot(&mut grads, *src, r, c);
                    for row in 0..r {
                        for (x, y) in gs.row_mut(row)[*start..*start + g.cols()].iter_mut().zip(g.row(row)) {
                            *x += y;
                        }
                    }
                }
                Op::SegmentMax { src, argmax } => {
                    let (r, c) = val(*src).shape();
                    let gs = slot(&mut grads, *src, r, c);
                    for s in 0..g.rows() {
                        for col in 0..c {
                            let row = argmax[s * c + col];
                            let cur = gs.get(row, col);
                            gs.set(row, col, cur + g.get(s, col));
                        }
                    }
                }
                Op::ScaleRows(a, w) => {
                    let (av, wv) = (val(*a), val(*w));
                    let mut ga = g.clone();
                    let mut gw = Mat::zeros(wv.rows(), 1);
                    for r in 0..g.rows() {
                        let s = wv.get(r, 0);
                        let mut acc = 0.0;
                        for (c, x) in ga.row_mut(r).iter_mut().enumerate() {
                            acc += *x * av.get(r, c);
                            *x *= s;
                        }
                        gw.set(r, 0, acc);
                    }
                    add_into(&mut grads, *a, &ga);
                    add_into(&mut grads, *w, &gw);
                }
                Op::Blend { new, old, keep_new } => {
                    let mut gn = g.clone();
                    let mut go = g.clone();
                    for r in 0..g.rows() {
                        let m = keep_new[r];
                        gn.row_mut(r).iter_mut().for_each(|x| *x *= m);
                        go.row_mut(r).iter_mut().for_each(|x| *x *= 1.0 - m);
                    }
                    add_into(&mut grads, *new, &gn);
                    add_into(&mut grads, *old, &go);
                }
                Op::Softmax(a) => {
                    let y = node.value.as_ref().unwrap();
                    let mut ga = Mat::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let dot: f64 = y.row(r).iter().zip(g.row(r)).map(|(p, d)| p * d).sum();
                        for c in 0..y.cols() {
                            ga.set(r, c, y.get(r, c) * (g.get(r, c) - dot));
                        }
                    }
                    add_into(&mut grads, *a, &ga);
                }
                Op::CrossEntropy { logits, targets, probs, divisor } => {
                    let scale = g.get(0, 0) / divisor;
                    let mut gl = Mat::zeros(probs.rows(), probs.cols());
                    for (r, t) in targets.iter().enumerate() {
                        if let Some(t) = *t {
                            for c in 0..probs.cols() {
                                gl.set(r, c, probs.get(r, c) * scale);
                            }
                            let cur = gl.get(r, t);
                            gl.set(r, t, cur - scale);
                        }
                    }
                    add_into(&mut grads, *logits, &gl);
                }
            }
        }
        param_grads
    }
}

fn value_of<'a>(params: &'a ParamStore, nodes: &'a [Node], v: Var) -> &'a Mat {
    let node = &nodes[v.0];
    match (&node.value, &node.op) {
        (Some(m), _) => m,
        (None, Op::Param(id)) => params.get(*id),
        _ => unreachable!("node without value"),
    }
}

fn slot(grads: &mut [Option<Mat>], v: Var, rows: usize, cols: usize) -> &mut Mat {
    grads[v.0].get_or_insert_with(|| Mat::zeros(rows, cols))
}

fn add_into(grads: &mut [Option<Mat>], v: Var, g: &Mat) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(g),
        empty => *empty = Some(g.clone()),
    }
}

fn accumulate(slot: &mut Option<Mat>, g: Mat) {
    match slot {
        Some(existing) => existing.add_assign(&g),
        empty => *empty = Some(g),
    }
}

fn zip_map(a: &Mat, b: &Mat, f: impl Fn(f64, f64) -> f64) -> Mat {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Mat::from_vec(a.rows(), a.cols(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Central finite differences over every scalar of every parameter.
    fn check_grads(store: &ParamStore, f: impl Fn(&mut Tape) -> Var) {
        let mut tape = Tape::new(store);
        let out = f(&mut tape);
        let grads = tape.backward(out);
        let eps = 1e-6;
        for (id, t) in store.tensors().iter().enumerate() {
            for i in 0..t.data().len() {
                let mut plus = store.clone();
                plus.get_mut(id).data_mut()[i] += eps;
                let mut minus = store.clone();
                minus.get_mut(id).data_mut()[i] -= eps;
                let fp = {
                    let mut t = Tape::new(&plus);
                    let o = f(&mut t);
                    t.value(o).get(0, 0)
                };
                let fm = {
                    let mut t = Tape::new(&minus);
                    let o = f(&mut t);
                    t.value(o).get(0, 0)
                };
                let numeric = (fp - fm) / (2.0 * eps);
                let analytic = grads[id].as_ref().map_or(0.0, |g| g.data()[i]);
                assert!(
                    (numeric - analytic).abs() < 1e-5 * (1.0 + numeric.abs()),
                    "param {} ({}) index {i}: numeric {numeric} analytic {analytic}",
                    id,
                    store.names()[id]
                );
            }
        }
    }

    fn store(shapes: &[(&str, usize, usize)], seed: u64) -> ParamStore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = ParamStore::new();
        for &(n, r, c) in shapes {
            s.add(n, Mat::uniform(r, c, 1.0, &mut rng));
        }
        s
    }

    #[test]
    fn dense_layer_gradients() {
        let s = store(&[("x", 3, 4), ("w", 4, 5), ("b", 1, 5), ("v", 5, 3)], 1);
        check_grads(&s, |t| {
            let x = t.param(0);
            let w = t.param(1);
            let b = t.param(2);
            let v = t.param(3);
            let h = t.matmul(x, w);
            let h = t.add_bias(h, b);
            let h = t.tanh(h);
            let o = t.matmul(h, v);
            t.cross_entropy(o, &[Some(0), None, Some(2)], 2.0)
        });
    }

    #[test]
    fn gating_gradients() {
        let s = store(&[("a", 2, 6), ("b", 2, 3), ("w", 2, 1)], 2);
        check_grads(&s, |t| {
            let a = t.param(0);
            let b = t.param(1);
            let w = t.param(2);
            let g1 = t.slice_cols(a, 0, 3);
            let g2 = t.slice_cols(a, 3, 3);
            let s1 = t.sigmoid(g1);
            let m = t.mul(s1, g2);
            let m = t.mul_const(m, Mat::from_vec(2, 3, vec![2.0, 0.0, 2.0, 0.0, 2.0, 2.0]));
            let bl = t.blend(m, b, &[1.0, 0.0]);
            let sc = t.scale_rows(bl, w);
            let cat = t.concat_cols(&[sc, b]);
            let r = t.relu(cat);
            let sm = t.softmax(r);
            let sum = t.add(sm, sm);
            t.cross_entropy(sum, &[Some(1), Some(4)], 1.0)
        });
    }

    #[test]
    fn gather_and_pool_gradients() {
        let s = store(&[("emb", 5, 3), ("w", 3, 4)], 3);
        check_grads(&s, |t| {
            let e = t.param(0);
            let w = t.param(1);
            let rows = t.gather(e, &[0, 2, 2, 4, 1]);
            let h = t.matmul(rows, w);
            let p = t.segment_max(h, &[(0, 2), (2, 3)]);
            t.cross_entropy(p, &[Some(3), Some(0)], 2.0)
        });
    }

    #[test]
    fn masked_softmax_zeroes_negative_infinity() {
        let s = ParamStore::new();
        let mut t = Tape::new(&s);
        let x = t.input(Mat::from_vec(1, 3, vec![0.3, f64::NEG_INFINITY, 0.1]));
        let y = t.softmax(x);
        let v = t.value(y);
        assert_eq!(v.get(0, 1), 0.0);
        assert!((v.data().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

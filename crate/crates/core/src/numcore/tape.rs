use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{matmul, matmul_transb, softmax, Matrix};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`GradTape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulTransB(Var, Var),
    AddRowBias(Var, Var),
    Add(Var, Var),
    Relu(Var),
    RowSoftmax(Var),
    Scale(Var, f64),
}

#[derive(Debug, Clone)]
struct Node {
    value: Matrix,
    op: Op,
}

/// Reverse-mode tape covering the primitives the policy network needs.
///
/// Every recorded op appends a node; [`GradTape::backward`] walks the nodes in
/// reverse and accumulates adjoints into every ancestor of the output.
#[derive(Debug, Clone, Default)]
pub struct GradTape {
    nodes: Vec<Node>,
}

/// Adjoints produced by one backward sweep, indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient for `v`, or zeros of `shape` if `v` did not influence the output.
    pub fn get_or_zeros(&self, v: Var, shape: (usize, usize)) -> Matrix {
        self.get(v).cloned().unwrap_or_else(|| Matrix::zeros(shape.0, shape.1))
    }
}

impl GradTape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = matmul(self.value(a), self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    /// Records `a · bᵀ`.
    pub fn matmul_transb(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = matmul_transb(self.value(a), self.value(b))?;
        Ok(self.push(value, Op::MatMulTransB(a, b)))
    }

    /// Adds a `1 × cols` bias to every row of `a`.
    pub fn add_row_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(bias));
        if bv.rows() != 1 || bv.cols() != av.cols() {
            return Err(Error::Shape(format!(
                "bias {:?} does not broadcast over {:?}",
                bv.shape(),
                av.shape()
            )));
        }
        let mut value = av.clone();
        for r in 0..value.rows() {
            for (x, b) in value.row_mut(r).iter_mut().zip(bv.data()) {
                *x += b;
            }
        }
        Ok(self.push(value, Op::AddRowBias(a, bias)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let value = Matrix::from_raw(
            av.rows(),
            av.cols(),
            av.data().iter().map(|&x| x.max(0.0)).collect(),
        );
        self.push(value, Op::Relu(a))
    }

    pub fn row_softmax(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        let mut value = Matrix::zeros(av.rows(), av.cols());
        for r in 0..av.rows() {
            let p = softmax(av.row(r))?;
            value.row_mut(r).copy_from_slice(&p);
        }
        Ok(self.push(value, Op::RowSoftmax(a)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).scale(s);
        self.push(value, Op::Scale(a, s))
    }

    /// Back-propagates `seed` (the adjoint of `output`) through the tape.
    pub fn backward(&self, output: Var, seed: &Matrix) -> Result<Gradients> {
        if output.0 >= self.nodes.len() {
            return Err(Error::Consistency("output variable is not on this tape".into()));
        }
        if seed.shape() != self.value(output).shape() {
            return Err(Error::Consistency(format!(
                "seed {:?} does not match output {:?}",
                seed.shape(),
                self.value(output).shape()
            )));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(seed.clone());

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            match &self.nodes[idx].op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let da = matmul_transb(&g, self.value(*b))?;
                    let db = matmul(&self.value(*a).transpose(), &g)?;
                    accumulate(&mut grads, *a, da)?;
                    accumulate(&mut grads, *b, db)?;
                }
                Op::MatMulTransB(a, b) => {
                    let da = matmul(&g, self.value(*b))?;
                    let db = matmul(&g.transpose(), self.value(*a))?;
                    accumulate(&mut grads, *a, da)?;
                    accumulate(&mut grads, *b, db)?;
                }
                Op::AddRowBias(a, bias) => {
                    let mut db = Matrix::zeros(1, g.cols());
                    for row in g.iter_rows() {
                        for (d, x) in db.data_mut().iter_mut().zip(row) {
                            *d += x;
                        }
                    }
                    accumulate(&mut grads, *a, g.clone())?;
                    accumulate(&mut grads, *bias, db)?;
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone())?;
                    accumulate(&mut grads, *b, g.clone())?;
                }
                Op::Relu(a) => {
                    let av = self.value(*a);
                    let da = Matrix::from_raw(
                        g.rows(),
                        g.cols(),
                        g.data()
                            .iter()
                            .zip(av.data())
                            .map(|(&d, &x)| if x > 0.0 { d } else { 0.0 })
                            .collect(),
                    );
                    accumulate(&mut grads, *a, da)?;
                }
                Op::RowSoftmax(a) => {
                    let y = &self.nodes[idx].value;
                    let mut da = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let (yr, gr) = (y.row(r), g.row(r));
                        let inner: f64 = yr.iter().zip(gr).map(|(p, d)| p * d).sum();
                        for (c, out) in da.row_mut(r).iter_mut().enumerate() {
                            *out = yr[c] * (gr[c] - inner);
                        }
                    }
                    accumulate(&mut grads, *a, da)?;
                }
                Op::Scale(a, s) => accumulate(&mut grads, *a, g.scale(*s))?,
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) -> Result<()> {
    match &mut grads[v.0] {
        Some(acc) => *acc = acc.add(&g)?,
        slot @ None => *slot = Some(g),
    }
    Ok(())
}

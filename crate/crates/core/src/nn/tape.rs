//! Scalar reverse-mode differentiation.
//!
//! A [`Tape`] records a Wengert list of scalar operations. Objectives build
//! their loss on a tape whose leaves are network head outputs; the adjoints
//! of those leaves are then pushed through the network's own backward pass.

use super::NnError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    index: usize,
    tape_id: u64,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Const,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Exp(usize),
    Ln(usize),
    Square(usize),
    Sum(Vec<usize>),
    LogSumExp(Vec<usize>),
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: f64,
}

#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

fn next_tape_id() -> u64 {
    use std::sync::atomic::{AtomicU64, Ordering};
    static NEXT: AtomicU64 = AtomicU64::new(1);
    NEXT.fetch_add(1, Ordering::Relaxed)
}

impl Tape {
    pub fn new() -> Tape {
        Tape {
            id: next_tape_id(),
            nodes: Vec::new(),
        }
    }

    pub fn with_capacity(n: usize) -> Tape {
        Tape {
            id: next_tape_id(),
            nodes: Vec::with_capacity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: f64) -> Var {
        self.nodes.push(Node { op, value });
        Var {
            index: self.nodes.len() - 1,
            tape_id: self.id,
        }
    }

    fn idx(&self, v: Var) -> usize {
        debug_assert_eq!(v.tape_id, self.id, "variable from a different tape");
        v.index
    }

    pub fn value(&self, v: Var) -> f64 {
        self.nodes[self.idx(v)].value
    }

    /// A differentiable input.
    pub fn leaf(&mut self, value: f64) -> Var {
        self.push(Op::Leaf, value)
    }

    pub fn constant(&mut self, value: f64) -> Var {
        self.push(Op::Const, value)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (i, j) = (self.idx(a), self.idx(b));
        let v = self.nodes[i].value + self.nodes[j].value;
        self.push(Op::Add(i, j), v)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let (i, j) = (self.idx(a), self.idx(b));
        let v = self.nodes[i].value - self.nodes[j].value;
        self.push(Op::Sub(i, j), v)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (i, j) = (self.idx(a), self.idx(b));
        let v = self.nodes[i].value * self.nodes[j].value;
        self.push(Op::Mul(i, j), v)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let i = self.idx(a);
        let v = self.nodes[i].value * c;
        self.push(Op::Scale(i, c), v)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let i = self.idx(a);
        let v = self.nodes[i].value.exp();
        self.push(Op::Exp(i), v)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let i = self.idx(a);
        let v = self.nodes[i].value.ln();
        self.push(Op::Ln(i), v)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let i = self.idx(a);
        let x = self.nodes[i].value;
        self.push(Op::Square(i), x * x)
    }

    pub fn sum(&mut self, xs: &[Var]) -> Var {
        let ids: Vec<usize> = xs.iter().map(|&x| self.idx(x)).collect();
        let v = ids.iter().map(|&i| self.nodes[i].value).sum();
        self.push(Op::Sum(ids), v)
    }

    pub fn mean(&mut self, xs: &[Var]) -> Var {
        let s = self.sum(xs);
        self.scale(s, 1.0 / xs.len() as f64)
    }

    /// Numerically stable `ln(sum_i exp(x_i))`. A single input passes through
    /// unchanged, bit for bit.
    pub fn logsumexp(&mut self, xs: &[Var]) -> Var {
        assert!(!xs.is_empty(), "logsumexp of an empty set");
        let ids: Vec<usize> = xs.iter().map(|&x| self.idx(x)).collect();
        let vals: Vec<f64> = ids.iter().map(|&i| self.nodes[i].value).collect();
        let v = logsumexp(&vals);
        self.push(Op::LogSumExp(ids), v)
    }

    /// Adjoints of every node with respect to `root`.
    pub fn backward(&self, root: Var) -> Result<Gradients, NnError> {
        if root.tape_id != self.id || root.index >= self.nodes.len() {
            return Err(NnError::NoTape);
        }
        let mut adj = vec![0.0; root.index + 1];
        adj[root.index] = 1.0;
        for k in (0..=root.index).rev() {
            let g = adj[k];
            if g == 0.0 {
                continue;
            }
            match &self.nodes[k].op {
                Op::Leaf | Op::Const => {}
                Op::Add(i, j) => {
                    adj[*i] += g;
                    adj[*j] += g;
                }
                Op::Sub(i, j) => {
                    adj[*i] += g;
                    adj[*j] -= g;
                }
                Op::Mul(i, j) => {
                    let (a, b) = (self.nodes[*i].value, self.nodes[*j].value);
                    adj[*i] += g * b;
                    adj[*j] += g * a;
                }
                Op::Scale(i, c) => adj[*i] += g * c,
                Op::Exp(i) => adj[*i] += g * self.nodes[k].value,
                Op::Ln(i) => adj[*i] += g / self.nodes[*i].value,
                Op::Square(i) => adj[*i] += 2.0 * g * self.nodes[*i].value,
                Op::Sum(ids) => {
                    for &i in ids {
                        adj[i] += g;
                    }
                }
                Op::LogSumExp(ids) => {
                    let out = self.nodes[k].value;
                    for &i in ids {
                        adj[i] += g * (self.nodes[i].value - out).exp();
                    }
                }
            }
        }
        Ok(Gradients {
            tape_id: self.id,
            adj,
        })
    }
}

/// Result of [`Tape::backward`].
#[derive(Clone, Debug)]
pub struct Gradients {
    tape_id: u64,
    adj: Vec<f64>,
}

impl Gradients {
    /// d(root)/d(v); zero for nodes recorded after the root.
    pub fn wrt(&self, v: Var) -> f64 {
        debug_assert_eq!(v.tape_id, self.tape_id);
        self.adj.get(v.index).copied().unwrap_or(0.0)
    }
}

/// Stable `ln(sum exp(x))` on plain values; `-inf` for an empty slice.
pub fn logsumexp(xs: &[f64]) -> f64 {
    match xs {
        [] => f64::NEG_INFINITY,
        [x] => *x,
        _ => {
            let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if m == f64::NEG_INFINITY || m == f64::INFINITY {
                return m;
            }
            m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
        }
    }
}

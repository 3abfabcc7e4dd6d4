//! Define-by-run reverse-mode autodiff over a fixed operator set.

use crate::kernels::{self, ConvGeom, Interp};
use crate::params::{Grads, ParamId, ParamStore};
use crate::tensor::Tensor;
use crate::{Error, Result};

/// Handle to a value recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Conv {
        x: Var,
        weight: ParamId,
        bias: ParamId,
        geom: ConvGeom,
    },
    Relu(Var),
    Add(Var, Var),
    Upsample {
        x: Var,
        factor: usize,
        interp: Interp,
    },
    Concat(Vec<Var>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Tape of forward values. Operations evaluate eagerly when recorded.
pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params,
            nodes: Vec::new(),
        }
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Records a constant. Gradients never flow into inputs.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Input, false)
    }

    /// Re-records `v` as a constant, cutting gradient flow behind it.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.nodes[v.0].value.clone();
        self.input(value)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn conv(
        &mut self,
        x: Var,
        weight: ParamId,
        bias: ParamId,
        stride: usize,
        pad: usize,
    ) -> Result<Var> {
        let w = self.params.get(weight);
        let [out_channels, in_channels, k, k2] = w.shape();
        let xv = self.value(x);
        if k != k2 || xv.channels() != in_channels {
            return Err(Error::Shape(format!(
                "conv weight {:?} cannot consume input {:?}",
                w.shape(),
                xv.shape()
            )));
        }
        if xv.height() + 2 * pad < k || xv.width() + 2 * pad < k {
            return Err(Error::Shape(format!(
                "input {:?} smaller than kernel {k}",
                xv.shape()
            )));
        }
        let geom = ConvGeom {
            in_channels,
            out_channels,
            kernel: k,
            stride,
            pad,
            in_h: xv.height(),
            in_w: xv.width(),
        };
        let out = kernels::conv2d_forward(xv, w.data(), self.params.get(bias).data(), &geom);
        Ok(self.push(
            out,
            Op::Conv {
                x,
                weight,
                bias,
                geom,
            },
            true,
        ))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
        let rg = self.needs(x);
        self.push(out, Op::Relu(x), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::Shape(format!(
                "cannot add {:?} and {:?}",
                av.shape(),
                bv.shape()
            )));
        }
        let mut out = av.clone();
        out.add_assign(bv);
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn upsample(&mut self, x: Var, factor: usize, interp: Interp) -> Var {
        if factor == 1 {
            return x;
        }
        let out = kernels::upsample_forward(self.value(x), factor, interp);
        let rg = self.needs(x);
        self.push(out, Op::Upsample { x, factor, interp }, rg)
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Shape("concat of zero tensors".into()))?;
        let [n, _, h, w] = self.value(*first).shape();
        for p in parts {
            let [pn, _, ph, pw] = self.value(*p).shape();
            if (pn, ph, pw) != (n, h, w) {
                return Err(Error::Shape(format!(
                    "concat part {:?} does not match batch/spatial {:?}",
                    self.value(*p).shape(),
                    (n, h, w)
                )));
            }
        }
        let values: Vec<&Tensor> = parts.iter().map(|p| self.value(*p)).collect();
        let out = kernels::concat_channels(&values);
        let rg = parts.iter().any(|p| self.needs(*p));
        Ok(self.push(out, Op::Concat(parts.to_vec()), rg))
    }

    /// Back-propagates the given output gradients and returns parameter
    /// gradients. Seeds must match the shapes of their variables.
    pub fn backward(&self, seeds: &[(Var, Tensor)]) -> Result<Grads> {
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        for (v, g) in seeds {
            if g.shape() != self.value(*v).shape() {
                return Err(Error::Shape(format!(
                    "seed gradient {:?} does not match value {:?}",
                    g.shape(),
                    self.value(*v).shape()
                )));
            }
            accumulate(&mut grads[v.0], g.clone());
        }
        let mut out = Grads::new(self.params.len());
        for idx in (0..self.nodes.len()).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(dy) = grads[idx].take() else {
                continue;
            };
            match &node.op {
                Op::Input => {}
                Op::Conv {
                    x,
                    weight,
                    bias,
                    geom,
                } => {
                    let need_input = self.needs(*x);
                    let g = kernels::conv2d_backward(
                        self.value(*x),
                        self.params.get(*weight).data(),
                        &dy,
                        geom,
                        need_input,
                    );
                    out.accumulate(*weight, &g.weight);
                    out.accumulate(*bias, &g.bias);
                    if let Some(dx) = g.input {
                        accumulate(&mut grads[x.0], dx);
                    }
                }
                Op::Relu(x) => {
                    let mut dx = dy;
                    for (d, y) in dx.data_mut().iter_mut().zip(node.value.data()) {
                        if *y <= 0.0 {
                            *d = 0.0;
                        }
                    }
                    accumulate(&mut grads[x.0], dx);
                }
                Op::Add(a, b) => {
                    if self.needs(*b) {
                        accumulate(&mut grads[b.0], dy.clone());
                    }
                    if self.needs(*a) {
                        accumulate(&mut grads[a.0], dy);
                    }
                }
                Op::Upsample { x, factor, interp } => {
                    let dx = kernels::upsample_backward(&dy, *factor, *interp);
                    accumulate(&mut grads[x.0], dx);
                }
                Op::Concat(parts) => {
                    let channels: Vec<usize> =
                        parts.iter().map(|p| self.value(*p).channels()).collect();
                    for (p, g) in parts.iter().zip(kernels::split_channels(&dy, &channels)) {
                        if self.needs(*p) {
                            accumulate(&mut grads[p.0], g);
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

fn accumulate(slot: &mut Option<Tensor>, g: Tensor) {
    match slot {
        Some(acc) => acc.add_assign(&g),
        None => *slot = Some(g),
    }
}

//! Define-by-run tape for reverse-mode differentiation.
//!
//! Every primitive application appends a node holding the operation, its
//! input references, and the computed output, so the recorded program can be
//! replayed forward (bit-exactly) and traversed backward in strict reverse
//! topological order. Nodes are appended in evaluation order, which makes the
//! insertion order a topological order by construction.

use crate::error::{Error, Result};
use crate::kernels;
use crate::tensor::{Activation, BinaryOp, ConvSpec, PoolMode, ReduceMode, Scalar, Tensor};
use std::collections::HashMap;

/// Index of a recorded value on the tape.
pub type ValueId = usize;

/// Role of a leaf value.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LeafKind {
    /// Differentiated data input.
    Input,
    /// Differentiated learnable parameter.
    Param,
    /// Non-differentiated constant (e.g. batch-norm running statistics).
    Constant,
}

/// Primitive applied at a node. Carries everything needed to recompute the
/// node's output from its inputs.
#[derive(Clone, Debug)]
pub enum OpKind {
    Leaf(LeafKind),
    Conv2d(ConvSpec),
    Conv1d,
    Pool { out_h: usize, out_w: usize, mode: PoolMode },
    ChannelReduce(ReduceMode),
    Act(Activation),
    /// Normalizes with batch statistics recomputed from the input; the
    /// statistics are kept as saved values.
    BnTrain { eps: f64 },
    /// Normalizes with the running statistics passed as constant inputs.
    BnInfer { eps: f64 },
    Upsample { factor: usize },
    L2Norm { eps: f64 },
    ChannelVariance,
    Binary(BinaryOp),
    /// Contiguous channel range of the single input.
    Slice { offset: usize, len: usize },
    Concat,
    Shuffle { groups: usize },
    Scale { factor: f64 },
    Reshape { dims: [usize; 4] },
}

#[derive(Clone, Debug)]
struct Node<T: Scalar> {
    op: OpKind,
    inputs: Vec<ValueId>,
    value: Tensor<T>,
    /// Auxiliary forward results (BnTrain keeps [batch_mean, batch_var]).
    saved: Vec<Tensor<T>>,
    /// Present on leaves only.
    name: Option<String>,
}

/// Gradients of `<seed, output>` with respect to the recorded leaves.
pub struct Gradients<T: Scalar> {
    grads: Vec<Option<Tensor<T>>>,
    named: Vec<(String, ValueId, [usize; 4])>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient for a named leaf (inputs and parameters); `None` when no
    /// gradient flow reached it (its gradient is identically zero).
    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.named
            .iter()
            .find(|(n, _, _)| n == name)
            .and_then(|(_, id, _)| self.grads[*id].as_ref())
    }

    pub fn by_id(&self, id: ValueId) -> Option<&Tensor<T>> {
        self.grads.get(id).and_then(|g| g.as_ref())
    }

    /// One entry per input and parameter leaf; leaves the flow never reached
    /// yield zero tensors of the leaf shape.
    pub fn into_map(mut self) -> HashMap<String, Tensor<T>> {
        let mut out = HashMap::new();
        for (name, id, dims) in std::mem::take(&mut self.named) {
            let g = self.grads[id].take().unwrap_or_else(|| Tensor::zeros(dims));
            out.insert(name, g);
        }
        out
    }
}

/// Recording tape. All recording methods evaluate eagerly through the same
/// kernel the replay path uses.
pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
    /// BnTrain nodes by parameter prefix, for folding batch statistics back
    /// into running statistics after a training step.
    bn_train: Vec<(String, ValueId)>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), bn_train: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: ValueId) -> &Tensor<T> {
        &self.nodes[id].value
    }

    pub fn op(&self, id: ValueId) -> &OpKind {
        &self.nodes[id].op
    }

    /// Named leaves of the given kinds, in recording order.
    pub fn leaves(&self, kinds: &[LeafKind]) -> Vec<(String, ValueId)> {
        self.nodes
            .iter()
            .enumerate()
            .filter_map(|(id, n)| match &n.op {
                OpKind::Leaf(k) if kinds.contains(k) => {
                    n.name.as_ref().map(|name| (name.clone(), id))
                }
                _ => None,
            })
            .collect()
    }

    /// Batch-norm nodes recorded in train mode, by parameter prefix.
    pub fn bn_train_nodes(&self) -> &[(String, ValueId)] {
        &self.bn_train
    }

    /// Batch statistics (mean, var) saved by a BnTrain node.
    pub fn bn_batch_stats(&self, id: ValueId) -> Option<(&Tensor<T>, &Tensor<T>)> {
        match self.nodes[id].op {
            OpKind::BnTrain { .. } => Some((&self.nodes[id].saved[0], &self.nodes[id].saved[1])),
            _ => None,
        }
    }

    // ── Leaves ───────────────────────────────────────────────────────────

    fn push_leaf(&mut self, kind: LeafKind, name: &str, value: Tensor<T>) -> ValueId {
        let id = self.nodes.len();
        self.nodes.push(Node {
            op: OpKind::Leaf(kind),
            inputs: Vec::new(),
            value,
            saved: Vec::new(),
            name: Some(name.to_string()),
        });
        id
    }

    pub fn input(&mut self, name: &str, value: Tensor<T>) -> ValueId {
        self.push_leaf(LeafKind::Input, name, value)
    }

    pub fn param(&mut self, name: &str, value: Tensor<T>) -> ValueId {
        self.push_leaf(LeafKind::Param, name, value)
    }

    pub fn constant(&mut self, name: &str, value: Tensor<T>) -> ValueId {
        self.push_leaf(LeafKind::Constant, name, value)
    }

    // ── Recording ────────────────────────────────────────────────────────

    fn push_op(&mut self, op: OpKind, inputs: Vec<ValueId>) -> Result<ValueId> {
        for &i in &inputs {
            if i >= self.nodes.len() {
                return Err(Error::Internal(format!("value id {i} out of range")));
            }
        }
        let tensors: Vec<&Tensor<T>> = inputs.iter().map(|&i| &self.nodes[i].value).collect();
        let (value, saved) = eval_op(&op, &tensors)?;
        let id = self.nodes.len();
        self.nodes.push(Node { op, inputs, value, saved, name: None });
        Ok(id)
    }

    pub fn conv2d(
        &mut self,
        x: ValueId,
        weight: ValueId,
        bias: Option<ValueId>,
        spec: ConvSpec,
    ) -> Result<ValueId> {
        let mut inputs = vec![x, weight];
        if let Some(b) = bias {
            inputs.push(b);
        }
        if spec.has_bias != bias.is_some() {
            return Err(Error::Config("conv bias presence disagrees with spec".into()));
        }
        self.push_op(OpKind::Conv2d(spec), inputs)
    }

    pub fn conv1d(&mut self, x: ValueId, weight: ValueId, bias: Option<ValueId>) -> Result<ValueId> {
        let mut inputs = vec![x, weight];
        if let Some(b) = bias {
            inputs.push(b);
        }
        self.push_op(OpKind::Conv1d, inputs)
    }

    pub fn pool(&mut self, x: ValueId, out_h: usize, out_w: usize, mode: PoolMode) -> Result<ValueId> {
        self.push_op(OpKind::Pool { out_h, out_w, mode }, vec![x])
    }

    pub fn channel_reduce(&mut self, x: ValueId, mode: ReduceMode) -> Result<ValueId> {
        self.push_op(OpKind::ChannelReduce(mode), vec![x])
    }

    pub fn act(&mut self, x: ValueId, kind: Activation) -> Result<ValueId> {
        self.push_op(OpKind::Act(kind), vec![x])
    }

    /// Batch norm over batch statistics; `name` keys the running-statistics
    /// update after a training step.
    pub fn batch_norm_train(
        &mut self,
        name: &str,
        x: ValueId,
        gamma: ValueId,
        beta: ValueId,
        eps: f64,
    ) -> Result<ValueId> {
        let id = self.push_op(OpKind::BnTrain { eps }, vec![x, gamma, beta])?;
        self.bn_train.push((name.to_string(), id));
        Ok(id)
    }

    /// Batch norm over running statistics (passed as constants).
    pub fn batch_norm_infer(
        &mut self,
        x: ValueId,
        gamma: ValueId,
        beta: ValueId,
        mean: ValueId,
        var: ValueId,
        eps: f64,
    ) -> Result<ValueId> {
        self.push_op(OpKind::BnInfer { eps }, vec![x, gamma, beta, mean, var])
    }

    pub fn upsample(&mut self, x: ValueId, factor: usize) -> Result<ValueId> {
        self.push_op(OpKind::Upsample { factor }, vec![x])
    }

    pub fn l2norm(&mut self, x: ValueId, eps: f64) -> Result<ValueId> {
        self.push_op(OpKind::L2Norm { eps }, vec![x])
    }

    pub fn channel_variance(&mut self, x: ValueId) -> Result<ValueId> {
        self.push_op(OpKind::ChannelVariance, vec![x])
    }

    pub fn add(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        self.push_op(OpKind::Binary(BinaryOp::Add), vec![a, b])
    }

    pub fn mul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        self.push_op(OpKind::Binary(BinaryOp::Mul), vec![a, b])
    }

    pub fn slice_channels(&mut self, x: ValueId, offset: usize, len: usize) -> Result<ValueId> {
        self.push_op(OpKind::Slice { offset, len }, vec![x])
    }

    /// Splits the channel axis into parts of the given sizes.
    pub fn split_channels(&mut self, x: ValueId, sizes: &[usize]) -> Result<Vec<ValueId>> {
        let c = self.nodes[x].value.channels();
        if sizes.iter().sum::<usize>() != c {
            return Err(Error::Shape(format!("split sizes {sizes:?} do not sum to {c}")));
        }
        let mut out = Vec::with_capacity(sizes.len());
        let mut offset = 0;
        for &len in sizes {
            out.push(self.slice_channels(x, offset, len)?);
            offset += len;
        }
        Ok(out)
    }

    pub fn concat_channels(&mut self, parts: &[ValueId]) -> Result<ValueId> {
        self.push_op(OpKind::Concat, parts.to_vec())
    }

    pub fn shuffle(&mut self, x: ValueId, groups: usize) -> Result<ValueId> {
        self.push_op(OpKind::Shuffle { groups }, vec![x])
    }

    pub fn scale(&mut self, x: ValueId, factor: f64) -> Result<ValueId> {
        self.push_op(OpKind::Scale { factor }, vec![x])
    }

    pub fn reshape(&mut self, x: ValueId, dims: [usize; 4]) -> Result<ValueId> {
        self.push_op(OpKind::Reshape { dims }, vec![x])
    }

    // ── Backward ─────────────────────────────────────────────────────────

    /// Gradient of `<seed, value(output)>` with respect to every input and
    /// parameter leaf, via reverse traversal of the recorded program.
    pub fn backward(&self, output: ValueId, seed: &Tensor<T>) -> Result<Gradients<T>> {
        if output >= self.nodes.len() {
            return Err(Error::Internal(format!("output id {output} out of range")));
        }
        if seed.dims() != self.nodes[output].value.dims() {
            return Err(Error::Shape(format!(
                "seed dims {:?} do not match output dims {:?}",
                seed.dims(),
                self.nodes[output].value.dims()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        grads[output] = Some(seed.clone());
        for id in (0..=output).rev() {
            if grads[id].is_none() {
                continue;
            }
            let node = &self.nodes[id];
            if matches!(node.op, OpKind::Leaf(_)) {
                continue;
            }
            let g = grads[id].clone().expect("gradient present");
            let inputs: Vec<&Tensor<T>> =
                node.inputs.iter().map(|&i| &self.nodes[i].value).collect();
            let contributions = backward_op(&node.op, &inputs, &node.value, &node.saved, &g)?;
            debug_assert_eq!(contributions.len(), node.inputs.len());
            for (slot, contribution) in node.inputs.iter().zip(contributions) {
                let Some(contribution) = contribution else { continue };
                accumulate(&mut grads[*slot], contribution);
            }
        }
        let named = self
            .leaves(&[LeafKind::Input, LeafKind::Param])
            .into_iter()
            .map(|(name, id)| (name, id, self.nodes[id].value.dims()))
            .collect();
        Ok(Gradients { grads, named })
    }

    // ── Replay ───────────────────────────────────────────────────────────

    /// Marks every node whose value depends on `leaf`.
    pub fn affected_by(&self, leaf: ValueId) -> Vec<bool> {
        let mut affected = vec![false; self.nodes.len()];
        affected[leaf] = true;
        for (id, node) in self.nodes.iter().enumerate() {
            if !affected[id] && node.inputs.iter().any(|&i| affected[i]) {
                affected[id] = true;
            }
        }
        affected
    }

    /// Recomputes `<seed, value(target)>` with one leaf value replaced,
    /// re-evaluating only the nodes the leaf can reach.
    pub fn replay_dot(
        &self,
        target: ValueId,
        leaf: ValueId,
        replacement: &Tensor<T>,
        affected: &[bool],
        seed: &Tensor<T>,
    ) -> Result<f64> {
        let mut scratch: Vec<Option<Tensor<T>>> = vec![None; target + 1];
        for id in 0..=target {
            if !affected[id] {
                continue;
            }
            if id == leaf {
                scratch[id] = Some(replacement.clone());
                continue;
            }
            let node = &self.nodes[id];
            if matches!(node.op, OpKind::Leaf(_)) {
                continue;
            }
            let inputs: Vec<&Tensor<T>> = node
                .inputs
                .iter()
                .map(|&i| scratch[i].as_ref().unwrap_or(&self.nodes[i].value))
                .collect();
            let (value, _) = eval_op(&node.op, &inputs)?;
            scratch[id] = Some(value);
        }
        let out = scratch[target].as_ref().unwrap_or(&self.nodes[target].value);
        let mut acc = 0.0f64;
        for (s, v) in seed.data().iter().zip(out.data()) {
            acc += s.to_f64() * v.to_f64();
        }
        Ok(acc)
    }

    /// Re-evaluates every recorded node and checks the recorded outputs are
    /// reproduced bit-exactly.
    pub fn verify_replay(&self) -> Result<()> {
        for (id, node) in self.nodes.iter().enumerate() {
            if matches!(node.op, OpKind::Leaf(_)) {
                continue;
            }
            let inputs: Vec<&Tensor<T>> =
                node.inputs.iter().map(|&i| &self.nodes[i].value).collect();
            let (value, _) = eval_op(&node.op, &inputs)?;
            if !value.bit_eq(&node.value) {
                return Err(Error::Internal(format!("tape replay mismatch at node {id}")));
            }
        }
        Ok(())
    }

    /// Smallest distance of any recorded value to a gradient kink: ReLU and
    /// hardswish inputs near their corner points, near-ties inside max
    /// pooling bins or channel-max reductions, and channel norms near the
    /// normalization epsilon. Infinite when no kinked primitive is recorded.
    pub fn kink_margin(&self) -> f64 {
        let mut margin = f64::INFINITY;
        for node in &self.nodes {
            match &node.op {
                OpKind::Act(Activation::Relu) => {
                    for v in self.nodes[node.inputs[0]].value.data() {
                        margin = margin.min(v.to_f64().abs());
                    }
                }
                OpKind::Act(Activation::Hardswish) => {
                    for v in self.nodes[node.inputs[0]].value.data() {
                        let x = v.to_f64();
                        margin = margin.min((x - 3.0).abs().min((x + 3.0).abs()));
                    }
                }
                OpKind::Pool { out_h, out_w, mode: PoolMode::Max } => {
                    let x = &self.nodes[node.inputs[0]].value;
                    let [n, c, h, w] = x.dims();
                    for ni in 0..n {
                        for ci in 0..c {
                            for oy in 0..*out_h {
                                let (y0, y1) = kernels::pool_bin(oy, h, *out_h);
                                for ox in 0..*out_w {
                                    let (x0, x1) = kernels::pool_bin(ox, w, *out_w);
                                    if (y1 - y0) * (x1 - x0) < 2 {
                                        continue;
                                    }
                                    let mut best = f64::NEG_INFINITY;
                                    let mut second = f64::NEG_INFINITY;
                                    for y in y0..y1 {
                                        for xx in x0..x1 {
                                            let v = x.at(ni, ci, y, xx).to_f64();
                                            if v > best {
                                                second = best;
                                                best = v;
                                            } else if v > second {
                                                second = v;
                                            }
                                        }
                                    }
                                    margin = margin.min(best - second);
                                }
                            }
                        }
                    }
                }
                OpKind::ChannelReduce(ReduceMode::Max) => {
                    let x = &self.nodes[node.inputs[0]].value;
                    let [n, c, h, w] = x.dims();
                    if c < 2 {
                        continue;
                    }
                    for ni in 0..n {
                        for y in 0..h {
                            for xx in 0..w {
                                let mut best = f64::NEG_INFINITY;
                                let mut second = f64::NEG_INFINITY;
                                for ci in 0..c {
                                    let v = x.at(ni, ci, y, xx).to_f64();
                                    if v > best {
                                        second = best;
                                        best = v;
                                    } else if v > second {
                                        second = v;
                                    }
                                }
                                margin = margin.min(best - second);
                            }
                        }
                    }
                }
                OpKind::L2Norm { eps } => {
                    let x = &self.nodes[node.inputs[0]].value;
                    let [n, c, h, w] = x.dims();
                    for ni in 0..n {
                        for y in 0..h {
                            for xx in 0..w {
                                let mut sq = 0.0f64;
                                for ci in 0..c {
                                    let v = x.at(ni, ci, y, xx).to_f64();
                                    sq += v * v;
                                }
                                margin = margin.min((sq.sqrt() - eps).abs());
                            }
                        }
                    }
                }
                _ => {}
            }
        }
        margin
    }
}

fn accumulate<T: Scalar>(dst: &mut Option<Tensor<T>>, g: Tensor<T>) {
    match dst {
        None => *dst = Some(g),
        Some(acc) => {
            debug_assert_eq!(acc.dims(), g.dims());
            for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                *a = T::from_f64(a.to_f64() + b.to_f64());
            }
        }
    }
}

/// Single evaluation authority shared by recording and replay.
pub(crate) fn eval_op<T: Scalar>(
    op: &OpKind,
    inputs: &[&Tensor<T>],
) -> Result<(Tensor<T>, Vec<Tensor<T>>)> {
    let value = match op {
        OpKind::Leaf(_) => return Err(Error::Internal("leaf nodes are not evaluated".into())),
        OpKind::Conv2d(spec) => {
            let bias = if spec.has_bias { Some(inputs[2]) } else { None };
            kernels::conv2d(inputs[0], spec, inputs[1], bias)?
        }
        OpKind::Conv1d => {
            let bias = inputs.get(2).copied();
            kernels::conv1d(inputs[0], inputs[1], bias)?
        }
        OpKind::Pool { out_h, out_w, mode } => {
            kernels::adaptive_pool(inputs[0], *out_h, *out_w, *mode)?
        }
        OpKind::ChannelReduce(mode) => kernels::channel_reduce(inputs[0], *mode),
        OpKind::Act(kind) => kernels::activation(inputs[0], *kind),
        OpKind::BnTrain { eps } => {
            let (mean, var) = kernels::batch_stats(inputs[0]);
            let out = kernels::batch_norm_apply(inputs[0], inputs[1], inputs[2], &mean, &var, *eps)?;
            return Ok((out, vec![mean, var]));
        }
        OpKind::BnInfer { eps } => kernels::batch_norm_apply(
            inputs[0], inputs[1], inputs[2], inputs[3], inputs[4], *eps,
        )?,
        OpKind::Upsample { factor } => kernels::upsample_nearest(inputs[0], *factor)?,
        OpKind::L2Norm { eps } => kernels::l2_normalize_channels(inputs[0], *eps),
        OpKind::ChannelVariance => kernels::channel_variance(inputs[0]),
        OpKind::Binary(op) => kernels::elementwise(inputs[0], inputs[1], *op)?,
        OpKind::Slice { offset, len } => kernels::channel_slice(inputs[0], *offset, *len)?,
        OpKind::Concat => kernels::channel_concat(inputs)?,
        OpKind::Shuffle { groups } => kernels::channel_shuffle(inputs[0], *groups)?,
        OpKind::Scale { factor } => kernels::scale(inputs[0], *factor),
        OpKind::Reshape { dims } => inputs[0].reshaped(*dims)?,
    };
    Ok((value, Vec::new()))
}

/// Vector-Jacobian product of one primitive: upstream gradient in, one
/// optional gradient per input out (None for non-differentiated inputs).
fn backward_op<T: Scalar>(
    op: &OpKind,
    inputs: &[&Tensor<T>],
    value: &Tensor<T>,
    saved: &[Tensor<T>],
    grad: &Tensor<T>,
) -> Result<Vec<Option<Tensor<T>>>> {
    match op {
        OpKind::Leaf(_) => Ok(vec![]),
        OpKind::Conv2d(spec) => conv2d_backward(inputs, spec, grad),
        OpKind::Conv1d => conv1d_backward(inputs, grad),
        OpKind::Pool { out_h, out_w, mode } => {
            Ok(vec![Some(pool_backward(inputs[0], *out_h, *out_w, *mode, grad))])
        }
        OpKind::ChannelReduce(mode) => {
            Ok(vec![Some(channel_reduce_backward(inputs[0], *mode, grad))])
        }
        OpKind::Act(kind) => {
            let x = inputs[0];
            let mut dx = Tensor::zeros(x.dims());
            for i in 0..x.numel() {
                let d = kernels::activation_grad_f64(
                    *kind,
                    x.data()[i].to_f64(),
                    value.data()[i].to_f64(),
                );
                dx.data_mut()[i] = T::from_f64(grad.data()[i].to_f64() * d);
            }
            Ok(vec![Some(dx)])
        }
        OpKind::BnTrain { eps } => bn_train_backward(inputs, saved, *eps, grad),
        OpKind::BnInfer { eps } => bn_infer_backward(inputs, *eps, grad),
        OpKind::Upsample { factor } => {
            let x = inputs[0];
            let [n, c, h, w] = x.dims();
            let f = *factor;
            let mut dx = Tensor::zeros(x.dims());
            for ni in 0..n {
                for ci in 0..c {
                    for y in 0..h {
                        for xx in 0..w {
                            let mut acc = 0.0f64;
                            for dy in 0..f {
                                for dxp in 0..f {
                                    acc += grad.at(ni, ci, y * f + dy, xx * f + dxp).to_f64();
                                }
                            }
                            dx.set(ni, ci, y, xx, T::from_f64(acc));
                        }
                    }
                }
            }
            Ok(vec![Some(dx)])
        }
        OpKind::L2Norm { eps } => Ok(vec![Some(l2norm_backward(inputs[0], value, *eps, grad))]),
        OpKind::ChannelVariance => {
            let x = inputs[0];
            let [n, c, h, w] = x.dims();
            let m = (h * w) as f64;
            let mut dx = Tensor::zeros(x.dims());
            for ni in 0..n {
                for ci in 0..c {
                    let mut acc = 0.0f64;
                    for y in 0..h {
                        for xx in 0..w {
                            acc += x.at(ni, ci, y, xx).to_f64();
                        }
                    }
                    let mu = acc / m;
                    let go = grad.at(ni, ci, 0, 0).to_f64();
                    for y in 0..h {
                        for xx in 0..w {
                            let d = 2.0 * (x.at(ni, ci, y, xx).to_f64() - mu) / m;
                            dx.set(ni, ci, y, xx, T::from_f64(go * d));
                        }
                    }
                }
            }
            Ok(vec![Some(dx)])
        }
        OpKind::Binary(BinaryOp::Add) => Ok(vec![
            Some(kernels::reduce_to_shape(grad, inputs[0].dims())),
            Some(kernels::reduce_to_shape(grad, inputs[1].dims())),
        ]),
        OpKind::Binary(BinaryOp::Mul) => {
            let da_full = kernels::elementwise(grad, inputs[1], BinaryOp::Mul)?;
            let db_full = kernels::elementwise(grad, inputs[0], BinaryOp::Mul)?;
            Ok(vec![
                Some(kernels::reduce_to_shape(&da_full, inputs[0].dims())),
                Some(kernels::reduce_to_shape(&db_full, inputs[1].dims())),
            ])
        }
        OpKind::Slice { offset, len } => {
            let x = inputs[0];
            let [n, _, h, w] = x.dims();
            let mut dx = Tensor::zeros(x.dims());
            for ni in 0..n {
                for ci in 0..*len {
                    for y in 0..h {
                        for xx in 0..w {
                            dx.set(ni, offset + ci, y, xx, grad.at(ni, ci, y, xx));
                        }
                    }
                }
            }
            Ok(vec![Some(dx)])
        }
        OpKind::Concat => {
            let mut out = Vec::with_capacity(inputs.len());
            let mut offset = 0;
            for part in inputs {
                out.push(Some(kernels::channel_slice(grad, offset, part.channels())?));
                offset += part.channels();
            }
            Ok(out)
        }
        OpKind::Shuffle { groups } => {
            // Inverse permutation: forward wrote dst = c*G + g from src = g*per + c.
            let [n, c, h, w] = grad.dims();
            let per = c / groups;
            let mut dx = Tensor::zeros(grad.dims());
            for ni in 0..n {
                for cj in 0..per {
                    for g in 0..*groups {
                        let dst = cj * groups + g;
                        let src = g * per + cj;
                        for y in 0..h {
                            for xx in 0..w {
                                dx.set(ni, src, y, xx, grad.at(ni, dst, y, xx));
                            }
                        }
                    }
                }
            }
            Ok(vec![Some(dx)])
        }
        OpKind::Scale { factor } => Ok(vec![Some(kernels::scale(grad, *factor))]),
        OpKind::Reshape { .. } => Ok(vec![Some(grad.reshaped(inputs[0].dims())?)]),
    }
}

fn conv2d_backward<T: Scalar>(
    inputs: &[&Tensor<T>],
    spec: &ConvSpec,
    grad: &Tensor<T>,
) -> Result<Vec<Option<Tensor<T>>>> {
    let x = inputs[0];
    let weight = inputs[1];
    let [n, _, h, w] = x.dims();
    let [_, go_c, oh, ow] = grad.dims();
    debug_assert_eq!(go_c, spec.out_channels);
    let icg = spec.in_channels / spec.groups;
    let ocg = spec.out_channels / spec.groups;

    let mut dx = vec![0.0f64; x.numel()];
    let mut dw = vec![0.0f64; weight.numel()];
    let mut db = vec![0.0f64; spec.out_channels];
    for ni in 0..n {
        for g in 0..spec.groups {
            for ocl in 0..ocg {
                let oc = g * ocg + ocl;
                for oy in 0..oh {
                    for ox in 0..ow {
                        let go = grad.at(ni, oc, oy, ox).to_f64();
                        db[oc] += go;
                        for icl in 0..icg {
                            let ic = g * icg + icl;
                            for ky in 0..spec.kernel_h {
                                let iy = (oy * spec.stride + ky) as isize - spec.padding as isize;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                for kx in 0..spec.kernel_w {
                                    let ix =
                                        (ox * spec.stride + kx) as isize - spec.padding as isize;
                                    if ix < 0 || ix >= w as isize {
                                        continue;
                                    }
                                    let xi = x.idx(ni, ic, iy as usize, ix as usize);
                                    let wi = weight.idx(oc, icl, ky, kx);
                                    dx[xi] += go * weight.data()[wi].to_f64();
                                    dw[wi] += go * x.data()[xi].to_f64();
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    let dx = tensor_from_f64(x.dims(), &dx);
    let dw = tensor_from_f64(weight.dims(), &dw);
    let mut out = vec![Some(dx), Some(dw)];
    if spec.has_bias {
        out.push(Some(tensor_from_f64(inputs[2].dims(), &db)));
    }
    Ok(out)
}

fn conv1d_backward<T: Scalar>(
    inputs: &[&Tensor<T>],
    grad: &Tensor<T>,
) -> Result<Vec<Option<Tensor<T>>>> {
    let x = inputs[0];
    let weight = inputs[1];
    let [n, _, len, _] = x.dims();
    let k = weight.numel();
    let half = (k - 1) / 2;
    let mut dx = vec![0.0f64; x.numel()];
    let mut dw = vec![0.0f64; k];
    let mut db = 0.0f64;
    for ni in 0..n {
        for p in 0..len {
            let go = grad.at(ni, 0, p, 0).to_f64();
            db += go;
            for j in 0..k {
                let q = p as isize + j as isize - half as isize;
                if q < 0 || q >= len as isize {
                    continue;
                }
                let xi = x.idx(ni, 0, q as usize, 0);
                dx[xi] += go * weight.data()[j].to_f64();
                dw[j] += go * x.data()[xi].to_f64();
            }
        }
    }
    let mut out = vec![
        Some(tensor_from_f64(x.dims(), &dx)),
        Some(tensor_from_f64(weight.dims(), &dw)),
    ];
    if inputs.len() > 2 {
        out.push(Some(tensor_from_f64(inputs[2].dims(), &[db])));
    }
    Ok(out)
}

fn pool_backward<T: Scalar>(
    x: &Tensor<T>,
    out_h: usize,
    out_w: usize,
    mode: PoolMode,
    grad: &Tensor<T>,
) -> Tensor<T> {
    let [n, c, h, w] = x.dims();
    let mut dx = vec![0.0f64; x.numel()];
    for ni in 0..n {
        for ci in 0..c {
            for oy in 0..out_h {
                let (y0, y1) = kernels::pool_bin(oy, h, out_h);
                for ox in 0..out_w {
                    let (x0, x1) = kernels::pool_bin(ox, w, out_w);
                    let go = grad.at(ni, ci, oy, ox).to_f64();
                    match mode {
                        PoolMode::Avg => {
                            let share = go / ((y1 - y0) * (x1 - x0)) as f64;
                            for y in y0..y1 {
                                for xx in x0..x1 {
                                    dx[x.idx(ni, ci, y, xx)] += share;
                                }
                            }
                        }
                        PoolMode::Max => {
                            // Route to the first maximum in scan order.
                            let mut best = f64::NEG_INFINITY;
                            let mut best_idx = x.idx(ni, ci, y0, x0);
                            for y in y0..y1 {
                                for xx in x0..x1 {
                                    let v = x.at(ni, ci, y, xx).to_f64();
                                    if v > best {
                                        best = v;
                                        best_idx = x.idx(ni, ci, y, xx);
                                    }
                                }
                            }
                            dx[best_idx] += go;
                        }
                    }
                }
            }
        }
    }
    tensor_from_f64(x.dims(), &dx)
}

fn channel_reduce_backward<T: Scalar>(
    x: &Tensor<T>,
    mode: ReduceMode,
    grad: &Tensor<T>,
) -> Tensor<T> {
    let [n, c, h, w] = x.dims();
    let mut dx = vec![0.0f64; x.numel()];
    for ni in 0..n {
        for y in 0..h {
            for xx in 0..w {
                let go = grad.at(ni, 0, y, xx).to_f64();
                match mode {
                    ReduceMode::Mean => {
                        let share = go / c as f64;
                        for ci in 0..c {
                            dx[x.idx(ni, ci, y, xx)] += share;
                        }
                    }
                    ReduceMode::Max => {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_c = 0;
                        for ci in 0..c {
                            let v = x.at(ni, ci, y, xx).to_f64();
                            if v > best {
                                best = v;
                                best_c = ci;
                            }
                        }
                        dx[x.idx(ni, best_c, y, xx)] += go;
                    }
                }
            }
        }
    }
    tensor_from_f64(x.dims(), &dx)
}

fn l2norm_backward<T: Scalar>(
    x: &Tensor<T>,
    y: &Tensor<T>,
    eps: f64,
    grad: &Tensor<T>,
) -> Tensor<T> {
    let [n, c, h, w] = x.dims();
    let mut dx = Tensor::zeros(x.dims());
    for ni in 0..n {
        for yy in 0..h {
            for xx in 0..w {
                let mut sq = 0.0f64;
                for ci in 0..c {
                    let v = x.at(ni, ci, yy, xx).to_f64();
                    sq += v * v;
                }
                let r = sq.sqrt();
                if r >= eps {
                    let mut gy = 0.0f64;
                    for ci in 0..c {
                        gy += grad.at(ni, ci, yy, xx).to_f64() * y.at(ni, ci, yy, xx).to_f64();
                    }
                    for ci in 0..c {
                        let g = grad.at(ni, ci, yy, xx).to_f64();
                        let yv = y.at(ni, ci, yy, xx).to_f64();
                        dx.set(ni, ci, yy, xx, T::from_f64((g - yv * gy) / r));
                    }
                } else {
                    for ci in 0..c {
                        let g = grad.at(ni, ci, yy, xx).to_f64();
                        dx.set(ni, ci, yy, xx, T::from_f64(g / eps));
                    }
                }
            }
        }
    }
    dx
}

fn bn_train_backward<T: Scalar>(
    inputs: &[&Tensor<T>],
    saved: &[Tensor<T>],
    eps: f64,
    grad: &Tensor<T>,
) -> Result<Vec<Option<Tensor<T>>>> {
    let x = inputs[0];
    let gamma = inputs[1];
    let (mean, var) = (&saved[0], &saved[1]);
    let [n, c, h, w] = x.dims();
    let m = (n * h * w) as f64;
    let mut dx = Tensor::zeros(x.dims());
    let mut dgamma = Tensor::zeros(gamma.dims());
    let mut dbeta = Tensor::zeros(gamma.dims());
    for ci in 0..c {
        let mu = mean.data()[ci].to_f64();
        let inv = 1.0 / (var.data()[ci].to_f64() + eps).sqrt();
        let gam = gamma.data()[ci].to_f64();
        let mut sum_g = 0.0f64;
        let mut sum_gx = 0.0f64;
        for ni in 0..n {
            for y in 0..h {
                for xx in 0..w {
                    let g = grad.at(ni, ci, y, xx).to_f64();
                    let xh = (x.at(ni, ci, y, xx).to_f64() - mu) * inv;
                    sum_g += g;
                    sum_gx += g * xh;
                }
            }
        }
        dgamma.data_mut()[ci] = T::from_f64(sum_gx);
        dbeta.data_mut()[ci] = T::from_f64(sum_g);
        for ni in 0..n {
            for y in 0..h {
                for xx in 0..w {
                    let g = grad.at(ni, ci, y, xx).to_f64();
                    let xh = (x.at(ni, ci, y, xx).to_f64() - mu) * inv;
                    let d = gam * inv * (g - sum_g / m - xh * sum_gx / m);
                    dx.set(ni, ci, y, xx, T::from_f64(d));
                }
            }
        }
    }
    Ok(vec![Some(dx), Some(dgamma), Some(dbeta)])
}

fn bn_infer_backward<T: Scalar>(
    inputs: &[&Tensor<T>],
    eps: f64,
    grad: &Tensor<T>,
) -> Result<Vec<Option<Tensor<T>>>> {
    let x = inputs[0];
    let gamma = inputs[1];
    let mean = inputs[3];
    let var = inputs[4];
    let [n, c, h, w] = x.dims();
    let mut dx = Tensor::zeros(x.dims());
    let mut dgamma = Tensor::zeros(gamma.dims());
    let mut dbeta = Tensor::zeros(gamma.dims());
    for ci in 0..c {
        let mu = mean.data()[ci].to_f64();
        let inv = 1.0 / (var.data()[ci].to_f64() + eps).sqrt();
        let gam = gamma.data()[ci].to_f64();
        let mut sum_g = 0.0f64;
        let mut sum_gx = 0.0f64;
        for ni in 0..n {
            for y in 0..h {
                for xx in 0..w {
                    let g = grad.at(ni, ci, y, xx).to_f64();
                    let xh = (x.at(ni, ci, y, xx).to_f64() - mu) * inv;
                    sum_g += g;
                    sum_gx += g * xh;
                    dx.set(ni, ci, y, xx, T::from_f64(g * gam * inv));
                }
            }
        }
        dgamma.data_mut()[ci] = T::from_f64(sum_gx);
        dbeta.data_mut()[ci] = T::from_f64(sum_g);
    }
    // Running statistics are constants: no gradient contribution.
    Ok(vec![Some(dx), Some(dgamma), Some(dbeta), None, None])
}

fn tensor_from_f64<T: Scalar>(dims: [usize; 4], data: &[f64]) -> Tensor<T> {
    let mut out = Tensor::zeros(dims);
    for (o, v) in out.data_mut().iter_mut().zip(data) {
        *o = T::from_f64(*v);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn add_passes_seed_to_both_operands() {
        let mut tape = Tape::<f32>::new();
        let a = tape.input("a", Tensor::full([1, 1, 2, 2], 1.0));
        let b = tape.input("b", Tensor::full([1, 1, 2, 2], 2.0));
        let out = tape.add(a, b).unwrap();
        let seed = Tensor::from_fn([1, 1, 2, 2], |_, _, h, w| (h * 2 + w) as f32 + 1.0);
        let grads = tape.backward(out, &seed).unwrap();
        assert!(grads.get("a").unwrap().bit_eq(&seed));
        assert!(grads.get("b").unwrap().bit_eq(&seed));
    }

    #[test]
    fn sigmoid_gradient_at_zero_is_quarter() {
        let mut tape = Tape::<f32>::new();
        let x = tape.input("x", Tensor::zeros([1, 2, 2, 2]));
        let out = tape.act(x, Activation::Sigmoid).unwrap();
        let seed = Tensor::full([1, 2, 2, 2], 1.0f32);
        let grads = tape.backward(out, &seed).unwrap();
        for &g in grads.get("x").unwrap().data() {
            assert_eq!(g, 0.25);
        }
    }

    #[test]
    fn broadcast_mul_sums_gate_gradient() {
        let mut tape = Tape::<f32>::new();
        let x = tape.input("x", Tensor::full([1, 2, 2, 2], 3.0));
        let gate = tape.param("gate", Tensor::full([1, 2, 1, 1], 0.5));
        let out = tape.mul(x, gate).unwrap();
        let seed = Tensor::full([1, 2, 2, 2], 1.0f32);
        let grads = tape.backward(out, &seed).unwrap();
        // d/dgate = sum over the 4 broadcast positions of x = 12
        assert_eq!(grads.get("gate").unwrap().data(), &[12.0, 12.0]);
        assert!(grads.get("x").unwrap().data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn replay_reproduces_recorded_values() {
        let mut tape = Tape::<f32>::new();
        let x = tape.input(
            "x",
            Tensor::from_fn([1, 4, 4, 4], |_, c, h, w| ((c * 16 + h * 4 + w) as f32).sin()),
        );
        let spec = ConvSpec::depthwise3x3(4, false);
        let w = tape.param("w", Tensor::from_fn(spec.weight_dims(), |o, _, kh, kw| {
            ((o * 9 + kh * 3 + kw) as f32).cos() * 0.2
        }));
        let conv = tape.conv2d(x, w, None, spec).unwrap();
        let act = tape.act(conv, Activation::Gelu).unwrap();
        let pooled = tape.pool(act, 2, 2, PoolMode::Avg).unwrap();
        let _ = tape.shuffle(pooled, 2).unwrap();
        tape.verify_replay().unwrap();
    }

    #[test]
    fn replay_dot_with_override_changes_result() {
        let mut tape = Tape::<f64>::new();
        let x = tape.input("x", Tensor::full([1, 1, 1, 1], 2.0f64));
        let out = tape.mul(x, x).unwrap();
        let seed = Tensor::full([1, 1, 1, 1], 1.0f64);
        let affected = tape.affected_by(x);
        let bumped = Tensor::full([1, 1, 1, 1], 3.0f64);
        let v = tape.replay_dot(out, x, &bumped, &affected, &seed).unwrap();
        assert_eq!(v, 9.0);
    }

    #[test]
    fn kink_margin_sees_relu_inputs() {
        let mut tape = Tape::<f32>::new();
        let x = tape.input("x", Tensor::new([1, 1, 1, 3], vec![-1.0, 0.25, 2.0]).unwrap());
        let _ = tape.act(x, Activation::Relu).unwrap();
        assert!((tape.kink_margin() - 0.25).abs() < 1e-9);
    }

    #[test]
    fn gradient_map_covers_unreached_leaves_with_zeros() {
        let mut tape = Tape::<f32>::new();
        let a = tape.input("a", Tensor::full([1, 1, 2, 2], 1.0));
        let _unused = tape.param("unused", Tensor::full([1, 2, 1, 1], 3.0));
        let out = tape.act(a, Activation::Sigmoid).unwrap();
        let grads = tape.backward(out, &Tensor::full([1, 1, 2, 2], 1.0)).unwrap();
        assert!(grads.get("unused").is_none());
        let map = grads.into_map();
        assert_eq!(map.len(), 2);
        assert!(map["unused"].data().iter().all(|&v| v == 0.0));
        assert_eq!(map["unused"].dims(), [1, 2, 1, 1]);
    }

    #[test]
    fn bn_train_gradient_matches_identity_composition() {
        // gamma 1, beta 0, constant seed: dbeta = m, dgamma = sum(xhat) = 0.
        let mut tape = Tape::<f32>::new();
        let x = tape.input(
            "x",
            Tensor::from_fn([2, 1, 2, 2], |n, _, h, w| (n * 4 + h * 2 + w) as f32),
        );
        let gamma = tape.param("gamma", Tensor::full([1, 1, 1, 1], 1.0));
        let beta = tape.param("beta", Tensor::zeros([1, 1, 1, 1]));
        let out = tape.batch_norm_train("bn", x, gamma, beta, 1e-5).unwrap();
        let seed = Tensor::full([2, 1, 2, 2], 1.0f32);
        let grads = tape.backward(out, &seed).unwrap();
        assert_eq!(grads.get("beta").unwrap().data()[0], 8.0);
        assert!(grads.get("gamma").unwrap().data()[0].abs() < 1e-5);
    }
}

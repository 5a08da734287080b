//! A minimal string-diagram engine over finite-dimensional Hilbert spaces.
//!
//! Diagrams are DAGs of typed boxes with explicit port wiring, not a textual
//! language: the crate only needs construction and evaluation. A diagram with
//! dangling inputs and outputs evaluates to the linear map from the tensor
//! product of its dangling inputs to the tensor product of its dangling
//! outputs. Wire ordering convention: left-to-right in the dangling lists is
//! high-to-low tensor significance (big-endian), matching [`crate::tensor`].
//!
//! Evaluation contracts box tensors in a fixed topological order; no
//! contraction-order search is attempted.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::tensor::{self, checked_len, ComplexMatrix, StateVector};

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

/// A wire type: a named finite-dimensional Hilbert space.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireType {
    pub label: String,
    pub dim: usize,
}

impl WireType {
    pub fn new(label: impl Into<String>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("wire dimension must be ≥ 1".into()));
        }
        Ok(WireType {
            label: label.into(),
            dim,
        })
    }

    /// Qubit wire (dimension 2).
    pub fn qubit(label: impl Into<String>) -> Self {
        WireType {
            label: label.into(),
            dim: 2,
        }
    }
}

/// What a box computes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Payload {
    /// Explicit matrix from ⊗inputs to ⊗outputs.
    Matrix { matrix: ComplexMatrix },
    /// Identity on a single wire.
    Identity,
    /// Crossing of two wires.
    Twist,
    /// Maximally entangled pair on two equal-type output wires.
    Bell,
    /// Controlled version of an inner box; the control qubit is the first
    /// (high-order) input and output.
    Controlled { of: Box<DiagramBox> },
}

/// A typed box: named inputs, named outputs, and a payload.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagramBox {
    pub name: String,
    pub inputs: Vec<WireType>,
    pub outputs: Vec<WireType>,
    pub payload: Payload,
}

impl DiagramBox {
    pub fn new(
        name: impl Into<String>,
        inputs: Vec<WireType>,
        outputs: Vec<WireType>,
        payload: Payload,
    ) -> Result<Self> {
        let b = DiagramBox {
            name: name.into(),
            inputs,
            outputs,
            payload,
        };
        b.validate()?;
        Ok(b)
    }

    fn in_dim(&self) -> usize {
        self.inputs.iter().map(|t| t.dim).product()
    }

    fn out_dim(&self) -> usize {
        self.outputs.iter().map(|t| t.dim).product()
    }

    fn validate(&self) -> Result<()> {
        match &self.payload {
            Payload::Matrix { matrix } => {
                if matrix.rows() != self.out_dim() || matrix.cols() != self.in_dim() {
                    return Err(Error::Diagram(format!(
                        "box '{}': payload is {}x{} but ports demand {}x{}",
                        self.name,
                        matrix.rows(),
                        matrix.cols(),
                        self.out_dim(),
                        self.in_dim()
                    )));
                }
            }
            Payload::Identity => {
                if self.inputs.len() != 1 || self.outputs != self.inputs {
                    return Err(Error::Diagram(format!(
                        "box '{}': identity needs one input wire equal to its output",
                        self.name
                    )));
                }
            }
            Payload::Twist => {
                if self.inputs.len() != 2
                    || self.outputs.len() != 2
                    || self.outputs[0] != self.inputs[1]
                    || self.outputs[1] != self.inputs[0]
                {
                    return Err(Error::Diagram(format!(
                        "box '{}': twist must map (a, b) to (b, a)",
                        self.name
                    )));
                }
            }
            Payload::Bell => {
                if !self.inputs.is_empty()
                    || self.outputs.len() != 2
                    || self.outputs[0] != self.outputs[1]
                {
                    return Err(Error::Diagram(format!(
                        "box '{}': bell needs zero inputs and two equal-type outputs",
                        self.name
                    )));
                }
            }
            Payload::Controlled { of } => {
                of.validate()?;
                if of.inputs != of.outputs {
                    return Err(Error::Diagram(format!(
                        "box '{}': controlled inner box must have equal input/output types",
                        self.name
                    )));
                }
                let q = WireType::qubit(
                    self.inputs
                        .first()
                        .map(|t| t.label.clone())
                        .unwrap_or_default(),
                );
                let expect_in: Vec<WireType> = std::iter::once(q.clone())
                    .chain(of.inputs.iter().cloned())
                    .collect();
                let expect_out: Vec<WireType> = std::iter::once(q)
                    .chain(of.outputs.iter().cloned())
                    .collect();
                if self.inputs != expect_in || self.outputs != expect_out {
                    return Err(Error::Diagram(format!(
                        "box '{}': controlled ports must be a control qubit followed by the inner ports",
                        self.name
                    )));
                }
            }
        }
        Ok(())
    }

    /// The concrete matrix of this box.
    pub fn matrix(&self) -> Result<ComplexMatrix> {
        match &self.payload {
            Payload::Matrix { matrix } => Ok(matrix.clone()),
            Payload::Identity => ComplexMatrix::identity(self.inputs[0].dim),
            Payload::Twist => {
                let (da, db) = (self.inputs[0].dim, self.inputs[1].dim);
                let dim = checked_len(da as u128 * db as u128)?;
                let mut entries = vec![Complex64::ZERO; dim * dim];
                for i in 0..da {
                    for j in 0..db {
                        // |i⟩ₐ|j⟩_b ↦ |j⟩_b|i⟩ₐ
                        entries[(j * da + i) * dim + (i * db + j)] = Complex64::ONE;
                    }
                }
                ComplexMatrix::new(dim, dim, entries)
            }
            Payload::Bell => Ok(tensor::bell_state(self.outputs[0].dim)?.as_column()),
            Payload::Controlled { of } => tensor::controlled(&of.matrix()?),
        }
    }
}

/// A reference to one port of one box. `port` indexes the box's input list
/// or output list depending on context.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct PortRef {
    pub box_id: usize,
    pub port: usize,
}

impl From<[usize; 2]> for PortRef {
    fn from([box_id, port]: [usize; 2]) -> Self {
        PortRef { box_id, port }
    }
}

impl From<PortRef> for [usize; 2] {
    fn from(p: PortRef) -> Self {
        [p.box_id, p.port]
    }
}

#[derive(Serialize, Deserialize)]
struct BoxRepr {
    id: usize,
    #[serde(flatten)]
    inner: DiagramBox,
}

#[derive(Serialize, Deserialize)]
struct DiagramRepr {
    boxes: Vec<BoxRepr>,
    wires: Vec<(PortRef, PortRef)>,
    dangling_in: Vec<PortRef>,
    dangling_out: Vec<PortRef>,
}

impl From<Diagram> for DiagramRepr {
    fn from(d: Diagram) -> Self {
        DiagramRepr {
            boxes: d
                .boxes
                .into_iter()
                .enumerate()
                .map(|(id, inner)| BoxRepr { id, inner })
                .collect(),
            wires: d.wires,
            dangling_in: d.dangling_in,
            dangling_out: d.dangling_out,
        }
    }
}

impl TryFrom<DiagramRepr> for Diagram {
    type Error = Error;

    fn try_from(r: DiagramRepr) -> Result<Self> {
        for (k, b) in r.boxes.iter().enumerate() {
            if b.id != k {
                return Err(Error::Schema(format!(
                    "box ids must be 0..{} in order, found {} at position {k}",
                    r.boxes.len(),
                    b.id
                )));
            }
        }
        let d = Diagram {
            boxes: r.boxes.into_iter().map(|b| b.inner).collect(),
            wires: r.wires,
            dangling_in: r.dangling_in,
            dangling_out: r.dangling_out,
        };
        d.well_formed()?;
        Ok(d)
    }
}

/// A string diagram: boxes plus an acyclic wiring of producer output ports
/// to consumer input ports. Dangling ports are ordered left-to-right.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DiagramRepr", into = "DiagramRepr")]
pub struct Diagram {
    boxes: Vec<DiagramBox>,
    /// (producer output port, consumer input port) pairs.
    wires: Vec<(PortRef, PortRef)>,
    dangling_in: Vec<PortRef>,
    dangling_out: Vec<PortRef>,
}

/// Result of a δ-approximate equality test.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ApproxCheck {
    pub holds: bool,
    pub residual: f64,
}

/// Either side of an [`approx_equal`] comparison.
#[derive(Clone, Copy)]
pub enum EvalOperand<'a> {
    Diagram(&'a Diagram),
    Matrix(&'a ComplexMatrix),
}

impl<'a> From<&'a Diagram> for EvalOperand<'a> {
    fn from(d: &'a Diagram) -> Self {
        EvalOperand::Diagram(d)
    }
}

impl<'a> From<&'a ComplexMatrix> for EvalOperand<'a> {
    fn from(m: &'a ComplexMatrix) -> Self {
        EvalOperand::Matrix(m)
    }
}

impl Diagram {
    /// The empty diagram; evaluates to the 1×1 scalar matrix [1].
    pub fn empty() -> Diagram {
        Diagram {
            boxes: vec![],
            wires: vec![],
            dangling_in: vec![],
            dangling_out: vec![],
        }
    }

    /// A diagram consisting of one box with all ports dangling.
    pub fn from_box(b: DiagramBox) -> Result<Diagram> {
        b.validate()?;
        let dangling_in = (0..b.inputs.len())
            .map(|port| PortRef { box_id: 0, port })
            .collect();
        let dangling_out = (0..b.outputs.len())
            .map(|port| PortRef { box_id: 0, port })
            .collect();
        Ok(Diagram {
            boxes: vec![b],
            wires: vec![],
            dangling_in,
            dangling_out,
        })
    }

    /// A box with an explicit matrix payload.
    pub fn matrix_box(
        name: impl Into<String>,
        inputs: Vec<WireType>,
        outputs: Vec<WireType>,
        matrix: ComplexMatrix,
    ) -> Result<Diagram> {
        Self::from_box(DiagramBox::new(
            name,
            inputs,
            outputs,
            Payload::Matrix { matrix },
        )?)
    }

    /// A state (no inputs) with the vector as its column.
    pub fn state(
        name: impl Into<String>,
        outputs: Vec<WireType>,
        vector: &StateVector,
    ) -> Result<Diagram> {
        Self::matrix_box(name, vec![], outputs, vector.as_column())
    }

    /// A bare wire.
    pub fn identity_wire(t: WireType) -> Result<Diagram> {
        Self::from_box(DiagramBox::new(
            format!("id_{}", t.label),
            vec![t.clone()],
            vec![t],
            Payload::Identity,
        )?)
    }

    /// The twist crossing wires of types `a` and `b`.
    pub fn twist(a: WireType, b: WireType) -> Result<Diagram> {
        Self::from_box(DiagramBox::new(
            format!("twist_{}_{}", a.label, b.label),
            vec![a.clone(), b.clone()],
            vec![b, a],
            Payload::Twist,
        )?)
    }

    /// A Bell pair source on two wires of type `t`.
    pub fn bell(t: WireType) -> Result<Diagram> {
        Self::from_box(DiagramBox::new(
            format!("bell_{}", t.label),
            vec![],
            vec![t.clone(), t],
            Payload::Bell,
        )?)
    }

    pub fn boxes(&self) -> &[DiagramBox] {
        &self.boxes
    }

    pub fn dangling_in_types(&self) -> Vec<WireType> {
        self.dangling_in
            .iter()
            .map(|p| self.boxes[p.box_id].inputs[p.port].clone())
            .collect()
    }

    pub fn dangling_out_types(&self) -> Vec<WireType> {
        self.dangling_out
            .iter()
            .map(|p| self.boxes[p.box_id].outputs[p.port].clone())
            .collect()
    }

    fn offset_ports(ports: &[PortRef], offset: usize) -> Vec<PortRef> {
        ports
            .iter()
            .map(|p| PortRef {
                box_id: p.box_id + offset,
                port: p.port,
            })
            .collect()
    }

    /// Serial composition: `bottom` feeds `top`, so
    /// `evaluate(result) = evaluate(top) · evaluate(bottom)`.
    pub fn compose_serial(top: &Diagram, bottom: &Diagram) -> Result<Diagram> {
        let outs = bottom.dangling_out_types();
        let ins = top.dangling_in_types();
        if outs != ins {
            return Err(Error::Diagram(format!(
                "serial composition type mismatch: bottom outputs {:?} vs top inputs {:?}",
                outs.iter().map(|t| (&t.label, t.dim)).collect::<Vec<_>>(),
                ins.iter().map(|t| (&t.label, t.dim)).collect::<Vec<_>>()
            )));
        }
        let offset = bottom.boxes.len();
        let mut boxes = bottom.boxes.clone();
        boxes.extend(top.boxes.iter().cloned());
        let mut wires = bottom.wires.clone();
        wires.extend(top.wires.iter().map(|&(from, to)| {
            (
                PortRef {
                    box_id: from.box_id + offset,
                    port: from.port,
                },
                PortRef {
                    box_id: to.box_id + offset,
                    port: to.port,
                },
            )
        }));
        for (src, dst) in bottom.dangling_out.iter().zip(&top.dangling_in) {
            wires.push((
                *src,
                PortRef {
                    box_id: dst.box_id + offset,
                    port: dst.port,
                },
            ));
        }
        let d = Diagram {
            boxes,
            wires,
            dangling_in: bottom.dangling_in.clone(),
            dangling_out: Self::offset_ports(&top.dangling_out, offset),
        };
        d.well_formed()?;
        Ok(d)
    }

    /// Parallel composition; `left` is the high-order factor, so
    /// `evaluate(result) = kron(evaluate(left), evaluate(right))`.
    pub fn compose_parallel(left: &Diagram, right: &Diagram) -> Diagram {
        let offset = left.boxes.len();
        let mut boxes = left.boxes.clone();
        boxes.extend(right.boxes.iter().cloned());
        let mut wires = left.wires.clone();
        wires.extend(right.wires.iter().map(|&(from, to)| {
            (
                PortRef {
                    box_id: from.box_id + offset,
                    port: from.port,
                },
                PortRef {
                    box_id: to.box_id + offset,
                    port: to.port,
                },
            )
        }));
        let mut dangling_in = left.dangling_in.clone();
        dangling_in.extend(Self::offset_ports(&right.dangling_in, offset));
        let mut dangling_out = left.dangling_out.clone();
        dangling_out.extend(Self::offset_ports(&right.dangling_out, offset));
        Diagram {
            boxes,
            wires,
            dangling_in,
            dangling_out,
        }
    }

    /// Checks the structural invariants: port references in range, every
    /// internal port connected exactly once, equal wire types across each
    /// connection, and acyclicity.
    pub fn well_formed(&self) -> Result<()> {
        for b in &self.boxes {
            b.validate()?;
        }
        let mut in_seen: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut out_seen: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let check_port = |p: &PortRef, is_input: bool| -> Result<()> {
            let b = self.boxes.get(p.box_id).ok_or_else(|| {
                Error::Diagram(format!("port references missing box {}", p.box_id))
            })?;
            let count = if is_input {
                b.inputs.len()
            } else {
                b.outputs.len()
            };
            if p.port >= count {
                return Err(Error::Diagram(format!(
                    "box '{}' has no {} port {}",
                    b.name,
                    if is_input { "input" } else { "output" },
                    p.port
                )));
            }
            Ok(())
        };
        for (from, to) in &self.wires {
            check_port(from, false)?;
            check_port(to, true)?;
            let t_from = &self.boxes[from.box_id].outputs[from.port];
            let t_to = &self.boxes[to.box_id].inputs[to.port];
            if t_from != t_to {
                return Err(Error::Diagram(format!(
                    "wire type mismatch: '{}' output {} is {:?}x{} but '{}' input {} is {:?}x{}",
                    self.boxes[from.box_id].name,
                    from.port,
                    t_from.label,
                    t_from.dim,
                    self.boxes[to.box_id].name,
                    to.port,
                    t_to.label,
                    t_to.dim
                )));
            }
            *out_seen.entry((from.box_id, from.port)).or_insert(0) += 1;
            *in_seen.entry((to.box_id, to.port)).or_insert(0) += 1;
        }
        for p in &self.dangling_in {
            check_port(p, true)?;
            *in_seen.entry((p.box_id, p.port)).or_insert(0) += 1;
        }
        for p in &self.dangling_out {
            check_port(p, false)?;
            *out_seen.entry((p.box_id, p.port)).or_insert(0) += 1;
        }
        for (id, b) in self.boxes.iter().enumerate() {
            for port in 0..b.inputs.len() {
                if in_seen.get(&(id, port)).copied().unwrap_or(0) != 1 {
                    return Err(Error::Diagram(format!(
                        "input port {} of box '{}' must be connected exactly once",
                        port, b.name
                    )));
                }
            }
            for port in 0..b.outputs.len() {
                if out_seen.get(&(id, port)).copied().unwrap_or(0) != 1 {
                    return Err(Error::Diagram(format!(
                        "output port {} of box '{}' must be connected exactly once",
                        port, b.name
                    )));
                }
            }
        }
        self.topological_order()?;
        Ok(())
    }

    /// Kahn topological order over boxes, smallest box id first.
    fn topological_order(&self) -> Result<Vec<usize>> {
        let n = self.boxes.len();
        let mut indegree = vec![0usize; n];
        let mut successors: Vec<Vec<usize>> = vec![vec![]; n];
        for (from, to) in &self.wires {
            successors[from.box_id].push(to.box_id);
            indegree[to.box_id] += 1;
        }
        let mut ready: std::collections::BinaryHeap<std::cmp::Reverse<usize>> = (0..n)
            .filter(|&k| indegree[k] == 0)
            .map(std::cmp::Reverse)
            .collect();
        let mut order = Vec::with_capacity(n);
        while let Some(std::cmp::Reverse(k)) = ready.pop() {
            order.push(k);
            for &succ in &successors[k] {
                indegree[succ] -= 1;
                if indegree[succ] == 0 {
                    ready.push(std::cmp::Reverse(succ));
                }
            }
        }
        if order.len() != n {
            return Err(Error::Diagram("cycle detected".into()));
        }
        Ok(order)
    }

    /// Contracts the diagram to a matrix from ⊗(dangling inputs) to
    /// ⊗(dangling outputs).
    pub fn evaluate(&self) -> Result<ComplexMatrix> {
        self.well_formed()?;
        let order = self.topological_order()?;
        self.evaluate_in_order(&order)
    }

    pub(crate) fn evaluate_in_order(&self, order: &[usize]) -> Result<ComplexMatrix> {
        // Edge ids: one per wire, then one per dangling port.
        let mut in_edge: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut out_edge: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut next_id = 0usize;
        for (from, to) in &self.wires {
            out_edge.insert((from.box_id, from.port), next_id);
            in_edge.insert((to.box_id, to.port), next_id);
            next_id += 1;
        }
        let mut dangling_in_ids = Vec::new();
        for p in &self.dangling_in {
            in_edge.insert((p.box_id, p.port), next_id);
            dangling_in_ids.push(next_id);
            next_id += 1;
        }
        let mut dangling_out_ids = Vec::new();
        for p in &self.dangling_out {
            out_edge.insert((p.box_id, p.port), next_id);
            dangling_out_ids.push(next_id);
            next_id += 1;
        }

        let mut acc = Tensor::scalar_one();
        for &b in order {
            let bx = &self.boxes[b];
            let ids: Vec<usize> = (0..bx.outputs.len())
                .map(|port| out_edge[&(b, port)])
                .chain((0..bx.inputs.len()).map(|port| in_edge[&(b, port)]))
                .collect();
            let dims: Vec<usize> = bx
                .outputs
                .iter()
                .chain(bx.inputs.iter())
                .map(|t| t.dim)
                .collect();
            let m = bx.matrix()?;
            let t = Tensor {
                ids,
                dims,
                data: m.entries().to_vec(),
            };
            acc = acc.contract(&t)?;
        }

        // Free indices left: dangling outputs then dangling inputs.
        let target: Vec<usize> = dangling_out_ids
            .iter()
            .chain(dangling_in_ids.iter())
            .copied()
            .collect();
        let acc = acc.permute_to(&target)?;
        let out_dim: usize = self
            .dangling_out
            .iter()
            .map(|p| self.boxes[p.box_id].outputs[p.port].dim)
            .product();
        let in_dim: usize = acc.data.len() / out_dim.max(1);
        ComplexMatrix::new(out_dim, in_dim, acc.data)
    }
}

/// δ-approximate equality of evaluated operands: `residual = ‖f − g‖₂`,
/// `holds ⇔ residual ≤ delta`.
pub fn approx_equal(f: EvalOperand, g: EvalOperand, delta: f64) -> Result<ApproxCheck> {
    if delta.is_nan() || delta < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "delta must be nonnegative, got {delta}"
        )));
    }
    let fm = match f {
        EvalOperand::Diagram(d) => d.evaluate()?,
        EvalOperand::Matrix(m) => m.clone(),
    };
    let gm = match g {
        EvalOperand::Diagram(d) => d.evaluate()?,
        EvalOperand::Matrix(m) => m.clone(),
    };
    let residual = tensor::frobenius_distance(&fm, &gm)?;
    Ok(ApproxCheck {
        holds: residual <= delta,
        residual,
    })
}

// ---------------------------------------------------------------------------
// Flat tensors for contraction
// ---------------------------------------------------------------------------

struct Tensor {
    ids: Vec<usize>,
    dims: Vec<usize>,
    data: Vec<Complex64>,
}

impl Tensor {
    fn scalar_one() -> Tensor {
        Tensor {
            ids: vec![],
            dims: vec![],
            data: vec![Complex64::ONE],
        }
    }

    fn permute_axes(&self, perm: &[usize]) -> Tensor {
        let new_dims: Vec<usize> = perm.iter().map(|&p| self.dims[p]).collect();
        let new_ids: Vec<usize> = perm.iter().map(|&p| self.ids[p]).collect();
        let old_strides = strides(&self.dims);
        let total = self.data.len();
        let mut data = vec![Complex64::ZERO; total];
        let mut digits = vec![0usize; perm.len()];
        for item in data.iter_mut().take(total) {
            let old_flat: usize = digits
                .iter()
                .zip(perm)
                .map(|(&d, &p)| d * old_strides[p])
                .sum();
            *item = self.data[old_flat];
            // mixed-radix increment over new_dims
            for k in (0..digits.len()).rev() {
                digits[k] += 1;
                if digits[k] < new_dims[k] {
                    break;
                }
                digits[k] = 0;
            }
        }
        Tensor {
            ids: new_ids,
            dims: new_dims,
            data,
        }
    }

    /// Reorders the axes so that `target` (a permutation of `ids`) is the
    /// axis order.
    fn permute_to(self, target: &[usize]) -> Result<Tensor> {
        if target.len() != self.ids.len() {
            return Err(Error::Diagram(format!(
                "expected {} free indices after contraction, found {}",
                target.len(),
                self.ids.len()
            )));
        }
        let perm: Vec<usize> = target
            .iter()
            .map(|id| {
                self.ids
                    .iter()
                    .position(|x| x == id)
                    .ok_or_else(|| Error::Diagram(format!("free index {id} missing")))
            })
            .collect::<Result<_>>()?;
        Ok(self.permute_axes(&perm))
    }

    /// Contracts over all shared ids.
    fn contract(self, other: &Tensor) -> Result<Tensor> {
        let common: Vec<usize> = self
            .ids
            .iter()
            .copied()
            .filter(|id| other.ids.contains(id))
            .collect();

        // Bring common axes to the end of self, to the front of other.
        let a_rest: Vec<usize> = (0..self.ids.len())
            .filter(|&k| !common.contains(&self.ids[k]))
            .collect();
        let a_perm: Vec<usize> = a_rest
            .iter()
            .copied()
            .chain(common.iter().map(|id| {
                self.ids
                    .iter()
                    .position(|x| x == id)
                    .expect("common id in self")
            }))
            .collect();
        let a = self.permute_axes(&a_perm);

        let b_rest: Vec<usize> = (0..other.ids.len())
            .filter(|&k| !common.contains(&other.ids[k]))
            .collect();
        let b_perm: Vec<usize> = common
            .iter()
            .map(|id| {
                other
                    .ids
                    .iter()
                    .position(|x| x == id)
                    .expect("common id in other")
            })
            .chain(b_rest.iter().copied())
            .collect();
        let b = other.permute_axes(&b_perm);

        let k_dim: usize = common
            .iter()
            .map(|id| {
                let pos = a.ids.iter().position(|x| x == id).unwrap();
                a.dims[pos]
            })
            .product();
        let m_dim = a.data.len() / k_dim.max(1);
        let n_dim = b.data.len() / k_dim.max(1);
        checked_len(m_dim as u128 * n_dim as u128)?;

        let mut data = vec![Complex64::ZERO; m_dim * n_dim];
        for i in 0..m_dim {
            for k in 0..k_dim {
                let av = a.data[i * k_dim + k];
                if av == Complex64::ZERO {
                    continue;
                }
                let src = &b.data[k * n_dim..(k + 1) * n_dim];
                let dst = &mut data[i * n_dim..(i + 1) * n_dim];
                for (o, s) in dst.iter_mut().zip(src) {
                    *o += av * s;
                }
            }
        }

        let ids: Vec<usize> = a.ids[..a_rest.len()]
            .iter()
            .chain(b.ids[common.len()..].iter())
            .copied()
            .collect();
        let dims: Vec<usize> = a.dims[..a_rest.len()]
            .iter()
            .chain(b.dims[common.len()..].iter())
            .copied()
            .collect();
        Ok(Tensor { ids, dims, data })
    }
}

fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * dims[k + 1];
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{bell_state, hadamard, kron, pauli_x, pauli_z, StateVector};
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn qubit(label: &str) -> WireType {
        WireType::qubit(label)
    }

    fn gate(name: &str, label: &str, m: ComplexMatrix) -> Diagram {
        Diagram::matrix_box(name, vec![qubit(label)], vec![qubit(label)], m).unwrap()
    }

    fn ket(label: &str, bit: usize) -> Diagram {
        Diagram::state(
            format!("ket{bit}"),
            vec![qubit(label)],
            &StateVector::basis_state(2, bit).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn serial_hadamard_squares_to_identity() {
        let hh = Diagram::compose_serial(&gate("H", "q", hadamard()), &gate("H", "q", hadamard()))
            .unwrap();
        let m = hh.evaluate().unwrap();
        let d =
            crate::tensor::frobenius_distance(&m, &ComplexMatrix::identity(2).unwrap()).unwrap();
        assert!(d < 1e-12);
    }

    #[test]
    fn serial_effect_after_state_is_scalar_one() {
        let bra0 = Diagram::matrix_box(
            "bra0",
            vec![qubit("q")],
            vec![],
            ComplexMatrix::from_real(1, 2, &[1.0, 0.0]).unwrap(),
        )
        .unwrap();
        let m = Diagram::compose_serial(&bra0, &ket("q", 0))
            .unwrap()
            .evaluate()
            .unwrap();
        assert_eq!((m.rows(), m.cols()), (1, 1));
        assert!((m.get(0, 0) - c(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn serial_x_on_ket0_gives_ket1() {
        let m = Diagram::compose_serial(&gate("X", "q", pauli_x()), &ket("q", 0))
            .unwrap()
            .evaluate()
            .unwrap();
        assert_eq!(
            m.entries(),
            StateVector::basis_state(2, 1).unwrap().amplitudes()
        );
    }

    #[test]
    fn serial_rejects_type_mismatch() {
        let x = gate("X", "a", pauli_x());
        let z = gate("Z", "b", pauli_z());
        assert!(Diagram::compose_serial(&x, &z).is_err());
    }

    #[test]
    fn parallel_matches_kron() {
        let d = Diagram::compose_parallel(&gate("X", "a", pauli_x()), &gate("Z", "b", pauli_z()));
        let m = d.evaluate().unwrap();
        assert_eq!(m, kron(&pauli_x(), &pauli_z()).unwrap());

        let st = Diagram::compose_parallel(&ket("a", 0), &ket("b", 1));
        let m = st.evaluate().unwrap();
        assert_eq!(
            m.entries(),
            StateVector::basis_state(4, 1).unwrap().amplitudes()
        );
    }

    #[test]
    fn parallel_with_identity_wire_is_kron_with_identity() {
        let d = gate("H", "a", hadamard());
        let padded = Diagram::compose_parallel(&d, &Diagram::identity_wire(qubit("b")).unwrap());
        let m = padded.evaluate().unwrap();
        assert_eq!(
            m,
            kron(&hadamard(), &ComplexMatrix::identity(2).unwrap()).unwrap()
        );
    }

    #[test]
    fn twist_axioms_hold_exactly() {
        // twist ∘ twist = identity
        let t1 = Diagram::twist(qubit("a"), qubit("b")).unwrap();
        let t2 = Diagram::twist(qubit("b"), qubit("a")).unwrap();
        let square = Diagram::compose_serial(&t2, &t1)
            .unwrap()
            .evaluate()
            .unwrap();
        assert_eq!(square, ComplexMatrix::identity(4).unwrap());

        // naturality: twist ∘ (F ⊗ G) = (G ⊗ F) ∘ twist for random boxes
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..8 {
            let rand_mat = |rng: &mut rand_chacha::ChaCha8Rng| {
                ComplexMatrix::new(
                    2,
                    2,
                    (0..4)
                        .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                        .collect(),
                )
                .unwrap()
            };
            let f = rand_mat(&mut rng);
            let g = rand_mat(&mut rng);
            let fg =
                Diagram::compose_parallel(&gate("F", "a", f.clone()), &gate("G", "b", g.clone()));
            let gf = Diagram::compose_parallel(&gate("G", "b", g), &gate("F", "a", f));
            let lhs =
                Diagram::compose_serial(&Diagram::twist(qubit("a"), qubit("b")).unwrap(), &fg)
                    .unwrap()
                    .evaluate()
                    .unwrap();
            let rhs =
                Diagram::compose_serial(&gf, &Diagram::twist(qubit("a"), qubit("b")).unwrap())
                    .unwrap()
                    .evaluate()
                    .unwrap();
            assert_eq!(lhs, rhs);
        }

        // twist sends |0⟩⊗|1⟩ to |1⟩⊗|0⟩
        let st = Diagram::compose_parallel(&ket("a", 0), &ket("b", 1));
        let v = Diagram::compose_serial(&Diagram::twist(qubit("a"), qubit("b")).unwrap(), &st)
            .unwrap()
            .evaluate()
            .unwrap();
        assert_eq!(
            v.entries(),
            StateVector::basis_state(4, 2).unwrap().amplitudes()
        );
    }

    #[test]
    fn empty_diagram_is_scalar_one() {
        let m = Diagram::empty().evaluate().unwrap();
        assert_eq!((m.rows(), m.cols()), (1, 1));
        assert_eq!(m.get(0, 0), Complex64::ONE);
    }

    #[test]
    fn single_bell_node_evaluates_to_bell_column() {
        let d = Diagram::bell(qubit("q")).unwrap();
        let m = d.evaluate().unwrap();
        assert_eq!((m.rows(), m.cols()), (4, 1));
        assert_eq!(m.entries(), bell_state(2).unwrap().amplitudes());
    }

    #[test]
    fn controlled_payload_matches_tensor_controlled() {
        let inner = DiagramBox::new(
            "X",
            vec![qubit("a")],
            vec![qubit("a")],
            Payload::Matrix { matrix: pauli_x() },
        )
        .unwrap();
        let cx = DiagramBox::new(
            "CX",
            vec![qubit("q"), qubit("a")],
            vec![qubit("q"), qubit("a")],
            Payload::Controlled {
                of: Box::new(inner),
            },
        )
        .unwrap();
        assert_eq!(
            cx.matrix().unwrap(),
            crate::tensor::controlled(&pauli_x()).unwrap()
        );
    }

    #[test]
    fn evaluation_is_order_independent() {
        // H ⊗ X applied to a Bell pair: two independent single-qubit boxes,
        // so several topological orders exist.
        let bell = Diagram::bell(qubit("q")).unwrap();
        let hx = Diagram::compose_parallel(&gate("H", "q", hadamard()), &gate("X", "q", pauli_x()));
        let d = Diagram::compose_serial(&hx, &bell).unwrap();
        let order_a = d.topological_order().unwrap();
        let mut order_b = order_a.clone();
        order_b.reverse();
        // reversal is rarely topological; build one manually: bell is box 0.
        let order_b: Vec<usize> = if order_b.first() == Some(&0) {
            order_b
        } else {
            let mut v = vec![0usize];
            v.extend(order_a.iter().filter(|&&b| b != 0).rev());
            v
        };
        let m1 = d.evaluate_in_order(&order_a).unwrap();
        let m2 = d.evaluate_in_order(&order_b).unwrap();
        assert!(crate::tensor::frobenius_distance(&m1, &m2).unwrap() < 1e-12);
    }

    #[test]
    fn cycle_is_rejected() {
        // Two gates wired into a loop, no dangling ports.
        let h = DiagramBox::new(
            "H",
            vec![qubit("q")],
            vec![qubit("q")],
            Payload::Matrix { matrix: hadamard() },
        )
        .unwrap();
        let d = Diagram {
            boxes: vec![h.clone(), h],
            wires: vec![
                (
                    PortRef { box_id: 0, port: 0 },
                    PortRef { box_id: 1, port: 0 },
                ),
                (
                    PortRef { box_id: 1, port: 0 },
                    PortRef { box_id: 0, port: 0 },
                ),
            ],
            dangling_in: vec![],
            dangling_out: vec![],
        };
        let err = d.evaluate().unwrap_err();
        assert!(matches!(err, Error::Diagram(msg) if msg.contains("cycle")));
    }

    #[test]
    fn approx_equal_reports_residual() {
        let x = gate("X", "q", pauli_x());
        let check = approx_equal((&x).into(), (&pauli_x()).into(), 0.0).unwrap();
        assert!(check.holds);
        assert_eq!(check.residual, 0.0);

        let z = pauli_z();
        let check = approx_equal((&x).into(), (&z).into(), 1.0).unwrap();
        assert!(!check.holds);
        assert!((check.residual - 2.0).abs() < 1e-14);
    }

    #[test]
    fn approx_equal_residuals_are_transitive() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..16 {
            let mut rand_mat = || {
                ComplexMatrix::new(
                    3,
                    3,
                    (0..9)
                        .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                        .collect(),
                )
                .unwrap()
            };
            let f = rand_mat();
            let g = rand_mat();
            let h = rand_mat();
            let fg = approx_equal((&f).into(), (&g).into(), 0.0)
                .unwrap()
                .residual;
            let gh = approx_equal((&g).into(), (&h).into(), 0.0)
                .unwrap()
                .residual;
            let fh = approx_equal((&f).into(), (&h).into(), 0.0)
                .unwrap()
                .residual;
            assert!(fh <= fg + gh + 1e-12);
        }
    }

    #[test]
    fn approx_equal_post_composition_bound() {
        // J = P · diag(d): operator norm is max |dᵢ|, known exactly.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        for _ in 0..16 {
            let diag: Vec<f64> = (0..3).map(|_| rng.gen_range(0.1..2.0)).collect();
            let norm = diag.iter().cloned().fold(f64::MIN, f64::max);
            // cyclic permutation times the diagonal: operator norm = max|dᵢ|
            let perm = [1usize, 2, 0];
            let mut entries = vec![Complex64::ZERO; 9];
            for (col, &row) in perm.iter().enumerate() {
                entries[row * 3 + col] = c(diag[col], 0.0);
            }
            let j = ComplexMatrix::new(3, 3, entries).unwrap();
            let mut rand_mat = || {
                ComplexMatrix::new(
                    3,
                    3,
                    (0..9)
                        .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                        .collect(),
                )
                .unwrap()
            };
            let f = rand_mat();
            let g = rand_mat();
            let base = approx_equal((&f).into(), (&g).into(), 0.0)
                .unwrap()
                .residual;
            let jf = j.mul(&f).unwrap();
            let jg = j.mul(&g).unwrap();
            let post = approx_equal((&jf).into(), (&jg).into(), 0.0)
                .unwrap()
                .residual;
            assert!(post <= norm * base + 1e-12);
        }
    }

    #[test]
    fn serial_and_parallel_match_matrix_semantics_on_random_diagrams() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..12 {
            let mut rand_mat = |rows: usize, cols: usize| {
                ComplexMatrix::new(
                    rows,
                    cols,
                    (0..rows * cols)
                        .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                        .collect(),
                )
                .unwrap()
            };
            let f = rand_mat(2, 2);
            let g = rand_mat(2, 2);
            let df = gate("F", "q", f.clone());
            let dg = gate("G", "q", g.clone());
            let serial = Diagram::compose_serial(&df, &dg)
                .unwrap()
                .evaluate()
                .unwrap();
            let expect = f.mul(&g).unwrap();
            assert!(crate::tensor::frobenius_distance(&serial, &expect).unwrap() < 1e-12);

            let parallel = Diagram::compose_parallel(&df, &dg).evaluate().unwrap();
            let expect = kron(&f, &g).unwrap();
            assert!(crate::tensor::frobenius_distance(&parallel, &expect).unwrap() < 1e-12);
        }
    }

    #[test]
    fn diagram_json_round_trip() {
        let bell = Diagram::bell(qubit("q")).unwrap();
        let h = Diagram::compose_parallel(
            &gate("H", "q", hadamard()),
            &Diagram::identity_wire(qubit("q")).unwrap(),
        );
        let d = Diagram::compose_serial(&h, &bell).unwrap();
        let json = serde_json::to_string(&d).unwrap();
        let back: Diagram = serde_json::from_str(&json).unwrap();
        let m1 = d.evaluate().unwrap();
        let m2 = back.evaluate().unwrap();
        assert_eq!(m1, m2);
    }

    fn small_matrix(
        rows: usize,
        cols: usize,
    ) -> impl proptest::strategy::Strategy<Value = ComplexMatrix> {
        use proptest::prelude::*;
        let entry = (-1.0f64..1.0, -1.0f64..1.0).prop_map(|(re, im)| c(re, im));
        proptest::collection::vec(entry, rows * cols)
            .prop_map(move |v| ComplexMatrix::new(rows, cols, v).unwrap())
    }

    proptest::proptest! {
        #[test]
        fn prop_serial_is_matrix_product(
            f in small_matrix(2, 3),
            g in small_matrix(3, 2),
        ) {
            let mid = vec![WireType::new("m", 3).unwrap()];
            let df = Diagram::matrix_box("F", mid.clone(), vec![qubit("q")], f.clone()).unwrap();
            let dg = Diagram::matrix_box("G", vec![qubit("q")], mid, g.clone()).unwrap();
            let m = Diagram::compose_serial(&df, &dg).unwrap().evaluate().unwrap();
            let expect = f.mul(&g).unwrap();
            proptest::prop_assert!(
                crate::tensor::frobenius_distance(&m, &expect).unwrap() < 1e-12
            );
        }

        #[test]
        fn prop_parallel_is_kron(
            f in small_matrix(2, 2),
            g in small_matrix(3, 3),
        ) {
            let wf = vec![qubit("a")];
            let wg = vec![WireType::new("b", 3).unwrap()];
            let df = Diagram::matrix_box("F", wf.clone(), wf, f.clone()).unwrap();
            let dg = Diagram::matrix_box("G", wg.clone(), wg, g.clone()).unwrap();
            let m = Diagram::compose_parallel(&df, &dg).evaluate().unwrap();
            let expect = kron(&f, &g).unwrap();
            proptest::prop_assert!(
                crate::tensor::frobenius_distance(&m, &expect).unwrap() < 1e-12
            );
        }
    }
}

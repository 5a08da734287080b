//! Dense complex linear algebra: matrices, state vectors, tensor products,
//! subsystem embedding, standard gates, Bell states, controlled unitaries,
//! and Frobenius norms.
//!
//! Conventions, shared by every module in the crate:
//!
//! - **Big-endian slot ordering.** In a tensor product the first (leftmost)
//!   slot carries the most significant part of the index. Slots are numbered
//!   from 1 in all public APIs, matching the 1-based round numbering of the
//!   game. Control qubits of controlled unitaries are the high-order slot.
//! - **Row-major storage.** `entries[r * cols + c]` is the `(r, c)` entry.
//! - Everything is immutable after construction; all functions are pure.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{Error, Result};

/// Default cap on the number of scalar entries a single vector or matrix may
/// hold. Exceeding the ceiling is an error, never a silent truncation.
pub const DEFAULT_DIM_CEILING: usize = 1 << 22;

/// Environment variable that overrides the dimension ceiling at startup.
pub const DIM_CEILING_ENV: &str = "GHZRIG_DIM_CEILING";

static DIM_CEILING: AtomicUsize = AtomicUsize::new(0);

/// Current dimension ceiling (entries per vector/matrix).
///
/// Initialized on first use from [`DIM_CEILING_ENV`] when set, otherwise
/// [`DEFAULT_DIM_CEILING`].
pub fn dim_ceiling() -> usize {
    let cur = DIM_CEILING.load(Ordering::Relaxed);
    if cur != 0 {
        return cur;
    }
    let initial = std::env::var(DIM_CEILING_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&v| v > 0)
        .unwrap_or(DEFAULT_DIM_CEILING);
    // Racing initializers agree on the value unless set_dim_ceiling ran.
    let _ = DIM_CEILING.compare_exchange(0, initial, Ordering::Relaxed, Ordering::Relaxed);
    DIM_CEILING.load(Ordering::Relaxed)
}

/// Overrides the dimension ceiling for the current process.
pub fn set_dim_ceiling(ceiling: usize) {
    assert!(ceiling > 0, "dimension ceiling must be positive");
    DIM_CEILING.store(ceiling, Ordering::Relaxed);
}

/// Checks an entry count against the ceiling, returning it as `usize`.
pub(crate) fn checked_len(needed: u128) -> Result<usize> {
    let ceiling = dim_ceiling();
    if needed > ceiling as u128 {
        return Err(Error::DimensionCeiling { needed, ceiling });
    }
    Ok(needed as usize)
}

/// `2^bits` checked against the ceiling; `bits` may be arbitrarily large.
pub(crate) fn checked_pow2(bits: u32) -> Result<usize> {
    let needed = 1u128.checked_shl(bits).ok_or(Error::DimensionCeiling {
        needed: u128::MAX,
        ceiling: dim_ceiling(),
    })?;
    checked_len(needed)
}

fn all_finite(entries: &[Complex64]) -> bool {
    entries.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

// ---------------------------------------------------------------------------
// Tolerance
// ---------------------------------------------------------------------------

/// Absolute tolerance for validity checks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    absolute: f64,
}

impl Tolerance {
    /// Default tolerance for validity checks (reflection, commutation, ...).
    pub const DEFAULT: Tolerance = Tolerance { absolute: 1e-9 };

    /// Tighter tolerance used for exact-identity tests.
    pub const IDENTITY: Tolerance = Tolerance { absolute: 1e-12 };

    pub fn new(absolute: f64) -> Result<Self> {
        if !absolute.is_finite() || absolute <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "tolerance must be a positive finite number, got {absolute}"
            )));
        }
        Ok(Tolerance { absolute })
    }

    pub fn absolute(&self) -> f64 {
        self.absolute
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance::DEFAULT
    }
}

// ---------------------------------------------------------------------------
// ComplexMatrix
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    rows: usize,
    cols: usize,
    entries: Vec<[f64; 2]>,
}

impl From<ComplexMatrix> for MatrixRepr {
    fn from(m: ComplexMatrix) -> Self {
        MatrixRepr {
            rows: m.rows,
            cols: m.cols,
            entries: m.entries.iter().map(|z| [z.re, z.im]).collect(),
        }
    }
}

impl TryFrom<MatrixRepr> for ComplexMatrix {
    type Error = Error;

    fn try_from(r: MatrixRepr) -> Result<Self> {
        let entries = r
            .entries
            .iter()
            .map(|&[re, im]| Complex64::new(re, im))
            .collect();
        ComplexMatrix::new(r.rows, r.cols, entries)
            .map_err(|e| Error::Schema(format!("matrix: {e}")))
    }
}

/// Dense complex matrix, row-major.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixRepr", into = "MatrixRepr")]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<Complex64>,
}

impl std::fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows.min(8) {
            write!(f, "  ")?;
            for c in 0..self.cols.min(8) {
                let z = self.get(r, c);
                write!(f, "{:+.3}{:+.3}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl ComplexMatrix {
    /// Builds a matrix from row-major entries. Rejects non-finite entries,
    /// length mismatches, and sizes beyond the dimension ceiling.
    pub fn new(rows: usize, cols: usize, entries: Vec<Complex64>) -> Result<Self> {
        let needed = rows as u128 * cols as u128;
        checked_len(needed)?;
        if entries.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "expected {rows}x{cols} = {} entries, got {}",
                rows * cols,
                entries.len()
            )));
        }
        if !all_finite(&entries) {
            return Err(Error::Numeric("matrix entry is NaN or infinite".into()));
        }
        Ok(ComplexMatrix {
            rows,
            cols,
            entries,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        let len = checked_len(rows as u128 * cols as u128)?;
        Ok(ComplexMatrix {
            rows,
            cols,
            entries: vec![Complex64::ZERO; len],
        })
    }

    pub fn identity(dim: usize) -> Result<Self> {
        let mut m = Self::zeros(dim, dim)?;
        for k in 0..dim {
            m.entries[k * dim + k] = Complex64::ONE;
        }
        Ok(m)
    }

    /// Builds a matrix from real entries (imaginary parts zero).
    pub fn from_real(rows: usize, cols: usize, entries: &[f64]) -> Result<Self> {
        Self::new(
            rows,
            cols,
            entries.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
        )
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.entries[r * self.cols + c]
    }

    /// Matrix product `self * other`.
    pub fn mul(&self, other: &ComplexMatrix) -> Result<ComplexMatrix> {
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = ComplexMatrix::zeros(self.rows, other.cols)?;
        // i-k-j loop order keeps the inner traversal contiguous.
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.entries[i * self.cols + k];
                if a == Complex64::ZERO {
                    continue;
                }
                let row_b = &other.entries[k * other.cols..(k + 1) * other.cols];
                let row_o = &mut out.entries[i * other.cols..(i + 1) * other.cols];
                for (o, b) in row_o.iter_mut().zip(row_b) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// Matrix-vector product.
    pub fn mul_vec(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        if self.cols != v.len() {
            return Err(Error::ShapeMismatch(format!(
                "cannot apply {}x{} to vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        let mut out = vec![Complex64::ZERO; self.rows];
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.entries[i * self.cols..(i + 1) * self.cols];
            *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
        }
        Ok(out)
    }

    pub fn add(&self, other: &ComplexMatrix) -> Result<ComplexMatrix> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ComplexMatrix) -> Result<ComplexMatrix> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(
        &self,
        other: &ComplexMatrix,
        f: impl Fn(Complex64, Complex64) -> Complex64,
    ) -> Result<ComplexMatrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(&a, &b)| f(a, b))
            .collect();
        ComplexMatrix::new(self.rows, self.cols, entries)
    }

    pub fn scale(&self, factor: Complex64) -> ComplexMatrix {
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|&z| factor * z).collect(),
        }
    }

    pub fn neg(&self) -> ComplexMatrix {
        self.scale(-Complex64::ONE)
    }

    /// Conjugate transpose.
    pub fn dagger(&self) -> ComplexMatrix {
        let mut entries = vec![Complex64::ZERO; self.entries.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                entries[c * self.rows + r] = self.get(r, c).conj();
            }
        }
        ComplexMatrix {
            rows: self.cols,
            cols: self.rows,
            entries,
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries
            .iter()
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Interprets a column matrix as a state vector.
    pub fn into_state(self) -> Result<StateVector> {
        if self.cols != 1 {
            return Err(Error::ShapeMismatch(format!(
                "expected a column, got {}x{}",
                self.rows, self.cols
            )));
        }
        StateVector::new(self.entries)
    }
}

// ---------------------------------------------------------------------------
// StateVector
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(transparent)]
struct StateRepr {
    amplitudes: Vec<[f64; 2]>,
}

impl From<StateVector> for StateRepr {
    fn from(v: StateVector) -> Self {
        StateRepr {
            amplitudes: v.amplitudes.iter().map(|z| [z.re, z.im]).collect(),
        }
    }
}

impl TryFrom<StateRepr> for StateVector {
    type Error = Error;

    fn try_from(r: StateRepr) -> Result<Self> {
        let amps = r
            .amplitudes
            .iter()
            .map(|&[re, im]| Complex64::new(re, im))
            .collect();
        StateVector::new(amps).map_err(|e| Error::Schema(format!("state vector: {e}")))
    }
}

/// Dense complex state vector.
///
/// A vector flagged `normalized` is guaranteed to satisfy
/// `|Σ|aᵢ|² − 1| ≤ 1e−10`. Serializes as a flat list of `[re, im]` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StateRepr", into = "StateRepr")]
pub struct StateVector {
    amplitudes: Vec<Complex64>,
    #[serde(skip)]
    normalized: bool,
}

/// Slack allowed on the squared norm of a vector flagged `normalized`.
pub const NORMALIZATION_TOL: f64 = 1e-10;

impl StateVector {
    pub fn new(amplitudes: Vec<Complex64>) -> Result<Self> {
        checked_len(amplitudes.len() as u128)?;
        if !all_finite(&amplitudes) {
            return Err(Error::Numeric("amplitude is NaN or infinite".into()));
        }
        Ok(StateVector {
            amplitudes,
            normalized: false,
        })
    }

    /// Builds a vector and flags it normalized, checking the norm.
    pub fn new_normalized(amplitudes: Vec<Complex64>) -> Result<Self> {
        let v = Self::new(amplitudes)?;
        v.into_normalized()
    }

    /// Flags this vector normalized after checking `|‖v‖² − 1| ≤ 1e−10`.
    pub fn into_normalized(mut self) -> Result<Self> {
        let norm_sqr: f64 = self.amplitudes.iter().map(|z| z.norm_sqr()).sum();
        if (norm_sqr - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::Numeric(format!(
                "vector is not normalized: ‖v‖² = {norm_sqr}"
            )));
        }
        self.normalized = true;
        Ok(self)
    }

    /// Rescales to unit norm. Fails on (near-)zero vectors.
    pub fn normalize(&self) -> Result<Self> {
        let norm = self.norm();
        if norm < 1e-14 {
            return Err(Error::Numeric("cannot normalize a zero vector".into()));
        }
        let amps = self
            .amplitudes
            .iter()
            .map(|&z| z / Complex64::new(norm, 0.0))
            .collect();
        Ok(StateVector {
            amplitudes: amps,
            normalized: true,
        })
    }

    /// Computational basis state `|index⟩` in the given dimension.
    pub fn basis_state(dim: usize, index: usize) -> Result<Self> {
        let len = checked_len(dim as u128)?;
        if index >= dim {
            return Err(Error::InvalidArgument(format!(
                "basis index {index} out of range for dimension {dim}"
            )));
        }
        let mut amps = vec![Complex64::ZERO; len];
        amps[index] = Complex64::ONE;
        Ok(StateVector {
            amplitudes: amps,
            normalized: true,
        })
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn is_flagged_normalized(&self) -> bool {
        self.normalized
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes
            .iter()
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Inner product `⟨self|other⟩` (conjugate-linear in `self`).
    pub fn inner(&self, other: &StateVector) -> Result<Complex64> {
        if self.dim() != other.dim() {
            return Err(Error::ShapeMismatch(format!(
                "inner product of dims {} and {}",
                self.dim(),
                other.dim()
            )));
        }
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// Euclidean distance to another vector of the same dimension.
    pub fn distance(&self, other: &StateVector) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::ShapeMismatch(format!(
                "distance of dims {} and {}",
                self.dim(),
                other.dim()
            )));
        }
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt())
    }

    /// Views the vector as a column matrix.
    pub fn as_column(&self) -> ComplexMatrix {
        ComplexMatrix {
            rows: self.dim(),
            cols: 1,
            entries: self.amplitudes.clone(),
        }
    }
}

// ---------------------------------------------------------------------------
// Standard gates
// ---------------------------------------------------------------------------

/// Pauli X.
pub fn pauli_x() -> ComplexMatrix {
    ComplexMatrix::from_real(2, 2, &[0.0, 1.0, 1.0, 0.0]).unwrap()
}

/// Pauli Z.
pub fn pauli_z() -> ComplexMatrix {
    ComplexMatrix::from_real(2, 2, &[1.0, 0.0, 0.0, -1.0]).unwrap()
}

/// Hadamard gate `|0⟩ ↦ |+⟩`, `|1⟩ ↦ |−⟩`.
pub fn hadamard() -> ComplexMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    ComplexMatrix::from_real(2, 2, &[s, s, s, -s]).unwrap()
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Kronecker product `a ⊗ b`; `a` is the high-order (big-endian) factor.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    let rows = a.rows as u128 * b.rows as u128;
    let cols = a.cols as u128 * b.cols as u128;
    checked_len(rows * cols)?;
    let (rows, cols) = (rows as usize, cols as usize);
    let mut entries = vec![Complex64::ZERO; rows * cols];
    for ar in 0..a.rows {
        for ac in 0..a.cols {
            let av = a.get(ar, ac);
            if av == Complex64::ZERO {
                continue;
            }
            for br in 0..b.rows {
                let out_row = ar * b.rows + br;
                let base = out_row * cols + ac * b.cols;
                let src = &b.entries[br * b.cols..(br + 1) * b.cols];
                for (bc, &bv) in src.iter().enumerate() {
                    entries[base + bc] = av * bv;
                }
            }
        }
    }
    Ok(ComplexMatrix {
        rows,
        cols,
        entries,
    })
}

/// Embeds a square operator on the listed tensor slots (1-based, in the
/// order the operator expects them), acting as the identity elsewhere.
///
/// `dims` lists every slot dimension, big-endian. The operator dimension
/// must equal the product of `dims` at `slots`.
pub fn apply_on(op: &ComplexMatrix, slots: &[usize], dims: &[usize]) -> Result<ComplexMatrix> {
    if !op.is_square() {
        return Err(Error::ShapeMismatch(format!(
            "apply_on requires a square operator, got {}x{}",
            op.rows, op.cols
        )));
    }
    validate_slots(slots, dims)?;
    let op_dim: u128 = slots.iter().map(|&s| dims[s - 1] as u128).product();
    if op_dim != op.rows as u128 {
        return Err(Error::ShapeMismatch(format!(
            "operator dimension {} does not match product of slot dims {}",
            op.rows, op_dim
        )));
    }
    let full: u128 = dims.iter().map(|&d| d as u128).product();
    checked_len(full * full)?;
    let full = full as usize;

    // Strides of each slot in the full big-endian index.
    let strides = strides_for(dims);
    let slot_idx: Vec<usize> = slots.iter().map(|&s| s - 1).collect();
    let rest_idx: Vec<usize> = (0..dims.len()).filter(|k| !slot_idx.contains(k)).collect();

    let op_dims: Vec<usize> = slot_idx.iter().map(|&k| dims[k]).collect();
    let rest_dims: Vec<usize> = rest_idx.iter().map(|&k| dims[k]).collect();
    let rest_total: usize = rest_dims.iter().product();
    let op_total: usize = op_dims.iter().product();

    let mut out = ComplexMatrix::zeros(full, full)?;
    let mut rest_digits = vec![0usize; rest_dims.len()];
    for _ in 0..rest_total {
        let base: usize = rest_digits
            .iter()
            .zip(&rest_idx)
            .map(|(&d, &k)| d * strides[k])
            .sum();
        for r in 0..op_total {
            let r_off = offset_of(r, &op_dims, &slot_idx, &strides);
            for c in 0..op_total {
                let v = op.get(r, c);
                if v == Complex64::ZERO {
                    continue;
                }
                let c_off = offset_of(c, &op_dims, &slot_idx, &strides);
                out.entries[(base + r_off) * full + (base + c_off)] = v;
            }
        }
        increment_digits(&mut rest_digits, &rest_dims);
    }
    Ok(out)
}

fn validate_slots(slots: &[usize], dims: &[usize]) -> Result<()> {
    if dims.contains(&0) {
        return Err(Error::InvalidArgument("slot dimension 0".into()));
    }
    let mut seen = vec![false; dims.len()];
    for &s in slots {
        if s == 0 || s > dims.len() {
            return Err(Error::InvalidArgument(format!(
                "slot {s} out of range 1..={}",
                dims.len()
            )));
        }
        if seen[s - 1] {
            return Err(Error::InvalidArgument(format!("repeated slot index {s}")));
        }
        seen[s - 1] = true;
    }
    Ok(())
}

fn strides_for(dims: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * dims[k + 1];
    }
    strides
}

/// Decomposes `flat` over `op_dims` (big-endian) and dots the digits with
/// the full-space strides of the corresponding slots.
fn offset_of(flat: usize, op_dims: &[usize], slot_idx: &[usize], strides: &[usize]) -> usize {
    let mut rem = flat;
    let mut off = 0;
    for k in (0..op_dims.len()).rev() {
        let digit = rem % op_dims[k];
        rem /= op_dims[k];
        off += digit * strides[slot_idx[k]];
    }
    off
}

fn increment_digits(digits: &mut [usize], dims: &[usize]) {
    for k in (0..digits.len()).rev() {
        digits[k] += 1;
        if digits[k] < dims[k] {
            return;
        }
        digits[k] = 0;
    }
}

/// Frobenius distance `‖f − g‖₂`; Euclidean distance for column vectors.
pub fn frobenius_distance(f: &ComplexMatrix, g: &ComplexMatrix) -> Result<f64> {
    if f.rows != g.rows || f.cols != g.cols {
        return Err(Error::ShapeMismatch(format!(
            "distance of {}x{} and {}x{}",
            f.rows, f.cols, g.rows, g.cols
        )));
    }
    Ok(f.entries
        .iter()
        .zip(&g.entries)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        .sqrt())
}

/// Controlled unitary `C(U) = |0⟩⟨0| ⊗ I + |1⟩⟨1| ⊗ U`.
///
/// The control qubit is the high-order slot of the result.
pub fn controlled(u: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !u.is_square() {
        return Err(Error::ShapeMismatch(format!(
            "controlled() requires a square operator, got {}x{}",
            u.rows, u.cols
        )));
    }
    let d = u.rows;
    let full = checked_len(4 * d as u128 * d as u128).map(|_| 2 * d)?;
    let mut out = ComplexMatrix::zeros(full, full)?;
    for k in 0..d {
        out.entries[k * full + k] = Complex64::ONE;
    }
    for r in 0..d {
        for c in 0..d {
            out.entries[(d + r) * full + (d + c)] = u.get(r, c);
        }
    }
    Ok(out)
}

/// Maximally entangled state `(1/√d) Σₑ e ⊗ e` on a `d²`-dimensional space.
///
/// For `d = 2` this is the Bell state Φ⁺.
pub fn bell_state(d: usize) -> Result<StateVector> {
    if d == 0 {
        return Err(Error::InvalidArgument("bell_state requires d ≥ 1".into()));
    }
    let len = checked_len(d as u128 * d as u128)?;
    let amp = Complex64::new(1.0 / (d as f64).sqrt(), 0.0);
    let mut amps = vec![Complex64::ZERO; len];
    for e in 0..d {
        amps[e * d + e] = amp;
    }
    Ok(StateVector {
        amplitudes: amps,
        normalized: true,
    })
}

/// True iff `m` is Hermitian and squares to the identity, both within `tol`
/// in Frobenius norm. Non-square inputs are not reflections.
pub fn is_reflection(m: &ComplexMatrix, tol: Tolerance) -> bool {
    if !m.is_square() {
        return false;
    }
    let herm = frobenius_distance(m, &m.dagger()).expect("same shape");
    if herm > tol.absolute() {
        return false;
    }
    let sq = m.mul(m).expect("square");
    let id = ComplexMatrix::identity(m.rows).expect("within ceiling");
    frobenius_distance(&sq, &id).expect("same shape") <= tol.absolute()
}

/// True iff `‖ab − ba‖₂ ≤ tol`.
pub fn commutes(a: &ComplexMatrix, b: &ComplexMatrix, tol: Tolerance) -> Result<bool> {
    if !a.is_square() || !b.is_square() || a.rows != b.rows {
        return Err(Error::ShapeMismatch(format!(
            "commutes() requires equal square shapes, got {}x{} and {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let ab = a.mul(b)?;
    let ba = b.mul(a)?;
    Ok(frobenius_distance(&ab, &ba)? <= tol.absolute())
}

// ---------------------------------------------------------------------------
// Structured state operations
//
// These never materialize the embedded operator: a state of dimension D with
// an operator on a few slots costs O(D · d_op) instead of O(D²).
// ---------------------------------------------------------------------------

/// Reorders tensor slots of a state. `perm[k]` is the 1-based old slot that
/// moves to (1-based) position `k+1`. Returns the permuted amplitudes and
/// the new slot dimensions.
pub fn permute_state_slots(
    amps: &[Complex64],
    dims: &[usize],
    perm: &[usize],
) -> Result<(Vec<Complex64>, Vec<usize>)> {
    if perm.len() != dims.len() {
        return Err(Error::InvalidArgument(format!(
            "permutation length {} does not match slot count {}",
            perm.len(),
            dims.len()
        )));
    }
    validate_slots(perm, dims)?;
    if perm.len() != dims.len()
        || perm
            .iter()
            .copied()
            .collect::<std::collections::BTreeSet<_>>()
            .len()
            != dims.len()
    {
        return Err(Error::InvalidArgument(
            "permutation must cover every slot".into(),
        ));
    }
    let total: usize = dims.iter().product();
    if total != amps.len() {
        return Err(Error::ShapeMismatch(format!(
            "state length {} does not match dims product {}",
            amps.len(),
            total
        )));
    }
    let old_strides = strides_for(dims);
    let new_dims: Vec<usize> = perm.iter().map(|&p| dims[p - 1]).collect();
    let mut out = vec![Complex64::ZERO; total];
    let mut digits = vec![0usize; new_dims.len()];
    for slot in out.iter_mut() {
        let old_flat: usize = digits
            .iter()
            .zip(perm)
            .map(|(&d, &p)| d * old_strides[p - 1])
            .sum();
        *slot = amps[old_flat];
        increment_digits(&mut digits, &new_dims);
    }
    Ok((out, new_dims))
}

/// Applies a square operator to the listed slots (1-based, in the order the
/// operator expects them) of a state vector.
pub fn apply_on_state(
    amps: &[Complex64],
    dims: &[usize],
    slots: &[usize],
    op: &ComplexMatrix,
) -> Result<Vec<Complex64>> {
    if !op.is_square() {
        return Err(Error::ShapeMismatch(format!(
            "apply_on_state requires a square operator, got {}x{}",
            op.rows, op.cols
        )));
    }
    validate_slots(slots, dims)?;
    let op_dim: usize = slots.iter().map(|&s| dims[s - 1]).product();
    if op_dim != op.rows {
        return Err(Error::ShapeMismatch(format!(
            "operator dimension {} does not match product of slot dims {}",
            op.rows, op_dim
        )));
    }
    let total: usize = dims.iter().product();
    if total != amps.len() {
        return Err(Error::ShapeMismatch(format!(
            "state length {} does not match dims product {}",
            amps.len(),
            total
        )));
    }

    // Bring target slots to the front, in operator order.
    let mut perm: Vec<usize> = slots.to_vec();
    perm.extend((1..=dims.len()).filter(|s| !slots.contains(s)));
    let (fronted, front_dims) = permute_state_slots(amps, dims, &perm)?;

    // Multiply the operator through, viewing the state as (op_dim, rest).
    let rest: usize = total / op_dim;
    let mut applied = vec![Complex64::ZERO; total];
    for r in 0..op.rows {
        let out_row = &mut applied[r * rest..(r + 1) * rest];
        for k in 0..op.cols {
            let a = op.get(r, k);
            if a == Complex64::ZERO {
                continue;
            }
            let src = &fronted[k * rest..(k + 1) * rest];
            for (o, s) in out_row.iter_mut().zip(src) {
                *o += a * s;
            }
        }
    }

    // Undo the permutation.
    let mut inverse = vec![0usize; perm.len()];
    for (newpos, &old) in perm.iter().enumerate() {
        inverse[old - 1] = newpos + 1;
    }
    let (restored, _) = permute_state_slots(&applied, &front_dims, &inverse)?;
    Ok(restored)
}

/// Applies a (possibly rectangular) operator to a single slot of a state.
///
/// The operator maps the slot's dimension to `product(out_dims)`; the slot is
/// replaced in place by the `out_dims` slots. Used for isometries that grow
/// the space. Returns the new amplitudes and the new slot dimension list.
pub fn apply_isometry_on_state(
    amps: &[Complex64],
    dims: &[usize],
    slot: usize,
    op: &ComplexMatrix,
    out_dims: &[usize],
) -> Result<(Vec<Complex64>, Vec<usize>)> {
    validate_slots(&[slot], dims)?;
    let d_in = dims[slot - 1];
    let d_out: usize = out_dims.iter().product();
    if op.cols != d_in || op.rows != d_out {
        return Err(Error::ShapeMismatch(format!(
            "operator {}x{} does not map slot dim {} to product {}",
            op.rows, op.cols, d_in, d_out
        )));
    }
    let total: usize = dims.iter().product();
    if total != amps.len() {
        return Err(Error::ShapeMismatch(format!(
            "state length {} does not match dims product {}",
            amps.len(),
            total
        )));
    }
    let new_total = checked_len(total as u128 / d_in as u128 * d_out as u128)?;

    let pre: usize = dims[..slot - 1].iter().product();
    let post: usize = dims[slot..].iter().product();
    let mut out = vec![Complex64::ZERO; new_total];
    for p in 0..pre {
        for r in 0..d_out {
            let dst_base = (p * d_out + r) * post;
            for k in 0..d_in {
                let a = op.get(r, k);
                if a == Complex64::ZERO {
                    continue;
                }
                let src_base = (p * d_in + k) * post;
                let src = &amps[src_base..src_base + post];
                let dst = &mut out[dst_base..dst_base + post];
                for (o, s) in dst.iter_mut().zip(src) {
                    *o += a * s;
                }
            }
        }
    }
    let mut new_dims = Vec::with_capacity(dims.len() - 1 + out_dims.len());
    new_dims.extend_from_slice(&dims[..slot - 1]);
    new_dims.extend_from_slice(out_dims);
    new_dims.extend_from_slice(&dims[slot..]);
    Ok((out, new_dims))
}

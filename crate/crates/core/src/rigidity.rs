//! Swap isometries, the GHZ eigenbasis, extraction of the certified state,
//! and numeric checkers for every approximate operator relation in the
//! rigidity chain.
//!
//! The swap isometry `Ψ_{W,k}` (read bottom-up) prepares a Bell pair on
//! `(Q̄_k, Q_k)` and then applies `C(X′_k)`, `H` on `Q_k`, `C(Z′_k)`, `H` on
//! `Q_k`, `C(X′_k)`, with `Q_k` the control and the player register the
//! target. `Θ_{W,N}` chains `Ψ_{W,1} … Ψ_{W,N}`. Applying all three `Θ`s to
//! the shared state and expanding the extracted qubit triples in the common
//! eigenbasis of X⊗Z⊗Z, Z⊗X⊗Z, Z⊗Z⊗X yields the weight decomposition whose
//! non-leading mass is the extraction residual.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game;
use crate::strategy::{Player, Strategy};
use crate::tensor::{
    self, apply_isometry_on_state, apply_on_state, checked_len, checked_pow2, permute_state_slots,
    ComplexMatrix, StateVector,
};

// ---------------------------------------------------------------------------
// Register layouts
// ---------------------------------------------------------------------------

/// One named register in a tensor layout.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Register {
    pub name: String,
    pub dim: usize,
}

impl Register {
    pub fn new(name: impl Into<String>, dim: usize) -> Register {
        Register {
            name: name.into(),
            dim,
        }
    }
}

/// An ordered list of named registers; big-endian like everything else.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Register>", into = "Vec<Register>")]
pub struct RegisterLayout {
    registers: Vec<Register>,
}

impl TryFrom<Vec<Register>> for RegisterLayout {
    type Error = Error;

    fn try_from(v: Vec<Register>) -> Result<Self> {
        RegisterLayout::new(v)
    }
}

impl From<RegisterLayout> for Vec<Register> {
    fn from(l: RegisterLayout) -> Self {
        l.registers
    }
}

impl RegisterLayout {
    pub fn new(registers: Vec<Register>) -> Result<Self> {
        let mut names: Vec<&str> = registers.iter().map(|r| r.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != registers.len() {
            return Err(Error::InvalidArgument("duplicate register name".into()));
        }
        if registers.iter().any(|r| r.dim == 0) {
            return Err(Error::InvalidArgument(
                "register dimension must be ≥ 1".into(),
            ));
        }
        Ok(RegisterLayout { registers })
    }

    pub fn registers(&self) -> &[Register] {
        &self.registers
    }

    pub fn dims(&self) -> Vec<usize> {
        self.registers.iter().map(|r| r.dim).collect()
    }

    pub fn total_dim(&self) -> usize {
        self.registers.iter().map(|r| r.dim).product()
    }

    /// 1-based slot of a register.
    pub fn position(&self, name: &str) -> Result<usize> {
        self.registers
            .iter()
            .position(|r| r.name == name)
            .map(|p| p + 1)
            .ok_or_else(|| Error::InvalidArgument(format!("no register named '{name}'")))
    }
}

/// A state vector together with its register layout. Internal workhorse for
/// the checkers: applies operators to named registers without materializing
/// embedded operators.
#[derive(Clone, Debug)]
struct LabeledState {
    layout: RegisterLayout,
    amps: Vec<Complex64>,
}

impl LabeledState {
    fn from_strategy(s: &Strategy) -> Result<LabeledState> {
        let dims = s.dims();
        let layout = RegisterLayout::new(vec![
            Register::new("A", dims[0]),
            Register::new("B", dims[1]),
            Register::new("C", dims[2]),
        ])?;
        Ok(LabeledState {
            layout,
            amps: s.state().amplitudes().to_vec(),
        })
    }

    fn apply(&mut self, names: &[&str], op: &ComplexMatrix) -> Result<()> {
        let slots: Vec<usize> = names
            .iter()
            .map(|n| self.layout.position(n))
            .collect::<Result<_>>()?;
        self.amps = apply_on_state(&self.amps, &self.layout.dims(), &slots, op)?;
        Ok(())
    }

    fn apply_isometry(
        &mut self,
        name: &str,
        op: &ComplexMatrix,
        new_registers: Vec<Register>,
    ) -> Result<()> {
        let slot = self.layout.position(name)?;
        let out_dims: Vec<usize> = new_registers.iter().map(|r| r.dim).collect();
        let (amps, _) =
            apply_isometry_on_state(&self.amps, &self.layout.dims(), slot, op, &out_dims)?;
        self.amps = amps;
        let mut regs = self.layout.registers.clone();
        regs.splice(slot - 1..slot, new_registers);
        self.layout = RegisterLayout::new(regs)?;
        Ok(())
    }

    fn permute(&mut self, order: &[String]) -> Result<()> {
        let perm: Vec<usize> = order
            .iter()
            .map(|n| self.layout.position(n))
            .collect::<Result<_>>()?;
        let (amps, _) = permute_state_slots(&self.amps, &self.layout.dims(), &perm)?;
        self.amps = amps;
        let regs = perm
            .iter()
            .map(|&p| self.layout.registers[p - 1].clone())
            .collect();
        self.layout = RegisterLayout::new(regs)?;
        Ok(())
    }

    fn distance(&self, other: &LabeledState) -> f64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    fn add_distance(&self, other: &LabeledState) -> f64 {
        // ‖self + other‖
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| (a + b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    fn scale(&mut self, factor: f64) {
        for z in self.amps.iter_mut() {
            *z *= factor;
        }
    }
}

// ---------------------------------------------------------------------------
// Swap isometries
// ---------------------------------------------------------------------------

/// The swap isometry `Ψ_{W,k} : W → Q̄_k ⊗ Q_k ⊗ W` as a `4d × d` matrix
/// (output registers big-endian in that order).
pub fn swap_isometry(s: &Strategy, player: Player, k: usize) -> Result<ComplexMatrix> {
    let d = s.dim(player);
    let x = s.single(player, k, 0)?;
    let z = s.single(player, k, 1)?;
    let dims = [2usize, 2, d];
    let cx = tensor::apply_on(&tensor::controlled(x)?, &[2, 3], &dims)?;
    let cz = tensor::apply_on(&tensor::controlled(z)?, &[2, 3], &dims)?;
    let h = tensor::apply_on(&tensor::hadamard(), &[2], &dims)?;
    let bell_prep = tensor::kron(
        &tensor::bell_state(2)?.as_column(),
        &ComplexMatrix::identity(d)?,
    )?;
    // Bottom-up: Bell prep, C(X′), H, C(Z′), H, C(X′).
    cx.mul(&h)?.mul(&cz)?.mul(&h)?.mul(&cx)?.mul(&bell_prep)
}

/// The same circuit assembled as a string diagram; evaluating it must agree
/// with [`swap_isometry`] and serves as an independent construction route.
pub fn swap_isometry_diagram(
    s: &Strategy,
    player: Player,
    k: usize,
) -> Result<crate::diagram::Diagram> {
    use crate::diagram::{Diagram, DiagramBox, Payload, WireType};
    let d = s.dim(player);
    let q = WireType::qubit("Q");
    let w = WireType::new(player.label(), d)?;

    let controlled_layer = |name: String, m: &ComplexMatrix| -> Result<Diagram> {
        let inner = DiagramBox::new(
            name.trim_start_matches("C(").trim_end_matches(')'),
            vec![w.clone()],
            vec![w.clone()],
            Payload::Matrix { matrix: m.clone() },
        )?;
        let cbox = DiagramBox::new(
            name,
            vec![q.clone(), w.clone()],
            vec![q.clone(), w.clone()],
            Payload::Controlled {
                of: Box::new(inner),
            },
        )?;
        Ok(Diagram::compose_parallel(
            &Diagram::identity_wire(q.clone())?,
            &Diagram::from_box(cbox)?,
        ))
    };
    let h_layer = || -> Result<Diagram> {
        let h = Diagram::matrix_box("H", vec![q.clone()], vec![q.clone()], tensor::hadamard())?;
        Ok(Diagram::compose_parallel(
            &Diagram::identity_wire(q.clone())?,
            &Diagram::compose_parallel(&h, &Diagram::identity_wire(w.clone())?),
        ))
    };

    let x = s.single(player, k, 0)?;
    let z = s.single(player, k, 1)?;
    let bell_layer = Diagram::compose_parallel(
        &Diagram::bell(q.clone())?,
        &Diagram::identity_wire(w.clone())?,
    );
    let mut diagram = bell_layer;
    for layer in [
        controlled_layer(format!("C(X'_{k})"), x)?,
        h_layer()?,
        controlled_layer(format!("C(Z'_{k})"), z)?,
        h_layer()?,
        controlled_layer(format!("C(X'_{k})"), x)?,
    ] {
        diagram = Diagram::compose_serial(&layer, &diagram)?;
    }
    Ok(diagram)
}

/// The chained isometry `Θ_{W,N} : W → 𝐐_1 ⊗ … ⊗ 𝐐_N ⊗ W` with
/// `𝐐_k = Q̄_k ⊗ Q_k`, as a `4^N·d × d` matrix.
pub fn chained_isometry(s: &Strategy, player: Player) -> Result<ComplexMatrix> {
    let mut theta = swap_isometry(s, player, 1)?;
    for k in 2..=s.n() {
        let psi = swap_isometry(s, player, k)?;
        let eye = ComplexMatrix::identity(checked_pow2(2 * (k as u32 - 1))?)?;
        theta = tensor::kron(&eye, &psi)?.mul(&theta)?;
    }
    Ok(theta)
}

/// Output registers of `Θ_{W,N}`: `Q̄`/`Q` pairs per round, numbered per
/// player block (`A` rounds 1..N, `B` rounds N+1..2N, `C` rounds 2N+1..3N).
fn theta_output_registers(n: usize, player: Player) -> Vec<Register> {
    let base = player.index() * n;
    let mut regs = Vec::with_capacity(2 * n);
    for k in 1..=n {
        regs.push(Register::new(format!("Qb{}", base + k), 2));
        regs.push(Register::new(format!("Q{}", base + k), 2));
    }
    regs
}

// ---------------------------------------------------------------------------
// GHZ eigenbasis
// ---------------------------------------------------------------------------

/// The three commuting stabilizer-like reflections whose common eigenbasis
/// organizes extracted qubit triples: X⊗Z⊗Z, Z⊗X⊗Z, Z⊗Z⊗X.
pub fn ghz_check_operators() -> [ComplexMatrix; 3] {
    let x = tensor::pauli_x();
    let z = tensor::pauli_z();
    let build = |ops: [&ComplexMatrix; 3]| {
        tensor::kron(&tensor::kron(ops[0], ops[1]).unwrap(), ops[2]).unwrap()
    };
    [
        build([&x, &z, &z]),
        build([&z, &x, &z]),
        build([&z, &z, &x]),
    ]
}

/// Eigenvalue of `G_v` under check operator `t ∈ {0,1,2}`: the label bits
/// `v = 4a + 2b + c` record which single-qubit Z flips were applied to
/// `G_0`, and flip exactly one eigenvalue each.
pub fn ghz_eigenvalue(v: usize, t: usize) -> f64 {
    let bit = (v >> (2 - t)) & 1;
    if bit == 0 {
        1.0
    } else {
        -1.0
    }
}

/// The common orthonormal eigenbasis `G_0 … G_7` of the three check
/// operators; `G_0` is the unique simultaneous (+1)-eigenvector and equals
/// the ideal shared state. Global phases are fixed by making the
/// largest-magnitude amplitude real positive.
pub fn ghz_eigenbasis() -> [StateVector; 8] {
    let g0 = game::g_state();
    std::array::from_fn(|v| {
        let a = (v >> 2) & 1;
        let b = (v >> 1) & 1;
        let c = v & 1;
        let amps: Vec<Complex64> = g0
            .amplitudes()
            .iter()
            .enumerate()
            .map(|(idx, &amp)| {
                let r = (idx >> 2) & 1;
                let s = (idx >> 1) & 1;
                let t = idx & 1;
                let flips = (a & r) ^ (b & s) ^ (c & t);
                if flips == 1 {
                    -amp
                } else {
                    amp
                }
            })
            .collect();
        fix_global_phase(StateVector::new(amps).expect("finite"))
            .into_normalized()
            .expect("unit vector")
    })
}

fn fix_global_phase(v: StateVector) -> StateVector {
    let mut best = 0usize;
    let mut best_mag = 0.0f64;
    for (k, z) in v.amplitudes().iter().enumerate() {
        let m = z.norm();
        if m > best_mag + 1e-12 {
            best_mag = m;
            best = k;
        }
    }
    if best_mag < 1e-14 {
        return v;
    }
    let phase = v.amplitudes()[best] / Complex64::new(best_mag, 0.0);
    let conj = phase.conj();
    StateVector::new(v.amplitudes().iter().map(|&z| z * conj).collect()).expect("finite")
}

/// Change-of-basis matrix with `G_v` as column `v`.
fn ghz_basis_matrix() -> ComplexMatrix {
    let basis = ghz_eigenbasis();
    let mut entries = vec![Complex64::ZERO; 64];
    for (v, g) in basis.iter().enumerate() {
        for (r, &amp) in g.amplitudes().iter().enumerate() {
            entries[r * 8 + v] = amp;
        }
    }
    ComplexMatrix::new(8, 8, entries).expect("8x8")
}

// ---------------------------------------------------------------------------
// Relation checkers
// ---------------------------------------------------------------------------

/// A report section: entries plus the error order the chain assigns to this
/// relation family (for context only; never asserted against).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Section<T> {
    pub error_order: String,
    pub max_residual: f64,
    pub entries: Vec<T>,
}

impl<T> Section<T> {
    fn new(error_order: &str, entries: Vec<T>, residual: impl Fn(&T) -> f64) -> Section<T> {
        let max_residual = entries.iter().map(&residual).fold(0.0f64, f64::max);
        Section {
            error_order: error_order.into(),
            max_residual,
            entries,
        }
    }
}

/// One key-inequality line checked on one round (optionally with one
/// operator replaced by its pair variant), together with the exact losing
/// probability of the matching referee input.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KeyineqEntry {
    pub round: usize,
    /// Line 0..=3 in display order: I+X′X′X′, I−Z′Z′X′, I−X′Z′Z′, I−Z′X′Z′.
    pub line: usize,
    /// "singles" or "pair(W, j, t)" when player W's operator is the pair
    /// version conditioned on round j carrying bit t.
    pub variant: String,
    pub residual: f64,
    pub losing_probability: f64,
    /// |residual² − 4·losing_probability|; zero up to rounding.
    pub identity_gap: f64,
}

/// Bit patterns of the four key-inequality lines (player order A,B,C;
/// bit 0 selects X′, bit 1 selects Z′) and the resulting state sign.
fn keyineq_lines() -> [[u8; 3]; 4] {
    [[0, 0, 0], [1, 1, 0], [0, 1, 1], [1, 0, 1]]
}

/// Checks every key-inequality line on every round, including all pair
/// variants, and verifies the exact identity
/// `residual² = 4 · losing_probability` for each.
pub fn check_keyineqs(s: &Strategy) -> Result<Section<KeyineqEntry>> {
    let n = s.n();
    let base = LabeledState::from_strategy(s)?;
    let mut entries = Vec::new();
    for i in 1..=n {
        for (line, bits) in keyineq_lines().into_iter().enumerate() {
            // variants: None = all singles; Some((W, j, t)) = player W uses
            // the pair operator conditioned on (j → t).
            let mut variants: Vec<Option<(Player, usize, u8)>> = vec![None];
            for player in Player::ALL {
                for j in 1..=n {
                    if j == i {
                        continue;
                    }
                    for t in 0..=1u8 {
                        variants.push(Some((player, j, t)));
                    }
                }
            }
            for variant in variants {
                let mut moved = base.clone();
                for player in Player::ALL {
                    let b = bits[player.index()];
                    let op = match variant {
                        Some((w, j, t)) if w == player => s.pair(player, i, b, j, t)?,
                        _ => s.single(player, i, b)?,
                    };
                    moved.apply(&[player.label()], op)?;
                }
                let sign = if bits.contains(&1) { -1.0 } else { 1.0 };
                let residual = if sign > 0.0 {
                    moved.add_distance(&base)
                } else {
                    moved.distance(&base)
                };
                let input = keyineq_input(n, i, bits, variant)?;
                let lose = s.losing_probability(&input)?;
                let identity_gap = (residual * residual - 4.0 * lose).abs();
                entries.push(KeyineqEntry {
                    round: i,
                    line,
                    variant: match variant {
                        None => "singles".into(),
                        Some((w, j, t)) => format!("pair({}, {j}, {t})", w.label()),
                    },
                    residual,
                    losing_probability: lose,
                    identity_gap,
                });
            }
        }
    }
    Ok(Section::new("N*sqrt(eps)", entries, |e| e.residual))
}

fn keyineq_input(
    n: usize,
    i: usize,
    bits: [u8; 3],
    variant: Option<(Player, usize, u8)>,
) -> Result<game::InputCombo> {
    match variant {
        None => game::InputCombo::new(
            n,
            0,
            i,
            None,
            game::PartialAssignment::single(i, bits[0])?,
            game::PartialAssignment::single(i, bits[1])?,
            game::PartialAssignment::single(i, bits[2])?,
        ),
        Some((w, j, t)) => {
            let make = |p: Player| -> Result<game::PartialAssignment> {
                if p == w {
                    game::PartialAssignment::new(vec![(i, bits[p.index()]), (j, t)])
                } else {
                    game::PartialAssignment::single(i, bits[p.index()])
                }
            };
            game::InputCombo::new(
                n,
                (w.index() + 1) as u8,
                i,
                Some(j),
                make(Player::A)?,
                make(Player::B)?,
                make(Player::C)?,
            )
        }
    }
}

/// Residual of the approximate anticommutation
/// `‖(Z′_i X′_i ⊗ I ⊗ I)L + (X′_i Z′_i ⊗ I ⊗ I)L‖` on player A.
pub fn check_anticommute(s: &Strategy, i: usize) -> Result<f64> {
    anticommute_residual(s, Player::A, i)
}

pub(crate) fn anticommute_residual(s: &Strategy, player: Player, i: usize) -> Result<f64> {
    let x = s.single(player, i, 0)?;
    let z = s.single(player, i, 1)?;
    let base = LabeledState::from_strategy(s)?;
    let mut zx = base.clone();
    zx.apply(&[player.label()], x)?;
    zx.apply(&[player.label()], z)?;
    let mut xz = base;
    xz.apply(&[player.label()], z)?;
    xz.apply(&[player.label()], x)?;
    Ok(zx.add_distance(&xz))
}

/// Residual of the approximate commutation of two single-round reflections
/// on player A: `‖(R_{j→c} R_{i→b} − R_{i→b} R_{j→c}) ⊗ I ⊗ I · L‖`.
pub fn check_commute(s: &Strategy, i: usize, j: usize, b: u8, c: u8) -> Result<f64> {
    commute_residual(s, Player::A, i, j, b, c)
}

pub(crate) fn commute_residual(
    s: &Strategy,
    player: Player,
    i: usize,
    j: usize,
    b: u8,
    c: u8,
) -> Result<f64> {
    if i == j {
        return Err(Error::InvalidArgument(
            "commutation check needs distinct rounds".into(),
        ));
    }
    let ri = s.single(player, i, b)?;
    let rj = s.single(player, j, c)?;
    let base = LabeledState::from_strategy(s)?;
    let mut ij = base.clone();
    ij.apply(&[player.label()], ri)?;
    ij.apply(&[player.label()], rj)?;
    let mut ji = base;
    ji.apply(&[player.label()], rj)?;
    ji.apply(&[player.label()], ri)?;
    Ok(ij.distance(&ji))
}

/// Operator whose push-through partner is checked.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PushOp {
    /// `X′_{W,k}`, pushed to `−(X′ ⊗ X′)` on the other two players.
    XPrime(usize),
    /// `Z′_{W,k}`, pushed to the displayed asymmetric partner (`Z′ ⊗ X′`
    /// pattern; see [`check_push`]).
    ZPrime(usize),
    /// Hadamard on `Q_k`, pushed exactly through the Bell pair onto `Q̄_k`.
    HadamardQ(usize),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PushCheck {
    pub residual: f64,
    /// Human-readable description of the partner operator.
    pub partner: String,
}

/// Push-through residual `‖(U ⊗ I)L − (I ⊗ V)L‖` for the designated
/// partner `V`.
///
/// Partners follow the displayed relations: `X′_{W,k}` pushes to
/// `−(X′ ⊗ X′)` on the other two players (all players symmetric), while the
/// `Z′` partners inherit the asymmetry of the key inequalities:
/// `Z′_A ↔ Z′_B ⊗ X′_C`, `Z′_B ↔ Z′_A ⊗ X′_C`, `Z′_C ↔ X′_A ⊗ Z′_B`.
pub fn check_push(s: &Strategy, player: Player, op: PushOp) -> Result<PushCheck> {
    match op {
        PushOp::XPrime(k) => {
            let [o1, o2] = player.others();
            let lhs_op = s.single(player, k, 0)?;
            let v1 = s.single(o1, k, 0)?;
            let v2 = s.single(o2, k, 0)?;
            let base = LabeledState::from_strategy(s)?;
            let mut lhs = base.clone();
            lhs.apply(&[player.label()], lhs_op)?;
            let mut rhs = base;
            rhs.apply(&[o1.label()], v1)?;
            rhs.apply(&[o2.label()], v2)?;
            rhs.scale(-1.0);
            Ok(PushCheck {
                residual: lhs.distance(&rhs),
                partner: format!("-(X'_{{{},{k}}} ⊗ X'_{{{},{k}}})", o1.label(), o2.label()),
            })
        }
        PushOp::ZPrime(k) => {
            // (partner player with Z′, partner player with X′)
            let (zp, xp) = match player {
                Player::A => (Player::B, Player::C),
                Player::B => (Player::A, Player::C),
                Player::C => (Player::B, Player::A), // X′_A ⊗ Z′_B
            };
            let lhs_op = s.single(player, k, 1)?;
            let vz = s.single(zp, k, 1)?;
            let vx = s.single(xp, k, 0)?;
            let base = LabeledState::from_strategy(s)?;
            let mut lhs = base.clone();
            lhs.apply(&[player.label()], lhs_op)?;
            let mut rhs = base;
            rhs.apply(&[zp.label()], vz)?;
            rhs.apply(&[xp.label()], vx)?;
            Ok(PushCheck {
                residual: lhs.distance(&rhs),
                partner: format!("Z'_{{{},{k}}} ⊗ X'_{{{},{k}}}", zp.label(), xp.label()),
            })
        }
        PushOp::HadamardQ(k) => {
            // H on Q_k moves to Q̄_k exactly: (H ⊗ I)Φ⁺ = (I ⊗ H)Φ⁺.
            let base = bell_extended_state(s, k)?;
            let h = tensor::hadamard();
            let mut lhs = base.clone();
            lhs.apply(&[&format!("Q{k}")], &h)?;
            let mut rhs = base;
            rhs.apply(&[&format!("Qb{k}")], &h)?;
            Ok(PushCheck {
                residual: lhs.distance(&rhs),
                partner: format!("H on Qb{k}"),
            })
        }
    }
}

/// `Φ⁺ ⊗ L` on registers `(Q̄_k, Q_k, A, B, C)`: the ancilla pair the swap
/// isometry prepares, next to the shared state.
fn bell_extended_state(s: &Strategy, k: usize) -> Result<LabeledState> {
    let dims = s.dims();
    let layout = RegisterLayout::new(vec![
        Register::new(format!("Qb{k}"), 2),
        Register::new(format!("Q{k}"), 2),
        Register::new("A", dims[0]),
        Register::new("B", dims[1]),
        Register::new("C", dims[2]),
    ])?;
    let bell = tensor::bell_state(2)?;
    let mut amps = vec![Complex64::ZERO; 4 * s.state().dim()];
    for (b, &ba) in bell.amplitudes().iter().enumerate() {
        if ba == Complex64::ZERO {
            continue;
        }
        for (l, &la) in s.state().amplitudes().iter().enumerate() {
            amps[b * s.state().dim() + l] = ba * la;
        }
    }
    Ok(LabeledState { layout, amps })
}

/// Residuals of the correct-Pauli relation for one swap isometry:
/// `‖X_k·(Ψ⊗I)L − (Ψ⊗I)(X′_k⊗I)L‖` and the Z analogue.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PauliCheck {
    pub x_residual: f64,
    pub z_residual: f64,
}

/// Correct-Pauli check against `Ψ_{W,k}`: the Pauli acts on `Q_k`.
pub fn check_correct_pauli(s: &Strategy, player: Player, k: usize) -> Result<PauliCheck> {
    let psi = swap_isometry(s, player, k)?;
    let base = player.index() * s.n();
    let regs = vec![
        Register::new(format!("Qb{}", base + k), 2),
        Register::new(format!("Q{}", base + k), 2),
    ];
    pauli_check(s, player, k, &psi, regs, &format!("Q{}", base + k))
}

/// Correct-Pauli check against the chained `Θ_{W,N}`: the Pauli acts on the
/// round-`k` extracted qubit.
pub fn check_multi_pauli(s: &Strategy, player: Player, k: usize) -> Result<PauliCheck> {
    let theta = chained_isometry(s, player)?;
    let regs = theta_output_registers(s.n(), player);
    let base = player.index() * s.n();
    pauli_check(s, player, k, &theta, regs, &format!("Q{}", base + k))
}

fn pauli_check(
    s: &Strategy,
    player: Player,
    k: usize,
    iso: &ComplexMatrix,
    mut iso_regs: Vec<Register>,
    pauli_reg: &str,
) -> Result<PauliCheck> {
    iso_regs.push(Register::new(player.label(), s.dim(player)));
    let base = LabeledState::from_strategy(s)?;
    let mut residuals = [0.0f64; 2];
    for bit in 0..=1u8 {
        let prime = s.single(player, k, bit)?;
        let pauli = if bit == 0 {
            tensor::pauli_x()
        } else {
            tensor::pauli_z()
        };
        let mut lhs = base.clone();
        lhs.apply_isometry(player.label(), iso, iso_regs.clone())?;
        lhs.apply(&[pauli_reg], &pauli)?;
        let mut rhs = base.clone();
        rhs.apply(&[player.label()], prime)?;
        rhs.apply_isometry(player.label(), iso, iso_regs.clone())?;
        residuals[bit as usize] = lhs.distance(&rhs);
    }
    Ok(PauliCheck {
        x_residual: residuals[0],
        z_residual: residuals[1],
    })
}

// ---------------------------------------------------------------------------
// Full relation report
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AnticommuteEntry {
    pub player: Player,
    pub round: usize,
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CommuteEntry {
    pub player: Player,
    pub i: usize,
    pub j: usize,
    pub b: u8,
    pub c: u8,
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PushEntry {
    pub player: Player,
    pub op: String,
    pub residual: f64,
    pub partner: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PauliEntry {
    pub player: Player,
    pub round: usize,
    pub x_residual: f64,
    pub z_residual: f64,
}

/// Residual norms for every approximate relation, across players and
/// rounds, with the chain's error order recorded per section.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RelationReport {
    pub n: usize,
    pub epsilon: f64,
    pub keyineq: Section<KeyineqEntry>,
    pub anticommute: Section<AnticommuteEntry>,
    pub commute: Section<CommuteEntry>,
    pub push: Section<PushEntry>,
    pub correct_pauli: Section<PauliEntry>,
    pub multi_pauli: Section<PauliEntry>,
}

impl RelationReport {
    /// The largest residual across every section.
    pub fn max_residual(&self) -> f64 {
        [
            self.keyineq.max_residual,
            self.anticommute.max_residual,
            self.commute.max_residual,
            self.push.max_residual,
            self.correct_pauli.max_residual,
            self.multi_pauli.max_residual,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Runs every checker across all players and rounds.
pub fn full_report(s: &Strategy) -> Result<RelationReport> {
    let n = s.n();
    let epsilon = 1.0 - s.winning_probability()?;

    let keyineq = check_keyineqs(s)?;

    let mut anticommute = Vec::new();
    for player in Player::ALL {
        for i in 1..=n {
            anticommute.push(AnticommuteEntry {
                player,
                round: i,
                residual: anticommute_residual(s, player, i)?,
            });
        }
    }

    let mut commute = Vec::new();
    for player in Player::ALL {
        for i in 1..=n {
            for j in (i + 1)..=n {
                for b in 0..=1u8 {
                    for c in 0..=1u8 {
                        commute.push(CommuteEntry {
                            player,
                            i,
                            j,
                            b,
                            c,
                            residual: commute_residual(s, player, i, j, b, c)?,
                        });
                    }
                }
            }
        }
    }

    let mut push = Vec::new();
    for player in Player::ALL {
        for k in 1..=n {
            for (op, name) in [
                (PushOp::XPrime(k), format!("X'_{k}")),
                (PushOp::ZPrime(k), format!("Z'_{k}")),
                (PushOp::HadamardQ(k), format!("H on Q{k}")),
            ] {
                let check = check_push(s, player, op)?;
                push.push(PushEntry {
                    player,
                    op: name,
                    residual: check.residual,
                    partner: check.partner,
                });
            }
        }
    }

    let mut correct_pauli = Vec::new();
    let mut multi_pauli = Vec::new();
    for player in Player::ALL {
        for k in 1..=n {
            let c = check_correct_pauli(s, player, k)?;
            correct_pauli.push(PauliEntry {
                player,
                round: k,
                x_residual: c.x_residual,
                z_residual: c.z_residual,
            });
            let m = check_multi_pauli(s, player, k)?;
            multi_pauli.push(PauliEntry {
                player,
                round: k,
                x_residual: m.x_residual,
                z_residual: m.z_residual,
            });
        }
    }

    Ok(RelationReport {
        n,
        epsilon,
        keyineq,
        anticommute: Section::new("N*sqrt(eps)", anticommute, |e| e.residual),
        commute: Section::new("N*sqrt(eps)", commute, |e| e.residual),
        push: Section::new("N*sqrt(eps)", push, |e| e.residual),
        correct_pauli: Section::new("N*sqrt(eps)", correct_pauli, |e| {
            e.x_residual.max(e.z_residual)
        }),
        multi_pauli: Section::new("N^3*sqrt(eps)", multi_pauli, |e| {
            e.x_residual.max(e.z_residual)
        }),
    })
}

// ---------------------------------------------------------------------------
// Extraction
// ---------------------------------------------------------------------------

/// Weight of one basis label `(v_1, …, v_N)`, each digit in 0..=7.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WeightEntry {
    pub labels: Vec<u8>,
    pub weight: f64,
}

/// Result of applying all three chained isometries and decomposing the
/// extracted qubit triples in the GHZ eigenbasis.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub n: usize,
    /// The strategy's exact losing probability.
    pub epsilon: f64,
    /// Norm of the `G_0^{⊗N}` component.
    pub g0_weight: f64,
    /// Fidelity with the target state, maximized over junk: equals
    /// `g0_weight`.
    pub fidelity: f64,
    /// Norm of everything outside the `G_0^{⊗N}` component.
    pub residual: f64,
    /// `residual / (N⁴·√ε)`; 0 when ε vanishes. The chain's hidden constant
    /// is estimated empirically, never asserted as an exact value.
    pub bound_ratio: f64,
    pub weights: Vec<WeightEntry>,
    /// Full extracted state, present when dense extraction is feasible.
    pub extracted: Option<StateVector>,
    /// Register layout of `extracted`: round-major extracted qubit triples,
    /// then `A`, `B`, `C`, then the `Q̄` ancillas.
    pub layout: Option<RegisterLayout>,
}

/// Dense extraction intermediate: the regrouped state and its coefficients
/// in the per-round GHZ basis (an `8^N × junk` row-major array).
struct DenseExtraction {
    state: LabeledState,
    gcoeffs: Vec<Complex64>,
    junk_dim: usize,
    weights: Vec<f64>,
}

fn dense_total(s: &Strategy) -> Option<u128> {
    let dims = s.dims();
    let d: u128 = dims.iter().map(|&d| d as u128).product();
    let n = s.n() as u32;
    d.checked_shl(6 * n)
}

fn extract_dense(s: &Strategy) -> Result<DenseExtraction> {
    let n = s.n();
    let total = dense_total(s).ok_or(Error::DimensionCeiling {
        needed: u128::MAX,
        ceiling: crate::tensor::dim_ceiling(),
    })?;
    checked_len(total)?;
    let mut state = LabeledState::from_strategy(s)?;
    for player in Player::ALL {
        let theta = chained_isometry(s, player)?;
        let mut regs = theta_output_registers(n, player);
        regs.push(Register::new(player.label(), s.dim(player)));
        state.apply_isometry(player.label(), &theta, regs)?;
    }
    // Round-major extracted triples, then junk (A, B, C, Q̄ ascending).
    let mut order: Vec<String> = Vec::new();
    for k in 1..=n {
        order.push(format!("Q{k}"));
        order.push(format!("Q{}", n + k));
        order.push(format!("Q{}", 2 * n + k));
    }
    order.extend(["A".into(), "B".into(), "C".into()]);
    for k in 1..=(3 * n) {
        order.push(format!("Qb{k}"));
    }
    state.permute(&order)?;

    let junk_dim = state.layout.total_dim() >> (3 * n);
    let gcoeffs = to_ghz_basis(&state.amps, n, &state.layout.dims())?;
    let weights = row_norms(&gcoeffs, 1 << (3 * n), junk_dim);
    Ok(DenseExtraction {
        state,
        gcoeffs,
        junk_dim,
        weights,
    })
}

/// Applies the inverse GHZ basis change on every extracted triple (the
/// leading 3N qubit slots of `dims`).
fn to_ghz_basis(amps: &[Complex64], n: usize, dims: &[usize]) -> Result<Vec<Complex64>> {
    let u_dag = ghz_basis_matrix().dagger();
    let mut out = amps.to_vec();
    for k in 1..=n {
        let slots = [3 * k - 2, 3 * k - 1, 3 * k];
        out = apply_on_state(&out, dims, &slots, &u_dag)?;
    }
    Ok(out)
}

fn row_norms(coeffs: &[Complex64], rows: usize, cols: usize) -> Vec<f64> {
    (0..rows)
        .map(|r| {
            coeffs[r * cols..(r + 1) * cols]
                .iter()
                .map(|z| z.norm_sqr())
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

fn labels_of(v: usize, n: usize) -> Vec<u8> {
    let mut digits = vec![0u8; n];
    let mut rem = v;
    for k in (0..n).rev() {
        digits[k] = (rem & 7) as u8;
        rem >>= 3;
    }
    digits
}

/// Extracts the certified state: applies `Θ_N` for every player, regroups
/// the wires round-major, and decomposes in the GHZ eigenbasis.
///
/// Dense extraction materializes the full `4^{3N}·d_A d_B d_C` state when it
/// fits under the dimension ceiling. Otherwise the `Q̄` and player registers
/// are contracted out early (the weights only need inner products), which
/// keeps `N = 3` tractable at the cost of not reporting the full vector.
pub fn extract(s: &Strategy) -> Result<ExtractionResult> {
    let n = s.n();
    let epsilon = 1.0 - s.winning_probability()?;
    let dense_feasible = dense_total(s)
        .map(checked_len)
        .map(|r| r.is_ok())
        .unwrap_or(false);
    let (weights, extracted, layout) = if dense_feasible {
        let dense = extract_dense(s)?;
        (
            dense.weights,
            Some(StateVector::new(dense.state.amps.clone())?),
            Some(dense.state.layout.clone()),
        )
    } else {
        (extract_reduced_weights(s)?, None, None)
    };

    let total_sqr: f64 = weights.iter().map(|w| w * w).sum();
    if (total_sqr - 1.0).abs() > 1e-9 {
        return Err(Error::Numeric(format!(
            "extraction weights lost normalization: Σw² = {total_sqr}"
        )));
    }
    let g0_weight = weights[0];
    let residual = weights[1..].iter().map(|w| w * w).sum::<f64>().sqrt();
    let bound_ratio = if epsilon > 1e-15 {
        residual / ((n as f64).powi(4) * epsilon.sqrt())
    } else {
        0.0
    };
    let entries = weights
        .iter()
        .enumerate()
        .map(|(v, &weight)| WeightEntry {
            labels: labels_of(v, n),
            weight,
        })
        .collect();
    Ok(ExtractionResult {
        n,
        epsilon,
        g0_weight,
        fidelity: g0_weight,
        residual,
        bound_ratio,
        weights: entries,
        extracted,
        layout,
    })
}

/// Weight computation without materializing the extracted state: per player
/// the channel `ρ ↦ Tr_{Q̄,W}[Θ ρ Θ†]` is applied to the shared state's
/// density matrix via its transfer matrix, and the weights are the diagonal
/// of the resulting 3N-qubit density matrix in the GHZ basis.
fn extract_reduced_weights(s: &Strategy) -> Result<Vec<f64>> {
    let n = s.n();
    let dims = s.dims();
    let q_dim = checked_pow2(n as u32)?;

    // Transfer matrices T_W[(q,q'), (a,a')].
    let mut transfers = Vec::with_capacity(3);
    for player in Player::ALL {
        let d = dims[player.index()];
        let theta = chained_isometry(s, player)?;
        checked_len((q_dim as u128).pow(2) * (d as u128).pow(2))?;
        let mut t = vec![Complex64::ZERO; q_dim * q_dim * d * d];
        // Row index of Θ interleaves Q̄ and Q bits round-major.
        let interleave = |qb: usize, q: usize| -> usize {
            let mut m = 0usize;
            for k in 0..n {
                let qb_bit = (qb >> (n - 1 - k)) & 1;
                let q_bit = (q >> (n - 1 - k)) & 1;
                m = (m << 2) | (qb_bit << 1) | q_bit;
            }
            m
        };
        for q in 0..q_dim {
            for qp in 0..q_dim {
                for a in 0..d {
                    for ap in 0..d {
                        let mut acc = Complex64::ZERO;
                        for qb in 0..q_dim {
                            let row_q = interleave(qb, q) * d;
                            let row_qp = interleave(qb, qp) * d;
                            for w in 0..d {
                                acc += theta.get(row_q + w, a) * theta.get(row_qp + w, ap).conj();
                            }
                        }
                        t[(q * q_dim + qp) * d * d + (a * d + ap)] = acc;
                    }
                }
            }
        }
        transfers.push(ComplexMatrix::new(q_dim * q_dim, d * d, t)?);
    }

    // ρ_ABC as a (a,b,c,a',b',c') tensor, regrouped per player.
    let l = s.state().amplitudes();
    let total = l.len();
    checked_len(total as u128 * total as u128)?;
    let mut rho = vec![Complex64::ZERO; total * total];
    for (r, &lr) in l.iter().enumerate() {
        for (c, &lc) in l.iter().enumerate() {
            rho[r * total + c] = lr * lc.conj();
        }
    }
    let six = [dims[0], dims[1], dims[2], dims[0], dims[1], dims[2]];
    let (mut rho, _) = permute_state_slots(&rho, &six, &[1, 4, 2, 5, 3, 6])?;
    let mut grouped_dims = vec![dims[0] * dims[0], dims[1] * dims[1], dims[2] * dims[2]];
    // Apply each transfer matrix; slot p grows into a (q, q') pair.
    for (p, t) in transfers.iter().enumerate() {
        let slot = p + 1; // grouped slots shift as earlier ones split in two
        let slot = slot + p; // each applied transfer replaced one slot by two
        let (next, next_dims) =
            apply_isometry_on_state(&rho, &grouped_dims, slot, t, &[q_dim, q_dim])?;
        rho = next;
        grouped_dims = next_dims;
    }
    // Now (q_A, q_A', q_B, q_B', q_C, q_C'); bring rows together, then
    // reorder row/column qubits round-major.
    let (mut rho, _) = permute_state_slots(
        &rho,
        &[q_dim, q_dim, q_dim, q_dim, q_dim, q_dim],
        &[1, 3, 5, 2, 4, 6],
    )?;
    let qubit_dims = vec![2usize; 6 * n];
    let mut perm = Vec::with_capacity(6 * n);
    for half in 0..2 {
        let off = half * 3 * n;
        for k in 1..=n {
            perm.push(off + k);
            perm.push(off + n + k);
            perm.push(off + 2 * n + k);
        }
    }
    let (rho_rm, _) = permute_state_slots(&rho, &qubit_dims, &perm)?;
    rho = rho_rm;

    // GHZ basis change: U† on row triples, conj(U†) on column triples.
    let u_dag = ghz_basis_matrix().dagger();
    let u_dag_conj = ComplexMatrix::new(8, 8, u_dag.entries().iter().map(|z| z.conj()).collect())?;
    for k in 1..=n {
        let row_slots = [3 * k - 2, 3 * k - 1, 3 * k];
        rho = apply_on_state(&rho, &qubit_dims, &row_slots, &u_dag)?;
        let col_slots = [3 * n + 3 * k - 2, 3 * n + 3 * k - 1, 3 * n + 3 * k];
        rho = apply_on_state(&rho, &qubit_dims, &col_slots, &u_dag_conj)?;
    }
    let rows = 1usize << (3 * n);
    let weights = (0..rows)
        .map(|v| rho[v * rows + v].re.max(0.0).sqrt())
        .collect();
    Ok(weights)
}

// ---------------------------------------------------------------------------
// Negation structure
// ---------------------------------------------------------------------------

/// Verification that a designated check operator negates one non-leading
/// basis component exactly.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NegationEntry {
    pub labels: Vec<u8>,
    pub weight: f64,
    /// E.g. "X⊗Z⊗Z on round 2".
    pub operator: String,
    /// `‖c′_v + c_v‖` where `c_v` is the component before and `c′_v` after
    /// applying the operator; exactly 0 up to rounding.
    pub deviation: f64,
}

/// For every basis label other than `G_0^{⊗N}`, applies the designated
/// negating operator (`X⊗Z⊗Z` / `Z⊗X⊗Z` / `Z⊗Z⊗X` on the first round whose
/// digit is not `G_0`) and verifies the component flips sign. Requires
/// dense extraction.
pub fn check_negation(s: &Strategy) -> Result<Vec<NegationEntry>> {
    let n = s.n();
    let dense = extract_dense(s)?;
    let rows = 1usize << (3 * n);
    let ops = ghz_check_operators();
    let op_names = ["X⊗Z⊗Z", "Z⊗X⊗Z", "Z⊗Z⊗X"];

    // deviations[t][k-1][v] = ‖c′_v − s_t(v_k)·c_v‖ for operator t on round k.
    let mut deviations = vec![vec![vec![0.0f64; rows]; n]; 3];
    for (t, op) in ops.iter().enumerate() {
        for k in 1..=n {
            let slots = [3 * k - 2, 3 * k - 1, 3 * k];
            let moved = apply_on_state(&dense.state.amps, &dense.state.layout.dims(), &slots, op)?;
            let moved_g = to_ghz_basis(&moved, n, &dense.state.layout.dims())?;
            for v in 0..rows {
                let digit = (v >> (3 * (n - k))) & 7;
                let sign = ghz_eigenvalue(digit, t);
                let dev: f64 = moved_g[v * dense.junk_dim..(v + 1) * dense.junk_dim]
                    .iter()
                    .zip(&dense.gcoeffs[v * dense.junk_dim..(v + 1) * dense.junk_dim])
                    .map(|(m, c)| (m - sign * c).norm_sqr())
                    .sum::<f64>()
                    .sqrt();
                deviations[t][k - 1][v] = dev;
            }
        }
    }

    let mut entries = Vec::with_capacity(rows - 1);
    #[allow(clippy::needless_range_loop)] // v is a basis label, not a position
    for v in 1..rows {
        let digits = labels_of(v, n);
        let k = digits.iter().position(|&d| d != 0).expect("v ≠ 0") + 1;
        let digit = digits[k - 1] as usize;
        let t = (0..3)
            .find(|&t| ghz_eigenvalue(digit, t) < 0.0)
            .expect("non-G0 digit has a −1 eigenvalue");
        entries.push(NegationEntry {
            labels: digits,
            weight: dense.weights[v],
            operator: format!("{} on round {k}", op_names[t]),
            deviation: deviations[t][k - 1][v],
        });
    }
    Ok(entries)
}

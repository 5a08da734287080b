//! The augmented GHZ game: referee input distribution, win predicate,
//! exhaustive input enumeration with probabilities, classical brute force,
//! and the ideal quantum strategy.
//!
//! One round of the game: the referee draws `r ∈ {0,1,2,3}` and an ordered
//! pair of distinct rounds `(i, j)`, queries every player on round `i` with
//! bits of even parity, and additionally queries player `r` (when `r > 0`)
//! on round `j`. Players answer ±1 per queried round (bit form `b`
//! corresponds to the sign `(−1)^b`); only the round-`i` answers are
//! scored.
//!
//! Degenerate case `n = 1`: two distinct rounds do not exist, so the game is
//! defined as the `r = 0` branch only (the plain GHZ game). Reports flag
//! this via the absent `j`.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::strategy::{Player, Strategy};
use crate::tensor::{self, StateVector};

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

/// A partial function from rounds to input bits; the `(U, f)` pair sent to
/// one player. Rounds are 1-based.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(usize, u8)>", into = "Vec<(usize, u8)>")]
pub struct PartialAssignment {
    entries: Vec<(usize, u8)>,
}

impl TryFrom<Vec<(usize, u8)>> for PartialAssignment {
    type Error = Error;

    fn try_from(entries: Vec<(usize, u8)>) -> Result<Self> {
        PartialAssignment::new(entries)
    }
}

impl From<PartialAssignment> for Vec<(usize, u8)> {
    fn from(p: PartialAssignment) -> Self {
        p.entries
    }
}

impl PartialAssignment {
    pub fn new(entries: Vec<(usize, u8)>) -> Result<Self> {
        if entries.is_empty() || entries.len() > 2 {
            return Err(Error::InvalidArgument(format!(
                "partial assignment must cover 1 or 2 rounds, got {}",
                entries.len()
            )));
        }
        for &(round, bit) in &entries {
            if round == 0 {
                return Err(Error::InvalidArgument("rounds are 1-based".into()));
            }
            if bit > 1 {
                return Err(Error::InvalidArgument(format!(
                    "bit must be 0 or 1, got {bit}"
                )));
            }
        }
        if entries.len() == 2 && entries[0].0 == entries[1].0 {
            return Err(Error::InvalidArgument(
                "round indices must be distinct".into(),
            ));
        }
        Ok(PartialAssignment { entries })
    }

    pub fn single(round: usize, bit: u8) -> Result<Self> {
        Self::new(vec![(round, bit)])
    }

    pub fn get(&self, round: usize) -> Option<u8> {
        self.entries
            .iter()
            .find(|&&(r, _)| r == round)
            .map(|&(_, b)| b)
    }

    pub fn rounds(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|&(r, _)| r)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Serialize, Deserialize)]
struct InputComboRepr {
    n: usize,
    r: u8,
    i: usize,
    j: Option<usize>,
    f: [PartialAssignment; 3],
}

/// One referee query: the scored round `i`, the extra round `j` for the
/// doubled player (absent when `r = 0`), and the three partial assignments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InputComboRepr", into = "InputComboRepr")]
pub struct InputCombo {
    n: usize,
    r: u8,
    i: usize,
    j: Option<usize>,
    f: [PartialAssignment; 3],
}

impl TryFrom<InputComboRepr> for InputCombo {
    type Error = Error;

    fn try_from(r: InputComboRepr) -> Result<Self> {
        let [f1, f2, f3] = r.f;
        InputCombo::new(r.n, r.r, r.i, r.j, f1, f2, f3)
    }
}

impl From<InputCombo> for InputComboRepr {
    fn from(c: InputCombo) -> Self {
        InputComboRepr {
            n: c.n,
            r: c.r,
            i: c.i,
            j: c.j,
            f: c.f,
        }
    }
}

impl InputCombo {
    pub fn new(
        n: usize,
        r: u8,
        i: usize,
        j: Option<usize>,
        f1: PartialAssignment,
        f2: PartialAssignment,
        f3: PartialAssignment,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("round count must be ≥ 1".into()));
        }
        if r > 3 {
            return Err(Error::InvalidArgument(format!(
                "r must be in 0..=3, got {r}"
            )));
        }
        if i == 0 || i > n {
            return Err(Error::InvalidArgument(format!(
                "round i={i} out of 1..={n}"
            )));
        }
        let f = [f1, f2, f3];
        match (r, j) {
            (0, None) => {
                for (p, fp) in f.iter().enumerate() {
                    if fp.len() != 1 || fp.get(i).is_none() {
                        return Err(Error::InvalidArgument(format!(
                            "r=0 requires every domain to be {{{i}}}; player {} has another",
                            p + 1
                        )));
                    }
                }
            }
            (0, Some(_)) => {
                return Err(Error::InvalidArgument("r=0 admits no round j".into()));
            }
            (_, None) => {
                return Err(Error::InvalidArgument(format!("r={r} requires a round j")));
            }
            (_, Some(jj)) => {
                if jj == 0 || jj > n || jj == i {
                    return Err(Error::InvalidArgument(format!(
                        "round j={jj} must be in 1..={n} and distinct from i={i}"
                    )));
                }
                for (p, fp) in f.iter().enumerate() {
                    let doubled = p + 1 == r as usize;
                    if doubled {
                        if fp.len() != 2 || fp.get(i).is_none() || fp.get(jj).is_none() {
                            return Err(Error::InvalidArgument(format!(
                                "player {r} is doubled: domain must be {{{i},{jj}}}"
                            )));
                        }
                    } else if fp.len() != 1 || fp.get(i).is_none() {
                        return Err(Error::InvalidArgument(format!(
                            "player {} is single: domain must be {{{i}}}",
                            p + 1
                        )));
                    }
                }
            }
        }
        let parity = f[0].get(i).unwrap() ^ f[1].get(i).unwrap() ^ f[2].get(i).unwrap();
        if parity != 0 {
            return Err(Error::InvalidArgument(
                "round-i bits must have even parity".into(),
            ));
        }
        Ok(InputCombo { n, r, i, j, f })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Which player is doubled: 0 for none, 1..=3 otherwise.
    pub fn r(&self) -> u8 {
        self.r
    }

    pub fn i(&self) -> usize {
        self.i
    }

    pub fn j(&self) -> Option<usize> {
        self.j
    }

    pub fn assignment(&self, player: Player) -> &PartialAssignment {
        &self.f[player.index()]
    }

    /// The round-`i` bits in player order.
    pub fn scored_bits(&self) -> [u8; 3] {
        [
            self.f[0].get(self.i).unwrap(),
            self.f[1].get(self.i).unwrap(),
            self.f[2].get(self.i).unwrap(),
        ]
    }
}

/// One response per player: ±1 values on exactly the queried rounds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputCombo {
    g: [Vec<(usize, i8)>; 3],
}

impl OutputCombo {
    pub fn new(g1: Vec<(usize, i8)>, g2: Vec<(usize, i8)>, g3: Vec<(usize, i8)>) -> Result<Self> {
        let g = [g1, g2, g3];
        for (p, gp) in g.iter().enumerate() {
            for &(round, v) in gp {
                if round == 0 {
                    return Err(Error::InvalidArgument("rounds are 1-based".into()));
                }
                if v != 1 && v != -1 {
                    return Err(Error::InvalidArgument(format!(
                        "player {} output must be ±1, got {v}",
                        p + 1
                    )));
                }
            }
            let mut rounds: Vec<usize> = gp.iter().map(|&(r, _)| r).collect();
            rounds.sort_unstable();
            rounds.dedup();
            if rounds.len() != gp.len() {
                return Err(Error::InvalidArgument("duplicate round in output".into()));
            }
        }
        Ok(OutputCombo { g })
    }

    pub fn value(&self, player: Player, round: usize) -> Option<i8> {
        self.g[player.index()]
            .iter()
            .find(|&&(r, _)| r == round)
            .map(|&(_, v)| v)
    }
}

// ---------------------------------------------------------------------------
// Input distribution
// ---------------------------------------------------------------------------

/// The four even-parity bit triples, in a fixed enumeration order.
fn even_parity_triples() -> [[u8; 3]; 4] {
    [[0, 0, 0], [0, 1, 1], [1, 0, 1], [1, 1, 0]]
}

/// Every input combination with its probability.
///
/// For `n ≥ 2` there are `4n` combos at `r = 0` (probability `1/(16n)` each)
/// and `8n(n−1)` for each `r ∈ {1,2,3}` (probability `1/(32n(n−1))` each),
/// `4n + 24n(n−1)` in total. For `n = 1` only the `r = 0` branch exists and
/// each of its 4 combos has probability 1/4.
pub fn enumerate_inputs(n: usize) -> Result<Vec<(InputCombo, f64)>> {
    if n == 0 {
        return Err(Error::InvalidArgument("round count must be ≥ 1".into()));
    }
    let mut out = Vec::new();
    let p_single = if n == 1 {
        0.25
    } else {
        1.0 / (16.0 * n as f64)
    };
    for i in 1..=n {
        for bits in even_parity_triples() {
            let combo = InputCombo::new(
                n,
                0,
                i,
                None,
                PartialAssignment::single(i, bits[0])?,
                PartialAssignment::single(i, bits[1])?,
                PartialAssignment::single(i, bits[2])?,
            )?;
            out.push((combo, p_single));
        }
    }
    if n >= 2 {
        let p_pair = 1.0 / (32.0 * (n * (n - 1)) as f64);
        for r in 1..=3u8 {
            for i in 1..=n {
                for j in 1..=n {
                    if j == i {
                        continue;
                    }
                    for bits in even_parity_triples() {
                        for extra in 0..=1u8 {
                            let make = |p: usize| -> Result<PartialAssignment> {
                                if p + 1 == r as usize {
                                    PartialAssignment::new(vec![(i, bits[p]), (j, extra)])
                                } else {
                                    PartialAssignment::single(i, bits[p])
                                }
                            };
                            let combo =
                                InputCombo::new(n, r, i, Some(j), make(0)?, make(1)?, make(2)?)?;
                            out.push((combo, p_pair));
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Draws one input combination from the referee's distribution.
///
/// Matches [`enumerate_inputs`] exactly: `r` uniform (forced to 0 when
/// `n = 1`), `(i, j)` a uniform ordered pair of distinct rounds, round-`i`
/// bits uniform over the even-parity triples, and a uniform extra bit for
/// the doubled player.
pub fn sample_input<R: Rng>(n: usize, rng: &mut R) -> Result<InputCombo> {
    if n == 0 {
        return Err(Error::InvalidArgument("round count must be ≥ 1".into()));
    }
    let r: u8 = if n == 1 { 0 } else { rng.gen_range(0..4u8) };
    let i = rng.gen_range(1..=n);
    let j = if n >= 2 {
        loop {
            let j = rng.gen_range(1..=n);
            if j != i {
                break Some(j);
            }
        }
    } else {
        None
    };
    let x: u8 = rng.gen_range(0..2);
    let y: u8 = rng.gen_range(0..2);
    let bits = [x, y, x ^ y];
    if r == 0 {
        InputCombo::new(
            n,
            0,
            i,
            None,
            PartialAssignment::single(i, bits[0])?,
            PartialAssignment::single(i, bits[1])?,
            PartialAssignment::single(i, bits[2])?,
        )
    } else {
        let extra: u8 = rng.gen_range(0..2);
        let j = j.expect("n ≥ 2 here");
        let make = |p: usize| -> Result<PartialAssignment> {
            if p + 1 == r as usize {
                PartialAssignment::new(vec![(i, bits[p]), (j, extra)])
            } else {
                PartialAssignment::single(i, bits[p])
            }
        };
        InputCombo::new(n, r, i, Some(j), make(0)?, make(1)?, make(2)?)
    }
}

/// Win condition: the round-`i` outputs satisfy
/// `g₁(i)g₂(i)g₃(i) = (−1)^{¬(f₁(i) ∨ f₂(i) ∨ f₃(i))}`.
pub fn win_predicate(input: &InputCombo, output: &OutputCombo) -> Result<bool> {
    for player in Player::ALL {
        let f = input.assignment(player);
        let g = &output.g[player.index()];
        let mut f_rounds: Vec<usize> = f.rounds().collect();
        let mut g_rounds: Vec<usize> = g.iter().map(|&(r, _)| r).collect();
        f_rounds.sort_unstable();
        g_rounds.sort_unstable();
        if f_rounds != g_rounds {
            return Err(Error::InvalidArgument(format!(
                "output domain {:?} does not match input domain {:?} for player {}",
                g_rounds,
                f_rounds,
                player.label()
            )));
        }
    }
    let i = input.i();
    let product: i32 = Player::ALL
        .iter()
        .map(|&p| output.value(p, i).expect("domain checked") as i32)
        .product();
    let bits = input.scored_bits();
    let any_one = bits.contains(&1);
    let target = if any_one { 1 } else { -1 };
    Ok(product == target)
}

// ---------------------------------------------------------------------------
// Classical value
// ---------------------------------------------------------------------------

/// Target sign `(−1)^{¬(x∨y∨z)}` for round-`i` bits.
fn target_sign(bits: [u8; 3]) -> i32 {
    if bits.contains(&1) {
        1
    } else {
        -1
    }
}

/// Maximum winning probability over all deterministic classical strategies.
///
/// Randomized classical strategies are convex combinations of deterministic
/// ones, so this is the classical value of the game. Supported for
/// `n ∈ {1, 2}`; the search space explodes beyond that.
pub fn classical_value(n: usize) -> Result<f64> {
    match n {
        0 => Err(Error::InvalidArgument("round count must be ≥ 1".into())),
        1 => Ok(classical_value_n1()),
        2 => Ok(classical_value_n2()),
        _ => Err(Error::InvalidArgument(format!(
            "exhaustive classical search is limited to n ≤ 2, got {n}"
        ))),
    }
}

/// Exhaustive search over the 4³ = 64 deterministic single-round strategies.
fn classical_value_n1() -> f64 {
    // Player tables: table bit b selects the answer for input bit b.
    let answer = |table: u8, bit: u8| -> i32 {
        if (table >> bit) & 1 == 1 {
            -1
        } else {
            1
        }
    };
    let mut best = 0u32;
    for t1 in 0..4u8 {
        for t2 in 0..4u8 {
            for t3 in 0..4u8 {
                let mut wins = 0u32;
                for bits in even_parity_triples() {
                    let prod = answer(t1, bits[0]) * answer(t2, bits[1]) * answer(t3, bits[2]);
                    if prod == target_sign(bits) {
                        wins += 1;
                    }
                }
                best = best.max(wins);
            }
        }
    }
    best as f64 / 4.0
}

/// Deterministic singleton tables for `n = 2`: `answer(table, round, bit)`.
fn singleton_answer(table: u8, round: usize, bit: u8) -> i32 {
    let idx = ((round - 1) as u8) * 2 + bit;
    if (table >> idx) & 1 == 1 {
        -1
    } else {
        1
    }
}

/// Brute force for `n = 2` via a decomposition: fix the three singleton
/// tables (16 choices each), then optimize every pair-input response
/// independently; a pair entry is scored on a combo set disjoint from every
/// other entry's, so the per-entry maxima add up.
fn classical_value_n2() -> f64 {
    let n = 2usize;
    let p_single = 1.0 / (16.0 * n as f64);
    let p_pair = 1.0 / (32.0 * (n * (n - 1)) as f64);
    let mut best = f64::MIN;
    for t1 in 0..16u8 {
        for t2 in 0..16u8 {
            for t3 in 0..16u8 {
                let tables = [t1, t2, t3];
                let mut value = 0.0;
                // r = 0 combos
                for i in 1..=n {
                    for bits in even_parity_triples() {
                        let prod: i32 = (0..3)
                            .map(|p| singleton_answer(tables[p], i, bits[p]))
                            .product();
                        if prod == target_sign(bits) {
                            value += p_single;
                        }
                    }
                }
                // doubled-player combos: optimize each response entry in place
                for w in 0..3usize {
                    for i in 1..=n {
                        for j in 1..=n {
                            if i == j {
                                continue;
                            }
                            for b in 0..=1u8 {
                                // The entry "player w's round-i answer on input
                                // {i→b, j→c}" meets exactly the two combos with
                                // partner bits of matching parity; c does not
                                // change which combos it meets, only the entry.
                                for _c in 0..=1u8 {
                                    let mut wins_plus = 0u32;
                                    for y in 0..=1u8 {
                                        let z = b ^ y;
                                        let mut bits = [0u8; 3];
                                        bits[w] = b;
                                        let others: Vec<usize> =
                                            (0..3).filter(|&p| p != w).collect();
                                        bits[others[0]] = y;
                                        bits[others[1]] = z;
                                        let prod: i32 = others
                                            .iter()
                                            .map(|&p| singleton_answer(tables[p], i, bits[p]))
                                            .product();
                                        if prod == target_sign(bits) {
                                            wins_plus += 1;
                                        }
                                    }
                                    // answering −1 wins exactly the other combos
                                    let wins = wins_plus.max(2 - wins_plus);
                                    value += wins as f64 * p_pair;
                                }
                            }
                        }
                    }
                }
                best = best.max(value);
            }
        }
    }
    best
}

/// Expected winning probability of an explicit deterministic strategy for
/// `n = 2`, given singleton tables and a pair-response function
/// `pair(w, i, b, j, c) → ±1` (the round-`i` answer of doubled player `w`
/// on input `{i→b, j→c}`). Used as an oracle in tests.
pub fn deterministic_value_n2(
    tables: [u8; 3],
    pair: impl Fn(usize, usize, u8, usize, u8) -> i32,
) -> Result<f64> {
    let mut value = 0.0;
    for (combo, prob) in enumerate_inputs(2)? {
        let i = combo.i();
        let bits = combo.scored_bits();
        let prod: i32 = match combo.r() {
            0 => (0..3)
                .map(|p| singleton_answer(tables[p], i, bits[p]))
                .product(),
            r => {
                let w = (r - 1) as usize;
                let j = combo.j().expect("doubled");
                let c = combo.f[w].get(j).expect("doubled domain");
                (0..3)
                    .map(|p| {
                        if p == w {
                            pair(w, i, bits[p], j, c)
                        } else {
                            singleton_answer(tables[p], i, bits[p])
                        }
                    })
                    .product()
            }
        };
        if prod == target_sign(bits) {
            value += prob;
        }
    }
    Ok(value)
}

// ---------------------------------------------------------------------------
// Ideal strategy
// ---------------------------------------------------------------------------

/// Amplitudes of the shared 3-qubit state: `+1/(2√2)` on `|rst⟩` with
/// `r+s+t ≤ 1` and `−1/(2√2)` otherwise.
pub fn g_state() -> StateVector {
    let a = 1.0 / (2.0 * 2f64.sqrt());
    let amps = (0..8usize)
        .map(|idx| {
            let ones = idx.count_ones();
            Complex64::new(if ones <= 1 { a } else { -a }, 0.0)
        })
        .collect();
    StateVector::new_normalized(amps).expect("unit vector by construction")
}

/// The ideal strategy for `n` rounds: the shared state is `|G⟩^⊗n` with
/// player `W` holding qubit `W` of each copy, round-`i` measurements are
/// Pauli `X` (input 0) or `Z` (input 1) on qubit `i`, and pair reflections
/// coincide with the round-`i` single (they commute across distinct rounds).
pub fn ideal_strategy(n: usize) -> Result<Strategy> {
    if n == 0 {
        return Err(Error::InvalidArgument("round count must be ≥ 1".into()));
    }
    if n > 128 {
        // 2^n is far beyond any configurable ceiling; avoids cast truncation
        return Err(Error::InvalidArgument(format!("round count {n} too large")));
    }
    let d = tensor::checked_pow2(n as u32)?;
    tensor::checked_pow2(3 * n as u32)?;

    // |G⟩^⊗n in copy-major qubit order (a₁ b₁ c₁ a₂ b₂ c₂ ...), then
    // permuted to player-major order (a₁..a_n b₁..b_n c₁..c_n).
    let g = g_state();
    let mut amps = vec![Complex64::ONE];
    for _ in 0..n {
        let mut next = vec![Complex64::ZERO; amps.len() * 8];
        for (k, &a) in amps.iter().enumerate() {
            for (m, &b) in g.amplitudes().iter().enumerate() {
                next[k * 8 + m] = a * b;
            }
        }
        amps = next;
    }
    let copy_major_dims = vec![2usize; 3 * n];
    let mut perm = Vec::with_capacity(3 * n);
    for player in 0..3 {
        for copy in 0..n {
            perm.push(3 * copy + player + 1);
        }
    }
    let (amps, _) = tensor::permute_state_slots(&amps, &copy_major_dims, &perm)?;
    let state = StateVector::new_normalized(amps)?;

    let qubit_dims = vec![2usize; n];
    let mut singles = BTreeMap::new();
    let mut pairs = BTreeMap::new();
    for player in Player::ALL {
        for i in 1..=n {
            for bit in 0..=1u8 {
                let op = if bit == 0 {
                    tensor::pauli_x()
                } else {
                    tensor::pauli_z()
                };
                let embedded = tensor::apply_on(&op, &[i], &qubit_dims)?;
                singles.insert((player, i, bit), embedded.clone());
                for j in 1..=n {
                    if j == i {
                        continue;
                    }
                    for c in 0..=1u8 {
                        pairs.insert((player, i, bit, j, c), embedded.clone());
                    }
                }
            }
        }
    }
    Strategy::new(n, [d, d, d], state, singles, pairs)
}

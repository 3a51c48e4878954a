//! Symbolic stabilizer flow for detector derivation.
//!
//! The engine tracks a set of rows, each a signed Hermitian Pauli together
//! with a set of measurement-record ids: the row `(P, refs, sign)` asserts
//! that measuring `P` on the current (noiseless) state deterministically
//! yields `XOR(refs) ⊕ sign`. Gates conjugate the rows; resets and
//! measurements update them CHP-style. When a measured operator lies in the
//! row span, the solved record combination is exactly the detector the
//! compiler should emit for that measurement.
//!
//! Two policies shape the solutions without affecting their validity: newer
//! facts get elimination priority, so a re-measured stabilizer resolves to
//! its most recent record rather than to older equivalents, and a
//! deterministic measurement folds its record into the row that carries the
//! measured operator, so the fact survives the ancilla's next reset as a
//! statement about the data qubits.
//!
//! Reset coins deliberately destroy rows: a reset on a qubit that carries
//! unresolved Z/X information drops the affected rows, because their symbolic
//! signs become coin-dependent and can never feed a detector.

use crate::gf2::BitVector;
use crate::pauli::{Pauli, PauliString};
use std::collections::HashMap;

#[derive(Clone, Debug)]
struct KRow {
    pauli: PauliString,
    refs: Vec<usize>,
    sign: bool,
    stamp: u64,
}

impl KRow {
    fn multiply(&mut self, other: &KRow) {
        let (p, s) = self
            .pauli
            .hermitian_product(self.sign, &other.pauli, other.sign);
        self.pauli = p;
        self.sign = s;
        self.refs = xor_merge(&self.refs, &other.refs);
    }
}

/// Symmetric difference of two sorted id lists.
fn xor_merge(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// Result of symbolically measuring an operator.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum MeasureOutcome {
    /// The operator was in the stabilizer span: its value equals
    /// `XOR(refs) ⊕ sign` over already-recorded measurement bits.
    Deterministic { refs: Vec<usize>, sign: bool },
    /// Fresh projective outcome; the record now carries the information.
    Random,
}

struct EchelonRow {
    pauli: PauliString,
    refs: Vec<usize>,
    sign: bool,
    /// Which true rows this echelon row is a product of.
    combo: BitVector,
}

struct Echelon {
    rows: Vec<EchelonRow>,
    /// symplectic pivot index (x bits then z bits) → echelon row
    pivots: HashMap<usize, usize>,
}

/// Detector-derivation engine over `n` physical qubits, all starting in |0⟩.
pub struct KEngine {
    n: usize,
    rows: Vec<KRow>,
    clock: u64,
    cache: Option<Echelon>,
}

impl KEngine {
    pub fn new(num_qubits: usize) -> Self {
        let rows = (0..num_qubits)
            .map(|q| KRow {
                pauli: PauliString::single(num_qubits, q, Pauli::Z),
                refs: Vec::new(),
                sign: false,
                stamp: q as u64,
            })
            .collect();
        Self {
            n: num_qubits,
            rows,
            clock: num_qubits as u64,
            cache: None,
        }
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    /// Widen the register to `n` qubits; the new qubits start in |0⟩.
    pub fn ensure_qubits(&mut self, n: usize) {
        if n <= self.n {
            return;
        }
        for row in &mut self.rows {
            row.pauli.grow(n);
        }
        for q in self.n..n {
            let stamp = self.tick();
            self.rows.push(KRow {
                pauli: PauliString::single(n, q, Pauli::Z),
                refs: Vec::new(),
                sign: false,
                stamp,
            });
        }
        self.n = n;
        self.invalidate();
    }

    fn tick(&mut self) -> u64 {
        self.clock += 1;
        self.clock
    }

    fn invalidate(&mut self) {
        self.cache = None;
    }

    /// Conjugate all rows through a Clifford gate.
    pub fn apply_step(&mut self, step: &crate::pauli::CliffordStep) {
        let touched = step.targets();
        for row in &mut self.rows {
            if touched
                .iter()
                .any(|&q| row.pauli.x_bit(q) || row.pauli.z_bit(q))
            {
                row.sign ^= row.pauli.conjugate_signed(step);
            }
        }
        self.invalidate();
    }

    fn pivot_of(pauli: &PauliString, n: usize) -> Option<usize> {
        pauli
            .x_part()
            .iter_ones()
            .next()
            .or_else(|| pauli.z_part().iter_ones().next().map(|z| n + z))
    }

    fn build_cache(&mut self) {
        loop {
            let mut order: Vec<usize> = (0..self.rows.len()).collect();
            order.sort_by_key(|&i| std::cmp::Reverse(self.rows[i].stamp));
            let mut ech = Echelon {
                rows: Vec::with_capacity(self.rows.len()),
                pivots: HashMap::new(),
            };
            let mut vacuous: Vec<usize> = Vec::new();
            for idx in order {
                let row = &self.rows[idx];
                let mut combo = BitVector::zeros(self.rows.len());
                combo.set(idx, true);
                let mut work = EchelonRow {
                    pauli: row.pauli.clone(),
                    refs: row.refs.clone(),
                    sign: row.sign,
                    combo,
                };
                loop {
                    let Some(p) = Self::pivot_of(&work.pauli, self.n) else {
                        // Reduced to identity: a redundant parity fact.
                        vacuous.push(idx);
                        break;
                    };
                    match ech.pivots.get(&p) {
                        Some(&r) => {
                            let other = &ech.rows[r];
                            let (pp, ss) =
                                work.pauli
                                    .hermitian_product(work.sign, &other.pauli, other.sign);
                            work.pauli = pp;
                            work.sign = ss;
                            work.refs = xor_merge(&work.refs, &other.refs);
                            work.combo.xor_assign(&other.combo);
                        }
                        None => {
                            ech.pivots.insert(p, ech.rows.len());
                            ech.rows.push(work);
                            break;
                        }
                    }
                }
            }
            if vacuous.is_empty() {
                self.cache = Some(ech);
                return;
            }
            // Drop the redundant rows and rebuild so combos index cleanly.
            vacuous.sort_unstable();
            for idx in vacuous.into_iter().rev() {
                self.rows.remove(idx);
            }
        }
    }

    /// Reduce `op` against the echelon basis. `Some((refs, sign, combo))`
    /// when `op` is in the span.
    fn solve(&mut self, op: &PauliString) -> Option<(Vec<usize>, bool, BitVector)> {
        if self.cache.is_none() {
            self.build_cache();
        }
        let ech = self.cache.as_ref().unwrap();
        // Anything in the span commutes with every row; bail out early so
        // the reduction below never multiplies anticommuting operators.
        if ech.rows.iter().any(|r| !r.pauli.commutes(op)) {
            return None;
        }
        let mut pauli = op.clone();
        let mut refs: Vec<usize> = Vec::new();
        let mut sign = false;
        let mut combo = BitVector::zeros(self.rows.len());
        while let Some(p) = Self::pivot_of(&pauli, self.n) {
            let &r = ech.pivots.get(&p)?;
            let other = &ech.rows[r];
            let (pp, ss) = pauli.hermitian_product(sign, &other.pauli, other.sign);
            pauli = pp;
            sign = ss;
            refs = xor_merge(&refs, &other.refs);
            combo.xor_assign(&other.combo);
        }
        Some((refs, sign, combo))
    }

    /// Query an operator's symbolic value without disturbing the state.
    pub fn value_of(&mut self, op: &PauliString) -> Option<(Vec<usize>, bool)> {
        self.solve(op).map(|(refs, sign, _)| (refs, sign))
    }

    /// Symbolically measure `op`, recording the outcome as record id `rec`.
    pub fn measure(&mut self, op: &PauliString, rec: usize) -> MeasureOutcome {
        if let Some((refs, sign, combo)) = self.solve(op) {
            // Fold the fresh fact (op = rec) into a contributing row that
            // shares support with op. The product replaces, say, the
            // entangled ancilla row (Z_S·Z_anc, old) with the data-side fact
            // (Z_S, {rec}), which survives the ancilla's next reset and
            // makes the next round resolve to this record.
            let fact = KRow {
                pauli: op.clone(),
                refs: vec![rec],
                sign: false,
                stamp: 0,
            };
            let target = combo
                .iter_ones()
                .filter(|&i| i < self.rows.len())
                .find(|&i| self.rows[i].pauli.overlaps(op));
            match target {
                Some(k) if self.rows[k].pauli == *op => {
                    // Same operator re-measured: just re-anchor its record.
                    self.rows[k].refs = vec![rec];
                    self.rows[k].sign = false;
                    self.rows[k].stamp = self.tick();
                }
                Some(k) => {
                    self.rows[k].multiply(&fact);
                    self.rows[k].stamp = self.tick();
                }
                None => {
                    let mut fresh = fact;
                    fresh.stamp = self.tick();
                    self.rows.push(fresh);
                }
            }
            self.invalidate();
            return MeasureOutcome::Deterministic { refs, sign };
        }
        // Projective collapse: clear every other anticommuting row with the
        // first one, which the fresh record row then replaces.
        let anti: Vec<usize> = (0..self.rows.len())
            .filter(|&i| !self.rows[i].pauli.commutes(op))
            .collect();
        let stamp = self.tick();
        if let Some((&k0, rest)) = anti.split_first() {
            let pivot = self.rows[k0].clone();
            for &i in rest {
                self.rows[i].multiply(&pivot);
            }
            self.rows[k0] = KRow {
                pauli: op.clone(),
                refs: vec![rec],
                sign: false,
                stamp,
            };
        } else {
            // Coin-randomized direction (information was destroyed by an
            // earlier reset): the record pins it down again.
            self.rows.push(KRow {
                pauli: op.clone(),
                refs: vec![rec],
                sign: false,
                stamp,
            });
        }
        self.invalidate();
        MeasureOutcome::Random
    }

    /// Reset a qubit to |0⟩ (`x_basis = false`) or |+⟩ (`true`) with no
    /// record taken.
    pub fn reset(&mut self, q: usize, x_basis: bool) {
        let fresh = PauliString::single(self.n, q, if x_basis { Pauli::X } else { Pauli::Z });
        if let Some((refs, sign, _)) = self.solve(&fresh) {
            // Deterministic direction: the reset applies a symbolic
            // conditional correction, flipping every row that anticommutes
            // with the correction Pauli.
            if refs.is_empty() && !sign {
                return;
            }
            for row in &mut self.rows {
                let anti = if x_basis {
                    row.pauli.x_bit(q) // correction is Z
                } else {
                    row.pauli.z_bit(q) // correction is X
                };
                if anti {
                    row.refs = xor_merge(&row.refs, &refs);
                    row.sign ^= sign;
                }
            }
            self.invalidate();
            return;
        }
        // Random direction: collapse, then drop rows whose signs the
        // unrecorded reset coin randomizes.
        let anti: Vec<usize> = (0..self.rows.len())
            .filter(|&i| !self.rows[i].pauli.commutes(&fresh))
            .collect();
        let mut collapsed = None;
        if let Some((&k0, rest)) = anti.split_first() {
            let pivot = self.rows[k0].clone();
            for &i in rest {
                self.rows[i].multiply(&pivot);
            }
            collapsed = Some(k0);
        }
        let kept: Vec<KRow> = self
            .rows
            .drain(..)
            .enumerate()
            .filter(|(i, row)| {
                Some(*i) != collapsed && !row.pauli.x_bit(q) && !row.pauli.z_bit(q)
            })
            .map(|(_, row)| row)
            .collect();
        self.rows = kept;
        let stamp = self.tick();
        self.rows.push(KRow {
            pauli: fresh,
            refs: Vec::new(),
            sign: false,
            stamp,
        });
        self.invalidate();
    }
}

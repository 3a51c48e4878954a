//! Stabilizer tableau simulator with sign tracking.
//!
//! Standard destabilizer/stabilizer tableau: rows `0..n` are destabilizers,
//! rows `n..2n` stabilizers. Measurements report whether the outcome was
//! deterministic, and nondeterministic outcomes can be forced, which is how
//! the noiseless reference execution of a circuit is made reproducible.

use crate::circuit::{CtrlPauli, Gate1, Gate2, Instruction, PhysicalCircuit};
use crate::gf2::BitVector;
use crate::pauli::{CliffordStep, PauliString};

/// Destabilizer/stabilizer tableau over `n` qubits.
#[derive(Clone, Debug)]
pub struct Tableau {
    n: usize,
    /// X bits per row, rows `0..2n`.
    x: Vec<BitVector>,
    /// Z bits per row.
    z: Vec<BitVector>,
    /// Sign bit per row: `true` means the row carries a −1 sign.
    signs: BitVector,
}

/// Outcome of a tableau measurement.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct MeasureResult {
    pub value: bool,
    /// True when the outcome was not determined by the stabilizer group.
    pub random: bool,
}

impl Tableau {
    /// Identity tableau: stabilizers `Z_i`, destabilizers `X_i`, all signs +.
    pub fn new(n: usize) -> Self {
        let mut x = Vec::with_capacity(2 * n);
        let mut z = Vec::with_capacity(2 * n);
        for i in 0..2 * n {
            let mut xr = BitVector::zeros(n);
            let mut zr = BitVector::zeros(n);
            if i < n {
                xr.set(i, true);
            } else {
                zr.set(i - n, true);
            }
            x.push(xr);
            z.push(zr);
        }
        Tableau {
            n,
            x,
            z,
            signs: BitVector::zeros(2 * n),
        }
    }

    #[must_use]
    pub fn num_qubits(&self) -> usize {
        self.n
    }

    /// Stabilizer row `i` as a Pauli string plus its sign bit.
    #[must_use]
    pub fn stabilizer_row(&self, i: usize) -> (PauliString, bool) {
        let row = self.n + i;
        (
            PauliString::from_parts(self.x[row].clone(), self.z[row].clone()),
            self.signs.get(row),
        )
    }

    pub fn h(&mut self, q: usize) {
        for row in 0..2 * self.n {
            let xb = self.x[row].get(q);
            let zb = self.z[row].get(q);
            if xb && zb {
                self.signs.toggle(row);
            }
            self.x[row].set(q, zb);
            self.z[row].set(q, xb);
        }
    }

    pub fn s(&mut self, q: usize) {
        for row in 0..2 * self.n {
            let xb = self.x[row].get(q);
            let zb = self.z[row].get(q);
            if xb && zb {
                self.signs.toggle(row);
            }
            if xb {
                self.z[row].set(q, !zb);
            }
        }
    }

    pub fn s_dag(&mut self, q: usize) {
        for row in 0..2 * self.n {
            let xb = self.x[row].get(q);
            let zb = self.z[row].get(q);
            if xb {
                self.z[row].set(q, !zb);
                if !zb {
                    self.signs.toggle(row);
                }
            }
        }
    }

    pub fn cx(&mut self, c: usize, t: usize) {
        for row in 0..2 * self.n {
            let xc = self.x[row].get(c);
            let zc = self.z[row].get(c);
            let xt = self.x[row].get(t);
            let zt = self.z[row].get(t);
            if xc && zt && (xt == zc) {
                self.signs.toggle(row);
            }
            self.x[row].set(t, xt ^ xc);
            self.z[row].set(c, zc ^ zt);
        }
    }

    pub fn cz(&mut self, a: usize, b: usize) {
        self.h(b);
        self.cx(a, b);
        self.h(b);
    }

    pub fn swap(&mut self, a: usize, b: usize) {
        for row in 0..2 * self.n {
            let (xa, xb) = (self.x[row].get(a), self.x[row].get(b));
            self.x[row].set(a, xb);
            self.x[row].set(b, xa);
            let (za, zb) = (self.z[row].get(a), self.z[row].get(b));
            self.z[row].set(a, zb);
            self.z[row].set(b, za);
        }
    }

    /// Apply Pauli X to the state (flips signs of rows anticommuting with it).
    pub fn apply_x(&mut self, q: usize) {
        for row in 0..2 * self.n {
            if self.z[row].get(q) {
                self.signs.toggle(row);
            }
        }
    }

    /// Apply Pauli Z to the state.
    pub fn apply_z(&mut self, q: usize) {
        for row in 0..2 * self.n {
            if self.x[row].get(q) {
                self.signs.toggle(row);
            }
        }
    }

    pub fn apply_step(&mut self, step: &CliffordStep) {
        match *step {
            CliffordStep::H(q) => self.h(q),
            CliffordStep::S(q) => self.s(q),
            CliffordStep::SDag(q) => self.s_dag(q),
            CliffordStep::Cx(c, t) => self.cx(c, t),
            CliffordStep::Cz(a, b) => self.cz(a, b),
            CliffordStep::Swap(a, b) => self.swap(a, b),
        }
    }

    /// Phase exponent contribution of multiplying row `i` into row `h`,
    /// following the usual mod-4 bookkeeping. Returns the new sign bit.
    fn rowsum_signs(&self, h: usize, i: usize) -> bool {
        let mut phase: i32 = 2 * (self.signs.get(h) as i32) + 2 * (self.signs.get(i) as i32);
        for q in 0..self.n {
            let x1 = self.x[i].get(q) as i32;
            let z1 = self.z[i].get(q) as i32;
            let x2 = self.x[h].get(q) as i32;
            let z2 = self.z[h].get(q) as i32;
            phase += match (x1, z1) {
                (0, 0) => 0,
                (1, 1) => z2 - x2,
                (1, 0) => z2 * (2 * x2 - 1),
                _ => x2 * (1 - 2 * z2),
            };
        }
        debug_assert_eq!(phase.rem_euclid(4) % 2, 0);
        phase.rem_euclid(4) == 2
    }

    /// Multiply row `i` into row `h` (h ← h · i).
    fn rowsum(&mut self, h: usize, i: usize) {
        let sign = self.rowsum_signs(h, i);
        self.signs.set(h, sign);
        let (xi, zi) = (self.x[i].clone(), self.z[i].clone());
        self.x[h].xor_assign(&xi);
        self.z[h].xor_assign(&zi);
    }

    /// Measure qubit `q` in the Z basis. A nondeterministic outcome takes the
    /// value of `forced` (default `false`) and updates the state accordingly.
    pub fn measure_z(&mut self, q: usize, forced: Option<bool>) -> MeasureResult {
        let n = self.n;
        let pivot = (n..2 * n).find(|&row| self.x[row].get(q));
        match pivot {
            Some(p) => {
                let value = forced.unwrap_or(false);
                // Skip the pivot's partner destabilizer: it anticommutes with
                // the pivot (odd phase under rowsum) and is overwritten below.
                for row in 0..2 * n {
                    if row != p && row != p - n && self.x[row].get(q) {
                        self.rowsum(row, p);
                    }
                }
                self.x[p - n] = self.x[p].clone();
                self.z[p - n] = self.z[p].clone();
                self.signs.set(p - n, self.signs.get(p));
                self.x[p] = BitVector::zeros(n);
                self.z[p] = BitVector::zeros(n);
                self.z[p].set(q, true);
                self.signs.set(p, value);
                MeasureResult {
                    value,
                    random: true,
                }
            }
            None => {
                // Deterministic: accumulate the sign of Z_q as a product of
                // stabilizer rows indicated by the destabilizers.
                let scratch = 2 * n; // virtual scratch row handled inline
                let _ = scratch;
                let mut acc_x = BitVector::zeros(n);
                let mut acc_z = BitVector::zeros(n);
                let mut acc_sign = 0i32;
                for i in 0..n {
                    if self.x[i].get(q) {
                        // phase of acc · stab_i
                        let mut phase = 2 * (self.signs.get(n + i) as i32);
                        for k in 0..n {
                            let x1 = self.x[n + i].get(k) as i32;
                            let z1 = self.z[n + i].get(k) as i32;
                            let x2 = acc_x.get(k) as i32;
                            let z2 = acc_z.get(k) as i32;
                            phase += match (x1, z1) {
                                (0, 0) => 0,
                                (1, 1) => z2 - x2,
                                (1, 0) => z2 * (2 * x2 - 1),
                                _ => x2 * (1 - 2 * z2),
                            };
                        }
                        acc_sign = (acc_sign + phase).rem_euclid(4);
                        let xi = self.x[n + i].clone();
                        let zi = self.z[n + i].clone();
                        acc_x.xor_assign(&xi);
                        acc_z.xor_assign(&zi);
                    }
                }
                debug_assert!(acc_sign % 2 == 0);
                MeasureResult {
                    value: acc_sign == 2,
                    random: false,
                }
            }
        }
    }

    /// Measure qubit `q` in the X basis.
    pub fn measure_x(&mut self, q: usize, forced: Option<bool>) -> MeasureResult {
        self.h(q);
        let m = self.measure_z(q, forced);
        self.h(q);
        m
    }

    /// Reset qubit `q` to |0⟩.
    pub fn reset_z(&mut self, q: usize) {
        let m = self.measure_z(q, Some(false));
        if m.value {
            self.apply_x(q);
        }
    }

    /// Reset qubit `q` to |+⟩.
    pub fn reset_x(&mut self, q: usize) {
        let m = self.measure_x(q, Some(false));
        if m.value {
            self.apply_z(q);
        }
    }
}

/// Noiseless reference execution of a circuit.
#[derive(Clone, Debug)]
pub struct ReferenceRun {
    /// Reference value of every measurement record.
    pub records: Vec<bool>,
    /// True for records whose outcome was nondeterministic (forced to 0).
    pub random_mask: BitVector,
}

/// Execute `circuit` on the tableau simulator with all noise channels skipped
/// and every nondeterministic measurement forced to 0.
pub fn reference_run(circuit: &PhysicalCircuit) -> ReferenceRun {
    let mut t = Tableau::new(circuit.num_qubits.max(1));
    let mut records = Vec::with_capacity(circuit.num_measurements);
    let mut random_mask = BitVector::zeros(circuit.num_measurements);
    for instr in &circuit.instructions {
        match instr {
            Instruction::Reset { qubits } => {
                for &q in qubits {
                    t.reset_z(q);
                }
            }
            Instruction::ResetX { qubits } => {
                for &q in qubits {
                    t.reset_x(q);
                }
            }
            Instruction::Gate1 { kind, qubits } => {
                for &q in qubits {
                    match kind {
                        Gate1::H => t.h(q),
                        Gate1::S => t.s(q),
                        Gate1::SDag => t.s_dag(q),
                    }
                }
            }
            Instruction::Gate2 { kind, pairs } => {
                for &(a, b) in pairs {
                    match kind {
                        Gate2::Cx => t.cx(a, b),
                        Gate2::Cz => t.cz(a, b),
                        Gate2::Swap => t.swap(a, b),
                    }
                }
            }
            Instruction::Classical { pauli, rec, qubits } => {
                if records[*rec] {
                    for &q in qubits {
                        match pauli {
                            CtrlPauli::X => t.apply_x(q),
                            CtrlPauli::Z => t.apply_z(q),
                        }
                    }
                }
            }
            Instruction::Measure { qubits } => {
                for &q in qubits {
                    let m = t.measure_z(q, Some(false));
                    if m.random {
                        random_mask.set(records.len(), true);
                    }
                    records.push(m.value);
                }
            }
            Instruction::MeasureX { qubits } => {
                for &q in qubits {
                    let m = t.measure_x(q, Some(false));
                    if m.random {
                        random_mask.set(records.len(), true);
                    }
                    records.push(m.value);
                }
            }
            _ => {}
        }
    }
    ReferenceRun {
        records,
        random_mask,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::parse_circuit_text;

    #[test]
    fn fresh_qubit_measures_zero() {
        let mut t = Tableau::new(1);
        let m = t.measure_z(0, None);
        assert!(!m.value);
        assert!(!m.random);
    }

    #[test]
    fn plus_state_is_random_then_pinned() {
        let mut t = Tableau::new(1);
        t.h(0);
        let m1 = t.measure_z(0, Some(true));
        assert!(m1.random);
        assert!(m1.value);
        let m2 = t.measure_z(0, None);
        assert!(!m2.random);
        assert!(m2.value);
    }

    #[test]
    fn bell_pair_correlates() {
        let mut t = Tableau::new(2);
        t.h(0);
        t.cx(0, 1);
        let m0 = t.measure_z(0, Some(true));
        assert!(m0.random);
        let m1 = t.measure_z(1, None);
        assert!(!m1.random);
        assert_eq!(m0.value, m1.value);
    }

    #[test]
    fn s_squared_is_z() {
        // |+⟩ → S² = Z → |−⟩, detected in the X basis.
        let mut t = Tableau::new(1);
        t.reset_x(0);
        t.s(0);
        t.s(0);
        let m = t.measure_x(0, None);
        assert!(!m.random);
        assert!(m.value);
    }

    #[test]
    fn s_then_sdag_is_identity() {
        let mut t = Tableau::new(1);
        t.reset_x(0);
        t.s(0);
        t.s_dag(0);
        let m = t.measure_x(0, None);
        assert!(!m.random);
        assert!(!m.value);
    }

    #[test]
    fn cz_phase_flip() {
        // CZ on |+,1⟩ flips the first qubit to |−⟩.
        let mut t = Tableau::new(2);
        t.reset_x(0);
        t.apply_x(1);
        assert!(t.measure_z(1, None).value);
        t.cz(0, 1);
        let m = t.measure_x(0, None);
        assert!(!m.random);
        assert!(m.value);
    }

    #[test]
    fn reference_run_ghz_chain() {
        let text = "RX 0\nR 1 2\nCX 0 1 1 2\nM 0 1 2\n";
        let c = parse_circuit_text(text).unwrap();
        let r = reference_run(&c);
        // First measurement is nondeterministic (forced 0); the rest follow.
        assert!(r.random_mask.get(0));
        assert_eq!(r.records, vec![false, false, false]);
        assert!(!r.random_mask.get(1));
        assert!(!r.random_mask.get(2));
    }

    #[test]
    fn reference_run_feedforward() {
        // Measure |+⟩ forced to 0, then classically apply X to qubit 1 iff set.
        let text = "RX 0\nR 1\nM 0\nCX rec[-1] 1\nM 1\n";
        let c = parse_circuit_text(text).unwrap();
        let r = reference_run(&c);
        assert_eq!(r.records, vec![false, false]);
    }

    #[test]
    fn swap_moves_state() {
        let mut t = Tableau::new(2);
        t.h(0);
        t.s(0); // qubit 0 in |+i⟩
        t.swap(0, 1);
        // qubit 1 now holds |+i⟩: S†, H maps it back to |0⟩
        t.s_dag(1);
        t.h(1);
        let m = t.measure_z(1, None);
        assert!(!m.random);
        assert!(!m.value);
    }
}

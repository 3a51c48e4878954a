//! Binary-symplectic Pauli strings and their flow through Clifford gates.
//!
//! A [`PauliString`] stores only the X/Z flip pattern — phases (±1, ±i) are
//! deliberately not tracked. Frame sampling and detector/observable flip
//! prediction depend only on the symplectic part; signs cancel in every
//! parity this toolkit computes. (The compiler's detector engine tracks signs
//! separately where it must.)

use crate::gf2::BitVector;

/// Phase-free n-qubit Pauli operator as an (x, z) bit pair per qubit.
///
/// The identity has both parts zero; `Y` on qubit `q` sets both bits at `q`.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct PauliString {
    x: BitVector,
    z: BitVector,
}

/// Single-qubit Pauli label used when building strings site by site.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Pauli {
    X,
    Y,
    Z,
}

impl PauliString {
    pub fn identity(num_qubits: usize) -> Self {
        Self {
            x: BitVector::zeros(num_qubits),
            z: BitVector::zeros(num_qubits),
        }
    }

    /// Single-site Pauli `p` on qubit `q`.
    pub fn single(num_qubits: usize, q: usize, p: Pauli) -> Self {
        let mut s = Self::identity(num_qubits);
        s.apply(q, p);
        s
    }

    /// Multiply the single-site Pauli `p` at qubit `q` into this string
    /// (phase-free, i.e. XOR the bit pattern).
    pub fn apply(&mut self, q: usize, p: Pauli) {
        match p {
            Pauli::X => self.x.toggle(q),
            Pauli::Z => self.z.toggle(q),
            Pauli::Y => {
                self.x.toggle(q);
                self.z.toggle(q);
            }
        }
    }

    pub fn num_qubits(&self) -> usize {
        self.x.len()
    }

    /// Identity-extend to `n` qubits. Never shrinks.
    pub fn grow(&mut self, n: usize) {
        self.x.grow(n);
        self.z.grow(n);
    }

    pub fn x_part(&self) -> &BitVector {
        &self.x
    }

    pub fn z_part(&self) -> &BitVector {
        &self.z
    }

    pub fn x_bit(&self, q: usize) -> bool {
        self.x.get(q)
    }

    pub fn z_bit(&self, q: usize) -> bool {
        self.z.get(q)
    }

    pub fn is_identity(&self) -> bool {
        self.x.is_zero() && self.z.is_zero()
    }

    /// Build from an (x, z) pair of bit vectors of equal length.
    pub fn from_parts(x: BitVector, z: BitVector) -> Self {
        assert_eq!(x.len(), z.len(), "x/z parts of unequal length");
        Self { x, z }
    }

    /// Phase-free product: componentwise XOR of the symplectic vectors.
    pub fn multiply(&self, other: &PauliString) -> PauliString {
        assert_eq!(
            self.num_qubits(),
            other.num_qubits(),
            "pauli product size mismatch"
        );
        let mut out = self.clone();
        out.x.xor_assign(&other.x);
        out.z.xor_assign(&other.z);
        out
    }

    /// `true` iff the two strings share any support qubit.
    pub fn overlaps(&self, other: &PauliString) -> bool {
        for (((&x1, &z1), &x2), &z2) in self
            .x
            .words()
            .iter()
            .zip(self.z.words())
            .zip(other.x.words())
            .zip(other.z.words())
        {
            if (x1 | z1) & (x2 | z2) != 0 {
                return true;
            }
        }
        false
    }

    /// `true` iff the symplectic form ⟨P,Q⟩ = Σᵢ (PxᵢQzᵢ ⊕ PzᵢQxᵢ) vanishes.
    pub fn commutes(&self, other: &PauliString) -> bool {
        assert_eq!(
            self.num_qubits(),
            other.num_qubits(),
            "commutator size mismatch"
        );
        !(self.x.dot(&other.z) ^ self.z.dot(&other.x))
    }

    /// Number of qubits with a non-identity component.
    pub fn weight(&self) -> usize {
        let mut n = 0;
        for w in 0..self.num_qubits() {
            if self.x.get(w) || self.z.get(w) {
                n += 1;
            }
        }
        n
    }

    /// Qubits with a non-identity component, ascending.
    pub fn support(&self) -> Vec<usize> {
        (0..self.num_qubits())
            .filter(|&q| self.x.get(q) || self.z.get(q))
            .collect()
    }

    /// Product of two signed Hermitian Paulis. Returns the symplectic XOR and
    /// the sign of the result; panics if the operands anticommute (the
    /// product would be anti-Hermitian).
    pub fn hermitian_product(
        &self,
        self_sign: bool,
        other: &PauliString,
        other_sign: bool,
    ) -> (PauliString, bool) {
        assert_eq!(
            self.num_qubits(),
            other.num_qubits(),
            "pauli product size mismatch"
        );
        // Accumulate the i-exponent of the per-qubit products, as in the
        // Aaronson–Gottesman rowsum, one word at a time.
        let mut phase: i64 = 0;
        for (((&x1, &z1), &x2), &z2) in self
            .x
            .words()
            .iter()
            .zip(self.z.words())
            .zip(other.x.words())
            .zip(other.z.words())
        {
            // +i sites: X·Y, Y·Z, Z·X;  −i sites: X·Z, Y·X, Z·Y.
            let plus = (x1 & !z1 & x2 & z2) | (x1 & z1 & !x2 & z2) | (!x1 & z1 & x2 & !z2);
            let minus = (x1 & !z1 & !x2 & z2) | (x1 & z1 & x2 & !z2) | (!x1 & z1 & x2 & z2);
            phase += plus.count_ones() as i64 - minus.count_ones() as i64;
        }
        let total = (2 * (self_sign as i64 + other_sign as i64) + phase).rem_euclid(4);
        assert!(
            total % 2 == 0,
            "anticommuting operands give an anti-Hermitian product"
        );
        (self.multiply(other), total == 2)
    }

    /// Heisenberg update through one Clifford step, phase dropped.
    pub fn conjugate_through(&self, step: &CliffordStep) -> PauliString {
        let mut out = self.clone();
        out.conjugate_through_in_place(step);
        out
    }

    /// Heisenberg update that also reports whether the sign of a Hermitian
    /// operator flips under the conjugation.
    pub fn conjugate_signed(&mut self, step: &CliffordStep) -> bool {
        let flip = match *step {
            CliffordStep::H(q) | CliffordStep::S(q) => self.x.get(q) && self.z.get(q),
            CliffordStep::SDag(q) => self.x.get(q) && !self.z.get(q),
            CliffordStep::Cx(c, t) => {
                self.x.get(c) && self.z.get(t) && (self.x.get(t) == self.z.get(c))
            }
            CliffordStep::Cz(a, b) => {
                self.x.get(a) && self.x.get(b) && (self.z.get(a) != self.z.get(b))
            }
            CliffordStep::Swap(_, _) => false,
        };
        self.conjugate_through_in_place(step);
        flip
    }

    /// In-place variant of [`Self::conjugate_through`].
    pub fn conjugate_through_in_place(&mut self, step: &CliffordStep) {
        match *step {
            CliffordStep::H(q) => {
                let xq = self.x.get(q);
                let zq = self.z.get(q);
                self.x.set(q, zq);
                self.z.set(q, xq);
            }
            // S and S† agree on the symplectic part: X → Y, Z → Z.
            CliffordStep::S(q) | CliffordStep::SDag(q) => {
                if self.x.get(q) {
                    self.z.toggle(q);
                }
            }
            CliffordStep::Cx(c, t) => {
                if self.x.get(c) {
                    self.x.toggle(t);
                }
                if self.z.get(t) {
                    self.z.toggle(c);
                }
            }
            CliffordStep::Cz(a, b) => {
                if self.x.get(a) {
                    self.z.toggle(b);
                }
                if self.x.get(b) {
                    self.z.toggle(a);
                }
            }
            CliffordStep::Swap(a, b) => {
                let (xa, xb) = (self.x.get(a), self.x.get(b));
                self.x.set(a, xb);
                self.x.set(b, xa);
                let (za, zb) = (self.z.get(a), self.z.get(b));
                self.z.set(a, zb);
                self.z.set(b, za);
            }
        }
    }
}

/// One Clifford gate application with its targets.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum CliffordStep {
    H(usize),
    S(usize),
    SDag(usize),
    /// Control, target.
    Cx(usize, usize),
    Cz(usize, usize),
    Swap(usize, usize),
}

impl CliffordStep {
    pub fn targets(&self) -> Vec<usize> {
        match *self {
            CliffordStep::H(q) | CliffordStep::S(q) | CliffordStep::SDag(q) => vec![q],
            CliffordStep::Cx(a, b) | CliffordStep::Cz(a, b) | CliffordStep::Swap(a, b) => {
                vec![a, b]
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xp(n: usize, q: usize) -> PauliString {
        PauliString::single(n, q, Pauli::X)
    }

    fn zp(n: usize, q: usize) -> PauliString {
        PauliString::single(n, q, Pauli::Z)
    }

    #[test]
    fn products_are_xor() {
        let n = 2;
        assert!(xp(n, 0).multiply(&xp(n, 0)).is_identity());
        let y0 = xp(n, 0).multiply(&zp(n, 0));
        assert!(y0.x_bit(0) && y0.z_bit(0));
        assert_eq!(y0.weight(), 1);
    }

    #[test]
    fn commutation_basics() {
        let n = 2;
        assert!(!xp(n, 0).commutes(&zp(n, 0)));
        let x0x1 = xp(n, 0).multiply(&xp(n, 1));
        assert!(xp(n, 0).commutes(&x0x1));
    }

    #[test]
    fn hermitian_products_track_signs() {
        let n = 1;
        let y = xp(n, 0).multiply(&zp(n, 0));
        let (p, s) = y.hermitian_product(false, &y, false);
        assert!(p.is_identity());
        assert!(!s, "Y·Y = +I");
        let n = 2;
        let xx = xp(n, 0).multiply(&xp(n, 1));
        let zz = zp(n, 0).multiply(&zp(n, 1));
        // (X·Z)⊗(X·Z) = (−iY)⊗(−iY) = −Y⊗Y, same in either order since
        // XX and ZZ commute.
        let (yy, s) = xx.hermitian_product(false, &zz, false);
        assert_eq!(yy.weight(), 2);
        assert!(s, "XX·ZZ = −YY");
        let (_, s2) = zz.hermitian_product(false, &xx, false);
        assert!(s2, "ZZ·XX = −YY");
        // Signs of the operands feed through.
        let (_, s3) = xx.hermitian_product(true, &zz, false);
        assert!(!s3);
    }

    #[test]
    fn signed_conjugation_matches_known_flips() {
        let n = 2;
        let mut y0 = xp(n, 0).multiply(&zp(n, 0));
        assert!(y0.conjugate_signed(&CliffordStep::H(0)), "H: Y → −Y");
        let mut y0b = xp(n, 0).multiply(&zp(n, 0));
        assert!(y0b.conjugate_signed(&CliffordStep::S(0)), "S: Y → −X");
        assert_eq!(y0b, xp(n, 0));
        let mut x0 = xp(n, 0);
        assert!(x0.conjugate_signed(&CliffordStep::SDag(0)), "S†: X → −Y");
        // CX on X⊗Y: x_c=1, z_t=1, x_t=1, z_c=0 → no flip.
        let mut xy = xp(n, 0).multiply(&xp(n, 1)).multiply(&zp(n, 1));
        assert!(!xy.conjugate_signed(&CliffordStep::Cx(0, 1)));
        // CZ on Y⊗X flips: CZ (Y⊗X) CZ = −X⊗Y.
        let mut yx = xp(n, 0).multiply(&zp(n, 0)).multiply(&xp(n, 1));
        assert!(yx.conjugate_signed(&CliffordStep::Cz(0, 1)));
        assert_eq!(yx, xp(n, 0).multiply(&xp(n, 1)).multiply(&zp(n, 1)));
    }

    #[test]
    fn stabilizer_flow_cases() {
        let n = 2;
        let cx = CliffordStep::Cx(0, 1);
        assert_eq!(
            xp(n, 0).conjugate_through(&cx),
            xp(n, 0).multiply(&xp(n, 1))
        );
        assert_eq!(
            zp(n, 1).conjugate_through(&cx),
            zp(n, 0).multiply(&zp(n, 1))
        );
        assert_eq!(xp(n, 0).conjugate_through(&CliffordStep::H(0)), zp(n, 0));
        let y0 = xp(n, 0).multiply(&zp(n, 0));
        assert_eq!(xp(n, 0).conjugate_through(&CliffordStep::S(0)), y0);
    }
}

//! Dense bit-packed linear algebra over GF(2).
//!
//! Backs frame-system construction and the consistency solve: vectors are
//! packed into 64-bit words, matrices are row-major lists of [`BitVector`]s.
//! Equality is semantic (bit-by-bit); word width and packing order are
//! internal. All operations are pure value transformations.

const WORD_BITS: usize = 64;

/// Fixed-length bit vector packed into 64-bit words.
///
/// Bits at indices ≥ `len` are kept zero so that word-wise operations and
/// equality never see garbage in the tail.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct BitVector {
    len: usize,
    words: Vec<u64>,
}

impl BitVector {
    /// All-zero vector of the given length.
    pub fn zeros(len: usize) -> Self {
        Self {
            len,
            words: vec![0; len.div_ceil(WORD_BITS)],
        }
    }

    /// Build from a bool slice.
    pub fn from_bools(bits: &[bool]) -> Self {
        let mut v = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b {
                v.set(i, true);
            }
        }
        v
    }

    /// Vector with ones exactly at `indices` (indices may repeat; repeats XOR).
    pub fn from_indices(len: usize, indices: &[usize]) -> Self {
        let mut v = Self::zeros(len);
        for &i in indices {
            v.toggle(i);
        }
        v
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Zero every bit, keeping the length.
    pub fn clear(&mut self) {
        self.words.fill(0);
    }

    /// Zero-extend to `new_len` bits. Never shrinks.
    pub fn grow(&mut self, new_len: usize) {
        assert!(new_len >= self.len, "grow cannot shrink a bit vector");
        self.len = new_len;
        self.words.resize(new_len.div_ceil(WORD_BITS), 0);
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len, "bit index {i} out of range {}", self.len);
        (self.words[i / WORD_BITS] >> (i % WORD_BITS)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        debug_assert!(i < self.len, "bit index {i} out of range {}", self.len);
        let w = &mut self.words[i / WORD_BITS];
        let mask = 1u64 << (i % WORD_BITS);
        if value {
            *w |= mask;
        } else {
            *w &= !mask;
        }
    }

    #[inline]
    pub fn toggle(&mut self, i: usize) {
        debug_assert!(i < self.len, "bit index {i} out of range {}", self.len);
        self.words[i / WORD_BITS] ^= 1u64 << (i % WORD_BITS);
    }

    /// XOR `other` into `self`. Lengths must match.
    pub fn xor_assign(&mut self, other: &BitVector) {
        assert_eq!(self.len, other.len, "xor of unequal-length bit vectors");
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= b;
        }
    }

    /// Number of set bits.
    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Backing 64-bit words, least-significant bit first. Bits past `len`
    /// are zero.
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Parity of the AND with `other` — the GF(2) inner product.
    pub fn dot(&self, other: &BitVector) -> bool {
        assert_eq!(self.len, other.len, "dot of unequal-length bit vectors");
        self.words
            .iter()
            .zip(&other.words)
            .fold(0u64, |acc, (a, b)| acc ^ (a & b))
            .count_ones()
            & 1
            == 1
    }

    /// Indices of set bits, ascending.
    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut rem = w;
            std::iter::from_fn(move || {
                if rem == 0 {
                    None
                } else {
                    let bit = rem.trailing_zeros() as usize;
                    rem &= rem - 1;
                    Some(wi * WORD_BITS + bit)
                }
            })
        })
    }

    /// Grow by one zero bit and return the index of the new bit.
    pub fn push(&mut self, value: bool) -> usize {
        let i = self.len;
        self.len += 1;
        if self.words.len() * WORD_BITS < self.len {
            self.words.push(0);
        }
        if value {
            self.set(i, true);
        }
        i
    }
}

impl std::fmt::Debug for BitVector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for i in 0..self.len {
            write!(f, "{}", u8::from(self.get(i)))?;
        }
        Ok(())
    }
}

/// Row-major dense GF(2) matrix.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    data: Vec<BitVector>,
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![BitVector::zeros(cols); rows],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i].set(i, true);
        }
        m
    }

    /// Build from rows; all rows must share one length.
    pub fn from_rows(rows: Vec<BitVector>) -> Self {
        let cols = rows.first().map_or(0, BitVector::len);
        assert!(
            rows.iter().all(|r| r.len() == cols),
            "rows of unequal length"
        );
        Self {
            rows: rows.len(),
            cols,
            data: rows,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &BitVector {
        &self.data[r]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut BitVector {
        &mut self.data[r]
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.data[r].get(c)
    }

    pub fn set(&mut self, r: usize, c: usize, value: bool) {
        self.data[r].set(c, value);
    }

    pub fn push_row(&mut self, row: BitVector) {
        assert_eq!(row.len(), self.cols, "pushed row has wrong length");
        self.data.push(row);
        self.rows += 1;
    }

    /// Matrix–vector product over GF(2).
    pub fn mul_vec(&self, x: &BitVector) -> BitVector {
        assert_eq!(x.len(), self.cols, "mul_vec dimension mismatch");
        let mut out = BitVector::zeros(self.rows);
        for (r, row) in self.data.iter().enumerate() {
            if row.dot(x) {
                out.set(r, true);
            }
        }
        out
    }

    pub fn transpose(&self) -> BitMatrix {
        let mut t = BitMatrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in self.data[r].iter_ones() {
                t.set(c, r, true);
            }
        }
        t
    }
}

/// Result of [`row_reduce`]: reduced row-echelon form with pivot bookkeeping.
#[derive(Clone, Debug)]
pub struct RowReduced {
    pub reduced: BitMatrix,
    /// Strictly increasing pivot column indices; `pivot_cols[i]` is the pivot
    /// of row `i`.
    pub pivot_cols: Vec<usize>,
    pub rank: usize,
}

/// Bring `m` into reduced row-echelon form. Row space is preserved.
pub fn row_reduce(m: &BitMatrix) -> RowReduced {
    let mut a = m.clone();
    let mut pivot_cols = Vec::new();
    let mut pivot_row = 0;
    for col in 0..a.cols() {
        let Some(src) = (pivot_row..a.rows()).find(|&r| a.get(r, col)) else {
            continue;
        };
        a.data.swap(pivot_row, src);
        let pivot = a.data[pivot_row].clone();
        for (r, row) in a.data.iter_mut().enumerate() {
            if r != pivot_row && row.get(col) {
                row.xor_assign(&pivot);
            }
        }
        pivot_cols.push(col);
        pivot_row += 1;
        if pivot_row == a.rows() {
            break;
        }
    }
    RowReduced {
        reduced: a,
        rank: pivot_cols.len(),
        pivot_cols,
    }
}

/// Rank of `m`.
pub fn rank(m: &BitMatrix) -> usize {
    row_reduce(m).rank
}

/// Solve `A·x = b` over GF(2). Returns `None` when `b` is outside the column
/// space. Free variables are fixed to 0, so the solution is deterministic.
pub fn solve(a: &BitMatrix, b: &BitVector) -> Option<BitVector> {
    assert_eq!(
        b.len(),
        a.rows(),
        "solve: rhs length {} != row count {}",
        b.len(),
        a.rows()
    );
    // Reduce the augmented matrix [A | b].
    let mut aug = BitMatrix::zeros(a.rows(), a.cols() + 1);
    for r in 0..a.rows() {
        for c in a.row(r).iter_ones() {
            aug.set(r, c, true);
        }
        if b.get(r) {
            aug.set(r, a.cols(), true);
        }
    }
    let rr = row_reduce(&aug);
    // Inconsistent iff some pivot landed in the augmented column.
    if rr.pivot_cols.last() == Some(&a.cols()) {
        return None;
    }
    let mut x = BitVector::zeros(a.cols());
    for (row, &col) in rr.pivot_cols.iter().enumerate() {
        if rr.reduced.get(row, a.cols()) {
            x.set(col, true);
        }
    }
    Some(x)
}

/// Basis of the kernel `{v : A·v = 0}`. The basis has `cols − rank` vectors,
/// one per free column, each with a 1 in its free column.
pub fn nullspace(a: &BitMatrix) -> Vec<BitVector> {
    let rr = row_reduce(a);
    let pivot_set: std::collections::HashSet<usize> = rr.pivot_cols.iter().copied().collect();
    let mut basis = Vec::with_capacity(a.cols() - rr.rank);
    for free in (0..a.cols()).filter(|c| !pivot_set.contains(c)) {
        let mut v = BitVector::zeros(a.cols());
        v.set(free, true);
        for (row, &pc) in rr.pivot_cols.iter().enumerate() {
            if rr.reduced.get(row, free) {
                v.set(pc, true);
            }
        }
        basis.push(v);
    }
    basis
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_reduce_identity_is_fixed_point() {
        let id = BitMatrix::identity(2);
        let rr = row_reduce(&id);
        assert_eq!(rr.reduced, id);
        assert_eq!(rr.pivot_cols, vec![0, 1]);
        assert_eq!(rr.rank, 2);
    }

    #[test]
    fn row_reduce_zero_matrix() {
        let z = BitMatrix::zeros(3, 3);
        let rr = row_reduce(&z);
        assert_eq!(rr.reduced, z);
        assert!(rr.pivot_cols.is_empty());
        assert_eq!(rr.rank, 0);
    }

    #[test]
    fn solve_identity() {
        let a = BitMatrix::identity(2);
        let b = BitVector::from_bools(&[true, false]);
        assert_eq!(solve(&a, &b), Some(b));
    }

    #[test]
    fn solve_inconsistent() {
        // Two rows, one column: x = 1 and x = 0 simultaneously.
        let a = BitMatrix::from_rows(vec![
            BitVector::from_bools(&[true]),
            BitVector::from_bools(&[true]),
        ]);
        let b = BitVector::from_bools(&[true, false]);
        assert_eq!(solve(&a, &b), None);
    }

    #[test]
    fn nullspace_small_cases() {
        assert!(nullspace(&BitMatrix::identity(3)).is_empty());
        let a = BitMatrix::from_rows(vec![BitVector::from_bools(&[true, true])]);
        let basis = nullspace(&a);
        assert_eq!(basis.len(), 1);
        assert_eq!(basis[0], BitVector::from_bools(&[true, true]));
    }

    #[test]
    fn iter_ones_matches_get() {
        let v = BitVector::from_indices(130, &[0, 63, 64, 65, 129]);
        let ones: Vec<usize> = v.iter_ones().collect();
        assert_eq!(ones, vec![0, 63, 64, 65, 129]);
    }
}

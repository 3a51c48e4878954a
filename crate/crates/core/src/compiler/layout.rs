//! Code-patch geometry.
//!
//! Rotated surface-code patches live on a `width × height` grid of data
//! qubits (y grows upward). Plaquettes sit at half-integer positions indexed
//! by `(px, py) ∈ 0..=width × 0..=height`; a plaquette covers the up-to-four
//! data qubits at its corners, is Z-type iff `px+py` is even, and exists when
//! it is interior, or on the top/bottom boundary for Z-type, or on the
//! left/right boundary for X-type. Logical Z̄ runs up the rightmost column,
//! logical X̄ along the top row; they meet in the top-right corner.
//!
//! The repetition code is the degenerate one-row case with ZZ checks only.

use crate::pauli::PauliString;
use thiserror::Error;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum CodeFamily {
    RotatedSurface,
    Repetition,
}

/// One stabilizer measurement slot. `support` lists the covered data-qubit
/// positions in the fixed corner order NE, NW, SE, SW (`None` = off-patch),
/// which the syndrome-extraction schedule indexes into.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct StabSlot {
    pub coords: (usize, usize),
    pub support: [Option<usize>; 4],
}

impl StabSlot {
    /// Covered positions, skipping missing corners.
    pub fn positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.support.iter().filter_map(|&p| p)
    }

    pub fn weight(&self) -> usize {
        self.positions().count()
    }
}

/// Data-qubit geometry plus stabilizer slots and logical representatives for
/// one patch. Positions are grid indices `y * width + x`.
#[derive(Clone, PartialEq, Debug)]
pub struct PatchLayout {
    pub family: CodeFamily,
    pub d: usize,
    pub width: usize,
    pub height: usize,
    pub z_stabilizers: Vec<StabSlot>,
    pub x_stabilizers: Vec<StabSlot>,
    /// Positions of the Z̄ representative (rightmost column).
    pub logical_z: Vec<usize>,
    /// Positions of the X̄ representative (top row).
    pub logical_x: Vec<usize>,
    /// Involution on positions across the main diagonal (square rotated
    /// patches only).
    pub fold_map: Option<Vec<usize>>,
}

#[derive(Error, Debug)]
pub enum LayoutError {
    #[error("rotated surface patches need odd d, got {0}")]
    BadRotatedDistance(usize),
    #[error("repetition code needs d ≥ 2, got {0}")]
    BadRepetitionDistance(usize),
    #[error("rotated grid dimensions must be odd, got {0}×{1}")]
    BadGrid(usize, usize),
}

/// Build the standard square patch for a family.
pub fn build_patch(family: CodeFamily, d: usize) -> Result<PatchLayout, LayoutError> {
    match family {
        CodeFamily::RotatedSurface => {
            // d = 1 degenerates to a bare qubit with no stabilizers, which
            // the compiler supports for idealized pipelines.
            if d < 1 || d % 2 == 0 {
                return Err(LayoutError::BadRotatedDistance(d));
            }
            Ok(rotated_grid(d, d))
        }
        CodeFamily::Repetition => {
            if d < 2 {
                return Err(LayoutError::BadRepetitionDistance(d));
            }
            Ok(repetition_line(d))
        }
    }
}

/// Rotated-family layout on an arbitrary odd `width × height` grid. The
/// square case is the standard distance-`width` patch; taller grids are used
/// for merged lattice-surgery patches.
pub fn rotated_rect(width: usize, height: usize) -> Result<PatchLayout, LayoutError> {
    if width % 2 == 0 || height % 2 == 0 || width < 3 || height < 3 {
        return Err(LayoutError::BadGrid(width, height));
    }
    Ok(rotated_grid(width, height))
}

fn rotated_grid(width: usize, height: usize) -> PatchLayout {
    let pos = |x: usize, y: usize| y * width + x;
    let mut z_stabilizers = Vec::new();
    let mut x_stabilizers = Vec::new();
    for py in 0..=height {
        for px in 0..=width {
            let z_type = (px + py) % 2 == 0;
            let interior_x = px > 0 && px < width;
            let interior_y = py > 0 && py < height;
            let exists = if interior_x && interior_y {
                true
            } else if !interior_x && !interior_y {
                false
            } else if interior_x {
                // top/bottom boundary rows host Z-type only
                z_type
            } else {
                !z_type
            };
            if !exists {
                continue;
            }
            let corner = |cx: isize, cy: isize| -> Option<usize> {
                if cx >= 0 && cy >= 0 && (cx as usize) < width && (cy as usize) < height {
                    Some(pos(cx as usize, cy as usize))
                } else {
                    None
                }
            };
            let (ix, iy) = (px as isize, py as isize);
            let slot = StabSlot {
                coords: (px, py),
                // NE, NW, SE, SW
                support: [
                    corner(ix, iy),
                    corner(ix - 1, iy),
                    corner(ix, iy - 1),
                    corner(ix - 1, iy - 1),
                ],
            };
            if z_type {
                z_stabilizers.push(slot);
            } else {
                x_stabilizers.push(slot);
            }
        }
    }
    let logical_z = (0..height).map(|y| pos(width - 1, y)).collect();
    let logical_x = (0..width).map(|x| pos(x, height - 1)).collect();
    let fold_map = (width == height)
        .then(|| (0..width * height).map(|p| pos(p / width, p % width)).collect());
    PatchLayout {
        family: CodeFamily::RotatedSurface,
        d: width.min(height),
        width,
        height,
        z_stabilizers,
        x_stabilizers,
        logical_z,
        logical_x,
        fold_map,
    }
}

fn repetition_line(d: usize) -> PatchLayout {
    let z_stabilizers = (0..d - 1)
        .map(|i| StabSlot {
            coords: (i + 1, 0),
            support: [Some(i), Some(i + 1), None, None],
        })
        .collect();
    PatchLayout {
        family: CodeFamily::Repetition,
        d,
        width: d,
        height: 1,
        z_stabilizers,
        x_stabilizers: Vec::new(),
        logical_z: vec![0],
        logical_x: (0..d).collect(),
        fold_map: None,
    }
}

impl PatchLayout {
    pub fn num_data(&self) -> usize {
        self.width * self.height
    }

    pub fn position(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    pub fn coords(&self, pos: usize) -> (usize, usize) {
        (pos % self.width, pos / self.width)
    }

    /// Quarter-turn position map used by the transversal-H relabeling:
    /// the qubit at `(x, y)` moves to `(y, d−1−x)`. Square patches only.
    pub fn rotate_position(&self, pos: usize) -> usize {
        debug_assert_eq!(self.width, self.height);
        let (x, y) = self.coords(pos);
        self.position(y, self.width - 1 - x)
    }

    /// Z̄ representative as a Pauli string over patch positions.
    #[must_use]
    pub fn logical_z_pauli(&self) -> PauliString {
        PauliString::from_parts(
            crate::gf2::BitVector::zeros(self.num_data()),
            crate::gf2::BitVector::from_indices(self.num_data(), &self.logical_z),
        )
    }

    /// X̄ representative as a Pauli string over patch positions.
    #[must_use]
    pub fn logical_x_pauli(&self) -> PauliString {
        PauliString::from_parts(
            crate::gf2::BitVector::from_indices(self.num_data(), &self.logical_x),
            crate::gf2::BitVector::zeros(self.num_data()),
        )
    }

    fn stab_pauli(&self, slot: &StabSlot, z_type: bool) -> PauliString {
        let idx: Vec<usize> = slot.positions().collect();
        let bits = crate::gf2::BitVector::from_indices(self.num_data(), &idx);
        let zeros = crate::gf2::BitVector::zeros(self.num_data());
        if z_type {
            PauliString::from_parts(zeros, bits)
        } else {
            PauliString::from_parts(bits, zeros)
        }
    }

    /// All stabilizers as Pauli strings (Z-type first).
    pub fn stabilizer_paulis(&self) -> Vec<PauliString> {
        self.z_stabilizers
            .iter()
            .map(|s| self.stab_pauli(s, true))
            .chain(self.x_stabilizers.iter().map(|s| self.stab_pauli(s, false)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn rotated_d3_exact_structure() {
        let p = build_patch(CodeFamily::RotatedSurface, 3).unwrap();
        assert_eq!(p.num_data(), 9);
        assert_eq!(p.z_stabilizers.len(), 4);
        assert_eq!(p.x_stabilizers.len(), 4);
        let z_coords: BTreeSet<_> = p.z_stabilizers.iter().map(|s| s.coords).collect();
        assert_eq!(
            z_coords,
            BTreeSet::from([(1, 1), (2, 2), (1, 3), (2, 0)])
        );
        let x_coords: BTreeSet<_> = p.x_stabilizers.iter().map(|s| s.coords).collect();
        assert_eq!(
            x_coords,
            BTreeSet::from([(1, 2), (2, 1), (0, 1), (3, 2)])
        );
        let support_of = |coords: (usize, usize)| -> BTreeSet<usize> {
            p.z_stabilizers
                .iter()
                .chain(&p.x_stabilizers)
                .find(|s| s.coords == coords)
                .unwrap()
                .positions()
                .collect()
        };
        assert_eq!(support_of((1, 1)), BTreeSet::from([0, 1, 3, 4]));
        assert_eq!(support_of((2, 2)), BTreeSet::from([4, 5, 7, 8]));
        assert_eq!(support_of((1, 3)), BTreeSet::from([6, 7]));
        assert_eq!(support_of((2, 0)), BTreeSet::from([1, 2]));
        assert_eq!(p.logical_x, vec![6, 7, 8]);
        assert_eq!(p.logical_z, vec![2, 5, 8]);
    }

    #[test]
    fn stabilizers_commute_and_logicals_anticommute() {
        for d in [3, 5] {
            let p = build_patch(CodeFamily::RotatedSurface, d).unwrap();
            assert_eq!(p.z_stabilizers.len(), (d * d - 1) / 2);
            assert_eq!(p.x_stabilizers.len(), (d * d - 1) / 2);
            let stabs = p.stabilizer_paulis();
            for (i, a) in stabs.iter().enumerate() {
                for b in &stabs[i + 1..] {
                    assert!(a.commutes(b));
                }
            }
            let lz = p.logical_z_pauli();
            let lx = p.logical_x_pauli();
            assert!(!lz.commutes(&lx));
            for s in &stabs {
                assert!(lz.commutes(s), "Z̄ fails at d={d}");
                assert!(lx.commutes(s), "X̄ fails at d={d}");
            }
        }
    }

    #[test]
    fn stabilizer_weights_are_two_or_four() {
        let p = build_patch(CodeFamily::RotatedSurface, 5).unwrap();
        for s in p.z_stabilizers.iter().chain(&p.x_stabilizers) {
            assert!(matches!(s.weight(), 2 | 4), "slot {:?}", s.coords);
        }
    }

    #[test]
    fn fold_map_is_involution() {
        let p = build_patch(CodeFamily::RotatedSurface, 5).unwrap();
        let fold = p.fold_map.as_ref().unwrap();
        for pos in 0..p.num_data() {
            assert_eq!(fold[fold[pos]], pos);
        }
        // diagonal fixed points
        for k in 0..5 {
            assert_eq!(fold[p.position(k, k)], p.position(k, k));
        }
    }

    #[test]
    fn rotation_is_layout_antiautomorphism() {
        // Rotating every Z-stabilizer support yields an X-stabilizer support
        // and vice versa; logicals map onto each other's class.
        let p = build_patch(CodeFamily::RotatedSurface, 5).unwrap();
        let x_supports: BTreeSet<BTreeSet<usize>> = p
            .x_stabilizers
            .iter()
            .map(|s| s.positions().collect())
            .collect();
        for s in &p.z_stabilizers {
            let rotated: BTreeSet<usize> =
                s.positions().map(|q| p.rotate_position(q)).collect();
            assert!(
                x_supports.contains(&rotated),
                "rotated Z slot {:?} is not an X support",
                s.coords
            );
        }
        let rotated_x: BTreeSet<usize> =
            p.logical_x.iter().map(|&q| p.rotate_position(q)).collect();
        assert_eq!(rotated_x, p.logical_z.iter().copied().collect());
    }

    #[test]
    fn repetition_structure() {
        let p = build_patch(CodeFamily::Repetition, 3).unwrap();
        assert_eq!(p.num_data(), 3);
        assert_eq!(p.z_stabilizers.len(), 2);
        assert!(p.x_stabilizers.is_empty());
        let s0: Vec<usize> = p.z_stabilizers[0].positions().collect();
        assert_eq!(s0, vec![0, 1]);
    }

    #[test]
    fn tall_grid_restricts_to_stacked_blocks() {
        // A d=3 block placed with vertical offset 4 inside the 3×11 merged
        // grid sees the same plaquette types at shifted coordinates.
        let d = 3;
        let tall = rotated_rect(d, 3 * d + 2).unwrap();
        let block = build_patch(CodeFamily::RotatedSurface, d).unwrap();
        let offset = d + 1;
        for s in &block.z_stabilizers {
            let (px, py) = s.coords;
            if py == 0 || py == d {
                continue; // block boundary rows become interior in the stack
            }
            let shifted = (px, py + offset);
            assert!(
                tall.z_stabilizers.iter().any(|t| t.coords == shifted),
                "missing tall Z slot {shifted:?}"
            );
        }
    }

    #[test]
    fn rejects_bad_distances() {
        assert!(build_patch(CodeFamily::RotatedSurface, 4).is_err());
        assert!(build_patch(CodeFamily::RotatedSurface, 0).is_err());
        assert!(build_patch(CodeFamily::Repetition, 1).is_err());
        assert!(rotated_rect(4, 5).is_err());
    }

    #[test]
    fn distance_one_is_a_bare_qubit() {
        let p = build_patch(CodeFamily::RotatedSurface, 1).unwrap();
        assert_eq!(p.num_data(), 1);
        assert!(p.z_stabilizers.is_empty() && p.x_stabilizers.is_empty());
        assert_eq!(p.logical_z, vec![0]);
        assert_eq!(p.logical_x, vec![0]);
        assert_eq!(p.fold_map, Some(vec![0]));
    }
}

//! Weyl permutations, the drift-to-cell rule, the refinement of the unipotent
//! group into free and fixed factors, and the cell action.
//!
//! A drift profile selects, at each place, the unique permutation `w` with
//! `w(i) > w(j)` exactly when `i < j` and `phi(i) >= phi(j)`. The free
//! positions of the associated cell are the pairs `(i, j)`, `i < j`, with
//! `phi(i) < phi(j)`; the cell is the set of unipotent matrices supported on
//! those positions. All drift comparisons are exact, so cell selection never
//! sees a float.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::rational::Place;
use crate::triangular::TriMatrix;
use crate::walk::DriftProfile;
use crate::{Error, Result};

/// A permutation of `{0, .., d-1}` acting as a Weyl element.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WeylPerm {
    perm: Vec<usize>,
}

impl WeylPerm {
    pub fn new(perm: Vec<usize>) -> Result<Self> {
        let d = perm.len();
        let mut seen = vec![false; d];
        for &v in &perm {
            if v >= d || seen[v] {
                return Err(Error::Precondition("not a bijection".into()));
            }
            seen[v] = true;
        }
        Ok(WeylPerm { perm })
    }

    pub fn identity(d: usize) -> Self {
        WeylPerm {
            perm: (0..d).collect(),
        }
    }

    /// The order-reversing permutation `i -> d - 1 - i`.
    pub fn order_reversing(d: usize) -> Self {
        WeylPerm {
            perm: (0..d).rev().collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    pub fn apply(&self, i: usize) -> usize {
        self.perm[i]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.perm
    }

    /// Whether the off-diagonal position `(i, j)`, `i < j`, is free in the
    /// cell of this permutation, i.e. `w(i) < w(j)`.
    pub fn is_free(&self, i: usize, j: usize) -> bool {
        i < j && self.perm[i] < self.perm[j]
    }
}

/// A Bruhat cell at one place: the Weyl element plus its free positions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CellDescriptor {
    pub place: Place,
    pub weyl: WeylPerm,
    pub free_positions: BTreeSet<(usize, usize)>,
}

impl CellDescriptor {
    pub fn dim(&self) -> usize {
        self.weyl.dim()
    }

    pub fn is_point(&self) -> bool {
        self.free_positions.is_empty()
    }

    /// Checks that a unipotent matrix is supported on the free positions.
    pub fn contains(&self, u: &TriMatrix) -> bool {
        if u.dim() != self.dim() || !u.is_unipotent() {
            return false;
        }
        let d = u.dim();
        for i in 0..d {
            for j in (i + 1)..d {
                if !u.entry(i, j).is_zero() && !self.free_positions.contains(&(i, j)) {
                    return false;
                }
            }
        }
        true
    }
}

impl Serialize for CellDescriptor {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        // 1-based in the wire format
        let mut s = serializer.serialize_struct("CellDescriptor", 3)?;
        s.serialize_field("place", &self.place.to_string())?;
        let weyl: Vec<usize> = self.weyl.as_slice().iter().map(|&v| v + 1).collect();
        s.serialize_field("weyl", &weyl)?;
        let free: Vec<[usize; 2]> = self
            .free_positions
            .iter()
            .map(|&(i, j)| [i + 1, j + 1])
            .collect();
        s.serialize_field("free", &free)?;
        s.end()
    }
}

/// The unique Weyl element determined by the drifts at a place. Implemented
/// by ranking the indices under the exact ascending key `(phi(i), -i)`; ties
/// in the drifts therefore force `w(i) > w(j)` for `i < j`, the only
/// completion consistent with uniqueness.
pub fn weyl_from_drifts(profile: &DriftProfile, place: Place) -> Result<WeylPerm> {
    if !profile.covers(place) {
        return Err(Error::PlaceNotCovered(place));
    }
    let d = profile.dim();
    // precompute pairwise comparisons so the sort closure stays infallible
    let mut greater = vec![vec![Ordering::Equal; d]; d];
    for i in 0..d {
        for j in 0..d {
            greater[i][j] = profile.compare(place, i, j)?;
        }
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| match greater[a][b] {
        Ordering::Equal => b.cmp(&a),
        ord => ord,
    });
    let mut perm = vec![0usize; d];
    for (rank, &idx) in order.iter().enumerate() {
        perm[idx] = rank;
    }
    Ok(WeylPerm { perm })
}

/// The predicted local cell: Weyl element plus free positions
/// `{(i, j) : i < j, phi(i) < phi(j)}`.
pub fn cell_of(profile: &DriftProfile, place: Place) -> Result<CellDescriptor> {
    let weyl = weyl_from_drifts(profile, place)?;
    let d = profile.dim();
    let mut free_positions = BTreeSet::new();
    for i in 0..d {
        for j in (i + 1)..d {
            if profile.compare(place, i, j)? == Ordering::Less {
                free_positions.insert((i, j));
            }
        }
    }
    debug_assert!(free_positions.iter().all(|&(i, j)| weyl.is_free(i, j)));
    Ok(CellDescriptor {
        place,
        weyl,
        free_positions,
    })
}

/// Splits a unipotent matrix as `u = u_free * u_fixed` where `u_free` is
/// supported on the free positions of `w` and `u_fixed` on the complement.
/// The factorization exists and is unique; it is solved entrywise by
/// increasing band `j - i`, each entry depending only on shorter bands.
pub fn factorize_u(u: &TriMatrix, w: &WeylPerm) -> Result<(TriMatrix, TriMatrix)> {
    if u.dim() != w.dim() {
        return Err(Error::DimensionMismatch {
            left: u.dim(),
            right: w.dim(),
        });
    }
    if !u.is_unipotent() {
        return Err(Error::Precondition("matrix is not unipotent".into()));
    }
    let d = u.dim();
    let mut free_rows = TriMatrix::identity(d).rows();
    let mut fixed_rows = TriMatrix::identity(d).rows();
    for band in 1..d {
        for i in 0..d - band {
            let j = i + band;
            // u_ij = f_ij + g_ij + sum_{i<k<j} f_ik g_kj, one unknown per position
            let mut cross = crate::rational::Rational::zero();
            for k in (i + 1)..j {
                cross = cross + &free_rows[i][k] * &fixed_rows[k][j];
            }
            let residue = u.entry(i, j) - &cross;
            if w.is_free(i, j) {
                free_rows[i][j] = residue;
            } else {
                fixed_rows[i][j] = residue;
            }
        }
    }
    let u_free = TriMatrix::new(d, free_rows)?;
    let u_fixed = TriMatrix::new(d, fixed_rows)?;
    debug_assert_eq!(u_free.multiply(&u_fixed)?, *u);
    Ok((u_free, u_fixed))
}

/// The cell action `a . b`: split `a = u delta`, form `a b delta^{-1}` (a
/// unipotent matrix) and keep its free factor. This is an exact group action
/// on the cell of `w`.
pub fn boundary_action(a: &TriMatrix, b: &TriMatrix, cell: &CellDescriptor) -> Result<TriMatrix> {
    if !cell.contains(b) {
        return Err(Error::Precondition(
            "point does not lie in the target cell".into(),
        ));
    }
    let split = a.split_ud();
    let delta_inv = TriMatrix::diagonal(split.diagonal.clone())?.inverse();
    let conj = a.multiply(b)?.multiply(&delta_inv)?;
    let (free, _) = factorize_u(&conj, &cell.weyl)?;
    Ok(free)
}

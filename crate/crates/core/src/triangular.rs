//! The group of invertible upper-triangular rational matrices: group
//! operations, the unipotent/diagonal splitting, minors, and the exterior
//! power representation on the sub-wedge space spanned by the admissible
//! index tuples.

use std::fmt;

use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

use crate::rational::Rational;
use crate::{Error, Result, MAX_DIM};

// ---------------------------------------------------------------------------
// TriMatrix
// ---------------------------------------------------------------------------

/// A d-by-d upper-triangular matrix over the rationals with nonzero diagonal.
/// Entries below the diagonal are stored (as zeros) so the row-major layout
/// stays trivial; the invariants are checked on construction.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TriMatrix {
    dim: usize,
    entries: Vec<Rational>,
}

impl TriMatrix {
    pub fn new(dim: usize, rows: Vec<Vec<Rational>>) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::DimensionOutOfRange(dim));
        }
        if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidMatrix(format!(
                "expected {dim}x{dim} row-major entries"
            )));
        }
        let entries: Vec<Rational> = rows.into_iter().flatten().collect();
        let m = TriMatrix { dim, entries };
        for i in 0..dim {
            if m.entry(i, i).is_zero() {
                return Err(Error::InvalidMatrix(format!("zero diagonal at {}", i + 1)));
            }
            for j in 0..i {
                if !m.entry(i, j).is_zero() {
                    return Err(Error::InvalidMatrix(format!(
                        "nonzero entry below the diagonal at ({}, {})",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(m)
    }

    pub fn identity(dim: usize) -> Self {
        let mut entries = vec![Rational::zero(); dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = Rational::one();
        }
        TriMatrix { dim, entries }
    }

    pub fn diagonal(diag: Vec<Rational>) -> Result<Self> {
        let dim = diag.len();
        let mut m = TriMatrix::identity(dim);
        for (i, v) in diag.into_iter().enumerate() {
            if v.is_zero() {
                return Err(Error::InvalidMatrix(format!("zero diagonal at {}", i + 1)));
            }
            m.entries[i * dim + i] = v;
        }
        Ok(m)
    }

    /// Parse from rows of rational literals; test and config convenience.
    pub fn parse(rows: &[&[&str]]) -> Result<Self> {
        let dim = rows.len();
        let mut parsed = Vec::with_capacity(dim);
        for row in rows {
            let r: Result<Vec<Rational>> = row.iter().map(|s| s.parse()).collect();
            parsed.push(r?);
        }
        TriMatrix::new(dim, parsed)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entry(&self, i: usize, j: usize) -> &Rational {
        &self.entries[i * self.dim + j]
    }

    pub fn rows(&self) -> Vec<Vec<Rational>> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.entry(i, j).clone()).collect())
            .collect()
    }

    pub fn diagonal_entries(&self) -> Vec<Rational> {
        (0..self.dim).map(|i| self.entry(i, i).clone()).collect()
    }

    pub fn is_unipotent(&self) -> bool {
        (0..self.dim).all(|i| self.entry(i, i).is_one())
    }

    /// Exact matrix product.
    pub fn multiply(&self, other: &TriMatrix) -> Result<TriMatrix> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                left: self.dim,
                right: other.dim,
            });
        }
        let d = self.dim;
        let mut entries = vec![Rational::zero(); d * d];
        for i in 0..d {
            for j in i..d {
                let mut acc = Rational::zero();
                for k in i..=j {
                    acc = acc + self.entry(i, k) * other.entry(k, j);
                }
                entries[i * d + j] = acc;
            }
        }
        Ok(TriMatrix { dim: d, entries })
    }

    /// Exact inverse by back-substitution on each column.
    pub fn inverse(&self) -> TriMatrix {
        let d = self.dim;
        let mut inv = vec![Rational::zero(); d * d];
        for j in (0..d).rev() {
            inv[j * d + j] = self.entry(j, j).recip().expect("nonzero diagonal");
            for i in (0..j).rev() {
                let mut acc = Rational::zero();
                for k in (i + 1)..=j {
                    acc = acc + self.entry(i, k) * &inv[k * d + j];
                }
                inv[i * d + j] = -(acc / self.entry(i, i).clone());
            }
        }
        TriMatrix { dim: d, entries: inv }
    }

    /// Splits `a = u * delta` with `u` unipotent: `u(i,j) = a(i,j)/a(j,j)`.
    pub fn split_ud(&self) -> UnipotentDiagonalSplit {
        let d = self.dim;
        let mut u = TriMatrix::identity(d);
        for i in 0..d {
            for j in (i + 1)..d {
                u.entries[i * d + j] = self.entry(i, j) / self.entry(j, j);
            }
        }
        UnipotentDiagonalSplit {
            unipotent: u,
            diagonal: self.diagonal_entries(),
        }
    }

    /// Top-left `sub_dim` by `sub_dim` block.
    pub fn minor(&self, sub_dim: usize) -> Result<TriMatrix> {
        if sub_dim == 0 || sub_dim > self.dim {
            return Err(Error::IndexOutOfRange(sub_dim));
        }
        let entries = (0..sub_dim)
            .flat_map(|i| (0..sub_dim).map(move |j| (i, j)))
            .map(|(i, j)| self.entry(i, j).clone())
            .collect();
        Ok(TriMatrix {
            dim: sub_dim,
            entries,
        })
    }
}

impl fmt::Debug for TriMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for i in 0..self.dim {
            if i > 0 {
                write!(f, "; ")?;
            }
            for j in 0..self.dim {
                if j > 0 {
                    write!(f, " ")?;
                }
                write!(f, "{}", self.entry(i, j))?;
            }
        }
        write!(f, "]")
    }
}

impl Serialize for TriMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.rows().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for TriMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<Rational>>::deserialize(deserializer)?;
        let dim = rows.len();
        TriMatrix::new(dim, rows).map_err(de::Error::custom)
    }
}

/// Result of `a = unipotent * diag(diagonal)`.
#[derive(Clone, Debug, PartialEq)]
pub struct UnipotentDiagonalSplit {
    pub unipotent: TriMatrix,
    pub diagonal: Vec<Rational>,
}

impl UnipotentDiagonalSplit {
    pub fn recompose(&self) -> TriMatrix {
        let delta = TriMatrix::diagonal(self.diagonal.clone()).expect("nonzero diagonal");
        self.unipotent.multiply(&delta).expect("same dimension")
    }
}

// ---------------------------------------------------------------------------
// Sub-wedge basis
// ---------------------------------------------------------------------------

/// Basis of the invariant subspace of the r-th exterior power spanned by
/// `e_{i_1} ^ ... ^ e_{i_r}` with `i_s <= j_s`, where `j_1 < ... < j_r`
/// (0-based, `j_r = dim - 1`) is the defining index set. Tuples are kept in
/// lexicographic order; the defining tuple itself is always last.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubspaceBasis {
    dim: usize,
    j_set: Vec<usize>,
    tuples: Vec<Vec<usize>>,
}

impl SubspaceBasis {
    pub fn new(dim: usize, j_set: Vec<usize>) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::DimensionOutOfRange(dim));
        }
        let ok = !j_set.is_empty()
            && j_set.windows(2).all(|w| w[0] < w[1])
            && *j_set.last().unwrap() == dim - 1;
        if !ok {
            return Err(Error::Precondition(
                "index set must be strictly increasing and end at the dimension".into(),
            ));
        }
        let mut tuples = Vec::new();
        let mut current = Vec::with_capacity(j_set.len());
        collect_tuples(&j_set, 0, 0, &mut current, &mut tuples);
        debug_assert_eq!(tuples.last(), Some(&j_set));
        Ok(SubspaceBasis { dim, j_set, tuples })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Cardinality r of the defining index set.
    pub fn rank(&self) -> usize {
        self.j_set.len()
    }

    /// Number of basis tuples (the dimension m of the subspace).
    pub fn size(&self) -> usize {
        self.tuples.len()
    }

    pub fn j_set(&self) -> &[usize] {
        &self.j_set
    }

    pub fn tuples(&self) -> &[Vec<usize>] {
        &self.tuples
    }

    pub fn tuple(&self, k: usize) -> &[usize] {
        &self.tuples[k]
    }

    pub fn index_of(&self, tuple: &[usize]) -> Option<usize> {
        self.tuples.binary_search_by(|t| t.as_slice().cmp(tuple)).ok()
    }

    /// Header labels like `e1^e3` (1-based), used by the CSV export.
    pub fn labels(&self) -> Vec<String> {
        self.tuples
            .iter()
            .map(|t| {
                t.iter()
                    .map(|i| format!("e{}", i + 1))
                    .collect::<Vec<_>>()
                    .join("^")
            })
            .collect()
    }
}

fn collect_tuples(
    j_set: &[usize],
    pos: usize,
    min: usize,
    current: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    if pos == j_set.len() {
        out.push(current.clone());
        return;
    }
    for i in min..=j_set[pos] {
        current.push(i);
        collect_tuples(j_set, pos + 1, i + 1, current, out);
        current.pop();
    }
}

// ---------------------------------------------------------------------------
// Wedge representation
// ---------------------------------------------------------------------------

/// The matrix of the exterior-power action of `source` restricted to the
/// sub-wedge space, in the tuple basis. Entry (k, l) is the minor of `source`
/// with rows `tuple(k)` and columns `tuple(l)`; the matrix is upper
/// triangular in the basis order.
#[derive(Clone, Debug, PartialEq)]
pub struct WedgeRep {
    pub source: TriMatrix,
    pub basis: SubspaceBasis,
    pub matrix: Vec<Vec<Rational>>,
}

pub fn wedge_rep(a: &TriMatrix, basis: &SubspaceBasis) -> Result<WedgeRep> {
    if a.dim() != basis.dim() {
        return Err(Error::DimensionMismatch {
            left: a.dim(),
            right: basis.dim(),
        });
    }
    let m = basis.size();
    let mut matrix = vec![vec![Rational::zero(); m]; m];
    for l in 0..m {
        for k in 0..m {
            let minor = det_bareiss(&submatrix(a, basis.tuple(k), basis.tuple(l)));
            if k > l && !minor.is_zero() {
                return Err(Error::Internal(
                    "wedge representation is not upper triangular".into(),
                ));
            }
            matrix[k][l] = minor;
        }
    }
    Ok(WedgeRep {
        source: a.clone(),
        basis: basis.clone(),
        matrix,
    })
}

impl WedgeRep {
    /// The normalized representative: the wedge matrix divided by the product
    /// of the diagonal entries over the defining index set, so the bottom
    /// right entry is exactly 1.
    pub fn normalized(&self) -> Vec<Vec<Rational>> {
        let scale = self
            .basis
            .j_set()
            .iter()
            .fold(Rational::one(), |acc, &j| acc * self.source.entry(j, j));
        let inv = scale.recip().expect("nonzero diagonal product");
        self.matrix
            .iter()
            .map(|row| row.iter().map(|x| x * &inv).collect())
            .collect()
    }

    /// CSV with one header row of basis tuples.
    pub fn to_csv(&self) -> String {
        let mut out = self.basis.labels().join(",");
        out.push('\n');
        for row in &self.matrix {
            let line: Vec<String> = row.iter().map(|x| x.to_string()).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Wedge-minor determinant identity
// ---------------------------------------------------------------------------

/// Checks, exactly, that the wedge-matrix entry in the last column at the row
/// indexed by the tuple `{l} ∪ (J \ {d})` equals the determinant of the
/// submatrix of `a` with those rows and columns `J`. The two sides follow
/// independent evaluation routes (Bareiss vs cofactor expansion).
pub fn wedge_minor_identity_check(a: &TriMatrix, j_set: &[usize], l: usize) -> Result<bool> {
    let d = a.dim();
    if j_set.contains(&l) {
        return Err(Error::Precondition(format!(
            "index {} must avoid the defining set",
            l + 1
        )));
    }
    if l >= d {
        return Err(Error::IndexOutOfRange(l));
    }
    let basis = SubspaceBasis::new(d, j_set.to_vec())?;
    let mut row_tuple: Vec<usize> = j_set[..j_set.len() - 1].to_vec();
    row_tuple.push(l);
    row_tuple.sort_unstable();
    let k = basis.index_of(&row_tuple).ok_or_else(|| {
        Error::Internal("substituted tuple missing from the sub-wedge basis".into())
    })?;
    let rep = wedge_rep(a, &basis)?;
    let lhs = &rep.matrix[k][basis.size() - 1];
    let rhs = det_naive(&submatrix(a, &row_tuple, j_set));
    Ok(*lhs == rhs)
}

// ---------------------------------------------------------------------------
// Dense rational matrices: determinants and products
// ---------------------------------------------------------------------------

pub fn submatrix(a: &TriMatrix, rows: &[usize], cols: &[usize]) -> Vec<Vec<Rational>> {
    rows.iter()
        .map(|&i| cols.iter().map(|&j| a.entry(i, j).clone()).collect())
        .collect()
}

/// Fraction-free Bareiss elimination with row pivoting. Divisions by the
/// previous pivot are exact over the rationals just as over the integers.
pub fn det_bareiss(m: &[Vec<Rational>]) -> Rational {
    let n = m.len();
    if n == 0 {
        return Rational::one();
    }
    debug_assert!(m.iter().all(|r| r.len() == n));
    let mut a: Vec<Vec<Rational>> = m.to_vec();
    let mut sign = 1i64;
    let mut prev = Rational::one();
    for k in 0..n - 1 {
        if a[k][k].is_zero() {
            match (k + 1..n).find(|&i| !a[i][k].is_zero()) {
                Some(i) => {
                    a.swap(k, i);
                    sign = -sign;
                }
                None => return Rational::zero(),
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let num = &a[k][k] * &a[i][j] - &a[i][k] * &a[k][j];
                a[i][j] = num / prev.clone();
            }
            a[i][k] = Rational::zero();
        }
        prev = a[k][k].clone();
    }
    let det = a[n - 1][n - 1].clone();
    if sign < 0 {
        -det
    } else {
        det
    }
}

/// Cofactor expansion along the first row; the independent oracle route.
pub fn det_naive(m: &[Vec<Rational>]) -> Rational {
    let n = m.len();
    match n {
        0 => return Rational::one(),
        1 => return m[0][0].clone(),
        _ => {}
    }
    let mut acc = Rational::zero();
    for j in 0..n {
        if m[0][j].is_zero() {
            continue;
        }
        let sub: Vec<Vec<Rational>> = (1..n)
            .map(|i| {
                (0..n)
                    .filter(|&c| c != j)
                    .map(|c| m[i][c].clone())
                    .collect()
            })
            .collect();
        let term = &m[0][j] * &det_naive(&sub);
        acc = if j % 2 == 0 { acc + term } else { acc - term };
    }
    acc
}

pub fn mat_mul(a: &[Vec<Rational>], b: &[Vec<Rational>]) -> Vec<Vec<Rational>> {
    let n = a.len();
    let p = b[0].len();
    let mut out = vec![vec![Rational::zero(); p]; n];
    for i in 0..n {
        for (k, aik) in a[i].iter().enumerate() {
            if aik.is_zero() {
                continue;
            }
            for j in 0..p {
                if b[k][j].is_zero() {
                    continue;
                }
                out[i][j] = &out[i][j] + &(aik * &b[k][j]);
            }
        }
    }
    out
}

pub fn mat_vec(a: &[Vec<Rational>], v: &[Rational]) -> Vec<Rational> {
    a.iter()
        .map(|row| {
            row.iter()
                .zip(v)
                .filter(|(c, x)| !c.is_zero() && !x.is_zero())
                .fold(Rational::zero(), |acc, (c, x)| acc + c * x)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::walk::SplitMix64;

    fn rat(s: &str) -> Rational {
        s.parse().unwrap()
    }

    use crate::testutil::{rand_rational, rand_tri};

    #[test]
    fn construction_rejects_bad_shapes() {
        assert!(TriMatrix::parse(&[&["1", "2"], &["0", "0"]]).is_err());
        assert!(TriMatrix::parse(&[&["1", "2"], &["3", "4"]]).is_err());
        assert!(TriMatrix::parse(&[&["1", "2"], &["0", "5"]]).is_ok());
    }

    #[test]
    fn multiply_examples() {
        let a = TriMatrix::parse(&[&["1/2", "1"], &["0", "1"]]).unwrap();
        let sq = a.multiply(&a).unwrap();
        assert_eq!(sq, TriMatrix::parse(&[&["1/4", "3/2"], &["0", "1"]]).unwrap());
        let id = TriMatrix::identity(2);
        assert_eq!(id.multiply(&a).unwrap(), a);
        assert_eq!(a.multiply(&a.inverse()).unwrap(), id);
    }

    #[test]
    fn inverse_examples() {
        let a = TriMatrix::parse(&[&["2", "1"], &["0", "3"]]).unwrap();
        assert_eq!(
            a.inverse(),
            TriMatrix::parse(&[&["1/2", "-1/6"], &["0", "1/3"]]).unwrap()
        );
        let d = TriMatrix::diagonal(vec![rat("2"), rat("-3/5")]).unwrap();
        assert_eq!(
            d.inverse(),
            TriMatrix::diagonal(vec![rat("1/2"), rat("-5/3")]).unwrap()
        );
    }

    #[test]
    fn split_ud_examples() {
        let d = TriMatrix::diagonal(vec![rat("2"), rat("3")]).unwrap();
        let s = d.split_ud();
        assert!(s.unipotent.is_unipotent());
        assert_eq!(s.diagonal, vec![rat("2"), rat("3")]);

        let a = TriMatrix::parse(&[&["2", "1/3"], &["0", "3"]]).unwrap();
        let s = a.split_ud();
        assert_eq!(s.unipotent.entry(0, 1), &rat("1/9"));
        assert_eq!(s.recompose(), a);
    }

    #[test]
    fn split_ud_roundtrip_random() {
        let mut rng = SplitMix64::new(7);
        for _ in 0..50 {
            let d = 2 + (rng.next_u64() % 4) as usize;
            let a = rand_tri(&mut rng, d);
            assert_eq!(a.split_ud().recompose(), a);
        }
    }

    #[test]
    fn minor_examples() {
        let a = TriMatrix::parse(&[&["1", "2", "3"], &["0", "4", "5"], &["0", "0", "6"]]).unwrap();
        assert_eq!(a.minor(3).unwrap(), a);
        assert_eq!(
            a.minor(2).unwrap(),
            TriMatrix::parse(&[&["1", "2"], &["0", "4"]]).unwrap()
        );
        assert_eq!(a.minor(1).unwrap().entry(0, 0), &rat("1"));
        assert!(a.minor(4).is_err());
    }

    #[test]
    fn basis_enumeration() {
        // full index set: the single forced tuple
        let b = SubspaceBasis::new(3, vec![0, 1, 2]).unwrap();
        assert_eq!(b.size(), 1);
        assert_eq!(b.tuple(0), &[0, 1, 2]);

        // J = {1,3} (1-based): tuples e1^e2, e1^e3
        let b = SubspaceBasis::new(3, vec![0, 2]).unwrap();
        assert_eq!(b.size(), 2);
        assert_eq!(b.tuples(), &[vec![0, 1], vec![0, 2]]);
        assert_eq!(b.labels(), vec!["e1^e2", "e1^e3"]);

        // last tuple is always the defining set
        let b = SubspaceBasis::new(4, vec![1, 3]).unwrap();
        assert_eq!(b.tuple(b.size() - 1), &[1, 3]);
        assert!(SubspaceBasis::new(3, vec![0, 1]).is_err());
    }

    #[test]
    fn wedge_rep_examples() {
        let b = SubspaceBasis::new(3, vec![0, 2]).unwrap();
        let id = wedge_rep(&TriMatrix::identity(3), &b).unwrap();
        assert_eq!(id.matrix[0][0], rat("1"));
        assert_eq!(id.matrix[0][1], rat("0"));
        assert_eq!(id.matrix[1][1], rat("1"));

        let a =
            TriMatrix::parse(&[&["1", "1", "0"], &["0", "1", "1"], &["0", "0", "1"]]).unwrap();
        let rep = wedge_rep(&a, &b).unwrap();
        assert_eq!(rep.matrix, vec![vec![rat("1"), rat("1")], vec![rat("0"), rat("1")]]);

        // diagonal source acts by tuple products
        let d = TriMatrix::diagonal(vec![rat("2"), rat("3"), rat("5")]).unwrap();
        let rep = wedge_rep(&d, &b).unwrap();
        assert_eq!(rep.matrix[0][0], rat("6"));
        assert_eq!(rep.matrix[1][1], rat("10"));
    }

    #[test]
    fn wedge_functoriality_all_small_bases() {
        let mut rng = SplitMix64::new(11);
        for d in 2..=5usize {
            // every admissible defining set for this dimension
            for mask in 0..(1u32 << (d - 1)) {
                let mut j_set: Vec<usize> =
                    (0..d - 1).filter(|i| mask >> i & 1 == 1).collect();
                j_set.push(d - 1);
                let basis = SubspaceBasis::new(d, j_set).unwrap();
                for _ in 0..7 {
                    let a = rand_tri(&mut rng, d);
                    let b = rand_tri(&mut rng, d);
                    let lhs = wedge_rep(&a.multiply(&b).unwrap(), &basis).unwrap().matrix;
                    let rhs = mat_mul(
                        &wedge_rep(&a, &basis).unwrap().matrix,
                        &wedge_rep(&b, &basis).unwrap().matrix,
                    );
                    assert_eq!(lhs, rhs);
                }
            }
        }
    }

    #[test]
    fn normalized_diagonal_is_a_tuple_ratio() {
        let mut rng = SplitMix64::new(23);
        for _ in 0..20 {
            let d = 3 + (rng.next_u64() % 3) as usize;
            let a = rand_tri(&mut rng, d);
            let basis = SubspaceBasis::new(d, vec![d - 2, d - 1]).unwrap();
            let rep = wedge_rep(&a, &basis).unwrap();
            let norm = rep.normalized();
            let m = basis.size();
            assert!(norm[m - 1][m - 1].is_one());
            let j_prod = basis
                .j_set()
                .iter()
                .fold(Rational::one(), |acc, &j| acc * a.entry(j, j));
            for (k, tuple) in basis.tuples().iter().enumerate() {
                let k_prod = tuple
                    .iter()
                    .fold(Rational::one(), |acc, &j| acc * a.entry(j, j));
                assert_eq!(norm[k][k], k_prod / j_prod.clone());
            }
        }
    }

    #[test]
    fn wedge_minor_identity_examples() {
        // d=2, J={2} (1-based), l=1: both sides are the (1,2) entry
        let a = TriMatrix::parse(&[&["2", "7/3"], &["0", "5"]]).unwrap();
        assert!(wedge_minor_identity_check(&a, &[1], 0).unwrap());

        // identity matrix: both sides vanish
        assert!(wedge_minor_identity_check(&TriMatrix::identity(4), &[1, 3], 0).unwrap());
        assert!(wedge_minor_identity_check(&TriMatrix::identity(4), &[1, 3], 2).unwrap());

        // l inside J is rejected
        assert!(wedge_minor_identity_check(&TriMatrix::identity(4), &[1, 3], 1).is_err());
    }

    #[test]
    fn wedge_minor_identity_random_smoke() {
        let mut rng = SplitMix64::new(99);
        for _ in 0..50 {
            let d = 2 + (rng.next_u64() % 4) as usize;
            let a = rand_tri(&mut rng, d);
            let mask = rng.next_u64() % (1 << (d - 1));
            let mut j_set: Vec<usize> = (0..d - 1).filter(|i| mask >> i & 1 == 1).collect();
            j_set.push(d - 1);
            for l in 0..d - 1 {
                if !j_set.contains(&l) {
                    assert!(wedge_minor_identity_check(&a, &j_set, l).unwrap());
                }
            }
        }
    }

    #[test]
    fn determinant_routes_agree() {
        let mut rng = SplitMix64::new(5);
        for n in 1..=5usize {
            for _ in 0..20 {
                let m: Vec<Vec<Rational>> = (0..n)
                    .map(|_| (0..n).map(|_| rand_rational(&mut rng, true)).collect())
                    .collect();
                assert_eq!(det_bareiss(&m), det_naive(&m));
            }
        }
    }

    #[test]
    fn bareiss_handles_zero_pivots() {
        let m = vec![
            vec![rat("0"), rat("1"), rat("2")],
            vec![rat("1"), rat("0"), rat("3")],
            vec![rat("4"), rat("5"), rat("0")],
        ];
        assert_eq!(det_bareiss(&m), det_naive(&m));
        let singular = vec![
            vec![rat("1"), rat("2")],
            vec![rat("2"), rat("4")],
        ];
        assert!(det_bareiss(&singular).is_zero());
    }

    #[test]
    fn wedge_csv_has_tuple_header() {
        let b = SubspaceBasis::new(3, vec![0, 2]).unwrap();
        let rep = wedge_rep(&TriMatrix::identity(3), &b).unwrap();
        let csv = rep.to_csv();
        assert!(csv.starts_with("e1^e2,e1^e3\n"));
    }
}

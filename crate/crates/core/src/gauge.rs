//! Heights, the adelic length, gauge balls with exhaustive enumeration,
//! diagonal approximants, and the gauge statistics of the walk.
//!
//! For an irreducible fraction `q = ±r/s` the height is `<q> = ln(r s)` and
//! the plus-height over all places collapses to `<q>+ = ln max(r, s)`; both
//! are logs of explicit integers, so every membership and comparison below
//! reduces to exact integer arithmetic. Floats carry only reported values.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};
use rayon::prelude::*;

use crate::boundary::{assemble_boundary_point, BoundaryPoint};
use crate::rational::{factor_biguint, ln_biguint, valuation, Place, Rational};
use crate::triangular::TriMatrix;
use crate::walk::{DriftProfile, StepMeasure, Trajectory};
use crate::{Error, Result};

/// Hard ceiling on the predicted enumeration cost of a gauge ball.
pub const ENUMERATION_BUDGET: f64 = 1e7;

// ---------------------------------------------------------------------------
// Heights of rationals
// ---------------------------------------------------------------------------

/// `r * s` for `q = ±r/s` in lowest terms; the exponential of the height.
pub fn height_product(q: &Rational) -> Result<BigUint> {
    if q.is_zero() {
        return Err(Error::ZeroValuation);
    }
    Ok(q.numerator().magnitude() * q.denominator().magnitude())
}

/// The height `<q> = sum_p |ln|q|_p| = ln r + ln s`.
pub fn height(q: &Rational) -> Result<f64> {
    Ok(ln_biguint(&height_product(q)?))
}

/// `max(r, s)`; the exponential of the plus-height. Zero contributes 1.
pub fn plus_height_product(q: &Rational) -> BigUint {
    if q.is_zero() {
        return BigUint::one();
    }
    q.numerator()
        .magnitude()
        .max(q.denominator().magnitude())
        .clone()
}

/// `<q>+ = sum_p ln+ |q|_p = ln max(r, s)`, with `<0>+ = 0`.
pub fn plus_height(q: &Rational) -> f64 {
    let m = plus_height_product(q);
    if m.is_one() {
        0.0
    } else {
        ln_biguint(&m)
    }
}

// ---------------------------------------------------------------------------
// Adelic points and the group H
// ---------------------------------------------------------------------------

/// A finitely described adele: the rational `base` embedded diagonally, plus
/// finitely many per-place deviations. The value at a place `p` is
/// `base + deviation[p]` when listed and `base` otherwise, so only finitely
/// many places ever exceed norm one.
#[derive(Clone, Debug, PartialEq)]
pub struct AdelePoint {
    base: Rational,
    deviations: BTreeMap<Place, Rational>,
}

impl AdelePoint {
    pub fn from_rational(base: Rational) -> Self {
        AdelePoint {
            base,
            deviations: BTreeMap::new(),
        }
    }

    pub fn zero() -> Self {
        AdelePoint::from_rational(Rational::zero())
    }

    /// An adele supported on the listed places only (zero elsewhere).
    pub fn sparse(values: BTreeMap<Place, Rational>) -> Self {
        let mut a = AdelePoint {
            base: Rational::zero(),
            deviations: values,
        };
        a.prune();
        a
    }

    fn prune(&mut self) {
        self.deviations.retain(|_, v| !v.is_zero());
    }

    pub fn value_at(&self, place: Place) -> Rational {
        match self.deviations.get(&place) {
            Some(dev) => &self.base + dev,
            None => self.base.clone(),
        }
    }

    pub fn is_rational(&self) -> bool {
        self.deviations.is_empty()
    }

    pub fn add(&self, other: &AdelePoint) -> AdelePoint {
        let mut deviations = BTreeMap::new();
        let places: BTreeSet<Place> = self
            .deviations
            .keys()
            .chain(other.deviations.keys())
            .copied()
            .collect();
        for place in places {
            let dev = self
                .deviations
                .get(&place)
                .cloned()
                .unwrap_or_else(Rational::zero)
                + other
                    .deviations
                    .get(&place)
                    .cloned()
                    .unwrap_or_else(Rational::zero);
            deviations.insert(place, dev);
        }
        let mut out = AdelePoint {
            base: &self.base + &other.base,
            deviations,
        };
        out.prune();
        out
    }

    pub fn mul(&self, other: &AdelePoint) -> AdelePoint {
        // (b1 + d1)(b2 + d2) = b1 b2 + (b1 d2 + d1 b2 + d1 d2) per place
        let mut deviations = BTreeMap::new();
        let places: BTreeSet<Place> = self
            .deviations
            .keys()
            .chain(other.deviations.keys())
            .copied()
            .collect();
        for place in places {
            let d1 = self
                .deviations
                .get(&place)
                .cloned()
                .unwrap_or_else(Rational::zero);
            let d2 = other
                .deviations
                .get(&place)
                .cloned()
                .unwrap_or_else(Rational::zero);
            let dev = &self.base * &d2 + &d1 * &other.base + &d1 * &d2;
            deviations.insert(place, dev);
        }
        let mut out = AdelePoint {
            base: &self.base * &other.base,
            deviations,
        };
        out.prune();
        out
    }

    pub fn scale(&self, q: &Rational) -> AdelePoint {
        let mut out = AdelePoint {
            base: &self.base * q,
            deviations: self
                .deviations
                .iter()
                .map(|(p, v)| (*p, v * q))
                .collect(),
        };
        out.prune();
        out
    }

    /// Places that can carry a norm above one: the deviation support, the
    /// primes of the base denominator, and infinity.
    fn inspection_places(&self) -> Result<BTreeSet<Place>> {
        let mut places: BTreeSet<Place> = self.deviations.keys().copied().collect();
        places.insert(Place::INFINITY);
        if !self.base.is_zero() {
            for (p, _) in factor_biguint(self.base.denominator().magnitude())? {
                places.insert(Place::finite(p)?);
            }
        }
        Ok(places)
    }
}

/// Per-place breakdown of the plus-height of an adele.
#[derive(Clone, Debug)]
pub struct PlusHeight {
    pub total: f64,
    pub per_place: BTreeMap<Place, f64>,
}

/// `<b>+ = sum_p ln+ |b^p|_p` for a finitely described adele.
pub fn adele_plus_height(point: &AdelePoint) -> Result<PlusHeight> {
    let mut per_place = BTreeMap::new();
    let mut total = 0.0;
    for place in point.inspection_places()? {
        let value = point.value_at(place);
        if value.is_zero() {
            continue;
        }
        let contribution = match place.prime() {
            Some(p) => {
                let v = valuation(&value, place)?;
                if v < 0 {
                    (-v) as f64 * (p as f64).ln()
                } else {
                    0.0
                }
            }
            None => crate::rational::ln_rational_abs(&value).max(0.0),
        };
        if contribution > 0.0 {
            per_place.insert(place, contribution);
            total += contribution;
        }
    }
    Ok(PlusHeight { total, per_place })
}

/// An element of the adelic triangular group: unipotent part with adele
/// entries, rational diagonal.
#[derive(Clone, Debug)]
pub struct HPoint {
    dim: usize,
    unipotent: BTreeMap<(usize, usize), AdelePoint>,
    diagonal: Vec<Rational>,
}

impl HPoint {
    pub fn new(
        dim: usize,
        unipotent: BTreeMap<(usize, usize), AdelePoint>,
        diagonal: Vec<Rational>,
    ) -> Result<Self> {
        if diagonal.len() != dim || diagonal.iter().any(|d| d.is_zero()) {
            return Err(Error::InvalidMatrix(
                "diagonal must be nonzero of the right length".into(),
            ));
        }
        if unipotent.keys().any(|&(i, j)| i >= j || j >= dim) {
            return Err(Error::InvalidMatrix(
                "unipotent entries must sit strictly above the diagonal".into(),
            ));
        }
        Ok(HPoint {
            dim,
            unipotent,
            diagonal,
        })
    }

    pub fn identity(dim: usize) -> Self {
        HPoint {
            dim,
            unipotent: BTreeMap::new(),
            diagonal: vec![Rational::one(); dim],
        }
    }

    /// The image of a rational matrix under the diagonal embedding.
    pub fn from_rational_matrix(a: &TriMatrix) -> Self {
        let split = a.split_ud();
        let d = a.dim();
        let mut unipotent = BTreeMap::new();
        for i in 0..d {
            for j in (i + 1)..d {
                let u = split.unipotent.entry(i, j);
                if !u.is_zero() {
                    unipotent.insert((i, j), AdelePoint::from_rational(u.clone()));
                }
            }
        }
        HPoint {
            dim: d,
            unipotent,
            diagonal: split.diagonal,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn diagonal(&self) -> &[Rational] {
        &self.diagonal
    }

    pub fn unipotent_entry(&self, i: usize, j: usize) -> AdelePoint {
        self.unipotent
            .get(&(i, j))
            .cloned()
            .unwrap_or_else(AdelePoint::zero)
    }

    /// Group law `(u1 d1)(u2 d2) = (u1 * d1 u2 d1^{-1}) (d1 d2)`.
    pub fn multiply(&self, other: &HPoint) -> Result<HPoint> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                left: self.dim,
                right: other.dim,
            });
        }
        let d = self.dim;
        // conjugate the second unipotent part by the first diagonal
        let mut conj: BTreeMap<(usize, usize), AdelePoint> = BTreeMap::new();
        for (&(i, j), entry) in &other.unipotent {
            let ratio = &self.diagonal[i] / &self.diagonal[j];
            conj.insert((i, j), entry.scale(&ratio));
        }
        let mut unipotent = BTreeMap::new();
        for i in 0..d {
            for j in (i + 1)..d {
                let mut acc = self.unipotent_entry(i, j);
                if let Some(v) = conj.get(&(i, j)) {
                    acc = acc.add(v);
                }
                for k in (i + 1)..j {
                    if let (Some(a), Some(b)) = (self.unipotent.get(&(i, k)), conj.get(&(k, j))) {
                        acc = acc.add(&a.mul(b));
                    }
                }
                if !(acc.is_rational() && acc.value_at(Place::INFINITY).is_zero()) {
                    unipotent.insert((i, j), acc);
                }
            }
        }
        let diagonal = self
            .diagonal
            .iter()
            .zip(&other.diagonal)
            .map(|(a, b)| a * b)
            .collect();
        Ok(HPoint {
            dim: d,
            unipotent,
            diagonal,
        })
    }
}

/// The adelic length `||h|| = <u>+ + <delta>`.
pub fn adelic_length(h: &HPoint) -> Result<f64> {
    let mut total = 0.0;
    for entry in h.unipotent.values() {
        total += adele_plus_height(entry)?.total;
    }
    for d in &h.diagonal {
        total += height(d)?;
    }
    Ok(total)
}

/// Exact integer whose log is the adelic length of a rational point.
pub fn rational_length_product(a: &TriMatrix) -> BigUint {
    let split = a.split_ud();
    let mut acc = BigUint::one();
    for d in &split.diagonal {
        acc *= height_product(d).expect("nonzero diagonal");
    }
    let n = a.dim();
    for i in 0..n {
        for j in (i + 1)..n {
            acc *= plus_height_product(split.unipotent.entry(i, j));
        }
    }
    acc
}

/// Index of `g` in the gauge family at the identity: the smallest integer
/// `n >= 0` with `||g^{-1}|| <= n`.
pub fn gauge_index(g: &TriMatrix) -> u64 {
    let product = rational_length_product(&g.inverse());
    if product.is_one() {
        return 0;
    }
    // ln of an integer > 1 is never an integer, so the float ceiling is exact
    ln_biguint(&product).ceil() as u64
}

// ---------------------------------------------------------------------------
// Near subadditivity
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct SubadditivityReport {
    /// Scalar pairs checked against `<q q'> <= <q> + <q'>`, exactly.
    pub scalar_pairs: usize,
    pub scalar_violations: usize,
    /// Fitted intercept with slope fixed at one.
    pub intercept_at_slope_one: f64,
    /// Smallest slope that works with intercept zero.
    pub slope_at_zero_intercept: f64,
}

/// Exact scalar subadditivity over the diagonal entries of the sample, plus
/// an empirical `(K, K')` fit for the matrix length. Scalar violations are
/// hard failures of the arithmetic, not statistics.
pub fn near_subadditivity_check(pairs: &[(TriMatrix, TriMatrix)]) -> Result<SubadditivityReport> {
    let mut scalar_pairs = 0;
    let mut scalar_violations = 0;
    let mut intercept: f64 = 0.0;
    let mut slope: f64 = 1.0;
    for (a, b) in pairs {
        for i in 0..a.dim() {
            for j in 0..b.dim() {
                let q = a.entry(i, i);
                let qp = b.entry(j, j);
                let prod = q * qp;
                scalar_pairs += 1;
                // <q q'> <= <q> + <q'>  as integers: r''s'' <= rs * r's'
                if height_product(&prod)? > height_product(q)? * height_product(qp)? {
                    scalar_violations += 1;
                }
            }
        }
        let h = ln_biguint(&rational_length_product(a));
        let hp = ln_biguint(&rational_length_product(b));
        let hh = ln_biguint(&rational_length_product(&a.multiply(b)?));
        intercept = intercept.max(hh - (h + hp));
        if h + hp > 0.0 {
            slope = slope.max(hh / (h + hp));
        }
    }
    Ok(SubadditivityReport {
        scalar_pairs,
        scalar_violations,
        intercept_at_slope_one: intercept.max(0.0),
        slope_at_zero_intercept: slope,
    })
}

// ---------------------------------------------------------------------------
// Gauge enumeration
// ---------------------------------------------------------------------------

/// Radius of a gauge ball. `LnInteger(N)` means `k = ln N`, which keeps the
/// membership predicate a pure integer comparison; `Real(k)` compares the log
/// of the exact integer product against `k` in floats (the boundary is never
/// attained for integer `k` since `e^k` is irrational).
#[derive(Clone, Copy, Debug)]
pub enum GaugeBound {
    Real(f64),
    LnInteger(u64),
}

impl GaugeBound {
    pub fn k(&self) -> f64 {
        match self {
            GaugeBound::Real(k) => *k,
            GaugeBound::LnInteger(n) => (*n as f64).ln(),
        }
    }

    fn allows(&self, product: &BigUint) -> bool {
        match self {
            GaugeBound::LnInteger(n) => *product <= BigUint::from(*n),
            GaugeBound::Real(k) => {
                if product.is_one() {
                    *k >= 0.0
                } else {
                    ln_biguint(product) <= *k
                }
            }
        }
    }

    /// Largest integer factor that could still fit the remaining budget.
    fn max_factor(&self, acc: &BigUint) -> u64 {
        match self {
            GaugeBound::LnInteger(n) => {
                let n = BigUint::from(*n);
                if *acc > n {
                    0
                } else {
                    (n / acc).to_u64().unwrap_or(u64::MAX)
                }
            }
            GaugeBound::Real(k) => {
                let remaining = k - if acc.is_one() { 0.0 } else { ln_biguint(acc) };
                if remaining < 0.0 {
                    0
                } else {
                    (remaining.exp() + 1.0).floor() as u64
                }
            }
        }
    }
}

/// All nonzero rationals with height product `r s <= max_product`.
pub fn scalar_height_ball(max_product: u64) -> Vec<Rational> {
    let mut out = Vec::new();
    for r in 1..=max_product.max(1) {
        if r > max_product {
            break;
        }
        for s in 1..=max_product / r {
            if num_integer::Integer::gcd(&r, &s) == 1 {
                out.push(Rational::ratio(r as i64, s as i64));
                out.push(Rational::ratio(-(r as i64), s as i64));
            }
        }
    }
    out
}

/// All nonzero rationals with plus-height product `max(r, s) <= cap`.
fn scalar_plus_ball(cap: u64) -> Vec<Rational> {
    let mut out = Vec::new();
    for r in 1..=cap {
        for s in 1..=cap {
            if num_integer::Integer::gcd(&r, &s) == 1 {
                out.push(Rational::ratio(r as i64, s as i64));
                out.push(Rational::ratio(-(r as i64), s as i64));
            }
        }
    }
    out
}

/// Predicted enumeration cost: the product of the candidate-ball sizes per
/// coordinate, before the shared budget prunes anything.
fn predicted_cost(bound: &GaugeBound, dim: usize) -> f64 {
    let cap = bound.max_factor(&BigUint::one());
    let scalar = scalar_ball_size(cap) as f64;
    let plus = plus_ball_size(cap) as f64 + 1.0;
    scalar.powi(dim as i32) * plus.powi((dim * (dim - 1) / 2) as i32)
}

fn scalar_ball_size(cap: u64) -> u64 {
    let mut count = 0;
    for r in 1..=cap.max(1) {
        if r > cap {
            break;
        }
        for s in 1..=cap / r {
            if num_integer::Integer::gcd(&r, &s) == 1 {
                count += 2;
            }
        }
    }
    count
}

fn plus_ball_size(cap: u64) -> u64 {
    let mut count = 0;
    for r in 1..=cap {
        for s in 1..=cap {
            if num_integer::Integer::gcd(&r, &s) == 1 {
                count += 2;
            }
        }
    }
    count
}

/// Exhaustively visits the gauge ball `{a : ||a^{-1} h|| <= k}` through the
/// bijective parametrization `a^{-1} h = u delta`, i.e. `a = h delta^{-1}
/// u^{-1}`: diagonal entries range over height balls, unipotent entries over
/// plus-height balls, sharing one multiplicative budget. Refuses when the
/// predicted cost exceeds [`ENUMERATION_BUDGET`].
pub fn enumerate_gauge_with(
    bound: GaugeBound,
    h: &TriMatrix,
    visitor: &mut dyn FnMut(TriMatrix),
) -> Result<usize> {
    let d = h.dim();
    let predicted = predicted_cost(&bound, d);
    if predicted > ENUMERATION_BUDGET {
        return Err(Error::BudgetExceeded {
            predicted,
            budget: ENUMERATION_BUDGET,
        });
    }
    // off-diagonal positions, row by row
    let mut positions = Vec::new();
    for i in 0..d {
        for j in (i + 1)..d {
            positions.push((i, j));
        }
    }
    let mut delta = vec![Rational::one(); d];
    let mut u_rows = TriMatrix::identity(d).rows();
    let mut count = 0usize;
    enumerate_diag(
        &bound,
        h,
        &positions,
        0,
        &BigUint::one(),
        &mut delta,
        &mut u_rows,
        &mut count,
        visitor,
    )?;
    Ok(count)
}

#[allow(clippy::too_many_arguments)]
fn enumerate_diag(
    bound: &GaugeBound,
    h: &TriMatrix,
    positions: &[(usize, usize)],
    idx: usize,
    acc: &BigUint,
    delta: &mut Vec<Rational>,
    u_rows: &mut Vec<Vec<Rational>>,
    count: &mut usize,
    visitor: &mut dyn FnMut(TriMatrix),
) -> Result<()> {
    let d = h.dim();
    if idx == d {
        return enumerate_unipotent(
            bound, h, positions, 0, acc, delta, u_rows, count, visitor,
        );
    }
    let cap = bound.max_factor(acc);
    for q in scalar_height_ball(cap) {
        let factor = height_product(&q)?;
        let next = acc * &factor;
        if !bound.allows(&next) {
            continue;
        }
        delta[idx] = q;
        enumerate_diag(
            bound,
            h,
            positions,
            idx + 1,
            &next,
            delta,
            u_rows,
            count,
            visitor,
        )?;
    }
    delta[idx] = Rational::one();
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn enumerate_unipotent(
    bound: &GaugeBound,
    h: &TriMatrix,
    positions: &[(usize, usize)],
    pos: usize,
    acc: &BigUint,
    delta: &mut Vec<Rational>,
    u_rows: &mut Vec<Vec<Rational>>,
    count: &mut usize,
    visitor: &mut dyn FnMut(TriMatrix),
) -> Result<()> {
    if pos == positions.len() {
        *count += 1;
        let d = h.dim();
        let delta_inv = TriMatrix::diagonal(delta.clone())?.inverse();
        let u = TriMatrix::new(d, u_rows.clone())?;
        let a = h.multiply(&delta_inv)?.multiply(&u.inverse())?;
        visitor(a);
        return Ok(());
    }
    let (i, j) = positions[pos];
    // zero entry costs nothing
    u_rows[i][j] = Rational::zero();
    enumerate_unipotent(bound, h, positions, pos + 1, acc, delta, u_rows, count, visitor)?;
    let cap = bound.max_factor(acc);
    for q in scalar_plus_ball(cap) {
        let next = acc * plus_height_product(&q);
        if !bound.allows(&next) {
            continue;
        }
        u_rows[i][j] = q;
        enumerate_unipotent(
            bound, h, positions, pos + 1, &next, delta, u_rows, count, visitor,
        )?;
    }
    u_rows[i][j] = Rational::zero();
    Ok(())
}

/// Materialized gauge ball; use [`gauge_cardinality`] for counting only.
pub fn enumerate_gauge(bound: GaugeBound, h: &TriMatrix) -> Result<Vec<TriMatrix>> {
    let mut out = Vec::new();
    enumerate_gauge_with(bound, h, &mut |a| out.push(a))?;
    Ok(out)
}

pub fn gauge_cardinality(bound: GaugeBound, h: &TriMatrix) -> Result<usize> {
    let d = h.dim();
    let predicted = predicted_cost(&bound, d);
    if predicted > ENUMERATION_BUDGET {
        return Err(Error::BudgetExceeded {
            predicted,
            budget: ENUMERATION_BUDGET,
        });
    }
    let mut positions = Vec::new();
    for i in 0..d {
        for j in (i + 1)..d {
            positions.push((i, j));
        }
    }
    count_nested(&bound, &positions, d, 0, &BigUint::one())
}

fn count_nested(
    bound: &GaugeBound,
    positions: &[(usize, usize)],
    d: usize,
    idx: usize,
    acc: &BigUint,
) -> Result<usize> {
    if idx == d + positions.len() {
        return Ok(1);
    }
    let cap = bound.max_factor(acc);
    let mut total = 0usize;
    if idx < d {
        for q in scalar_height_ball(cap) {
            let next = acc * height_product(&q)?;
            if bound.allows(&next) {
                total += count_nested(bound, positions, d, idx + 1, &next)?;
            }
        }
    } else {
        // zero entry
        total += count_nested(bound, positions, d, idx + 1, acc)?;
        for q in scalar_plus_ball(cap) {
            let next = acc * plus_height_product(&q);
            if bound.allows(&next) {
                total += count_nested(bound, positions, d, idx + 1, &next)?;
            }
        }
    }
    Ok(total)
}

/// Enumeration summary against the theoretical cardinality bound.
#[derive(Clone, Debug)]
pub struct GaugeReport {
    pub k: f64,
    pub description: String,
    pub cardinality: usize,
    /// `(2 e^{6k})^{d^2}`, the proven ceiling.
    pub bound: f64,
    pub pass: bool,
}

pub fn gauge_report(bound: GaugeBound, h: &TriMatrix) -> Result<GaugeReport> {
    let cardinality = gauge_cardinality(bound, h)?;
    let k = bound.k();
    let d = h.dim() as f64;
    let ceiling = (2.0 * (6.0 * k).exp()).powf(d * d);
    Ok(GaugeReport {
        k,
        description: format!("{h:?}"),
        cardinality,
        bound: ceiling,
        pass: (cardinality as f64) <= ceiling,
    })
}

// ---------------------------------------------------------------------------
// Diagonal approximants and the gauge statistics
// ---------------------------------------------------------------------------

/// The diagonal approximant `q_n^i = prod_p p^{-[n phi_p(i)/ln p]}`, computed
/// from the exact rational `n * coefficient` per relevant prime; the integer
/// part truncates toward zero.
pub fn qn_approximant(profile: &DriftProfile, index: usize, n: usize) -> Result<Rational> {
    if index >= profile.dim() {
        return Err(Error::IndexOutOfRange(index));
    }
    let mut out = Rational::one();
    for place in profile.places() {
        let Some(p) = place.prime() else { continue };
        let coeff = &profile.prime_coefficients(p).expect("listed place")[index];
        if coeff.is_zero() {
            continue;
        }
        let scaled = Rational::from_integer(n as i64) * coeff;
        let t = scaled.signed_integer_part();
        let exp = i64::try_from(&t)
            .map_err(|_| Error::Precondition(format!("approximant exponent {t} too large")))?;
        out = out * Rational::from_integer(p as i64).pow_i64(-exp)?;
    }
    Ok(out)
}

/// Diagonal matrix of the approximants at step `n`.
pub fn qn_matrix(profile: &DriftProfile, n: usize) -> Result<TriMatrix> {
    let diag: Result<Vec<Rational>> = (0..profile.dim())
        .map(|i| qn_approximant(profile, i, n))
        .collect();
    TriMatrix::diagonal(diag?)
}

#[derive(Clone, Debug)]
pub struct QniRow {
    pub index: usize,
    pub n: usize,
    pub mean: f64,
}

/// Empirical means of `<(x_n)_{ii}^{-1} q_n^i> / n` over the seeds, for every
/// diagonal index and every requested step count.
pub fn qni_statistic(
    measure: &StepMeasure,
    seeds: &[u64],
    n_list: &[usize],
) -> Result<Vec<QniRow>> {
    let profile = measure.drift_profile()?;
    let d = measure.dim();
    let per_seed: Result<Vec<Vec<f64>>> = seeds
        .par_iter()
        .map(|&seed| {
            let mut traj = Trajectory::from_measure(measure, seed);
            let mut values = Vec::with_capacity(n_list.len() * d);
            for &n in n_list {
                for i in 0..d {
                    let x_ii = traj.diag_product(i, n)?;
                    let q = qn_approximant(&profile, i, n)?;
                    let combined = x_ii.recip()? * q;
                    values.push(height(&combined)? / n as f64);
                }
            }
            Ok(values)
        })
        .collect();
    let per_seed = per_seed?;
    let mut rows = Vec::new();
    for (ni, &n) in n_list.iter().enumerate() {
        for i in 0..d {
            let col = ni * d + i;
            let mean =
                per_seed.iter().map(|v| v[col]).sum::<f64>() / seeds.len().max(1) as f64;
            rows.push(QniRow { index: i, n, mean });
        }
    }
    Ok(rows)
}

/// Assembles the adelic point `pi_n^P(z) = z q_n` from per-place boundary
/// points: off-diagonal entries are supported on the listed places, the
/// diagonal is the approximant matrix. Uncertified entries are surfaced as
/// warnings, not errors.
pub fn pi_np(
    points: &BTreeMap<Place, BoundaryPoint>,
    profile: &DriftProfile,
    n: usize,
) -> Result<(HPoint, Vec<String>)> {
    if !points.contains_key(&Place::INFINITY) {
        return Err(Error::Precondition(
            "the place set must contain infinity".into(),
        ));
    }
    let d = profile.dim();
    let mut warnings = Vec::new();
    let mut unipotent: BTreeMap<(usize, usize), AdelePoint> = BTreeMap::new();
    for (place, point) in points {
        if point.cell.dim() != d {
            return Err(Error::DimensionMismatch {
                left: point.cell.dim(),
                right: d,
            });
        }
        for (&(i, j), approx) in &point.entries {
            if !approx.certified {
                warnings.push(format!(
                    "entry ({}, {}) at place {} is uncertified",
                    i + 1,
                    j + 1,
                    place
                ));
            }
            if approx.value.is_zero() {
                continue;
            }
            let entry = unipotent
                .entry((i, j))
                .or_insert_with(AdelePoint::zero);
            let mut values = BTreeMap::new();
            values.insert(*place, approx.value.clone());
            *entry = entry.add(&AdelePoint::sparse(values));
        }
    }
    let diagonal: Result<Vec<Rational>> =
        (0..d).map(|i| qn_approximant(profile, i, n)).collect();
    let h = HPoint::new(d, unipotent, diagonal?)?;
    Ok((h, warnings))
}

#[derive(Clone, Debug)]
pub struct EstimgaugeSample {
    pub seed: u64,
    pub value: f64,
}

#[derive(Clone, Debug)]
pub struct EstimgaugeReport {
    pub n: usize,
    pub samples: Vec<EstimgaugeSample>,
    pub warnings: Vec<String>,
}

impl EstimgaugeReport {
    pub fn quantile(&self, q: f64) -> f64 {
        if self.samples.is_empty() {
            return f64::NAN;
        }
        let mut values: Vec<f64> = self.samples.iter().map(|s| s.value).collect();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let pos = ((values.len() as f64 - 1.0) * q).round() as usize;
        values[pos]
    }

    pub fn mean(&self) -> f64 {
        if self.samples.is_empty() {
            return f64::NAN;
        }
        self.samples.iter().map(|s| s.value).sum::<f64>() / self.samples.len() as f64
    }
}

/// Per-seed samples of `||x_n^{-1} pi_n^P(Z)|| / n`, the normalized adelic
/// distance between the walk and the adelic shadow of its own boundary
/// point. Places in `P` outside the relevant set contribute the identity.
pub fn estimgauge_statistic(
    measure: &StepMeasure,
    seeds: &[u64],
    n: usize,
    places: &BTreeSet<Place>,
) -> Result<EstimgaugeReport> {
    if !places.contains(&Place::INFINITY) {
        return Err(Error::Precondition(
            "the place set must contain infinity".into(),
        ));
    }
    let profile = measure.drift_profile()?;
    let results: Result<Vec<(EstimgaugeSample, Vec<String>)>> = seeds
        .par_iter()
        .map(|&seed| {
            let mut traj = Trajectory::from_measure(measure, seed);
            let mut points = BTreeMap::new();
            let mut warnings = Vec::new();
            for &place in places {
                if !profile.covers(place) {
                    continue; // irrelevant place: identity boundary point
                }
                let assembled = assemble_boundary_point(&mut traj, &profile, place, n)?;
                if !assembled.point.certified {
                    warnings.push(format!(
                        "seed {seed}: boundary at place {place} uncertified"
                    ));
                }
                points.insert(place, assembled.point);
            }
            if !points.contains_key(&Place::INFINITY) {
                // infinity is always covered by the profile
                return Err(Error::Internal("missing archimedean boundary".into()));
            }
            let (pi, mut pi_warnings) = pi_np(&points, &profile, n)?;
            warnings.append(&mut pi_warnings);
            let x_inv = traj.product(n)?.inverse();
            let shifted = HPoint::from_rational_matrix(&x_inv).multiply(&pi)?;
            let value = adelic_length(&shifted)? / n as f64;
            Ok((EstimgaugeSample { seed, value }, warnings))
        })
        .collect();
    let results = results?;
    let mut samples = Vec::with_capacity(results.len());
    let mut warnings = Vec::new();
    for (sample, mut w) in results {
        samples.push(sample);
        warnings.append(&mut w);
    }
    Ok(EstimgaugeReport {
        n,
        samples,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::rand_tri;
    use crate::walk::SplitMix64;

    fn rat(s: &str) -> Rational {
        s.parse().unwrap()
    }

    fn dirac_half() -> StepMeasure {
        let g = TriMatrix::parse(&[&["1/2", "1"], &["0", "1"]]).unwrap();
        StepMeasure::new(2, vec![(g, rat("1"))]).unwrap()
    }

    fn affine_measure() -> StepMeasure {
        let a = TriMatrix::parse(&[&["1/2", "1"], &["0", "1"]]).unwrap();
        let b = TriMatrix::parse(&[&["2", "1"], &["0", "1"]]).unwrap();
        StepMeasure::new(2, vec![(a, rat("3/4")), (b, rat("1/4"))]).unwrap()
    }

    #[test]
    fn height_examples() {
        assert_eq!(height(&rat("1")).unwrap(), 0.0);
        assert_eq!(height(&rat("-1")).unwrap(), 0.0);
        assert!((height(&rat("-3/4")).unwrap() - 12f64.ln()).abs() < 1e-14);
        assert!((height(&rat("6")).unwrap() - 6f64.ln()).abs() < 1e-14);
        assert!(height(&Rational::zero()).is_err());
    }

    #[test]
    fn plus_height_examples() {
        assert!((plus_height(&rat("3/4")) - 4f64.ln()).abs() < 1e-14);
        assert_eq!(plus_height(&Rational::zero()), 0.0);
        // <q>+ >= <q>/2, exactly: max(r,s)^2 >= r*s
        let mut rng = SplitMix64::new(77);
        for _ in 0..1000 {
            let q = crate::testutil::rand_rational(&mut rng, false);
            let plus = plus_height_product(&q);
            assert!(&plus * &plus >= height_product(&q).unwrap());
        }
    }

    #[test]
    fn adelic_length_examples() {
        assert_eq!(
            adelic_length(&HPoint::identity(3)).unwrap(),
            0.0
        );
        let h = TriMatrix::parse(&[&["2", "1/3"], &["0", "3"]]).unwrap();
        let len = adelic_length(&HPoint::from_rational_matrix(&h)).unwrap();
        let expected = 2f64.ln() + 3f64.ln() + 9f64.ln();
        assert!((len - expected).abs() < 1e-12);
        // exact integer route agrees
        assert_eq!(rational_length_product(&h), BigUint::from(2u32 * 3 * 9));

        let d = TriMatrix::diagonal(vec![rat("5/3"), rat("1"), rat("1")]).unwrap();
        let len = adelic_length(&HPoint::from_rational_matrix(&d)).unwrap();
        assert!((len - 15f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn h_multiplication_matches_rational_multiplication() {
        let mut rng = SplitMix64::new(3);
        for _ in 0..30 {
            let d = 2 + (rng.next_u64() % 3) as usize;
            let a = rand_tri(&mut rng, d);
            let b = rand_tri(&mut rng, d);
            let lhs = HPoint::from_rational_matrix(&a)
                .multiply(&HPoint::from_rational_matrix(&b))
                .unwrap();
            let rhs = HPoint::from_rational_matrix(&a.multiply(&b).unwrap());
            assert_eq!(lhs.diagonal(), rhs.diagonal());
            for i in 0..d {
                for j in (i + 1)..d {
                    assert_eq!(
                        lhs.unipotent_entry(i, j).value_at(Place::INFINITY),
                        rhs.unipotent_entry(i, j).value_at(Place::INFINITY)
                    );
                }
            }
        }
    }

    #[test]
    fn adele_arithmetic_tracks_places() {
        let mut vals = BTreeMap::new();
        vals.insert(Place::INFINITY, rat("2"));
        vals.insert(Place::finite(3).unwrap(), rat("1/3"));
        let a = AdelePoint::sparse(vals);
        let b = AdelePoint::from_rational(rat("1/2"));
        let sum = a.add(&b);
        assert_eq!(sum.value_at(Place::INFINITY), rat("5/2"));
        assert_eq!(sum.value_at(Place::finite(3).unwrap()), rat("5/6"));
        assert_eq!(sum.value_at(Place::finite(5).unwrap()), rat("1/2"));
        let prod = a.mul(&b);
        assert_eq!(prod.value_at(Place::INFINITY), rat("1"));
        assert_eq!(prod.value_at(Place::finite(5).unwrap()), rat("0"));

        let plus = adele_plus_height(&sum).unwrap();
        // |5/2|_2 = 2, |5/6|_3 = 3... inspection covers base and deviations
        assert!(plus.per_place[&Place::finite(2).unwrap()] > 0.0);
        assert!((plus.per_place[&Place::INFINITY] - 2.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn subadditivity_examples() {
        // <(1/2) * 2> = 0 <= <1/2> + <2>, and <2*2> = <2> + <2> exactly
        let a = TriMatrix::diagonal(vec![rat("1/2"), rat("2")]).unwrap();
        let b = TriMatrix::diagonal(vec![rat("2"), rat("2")]).unwrap();
        let report = near_subadditivity_check(&[(a, b)]).unwrap();
        assert_eq!(report.scalar_violations, 0);

        let mut rng = SplitMix64::new(9);
        let pairs: Vec<(TriMatrix, TriMatrix)> = (0..500)
            .map(|_| {
                let d = 2 + (rng.next_u64() % 2) as usize;
                (rand_tri(&mut rng, d), rand_tri(&mut rng, d))
            })
            .collect();
        let report = near_subadditivity_check(&pairs).unwrap();
        assert_eq!(report.scalar_violations, 0);
        assert!(report.slope_at_zero_intercept < 10.0);
    }

    #[test]
    fn scalar_ball_count_at_ln_six() {
        let ball = scalar_height_ball(6);
        assert_eq!(ball.len(), 26);
        // the proof ceiling 2 e^{2k} at k = ln 6 is 72
        assert!(ball.len() as f64 <= 2.0 * 36.0);
        // all heights really are below the bound, exactly
        for q in &ball {
            assert!(height_product(q).unwrap() <= BigUint::from(6u32));
        }
    }

    #[test]
    fn gauge_enumeration_is_exact_and_monotone() {
        let id = TriMatrix::identity(2);
        let g1 = enumerate_gauge(GaugeBound::Real(1.0), &id).unwrap();
        let g2 = enumerate_gauge(GaugeBound::Real(2.0), &id).unwrap();
        // members are distinct and satisfy the defining inequality exactly
        let set1: BTreeSet<TriMatrix> = g1.iter().cloned().collect();
        let set2: BTreeSet<TriMatrix> = g2.iter().cloned().collect();
        assert_eq!(set1.len(), g1.len());
        assert_eq!(set2.len(), g2.len());
        for a in &g1 {
            let p = rational_length_product(&a.inverse());
            assert!(ln_biguint(&p.clone().max(BigUint::one())) <= 1.0 + 1e-12);
        }
        assert!(set1.is_subset(&set2));
        // counting route agrees with materialization
        assert_eq!(gauge_cardinality(GaugeBound::Real(1.0), &id).unwrap(), g1.len());
        assert_eq!(gauge_cardinality(GaugeBound::Real(2.0), &id).unwrap(), g2.len());
    }

    #[test]
    fn gauge_report_respects_the_ceiling() {
        let id = TriMatrix::identity(2);
        let mut last = 0usize;
        for k in 1..=2u32 {
            let report = gauge_report(GaugeBound::Real(k as f64), &id).unwrap();
            assert!(report.pass);
            assert!(report.cardinality >= last);
            last = report.cardinality;
        }
    }

    #[test]
    fn gauge_enumeration_with_shifted_center() {
        let h = TriMatrix::parse(&[&["2", "1"], &["0", "1"]]).unwrap();
        let ball = enumerate_gauge(GaugeBound::Real(1.0), &h).unwrap();
        assert!(!ball.is_empty());
        for a in &ball {
            let p = rational_length_product(&a.inverse().multiply(&h).unwrap());
            assert!(ln_biguint(&p.clone().max(BigUint::one())) <= 1.0 + 1e-12);
        }
        // the center scaled by anything in the ball keeps h itself a member:
        // a = h corresponds to u = Id, delta = Id
        assert!(ball.contains(&h));
    }

    #[test]
    fn enumeration_budget_is_enforced() {
        let id = TriMatrix::identity(3);
        assert!(matches!(
            enumerate_gauge(GaugeBound::Real(5.0), &id),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn gauge_index_examples() {
        assert_eq!(gauge_index(&TriMatrix::identity(2)), 0);
        let g = TriMatrix::diagonal(vec![rat("2"), rat("1")]).unwrap();
        assert_eq!(gauge_index(&g), 1);
    }

    #[test]
    fn qn_approximant_examples() {
        // all drifts zero
        let flat = StepMeasure::new(
            2,
            vec![(TriMatrix::identity(2), rat("1"))],
        )
        .unwrap();
        let profile = flat.drift_profile().unwrap();
        assert!(qn_approximant(&profile, 0, 10).unwrap().is_one());

        // Dirac at diag(1/2, 1): q_n^1 = 2^{-n}, exact cancellation
        let g = TriMatrix::diagonal(vec![rat("1/2"), rat("1")]).unwrap();
        let dirac = StepMeasure::new(2, vec![(g, rat("1"))]).unwrap();
        let profile = dirac.drift_profile().unwrap();
        let q5 = qn_approximant(&profile, 0, 5).unwrap();
        assert_eq!(q5, rat("1/32"));
        let mut traj = Trajectory::from_measure(&dirac, 0);
        let x = traj.diag_product(0, 5).unwrap();
        let combined = x.recip().unwrap() * q5;
        assert_eq!(height(&combined).unwrap(), 0.0);

        // the random example: q_n^1 = 2^{-[n/2]}
        let profile = affine_measure().drift_profile().unwrap();
        assert_eq!(qn_approximant(&profile, 0, 7).unwrap(), rat("1/8"));
        assert_eq!(qn_approximant(&profile, 0, 8).unwrap(), rat("1/16"));
    }

    #[test]
    fn qni_statistic_examples() {
        let g = TriMatrix::diagonal(vec![rat("1/2"), rat("1")]).unwrap();
        let dirac = StepMeasure::new(2, vec![(g, rat("1"))]).unwrap();
        let seeds: Vec<u64> = (0..10).collect();
        let rows = qni_statistic(&dirac, &seeds, &[10, 100]).unwrap();
        for row in rows.iter().filter(|r| r.index == 0) {
            assert_eq!(row.mean, 0.0);
        }

        let seeds: Vec<u64> = (0..40).collect();
        let rows = qni_statistic(&affine_measure(), &seeds, &[10, 100]).unwrap();
        let at = |n: usize| rows.iter().find(|r| r.index == 0 && r.n == n).unwrap().mean;
        assert!(at(100) < at(10), "{} !< {}", at(100), at(10));

        // zero drifts with unit-height diagonals: the approximants are 1 and
        // the statistic reduces to <(x_n)_{ii}^{-1}>/n, identically zero
        let u = TriMatrix::parse(&[&["1", "1"], &["0", "1"]]).unwrap();
        let v = TriMatrix::parse(&[&["-1", "1"], &["0", "-1"]]).unwrap();
        let unimodular = StepMeasure::new(2, vec![(u, rat("1/2")), (v, rat("1/2"))]).unwrap();
        let rows = qni_statistic(&unimodular, &seeds, &[10, 100]).unwrap();
        for row in &rows {
            assert_eq!(row.mean, 0.0);
        }
    }

    #[test]
    fn pi_np_examples() {
        // zero drifts and point cells give the identity
        let flat = StepMeasure::new(2, vec![(TriMatrix::identity(2), rat("1"))]).unwrap();
        let profile = flat.drift_profile().unwrap();
        let mut traj = Trajectory::from_measure(&flat, 0);
        let inf = assemble_boundary_point(&mut traj, &profile, Place::INFINITY, 20).unwrap();
        let mut points = BTreeMap::new();
        points.insert(Place::INFINITY, inf.point);
        let (h, warnings) = pi_np(&points, &profile, 5).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(h.diagonal(), &[rat("1"), rat("1")]);
        assert!(h.unipotent_entry(0, 1).value_at(Place::INFINITY).is_zero());

        // the Dirac example at n = 5
        let measure = dirac_half();
        let profile = measure.drift_profile().unwrap();
        let mut traj = Trajectory::from_measure(&measure, 0);
        let inf = assemble_boundary_point(&mut traj, &profile, Place::INFINITY, 40).unwrap();
        let mut traj = Trajectory::from_measure(&measure, 0);
        let two = assemble_boundary_point(
            &mut traj,
            &profile,
            Place::finite(2).unwrap(),
            40,
        )
        .unwrap();
        let mut points = BTreeMap::new();
        points.insert(Place::INFINITY, inf.point);
        points.insert(Place::finite(2).unwrap(), two.point);
        let (h, _) = pi_np(&points, &profile, 5).unwrap();
        assert_eq!(h.diagonal(), &[rat("1/32"), rat("1")]);
        let u = h.unipotent_entry(0, 1);
        assert!((u.value_at(Place::INFINITY).to_f64() - 2.0).abs() < 1e-9);
        assert!(u.value_at(Place::finite(2).unwrap()).is_zero());
    }

    #[test]
    fn estimgauge_dirac_vanishes() {
        let measure = dirac_half();
        let places: BTreeSet<Place> =
            [Place::INFINITY, Place::finite(2).unwrap()].into_iter().collect();
        let mut last = f64::INFINITY;
        for n in [25usize, 50, 100] {
            let report = estimgauge_statistic(&measure, &[0], n, &places).unwrap();
            let value = report.samples[0].value;
            assert_eq!(value, 0.0, "n = {n}");
            assert!(value <= last);
            last = value;
        }
    }

    #[test]
    fn estimgauge_contracts_on_the_random_example() {
        let measure = affine_measure();
        let places: BTreeSet<Place> =
            [Place::INFINITY, Place::finite(2).unwrap()].into_iter().collect();
        let seeds: Vec<u64> = (0..10).collect();
        let report = estimgauge_statistic(&measure, &seeds, 120, &places).unwrap();
        assert_eq!(report.samples.len(), 10);
        assert!(report.quantile(0.9) < 0.25, "q90 {}", report.quantile(0.9));
    }
}

#[cfg(test)]
mod place_drop_tests {
    use super::*;

    fn rat(s: &str) -> Rational {
        s.parse().unwrap()
    }

    #[test]
    fn dropping_a_contracting_place_inflates_the_statistic() {
        // reversed weights contract at p = 2, so the 2-adic boundary entry
        // carries real information; dropping it from the place set loses the
        // compensation and the statistic grows by roughly the moment there
        let a = TriMatrix::parse(&[&["1/2", "1"], &["0", "1"]]).unwrap();
        let b = TriMatrix::parse(&[&["2", "1"], &["0", "1"]]).unwrap();
        let measure = StepMeasure::new(2, vec![(a, rat("1/4")), (b, rat("3/4"))]).unwrap();
        let seeds: Vec<u64> = (0..10).collect();
        let n = 150;
        let full: BTreeSet<Place> = measure.relevant_places().unwrap();
        let without_two: BTreeSet<Place> = [Place::INFINITY].into_iter().collect();
        let with_p = estimgauge_statistic(&measure, &seeds, n, &full).unwrap();
        let dropped = estimgauge_statistic(&measure, &seeds, n, &without_two).unwrap();
        let k2 = crate::walk::moment_at(&measure, Place::finite(2).unwrap())
            .unwrap()
            .value;
        let gap = dropped.mean() - with_p.mean();
        assert!(
            gap > 0.2 * k2,
            "dropping p=2 changed the mean by {gap:.4}, expected order {k2:.4}"
        );
    }

    #[test]
    fn bit_size_guard_trips_on_small_limits() {
        let a = TriMatrix::parse(&[&["1/2", "1"], &["0", "1"]]).unwrap();
        let b = TriMatrix::parse(&[&["2", "1"], &["0", "1"]]).unwrap();
        let measure = StepMeasure::new(2, vec![(a, rat("3/4")), (b, rat("1/4"))]).unwrap();
        let profile = measure.drift_profile().unwrap();
        let basis = crate::triangular::SubspaceBasis::new(
            2,
            profile.j_set(Place::INFINITY, 2).unwrap(),
        )
        .unwrap();
        let mut traj = Trajectory::from_measure(&measure, 1);
        let err = crate::boundary::iterate_projective_guarded(
            &mut traj,
            &profile,
            &basis,
            &[rat("0"), rat("1")],
            Place::INFINITY,
            400,
            64,
        );
        assert!(matches!(err, Err(Error::Precondition(_))), "{err:?}");
    }
}

#[cfg(test)]
mod growth_tests {
    use super::*;
    use crate::testutil::rand_rational;
    use crate::walk::SplitMix64;

    #[test]
    fn height_decomposes_over_valuations_exactly() {
        // sum_p |v_p(q)| ln p = ln(r s) as the integer identity
        // prod_p p^{|v_p(q)|} = r s
        let mut rng = SplitMix64::new(13);
        for _ in 0..300 {
            let q = rand_rational(&mut rng, false);
            let mut recomposed = BigUint::one();
            for p in crate::rational::factor_support(&q).unwrap() {
                let v = crate::rational::valuation(&q, Place::finite(p).unwrap())
                    .unwrap()
                    .unsigned_abs();
                recomposed *= BigUint::from(p).pow(u32::try_from(v).unwrap());
            }
            assert_eq!(recomposed, height_product(&q).unwrap());
        }
    }

    #[test]
    fn log_cardinality_grows_at_most_linearly() {
        let id = TriMatrix::identity(2);
        let mut ratios = Vec::new();
        for k in 1..=3u32 {
            let card = gauge_cardinality(GaugeBound::Real(k as f64), &id).unwrap();
            ratios.push((card as f64).ln() / k as f64);
        }
        // ln Card / k stays bounded (here it even decreases)
        for w in ratios.windows(2) {
            assert!(w[1] <= w[0] * 1.05, "ratios {ratios:?}");
        }
    }
}

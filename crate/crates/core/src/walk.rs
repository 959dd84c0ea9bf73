//! Finitely supported step measures on the triangular group, seeded walk
//! trajectories, and exact drift profiles.
//!
//! Weights are exact rationals, so every drift and moment below is an exact
//! quantity; floats only appear when a value is reported. Sampling resolution
//! is fixed at 2^64: a 64-bit draw is read as the dyadic rational k/2^64 and
//! matched against exact cumulative weights, which makes trajectories a
//! deterministic function of (measure, seed).

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use num_bigint::{BigInt, BigUint};
use num_traits::{One, ToPrimitive};
use serde::Deserialize;

use crate::rational::{
    factor_support, ln_biguint, ln_rational_abs, valuation, Place, Rational,
};
use crate::triangular::TriMatrix;
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Deterministic RNG
// ---------------------------------------------------------------------------

/// SplitMix64: tiny, well-known, and fully specified, so sampled trajectories
/// stay byte-identical across platforms and releases.
#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
}

// ---------------------------------------------------------------------------
// Step measures
// ---------------------------------------------------------------------------

/// A finitely supported probability measure on the triangular group with
/// exact rational weights summing to one.
#[derive(Clone, Debug)]
pub struct StepMeasure {
    dim: usize,
    atoms: Vec<(TriMatrix, Rational)>,
    /// Cumulative sampling thresholds: atom `a` is drawn when the 64-bit
    /// draw `k` satisfies `k < thresholds[a]` and no earlier threshold does.
    thresholds: Vec<u128>,
}

impl StepMeasure {
    pub fn new(dim: usize, atoms: Vec<(TriMatrix, Rational)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidMeasure {
                atom: 0,
                reason: "measure needs at least one atom".into(),
            });
        }
        let two_64 = BigInt::from(1u128 << 64);
        let mut seen = BTreeSet::new();
        let mut total = Rational::zero();
        for (idx, (matrix, weight)) in atoms.iter().enumerate() {
            if matrix.dim() != dim {
                return Err(Error::InvalidMeasure {
                    atom: idx,
                    reason: format!("matrix dimension {} differs from {dim}", matrix.dim()),
                });
            }
            if weight.is_zero() || weight.is_negative() {
                return Err(Error::InvalidMeasure {
                    atom: idx,
                    reason: format!("weight {weight} is not positive"),
                });
            }
            // sampling contract: weights below 2^-64 would never be drawn
            if weight.numerator() * &two_64 < *weight.denominator() {
                return Err(Error::InvalidMeasure {
                    atom: idx,
                    reason: format!("weight {weight} is below the 2^-64 sampling resolution"),
                });
            }
            if !seen.insert(matrix.clone()) {
                return Err(Error::InvalidMeasure {
                    atom: idx,
                    reason: "duplicate atom".into(),
                });
            }
            total = total + weight.clone();
        }
        if !total.is_one() {
            return Err(Error::InvalidMeasure {
                atom: atoms.len() - 1,
                reason: format!("weights sum to {total}, expected 1"),
            });
        }
        let mut thresholds = Vec::with_capacity(atoms.len());
        let mut cumulative = Rational::zero();
        for (_, weight) in &atoms {
            cumulative = cumulative + weight.clone();
            let scaled = Rational::new(
                cumulative.numerator() * &two_64,
                cumulative.denominator().clone(),
            )
            .expect("positive denominator");
            let ceil = if scaled.is_integer() {
                scaled.numerator().clone()
            } else {
                let num_den = num_integer::Integer::div_floor(
                    scaled.numerator(),
                    scaled.denominator(),
                );
                num_den + BigInt::one()
            };
            thresholds.push(ceil.to_u128().expect("threshold fits 128 bits"));
        }
        *thresholds.last_mut().unwrap() = 1u128 << 64;
        Ok(StepMeasure {
            dim,
            atoms,
            thresholds,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atoms(&self) -> &[(TriMatrix, Rational)] {
        &self.atoms
    }

    pub fn atom_matrix(&self, idx: usize) -> &TriMatrix {
        &self.atoms[idx].0
    }

    fn sample_index(&self, draw: u64) -> usize {
        let k = draw as u128;
        self.thresholds
            .iter()
            .position(|&t| k < t)
            .expect("last threshold is 2^64")
    }

    /// All places where the walk can move: infinity plus every prime dividing
    /// a numerator or denominator of some atom entry.
    pub fn relevant_places(&self) -> Result<BTreeSet<Place>> {
        let mut places = BTreeSet::new();
        places.insert(Place::INFINITY);
        for (matrix, _) in &self.atoms {
            for i in 0..self.dim {
                for j in i..self.dim {
                    let entry = matrix.entry(i, j);
                    if entry.is_zero() {
                        continue;
                    }
                    for p in factor_support(entry)? {
                        places.insert(Place::finite(p).expect("factor support yields primes"));
                    }
                }
            }
        }
        Ok(places)
    }

    /// Exact per-place diagonal drifts.
    pub fn drift_profile(&self) -> Result<DriftProfile> {
        let d = self.dim;
        let mut prime_drifts: BTreeMap<u64, Vec<Rational>> = BTreeMap::new();
        for place in self.relevant_places()? {
            if let Some(p) = place.prime() {
                prime_drifts.insert(p, vec![Rational::zero(); d]);
            }
        }
        for (matrix, weight) in &self.atoms {
            for i in 0..d {
                let entry = matrix.entry(i, i);
                for (&p, drifts) in prime_drifts.iter_mut() {
                    let v = valuation(entry, Place::finite(p).unwrap())?;
                    drifts[i] = &drifts[i] - &(weight * &Rational::from_integer(v));
                }
            }
        }

        // common weight denominator D and integer multiplicities n_a
        let mut denom = BigInt::one();
        for (_, weight) in &self.atoms {
            denom = num_integer::Integer::lcm(&denom, weight.denominator());
        }
        let mut arch_products = vec![Rational::one(); d];
        for (matrix, weight) in &self.atoms {
            let mult = (weight.numerator() * &denom) / weight.denominator();
            let exp = i64::try_from(&mult)
                .ok()
                .and_then(|e| u32::try_from(e).ok())
                .ok_or_else(|| {
                    Error::Precondition(format!("weight multiplicity {mult} too large"))
                })?;
            for i in 0..d {
                let mag = matrix.entry(i, i).abs();
                arch_products[i] = arch_products[i].clone()
                    * Rational::new(
                        mag.numerator().pow(exp),
                        mag.denominator().pow(exp),
                    )?;
            }
        }
        let weight_denom = denom.magnitude().clone();
        let denom_f = biguint_to_f64(&weight_denom);
        let arch_floats = arch_products
            .iter()
            .map(|p| ln_rational_abs(p) / denom_f)
            .collect();
        Ok(DriftProfile {
            dim: d,
            prime_drifts,
            arch_products,
            weight_denom,
            arch_floats,
        })
    }
}

fn biguint_to_f64(n: &BigUint) -> f64 {
    n.to_f64().unwrap_or_else(|| ln_biguint(n).exp())
}

/// Measure description as it appears in experiment configs.
#[derive(Debug, Deserialize)]
pub struct MeasureConfig {
    pub dimension: usize,
    pub atoms: Vec<AtomConfig>,
}

#[derive(Debug, Deserialize)]
pub struct AtomConfig {
    pub matrix: Vec<Vec<Rational>>,
    pub weight: Rational,
}

impl MeasureConfig {
    pub fn build(&self) -> Result<StepMeasure> {
        let mut atoms = Vec::with_capacity(self.atoms.len());
        for (idx, atom) in self.atoms.iter().enumerate() {
            let matrix =
                TriMatrix::new(self.dimension, atom.matrix.clone()).map_err(|e| {
                    Error::InvalidMeasure {
                        atom: idx,
                        reason: e.to_string(),
                    }
                })?;
            atoms.push((matrix, atom.weight.clone()));
        }
        StepMeasure::new(self.dimension, atoms)
    }
}

// ---------------------------------------------------------------------------
// Drift profiles
// ---------------------------------------------------------------------------

/// Per-place diagonal drifts, stored so that every sign and order comparison
/// is exact. At a prime `p` the drift of index `i` is `coefficient * ln p`;
/// at infinity it is `ln(product_i) / weight_denom` where `product_i` is an
/// exact positive rational.
#[derive(Clone, Debug)]
pub struct DriftProfile {
    dim: usize,
    prime_drifts: BTreeMap<u64, Vec<Rational>>,
    arch_products: Vec<Rational>,
    weight_denom: BigUint,
    arch_floats: Vec<f64>,
}

/// A single drift (or sum of drifts) carried in exact form.
#[derive(Clone, Debug, PartialEq)]
pub enum DriftValue {
    Prime { prime: u64, coefficient: Rational },
    Arch { product: Rational, weight_denom: BigUint },
}

impl DriftValue {
    /// Exact comparison with zero.
    pub fn sign(&self) -> Ordering {
        match self {
            DriftValue::Prime { coefficient, .. } => {
                coefficient.partial_cmp(&Rational::zero()).unwrap()
            }
            DriftValue::Arch { product, .. } => crate::rational::ln_sign(product),
        }
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            DriftValue::Prime { prime, coefficient } => {
                coefficient.to_f64() * (*prime as f64).ln()
            }
            DriftValue::Arch {
                product,
                weight_denom,
            } => ln_rational_abs(product) / biguint_to_f64(weight_denom),
        }
    }
}

impl DriftProfile {
    /// Synthetic profile concentrated at one prime; the archimedean drifts
    /// are all zero. Used to drive the cell machinery with explicit data.
    pub fn from_prime_coefficients(prime: u64, coefficients: Vec<Rational>) -> Result<Self> {
        Place::finite(prime)?;
        let dim = coefficients.len();
        let mut prime_drifts = BTreeMap::new();
        prime_drifts.insert(prime, coefficients);
        Ok(DriftProfile {
            dim,
            prime_drifts,
            arch_products: vec![Rational::one(); dim],
            weight_denom: BigUint::one(),
            arch_floats: vec![0.0; dim],
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn covers(&self, place: Place) -> bool {
        match place.prime() {
            Some(p) => self.prime_drifts.contains_key(&p),
            None => true,
        }
    }

    pub fn places(&self) -> Vec<Place> {
        let mut out: Vec<Place> = self
            .prime_drifts
            .keys()
            .map(|&p| Place::finite(p).unwrap())
            .collect();
        out.push(Place::INFINITY);
        out
    }

    pub fn prime_coefficients(&self, prime: u64) -> Option<&[Rational]> {
        self.prime_drifts.get(&prime).map(|v| v.as_slice())
    }

    pub fn arch_products(&self) -> &[Rational] {
        &self.arch_products
    }

    pub fn weight_denom(&self) -> &BigUint {
        &self.weight_denom
    }

    pub fn value(&self, place: Place, i: usize) -> Result<DriftValue> {
        if i >= self.dim {
            return Err(Error::IndexOutOfRange(i));
        }
        match place.prime() {
            Some(p) => {
                let coeffs = self
                    .prime_drifts
                    .get(&p)
                    .ok_or(Error::PlaceNotCovered(place))?;
                Ok(DriftValue::Prime {
                    prime: p,
                    coefficient: coeffs[i].clone(),
                })
            }
            None => Ok(DriftValue::Arch {
                product: self.arch_products[i].clone(),
                weight_denom: self.weight_denom.clone(),
            }),
        }
    }

    /// Exact comparison of the drifts of indices `i` and `j` at one place.
    pub fn compare(&self, place: Place, i: usize, j: usize) -> Result<Ordering> {
        match place.prime() {
            Some(p) => {
                let coeffs = self
                    .prime_drifts
                    .get(&p)
                    .ok_or(Error::PlaceNotCovered(place))?;
                Ok(coeffs[i].partial_cmp(&coeffs[j]).unwrap())
            }
            None => {
                // same exponent denominator, so compare the products
                let ratio = &self.arch_products[i] / &self.arch_products[j];
                Ok(crate::rational::ln_sign(&ratio))
            }
        }
    }

    pub fn to_f64(&self, place: Place, i: usize) -> Result<f64> {
        Ok(self.value(place, i)?.to_f64())
    }

    /// 0-based defining index set at a place for the leading minor of size
    /// `sub_dim`: the indices whose drift is at least the drift of the last
    /// minor index.
    pub fn j_set(&self, place: Place, sub_dim: usize) -> Result<Vec<usize>> {
        if sub_dim == 0 || sub_dim > self.dim {
            return Err(Error::IndexOutOfRange(sub_dim));
        }
        let last = sub_dim - 1;
        let mut out = Vec::new();
        for i in 0..sub_dim {
            if self.compare(place, i, last)? != Ordering::Less {
                out.push(i);
            }
        }
        Ok(out)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let primes: serde_json::Map<String, serde_json::Value> = self
            .prime_drifts
            .iter()
            .map(|(p, coeffs)| {
                (
                    p.to_string(),
                    serde_json::Value::Array(
                        coeffs
                            .iter()
                            .map(|c| serde_json::Value::String(c.to_string()))
                            .collect(),
                    ),
                )
            })
            .collect();
        serde_json::json!({
            "dimension": self.dim,
            "prime_coefficients": primes,
            "arch": {
                "products": self.arch_products.iter().map(|p| p.to_string()).collect::<Vec<_>>(),
                "weight_denominator": self.weight_denom.to_string(),
                "phi": self.arch_floats,
            },
        })
    }
}

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

enum Source {
    Sampled { measure: StepMeasure, rng: SplitMix64 },
    Explicit { atoms: Vec<TriMatrix> },
}

/// A lazily extended walk `x_n = g_1 ... g_n`. Steps are atom indices into a
/// shared table; prefix products are cached on demand. A trajectory is
/// deterministic given `(measure, seed)`.
pub struct Trajectory {
    dim: usize,
    seed: u64,
    source: Source,
    steps: Vec<usize>,
    prefixes: Vec<TriMatrix>,
}

impl Trajectory {
    pub fn from_measure(measure: &StepMeasure, seed: u64) -> Self {
        Trajectory {
            dim: measure.dim(),
            seed,
            source: Source::Sampled {
                measure: measure.clone(),
                rng: SplitMix64::new(seed),
            },
            steps: Vec::new(),
            prefixes: Vec::new(),
        }
    }

    /// Deterministic replay of an explicit atom sequence.
    pub fn from_atoms(atoms: Vec<TriMatrix>) -> Result<Self> {
        let dim = atoms
            .first()
            .map(|a| a.dim())
            .ok_or_else(|| Error::Precondition("empty atom sequence".into()))?;
        if let Some(bad) = atoms.iter().find(|a| a.dim() != dim) {
            return Err(Error::DimensionMismatch {
                left: dim,
                right: bad.dim(),
            });
        }
        let steps = (0..atoms.len()).collect();
        Ok(Trajectory {
            dim,
            seed: 0,
            source: Source::Explicit { atoms },
            steps,
            prefixes: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Makes the first `n` steps available.
    pub fn ensure_steps(&mut self, n: usize) -> Result<()> {
        match &mut self.source {
            Source::Sampled { measure, rng } => {
                while self.steps.len() < n {
                    let draw = rng.next_u64();
                    self.steps.push(measure.sample_index(draw));
                }
                Ok(())
            }
            Source::Explicit { atoms } => {
                if n > atoms.len() {
                    Err(Error::SourceExhausted(atoms.len()))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Number of distinct atoms in the underlying table.
    pub fn atom_count(&self) -> usize {
        match &self.source {
            Source::Sampled { measure, .. } => measure.atoms().len(),
            Source::Explicit { atoms } => atoms.len(),
        }
    }

    /// The increment `g_n` (steps are 1-based).
    pub fn atom(&mut self, n: usize) -> Result<&TriMatrix> {
        if n == 0 {
            return Err(Error::IndexOutOfRange(0));
        }
        self.ensure_steps(n)?;
        Ok(match &self.source {
            Source::Sampled { measure, .. } => measure.atom_matrix(self.steps[n - 1]),
            Source::Explicit { atoms } => &atoms[n - 1],
        })
    }

    /// Atom index of step `n` under the sampling table (sampled walks only).
    pub fn atom_index(&mut self, n: usize) -> Result<usize> {
        if n == 0 {
            return Err(Error::IndexOutOfRange(0));
        }
        self.ensure_steps(n)?;
        Ok(self.steps[n - 1])
    }

    /// The product `x_n`; `x_0` is the identity. Prefix products are cached.
    pub fn product(&mut self, n: usize) -> Result<TriMatrix> {
        if n == 0 {
            return Ok(TriMatrix::identity(self.dim));
        }
        self.ensure_steps(n)?;
        while self.prefixes.len() < n {
            let k = self.prefixes.len() + 1;
            let prev = if k == 1 {
                TriMatrix::identity(self.dim)
            } else {
                self.prefixes[k - 2].clone()
            };
            let step = {
                let g = match &self.source {
                    Source::Sampled { measure, .. } => measure.atom_matrix(self.steps[k - 1]),
                    Source::Explicit { atoms } => &atoms[k - 1],
                };
                prev.multiply(g)?
            };
            self.prefixes.push(step);
        }
        Ok(self.prefixes[n - 1].clone())
    }

    /// Exact running sum of diagonal valuations `sum_k v_p((g_k)_{ii})`,
    /// which equals `v_p((x_n)_{ii})` without forming the product.
    pub fn diag_valuation_sum(&mut self, prime: u64, i: usize, n: usize) -> Result<i64> {
        let place = Place::finite(prime)?;
        self.ensure_steps(n)?;
        let mut acc = 0i64;
        for k in 1..=n {
            let entry = {
                let g = match &self.source {
                    Source::Sampled { measure, .. } => measure.atom_matrix(self.steps[k - 1]),
                    Source::Explicit { atoms } => &atoms[k - 1],
                };
                g.entry(i, i).clone()
            };
            acc += valuation(&entry, place)?;
        }
        Ok(acc)
    }

    /// Exact product of diagonal entries `(x_n)_{ii}` without the full matrix.
    pub fn diag_product(&mut self, i: usize, n: usize) -> Result<Rational> {
        self.ensure_steps(n)?;
        let mut acc = Rational::one();
        for k in 1..=n {
            let g = match &self.source {
                Source::Sampled { measure, .. } => measure.atom_matrix(self.steps[k - 1]),
                Source::Explicit { atoms } => &atoms[k - 1],
            };
            acc = acc * g.entry(i, i).clone();
        }
        Ok(acc)
    }

    /// Empirical frequency of each atom over the first `n` steps.
    pub fn empirical_frequencies(&mut self, n: usize) -> Result<Vec<f64>> {
        self.ensure_steps(n)?;
        let count = match &self.source {
            Source::Sampled { measure, .. } => measure.atoms().len(),
            Source::Explicit { atoms } => atoms.len(),
        };
        let mut freq = vec![0usize; count];
        for &s in &self.steps[..n] {
            freq[s] += 1;
        }
        Ok(freq.into_iter().map(|c| c as f64 / n as f64).collect())
    }
}

// ---------------------------------------------------------------------------
// Moments
// ---------------------------------------------------------------------------

/// Per-place first-moment data: `K_place = sum_{i<=j} E |ln |a_{ij}|_place|`,
/// zero entries contributing nothing.
#[derive(Clone, Debug)]
pub struct PlaceMoment {
    pub place: Place,
    /// Exact coefficient of `ln p` at a prime place.
    pub coefficient: Option<Rational>,
    pub value: f64,
}

#[derive(Clone, Debug)]
pub struct MomentReport {
    pub total: f64,
    pub per_place: Vec<PlaceMoment>,
}

/// The finite-support evaluation of the first-moment condition, with the
/// per-place breakdown reused by the gauge statistics.
pub fn moment(measure: &StepMeasure) -> Result<MomentReport> {
    let mut per_place = Vec::new();
    let mut total = 0.0;
    for place in measure.relevant_places()? {
        let m = moment_at(measure, place)?;
        total += m.value;
        per_place.push(m);
    }
    Ok(MomentReport { total, per_place })
}

/// `K_place` for an arbitrary place; identically zero off the relevant set.
pub fn moment_at(measure: &StepMeasure, place: Place) -> Result<PlaceMoment> {
    let d = measure.dim();
    match place.prime() {
        Some(_) => {
            let mut coefficient = Rational::zero();
            for (matrix, weight) in measure.atoms() {
                for i in 0..d {
                    for j in i..d {
                        let entry = matrix.entry(i, j);
                        if entry.is_zero() {
                            continue;
                        }
                        let v = valuation(entry, place)?.abs();
                        coefficient =
                            coefficient + weight * &Rational::from_integer(v);
                    }
                }
            }
            let p = place.prime().unwrap() as f64;
            let value = coefficient.to_f64() * p.ln();
            Ok(PlaceMoment {
                place,
                coefficient: Some(coefficient),
                value,
            })
        }
        None => {
            let mut value = 0.0;
            for (matrix, weight) in measure.atoms() {
                let w = weight.to_f64();
                for i in 0..d {
                    for j in i..d {
                        let entry = matrix.entry(i, j);
                        if entry.is_zero() {
                            continue;
                        }
                        value += w * ln_rational_abs(entry).abs();
                    }
                }
            }
            Ok(PlaceMoment {
                place,
                coefficient: None,
                value,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rat(s: &str) -> Rational {
        s.parse().unwrap()
    }

    pub(crate) fn affine_measure() -> StepMeasure {
        let a = TriMatrix::parse(&[&["1/2", "1"], &["0", "1"]]).unwrap();
        let b = TriMatrix::parse(&[&["2", "1"], &["0", "1"]]).unwrap();
        StepMeasure::new(2, vec![(a, rat("3/4")), (b, rat("1/4"))]).unwrap()
    }

    fn dirac(m: TriMatrix) -> StepMeasure {
        let d = m.dim();
        StepMeasure::new(d, vec![(m, rat("1"))]).unwrap()
    }

    #[test]
    fn measure_validation_names_the_atom() {
        let a = TriMatrix::parse(&[&["1/2", "1"], &["0", "1"]]).unwrap();
        let err = StepMeasure::new(2, vec![(a.clone(), rat("3/4")), (a, rat("1/4"))]);
        match err {
            Err(Error::InvalidMeasure { atom, .. }) => assert_eq!(atom, 1),
            other => panic!("expected duplicate-atom error, got {other:?}"),
        }
        let b = TriMatrix::parse(&[&["2", "1"], &["0", "1"]]).unwrap();
        let c = TriMatrix::parse(&[&["3", "1"], &["0", "1"]]).unwrap();
        assert!(matches!(
            StepMeasure::new(2, vec![(b, rat("3/4")), (c, rat("1/2"))]),
            Err(Error::InvalidMeasure { atom: 1, .. })
        ));
    }

    #[test]
    fn relevant_places_examples() {
        let unimodular = StepMeasure::new(
            2,
            vec![
                (TriMatrix::parse(&[&["1", "1"], &["0", "1"]]).unwrap(), rat("1/2")),
                (TriMatrix::parse(&[&["1", "-1"], &["0", "1"]]).unwrap(), rat("1/2")),
            ],
        )
        .unwrap();
        assert_eq!(
            unimodular.relevant_places().unwrap(),
            [Place::INFINITY].into_iter().collect()
        );

        let places = affine_measure().relevant_places().unwrap();
        assert_eq!(
            places,
            [Place::finite(2).unwrap(), Place::INFINITY].into_iter().collect()
        );

        let m = dirac(TriMatrix::parse(&[&["3", "1/10"], &["0", "7"]]).unwrap());
        let expected: BTreeSet<Place> = [2u64, 3, 5, 7]
            .into_iter()
            .map(|p| Place::finite(p).unwrap())
            .chain([Place::INFINITY])
            .collect();
        assert_eq!(m.relevant_places().unwrap(), expected);
    }

    #[test]
    fn drift_profile_examples() {
        // symmetric measure: all drifts vanish
        let sym = StepMeasure::new(
            2,
            vec![
                (TriMatrix::diagonal(vec![rat("1/2"), rat("1")]).unwrap(), rat("1/2")),
                (TriMatrix::diagonal(vec![rat("2"), rat("1")]).unwrap(), rat("1/2")),
            ],
        )
        .unwrap();
        let profile = sym.drift_profile().unwrap();
        assert!(profile.prime_coefficients(2).unwrap()[0].is_zero());
        assert_eq!(
            profile.compare(Place::INFINITY, 0, 1).unwrap(),
            Ordering::Equal
        );

        // the asymmetric two-atom measure
        let profile = affine_measure().drift_profile().unwrap();
        assert_eq!(profile.prime_coefficients(2).unwrap()[0], rat("1/2"));
        assert!(profile.prime_coefficients(2).unwrap()[1].is_zero());
        let phi_inf = profile.to_f64(Place::INFINITY, 0).unwrap();
        assert!((phi_inf + 0.5 * 2f64.ln()).abs() < 1e-12);
        assert_eq!(
            profile.compare(Place::INFINITY, 0, 1).unwrap(),
            Ordering::Less
        );

        // Dirac at the identity
        let profile = dirac(TriMatrix::identity(2)).drift_profile().unwrap();
        assert!(profile.places().len() == 1);
        assert_eq!(profile.compare(Place::INFINITY, 0, 1).unwrap(), Ordering::Equal);
    }

    #[test]
    fn j_set_follows_drift_comparisons() {
        let profile = affine_measure().drift_profile().unwrap();
        // at p=2 the first drift dominates: both indices qualify
        assert_eq!(profile.j_set(Place::finite(2).unwrap(), 2).unwrap(), vec![0, 1]);
        // at infinity the first drift is strictly below: only the last index
        assert_eq!(profile.j_set(Place::INFINITY, 2).unwrap(), vec![1]);
    }

    #[test]
    fn sampling_is_deterministic_and_reproducible() {
        let measure = affine_measure();
        let mut t1 = Trajectory::from_measure(&measure, 42);
        let mut t2 = Trajectory::from_measure(&measure, 42);
        let x1 = t1.product(50).unwrap();
        let x2 = t2.product(50).unwrap();
        assert_eq!(x1, x2);
        let mut t3 = Trajectory::from_measure(&measure, 43);
        assert_ne!(t3.product(50).unwrap(), x1);
    }

    #[test]
    fn dirac_trajectory_is_a_power() {
        let g = TriMatrix::parse(&[&["1/2", "1"], &["0", "1"]]).unwrap();
        let measure = dirac(g.clone());
        let mut t = Trajectory::from_measure(&measure, 7);
        let mut expected = TriMatrix::identity(2);
        for _ in 0..5 {
            expected = expected.multiply(&g).unwrap();
        }
        assert_eq!(t.product(5).unwrap(), expected);
    }

    #[test]
    fn empirical_frequencies_match_weights() {
        let measure = affine_measure();
        let mut t = Trajectory::from_measure(&measure, 2024);
        let freq = t.empirical_frequencies(100_000).unwrap();
        assert!((freq[0] - 0.75).abs() < 0.01, "freq {:?}", freq);
        assert!((freq[1] - 0.25).abs() < 0.01);
    }

    #[test]
    fn running_valuation_matches_product_valuation() {
        let measure = affine_measure();
        let mut t = Trajectory::from_measure(&measure, 5);
        let sum = t.diag_valuation_sum(2, 0, 200).unwrap();
        let x = t.product(200).unwrap();
        let direct = valuation(x.entry(0, 0), Place::finite(2).unwrap()).unwrap();
        assert_eq!(sum, direct);
    }

    #[test]
    fn moment_examples() {
        let id = dirac(TriMatrix::identity(2));
        assert_eq!(moment(&id).unwrap().total, 0.0);

        let m = dirac(TriMatrix::parse(&[&["1/2", "1"], &["0", "1"]]).unwrap());
        let report = moment(&m).unwrap();
        assert!((report.total - 2.0 * 2f64.ln()).abs() < 1e-12);
        for pm in &report.per_place {
            assert!((pm.value - 2f64.ln()).abs() < 1e-12);
        }

        // irrelevant places carry no moment
        let k5 = moment_at(&m, Place::finite(5).unwrap()).unwrap();
        assert_eq!(k5.value, 0.0);
        assert!(k5.coefficient.unwrap().is_zero());
    }

    #[test]
    fn explicit_trajectories_replay_and_exhaust() {
        let g = TriMatrix::parse(&[&["2", "1"], &["0", "1"]]).unwrap();
        let mut t = Trajectory::from_atoms(vec![g.clone(), g.clone()]).unwrap();
        assert_eq!(t.product(2).unwrap(), g.multiply(&g).unwrap());
        assert!(matches!(t.product(3), Err(Error::SourceExhausted(2))));
    }
}

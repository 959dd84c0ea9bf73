//! Exact entropy of finitely supported distributions on the triangular
//! group, exact convolution powers, entropy-rate sequences, and the
//! finite-entropy certificate through the gauge moment.
//!
//! The sequences here are the unconditional entropy rates of the
//! convolution powers. Rates conditioned on a boundary point are out of
//! reach of exact desk computation and are not estimated; reports label
//! the unconditional trend as such.

use std::collections::BTreeMap;

use crate::gauge::{gauge_index, gauge_report, GaugeBound, GaugeReport};
use crate::rational::{ln_rational_abs, Rational};
use crate::triangular::TriMatrix;
use crate::walk::StepMeasure;
use crate::{Error, Result};

/// Default ceiling on the number of atom pairs a convolution may expand.
pub const DEFAULT_SUPPORT_GUARD: usize = 500_000;

/// A finitely supported probability distribution with canonical keys, so
/// equal matrices merge and the representation is relabeling-invariant.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupDistribution {
    dim: usize,
    weights: BTreeMap<TriMatrix, Rational>,
}

impl GroupDistribution {
    pub fn new(dim: usize, atoms: Vec<(TriMatrix, Rational)>) -> Result<Self> {
        let mut weights: BTreeMap<TriMatrix, Rational> = BTreeMap::new();
        for (idx, (matrix, weight)) in atoms.into_iter().enumerate() {
            if matrix.dim() != dim {
                return Err(Error::InvalidMeasure {
                    atom: idx,
                    reason: "dimension mismatch".into(),
                });
            }
            if weight.is_zero() || weight.is_negative() {
                return Err(Error::InvalidMeasure {
                    atom: idx,
                    reason: "weight must be positive".into(),
                });
            }
            let slot = weights.entry(matrix).or_insert_with(Rational::zero);
            *slot = slot.clone() + weight;
        }
        let total = weights
            .values()
            .fold(Rational::zero(), |acc, w| acc + w.clone());
        if !total.is_one() {
            return Err(Error::InvalidMeasure {
                atom: 0,
                reason: format!("weights sum to {total}, expected 1"),
            });
        }
        Ok(GroupDistribution { dim, weights })
    }

    pub fn dirac(matrix: TriMatrix) -> Self {
        let dim = matrix.dim();
        let mut weights = BTreeMap::new();
        weights.insert(matrix, Rational::one());
        GroupDistribution { dim, weights }
    }

    pub fn from_measure(measure: &StepMeasure) -> Self {
        GroupDistribution::new(measure.dim(), measure.atoms().to_vec())
            .expect("step measures are valid distributions")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn support_size(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &BTreeMap<TriMatrix, Rational> {
        &self.weights
    }

    /// Shannon entropy `-sum mu(g) ln mu(g)`, from exact weights.
    pub fn entropy(&self) -> f64 {
        self.weights
            .values()
            .map(|w| {
                let lnw = ln_rational_abs(w);
                -w.to_f64() * lnw
            })
            .sum()
    }

    /// Pushforward of the product measure under multiplication, with exact
    /// weights and canonical merging. Refuses when the pair count exceeds
    /// the guard.
    pub fn convolve(&self, other: &GroupDistribution, guard: usize) -> Result<GroupDistribution> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                left: self.dim,
                right: other.dim,
            });
        }
        let required = self.support_size() * other.support_size();
        if required > guard {
            return Err(Error::SupportGuard { required, guard });
        }
        let mut weights: BTreeMap<TriMatrix, Rational> = BTreeMap::new();
        for (g, wg) in &self.weights {
            for (h, wh) in &other.weights {
                let product = g.multiply(h)?;
                let slot = weights.entry(product).or_insert_with(Rational::zero);
                *slot = slot.clone() + wg * wh;
            }
        }
        Ok(GroupDistribution {
            dim: self.dim,
            weights,
        })
    }

    /// The distribution as a step measure (weights already sum to one).
    pub fn to_measure(&self) -> Result<StepMeasure> {
        StepMeasure::new(
            self.dim,
            self.weights
                .iter()
                .map(|(m, w)| (m.clone(), w.clone()))
                .collect(),
        )
    }
}

#[derive(Clone, Debug)]
pub struct EntropyRow {
    pub n: usize,
    pub entropy: f64,
    /// `H(mu^{*(n+1)}) - H(mu^{*n})`, attached to level n once known.
    pub increment: Option<f64>,
    pub support_size: usize,
}

#[derive(Clone, Debug)]
pub struct EntropySequence {
    pub rows: Vec<EntropyRow>,
    /// Set when the support guard stopped the sequence before `n_max`.
    pub truncated: bool,
}

impl EntropySequence {
    pub fn csv(&self) -> String {
        let mut out = String::from("n,entropy,increment,support_size\n");
        for row in &self.rows {
            let inc = row
                .increment
                .map(|x| format!("{x:.12}"))
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{:.12},{},{}\n",
                row.n, row.entropy, inc, row.support_size
            ));
        }
        out
    }
}

/// Exact convolution powers with their entropies and increments, stopping
/// early (with a flag) when the guard would be exceeded.
pub fn entropy_sequence(
    measure: &StepMeasure,
    n_max: usize,
    guard: usize,
) -> Result<EntropySequence> {
    let base = GroupDistribution::from_measure(measure);
    let mut rows = Vec::new();
    let mut truncated = false;
    let mut current = base.clone();
    rows.push(EntropyRow {
        n: 1,
        entropy: current.entropy(),
        increment: None,
        support_size: current.support_size(),
    });
    for n in 2..=n_max {
        match current.convolve(&base, guard) {
            Ok(next) => {
                current = next;
                let h = current.entropy();
                let prev = rows.last_mut().expect("nonempty");
                prev.increment = Some(h - prev.entropy);
                rows.push(EntropyRow {
                    n,
                    entropy: h,
                    increment: None,
                    support_size: current.support_size(),
                });
            }
            Err(Error::SupportGuard { .. }) => {
                truncated = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(EntropySequence { rows, truncated })
}

/// Finite-entropy certificate: the first moment of the measure with respect
/// to the identity-centered gauge family, paired with the growth report of
/// the enumerable gauges.
#[derive(Clone, Debug)]
pub struct DerriennicReport {
    /// `|mu|_G = sum_g |g|_G mu(g)`, exact gauge indices with rational
    /// weights, reported as a float.
    pub gauge_moment: f64,
    pub per_atom: Vec<(u64, Rational)>,
    pub entropy: f64,
    /// Exponential-growth evidence from exhaustive enumeration, when the
    /// dimension is small enough to enumerate.
    pub growth: Vec<GaugeReport>,
    pub finite_entropy_certified: bool,
}

pub fn derriennic_check(measure: &StepMeasure) -> Result<DerriennicReport> {
    let mut per_atom = Vec::new();
    let mut moment = Rational::zero();
    for (matrix, weight) in measure.atoms() {
        let index = gauge_index(matrix);
        moment = moment + weight * &Rational::from_integer(index as i64);
        per_atom.push((index, weight.clone()));
    }
    let distribution = GroupDistribution::from_measure(measure);
    let growth = if measure.dim() <= 2 {
        let id = TriMatrix::identity(measure.dim());
        let mut reports = Vec::new();
        for k in 1..=2u32 {
            reports.push(gauge_report(GaugeBound::Real(k as f64), &id)?);
        }
        reports
    } else {
        Vec::new()
    };
    let growth_ok = growth.iter().all(|r| r.pass);
    Ok(DerriennicReport {
        gauge_moment: moment.to_f64(),
        per_atom,
        entropy: distribution.entropy(),
        growth,
        finite_entropy_certified: growth_ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rat(s: &str) -> Rational {
        s.parse().unwrap()
    }

    fn free_pair() -> StepMeasure {
        // affine maps x -> 2x + 1 and x -> 2x generate a free semigroup
        let a = TriMatrix::parse(&[&["2", "1"], &["0", "1"]]).unwrap();
        let b = TriMatrix::parse(&[&["2", "0"], &["0", "1"]]).unwrap();
        StepMeasure::new(2, vec![(a, rat("1/2")), (b, rat("1/2"))]).unwrap()
    }

    #[test]
    fn entropy_examples() {
        let dirac = GroupDistribution::dirac(TriMatrix::identity(2));
        assert_eq!(dirac.entropy(), 0.0);

        let uniform = GroupDistribution::from_measure(&free_pair());
        assert!((uniform.entropy() - 2f64.ln()).abs() < 1e-14);

        let a = TriMatrix::parse(&[&["2", "1"], &["0", "1"]]).unwrap();
        let b = TriMatrix::parse(&[&["2", "0"], &["0", "1"]]).unwrap();
        let skewed =
            GroupDistribution::new(2, vec![(a, rat("3/4")), (b, rat("1/4"))]).unwrap();
        let expected = 4f64.ln() - 0.75 * 3f64.ln();
        assert!((skewed.entropy() - expected).abs() < 1e-14);
    }

    #[test]
    fn convolution_examples() {
        let g = TriMatrix::parse(&[&["2", "1"], &["0", "1"]]).unwrap();
        let h = TriMatrix::parse(&[&["1/2", "3"], &["0", "1"]]).unwrap();
        let dg = GroupDistribution::dirac(g.clone());
        let dh = GroupDistribution::dirac(h.clone());
        let product = dg.convolve(&dh, 100).unwrap();
        assert_eq!(product, GroupDistribution::dirac(g.multiply(&h).unwrap()));

        // convolving with the identity Dirac is the identity operation
        let mu = GroupDistribution::from_measure(&free_pair());
        let id = GroupDistribution::dirac(TriMatrix::identity(2));
        assert_eq!(mu.convolve(&id, 100).unwrap(), mu);

        // the free pair doubles its support: 4 distinct products, uniform
        let square = mu.convolve(&mu, 100).unwrap();
        assert_eq!(square.support_size(), 4);
        assert!((square.entropy() - 4f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn convolution_is_associative() {
        let g = TriMatrix::parse(&[&["2", "1"], &["0", "1"]]).unwrap();
        let h = TriMatrix::parse(&[&["1/3", "0"], &["0", "1"]]).unwrap();
        let k = TriMatrix::parse(&[&["1", "5"], &["0", "2"]]).unwrap();
        let rho = GroupDistribution::new(2, vec![(g.clone(), rat("1/2")), (h.clone(), rat("1/2"))])
            .unwrap();
        let sigma =
            GroupDistribution::new(2, vec![(h, rat("1/3")), (k.clone(), rat("2/3"))]).unwrap();
        let tau = GroupDistribution::new(2, vec![(k, rat("1/4")), (g, rat("3/4"))]).unwrap();
        let left = rho
            .convolve(&sigma, 1000)
            .unwrap()
            .convolve(&tau, 1000)
            .unwrap();
        let right = rho
            .convolve(&sigma.convolve(&tau, 1000).unwrap(), 1000)
            .unwrap();
        assert_eq!(left, right);
    }

    #[test]
    fn entropy_is_relabeling_invariant() {
        let a = TriMatrix::parse(&[&["2", "1"], &["0", "1"]]).unwrap();
        let b = TriMatrix::parse(&[&["2", "0"], &["0", "1"]]).unwrap();
        let one = GroupDistribution::new(
            2,
            vec![(a.clone(), rat("1/3")), (b.clone(), rat("2/3"))],
        )
        .unwrap();
        let two = GroupDistribution::new(2, vec![(b, rat("2/3")), (a, rat("1/3"))]).unwrap();
        assert_eq!(one, two);
        assert_eq!(one.entropy(), two.entropy());
    }

    #[test]
    fn free_pair_entropy_grows_linearly() {
        let seq = entropy_sequence(&free_pair(), 10, DEFAULT_SUPPORT_GUARD).unwrap();
        assert!(!seq.truncated);
        for row in &seq.rows {
            assert_eq!(row.support_size, 1 << row.n);
            let expected = row.n as f64 * 2f64.ln();
            assert!((row.entropy - expected).abs() < 1e-9, "n={}", row.n);
        }
        // increments of a convolution sequence never increase
        let incs: Vec<f64> = seq.rows.iter().filter_map(|r| r.increment).collect();
        for w in incs.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
    }

    #[test]
    fn dirac_sequence_is_flat() {
        let g = TriMatrix::parse(&[&["2", "1"], &["0", "1"]]).unwrap();
        let dirac = StepMeasure::new(2, vec![(g, rat("1"))]).unwrap();
        let seq = entropy_sequence(&dirac, 6, DEFAULT_SUPPORT_GUARD).unwrap();
        for row in &seq.rows {
            assert_eq!(row.entropy, 0.0);
            assert_eq!(row.support_size, 1);
        }
    }

    #[test]
    fn support_guard_truncates_and_refuses() {
        let mu = GroupDistribution::from_measure(&free_pair());
        let big = mu.convolve(&mu, 100).unwrap();
        assert!(matches!(
            big.convolve(&big, 10),
            Err(Error::SupportGuard { required: 16, guard: 10 })
        ));
        let seq = entropy_sequence(&free_pair(), 20, 64).unwrap();
        assert!(seq.truncated);
        assert_eq!(seq.rows.last().unwrap().support_size, 64);
    }

    #[test]
    fn entropy_convolution_power_bound() {
        // H(mu^{*n}) <= n H(mu), with a strict drop once products collide
        let a = TriMatrix::parse(&[&["2", "1"], &["0", "1"]]).unwrap();
        let inv = a.inverse();
        let mu = StepMeasure::new(2, vec![(a, rat("1/2")), (inv, rat("1/2"))]).unwrap();
        let seq = entropy_sequence(&mu, 8, DEFAULT_SUPPORT_GUARD).unwrap();
        let h1 = seq.rows[0].entropy;
        for row in &seq.rows {
            assert!(row.entropy <= row.n as f64 * h1 + 1e-9);
        }
        // collisions (a * a^{-1} = id) keep the support strictly below 2^n
        assert!(seq.rows[2].support_size < 8);
    }

    #[test]
    fn derriennic_examples() {
        let id = StepMeasure::new(2, vec![(TriMatrix::identity(2), rat("1"))]).unwrap();
        let report = derriennic_check(&id).unwrap();
        assert_eq!(report.gauge_moment, 0.0);
        assert!(report.finite_entropy_certified);

        let g = TriMatrix::diagonal(vec![rat("2"), rat("1")]).unwrap();
        let dirac = StepMeasure::new(2, vec![(g, rat("1"))]).unwrap();
        let report = derriennic_check(&dirac).unwrap();
        assert_eq!(report.per_atom[0].0, 1);
        assert!((report.gauge_moment - 1.0).abs() < 1e-14);
        assert_eq!(report.entropy, 0.0);

        let report = derriennic_check(&free_pair()).unwrap();
        assert!(report.gauge_moment.is_finite());
        assert!((report.entropy - 2f64.ln()).abs() < 1e-14);
        assert!(!report.growth.is_empty());
    }

    #[test]
    fn convolution_drift_doubles() {
        // drifts of mu * mu are exactly twice the drifts of mu
        let a = TriMatrix::parse(&[&["1/2", "1"], &["0", "1"]]).unwrap();
        let b = TriMatrix::parse(&[&["2", "1"], &["0", "1"]]).unwrap();
        let mu = StepMeasure::new(2, vec![(a, rat("3/4")), (b, rat("1/4"))]).unwrap();
        let square = GroupDistribution::from_measure(&mu)
            .convolve(&GroupDistribution::from_measure(&mu), 100)
            .unwrap()
            .to_measure()
            .unwrap();
        let p1 = mu.drift_profile().unwrap();
        let p2 = square.drift_profile().unwrap();
        for i in 0..2 {
            let single = &p1.prime_coefficients(2).unwrap()[i];
            let double = &p2.prime_coefficients(2).unwrap()[i];
            assert_eq!(double.clone(), Rational::from_integer(2) * single);
        }
    }
}

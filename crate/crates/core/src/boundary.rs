//! Projective iteration on the sub-wedge spaces, certified Cauchy monitoring
//! at each place, assembly of the boundary point inside the predicted cell,
//! and the determinant-series cross check.
//!
//! All iteration is exact rational arithmetic; floats only appear in reported
//! rates. Certification is a stopping heuristic, not a proof: at a prime it
//! requires a window of successive differences with strictly increasing
//! valuations climbing at least half the predicted rate (the ultrametric then
//! bounds the distance to any later iterate; extending that bound to the
//! limit is the heuristic step, and results carry the flag). At infinity the
//! differences must at least halve across the window; the tail is then
//! extrapolated block by block at that ratio with a safety factor of two.

use std::collections::BTreeMap;

use crate::bruhat::{cell_of, CellDescriptor};
use crate::rational::{ln_rational_abs, valuation, Place, Rational};
use crate::triangular::{det_bareiss, mat_mul, mat_vec, wedge_rep, SubspaceBasis, TriMatrix};
use crate::walk::{DriftProfile, DriftValue, Trajectory};
use crate::{Error, Result};

/// Window length for the certification heuristic.
const WINDOW: usize = 10;

/// Default ceiling on the bit size of any iterated coordinate; contraction
/// keeps ordinary runs far below it, so tripping the guard signals a
/// pathological configuration rather than a long run.
pub const DEFAULT_MAX_ENTRY_BITS: u64 = 1 << 22;

/// Certified error information attached to an approximant.
#[derive(Clone, Debug, PartialEq)]
pub enum ErrorBound {
    /// At a prime p: claimed `v_p(limit - value) >= exponent`.
    PadicExponent(i64),
    /// At infinity: claimed `|limit - value| <= epsilon`.
    ArchEpsilon(Rational),
    /// The monitored differences vanished identically over a full window.
    Exact,
    /// Certification never triggered.
    Unbounded,
}

impl ErrorBound {
    /// Whether `self` is at least as tight as `other` (used to keep reported
    /// bounds monotone as iteration proceeds).
    fn improves(&self, other: &ErrorBound) -> bool {
        use ErrorBound::*;
        match (self, other) {
            (_, Unbounded) => true,
            (Exact, _) => true,
            (Unbounded, _) => false,
            (_, Exact) => false,
            (PadicExponent(a), PadicExponent(b)) => a >= b,
            (ArchEpsilon(a), ArchEpsilon(b)) => a <= b,
            _ => false,
        }
    }

    pub fn is_certified(&self) -> bool {
        !matches!(self, ErrorBound::Unbounded)
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            ErrorBound::PadicExponent(e) => serde_json::json!({ "exponent": e }),
            ErrorBound::ArchEpsilon(eps) => serde_json::json!({
                "epsilon": eps.to_string(),
                "epsilon_float": eps.to_f64(),
            }),
            ErrorBound::Exact => serde_json::json!("exact"),
            ErrorBound::Unbounded => serde_json::json!("unbounded"),
        }
    }
}

/// A per-place approximant with its certification state.
#[derive(Clone, Debug)]
pub struct PadicApproximant {
    pub place: Place,
    pub value: Rational,
    pub bound: ErrorBound,
    pub certified: bool,
    /// Step at which the reported (value, bound) pair was taken.
    pub step: usize,
}

/// One monitored coordinate of a projective iteration.
#[derive(Clone, Debug)]
pub struct EntryReport {
    pub index: usize,
    pub certified: bool,
    pub bound: ErrorBound,
    /// Fitted slope of `ln |delta_n|` per step over the second half of the
    /// run (at least [`WINDOW`] differences), if enough data was seen.
    pub observed_slope: Option<f64>,
    /// The slowest predicted reduced drift at this place.
    pub predicted_rate: f64,
}

/// Per-step difference data for convergence plots: at a prime the valuation
/// of the difference (`None` for an exact zero), at infinity its log-size.
#[derive(Clone, Debug)]
pub struct DeltaSample {
    pub n: usize,
    pub entry: usize,
    pub prime_valuation: Option<i64>,
    pub ln_abs: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct ConvergenceReport {
    pub place: Place,
    pub steps_used: usize,
    pub entries: Vec<EntryReport>,
    pub trace: Vec<DeltaSample>,
}

impl ConvergenceReport {
    pub fn csv(&self) -> String {
        let mut out = String::from("n,entry,prime_valuation,ln_abs\n");
        for s in &self.trace {
            let v = s
                .prime_valuation
                .map(|v| v.to_string())
                .unwrap_or_default();
            let l = s.ln_abs.map(|v| format!("{v:.6}")).unwrap_or_default();
            out.push_str(&format!("{},{},{},{}\n", s.n, s.entry + 1, v, l));
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Reduced drifts
// ---------------------------------------------------------------------------

/// The reduced drift of each non-terminal basis tuple: the drift sum over the
/// tuple minus the drift sum over the defining set. Every value is strictly
/// negative; a non-negative one means the basis was not built from the drift
/// order and is reported as an internal error.
pub fn reduced_drifts(
    profile: &DriftProfile,
    basis: &SubspaceBasis,
    place: Place,
) -> Result<Vec<DriftValue>> {
    let m = basis.size();
    let mut out = Vec::with_capacity(m.saturating_sub(1));
    for k in 0..m.saturating_sub(1) {
        let tuple = basis.tuple(k);
        let value = match place.prime() {
            Some(p) => {
                let coeffs = profile
                    .prime_coefficients(p)
                    .ok_or(Error::PlaceNotCovered(place))?;
                let mut acc = Rational::zero();
                for &j in tuple {
                    acc = acc + &coeffs[j];
                }
                for &j in basis.j_set() {
                    acc = acc - &coeffs[j];
                }
                DriftValue::Prime {
                    prime: p,
                    coefficient: acc,
                }
            }
            None => {
                let products = profile.arch_products();
                let mut acc = Rational::one();
                for &j in tuple {
                    acc = acc * &products[j];
                }
                for &j in basis.j_set() {
                    acc = acc / &products[j];
                }
                DriftValue::Arch {
                    product: acc,
                    weight_denom: profile.weight_denom().clone(),
                }
            }
        };
        if value.sign() != std::cmp::Ordering::Less {
            return Err(Error::Internal(format!(
                "reduced drift of tuple {k} is not negative; basis inconsistent with drift order"
            )));
        }
        out.push(value);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Certification machinery
// ---------------------------------------------------------------------------

struct Monitor {
    index: usize,
    place: Place,
    /// At a prime: required average valuation increment (half the predicted
    /// rate divided by ln p), exact.
    rate_threshold: Option<Rational>,
    window_steps: Vec<usize>,
    window_vals: Vec<Option<i64>>,
    window_mags: Vec<Rational>,
    reported: Option<(Rational, ErrorBound, usize)>,
    trace: Vec<DeltaSample>,
}

impl Monitor {
    fn new(index: usize, place: Place, rate_threshold: Option<Rational>) -> Self {
        Monitor {
            index,
            place,
            rate_threshold,
            window_steps: Vec::new(),
            window_vals: Vec::new(),
            window_mags: Vec::new(),
            reported: None,
            trace: Vec::new(),
        }
    }

    fn observe(&mut self, n: usize, delta: &Rational, value: &Rational) {
        match self.place.prime() {
            Some(p) => {
                let v = if delta.is_zero() {
                    None
                } else {
                    Some(valuation(delta, Place::finite(p).unwrap()).expect("nonzero"))
                };
                self.trace.push(DeltaSample {
                    n,
                    entry: self.index,
                    prime_valuation: v,
                    ln_abs: None,
                });
                self.window_steps.push(n);
                self.window_vals.push(v);
                if self.window_vals.len() > WINDOW {
                    self.window_steps.remove(0);
                    self.window_vals.remove(0);
                }
                if self.window_vals.len() == WINDOW {
                    self.try_certify_prime(value, n);
                }
            }
            None => {
                let mag = delta.abs();
                self.trace.push(DeltaSample {
                    n,
                    entry: self.index,
                    prime_valuation: None,
                    ln_abs: if mag.is_zero() {
                        None
                    } else {
                        Some(ln_rational_abs(&mag))
                    },
                });
                self.window_steps.push(n);
                self.window_mags.push(mag);
                if self.window_mags.len() > WINDOW {
                    self.window_steps.remove(0);
                    self.window_mags.remove(0);
                }
                if self.window_mags.len() == WINDOW {
                    self.try_certify_arch(value, n);
                }
            }
        }
    }

    fn accept(&mut self, value: &Rational, bound: ErrorBound, n: usize) {
        let better = match &self.reported {
            None => true,
            Some((_, prev, _)) => bound.improves(prev),
        };
        if better {
            self.reported = Some((value.clone(), bound, n));
        }
    }

    fn try_certify_prime(&mut self, value: &Rational, n: usize) {
        // exact zeros are infinite valuations; they may only close the window
        let numeric: Vec<(usize, i64)> = self
            .window_steps
            .iter()
            .zip(&self.window_vals)
            .filter_map(|(&s, &v)| v.map(|v| (s, v)))
            .collect();
        if let Some(first_none) = self.window_vals.iter().position(|v| v.is_none()) {
            if self.window_vals[first_none..].iter().any(|v| v.is_some()) {
                return;
            }
        }
        if numeric.is_empty() {
            self.accept(value, ErrorBound::Exact, n);
            return;
        }
        if !numeric.windows(2).all(|w| w[1].1 > w[0].1) {
            return;
        }
        if numeric.len() >= 2 {
            if let Some(threshold) = &self.rate_threshold {
                let (s0, v0) = numeric[0];
                let (s1, v1) = numeric[numeric.len() - 1];
                let avg = Rational::ratio(v1 - v0, (s1 - s0) as i64);
                if avg < *threshold {
                    return;
                }
            }
        }
        let exponent = numeric.last().unwrap().1;
        self.accept(value, ErrorBound::PadicExponent(exponent), n);
    }

    fn try_certify_arch(&mut self, value: &Rational, n: usize) {
        if self.window_mags.iter().all(|m| m.is_zero()) {
            self.accept(value, ErrorBound::Exact, n);
            return;
        }
        if self.window_mags.iter().any(|m| m.is_zero()) {
            return;
        }
        // trigger: total contraction by at least one half across the window.
        // Extrapolation: future blocks of the same length keep halving, each
        // step inside a block dominated by the window maximum, so the tail
        // sum is at most (W-1) * maxmag; doubled as the safety factor.
        let first = &self.window_mags[0];
        let last = self.window_mags.last().unwrap();
        if last * &Rational::from_integer(2) > *first {
            return;
        }
        let max_mag = self.window_mags.iter().max().cloned().unwrap();
        let steps = Rational::from_integer((self.window_mags.len() - 1) as i64);
        let eps = Rational::from_integer(2) * steps * max_mag;
        self.accept(value, ErrorBound::ArchEpsilon(eps), n);
    }

    fn observed_slope(&self) -> Option<f64> {
        // slope over the second half of the run, needing at least WINDOW
        // differences with usable magnitudes
        let usable: Vec<(usize, f64)> = self
            .trace
            .iter()
            .filter_map(|s| {
                let y = match (s.prime_valuation, s.ln_abs) {
                    (Some(v), _) => {
                        let p = self.place.prime().unwrap() as f64;
                        Some(-(v as f64) * p.ln())
                    }
                    (None, Some(l)) => Some(l),
                    _ => None,
                };
                y.map(|y| (s.n, y))
            })
            .collect();
        if usable.len() < WINDOW {
            return None;
        }
        let (n0, y0) = usable[usable.len() / 2];
        let (n1, y1) = *usable.last().unwrap();
        if n1 == n0 {
            return None;
        }
        Some((y1 - y0) / (n1 - n0) as f64)
    }

    fn finish(
        self,
        final_value: &Rational,
        steps: usize,
    ) -> (PadicApproximant, EntryReport, Vec<DeltaSample>) {
        let slope = self.observed_slope();
        let (value, bound, step) = match self.reported {
            Some((v, b, s)) => (v, b, s),
            None => (final_value.clone(), ErrorBound::Unbounded, steps),
        };
        let certified = bound.is_certified();
        (
            PadicApproximant {
                place: self.place,
                value,
                bound: bound.clone(),
                certified,
                step,
            },
            EntryReport {
                index: self.index,
                certified,
                bound,
                observed_slope: slope,
                predicted_rate: f64::NAN, // filled by the caller
            },
            self.trace,
        )
    }
}

// ---------------------------------------------------------------------------
// Projective iteration
// ---------------------------------------------------------------------------

/// Iterates the normalized wedge walk on the leading minor of size
/// `basis.dim()`, applied to the start vector `u0` (last coordinate 1), and
/// monitors the successive differences of every non-terminal coordinate at
/// `place`. Returns one approximant per coordinate (the last one is the
/// constant 1) and the convergence report. Reaching `max_steps` without
/// certification yields explicitly uncertified approximants, never a silent
/// success.
pub fn iterate_projective(
    traj: &mut Trajectory,
    profile: &DriftProfile,
    basis: &SubspaceBasis,
    u0: &[Rational],
    place: Place,
    max_steps: usize,
) -> Result<(Vec<PadicApproximant>, ConvergenceReport)> {
    iterate_projective_guarded(
        traj,
        profile,
        basis,
        u0,
        place,
        max_steps,
        DEFAULT_MAX_ENTRY_BITS,
    )
}

/// [`iterate_projective`] with an explicit bit-size guard: the run aborts
/// with a diagnostic once any iterated coordinate outgrows the limit.
#[allow(clippy::too_many_arguments)]
pub fn iterate_projective_guarded(
    traj: &mut Trajectory,
    profile: &DriftProfile,
    basis: &SubspaceBasis,
    u0: &[Rational],
    place: Place,
    max_steps: usize,
    max_entry_bits: u64,
) -> Result<(Vec<PadicApproximant>, ConvergenceReport)> {
    let m = basis.size();
    if u0.len() != m || !u0[m - 1].is_one() {
        return Err(Error::Precondition(
            "start vector must have last coordinate 1".into(),
        ));
    }
    if basis.dim() > traj.dim() {
        return Err(Error::DimensionMismatch {
            left: basis.dim(),
            right: traj.dim(),
        });
    }
    if m == 1 {
        // point fibre: nothing to iterate
        return Ok((
            vec![PadicApproximant {
                place,
                value: Rational::one(),
                bound: ErrorBound::Exact,
                certified: true,
                step: 0,
            }],
            ConvergenceReport {
                place,
                steps_used: 0,
                entries: Vec::new(),
                trace: Vec::new(),
            },
        ));
    }

    let reduced = reduced_drifts(profile, basis, place)?;
    // slowest contraction, exact at primes for the certification threshold
    let predicted_rate = reduced
        .iter()
        .map(|v| v.to_f64())
        .fold(f64::NEG_INFINITY, f64::max);
    let rate_threshold = place.prime().map(|_| {
        let slowest = reduced
            .iter()
            .map(|v| match v {
                DriftValue::Prime { coefficient, .. } => coefficient.clone(),
                DriftValue::Arch { .. } => unreachable!("prime place"),
            })
            .max()
            .expect("m > 1");
        -slowest / Rational::from_integer(2)
    });

    let mut monitors: Vec<Monitor> = (0..m - 1)
        .map(|k| Monitor::new(k, place, rate_threshold.clone()))
        .collect();

    let mut wedge_cache: Vec<Option<Vec<Vec<Rational>>>> = vec![None; traj.atom_count()];
    let mut product: Vec<Vec<Rational>> = (0..m)
        .map(|i| {
            (0..m)
                .map(|j| {
                    if i == j {
                        Rational::one()
                    } else {
                        Rational::zero()
                    }
                })
                .collect()
        })
        .collect();
    let mut current = u0.to_vec();

    for n in 1..=max_steps {
        let idx = traj.atom_index(n)?;
        if wedge_cache[idx].is_none() {
            let g = traj.atom(n)?.clone();
            let g_minor = g.minor(basis.dim())?;
            wedge_cache[idx] = Some(wedge_rep(&g_minor, basis)?.normalized());
        }
        let step = wedge_cache[idx].as_ref().unwrap();
        product = mat_mul(&product, step);
        let next = mat_vec(&product, u0);
        for monitor in monitors.iter_mut() {
            let k = monitor.index;
            let delta = &next[k] - &current[k];
            monitor.observe(n, &delta, &next[k]);
        }
        current = next;
        if n % 64 == 0 {
            let bits = current
                .iter()
                .map(|v| v.numerator().magnitude().bits() + v.denominator().magnitude().bits())
                .max()
                .unwrap_or(0);
            if bits > max_entry_bits {
                return Err(Error::Precondition(format!(
                    "bit-size guard tripped at step {n}: coordinate holds {bits} bits \
                     (limit {max_entry_bits}); the iteration is not contracting"
                )));
            }
        }
    }

    let mut approximants = Vec::with_capacity(m);
    let mut entries = Vec::with_capacity(m - 1);
    let mut trace = Vec::new();
    for monitor in monitors {
        let k = monitor.index;
        let (approx, mut report, mut t) = monitor.finish(&current[k], max_steps);
        report.predicted_rate = predicted_rate;
        trace.append(&mut t);
        entries.push(report);
        approximants.push(approx);
    }
    approximants.push(PadicApproximant {
        place,
        value: Rational::one(),
        bound: ErrorBound::Exact,
        certified: true,
        step: max_steps,
    });
    Ok((
        approximants,
        ConvergenceReport {
            place,
            steps_used: max_steps,
            entries,
            trace,
        },
    ))
}

// ---------------------------------------------------------------------------
// Boundary point assembly
// ---------------------------------------------------------------------------

/// A boundary point in the predicted cell: approximants at the free
/// positions, exact zeros elsewhere.
#[derive(Clone, Debug)]
pub struct BoundaryPoint {
    pub place: Place,
    pub cell: CellDescriptor,
    pub entries: BTreeMap<(usize, usize), PadicApproximant>,
    pub certified: bool,
    pub steps_used: usize,
}

impl BoundaryPoint {
    /// The unipotent matrix of approximant values.
    pub fn matrix(&self) -> TriMatrix {
        let d = self.cell.dim();
        let mut rows = TriMatrix::identity(d).rows();
        for (&(i, j), approx) in &self.entries {
            rows[i][j] = approx.value.clone();
        }
        TriMatrix::new(d, rows).expect("unipotent shape")
    }

    pub fn to_json(&self) -> serde_json::Value {
        let entries: serde_json::Map<String, serde_json::Value> = self
            .entries
            .iter()
            .map(|(&(i, j), a)| {
                (
                    format!("{},{}", i + 1, j + 1),
                    serde_json::json!({
                        "value": a.value.to_string(),
                        "value_float": a.value.to_f64(),
                        "bound": a.bound.to_json(),
                        "certified": a.certified,
                        "step": a.step,
                    }),
                )
            })
            .collect();
        serde_json::json!({
            "place": self.place.to_string(),
            "cell": serde_json::to_value(&self.cell).expect("cell serializes"),
            "entries": entries,
            "certified": self.certified,
            "steps_used": self.steps_used,
        })
    }
}

/// Outcome of one wedge-consistency recomputation.
#[derive(Clone, Debug)]
pub struct ConsistencyCheck {
    pub column: usize,
    pub ok: bool,
    pub detail: String,
}

#[derive(Debug)]
pub struct AssembledBoundary {
    pub point: BoundaryPoint,
    pub reports: Vec<ConvergenceReport>,
    pub consistency: Vec<ConsistencyCheck>,
}

/// Extracts the boundary point of a trajectory at one place: runs the minor
/// walk for every leading dimension, pulls each column out of the limit
/// wedge vector (the wedge system is triangular once the entries pinned to
/// zero by the cell are substituted), and cross-checks the assembled columns
/// by recomputing the wedge coordinates.
pub fn assemble_boundary_point(
    traj: &mut Trajectory,
    profile: &DriftProfile,
    place: Place,
    max_steps: usize,
) -> Result<AssembledBoundary> {
    let d = traj.dim();
    if profile.dim() != d {
        return Err(Error::DimensionMismatch {
            left: profile.dim(),
            right: d,
        });
    }
    if !profile.covers(place) {
        return Err(Error::PlaceNotCovered(place));
    }
    let cell = cell_of(profile, place)?;
    let mut entries = BTreeMap::new();
    let mut reports = Vec::new();
    let mut iterated: Vec<Option<(SubspaceBasis, Vec<PadicApproximant>)>> = vec![None; d + 1];

    for sub_dim in 2..=d {
        let j_set = profile.j_set(place, sub_dim)?;
        let basis = SubspaceBasis::new(sub_dim, j_set.clone())?;
        if basis.size() == 1 {
            continue; // column fully pinned by the cell
        }
        let m = basis.size();
        let mut u0 = vec![Rational::zero(); m];
        u0[m - 1] = Rational::one();
        let (approx, report) =
            iterate_projective(traj, profile, &basis, &u0, place, max_steps)?;
        let col = sub_dim - 1;
        let interior: Vec<usize> = j_set[..j_set.len() - 1].to_vec();
        for l in 0..col {
            if j_set.contains(&l) {
                continue; // pinned to zero by the cell
            }
            let mut tuple = interior.clone();
            tuple.push(l);
            tuple.sort_unstable();
            let k = basis.index_of(&tuple).ok_or_else(|| {
                Error::Internal("substituted tuple missing from the sub-wedge basis".into())
            })?;
            let sign_flips = interior.iter().filter(|&&i| i > l).count();
            let mut a = approx[k].clone();
            if sign_flips % 2 == 1 {
                a.value = -a.value;
            }
            debug_assert!(cell.free_positions.contains(&(l, col)));
            entries.insert((l, col), a);
        }
        iterated[sub_dim] = Some((basis, approx));
        reports.push(report);
    }

    let certified = entries.values().all(|a| a.certified);
    let point = BoundaryPoint {
        place,
        cell,
        entries,
        certified,
        steps_used: max_steps,
    };

    let consistency = wedge_consistency(&point, &iterated);
    Ok(AssembledBoundary {
        point,
        reports,
        consistency,
    })
}

/// Recomputes each iterated wedge coordinate from the assembled columns and
/// compares against the iterated value within a combined certified bound.
/// The bound is crude but valid: every term of the determinant difference
/// carries at least one perturbed entry.
fn wedge_consistency(
    point: &BoundaryPoint,
    iterated: &[Option<(SubspaceBasis, Vec<PadicApproximant>)>],
) -> Vec<ConsistencyCheck> {
    let z = point.matrix();
    let mut out = Vec::new();
    for (sub_dim, slot) in iterated.iter().enumerate() {
        let Some((basis, approx)) = slot else {
            continue;
        };
        let r = basis.rank();
        let mut ok = true;
        let mut detail = String::from("within combined bound");
        'coords: for (k, tuple) in basis.tuples().iter().enumerate() {
            let recomputed = det_bareiss(&crate::triangular::submatrix(
                &z,
                tuple,
                basis.j_set(),
            ));
            let diff = &recomputed - &approx[k].value;
            // bounds of every assembled entry in the submatrix plus the
            // iterated coordinate itself
            let mut bounds: Vec<&ErrorBound> = vec![&approx[k].bound];
            let mut values: Vec<Rational> = Vec::new();
            for &row in tuple.iter() {
                for &col in basis.j_set() {
                    values.push(z.entry(row, col).clone());
                    if let Some(a) = point.entries.get(&(row, col)) {
                        bounds.push(&a.bound);
                    }
                }
            }
            if bounds.iter().any(|b| !b.is_certified()) {
                ok = false;
                detail = "uncertified sub-limit".into();
                break 'coords;
            }
            match point.place.prime() {
                Some(p) => {
                    let place = Place::finite(p).unwrap();
                    let e_min = bounds
                        .iter()
                        .filter_map(|b| match b {
                            ErrorBound::PadicExponent(e) => Some(*e),
                            _ => None,
                        })
                        .min();
                    match e_min {
                        None => {
                            // everything exact: demand exact agreement
                            if !diff.is_zero() {
                                ok = false;
                                detail = format!("column {sub_dim}: exact mismatch");
                                break 'coords;
                            }
                        }
                        Some(e_min) => {
                            let v_floor = values
                                .iter()
                                .filter(|v| !v.is_zero())
                                .map(|v| valuation(v, place).expect("nonzero"))
                                .min()
                                .unwrap_or(0)
                                .min(0)
                                .min(e_min);
                            let tol = e_min + (r as i64 - 1) * v_floor;
                            if !diff.is_zero() && valuation(&diff, place).expect("nonzero") < tol {
                                ok = false;
                                detail = format!(
                                    "column {sub_dim}, tuple {k}: valuation {} below tolerance {tol}",
                                    valuation(&diff, place).unwrap()
                                );
                                break 'coords;
                            }
                        }
                    }
                }
                None => {
                    let eps_sum = bounds.iter().fold(Rational::zero(), |acc, b| match b {
                        ErrorBound::ArchEpsilon(e) => acc + e,
                        _ => acc,
                    });
                    if eps_sum.is_zero() {
                        if !diff.is_zero() {
                            ok = false;
                            detail = format!("column {sub_dim}: exact mismatch");
                            break 'coords;
                        }
                        continue;
                    }
                    let m_max = values
                        .iter()
                        .map(|v| v.abs())
                        .fold(Rational::one(), |acc, v| if v > acc { v } else { acc });
                    let mut factor = Rational::from_integer(1);
                    for i in 1..=r as i64 {
                        factor = factor * Rational::from_integer(2 * i);
                    }
                    let mut m_pow = Rational::one();
                    for _ in 1..r {
                        m_pow = m_pow * &m_max;
                    }
                    let tol = factor * m_pow * eps_sum;
                    if diff.abs() > tol {
                        ok = false;
                        detail = format!(
                            "column {sub_dim}, tuple {k}: |diff|={:.3e} above tolerance {:.3e}",
                            diff.abs().to_f64(),
                            tol.to_f64()
                        );
                        break 'coords;
                    }
                }
            }
        }
        out.push(ConsistencyCheck {
            column: sub_dim,
            ok,
            detail,
        });
    }
    out
}

// ---------------------------------------------------------------------------
// Determinant series cross check
// ---------------------------------------------------------------------------

/// Indices `l` outside the defining set at full dimension, i.e. the rows of
/// the last column reachable by the determinant series.
pub fn valid_series_indices(profile: &DriftProfile, place: Place) -> Result<Vec<usize>> {
    let d = profile.dim();
    let j_set = profile.j_set(place, d)?;
    Ok((0..d - 1).filter(|l| !j_set.contains(l)).collect())
}

/// The determinant series for the entry `(l, d)` of the boundary point,
/// computed directly on the walk matrices: sign times the minor over rows
/// `{l} ∪ (J \ {d})` and columns `J`, divided by the diagonal product over
/// `J`. This is an evaluation route independent of the wedge iteration.
pub fn snl_series(
    traj: &mut Trajectory,
    profile: &DriftProfile,
    place: Place,
    l: usize,
    max_steps: usize,
) -> Result<Vec<Rational>> {
    let d = traj.dim();
    let j_set = profile.j_set(place, d)?;
    if j_set.contains(&l) {
        return Err(Error::Precondition(format!(
            "index {} lies in the defining set; the series is undefined",
            l + 1
        )));
    }
    if l >= d {
        return Err(Error::IndexOutOfRange(l));
    }
    let interior: Vec<usize> = j_set[..j_set.len() - 1].to_vec();
    let mut rows = interior.clone();
    rows.push(l);
    rows.sort_unstable();
    let sign_flips = interior.iter().filter(|&&i| i > l).count();
    let mut out = Vec::with_capacity(max_steps);
    for n in 1..=max_steps {
        let x = traj.product(n)?;
        let det = det_bareiss(&crate::triangular::submatrix(&x, &rows, &j_set));
        let denom = j_set
            .iter()
            .fold(Rational::one(), |acc, &j| acc * x.entry(j, j));
        let mut s = det / denom;
        if sign_flips % 2 == 1 {
            s = -s;
        }
        out.push(s);
    }
    Ok(out)
}

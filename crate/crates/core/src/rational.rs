//! Exact rational scalars, places of the rationals, valuations and log-norms.
//!
//! A place is either a prime number `p` (carrying the p-adic norm
//! `|q|_p = p^{-v_p(q)}`) or the archimedean symbol `inf` (the usual absolute
//! value). Log-norms are kept symbolic: at a prime the value is an exact
//! rational multiple of `ln p`, at infinity the rational whose log is taken
//! is kept alongside a float cache. Comparisons that drive discrete decisions
//! never leave exact arithmetic; every comparison happens within a single
//! place, so no cross-place float fallback is ever exercised.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::str::FromStr;
use std::sync::Mutex;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

use crate::{Error, Result};

/// Trial division gives up once candidate divisors pass this bound; a
/// remaining cofactor below the square of the bound is necessarily prime.
const TRIAL_LIMIT: u64 = 1_000_000;

// ---------------------------------------------------------------------------
// Rational
// ---------------------------------------------------------------------------

/// Arbitrary-precision rational in canonical form: positive denominator,
/// coprime numerator and denominator, zero stored as 0/1. Canonicalization
/// is enforced by every constructor.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rational(BigRational);

impl Rational {
    pub fn new(numerator: BigInt, denominator: BigInt) -> Result<Self> {
        if denominator.is_zero() {
            return Err(Error::ZeroDenominator);
        }
        Ok(Rational(BigRational::new(numerator, denominator)))
    }

    pub fn from_integer(n: i64) -> Self {
        Rational(BigRational::from_integer(BigInt::from(n)))
    }

    /// Shorthand for small literal fractions; panics on zero denominator.
    pub fn ratio(num: i64, den: i64) -> Self {
        assert!(den != 0, "zero denominator in rational literal");
        Rational(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    pub fn zero() -> Self {
        Rational(BigRational::zero())
    }

    pub fn one() -> Self {
        Rational(BigRational::one())
    }

    pub fn numerator(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denominator(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.0.is_one()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn is_integer(&self) -> bool {
        self.0.is_integer()
    }

    pub fn abs(&self) -> Rational {
        Rational(self.0.abs())
    }

    pub fn recip(&self) -> Result<Rational> {
        if self.is_zero() {
            return Err(Error::ZeroDenominator);
        }
        Ok(Rational(self.0.recip()))
    }

    /// Integer part with the signed convention: floor for non-negative
    /// arguments, the negated floor of the negation otherwise (truncation
    /// toward zero).
    pub fn signed_integer_part(&self) -> BigInt {
        self.0.trunc().to_integer()
    }

    pub fn pow_i64(&self, exp: i64) -> Result<Rational> {
        if self.is_zero() && exp < 0 {
            return Err(Error::ZeroDenominator);
        }
        let mag = u32::try_from(exp.unsigned_abs())
            .map_err(|_| Error::Precondition(format!("exponent {exp} too large")))?;
        let num = self.numerator().pow(mag);
        let den = self.denominator().pow(mag);
        let r = Rational(BigRational::new(num, den));
        if exp < 0 {
            r.recip()
        } else {
            Ok(r)
        }
    }

    /// Best-effort float value, for reporting only.
    pub fn to_f64(&self) -> f64 {
        match self.0.to_f64() {
            Some(x) if x.is_finite() => x,
            _ => {
                if self.is_zero() {
                    0.0
                } else {
                    let sign = if self.is_negative() { -1.0 } else { 1.0 };
                    sign * ln_rational_abs(self).exp()
                }
            }
        }
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_integer() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl fmt::Debug for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl FromStr for Rational {
    type Err = Error;

    /// Parses `"n"` or `"n/d"` with an optional leading sign. A zero
    /// denominator is rejected; non-reduced input is canonicalized.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let bad = || Error::BadRationalLiteral(s.to_owned());
        let (num_str, den_str) = match t.split_once('/') {
            Some((n, d)) => (n.trim(), Some(d.trim())),
            None => (t, None),
        };
        let num = BigInt::from_str(num_str).map_err(|_| bad())?;
        let den = match den_str {
            Some(d) => BigInt::from_str(d).map_err(|_| bad())?,
            None => BigInt::one(),
        };
        if den.is_zero() {
            return Err(Error::ZeroDenominator);
        }
        Ok(Rational(BigRational::new(num, den)))
    }
}

impl Serialize for Rational {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Rational {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(de::Error::custom)
    }
}

macro_rules! rational_binop {
    ($trait:ident, $method:ident) => {
        impl $trait for &Rational {
            type Output = Rational;
            fn $method(self, rhs: &Rational) -> Rational {
                Rational((&self.0).$method(&rhs.0))
            }
        }
        impl $trait for Rational {
            type Output = Rational;
            fn $method(self, rhs: Rational) -> Rational {
                Rational(self.0.$method(rhs.0))
            }
        }
        impl $trait<&Rational> for Rational {
            type Output = Rational;
            fn $method(self, rhs: &Rational) -> Rational {
                Rational(self.0.$method(&rhs.0))
            }
        }
        impl $trait<Rational> for &Rational {
            type Output = Rational;
            fn $method(self, rhs: Rational) -> Rational {
                Rational((&self.0).$method(rhs.0))
            }
        }
    };
}

rational_binop!(Add, add);
rational_binop!(Sub, sub);
rational_binop!(Mul, mul);
rational_binop!(Div, div);

impl Neg for &Rational {
    type Output = Rational;
    fn neg(self) -> Rational {
        Rational(-&self.0)
    }
}

impl Neg for Rational {
    type Output = Rational;
    fn neg(self) -> Rational {
        Rational(-self.0)
    }
}

impl From<i64> for Rational {
    fn from(n: i64) -> Self {
        Rational::from_integer(n)
    }
}

// ---------------------------------------------------------------------------
// Places
// ---------------------------------------------------------------------------

/// A place of the rationals: a verified prime, or the archimedean place.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Place(PlaceRepr);

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
enum PlaceRepr {
    Prime(u64),
    Infinity,
}

impl Place {
    pub const INFINITY: Place = Place(PlaceRepr::Infinity);

    pub fn finite(p: u64) -> Result<Place> {
        if is_prime_u64(p) {
            Ok(Place(PlaceRepr::Prime(p)))
        } else {
            Err(Error::NotPrime(p))
        }
    }

    pub fn prime(&self) -> Option<u64> {
        match self.0 {
            PlaceRepr::Prime(p) => Some(p),
            PlaceRepr::Infinity => None,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self.0, PlaceRepr::Infinity)
    }
}

impl fmt::Display for Place {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            PlaceRepr::Prime(p) => write!(f, "{p}"),
            PlaceRepr::Infinity => write!(f, "inf"),
        }
    }
}

impl FromStr for Place {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "infinity" | "oo" => Ok(Place::INFINITY),
            t => {
                let p: u64 = t
                    .parse()
                    .map_err(|_| Error::BadRationalLiteral(s.to_owned()))?;
                Place::finite(p)
            }
        }
    }
}

impl Serialize for Place {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Place {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(de::Error::custom)
    }
}

// ---------------------------------------------------------------------------
// Log-norms
// ---------------------------------------------------------------------------

/// The value `ln |q|_place`, kept exact. At a prime `p` the value is
/// `coefficient * ln p` with `coefficient = -v_p(q)` for a single scalar
/// (rational coefficients arise from measure averaging). At infinity the
/// rational magnitude `|q|` is stored together with a float cache of its log.
#[derive(Clone, Debug, PartialEq)]
pub enum LogNorm {
    Prime { prime: u64, coefficient: Rational },
    Arch { magnitude: Rational, approx: f64 },
}

impl LogNorm {
    pub fn place(&self) -> Place {
        match self {
            LogNorm::Prime { prime, .. } => Place(PlaceRepr::Prime(*prime)),
            LogNorm::Arch { .. } => Place::INFINITY,
        }
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            LogNorm::Prime { prime, coefficient } => {
                coefficient.to_f64() * (*prime as f64).ln()
            }
            LogNorm::Arch { approx, .. } => *approx,
        }
    }
}

// ---------------------------------------------------------------------------
// Valuations, norms, product formula
// ---------------------------------------------------------------------------

/// p-adic valuation `v_p(q) = v_p(numerator) - v_p(denominator)`.
pub fn valuation(q: &Rational, place: Place) -> Result<i64> {
    if q.is_zero() {
        return Err(Error::ZeroValuation);
    }
    let p = place
        .prime()
        .ok_or_else(|| Error::Precondition("valuation needs a finite place".into()))?;
    let num = biguint_valuation(q.numerator().magnitude(), p);
    let den = biguint_valuation(q.denominator().magnitude(), p);
    Ok(num as i64 - den as i64)
}

/// `ln |q|_place` as a symbolic [`LogNorm`].
pub fn norm_log(q: &Rational, place: Place) -> Result<LogNorm> {
    if q.is_zero() {
        return Err(Error::ZeroValuation);
    }
    match place.prime() {
        Some(p) => {
            let v = valuation(q, place)?;
            Ok(LogNorm::Prime {
                prime: p,
                coefficient: Rational::from_integer(-v),
            })
        }
        None => {
            let magnitude = q.abs();
            let approx = ln_rational_abs(q);
            Ok(LogNorm::Arch { magnitude, approx })
        }
    }
}

/// Checks `prod_p |q|_p * |q|_inf = 1` as an exact identity: the numerator
/// and denominator are factored completely and recomposed, so the check never
/// touches a float.
pub fn product_formula_check(q: &Rational) -> Result<bool> {
    if q.is_zero() {
        return Err(Error::ZeroValuation);
    }
    let num_factors = factor_biguint(q.numerator().magnitude())?;
    let den_factors = factor_biguint(q.denominator().magnitude())?;
    Ok(recompose(&num_factors) == *q.numerator().magnitude()
        && recompose(&den_factors) == *q.denominator().magnitude())
}

/// The set of primes `p` with `v_p(q) != 0`.
pub fn factor_support(q: &Rational) -> Result<BTreeSet<u64>> {
    if q.is_zero() {
        return Err(Error::ZeroValuation);
    }
    let mut support: BTreeSet<u64> = factor_biguint(q.numerator().magnitude())?
        .into_keys()
        .collect();
    support.extend(factor_biguint(q.denominator().magnitude())?.into_keys());
    Ok(support)
}

fn recompose(factors: &BTreeMap<u64, u64>) -> BigUint {
    let mut acc = BigUint::one();
    for (&p, &e) in factors {
        let exp = u32::try_from(e).expect("desk-scale exponent");
        acc *= BigUint::from(p).pow(exp);
    }
    acc
}

// ---------------------------------------------------------------------------
// Integer machinery: valuations, factorization, primality, big logs
// ---------------------------------------------------------------------------

/// `v_p(n)` for nonzero `n`, via repeated division by doubling powers of `p`.
pub fn biguint_valuation(n: &BigUint, p: u64) -> u64 {
    assert!(!n.is_zero(), "valuation of zero undefined");
    if p == 2 {
        return n.trailing_zeros().unwrap_or(0);
    }
    let mut valuation = 0u64;
    let mut current = n.clone();
    let p_big = BigUint::from(p);
    loop {
        let (quot, rem) = num_integer::Integer::div_rem(&current, &p_big);
        if !rem.is_zero() {
            return valuation;
        }
        valuation += 1;
        current = quot;
        // exhaust doubling powers while they still divide
        let mut power = &p_big * &p_big;
        let mut delta = 2u64;
        loop {
            let (q2, r2) = num_integer::Integer::div_rem(&current, &power);
            if !r2.is_zero() {
                break;
            }
            current = q2;
            valuation += delta;
            power = &power * &power;
            delta *= 2;
        }
    }
}

static PRIME_CACHE: Mutex<Vec<u64>> = Mutex::new(Vec::new());

/// The `idx`-th prime (0-based), from an incrementally extended sieve.
pub fn nth_prime(idx: usize) -> u64 {
    let mut cache = PRIME_CACHE.lock().expect("prime cache poisoned");
    if cache.is_empty() {
        cache.extend_from_slice(&[2, 3, 5, 7, 11, 13]);
    }
    while cache.len() <= idx {
        let mut candidate = cache.last().unwrap() + 2;
        'search: loop {
            for &p in cache.iter() {
                if p * p > candidate {
                    break 'search;
                }
                if candidate.is_multiple_of(p) {
                    candidate += 2;
                    continue 'search;
                }
            }
            break;
        }
        cache.push(candidate);
    }
    cache[idx]
}

/// Complete factorization by trial division over the prime sieve. Fails with
/// [`Error::FactorBudget`] if a cofactor survives past the trial limit and is
/// too large to be certified prime by exclusion.
pub fn factor_biguint(n: &BigUint) -> Result<BTreeMap<u64, u64>> {
    let mut factors = BTreeMap::new();
    if n.is_zero() {
        return Err(Error::ZeroValuation);
    }
    let mut rest = n.clone();
    let two = biguint_valuation(&rest, 2);
    if two > 0 {
        factors.insert(2, two);
        rest >>= two;
    }
    let mut idx = 1usize;
    let limit_sq = BigUint::from(TRIAL_LIMIT) * BigUint::from(TRIAL_LIMIT);
    while !rest.is_one() {
        let p = nth_prime(idx);
        if p > TRIAL_LIMIT {
            return Err(Error::FactorBudget(rest.to_string()));
        }
        let p_big = BigUint::from(p);
        if &p_big * &p_big > rest {
            // remaining cofactor is prime
            let p_rest = rest
                .to_u64()
                .ok_or_else(|| Error::FactorBudget(rest.to_string()))?;
            *factors.entry(p_rest).or_insert(0) += 1;
            break;
        }
        let v = biguint_valuation(&rest, p);
        if v > 0 {
            factors.insert(p, v);
            rest /= p_big.pow(u32::try_from(v).expect("desk-scale exponent"));
            if !rest.is_one() && rest < limit_sq && nth_prime(idx + 1) > TRIAL_LIMIT {
                // cofactor below limit^2 with no divisor <= limit is prime
                let p_rest = rest
                    .to_u64()
                    .ok_or_else(|| Error::FactorBudget(rest.to_string()))?;
                *factors.entry(p_rest).or_insert(0) += 1;
                break;
            }
        }
        idx += 1;
    }
    Ok(factors)
}

/// Deterministic Miller–Rabin for u64.
pub fn is_prime_u64(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for &p in &[2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n == p {
            return true;
        }
        if n.is_multiple_of(p) {
            return false;
        }
    }
    let mut d = n - 1;
    let mut s = 0u32;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    'witness: for &a in &[2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = pow_mod(a % n, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1u64;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// `ln n` for huge integers, via mantissa extraction. Accurate to f64
/// precision regardless of bit size.
pub fn ln_biguint(n: &BigUint) -> f64 {
    assert!(!n.is_zero(), "log of zero");
    let bits = n.bits();
    if bits <= 53 {
        return n.to_f64().expect("fits f64").ln();
    }
    let shift = bits - 53;
    let mantissa = (n >> shift).to_f64().expect("53-bit mantissa");
    mantissa.ln() + shift as f64 * std::f64::consts::LN_2
}

/// `ln |q|` for nonzero rational `q`.
pub fn ln_rational_abs(q: &Rational) -> f64 {
    assert!(!q.is_zero(), "log of zero");
    ln_biguint(q.numerator().magnitude()) - ln_biguint(q.denominator().magnitude())
}

/// Exact sign of `ln |q|`, i.e. the comparison of `|q|` with 1.
pub fn ln_sign(q: &Rational) -> Ordering {
    q.numerator()
        .magnitude()
        .cmp(q.denominator().magnitude())
}

//! Token amounts and exact split arithmetic.
//!
//! The grain is the smallest indivisible unit; every amount in the system
//! is a whole number of grains and every split is integer-exact. Two split
//! primitives cover all distribution needs:
//!
//! * [`floor_share`] — floor of `amount * ratio`, used for class-level
//!   splits where the dust goes to the treasury.
//! * [`weighted_distribution`] — proportional split that hands each entry
//!   `floor(remaining * w / remaining_w)`, so the full amount is always
//!   distributed with no dust (later entries absorb rounding).

use crate::errors::{Error, Result};
use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Sub};

/// Exact rational weight used for shares and policy splits.
pub type Weight = Ratio<u64>;

/// Non-negative whole number of grains.
#[derive(
    Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct TokenAmount(pub u64);

impl TokenAmount {
    pub const ZERO: TokenAmount = TokenAmount(0);

    pub fn grains(self) -> u64 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn checked_sub(self, rhs: TokenAmount) -> Option<TokenAmount> {
        self.0.checked_sub(rhs.0).map(TokenAmount)
    }

    pub fn checked_add(self, rhs: TokenAmount) -> Option<TokenAmount> {
        self.0.checked_add(rhs.0).map(TokenAmount)
    }
}

impl Add for TokenAmount {
    type Output = TokenAmount;
    fn add(self, rhs: TokenAmount) -> TokenAmount {
        TokenAmount(self.0 + rhs.0)
    }
}

impl AddAssign for TokenAmount {
    fn add_assign(&mut self, rhs: TokenAmount) {
        self.0 += rhs.0;
    }
}

impl Sub for TokenAmount {
    type Output = TokenAmount;
    fn sub(self, rhs: TokenAmount) -> TokenAmount {
        TokenAmount(self.0 - rhs.0)
    }
}

impl Sum for TokenAmount {
    fn sum<I: Iterator<Item = TokenAmount>>(iter: I) -> TokenAmount {
        TokenAmount(iter.map(|a| a.0).sum())
    }
}

impl fmt::Debug for TokenAmount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for TokenAmount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// `floor(amount * ratio)` in u128 intermediate precision.
pub fn floor_share(amount: TokenAmount, ratio: Weight) -> Result<TokenAmount> {
    let numer = *ratio.numer() as u128;
    let denom = *ratio.denom() as u128;
    if denom == 0 {
        return Err(Error::ArithmeticOverflow("floor_share: zero denominator"));
    }
    let product = (amount.0 as u128)
        .checked_mul(numer)
        .ok_or(Error::ArithmeticOverflow("floor_share"))?;
    let out = product / denom;
    u64::try_from(out)
        .map(TokenAmount)
        .map_err(|_| Error::ArithmeticOverflow("floor_share"))
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Exact proportional split. Entry `i` receives
/// `floor(remaining_amount * w_i / remaining_weight)`; the amounts always
/// sum to `amount` exactly, with rounding absorbed by later entries.
///
/// Weights must be positive and the list non-empty. Rational weights are
/// scaled to integers over their common denominator in u128, then reduced
/// by their gcd, so ordinary share tables never overflow.
pub fn weighted_distribution(amount: TokenAmount, weights: &[Weight]) -> Result<Vec<TokenAmount>> {
    if weights.is_empty() {
        return Err(Error::InvalidShares("empty weight list".into()));
    }
    if weights.iter().any(|w| *w.numer() == 0) {
        return Err(Error::InvalidShares("zero weight".into()));
    }
    let overflow = || Error::ArithmeticOverflow("weighted_distribution");
    let mut int_weights = Vec::with_capacity(weights.len());
    for (i, w) in weights.iter().enumerate() {
        let mut scaled = *w.numer() as u128;
        for (j, other) in weights.iter().enumerate() {
            if i != j {
                scaled = scaled
                    .checked_mul(*other.denom() as u128)
                    .ok_or_else(overflow)?;
            }
        }
        int_weights.push(scaled);
    }
    let common = int_weights.iter().fold(0u128, |acc, w| gcd(acc, *w));
    for w in &mut int_weights {
        *w /= common;
    }
    let mut remaining_weight: u128 = int_weights
        .iter()
        .try_fold(0u128, |acc, w| acc.checked_add(*w))
        .ok_or_else(overflow)?;
    let mut remaining = amount.0 as u128;
    let mut out = Vec::with_capacity(weights.len());
    for w in int_weights {
        let part = remaining.checked_mul(w).ok_or_else(overflow)? / remaining_weight;
        remaining -= part;
        remaining_weight -= w;
        out.push(TokenAmount(part as u64));
    }
    debug_assert_eq!(remaining, 0);
    Ok(out)
}

/// Equal split among `n` recipients; later entries absorb the remainder.
pub fn equal_distribution(amount: TokenAmount, n: usize) -> Result<Vec<TokenAmount>> {
    weighted_distribution(amount, &vec![Weight::from_integer(1); n])
}

/// Parse a weight from `"p/q"`, a decimal like `"0.3"`, or an integer.
pub fn parse_weight(s: &str) -> Option<Weight> {
    let s = s.trim();
    if let Some((p, q)) = s.split_once('/') {
        let numer: u64 = p.trim().parse().ok()?;
        let denom: u64 = q.trim().parse().ok()?;
        if denom == 0 {
            return None;
        }
        return Some(Weight::new(numer, denom));
    }
    if let Some((int, frac)) = s.split_once('.') {
        let int: u64 = if int.is_empty() { 0 } else { int.parse().ok()? };
        if frac.is_empty() || frac.len() > 18 || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let scale = 10u64.checked_pow(frac.len() as u32)?;
        let frac_val: u64 = frac.parse().ok()?;
        return Some(Weight::new(int.checked_mul(scale)?.checked_add(frac_val)?, scale));
    }
    s.parse::<u64>().ok().map(Weight::from_integer)
}

/// Render a weight in the `p/q` form used by exports and reports.
pub fn weight_to_string(w: &Weight) -> String {
    format!("{}/{}", w.numer(), w.denom())
}

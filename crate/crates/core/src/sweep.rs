//! Allowable failure ratio `β̃` as a function of the drop-off rate `γ`.

use num_traits::{Signed, Zero};

use crate::checks::{beta_tilde, ModelError, Rational};

/// Fractional digits written for non-terminating values.
pub const DECIMAL_DIGITS: usize = 15;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SweepRow {
    pub gamma: Rational,
    pub beta_tilde: Rational,
}

/// `K` evenly spaced points `γ_i = i·β/(K−1)` on `[0, β]`. The last point
/// lies outside the domain and carries the limit `β̃ → 0`.
pub fn sweep_beta(beta: Rational, steps: usize) -> Result<Vec<SweepRow>, ModelError> {
    assert!(steps >= 2, "a sweep needs at least two points");
    let k = steps as i64 - 1;
    (0..=k)
        .map(|i| {
            let gamma = beta * Rational::new(i, k);
            let bt = if i == k {
                Rational::zero()
            } else {
                beta_tilde(beta, gamma)?
            };
            Ok(SweepRow {
                gamma,
                beta_tilde: bt,
            })
        })
        .collect()
}

/// Decimal expansion of `q`: exact when it terminates, otherwise truncated
/// to [`DECIMAL_DIGITS`] fractional digits.
pub fn to_decimal(q: Rational) -> String {
    let sign = if q.is_negative() { "-" } else { "" };
    let q = q.abs();
    let (num, den) = (*q.numer() as i128, *q.denom() as i128);
    let mut out = format!("{sign}{}", num / den);
    let mut rem = num % den;
    if rem == 0 {
        return out;
    }
    out.push('.');
    for _ in 0..DECIMAL_DIGITS {
        rem *= 10;
        out.push(char::from(b'0' + (rem / den) as u8));
        rem %= den;
        if rem == 0 {
            break;
        }
    }
    out
}

pub fn to_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("gamma,beta_tilde\n");
    for r in rows {
        s.push_str(&to_decimal(r.gamma));
        s.push(',');
        s.push_str(&to_decimal(r.beta_tilde));
        s.push('\n');
    }
    s
}

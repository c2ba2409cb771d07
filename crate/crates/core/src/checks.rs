//! Participation constraints on schedules.
//!
//! All validators are generic over [`Scalar`]; the crate-level
//! [`Rational`](crate::Rational) instantiation is the one used for verdicts,
//! `f64` is there for plotting and cross-checks.
//!
//! * churn: `|H_{r−τ,r−1} \ H_r| ≤ γ·|H_{r−τ,r−1}|`
//! * failure ratio: `|B_r| < β̃·|S_r|`
//! * asynchrony outnumbering: `|H_{r_a} \ B_r| > (1−β)·|S_{r−τ,r}|` for `r ∈ [r_a+1, r_a+π+1]`
//! * asynchrony containment: `H_{r_a} ⊆ H_{r_a+1}`
//! * τ-sleepiness: `|H_r| > (1−β)·|S_{r−τ,r}|`

use std::fmt;

use num_rational::Ratio;
use num_traits::Num;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::tob::Expiration;
use crate::types::Round;
use crate::world::schedule::{AsyncWindow, Schedule};

pub type Rational = Ratio<i64>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("drop-off rate γ = {gamma} must be < β = {beta}")]
    GammaNotBelowBeta { gamma: String, beta: String },
    #[error("{name} = {value} outside [0, 1]")]
    OutOfUnit { name: &'static str, value: String },
    #[error("cannot parse {0:?} as a ratio")]
    Parse(String),
}

/// Number type the validators are written against.
pub trait Scalar: Num + PartialOrd + Copy + fmt::Debug + Send + Sync + 'static {
    fn from_count(n: usize) -> Self;
    fn to_f64(self) -> f64;
    fn parse(s: &str) -> Result<Self, ModelError>;
    fn render(&self) -> String;
}

impl Scalar for Rational {
    fn from_count(n: usize) -> Self {
        Ratio::from_integer(n as i64)
    }

    fn to_f64(self) -> f64 {
        *self.numer() as f64 / *self.denom() as f64
    }

    /// Accepts `"a/b"`, integers, and finite decimals such as `"0.05"`.
    fn parse(s: &str) -> Result<Self, ModelError> {
        let err = || ModelError::Parse(s.to_string());
        let t = s.trim();
        if let Some((a, b)) = t.split_once('/') {
            let a: i64 = a.trim().parse().map_err(|_| err())?;
            let b: i64 = b.trim().parse().map_err(|_| err())?;
            if b == 0 {
                return Err(err());
            }
            return Ok(Ratio::new(a, b));
        }
        let (neg, body) = match t.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, t),
        };
        let (int, frac) = body.split_once('.').unwrap_or((body, ""));
        if int.is_empty() && frac.is_empty() || frac.len() > 15 {
            return Err(err());
        }
        if !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
            return Err(err());
        }
        let denom = 10i64.pow(frac.len() as u32);
        let int: i64 = if int.is_empty() {
            0
        } else {
            int.parse().map_err(|_| err())?
        };
        let frac: i64 = if frac.is_empty() {
            0
        } else {
            frac.parse().map_err(|_| err())?
        };
        let numer = int
            .checked_mul(denom)
            .and_then(|x| x.checked_add(frac))
            .ok_or_else(err)?;
        Ok(Ratio::new(if neg { -numer } else { numer }, denom))
    }

    fn render(&self) -> String {
        if self.is_integer() {
            self.numer().to_string()
        } else {
            format!("{}/{}", self.numer(), self.denom())
        }
    }
}

impl Scalar for f64 {
    fn from_count(n: usize) -> Self {
        n as f64
    }

    fn to_f64(self) -> f64 {
        self
    }

    fn parse(s: &str) -> Result<Self, ModelError> {
        match s.split_once('/') {
            Some((a, b)) => {
                let a: f64 = a.trim().parse().map_err(|_| ModelError::Parse(s.into()))?;
                let b: f64 = b.trim().parse().map_err(|_| ModelError::Parse(s.into()))?;
                Ok(a / b)
            }
            None => s.trim().parse().map_err(|_| ModelError::Parse(s.into())),
        }
    }

    fn render(&self) -> String {
        format!("{self}")
    }
}

/// Serde helper writing a scalar as its string rendering.
pub mod scalar_str {
    use super::*;

    pub fn serialize<T: Scalar, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.render())
    }

    pub fn deserialize<'de, T: Scalar, D: Deserializer<'de>>(d: D) -> Result<T, D::Error> {
        let s = String::deserialize(d)?;
        T::parse(&s).map_err(serde::de::Error::custom)
    }

    pub mod option {
        use super::*;

        pub fn serialize<T: Scalar, S: Serializer>(v: &Option<T>, s: S) -> Result<S::Ok, S::Error> {
            match v {
                Some(v) => s.serialize_some(&v.render()),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, T: Scalar, D: Deserializer<'de>>(
            d: D,
        ) -> Result<Option<T>, D::Error> {
            Option::<String>::deserialize(d)?
                .map(|s| T::parse(&s).map_err(serde::de::Error::custom))
                .transpose()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "", deserialize = ""))]
pub struct ModelParams<T: Scalar> {
    pub tau: u64,
    pub eta: Expiration,
    pub pi: u64,
    #[serde(with = "scalar_str")]
    pub gamma: T,
    #[serde(with = "scalar_str")]
    pub beta: T,
    /// Overrides the derived `β̃` when set.
    #[serde(
        with = "scalar_str::option",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub beta_tilde: Option<T>,
}

impl<T: Scalar> ModelParams<T> {
    /// `β̃` used by the failure-ratio check.
    pub fn effective_beta_tilde(&self) -> Result<T, ModelError> {
        match self.beta_tilde {
            Some(bt) => Ok(bt),
            None => beta_tilde(self.beta, self.gamma),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.effective_beta_tilde().map(|_| ())
    }
}

impl Eq for ModelParams<Rational> {}

impl<T: Scalar> Default for ModelParams<T> {
    /// Static participation (`τ = 0`, `γ = 0`), `η = 0`, `β = 1/3`.
    fn default() -> Self {
        ModelParams {
            tau: 0,
            eta: Expiration::rounds(0),
            pi: 0,
            gamma: T::zero(),
            beta: T::one() / T::from_count(3),
            beta_tilde: None,
        }
    }
}

/// `β̃ = (β−γ) / (γ(β−2) + 1)`.
pub fn beta_tilde<T: Scalar>(beta: T, gamma: T) -> Result<T, ModelError> {
    let one = T::one();
    for (name, v) in [("β", beta), ("γ", gamma)] {
        if v < T::zero() || v > one {
            return Err(ModelError::OutOfUnit {
                name,
                value: v.render(),
            });
        }
    }
    if gamma >= beta {
        return Err(ModelError::GammaNotBelowBeta {
            gamma: gamma.render(),
            beta: beta.render(),
        });
    }
    let two = one + one;
    Ok((beta - gamma) / (gamma * (beta - two) + one))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundVerdict {
    pub round: Round,
    pub holds: bool,
    /// Nothing to constrain this round (empty reference set).
    pub vacuous: bool,
    pub lhs: String,
    pub rhs: String,
}

impl RoundVerdict {
    fn new<T: Scalar>(round: Round, holds: bool, lhs: usize, rhs: T) -> Self {
        RoundVerdict {
            round,
            holds,
            vacuous: false,
            lhs: lhs.to_string(),
            rhs: rhs.render(),
        }
    }

    fn vacuous(round: Round) -> Self {
        RoundVerdict {
            round,
            holds: true,
            vacuous: true,
            lhs: "0".into(),
            rhs: "0".into(),
        }
    }
}

fn all_rounds(s: &Schedule) -> impl Iterator<Item = Round> {
    0..s.horizon() as Round
}

pub fn check_churn<T: Scalar>(s: &Schedule, tau: u64, gamma: T) -> Vec<RoundVerdict> {
    all_rounds(s)
        .map(|r| {
            let recent = s.honest_union(r as i64 - tau as i64, r as i64 - 1);
            if tau == 0 || recent.is_empty() {
                return RoundVerdict::vacuous(r);
            }
            let gone = recent.difference(s.honest(r)).count();
            let bound = gamma * T::from_count(recent.len());
            RoundVerdict::new(r, T::from_count(gone) <= bound, gone, bound)
        })
        .collect()
}

pub fn check_failure_ratio<T: Scalar>(s: &Schedule, beta_tilde: T) -> Vec<RoundVerdict> {
    all_rounds(s)
        .map(|r| {
            let b = s.byzantine(r).len();
            let bound = beta_tilde * T::from_count(s.awake(r).len());
            RoundVerdict::new(r, T::from_count(b) < bound, b, bound)
        })
        .collect()
}

pub fn check_tau_sleepiness<T: Scalar>(s: &Schedule, tau: u64, beta: T) -> Vec<RoundVerdict> {
    all_rounds(s)
        .map(|r| {
            let h = s.honest(r).len();
            let bound = (T::one() - beta)
                * T::from_count(s.awake_union(r as i64 - tau as i64, r as i64).len());
            RoundVerdict::new(r, T::from_count(h) > bound, h, bound)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum AsyncVerdict {
    NoWindow,
    Checked {
        last_sync: Round,
        length: u64,
        containment: bool,
        outnumber: Vec<RoundVerdict>,
    },
    /// More than one asynchronous period.
    Unverified,
}

impl AsyncVerdict {
    pub fn holds(&self) -> bool {
        match self {
            AsyncVerdict::NoWindow => true,
            AsyncVerdict::Checked {
                containment,
                outnumber,
                ..
            } => *containment && outnumber.iter().all(|v| v.holds),
            AsyncVerdict::Unverified => false,
        }
    }
}

/// Outnumbering for every `r ∈ [r_a+1, r_a+π+1]` within the horizon, and containment.
pub fn check_async_conditions<T: Scalar>(
    s: &Schedule,
    last_sync: Round,
    length: u64,
    tau: u64,
    beta: T,
) -> AsyncVerdict {
    let before = s.honest(last_sync);
    let last = (last_sync + length + 1).min(s.horizon() as Round - 1);
    let outnumber = (last_sync + 1..=last)
        .map(|r| {
            let kept = before.difference(s.byzantine(r)).count();
            let bound = (T::one() - beta)
                * T::from_count(s.awake_union(r as i64 - tau as i64, r as i64).len());
            RoundVerdict::new(r, T::from_count(kept) > bound, kept, bound)
        })
        .collect();
    let containment = match s.rounds.get(last_sync as usize + 1) {
        Some(next) => before.is_subset(&next.honest),
        None => true,
    };
    AsyncVerdict::Checked {
        last_sync,
        length,
        containment,
        outnumber,
    }
}

pub fn check_window<T: Scalar>(s: &Schedule, tau: u64, beta: T) -> AsyncVerdict {
    match s.async_window() {
        AsyncWindow::None => AsyncVerdict::NoWindow,
        AsyncWindow::Single { last_sync, length } => {
            check_async_conditions(s, last_sync, length, tau, beta)
        }
        AsyncWindow::Multiple { .. } => AsyncVerdict::Unverified,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelReport {
    pub beta_tilde: String,
    pub churn: Vec<RoundVerdict>,
    pub failure_ratio: Vec<RoundVerdict>,
    pub tau_sleepiness: Vec<RoundVerdict>,
    pub async_conditions: AsyncVerdict,
}

fn all_hold(v: &[RoundVerdict]) -> bool {
    v.iter().all(|x| x.holds)
}

impl ModelReport {
    pub fn churn_holds(&self) -> bool {
        all_hold(&self.churn)
    }

    pub fn failure_ratio_holds(&self) -> bool {
        all_hold(&self.failure_ratio)
    }

    pub fn tau_sleepiness_holds(&self) -> bool {
        all_hold(&self.tau_sleepiness)
    }

    pub fn async_holds(&self) -> bool {
        self.async_conditions.holds()
    }

    pub fn all_hold(&self) -> bool {
        self.churn_holds()
            && self.failure_ratio_holds()
            && self.tau_sleepiness_holds()
            && self.async_holds()
    }

    /// `(check, round)` for every failing round.
    pub fn failures(&self) -> Vec<(&'static str, Round)> {
        let mut out = Vec::new();
        for (name, v) in [
            ("churn", &self.churn),
            ("failure_ratio", &self.failure_ratio),
            ("tau_sleepiness", &self.tau_sleepiness),
        ] {
            out.extend(v.iter().filter(|x| !x.holds).map(|x| (name, x.round)));
        }
        match &self.async_conditions {
            AsyncVerdict::Checked {
                last_sync,
                containment,
                outnumber,
                ..
            } => {
                if !containment {
                    out.push(("async_containment", last_sync + 1));
                }
                out.extend(
                    outnumber
                        .iter()
                        .filter(|x| !x.holds)
                        .map(|x| ("async_outnumber", x.round)),
                );
            }
            AsyncVerdict::Unverified => out.push(("async_windows", 0)),
            AsyncVerdict::NoWindow => {}
        }
        out
    }
}

pub fn check_all<T: Scalar>(s: &Schedule, p: &ModelParams<T>) -> Result<ModelReport, ModelError> {
    let bt = p.effective_beta_tilde()?;
    Ok(ModelReport {
        beta_tilde: bt.render(),
        churn: check_churn(s, p.tau, p.gamma),
        failure_ratio: check_failure_ratio(s, bt),
        tau_sleepiness: check_tau_sleepiness(s, p.tau, p.beta),
        async_conditions: check_window(s, p.tau, p.beta),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{ProcessId, ProcessSet};
    use num_traits::{One, Zero};

    fn q(a: i64, b: i64) -> Rational {
        Ratio::new(a, b)
    }

    fn set(ids: impl IntoIterator<Item = u32>) -> ProcessSet {
        ids.into_iter().map(ProcessId).collect()
    }

    #[test]
    fn beta_tilde_endpoints() {
        assert_eq!(beta_tilde(q(1, 3), q(0, 1)), Ok(q(1, 3)));
        assert_eq!(beta_tilde(q(1, 3), q(1, 10)), Ok(q(7, 25)));
        assert!(matches!(
            beta_tilde(q(1, 3), q(1, 3)),
            Err(ModelError::GammaNotBelowBeta { .. })
        ));
    }

    #[test]
    fn beta_tilde_approaches_zero() {
        // the limit at γ = β is 0: numerator vanishes, denominator stays positive
        let b = q(1, 3);
        let near = beta_tilde(b, q(333, 1000)).unwrap();
        assert!(near < q(1, 1000));
        assert!(near > Rational::zero());
    }

    #[test]
    fn beta_tilde_matches_closed_form_at_one_third() {
        for k in 0..100 {
            let g = q(k, 300);
            let closed = (Rational::one() - q(3, 1) * g) / (q(3, 1) - q(5, 1) * g);
            assert_eq!(beta_tilde(q(1, 3), g).unwrap(), closed);
        }
    }

    #[test]
    fn beta_tilde_f64_instantiation() {
        let v: f64 = beta_tilde(1.0 / 3.0, 0.1).unwrap();
        assert!((v - 0.28).abs() < 1e-12);
    }

    #[test]
    fn parse_forms() {
        assert_eq!(Rational::parse("1/3"), Ok(q(1, 3)));
        assert_eq!(Rational::parse("0.05"), Ok(q(1, 20)));
        assert_eq!(Rational::parse("2"), Ok(q(2, 1)));
        assert_eq!(Rational::parse(".5"), Ok(q(1, 2)));
        assert!(Rational::parse("1/0").is_err());
        assert!(Rational::parse("abc").is_err());
        assert!(Rational::parse("").is_err());
        assert_eq!(q(7, 25).render(), "7/25");
    }

    #[test]
    fn churn_constant_passes() {
        let s = Schedule::all_awake(5, 6);
        assert!(check_churn(&s, 3, Rational::zero()).iter().all(|v| v.holds));
    }

    #[test]
    fn churn_two_of_ten_absent() {
        let mut s = Schedule::all_awake(10, 3);
        s.rounds[2].honest = set(0..8);
        let v = check_churn(&s, 2, q(1, 10));
        assert!(!v[2].holds);
        assert_eq!((v[2].lhs.as_str(), v[2].rhs.as_str()), ("2", "1"));
        assert!(check_churn(&s, 2, q(1, 5))[2].holds);
    }

    #[test]
    fn churn_vacuous_without_memory() {
        let mut s = Schedule::all_awake(10, 3);
        s.rounds[2].honest = set(0..1);
        assert!(check_churn(&s, 0, Rational::zero())
            .iter()
            .all(|v| v.vacuous && v.holds));
    }

    #[test]
    fn failure_ratio_examples() {
        let mut s = Schedule::all_awake(10, 1);
        assert!(check_failure_ratio(&s, q(1, 100))[0].holds);
        s.rounds[0].honest = set(0..7);
        s.rounds[0].byzantine = set(7..10);
        assert!(!check_failure_ratio(&s, q(7, 25))[0].holds);
        assert!(check_failure_ratio(&s, q(1, 3) + q(1, 100))[0].holds);
    }

    #[test]
    fn failure_ratio_without_drop_off_uses_beta() {
        let mut s = Schedule::all_awake(9, 1);
        s.rounds[0].honest = set(0..7);
        s.rounds[0].byzantine = set(7..9);
        let bt = beta_tilde(q(1, 3), Rational::zero()).unwrap();
        assert_eq!(
            check_failure_ratio(&s, bt),
            check_failure_ratio(&s, q(1, 3))
        );
    }

    fn window_schedule() -> Schedule {
        let mut s = Schedule::all_awake(9, 6).with_window(2, 2);
        for spec in &mut s.rounds {
            spec.honest = set(0..7);
            spec.byzantine = set(7..9);
        }
        s
    }

    #[test]
    fn async_outnumber_passes() {
        let s = window_schedule();
        let v = check_async_conditions(&s, 2, 2, 2, q(1, 3));
        assert!(v.holds());
        let AsyncVerdict::Checked { outnumber, .. } = v else {
            unreachable!()
        };
        assert_eq!(outnumber.len(), 3);
        assert_eq!(
            (outnumber[0].lhs.as_str(), outnumber[0].rhs.as_str()),
            ("7", "6")
        );
    }

    #[test]
    fn async_zero_length_checks_one_round() {
        let s = window_schedule();
        let AsyncVerdict::Checked { outnumber, .. } = check_async_conditions(&s, 2, 0, 2, q(1, 3))
        else {
            unreachable!()
        };
        assert_eq!(
            outnumber.iter().map(|v| v.round).collect::<Vec<_>>(),
            vec![3]
        );
    }

    #[test]
    fn async_fails_when_pre_window_set_corrupted() {
        let mut s = window_schedule();
        for r in 3..6 {
            s.rounds[r].honest = ProcessSet::new();
            s.rounds[r].byzantine = set(0..9);
        }
        let v = check_async_conditions(&s, 2, 2, 2, q(1, 3));
        assert!(!v.holds());
        let AsyncVerdict::Checked {
            outnumber,
            containment,
            ..
        } = v
        else {
            unreachable!()
        };
        assert!(!containment);
        assert_eq!(outnumber[0].lhs, "0");
    }

    #[test]
    fn tau_sleepiness_examples() {
        let mut s = Schedule::all_awake(9, 1);
        s.rounds[0].honest = set(0..7);
        s.rounds[0].byzantine = set(7..9);
        assert!(check_tau_sleepiness(&s, 0, q(1, 3))[0].holds);
        // 6 > (2/3)·9 = 6 is false
        s.rounds[0].honest = set(0..6);
        s.rounds[0].byzantine = set(6..9);
        assert!(!check_tau_sleepiness(&s, 0, q(1, 3))[0].holds);
    }

    #[test]
    fn report_lists_failures() {
        let mut s = window_schedule();
        s.rounds[4].honest = set(0..3);
        let p = ModelParams {
            tau: 2,
            eta: Expiration::rounds(2),
            pi: 2,
            gamma: q(1, 10),
            beta: q(1, 3),
            beta_tilde: None,
        };
        let rep = check_all(&s, &p).unwrap();
        assert!(!rep.all_hold());
        let names: Vec<_> = rep.failures().into_iter().map(|(n, _)| n).collect();
        assert!(names.contains(&"churn"));
        assert!(names.contains(&"failure_ratio"));
        assert!(names.contains(&"tau_sleepiness"));
    }

    #[test]
    fn params_round_trip_as_strings() {
        let p: ModelParams<Rational> = ModelParams {
            tau: 4,
            eta: Expiration::rounds(4),
            pi: 2,
            gamma: q(1, 20),
            beta: q(1, 3),
            beta_tilde: None,
        };
        let json = serde_json::to_string(&p).unwrap();
        assert!(json.contains("\"1/3\""));
        let back: ModelParams<Rational> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
    }
}

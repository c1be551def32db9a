use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::schema::DecisionTreeSchema;

use super::special::{digamma, ln_gamma};

pub const CONCENTRATION_MIN: f64 = 1.0;
pub const CONCENTRATION_MAX: f64 = 100.0;

/// Per-answer Dirichlet-Multinomial concentrations, each strictly inside (1, 100).
#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationVector<T> {
    alpha: Vec<T>,
}

impl<T: Scalar> ConcentrationVector<T> {
    pub fn new(alpha: Vec<T>) -> Result<Self> {
        let lo = T::from_f64_lossy(CONCENTRATION_MIN);
        let hi = T::from_f64_lossy(CONCENTRATION_MAX);
        if let Some((i, a)) = alpha.iter().enumerate().find(|(_, &a)| !(a > lo && a < hi)) {
            return Err(Error::InvalidArgument(format!(
                "concentration {i} = {a} outside (1, 100)"
            )));
        }
        Ok(Self { alpha })
    }

    pub fn as_slice(&self) -> &[T] {
        &self.alpha
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn into_inner(self) -> Vec<T> {
        self.alpha
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `lo + (hi - lo) * sigmoid(raw)`, kept strictly inside `(lo, hi)` even where
/// the sigmoid saturates in floating point.
pub fn squash_to_concentration<T: Scalar>(raw: &[T], lo: T, hi: T) -> Result<Vec<T>> {
    if !(lo < hi) {
        return Err(Error::InvalidArgument(format!("empty range ({lo}, {hi})")));
    }
    let eps = T::epsilon();
    let floor = lo + lo.abs().max(T::one()) * eps;
    let ceil = hi - hi.abs().max(T::one()) * eps;
    raw.iter()
        .map(|&x| {
            if !x.is_finite() {
                return Err(Error::NonFinite(format!("raw head output {x}")));
            }
            Ok((lo + (hi - lo) * sigmoid(x)).max(floor).min(ceil))
        })
        .collect()
}

/// d(concentration)/d(raw) of [`squash_to_concentration`].
pub fn squash_derivative<T: Scalar>(raw: T, lo: T, hi: T) -> T {
    let s = sigmoid(raw);
    (hi - lo) * s * (T::one() - s)
}

/// Dirichlet-Multinomial log-probability of one question's vote counts.
///
/// The multinomial coefficient `ln N! - Σ ln k_a!` is added only when
/// `include_coefficient` is set; it does not depend on `alpha`.
pub fn dm_log_pmf<T: Scalar>(votes: &[u32], alpha: &[T], include_coefficient: bool) -> Result<T> {
    if votes.len() != alpha.len() {
        return Err(Error::Shape(format!(
            "{} vote slots vs {} concentrations",
            votes.len(),
            alpha.len()
        )));
    }
    let total: u32 = votes.iter().sum();
    if total == 0 {
        return Ok(T::zero());
    }
    let n = T::from_u32(total).expect("u32 converts");
    let a_sum: T = alpha.iter().copied().sum();
    let mut lp = ln_gamma(a_sum) - ln_gamma(n + a_sum);
    for (&k, &a) in votes.iter().zip(alpha) {
        if k > 0 {
            let k = T::from_u32(k).expect("u32 converts");
            lp += ln_gamma(k + a) - ln_gamma(a);
        }
    }
    if include_coefficient {
        lp += ln_gamma(n + T::one());
        for &k in votes {
            if k > 1 {
                lp -= ln_gamma(T::from_u32(k).expect("u32 converts") + T::one());
            }
        }
    }
    Ok(lp)
}

/// Like [`dm_log_pmf`] but taking possibly-negative counts, as they arrive from
/// untrusted sources.
pub fn dm_log_pmf_signed<T: Scalar>(votes: &[i64], alpha: &[T], include_coefficient: bool) -> Result<T> {
    let checked: Vec<u32> = votes
        .iter()
        .enumerate()
        .map(|(slot, &c)| u32::try_from(c).map_err(|_| Error::NegativeVote { slot, count: c }))
        .collect::<Result<_>>()?;
    dm_log_pmf(&checked, alpha, include_coefficient)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossValue<T> {
    /// Batch mean of per-record negative log likelihoods.
    pub value: T,
    /// Batch mean of each question's contribution; sums to `value`.
    pub per_question: Vec<T>,
}

fn check_aligned<T>(votes: &[u32], alpha: &[T], schema: &DecisionTreeSchema) -> Result<()> {
    if votes.len() != schema.total_answers() || alpha.len() != schema.total_answers() {
        return Err(Error::Shape(format!(
            "votes {} / concentrations {} vs {} schema slots",
            votes.len(),
            alpha.len(),
            schema.total_answers()
        )));
    }
    Ok(())
}

/// Per-question negative log likelihood of one record (coefficient excluded).
pub fn record_nll<T: Scalar>(votes: &[u32], alpha: &[T], schema: &DecisionTreeSchema) -> Result<Vec<T>> {
    check_aligned(votes, alpha, schema)?;
    schema
        .ranges()
        .iter()
        .map(|r| dm_log_pmf(&votes[r.clone()], &alpha[r.clone()], false).map(|lp| -lp))
        .collect()
}

/// Mean over the batch of the summed per-question negative log likelihoods.
/// Questions nobody answered contribute exactly zero.
pub fn dm_nll_loss<T: Scalar, V: AsRef<[u32]>, A: AsRef<[T]>>(
    batch_votes: &[V],
    batch_alpha: &[A],
    schema: &DecisionTreeSchema,
) -> Result<LossValue<T>> {
    if batch_votes.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if batch_votes.len() != batch_alpha.len() {
        return Err(Error::Shape(format!(
            "{} vote vectors vs {} concentration vectors",
            batch_votes.len(),
            batch_alpha.len()
        )));
    }
    let mut per_question = vec![T::zero(); schema.num_questions()];
    for (v, a) in batch_votes.iter().zip(batch_alpha) {
        for (acc, term) in per_question.iter_mut().zip(record_nll(v.as_ref(), a.as_ref(), schema)?) {
            *acc += term;
        }
    }
    let b = T::from_usize_lossy(batch_votes.len());
    per_question.iter_mut().for_each(|x| *x /= b);
    let value = per_question.iter().copied().sum();
    Ok(LossValue { value, per_question })
}

/// Gradient of one record's negative log likelihood with respect to its concentrations.
pub fn dm_nll_gradient<T: Scalar>(votes: &[u32], alpha: &[T], schema: &DecisionTreeSchema) -> Result<Vec<T>> {
    check_aligned(votes, alpha, schema)?;
    let mut grad = vec![T::zero(); alpha.len()];
    for r in schema.ranges() {
        let k = &votes[r.clone()];
        let total: u32 = k.iter().sum();
        if total == 0 {
            continue;
        }
        let a = &alpha[r.clone()];
        let a_sum: T = a.iter().copied().sum();
        let n = T::from_u32(total).expect("u32 converts");
        let shared = digamma(a_sum) - digamma(n + a_sum);
        for (i, (&ki, &ai)) in k.iter().zip(a).enumerate() {
            let own = if ki > 0 {
                digamma(T::from_u32(ki).expect("u32 converts") + ai) - digamma(ai)
            } else {
                T::zero()
            };
            grad[r.start + i] = -(shared + own);
        }
    }
    Ok(grad)
}

/// Expected vote fraction of each answer: `alpha_a / Σ_{a in q} alpha`.
pub fn expected_fractions<T: Scalar>(alpha: &[T], schema: &DecisionTreeSchema) -> Result<Vec<T>> {
    if alpha.len() != schema.total_answers() {
        return Err(Error::Shape(format!(
            "{} concentrations vs {} schema slots",
            alpha.len(),
            schema.total_answers()
        )));
    }
    let mut out = vec![T::zero(); alpha.len()];
    for r in schema.ranges() {
        let s: T = alpha[r.clone()].iter().copied().sum();
        for i in r.clone() {
            out[i] = alpha[i] / s;
        }
    }
    Ok(out)
}

//! Alignment metrics over element sets.
//!
//! Coverage, extensiveness and sparsity are set-cardinality ratios; the two
//! ontology-selection metrics (etype overlap, property shareability) reduce
//! to the same shape. All values are exact rationals, so the identity
//! `Ext(a,b) + Ext(b,a) = Spr(a,b)` holds with zero tolerance, and decimals
//! appear only at reporting time.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alignment;
use crate::ingest::OntologyDocument;
use crate::model::{EType, ETGModel, ElementSet, ScorerConfig};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    /// The α operand is empty where a ratio over |α| is required.
    #[error("alpha element set is empty")]
    EmptyAlpha,
    /// Both operands are empty where a ratio over |α ∪ β| is required.
    #[error("both element sets are empty")]
    EmptyUniverse,
}

/// Exact non-negative rational, kept reduced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub num: u64,
    pub den: u64,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a.max(1)
}

impl Ratio {
    /// Reduced ratio; `den` must be non-zero.
    pub fn new(num: u64, den: u64) -> Ratio {
        assert!(den != 0, "ratio denominator must be non-zero");
        let g = gcd(num, den);
        Ratio {
            num: num / g,
            den: den / g,
        }
    }

    pub const ZERO: Ratio = Ratio { num: 0, den: 1 };
    pub const ONE: Ratio = Ratio { num: 1, den: 1 };

    pub fn from_counts(num: usize, den: usize) -> Ratio {
        Ratio::new(num as u64, den as u64)
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn is_zero(self) -> bool {
        self.num == 0
    }

    pub fn div_by(self, n: u64) -> Ratio {
        assert!(n != 0);
        Ratio::new(self.num, self.den.saturating_mul(n))
    }

    /// Exact `self >= t` where `t` is read as the decimal it round-trips to.
    ///
    /// A threshold written as `0.9` is the f64 nearest to 9/10, which sits a
    /// hair above it; comparing raw bits would fail an adoption ratio of
    /// exactly 9/10 against its own threshold. Comparing against the shortest
    /// round-trip decimal honors the written value and stays tolerance-free.
    pub fn ge_f64(self, t: f64) -> bool {
        match Decimal::of(t).and_then(|d| d.cmp_ratio(self)) {
            Some(order) => order != std::cmp::Ordering::Greater,
            // negative/-inf thresholds always hold; otherwise (nan, +inf or
            // operand overflow far outside count ranges) fall back to f64
            None if !t.is_nan() && t <= 0.0 => true,
            None => self.to_f64() >= t,
        }
    }

    /// Exact `self <= t`, same decimal reading as [`Ratio::ge_f64`].
    pub fn le_f64(self, t: f64) -> bool {
        match Decimal::of(t).and_then(|d| d.cmp_ratio(self)) {
            Some(order) => order != std::cmp::Ordering::Less,
            None if t.is_infinite() && t > 0.0 => true,
            None => self.to_f64() <= t,
        }
    }
}

fn gcd_u128(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a.max(1)
}

/// A non-negative finite f64 as the exact rational `num / 10^scale` of its
/// shortest round-trip decimal form.
struct Decimal {
    num: u128,
    scale: u32,
}

impl Decimal {
    fn of(t: f64) -> Option<Decimal> {
        if !t.is_finite() || t < 0.0 {
            return None;
        }
        let repr = format!("{t}");
        let (base, exp) = match repr.split_once(['e', 'E']) {
            Some((b, e)) => (b, e.parse::<i32>().ok()?),
            None => (repr.as_str(), 0),
        };
        let (int_part, frac_part) = match base.split_once('.') {
            Some((i, f)) => (i, f),
            None => (base, ""),
        };
        let digits: String = format!("{int_part}{frac_part}");
        let num: u128 = digits.parse().ok()?;
        let scale = frac_part.len() as i32 - exp;
        if scale >= 0 {
            Some(Decimal {
                num,
                scale: scale as u32,
            })
        } else {
            Some(Decimal {
                num: num.checked_mul(10u128.checked_pow((-scale) as u32)?)?,
                scale: 0,
            })
        }
    }

    /// `self` compared to `ratio`, exactly. `None` only on operand overflow,
    /// unreachable for the element-count ratios of this crate.
    fn cmp_ratio(&self, ratio: Ratio) -> Option<std::cmp::Ordering> {
        let lhs = self.num.checked_mul(ratio.den as u128)?;
        let rhs = (ratio.num as u128).checked_mul(10u128.checked_pow(self.scale)?)?;
        Some(lhs.cmp(&rhs))
    }
}

/// Exact sum. Counts in this crate stay far below the overflow range.
impl std::ops::Add for Ratio {
    type Output = Ratio;

    fn add(self, other: Ratio) -> Ratio {
        let num = self.num as u128 * other.den as u128 + other.num as u128 * self.den as u128;
        let den = self.den as u128 * other.den as u128;
        let g = gcd_u128(num, den);
        Ratio {
            num: (num / g) as u64,
            den: (den / g) as u64,
        }
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{} ({:.4})", self.num, self.den, self.to_f64())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    Coverage,
    Extensiveness,
    Sparsity,
    EtypeOverlap,
    PropertyShareability,
}

impl fmt::Display for MetricName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MetricName::Coverage => "coverage",
            MetricName::Extensiveness => "extensiveness",
            MetricName::Sparsity => "sparsity",
            MetricName::EtypeOverlap => "etype_overlap",
            MetricName::PropertyShareability => "property_shareability",
        };
        f.write_str(s)
    }
}

/// A computed metric with the cardinalities it was derived from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub name: MetricName,
    pub value: Ratio,
    pub alpha_size: usize,
    pub beta_size: usize,
    pub intersection_size: usize,
}

impl MetricValue {
    fn new(
        name: MetricName,
        value: Ratio,
        alpha_size: usize,
        beta_size: usize,
        intersection_size: usize,
    ) -> MetricValue {
        debug_assert!(intersection_size <= alpha_size.min(beta_size));
        MetricValue {
            name,
            value,
            alpha_size,
            beta_size,
            intersection_size,
        }
    }
}

/// `Cov = |α ∩ β| / |α|`: how much of α is present in β.
pub fn coverage(alpha: &ElementSet, beta: &ElementSet) -> Result<MetricValue, MetricsError> {
    if alpha.is_empty() {
        return Err(MetricsError::EmptyAlpha);
    }
    let inter = alpha.intersection(beta).len();
    Ok(MetricValue::new(
        MetricName::Coverage,
        Ratio::from_counts(inter, alpha.len()),
        alpha.len(),
        beta.len(),
        inter,
    ))
}

/// `Ext = (|β| − |α ∩ β|) / (|α| + |β| − |α ∩ β|)`: share of the combined
/// knowledge contributed by β alone.
pub fn extensiveness(alpha: &ElementSet, beta: &ElementSet) -> Result<MetricValue, MetricsError> {
    let inter = alpha.intersection(beta).len();
    let union = alpha.len() + beta.len() - inter;
    if union == 0 {
        return Err(MetricsError::EmptyUniverse);
    }
    Ok(MetricValue::new(
        MetricName::Extensiveness,
        Ratio::from_counts(beta.len() - inter, union),
        alpha.len(),
        beta.len(),
        inter,
    ))
}

/// `Spr = (|α| + |β| − 2|α ∩ β|) / (|α| + |β| − |α ∩ β|)`: element-level
/// difference between the two sets. Symmetric; 0 iff α = β.
pub fn sparsity(alpha: &ElementSet, beta: &ElementSet) -> Result<MetricValue, MetricsError> {
    let inter = alpha.intersection(beta).len();
    let union = alpha.len() + beta.len() - inter;
    if union == 0 {
        return Err(MetricsError::EmptyUniverse);
    }
    Ok(MetricValue::new(
        MetricName::Sparsity,
        Ratio::from_counts(alpha.len() + beta.len() - 2 * inter, union),
        alpha.len(),
        beta.len(),
        inter,
    ))
}

/// Fraction of model etypes matched to some etype of the ontology.
///
/// Matching uses the alignment scorer (names plus shared properties) with its
/// acceptance threshold and one-to-one assignment, so `Medication` can match
/// `MedicationStatement` even though plain name similarity would not.
pub fn etype_overlap(
    ontology: &OntologyDocument,
    model: &ETGModel,
    scorer: &ScorerConfig,
) -> Result<MetricValue, MetricsError> {
    if model.etypes.is_empty() {
        return Err(MetricsError::EmptyAlpha);
    }
    let prediction = alignment::etr_predict(model, ontology, scorer);
    let matched = prediction.assignments.len();
    Ok(MetricValue::new(
        MetricName::EtypeOverlap,
        Ratio::from_counts(matched, model.etypes.len()),
        model.etypes.len(),
        ontology.etypes.len(),
        matched.min(ontology.etypes.len()),
    ))
}

/// Fraction of the model etype's properties shared (by normalized name) with
/// the ontology etype.
pub fn property_shareability(
    ontology_etype: &EType,
    model_etype: &EType,
) -> Result<MetricValue, MetricsError> {
    let model_props = model_etype.property_names();
    if model_props.is_empty() {
        return Err(MetricsError::EmptyAlpha);
    }
    let ontology_props = ontology_etype.property_names();
    let shared: BTreeSet<_> = model_props.intersection(&ontology_props).collect();
    Ok(MetricValue::new(
        MetricName::PropertyShareability,
        Ratio::from_counts(shared.len(), model_props.len()),
        model_props.len(),
        ontology_props.len(),
        shared.len(),
    ))
}

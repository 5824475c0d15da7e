//! Borrower population sampling from a calibration file.
//!
//! The calibration mirrors the conditional structure of public census-style
//! tables: a marginal distribution over annual income bins, and per-bin
//! discrete distributions for the monthly mortgage payment, non-housing
//! expenses, and initial savings. The repository ships a synthetic default
//! (`data/default_calibration.toml`) whose marginals are plausible but
//! invented; real census microdata is deliberately not redistributed.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

use crate::money::Money;

/// Loan term at origination; borrowers are sampled at a random point in it.
pub const ORIGINAL_TERM_MONTHS: u32 = 360;

const PROBABILITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum PopulationError {
    #[error("cannot read calibration {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("calibration parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("calibration field `{field}`: {message}")]
    Validation { field: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> PopulationError {
    PopulationError::Validation { field: field.into(), message: message.into() }
}

/// A discrete empirical distribution over non-negative dollar amounts.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDist {
    entries: Vec<(Money, f64)>,
}

impl DiscreteDist {
    pub fn new(entries: Vec<(Money, f64)>, field: &str) -> Result<Self, PopulationError> {
        if entries.is_empty() {
            return Err(invalid(field, "missing or empty distribution"));
        }
        let mut total = 0.0;
        for &(value, prob) in &entries {
            if value < Money::ZERO {
                return Err(invalid(field, format!("negative value {value}")));
            }
            if !(0.0..=1.0).contains(&prob) {
                return Err(invalid(field, format!("probability {prob} outside [0, 1]")));
            }
            total += prob;
        }
        if (total - 1.0).abs() > PROBABILITY_TOLERANCE {
            return Err(invalid(field, format!("probabilities sum to {total}, expected 1")));
        }
        Ok(DiscreteDist { entries })
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Money {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for &(value, prob) in &self.entries {
            acc += prob;
            if u < acc {
                return value;
            }
        }
        self.entries.last().expect("non-empty").0
    }

    pub fn entries(&self) -> &[(Money, f64)] {
        &self.entries
    }
}

/// One annual-income bin with its conditional distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct IncomeBin {
    /// Annual income range in dollars, inclusive bounds; sampled uniformly.
    pub range: (Money, Money),
    pub probability: f64,
    /// Monthly mortgage payment given income.
    pub mortgage: DiscreteDist,
    /// Monthly non-housing expenses given income.
    pub expenses: DiscreteDist,
    /// Initial savings given income.
    pub assets: DiscreteDist,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationCalibration {
    pub income_bins: Vec<IncomeBin>,
    /// Area median income, annual dollars.
    pub ami: Money,
    /// Floor on sampled annual income.
    pub min_income: Money,
}

#[derive(Debug, Deserialize)]
struct RawCalibration {
    ami: f64,
    min_income: f64,
    #[serde(default)]
    income_bins: Vec<RawBin>,
}

#[derive(Debug, Deserialize)]
struct RawBin {
    range: [f64; 2],
    probability: f64,
    #[serde(default)]
    mortgage: Vec<[f64; 2]>,
    #[serde(default)]
    expenses: Vec<[f64; 2]>,
    #[serde(default)]
    assets: Vec<[f64; 2]>,
}

fn convert_dist(raw: &[[f64; 2]], field: &str) -> Result<DiscreteDist, PopulationError> {
    let entries = raw
        .iter()
        .map(|&[value, prob]| (Money::from_dollars(value), prob))
        .collect();
    DiscreteDist::new(entries, field)
}

impl PopulationCalibration {
    /// The synthetic default shipped with the crate.
    pub fn bundled_default() -> Self {
        Self::from_toml_str(include_str!("../data/default_calibration.toml"))
            .expect("bundled calibration is valid")
    }

    pub fn load(path: &Path) -> Result<Self, PopulationError> {
        let text = std::fs::read_to_string(path).map_err(|source| PopulationError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, PopulationError> {
        let raw: RawCalibration = toml::from_str(text)?;
        let mut bins = Vec::with_capacity(raw.income_bins.len());
        for (i, bin) in raw.income_bins.iter().enumerate() {
            let lo = Money::from_dollars(bin.range[0]);
            let hi = Money::from_dollars(bin.range[1]);
            if lo < Money::ZERO || hi < lo {
                return Err(invalid(
                    format!("income_bins[{i}].range"),
                    format!("bad range [{lo}, {hi}]"),
                ));
            }
            bins.push(IncomeBin {
                range: (lo, hi),
                probability: bin.probability,
                mortgage: convert_dist(&bin.mortgage, &format!("income_bins[{i}].mortgage"))?,
                expenses: convert_dist(&bin.expenses, &format!("income_bins[{i}].expenses"))?,
                assets: convert_dist(&bin.assets, &format!("income_bins[{i}].assets"))?,
            });
        }
        let calibration = PopulationCalibration {
            income_bins: bins,
            ami: Money::from_dollars(raw.ami),
            min_income: Money::from_dollars(raw.min_income),
        };
        calibration.validate()?;
        Ok(calibration)
    }

    pub fn validate(&self) -> Result<(), PopulationError> {
        if self.income_bins.is_empty() {
            return Err(invalid("income_bins", "at least one bin required"));
        }
        if self.ami <= Money::ZERO {
            return Err(invalid("ami", "must be positive"));
        }
        if self.min_income < Money::ZERO {
            return Err(invalid("min_income", "must be non-negative"));
        }
        let total: f64 = self.income_bins.iter().map(|b| b.probability).sum();
        if (total - 1.0).abs() > PROBABILITY_TOLERANCE {
            return Err(invalid(
                "income_bins",
                format!("bin probabilities sum to {total}, expected 1"),
            ));
        }
        for (i, bin) in self.income_bins.iter().enumerate() {
            if !(0.0..=1.0).contains(&bin.probability) {
                return Err(invalid(
                    format!("income_bins[{i}].probability"),
                    format!("probability {} outside [0, 1]", bin.probability),
                ));
            }
        }
        Ok(())
    }

    fn sample_bin_index(&self, rng: &mut ChaCha8Rng) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, bin) in self.income_bins.iter().enumerate() {
            acc += bin.probability;
            if u < acc {
                return i;
            }
        }
        self.income_bins.len() - 1
    }
}

/// Income group for the social index: low income is strictly below 80% of
/// the area median income on an annual basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IncomeGroup {
    LowIncome,
    Other,
}

impl std::fmt::Display for IncomeGroup {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            IncomeGroup::LowIncome => write!(f, "low_income"),
            IncomeGroup::Other => write!(f, "other"),
        }
    }
}

/// Group assignment from monthly income at t = 0; exact integer comparison,
/// ties at the 80% boundary go to `Other`.
pub fn assign_group(income_monthly: Money, ami_annual: Money) -> IncomeGroup {
    // income*12 < 0.8*ami  <=>  income*120 < ami*8 in cents
    if income_monthly.cents() * 120 < ami_annual.cents() * 8 {
        IncomeGroup::LowIncome
    } else {
        IncomeGroup::Other
    }
}

/// A household's static draw: finances at t = 0 plus the loan position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BorrowerProfile {
    /// Monthly income at t = 0.
    pub income0: Money,
    pub monthly_payment: Money,
    pub nonhousing_expenses0: Money,
    pub savings0: Money,
    /// Months left on a 360-month loan, uniform over 0..=360.
    pub term_remaining: u32,
    pub total_loan: Money,
    pub paid_to_date: Money,
    /// Liquidity preference weight in [0, 1].
    pub liquidity_preference: f64,
    pub group: IncomeGroup,
}

/// How the liquidity preference is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GammaMode {
    /// Uniform on [0, 1]; used when building training populations.
    Uniform,
    /// A fixed value; evaluation uses 0.5.
    Fixed(f64),
}

/// Samples one borrower with a uniform liquidity preference.
pub fn sample_borrower(calib: &PopulationCalibration, rng: &mut ChaCha8Rng) -> BorrowerProfile {
    sample_borrower_with(calib, GammaMode::Uniform, rng)
}

/// Samples one borrower; the draw order (bin, income, mortgage, expenses,
/// assets, term, gamma) is fixed so identical streams yield identical
/// profiles.
pub fn sample_borrower_with(
    calib: &PopulationCalibration,
    gamma: GammaMode,
    rng: &mut ChaCha8Rng,
) -> BorrowerProfile {
    let bin = &calib.income_bins[calib.sample_bin_index(rng)];
    let (lo, hi) = bin.range;
    let annual_cents = if hi > lo {
        rng.gen_range(lo.cents()..=hi.cents())
    } else {
        lo.cents()
    };
    let annual = Money::from_cents(annual_cents).max(calib.min_income);
    // Ceiling division keeps income0 * 12 >= annual >= min_income exact.
    let income0 = Money::from_cents((annual.cents() + 11) / 12);

    let monthly_payment = bin.mortgage.sample(rng);
    let nonhousing_expenses0 = bin.expenses.sample(rng);
    let savings0 = bin.assets.sample(rng);
    let term_remaining = rng.gen_range(0..=ORIGINAL_TERM_MONTHS);
    let liquidity_preference = match gamma {
        GammaMode::Uniform => rng.gen::<f64>(),
        GammaMode::Fixed(g) => g,
    };

    let total_loan = monthly_payment.times(ORIGINAL_TERM_MONTHS);
    let paid_to_date = monthly_payment.times(ORIGINAL_TERM_MONTHS - term_remaining);

    BorrowerProfile {
        income0,
        monthly_payment,
        nonhousing_expenses0,
        savings0,
        term_remaining,
        total_loan,
        paid_to_date,
        liquidity_preference,
        group: assign_group(income0, calib.ami),
    }
}

//! The parameterised assistance product and its per-borrower cover ledger.
//!
//! A product is a quadruple (upfront premium, monthly fee, total cover,
//! forbearance months). The scaled form expresses the three monetary
//! parameters as multiples of the borrower's monthly mortgage payment, so a
//! single parameter triple describes a different absolute product for every
//! borrower. Cover is drawn automatically at payment time against the
//! month's housing bill and is never replenished.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::money::Money;

#[derive(Debug, Error)]
pub enum ProductError {
    #[error("product parameter {name} = {value} outside [{lo}, {hi}]")]
    OutOfBounds {
        name: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("forbearance length {0} not one of 3, 6, 12 months")]
    BadForbearanceLength(u32),
    #[error("negative amount for {0}")]
    NegativeAmount(&'static str),
    #[error("cover draw while not enrolled")]
    NotEnrolled,
    #[error("cover draw {draw} exceeds remaining cover {remaining}")]
    DrawExceedsCover { draw: Money, remaining: Money },
}

/// An assistance product in absolute dollars.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Product {
    /// One-off enrolment premium.
    pub upfront_premium: Money,
    /// Recurring fee owed every enrolled month.
    pub monthly_fee: Money,
    /// Total cover the product can pay toward housing bills.
    pub total_cover: Money,
    /// Payment-pause length granted on first delinquency (0 when absent).
    pub forbearance_months: u32,
}

impl Product {
    pub const NULL: Product = Product {
        upfront_premium: Money::ZERO,
        monthly_fee: Money::ZERO,
        total_cover: Money::ZERO,
        forbearance_months: 0,
    };

    pub fn is_null(&self) -> bool {
        *self == Product::NULL
    }
}

/// Product parameters as multiples of the monthly mortgage payment.
///
/// `p0` and `p` live in [0, 1]; `v` is in months of payment, bounded by the
/// episode length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledProductParams {
    pub p0: f64,
    pub p: f64,
    pub v: f64,
}

impl ScaledProductParams {
    pub const NULL: ScaledProductParams = ScaledProductParams { p0: 0.0, p: 0.0, v: 0.0 };

    pub fn new(p0: f64, p: f64, v: f64, episode_months: u32) -> Result<Self, ProductError> {
        let params = ScaledProductParams { p0, p, v };
        params.validate(episode_months)?;
        Ok(params)
    }

    pub fn validate(&self, episode_months: u32) -> Result<(), ProductError> {
        let check = |name: &'static str, value: f64, lo: f64, hi: f64| {
            if !(lo..=hi).contains(&value) || !value.is_finite() {
                Err(ProductError::OutOfBounds { name, value, lo, hi })
            } else {
                Ok(())
            }
        };
        check("p0", self.p0, 0.0, 1.0)?;
        check("p", self.p, 0.0, 1.0)?;
        check("v", self.v, 0.0, f64::from(episode_months))?;
        Ok(())
    }

    /// Realises the absolute product for a borrower paying `m` per month.
    pub fn scale(&self, m: Money) -> Product {
        Product {
            upfront_premium: m.scale(self.p0),
            monthly_fee: m.scale(self.p),
            total_cover: m.scale(self.v),
            forbearance_months: 0,
        }
    }
}

/// Validated constructor for the scaled product.
pub fn scale_product(
    params: ScaledProductParams,
    m: Money,
    episode_months: u32,
) -> Result<Product, ProductError> {
    params.validate(episode_months)?;
    Ok(params.scale(m))
}

/// Well-known product shapes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SpecialProduct {
    /// Reserve funds at no cost to the household.
    Mra { reserve: Money },
    /// Household pays `contribution` up front, receives double as cover.
    MatchedMra { contribution: Money },
    /// Fee-free, cover-free payment pause of 3, 6, or 12 months.
    CovidForbearance { months: u32 },
    Null,
}

pub fn make_special(kind: SpecialProduct) -> Result<Product, ProductError> {
    match kind {
        SpecialProduct::Mra { reserve } => {
            if reserve < Money::ZERO {
                return Err(ProductError::NegativeAmount("reserve"));
            }
            Ok(Product { total_cover: reserve, ..Product::NULL })
        }
        SpecialProduct::MatchedMra { contribution } => {
            if contribution < Money::ZERO {
                return Err(ProductError::NegativeAmount("contribution"));
            }
            Ok(Product {
                upfront_premium: contribution,
                total_cover: contribution.times(2),
                ..Product::NULL
            })
        }
        SpecialProduct::CovidForbearance { months } => {
            if ![3, 6, 12].contains(&months) {
                return Err(ProductError::BadForbearanceLength(months));
            }
            Ok(Product { forbearance_months: months, ..Product::NULL })
        }
        SpecialProduct::Null => Ok(Product::NULL),
    }
}

/// Per-borrower record of enrolment, fees paid, and cover drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverLedger {
    pub enrolled: bool,
    pub enrollment_month: Option<u32>,
    pub cover_remaining: Money,
    /// Upfront premium plus all monthly fees actually collected.
    pub fees_paid_total: Money,
    /// (month, amount) of every cover draw, in order.
    pub draws: Vec<(u32, Money)>,
}

impl CoverLedger {
    pub fn new() -> Self {
        CoverLedger {
            enrolled: false,
            enrollment_month: None,
            cover_remaining: Money::ZERO,
            fees_paid_total: Money::ZERO,
            draws: Vec::new(),
        }
    }

    /// Enrols at `month`; the premium is recorded as collected.
    pub fn enroll(&mut self, product: &Product, month: u32) {
        self.enrolled = true;
        self.enrollment_month = Some(month);
        self.cover_remaining = product.total_cover;
        self.fees_paid_total += product.upfront_premium;
    }

    pub fn record_fee(&mut self, amount: Money) {
        self.fees_paid_total += amount;
    }

    pub fn total_drawn(&self) -> Money {
        self.draws.iter().map(|&(_, amount)| amount).sum()
    }

    /// Draws `min(shortfall, cover_remaining, cap)` toward the month's bill.
    pub fn draw(&mut self, month: u32, shortfall: Money, cap: Money) -> Result<Money, ProductError> {
        if !self.enrolled {
            return Err(ProductError::NotEnrolled);
        }
        let draw = shortfall.min(self.cover_remaining).min(cap).clamp_min_zero();
        if draw > self.cover_remaining {
            return Err(ProductError::DrawExceedsCover { draw, remaining: self.cover_remaining });
        }
        if !draw.is_zero() {
            self.cover_remaining -= draw;
            self.draws.push((month, draw));
        }
        Ok(draw)
    }

    /// Exact conservation: cover drawn plus cover remaining equals the
    /// enrolled cover amount.
    pub fn conserves(&self, product: &Product) -> bool {
        if !self.enrolled {
            return self.cover_remaining.is_zero() && self.draws.is_empty();
        }
        self.total_drawn() + self.cover_remaining == product.total_cover
    }
}

impl Default for CoverLedger {
    fn default() -> Self {
        CoverLedger::new()
    }
}

/// The month's effective housing expense `m + fee - cover draw`.
pub fn monthly_housing_expense(
    product: &Product,
    ledger: &CoverLedger,
    m: Money,
    cover_draw: Money,
) -> Money {
    let fee = if ledger.enrolled { product.monthly_fee } else { Money::ZERO };
    m + fee - cover_draw
}

//! Borrower decision process: state, observation encoding, utility, and
//! action legality.
//!
//! Each month a borrower makes a payment decision (skip / pay / pay and
//! enrol) and, if delinquent with a pending offer, a relief decision
//! (accept / reject). The monthly reward is a preference-weighted mix of
//! liquidity and index-scaled equity.

use serde::{Deserialize, Serialize};

use crate::economy::EconomyState;
use crate::money::Money;
use crate::population::{BorrowerProfile, IncomeGroup, ORIGINAL_TERM_MONTHS};
use crate::products::{CoverLedger, Product};
use crate::servicing::{LoanAccount, LoanStatus, ReliefOffer};

pub const PAYMENT_ACTIONS: usize = 3;
pub const RELIEF_ACTIONS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PaymentAction {
    Skip,
    Pay,
    PayAndEnroll,
}

impl PaymentAction {
    pub fn index(self) -> usize {
        match self {
            PaymentAction::Skip => 0,
            PaymentAction::Pay => 1,
            PaymentAction::PayAndEnroll => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(PaymentAction::Skip),
            1 => Some(PaymentAction::Pay),
            2 => Some(PaymentAction::PayAndEnroll),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            PaymentAction::Skip => "skip",
            PaymentAction::Pay => "pay",
            PaymentAction::PayAndEnroll => "pay_and_enroll",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReliefAction {
    Accept,
    Reject,
}

impl ReliefAction {
    pub fn index(self) -> usize {
        match self {
            ReliefAction::Accept => 0,
            ReliefAction::Reject => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(ReliefAction::Accept),
            1 => Some(ReliefAction::Reject),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ReliefAction::Accept => "accept",
            ReliefAction::Reject => "reject",
        }
    }
}

/// Decision phase within a month.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Payment,
    Relief,
}

/// A borrower's evolving monthly state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BorrowerState {
    pub id: usize,
    pub gamma: f64,
    pub group: IncomeGroup,
    /// Current monthly income after shocks.
    pub income: Money,
    pub nonhousing_expenses: Money,
    pub savings: Money,
    pub account: LoanAccount,
    pub ledger: CoverLedger,
    /// Absolute product available or held by this borrower.
    pub product: Product,
    pub delinquent_ever: bool,
    /// Months left on a product-granted fee-free payment pause.
    pub product_pause_remaining: u32,
    pub product_pause_used: bool,
}

impl BorrowerState {
    pub fn from_profile(id: usize, profile: &BorrowerProfile, product: Product) -> Self {
        BorrowerState {
            id,
            gamma: profile.liquidity_preference,
            group: profile.group,
            income: profile.income0,
            nonhousing_expenses: profile.nonhousing_expenses0,
            savings: profile.savings0,
            account: LoanAccount::new(
                profile.monthly_payment,
                profile.total_loan,
                profile.paid_to_date,
                profile.term_remaining,
            ),
            ledger: CoverLedger::new(),
            product,
            delinquent_ever: false,
            product_pause_remaining: 0,
            product_pause_used: false,
        }
    }

    /// Fee owed this month: the monthly fee whenever enrolled and not
    /// foreclosed, except during a product-granted pause.
    pub fn fee_due(&self) -> Money {
        if self.ledger.enrolled
            && self.account.status != LoanStatus::Foreclosed
            && self.product_pause_remaining == 0
        {
            self.product.monthly_fee
        } else {
            Money::ZERO
        }
    }

    /// This month's housing obligation before any cover draw.
    pub fn housing_obligation(&self) -> Money {
        self.account.scheduled_payment() + self.fee_due()
    }

    /// Cash on hand this month after non-housing expenses.
    pub fn available_cash(&self) -> Money {
        (self.savings + self.income - self.nonhousing_expenses).clamp_min_zero()
    }

    /// Equity share in [0, 1]; zero after foreclosure.
    pub fn equity(&self) -> f64 {
        if self.account.status == LoanStatus::Foreclosed {
            return 0.0;
        }
        if self.account.total_loan.is_zero() {
            return 1.0;
        }
        (self.account.total_paid.cents() as f64 / self.account.total_loan.cents() as f64)
            .clamp(0.0, 1.0)
    }
}

/// Liquidity term `1 - min(expense / income, 1)`.
///
/// A zero obligation means full liquidity; a zero income with a positive
/// obligation means none.
pub fn liquidity(housing_expense: Money, income: Money) -> f64 {
    if housing_expense <= Money::ZERO {
        return 1.0;
    }
    if income <= Money::ZERO {
        return 0.0;
    }
    let ratio = housing_expense.cents() as f64 / income.cents() as f64;
    1.0 - ratio.min(1.0)
}

/// Monthly utility `gamma * liquidity + (1 - gamma) * h * equity`.
pub fn utility_parts(gamma: f64, housing_expense: Money, income: Money, equity: f64, hpi: f64) -> f64 {
    gamma * liquidity(housing_expense, income) + (1.0 - gamma) * hpi * equity
}

/// Utility of a borrower's current state under index `hpi`, using the
/// current housing obligation as the expense term.
pub fn utility(state: &BorrowerState, hpi: f64) -> f64 {
    utility_parts(state.gamma, state.housing_obligation(), state.income, state.equity(), hpi)
}

/// Observation clipping bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationConfig {
    pub buffer_clip: f64,
    pub missed_ratio_clip: f64,
}

impl Default for ObservationConfig {
    fn default() -> Self {
        ObservationConfig { buffer_clip: 10.0, missed_ratio_clip: 10.0 }
    }
}

/// Normalised product parameters as seen by the policy.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ProductObs {
    /// Upfront premium in units of the monthly payment, in [0, 1].
    pub p0: f64,
    /// Monthly fee in units of the monthly payment, in [0, 1].
    pub p: f64,
    /// Cover in fractions of full-episode cover, in [0, 1].
    pub v_frac: f64,
    /// Forbearance months over 12, in [0, 1].
    pub f_frac: f64,
}

impl ProductObs {
    /// Encodes an absolute product for a borrower paying `m`, saturating at
    /// the scaled-product box.
    pub fn from_absolute(product: &Product, m: Money, episode_months: u32) -> Self {
        let m_c = m.cents().max(1) as f64;
        let horizon = f64::from(episode_months.max(1));
        ProductObs {
            p0: (product.upfront_premium.cents() as f64 / m_c).clamp(0.0, 1.0),
            p: (product.monthly_fee.cents() as f64 / m_c).clamp(0.0, 1.0),
            v_frac: (product.total_cover.cents() as f64 / (m_c * horizon)).clamp(0.0, 1.0),
            f_frac: (f64::from(product.forbearance_months) / 12.0).clamp(0.0, 1.0),
        }
    }
}

pub const OBS_DIM: usize = 19;

const STATUS_ONE_HOT: usize = 7;

/// Flat observation vector; see `index` constants for the layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation(pub Vec<f64>);

pub mod obs_index {
    pub const GAMMA: usize = 0;
    pub const LIQUIDITY: usize = 1;
    pub const EQUITY: usize = 2;
    pub const HPI: usize = 3;
    pub const BUFFER: usize = 4;
    pub const PRODUCT_P0: usize = 5;
    pub const PRODUCT_P: usize = 6;
    pub const PRODUCT_V: usize = 7;
    pub const PRODUCT_F: usize = 8;
    pub const ENROLLED: usize = 9;
    pub const STATUS_START: usize = 10;
    pub const MISSED_RATIO: usize = 17;
    pub const TERM_FRAC: usize = 18;
}

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Builds the policy observation for one borrower.
///
/// The liquidity and buffer terms use the current month's housing obligation
/// (schedule plus fee, before any cover draw), which is known before the
/// decision is made. Every component lands in [0, 1]: the buffer and
/// missed-balance ratios are clipped at their configured maxima and then
/// divided by them, so a buffer of five months under the default clip of ten
/// shows up as 0.5.
pub fn observe(
    state: &BorrowerState,
    economy: &EconomyState,
    product_obs: ProductObs,
    cfg: &ObservationConfig,
) -> Observation {
    let mut v = vec![0.0; OBS_DIM];
    let obligation = state.housing_obligation();
    v[obs_index::GAMMA] = state.gamma;
    v[obs_index::LIQUIDITY] = liquidity(obligation, state.income);
    v[obs_index::EQUITY] = state.equity();
    v[obs_index::HPI] = economy.hpi.clamp(0.0, 1.0);
    let buffer = if obligation > Money::ZERO {
        (state.savings.cents() as f64 / obligation.cents() as f64).clamp(0.0, cfg.buffer_clip)
    } else {
        cfg.buffer_clip
    };
    v[obs_index::BUFFER] = buffer / cfg.buffer_clip;
    v[obs_index::PRODUCT_P0] = product_obs.p0;
    v[obs_index::PRODUCT_P] = product_obs.p;
    v[obs_index::PRODUCT_V] = product_obs.v_frac;
    v[obs_index::PRODUCT_F] = product_obs.f_frac;
    v[obs_index::ENROLLED] = if state.ledger.enrolled { 1.0 } else { 0.0 };
    let status = state.account.status.index();
    debug_assert!(status < STATUS_ONE_HOT);
    v[obs_index::STATUS_START + status] = 1.0;
    let m = state.account.monthly_payment;
    let missed_ratio = if m > Money::ZERO {
        (state.account.missed_balance.cents() as f64 / m.cents() as f64)
            .clamp(0.0, cfg.missed_ratio_clip)
    } else {
        0.0
    };
    v[obs_index::MISSED_RATIO] = missed_ratio / cfg.missed_ratio_clip;
    v[obs_index::TERM_FRAC] =
        f64::from(state.account.term_remaining) / f64::from(ORIGINAL_TERM_MONTHS);
    Observation(v)
}

/// Legal payment actions: skip and pay are always allowed for an active
/// account; enrolment additionally requires a non-null product, no prior
/// enrolment, and enough cash for the full upfront premium.
pub fn legal_payment_actions(state: &BorrowerState) -> [bool; PAYMENT_ACTIONS] {
    let can_enroll = !state.ledger.enrolled
        && !state.product.is_null()
        && state.available_cash() >= state.product.upfront_premium;
    [true, true, can_enroll]
}

/// Legal relief responses: everything below foreclosure can be refused.
pub fn legal_relief_actions(offer: &ReliefOffer) -> [bool; RELIEF_ACTIONS] {
    match offer {
        ReliefOffer::Foreclosure => [true, false],
        _ => [true, true],
    }
}

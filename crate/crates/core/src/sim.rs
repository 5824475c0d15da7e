//! The monthly world step: shocks, payments, servicing, relief, feedback.
//!
//! One step is one month. Within a month the order is fixed: income shocks,
//! payment decisions with automatic cover draws, amortization and
//! delinquency detection, relief offers and decisions, foreclosure
//! aggregation into the house price index, savings update, and finally the
//! utility reward against the updated index. Worlds are deterministic given
//! their borrower list and an RNG stream; parallel rollouts own disjoint
//! worlds.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::borrower::{
    legal_payment_actions, legal_relief_actions, observe, utility_parts, BorrowerState,
    Observation, ObservationConfig, PaymentAction, ProductObs, ReliefAction,
};
use crate::economy::{apply_shock, EconomyError, EconomyState, ShockConfig, ShockMode};
use crate::money::Money;
use crate::population::{sample_borrower_with, GammaMode, IncomeGroup, PopulationCalibration};
use crate::products::{Product, ProductError, ScaledProductParams};
use crate::servicing::{LoanStatus, ReliefConfig, ReliefOffer, ServicingError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("illegal {phase} action `{action}` for borrower {borrower}")]
    IllegalAction {
        borrower: usize,
        phase: &'static str,
        action: String,
    },
    #[error(transparent)]
    Servicing(#[from] ServicingError),
    #[error(transparent)]
    Product(#[from] ProductError),
    #[error(transparent)]
    Economy(#[from] EconomyError),
}

/// The product offered to every borrower this episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ProductSpec {
    /// Parameters in units of each borrower's own monthly payment.
    Scaled {
        params: ScaledProductParams,
        forbearance_months: u32,
    },
    /// One absolute product applied to everyone.
    Absolute(Product),
}

impl ProductSpec {
    pub const NULL: ProductSpec = ProductSpec::Scaled {
        params: ScaledProductParams::NULL,
        forbearance_months: 0,
    };

    pub fn scaled(params: ScaledProductParams) -> Self {
        ProductSpec::Scaled { params, forbearance_months: 0 }
    }

    /// Realises the absolute product for a borrower paying `m`.
    pub fn for_borrower(&self, m: Money) -> Product {
        match self {
            ProductSpec::Scaled { params, forbearance_months } => {
                let mut p = params.scale(m);
                p.forbearance_months = *forbearance_months;
                p
            }
            ProductSpec::Absolute(p) => *p,
        }
    }

    /// Normalised parameters as the policy sees them.
    pub fn observation(&self, m: Money, episode_months: u32) -> ProductObs {
        match self {
            ProductSpec::Scaled { params, forbearance_months } => ProductObs {
                p0: params.p0,
                p: params.p,
                v_frac: params.v / f64::from(episode_months.max(1)),
                f_frac: (f64::from(*forbearance_months) / 12.0).min(1.0),
            },
            ProductSpec::Absolute(p) => ProductObs::from_absolute(p, m, episode_months),
        }
    }
}

/// Who a scripted shock hits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ScriptedScope {
    /// Every borrower (systemic shock).
    All,
    /// Each borrower independently with this probability.
    Fraction(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub episode_months: u32,
    pub relief: ReliefConfig,
    pub shock: ShockConfig,
    pub foreclosure_impact: f64,
    pub hpi_floor: f64,
    pub observation: ObservationConfig,
    /// Hard-disables the product subsystem (fees, cover, enrolment).
    pub products_enabled: bool,
    pub scripted_scope: ScriptedScope,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            episode_months: 120,
            relief: ReliefConfig::default(),
            shock: ShockConfig::default(),
            foreclosure_impact: 0.01,
            hpi_floor: 1e-6,
            observation: ObservationConfig::default(),
            products_enabled: true,
            scripted_scope: ScriptedScope::All,
        }
    }
}

pub const TRACE_SCHEMA_VERSION: u32 = 1;

/// One borrower-month of the simulation log. Monetary columns are integer
/// cents; the schema is versioned by [`TRACE_SCHEMA_VERSION`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub month: u32,
    pub borrower: usize,
    pub group: IncomeGroup,
    pub gamma: f64,
    pub income_cents: i64,
    pub expenses_cents: i64,
    pub savings_before_cents: i64,
    pub savings_after_cents: i64,
    pub scheduled_cents: i64,
    pub fee_due_cents: i64,
    pub loan_paid_cents: i64,
    pub fee_paid_cents: i64,
    pub premium_paid_cents: i64,
    pub cover_draw_cents: i64,
    /// Non-housing expenses that could not be paid (savings floor).
    pub expense_shortfall_cents: i64,
    /// Realised housing expense: obligation minus cover draw.
    pub housing_expense_cents: i64,
    /// Original mortgage payment m, constant over the episode.
    pub mortgage_payment_cents: i64,
    /// Effective base payment (reduced after a modification).
    pub base_payment_cents: i64,
    pub missed_balance_cents: i64,
    pub total_paid_cents: i64,
    pub total_loan_cents: i64,
    pub term_remaining: u32,
    pub status: String,
    pub payment_action: String,
    pub relief_offer: String,
    pub relief_action: String,
    pub enrolled: bool,
    pub cover_remaining_cents: i64,
    pub fees_paid_total_cents: i64,
    pub missed_this_month: bool,
    pub foreclosed_this_month: bool,
    pub hpi: f64,
    pub reward: f64,
}

/// A full episode log plus the context needed to interpret it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub schema_version: u32,
    pub episode_months: u32,
    pub n_borrowers: usize,
    pub product: ProductSpec,
    pub rows: Vec<TraceRow>,
}

impl EpisodeTrace {
    /// One CSV row per borrower-month.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        for row in &self.rows {
            out.serialize(row)?;
        }
        out.flush()?;
        Ok(())
    }

    /// One JSON object per line, rows only; episode metadata goes first.
    pub fn write_jsonl<W: std::io::Write>(&self, mut writer: W) -> std::io::Result<()> {
        let header = serde_json::json!({
            "schema_version": self.schema_version,
            "episode_months": self.episode_months,
            "n_borrowers": self.n_borrowers,
            "product": self.product,
        });
        writeln!(writer, "{header}")?;
        for row in &self.rows {
            writeln!(writer, "{}", serde_json::to_string(row).expect("row serializes"))?;
        }
        Ok(())
    }
}

/// Per-borrower flags for one month, used by trajectory builders.
#[derive(Debug, Clone, Copy, Default)]
pub struct BorrowerMonthFlags {
    pub payment_decided: bool,
    pub relief_decided: bool,
    /// Account is terminal at the end of this month.
    pub terminal: bool,
}

#[derive(Debug, Clone)]
pub struct MonthReport {
    pub month: u32,
    pub rewards: Vec<f64>,
    pub flags: Vec<BorrowerMonthFlags>,
    pub foreclosures: u32,
    pub done: bool,
}

/// Supplies the two monthly decisions. The world validates legality and
/// fails with a contract error on an illegal action.
pub trait Decider {
    fn decide_payment(
        &mut self,
        borrower: usize,
        obs: &Observation,
        mask: [bool; 3],
    ) -> PaymentAction;

    fn decide_relief(
        &mut self,
        borrower: usize,
        obs: &Observation,
        offer: &ReliefOffer,
        mask: [bool; 2],
    ) -> ReliefAction;
}

/// Always answers the same; handy for tests and baselines.
pub struct FixedDecider {
    pub payment: PaymentAction,
    pub relief: ReliefAction,
}

impl Decider for FixedDecider {
    fn decide_payment(&mut self, _: usize, _: &Observation, mask: [bool; 3]) -> PaymentAction {
        if mask[self.payment.index()] {
            self.payment
        } else {
            PaymentAction::Pay
        }
    }

    fn decide_relief(
        &mut self,
        _: usize,
        _: &Observation,
        _: &ReliefOffer,
        mask: [bool; 2],
    ) -> ReliefAction {
        if mask[self.relief.index()] {
            self.relief
        } else {
            ReliefAction::Accept
        }
    }
}

/// Uniform over legal actions; used for fuzzing.
pub struct RandomDecider {
    pub rng: ChaCha8Rng,
}

impl Decider for RandomDecider {
    fn decide_payment(&mut self, _: usize, _: &Observation, mask: [bool; 3]) -> PaymentAction {
        let legal: Vec<usize> = (0..3).filter(|&i| mask[i]).collect();
        PaymentAction::from_index(legal[self.rng.gen_range(0..legal.len())]).expect("legal index")
    }

    fn decide_relief(
        &mut self,
        _: usize,
        _: &Observation,
        _: &ReliefOffer,
        mask: [bool; 2],
    ) -> ReliefAction {
        let legal: Vec<usize> = (0..2).filter(|&i| mask[i]).collect();
        ReliefAction::from_index(legal[self.rng.gen_range(0..legal.len())]).expect("legal index")
    }
}

/// What the cash phase settled for one borrower this month.
struct CashOutcome {
    savings_before: Money,
    income: Money,
    expenses: Money,
    expense_shortfall: Money,
    premium_paid: Money,
    scheduled: Money,
    fee_due: Money,
    draw: Money,
    fee_paid: Money,
    loan_paid: Money,
}

impl CashOutcome {
    /// The month's housing expense `scheduled + fee - cover draw`; an
    /// obligation, so a skipped payment does not reduce it.
    fn housing_expense(&self) -> Money {
        self.scheduled + self.fee_due - self.draw
    }
}

pub struct World {
    pub cfg: WorldConfig,
    pub t: u32,
    pub economy: EconomyState,
    pub borrowers: Vec<BorrowerState>,
    product_spec: ProductSpec,
    trace: Vec<TraceRow>,
}

impl World {
    pub fn new(
        cfg: WorldConfig,
        profiles: &[crate::population::BorrowerProfile],
        product: ProductSpec,
    ) -> World {
        let economy = EconomyState::new(cfg.foreclosure_impact, cfg.hpi_floor);
        let borrowers = profiles
            .iter()
            .enumerate()
            .map(|(id, p)| {
                let absolute = if cfg.products_enabled {
                    product.for_borrower(p.monthly_payment)
                } else {
                    Product::NULL
                };
                BorrowerState::from_profile(id, p, absolute)
            })
            .collect();
        World { cfg, t: 0, economy, borrowers, product_spec: product, trace: Vec::new() }
    }

    /// Samples `n` borrowers from a calibration and builds the world.
    pub fn from_calibration(
        cfg: WorldConfig,
        calib: &PopulationCalibration,
        n: usize,
        gamma: GammaMode,
        product: ProductSpec,
        rng: &mut ChaCha8Rng,
    ) -> World {
        let profiles: Vec<_> = (0..n).map(|_| sample_borrower_with(calib, gamma, rng)).collect();
        World::new(cfg, &profiles, product)
    }

    pub fn done(&self) -> bool {
        self.t >= self.cfg.episode_months
            || self.borrowers.iter().all(|b| b.account.status.is_terminal())
    }

    pub fn product_obs(&self, borrower: usize) -> ProductObs {
        if !self.cfg.products_enabled {
            return ProductObs::default();
        }
        self.product_spec
            .observation(self.borrowers[borrower].account.monthly_payment, self.cfg.episode_months)
    }

    pub fn observe_borrower(&self, borrower: usize) -> Observation {
        observe(
            &self.borrowers[borrower],
            &self.economy,
            self.product_obs(borrower),
            &self.cfg.observation,
        )
    }

    pub fn into_trace(self) -> EpisodeTrace {
        EpisodeTrace {
            schema_version: TRACE_SCHEMA_VERSION,
            episode_months: self.cfg.episode_months,
            n_borrowers: self.borrowers.len(),
            product: self.product_spec,
            rows: self.trace,
        }
    }

    fn apply_shocks(&mut self, t: u32, rng: &mut ChaCha8Rng) {
        match &self.cfg.shock.mode {
            ShockMode::Training => {
                // independent per-borrower shocks, fixed id order
                for b in &mut self.borrowers {
                    if let Some(s) = self.cfg.shock.sample_shock(t, rng) {
                        b.income = apply_shock(b.income, s);
                    }
                }
            }
            ShockMode::Scripted(_) => {
                if let Some(s) = self.cfg.shock.sample_shock(t, rng) {
                    match self.cfg.scripted_scope {
                        ScriptedScope::All => {
                            for b in &mut self.borrowers {
                                b.income = apply_shock(b.income, s);
                            }
                        }
                        ScriptedScope::Fraction(f) => {
                            for b in &mut self.borrowers {
                                if rng.gen::<f64>() < f {
                                    b.income = apply_shock(b.income, s);
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    /// Settles the month's cash flows for borrower `i` under `action`.
    fn settle_cash(&mut self, i: usize, action: Option<PaymentAction>, t: u32) -> Result<CashOutcome, SimError> {
        let products_enabled = self.cfg.products_enabled;
        let b = &mut self.borrowers[i];
        let savings_before = b.savings;
        let income = b.income;
        let expenses = b.nonhousing_expenses;

        // non-housing expenses come first; the savings floor leaves any
        // residual as an expense shortfall
        let cash = savings_before + income - expenses;
        let expense_shortfall = (-cash).clamp_min_zero();
        let mut avail = cash.clamp_min_zero();

        // the action mask guarantees the premium is affordable
        let mut premium_paid = Money::ZERO;
        if action == Some(PaymentAction::PayAndEnroll) && products_enabled {
            let p0 = b.product.upfront_premium;
            debug_assert!(avail >= p0, "enrolment offered without funds");
            avail -= p0;
            premium_paid = p0;
            let product = b.product;
            b.ledger.enroll(&product, t);
        }

        let scheduled = b.account.scheduled_payment();
        let fee_due = if products_enabled { b.fee_due() } else { Money::ZERO };
        let attempts_payment = matches!(action, Some(PaymentAction::Pay | PaymentAction::PayAndEnroll));
        // skipped months still owe the product fee; terminal accounts have
        // zero schedule and only the fee is collected
        let obligation = if attempts_payment { scheduled + fee_due } else { fee_due };

        let from_cash = avail.min(obligation);
        let mut draw = Money::ZERO;
        if attempts_payment && b.ledger.enrolled && products_enabled {
            let shortfall = obligation - from_cash;
            if shortfall > Money::ZERO {
                let cap = obligation.min(b.account.base_payment() + b.product.monthly_fee);
                draw = b.ledger.draw(t, shortfall, cap)?;
            }
        }
        let funds = from_cash + draw;
        let fee_paid = fee_due.min(funds);
        let loan_paid = funds - fee_paid;
        if fee_paid > Money::ZERO {
            b.ledger.record_fee(fee_paid);
        }
        b.savings = avail - from_cash;

        Ok(CashOutcome {
            savings_before,
            income,
            expenses,
            expense_shortfall,
            premium_paid,
            scheduled,
            fee_due,
            draw,
            fee_paid,
            loan_paid,
        })
    }

    /// Advances the world by one month.
    pub fn step<D: Decider>(&mut self, decider: &mut D, rng: &mut ChaCha8Rng) -> Result<MonthReport, SimError> {
        let t = self.t;
        let n = self.borrowers.len();

        self.apply_shocks(t, rng);

        let mut flags = vec![BorrowerMonthFlags::default(); n];
        let mut rows = Vec::with_capacity(n);
        let mut foreclosures = 0u32;

        for i in 0..n {
            let active = !self.borrowers[i].account.status.is_terminal();

            // payment decision
            let action = if active {
                let obs = self.observe_borrower(i);
                let mask = legal_payment_actions(&self.borrowers[i]);
                let action = decider.decide_payment(i, &obs, mask);
                if !mask[action.index()] {
                    return Err(SimError::IllegalAction {
                        borrower: i,
                        phase: "payment",
                        action: action.label().into(),
                    });
                }
                flags[i].payment_decided = true;
                Some(action)
            } else {
                None
            };

            let cash = self.settle_cash(i, action, t)?;

            // servicing
            let mut missed_this_month = false;
            if active {
                let outcome = self.borrowers[i].account.amortize_step(cash.loan_paid)?;
                if outcome.new_miss {
                    self.borrowers[i].delinquent_ever = true;
                    missed_this_month = true;
                }
            }
            if self.borrowers[i].product_pause_remaining > 0 {
                self.borrowers[i].product_pause_remaining -= 1;
            }

            // relief
            let mut relief_offer_label = String::new();
            let mut relief_action_label = String::new();
            let mut foreclosed_now = false;
            if self.borrowers[i].account.status == LoanStatus::Delinquent {
                let pause_available = {
                    let b = &self.borrowers[i];
                    self.cfg.products_enabled
                        && b.ledger.enrolled
                        && b.product.forbearance_months > 0
                        && !b.product_pause_used
                };
                if pause_available {
                    let b = &mut self.borrowers[i];
                    let months = b.product.forbearance_months;
                    b.account.enter_product_pause(months)?;
                    b.product_pause_used = true;
                    b.product_pause_remaining = months;
                    relief_offer_label = "product_pause".into();
                    relief_action_label = "granted".into();
                } else {
                    let offer = self.borrowers[i].account.next_relief_offer(&self.cfg.relief)?;
                    relief_offer_label = offer.label().into();
                    let relief_action = if let ReliefOffer::Foreclosure = offer {
                        // not refusable; no decision is queried
                        ReliefAction::Accept
                    } else {
                        let obs = self.observe_borrower(i);
                        let mask = legal_relief_actions(&offer);
                        let action = decider.decide_relief(i, &obs, &offer, mask);
                        if !mask[action.index()] {
                            return Err(SimError::IllegalAction {
                                borrower: i,
                                phase: "relief",
                                action: action.label().into(),
                            });
                        }
                        flags[i].relief_decided = true;
                        action
                    };
                    relief_action_label = relief_action.label().into();
                    let event = self.borrowers[i].account.apply_relief(
                        offer,
                        relief_action == ReliefAction::Accept,
                        &self.cfg.relief,
                    )?;
                    if event.is_some() {
                        foreclosures += 1;
                        foreclosed_now = true;
                    }
                }
            }

            let b = &self.borrowers[i];
            flags[i].terminal = b.account.status.is_terminal();
            rows.push(TraceRow {
                month: t,
                borrower: i,
                group: b.group,
                gamma: b.gamma,
                income_cents: cash.income.cents(),
                expenses_cents: cash.expenses.cents(),
                savings_before_cents: cash.savings_before.cents(),
                savings_after_cents: b.savings.cents(),
                scheduled_cents: cash.scheduled.cents(),
                fee_due_cents: cash.fee_due.cents(),
                loan_paid_cents: cash.loan_paid.cents(),
                fee_paid_cents: cash.fee_paid.cents(),
                premium_paid_cents: cash.premium_paid.cents(),
                cover_draw_cents: cash.draw.cents(),
                expense_shortfall_cents: cash.expense_shortfall.cents(),
                housing_expense_cents: cash.housing_expense().cents(),
                mortgage_payment_cents: b.account.monthly_payment.cents(),
                base_payment_cents: b.account.base_payment().cents(),
                missed_balance_cents: b.account.missed_balance.cents(),
                total_paid_cents: b.account.total_paid.cents(),
                total_loan_cents: b.account.total_loan.cents(),
                term_remaining: b.account.term_remaining,
                status: b.account.status.label().into(),
                payment_action: action.map(|a| a.label().to_string()).unwrap_or_default(),
                relief_offer: relief_offer_label,
                relief_action: relief_action_label,
                enrolled: b.ledger.enrolled,
                cover_remaining_cents: b.ledger.cover_remaining.cents(),
                fees_paid_total_cents: b.ledger.fees_paid_total.cents(),
                missed_this_month,
                foreclosed_this_month: foreclosed_now,
                hpi: 0.0,    // filled below, after the index update
                reward: 0.0, // filled below
            });
        }

        // the index sees this month's foreclosures; rewards use the updated
        // value
        self.economy.update_hpi(foreclosures);

        let mut rewards = vec![0.0; n];
        for (i, row) in rows.iter_mut().enumerate() {
            let b = &self.borrowers[i];
            let housing_expense = Money::from_cents(row.housing_expense_cents);
            let reward =
                utility_parts(b.gamma, housing_expense, b.income, b.equity(), self.economy.hpi);
            rewards[i] = reward;
            row.hpi = self.economy.hpi;
            row.reward = reward;
        }

        self.trace.extend(rows);
        self.t += 1;

        Ok(MonthReport { month: t, rewards, flags, foreclosures, done: self.done() })
    }
}

/// Runs a world to completion under a decider and returns its trace.
pub fn run_episode<D: Decider>(
    mut world: World,
    decider: &mut D,
    rng: &mut ChaCha8Rng,
) -> Result<EpisodeTrace, SimError> {
    while !world.done() {
        world.step(decider, rng)?;
    }
    Ok(world.into_trace())
}

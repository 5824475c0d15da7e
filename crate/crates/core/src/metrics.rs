//! Post-hoc evaluation metrics over episode traces.
//!
//! A borrower is delinquent for the episode if any month's loan payment fell
//! short of that month's schedule. The social index is the worst group-level
//! delinquency rate. Provider cost per borrower is cover actually drawn
//! minus everything collected (premium plus fees); never-enrolled borrowers
//! cost nothing. Shock curves integrate over the non-positive shock grid by
//! the trapezoidal rule. Frontier extraction keeps exactly the non-dominated
//! points under minimisation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::economy::ShockStep;
use crate::num::Scalar;
use crate::population::IncomeGroup;
use crate::sim::EpisodeTrace;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no group rates supplied")]
    NoGroups,
    #[error("shock grid missing point {0}")]
    MissingGridPoint(String),
    #[error("shock grid needs at least two points")]
    GridTooSmall,
    #[error("non-finite coordinate in point {0}")]
    NonFinitePoint(usize),
    #[error("ledger inconsistency for borrower {borrower}: {message}")]
    LedgerMismatch { borrower: usize, message: String },
}

/// Episode-level delinquency rates, overall and by group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelinquencyRates {
    pub overall: f64,
    pub by_group: Vec<(IncomeGroup, f64)>,
    pub n_borrowers: usize,
}

/// Flags each borrower who ever paid less than scheduled, then aggregates.
///
/// Groups without members are omitted (with a warning) rather than reported
/// as zero.
pub fn delinquency_rate(trace: &EpisodeTrace) -> DelinquencyRates {
    let mut flagged: BTreeMap<usize, (IncomeGroup, bool)> = BTreeMap::new();
    for row in &trace.rows {
        let entry = flagged.entry(row.borrower).or_insert((row.group, false));
        entry.1 |= row.missed_this_month;
    }
    let n = flagged.len();
    let delinquent = flagged.values().filter(|(_, d)| *d).count();
    let mut by_group = Vec::new();
    for group in [IncomeGroup::LowIncome, IncomeGroup::Other] {
        let members = flagged.values().filter(|(g, _)| *g == group).count();
        if members == 0 {
            log::warn!("group {group} has no members; omitted from rates");
            continue;
        }
        let bad = flagged.values().filter(|(g, d)| *g == group && *d).count();
        by_group.push((group, bad as f64 / members as f64));
    }
    DelinquencyRates {
        overall: if n == 0 { 0.0 } else { delinquent as f64 / n as f64 },
        by_group,
        n_borrowers: n,
    }
}

/// The min-max social index: the worst group rate (lower is better).
pub fn social_index(rates: &[(IncomeGroup, f64)]) -> Result<f64, MetricsError> {
    rates
        .iter()
        .map(|&(_, r)| r)
        .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |a| a.max(r))))
        .ok_or(MetricsError::NoGroups)
}

/// Provider cost per borrower and in aggregate, in cents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductCost {
    /// Cover drawn minus premium and fees collected, per borrower.
    pub per_borrower_cents: Vec<i64>,
    /// Mean over all borrowers, including never-enrolled ones.
    pub aggregate_cents: f64,
}

impl ProductCost {
    pub fn aggregate_dollars(&self) -> f64 {
        self.aggregate_cents / 100.0
    }
}

/// Computes costs from the trace and cross-checks them against the ledger
/// columns; any mismatch is a conservation failure.
pub fn product_cost(trace: &EpisodeTrace) -> Result<ProductCost, MetricsError> {
    struct Acc {
        drawn: i64,
        collected: i64,
        last_fees_total: i64,
        last_cover_remaining: i64,
        enrolled: bool,
        mortgage_payment: i64,
    }
    let mut per: BTreeMap<usize, Acc> = BTreeMap::new();
    for row in &trace.rows {
        let acc = per.entry(row.borrower).or_insert(Acc {
            drawn: 0,
            collected: 0,
            last_fees_total: 0,
            last_cover_remaining: 0,
            enrolled: false,
            mortgage_payment: row.mortgage_payment_cents,
        });
        acc.drawn += row.cover_draw_cents;
        acc.collected += row.fee_paid_cents + row.premium_paid_cents;
        acc.last_fees_total = row.fees_paid_total_cents;
        acc.last_cover_remaining = row.cover_remaining_cents;
        acc.enrolled |= row.enrolled;
    }

    let mut per_borrower = Vec::with_capacity(per.len());
    let mut total: i64 = 0;
    for (&borrower, acc) in &per {
        if acc.collected != acc.last_fees_total {
            return Err(MetricsError::LedgerMismatch {
                borrower,
                message: format!(
                    "collected {} but ledger says {}",
                    acc.collected, acc.last_fees_total
                ),
            });
        }
        if acc.enrolled {
            let cover = trace
                .product
                .for_borrower(crate::money::Money::from_cents(acc.mortgage_payment))
                .total_cover
                .cents();
            if acc.drawn + acc.last_cover_remaining != cover {
                return Err(MetricsError::LedgerMismatch {
                    borrower,
                    message: format!(
                        "drawn {} + remaining {} != cover {}",
                        acc.drawn, acc.last_cover_remaining, cover
                    ),
                });
            }
        }
        let cost = if acc.enrolled { acc.drawn - acc.collected } else { 0 };
        per_borrower.push(cost);
        total += cost;
    }
    let n = per_borrower.len().max(1);
    Ok(ProductCost { per_borrower_cents: per_borrower, aggregate_cents: total as f64 / n as f64 })
}

/// Trapezoidal rule over `(x, y)` pairs sorted by x.
pub fn trapezoid<S: Scalar>(xs: &[S], ys: &[S]) -> S {
    let mut acc = S::zero();
    let half = S::from_f(0.5);
    for i in 1..xs.len() {
        acc += (xs[i] - xs[i - 1]) * (ys[i] + ys[i - 1]) * half;
    }
    acc
}

/// Integrates a metric over the full non-positive shock grid S⁻.
///
/// Every grid point from -1.0 to 0.0 must be present; a missing point is a
/// contract error naming the shock.
pub fn integrate_over_shocks<S: Scalar>(values: &BTreeMap<ShockStep, S>) -> Result<S, MetricsError> {
    let grid = ShockStep::negative_set();
    if grid.len() < 2 {
        return Err(MetricsError::GridTooSmall);
    }
    let mut xs = Vec::with_capacity(grid.len());
    let mut ys = Vec::with_capacity(grid.len());
    for step in grid {
        let y = values
            .get(&step)
            .ok_or_else(|| MetricsError::MissingGridPoint(step.to_string()))?;
        xs.push(S::from_f(step.value()));
        ys.push(*y);
    }
    Ok(trapezoid(&xs, &ys))
}

/// A product's coordinates in metric space (all axes minimised).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricPoint {
    pub id: String,
    pub coords: Vec<f64>,
}

/// Indices of the non-dominated points, minimising every coordinate.
///
/// Point a dominates b when a <= b on all axes and a < b on at least one;
/// duplicates never dominate each other and are all retained. Two
/// dimensions use a sort-and-sweep; other dimensionalities fall back to
/// pairwise filtering.
pub fn pareto_frontier_indices<S: Scalar>(points: &[Vec<S>]) -> Result<Vec<usize>, MetricsError> {
    for (i, p) in points.iter().enumerate() {
        if p.iter().any(|c| !c.is_finite()) {
            return Err(MetricsError::NonFinitePoint(i));
        }
    }
    if points.is_empty() {
        return Ok(Vec::new());
    }
    let dim = points[0].len();
    if dim == 2 {
        return Ok(sweep_2d(points));
    }
    let mut keep = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let dominated = points.iter().enumerate().any(|(j, q)| j != i && dominates(q, p));
        if !dominated {
            keep.push(i);
        }
    }
    Ok(keep)
}

fn dominates<S: Scalar>(a: &[S], b: &[S]) -> bool {
    let mut strict = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            strict = true;
        }
    }
    strict
}

fn sweep_2d<S: Scalar>(points: &[Vec<S>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[a][0]
            .partial_cmp(&points[b][0])
            .unwrap()
            .then(points[a][1].partial_cmp(&points[b][1]).unwrap())
    });
    let mut keep = Vec::new();
    let mut best_y = S::infinity();
    let mut best_x = S::infinity();
    for &i in &order {
        let (x, y) = (points[i][0], points[i][1]);
        if y < best_y || (y == best_y && x == best_x) {
            keep.push(i);
            best_y = y;
            best_x = x;
        }
    }
    keep.sort_unstable();
    keep
}

/// Frontier over [`MetricPoint`]s, returning indices into the input.
pub fn pareto_frontier(points: &[MetricPoint]) -> Result<Vec<usize>, MetricsError> {
    let coords: Vec<Vec<f64>> = points.iter().map(|p| p.coords.clone()).collect();
    pareto_frontier_indices(&coords)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::money::Money;
    use crate::rng;
    use crate::sim::{ProductSpec, TraceRow, TRACE_SCHEMA_VERSION};
    use rand::Rng;

    fn blank_row(borrower: usize, month: u32, group: IncomeGroup) -> TraceRow {
        TraceRow {
            month,
            borrower,
            group,
            gamma: 0.5,
            income_cents: 500_000,
            expenses_cents: 200_000,
            savings_before_cents: 0,
            savings_after_cents: 0,
            scheduled_cents: 150_000,
            fee_due_cents: 0,
            loan_paid_cents: 150_000,
            fee_paid_cents: 0,
            premium_paid_cents: 0,
            cover_draw_cents: 0,
            expense_shortfall_cents: 0,
            housing_expense_cents: 150_000,
            mortgage_payment_cents: 150_000,
            base_payment_cents: 150_000,
            missed_balance_cents: 0,
            total_paid_cents: 0,
            total_loan_cents: 54_000_000,
            term_remaining: 240,
            status: "current".into(),
            payment_action: "pay".into(),
            relief_offer: String::new(),
            relief_action: String::new(),
            enrolled: false,
            cover_remaining_cents: 0,
            fees_paid_total_cents: 0,
            missed_this_month: false,
            foreclosed_this_month: false,
            hpi: 1.0,
            reward: 0.5,
        }
    }

    fn trace_of(rows: Vec<TraceRow>, product: ProductSpec) -> EpisodeTrace {
        let n = rows.iter().map(|r| r.borrower).max().map_or(0, |m| m + 1);
        EpisodeTrace {
            schema_version: TRACE_SCHEMA_VERSION,
            episode_months: rows.iter().map(|r| r.month).max().map_or(0, |m| m + 1),
            n_borrowers: n,
            product,
            rows,
        }
    }

    #[test]
    fn delinquency_is_the_proportion_of_ever_missed_borrowers() {
        let mut rows = Vec::new();
        for b in 0..100 {
            for month in 0..3 {
                let mut row = blank_row(b, month, IncomeGroup::Other);
                // 30 borrowers miss once at month 1 and cure afterwards
                row.missed_this_month = b < 30 && month == 1;
                rows.push(row);
            }
        }
        let rates = delinquency_rate(&trace_of(rows, ProductSpec::NULL));
        assert!((rates.overall - 0.30).abs() < 1e-12);
        assert_eq!(rates.n_borrowers, 100);
    }

    #[test]
    fn all_on_schedule_means_zero_rates() {
        let rows: Vec<TraceRow> = (0..10)
            .flat_map(|b| {
                let group =
                    if b < 4 { IncomeGroup::LowIncome } else { IncomeGroup::Other };
                (0..2).map(move |m| blank_row(b, m, group))
            })
            .collect();
        let rates = delinquency_rate(&trace_of(rows, ProductSpec::NULL));
        assert_eq!(rates.overall, 0.0);
        assert_eq!(rates.by_group.len(), 2);
        assert!(rates.by_group.iter().all(|&(_, r)| r == 0.0));
    }

    #[test]
    fn one_miss_counts_even_after_curing() {
        // borrower misses at month 5, then a repayment plan cures it;
        // the episode flag stays set
        let mut rows: Vec<TraceRow> = (0..12).map(|m| blank_row(0, m, IncomeGroup::Other)).collect();
        rows[5].missed_this_month = true;
        rows[5].status = "delinquent".into();
        for row in rows.iter_mut().skip(6).take(5) {
            row.status = "repayment_plan".into();
        }
        let rates = delinquency_rate(&trace_of(rows, ProductSpec::NULL));
        assert_eq!(rates.overall, 1.0);
    }

    fn enrolled_rows(
        draws: i64,
        premium: i64,
        monthly_fee: i64,
        months: u32,
        cover: i64,
    ) -> Vec<TraceRow> {
        let mut rows = Vec::new();
        let mut remaining = cover;
        let mut fees_total = 0;
        for m in 0..months {
            let mut row = blank_row(0, m, IncomeGroup::Other);
            row.enrolled = true;
            if m == 0 {
                row.premium_paid_cents = premium;
                fees_total += premium;
            }
            row.fee_due_cents = monthly_fee;
            row.fee_paid_cents = monthly_fee;
            fees_total += monthly_fee;
            // draw everything in the first month for simplicity
            row.cover_draw_cents = if m == 0 { draws } else { 0 };
            if m == 0 {
                remaining -= draws;
            }
            row.cover_remaining_cents = remaining;
            row.fees_paid_total_cents = fees_total;
            rows.push(row);
        }
        rows
    }

    #[test]
    fn product_cost_examples() {
        // cover used 1000, premium 100, fees 200 over 4 months -> 700
        let product = ProductSpec::Absolute(crate::products::Product {
            upfront_premium: Money::from_dollars(100.0),
            monthly_fee: Money::from_dollars(50.0),
            total_cover: Money::from_dollars(5000.0),
            forbearance_months: 0,
        });
        let rows = enrolled_rows(100_000, 10_000, 5_000, 4, 500_000);
        let cost = product_cost(&trace_of(rows, product.clone())).unwrap();
        assert_eq!(cost.per_borrower_cents, vec![70_000]);
        assert!((cost.aggregate_cents - 70_000.0).abs() < 1e-9);

        // never enrolled -> zero cost
        let rows: Vec<TraceRow> = (0..3).map(|m| blank_row(0, m, IncomeGroup::Other)).collect();
        let cost = product_cost(&trace_of(rows, product)).unwrap();
        assert_eq!(cost.per_borrower_cents, vec![0]);

        // enrolled, no draws, 12 months of $150 fees plus a $750 premium:
        // provider profit of $2550
        let product = ProductSpec::Absolute(crate::products::Product {
            upfront_premium: Money::from_dollars(750.0),
            monthly_fee: Money::from_dollars(150.0),
            total_cover: Money::from_dollars(18_000.0),
            forbearance_months: 0,
        });
        let rows = enrolled_rows(0, 75_000, 15_000, 12, 1_800_000);
        let cost = product_cost(&trace_of(rows, product)).unwrap();
        assert_eq!(cost.per_borrower_cents, vec![-255_000]);
    }

    #[test]
    fn product_cost_detects_ledger_mismatch() {
        let product = ProductSpec::Absolute(crate::products::Product {
            upfront_premium: Money::ZERO,
            monthly_fee: Money::ZERO,
            total_cover: Money::from_dollars(1000.0),
            forbearance_months: 0,
        });
        let mut rows = enrolled_rows(50_000, 0, 0, 2, 100_000);
        rows[1].cover_remaining_cents += 1; // corrupt the ledger
        let err = product_cost(&trace_of(rows, product)).unwrap_err();
        assert!(matches!(err, MetricsError::LedgerMismatch { .. }));
    }

    #[test]
    fn social_index_is_the_max() {
        let rates =
            vec![(IncomeGroup::LowIncome, 0.3), (IncomeGroup::Other, 0.1)];
        assert_eq!(social_index(&rates).unwrap(), 0.3);
        let zero = vec![(IncomeGroup::LowIncome, 0.0), (IncomeGroup::Other, 0.0)];
        assert_eq!(social_index(&zero).unwrap(), 0.0);
        assert!(social_index(&[]).is_err());
    }

    #[test]
    fn trapezoid_constant_linear_quadratic() {
        let grid: Vec<f64> = ShockStep::negative_set().iter().map(|s| s.value()).collect();
        let constant: BTreeMap<ShockStep, f64> =
            ShockStep::negative_set().into_iter().map(|s| (s, 1.0)).collect();
        assert!((integrate_over_shocks(&constant).unwrap() - 1.0).abs() < 1e-12);

        let linear: BTreeMap<ShockStep, f64> =
            ShockStep::negative_set().into_iter().map(|s| (s, -s.value())).collect();
        assert!((integrate_over_shocks(&linear).unwrap() - 0.5).abs() < 1e-12);

        // closed-form trapezoid sum for f(s) = s^2 with h = 0.1:
        // h * (f(-1)/2 + sum interior + f(0)/2) = 0.335
        let quad: BTreeMap<ShockStep, f64> =
            ShockStep::negative_set().into_iter().map(|s| (s, s.value() * s.value())).collect();
        let mut expected = 0.0;
        for i in 1..grid.len() {
            expected += 0.05 * (grid[i - 1] * grid[i - 1] + grid[i] * grid[i]);
        }
        assert!((expected - 0.335).abs() < 1e-12);
        assert!((integrate_over_shocks(&quad).unwrap() - 0.335).abs() < 1e-12);
    }

    #[test]
    fn missing_grid_point_names_the_shock() {
        let mut values: BTreeMap<ShockStep, f64> =
            ShockStep::negative_set().into_iter().map(|s| (s, 1.0)).collect();
        values.remove(&ShockStep::new(-3).unwrap());
        match integrate_over_shocks(&values).unwrap_err() {
            MetricsError::MissingGridPoint(s) => assert_eq!(s, "-0.3"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn trapezoid_is_exact_on_affine_functions() {
        let mut rng = rng::stream(31, "trap-affine", 0);
        for _ in 0..100 {
            let a: f64 = rng.gen_range(-5.0..5.0);
            let b: f64 = rng.gen_range(-5.0..5.0);
            let values: BTreeMap<ShockStep, f64> = ShockStep::negative_set()
                .into_iter()
                .map(|s| (s, a * s.value() + b))
                .collect();
            let exact = b - a / 2.0; // integral of a*s+b over [-1, 0]
            assert!((integrate_over_shocks(&values).unwrap() - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn frontier_hand_cases() {
        let points = vec![vec![1.0, 2.0], vec![2.0, 1.0], vec![2.0, 2.0]];
        assert_eq!(pareto_frontier_indices(&points).unwrap(), vec![0, 1]);

        let single = vec![vec![5.0, 5.0]];
        assert_eq!(pareto_frontier_indices(&single).unwrap(), vec![0]);

        // duplicates are both kept
        let dup = vec![vec![1.0, 1.0], vec![1.0, 1.0], vec![0.5, 2.0]];
        assert_eq!(pareto_frontier_indices(&dup).unwrap(), vec![0, 1, 2]);
    }

    fn brute_force_frontier(points: &[Vec<f64>]) -> Vec<usize> {
        (0..points.len())
            .filter(|&i| {
                !points
                    .iter()
                    .enumerate()
                    .any(|(j, q)| j != i && dominates(&q[..], &points[i][..]))
            })
            .collect()
    }

    #[test]
    fn frontier_matches_brute_force_on_random_points() {
        let mut rng = rng::stream(32, "pareto-oracle", 0);
        for case in 0..20 {
            let n = rng.gen_range(1..200);
            let points: Vec<Vec<f64>> =
                (0..n).map(|_| vec![rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0)]).collect();
            let fast = pareto_frontier_indices(&points).unwrap();
            let brute = brute_force_frontier(&points);
            assert_eq!(fast, brute, "case {case}");
        }
    }

    #[test]
    fn frontier_is_idempotent_and_scale_invariant() {
        let mut rng = rng::stream(33, "pareto-props", 0);
        let points: Vec<Vec<f64>> =
            (0..300).map(|_| vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)]).collect();
        let first = pareto_frontier_indices(&points).unwrap();
        let frontier_points: Vec<Vec<f64>> = first.iter().map(|&i| points[i].clone()).collect();
        let second = pareto_frontier_indices(&frontier_points).unwrap();
        assert_eq!(second.len(), frontier_points.len());

        let scaled: Vec<Vec<f64>> =
            points.iter().map(|p| vec![p[0] * 1000.0, p[1] * 0.25]).collect();
        assert_eq!(pareto_frontier_indices(&scaled).unwrap(), first);
    }

    #[test]
    fn frontier_rejects_non_finite() {
        let points = vec![vec![1.0, f64::NAN]];
        assert!(pareto_frontier_indices(&points).is_err());
    }

    #[test]
    fn frontier_works_in_three_dimensions() {
        let points = vec![
            vec![1.0, 1.0, 1.0],
            vec![2.0, 2.0, 2.0], // dominated by the first point
            vec![0.5, 3.0, 1.0],
            vec![1.0, 1.5, 0.5],
        ];
        assert_eq!(pareto_frontier_indices(&points).unwrap(), vec![0, 2, 3]);
    }
}

//! Directional assertions over study results.
//!
//! Each scenario family gets the ordering it is expected to show at one
//! grid level, chosen from the empirical row-missingness fractions alone
//! (never from the errors being tested). Separation is judged against the
//! standard error of the replicate-paired difference.

use std::fmt;

use crate::config::{Cell, Method};
use crate::results::{compare, PairedComparison, RawRecord, Summary};

/// Row-missingness fraction the selection study's headline level aims for.
pub const SELECTION_TARGET_FRACTION: f64 = 0.30;
/// Fraction the NMAR crossover must exceed.
pub const NMAR_MIN_FRACTION: f64 = 0.40;
/// Minimum row-missingness fraction for the Boston housing comparison.
pub const BHD_MIN_FRACTION: f64 = 0.50;
/// Mean imputation may trail BARTm by at most this factor under MCAR.
pub const MCAR_TOLERANCE: f64 = 1.10;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {}: {}", self.name, self.detail)
    }
}

/// Index of the fraction closest to `target` (first on ties).
pub fn level_closest_to(fractions: &[(usize, f64)], target: f64) -> Option<usize> {
    fractions
        .iter()
        .min_by(|a, b| (a.1 - target).abs().total_cmp(&(b.1 - target).abs()))
        .map(|&(l, _)| l)
}

/// Lowest-fraction level whose fraction is at least `threshold`.
pub fn smallest_level_at_least(fractions: &[(usize, f64)], threshold: f64) -> Option<usize> {
    fractions
        .iter()
        .filter(|f| f.1 >= threshold)
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|&(l, _)| l)
}

/// Level with the largest fraction.
pub fn highest_level(fractions: &[(usize, f64)]) -> Option<usize> {
    fractions.iter().max_by(|a, b| a.1.total_cmp(&b.1)).map(|&(l, _)| l)
}

fn fractions(summary: &Summary) -> Vec<(usize, f64)> {
    summary
        .levels
        .iter()
        .map(|l| (l.level, l.row_missing_fraction.mean))
        .collect()
}

fn describe(c: &PairedComparison, a: &str, b: &str) -> String {
    format!(
        "{a} {:.4} vs {b} {:.4}: diff {:.4}, paired SE {:.4}, unpaired SE {:.4}, n {}",
        c.mean_a, c.mean_b, c.mean_diff, c.paired_se, c.unpaired_se, c.n
    )
}

/// `a` has lower mean oosRMSE than `b` by at least one paired SE.
pub fn separated(records: &[RawRecord], level: usize, name: &str, a: (Method, Cell), b: (Method, Cell)) -> Check {
    let label = |(m, c): (Method, Cell)| format!("{}/{}", m.label(), c.label());
    match compare(records, level, a, b) {
        Some(c) => Check {
            name: name.to_string(),
            passed: c.a_better_by(1.0),
            detail: describe(&c, &label(a), &label(b)),
        },
        None => unavailable(name, level),
    }
}

/// `a` has lower mean oosRMSE than `b`.
pub fn ordered(records: &[RawRecord], level: usize, name: &str, a: (Method, Cell), b: (Method, Cell)) -> Check {
    let label = |(m, c): (Method, Cell)| format!("{}/{}", m.label(), c.label());
    match compare(records, level, a, b) {
        Some(c) => Check {
            name: name.to_string(),
            passed: c.mean_a < c.mean_b,
            detail: describe(&c, &label(a), &label(b)),
        },
        None => unavailable(name, level),
    }
}

fn unavailable(name: &str, level: usize) -> Check {
    Check {
        name: name.to_string(),
        passed: false,
        detail: format!("fewer than two paired replicates at level {level}"),
    }
}

/// Selection-model orderings at the level nearest 30% row missingness:
/// all-cases training beats complete-case training on missing test rows,
/// and switching the mechanism off in the test rows helps both.
pub fn selection_ordering(records: &[RawRecord], summary: &Summary) -> Vec<Check> {
    let Some(level) = level_closest_to(&fractions(summary), SELECTION_TARGET_FRACTION) else {
        return vec![unavailable("selection ordering", 0)];
    };
    let frac = summary.row_missing_fraction(level).unwrap_or(0.0);
    let at = |s: &str| format!("{s} (level {level}, {:.0}% rows)", 100.0 * frac);
    vec![
        separated(
            records,
            level,
            &at("all-cases beats complete-case on missing test"),
            (Method::Bartm, Cell::MissingTest),
            (Method::CompleteCase, Cell::MissingTest),
        ),
        separated(
            records,
            level,
            &at("all-cases: mechanism-off test beats missing test"),
            (Method::Bartm, Cell::MdmOffTest),
            (Method::Bartm, Cell::MissingTest),
        ),
        separated(
            records,
            level,
            &at("complete-case: mechanism-off test beats missing test"),
            (Method::CompleteCase, Cell::MdmOffTest),
            (Method::CompleteCase, Cell::MissingTest),
        ),
    ]
}

/// NMAR crossover at the highest level: with enough missingness, knowing
/// that a value is missing beats seeing the value itself.
pub fn nmar_crossover(records: &[RawRecord], summary: &Summary) -> Vec<Check> {
    let Some(level) = highest_level(&fractions(summary)) else {
        return vec![unavailable("nmar crossover", 0)];
    };
    let frac = summary.row_missing_fraction(level).unwrap_or(0.0);
    let name = format!("missing test beats mechanism-off test (level {level}, {:.0}% rows)", 100.0 * frac);
    let mut check = ordered(
        records,
        level,
        &name,
        (Method::Bartm, Cell::MissingTest),
        (Method::Bartm, Cell::MdmOffTest),
    );
    if frac <= NMAR_MIN_FRACTION {
        check.passed = false;
        check.detail = format!("highest level has only {:.1}% rows missing; {}", 100.0 * frac, check.detail);
    }
    vec![check]
}

/// BARTm beats mean imputation by one paired SE at the first level with at
/// least half the rows missing.
pub fn bhd_advantage(records: &[RawRecord], summary: &Summary) -> Vec<Check> {
    let Some(level) = smallest_level_at_least(&fractions(summary), BHD_MIN_FRACTION) else {
        return vec![Check {
            name: "bartm beats mean-impute".into(),
            passed: false,
            detail: format!("no level reaches {:.0}% rows missing", 100.0 * BHD_MIN_FRACTION),
        }];
    };
    let frac = summary.row_missing_fraction(level).unwrap_or(0.0);
    vec![separated(
        records,
        level,
        &format!("bartm beats mean-impute (level {level}, {:.0}% rows)", 100.0 * frac),
        (Method::Bartm, Cell::MissingTest),
        (Method::MeanImpute, Cell::MissingTest),
    )]
}

/// Under MCAR, mean imputation is no more than 10% worse than BARTm at `level`.
pub fn mcar_sanity_at(records: &[RawRecord], summary: &Summary, level: usize) -> Check {
    let frac = summary.row_missing_fraction(level).unwrap_or(0.0);
    let name = format!("mean-impute within 10% of bartm (level {level}, {:.0}% rows)", 100.0 * frac);
    match compare(
        records,
        level,
        (Method::Bartm, Cell::MissingTest),
        (Method::MeanImpute, Cell::MissingTest),
    ) {
        Some(c) => Check {
            name,
            passed: c.mean_b <= MCAR_TOLERANCE * c.mean_a,
            detail: format!("mean-impute / bartm = {:.4} ({})", c.mean_b / c.mean_a, describe(&c, "bartm", "mean_impute")),
        },
        None => unavailable(&name, level),
    }
}

/// Checks implied by a preset's name and mechanism label; empty when the
/// scenario has no stated expectation.
pub fn scenario_checks(mechanism: &str, bhd: bool, records: &[RawRecord], summary: &Summary) -> Vec<Check> {
    match (bhd, mechanism) {
        (false, "mcar" | "mar") => selection_ordering(records, summary),
        (false, "nmar") => nmar_crossover(records, summary),
        (true, "pattern_mixture") => bhd_advantage(records, summary),
        (true, "mcar") => match level_closest_to(&fractions(summary), BHD_MIN_FRACTION) {
            Some(level) => vec![mcar_sanity_at(records, summary, level)],
            None => vec![unavailable("mcar sanity", 0)],
        },
        _ => Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_selection_rules() {
        let f = [(0, 0.0), (1, 0.12), (2, 0.29), (3, 0.37), (4, 0.53), (5, 0.71)];
        assert_eq!(level_closest_to(&f, 0.30), Some(2));
        assert_eq!(smallest_level_at_least(&f, 0.5), Some(4));
        assert_eq!(highest_level(&f), Some(5));
        assert_eq!(smallest_level_at_least(&f, 0.9), None);
    }
}

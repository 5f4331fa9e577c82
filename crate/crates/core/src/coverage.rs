//! Template coverage audits and precision/recall/F1.

use crate::frontend::{Level, PLACEHOLDER};
use crate::{Error, Result};
use num_traits::Float;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

/// Placeholder-aware token alignment. A token that is exactly `<*>` on
/// either side absorbs one nonempty run of tokens from the other side; a
/// token with an embedded `<*>` matches a single token with the placeholder
/// standing for one or more characters.
pub fn match_template(observed: &str, source: &str) -> bool {
    let a: Vec<&str> = observed.split_whitespace().collect();
    let b: Vec<&str> = source.split_whitespace().collect();
    match_tokens(&a, &b)
}

fn match_tokens(mut a: &[&str], mut b: &[&str]) -> bool {
    // Until an exact placeholder shows up on either side, tokens pair off
    // one to one, from the front and from the back.
    while let (Some(x), Some(y)) = (a.first(), b.first()) {
        if *x == PLACEHOLDER || *y == PLACEHOLDER {
            break;
        }
        if !token_eq(x, y) {
            return false;
        }
        (a, b) = (&a[1..], &b[1..]);
    }
    while let (Some(x), Some(y)) = (a.last(), b.last()) {
        if *x == PLACEHOLDER || *y == PLACEHOLDER {
            break;
        }
        if !token_eq(x, y) {
            return false;
        }
        (a, b) = (&a[..a.len() - 1], &b[..b.len() - 1]);
    }
    let (n, m) = (a.len(), b.len());
    // ok[i * w + j]: a[i..] aligns with b[j..].
    let w = m + 1;
    let mut ok = vec![false; (n + 1) * w];
    ok[n * w + m] = true;
    for i in (0..=n).rev() {
        for j in (0..=m).rev() {
            if i == n && j == m {
                continue;
            }
            let wa = i < n && a[i] == PLACEHOLDER;
            let wb = j < m && b[j] == PLACEHOLDER;
            ok[i * w + j] = (wa && ((j + 1)..=m).any(|k| ok[(i + 1) * w + k]))
                || (wb && ((i + 1)..=n).any(|k| ok[k * w + j + 1]))
                || (i < n && j < m && token_eq(a[i], b[j]) && ok[(i + 1) * w + j + 1]);
        }
    }
    ok[0]
}

fn token_eq(x: &str, y: &str) -> bool {
    x == y || (x.contains(PLACEHOLDER) && glob(x, y)) || (y.contains(PLACEHOLDER) && glob(y, x))
}

/// `pat` with each placeholder matching one or more characters.
fn glob(pat: &str, s: &str) -> bool {
    let parts: Vec<&str> = pat.split(PLACEHOLDER).collect();
    let (first, last) = (parts[0], parts[parts.len() - 1]);
    if !s.starts_with(first) || s.len() < first.len() + last.len() || !s.ends_with(last) {
        return false;
    }
    let mut rest = &s[first.len()..s.len() - last.len()];
    for mid in &parts[1..parts.len() - 1] {
        // Each placeholder before `mid` needs at least one character.
        match rest.get(1..).and_then(|r| r.find(mid)) {
            Some(p) => rest = &rest[1 + p + mid.len()..],
            None => return false,
        }
    }
    !rest.is_empty()
}

/// `num / den` in any float type; zero when `den` is zero.
pub fn ratio<T: Float>(num: u64, den: u64) -> T {
    if den == 0 {
        return T::zero();
    }
    T::from(num).expect("u64 converts to float") / T::from(den).expect("u64 converts to float")
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelCoverage {
    pub n_source: u64,
    pub matched: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub system: String,
    pub n_source: u64,
    pub n_observed: u64,
    pub n_observed_matched: u64,
    pub coverage: f64,
    pub unmatched_observed: Vec<String>,
    pub per_level: BTreeMap<Level, LevelCoverage>,
}

/// Share of distinct source patterns matched by at least one observed pattern.
pub fn audit_coverage(system: &str, source: &[(String, Level)], observed: &[String]) -> Result<CoverageReport> {
    let mut seen = HashSet::new();
    let source: Vec<&(String, Level)> = source.iter().filter(|(p, _)| seen.insert(p.as_str())).collect();
    if source.is_empty() {
        return Err(Error::Data("no source templates".into()));
    }
    let tokens: Vec<Vec<&str>> = source.iter().map(|(p, _)| p.split_whitespace().collect()).collect();
    let mut covered = vec![false; source.len()];
    let mut unmatched_observed = Vec::new();
    for o in observed {
        let ot: Vec<&str> = o.split_whitespace().collect();
        let mut any = false;
        for (k, t) in tokens.iter().enumerate() {
            if match_tokens(&ot, t) {
                covered[k] = true;
                any = true;
            }
        }
        if !any {
            unmatched_observed.push(o.clone());
        }
    }
    let mut per_level: BTreeMap<Level, LevelCoverage> = BTreeMap::new();
    for ((_, lvl), c) in source.iter().zip(&covered) {
        let e = per_level.entry(*lvl).or_default();
        e.n_source += 1;
        e.matched += u64::from(*c);
    }
    let n_source = source.len() as u64;
    let n_observed_matched = covered.iter().filter(|c| **c).count() as u64;
    Ok(CoverageReport {
        system: system.to_string(),
        n_source,
        n_observed: observed.len() as u64,
        n_observed_matched,
        coverage: ratio(n_observed_matched, n_source),
        unmatched_observed,
        per_level,
    })
}

pub fn percent(x: f64) -> String {
    format!("{:.2}%", x * 100.0)
}

impl CoverageReport {
    /// Aligned table: system, source templates, observed matches, coverage.
    pub fn render(&self) -> String {
        let mut rows = vec![[
            "System".to_string(),
            "# Source Templates".to_string(),
            "# Observed".to_string(),
            "Coverage".to_string(),
        ]];
        rows.push([self.system.clone(), self.n_source.to_string(), self.n_observed_matched.to_string(), percent(self.coverage)]);
        for (lvl, c) in &self.per_level {
            rows.push([
                format!("  {lvl}"),
                c.n_source.to_string(),
                c.matched.to_string(),
                percent(ratio(c.matched, c.n_source)),
            ]);
        }
        let w: Vec<usize> = (0..4).map(|k| rows.iter().map(|r| r[k].chars().count()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for r in &rows {
            let _ = writeln!(out, "{:<w0$}  {:>w1$}  {:>w2$}  {:>w3$}", r[0], r[1], r[2], r[3], w0 = w[0], w1 = w[1], w2 = w[2], w3 = w[3]);
        }
        let _ = writeln!(out, "\nobserved patterns matching no source template: {}", self.unmatched_observed.len());
        for u in &self.unmatched_observed {
            let _ = writeln!(out, "  {u}");
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrfMetrics<T> {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub precision: T,
    pub recall: T,
    pub f1: T,
}

pub type Prf = PrfMetrics<f64>;

/// Precision, recall and their harmonic mean, with 0 for empty denominators.
pub fn compute_prf<T: Float>(tp: u64, fp: u64, fn_: u64) -> PrfMetrics<T> {
    let precision: T = ratio(tp, tp + fp);
    let recall: T = ratio(tp, tp + fn_);
    let two = T::one() + T::one();
    let f1 = if precision + recall > T::zero() { two * precision * recall / (precision + recall) } else { T::zero() };
    PrfMetrics { tp, fp, fn_, precision, recall, f1 }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Hand-aligned pairs: (observed, source, match).
    const GOLDEN: [(&str, &str, bool); 15] = [
        ("Received block <*>", "Received block <*>", true),
        ("Received block blk_123", "Received block <*>", true),
        ("Deleting block <*>", "Received block <*>", false),
        ("Received block blk_1 of size 67108864", "Received block <*> of size <*>", true),
        ("Received block blk_1 src /10.0.0.1:50010", "Received block <*> dest <*>", false),
        ("Received block blk_1 blk_2", "Received block <*>", true),
        ("Received block", "Received block <*>", false),
        ("<*> block <*>", "Received block blk_9", true),
        ("Served <*> to <*>", "Served block blk_1 to /10.0.0.2", true),
        ("PacketResponder <*> for block <*> terminating", "PacketResponder <*> for block <*> terminating", true),
        ("received block", "Received block", false),
        ("size=<*>", "size=42", true),
        ("size=<*>", "size=", false),
        ("<*>", "anything at all", true),
        ("Verification succeeded for <*>", "Verification failed for <*>", false),
    ];

    #[test]
    fn golden_alignment_table() {
        for (o, s, want) in GOLDEN {
            assert_eq!(match_template(o, s), want, "{o:?} vs {s:?}");
        }
    }

    /// Direct recursive reading of the alignment rule.
    fn reference(a: &[&str], b: &[&str]) -> bool {
        if a.is_empty() && b.is_empty() {
            return true;
        }
        (a.first() == Some(&PLACEHOLDER) && (1..=b.len()).any(|k| reference(&a[1..], &b[k..])))
            || (b.first() == Some(&PLACEHOLDER) && (1..=a.len()).any(|k| reference(&a[k..], &b[1..])))
            || (!a.is_empty() && !b.is_empty() && token_eq(a[0], b[0]) && reference(&a[1..], &b[1..]))
    }

    proptest::proptest! {
        #[test]
        fn shortcuts_agree_with_reference(
            a in proptest::collection::vec(proptest::sample::select(vec!["a", "b", "<*>", "a<*>", "x=1"]), 0..7),
            b in proptest::collection::vec(proptest::sample::select(vec!["a", "b", "<*>", "ab", "x=<*>"]), 0..7),
        ) {
            proptest::prop_assert_eq!(match_tokens(&a, &b), reference(&a, &b));
        }
    }

    #[test]
    fn two_of_five() {
        let src: Vec<(String, Level)> = ["a <*>", "b <*>", "c", "d", "e"].iter().map(|p| (p.to_string(), Level::Info)).collect();
        let r = audit_coverage("fixture", &src, &["a 1".into(), "c".into(), "zzz".into()]).unwrap();
        assert_eq!((r.n_observed_matched, percent(r.coverage)), (2, "40.00%".to_string()));
        assert_eq!(r.unmatched_observed, ["zzz"]);
        assert!(audit_coverage("x", &[], &[]).is_err());
    }

    #[test]
    fn prf_examples() {
        let p: Prf = compute_prf(1, 0, 0);
        assert_eq!((p.precision, p.recall, p.f1), (1.0, 1.0, 1.0));
        let p: Prf = compute_prf(1, 1, 0);
        assert_eq!((p.precision, p.recall), (0.5, 1.0));
        assert!((p.f1 - 2.0 / 3.0).abs() < 1e-15);
        let p: PrfMetrics<f32> = compute_prf(0, 0, 0);
        assert_eq!((p.precision, p.recall, p.f1), (0.0, 0.0, 0.0));
    }
}

//! Word error rate over minimum-edit-distance alignments, with the
//! severity-tier breakdown used by the reports.

use std::collections::BTreeMap;

use crate::corpus::Severity;
use crate::error::{Error, Result};

/// Levenshtein distance with unit costs.
pub fn edit_distance(reference: &[usize], hypothesis: &[usize]) -> usize {
    let (n, m) = (reference.len(), hypothesis.len());
    let mut prev: Vec<usize> = (0..=m).collect();
    let mut cur = vec![0usize; m + 1];
    for i in 1..=n {
        cur[0] = i;
        for j in 1..=m {
            let sub = prev[j - 1] + usize::from(reference[i - 1] != hypothesis[j - 1]);
            cur[j] = sub.min(prev[j] + 1).min(cur[j - 1] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m]
}

#[derive(Debug, Clone, Default)]
pub struct WerAccumulator {
    edits: usize,
    ref_len: usize,
}

impl WerAccumulator {
    pub fn add(&mut self, reference: &[usize], hypothesis: &[usize]) {
        self.edits += edit_distance(reference, hypothesis);
        self.ref_len += reference.len();
    }

    pub fn rate(&self) -> Option<f64> {
        if self.ref_len == 0 {
            None
        } else {
            Some(self.edits as f64 / self.ref_len as f64)
        }
    }
}

/// Corpus-level WER plus per-severity rates. Tiers absent from the scored
/// set are absent from the map rather than reported as zero.
#[derive(Debug, Clone)]
pub struct WerReport {
    pub overall: f64,
    pub per_severity: BTreeMap<Severity, f64>,
    pub n_utterances: usize,
}

/// (S+D+I)/N over the whole corpus via minimum-edit alignment.
pub fn word_error_rate(refs: &[Vec<usize>], hyps: &[Vec<usize>]) -> Result<f64> {
    if refs.len() != hyps.len() {
        return Err(Error::Data(format!(
            "reference and hypothesis counts differ: {} vs {}",
            refs.len(),
            hyps.len()
        )));
    }
    let mut acc = WerAccumulator::default();
    for (r, h) in refs.iter().zip(hyps) {
        acc.add(r, h);
    }
    acc.rate().ok_or(Error::UndefinedRate)
}

pub fn score_with_breakdown(items: &[(Severity, Vec<usize>, Vec<usize>)]) -> Result<WerReport> {
    let mut total = WerAccumulator::default();
    let mut by_tier: BTreeMap<Severity, WerAccumulator> = BTreeMap::new();
    for (sev, r, h) in items {
        total.add(r, h);
        by_tier.entry(*sev).or_default().add(r, h);
    }
    let overall = total.rate().ok_or(Error::UndefinedRate)?;
    let per_severity = by_tier
        .into_iter()
        .filter_map(|(s, acc)| acc.rate().map(|r| (s, r)))
        .collect();
    Ok(WerReport { overall, per_severity, n_utterances: items.len() })
}

/// Aligned-column severity table, columns ordered VL, L, M, H, then the
/// overall figure; absent tiers print a dash.
pub fn format_severity_table(label: &str, report: &WerReport) -> String {
    let mut header = format!("{:<16}", "model");
    let mut row = format!("{label:<16}");
    for sev in Severity::ALL {
        header.push_str(&format!("{:>8}", sev.tag()));
        match report.per_severity.get(&sev) {
            Some(w) => row.push_str(&format!("{:>8.2}", 100.0 * w)),
            None => row.push_str(&format!("{:>8}", "-")),
        }
    }
    header.push_str(&format!("{:>9}", "overall"));
    row.push_str(&format!("{:>9.2}", 100.0 * report.overall));
    format!("{header}\n{row}\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exhaustive alignment oracle: try every edit script implicitly by
    /// recursion, so the DP can be checked against a slow ground truth.
    fn brute_force_distance(r: &[usize], h: &[usize]) -> usize {
        if r.is_empty() {
            return h.len();
        }
        if h.is_empty() {
            return r.len();
        }
        let sub = brute_force_distance(&r[1..], &h[1..]) + usize::from(r[0] != h[0]);
        let del = brute_force_distance(&r[1..], h) + 1;
        let ins = brute_force_distance(r, &h[1..]) + 1;
        sub.min(del).min(ins)
    }

    #[test]
    fn identical_is_zero() {
        let seqs = vec![vec![1, 2, 3], vec![4]];
        assert_eq!(word_error_rate(&seqs, &seqs).unwrap(), 0.0);
    }

    #[test]
    fn single_deletion_is_one_third() {
        let refs = vec![vec![0, 1, 2]];
        let hyps = vec![vec![0, 2]];
        assert!((word_error_rate(&refs, &hyps).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn wer_can_exceed_one() {
        // substitution + insertion against a single-token reference
        let refs = vec![vec![0]];
        let hyps = vec![vec![1, 2]];
        assert_eq!(word_error_rate(&refs, &hyps).unwrap(), 2.0);
    }

    #[test]
    fn empty_reference_corpus_is_undefined() {
        assert!(matches!(word_error_rate(&[], &[]), Err(Error::UndefinedRate)));
    }

    #[test]
    fn count_mismatch_rejected() {
        assert!(word_error_rate(&[vec![0]], &[]).is_err());
    }

    #[test]
    fn dp_matches_brute_force_for_short_sequences() {
        let mut rng = crate::rng::Rng::new(31);
        for _ in 0..300 {
            let rl = rng.below(6);
            let hl = rng.below(6);
            let r: Vec<usize> = (0..rl).map(|_| rng.below(3)).collect();
            let h: Vec<usize> = (0..hl).map(|_| rng.below(3)).collect();
            assert_eq!(edit_distance(&r, &h), brute_force_distance(&r, &h), "{r:?} vs {h:?}");
        }
    }

    #[test]
    fn breakdown_keys_only_present_tiers() {
        let items = vec![
            (Severity::VeryLow, vec![0, 1], vec![0, 1]),
            (Severity::High, vec![0, 1], vec![1, 1]),
        ];
        let report = score_with_breakdown(&items).unwrap();
        assert_eq!(report.per_severity.len(), 2);
        assert_eq!(report.per_severity[&Severity::VeryLow], 0.0);
        assert_eq!(report.per_severity[&Severity::High], 0.5);
        assert!(!report.per_severity.contains_key(&Severity::Mid));
        assert!((report.overall - 0.25).abs() < 1e-15);
    }

    #[test]
    fn table_columns_ordered_vl_l_m_h() {
        // the reference layout renders the published severity figures
        let mut per_severity = BTreeMap::new();
        per_severity.insert(Severity::VeryLow, 0.0683);
        per_severity.insert(Severity::Low, 0.1282);
        per_severity.insert(Severity::Mid, 0.2246);
        per_severity.insert(Severity::High, 0.5772);
        let report = WerReport { overall: 0.2496, per_severity, n_utterances: 4 };
        let table = format_severity_table("dual", &report);
        let header = table.lines().next().unwrap();
        let cols: Vec<&str> = header.split_whitespace().collect();
        assert_eq!(cols, vec!["model", "VL", "L", "M", "H", "overall"]);
        let row = table.lines().nth(1).unwrap();
        let vl = row.find("6.83").unwrap();
        let l = row.find("12.82").unwrap();
        let m = row.find("22.46").unwrap();
        let h = row.find("57.72").unwrap();
        assert!(vl < l && l < m && m < h);
    }

    #[test]
    fn absent_tier_marked_with_dash() {
        let mut per_severity = BTreeMap::new();
        per_severity.insert(Severity::Low, 0.1);
        let report = WerReport { overall: 0.1, per_severity, n_utterances: 1 };
        let table = format_severity_table("x", &report);
        let row = table.lines().nth(1).unwrap();
        assert!(row.split_whitespace().any(|c| c == "-"));
    }
}

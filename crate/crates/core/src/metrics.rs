//! Presentation attack detection error rates.
//!
//! Decision rule everywhere: a presentation is classified as an attack iff
//! `attack_prob >= threshold`. Under that rule APCER is non-decreasing and
//! BPCER non-increasing in the threshold.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{AttackType, Label};
use crate::error::{PadError, Result};

/// Operating threshold used for the reported APCER/BPCER.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Threshold of the ROC endpoint below every score (everything flagged as attack).
pub const BELOW_ALL: f64 = -f64::EPSILON;
/// Threshold of the ROC endpoint above every score (nothing flagged as attack).
pub const ABOVE_ALL: f64 = 1.0 + f64::EPSILON;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub id: String,
    pub subject_id: u32,
    pub attack_type: AttackType,
    pub true_label: Label,
    pub attack_prob: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoringMode {
    #[default]
    PerFrame,
    PerVideoDfs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub apcer: f64,
    pub bpcer: f64,
}

impl RocPoint {
    /// Plot coordinates: x = BPCER, y = 1 - APCER.
    pub fn xy(&self) -> (f64, f64) {
        (self.bpcer, 1.0 - self.apcer)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eer {
    pub value: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub apcer: f64,
    pub bpcer: f64,
    pub threshold: f64,
    pub eer: f64,
    pub eer_threshold: f64,
    pub mode: ScoringMode,
    pub n_attack: usize,
    pub n_genuine: usize,
    pub roc: Vec<RocPoint>,
}

impl MetricsReport {
    pub fn compute(scores: &[ScoreRecord], threshold: f64, mode: ScoringMode) -> Result<Self> {
        let eer = eer(scores)?;
        Ok(Self {
            apcer: apcer(scores, threshold)?,
            bpcer: bpcer(scores, threshold)?,
            threshold,
            eer: eer.value,
            eer_threshold: eer.threshold,
            mode,
            n_attack: count(scores, Label::Attack),
            n_genuine: count(scores, Label::Genuine),
            roc: roc_points(scores)?,
        })
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
    }
}

fn count(scores: &[ScoreRecord], label: Label) -> usize {
    scores.iter().filter(|s| s.true_label == label).count()
}

fn check_scores(scores: &[ScoreRecord]) -> Result<()> {
    for s in scores {
        if !(0.0..=1.0).contains(&s.attack_prob) {
            return Err(PadError::Contract(format!(
                "score {} has attack_prob {} outside [0, 1]",
                s.id, s.attack_prob
            )));
        }
    }
    Ok(())
}

/// Fraction of attack presentations classified as bona fide.
pub fn apcer(scores: &[ScoreRecord], threshold: f64) -> Result<f64> {
    check_scores(scores)?;
    let attacks: Vec<f64> =
        scores.iter().filter(|s| s.true_label == Label::Attack).map(|s| s.attack_prob).collect();
    if attacks.is_empty() {
        return Err(PadError::UndefinedMetric("APCER needs at least one attack".into()));
    }
    let missed = attacks.iter().filter(|&&p| p < threshold).count();
    Ok(missed as f64 / attacks.len() as f64)
}

/// Fraction of bona fide presentations classified as attacks.
pub fn bpcer(scores: &[ScoreRecord], threshold: f64) -> Result<f64> {
    check_scores(scores)?;
    let genuine: Vec<f64> =
        scores.iter().filter(|s| s.true_label == Label::Genuine).map(|s| s.attack_prob).collect();
    if genuine.is_empty() {
        return Err(PadError::UndefinedMetric("BPCER needs at least one bona fide sample".into()));
    }
    let rejected = genuine.iter().filter(|&&p| p >= threshold).count();
    Ok(rejected as f64 / genuine.len() as f64)
}

/// Error counts at one candidate threshold.
#[derive(Debug, Clone, Copy)]
struct Sweep {
    threshold: f64,
    missed_attacks: usize,
    rejected_genuine: usize,
}

/// Candidate thresholds in ascending order: the lower endpoint, every distinct
/// score, then the upper endpoint.
fn sweep(scores: &[ScoreRecord]) -> Result<(Vec<Sweep>, usize, usize)> {
    check_scores(scores)?;
    let n_attack = count(scores, Label::Attack);
    let n_genuine = count(scores, Label::Genuine);
    if n_attack == 0 || n_genuine == 0 {
        return Err(PadError::UndefinedMetric(
            "EER/ROC need both attack and bona fide samples".into(),
        ));
    }

    let mut sorted: Vec<(f64, Label)> =
        scores.iter().map(|s| (s.attack_prob, s.true_label)).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut out = Vec::with_capacity(sorted.len() + 2);
    out.push(Sweep { threshold: BELOW_ALL, missed_attacks: 0, rejected_genuine: n_genuine });

    // counts of each class strictly below the current threshold
    let (mut attacks_below, mut genuine_below) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].0;
        out.push(Sweep {
            threshold: t,
            missed_attacks: attacks_below,
            rejected_genuine: n_genuine - genuine_below,
        });
        while i < sorted.len() && sorted[i].0 == t {
            match sorted[i].1 {
                Label::Attack => attacks_below += 1,
                Label::Genuine => genuine_below += 1,
            }
            i += 1;
        }
    }
    out.push(Sweep { threshold: ABOVE_ALL, missed_attacks: n_attack, rejected_genuine: 0 });
    Ok((out, n_attack, n_genuine))
}

/// Equal error rate.
///
/// Sweeps every distinct score as a threshold. If APCER equals BPCER at some
/// candidate, that common value is returned; otherwise both rates are
/// interpolated linearly between the two adjacent candidates where
/// `APCER - BPCER` changes sign.
pub fn eer(scores: &[ScoreRecord]) -> Result<Eer> {
    let (candidates, n_attack, n_genuine) = sweep(scores)?;
    let (na, ng) = (n_attack as f64, n_genuine as f64);
    // sign of apcer - bpcer, computed exactly on counts
    let sign = |s: &Sweep| {
        (s.missed_attacks as u128 * n_genuine as u128)
            .cmp(&(s.rejected_genuine as u128 * n_attack as u128))
    };

    if let Some(s) = candidates.iter().find(|s| sign(s).is_eq()) {
        return Ok(Eer { value: s.missed_attacks as f64 / na, threshold: s.threshold });
    }

    let upper = candidates
        .iter()
        .position(|s| sign(s).is_gt())
        .expect("upper endpoint always has APCER > BPCER");
    let (lo, hi) = (candidates[upper - 1], candidates[upper]);

    let (a0, b0) = (lo.missed_attacks as f64 / na, lo.rejected_genuine as f64 / ng);
    let (a1, b1) = (hi.missed_attacks as f64 / na, hi.rejected_genuine as f64 / ng);
    let (d0, d1) = (a0 - b0, a1 - b1);
    let w = -d0 / (d1 - d0);
    Ok(Eer {
        value: a0 + w * (a1 - a0),
        threshold: lo.threshold + w * (hi.threshold - lo.threshold),
    })
}

/// ROC operating points, ordered by strictly decreasing threshold: from the
/// point above every score (APCER 1, BPCER 0) down to the point below every
/// score (APCER 0, BPCER 1).
pub fn roc_points(scores: &[ScoreRecord]) -> Result<Vec<RocPoint>> {
    let (candidates, n_attack, n_genuine) = sweep(scores)?;
    Ok(candidates
        .iter()
        .rev()
        .map(|s| RocPoint {
            threshold: s.threshold,
            apcer: s.missed_attacks as f64 / n_attack as f64,
            bpcer: s.rejected_genuine as f64 / n_genuine as f64,
        })
        .collect())
}

pub fn write_scores_csv<W: Write>(writer: W, scores: &[ScoreRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for s in scores {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_scores_csv<R: Read>(reader: R) -> Result<Vec<ScoreRecord>> {
    let mut r = csv::Reader::from_reader(reader);
    let scores = r.deserialize().collect::<std::result::Result<Vec<ScoreRecord>, _>>()?;
    check_scores(&scores)?;
    Ok(scores)
}

pub fn save_scores(path: &Path, scores: &[ScoreRecord]) -> Result<()> {
    write_scores_csv(std::io::BufWriter::new(std::fs::File::create(path)?), scores)
}

pub fn load_scores(path: &Path) -> Result<Vec<ScoreRecord>> {
    read_scores_csv(std::io::BufReader::new(std::fs::File::open(path)?))
}

/// Builds score records from `(attack_prob, label)` pairs; mostly useful in tests and examples.
pub fn scores_from_pairs(pairs: &[(f64, Label)]) -> Vec<ScoreRecord> {
    pairs
        .iter()
        .enumerate()
        .map(|(i, &(p, label))| ScoreRecord {
            id: format!("s{i}"),
            subject_id: 0,
            attack_type: if label == Label::Attack {
                AttackType::new(1).unwrap()
            } else {
                AttackType::GENUINE
            },
            true_label: label,
            attack_prob: p,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn split_scores(genuine: &[f64], attacks: &[f64]) -> Vec<ScoreRecord> {
        let pairs: Vec<(f64, Label)> = genuine
            .iter()
            .map(|&p| (p, Label::Genuine))
            .chain(attacks.iter().map(|&p| (p, Label::Attack)))
            .collect();
        scores_from_pairs(&pairs)
    }

    #[test]
    fn apcer_counts_missed_attacks() {
        let s = split_scores(&[0.2], &[0.9, 0.8, 0.1]);
        assert_abs_diff_eq!(apcer(&s, 0.5).unwrap(), 1.0 / 3.0);
        let s = split_scores(&[0.2], &[0.9, 0.8]);
        assert_eq!(apcer(&s, 0.5).unwrap(), 0.0);
        assert!(matches!(
            apcer(&split_scores(&[0.1], &[]), 0.5),
            Err(PadError::UndefinedMetric(_))
        ));
    }

    #[test]
    fn bpcer_counts_rejected_genuine() {
        let s = split_scores(&[0.1, 0.6], &[0.9]);
        assert_eq!(bpcer(&s, 0.5).unwrap(), 0.5);
        assert_eq!(bpcer(&s, 0.0).unwrap(), 1.0);
        assert_eq!(bpcer(&split_scores(&[0.1, 0.2], &[0.9]), 0.5).unwrap(), 0.0);
        assert!(bpcer(&split_scores(&[], &[0.9]), 0.5).is_err());
    }

    #[test]
    fn ties_count_as_attack() {
        let s = split_scores(&[0.5], &[0.5]);
        assert_eq!(apcer(&s, 0.5).unwrap(), 0.0);
        assert_eq!(bpcer(&s, 0.5).unwrap(), 1.0);
    }

    #[test]
    fn eer_separable_is_zero() {
        let s = split_scores(&[0.1, 0.1, 0.1], &[0.9, 0.9]);
        assert_eq!(eer(&s).unwrap().value, 0.0);
    }

    #[test]
    fn eer_exact_crossing() {
        let s = split_scores(&[0.1, 0.4, 0.6], &[0.3, 0.7, 0.8]);
        assert_abs_diff_eq!(eer(&s).unwrap().value, 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn eer_interpolates() {
        let s = split_scores(&[0.3, 0.5], &[0.4]);
        // t=0.3: apcer 0, bpcer 1 ; t=0.4: apcer 0, bpcer 1/2 ; t=0.5: apcer 1, bpcer 1/2
        // crossing between 0.4 (d=-1/2) and 0.5 (d=+1/2), w = 1/2 -> eer = 1/2
        let e = eer(&s).unwrap();
        assert_abs_diff_eq!(e.value, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(e.threshold, 0.45, epsilon = 1e-12);
    }

    #[test]
    fn eer_single_class_is_undefined() {
        assert!(eer(&split_scores(&[0.1, 0.2], &[])).is_err());
        assert!(roc_points(&split_scores(&[], &[0.3])).is_err());
    }

    #[test]
    fn eer_reflection_symmetry() {
        let genuine = [0.05, 0.3, 0.31, 0.6, 0.62];
        let attacks = [0.2, 0.5, 0.7, 0.71, 0.9, 0.95];
        let s = split_scores(&genuine, &attacks);
        let reflected: Vec<f64> = attacks.iter().map(|p| 1.0 - p).collect();
        let genuine_ref: Vec<f64> = genuine.iter().map(|p| 1.0 - p).collect();
        let r = split_scores(&reflected, &genuine_ref);
        assert_abs_diff_eq!(eer(&s).unwrap().value, eer(&r).unwrap().value, epsilon = 1e-12);
    }

    #[test]
    fn roc_endpoints_and_count() {
        let s = split_scores(&[0.1, 0.4, 0.4], &[0.3, 0.7, 0.8]);
        let roc = roc_points(&s).unwrap();
        // five distinct scores
        assert_eq!(roc.len(), 5 + 2);
        assert_eq!((roc[0].apcer, roc[0].bpcer), (1.0, 0.0));
        let last = roc.last().unwrap();
        assert_eq!((last.apcer, last.bpcer), (0.0, 1.0));
        for w in roc.windows(2) {
            assert!(w[0].threshold > w[1].threshold);
            assert!(w[0].apcer >= w[1].apcer);
            assert!(w[0].bpcer <= w[1].bpcer);
        }
    }

    #[test]
    fn score_csv_round_trip() {
        let s = split_scores(&[0.1, 0.25], &[0.75]);
        let mut buf = Vec::new();
        write_scores_csv(&mut buf, &s).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("id,subject_id,attack_type,true_label,attack_prob\n"));
        assert_eq!(read_scores_csv(buf.as_slice()).unwrap(), s);
    }

    #[test]
    fn report_at_operating_point() {
        let s = split_scores(&[0.1, 0.6], &[0.9, 0.8, 0.1]);
        let r = MetricsReport::compute(&s, DEFAULT_THRESHOLD, ScoringMode::PerFrame).unwrap();
        assert_abs_diff_eq!(r.apcer, 1.0 / 3.0);
        assert_eq!(r.bpcer, 0.5);
        assert!((0.0..=1.0).contains(&r.eer));
    }
}

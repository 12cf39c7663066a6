//! Post-hoc evaluation: phoneme confusion, articulatory forced-choice accuracy,
//! the context and majority baselines, and word error rate.

mod baseline;
mod confusion;
mod forced;
mod inventory;
mod sets;
mod wer;

use std::io::Write;

pub use baseline::{context_baseline, BaselineConfig, ContextBaseline};
pub use confusion::{
    confusion, pair_accuracy, pair_report, write_pair_report, ConfusionCounts, PairStat,
    PAIR_REPORT_HEADER,
};
pub use forced::{
    align_predictions, collapse_phonemes, forced_choice_accuracy, majority_class_accuracy,
    AlignedPredictions,
};
pub use inventory::{PhonemeInventory, ARPABET, SILENCE};
pub use sets::{ipa_to_arpabet, ConfusionSetTable};
pub use wer::{edit_distance, wer};

pub const FEATURE_REPORT_HEADER: &str = "feature,majority,context_baseline,full_model";

/// One row of the articulatory feature report; `None` renders as an empty field.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureScores {
    pub feature: String,
    pub majority: Option<f64>,
    pub context_baseline: Option<f64>,
    pub full_model: Option<f64>,
}

pub fn write_feature_report(w: &mut impl Write, rows: &[FeatureScores]) -> std::io::Result<()> {
    let cell = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    writeln!(w, "{FEATURE_REPORT_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{}",
            r.feature,
            cell(r.majority),
            cell(r.context_baseline),
            cell(r.full_model)
        )?;
    }
    Ok(())
}

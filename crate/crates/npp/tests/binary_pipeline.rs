//! The binary-outcome approximation feeding the borrowing machinery
//! end to end.

use npp::approx::{log_or, to_normal_summary, TwoArmBinomialSummary};
use npp::data::StudySet;
use npp::posterior::{marginal_a0k, A0kModel, BnppPrior, QuadratureSettings};
use npp::prior::PriorSpec;

#[test]
fn identical_trials_give_weight_modes_at_one() {
    // Three copies of the same symmetric trial: every dataset is fully
    // compatible, so the per-dataset discounting posteriors pile up at one.
    let trial = TwoArmBinomialSummary::new(200, 120, 200, 80).unwrap();
    let summaries: Vec<_> = (0..3)
        .map(|_| to_normal_summary(&log_or(&trial).unwrap()).unwrap())
        .collect();
    let study = StudySet::new(summaries[0], summaries[1..].to_vec()).unwrap();
    let grids = marginal_a0k(
        &study,
        &A0kModel::Bnpp(BnppPrior::OnA0(PriorSpec::Uniform01)),
        &QuadratureSettings::default(),
    )
    .unwrap();
    for g in &grids {
        let argmax = g
            .density()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert!(argmax > g.len() * 98 / 100, "mode at index {argmax} of {}", g.len());
    }
}

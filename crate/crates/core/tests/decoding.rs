mod support;

use proptest::prelude::*;
use prospectus_core::bio::{is_transition_valid, BioTag};
use prospectus_core::decode::{
    constrained_viterbi, default_bio_transitions, greedy_decode, path_score, span_confidence, ConfidenceError,
    LabelGrid, TransitionError, TransitionMatrix,
};
use prospectus_core::fixtures::oracle_viterbi;
use prospectus_core::TargetType;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn grid_strategy() -> impl Strategy<Value = LabelGrid> {
    prop::collection::vec(prop::array::uniform3(-6.0f64..0.0), 1..=8)
        .prop_map(|rows| LabelGrid::new(TargetType::Isin, rows).unwrap())
}

proptest! {
    #[test]
    fn viterbi_matches_exhaustive_search(grid in grid_strategy()) {
        let trans = default_bio_transitions();
        let fast = constrained_viterbi(&grid, &trans);
        prop_assert_eq!(&fast, &oracle_viterbi(&grid, &trans).unwrap());
        prop_assert!(is_transition_valid(&fast.tags));
    }

    #[test]
    fn viterbi_scores_at_least_any_valid_greedy_path(grid in grid_strategy()) {
        let trans = default_bio_transitions();
        let best = path_score(&grid, &trans, &constrained_viterbi(&grid, &trans).tags);
        let greedy = greedy_decode(&grid);
        if is_transition_valid(&greedy.tags) {
            prop_assert!(best >= path_score(&grid, &trans, &greedy.tags));
        }
    }
}

#[test]
fn ties_resolve_identically_on_coarse_grids() {
    let trans = default_bio_transitions();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for m in 1..=8 {
        for _ in 0..200 {
            let grid = support::random_grid(&mut rng, m, true);
            assert_eq!(constrained_viterbi(&grid, &trans), oracle_viterbi(&grid, &trans).unwrap(), "{grid:?}");
        }
    }
}

#[test]
fn soft_transitions_also_match_oracle() {
    let n = f64::NEG_INFINITY;
    let trans =
        TransitionMatrix::new([[-0.125, n, -0.25], [-1.0, 0.25, -0.5], [-0.75, 0.5, -0.25], [-0.5, n, 0.125]]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for m in 1..=7 {
        for coarse in [false, true] {
            for _ in 0..50 {
                let grid = support::random_grid(&mut rng, m, coarse);
                assert_eq!(constrained_viterbi(&grid, &trans), oracle_viterbi(&grid, &trans).unwrap());
            }
        }
    }
}

#[test]
fn transitions_must_forbid_invalid_moves() {
    let bad = TransitionMatrix::new([[0.0; 3]; 4]);
    assert!(matches!(bad, Err(TransitionError::MustBeForbidden { .. })), "{bad:?}");
    let n = f64::NEG_INFINITY;
    let bad = TransitionMatrix::new([[0.0, n, 0.0], [n, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, n, 0.0]]);
    assert!(matches!(bad, Err(TransitionError::MustBeFinite { .. })), "{bad:?}");
}

#[test]
fn transition_table_round_trips() {
    let trans = default_bio_transitions();
    let table = trans.to_table();
    assert_eq!(table.parse::<TransitionMatrix>().unwrap(), trans);
    let text = "# from start\n0 -inf 0\n0 0 0  # B\n0 0 0\n0 -inf 0\n";
    assert_eq!(text.parse::<TransitionMatrix>().unwrap(), trans);
    assert!("0 0\n".parse::<TransitionMatrix>().is_err());
}

#[test]
fn span_confidence_is_geometric_mean() {
    let l = |p: f64| p.ln();
    let grid = LabelGrid::new(TargetType::Currency, vec![[l(0.8), l(0.1), l(0.1)], [l(0.1), l(0.4), l(0.5)]]).unwrap();
    let tags = [BioTag::B, BioTag::I];
    let c = span_confidence(&grid, &tags, 0..2).unwrap();
    assert!((c - (0.8f64 * 0.4).sqrt()).abs() < 1e-12);

    let unnormalized = LabelGrid::new(TargetType::Currency, vec![[0.0, 0.0, 0.0]]).unwrap();
    assert!(matches!(
        span_confidence(&unnormalized, &[BioTag::B], 0..1),
        Err(ConfidenceError::Normalization { row: 0, .. })
    ));
    assert!(matches!(span_confidence(&grid, &tags, 1..3), Err(ConfidenceError::BadSpan { .. })));
}

#[test]
fn label_grid_rejects_non_finite_scores() {
    assert!(LabelGrid::new(TargetType::Currency, vec![[0.0, f64::NAN, 0.0]]).is_err());
}

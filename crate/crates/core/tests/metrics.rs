use grhd::dataset::{ClipMetadata, Condition, Domain, Split};
use grhd::metrics::*;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---- independent oracles ------------------------------------------------

/// Pairwise count in half-credits, no sorting.
fn auc_oracle(normal: &[f64], anomaly: &[f64]) -> f64 {
    let mut twice = 0u64;
    for &a in anomaly {
        for &n in normal {
            twice += if a > n {
                2
            } else if a == n {
                1
            } else {
                0
            };
        }
    }
    twice as f64 / (2 * normal.len() * anomaly.len()) as f64
}

fn rat(num: usize, den: usize) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Sweeps every threshold `t` (flag when score >= t) plus one above the
/// maximum, then integrates the resulting rate-space polyline up to `p`.
fn pauc_oracle(normal: &[f64], anomaly: &[f64], p: f64) -> f64 {
    let mut thresholds: Vec<f64> = normal.iter().chain(anomaly).copied().collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut pts = vec![(rat(0, 1), rat(0, 1))];
    for t in thresholds {
        let fp = normal.iter().filter(|&&s| s >= t).count();
        let tp = anomaly.iter().filter(|&&s| s >= t).count();
        pts.push((rat(fp, normal.len()), rat(tp, anomaly.len())));
    }
    let pr = BigRational::from_float(p).unwrap();
    let mut area = BigRational::zero();
    for w in pts.windows(2) {
        let ((x0, y0), (x1, y1)) = (&w[0], &w[1]);
        if x0 >= &pr {
            break;
        }
        if x1 == x0 {
            continue;
        }
        let two = BigRational::from_integer(2.into());
        if x1 <= &pr {
            area += (x1 - x0) * (y0 + y1) / two;
        } else {
            let y_at = y0 + (y1 - y0) * (&pr - x0) / (x1 - x0);
            area += (&pr - x0) * (y0 + y_at) / two;
        }
    }
    (area / pr).to_f64().unwrap()
}

/// Random score sets; odd seeds draw from four values so ties dominate.
fn score_set(seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, m) = (rng.gen_range(1..=30), rng.gen_range(1..=30));
    let draw = |rng: &mut ChaCha8Rng| {
        if seed % 2 == 1 {
            rng.gen_range(0..4) as f64 * 0.5
        } else {
            rng.gen_range(-3.0..3.0)
        }
    };
    let normal = (0..n).map(|_| draw(&mut rng)).collect();
    let anomaly = (0..m).map(|_| draw(&mut rng) + 0.3 * (seed % 3) as f64).collect();
    (normal, anomaly)
}

#[test]
fn auc_and_pauc_match_oracles_on_200_sets() {
    for seed in 0..200 {
        let (n, a) = score_set(seed);
        let got = auc(&n, &a).unwrap();
        assert_eq!(got, auc_oracle(&n, &a), "auc seed {seed}");
        for p in [0.05, 0.1, 0.37, 1.0] {
            assert_eq!(pauc(&n, &a, p).unwrap(), pauc_oracle(&n, &a, p), "pauc seed {seed} p {p}");
        }
        assert_eq!(pauc(&n, &a, 1.0).unwrap(), got, "pauc(1) seed {seed}");
    }
}

#[test]
fn pauc_small_case_by_hand() {
    // Normals {1, 2, 3}, anomalies {2, 4, 5}. ROC points (0,0) (0,2/3)
    // (1/3,2/3) (2/3,1) (1,1); area up to 0.5 is 2/9 + 1/6·(2/3 + 5/6)/2 = 25/72.
    let got = pauc(&[1.0, 2.0, 3.0], &[2.0, 4.0, 5.0], 0.5).unwrap();
    let want = 25.0 / 36.0;
    assert!((got - want).abs() < 1e-15, "{got} vs {want}");
    assert_eq!(auc(&[1.0, 2.0, 3.0], &[2.0, 4.0, 5.0]).unwrap(), 15.0 / 18.0);
}

#[test]
fn auc_spec_examples() {
    assert_eq!(auc(&[0.1, 0.2], &[0.3, 0.4]).unwrap(), 1.0);
    assert_eq!(auc(&[0.1, 0.4], &[0.2, 0.5]).unwrap(), 0.75);
    assert_eq!(auc(&[0.7; 4], &[0.7; 3]).unwrap(), 0.5);
}

#[test]
fn all_ties_partial_area_is_diagonal() {
    for p in [0.1, 0.25, 1.0] {
        assert_eq!(pauc(&[2.0; 6], &[2.0; 4], p).unwrap(), p / 2.0);
    }
}

#[test]
fn degenerate_inputs_rejected() {
    assert!(matches!(auc(&[1.0], &[]), Err(MetricsError::DegenerateLabels { normals: 1, anomalies: 0 })));
    assert!(matches!(pauc(&[], &[1.0], 0.1), Err(MetricsError::DegenerateLabels { .. })));
    assert!(matches!(auc(&[f64::NAN], &[1.0]), Err(MetricsError::NonFiniteScore(_))));
    assert!(matches!(pauc(&[1.0], &[2.0], 0.0), Err(MetricsError::InvalidP(_))));
}

proptest! {
    #[test]
    fn auc_invariant_under_monotone_maps(seed in 0u64..10_000, scale in 0.1f64..5.0, shift in -3.0f64..3.0) {
        let (n, a) = score_set(seed);
        let f = |v: &f64| (scale * v + shift).exp() + v.powi(3);
        let (fn_, fa): (Vec<f64>, Vec<f64>) = (n.iter().map(f).collect(), a.iter().map(f).collect());
        prop_assert_eq!(auc(&n, &a).unwrap(), auc(&fn_, &fa).unwrap());
    }

    #[test]
    fn swapping_labels_complements_auc(seed in 0u64..10_000) {
        let (n, a) = score_set(seed);
        let s = auc(&n, &a).unwrap() + auc(&a, &n).unwrap();
        prop_assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn negating_tie_free_scores_complements_auc(seed in 0u64..10_000) {
        let (n, a) = score_set(2 * seed);
        let neg = |v: &Vec<f64>| v.iter().map(|x| -x).collect::<Vec<_>>();
        let s = auc(&n, &a).unwrap() + auc(&neg(&n), &neg(&a)).unwrap();
        prop_assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pauc_bounded_and_perfect_scorer_is_one(seed in 0u64..10_000, p in 0.001f64..1.0) {
        let (n, a) = score_set(seed);
        let v = pauc(&n, &a, p).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
        let lifted: Vec<f64> = a.iter().map(|x| x + 100.0).collect();
        prop_assert_eq!(pauc(&n, &lifted, p).unwrap(), 1.0);
    }

    #[test]
    fn harmonic_below_arithmetic(values in prop::collection::vec(0.01f64..100.0, 1..20)) {
        let h = harmonic_mean(&values).unwrap();
        let a = values.iter().sum::<f64>() / values.len() as f64;
        prop_assert!(h <= a * (1.0 + 1e-12));
    }
}

// ---- harmonic mean ------------------------------------------------------

#[test]
fn harmonic_mean_reproduces_published_totals() {
    let h = harmonic_mean(&[84.64, 72.43, 68.82]).unwrap();
    assert!((h - 74.72).abs() <= 0.01, "{h}");
    let h = harmonic_mean(&[77.46, 61.68, 61.06]).unwrap();
    assert!((h - 65.93).abs() <= 0.01, "{h}");
}

#[test]
fn harmonic_mean_examples() {
    assert!((harmonic_mean(&[50.0, 50.0, 100.0]).unwrap() - 60.0).abs() < 1e-12);
    assert_eq!(harmonic_mean(&[0.7; 5]).unwrap(), 0.7);
    assert!(matches!(harmonic_mean(&[]), Err(MetricsError::Empty)));
    assert!(matches!(harmonic_mean(&[1.0, 0.0]), Err(MetricsError::NonpositiveValue(_))));
}

// ---- scorers ------------------------------------------------------------

#[test]
fn nls_examples() {
    assert!((score_nls(&[0.3; 4], 2).unwrap() - 4f64.ln()).abs() < 1e-15);
    assert!(score_nls(&[40.0, 0.0, 0.0], 0).unwrap() < 1e-15);
    let confident = score_nls(&[2.0, 0.0], 0).unwrap();
    let hesitant = score_nls(&[1.0, 0.0], 0).unwrap();
    assert!(confident < hesitant);
    assert!(matches!(score_nls(&[0.0, 0.0], 2), Err(MetricsError::UnknownSection { index: 2, sections: 2 })));
    // Large logits stay finite.
    assert!(score_nls(&[1000.0, -1000.0], 1).unwrap().is_finite());
}

#[test]
fn knn_examples() {
    let bank = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]];
    assert!(score_knn(&[2.0, 0.0], &bank, 1).unwrap().abs() < 1e-15);
    assert!((score_knn(&[0.0, 1.0], &bank[..1], 1).unwrap() - 1.0).abs() < 1e-15);
    let q = [0.3, 0.9];
    let mean: f64 = bank.iter().map(|b| cosine_distance(&q, b)).sum::<f64>() / 3.0;
    assert!((score_knn(&q, &bank, 3).unwrap() - mean).abs() < 1e-15);
    assert_eq!(score_knn(&q, &bank, 10).unwrap(), score_knn(&q, &bank, 3).unwrap());
    assert!(matches!(score_knn(&q, &[], 1), Err(MetricsError::EmptyBank)));
    assert!(matches!(score_knn(&q, &bank, 0), Err(MetricsError::InvalidK)));
    assert!(matches!(score_knn(&[1.0], &bank, 1), Err(MetricsError::WidthMismatch { .. })));
}

// ---- evaluation report --------------------------------------------------

fn clip(machine: &str, section: u32, domain: Domain, condition: Condition, score: f64) -> ScoredClip {
    ScoredClip {
        id: format!("{machine}/{section}/{score}"),
        metadata: ClipMetadata {
            machine_type: machine.into(),
            section_id: section,
            domain,
            split: Split::Test,
            condition,
            attributes: Vec::new(),
        },
        score,
    }
}

fn cell(r: &EvalReport, machine: &str, section: u32, domain: Option<Domain>, metric: &str) -> Result<f64, MetricsError> {
    r.cells
        .iter()
        .find(|c| c.machine == machine && c.section == section && c.domain == domain && c.metric == metric)
        .unwrap()
        .value
        .clone()
}

#[test]
fn perfect_scorer_scores_one_everywhere() {
    let mut clips = Vec::new();
    for d in [Domain::Source, Domain::Target] {
        for i in 0..5 {
            clips.push(clip("fan", 0, d, Condition::Normal, i as f64));
            clips.push(clip("fan", 0, d, Condition::Anomaly, 10.0 + i as f64));
        }
    }
    let r = evaluate(&clips, 0.1).unwrap();
    assert_eq!(
        r.totals,
        Totals {
            auc_s: Some(1.0),
            auc_t: Some(1.0),
            pauc: Some(1.0),
            hauc: Some(1.0)
        }
    );
    assert!(r.to_csv().contains("ALL,ALL,all,HAUC,100.00\n"));
}

/// Two sections whose cells have planted AUCs: each anomaly outscores a
/// chosen number of the four normals.
fn planted() -> (Vec<ScoredClip>, [[f64; 2]; 2]) {
    let mut clips = Vec::new();
    let beats = [[[4, 4], [4, 2]], [[3, 3], [4, 0]]];
    let mut want = [[0.0; 2]; 2];
    for s in 0..2u32 {
        for (di, d) in [Domain::Source, Domain::Target].into_iter().enumerate() {
            for n in 0..4 {
                clips.push(clip("valve", s, d, Condition::Normal, n as f64 + 0.5));
            }
            let b = beats[s as usize][di];
            for &k in &b {
                clips.push(clip("valve", s, d, Condition::Anomaly, k as f64));
            }
            want[s as usize][di] = (b[0] + b[1]) as f64 / 8.0;
        }
    }
    (clips, want)
}

#[test]
fn planted_scores_give_hand_computed_totals() {
    let (clips, want) = planted();
    let r = evaluate(&clips, 0.1).unwrap();
    for s in 0..2 {
        assert_eq!(cell(&r, "valve", s, Some(Domain::Source), "AUC").unwrap(), want[s as usize][0]);
        assert_eq!(cell(&r, "valve", s, Some(Domain::Target), "AUC").unwrap(), want[s as usize][1]);
    }
    // Source cells 1.0 and 0.75, target cells 0.75 and 0.5.
    assert!((r.totals.auc_s.unwrap() - 2.0 / (1.0 + 1.0 / 0.75)).abs() < 1e-15);
    assert!((r.totals.auc_t.unwrap() - 2.0 / (1.0 / 0.75 + 2.0)).abs() < 1e-15);
    let paucs: Vec<f64> = (0..2).map(|s| cell(&r, "valve", s, None, "pAUC").unwrap()).collect();
    assert!((r.totals.pauc.unwrap() - harmonic_mean(&paucs).unwrap()).abs() < 1e-15);
}

#[test]
fn hauc_recomposes_from_emitted_totals() {
    let (clips, _) = planted();
    let r = evaluate(&clips, 0.1).unwrap();
    let t = r.totals;
    let h = harmonic_mean(&[t.auc_s.unwrap(), t.auc_t.unwrap(), t.pauc.unwrap()]).unwrap();
    assert!((t.hauc.unwrap() - h).abs() < 1e-15);
    assert_eq!(r.machines.len(), 1);
    assert_eq!(r.machines[0].totals, r.totals);
}

#[test]
fn dropping_target_clips_only_touches_target_and_pooled_cells() {
    let (clips, _) = planted();
    let full = evaluate(&clips, 0.1).unwrap();
    let source_only: Vec<ScoredClip> = clips.iter().filter(|c| c.metadata.domain == Domain::Source).cloned().collect();
    let r = evaluate(&source_only, 0.1).unwrap();
    for s in 0..2 {
        assert_eq!(
            cell(&r, "valve", s, Some(Domain::Source), "AUC"),
            cell(&full, "valve", s, Some(Domain::Source), "AUC")
        );
        assert!(cell(&r, "valve", s, Some(Domain::Target), "AUC").is_err());
        let pooled: Vec<&ScoredClip> = source_only.iter().filter(|c| c.metadata.section_id == s).collect();
        let split = |cond| pooled.iter().filter(|c| c.metadata.condition == cond).map(|c| c.score).collect::<Vec<_>>();
        assert_eq!(
            cell(&r, "valve", s, None, "pAUC").unwrap(),
            pauc(&split(Condition::Normal), &split(Condition::Anomaly), 0.1).unwrap()
        );
    }
    assert_eq!(r.totals.auc_s, full.totals.auc_s);
    assert_eq!(r.totals.auc_t, None);
    assert_eq!(r.totals.hauc, None);
    assert!(r.to_csv().contains("valve,00,target,AUC,NA\n"));
}

#[test]
fn unknown_condition_clips_are_counted_not_scored() {
    let (mut clips, _) = planted();
    let before = evaluate(&clips, 0.1).unwrap();
    clips.push(clip("valve", 0, Domain::Source, Condition::Unknown, 99.0));
    let after = evaluate(&clips, 0.1).unwrap();
    assert_eq!(after.unlabelled, 1);
    assert_eq!(after.cells, before.cells);
}

#[test]
fn zero_cell_forces_zero_aggregate() {
    let clips = vec![
        clip("fan", 0, Domain::Source, Condition::Normal, 1.0),
        clip("fan", 0, Domain::Source, Condition::Anomaly, 0.0),
        clip("fan", 0, Domain::Target, Condition::Normal, 0.0),
        clip("fan", 0, Domain::Target, Condition::Anomaly, 1.0),
    ];
    let r = evaluate(&clips, 0.1).unwrap();
    assert_eq!(r.totals.auc_s, Some(0.0));
    assert_eq!(r.totals.hauc, Some(0.0));
}

#[test]
fn csv_layout() {
    let (mut clips, _) = planted();
    clips.push(clip("fan", 3, Domain::Source, Condition::Normal, 0.0));
    clips.push(clip("fan", 3, Domain::Source, Condition::Anomaly, 1.0));
    let r = evaluate(&clips, 0.1).unwrap();
    let csv = r.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], REPORT_HEADER);
    assert_eq!(lines[1], "fan,03,source,AUC,100.00");
    assert_eq!(lines[2], "fan,03,target,AUC,NA");
    assert!(lines.contains(&"valve,01,target,AUC,50.00"));
    // 3 cells per section, 4 summary rows per machine and 4 totals rows.
    assert_eq!(lines.len(), 1 + 3 * 3 + 4 * 2 + 4);
    assert!(lines.iter().rev().take(4).all(|l| l.starts_with("ALL,ALL,")));
}

#[test]
fn non_finite_score_rejected() {
    let clips = vec![clip("fan", 0, Domain::Source, Condition::Normal, f64::INFINITY)];
    assert!(matches!(evaluate(&clips, 0.1), Err(MetricsError::NonFiniteScore(_))));
    assert!(matches!(evaluate(&[], 2.0), Err(MetricsError::InvalidP(_))));
}

use super::*;

fn toy() -> Dataset {
    // Two overlapping 1-d classes.
    let xs = [-2.0, -1.5, -1.0, -0.5, 0.0, 0.3, 0.5, 1.0, 1.5, 2.0];
    let ts = [0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0];
    Dataset::new(xs.iter().map(|x| vec![*x]).collect(), ts.iter().map(|t| vec![*t]).collect()).unwrap()
}

fn quick() -> TrainConfig {
    TrainConfig { rprop_evals: 400, cg_evals: 200, ..Default::default() }
}

#[test]
fn aic_examples() {
    assert_eq!(aic(100.0, 20), 140.0);
    assert_eq!(aic(0.0, 0), 0.0);
    assert!(aic(10.0, 30) > aic(10.0, 24));
    for w in 0..50 {
        assert_eq!(aic(3.5, w) - aic(3.5, 0), 2.0 * w as f64);
    }
}

#[test]
fn squared_error_of_constant_half() {
    assert_eq!(squared_error(&[0.5; 4], &[1.0, 0.0, 0.0, 0.0]), 1.0);
}

#[test]
fn weight_limit_scales_with_rows() {
    assert_eq!(weight_limit(118), 55);
    assert_eq!(weight_limit(236), 110);
}

#[test]
fn loo_scores_separable_toy_well() {
    let xs: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64 - 5.5]).collect();
    let ts: Vec<Vec<f64>> = (0..12).map(|i| vec![if i < 6 { 0.0 } else { 1.0 }]).collect();
    let data = Dataset::new(xs, ts).unwrap();
    let arch = Architecture::new(1, vec![2], 1).unwrap();
    let r = loo_cv(&arch, &data, &quick(), 1).unwrap();
    assert_eq!(r.folds.len(), 12);
    assert!(r.score < 0.05, "{}", r.score);
}

#[test]
fn loo_on_identical_rows_is_exchangeable() {
    let data = Dataset::new(vec![vec![0.3]; 6], vec![vec![1.0, 0.0]; 6]).unwrap();
    let arch = Architecture::new(1, vec![], 2).unwrap();
    let cfg = quick();
    let r = loo_cv(&arch, &data, &cfg, 4).unwrap();
    // Every fold sees the same five rows; the score is that of one fit.
    let single = trainer::train(&Network::random(arch.clone(), r.folds[0].seed).unwrap(), &data.without(0), &cfg).unwrap();
    let o = single.network.forward(&[0.3]).unwrap();
    assert!((r.folds[0].score - squared_error(&o, &[1.0, 0.0])).abs() < 1e-12);
    for f in &r.folds {
        assert!(f.score < 1e-3);
    }
}

#[test]
fn loo_permutation_permutes_scores() {
    let data = toy();
    let arch = Architecture::new(1, vec![], 1).unwrap();
    let perm: Vec<usize> = vec![3, 7, 0, 9, 1, 5, 2, 8, 6, 4];
    let shuffled = data.select(&perm);
    let a = loo_cv(&arch, &data, &quick(), 9).unwrap();
    let b = loo_cv(&arch, &shuffled, &quick(), 9).unwrap();
    for (new_row, &old_row) in perm.iter().enumerate() {
        assert_eq!(b.folds[new_row].seed, a.folds[old_row].seed);
        assert_eq!(b.folds[new_row].score, a.folds[old_row].score);
    }
    assert!((a.score - b.score).abs() < 1e-12);
}

#[test]
fn loo_needs_two_rows() {
    let data = Dataset::new(vec![vec![0.0]], vec![vec![1.0]]).unwrap();
    let arch = Architecture::new(1, vec![], 1).unwrap();
    assert!(matches!(loo_cv(&arch, &data, &quick(), 0), Err(Error::InsufficientData(_))));
}

#[test]
fn comparison_report_structure() {
    let data = toy();
    let archs = vec![Architecture::new(1, vec![], 1).unwrap(), Architecture::new(1, vec![2], 1).unwrap()];
    let r = compare_architectures(&archs, &data, &quick(), &[1, 2], true).unwrap();
    assert_eq!(r.architectures.len(), 2);
    for a in &r.architectures {
        assert_eq!(a.seeds.len(), 2);
        let q_bar = (a.seeds[0].final_cost + a.seeds[1].final_cost) / 2.0;
        assert_eq!(a.q_bar_seeds, q_bar);
        assert_eq!(a.aic, q_bar + 2.0 * a.weights as f64);
        assert_eq!(a.aic_loo.unwrap(), a.q_bar_loo.unwrap() + 2.0 * a.weights as f64);
        for s in &a.seeds {
            assert_eq!(s.aic, s.final_cost + 2.0 * a.weights as f64);
            assert_eq!(s.loo.as_ref().unwrap().folds.len(), 10);
        }
    }
    // W = 7 exceeds 55·10/118 = 4.
    assert!(r.warnings.iter().any(|w| w.contains("1-2-1")));
    let csv = r.to_csv();
    assert_eq!(csv.lines().count(), 5);
    let json = serde_json::to_string(&r).unwrap();
    assert!(json.contains("q_bar_seeds") && json.contains("q_bar_loo"));
}

#[test]
fn single_architecture_without_loo() {
    let archs = vec![Architecture::new(1, vec![], 1).unwrap()];
    let r = compare_architectures(&archs, &toy(), &quick(), &[5], false).unwrap();
    assert_eq!(r.architectures.len(), 1);
    assert!(r.architectures[0].loo_score.is_none());
    assert!(compare_architectures(&[], &toy(), &quick(), &[5], false).is_err());
}

mod support;

use hricat_core::eval::{
    adjusted_scores, fit, fit_chain, load_ratings, Dimension, EvalError, FitSettings, Hyperparams, Rating, RatingTable,
};
use proptest::prelude::*;
use support::{closed_form_means, fixture, ir, recovery_table};

const IR: Dimension = Dimension::InformationRetrieval;

fn fast(seed: u64) -> FitSettings {
    FitSettings { n_samples: 2000, n_burnin: 200, seed }
}

#[test]
fn fixture_table_loads() {
    let t = load_ratings(std::fs::File::open(fixture("ratings.csv")).unwrap()).unwrap();
    assert_eq!(t.for_dimension(IR).count(), 20);
    assert_eq!(t.raters().len(), 2);
    assert_eq!(t.prompts().len(), 10);
}

#[test]
fn degenerate_scores() {
    let rows = (0..2).flat_map(|i| (0..10).map(move |j| ir(&format!("r{i}"), &format!("p{j}"), 4.0))).collect();
    let t = RatingTable::new(rows).unwrap();
    let s = fit(&t, IR, &Hyperparams::default(), &FitSettings::with_seed(7)).unwrap();
    assert!((s.mu.mean - 4.0).abs() < 0.05, "{}", s.mu.mean);
    assert!(s.alpha.values().all(|a| a.mean.abs() < 0.05));
    assert!(s.gamma.mean.abs() < 0.05, "{}", s.gamma.mean);

    // Identical rater means: corrected scores equal the raw ones.
    let adj = adjusted_scores(&t, &s, IR).unwrap();
    assert!(adj.scores.iter().all(|a| (a.corrected - a.raw).abs() < 1e-9));
    assert_eq!(
        adjusted_scores(&t, &s, Dimension::FactualAccuracy).unwrap_err(),
        EvalError::DimensionMismatch { summary: IR, requested: Dimension::FactualAccuracy }
    );
}

#[test]
fn recovers_rater_effects() {
    let t = recovery_table(11);
    let s = fit(&t, IR, &Hyperparams::default(), &FitSettings::with_seed(5)).unwrap();
    assert!((s.alpha["r1"].mean - 0.3).abs() < 0.05, "{}", s.alpha["r1"].mean);
    assert!((s.alpha["r2"].mean + 0.3).abs() < 0.05, "{}", s.alpha["r2"].mean);
    assert!(s.converged);
    for p in s.parameters() {
        assert!(p.lower <= p.mean && p.mean <= p.upper, "{p:?}");
    }

    let adj = adjusted_scores(&t, &s, IR).unwrap();
    let rater_mean = |r: &str| {
        let v: Vec<f64> = adj.scores.iter().filter(|a| a.rater == r).map(|a| a.corrected).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    assert!((rater_mean("r1") - rater_mean("r2")).abs() < 0.05);
}

#[test]
fn two_by_two_matches_closed_form() {
    let t = RatingTable::new(vec![ir("a", "1", 4.0), ir("a", "2", 3.0), ir("b", "1", 4.5), ir("b", "2", 4.8)]).unwrap();
    let hp = Hyperparams::default();
    let s = fit(&t, IR, &hp, &FitSettings::with_seed(2024)).unwrap();
    let (gamma, alpha) = closed_form_means(&t, hp.mu_mean, hp.mu_var, hp.sigma_shape, hp.sigma_scale);
    assert!(
        (s.gamma.mean - gamma).abs() <= 3.0 * s.gamma.mcse,
        "γ {} vs {} (mcse {})",
        s.gamma.mean,
        gamma,
        s.gamma.mcse
    );
    let a = &s.alpha["a"];
    assert!((a.mean - alpha[0]).abs() <= 3.0 * a.mcse, "α {} vs {} (mcse {})", a.mean, alpha[0], a.mcse);
}

#[test]
fn fixed_seed_is_bit_identical() {
    let t = recovery_table(3);
    let hp = Hyperparams::default();
    let a = fit_chain(&t, &hp, &fast(9)).unwrap();
    let b = fit_chain(&t, &hp, &fast(9)).unwrap();
    assert_eq!(a, b);
    let c = fit_chain(&t, &hp, &fast(10)).unwrap();
    assert_ne!(a.sigma2, c.sigma2);
}

#[test]
fn joint_fit_separates_dimensions() {
    let mut rows = Vec::new();
    for (d, offset) in [(IR, 0.4), (Dimension::FactualAccuracy, -0.4)] {
        for r in ["r1", "r2"] {
            for j in 0..6 {
                rows.push(Rating { rater: r.into(), prompt: format!("p{j}"), dimension: d, score: 3.5 + offset });
            }
        }
    }
    let t = RatingTable::new(rows).unwrap();
    let hp = Hyperparams::default();
    let ir = fit(&t, IR, &hp, &fast(1)).unwrap();
    let fa = fit(&t, Dimension::FactualAccuracy, &hp, &fast(1)).unwrap();
    assert!((ir.gamma.mean - fa.gamma.mean - 0.8).abs() < 0.02);
    assert!(ir.to_json().contains("\"gamma\""));
    assert!(ir.render_table().contains("gamma[InformationRetrieval]"));
}

fn balanced() -> impl Strategy<Value = RatingTable> {
    (2usize..5, 2usize..6).prop_flat_map(|(ni, nj)| {
        proptest::collection::vec(0u8..=10, ni * nj).prop_map(move |scores| {
            let rows = scores
                .iter()
                .enumerate()
                .map(|(k, s)| ir(&format!("r{}", k / nj), &format!("p{}", k % nj), *s as f64 / 2.0))
                .collect();
            RatingTable::new(rows).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn draws_are_centered_and_variance_positive(t in balanced(), seed in 0u64..1000) {
        let chain = fit_chain(&t, &Hyperparams::default(), &FitSettings { n_samples: 1000, n_burnin: 50, seed }).unwrap();
        let (ni, nj) = (chain.raters.len(), chain.prompts.len());
        for row in &chain.draws {
            prop_assert!(row[1..1 + ni].iter().sum::<f64>().abs() < 1e-12);
            prop_assert!(row[1 + ni..1 + ni + nj].iter().sum::<f64>().abs() < 1e-12);
        }
        prop_assert!(chain.sigma2.iter().all(|s| *s > 0.0));
    }

    #[test]
    fn rater_effects_shrink(t in balanced(), seed in 0u64..1000) {
        let s = fit(&t, IR, &Hyperparams::default(), &FitSettings { n_samples: 1000, n_burnin: 50, seed }).unwrap();
        for (rater, dev) in t.rater_deviations(IR) {
            let a = s.alpha[&rater].mean;
            prop_assert!(a.abs() <= dev.abs() + 1e-9, "{} {} vs {}", rater, a, dev);
        }
    }
}

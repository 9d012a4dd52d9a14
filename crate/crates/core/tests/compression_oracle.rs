use mmtrace_core::compression::{
    apply_prune, prune_budget, prune_topk, retained_count, threshold_for_budget, ImportanceScores,
};
use mmtrace_core::trace::{RoleMap, TokenRole};
use mmtrace_core::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GRID: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
const RATES: [f64; 6] = [0.0, 0.25, 0.5, 0.75, 0.9, 0.95];

// Sort (score desc, index asc), slice, re-sort by index.
fn sort_and_slice(scores: &[f64], m: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut kept = idx[..m].to_vec();
    kept.sort();
    kept
}

// floor(N * (1 - R)) by exact integer arithmetic for rates that are
// multiples of 1/100.
fn exact_budget(n: usize, rate: f64) -> usize {
    let keep_pct = 100 - (rate * 100.0).round() as usize;
    n * keep_pct / 100
}

// Minimal observed tau with |{a >= tau}| <= budget, by brute force.
fn brute_threshold(scores: &[f64], budget: usize) -> Option<f64> {
    scores
        .iter()
        .copied()
        .filter(|&t| scores.iter().filter(|&&a| a >= t).count() <= budget)
        .min_by(f64::total_cmp)
}

fn decode(mut code: usize, len: usize) -> Vec<f64> {
    (0..len)
        .map(|_| {
            let v = GRID[code % GRID.len()];
            code /= GRID.len();
            v
        })
        .collect()
}

#[test]
fn topk_matches_sort_and_slice_exhaustively() {
    let mut checked = 0usize;
    for len in 1..=8 {
        for code in 0..GRID.len().pow(len as u32) {
            let v = decode(code, len);
            let scores = ImportanceScores::new(v.clone(), "grid").unwrap();
            for &r in &RATES {
                let m = exact_budget(len, r).max(1);
                assert_eq!(retained_count(len, r), m, "len {len} rate {r}");
                let d = prune_topk(&scores, r).unwrap();
                assert_eq!(d.kept, sort_and_slice(&v, m), "{v:?} at {r}");
                assert_eq!(d.retained_count, m);
                checked += 1;
            }
        }
    }
    assert_eq!(checked, RATES.len() * (1..=8).map(|l| 5usize.pow(l)).sum::<usize>());
}

#[test]
fn threshold_matches_brute_force_exhaustively() {
    for len in 1..=6 {
        for code in 0..GRID.len().pow(len as u32) {
            let v = decode(code, len);
            let scores = ImportanceScores::new(v.clone(), "grid").unwrap();
            for &r in &RATES {
                let budget = exact_budget(len, r);
                match (threshold_for_budget(&scores, r), brute_threshold(&v, budget)) {
                    (Ok(t), Some(b)) => assert_eq!(t, b, "{v:?} at {r}"),
                    (Err(Error::BudgetExhausted(_)), None) => assert_eq!(budget, 0),
                    (Err(Error::InfeasibleTies(_)), None) => assert!(budget > 0),
                    (got, want) => panic!("{v:?} at {r}: {got:?} vs {want:?}"),
                }
            }
        }
    }
}

#[test]
fn threshold_on_random_vectors() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..1000 {
        let n = rng.random_range(1..200);
        // Coarse values force ties; fine values make them rare.
        let coarse = rng.random_bool(0.5);
        let v: Vec<f64> = (0..n)
            .map(|_| if coarse { f64::from(rng.random_range(0..10u8)) } else { rng.random::<f64>() })
            .collect();
        let r = f64::from(rng.random_range(0..100u8)) / 100.0;
        let budget = exact_budget(n, r);
        let scores = ImportanceScores::new(v.clone(), "random").unwrap();
        match threshold_for_budget(&scores, r) {
            Ok(t) => {
                assert!(v.contains(&t));
                assert!(v.iter().filter(|&&a| a >= t).count() <= budget);
                // Minimal: no smaller observed value is feasible.
                for &u in v.iter().filter(|&&u| u < t) {
                    assert!(v.iter().filter(|&&a| a >= u).count() > budget);
                }
                let d = prune_budget(&scores, r).unwrap();
                assert!(d.kept.iter().all(|&i| v[i] >= t));
                assert_eq!(d.threshold, Some(t));
            }
            Err(_) => assert_eq!(brute_threshold(&v, budget), None),
        }
    }
}

#[test]
fn budget_errors() {
    let s = ImportanceScores::new(vec![0.5; 4], "tied").unwrap();
    assert!(matches!(threshold_for_budget(&s, 0.8), Err(Error::BudgetExhausted(_))));
    assert!(matches!(threshold_for_budget(&s, 0.5), Err(Error::InfeasibleTies(_))));
    assert!(matches!(prune_topk(&s, 1.0), Err(Error::Range(_))));
    assert!(ImportanceScores::new(vec![], "empty").is_err());
    assert!(ImportanceScores::new(vec![f64::NAN], "nan").is_err());
}

proptest! {
    #[test]
    fn kept_tokens_dominate_dropped(v in prop::collection::vec(0.0f64..1.0, 1..300), r in 0.0f64..0.999) {
        let d = prune_topk(&ImportanceScores::new(v.clone(), "p").unwrap(), r).unwrap();
        prop_assert_eq!(d.kept.len(), retained_count(v.len(), r));
        prop_assert!(d.kept.windows(2).all(|w| w[0] < w[1]));
        let mask: Vec<bool> = (0..v.len()).map(|i| d.kept.binary_search(&i).is_ok()).collect();
        let min_kept = d.kept.iter().map(|&i| v[i]).fold(f64::INFINITY, f64::min);
        let max_dropped = (0..v.len()).filter(|&i| !mask[i]).map(|i| v[i]).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(min_kept >= max_dropped);
    }

    #[test]
    fn pruned_role_map_keeps_text(nt in 1usize..20, no in 1usize..200, r in 0.0f64..0.99) {
        let roles: RoleMap = std::iter::once(TokenRole::Special)
            .chain(std::iter::repeat_n(TokenRole::Text, nt))
            .chain(std::iter::repeat_n(TokenRole::NonText, no))
            .collect();
        let scores = ImportanceScores::new((0..no).map(|i| (i * 37 % 101) as f64).collect(), "p").unwrap();
        let pruned = apply_prune(&roles, &prune_topk(&scores, r).unwrap()).unwrap();
        prop_assert_eq!(pruned.n_text(), nt);
        prop_assert_eq!(pruned.n_special(), 1);
        prop_assert_eq!(pruned.n_nontext(), retained_count(no, r));
    }
}

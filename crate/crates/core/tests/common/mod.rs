//! Shared helpers for the integration and acceptance suites. The oracles in
//! here recompute expected values from first principles, independent of the
//! library code paths they check.
#![allow(dead_code)] // each test binary uses a different subset

use std::path::PathBuf;
use std::sync::Arc;

use leadsim_core::domain::PolarityCategory;
use leadsim_core::rl::RLState;
use leadsim_core::textmodel::stub::StubBackend;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn shipped_stub() -> Arc<StubBackend> {
    Arc::new(StubBackend::from_file(fixture_path("stub_model.json")).unwrap())
}

/// Independent re-derivation of the opinion score a match/miss echo scorer
/// assigns: whitespace tokens, case-folded with edge punctuation stripped,
/// claim-token occurrences matched against the post's token set, mean
/// negative log-likelihood exponentiated, then con/(pro+con).
pub fn oracle_opinion(
    post: &str,
    pro_claim: &str,
    con_claim: &str,
    match_lp: f64,
    miss_lp: f64,
) -> f64 {
    fn norm(t: &str) -> String {
        t.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase()
    }
    let post_tokens: std::collections::HashSet<String> =
        post.split_whitespace().map(norm).collect();
    let ppl = |claim: &str| -> f64 {
        let tokens: Vec<String> = claim.split_whitespace().map(|t| norm(t)).collect();
        let total: f64 = tokens
            .iter()
            .map(|t| if post_tokens.contains(t) { match_lp } else { miss_lp })
            .sum();
        (-total / tokens.len() as f64).exp()
    };
    let (p, c) = (ppl(pro_claim), ppl(con_claim));
    c / (p + c)
}

/// Optimal policy of the toy environment by finite-horizon value iteration:
/// states are follower buckets 0..=clamp, choosing the target category earns
/// 1 and advances the bucket, anything else earns 0 and stays. Returns the
/// argmax action per bucket and asserts it is horizon-independent.
pub fn toy_value_iteration_policy(
    target: PolarityCategory,
    bucket_clamp: u8,
    horizon: u32,
    gamma: f64,
) -> Vec<(RLState, PolarityCategory)> {
    let n_states = bucket_clamp as usize + 1;
    let reward = |a: PolarityCategory| if a == target { 1.0 } else { 0.0 };
    let next = |b: usize, a: PolarityCategory| {
        if a == target {
            (b + 1).min(bucket_clamp as usize)
        } else {
            b
        }
    };

    // value[h][b] = optimal return with h steps remaining
    let mut value = vec![vec![0.0f64; n_states]];
    let mut policy_per_horizon: Vec<Vec<PolarityCategory>> = Vec::new();
    for h in 1..=horizon {
        let prev = &value[h as usize - 1];
        let mut v = vec![0.0f64; n_states];
        let mut pol = Vec::with_capacity(n_states);
        for b in 0..n_states {
            let mut best = f64::NEG_INFINITY;
            let mut best_a = PolarityCategory::StrongCon;
            for a in PolarityCategory::ALL {
                let q = reward(a) + gamma * prev[next(b, a)];
                if q > best {
                    best = q;
                    best_a = a;
                }
            }
            v[b] = best;
            pol.push(best_a);
        }
        value.push(v);
        policy_per_horizon.push(pol);
    }
    for pol in &policy_per_horizon {
        assert_eq!(
            pol, &policy_per_horizon[0],
            "toy oracle policy must not depend on the horizon"
        );
    }
    (0..n_states)
        .map(|b| {
            (
                RLState {
                    category_counts: [0, 0, 1, 0, 0],
                    follower_bucket: b as u8,
                },
                policy_per_horizon[0][b],
            )
        })
        .collect()
}

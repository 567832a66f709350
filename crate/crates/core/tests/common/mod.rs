//! Reference selfish-mining revenue on a perfect network, built without the
//! crate's chain code: an explicit embedded jump chain over `0, 0', 1, 2, ..`
//! with per-transition block rewards, solved by power iteration.

#![allow(dead_code)]

const DEPTH: usize = 400;

/// Index 0 is the agreed state, 1 the published tie, `k + 1` a private lead of `k`.
fn transitions(alpha: f64, gamma: f64) -> Vec<Vec<(usize, f64, f64, f64)>> {
    let beta = 1.0 - alpha;
    let lead = |k: usize| k + 1;
    let mut t = vec![Vec::new(); DEPTH + 2];
    // (target, probability, attacker blocks won, honest blocks won)
    t[0] = vec![(lead(1), alpha, 0.0, 0.0), (0, beta, 0.0, 1.0)];
    t[1] = vec![
        (0, alpha, 2.0, 0.0),
        (0, beta * gamma, 1.0, 1.0),
        (0, beta * (1.0 - gamma), 0.0, 2.0),
    ];
    t[lead(1)] = vec![(lead(2), alpha, 0.0, 0.0), (1, beta, 0.0, 0.0)];
    t[lead(2)] = vec![(lead(3), alpha, 0.0, 0.0), (0, beta, 2.0, 0.0)];
    for k in 3..=DEPTH {
        let up = if k < DEPTH { lead(k + 1) } else { lead(k) };
        t[lead(k)] = vec![(up, alpha, 0.0, 0.0), (lead(k - 1), beta, 1.0, 0.0)];
    }
    t
}

/// Attacker share of main-chain blocks.
pub fn selfish_share(alpha: f64, gamma: f64) -> f64 {
    let t = transitions(alpha, gamma);
    let n = t.len();
    let mut pi = vec![1.0 / n as f64; n];
    for _ in 0..200_000 {
        let mut next = vec![0.0; n];
        for (s, out) in t.iter().enumerate() {
            for &(to, p, _, _) in out {
                next[to] += pi[s] * p;
            }
        }
        let change: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        pi = next;
        if change < 1e-15 {
            break;
        }
    }
    let (mut m, mut h) = (0.0, 0.0);
    for (s, out) in t.iter().enumerate() {
        for &(_, p, dm, dh) in out {
            m += pi[s] * p * dm;
            h += pi[s] * p * dh;
        }
    }
    m / (m + h)
}

/// The well-known closed form for the same chain.
pub fn selfish_share_closed(alpha: f64, gamma: f64) -> f64 {
    let a = alpha;
    (a * (1.0 - a).powi(2) * (4.0 * a + gamma * (1.0 - 2.0 * a)) - a.powi(3)) / (1.0 - a * (1.0 + (2.0 - a) * a))
}

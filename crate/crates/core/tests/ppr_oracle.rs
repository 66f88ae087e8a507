use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use sensetag::{ppr, LexKb, Pos, PprConfig, Synset, SynsetId, TeleportMode};

fn name(i: usize) -> String {
    format!("n{i:02}")
}

fn build_kb(n: usize, edges: &[(usize, usize)]) -> LexKb {
    let synsets = (0..n).map(|i| {
        let mut s = Synset::new(name(i), Pos::Noun).with_lemma("en", &format!("w{i}"));
        for &(a, b) in edges {
            if a == i && b != i {
                s = s.with_edge(&name(b));
            }
        }
        s
    });
    LexKb::from_synsets(synsets).unwrap()
}

/// Solves (I - dM - d v 1_D^T) p = (1 - d) v by Gaussian elimination, where
/// D is the set of nodes without neighbors.
fn dense_oracle(n: usize, edges: &[(usize, usize)], v: &[f64], d: f64) -> Vec<f64> {
    let mut adj = vec![BTreeSet::new(); n];
    for &(a, b) in edges {
        if a != b {
            adj[a].insert(b);
            adj[b].insert(a);
        }
    }
    let total: f64 = v.iter().sum();
    let v: Vec<f64> = v.iter().map(|x| x / total).collect();
    let mut a = vec![vec![0.0; n + 1]; n];
    for i in 0..n {
        a[i][i] += 1.0;
        a[i][n] = (1.0 - d) * v[i];
    }
    for j in 0..n {
        if adj[j].is_empty() {
            for i in 0..n {
                a[i][j] -= d * v[i];
            }
        } else {
            let w = 1.0 / adj[j].len() as f64;
            for &i in &adj[j] {
                a[i][j] -= d * w;
            }
        }
    }
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .unwrap();
        a.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                if f != 0.0 {
                    for c in col..=n {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
    }
    (0..n).map(|i| a[i][n] / a[i][i]).collect()
}

fn graph() -> impl Strategy<Value = (usize, Vec<(usize, usize)>, Vec<f64>)> {
    (1usize..=20).prop_flat_map(|n| {
        (
            Just(n),
            prop::collection::vec((0..n, 0..n), 0..=3 * n),
            prop::collection::vec(prop_oneof![Just(0.0), 0.01f64..1.0], n),
        )
    })
}

fn teleport(v: &[f64]) -> BTreeMap<SynsetId, f64> {
    v.iter()
        .enumerate()
        .map(|(i, &x)| (SynsetId::new(name(i)), x))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn iterative_matches_dense_solve((n, edges, mut v) in graph(), d in 0.5f64..0.95) {
        if v.iter().all(|&x| x == 0.0) {
            v[0] = 1.0;
        }
        let kb = build_kb(n, &edges);
        let cfg = PprConfig { damping: d, ..PprConfig::default() };
        let p = ppr(&kb, &teleport(&v), &cfg).unwrap();
        let oracle = dense_oracle(n, &edges, &v, d);
        for i in 0..n {
            prop_assert!((p[name(i).as_str()] - oracle[i]).abs() <= 1e-6);
        }
        let mass: f64 = p.values().sum();
        prop_assert!((mass - 1.0).abs() < 1e-9);
    }

    #[test]
    fn single_precision_tracks_the_oracle((n, edges, mut v) in graph()) {
        if v.iter().all(|&x| x == 0.0) {
            v[0] = 1.0;
        }
        let kb = build_kb(n, &edges);
        let t: BTreeMap<SynsetId, f32> = teleport(&v).into_iter().map(|(k, x)| (k, x as f32)).collect();
        let p = ppr(&kb, &t, &PprConfig::default()).unwrap();
        let oracle = dense_oracle(n, &edges, &v, 0.85);
        for i in 0..n {
            prop_assert!((p[name(i).as_str()] as f64 - oracle[i]).abs() <= 1e-4);
        }
    }
}

#[test]
fn two_nodes() {
    let kb = build_kb(2, &[(0, 1)]);
    let p = ppr(&kb, &teleport(&[1.0, 0.0]), &PprConfig::default()).unwrap();
    assert!((p["n00"] - 0.540540).abs() <= 1e-6);
    assert!((p["n01"] - 0.459459).abs() <= 1e-6);
}

#[test]
fn teleport_mode_does_not_change_plain_ppr() {
    let kb = build_kb(4, &[(0, 1), (1, 2), (2, 3)]);
    let t = teleport(&[0.2, 0.0, 0.0, 0.8]);
    let a = ppr(&kb, &t, &PprConfig::default()).unwrap();
    let cfg = PprConfig {
        teleport: TeleportMode::PerWord,
        ..PprConfig::default()
    };
    assert_eq!(a, ppr(&kb, &t, &cfg).unwrap());
}

//! Search, masking and hub detection against brute-force recounts.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use hubtopo_core::high::HubModel;
use hubtopo_core::search::{bfs_plan, history_order};
use hubtopo_core::topology::detect_hubs;
use hubtopo_core::{search, BehaviorTopology, HighConfig, HighModel, HubKinds, LatentTrajectory, SearchConfig};
use hubtopo_maze::{Color, Goal};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Transition probabilities that depend on the whole history through a hash.
struct Hashed {
    succ: Vec<Vec<usize>>,
    salt: u64,
}

impl Hashed {
    fn dist(&self, history: &[usize]) -> Vec<f64> {
        let last = *history.last().unwrap();
        let mut h = self.salt;
        for &x in history {
            h = h.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(x as u64 + 1);
            h ^= h >> 29;
        }
        let mut w = vec![0.0; self.succ.len()];
        for &s in &self.succ[last] {
            let mut v = h ^ (s as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            v ^= v >> 31;
            v = v.wrapping_mul(0x94D0_49BB_1331_11EB);
            v ^= v >> 32;
            // some weights collapse to zero so dead ends and pruning occur
            w[s] = if v % 7 == 0 { 0.0 } else { (v % 1000) as f64 + 1.0 };
        }
        let z: f64 = w.iter().sum();
        if z > 0.0 {
            w.iter_mut().for_each(|x| *x /= z);
        }
        w
    }
}

impl HubModel for Hashed {
    type Memory = Vec<usize>;
    fn begin(&self, start: usize) -> Vec<usize> {
        vec![start]
    }
    fn advance(&self, memory: &Vec<usize>, hub: usize) -> Vec<usize> {
        let mut m = memory.clone();
        m.push(hub);
        m
    }
    fn next_dist(&self, memory: &Vec<usize>, _last: usize) -> Vec<f64> {
        self.dist(memory)
    }
}

fn random_graph(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<usize>> {
    (0..n).map(|_| (0..n).filter(|_| rng.gen_bool(0.35)).collect()).collect()
}

/// Minimum over every admissible goal-ending history, enumerated exhaustively.
fn brute_force(model: &Hashed, start: usize, goals: &[usize], cfg: &SearchConfig) -> Option<(f64, Vec<usize>)> {
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut stack = vec![(0.0f64, vec![start])];
    while let Some((cost, hubs)) = stack.pop() {
        let last = *hubs.last().unwrap();
        if goals.contains(&last) {
            if best.as_ref().map_or(true, |b| history_order((cost, &hubs), (b.0, &b.1)).is_lt()) {
                best = Some((cost, hubs));
            }
            continue;
        }
        if hubs.len() > cfg.max_depth {
            continue;
        }
        for (next, p) in model.dist(&hubs).into_iter().enumerate() {
            if p > 0.0 && p >= cfg.p_min {
                let mut h = hubs.clone();
                h.push(next);
                let step = -p.ln();
                stack.push((if step > cost { step } else { cost } + cfg.eta, h));
            }
        }
    }
    best
}

#[test]
fn search_matches_exhaustive_enumeration() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut found = 0;
    for case in 0..500 {
        let n = rng.gen_range(2..=8);
        let model = Hashed { succ: random_graph(&mut rng, n), salt: case };
        let start = rng.gen_range(0..n);
        let goals: Vec<usize> = (0..n).filter(|&h| h != start && rng.gen_bool(0.25)).collect();
        let cfg = SearchConfig {
            p_min: [0.0, 0.05, 0.2][case as usize % 3],
            eta: [0.0, 0.01, 0.5][(case as usize / 3) % 3],
            max_depth: rng.gen_range(1..=5),
            max_expansions: usize::MAX,
            match_tolerance: None,
        };
        let got = search(&model, start, &goals, &cfg);
        match brute_force(&model, start, &goals, &cfg) {
            Some((cost, hubs)) => {
                let plan = got.unwrap_or_else(|e| panic!("case {case}: search gave {e:?}, oracle {hubs:?}"));
                assert_eq!(plan.hubs, hubs, "case {case}");
                assert_eq!(plan.cost, cost, "case {case}");
                for (i, w) in plan.hubs.windows(2).enumerate() {
                    assert_eq!(plan.probs[i], model.dist(&plan.hubs[..=i])[w[1]]);
                }
                found += 1;
            }
            None => assert!(got.is_err() || goals.is_empty(), "case {case}: search found {got:?}"),
        }
    }
    assert!(found > 100, "only {found} solvable cases");
    assert!(t0.elapsed().as_secs() < 30);
}

#[test]
fn bfs_finds_fewest_hops() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..300 {
        let n = rng.gen_range(2..=9);
        let succ = random_graph(&mut rng, n);
        let start = rng.gen_range(0..n);
        let goals: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.2)).collect();
        // hop distances by repeated relaxation
        let mut dist = vec![usize::MAX; n];
        dist[start] = 0;
        for _ in 0..n {
            for a in 0..n {
                if dist[a] == usize::MAX {
                    continue;
                }
                for &b in &succ[a] {
                    dist[b] = dist[b].min(dist[a] + 1);
                }
            }
        }
        let best = goals.iter().map(|&g| dist[g]).min().unwrap_or(usize::MAX);
        match bfs_plan(&succ, start, &goals) {
            Ok(plan) => {
                assert_eq!(plan.hops(), best);
                assert!(goals.contains(plan.hubs.last().unwrap()));
                assert!(plan.edges().iter().all(|&(a, b)| succ[a].contains(&b)));
            }
            Err(_) => assert_eq!(best, usize::MAX),
        }
    }
}

#[test]
fn high_model_masks_non_edges() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 12;
    let succ = random_graph(&mut rng, n);
    let cfg = HighConfig { embed_dim: 6, hidden: 8, ..HighConfig::default() };
    let model = HighModel::new(n, succ.clone(), &cfg);
    for _ in 0..10_000 {
        let len = rng.gen_range(1..=6);
        let history: Vec<usize> = (0..len).map(|_| rng.gen_range(0..n)).collect();
        let p = model.next_hub_dist(&history).unwrap();
        let last = *history.last().unwrap();
        for (h, &v) in p.iter().enumerate() {
            if !succ[last].contains(&h) {
                assert_eq!(v, 0.0);
            }
        }
        let total: f64 = p.iter().sum();
        if succ[last].is_empty() {
            assert_eq!(total, 0.0);
        } else {
            assert!((total - 1.0).abs() <= 1e-9, "sum {total}");
        }
    }
}

const EPS: f64 = 0.1;

fn point(c: i64) -> Vec<f64> {
    vec![(c as f64 + 0.5) * EPS, -0.05]
}

fn toy_set(rng: &mut ChaCha8Rng) -> Vec<LatentTrajectory> {
    let goals = Goal::all();
    (0..rng.gen_range(1..6))
        .map(|_| {
            let len = rng.gen_range(1..10);
            LatentTrajectory {
                latents: (0..len).map(|_| point(rng.gen_range(0..8))).collect(),
                goal: goals[rng.gen_range(0..goals.len())],
                success: rng.gen_bool(0.5),
            }
        })
        .collect()
}

#[test]
fn hub_detection_matches_recount() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..100 {
        let trajs = toy_set(&mut rng);
        let ids: Vec<Vec<i64>> = trajs.iter().map(|t| t.latents.iter().map(|z| (z[0] / EPS).floor() as i64).collect()).collect();
        let mut preds: BTreeMap<i64, BTreeSet<i64>> = BTreeMap::new();
        let mut succs: BTreeMap<i64, BTreeSet<i64>> = BTreeMap::new();
        let mut expected: BTreeMap<i64, String> = BTreeMap::new();
        for seq in &ids {
            for w in seq.windows(2).filter(|w| w[0] != w[1]) {
                succs.entry(w[0]).or_default().insert(w[1]);
                preds.entry(w[1]).or_default().insert(w[0]);
            }
        }
        for c in ids.iter().flatten().copied().collect::<BTreeSet<_>>() {
            let mut k = String::new();
            if ids.iter().any(|s| s[0] == c) {
                k.push('S');
            }
            if preds.get(&c).map_or(0, BTreeSet::len) >= 2 {
                k.push('C');
            }
            if succs.get(&c).map_or(0, BTreeSet::len) >= 2 {
                k.push('D');
            }
            if ids.iter().any(|s| *s.last().unwrap() == c) {
                k.push('T');
            }
            if !k.is_empty() {
                expected.insert(c, k);
            }
        }
        let hubs = detect_hubs(&trajs, EPS).unwrap();
        let got: BTreeMap<i64, String> = hubs.iter().map(|h| (h.cluster.0[0], h.kinds.letters())).collect();
        assert_eq!(got.len(), expected.len());
        for (c, letters) in &expected {
            let mut a: Vec<char> = got[c].chars().collect();
            let mut b: Vec<char> = letters.chars().collect();
            a.sort();
            b.sort();
            assert_eq!(a, b, "cluster {c}");
        }

        // goal hubs: terminal clusters of successful demos of that goal
        let topo = BehaviorTopology::build(&trajs, EPS).unwrap();
        for g in Goal::all() {
            let want: BTreeSet<i64> = trajs
                .iter()
                .zip(&ids)
                .filter(|(t, _)| t.success && t.goal == g)
                .map(|(_, s)| *s.last().unwrap())
                .collect();
            let got: BTreeSet<i64> = topo.goal_hubs(g).iter().map(|&h| topo.hubs[h].cluster.0[0]).collect();
            assert_eq!(got, want);
        }
    }
}

#[test]
fn letters_cover_every_kind() {
    let mut k = HubKinds::default();
    for kind in [HubKinds::START, HubKinds::CONVERGENCE, HubKinds::DIVERGENCE, HubKinds::TERMINAL] {
        k.insert(kind);
    }
    assert_eq!(HubKinds::parse(&k.letters()), Some(k));
    assert_eq!(k.letters().len(), 4);
}

#[test]
fn far_latents_do_not_match_a_hub() {
    let goal = Goal::new(Color::Red, Color::Blue).unwrap();
    let trajs = vec![LatentTrajectory { latents: vec![point(0), point(3), point(6)], goal, success: true }];
    let topo = BehaviorTopology::build(&trajs, EPS).unwrap();
    let start = topo.hubs[0].representative.clone();
    assert_eq!(topo.match_hub(&start, EPS), Some(0));
    let mut far = start.clone();
    far[1] += 10.0 * EPS;
    assert_eq!(topo.match_hub(&far, EPS), None);
    far[1] = start[1] + 0.5 * EPS;
    assert_eq!(topo.match_hub(&far, EPS), Some(0));
}

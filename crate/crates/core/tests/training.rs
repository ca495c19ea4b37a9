use hubtopo_core::exec::argmax;
use hubtopo_core::high::train_high;
use hubtopo_core::lowlevel::train_low_level;
use hubtopo_core::policy::{policy_input, PolicyBank};
use hubtopo_core::{
    BehaviorTopology, Encoder, HighConfig, HighModel, LatentTrajectory, LowLevelConfig, OracleEncoder, OracleMode,
    PolicyConfig,
};
use hubtopo_maze::{generate_success_demo, Color, Env, Goal, Task, Trajectory};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn demo(start_id: usize, first: Color, second: Color) -> Trajectory {
    generate_success_demo(&Env::desk(), Task { start_id, goal: Goal::new(first, second).unwrap() }).unwrap()
}

fn oracle_topology(env: &Env, trajs: &[&Trajectory]) -> BehaviorTopology {
    let enc = Encoder::Oracle(OracleEncoder::new(OracleMode::Full, 0.001));
    let latents: Vec<LatentTrajectory> = trajs
        .iter()
        .map(|t| LatentTrajectory { latents: enc.encode_trajectory(env, t).unwrap(), goal: t.task.goal, success: t.success })
        .collect();
    BehaviorTopology::build(&latents, 0.001).unwrap()
}

#[test]
fn policies_replay_segments_and_follow_the_target() {
    let env = Env::desk();
    let a = demo(0, Color::Red, Color::Blue);
    let b = demo(0, Color::Blue, Color::Red);
    let trajs = [&a, &b];
    let topo = oracle_topology(&env, &trajs);
    let emb = HighModel::for_topology(&topo, &HighConfig { embed_dim: 8, hidden: 8, ..HighConfig::default() }).embeddings();
    let cfg = PolicyConfig { noise: 0.0, ..PolicyConfig::default() };
    let (bank, _) = PolicyBank::train(&topo, &trajs, emb.clone(), &cfg).unwrap();

    // greedy replay on the recorded observations reproduces every segment
    for segs in topo.edges.values() {
        for seg in segs {
            let traj = trajs[seg.trajectory];
            let mut memory = bank.new_memory(seg.source).unwrap();
            for t in seg.start..seg.end {
                let p = bank.act(seg.source, seg.target, &traj.observations[t], &mut memory).unwrap();
                assert_eq!(argmax(&p), traj.actions[t].id(), "segment {seg:?} step {t}");
            }
        }
    }

    // the divergence hub where the two demos part ways acts differently
    // depending on the target it is asked to reach
    let fork = (0..topo.hub_count()).find(|&h| topo.successors(h).len() == 2).expect("the demos diverge");
    let targets = topo.successors(fork);
    let first_obs = |target: usize| {
        let seg = topo.edges[&(fork, target)][0];
        (trajs[seg.trajectory].observations[seg.start].clone(), trajs[seg.trajectory].actions[seg.start].id())
    };
    let (obs0, act0) = first_obs(targets[0]);
    let (obs1, act1) = first_obs(targets[1]);
    assert_eq!(obs0, obs1, "both segments leave from the same observation");
    assert_ne!(act0, act1);
    let policy = bank.policy(fork).unwrap();
    for (target, want) in [(targets[0], act0), (targets[1], act1)] {
        let mut memory = vec![0.0; policy.memory_len()];
        let p = policy.act(&policy_input(&obs0, &emb[target]), &mut memory).unwrap();
        assert_eq!(argmax(&p), want);
    }
}

#[test]
fn pretraining_learns_a_chain() {
    let point = |c: i64| vec![(c as f64 + 0.5) * 0.1];
    let goal = Goal::all()[0];
    // the second demo starts at B, which makes B a hub
    let trajs = vec![
        LatentTrajectory { latents: vec![point(0), point(1), point(2)], goal, success: true },
        LatentTrajectory { latents: vec![point(1), point(2)], goal, success: true },
    ];
    let topo = BehaviorTopology::build(&trajs, 0.1).unwrap();
    assert_eq!(topo.adjacency(), vec![vec![1], vec![2], vec![]]);
    let cfg = HighConfig { embed_dim: 4, hidden: 8, epochs: 0, ..HighConfig::default() };
    let (model, _) = train_high(&topo, &cfg).unwrap();
    let a = topo.hub_of_cluster(&hubtopo_core::bucket_of(&point(0), 0.1).unwrap()).unwrap();
    let b = topo.hub_of_cluster(&hubtopo_core::bucket_of(&point(1), 0.1).unwrap()).unwrap();
    assert!(model.next_hub_dist(&[a]).unwrap()[b] > 0.9);
}

#[test]
fn trained_encoder_uses_history_and_actions() {
    let env = Env::desk();
    let demos = [demo(0, Color::Red, Color::Blue), demo(1, Color::Green, Color::Purple), demo(2, Color::Purple, Color::Red)];
    let refs: Vec<&Trajectory> = demos.iter().collect();
    let cfg = LowLevelConfig { latent_dim: 8, hidden: 24, lr: 3e-3, epochs: 30, window: 20, ..LowLevelConfig::default() };
    let (model, log) = train_low_level(&refs, &cfg).unwrap();
    assert!(log.epoch_loss.last() < log.epoch_loss.first());
    let enc = Encoder::Learned(Box::new(model.clone()));

    // the same observation reached after a key pickup, and seen cold
    let t = &demos[0];
    let z = enc.encode_trajectory(&env, t).unwrap();
    let held = t.replay(&env).unwrap().iter().position(|s| s.held.is_some()).expect("demo picks up a key");
    let mut fresh = enc.new_history();
    let cold = model.encode(&t.observations[held], &mut fresh).unwrap();
    let gap = z[held].iter().zip(&cold).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(gap > 0.001, "history changes z by only {gap}");

    // dynamics error on the demonstrated actions beats shuffled actions
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (mut real, mut shuffled, mut n) = (0.0, 0.0, 0);
    for t in &demos {
        let z = enc.encode_trajectory(&env, t).unwrap();
        let mut actions: Vec<usize> = t.actions.iter().map(|a| a.id()).collect();
        let sq = |a: usize, i: usize| {
            let p = model.predict_next(&z[i], a).unwrap();
            p.iter().zip(&z[i + 1]).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()
        };
        for (i, &a) in actions.iter().enumerate() {
            real += sq(a, i);
        }
        actions.shuffle(&mut rng);
        for (i, &a) in actions.iter().enumerate() {
            shuffled += sq(a, i);
        }
        n += actions.len();
    }
    assert!(real < shuffled, "real {} shuffled {}", real / n as f64, shuffled / n as f64);
}

//! On-disk trajectory and dataset formats.
//!
//! A trajectory is a line-oriented text log plus a sidecar `.obs` file in
//! the parameter-file binary format holding the observations:
//!
//! ```text
//! hubtopo-trajectory 1
//! start <start id>
//! goal <color> <color>
//! success <0|1>
//! failure <none | failure spec>
//! steps <n>
//! <step index> <action id> <reward> <terminal 0|1>     (n lines)
//! crc32 <hex>
//! ```
//!
//! A dataset directory holds `manifest.txt` and `traj_<id>.log/.obs` for
//! every trajectory, successes first.

use std::fs;
use std::path::Path;

use hubtopo_nn::io::{decode_params, encode_params, seal_text, unseal_text, ParamHeader};
use hubtopo_nn::{ParamSet, Tensor};

use crate::demo::{DemoDataset, FailureSpec, Task, Trajectory};
use crate::env::{Action, Goal};
use crate::map::Color;
use crate::raster::{Observation, VIEW_LEN};
use crate::MazeError;

const TRAJ_HEADER: &str = "hubtopo-trajectory 1";
const MANIFEST_HEADER: &str = "hubtopo-dataset 1";

pub fn trajectory_log(t: &Trajectory) -> String {
    let mut s = String::new();
    s.push_str(TRAJ_HEADER);
    s.push('\n');
    s.push_str(&format!("start {}\n", t.task.start_id));
    s.push_str(&format!("goal {} {}\n", t.task.goal.first, t.task.goal.second));
    s.push_str(&format!("success {}\n", u8::from(t.success)));
    let failure = t.failure.map_or_else(|| "none".to_string(), |f| f.describe());
    s.push_str(&format!("failure {failure}\n"));
    s.push_str(&format!("steps {}\n", t.len()));
    for (i, (a, r)) in t.actions.iter().zip(&t.rewards).enumerate() {
        let terminal = u8::from(i + 1 == t.len());
        s.push_str(&format!("{i} {} {r} {terminal}\n", a.id()));
    }
    seal_text(&s)
}

fn observation_tensors(t: &Trajectory) -> ParamSet {
    let n = t.observations.len();
    let view: Vec<f64> = t.observations.iter().flat_map(|o| o.view.iter().copied()).collect();
    let barrel: Vec<f64> = t.observations.iter().flat_map(|o| o.barrel_vec.map(f64::from)).collect();
    let mut ps = ParamSet::new();
    ps.add("view", Tensor::new(vec![n, VIEW_LEN], view).expect("raster values are finite"));
    ps.add("barrel", Tensor::new(vec![n, 2], barrel).expect("barrel ids are finite"));
    ps
}

fn bad(what: impl Into<String>) -> MazeError {
    MazeError::Format(what.into())
}

fn field<'a>(lines: &mut impl Iterator<Item = &'a str>, key: &str) -> Result<&'a str, MazeError> {
    let line = lines.next().ok_or_else(|| bad(format!("missing {key}")))?;
    line.strip_prefix(key)
        .and_then(|r| r.strip_prefix(' '))
        .ok_or_else(|| bad(format!("expected {key}, found {line:?}")))
}

pub fn parse_trajectory(log: &str, obs: &[u8]) -> Result<Trajectory, MazeError> {
    let body = unseal_text(log)?;
    let mut lines = body.lines();
    if lines.next() != Some(TRAJ_HEADER) {
        return Err(bad("unknown trajectory header"));
    }
    let start_id: usize = field(&mut lines, "start")?.parse().map_err(|_| bad("start id"))?;
    if start_id >= 3 {
        return Err(bad(format!("start id {start_id}")));
    }
    let goal = {
        let g: Vec<Color> = field(&mut lines, "goal")?.split(' ').filter_map(Color::parse).collect();
        if g.len() != 2 {
            return Err(bad("goal colors"));
        }
        Goal::new(g[0], g[1])?
    };
    let success = field(&mut lines, "success")? == "1";
    let failure = match field(&mut lines, "failure")? {
        "none" => None,
        s => Some(FailureSpec::parse(s).ok_or_else(|| bad(format!("failure spec {s:?}")))?),
    };
    let steps: usize = field(&mut lines, "steps")?.parse().map_err(|_| bad("step count"))?;
    let mut actions = Vec::with_capacity(steps);
    let mut rewards = Vec::with_capacity(steps);
    for i in 0..steps {
        let line = lines.next().ok_or_else(|| bad(format!("missing step {i}")))?;
        let parts: Vec<&str> = line.split(' ').collect();
        if parts.len() != 4 || parts[0].parse::<usize>().ok() != Some(i) {
            return Err(bad(format!("step line {line:?}")));
        }
        let a = parts[1].parse().ok().and_then(Action::from_id).ok_or_else(|| bad("action id"))?;
        actions.push(a);
        rewards.push(parts[2].parse().map_err(|_| bad("reward"))?);
    }
    let (header, ps) = decode_params(obs)?;
    if header.kind != "observations" {
        return Err(bad(format!("sidecar kind {:?}", header.kind)));
    }
    let view = ps.id_of("view").map(|i| ps.get(i)).ok_or_else(|| bad("sidecar view"))?;
    let barrel = ps.id_of("barrel").map(|i| ps.get(i)).ok_or_else(|| bad("sidecar barrel"))?;
    if view.shape() != [steps + 1, VIEW_LEN] || barrel.shape() != [steps + 1, 2] {
        return Err(bad("sidecar shape does not match step count"));
    }
    let observations = (0..=steps)
        .map(|t| Observation {
            view: view.data()[t * VIEW_LEN..(t + 1) * VIEW_LEN].to_vec(),
            barrel_vec: [barrel.data()[2 * t] as u8, barrel.data()[2 * t + 1] as u8],
        })
        .collect();
    Ok(Trajectory { task: Task { start_id, goal }, observations, actions, rewards, success, failure })
}

pub fn save_trajectory(dir: &Path, stem: &str, t: &Trajectory) -> Result<(), MazeError> {
    fs::write(dir.join(format!("{stem}.log")), trajectory_log(t))?;
    let header = ParamHeader { kind: "observations".into(), tag: 0 };
    fs::write(dir.join(format!("{stem}.obs")), encode_params(&header, &observation_tensors(t)))?;
    Ok(())
}

pub fn load_trajectory(dir: &Path, stem: &str) -> Result<Trajectory, MazeError> {
    let log = fs::read_to_string(dir.join(format!("{stem}.log")))?;
    let obs = fs::read(dir.join(format!("{stem}.obs")))?;
    parse_trajectory(&log, &obs)
}

fn task_list(tasks: &[Task]) -> String {
    tasks.iter().map(|t| format!("{}:{}", t.start_id, t.goal.index())).collect::<Vec<_>>().join(" ")
}

fn parse_tasks(s: &str) -> Result<Vec<Task>, MazeError> {
    let goals = Goal::all();
    s.split_whitespace()
        .map(|item| {
            let (a, b) = item.split_once(':').ok_or_else(|| bad(format!("task {item:?}")))?;
            let start_id: usize = a.parse().map_err(|_| bad("task start"))?;
            let gi: usize = b.parse().map_err(|_| bad("task goal"))?;
            let goal = *goals.get(gi).ok_or_else(|| bad("goal index"))?;
            Ok(Task { start_id, goal })
        })
        .collect()
}

pub fn traj_stem(id: usize) -> String {
    format!("traj_{id:03}")
}

pub fn save_dataset(dir: &Path, ds: &DemoDataset) -> Result<(), MazeError> {
    fs::create_dir_all(dir)?;
    for (id, t) in ds.trajectories().enumerate() {
        save_trajectory(dir, &traj_stem(id), t)?;
    }
    let manifest = format!(
        "{MANIFEST_HEADER}\nseed {}\ncandidates {}\nsuccesses {}\nfailures {}\nseen {}\nunseen {}\n",
        ds.seed,
        ds.candidates,
        ds.successes.len(),
        ds.failures.len(),
        task_list(&ds.seen),
        task_list(&ds.unseen),
    );
    fs::write(dir.join("manifest.txt"), seal_text(&manifest))?;
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<DemoDataset, MazeError> {
    let text = fs::read_to_string(dir.join("manifest.txt"))?;
    let body = unseal_text(&text)?;
    let mut lines = body.lines();
    if lines.next() != Some(MANIFEST_HEADER) {
        return Err(bad("unknown manifest header"));
    }
    let num = |v: &str| v.parse::<usize>().map_err(|_| bad(format!("number {v:?}")));
    let seed = field(&mut lines, "seed")?.parse().map_err(|_| bad("seed"))?;
    let candidates = num(field(&mut lines, "candidates")?)?;
    let n_success = num(field(&mut lines, "successes")?)?;
    let n_failure = num(field(&mut lines, "failures")?)?;
    let seen = parse_tasks(field(&mut lines, "seen")?)?;
    let unseen = parse_tasks(field(&mut lines, "unseen")?)?;
    let mut all = (0..n_success + n_failure)
        .map(|id| load_trajectory(dir, &traj_stem(id)))
        .collect::<Result<Vec<_>, _>>()?;
    let failures = all.split_off(n_success);
    if all.iter().any(|t| !t.success) || failures.iter().any(|t| t.success) {
        return Err(bad("trajectory outcome does not match its manifest section"));
    }
    Ok(DemoDataset { seed, seen, unseen, successes: all, failures, candidates })
}

//! Behavior topology: tolerance bucketing, hub detection, collapse of
//! demonstrations into hub-visit sequences, and edge/segment extraction.
//!
//! Text format (version 1), sealed with a `crc32` trailer line:
//!
//! ```text
//! hubtopo-topology 1
//! epsilon <ε> dim <d>
//! [hubs] <n>
//! <id> <kinds> <labels|-> <bucket indices, comma-joined> <representative coordinates...>
//! [edges] <m>
//! <source> <target> <segment count>
//! [segments] <k>
//! <source> <target> <trajectory id> <start step> <end step>
//! [sequences] <t>
//! <trajectory id> <hub ids...>
//! ```
//!
//! `kinds` is a subset of `SCDT` (start, convergence, divergence, terminal)
//! and labels are `goalindex:y` pairs joined by commas.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use hubtopo_maze::Goal;
use hubtopo_nn::io::{seal_text, unseal_text};

use crate::{CoreError, Result};

const HEADER: &str = "hubtopo-topology 1";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClusterId(pub Vec<i64>);

pub fn bucket_of(z: &[f64], epsilon: f64) -> Result<ClusterId> {
    if !(epsilon > 0.0) {
        return Err(CoreError::InvalidInput(format!("tolerance must be positive, got {epsilon}")));
    }
    Ok(ClusterId(z.iter().map(|v| (v / epsilon).floor() as i64).collect()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct HubKinds(u8);

impl HubKinds {
    pub const START: HubKinds = HubKinds(1);
    pub const CONVERGENCE: HubKinds = HubKinds(2);
    pub const DIVERGENCE: HubKinds = HubKinds(4);
    pub const TERMINAL: HubKinds = HubKinds(8);
    const LETTERS: [(HubKinds, char); 4] = [
        (HubKinds::START, 'S'),
        (HubKinds::CONVERGENCE, 'C'),
        (HubKinds::DIVERGENCE, 'D'),
        (HubKinds::TERMINAL, 'T'),
    ];

    pub fn contains(self, k: HubKinds) -> bool {
        self.0 & k.0 == k.0
    }

    pub fn insert(&mut self, k: HubKinds) {
        self.0 |= k.0;
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn letters(self) -> String {
        HubKinds::LETTERS.iter().filter(|(k, _)| self.contains(*k)).map(|(_, c)| *c).collect()
    }

    pub fn parse(s: &str) -> Option<HubKinds> {
        let mut k = HubKinds::default();
        for ch in s.chars() {
            k.insert(HubKinds::LETTERS.iter().find(|(_, c)| *c == ch)?.0);
        }
        (!k.is_empty()).then_some(k)
    }
}

/// Goal and outcome of one demonstration ending in a terminal hub.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TerminalLabel {
    pub goal: Goal,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hub {
    pub id: usize,
    pub cluster: ClusterId,
    /// Centroid of every latent in the cluster.
    pub representative: Vec<f64>,
    pub kinds: HubKinds,
    /// Sorted, deduplicated; non-empty iff the hub is terminal.
    pub terminal: Vec<TerminalLabel>,
}

/// One encoded demonstration.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTrajectory {
    pub latents: Vec<Vec<f64>>,
    pub goal: Goal,
    pub success: bool,
}

/// Steps `start..end` of trajectory `trajectory`: observations
/// `start..=end` and actions `start..end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Segment {
    pub source: usize,
    pub target: usize,
    pub trajectory: usize,
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// A hub visit in a collapsed sequence. `leave` is the last step at the
/// hub before the next hub is reached (loops through non-hub clusters back
/// to the same hub move it forward).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HubVisit {
    pub hub: usize,
    pub enter: usize,
    pub leave: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorTopology {
    pub epsilon: f64,
    pub dim: usize,
    pub hubs: Vec<Hub>,
    pub edges: BTreeMap<(usize, usize), Vec<Segment>>,
    /// Collapsed hub sequence of every trajectory, by trajectory id.
    pub sequences: Vec<Vec<usize>>,
    index: HashMap<ClusterId, usize>,
}

fn cluster_sequences(trajs: &[LatentTrajectory], epsilon: f64) -> Result<Vec<Vec<ClusterId>>> {
    trajs
        .iter()
        .map(|t| t.latents.iter().map(|z| bucket_of(z, epsilon)).collect())
        .collect()
}

/// Hubs ordered by first appearance. A cluster is a convergence (divergence)
/// hub when it is entered from (left towards) at least two distinct other
/// clusters; staying in the same cluster is not a transition.
pub fn detect_hubs(trajs: &[LatentTrajectory], epsilon: f64) -> Result<Vec<Hub>> {
    let seqs = cluster_sequences(trajs, epsilon)?;
    let mut order: Vec<ClusterId> = Vec::new();
    let mut info: HashMap<ClusterId, (BTreeSet<ClusterId>, BTreeSet<ClusterId>, Vec<f64>, usize)> = HashMap::new();
    let mut kinds: HashMap<ClusterId, HubKinds> = HashMap::new();
    let mut labels: HashMap<ClusterId, BTreeSet<TerminalLabel>> = HashMap::new();
    for (traj, seq) in trajs.iter().zip(&seqs) {
        for (t, c) in seq.iter().enumerate() {
            let entry = info.entry(c.clone()).or_insert_with(|| {
                order.push(c.clone());
                (BTreeSet::new(), BTreeSet::new(), vec![0.0; traj.latents[t].len()], 0)
            });
            for (s, v) in entry.2.iter_mut().zip(&traj.latents[t]) {
                *s += v;
            }
            entry.3 += 1;
            if t > 0 && seq[t - 1] != *c {
                entry.0.insert(seq[t - 1].clone());
            }
            if t + 1 < seq.len() && seq[t + 1] != *c {
                entry.1.insert(seq[t + 1].clone());
            }
        }
        if let (Some(first), Some(last)) = (seq.first(), seq.last()) {
            kinds.entry(first.clone()).or_default().insert(HubKinds::START);
            kinds.entry(last.clone()).or_default().insert(HubKinds::TERMINAL);
            labels.entry(last.clone()).or_default().insert(TerminalLabel { goal: traj.goal, success: traj.success });
        }
    }
    let mut hubs = Vec::new();
    for c in order {
        let (preds, succs, sum, count) = &info[&c];
        let mut k = kinds.get(&c).copied().unwrap_or_default();
        if preds.len() >= 2 {
            k.insert(HubKinds::CONVERGENCE);
        }
        if succs.len() >= 2 {
            k.insert(HubKinds::DIVERGENCE);
        }
        if k.is_empty() {
            continue;
        }
        hubs.push(Hub {
            id: hubs.len(),
            representative: sum.iter().map(|s| s / *count as f64).collect(),
            terminal: labels.get(&c).map(|l| l.iter().copied().collect()).unwrap_or_default(),
            cluster: c,
            kinds: k,
        });
    }
    Ok(hubs)
}

fn collapse_clusters(seq: &[ClusterId], index: &HashMap<ClusterId, usize>) -> Vec<HubVisit> {
    let mut visits: Vec<HubVisit> = Vec::new();
    for (t, c) in seq.iter().enumerate() {
        let Some(&hub) = index.get(c) else { continue };
        match visits.last_mut() {
            Some(v) if v.hub == hub => v.leave = t,
            _ => visits.push(HubVisit { hub, enter: t, leave: t }),
        }
    }
    visits
}

impl BehaviorTopology {
    /// Hubs, collapsed sequences, and one segment per consecutive hub pair.
    pub fn build(trajs: &[LatentTrajectory], epsilon: f64) -> Result<Self> {
        let hubs = detect_hubs(trajs, epsilon)?;
        let dim = trajs.iter().flat_map(|t| t.latents.first()).map(Vec::len).next().unwrap_or(0);
        let mut topo = BehaviorTopology::from_parts(epsilon, dim, hubs, BTreeMap::new(), Vec::new());
        for (id, seq) in cluster_sequences(trajs, epsilon)?.iter().enumerate() {
            let visits = collapse_clusters(seq, &topo.index);
            debug_assert!(visits.first().map_or(seq.is_empty(), |v| v.enter == 0), "starts are hubs");
            for w in visits.windows(2) {
                let seg = Segment { source: w[0].hub, target: w[1].hub, trajectory: id, start: w[0].leave, end: w[1].enter };
                topo.edges.entry((seg.source, seg.target)).or_default().push(seg);
            }
            topo.sequences.push(visits.iter().map(|v| v.hub).collect());
        }
        Ok(topo)
    }

    pub fn from_parts(
        epsilon: f64,
        dim: usize,
        hubs: Vec<Hub>,
        edges: BTreeMap<(usize, usize), Vec<Segment>>,
        sequences: Vec<Vec<usize>>,
    ) -> Self {
        let index = hubs.iter().map(|h| (h.cluster.clone(), h.id)).collect();
        BehaviorTopology { epsilon, dim, hubs, edges, sequences, index }
    }

    pub fn hub_count(&self) -> usize {
        self.hubs.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Out-neighbors of `hub`, ascending.
    pub fn successors(&self, hub: usize) -> Vec<usize> {
        self.edges.range((hub, 0)..(hub + 1, 0)).map(|(&(_, t), _)| t).collect()
    }

    /// Out-neighbor lists for every hub.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.hubs.len()];
        for &(s, t) in self.edges.keys() {
            adj[s].push(t);
        }
        adj
    }

    pub fn hub_of_cluster(&self, c: &ClusterId) -> Option<usize> {
        self.index.get(c).copied()
    }

    /// Collapses an encoded trajectory into its hub-visit sequence.
    pub fn collapse(&self, latents: &[Vec<f64>]) -> Result<Vec<usize>> {
        let seq = latents.iter().map(|z| bucket_of(z, self.epsilon)).collect::<Result<Vec<_>>>()?;
        Ok(collapse_clusters(&seq, &self.index).into_iter().map(|v| v.hub).collect())
    }

    /// Exact bucket match, else the nearest representative within
    /// `tolerance` in max-norm (ties go to the lower id).
    pub fn match_hub(&self, z: &[f64], tolerance: f64) -> Option<usize> {
        if let Some(h) = bucket_of(z, self.epsilon).ok().and_then(|c| self.hub_of_cluster(&c)) {
            return Some(h);
        }
        let dist = |h: &Hub| h.representative.iter().zip(z).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        self.hubs
            .iter()
            .map(|h| (dist(h), h.id))
            .filter(|(d, _)| *d <= tolerance)
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .map(|(_, id)| id)
    }

    /// Terminal hubs of successful demonstrations of `goal`.
    pub fn goal_hubs(&self, goal: Goal) -> Vec<usize> {
        self.hubs
            .iter()
            .filter(|h| h.terminal.iter().any(|l| l.success && l.goal == goal))
            .map(|h| h.id)
            .collect()
    }

    pub fn longest_segment(&self, edge: (usize, usize)) -> Option<usize> {
        self.edges.get(&edge).and_then(|s| s.iter().map(Segment::len).max())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{HEADER}");
        let _ = writeln!(s, "epsilon {} dim {}", self.epsilon, self.dim);
        let _ = writeln!(s, "[hubs] {}", self.hubs.len());
        for h in &self.hubs {
            let labels = if h.terminal.is_empty() {
                "-".to_string()
            } else {
                h.terminal.iter().map(|l| format!("{}:{}", l.goal.index(), u8::from(l.success))).collect::<Vec<_>>().join(",")
            };
            let rep: Vec<String> = h.representative.iter().map(|v| v.to_string()).collect();
            let cluster: Vec<String> = h.cluster.0.iter().map(i64::to_string).collect();
            let _ = writeln!(s, "{} {} {} {} {}", h.id, h.kinds.letters(), labels, cluster.join(","), rep.join(" "));
        }
        let _ = writeln!(s, "[edges] {}", self.edges.len());
        for (&(a, b), segs) in &self.edges {
            let _ = writeln!(s, "{a} {b} {}", segs.len());
        }
        let _ = writeln!(s, "[segments] {}", self.edges.values().map(Vec::len).sum::<usize>());
        for seg in self.edges.values().flatten() {
            let _ = writeln!(s, "{} {} {} {} {}", seg.source, seg.target, seg.trajectory, seg.start, seg.end);
        }
        let _ = writeln!(s, "[sequences] {}", self.sequences.len());
        for (i, seq) in self.sequences.iter().enumerate() {
            let ids: Vec<String> = seq.iter().map(usize::to_string).collect();
            let _ = writeln!(s, "{i} {}", ids.join(" "));
        }
        seal_text(&s)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let body = unseal_text(text)?;
        let bad = |m: &str| CoreError::Format(format!("topology: {m}"));
        let mut lines = body.lines();
        if lines.next() != Some(HEADER) {
            return Err(bad("unknown header or version"));
        }
        let head: Vec<&str> = lines.next().ok_or_else(|| bad("missing epsilon line"))?.split(' ').collect();
        if head.len() != 4 || head[0] != "epsilon" || head[2] != "dim" {
            return Err(bad("epsilon line"));
        }
        let epsilon: f64 = head[1].parse().map_err(|_| bad("epsilon"))?;
        let dim: usize = head[3].parse().map_err(|_| bad("dim"))?;
        let mut section = |name: &str| -> Result<Vec<Vec<&str>>> {
            let line = lines.next().ok_or_else(|| bad(&format!("missing {name}")))?;
            let n: usize = line
                .strip_prefix(name)
                .and_then(|r| r.trim().parse().ok())
                .ok_or_else(|| bad(&format!("section header {line:?}")))?;
            (0..n)
                .map(|_| lines.next().map(|l| l.split(' ').collect()).ok_or_else(|| bad(&format!("short {name}"))))
                .collect()
        };
        let num = |s: &str| s.parse::<usize>().map_err(|_| bad(&format!("number {s:?}")));
        let goals = Goal::all();
        let mut hubs = Vec::new();
        for (i, f) in section("[hubs]")?.into_iter().enumerate() {
            if f.len() != 4 + dim || num(f[0])? != i {
                return Err(bad(&format!("hub line {i}")));
            }
            let kinds = HubKinds::parse(f[1]).ok_or_else(|| bad("hub kinds"))?;
            let terminal = if f[2] == "-" {
                Vec::new()
            } else {
                f[2].split(',')
                    .map(|l| {
                        let (g, y) = l.split_once(':').ok_or_else(|| bad("label"))?;
                        let goal = *goals.get(num(g)?).ok_or_else(|| bad("goal index"))?;
                        Ok(TerminalLabel { goal, success: y == "1" })
                    })
                    .collect::<Result<Vec<_>>>()?
            };
            let cluster = ClusterId(
                f[3].split(',').map(|v| v.parse::<i64>().map_err(|_| bad("bucket index"))).collect::<Result<Vec<_>>>()?,
            );
            let representative =
                f[4..].iter().map(|v| v.parse::<f64>().map_err(|_| bad("coordinate"))).collect::<Result<Vec<_>>>()?;
            hubs.push(Hub { id: i, cluster, representative, kinds, terminal });
        }
        let mut counts = BTreeMap::new();
        for f in section("[edges]")? {
            if f.len() != 3 {
                return Err(bad("edge line"));
            }
            counts.insert((num(f[0])?, num(f[1])?), num(f[2])?);
        }
        let mut edges: BTreeMap<(usize, usize), Vec<Segment>> = BTreeMap::new();
        for f in section("[segments]")? {
            if f.len() != 5 {
                return Err(bad("segment line"));
            }
            let seg = Segment { source: num(f[0])?, target: num(f[1])?, trajectory: num(f[2])?, start: num(f[3])?, end: num(f[4])? };
            edges.entry((seg.source, seg.target)).or_default().push(seg);
        }
        if edges.iter().map(|(k, v)| (*k, v.len())).collect::<BTreeMap<_, _>>() != counts {
            return Err(bad("segment counts disagree with the edge table"));
        }
        let mut sequences = Vec::new();
        for (i, f) in section("[sequences]")?.into_iter().enumerate() {
            if num(f[0])? != i {
                return Err(bad("sequence id"));
            }
            sequences.push(f[1..].iter().map(|s| num(s)).collect::<Result<Vec<_>>>()?);
        }
        if lines.next().is_some() {
            return Err(bad("trailing lines"));
        }
        let topo = BehaviorTopology::from_parts(epsilon, dim, hubs, edges, sequences);
        if topo.index.len() != topo.hubs.len() {
            return Err(bad("two hubs share a cluster"));
        }
        Ok(topo)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        BehaviorTopology::from_text(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use hubtopo_maze::Color;

    const EPS: f64 = 0.1;

    /// Latent for a one-dimensional toy cluster id.
    fn p(c: i64) -> Vec<f64> {
        vec![(c as f64 + 0.5) * EPS, 0.05]
    }

    fn traj(cs: &[i64], success: bool) -> LatentTrajectory {
        LatentTrajectory { latents: cs.iter().map(|&c| p(c)).collect(), goal: Goal::new(Color::Red, Color::Blue).unwrap(), success }
    }

    fn hub_with(hubs: &[Hub], c: i64) -> Option<&Hub> {
        hubs.iter().find(|h| h.cluster.0[0] == c)
    }

    #[test]
    fn bucketing_basics() {
        assert_eq!(bucket_of(&[0.0, 0.0009], 0.001).unwrap(), ClusterId(vec![0, 0]));
        let z = [0.0123, -0.0456];
        let shifted: Vec<f64> = z.iter().map(|v| v + 0.0001).collect();
        assert_eq!(bucket_of(&z, 0.001).unwrap(), bucket_of(&shifted, 0.001).unwrap());
        assert!(bucket_of(&z, 0.0).is_err());
        assert!(bucket_of(&z, -1.0).is_err());
    }

    #[test]
    fn convergence_and_divergence() {
        let hubs = detect_hubs(&[traj(&[1, 3, 9], true), traj(&[2, 3, 8], true)], EPS).unwrap();
        assert!(hub_with(&hubs, 3).unwrap().kinds.contains(HubKinds::CONVERGENCE));
        assert!(hub_with(&hubs, 3).unwrap().kinds.contains(HubKinds::DIVERGENCE));
        let hubs = detect_hubs(&[traj(&[5, 1], true), traj(&[5, 2], true)], EPS).unwrap();
        let h = hub_with(&hubs, 5).unwrap();
        assert!(h.kinds.contains(HubKinds::DIVERGENCE) && h.kinds.contains(HubKinds::START));
    }

    #[test]
    fn linear_trajectory_has_only_endpoints() {
        let hubs = detect_hubs(&[traj(&[1, 2, 3, 4], true)], EPS).unwrap();
        assert_eq!(hubs.len(), 2);
        assert_eq!(hubs[0].kinds, HubKinds::START);
        assert_eq!(hubs[1].kinds, HubKinds::TERMINAL);
        assert!(detect_hubs(&[], EPS).unwrap().is_empty());
    }

    #[test]
    fn collapse_runs_and_segments() {
        // 1 and 4 are start/terminal; 2 is a convergence via the second run
        let topo = BehaviorTopology::build(&[traj(&[1, 1, 2, 2, 3, 4], true), traj(&[5, 2, 4], false)], EPS).unwrap();
        let id = |c| hub_with(&topo.hubs, c).unwrap().id;
        assert_eq!(topo.sequences[0], vec![id(1), id(2), id(4)]);
        let seg = topo.edges[&(id(1), id(2))][0];
        assert_eq!((seg.start, seg.end), (1, 2));
        let seg = topo.edges[&(id(2), id(4))][0];
        assert_eq!((seg.start, seg.end), (3, 5));
        assert_eq!(topo.edge_count(), 3);
        assert_eq!(topo.edges[&(id(2), id(4))].len(), 2);
        assert_eq!(topo.successors(id(2)), vec![id(4)]);
    }

    #[test]
    fn loops_through_non_hubs_move_the_segment_start() {
        let topo = BehaviorTopology::build(&[traj(&[1, 2, 1, 3], true)], EPS).unwrap();
        assert_eq!(topo.sequences[0].len(), 2);
        let seg = topo.edges.values().next().unwrap()[0];
        assert_eq!((seg.start, seg.end), (2, 3));
    }

    #[test]
    fn terminal_labels_and_goal_hubs() {
        let rb = Goal::new(Color::Red, Color::Blue).unwrap();
        let mut fail = traj(&[1, 2, 7], false);
        fail.goal = rb;
        let topo = BehaviorTopology::build(&[traj(&[1, 2, 7], true), fail, traj(&[1, 2, 6], false)], EPS).unwrap();
        let t7 = hub_with(&topo.hubs, 7).unwrap();
        assert_eq!(t7.terminal.len(), 2);
        assert_eq!(topo.goal_hubs(rb), vec![t7.id]);
        assert!(topo.goal_hubs(Goal::new(Color::Blue, Color::Red).unwrap()).is_empty());
    }

    #[test]
    fn match_hub_exact_nearest_and_far() {
        let topo = BehaviorTopology::build(&[traj(&[1, 2, 3], true)], EPS).unwrap();
        let z = p(1);
        assert_eq!(topo.match_hub(&z, EPS), Some(0));
        let nudged: Vec<f64> = z.iter().map(|v| v + EPS / 10.0).collect();
        assert_eq!(topo.match_hub(&nudged, EPS), Some(0));
        // just over a bucket boundary but within tolerance of the representative
        let over = vec![z[0] + 0.6 * EPS, z[1]];
        assert_eq!(topo.match_hub(&over, EPS), Some(0));
        let far: Vec<f64> = z.iter().map(|v| v + 10.0 * EPS).collect();
        assert_eq!(topo.match_hub(&far, EPS), None);
    }

    #[test]
    fn text_round_trip_and_corruption() {
        let topo = BehaviorTopology::build(&[traj(&[1, 2, 3], true), traj(&[4, 2, 5], false)], EPS).unwrap();
        let text = topo.to_text();
        assert_eq!(BehaviorTopology::from_text(&text).unwrap(), topo);
        let corrupted = text.replacen("[edges]", "[edgez]", 1);
        assert!(matches!(BehaviorTopology::from_text(&corrupted), Err(CoreError::Nn(_))));
    }
}

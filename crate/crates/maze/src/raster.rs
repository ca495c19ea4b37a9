//! Egocentric top-down raster used in place of a rendered camera image.
//!
//! The agent sits at the bottom-center cell of a 7×7 window looking "up"
//! (six cells ahead, three to each side). Each cell has 12 channel planes:
//!
//! | plane | meaning            |
//! |-------|--------------------|
//! | 0     | occluded           |
//! | 1     | wall               |
//! | 2     | floor (incl. open doors, empty slots) |
//! | 3     | key                |
//! | 4     | door, locked       |
//! | 5     | door, half open    |
//! | 6     | diamond            |
//! | 7     | barrel             |
//! | 8..12 | red, blue, green, purple |
//!
//! Walls and closed doors block sight along the row at the agent's feet and
//! then straight ahead. The held item never appears.

use crate::env::{direction, DoorPhase, EnvState};
use crate::map::{Maze, Pos, Tile};

pub const VIEW: usize = 7;
pub const CHANNELS: usize = 12;
pub const VIEW_LEN: usize = VIEW * VIEW * CHANNELS;
/// Length of [`Observation::features`]: raster plus one-hot barrel slots.
pub const FEATURE_LEN: usize = VIEW_LEN + 2 * 5;

pub const OCCLUDED: usize = 0;
pub const WALL: usize = 1;
pub const FLOOR: usize = 2;
pub const KEY: usize = 3;
pub const DOOR_LOCKED: usize = 4;
pub const DOOR_HALF: usize = 5;
pub const DIAMOND: usize = 6;
pub const BARREL: usize = 7;
pub const COLOR_BASE: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// Row-major (view row, view col, channel) planes in {0, 1}.
    pub view: Vec<f64>,
    pub barrel_vec: [u8; 2],
}

impl Observation {
    /// Network input: the raster followed by a one-hot code per barrel slot.
    pub fn features(&self) -> Vec<f64> {
        let mut f = Vec::with_capacity(FEATURE_LEN);
        f.extend_from_slice(&self.view);
        for &id in &self.barrel_vec {
            let mut one_hot = [0.0; 5];
            one_hot[id.min(4) as usize] = 1.0;
            f.extend_from_slice(&one_hot);
        }
        f
    }

    pub fn cell(&self, row: usize, col: usize) -> &[f64] {
        let at = (row * VIEW + col) * CHANNELS;
        &self.view[at..at + CHANNELS]
    }
}

fn opaque(maze: &Maze, state: &EnvState, p: Pos) -> bool {
    match maze.tile(p) {
        Tile::Wall => true,
        Tile::Door(c) => state.door_phase(c) != DoorPhase::Open,
        _ => false,
    }
}

/// World cell shown at view position (`forward`, `lateral`); lateral > 0 is to the right.
fn world_cell(state: &EnvState, forward: i32, lateral: i32) -> Pos {
    let d = direction(state.orientation);
    let right = direction((state.orientation + 3) % 4);
    (
        state.pos.0 + forward * d.0 + lateral * right.0,
        state.pos.1 + forward * d.1 + lateral * right.1,
    )
}

fn visible(maze: &Maze, state: &EnvState, forward: i32, lateral: i32) -> bool {
    let step = lateral.signum();
    let mut l = step;
    while l != lateral {
        if opaque(maze, state, world_cell(state, 0, l)) {
            return false;
        }
        l += step;
    }
    (1..forward).all(|f| !opaque(maze, state, world_cell(state, f, lateral)))
}

pub fn rasterize(maze: &Maze, state: &EnvState) -> Observation {
    let half = (VIEW / 2) as i32;
    let mut view = vec![0.0; VIEW_LEN];
    for row in 0..VIEW {
        for col in 0..VIEW {
            let forward = (VIEW - 1 - row) as i32;
            let lateral = col as i32 - half;
            let at = (row * VIEW + col) * CHANNELS;
            let planes = &mut view[at..at + CHANNELS];
            if !visible(maze, state, forward, lateral) {
                planes[OCCLUDED] = 1.0;
                continue;
            }
            match maze.tile(world_cell(state, forward, lateral)) {
                Tile::Wall => planes[WALL] = 1.0,
                Tile::Floor => planes[FLOOR] = 1.0,
                Tile::KeySlot(c) => {
                    if state.key_present[c.index()] {
                        planes[KEY] = 1.0;
                        planes[COLOR_BASE + c.index()] = 1.0;
                    } else {
                        planes[FLOOR] = 1.0;
                    }
                }
                Tile::DiamondSlot(c) => {
                    if state.diamond_present[c.index()] {
                        planes[DIAMOND] = 1.0;
                        planes[COLOR_BASE + c.index()] = 1.0;
                    } else {
                        planes[FLOOR] = 1.0;
                    }
                }
                Tile::Door(c) => match state.door_phase(c) {
                    DoorPhase::Open => planes[FLOOR] = 1.0,
                    phase => {
                        planes[if phase == DoorPhase::Locked { DOOR_LOCKED } else { DOOR_HALF }] = 1.0;
                        planes[COLOR_BASE + c.index()] = 1.0;
                    }
                },
                Tile::Barrel => planes[BARREL] = 1.0,
            }
        }
    }
    Observation { view, barrel_vec: state.barrel_vec() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Env, Goal, Item, StartConfig};
    use crate::map::Color;

    fn state_at(pos: Pos, orientation: u8) -> (Env, EnvState) {
        let env = Env::desk();
        let (mut s, _) = env.reset(StartConfig::standard()[0], Goal::all()[0]).unwrap();
        s.pos = pos;
        s.orientation = orientation;
        (env, s)
    }

    #[test]
    fn held_item_is_invisible() {
        let (env, s) = state_at((3, 3), 0);
        let mut t = s.clone();
        t.held = Some(Item::Diamond(Color::Green));
        assert_eq!(rasterize(&env.maze, &s), rasterize(&env.maze, &t));
    }

    #[test]
    fn cells_behind_a_wall_are_occluded() {
        // (1,1) facing north: the wall is directly ahead.
        let (env, s) = state_at((1, 1), 1);
        let obs = rasterize(&env.maze, &s);
        let center = VIEW / 2;
        assert_eq!(obs.cell(VIEW - 2, center)[WALL], 1.0);
        for row in 0..VIEW - 2 {
            assert_eq!(obs.cell(row, center)[OCCLUDED], 1.0, "row {row}");
        }
        assert_eq!(obs.cell(VIEW - 1, center)[FLOOR], 1.0);
    }

    #[test]
    fn every_cell_has_exactly_one_kind_plane() {
        let (env, s) = state_at((6, 3), 0);
        let obs = rasterize(&env.maze, &s);
        for r in 0..VIEW {
            for c in 0..VIEW {
                let kinds: f64 = obs.cell(r, c)[..COLOR_BASE].iter().sum();
                assert_eq!(kinds, 1.0);
            }
        }
        assert_eq!(obs.features().len(), FEATURE_LEN);
    }

    #[test]
    fn barrel_vector_is_padded() {
        let (env, mut s) = state_at((3, 3), 0);
        s.barrel = vec![Color::Blue];
        assert_eq!(rasterize(&env.maze, &s).barrel_vec, [2, 0]);
    }

    #[test]
    fn golden_raster_facing_the_key_room() {
        // Standing in the doorway facing east. The walls beside the doorway
        // hide everything more than one cell to either side.
        let (env, s) = state_at((8, 3), 0);
        let obs = rasterize(&env.maze, &s);
        let kind_char = |p: &[f64]| -> char {
            let k = p[..COLOR_BASE].iter().position(|&v| v == 1.0).unwrap();
            let color = p[COLOR_BASE..].iter().position(|&v| v == 1.0);
            match (k, color) {
                (OCCLUDED, _) => '?',
                (WALL, _) => '#',
                (FLOOR, _) => '.',
                (KEY, Some(c)) => ['r', 'b', 'g', 'p'][c],
                (DOOR_LOCKED, Some(c)) | (DOOR_HALF, Some(c)) => ['R', 'B', 'G', 'P'][c],
                (DIAMOND, Some(c)) => ['1', '2', '3', '4'][c],
                (BARREL, _) => 'O',
                _ => 'x',
            }
        };
        let rendered: Vec<String> = (0..VIEW)
            .map(|r| (0..VIEW).map(|c| kind_char(obs.cell(r, c))).collect())
            .collect();
        let golden = [
            "??###??", //
            "??b.g??",
            "??...??",
            "??...??",
            "??...??",
            "??...??",
            "??#.#??",
        ];
        assert_eq!(rendered, golden, "{rendered:#?}");
    }
}

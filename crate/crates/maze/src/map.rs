//! Static maze layout and its text format.

use std::fmt;

use crate::MazeError;

/// Grid coordinate `(col, row)`; rows grow downward.
pub type Pos = (i32, i32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Color {
    Red,
    Blue,
    Green,
    Purple,
}

impl Color {
    pub const ALL: [Color; 4] = [Color::Red, Color::Blue, Color::Green, Color::Purple];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Identifier used in the barrel vector (1..=4; 0 means empty).
    pub fn id(self) -> u8 {
        self as u8 + 1
    }

    pub fn from_id(id: u8) -> Option<Color> {
        match id {
            1..=4 => Some(Color::ALL[id as usize - 1]),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Color::Red => "red",
            Color::Blue => "blue",
            Color::Green => "green",
            Color::Purple => "purple",
        }
    }

    pub fn parse(s: &str) -> Option<Color> {
        Color::ALL.into_iter().find(|c| c.name() == s)
    }

    fn bit(self) -> u8 {
        1 << self.index()
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Set of key colors, stored as a bitmask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct KeySet(pub u8);

impl KeySet {
    pub fn contains(self, c: Color) -> bool {
        self.0 & c.bit() != 0
    }

    pub fn insert(&mut self, c: Color) {
        self.0 |= c.bit();
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn of(colors: &[Color]) -> KeySet {
        let mut s = KeySet::default();
        for &c in colors {
            s.insert(c);
        }
        s
    }
}

/// Keys needed to open the door in front of a diamond, in the order the
/// scripted expert applies them. The environment accepts either order.
pub fn door_requirements(diamond: Color) -> (Color, Color) {
    match diamond {
        Color::Red => (Color::Red, Color::Blue),
        Color::Blue => (Color::Red, Color::Green),
        Color::Green => (Color::Blue, Color::Purple),
        Color::Purple => (Color::Green, Color::Purple),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tile {
    Wall,
    Floor,
    KeySlot(Color),
    Door(Color),
    DiamondSlot(Color),
    Barrel,
}

/// Parsed maze layout. Immutable; dynamic state lives in `EnvState`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Maze {
    width: i32,
    height: i32,
    tiles: Vec<Tile>,
    starts: Vec<Pos>,
    key_slots: [Pos; 4],
    doors: [Pos; 4],
    diamond_slots: [Pos; 4],
    barrel: Pos,
}

pub const DESK_MAP: &str = include_str!("../maps/desk.txt");
pub const SHORTCUT_MAP: &str = include_str!("../maps/shortcut.txt");

impl Maze {
    /// The shipped desk-scale layout.
    pub fn desk() -> Maze {
        Maze::parse(DESK_MAP).expect("bundled map is valid")
    }

    /// Desk variant used by the planner ablation; see the map's header.
    pub fn shortcut() -> Maze {
        Maze::parse(SHORTCUT_MAP).expect("bundled map is valid")
    }

    pub fn parse(text: &str) -> Result<Maze, MazeError> {
        let rows: Vec<&str> = text
            .lines()
            .filter(|l| !l.starts_with(';') && !l.trim().is_empty())
            .collect();
        if rows.is_empty() {
            return Err(MazeError::Map("empty map".into()));
        }
        let width = rows[0].chars().count();
        let mut tiles = Vec::new();
        let mut starts: Vec<(char, Pos)> = Vec::new();
        let mut key_slots = [None; 4];
        let mut doors = [None; 4];
        let mut diamond_slots = [None; 4];
        let mut barrel = None;
        for (r, line) in rows.iter().enumerate() {
            if line.chars().count() != width {
                return Err(MazeError::Map(format!("row {r} has {} cells, expected {width}", line.chars().count())));
            }
            for (c, ch) in line.chars().enumerate() {
                let pos = (c as i32, r as i32);
                let color = |ch: char| match ch.to_ascii_lowercase() {
                    'r' | '1' => Color::Red,
                    'b' | '2' => Color::Blue,
                    'g' | '3' => Color::Green,
                    _ => Color::Purple,
                };
                let place = |slot: &mut [Option<Pos>; 4], col: Color| -> Result<(), MazeError> {
                    if slot[col.index()].replace(pos).is_some() {
                        return Err(MazeError::Map(format!("duplicate {ch} at {pos:?}")));
                    }
                    Ok(())
                };
                let tile = match ch {
                    '#' => Tile::Wall,
                    '.' => Tile::Floor,
                    'S' | 'T' | 'U' => {
                        starts.push((ch, pos));
                        Tile::Floor
                    }
                    'r' | 'b' | 'g' | 'p' => {
                        place(&mut key_slots, color(ch))?;
                        Tile::KeySlot(color(ch))
                    }
                    'R' | 'B' | 'G' | 'P' => {
                        place(&mut doors, color(ch))?;
                        Tile::Door(color(ch))
                    }
                    '1'..='4' => {
                        place(&mut diamond_slots, color(ch))?;
                        Tile::DiamondSlot(color(ch))
                    }
                    'O' => {
                        if barrel.replace(pos).is_some() {
                            return Err(MazeError::Map("more than one barrel".into()));
                        }
                        Tile::Barrel
                    }
                    other => return Err(MazeError::Map(format!("unknown cell {other:?} at {pos:?}"))),
                };
                tiles.push(tile);
            }
        }
        starts.sort_by_key(|(ch, _)| *ch);
        let all = |slots: [Option<Pos>; 4], what: &str| -> Result<[Pos; 4], MazeError> {
            let mut out = [(0, 0); 4];
            for (i, s) in slots.iter().enumerate() {
                out[i] = s.ok_or_else(|| MazeError::Map(format!("missing {what} for {}", Color::ALL[i])))?;
            }
            Ok(out)
        };
        Ok(Maze {
            width: width as i32,
            height: rows.len() as i32,
            tiles,
            starts: starts.into_iter().map(|(_, p)| p).collect(),
            key_slots: all(key_slots, "key")?,
            doors: all(doors, "door")?,
            diamond_slots: all(diamond_slots, "diamond")?,
            barrel: barrel.ok_or_else(|| MazeError::Map("missing barrel".into()))?,
        })
    }

    pub fn width(&self) -> i32 {
        self.width
    }

    pub fn height(&self) -> i32 {
        self.height
    }

    pub fn in_bounds(&self, p: Pos) -> bool {
        p.0 >= 0 && p.1 >= 0 && p.0 < self.width && p.1 < self.height
    }

    /// Out-of-bounds cells read as walls.
    pub fn tile(&self, p: Pos) -> Tile {
        if self.in_bounds(p) {
            self.tiles[(p.1 * self.width + p.0) as usize]
        } else {
            Tile::Wall
        }
    }

    /// Start positions marked in the map, ordered S, T, U.
    pub fn start_positions(&self) -> &[Pos] {
        &self.starts
    }

    pub fn key_slot(&self, c: Color) -> Pos {
        self.key_slots[c.index()]
    }

    pub fn door(&self, c: Color) -> Pos {
        self.doors[c.index()]
    }

    pub fn diamond_slot(&self, c: Color) -> Pos {
        self.diamond_slots[c.index()]
    }

    pub fn barrel(&self) -> Pos {
        self.barrel
    }

    /// Every floor cell (the set of possible agent positions, ignoring doors).
    pub fn floor_cells(&self) -> Vec<Pos> {
        (0..self.height)
            .flat_map(|r| (0..self.width).map(move |c| (c, r)))
            .filter(|&p| self.tile(p) == Tile::Floor)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_map_has_documented_objects() {
        let m = Maze::desk();
        assert_eq!(m.start_positions(), &[(3, 3), (3, 6), (6, 3)]);
        assert_eq!(m.tile((3, 3)), Tile::Floor);
        assert_eq!(m.tile(m.barrel()), Tile::Barrel);
        for c in Color::ALL {
            assert_eq!(m.tile(m.key_slot(c)), Tile::KeySlot(c));
            assert_eq!(m.tile(m.door(c)), Tile::Door(c));
            assert_eq!(m.tile(m.diamond_slot(c)), Tile::DiamondSlot(c));
        }
        assert_eq!(m.tile((-1, 0)), Tile::Wall);
    }

    #[test]
    fn door_table() {
        assert_eq!(KeySet::of(&[door_requirements(Color::Red).0, door_requirements(Color::Red).1]), KeySet::of(&[Color::Red, Color::Blue]));
        assert_eq!(door_requirements(Color::Blue), (Color::Red, Color::Green));
        assert_eq!(door_requirements(Color::Green), (Color::Blue, Color::Purple));
        assert_eq!(door_requirements(Color::Purple), (Color::Green, Color::Purple));
    }

    #[test]
    fn every_key_opens_exactly_two_doors() {
        for key in Color::ALL {
            let n = Color::ALL
                .iter()
                .filter(|&&d| {
                    let (a, b) = door_requirements(d);
                    a == key || b == key
                })
                .count();
            assert_eq!(n, 2, "{key}");
        }
    }

    #[test]
    fn malformed_maps_are_rejected() {
        assert!(Maze::parse("").is_err());
        assert!(Maze::parse("##\n#").is_err());
        assert!(Maze::parse("#?#").is_err());
        assert!(Maze::parse("#.#").is_err());
    }

    #[test]
    fn color_ids_round_trip() {
        for c in Color::ALL {
            assert_eq!(Color::from_id(c.id()), Some(c));
            assert_eq!(Color::parse(c.name()), Some(c));
        }
        assert_eq!(Color::from_id(0), None);
    }
}

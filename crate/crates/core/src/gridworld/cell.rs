//! Grid cell contents, colors, actions and headings, plus the stable
//! 3-integer encoding used by observations and state keys.

use crate::{Error, Result};

/// Object kinds, with their stable observation encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Object {
    Unseen = 0,
    Empty = 1,
    Wall = 2,
    Floor = 3,
    Door = 4,
    Key = 5,
    Ball = 6,
    Box = 7,
    Goal = 8,
    Lava = 9,
    Agent = 10,
}

/// One-letter uppercase tag used by the ASCII renderer.
impl Object {
    pub const MAX_CODE: u8 = 10;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Color {
    Red = 0,
    Green = 1,
    Blue = 2,
    Purple = 3,
    Yellow = 4,
    Grey = 5,
}

impl Color {
    pub const ALL: [Color; 6] = [
        Color::Red,
        Color::Green,
        Color::Blue,
        Color::Purple,
        Color::Yellow,
        Color::Grey,
    ];
    pub const MAX_CODE: u8 = 5;

    pub fn from_code(code: u8) -> Result<Color> {
        Self::ALL
            .get(code as usize)
            .copied()
            .ok_or_else(|| Error::Config(format!("invalid color code {code}")))
    }
}

/// Door state channel: open/closed/locked. Non-door cells encode state 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum DoorState {
    Open = 0,
    Closed = 1,
    Locked = 2,
}

impl DoorState {
    pub const MAX_CODE: u8 = 2;

    pub fn from_code(code: u8) -> Result<DoorState> {
        match code {
            0 => Ok(DoorState::Open),
            1 => Ok(DoorState::Closed),
            2 => Ok(DoorState::Locked),
            _ => Err(Error::Config(format!("invalid door state code {code}"))),
        }
    }
}

/// Contents of one world tile.
///
/// `Box` optionally hides another cell; the hidden contents never appear in
/// the 3-value encoding (that is the point of hiding them) and are revealed
/// by `toggle`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Cell {
    Empty,
    Wall,
    Floor(Color),
    Door(Color, DoorState),
    Key(Color),
    Ball(Color),
    Box(Color, Option<std::boxed::Box<Cell>>),
    Goal,
    Lava,
}

impl Cell {
    pub fn object(&self) -> Object {
        match self {
            Cell::Empty => Object::Empty,
            Cell::Wall => Object::Wall,
            Cell::Floor(_) => Object::Floor,
            Cell::Door(..) => Object::Door,
            Cell::Key(_) => Object::Key,
            Cell::Ball(_) => Object::Ball,
            Cell::Box(..) => Object::Box,
            Cell::Goal => Object::Goal,
            Cell::Lava => Object::Lava,
        }
    }

    pub fn color(&self) -> Color {
        match self {
            Cell::Floor(c)
            | Cell::Door(c, _)
            | Cell::Key(c)
            | Cell::Ball(c)
            | Cell::Box(c, _) => *c,
            _ => Color::Red,
        }
    }

    /// Stable (object, color, state) encoding.
    pub fn encode(&self) -> [u8; 3] {
        let state = match self {
            Cell::Door(_, s) => *s as u8,
            _ => 0,
        };
        [self.object() as u8, self.color() as u8, state]
    }

    /// Inverse of [`Cell::encode`] over legal world cells.
    ///
    /// `Unseen` and `Agent` are observation-only codes and are rejected, as
    /// is a nonzero state channel on anything but a door.
    pub fn decode(enc: [u8; 3]) -> Result<Cell> {
        let [obj, color_code, state] = enc;
        if obj != Object::Door as u8 && state != 0 {
            return Err(Error::Config(format!(
                "nonzero state {state} on non-door object {obj}"
            )));
        }
        let color = Color::from_code(color_code)?;
        let cell = match obj {
            x if x == Object::Empty as u8 => Cell::Empty,
            x if x == Object::Wall as u8 => Cell::Wall,
            x if x == Object::Floor as u8 => Cell::Floor(color),
            x if x == Object::Door as u8 => Cell::Door(color, DoorState::from_code(state)?),
            x if x == Object::Key as u8 => Cell::Key(color),
            x if x == Object::Ball as u8 => Cell::Ball(color),
            x if x == Object::Box as u8 => Cell::Box(color, None),
            x if x == Object::Goal as u8 => Cell::Goal,
            x if x == Object::Lava as u8 => Cell::Lava,
            other => {
                return Err(Error::Config(format!(
                    "object code {other} is not a world cell"
                )))
            }
        };
        // Non-colored objects must carry color 0 to round-trip.
        match cell {
            Cell::Empty | Cell::Wall | Cell::Goal | Cell::Lava if color_code != 0 => Err(
                Error::Config(format!("object {obj} does not carry color {color_code}")),
            ),
            _ => Ok(cell),
        }
    }

    /// Whether the agent can walk onto this cell.
    pub fn walkable(&self) -> bool {
        matches!(
            self,
            Cell::Empty | Cell::Floor(_) | Cell::Goal | Cell::Lava | Cell::Door(_, DoorState::Open)
        )
    }

    /// Whether `pick_up` can lift this cell.
    pub fn portable(&self) -> bool {
        matches!(self, Cell::Key(_) | Cell::Ball(_) | Cell::Box(..))
    }
}

/// The seven discrete actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Action {
    TurnLeft = 0,
    TurnRight = 1,
    MoveForward = 2,
    PickUp = 3,
    Drop = 4,
    Toggle = 5,
    Done = 6,
}

impl Action {
    pub const COUNT: usize = 7;
    pub const ALL: [Action; 7] = [
        Action::TurnLeft,
        Action::TurnRight,
        Action::MoveForward,
        Action::PickUp,
        Action::Drop,
        Action::Toggle,
        Action::Done,
    ];

    pub fn from_index(idx: usize) -> Result<Action> {
        Self::ALL
            .get(idx)
            .copied()
            .ok_or_else(|| Error::Usage(format!("action index {idx} out of range 0..7")))
    }
}

/// Agent heading. Codes follow the east/south/west/north convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Direction {
    East = 0,
    South = 1,
    West = 2,
    North = 3,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::East,
        Direction::South,
        Direction::West,
        Direction::North,
    ];

    pub fn delta(self) -> (i32, i32) {
        match self {
            Direction::East => (1, 0),
            Direction::South => (0, 1),
            Direction::West => (-1, 0),
            Direction::North => (0, -1),
        }
    }

    pub fn left(self) -> Direction {
        Self::ALL[(self as usize + 3) % 4]
    }

    pub fn right(self) -> Direction {
        Self::ALL[(self as usize + 1) % 4]
    }

    pub fn opposite(self) -> Direction {
        Self::ALL[(self as usize + 2) % 4]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn legal_cells() -> Vec<Cell> {
        let mut cells = vec![Cell::Empty, Cell::Wall, Cell::Goal, Cell::Lava];
        for color in Color::ALL {
            cells.push(Cell::Floor(color));
            cells.push(Cell::Key(color));
            cells.push(Cell::Ball(color));
            cells.push(Cell::Box(color, None));
            for state in [DoorState::Open, DoorState::Closed, DoorState::Locked] {
                cells.push(Cell::Door(color, state));
            }
        }
        cells
    }

    #[test]
    fn encode_decode_round_trip() {
        for cell in legal_cells() {
            let enc = cell.encode();
            let back = Cell::decode(enc).expect("legal cell must decode");
            assert_eq!(back, cell, "round trip failed for {cell:?}");
        }
    }

    #[test]
    fn decode_rejects_observation_only_codes() {
        assert!(Cell::decode([Object::Unseen as u8, 0, 0]).is_err());
        assert!(Cell::decode([Object::Agent as u8, 0, 0]).is_err());
        assert!(Cell::decode([Object::Wall as u8, 0, 1]).is_err());
        assert!(Cell::decode([Object::Key as u8, 6, 0]).is_err());
    }

    #[test]
    fn box_contents_stay_hidden_in_encoding() {
        let hidden = Cell::Box(Color::Grey, Some(Box::new(Cell::Key(Color::Blue))));
        let empty = Cell::Box(Color::Grey, None);
        assert_eq!(hidden.encode(), empty.encode());
    }

    #[test]
    fn exactly_seven_actions() {
        assert_eq!(Action::COUNT, 7);
        assert_eq!(Action::ALL.len(), 7);
        for (i, a) in Action::ALL.iter().enumerate() {
            assert_eq!(*a as usize, i);
            assert_eq!(Action::from_index(i).unwrap(), *a);
        }
        assert!(Action::from_index(7).is_err());
    }

    #[test]
    fn direction_rotations() {
        for d in Direction::ALL {
            assert_eq!(d.left().right(), d);
            assert_eq!(d.opposite().opposite(), d);
            let (dx, dy) = d.delta();
            let (lx, ly) = d.left().delta();
            // Left rotation in screen coordinates (y grows downward).
            assert_eq!((lx, ly), (dy, -dx));
        }
    }
}

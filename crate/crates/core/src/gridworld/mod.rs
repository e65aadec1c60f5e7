//! Seeded procedural gridworlds with MiniGrid-compatible semantics.
//!
//! A level is generated deterministically from an [`EnvSpec`] and a 64-bit
//! seed. The agent sees an egocentric, partially observable 7x7 window of
//! (object, color, state) codes and acts with seven discrete actions. The
//! extrinsic reward is sparse: `1 - 0.9 * t / max_steps` on the step that
//! completes the task, zero everywhere else.

mod cell;
mod gen;
pub mod solver;

pub use cell::{Action, Cell, Color, Direction, DoorState, Object};

use crate::hashing::fnv64;
use crate::{Error, Result};

/// Side length of the observation window.
pub const VIEW_SIZE: usize = 7;
/// Agent anchor tile in view coordinates (bottom-center, facing view-up).
pub const VIEW_ANCHOR: (usize, usize) = (3, 6);
/// Flattened observation length in scalar codes.
pub const OBS_LEN: usize = VIEW_SIZE * VIEW_SIZE * 3;

/// Environment family and its generator parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// Walled empty room with a goal in the far corner; smoke-test task.
    Empty { side: u32 },
    /// Chain of connected rooms joined by closed doors, goal in the last.
    MultiRoom { rooms: u32, room_size: u32 },
    /// Corridor flanked by side rooms; a locked door hides the target ball,
    /// the matching key sits in one of the opposite rooms.
    KeyCorridor { room_size: u32, rows: u32 },
    /// Three 6x6 rooms in a row; two locked side doors whose keys hide
    /// inside boxes, target ball in a random side room.
    ObstructedMaze2Dlh,
}

/// A fully specified environment: family parameters plus the step limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnvSpec {
    pub family: Family,
    pub max_steps: u32,
    /// Reserved: occluded (shadow-cast) view. The default view is the full
    /// unoccluded forward window.
    // TODO: shadow-casting parity with the reference MiniGrid renderer.
    pub occluded: bool,
}

impl EnvSpec {
    pub fn new(family: Family) -> Result<EnvSpec> {
        let spec = EnvSpec {
            family,
            max_steps: default_max_steps(family),
            occluded: false,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_max_steps(mut self, max_steps: u32) -> Result<EnvSpec> {
        self.max_steps = max_steps;
        self.validate()?;
        Ok(self)
    }

    /// Parse a config identifier such as `MultiRoom-N7-S8` or `Empty-8`.
    pub fn parse(id: &str) -> Result<EnvSpec> {
        let bad = || Error::Config(format!("unknown env identifier: {id}"));
        let parts: Vec<&str> = id.split('-').collect();
        let family = match parts.as_slice() {
            ["Empty", side] => Family::Empty {
                side: side.parse().map_err(|_| bad())?,
            },
            ["MultiRoom", n, s] => Family::MultiRoom {
                rooms: parse_tagged(n, 'N').ok_or_else(bad)?,
                room_size: parse_tagged(s, 'S').ok_or_else(bad)?,
            },
            ["KeyCorridor", s, r] => Family::KeyCorridor {
                room_size: parse_tagged(s, 'S').ok_or_else(bad)?,
                rows: parse_tagged(r, 'R').ok_or_else(bad)?,
            },
            ["ObstructedMaze", "2Dlh"] => Family::ObstructedMaze2Dlh,
            _ => return Err(bad()),
        };
        EnvSpec::new(family)
    }

    /// Canonical identifier, inverse of [`EnvSpec::parse`].
    pub fn id(&self) -> String {
        match self.family {
            Family::Empty { side } => format!("Empty-{side}"),
            Family::MultiRoom { rooms, room_size } => format!("MultiRoom-N{rooms}-S{room_size}"),
            Family::KeyCorridor { room_size, rows } => format!("KeyCorridor-S{room_size}-R{rows}"),
            Family::ObstructedMaze2Dlh => "ObstructedMaze-2Dlh".to_string(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 {
            return Err(Error::Config("max_steps must be positive".into()));
        }
        if self.occluded {
            return Err(Error::Config(
                "occluded view is reserved and not implemented; use occluded=false".into(),
            ));
        }
        match self.family {
            Family::Empty { side } if !(4..=64).contains(&side) => Err(Error::Config(format!(
                "Empty side {side} outside supported range 4..=64"
            ))),
            Family::MultiRoom { rooms, room_size }
                if !(2..=16).contains(&rooms) || !(4..=12).contains(&room_size) =>
            {
                Err(Error::Config(format!(
                    "MultiRoom N{rooms} S{room_size} outside supported ranges N 2..=16, S 4..=12"
                )))
            }
            Family::KeyCorridor { room_size, rows }
                if !(3..=12).contains(&room_size) || !(1..=8).contains(&rows) =>
            {
                Err(Error::Config(format!(
                    "KeyCorridor S{room_size} R{rows} outside supported ranges S 3..=12, R 1..=8"
                )))
            }
            _ => Ok(()),
        }
    }

    /// Stable hash of the spec; combined with the level seed to derive the
    /// per-level generator stream.
    pub fn hash(&self) -> u64 {
        fnv64(format!("{}|{}", self.id(), self.max_steps).as_bytes())
    }
}

fn parse_tagged(part: &str, tag: char) -> Option<u32> {
    part.strip_prefix(tag)?.parse().ok()
}

fn default_max_steps(family: Family) -> u32 {
    match family {
        Family::Empty { side } => 4 * side * side,
        Family::MultiRoom { rooms, .. } => 20 * rooms,
        Family::KeyCorridor { room_size, .. } => 30 * room_size * room_size,
        Family::ObstructedMaze2Dlh => 576,
    }
}

/// Success condition of a level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    /// Walk onto the goal tile.
    ReachGoal,
    /// Pick up the object of the given kind and color.
    Pickup { object: Object, color: Color },
}

/// Full mutable world state of one level instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridState {
    pub width: i32,
    pub height: i32,
    cells: Vec<Cell>,
    pub agent_pos: (i32, i32),
    pub agent_dir: Direction,
    pub carried: Option<Cell>,
    pub step: u32,
    pub max_steps: u32,
    pub seed: u64,
    pub done: bool,
    /// Set when `done` was caused by task success rather than truncation.
    pub succeeded: bool,
    pub task: Task,
}

/// Result of one environment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub done: bool,
}

/// Canonicalization mode for [`GridState::state_key`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyMode {
    /// Grid cells + agent pose + carried item. The step counter is excluded.
    Full,
    /// Agent (x, y, direction) only.
    Pose,
    /// The 147 observation bytes.
    Obs,
}

/// Egocentric 7x7x3 observation; `tiles[vy][vx]` is (object, color, state).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Observation {
    pub tiles: [[[u8; 3]; VIEW_SIZE]; VIEW_SIZE],
}

impl Observation {
    /// Flatten row-major, channels innermost.
    pub fn to_bytes(&self) -> [u8; OBS_LEN] {
        let mut out = [0u8; OBS_LEN];
        let mut i = 0;
        for row in &self.tiles {
            for tile in row {
                out[i..i + 3].copy_from_slice(tile);
                i += 3;
            }
        }
        out
    }
}

/// Build the level determined by `(spec, seed)`.
///
/// The same pair always yields a bit-identical state; all generator
/// randomness flows from one counter-based stream seeded by the pair.
pub fn generate(spec: &EnvSpec, seed: u64) -> Result<GridState> {
    gen::generate(spec, seed).map(|level| level.state)
}

/// As [`generate`], additionally returning generator metadata (room
/// rectangles, door positions) for diagnostics and tests.
pub fn generate_with_meta(spec: &EnvSpec, seed: u64) -> Result<gen::Level> {
    gen::generate(spec, seed)
}

impl GridState {
    pub(crate) fn blank(
        width: i32,
        height: i32,
        max_steps: u32,
        seed: u64,
        task: Task,
    ) -> GridState {
        GridState {
            width,
            height,
            cells: vec![Cell::Empty; (width * height) as usize],
            agent_pos: (1, 1),
            agent_dir: Direction::East,
            carried: None,
            step: 0,
            max_steps,
            seed,
            done: false,
            succeeded: false,
            task,
        }
    }

    pub fn in_bounds(&self, x: i32, y: i32) -> bool {
        x >= 0 && x < self.width && y >= 0 && y < self.height
    }

    pub fn cell(&self, x: i32, y: i32) -> &Cell {
        &self.cells[(y * self.width + x) as usize]
    }

    /// Overwrite one tile; for building custom levels and test fixtures.
    pub fn set_cell(&mut self, x: i32, y: i32, cell: Cell) {
        self.cells[(y * self.width + x) as usize] = cell;
    }

    /// Position directly in front of the agent.
    pub fn front_pos(&self) -> (i32, i32) {
        let (dx, dy) = self.agent_dir.delta();
        (self.agent_pos.0 + dx, self.agent_pos.1 + dy)
    }

    fn task_success_on_enter(&self, cell: &Cell) -> bool {
        self.task == Task::ReachGoal && matches!(cell, Cell::Goal)
    }

    fn task_success_on_pickup(&self, picked: &Cell) -> bool {
        match self.task {
            Task::Pickup { object, color } => {
                picked.object() == object && picked.color() == color
            }
            Task::ReachGoal => false,
        }
    }

    /// Advance the world by one action.
    ///
    /// Dynamics: forward movement is blocked by walls, objects and
    /// closed/locked doors; `toggle` flips closed/open doors, unlocks a
    /// locked door only when carrying the matching-color key, and opens
    /// boxes in place (revealing their contents); `pick_up`/`drop` move
    /// portable objects between the front cell and the agent's hands;
    /// `done` is a no-op. The reward is `1 - 0.9 * t / max_steps` on the
    /// step that completes the task and zero otherwise.
    pub fn step(&mut self, action: Action) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::Usage("step called on a finished episode".into()));
        }
        self.step += 1;
        let mut reward = 0.0;

        match action {
            Action::TurnLeft => self.agent_dir = self.agent_dir.left(),
            Action::TurnRight => self.agent_dir = self.agent_dir.right(),
            Action::MoveForward => {
                let (fx, fy) = self.front_pos();
                if self.in_bounds(fx, fy) && self.cell(fx, fy).walkable() {
                    self.agent_pos = (fx, fy);
                    if self.task_success_on_enter(&self.cell(fx, fy).clone()) {
                        self.succeed(&mut reward);
                    } else if matches!(self.cell(fx, fy), Cell::Lava) {
                        self.done = true;
                    }
                }
            }
            Action::PickUp => {
                let (fx, fy) = self.front_pos();
                if self.carried.is_none() && self.in_bounds(fx, fy) && self.cell(fx, fy).portable()
                {
                    let picked = self.cell(fx, fy).clone();
                    self.set_cell(fx, fy, Cell::Empty);
                    let success = self.task_success_on_pickup(&picked);
                    self.carried = Some(picked);
                    if success {
                        self.succeed(&mut reward);
                    }
                }
            }
            Action::Drop => {
                let (fx, fy) = self.front_pos();
                if self.carried.is_some()
                    && self.in_bounds(fx, fy)
                    && matches!(self.cell(fx, fy), Cell::Empty)
                {
                    let cell = self.carried.take().expect("carried checked above");
                    self.set_cell(fx, fy, cell);
                }
            }
            Action::Toggle => {
                let (fx, fy) = self.front_pos();
                if self.in_bounds(fx, fy) {
                    match self.cell(fx, fy).clone() {
                        Cell::Door(color, DoorState::Open) => {
                            self.set_cell(fx, fy, Cell::Door(color, DoorState::Closed));
                        }
                        Cell::Door(color, DoorState::Closed) => {
                            self.set_cell(fx, fy, Cell::Door(color, DoorState::Open));
                        }
                        Cell::Door(color, DoorState::Locked) => {
                            if matches!(&self.carried, Some(Cell::Key(k)) if *k == color) {
                                self.set_cell(fx, fy, Cell::Door(color, DoorState::Open));
                            }
                        }
                        Cell::Box(_, contents) => {
                            let revealed = contents.map(|b| *b).unwrap_or(Cell::Empty);
                            self.set_cell(fx, fy, revealed);
                        }
                        _ => {}
                    }
                }
            }
            Action::Done => {}
        }

        if !self.done && self.step >= self.max_steps {
            self.done = true;
        }
        Ok(StepOutcome {
            reward,
            done: self.done,
        })
    }

    fn succeed(&mut self, reward: &mut f64) {
        self.done = true;
        self.succeeded = true;
        *reward = 1.0 - 0.9 * self.step as f64 / self.max_steps as f64;
    }

    /// Egocentric view: the 7x7 window in front of the agent, rotated so the
    /// agent sits at the bottom-center anchor facing view-up. Out-of-bounds
    /// tiles encode `unseen`; the anchor tile shows the carried item (or
    /// empty), which keeps the carried state observable.
    pub fn observe(&self) -> Observation {
        let (fx, fy) = self.agent_dir.delta();
        let (rx, ry) = self.agent_dir.right().delta();
        let (ax, ay) = self.agent_pos;
        let mut tiles = [[[0u8; 3]; VIEW_SIZE]; VIEW_SIZE];
        for (vy, row) in tiles.iter_mut().enumerate() {
            for (vx, out) in row.iter_mut().enumerate() {
                if (vx, vy) == VIEW_ANCHOR {
                    *out = match &self.carried {
                        Some(cell) => cell.encode(),
                        None => Cell::Empty.encode(),
                    };
                    continue;
                }
                let forward = (VIEW_ANCHOR.1 - vy) as i32;
                let sideways = vx as i32 - VIEW_ANCHOR.0 as i32;
                let wx = ax + fx * forward + rx * sideways;
                let wy = ay + fy * forward + ry * sideways;
                if self.in_bounds(wx, wy) {
                    *out = self.cell(wx, wy).encode();
                }
                // out of bounds stays [0, 0, 0] = unseen
            }
        }
        Observation { tiles }
    }

    /// Stable canonical serialization for visitation counting.
    ///
    /// The step counter is excluded in every mode, so two states that differ
    /// only in elapsed time share a key.
    pub fn state_key(&self, mode: KeyMode) -> Vec<u8> {
        let mut out = Vec::with_capacity(match mode {
            KeyMode::Full => (self.width * self.height * 3 + 16) as usize,
            KeyMode::Pose => 5,
            KeyMode::Obs => OBS_LEN,
        });
        self.state_key_into(mode, &mut out);
        out
    }

    /// As [`GridState::state_key`], reusing `out` to avoid per-step allocation.
    pub fn state_key_into(&self, mode: KeyMode, out: &mut Vec<u8>) {
        out.clear();
        match mode {
            KeyMode::Pose => push_pose(out, self.agent_pos, self.agent_dir),
            KeyMode::Obs => out.extend_from_slice(&self.observe().to_bytes()),
            KeyMode::Full => {
                out.extend_from_slice(&(self.width as u16).to_le_bytes());
                out.extend_from_slice(&(self.height as u16).to_le_bytes());
                for cell in &self.cells {
                    push_cell_deep(out, cell);
                }
                push_pose(out, self.agent_pos, self.agent_dir);
                match &self.carried {
                    Some(cell) => {
                        out.push(1);
                        push_cell_deep(out, cell);
                    }
                    None => out.push(0),
                }
            }
        }
    }

    /// Human-readable map. Walls are `#`, the goal is `G`, doors are `+`
    /// (closed), `/` (open) or `L` (locked), keys/balls/boxes are `K`/`o`/`B`,
    /// lava is `~`, and the agent is an arrow showing its heading.
    pub fn render_ascii(&self) -> String {
        let mut out = String::with_capacity((self.width as usize + 1) * self.height as usize);
        for y in 0..self.height {
            for x in 0..self.width {
                if (x, y) == self.agent_pos {
                    out.push(match self.agent_dir {
                        Direction::East => '>',
                        Direction::South => 'v',
                        Direction::West => '<',
                        Direction::North => '^',
                    });
                    continue;
                }
                out.push(match self.cell(x, y) {
                    Cell::Empty => ' ',
                    Cell::Wall => '#',
                    Cell::Floor(_) => '.',
                    Cell::Door(_, DoorState::Open) => '/',
                    Cell::Door(_, DoorState::Closed) => '+',
                    Cell::Door(_, DoorState::Locked) => 'L',
                    Cell::Key(_) => 'K',
                    Cell::Ball(_) => 'o',
                    Cell::Box(..) => 'B',
                    Cell::Goal => 'G',
                    Cell::Lava => '~',
                });
            }
            out.push('\n');
        }
        if let Some(c) = &self.carried {
            out.push_str(&format!("carrying: {:?}\n", c.object()));
        }
        out
    }
}

fn push_pose(out: &mut Vec<u8>, pos: (i32, i32), dir: Direction) {
    out.extend_from_slice(&(pos.0 as u16).to_le_bytes());
    out.extend_from_slice(&(pos.1 as u16).to_le_bytes());
    out.push(dir as u8);
}

/// Self-delimiting cell serialization: the 3-code encoding, plus a contents
/// flag and recursive payload for boxes. Concatenations in fixed grid order
/// parse unambiguously, so equal byte strings imply equal grids.
fn push_cell_deep(out: &mut Vec<u8>, cell: &Cell) {
    out.extend_from_slice(&cell.encode());
    if let Cell::Box(_, contents) = cell {
        match contents {
            Some(inner) => {
                out.push(1);
                push_cell_deep(out, inner);
            }
            None => out.push(0),
        }
    }
}

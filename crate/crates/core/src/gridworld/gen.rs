//! Seeded level generators for the four environment families.
//!
//! Every draw flows from one counter-based stream seeded by
//! `(spec hash, level seed)`, so generation is a pure function of that pair.

use super::cell::{Cell, Color, Direction, DoorState, Object};
use super::{EnvSpec, Family, GridState, Task};
use crate::rng::Rng64;
use crate::{Error, Result};

/// MultiRoom levels are laid out on a fixed square canvas.
const MULTIROOM_GRID: i32 = 25;

/// Axis-aligned room rectangle, walls included.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x: i32,
    pub y: i32,
    pub w: i32,
    pub h: i32,
}

impl Rect {
    fn contains(&self, px: i32, py: i32) -> bool {
        px >= self.x && px < self.x + self.w && py >= self.y && py < self.y + self.h
    }

    /// Interior rectangle (walls stripped).
    fn interior(&self) -> Rect {
        Rect {
            x: self.x + 1,
            y: self.y + 1,
            w: self.w - 2,
            h: self.h - 2,
        }
    }

    fn intersects(&self, other: &Rect) -> bool {
        self.x < other.x + other.w
            && other.x < self.x + self.w
            && self.y < other.y + other.h
            && other.y < self.y + self.h
    }

    fn interior_cells(&self) -> impl Iterator<Item = (i32, i32)> + '_ {
        let inner = self.interior();
        (inner.y..inner.y + inner.h)
            .flat_map(move |y| (inner.x..inner.x + inner.w).map(move |x| (x, y)))
    }
}

/// A generated level plus generator metadata.
#[derive(Debug, Clone)]
pub struct Level {
    pub state: GridState,
    pub rooms: Vec<Rect>,
    pub doors: Vec<(i32, i32)>,
}

pub fn generate(spec: &EnvSpec, seed: u64) -> Result<Level> {
    spec.validate()?;
    let mut rng = Rng64::from_pair(spec.hash(), seed);
    match spec.family {
        Family::Empty { side } => gen_empty(spec, seed, side as i32),
        Family::MultiRoom { rooms, room_size } => {
            gen_multiroom(spec, seed, &mut rng, rooms as usize, room_size as i32)
        }
        Family::KeyCorridor { room_size, rows } => {
            gen_keycorridor(spec, seed, &mut rng, room_size as i32, rows as i32)
        }
        Family::ObstructedMaze2Dlh => gen_obstructed_2dlh(spec, seed, &mut rng),
    }
}

fn wall_perimeter(state: &mut GridState, room: &Rect) {
    for x in room.x..room.x + room.w {
        state.set_cell(x, room.y, Cell::Wall);
        state.set_cell(x, room.y + room.h - 1, Cell::Wall);
    }
    for y in room.y..room.y + room.h {
        state.set_cell(room.x, y, Cell::Wall);
        state.set_cell(room.x + room.w - 1, y, Cell::Wall);
    }
}

/// Random empty interior cell of `room`.
fn random_empty_cell(state: &GridState, room: &Rect, rng: &mut Rng64) -> Result<(i32, i32)> {
    let free: Vec<(i32, i32)> = room
        .interior_cells()
        .filter(|&(x, y)| matches!(state.cell(x, y), Cell::Empty))
        .collect();
    if free.is_empty() {
        return Err(Error::Config("room has no free interior cell".into()));
    }
    Ok(*rng.choose(&free))
}

fn random_color(rng: &mut Rng64) -> Color {
    *rng.choose(&Color::ALL)
}

fn random_color_except(rng: &mut Rng64, avoid: Option<Color>) -> Color {
    let pool: Vec<Color> = Color::ALL
        .into_iter()
        .filter(|c| Some(*c) != avoid)
        .collect();
    *rng.choose(&pool)
}

fn random_direction(rng: &mut Rng64) -> Direction {
    *rng.choose(&Direction::ALL)
}

fn gen_empty(spec: &EnvSpec, seed: u64, side: i32) -> Result<Level> {
    let mut state = GridState::blank(side, side, spec.max_steps, seed, Task::ReachGoal);
    let room = Rect {
        x: 0,
        y: 0,
        w: side,
        h: side,
    };
    wall_perimeter(&mut state, &room);
    state.set_cell(side - 2, side - 2, Cell::Goal);
    state.agent_pos = (1, 1);
    state.agent_dir = Direction::East;
    Ok(Level {
        state,
        rooms: vec![room],
        doors: vec![],
    })
}

fn gen_multiroom(
    spec: &EnvSpec,
    seed: u64,
    rng: &mut Rng64,
    num_rooms: usize,
    max_size: i32,
) -> Result<Level> {
    for _attempt in 0..4000 {
        if let Some((rooms, doors)) = try_room_chain(rng, num_rooms, max_size) {
            let mut state = GridState::blank(
                MULTIROOM_GRID,
                MULTIROOM_GRID,
                spec.max_steps,
                seed,
                Task::ReachGoal,
            );
            for room in &rooms {
                wall_perimeter(&mut state, room);
            }
            let mut prev_color = None;
            for &(dx, dy) in &doors {
                let color = random_color_except(rng, prev_color);
                prev_color = Some(color);
                state.set_cell(dx, dy, Cell::Door(color, DoorState::Closed));
            }
            let goal = random_empty_cell(&state, rooms.last().expect("nonempty chain"), rng)?;
            state.set_cell(goal.0, goal.1, Cell::Goal);
            state.agent_pos = random_empty_cell(&state, &rooms[0], rng)?;
            state.agent_dir = random_direction(rng);
            return Ok(Level {
                state,
                rooms,
                doors,
            });
        }
    }
    Err(Error::Config(format!(
        "could not place a {num_rooms}-room chain (max size {max_size}) on a {MULTIROOM_GRID}x{MULTIROOM_GRID} grid"
    )))
}

/// Try once to lay out a chain of rooms joined by doors. Adjacent rooms share
/// the wall that carries their door; non-adjacent rooms may share wall lines
/// but never interior area.
fn try_room_chain(
    rng: &mut Rng64,
    num_rooms: usize,
    max_size: i32,
) -> Option<(Vec<Rect>, Vec<(i32, i32)>)> {
    const MIN_SIZE: i32 = 4;
    let mut rooms: Vec<Rect> = Vec::with_capacity(num_rooms);
    let mut doors: Vec<(i32, i32)> = Vec::with_capacity(num_rooms - 1);
    let mut entry_side: Option<Direction> = None;

    let w = rng.range_inclusive(MIN_SIZE as i64, max_size as i64) as i32;
    let h = rng.range_inclusive(MIN_SIZE as i64, max_size as i64) as i32;
    rooms.push(Rect {
        x: rng.range_inclusive(0, (MULTIROOM_GRID - w) as i64) as i32,
        y: rng.range_inclusive(0, (MULTIROOM_GRID - h) as i64) as i32,
        w,
        h,
    });

    'chain: for _ in 1..num_rooms {
        for _try in 0..24 {
            let prev = *rooms.last().expect("chain nonempty");
            let dir = random_direction(rng);
            if entry_side == Some(dir) {
                continue;
            }
            let w2 = rng.range_inclusive(MIN_SIZE as i64, max_size as i64) as i32;
            let h2 = rng.range_inclusive(MIN_SIZE as i64, max_size as i64) as i32;
            // Door on the shared wall, then the next room positioned so the
            // door is interior to both room spans.
            let (door, next) = match dir {
                Direction::East | Direction::West => {
                    let door_y = rng.range_inclusive((prev.y + 1) as i64, (prev.y + prev.h - 2) as i64) as i32;
                    let wall_x = if dir == Direction::East {
                        prev.x + prev.w - 1
                    } else {
                        prev.x
                    };
                    let next_x = if dir == Direction::East {
                        wall_x
                    } else {
                        wall_x - w2 + 1
                    };
                    let next_y =
                        rng.range_inclusive((door_y - h2 + 2) as i64, (door_y - 1) as i64) as i32;
                    (
                        (wall_x, door_y),
                        Rect {
                            x: next_x,
                            y: next_y,
                            w: w2,
                            h: h2,
                        },
                    )
                }
                Direction::South | Direction::North => {
                    let door_x = rng.range_inclusive((prev.x + 1) as i64, (prev.x + prev.w - 2) as i64) as i32;
                    let wall_y = if dir == Direction::South {
                        prev.y + prev.h - 1
                    } else {
                        prev.y
                    };
                    let next_y = if dir == Direction::South {
                        wall_y
                    } else {
                        wall_y - h2 + 1
                    };
                    let next_x =
                        rng.range_inclusive((door_x - w2 + 2) as i64, (door_x - 1) as i64) as i32;
                    (
                        (door_x, wall_y),
                        Rect {
                            x: next_x,
                            y: next_y,
                            w: w2,
                            h: h2,
                        },
                    )
                }
            };
            if next.x < 0
                || next.y < 0
                || next.x + next.w > MULTIROOM_GRID
                || next.y + next.h > MULTIROOM_GRID
            {
                continue;
            }
            // No interior overlap with any earlier room, and the new walls
            // must not cut through an earlier interior.
            let clash = rooms[..rooms.len() - 1].iter().any(|r| {
                r.interior().intersects(&next) || r.intersects(&next.interior())
            });
            if clash {
                continue;
            }
            // The door must stay clear of every other room's walls, and the
            // new room must not swallow an earlier door.
            if rooms[..rooms.len() - 1].iter().any(|r| r.contains(door.0, door.1)) {
                continue;
            }
            if doors.iter().any(|&(dx, dy)| next.contains(dx, dy)) {
                continue;
            }
            entry_side = Some(dir.opposite());
            doors.push(door);
            rooms.push(next);
            continue 'chain;
        }
        return None;
    }
    Some((rooms, doors))
}

fn gen_keycorridor(
    spec: &EnvSpec,
    seed: u64,
    rng: &mut Rng64,
    room_size: i32,
    rows: i32,
) -> Result<Level> {
    let span = room_size - 1;
    let width = 3 * span + 1;
    let height = rows * span + 1;
    let ball_color = random_color(rng);
    let mut state = GridState::blank(
        width,
        height,
        spec.max_steps,
        seed,
        Task::Pickup {
            object: Object::Ball,
            color: ball_color,
        },
    );

    let room = |col: i32, row: i32| Rect {
        x: col * span,
        y: row * span,
        w: room_size,
        h: room_size,
    };
    let mut rooms = Vec::new();
    for row in 0..rows {
        for col in 0..3 {
            let r = room(col, row);
            wall_perimeter(&mut state, &r);
            rooms.push(r);
        }
    }

    // Open the middle column into one corridor.
    for row in 1..rows {
        let y = row * span;
        for x in span + 1..2 * span {
            state.set_cell(x, y, Cell::Empty);
        }
    }

    let mut doors = Vec::new();
    let wall_slot = |row: i32, rng: &mut Rng64| {
        rng.range_inclusive((row * span + 1) as i64, (row * span + room_size - 2) as i64) as i32
    };

    // Locked door hiding the target ball.
    let locked_row = rng.below(rows as usize) as i32;
    let locked_color = random_color(rng);
    let locked_pos = (2 * span, wall_slot(locked_row, rng));
    state.set_cell(
        locked_pos.0,
        locked_pos.1,
        Cell::Door(locked_color, DoorState::Locked),
    );
    doors.push(locked_pos);

    // Closed doors joining every other side room to the corridor.
    for row in 0..rows {
        let left = (span, wall_slot(row, rng));
        state.set_cell(left.0, left.1, Cell::Door(random_color(rng), DoorState::Closed));
        doors.push(left);
        if row != locked_row {
            let right = (2 * span, wall_slot(row, rng));
            state.set_cell(right.0, right.1, Cell::Door(random_color(rng), DoorState::Closed));
            doors.push(right);
        }
    }

    // Key behind a side-room door, ball behind the locked door.
    let key_row = rng.below(rows as usize) as i32;
    let key_pos = random_empty_cell(&state, &room(0, key_row), rng)?;
    state.set_cell(key_pos.0, key_pos.1, Cell::Key(locked_color));
    let ball_pos = random_empty_cell(&state, &room(2, locked_row), rng)?;
    state.set_cell(ball_pos.0, ball_pos.1, Cell::Ball(ball_color));

    let agent_row = rng.below(rows as usize) as i32;
    state.agent_pos = random_empty_cell(&state, &room(1, agent_row), rng)?;
    state.agent_dir = random_direction(rng);

    Ok(Level {
        state,
        rooms,
        doors,
    })
}

fn gen_obstructed_2dlh(spec: &EnvSpec, seed: u64, rng: &mut Rng64) -> Result<Level> {
    const ROOM: i32 = 6;
    let span = ROOM - 1;
    let width = 3 * span + 1;
    let height = ROOM;
    let target_color = Color::Blue;
    let mut state = GridState::blank(
        width,
        height,
        spec.max_steps,
        seed,
        Task::Pickup {
            object: Object::Ball,
            color: target_color,
        },
    );

    let room = |col: i32| Rect {
        x: col * span,
        y: 0,
        w: ROOM,
        h: ROOM,
    };
    let rooms: Vec<Rect> = (0..3).map(room).collect();
    for r in &rooms {
        wall_perimeter(&mut state, r);
    }

    // Two locked doors with distinct colors.
    let mut palette = Color::ALL.to_vec();
    rng.shuffle(&mut palette);
    let (left_color, right_color) = (palette[0], palette[1]);
    let left_door = (span, rng.range_inclusive(1, (height - 2) as i64) as i32);
    let right_door = (2 * span, rng.range_inclusive(1, (height - 2) as i64) as i32);
    state.set_cell(left_door.0, left_door.1, Cell::Door(left_color, DoorState::Locked));
    state.set_cell(right_door.0, right_door.1, Cell::Door(right_color, DoorState::Locked));

    // Target ball in a random side room.
    let ball_side = if rng.below(2) == 0 { 0 } else { 2 };
    let ball_pos = random_empty_cell(&state, &room(ball_side), rng)?;
    state.set_cell(ball_pos.0, ball_pos.1, Cell::Ball(target_color));

    // Each key hides inside a box in the middle room.
    for color in [left_color, right_color] {
        let pos = random_empty_cell(&state, &room(1), rng)?;
        state.set_cell(
            pos.0,
            pos.1,
            Cell::Box(color, Some(Box::new(Cell::Key(color)))),
        );
    }

    state.agent_pos = random_empty_cell(&state, &room(1), rng)?;
    state.agent_dir = random_direction(rng);

    Ok(Level {
        state,
        rooms,
        doors: vec![left_door, right_door],
    })
}

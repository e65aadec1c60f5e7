//! Scripted level solver.
//!
//! Plans with breadth-first search over agent poses, threading key pickup,
//! box opening, obstruction clearing and door unlocking as scripted
//! subgoals, then verifies the plan by replaying it through the real step
//! dynamics. Used as the solvability oracle for generator tests and
//! available to the CLI for level inspection.

use std::collections::{HashSet, VecDeque};

use super::cell::{Action, Cell, Color, Direction, DoorState, Object};
use super::{GridState, Task};

/// Produce an action script that completes `state`'s task, or `None`.
///
/// The returned script is verified: replaying it on a clone of `state`
/// reaches task success strictly within the step limit.
pub fn solve(state: &GridState) -> Option<Vec<Action>> {
    let mut work = state.clone();
    let mut script = Vec::new();
    plan(&mut work, &mut script)?;

    // Independent verification through the public dynamics.
    let mut replay = state.clone();
    let mut solved = false;
    for &action in &script {
        let outcome = replay.step(action).ok()?;
        if outcome.done {
            solved = outcome.reward > 0.0;
            break;
        }
    }
    if solved {
        Some(script)
    } else {
        None
    }
}

fn plan(work: &mut GridState, script: &mut Vec<Action>) -> Option<()> {
    match work.task {
        Task::ReachGoal => {
            let goal = find_cell(work, |c| matches!(c, Cell::Goal))?;
            walk(work, script, Goal::StandOn(goal), None)
        }
        Task::Pickup { object, color } => plan_pickup(work, script, object, color),
    }
}

fn plan_pickup(
    work: &mut GridState,
    script: &mut Vec<Action>,
    object: Object,
    color: Color,
) -> Option<()> {
    let target = find_cell(work, |c| c.object() == object && c.color() == color)?;

    // Which locked door stands between the agent and the target?
    if let Some(door_color) = locked_door_on_path(work, target)? {
        let door = find_cell(work, |c| {
            matches!(c, Cell::Door(c2, DoorState::Locked) if *c2 == door_color)
        })?;
        // Clear the approach while the hands are still free.
        walk_clearing(work, script, Goal::FrontOf(door), Some(door_color))?;
        acquire_key(work, script, door_color)?;
        walk(work, script, Goal::FrontOf(door), Some(door_color))?;
        push_step(work, script, Action::Toggle)?;
        drop_carried(work, script)?;
    }
    walk_clearing(work, script, Goal::FrontOf(target), None)?;
    push_step(work, script, Action::PickUp)?;
    Some(())
}

/// Pick up the key of `color`, opening the box that hides it if needed.
fn acquire_key(work: &mut GridState, script: &mut Vec<Action>, color: Color) -> Option<()> {
    if find_cell(work, |c| matches!(c, Cell::Key(k) if *k == color)).is_none() {
        let boxed = find_box_with_key(work, color)?;
        walk_clearing(work, script, Goal::FrontOf(boxed), None)?;
        push_step(work, script, Action::Toggle)?;
    }
    let key = find_cell(work, |c| matches!(c, Cell::Key(k) if *k == color))?;
    walk_clearing(work, script, Goal::FrontOf(key), None)?;
    push_step(work, script, Action::PickUp)?;
    Some(())
}

/// Walk to the nearest pose whose front cell is empty and drop the carried
/// item there. Doorway-adjacent cells are avoided so the drop can never
/// block a chokepoint; if no such spot exists the restriction is lifted.
fn drop_carried(work: &mut GridState, script: &mut Vec<Action>) -> Option<()> {
    if work.carried.is_none() {
        return Some(());
    }
    drop_avoiding(work, script, &door_neighbors(work))
}

fn drop_avoiding(
    work: &mut GridState,
    script: &mut Vec<Action>,
    avoid: &HashSet<(i32, i32)>,
) -> Option<()> {
    let path = find_path(work, Goal::EmptyFront { avoid }, None, false).or_else(|| {
        let none = HashSet::new();
        find_path(work, Goal::EmptyFront { avoid: &none }, None, false)
    })?;
    match exec_path(work, script, &path)? {
        Exec::Completed => {
            push_step(work, script, Action::Drop)?;
            Some(())
        }
        _ => None,
    }
}

fn door_neighbors(state: &GridState) -> HashSet<(i32, i32)> {
    let mut avoid = HashSet::new();
    for y in 0..state.height {
        for x in 0..state.width {
            if matches!(state.cell(x, y), Cell::Door(..)) {
                avoid.extend(neighbors((x, y)));
            }
        }
    }
    avoid
}

fn neighbors((x, y): (i32, i32)) -> [(i32, i32); 4] {
    [(x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)]
}

/// Navigation target.
#[derive(Clone, Copy)]
enum Goal<'a> {
    StandOn((i32, i32)),
    FrontOf((i32, i32)),
    EmptyFront { avoid: &'a HashSet<(i32, i32)> },
}

/// Plain navigation: find a path through currently walkable cells (opening
/// doors on the way) and execute it.
fn walk(
    work: &mut GridState,
    script: &mut Vec<Action>,
    goal: Goal,
    key: Option<Color>,
) -> Option<()> {
    let path = find_path(work, goal, key, false)?;
    matches!(
        exec_path(work, script, &path)?,
        Exec::Completed | Exec::EpisodeDone
    )
    .then_some(())
}

/// Navigation that clears portable obstructions: plan as if keys, balls and
/// boxes were walkable; when execution runs into one, pick it up, park it
/// off the planned route, and replan. Requires free hands when an
/// obstruction is actually hit.
fn walk_clearing(
    work: &mut GridState,
    script: &mut Vec<Action>,
    goal: Goal,
    key: Option<Color>,
) -> Option<()> {
    for _round in 0..8 {
        if let Some(path) = find_path(work, goal, key, false) {
            return matches!(
                exec_path(work, script, &path)?,
                Exec::Completed | Exec::EpisodeDone
            )
            .then_some(());
        }
        let path = find_path(work, goal, key, true)?;
        let mut avoid = door_neighbors(work);
        avoid.extend(forward_cells(work, &path));
        match exec_path(work, script, &path)? {
            Exec::Completed | Exec::EpisodeDone => return Some(()),
            Exec::Blocked => {
                if work.carried.is_some() {
                    return None;
                }
                push_step(work, script, Action::PickUp)?;
                drop_avoiding(work, script, &avoid)?;
            }
        }
    }
    None
}

/// Cells entered by the forward moves of `path`, starting from the current
/// pose. Used to keep cleared obstructions off the planned route.
fn forward_cells(state: &GridState, path: &[Action]) -> Vec<(i32, i32)> {
    let (mut x, mut y) = state.agent_pos;
    let mut d = state.agent_dir;
    let mut cells = Vec::new();
    for act in path {
        match act {
            Action::TurnLeft => d = d.left(),
            Action::TurnRight => d = d.right(),
            Action::MoveForward => {
                let (dx, dy) = d.delta();
                x += dx;
                y += dy;
                cells.push((x, y));
            }
            _ => {}
        }
    }
    cells
}

enum Exec {
    Completed,
    EpisodeDone,
    /// Stopped in front of a portable obstruction (not consumed).
    Blocked,
}

/// Execute a pose path, toggling closed/locked doors as they are met.
fn exec_path(work: &mut GridState, script: &mut Vec<Action>, path: &[Action]) -> Option<Exec> {
    for &act in path {
        if act == Action::MoveForward {
            let (fx, fy) = work.front_pos();
            if work.in_bounds(fx, fy) {
                if work.cell(fx, fy).portable() {
                    return Some(Exec::Blocked);
                }
                if matches!(
                    work.cell(fx, fy),
                    Cell::Door(_, DoorState::Closed) | Cell::Door(_, DoorState::Locked)
                ) {
                    push_step(work, script, Action::Toggle)?;
                }
            }
        }
        push_step(work, script, act)?;
        if work.done {
            return Some(Exec::EpisodeDone);
        }
    }
    Some(Exec::Completed)
}

fn push_step(work: &mut GridState, script: &mut Vec<Action>, action: Action) -> Option<()> {
    if work.done {
        return None;
    }
    script.push(action);
    work.step(action).ok()?;
    Some(())
}

/// BFS over (x, y, dir) poses. `clearable` additionally lets the search pass
/// through portable objects, for planning routes that will be cleared.
fn find_path(
    state: &GridState,
    goal: Goal,
    key: Option<Color>,
    clearable: bool,
) -> Option<Vec<Action>> {
    let (w, h) = (state.width, state.height);
    let n_nodes = (w * h * 4) as usize;
    let node = |x: i32, y: i32, d: Direction| ((y * w + x) * 4 + d as i32) as usize;

    let passable = |x: i32, y: i32| -> bool {
        if !state.in_bounds(x, y) {
            return false;
        }
        match state.cell(x, y) {
            Cell::Empty | Cell::Floor(_) | Cell::Goal => true,
            Cell::Door(_, DoorState::Open) | Cell::Door(_, DoorState::Closed) => true,
            Cell::Door(c, DoorState::Locked) => key == Some(*c),
            Cell::Key(_) | Cell::Ball(_) | Cell::Box(..) => clearable,
            _ => false,
        }
    };
    let satisfied = |x: i32, y: i32, d: Direction| -> bool {
        let (dx, dy) = d.delta();
        match goal {
            Goal::StandOn(t) => (x, y) == t,
            Goal::FrontOf(t) => (x + dx, y + dy) == t,
            Goal::EmptyFront { avoid } => {
                state.in_bounds(x + dx, y + dy)
                    && matches!(state.cell(x + dx, y + dy), Cell::Empty)
                    && !avoid.contains(&(x + dx, y + dy))
            }
        }
    };

    let start = node(state.agent_pos.0, state.agent_pos.1, state.agent_dir);
    let mut parent: Vec<u32> = vec![u32::MAX; n_nodes];
    let mut parent_action: Vec<Action> = vec![Action::Done; n_nodes];
    let mut queue = VecDeque::new();
    parent[start] = start as u32;
    queue.push_back((state.agent_pos.0, state.agent_pos.1, state.agent_dir));
    let mut found = None;

    'bfs: while let Some((x, y, d)) = queue.pop_front() {
        if satisfied(x, y, d) {
            found = Some(node(x, y, d));
            break 'bfs;
        }
        let (dx, dy) = d.delta();
        let succs = [
            (x, y, d.left(), Action::TurnLeft),
            (x, y, d.right(), Action::TurnRight),
            (x + dx, y + dy, d, Action::MoveForward),
        ];
        for (nx, ny, nd, act) in succs {
            if act == Action::MoveForward && !passable(nx, ny) {
                continue;
            }
            let id = node(nx, ny, nd);
            if parent[id] == u32::MAX {
                parent[id] = node(x, y, d) as u32;
                parent_action[id] = act;
                queue.push_back((nx, ny, nd));
            }
        }
    }

    let mut id = found?;
    let mut path = Vec::new();
    while id != start {
        path.push(parent_action[id]);
        id = parent[id] as usize;
    }
    path.reverse();
    Some(path)
}

fn find_cell(state: &GridState, pred: impl Fn(&Cell) -> bool) -> Option<(i32, i32)> {
    for y in 0..state.height {
        for x in 0..state.width {
            if pred(state.cell(x, y)) {
                return Some((x, y));
            }
        }
    }
    None
}

fn find_box_with_key(state: &GridState, color: Color) -> Option<(i32, i32)> {
    find_cell(state, |c| {
        matches!(c, Cell::Box(_, Some(inner)) if matches!(inner.as_ref(), Cell::Key(k) if *k == color))
    })
}

/// Color of the first locked door crossed on a path to `target`, wrapped in
/// `Some(None)` when the target is reachable without unlocking anything and
/// outer `None` when the target cannot be reached at all. Portable
/// obstructions are treated as clearable.
fn locked_door_on_path(state: &GridState, target: (i32, i32)) -> Option<Option<Color>> {
    let (w, h) = (state.width, state.height);
    let node = |x: i32, y: i32, d: Direction| ((y * w + x) * 4 + d as i32) as usize;
    let mut seen = vec![false; (w * h * 4) as usize];
    let mut first_lock: Vec<Option<Color>> = vec![None; (w * h * 4) as usize];
    let mut queue = VecDeque::new();
    let start = node(state.agent_pos.0, state.agent_pos.1, state.agent_dir);
    seen[start] = true;
    queue.push_back((state.agent_pos.0, state.agent_pos.1, state.agent_dir));

    while let Some((x, y, d)) = queue.pop_front() {
        let (dx, dy) = d.delta();
        if (x + dx, y + dy) == target {
            return Some(first_lock[node(x, y, d)]);
        }
        let succs = [
            (x, y, d.left(), false),
            (x, y, d.right(), false),
            (x + dx, y + dy, d, true),
        ];
        for (nx, ny, nd, moves) in succs {
            let mut lock = first_lock[node(x, y, d)];
            if moves {
                if !state.in_bounds(nx, ny) {
                    continue;
                }
                match state.cell(nx, ny) {
                    Cell::Empty | Cell::Floor(_) | Cell::Goal => {}
                    Cell::Door(_, DoorState::Open) | Cell::Door(_, DoorState::Closed) => {}
                    Cell::Key(_) | Cell::Ball(_) | Cell::Box(..) => {}
                    Cell::Door(c, DoorState::Locked) => {
                        if lock.is_none() {
                            lock = Some(*c);
                        }
                    }
                    _ => continue,
                }
            }
            let id = node(nx, ny, nd);
            if !seen[id] {
                seen[id] = true;
                first_lock[id] = lock;
                queue.push_back((nx, ny, nd));
            }
        }
    }
    None
}

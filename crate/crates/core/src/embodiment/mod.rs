//! Agent dynamics on the grid: poses, actions, object bookkeeping, the
//! magic-pointer interaction, and per-step observation.

mod navigation;
mod sensing;
mod skills;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::{Cell, GridScene, Heading};

pub use navigation::{facing_within_range, navigate_to, plan_actions, Traversable};
pub use sensing::{cone_cells, line_cells, line_of_sight, observe, Observation, SensorConfig};
pub use skills::{Agent, SkillOutcome, SkillResult};

/// Interaction ray reach in metres.
pub const INTERACT_RANGE_M: f64 = 1.5;

/// Ray length in cells for a given cell size.
pub fn interact_range_cells(cell_size_m: f64) -> usize {
    (INTERACT_RANGE_M / cell_size_m).round() as usize
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EmbodimentError {
    #[error("step budget of {0} exhausted")]
    BudgetExhausted(usize),
    #[error("no path to {0}")]
    NoPath(Cell),
    #[error("target {0} is no longer where it was mapped")]
    TargetLost(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pose {
    pub cell: Cell,
    pub heading: Heading,
}

impl Pose {
    pub fn new(cell: Cell, heading: Heading) -> Self {
        Self { cell, heading }
    }
}

/// One discrete action. `Interact` may name the object to pick when the
/// ray lands on a receptacle holding several; `None` picks the first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Action {
    Forward,
    TurnLeft,
    TurnRight,
    Interact(Option<usize>),
}

impl Action {
    pub fn name(self) -> &'static str {
        match self {
            Action::Forward => "forward",
            Action::TurnLeft => "turn_left",
            Action::TurnRight => "turn_right",
            Action::Interact(_) => "interact",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObjectInstance {
    pub id: String,
    pub category: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObjectLocation {
    On(usize),
    Held,
}

/// Where every object instance is. Indices are stable for an episode.
#[derive(Clone, Debug, PartialEq)]
pub struct WorldState {
    objects: Vec<ObjectInstance>,
    location: Vec<ObjectLocation>,
    load: Vec<u32>,
}

impl WorldState {
    /// `placements` pairs each object with a receptacle index.
    pub fn new(scene: &GridScene, placements: Vec<(ObjectInstance, usize)>) -> Result<Self, EmbodimentError> {
        let mut load = vec![0u32; scene.receptacles().len()];
        let mut objects = Vec::with_capacity(placements.len());
        let mut location = Vec::with_capacity(placements.len());
        for (obj, rec) in placements {
            let Some(slot) = load.get_mut(rec) else {
                return Err(EmbodimentError::InvalidState(format!("object {} on unknown receptacle index {rec}", obj.id)));
            };
            *slot += 1;
            if *slot > scene.receptacles()[rec].capacity {
                return Err(EmbodimentError::InvalidState(format!("receptacle {} over capacity", scene.receptacles()[rec].id)));
            }
            objects.push(obj);
            location.push(ObjectLocation::On(rec));
        }
        Ok(Self { objects, location, load })
    }

    pub fn objects(&self) -> &[ObjectInstance] {
        &self.objects
    }

    pub fn object_index(&self, id: &str) -> Option<usize> {
        self.objects.iter().position(|o| o.id == id)
    }

    pub fn location(&self, object: usize) -> ObjectLocation {
        self.location[object]
    }

    pub fn receptacle_of(&self, object: usize) -> Option<usize> {
        match self.location[object] {
            ObjectLocation::On(r) => Some(r),
            ObjectLocation::Held => None,
        }
    }

    pub fn load(&self, receptacle: usize) -> u32 {
        self.load[receptacle]
    }

    pub fn has_room(&self, scene: &GridScene, receptacle: usize) -> bool {
        self.load[receptacle] < scene.receptacles()[receptacle].capacity
    }

    /// Objects resting on `receptacle`, in index order.
    pub fn objects_on(&self, receptacle: usize) -> impl Iterator<Item = usize> + '_ {
        self.location.iter().enumerate().filter(move |(_, l)| **l == ObjectLocation::On(receptacle)).map(|(i, _)| i)
    }

    fn pick(&mut self, object: usize) {
        if let ObjectLocation::On(r) = self.location[object] {
            self.load[r] -= 1;
        }
        self.location[object] = ObjectLocation::Held;
    }

    fn place(&mut self, object: usize, receptacle: usize) {
        self.load[receptacle] += 1;
        self.location[object] = ObjectLocation::On(receptacle);
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AgentState {
    pub pose: Pose,
    pub held: Option<usize>,
    pub step_count: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlaceFailure {
    Capacity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InteractOutcome {
    Picked { object: usize, receptacle: usize },
    Placed { object: usize, receptacle: usize },
    PlaceFailed { object: usize, receptacle: usize, reason: PlaceFailure },
    NoTarget,
}

/// First receptacle cell hit by the interaction ray, if any. The ray covers
/// cells 1..=range ahead and stops at the first receptacle or obstacle.
pub fn ray_hit(scene: &GridScene, pose: Pose, range: usize) -> Option<usize> {
    let mut cell = pose.cell;
    for _ in 0..range {
        cell = cell.step(pose.heading)?;
        if !scene.is_free(cell) {
            return None;
        }
        if let Some(rec) = scene.receptacle_at(cell) {
            return Some(rec);
        }
    }
    None
}

/// Applies the magic pointer to `world` for an agent at `pose`.
pub fn interact(
    scene: &GridScene,
    world: &mut WorldState,
    pose: Pose,
    held: &mut Option<usize>,
    range: usize,
    select: Option<usize>,
) -> InteractOutcome {
    let Some(rec) = ray_hit(scene, pose, range) else {
        return InteractOutcome::NoTarget;
    };
    match *held {
        None => {
            let target = match select {
                Some(o) if o < world.objects.len() && world.location[o] == ObjectLocation::On(rec) => Some(o),
                Some(_) => None,
                None => world.objects_on(rec).next(),
            };
            match target {
                Some(object) => {
                    world.pick(object);
                    *held = Some(object);
                    InteractOutcome::Picked { object, receptacle: rec }
                }
                None => InteractOutcome::NoTarget,
            }
        }
        Some(object) => {
            if world.has_room(scene, rec) {
                world.place(object, rec);
                *held = None;
                InteractOutcome::Placed { object, receptacle: rec }
            } else {
                InteractOutcome::PlaceFailed { object, receptacle: rec, reason: PlaceFailure::Capacity }
            }
        }
    }
}

/// Serialized interaction outcome in the trajectory log.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub outcome: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub object: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub receptacle: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reason: Option<PlaceFailure>,
}

/// One trajectory log line.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub action: String,
    pub pose: Pose,
    pub held: Option<String>,
    pub collision: bool,
    pub interaction: Option<InteractionRecord>,
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub collision: bool,
    pub interaction: Option<InteractOutcome>,
    pub observation: Observation,
}

/// Pure successor function shared by the simulator and tests.
pub fn step(
    scene: &GridScene,
    world: &mut WorldState,
    state: &mut AgentState,
    action: Action,
    max_steps: usize,
    range: usize,
) -> Result<(bool, Option<InteractOutcome>), EmbodimentError> {
    if state.step_count >= max_steps {
        return Err(EmbodimentError::BudgetExhausted(max_steps));
    }
    let mut collision = false;
    let mut interaction = None;
    match action {
        Action::Forward => match state.pose.cell.step(state.pose.heading).filter(|c| scene.is_free(*c)) {
            Some(next) => state.pose.cell = next,
            None => collision = true,
        },
        Action::TurnLeft => state.pose.heading = state.pose.heading.left(),
        Action::TurnRight => state.pose.heading = state.pose.heading.right(),
        Action::Interact(select) => {
            interaction = Some(interact(scene, world, state.pose, &mut state.held, range, select));
        }
    }
    state.step_count += 1;
    Ok((collision, interaction))
}

/// One episode's ground-truth simulator.
#[derive(Clone, Debug)]
pub struct Sim<'a> {
    scene: &'a GridScene,
    world: WorldState,
    agent: AgentState,
    max_steps: usize,
    sensor: SensorConfig,
    log: Option<Vec<StepRecord>>,
}

impl<'a> Sim<'a> {
    pub fn new(scene: &'a GridScene, world: WorldState, start: Pose, max_steps: usize, sensor: SensorConfig) -> Result<Self, EmbodimentError> {
        if !scene.is_free(start.cell) {
            return Err(EmbodimentError::InvalidState(format!("start cell {} is not free", start.cell)));
        }
        Ok(Self {
            scene,
            world,
            agent: AgentState { pose: start, held: None, step_count: 0 },
            max_steps,
            sensor,
            log: None,
        })
    }

    pub fn with_trajectory_log(mut self) -> Self {
        self.log = Some(Vec::new());
        self
    }

    pub fn scene(&self) -> &'a GridScene {
        self.scene
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn agent(&self) -> &AgentState {
        &self.agent
    }

    pub fn sensor(&self) -> &SensorConfig {
        &self.sensor
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }

    pub fn steps_left(&self) -> usize {
        self.max_steps - self.agent.step_count
    }

    pub fn observe(&self) -> Observation {
        observe(self.scene, &self.world, self.agent.pose, &self.sensor)
    }

    pub fn take_log(&mut self) -> Vec<StepRecord> {
        self.log.take().unwrap_or_default()
    }

    /// Records logged so far; logging stays enabled.
    pub fn drain_log(&mut self) -> Vec<StepRecord> {
        self.log.as_mut().map(std::mem::take).unwrap_or_default()
    }

    pub fn step(&mut self, action: Action) -> Result<StepOutcome, EmbodimentError> {
        let (collision, interaction) =
            step(self.scene, &mut self.world, &mut self.agent, action, self.max_steps, self.sensor.interact_range)?;
        if let Some(log) = &mut self.log {
            let record = StepRecord {
                t: self.agent.step_count,
                action: action.name().to_string(),
                pose: self.agent.pose,
                held: self.agent.held.map(|o| self.world.objects[o].id.clone()),
                collision,
                interaction: interaction.map(|i| interaction_record(self.scene, &self.world, i)),
            };
            log.push(record);
        }
        Ok(StepOutcome { collision, interaction, observation: self.observe() })
    }
}

fn interaction_record(scene: &GridScene, world: &WorldState, outcome: InteractOutcome) -> InteractionRecord {
    let obj = |o: usize| Some(world.objects()[o].id.clone());
    let rec = |r: usize| Some(scene.receptacles()[r].id.clone());
    match outcome {
        InteractOutcome::Picked { object, receptacle } => {
            InteractionRecord { outcome: "picked".into(), object: obj(object), receptacle: rec(receptacle), reason: None }
        }
        InteractOutcome::Placed { object, receptacle } => {
            InteractionRecord { outcome: "placed".into(), object: obj(object), receptacle: rec(receptacle), reason: None }
        }
        InteractOutcome::PlaceFailed { object, receptacle, reason } => InteractionRecord {
            outcome: "place_failed".into(),
            object: obj(object),
            receptacle: rec(receptacle),
            reason: Some(reason),
        },
        InteractOutcome::NoTarget => InteractionRecord { outcome: "no_target".into(), object: None, receptacle: None, reason: None },
    }
}

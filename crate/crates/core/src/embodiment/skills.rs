//! Pick and place skills: navigate on the agent's own map, orient, interact.

use super::{navigate_to, Action, EmbodimentError, InteractOutcome, Sim, StepOutcome};
use crate::exploration::AlloMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SkillResult {
    Picked,
    Placed,
    PlaceFailed,
    NoPath,
    TargetLost,
    BudgetExhausted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SkillOutcome {
    pub result: SkillResult,
    pub actions: usize,
}

/// A simulator paired with the map the agent builds from its observations.
#[derive(Clone, Debug)]
pub struct Agent<'a> {
    pub sim: Sim<'a>,
    pub map: AlloMap,
    last_collision: bool,
}

impl<'a> Agent<'a> {
    /// `full_map` hands the agent the complete map at t = 0.
    pub fn new(sim: Sim<'a>, full_map: bool) -> Self {
        let scene = sim.scene();
        let map = if full_map {
            AlloMap::fully_revealed(scene, sim.world(), 0)
        } else {
            let mut map = AlloMap::new(scene);
            map.update(scene, sim.world(), &sim.observe(), 0);
            map
        };
        Self { sim, map, last_collision: false }
    }

    pub fn last_collision(&self) -> bool {
        self.last_collision
    }

    pub fn held(&self) -> Option<usize> {
        self.sim.agent().held
    }

    /// Steps the simulator and folds the result into the map.
    pub fn act(&mut self, action: Action) -> Result<StepOutcome, EmbodimentError> {
        let out = self.sim.step(action)?;
        let t = self.sim.agent().step_count;
        if let Some(i) = &out.interaction {
            self.map.apply_interaction(i);
        }
        self.map.update(self.sim.scene(), self.sim.world(), &out.observation, t);
        self.last_collision = out.collision;
        Ok(out)
    }

    fn go_to(&mut self, target: crate::world::Cell, spent: &mut usize) -> Result<(), SkillResult> {
        let range = self.sim.sensor().interact_range;
        let plan = navigate_to(&self.map, self.sim.agent().pose, target, range).map_err(|_| SkillResult::NoPath)?;
        for action in plan {
            self.act(action).map_err(|_| SkillResult::BudgetExhausted)?;
            *spent += 1;
        }
        Ok(())
    }

    /// Walks to the mapped receptacle of `object` and picks it up.
    pub fn pick_object(&mut self, object: usize) -> SkillOutcome {
        let mut spent = 0;
        let result = self.pick_inner(object, &mut spent).unwrap_or_else(|r| r);
        SkillOutcome { result, actions: spent }
    }

    fn pick_inner(&mut self, object: usize, spent: &mut usize) -> Result<SkillResult, SkillResult> {
        let rec = self.map.objects().get(&object).and_then(|k| k.on).ok_or(SkillResult::TargetLost)?;
        let cell = self.map.receptacles()[&rec].cell;
        self.go_to(cell, spent)?;
        if self.map.objects().get(&object).and_then(|k| k.on) != Some(rec) {
            return Err(SkillResult::TargetLost);
        }
        let out = self.act(Action::Interact(Some(object))).map_err(|_| SkillResult::BudgetExhausted)?;
        *spent += 1;
        match out.interaction {
            Some(InteractOutcome::Picked { object: o, .. }) if o == object => Ok(SkillResult::Picked),
            _ => Err(SkillResult::TargetLost),
        }
    }

    /// Walks to `receptacle` and places the held object on it.
    pub fn place_object(&mut self, receptacle: usize) -> SkillOutcome {
        let mut spent = 0;
        let result = self.place_inner(receptacle, &mut spent).unwrap_or_else(|r| r);
        SkillOutcome { result, actions: spent }
    }

    fn place_inner(&mut self, receptacle: usize, spent: &mut usize) -> Result<SkillResult, SkillResult> {
        let cell = self.map.receptacles().get(&receptacle).ok_or(SkillResult::TargetLost)?.cell;
        self.go_to(cell, spent)?;
        let out = self.act(Action::Interact(None)).map_err(|_| SkillResult::BudgetExhausted)?;
        *spent += 1;
        match out.interaction {
            Some(InteractOutcome::Placed { receptacle: r, .. }) if r == receptacle => Ok(SkillResult::Placed),
            Some(InteractOutcome::PlaceFailed { .. }) => Err(SkillResult::PlaceFailed),
            _ => Err(SkillResult::TargetLost),
        }
    }
}

use serde::{Deserialize, Serialize};

use super::Path;
use crate::agent::{AgentState, World};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Halt {
    PathComplete,
    /// The next cell is not traversable in the true scene; replan.
    CollisionReplan,
    Budget,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExecOutcome {
    pub executed: usize,
    pub halt: Halt,
}

/// Follows `path` pose by pose, observing after every executed step.
///
/// Poses equal to the current one are skipped without cost. A move into a
/// cell that is not navigable in the true scene is refused (the cell is
/// recorded as bumped) and costs nothing.
pub fn execute_path(state: &mut AgentState, path: &Path, world: &World, budget: usize) -> Result<ExecOutcome> {
    let first = path.first().ok_or_else(|| Error::Precondition("empty path".into()))?;
    if first.cell != state.pose.cell {
        return Err(Error::Precondition("path must start at the agent's cell".into()));
    }
    let mut executed = 0;
    for &next in &path[1..] {
        if next == state.pose {
            continue;
        }
        if next.cell.manhattan(state.pose.cell) > 1 {
            return Err(Error::Precondition("path positions must be 4-adjacent".into()));
        }
        if executed == budget {
            return Ok(ExecOutcome { executed, halt: Halt::Budget });
        }
        if next.cell != state.pose.cell && !world.scene().is_navigable(next.cell) {
            state.bump(next.cell);
            return Ok(ExecOutcome { executed, halt: Halt::CollisionReplan });
        }
        state.step_to(world, next)?;
        executed += 1;
    }
    Ok(ExecOutcome { executed, halt: Halt::PathComplete })
}

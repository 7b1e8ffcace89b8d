//! File formats, artifact directories and the command implementations
//! behind the `fraisse` binary.

pub mod artifacts;
pub mod commands;

use anyhow::{bail, Result};
use fraisse_core::LpEngine;

/// Name of the variable selecting the LP engine.
pub const ENGINE_VAR: &str = "FRAISSE_LP_ENGINE";

/// `float` unless the environment says otherwise.
pub fn engine_from_env() -> Result<LpEngine> {
    match std::env::var(ENGINE_VAR) {
        Err(std::env::VarError::NotPresent) => Ok(LpEngine::Float),
        Err(e) => bail!("{ENGINE_VAR}: {e}"),
        Ok(v) => match LpEngine::parse(v.trim()) {
            Some(e) => Ok(e),
            None => bail!("{ENGINE_VAR} must be `float` or `exact`, got `{v}`"),
        },
    }
}

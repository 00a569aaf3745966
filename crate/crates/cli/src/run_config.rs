use std::path::Path;

use anyhow::Context;
use serde::Serialize;

use crate::{Command, RUN_CONFIG_FILE};

/// Everything needed to repeat a run: the command, its exact arguments, the
/// parsed flags with defaults filled in, and command-specific resolved
/// settings (seeds, paths, full synthesis or training configs).
#[derive(Debug, Serialize)]
pub struct RunConfig<'a> {
    pub command: &'static str,
    pub argv: &'a [String],
    pub flags: &'a Command,
    pub resolved: serde_json::Value,
    pub version: &'static str,
}

impl<'a> RunConfig<'a> {
    pub fn new(command: &'a Command, argv: &'a [String], resolved: serde_json::Value) -> Self {
        Self {
            command: command.name(),
            argv,
            flags: command,
            resolved,
            version: env!("CARGO_PKG_VERSION"),
        }
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<()> {
        let path = dir.join(RUN_CONFIG_FILE);
        let json = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(&path, json).with_context(|| format!("writing {}", path.display()))
    }
}

pub(crate) fn create_out_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

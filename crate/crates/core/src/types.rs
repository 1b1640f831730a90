use alloc::string::String;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Seed,
    Generated,
}

/// One task definition in the pool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instruction {
    pub id: String,
    #[serde(rename = "instruction")]
    pub text: String,
    pub origin: Origin,
    /// Generation call that produced it; seeds are always 0.
    pub step: u64,
}

impl Instruction {
    pub fn seed(id: impl Into<String>, text: impl Into<String>) -> Self {
        Instruction { id: id.into(), text: text.into(), origin: Origin::Seed, step: 0 }
    }

    pub fn is_seed(&self) -> bool {
        self.origin == Origin::Seed
    }
}

/// An (input, output) demonstration attached to an instruction by id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub instruction_id: String,
    #[serde(default)]
    pub input: String,
    pub output: String,
}

/// A flattened (instruction, input, output) training triplet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IftRecord {
    pub instruction: String,
    #[serde(default)]
    pub input: String,
    pub output: String,
}

impl IftRecord {
    pub fn new(instruction: impl Into<String>, input: impl Into<String>, output: impl Into<String>) -> Self {
        IftRecord { instruction: instruction.into(), input: input.into(), output: output.into() }
    }

    /// Both instruction and output carry non-whitespace text.
    pub fn is_valid(&self) -> bool {
        !self.instruction.trim().is_empty() && !self.output.trim().is_empty()
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of conv blocks in the forgery classifier's feature extractor.
pub const STANDARD_BLOCKS: usize = 5;

/// Layer geometry. Every block is conv3×3 (pad 1, stride 1) → batchnorm →
/// ReLU → maxpool2; the head is fc → ReLU → fc with a single logit.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub input_size: usize,
    pub in_channels: usize,
    pub channels: Vec<usize>,
    pub fc_hidden: usize,
}

impl ArchConfig {
    /// Five blocks of widths 16, 32, 64, 128, 128 and a 256-wide hidden layer.
    pub fn standard(input_size: usize) -> Self {
        Self {
            input_size,
            in_channels: 3,
            channels: vec![16, 32, 64, 128, 128],
            fc_hidden: 256,
        }
    }

    /// Geometry checks shared by every configuration, including reduced
    /// test networks with fewer blocks.
    pub fn check_geometry(&self) -> Result<()> {
        if self.channels.is_empty() || self.channels.contains(&0) || self.fc_hidden == 0 || self.in_channels == 0 {
            return Err(Error::InvalidArgument(format!("degenerate architecture {self:?}")));
        }
        let div = 1usize << self.channels.len();
        if self.input_size == 0 || !self.input_size.is_multiple_of(div) {
            return Err(Error::InvalidArgument(format!(
                "input size {} must be a positive multiple of {div} for {} pooling blocks",
                self.input_size,
                self.channels.len()
            )));
        }
        Ok(())
    }

    /// Full check for the classifier proper: exactly five blocks.
    pub fn validate(&self) -> Result<()> {
        if self.channels.len() != STANDARD_BLOCKS {
            return Err(Error::InvalidArgument(format!(
                "classifier needs exactly {STANDARD_BLOCKS} conv blocks, got {}",
                self.channels.len()
            )));
        }
        self.check_geometry()
    }

    /// Spatial side of the last block's conv output (the Grad-CAM tap).
    pub fn cam_size(&self) -> usize {
        self.input_size >> (self.channels.len() - 1)
    }

    pub fn flat_dim(&self) -> usize {
        let side = self.input_size >> self.channels.len();
        self.channels.last().copied().unwrap_or(0) * side * side
    }
}

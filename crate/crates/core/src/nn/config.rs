use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Side length of every convolution kernel.
pub const KERNEL_SIZE: usize = 5;
/// Side length of every (non-overlapping) max-pool window.
pub const POOL_SIZE: usize = 2;
/// Feature maps per convolution layer.
pub const FEATURE_MAPS: usize = 32;
pub const MAX_CONVS: usize = 3;

pub const MOUTH_INPUT: (usize, usize) = (85, 69);
pub const FACE_INPUT: (usize, usize) = (95, 121);

/// The four searched hyperparameters plus the input geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkConfig {
    /// Convolution + pooling pairs, 0 to 3.
    pub num_convs: usize,
    pub num_hidden_layers: usize,
    pub hidden_units: usize,
    pub dropout_p: f64,
    pub input_height: usize,
    pub input_width: usize,
    pub num_classes: usize,
    /// Fixed at [`FEATURE_MAPS`] for real runs; gradient checks shrink it.
    pub feature_maps: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            num_convs: 1,
            num_hidden_layers: 1,
            hidden_units: 100,
            dropout_p: 0.5,
            input_height: MOUTH_INPUT.0,
            input_width: MOUTH_INPUT.1,
            num_classes: 2,
            feature_maps: FEATURE_MAPS,
        }
    }
}

/// Spatial size after a valid `KERNEL_SIZE` convolution.
pub fn conv_output_dim(input: usize) -> Option<usize> {
    input.checked_sub(KERNEL_SIZE - 1).filter(|&d| d >= 1)
}

/// Spatial size after flooring `POOL_SIZE` pooling.
pub fn pool_output_dim(input: usize) -> Option<usize> {
    Some(input / POOL_SIZE).filter(|&d| d >= 1)
}

impl NetworkConfig {
    pub fn with_input(mut self, height: usize, width: usize) -> Self {
        self.input_height = height;
        self.input_width = width;
        self
    }

    /// `(height, width)` after each conv and each pool, in stack order.
    pub fn spatial_chain(&self) -> Result<Vec<(usize, usize)>> {
        let mut dims = (self.input_height, self.input_width);
        let mut chain = Vec::with_capacity(2 * self.num_convs);
        for stage in 1..=self.num_convs {
            let conv = conv_output_dim(dims.0).zip(conv_output_dim(dims.1)).ok_or_else(|| Error::Config {
                stage: format!("conv {stage}"),
                reason: format!("{}x{} input is smaller than the {KERNEL_SIZE}x{KERNEL_SIZE} kernel", dims.0, dims.1),
            })?;
            chain.push(conv);
            let pool = pool_output_dim(conv.0).zip(pool_output_dim(conv.1)).ok_or_else(|| Error::Config {
                stage: format!("pool {stage}"),
                reason: format!("{}x{} map cannot be pooled {POOL_SIZE}x{POOL_SIZE}", conv.0, conv.1),
            })?;
            chain.push(pool);
            dims = pool;
        }
        Ok(chain)
    }

    /// Width of the flattened feature vector entering the dense stack.
    pub fn flattened_len(&self) -> Result<usize> {
        let chain = self.spatial_chain()?;
        Ok(match chain.last() {
            Some(&(h, w)) => h * w * self.feature_maps,
            None => self.input_height * self.input_width,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |stage: &str, reason: alloc::string::String| Error::Config { stage: stage.into(), reason };
        if self.num_convs > MAX_CONVS {
            return Err(invalid("convs", format!("at most {MAX_CONVS}, got {}", self.num_convs)));
        }
        if self.num_hidden_layers == 0 {
            return Err(invalid("hidden layers", "at least one hidden layer is required".into()));
        }
        if self.hidden_units == 0 {
            return Err(invalid("hidden units", "at least one unit is required".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(invalid("dropout", format!("p must be in [0, 1), got {}", self.dropout_p)));
        }
        if self.num_classes < 2 {
            return Err(invalid("output", format!("need at least 2 classes, got {}", self.num_classes)));
        }
        if self.input_height == 0 || self.input_width == 0 {
            return Err(invalid("input", "input dimensions must be positive".into()));
        }
        if self.num_convs > 0 && self.feature_maps == 0 {
            return Err(invalid("conv 1", "feature maps must be positive".into()));
        }
        self.spatial_chain().map(|_| ())
    }
}

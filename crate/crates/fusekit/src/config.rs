//! Structural hyperparameters the fusion blocks leave open, collected in one
//! validated record.

use crate::error::{Error, Result};

/// Which fusion block a config, archive, or cost report refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Module {
    Asff,
    Fatm,
}

impl Module {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "asff" => Ok(Module::Asff),
            "fatm" => Ok(Module::Fatm),
            other => Err(Error::Usage(format!("unknown module '{other}' (expected asff|fatm)"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Module::Asff => "asff",
            Module::Fatm => "fatm",
        }
    }
}

/// Channel count, shuffle groups, bottleneck ratio, channel-attention kernel
/// size, and the input shape a cost report is evaluated at.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModuleConfig {
    pub channels: usize,
    pub groups: usize,
    pub lcam_ratio: usize,
    pub cam_kernel: usize,
    pub height: usize,
    pub width: usize,
    pub batch: usize,
}

impl ModuleConfig {
    /// Conventional defaults: shuffle groups 4, bottleneck ratio 16, 3-tap
    /// channel attention, 8x8 maps, batch 1.
    pub fn with_defaults(channels: usize) -> Self {
        ModuleConfig {
            channels,
            groups: 4,
            lcam_ratio: 16,
            cam_kernel: 3,
            height: 8,
            width: 8,
            batch: 1,
        }
    }

    pub fn validate(&self, which: Module) -> Result<()> {
        if self.channels == 0 || self.height == 0 || self.width == 0 || self.batch == 0 {
            return Err(Error::Config("extents must be positive".into()));
        }
        if self.cam_kernel % 2 == 0 {
            return Err(Error::Config(format!(
                "channel-attention kernel {} must be odd",
                self.cam_kernel
            )));
        }
        match which {
            Module::Asff => {
                if self.channels % 2 != 0 {
                    return Err(Error::Config(format!(
                        "fusion unit needs an even channel count, got {}",
                        self.channels
                    )));
                }
                if self.groups == 0 || self.channels % self.groups != 0 {
                    return Err(Error::Config(format!(
                        "channels {} not divisible by shuffle groups {}",
                        self.channels, self.groups
                    )));
                }
                if self.height % 2 != 0 || self.width % 2 != 0 {
                    return Err(Error::Config(format!(
                        "fusion unit needs even spatial extents, got {}x{}",
                        self.height, self.width
                    )));
                }
            }
            Module::Fatm => {
                if self.lcam_ratio == 0 || self.channels % self.lcam_ratio != 0 {
                    return Err(Error::Config(format!(
                        "channels {} not divisible by bottleneck ratio {}",
                        self.channels, self.lcam_ratio
                    )));
                }
            }
        }
        Ok(())
    }
}

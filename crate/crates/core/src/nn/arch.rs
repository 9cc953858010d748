use alloc::format;
use core::ops::Range;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    /// Linear network, used to check gradients away from ReLU kinks.
    Identity,
}

impl Activation {
    pub fn code(self) -> u32 {
        match self {
            Activation::Relu => 0,
            Activation::Identity => 1,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Identity),
            _ => None,
        }
    }

    #[inline]
    pub(crate) fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => super::ops::relu(z),
            Activation::Identity => z,
        }
    }

    #[inline]
    pub(crate) fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// One temporal convolution stage: `kernels` filters spanning every input map
/// over `length` samples, activation, then non-overlapping max-pooling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TemporalLayer {
    pub kernels: usize,
    pub length: usize,
    pub pool: usize,
}

pub const SPATIAL_KERNELS: usize = 8;
pub const TEMPORAL_KERNELS: usize = 16;
pub const TEMPORAL_LENGTH: usize = 11;
pub const POOL_WIDTH: usize = 2;

/// Shape of the network. Parameter count depends only on these fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Architecture {
    pub n_channels: usize,
    pub n_samples: usize,
    pub spatial_kernels: usize,
    pub temporal: [TemporalLayer; 2],
    pub activation: Activation,
}

/// Offsets of each parameter block inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub spatial_w: Range<usize>,
    pub spatial_b: Range<usize>,
    pub temporal_w: [Range<usize>; 2],
    pub temporal_b: [Range<usize>; 2],
    pub fc_w: Range<usize>,
    pub fc_b: usize,
    pub total: usize,
}

impl Architecture {
    /// Eight spatial kernels, then two stages of 16 kernels of length 11 with max-pool 2.
    pub fn new(n_channels: usize, n_samples: usize) -> Self {
        let layer = TemporalLayer {
            kernels: TEMPORAL_KERNELS,
            length: TEMPORAL_LENGTH,
            pool: POOL_WIDTH,
        };
        Self {
            n_channels,
            n_samples,
            spatial_kernels: SPATIAL_KERNELS,
            temporal: [layer; 2],
            activation: Activation::Relu,
        }
    }

    /// Small shape for gradient checks on short inputs: 8 spatial kernels, then
    /// 4 kernels of length 5 and 4 of length 3, both pooled by 2.
    pub fn compact(n_channels: usize, n_samples: usize) -> Self {
        Self {
            n_channels,
            n_samples,
            spatial_kernels: SPATIAL_KERNELS,
            temporal: [
                TemporalLayer {
                    kernels: 4,
                    length: 5,
                    pool: 2,
                },
                TemporalLayer {
                    kernels: 4,
                    length: 3,
                    pool: 2,
                },
            ],
            activation: Activation::Relu,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_channels == 0 || self.spatial_kernels == 0 {
            return Err(Error::invalid(
                "architecture needs channels and spatial kernels",
            ));
        }
        let mut len = self.n_samples;
        for (i, layer) in self.temporal.iter().enumerate() {
            if layer.kernels == 0 || layer.length == 0 || layer.pool == 0 {
                return Err(Error::invalid(format!(
                    "temporal layer {} has a zero size",
                    i + 1
                )));
            }
            if len < layer.length || (len - layer.length + 1) / layer.pool == 0 {
                return Err(Error::invalid(format!(
                    "{} samples leave no output after temporal layer {}",
                    self.n_samples,
                    i + 1
                )));
            }
            len = (len - layer.length + 1) / layer.pool;
        }
        Ok(())
    }

    /// Input maps feeding temporal layer `i`.
    pub fn temporal_inputs(&self, i: usize) -> usize {
        if i == 0 {
            self.spatial_kernels
        } else {
            self.temporal[i - 1].kernels
        }
    }

    /// Input length of temporal layer `i`.
    pub fn temporal_input_len(&self, i: usize) -> usize {
        if i == 0 {
            self.n_samples
        } else {
            self.pooled_len(i - 1)
        }
    }

    pub fn conv_len(&self, i: usize) -> usize {
        self.temporal_input_len(i) + 1 - self.temporal[i].length
    }

    pub fn pooled_len(&self, i: usize) -> usize {
        self.conv_len(i) / self.temporal[i].pool
    }

    /// Width of the fully connected layer's input.
    pub fn fc_inputs(&self) -> usize {
        self.temporal[1].kernels * self.pooled_len(1)
    }

    pub fn layout(&self) -> Layout {
        let mut at = 0;
        let mut take = |n: usize| {
            let r = at..at + n;
            at += n;
            r
        };
        let spatial_w = take(self.spatial_kernels * self.n_channels);
        let spatial_b = take(self.spatial_kernels);
        let l0 = self.temporal[0];
        let t0w = take(l0.kernels * self.temporal_inputs(0) * l0.length);
        let t0b = take(l0.kernels);
        let l1 = self.temporal[1];
        let t1w = take(l1.kernels * self.temporal_inputs(1) * l1.length);
        let t1b = take(l1.kernels);
        let fc_w = take(self.fc_inputs());
        let fc_b = take(1).start;
        Layout {
            spatial_w,
            spatial_b,
            temporal_w: [t0w, t1w],
            temporal_b: [t0b, t1b],
            fc_w,
            fc_b,
            total: at,
        }
    }

    pub fn n_params(&self) -> usize {
        self.layout().total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_shapes_at_80_samples() {
        let a = Architecture::new(32, 80);
        a.validate().unwrap();
        assert_eq!(a.conv_len(0), 70);
        assert_eq!(a.pooled_len(0), 35);
        assert_eq!(a.conv_len(1), 25);
        assert_eq!(a.pooled_len(1), 12);
        assert_eq!(a.fc_inputs(), 192);
        let expected = 8 * 32 + 8 + 16 * 8 * 11 + 16 + 16 * 16 * 11 + 16 + 192 + 1;
        assert_eq!(a.n_params(), expected);
    }

    #[test]
    fn too_short_input_rejected() {
        assert!(Architecture::new(3, 33).validate().is_err());
        assert!(Architecture::new(3, 34).validate().is_ok());
        assert!(Architecture::new(0, 80).validate().is_err());
    }
}

use serde::{Deserialize, Serialize};

/// Mother function `φ` of a convolution kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mother {
    /// `1_{[-1/2, 1/2]}`.
    #[default]
    Box,
    /// Standard normal density.
    Gaussian,
}

impl Mother {
    pub fn phi(self, t: f64) -> f64 {
        match self {
            Mother::Box => {
                if t.abs() <= 0.5 {
                    1.0
                } else {
                    0.0
                }
            }
            Mother::Gaussian => (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt(),
        }
    }
}

/// `φ((x₁ − x₂)/σ)/σ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvolutionKernel {
    pub sigma: f64,
    #[serde(default)]
    pub mother: Mother,
}

impl ConvolutionKernel {
    pub fn value_at_offset(&self, d: f64) -> f64 {
        self.mother.phi(d / self.sigma) / self.sigma
    }

    pub fn value(&self, x1: f64, x2: f64) -> f64 {
        self.value_at_offset(x1 - x2)
    }
}

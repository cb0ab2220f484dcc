//! Linear convolutional networks: composed circular convolutions with no
//! nonlinearity anywhere.

use crate::error::{shape_err, Result};
use crate::tensor::{circ_conv, ConvTensor, FeatureMap};
use rand::Rng;

/// A stack of circular conv layers applied in order, `layers[0]` first.
#[derive(Debug, Clone)]
pub struct LinearConvNet {
    pub layers: Vec<ConvTensor>,
}

impl LinearConvNet {
    /// Validates the channel chain.
    pub fn new(layers: Vec<ConvTensor>) -> Result<Self> {
        if layers.is_empty() {
            return shape_err("linear conv net needs at least one layer");
        }
        for pair in layers.windows(2) {
            if pair[0].out_channels != pair[1].in_channels {
                return shape_err(format!(
                    "channel chain broken: {} -> {}",
                    pair[0].out_channels, pair[1].in_channels
                ));
            }
        }
        Ok(LinearConvNet { layers })
    }

    /// `widths` lists the channel counts `[c, m_1, ..., m_out]`; entries are
    /// drawn i.i.d. from a centered normal with standard deviation `std`.
    pub fn random(widths: &[usize], half_width: usize, std: f64, rng: &mut impl Rng) -> Result<Self> {
        if widths.len() < 2 {
            return shape_err("need at least input and output widths");
        }
        let layers = widths
            .windows(2)
            .map(|w| ConvTensor::random(w[1], w[0], half_width, std, rng))
            .collect();
        LinearConvNet::new(layers)
    }

    pub fn input_channels(&self) -> usize {
        self.layers[0].in_channels
    }

    pub fn forward(&self, x: &FeatureMap) -> Result<FeatureMap> {
        let mut h = circ_conv(&self.layers[0], x)?;
        for layer in &self.layers[1..] {
            h = circ_conv(layer, &h)?;
        }
        Ok(h)
    }
}

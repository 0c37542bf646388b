//! JSON checkpoint format for [`Mlp`].
//!
//! ```json
//! {"layer_sizes": [3, 256, 1],
//!  "activations": {"hidden": "relu", "output": "identity"},
//!  "weights": [[[...fan_out...], ...fan_in...], ...],
//!  "biases": [[...], ...]}
//! ```
//!
//! Floats are written in shortest round-trip decimal form, so a save/load
//! cycle is bit-exact.

use std::fs;
use std::path::Path;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use super::mlp::{Activation, Mat, Mlp};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Activations {
    hidden: Activation,
    output: Activation,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    layer_sizes: Vec<usize>,
    activations: Activations,
    weights: Vec<Vec<Vec<f64>>>,
    biases: Vec<Vec<f64>>,
}

impl From<&Mlp> for Checkpoint {
    fn from(net: &Mlp) -> Self {
        Checkpoint {
            layer_sizes: net.layer_sizes().to_vec(),
            activations: Activations {
                hidden: net.hidden_activation(),
                output: net.output_activation(),
            },
            weights: net
                .weights()
                .iter()
                .map(|w| w.outer_iter().map(|row| row.to_vec()).collect())
                .collect(),
            biases: net.biases().iter().map(|b| b.to_vec()).collect(),
        }
    }
}

impl TryFrom<Checkpoint> for Mlp {
    type Error = Error;

    fn try_from(ck: Checkpoint) -> Result<Mlp> {
        let mut weights = Vec::with_capacity(ck.weights.len());
        for (l, rows) in ck.weights.into_iter().enumerate() {
            let n_rows = rows.len();
            let n_cols = rows.first().map_or(0, Vec::len);
            if rows.iter().any(|r| r.len() != n_cols) {
                return Err(Error::Architecture(format!("layer {l}: ragged weight rows")));
            }
            let flat: Vec<f64> = rows.into_iter().flatten().collect();
            weights.push(
                Mat::from_shape_vec((n_rows, n_cols), flat)
                    .map_err(|e| Error::Architecture(format!("layer {l}: {e}")))?,
            );
        }
        let biases = ck.biases.into_iter().map(Array1::from_vec).collect();
        let net = Mlp::from_parts(weights, biases, ck.activations.hidden, ck.activations.output)?;
        if net.layer_sizes() != ck.layer_sizes.as_slice() {
            return Err(Error::Architecture(format!(
                "declared layer sizes {:?} but parameters imply {:?}",
                ck.layer_sizes,
                net.layer_sizes()
            )));
        }
        Ok(net)
    }
}

impl Mlp {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&Checkpoint::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Mlp> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        Mlp::try_from(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Mlp> {
        Mlp::from_json(&fs::read_to_string(path)?)
    }
}

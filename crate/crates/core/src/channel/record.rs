//! JSON records for reproducing channel instances and training designs.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use super::{SystemDims, TrainingDesign, TrainingKind, VirtualChannel};
use crate::numerics::ScalarField;
use crate::{Error, Result, C64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRecord {
    pub dims: SystemDims,
    /// Flat indices of the nonzero entries, ascending.
    pub support: Vec<usize>,
    /// Values on the support as `[re, im]`, aligned with `support`.
    pub values: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub t_blocks: usize,
    pub n_t: usize,
    pub kind: TrainingKind,
    pub field: ScalarField,
    pub seed: u64,
    /// Row-major entries as `[re, im]`.
    pub entries: Vec<[f64; 2]>,
}

impl ChannelRecord {
    pub fn from_channel(channel: &VirtualChannel, seed: Option<u64>) -> Self {
        let support = channel.support_indices();
        let values = support.iter().map(|&k| [channel.values[k].re, channel.values[k].im]).collect();
        Self {
            dims: channel.dims,
            support,
            values,
            seed,
        }
    }

    pub fn to_channel(&self) -> Result<VirtualChannel> {
        self.dims.validate()?;
        let n = self.dims.virtual_len();
        if self.support.len() != self.values.len() {
            return Err(Error::invalid("support and values lengths differ"));
        }
        let mut values = DVector::zeros(n);
        let mut support = vec![false; n];
        for (&k, v) in self.support.iter().zip(&self.values) {
            if k >= n {
                return Err(Error::invalid(format!("support index {k} out of range")));
            }
            support[k] = true;
            values[k] = C64::new(v[0], v[1]);
        }
        VirtualChannel::new(self.dims, values, support)
    }
}

impl TrainingRecord {
    pub fn from_training(training: &TrainingDesign) -> Self {
        let s = &training.s_block;
        let entries = (0..s.nrows())
            .flat_map(|r| (0..s.ncols()).map(move |c| [s[(r, c)].re, s[(r, c)].im]))
            .collect();
        Self {
            t_blocks: s.nrows(),
            n_t: s.ncols(),
            kind: training.kind,
            field: training.field,
            seed: training.seed,
            entries,
        }
    }

    pub fn to_training(&self) -> Result<TrainingDesign> {
        if self.entries.len() != self.t_blocks * self.n_t {
            return Err(Error::invalid("training entry count does not match its shape"));
        }
        let s = DMatrix::from_fn(self.t_blocks, self.n_t, |r, c| {
            let e = self.entries[r * self.n_t + c];
            C64::new(e[0], e[1])
        });
        let mut t = TrainingDesign::from_matrix(s, self.kind, self.field)?;
        t.seed = self.seed;
        Ok(t)
    }
}

pub(crate) fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("records serialize");
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

impl ChannelRecord {
    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(self, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }
}

impl TrainingRecord {
    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(self, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }
}

//! WDM channel plan: comb-line assignment, insertion loss, and DEMUX crosstalk.
//!
//! Channels sit on a fixed grid (100 GHz in the demonstrated system) and each
//! takes the comb line nearest its slot center. The DEMUX is modeled by a
//! per-channel insertion loss and a (victim, aggressor) crosstalk suppression
//! matrix; passband shapes are out of scope.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comb::CombLine;
use crate::float::{db_to_linear, real, Real};

/// Default MUX+DEMUX round-trip insertion loss endpoints, dB. Losses are
/// interpolated linearly across channels between these measured extremes.
pub const DEFAULT_INSERTION_LOSS_RANGE_DB: (f64, f64) = (4.7, 5.2);
/// Default crosstalk suppression for adjacent channel pairs, dB; the
/// measured isolation is at least this, so the default is worst case.
pub const DEFAULT_ADJACENT_SUPPRESSION_DB: f64 = 20.0;
/// Default crosstalk suppression for non-adjacent pairs, dB.
pub const DEFAULT_NONADJACENT_SUPPRESSION_DB: f64 = 40.0;

/// 1-based channel identifier (`CH1`, `CH2`, ...).
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct ChannelId(pub u32);

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CH{}", self.0)
    }
}

/// One DEMUX output channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct Channel<R: Real> {
    pub id: ChannelId,
    /// Grid slot center, Hz.
    pub center_frequency_hz: R,
    /// Comb index of the line carried by this channel.
    pub assigned_line_index: i32,
    /// MUX+DEMUX round-trip loss for this channel, dB.
    pub insertion_loss_db: R,
}

/// Channel assignments plus the crosstalk suppression matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct ChannelPlan<R: Real> {
    pub channels: Vec<Channel<R>>,
    pub grid_spacing_hz: R,
    /// `crosstalk_db[victim][aggressor]` suppression in dB; diagonal is 0.
    pub crosstalk_db: Vec<Vec<R>>,
}

#[derive(Debug, Error, PartialEq)]
pub enum WdmError {
    #[error(
        "no comb line within half a comb spacing of slot {slot} \
         (center {center_hz:.3e} Hz, nearest line at {nearest_hz:.3e} Hz)"
    )]
    NoLineInPassband {
        slot: usize,
        center_hz: f64,
        nearest_hz: f64,
    },
    #[error("channels {first} and {second} both select comb line {line_index}")]
    DuplicateAssignment {
        first: ChannelId,
        second: ChannelId,
        line_index: i32,
    },
    #[error("unknown channel {0}")]
    UnknownChannel(ChannelId),
    #[error("invalid channel plan: {0}")]
    Invalid(String),
}

/// Assigns `count` grid slots (spaced `grid_spacing_hz`, starting at
/// `start_frequency_hz`) to the nearest comb lines and fills the default
/// insertion-loss and crosstalk models.
///
/// Fails if a slot has no line within half a comb spacing or two slots pick
/// the same line. Deterministic for fixed inputs.
pub fn assign_channels<R: Real>(
    lines: &[CombLine<R>],
    grid_spacing_hz: R,
    count: usize,
    start_frequency_hz: R,
) -> Result<ChannelPlan<R>, WdmError> {
    if count == 0 {
        return Err(WdmError::Invalid("channel count must be at least 1".into()));
    }
    if lines.is_empty() {
        return Err(WdmError::Invalid("comb line list is empty".into()));
    }
    let mut sorted: Vec<&CombLine<R>> = lines.iter().collect();
    sorted.sort_by_key(|a| a.index);

    // Infer the comb spacing from the grid itself; exact because line
    // frequencies are index-generated.
    let comb_spacing = if sorted.len() >= 2 {
        let first = sorted.first().unwrap();
        let last = sorted.last().unwrap();
        (last.frequency_hz - first.frequency_hz)
            / real::<R>((last.index - first.index) as f64)
    } else {
        grid_spacing_hz
    };
    let half_passband = comb_spacing / real(2.0);

    let mut taken: BTreeMap<i32, ChannelId> = BTreeMap::new();
    let mut channels = Vec::with_capacity(count);
    for slot in 0..count {
        let id = ChannelId(slot as u32 + 1);
        let center = start_frequency_hz + real::<R>(slot as f64) * grid_spacing_hz;
        let nearest = sorted
            .iter()
            .min_by(|a, b| {
                let da = (a.frequency_hz - center).abs();
                let db = (b.frequency_hz - center).abs();
                da.partial_cmp(&db).expect("finite frequencies")
            })
            .unwrap();
        if (nearest.frequency_hz - center).abs() > half_passband {
            return Err(WdmError::NoLineInPassband {
                slot,
                center_hz: center.to_f64().unwrap_or(f64::NAN),
                nearest_hz: nearest.frequency_hz.to_f64().unwrap_or(f64::NAN),
            });
        }
        if let Some(&owner) = taken.get(&nearest.index) {
            return Err(WdmError::DuplicateAssignment {
                first: owner,
                second: id,
                line_index: nearest.index,
            });
        }
        taken.insert(nearest.index, id);
        channels.push(Channel {
            id,
            center_frequency_hz: center,
            assigned_line_index: nearest.index,
            insertion_loss_db: interpolated_insertion_loss(
                slot,
                count,
                DEFAULT_INSERTION_LOSS_RANGE_DB,
            ),
        });
    }

    let crosstalk_db = default_crosstalk_matrix(
        count,
        real(DEFAULT_ADJACENT_SUPPRESSION_DB),
        real(DEFAULT_NONADJACENT_SUPPRESSION_DB),
    );
    Ok(ChannelPlan {
        channels,
        grid_spacing_hz,
        crosstalk_db,
    })
}

/// Linear interpolation of insertion loss across channel indices.
pub fn interpolated_insertion_loss<R: Real>(
    slot: usize,
    count: usize,
    range_db: (f64, f64),
) -> R {
    let (lo, hi) = range_db;
    if count <= 1 {
        return real(lo);
    }
    real(lo + (hi - lo) * slot as f64 / (count - 1) as f64)
}

fn default_crosstalk_matrix<R: Real>(count: usize, adjacent: R, nonadjacent: R) -> Vec<Vec<R>> {
    (0..count)
        .map(|v| {
            (0..count)
                .map(|a| {
                    if v == a {
                        R::zero()
                    } else if v.abs_diff(a) == 1 {
                        adjacent
                    } else {
                        nonadjacent
                    }
                })
                .collect()
        })
        .collect()
}

impl<R: Real> ChannelPlan<R> {
    pub fn channel(&self, id: ChannelId) -> Result<&Channel<R>, WdmError> {
        self.channels
            .iter()
            .find(|c| c.id == id)
            .ok_or(WdmError::UnknownChannel(id))
    }

    fn position(&self, id: ChannelId) -> Result<usize, WdmError> {
        self.channels
            .iter()
            .position(|c| c.id == id)
            .ok_or(WdmError::UnknownChannel(id))
    }

    /// Crosstalk suppression from `aggressor` into `victim`, dB.
    pub fn suppression_db(&self, victim: ChannelId, aggressor: ChannelId) -> Result<R, WdmError> {
        let v = self.position(victim)?;
        let a = self.position(aggressor)?;
        Ok(self.crosstalk_db[v][a])
    }

    /// Overrides one directed crosstalk entry.
    pub fn set_suppression_db(
        &mut self,
        victim: ChannelId,
        aggressor: ChannelId,
        suppression_db: R,
    ) -> Result<(), WdmError> {
        let v = self.position(victim)?;
        let a = self.position(aggressor)?;
        if v == a {
            return Err(WdmError::Invalid(
                "cannot override the diagonal of the crosstalk matrix".into(),
            ));
        }
        self.crosstalk_db[v][a] = suppression_db;
        Ok(())
    }

    /// Rebuilds the whole matrix from adjacent/non-adjacent suppression values.
    pub fn set_uniform_suppression(&mut self, adjacent_db: R, nonadjacent_db: R) {
        self.crosstalk_db =
            default_crosstalk_matrix(self.channels.len(), adjacent_db, nonadjacent_db);
    }

    /// Total relative leaked power into `victim` from every other channel:
    /// `Σ_{a≠v} 10^(−crosstalk[v][a]/10)`.
    pub fn leakage_fraction(&self, victim: ChannelId) -> Result<R, WdmError> {
        let all: Vec<ChannelId> = self.channels.iter().map(|c| c.id).collect();
        self.leakage_fraction_from(victim, &all)
    }

    /// Leakage restricted to a set of active aggressor channels. The victim
    /// itself and unknown ids contribute nothing; aggressors must exist.
    pub fn leakage_fraction_from(
        &self,
        victim: ChannelId,
        aggressors: &[ChannelId],
    ) -> Result<R, WdmError> {
        let v = self.position(victim)?;
        let mut total = R::zero();
        for &a in aggressors {
            if a == victim {
                continue;
            }
            let ai = self.position(a)?;
            total += db_to_linear(-self.crosstalk_db[v][ai]);
        }
        Ok(total)
    }

    pub fn validate(&self) -> Result<(), WdmError> {
        let n = self.channels.len();
        if n == 0 {
            return Err(WdmError::Invalid("plan has no channels".into()));
        }
        if self.crosstalk_db.len() != n || self.crosstalk_db.iter().any(|row| row.len() != n) {
            return Err(WdmError::Invalid(
                "crosstalk matrix shape does not match channel count".into(),
            ));
        }
        for (i, row) in self.crosstalk_db.iter().enumerate() {
            if row[i] != R::zero() {
                return Err(WdmError::Invalid(format!(
                    "crosstalk diagonal entry {i} must be 0"
                )));
            }
            if row.iter().any(|s| *s < R::zero()) {
                return Err(WdmError::Invalid(format!(
                    "crosstalk suppression in row {i} must be non-negative"
                )));
            }
        }
        for pair in self.channels.windows(2) {
            if !(pair[1].center_frequency_hz > pair[0].center_frequency_hz) {
                return Err(WdmError::Invalid(
                    "channel centers must be strictly increasing".into(),
                ));
            }
        }
        let mut seen = BTreeMap::new();
        for c in &self.channels {
            if let Some(prev) = seen.insert(c.assigned_line_index, c.id) {
                return Err(WdmError::DuplicateAssignment {
                    first: prev,
                    second: c.id,
                    line_index: c.assigned_line_index,
                });
            }
        }
        Ok(())
    }
}

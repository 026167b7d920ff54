//! Flip-flop inventory of the modeled accelerator.
//!
//! Every register bit of the datapath is enumerated from the array
//! geometry and filed under one of eight register groups. The canonical
//! order (group, then row, column, chain position, bit) is what uniform
//! fault sampling indexes into, so it must never change between builds.

use std::fmt;

use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegGroup {
    /// Input skew chain in front of the first MAC column (8-bit).
    SaRegFfchainH,
    /// Stationary weight registers (8-bit).
    WReg,
    /// Activation registers between horizontally adjacent MACs (8-bit).
    SaRegH,
    /// Partial-sum registers between vertically adjacent MACs (32-bit).
    SaRegV,
    /// Output deskew chain below the last MAC row (32-bit).
    SaRegFfchainV,
    AccumReg,
    RoundReg,
    NlfReg,
}

impl RegGroup {
    pub const ALL: [RegGroup; 8] = [
        RegGroup::SaRegFfchainH,
        RegGroup::WReg,
        RegGroup::SaRegH,
        RegGroup::SaRegV,
        RegGroup::SaRegFfchainV,
        RegGroup::AccumReg,
        RegGroup::RoundReg,
        RegGroup::NlfReg,
    ];

    pub const fn index(self) -> usize {
        self as usize
    }

    pub const fn width(self) -> u8 {
        match self {
            RegGroup::SaRegV | RegGroup::SaRegFfchainV | RegGroup::AccumReg => 32,
            _ => 8,
        }
    }

    pub const fn name(self) -> &'static str {
        match self {
            RegGroup::SaRegFfchainH => "sa-reg-ffchain-h",
            RegGroup::WReg => "w-reg",
            RegGroup::SaRegH => "sa-reg-h",
            RegGroup::SaRegV => "sa-reg-v",
            RegGroup::SaRegFfchainV => "sa-reg-ffchain-v",
            RegGroup::AccumReg => "accum-reg",
            RegGroup::RoundReg => "round-reg",
            RegGroup::NlfReg => "nlf-reg",
        }
    }

    /// Groups located after the rounding block.
    pub const fn is_post_rounding(self) -> bool {
        matches!(self, RegGroup::RoundReg | RegGroup::NlfReg)
    }
}

impl fmt::Display for RegGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for RegGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RegGroup::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown register group '{s}'")))
    }
}

/// One register bit. Coordinates that do not apply to a group are 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FlipFlopId {
    pub group: RegGroup,
    pub row: usize,
    pub col: usize,
    pub chain_pos: usize,
    pub bit: u8,
}

/// Array dimensions plus the register layout derived from them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Geometry {
    pub rows: usize,
    pub cols: usize,
}

impl Geometry {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::ZeroDimension { rows, cols });
        }
        Ok(Self { rows, cols })
    }

    /// Number of registers (not bits) in a group.
    pub fn registers(&self, group: RegGroup) -> usize {
        let (r, c) = (self.rows, self.cols);
        match group {
            RegGroup::SaRegFfchainH => r * (r + 1) / 2,
            RegGroup::WReg => r * c,
            RegGroup::SaRegH => r * (c - 1),
            RegGroup::SaRegV => (r - 1) * c,
            RegGroup::SaRegFfchainV => c * (c + 1) / 2,
            RegGroup::AccumReg | RegGroup::RoundReg | RegGroup::NlfReg => c,
        }
    }

    /// Start of row `row`'s input skew chain (length `row + 1`).
    #[inline]
    pub fn hchain_base(row: usize) -> usize {
        row * (row + 1) / 2
    }

    /// Start of column `col`'s deskew chain (length `cols - col`).
    #[inline]
    pub fn vchain_base(&self, col: usize) -> usize {
        // sum of (cols - c') for c' < col
        col * self.cols - col * (col.saturating_sub(1)) / 2
    }

    /// Flat register slot of `(row, col, chain_pos)` inside `group`.
    pub fn slot(&self, group: RegGroup, row: usize, col: usize, chain_pos: usize) -> Option<usize> {
        let (r, c) = (self.rows, self.cols);
        match group {
            RegGroup::SaRegFfchainH => (row < r && col == 0 && chain_pos <= row)
                .then(|| Self::hchain_base(row) + chain_pos),
            RegGroup::WReg => (row < r && col < c && chain_pos == 0).then(|| row * c + col),
            RegGroup::SaRegH => {
                (row < r && col + 1 < c && chain_pos == 0).then(|| row * (c - 1) + col)
            }
            RegGroup::SaRegV => (row + 1 < r && col < c && chain_pos == 0).then(|| row * c + col),
            RegGroup::SaRegFfchainV => (row == 0 && col < c && chain_pos < c - col)
                .then(|| self.vchain_base(col) + chain_pos),
            RegGroup::AccumReg | RegGroup::RoundReg | RegGroup::NlfReg => {
                (row == 0 && col < c && chain_pos == 0).then_some(col)
            }
        }
    }

    /// Register slot of a flip-flop, validating the bit index as well.
    pub fn locate(&self, ff: &FlipFlopId) -> Result<usize> {
        self.slot(ff.group, ff.row, ff.col, ff.chain_pos)
            .filter(|_| ff.bit < ff.group.width())
            .ok_or(Error::InvalidFlipFlop {
                group: ff.group,
                row: ff.row,
                col: ff.col,
                chain_pos: ff.chain_pos,
                bit: ff.bit,
            })
    }

    /// Inverse of [`Geometry::slot`].
    pub fn coords(&self, group: RegGroup, slot: usize) -> (usize, usize, usize) {
        let c = self.cols;
        match group {
            RegGroup::SaRegFfchainH => {
                let mut row = 0;
                while Self::hchain_base(row + 1) <= slot {
                    row += 1;
                }
                (row, 0, slot - Self::hchain_base(row))
            }
            RegGroup::WReg | RegGroup::SaRegV => (slot / c, slot % c, 0),
            RegGroup::SaRegH => (slot / (c - 1), slot % (c - 1), 0),
            RegGroup::SaRegFfchainV => {
                let mut col = 0;
                while col + 1 < c && self.vchain_base(col + 1) <= slot {
                    col += 1;
                }
                (0, col, slot - self.vchain_base(col))
            }
            RegGroup::AccumReg | RegGroup::RoundReg | RegGroup::NlfReg => (0, slot, 0),
        }
    }
}

/// Bit counts per group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub struct RegistryCensus {
    bits: [u64; 8],
}

impl RegistryCensus {
    pub fn from_geometry(geometry: &Geometry) -> Self {
        let mut bits = [0u64; 8];
        for g in RegGroup::ALL {
            bits[g.index()] = geometry.registers(g) as u64 * g.width() as u64;
        }
        Self { bits }
    }

    pub fn bits(&self, group: RegGroup) -> u64 {
        self.bits[group.index()]
    }

    pub fn total(&self) -> u64 {
        self.bits.iter().sum()
    }

    pub fn ratio(&self, group: RegGroup) -> f64 {
        self.bits(group) as f64 / self.total() as f64
    }
}

impl Serialize for RegistryCensus {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(9))?;
        for g in RegGroup::ALL {
            map.serialize_entry(g.name(), &self.bits(g))?;
        }
        map.serialize_entry("total", &self.total())?;
        map.end()
    }
}

/// Immutable, canonically ordered list of every flip-flop bit.
#[derive(Debug, Clone)]
pub struct Registry {
    geometry: Geometry,
    census: RegistryCensus,
    /// First canonical index of each group, plus the total at the end.
    offsets: [usize; 9],
    ids: Vec<FlipFlopId>,
}

impl Registry {
    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn census(&self) -> &RegistryCensus {
        &self.census
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<FlipFlopId> {
        self.ids.get(index).copied()
    }

    pub fn ids(&self) -> &[FlipFlopId] {
        &self.ids
    }

    /// Canonical index range covered by a group.
    pub fn group_range(&self, group: RegGroup) -> std::ops::Range<usize> {
        self.offsets[group.index()]..self.offsets[group.index() + 1]
    }

    /// Canonical index of `ff`, or `None` if it is not part of this array.
    pub fn index_of(&self, ff: &FlipFlopId) -> Option<usize> {
        if ff.bit >= ff.group.width() {
            return None;
        }
        let slot = self.geometry.slot(ff.group, ff.row, ff.col, ff.chain_pos)?;
        Some(self.offsets[ff.group.index()] + slot * ff.group.width() as usize + ff.bit as usize)
    }

    pub fn validate(&self, ff: &FlipFlopId) -> Result<usize> {
        self.index_of(ff).ok_or(Error::InvalidFlipFlop {
            group: ff.group,
            row: ff.row,
            col: ff.col,
            chain_pos: ff.chain_pos,
            bit: ff.bit,
        })
    }
}

pub fn build_registry(rows: usize, cols: usize) -> Result<Registry> {
    let geometry = Geometry::new(rows, cols)?;
    let census = RegistryCensus::from_geometry(&geometry);
    let mut ids = Vec::with_capacity(census.total() as usize);
    let mut offsets = [0usize; 9];
    for g in RegGroup::ALL {
        offsets[g.index()] = ids.len();
        for slot in 0..geometry.registers(g) {
            let (row, col, chain_pos) = geometry.coords(g, slot);
            for bit in 0..g.width() {
                ids.push(FlipFlopId {
                    group: g,
                    row,
                    col,
                    chain_pos,
                    bit,
                });
            }
        }
    }
    offsets[8] = ids.len();
    Ok(Registry {
        geometry,
        census,
        offsets,
        ids,
    })
}

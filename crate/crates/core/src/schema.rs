//! Fixed variable layout of the emulator.
//!
//! 32 inputs (8 environment-only variables followed by the 24 aerosol masses and
//! number concentrations) and 28 outputs (24 tendencies of the aerosol variables
//! plus 4 water contents predicted as full values). The layout is compiled in;
//! files and checkpoints carry [`schema_hash`] so that data produced under a
//! different layout is rejected on load.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const N_INPUTS: usize = 32;
pub const N_OUTPUTS: usize = 28;
/// Outputs `0..N_TENDENCIES` are tendencies paired with input `k + PAIR_OFFSET`.
pub const N_TENDENCIES: usize = 24;
pub const PAIR_OFFSET: usize = 8;
pub const SCHEMA_VERSION: u32 = 1;

pub const INPUT_NAMES: [&str; N_INPUTS] = [
    "pressure",
    "temperature",
    "rel_humidity",
    "ionization_rate",
    "cloud_cover",
    "boundary_layer",
    "forest_fraction",
    "h2so4_prod_rate",
    "h2so4_mass",
    "so4_ns",
    "so4_ks",
    "so4_as",
    "so4_cs",
    "bc_ks",
    "bc_as",
    "bc_cs",
    "bc_ki",
    "oc_ks",
    "oc_as",
    "oc_cs",
    "oc_ki",
    "du_as",
    "du_cs",
    "du_ai",
    "du_ci",
    "num_ns",
    "num_ks",
    "num_as",
    "num_cs",
    "num_ki",
    "num_ai",
    "num_ci",
];

pub const OUTPUT_NAMES: [&str; N_OUTPUTS] = [
    "d_h2so4_mass",
    "d_so4_ns",
    "d_so4_ks",
    "d_so4_as",
    "d_so4_cs",
    "d_bc_ks",
    "d_bc_as",
    "d_bc_cs",
    "d_bc_ki",
    "d_oc_ks",
    "d_oc_as",
    "d_oc_cs",
    "d_oc_ki",
    "d_du_as",
    "d_du_cs",
    "d_du_ai",
    "d_du_ci",
    "d_num_ns",
    "d_num_ks",
    "d_num_as",
    "d_num_cs",
    "d_num_ki",
    "d_num_ai",
    "d_num_ci",
    "water_ns",
    "water_ks",
    "water_as",
    "water_cs",
];

pub const INPUT_UNITS: [&str; N_INPUTS] = [
    "Pa", "K", "1", "1", "1", "1", "1", "cm-3 s-1", "ug m-3", "ug m-3", "ug m-3", "ug m-3", "ug m-3", "ug m-3",
    "ug m-3", "ug m-3", "ug m-3", "ug m-3", "ug m-3", "ug m-3", "ug m-3", "ug m-3", "ug m-3", "ug m-3", "ug m-3",
    "cm-3", "cm-3", "cm-3", "cm-3", "cm-3", "cm-3", "cm-3",
];

pub const OUTPUT_UNITS: [&str; N_OUTPUTS] = [
    "ug m-3", "ug m-3", "ug m-3", "ug m-3", "ug m-3", "ug m-3", "ug m-3", "ug m-3", "ug m-3", "ug m-3", "ug m-3",
    "ug m-3", "ug m-3", "ug m-3", "ug m-3", "ug m-3", "ug m-3", "cm-3", "cm-3", "cm-3", "cm-3", "cm-3", "cm-3", "cm-3",
    "ug m-3", "ug m-3", "ug m-3", "ug m-3",
];

/// Conserved aerosol species. Sea salt is not modelled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Species {
    /// Sulfate, including the H2SO4 gas precursor.
    #[serde(rename = "SO4")]
    So4,
    #[serde(rename = "BC")]
    Bc,
    #[serde(rename = "OC")]
    Oc,
    #[serde(rename = "DU")]
    Du,
}

impl Species {
    pub const ALL: [Species; 4] = [Species::So4, Species::Bc, Species::Oc, Species::Du];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Output indices `I_s` whose tendencies must sum to zero.
    pub fn output_indices(self) -> &'static [usize] {
        match self {
            Species::So4 => &[0, 1, 2, 3, 4],
            Species::Bc => &[5, 6, 7, 8],
            Species::Oc => &[9, 10, 11, 12],
            Species::Du => &[13, 14, 15, 16],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Species::So4 => "SO4",
            Species::Bc => "BC",
            Species::Oc => "OC",
            Species::Du => "DU",
        }
    }
}

impl fmt::Display for Species {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Species {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "SO4" => Ok(Species::So4),
            "BC" => Ok(Species::Bc),
            "OC" => Ok(Species::Oc),
            "DU" => Ok(Species::Du),
            other => Err(Error::Schema(format!("unknown species `{other}`"))),
        }
    }
}

/// Output groups used to weight the positivity penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputGroup {
    So4,
    Bc,
    Oc,
    Du,
    Num,
    Water,
}

impl OutputGroup {
    pub fn index(self) -> usize {
        self as usize
    }
}

pub fn output_group(k: usize) -> OutputGroup {
    match k {
        0..=4 => OutputGroup::So4,
        5..=8 => OutputGroup::Bc,
        9..=12 => OutputGroup::Oc,
        13..=16 => OutputGroup::Du,
        17..=23 => OutputGroup::Num,
        _ => OutputGroup::Water,
    }
}

pub fn species_output_indices(species: &str) -> Result<&'static [usize]> {
    Ok(species.parse::<Species>()?.output_indices())
}

/// Input index holding the full value whose tendency is output `k`, or `None`
/// for the water outputs.
pub fn paired_input(k: usize) -> Result<Option<usize>> {
    match k {
        0..N_TENDENCIES => Ok(Some(k + PAIR_OFFSET)),
        N_TENDENCIES..N_OUTPUTS => Ok(None),
        _ => Err(Error::Schema(format!("output index {k} out of range 0..{N_OUTPUTS}"))),
    }
}

pub fn is_water_output(k: usize) -> bool {
    (N_TENDENCIES..N_OUTPUTS).contains(&k)
}

/// Hex SHA-256 over the canonical description of the layout.
pub fn schema_hash() -> &'static str {
    static HASH: OnceLock<String> = OnceLock::new();
    HASH.get_or_init(|| {
        let mut h = Sha256::new();
        h.update(format!("aeromu-schema v{SCHEMA_VERSION}\n"));
        for (name, unit) in INPUT_NAMES.iter().zip(INPUT_UNITS) {
            h.update(format!("in {name} {unit}\n"));
        }
        for (name, unit) in OUTPUT_NAMES.iter().zip(OUTPUT_UNITS) {
            h.update(format!("out {name} {unit}\n"));
        }
        for s in Species::ALL {
            h.update(format!("species {} {:?}\n", s, s.output_indices()));
        }
        hex(&h.finalize())
    })
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// CSV header of a dataset: input names followed by output names.
pub fn csv_header() -> Vec<&'static str> {
    INPUT_NAMES.iter().chain(OUTPUT_NAMES.iter()).copied().collect()
}

pub fn check_schema_hash(found: &str) -> Result<()> {
    if found == schema_hash() {
        Ok(())
    } else {
        Err(Error::Schema(format!(
            "schema hash mismatch: file has {found}, this build expects {}",
            schema_hash()
        )))
    }
}

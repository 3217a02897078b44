//! Shipped experiment configurations.

use crate::config::{parse_config, ExperimentConfig};
use crate::error::{Error, Result};

pub const DEPHASING_1MODE: &str = include_str!("../presets/dephasing-1mode.conf");
pub const DEPHASING_3MODE_FINITE_T: &str = include_str!("../presets/dephasing-3mode-finite-T.conf");
pub const RABI_2LEVEL_BORN: &str = include_str!("../presets/rabi-2level-born.conf");
pub const MARKOV_COMB: &str = include_str!("../presets/markov-comb.conf");

/// `(name, text)` for every preset.
pub const ALL: [(&str, &str); 4] = [
    ("dephasing-1mode", DEPHASING_1MODE),
    ("dephasing-3mode-finite-T", DEPHASING_3MODE_FINITE_T),
    ("rabi-2level-born", RABI_2LEVEL_BORN),
    ("markov-comb", MARKOV_COMB),
];

pub fn text(name: &str) -> Option<&'static str> {
    ALL.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn load(name: &str) -> Result<ExperimentConfig> {
    let text = text(name).ok_or_else(|| Error::InvalidParameter(format!("no preset named `{name}`")))?;
    parse_config(text)
}

//! Mode-table configuration files.
//!
//! ```json
//! { "packet_bits": 1080,
//!   "modes": [ { "index": 1, "rate_bits_per_symbol": 0.5,
//!                "a": 274.7229, "g": 7.9932, "cutoff_db": -1.5331 } ] }
//! ```
//!
//! `cutoff_db` is converted to linear SNR on load. `note` and per-mode
//! `label` are optional free text.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::channel::{db_to_linear, linear_to_db, AmcMode, ModeTable};
use crate::error::{Error, Result};

/// The bundled HIPERLAN/2 table.
pub const HIPERLAN2_JSON: &str = include_str!("../data/hiperlan2.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeEntry {
    pub index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub rate_bits_per_symbol: f64,
    pub a: f64,
    pub g: f64,
    pub cutoff_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeTableFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub packet_bits: u32,
    pub modes: Vec<ModeEntry>,
}

impl ModeTableFile {
    pub fn into_table(self) -> Result<ModeTable> {
        let modes = self
            .modes
            .iter()
            .map(|e| {
                AmcMode::new(
                    e.index,
                    e.rate_bits_per_symbol,
                    e.a,
                    e.g,
                    db_to_linear(e.cutoff_db),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        ModeTable::new(modes, self.packet_bits)
    }

    pub fn from_table(table: &ModeTable) -> Self {
        ModeTableFile {
            note: None,
            packet_bits: table.packet_bits(),
            modes: table
                .modes()
                .iter()
                .map(|m| ModeEntry {
                    index: m.index,
                    label: None,
                    rate_bits_per_symbol: m.rate,
                    a: m.fit_a,
                    g: m.fit_g,
                    cutoff_db: linear_to_db(m.cutoff),
                })
                .collect(),
        }
    }
}

pub fn parse_mode_table(text: &str) -> Result<ModeTable> {
    let file: ModeTableFile =
        serde_json::from_str(text).map_err(|e| Error::parse("mode table", &e))?;
    file.into_table()
}

pub fn load_mode_table(path: impl AsRef<Path>) -> Result<ModeTable> {
    load_json::<ModeTableFile>(path, "mode table")?.into_table()
}

/// Reads and deserializes a JSON file, reporting the path and the failing
/// line on error.
pub fn load_json<T: DeserializeOwned>(path: impl AsRef<Path>, what: &str) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::File {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::parse(format!("{what} {}", path.display()), &e))
}

pub fn hiperlan2() -> ModeTable {
    parse_mode_table(HIPERLAN2_JSON).expect("bundled mode table is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_table_loads() {
        let t = hiperlan2();
        assert_eq!(t.len(), 6);
        assert_eq!(t.packet_bits(), 1080);
        assert_eq!(t.rates(), vec![0.5, 1.0, 1.5, 2.25, 3.0, 4.5]);
        // transcribed cutoffs sit on ln(a)/g to within the dB rounding
        for m in t.modes() {
            let continuity = m.fit_a.ln() / m.fit_g;
            assert!(
                (linear_to_db(continuity) - linear_to_db(m.cutoff)).abs() < 5e-3,
                "{m:?}"
            );
        }
    }

    #[test]
    fn parse_error_reports_position() {
        let err =
            parse_mode_table("{\n  \"packet_bits\": 1080,\n  \"modes\": [ oops ]\n}").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn validation_names_the_field() {
        let text = r#"{ "packet_bits": 1080, "modes": [
            { "index": 1, "rate_bits_per_symbol": -1.0, "a": 1.0, "g": 1.0, "cutoff_db": 0.0 } ] }"#;
        let err = parse_mode_table(text).unwrap_err().to_string();
        assert!(err.contains("modes[1].rate"), "{err}");
    }
}

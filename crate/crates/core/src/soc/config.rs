// SPDX-License-Identifier: Apache-2.0

//! Scenario configuration, read from JSON. Paths are relative to the
//! configuration file. Numbers may be JSON integers or `"0x..."` strings.

use std::path::PathBuf;

use serde::{Deserialize, Deserializer};

use crate::ident::Identifier;
use crate::peripherals::MemRegion;

/// A 32-bit value written either as an integer or a hex string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Word(pub u32);

impl<'de> Deserialize<'de> for Word {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Int(u64),
            Str(String),
        }
        let v = match Repr::deserialize(d)? {
            Repr::Int(v) => v,
            Repr::Str(s) => {
                let t = s.trim();
                let parsed = match t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
                    Some(h) => u64::from_str_radix(&h.replace('_', ""), 16),
                    None => t.parse(),
                };
                parsed.map_err(|e| serde::de::Error::custom(format!("bad number `{s}`: {e}")))?
            }
        };
        u32::try_from(v)
            .map(Word)
            .map_err(|_| serde::de::Error::custom(format!("{v:#x} does not fit in 32 bits")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    SecureBoot,
    Trustlet,
    #[default]
    Plain,
}

/// Something placed in memory before the first tick, bypassing the
/// firewalls.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Preload {
    Words {
        addr: Word,
        words: Vec<Word>,
    },
    /// Assembled at load time; placed at the program's origin unless `addr`
    /// is given.
    Asm {
        file: PathBuf,
        #[serde(default)]
        addr: Option<Word>,
    },
    /// A trustlet image's memory blob, at its load base unless `addr` is
    /// given. With `count_prefix` the blob is preceded by its word count.
    Trustlet {
        file: PathBuf,
        #[serde(default)]
        addr: Option<Word>,
        #[serde(default)]
        count_prefix: bool,
    },
    Raw {
        file: PathBuf,
        addr: Word,
    },
}

/// Monitor commands run as the owner while building the machine.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialClaim {
    pub device: String,
    #[serde(default)]
    pub allowlist: Option<Vec<Identifier>>,
    #[serde(default)]
    pub bind: Option<Identifier>,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UartInput {
    pub tick: u64,
    pub data: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Expect {
    /// Exact UART output.
    #[serde(default)]
    pub uart: Option<String>,
    /// Text the UART output must contain.
    #[serde(default)]
    pub uart_contains: Option<String>,
    #[serde(default)]
    pub owner: Option<Identifier>,
}

/// Initial reset lines; `true` holds the core in reset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ResetLines {
    pub ree: bool,
    pub rvscp: bool,
}

fn default_owner() -> Identifier {
    Identifier::new(1, 1, 0)
}

fn default_slots() -> Vec<u8> {
    vec![0]
}

fn default_timeout() -> u64 {
    crate::secmon::DEFAULT_TIMEOUT
}

fn default_quantum() -> u32 {
    crate::cpu::sched::DEFAULT_QUANTUM
}

fn default_max_ticks() -> u64 {
    2_000_000
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SocConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub scenario: Scenario,
    #[serde(default = "default_max_ticks")]
    pub max_ticks: u64,
    #[serde(default = "default_owner")]
    pub owner: Identifier,
    #[serde(default = "default_timeout")]
    pub sm_timeout: u64,
    #[serde(default = "default_quantum")]
    pub quantum: u32,
    /// Secure-core slots that run after reset.
    #[serde(default = "default_slots")]
    pub slots: Vec<u8>,
    #[serde(default)]
    pub reset: ResetLines,
    #[serde(default)]
    pub reset_notice_ticks: Option<u32>,
    #[serde(default)]
    pub ree_enabled: Option<bool>,
    #[serde(default)]
    pub preload: Vec<Preload>,
    #[serde(default)]
    pub sd_image: Option<PathBuf>,
    #[serde(default)]
    pub uart_rx: Vec<UartInput>,
    #[serde(default)]
    pub initial: Vec<InitialClaim>,
    #[serde(default)]
    pub mpu_regions: Vec<MemRegion>,
    #[serde(default)]
    pub expect: Expect,
}

impl SocConfig {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// REE runs unless disabled; a plain secure-core scenario usually turns
    /// it off.
    pub fn ree_enabled(&self) -> bool {
        self.ree_enabled.unwrap_or(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_and_full() {
        let c = SocConfig::from_json("{}").unwrap();
        assert_eq!(c.owner, Identifier::new(1, 1, 0));
        assert_eq!(c.slots, vec![0]);
        assert_eq!(c.scenario, Scenario::Plain);

        let c = SocConfig::from_json(
            r#"{
              "scenario": "trustlet",
              "owner": "0x0000",
              "slots": [1],
              "reset": {"ree": false, "rvscp": true},
              "preload": [
                {"kind": "words", "addr": "0x80000000", "words": [1, "0x13"]},
                {"kind": "trustlet", "file": "t.hvt", "addr": 2147483648, "count_prefix": true}
              ],
              "initial": [{"device": "mpu", "allowlist": ["0x0000"], "bind": {"core": 0}}],
              "mpu_regions": [{"index": 0, "base": 2147483648, "length": 4096, "allowed": ["0x0000"]}],
              "expect": {"uart": "hi\n"}
            }"#,
        )
        .unwrap();
        assert_eq!(c.scenario, Scenario::Trustlet);
        assert_eq!(
            c.preload[0],
            Preload::Words {
                addr: Word(0x8000_0000),
                words: vec![Word(1), Word(0x13)]
            }
        );
        assert_eq!(c.initial[0].bind, Some(Identifier::new(0, 0, 0)));
        assert!(c.mpu_regions[0].enabled);
    }

    #[test]
    fn rejects_bad_numbers_and_fields() {
        assert!(SocConfig::from_json(r#"{"preload":[{"kind":"words","addr":"0x1_0000_0000","words":[]}]}"#).is_err());
        assert!(SocConfig::from_json(r#"{"bogus": 1}"#).is_err());
    }
}

use std::fmt;

use super::config::TrainConfig;
use super::train::{train, TrainOutcome};
use crate::error::{Error, Result};
use crate::synthdata::Dataset;

/// One component switched off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Concatenation and a linear classifier replace polynomial fusion.
    NoSpf,
    /// One projection per order shared by all modalities, no gates.
    NoMsp,
    /// Fixed uniform task weights.
    NoPgm,
    NoMae,
    NoIae,
    NoL2,
    NoL3,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::NoSpf,
        Variant::NoMsp,
        Variant::NoPgm,
        Variant::NoMae,
        Variant::NoIae,
        Variant::NoL2,
        Variant::NoL3,
    ];

    /// Accepts `w/o SPF`, `wo_spf`, `no-spf`, `spf` and similar spellings.
    pub fn parse(name: &str) -> Result<Self> {
        let key: String = name
            .chars()
            .filter(char::is_ascii_alphanumeric)
            .collect::<String>()
            .to_ascii_lowercase();
        let core = key
            .strip_prefix("wo")
            .or_else(|| key.strip_prefix("no"))
            .or_else(|| key.strip_prefix("without"))
            .unwrap_or(&key);
        match core {
            "spf" => Ok(Variant::NoSpf),
            "msp" => Ok(Variant::NoMsp),
            "pgm" => Ok(Variant::NoPgm),
            "mae" => Ok(Variant::NoMae),
            "iae" => Ok(Variant::NoIae),
            "l2" => Ok(Variant::NoL2),
            "l3" => Ok(Variant::NoL3),
            _ => Err(Error::UnknownVariant(name.to_string())),
        }
    }

    pub fn apply(self, config: &TrainConfig) -> TrainConfig {
        let mut c = config.clone();
        match self {
            Variant::NoSpf => c.spf_on = false,
            Variant::NoMsp => c.msp_on = false,
            Variant::NoPgm => c.pgm_on = false,
            Variant::NoMae => c.mae_on = false,
            Variant::NoIae => c.iae_on = false,
            Variant::NoL2 => c.use_l2 = false,
            Variant::NoL3 => c.use_l3 = false,
        }
        c
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Variant::NoSpf => "w/o SPF",
            Variant::NoMsp => "w/o MSP",
            Variant::NoPgm => "w/o PGM",
            Variant::NoMae => "w/o MAE",
            Variant::NoIae => "w/o IAE",
            Variant::NoL2 => "w/o L2",
            Variant::NoL3 => "w/o L3",
        };
        f.write_str(s)
    }
}

/// Trains the named variant of `config`.
pub fn ablate(config: &TrainConfig, variant: &str, train_set: &Dataset, eval_set: &Dataset) -> Result<TrainOutcome> {
    train(&Variant::parse(variant)?.apply(config), train_set, eval_set)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_spellings() {
        assert_eq!(Variant::parse("w/o SPF").unwrap(), Variant::NoSpf);
        assert_eq!(Variant::parse("wo_l3").unwrap(), Variant::NoL3);
        assert_eq!(Variant::parse("no-pgm").unwrap(), Variant::NoPgm);
        assert!(Variant::parse("w/o L₂").is_err());
        assert!(matches!(Variant::parse("w/o XYZ"), Err(Error::UnknownVariant(_))));
        for v in Variant::ALL {
            assert_eq!(Variant::parse(&v.to_string()).unwrap(), v);
        }
    }

    #[test]
    fn flags_follow_variant() {
        let base = TrainConfig::desk();
        assert!(!Variant::NoSpf.apply(&base).spf_on);
        assert!(!Variant::NoMsp.apply(&base).msp_on);
        assert!(!Variant::NoL2.apply(&base).use_l2);
        assert_eq!(Variant::NoPgm.apply(&base), TrainConfig { pgm_on: false, ..base });
    }
}

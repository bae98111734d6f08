use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::numeric::AdamConfig;
use crate::spf::SpfConfig;
use crate::synthdata::GenConfig;

/// Environment variable that replaces the configured seed.
pub const SEED_ENV: &str = "CSS_SEED";

/// Every knob of a training run. Serialized flat; every field is required.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub d_model: usize,
    pub heads: usize,
    pub d_ff: usize,
    pub order: usize,
    pub rank: usize,
    pub n_classes: usize,
    pub d_text: usize,
    pub d_audio: usize,
    pub d_visual: usize,
    pub n_speakers: usize,
    pub max_len: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub temperature: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub pgm_on: bool,
    pub spf_on: bool,
    pub mae_on: bool,
    pub iae_on: bool,
    pub msp_on: bool,
    pub use_l2: bool,
    pub use_l3: bool,
    /// Let the distillation loss update the fused branch as well.
    pub teacher_grad: bool,
    /// Collect task gradients but apply uniform weights.
    pub pgm_pin_uniform: bool,
    pub train_data: Option<String>,
    /// When absent, the last `eval_fraction` of the training file is held out.
    pub eval_data: Option<String>,
    pub eval_fraction: f64,
    pub out_dir: Option<String>,
}

impl TrainConfig {
    /// Desk-scale profile: small enough for minutes-long runs on one core.
    pub fn desk() -> Self {
        Self {
            d_model: 32,
            heads: 4,
            d_ff: 64,
            order: 3,
            rank: 8,
            n_classes: 4,
            d_text: 8,
            d_audio: 8,
            d_visual: 8,
            n_speakers: 4,
            max_len: 12,
            lr: 2e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-5,
            dropout: 0.1,
            temperature: 1.0,
            epochs: 20,
            batch_size: 16,
            seed: 0,
            pgm_on: true,
            spf_on: true,
            mae_on: true,
            iae_on: true,
            msp_on: true,
            use_l2: true,
            use_l3: true,
            teacher_grad: false,
            pgm_pin_uniform: false,
            train_data: None,
            eval_data: None,
            eval_fraction: 0.2,
            out_dir: None,
        }
    }

    /// Larger profile for six-class dyadic dialogues.
    pub fn iemocap_like() -> Self {
        Self {
            d_model: 1024,
            heads: 8,
            d_ff: 1024,
            order: 3,
            rank: 16,
            n_classes: 6,
            d_text: 16,
            d_audio: 16,
            d_visual: 16,
            n_speakers: 2,
            max_len: 110,
            lr: 1e-4,
            dropout: 0.5,
            temperature: 1.0,
            batch_size: 32,
            epochs: 50,
            ..Self::desk()
        }
    }

    /// Larger profile for seven-class multi-party dialogues.
    pub fn meld_like() -> Self {
        Self {
            order: 4,
            n_classes: 7,
            n_speakers: 9,
            max_len: 33,
            lr: 5e-6,
            temperature: 4.0,
            ..Self::iemocap_like()
        }
    }

    pub fn profile(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "iemocap_like" | "iemocap-like" => Ok(Self::iemocap_like()),
            "meld_like" | "meld-like" => Ok(Self::meld_like()),
            _ => Err(Error::Config(format!("unknown profile {name:?}"))),
        }
    }

    pub fn d_in(&self) -> [usize; 3] {
        [self.d_text, self.d_audio, self.d_visual]
    }

    pub fn encoder(&self) -> EncoderConfig {
        EncoderConfig {
            d_in: self.d_in(),
            d_model: self.d_model,
            heads: self.heads,
            d_ff: self.d_ff,
            n_speakers: self.n_speakers,
            mae_on: self.mae_on,
            iae_on: self.iae_on,
            dropout: self.dropout,
        }
    }

    pub fn spf(&self) -> SpfConfig {
        SpfConfig {
            d_model: self.d_model,
            order: self.order,
            rank: self.rank,
            n_classes: self.n_classes,
            msp_on: self.msp_on,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }

    /// Generator settings matching this model's input layout.
    pub fn gen_config(&self, n_dialogues: usize, noise: f64, context_copy_prob: f64, seed: u64) -> GenConfig {
        GenConfig {
            n_dialogues,
            max_len: self.max_len,
            n_speakers: self.n_speakers,
            d_in: self.d_in(),
            n_classes: self.n_classes,
            noise,
            context_copy_prob,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.d_model == 0 || self.heads == 0 || !self.d_model.is_multiple_of(self.heads) {
            return bad(format!("d_model {} must be a positive multiple of heads {}", self.d_model, self.heads));
        }
        if self.order == 0 || self.rank == 0 || self.d_ff == 0 {
            return bad("order, rank and d_ff must be positive".into());
        }
        if self.n_classes < 2 || self.n_speakers == 0 || self.max_len == 0 || self.batch_size == 0 {
            return bad("n_classes >= 2 and positive n_speakers, max_len, batch_size required".into());
        }
        if self.d_in().contains(&0) {
            return bad("input widths must be positive".into());
        }
        if !(self.temperature > 0.0) {
            return bad(format!("temperature must be positive, got {}", self.temperature));
        }
        if !(0.0..1.0).contains(&self.dropout) || !(0.0..1.0).contains(&self.eval_fraction) {
            return bad("dropout and eval_fraction must lie in [0, 1)".into());
        }
        crate::numeric::Adam::new(self.adam()).map(|_| ()).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: Self = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string_pretty(self)? + "\n").map_err(|e| Error::io(path, e))
    }

    /// Applies `CSS_SEED` when it is set.
    pub fn with_env_seed(mut self) -> Result<Self> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?;
        }
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_validate() {
        for name in ["desk", "iemocap_like", "meld_like"] {
            TrainConfig::profile(name).unwrap().validate().unwrap();
        }
        let meld = TrainConfig::meld_like();
        assert_eq!((meld.order, meld.temperature, meld.lr), (4, 4.0, 5e-6));
        let iem = TrainConfig::iemocap_like();
        assert_eq!((iem.order, iem.temperature, iem.lr, iem.rank, iem.heads), (3, 1.0, 1e-4, 16, 8));
    }

    #[test]
    fn json_round_trip_and_strictness() {
        let c = TrainConfig::desk();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<TrainConfig>(&text).unwrap(), c);
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v.as_object_mut().unwrap().remove("lr");
        assert!(serde_json::from_value::<TrainConfig>(v.clone()).is_err());
        v["lr"] = 1e-3.into();
        v["extra"] = 1.into();
        assert!(serde_json::from_value::<TrainConfig>(v).is_err());
    }

    #[test]
    fn rejects_invalid() {
        assert!(TrainConfig { heads: 5, ..TrainConfig::desk() }.validate().is_err());
        assert!(TrainConfig { lr: 0.0, ..TrainConfig::desk() }.validate().is_err());
        assert!(TrainConfig { temperature: 0.0, ..TrainConfig::desk() }.validate().is_err());
    }
}

//! Run configuration: defaults, flat `key = value` config files, and
//! command-line overrides (flags win over file values, file values win over
//! defaults). Every run is reproducible from the config plus the seed; the
//! canonical serialization is hashed and stamped into output headers.

use std::path::PathBuf;

use scenesound_core::features::FeatureConfig;
use scenesound_core::model::Architecture;
use scenesound_core::train::{Hyperparams, Precision};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone)]
pub struct RunConfig {
    // Features
    pub sample_rate: u32,
    pub n_mels: usize,
    pub frame_ms: f64,
    pub hop_ms: f64,
    pub fmin: f64,
    pub fmax: Option<f64>,
    pub log_floor: f64,
    // Architecture
    pub shared_channels: Vec<usize>,
    pub shared_pool_freq: Vec<usize>,
    pub shared_filter_time: usize,
    pub shared_filter_freq: usize,
    pub gru_hidden: usize,
    pub event_hidden: usize,
    pub scene_channels: Vec<usize>,
    pub scene_filter: usize,
    pub scene_pool_time: Vec<usize>,
    // Training
    pub alpha: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub precision: Precision,
    pub folds: usize,
    pub checkpoint_every: usize,
    // Scoring
    pub threshold: f64,
    pub segment_frames: usize,
    // Synthesis
    pub clips_per_scene: usize,
    pub clip_seconds: u32,
    // Paths and mode
    pub corpus: Option<PathBuf>,
    pub out: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub fold: Option<usize>,
    pub alphas: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let arch = Architecture::default();
        RunConfig {
            sample_rate: 44_100,
            n_mels: arch.n_mels,
            frame_ms: 40.0,
            hop_ms: 20.0,
            fmin: 0.0,
            fmax: None,
            log_floor: 1e-10,
            shared_channels: arch.shared_channels,
            shared_pool_freq: arch.shared_pool_freq,
            shared_filter_time: arch.shared_filter_time,
            shared_filter_freq: arch.shared_filter_freq,
            gru_hidden: arch.gru_hidden,
            event_hidden: arch.event_hidden,
            scene_channels: arch.scene_channels,
            scene_filter: arch.scene_filter,
            scene_pool_time: arch.scene_pool_time,
            alpha: 0.01,
            learning_rate: 1e-3,
            epochs: 50,
            batch_size: 8,
            seed: 0,
            precision: Precision::F64,
            folds: 4,
            checkpoint_every: 0,
            threshold: 0.5,
            segment_frames: 1,
            clips_per_scene: 40,
            clip_seconds: 2,
            corpus: None,
            out: PathBuf::from("out"),
            checkpoint: None,
            fold: None,
            alphas: vec![1.0, 0.1, 0.01, 0.001],
        }
    }
}

fn parse_usize_list(v: &str) -> Result<Vec<usize>, String> {
    v.split(',')
        .map(|s| s.trim().parse::<usize>().map_err(|_| format!("unparseable list entry {s:?}")))
        .collect()
}

pub fn parse_f64_list(v: &str) -> Result<Vec<f64>, String> {
    v.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| format!("unparseable list entry {s:?}")))
        .collect()
}

impl RunConfig {
    /// Apply one `key = value` assignment (config file line or flag).
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let bad = |what: &str| format!("key {key}: unparseable {what} {value:?}");
        match key {
            "sample_rate" => self.sample_rate = value.parse().map_err(|_| bad("integer"))?,
            "n_mels" => self.n_mels = value.parse().map_err(|_| bad("integer"))?,
            "frame_ms" => self.frame_ms = value.parse().map_err(|_| bad("number"))?,
            "hop_ms" => self.hop_ms = value.parse().map_err(|_| bad("number"))?,
            "fmin" => self.fmin = value.parse().map_err(|_| bad("number"))?,
            "fmax" => self.fmax = Some(value.parse().map_err(|_| bad("number"))?),
            "log_floor" => self.log_floor = value.parse().map_err(|_| bad("number"))?,
            "shared_channels" => self.shared_channels = parse_usize_list(value)?,
            "shared_pool_freq" => self.shared_pool_freq = parse_usize_list(value)?,
            "shared_filter_time" => self.shared_filter_time = value.parse().map_err(|_| bad("integer"))?,
            "shared_filter_freq" => self.shared_filter_freq = value.parse().map_err(|_| bad("integer"))?,
            "gru_hidden" => self.gru_hidden = value.parse().map_err(|_| bad("integer"))?,
            "event_hidden" => self.event_hidden = value.parse().map_err(|_| bad("integer"))?,
            "scene_channels" => self.scene_channels = parse_usize_list(value)?,
            "scene_filter" => self.scene_filter = value.parse().map_err(|_| bad("integer"))?,
            "scene_pool_time" => self.scene_pool_time = parse_usize_list(value)?,
            "alpha" => self.alpha = value.parse().map_err(|_| bad("number"))?,
            "learning_rate" => self.learning_rate = value.parse().map_err(|_| bad("number"))?,
            "epochs" => self.epochs = value.parse().map_err(|_| bad("integer"))?,
            "batch_size" => self.batch_size = value.parse().map_err(|_| bad("integer"))?,
            "seed" => self.seed = value.parse().map_err(|_| bad("integer"))?,
            "precision" => self.precision = Precision::parse(value).map_err(|e| e.to_string())?,
            "folds" => self.folds = value.parse().map_err(|_| bad("integer"))?,
            "checkpoint_every" => self.checkpoint_every = value.parse().map_err(|_| bad("integer"))?,
            "threshold" => self.threshold = value.parse().map_err(|_| bad("number"))?,
            "segment_frames" => self.segment_frames = value.parse().map_err(|_| bad("integer"))?,
            "clips_per_scene" => self.clips_per_scene = value.parse().map_err(|_| bad("integer"))?,
            "clip_seconds" => self.clip_seconds = value.parse().map_err(|_| bad("integer"))?,
            "corpus" => self.corpus = Some(PathBuf::from(value)),
            "out" => self.out = PathBuf::from(value),
            "checkpoint" => self.checkpoint = Some(PathBuf::from(value)),
            "fold" => self.fold = Some(value.parse().map_err(|_| bad("integer"))?),
            "alphas" => self.alphas = parse_f64_list(value)?,
            other => return Err(format!("unknown config key {other:?}")),
        }
        Ok(())
    }

    /// Parse a flat config file: `key = value` lines, `#` comments.
    pub fn apply_file(&mut self, text: &str, origin: &str) -> Result<(), String> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("{origin} line {}: expected key = value, got {line:?}", i + 1))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| format!("{origin} line {}: {e}", i + 1))?;
        }
        Ok(())
    }

    /// Canonical serialization of the computational configuration: every
    /// key in a fixed order. Paths (corpus, out, checkpoint) are excluded —
    /// they locate inputs and outputs but do not describe the computation,
    /// so runs that differ only in directories produce identical artifacts.
    /// Also valid as a config file.
    pub fn canonical(&self) -> String {
        fn csv(v: &[usize]) -> String {
            v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
        }
        let mut lines = vec![
            format!("sample_rate = {}", self.sample_rate),
            format!("n_mels = {}", self.n_mels),
            format!("frame_ms = {}", self.frame_ms),
            format!("hop_ms = {}", self.hop_ms),
            format!("fmin = {}", self.fmin),
            format!("log_floor = {}", self.log_floor),
            format!("shared_channels = {}", csv(&self.shared_channels)),
            format!("shared_pool_freq = {}", csv(&self.shared_pool_freq)),
            format!("shared_filter_time = {}", self.shared_filter_time),
            format!("shared_filter_freq = {}", self.shared_filter_freq),
            format!("gru_hidden = {}", self.gru_hidden),
            format!("event_hidden = {}", self.event_hidden),
            format!("scene_channels = {}", csv(&self.scene_channels)),
            format!("scene_filter = {}", self.scene_filter),
            format!("scene_pool_time = {}", csv(&self.scene_pool_time)),
            format!("alpha = {}", self.alpha),
            format!("learning_rate = {}", self.learning_rate),
            format!("epochs = {}", self.epochs),
            format!("batch_size = {}", self.batch_size),
            format!("seed = {}", self.seed),
            format!("precision = {}", self.precision),
            format!("folds = {}", self.folds),
            format!("checkpoint_every = {}", self.checkpoint_every),
            format!("threshold = {}", self.threshold),
            format!("segment_frames = {}", self.segment_frames),
            format!("clips_per_scene = {}", self.clips_per_scene),
            format!("clip_seconds = {}", self.clip_seconds),
            format!(
                "alphas = {}",
                self.alphas.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(",")
            ),
        ];
        if let Some(fmax) = self.fmax {
            lines.push(format!("fmax = {fmax}"));
        }
        if let Some(fold) = self.fold {
            lines.push(format!("fold = {fold}"));
        }
        lines.join("\n") + "\n"
    }

    /// Sixteen hex characters identifying this configuration.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn feature_config(&self) -> FeatureConfig {
        FeatureConfig {
            n_mels: self.n_mels,
            frame_ms: self.frame_ms,
            hop_ms: self.hop_ms,
            sample_rate: self.sample_rate,
            fmin: self.fmin,
            fmax: self.fmax,
            log_floor: self.log_floor,
        }
    }

    pub fn architecture(&self, n_events: usize, n_scenes: usize) -> Architecture {
        Architecture {
            n_mels: self.n_mels,
            shared_channels: self.shared_channels.clone(),
            shared_pool_freq: self.shared_pool_freq.clone(),
            shared_filter_time: self.shared_filter_time,
            shared_filter_freq: self.shared_filter_freq,
            gru_hidden: self.gru_hidden,
            event_hidden: self.event_hidden,
            n_events,
            scene_channels: self.scene_channels.clone(),
            scene_filter: self.scene_filter,
            scene_pool_time: self.scene_pool_time.clone(),
            n_scenes,
        }
    }

    pub fn hyperparams(&self) -> Hyperparams {
        Hyperparams {
            alpha: self.alpha,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            precision: self.precision,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        self.feature_config().validate().map_err(|e| e.to_string())?;
        if self.alpha < 0.0 {
            return Err("alpha must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(format!("threshold {} must lie in [0, 1]", self.threshold));
        }
        if self.segment_frames == 0 {
            return Err("segment_frames must be at least 1".into());
        }
        if self.folds == 0 {
            return Err("folds must be at least 1".into());
        }
        if let Some(fold) = self.fold {
            if fold == 0 || fold > self.folds {
                return Err(format!("fold {fold} outside 1..={}", self.folds));
            }
        }
        // Architecture consistency is checked with dummy label counts.
        self.architecture(1, 1).validate().map_err(|e| e.to_string())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_values_override_defaults() {
        let mut cfg = RunConfig::default();
        cfg.apply_file("seed = 9\nalpha = 0.5\nshared_channels = 8,8,8\n# comment\n", "test").unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.alpha, 0.5);
        assert_eq!(cfg.shared_channels, vec![8, 8, 8]);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let mut cfg = RunConfig::default();
        let err = cfg.apply_file("no_such_key = 1\n", "test").unwrap_err();
        assert!(err.contains("no_such_key"), "{err}");
    }

    #[test]
    fn hash_changes_with_config() {
        let a = RunConfig::default();
        let mut b = RunConfig::default();
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), RunConfig::default().hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn canonical_round_trips_through_apply_file() {
        let mut cfg = RunConfig::default();
        cfg.seed = 42;
        cfg.alphas = vec![0.5, 0.25];
        let mut rebuilt = RunConfig::default();
        rebuilt.apply_file(&cfg.canonical(), "canon").unwrap();
        assert_eq!(cfg.hash(), rebuilt.hash());
    }

    #[test]
    fn paths_do_not_affect_the_hash() {
        let mut cfg = RunConfig::default();
        let base = cfg.hash();
        cfg.out = PathBuf::from("/somewhere/else");
        cfg.corpus = Some(PathBuf::from("/tmp/corpus"));
        cfg.checkpoint = Some(PathBuf::from("/tmp/model.ckpt"));
        assert_eq!(cfg.hash(), base);
    }

    #[test]
    fn default_config_is_valid() {
        RunConfig::default().validate().unwrap();
    }
}

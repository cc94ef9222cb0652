//! Log-mel energy extraction.
//!
//! The pipeline is Hann-windowed STFT power spectra projected through a
//! triangular mel filterbank, floored and log-compressed. All arithmetic is
//! `f64` so extracted features are bit-reproducible regardless of the
//! precision chosen for training.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// A mono audio clip.
#[derive(Debug, Clone)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub clip_id: String,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32, clip_id: impl Into<String>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyInput("audio clip"));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidConfig("sample rate must be positive".into()));
        }
        if let Some(bad) = samples.iter().find(|s| !s.is_finite()) {
            return Err(Error::NonFinite(format!("audio sample {bad}")));
        }
        Ok(AudioClip { samples, sample_rate, clip_id: clip_id.into() })
    }

    pub fn seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Feature extraction parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    pub n_mels: usize,
    pub frame_ms: f64,
    pub hop_ms: f64,
    pub sample_rate: u32,
    pub fmin: f64,
    /// Upper filterbank edge; `None` means Nyquist.
    pub fmax: Option<f64>,
    pub log_floor: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            n_mels: 64,
            frame_ms: 40.0,
            hop_ms: 20.0,
            sample_rate: 44_100,
            fmin: 0.0,
            fmax: None,
            log_floor: 1e-10,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_mels < 1 {
            return Err(Error::InvalidConfig("n_mels must be at least 1".into()));
        }
        if self.hop_ms <= 0.0 || self.frame_ms <= 0.0 {
            return Err(Error::InvalidConfig("frame and hop durations must be positive".into()));
        }
        if self.hop_ms > self.frame_ms {
            return Err(Error::InvalidConfig(format!(
                "hop ({} ms) must not exceed frame length ({} ms)",
                self.hop_ms, self.frame_ms
            )));
        }
        if self.fmin >= self.fmax_hz() {
            return Err(Error::InvalidConfig(format!(
                "fmin {} must be below fmax {}",
                self.fmin,
                self.fmax_hz()
            )));
        }
        if self.log_floor <= 0.0 {
            return Err(Error::InvalidConfig("log floor must be positive".into()));
        }
        Ok(())
    }

    pub fn frame_len(&self) -> usize {
        (self.frame_ms * self.sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn hop_len(&self) -> usize {
        (self.hop_ms * self.sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn fmax_hz(&self) -> f64 {
        self.fmax.unwrap_or(self.sample_rate as f64 / 2.0)
    }

    /// Smallest power of two that fits one frame.
    pub fn fft_len(&self) -> usize {
        self.frame_len().next_power_of_two()
    }

    /// Hop duration in seconds; the scoring segment grid.
    pub fn hop_seconds(&self) -> f64 {
        self.hop_ms / 1000.0
    }

    /// Number of frames produced for a signal of `len` samples.
    pub fn frame_count(&self, len: usize) -> usize {
        len.div_ceil(self.hop_len())
    }
}

/// Log-mel energies: `n_mels` rows × `T` frame columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub data: Matrix<f64>,
}

impl FeatureMatrix {
    pub fn bins(&self) -> usize {
        self.data.rows()
    }

    pub fn frames(&self) -> usize {
        self.data.cols()
    }
}

/// Windowed frames of a signal, one frame per column position in time.
#[derive(Debug, Clone, PartialEq)]
pub struct Frames {
    frame_len: usize,
    count: usize,
    data: Vec<f64>,
}

impl Frames {
    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.frame_len..(t + 1) * self.frame_len]
    }
}

/// Slice a clip into overlapping frames, zero-padding the tail so the frame
/// count depends only on the signal length: `T = ceil(len / hop)`. On the
/// default 40 ms / 20 ms grid a whole-second clip yields 50 frames per
/// second, which keeps the scene head's time pooling exact.
pub fn frame_signal(clip: &AudioClip, cfg: &FeatureConfig) -> Result<Frames> {
    cfg.validate()?;
    if clip.samples.is_empty() {
        return Err(Error::EmptyInput("signal"));
    }
    if clip.sample_rate != cfg.sample_rate {
        return Err(Error::InvalidConfig(format!(
            "clip {} is sampled at {} Hz but the feature config expects {} Hz",
            clip.clip_id, clip.sample_rate, cfg.sample_rate
        )));
    }
    let frame_len = cfg.frame_len();
    let hop = cfg.hop_len();
    let count = cfg.frame_count(clip.samples.len());
    let padded_len = (count - 1) * hop + frame_len;
    let mut data = vec![0.0; count * frame_len];
    for t in 0..count {
        let start = t * hop;
        let end = (start + frame_len).min(clip.samples.len());
        if start < clip.samples.len() {
            data[t * frame_len..t * frame_len + (end - start)].copy_from_slice(&clip.samples[start..end]);
        }
    }
    debug_assert!(padded_len >= clip.samples.len());
    Ok(Frames { frame_len, count, data })
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filterbank: `n_mels` rows over `n_fft_bins` power-spectrum
/// bins. Filters peak at 1 and are evaluated at the continuous bin centre
/// frequencies, so every row carries at least one positive weight.
pub fn mel_filterbank(cfg: &FeatureConfig, n_fft_bins: usize) -> Result<Matrix<f64>> {
    cfg.validate()?;
    if cfg.n_mels > n_fft_bins {
        return Err(Error::InvalidConfig(format!(
            "n_mels {} exceeds available spectrum bins {}",
            cfg.n_mels, n_fft_bins
        )));
    }
    let fft_len = (n_fft_bins - 1) * 2;
    let bin_hz = cfg.sample_rate as f64 / fft_len as f64;
    let mel_lo = hz_to_mel(cfg.fmin);
    let mel_hi = hz_to_mel(cfg.fmax_hz());
    let edges: Vec<f64> = (0..cfg.n_mels + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (cfg.n_mels + 1) as f64))
        .collect();

    let mut bank = Matrix::zeros(cfg.n_mels, n_fft_bins);
    for m in 0..cfg.n_mels {
        let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        let row = bank.row_mut(m);
        let mut has_positive = false;
        for (k, w) in row.iter_mut().enumerate() {
            let f = k as f64 * bin_hz;
            let rising = (f - lo) / (center - lo);
            let falling = (hi - f) / (hi - center);
            let weight = rising.min(falling).max(0.0);
            *w = weight;
            has_positive |= weight > 0.0;
        }
        if !has_positive {
            // Filter narrower than one bin: pin it to the nearest bin so the
            // band still responds to energy at its centre frequency.
            let k = (center / bin_hz).round() as usize;
            row[k.min(n_fft_bins - 1)] = 1.0;
        }
    }
    Ok(bank)
}

/// Full log-mel pipeline for one clip.
pub fn log_mel(clip: &AudioClip, cfg: &FeatureConfig) -> Result<FeatureMatrix> {
    let frames = frame_signal(clip, cfg)?;
    let fft_len = cfg.fft_len();
    let n_bins = fft_len / 2 + 1;
    let bank = mel_filterbank(cfg, n_bins)?;

    let window = hann(frames.frame_len());
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(fft_len);

    let mut out = Matrix::zeros(cfg.n_mels, frames.count());
    let mut buf = vec![Complex::new(0.0, 0.0); fft_len];
    let mut power = vec![0.0f64; n_bins];
    for t in 0..frames.count() {
        let frame = frames.frame(t);
        for (i, slot) in buf.iter_mut().enumerate() {
            *slot = if i < frame.len() {
                Complex::new(frame[i] * window[i], 0.0)
            } else {
                Complex::new(0.0, 0.0)
            };
        }
        fft.process(&mut buf);
        for (k, p) in power.iter_mut().enumerate() {
            *p = buf[k].norm_sqr();
        }
        for m in 0..cfg.n_mels {
            let energy = crate::tensor::dot(bank.row(m), &power);
            out.set(m, t, energy.max(cfg.log_floor).ln());
        }
    }
    Ok(FeatureMatrix { data: out })
}

fn hann(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    (0..len)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / len as f64).cos())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tone(freq: f64, seconds: f64, sr: u32) -> Vec<f64> {
        let n = (seconds * sr as f64).round() as usize;
        (0..n).map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / sr as f64).sin()).collect()
    }

    #[test]
    fn frame_signal_default_grid_ten_seconds() {
        let cfg = FeatureConfig::default();
        let clip = AudioClip::new(vec![0.1; 441_000], 44_100, "ten").unwrap();
        let frames = frame_signal(&clip, &cfg).unwrap();
        assert_eq!(cfg.frame_len(), 1764);
        assert_eq!(cfg.hop_len(), 882);
        assert_eq!(frames.count(), 500);
        assert_eq!(frames.frame_len(), 1764);
    }

    #[test]
    fn frame_signal_zero_input_gives_zero_frames() {
        let cfg = FeatureConfig::default();
        let clip = AudioClip::new(vec![0.0; 44_100], 44_100, "z").unwrap();
        let frames = frame_signal(&clip, &cfg).unwrap();
        for t in 0..frames.count() {
            assert!(frames.frame(t).iter().all(|&s| s == 0.0));
        }
    }

    #[test]
    fn frame_signal_single_frame_case() {
        let cfg = FeatureConfig {
            frame_ms: 40.0,
            hop_ms: 40.0,
            sample_rate: 1000,
            n_mels: 8,
            ..FeatureConfig::default()
        };
        assert_eq!(cfg.frame_len(), 40);
        let clip = AudioClip::new(vec![1.0; 40], 1000, "one").unwrap();
        let frames = frame_signal(&clip, &cfg).unwrap();
        assert_eq!(frames.count(), 1);
        assert_eq!(frames.frame(0), &[1.0; 40][..]);
    }

    #[test]
    fn empty_signal_is_rejected() {
        assert!(AudioClip::new(vec![], 44_100, "e").is_err());
    }

    #[test]
    fn mel_scale_closed_form() {
        assert!((hz_to_mel(700.0) - 781.1728387480312).abs() < 1e-9);
        assert!((mel_to_hz(hz_to_mel(1234.5)) - 1234.5).abs() < 1e-6);
    }

    #[test]
    fn filterbank_rows_nonnegative_and_responsive() {
        let cfg = FeatureConfig::default();
        let bank = mel_filterbank(&cfg, 1025).unwrap();
        for m in 0..bank.rows() {
            let row = bank.row(m);
            assert!(row.iter().all(|&w| w >= 0.0));
            assert!(row.iter().sum::<f64>() > 0.0, "row {m} has no positive weight");
        }
    }

    #[test]
    fn filterbank_matches_bruteforce_construction() {
        // Independent triangular construction evaluated pointwise.
        let cfg = FeatureConfig::default();
        let n_bins = 1025; // 2048-point FFT
        let bank = mel_filterbank(&cfg, n_bins).unwrap();
        let lo_mel = hz_to_mel(0.0);
        let hi_mel = hz_to_mel(22_050.0);
        for m in 0..64 {
            let e0 = mel_to_hz(lo_mel + (hi_mel - lo_mel) * m as f64 / 65.0);
            let e1 = mel_to_hz(lo_mel + (hi_mel - lo_mel) * (m + 1) as f64 / 65.0);
            let e2 = mel_to_hz(lo_mel + (hi_mel - lo_mel) * (m + 2) as f64 / 65.0);
            for k in 0..n_bins {
                let f = k as f64 * 44_100.0 / 2048.0;
                let expected = if f <= e0 || f >= e2 {
                    0.0
                } else if f <= e1 {
                    (f - e0) / (e1 - e0)
                } else {
                    (e2 - f) / (e2 - e1)
                };
                let got = bank.get(m, k);
                assert!(
                    (got - expected).abs() < 1e-12,
                    "band {m} bin {k}: got {got}, expected {expected}"
                );
            }
        }
    }

    #[test]
    fn filterbank_rejects_too_few_bins() {
        let cfg = FeatureConfig::default();
        assert!(mel_filterbank(&cfg, 32).is_err());
    }

    #[test]
    fn log_mel_all_zero_clip_hits_floor() {
        let cfg = FeatureConfig { sample_rate: 8000, n_mels: 16, ..FeatureConfig::default() };
        let clip = AudioClip::new(vec![0.0; 8000], 8000, "silence").unwrap();
        let feats = log_mel(&clip, &cfg).unwrap();
        let expected = (1e-10f64).ln();
        assert!(feats.data.data().iter().all(|&v| (v - expected).abs() < 1e-12));
    }

    #[test]
    fn log_mel_default_shape_is_64_by_500() {
        let cfg = FeatureConfig::default();
        let clip = AudioClip::new(tone(440.0, 10.0, 44_100), 44_100, "tone").unwrap();
        let feats = log_mel(&clip, &cfg).unwrap();
        assert_eq!(feats.bins(), 64);
        assert_eq!(feats.frames(), 500);
    }

    #[test]
    fn log_mel_tone_energy_lands_in_its_band() {
        let cfg = FeatureConfig { sample_rate: 16_000, n_mels: 32, ..FeatureConfig::default() };
        // Centre frequency of band 12 for this config.
        let lo_mel = hz_to_mel(0.0);
        let hi_mel = hz_to_mel(8000.0);
        let band = 12usize;
        let center = mel_to_hz(lo_mel + (hi_mel - lo_mel) * (band + 1) as f64 / 33.0);
        let clip = AudioClip::new(tone(center, 2.0, 16_000), 16_000, "band").unwrap();
        let feats = log_mel(&clip, &cfg).unwrap();
        for t in 0..feats.frames() {
            let this = feats.data.get(band, t);
            for other in 0..32 {
                if (other as i64 - band as i64).unsigned_abs() as usize >= 3 {
                    assert!(
                        this > feats.data.get(other, t),
                        "frame {t}: band {band} ({this}) not above band {other} ({})",
                        feats.data.get(other, t)
                    );
                }
            }
        }
    }

    #[test]
    fn log_mel_is_deterministic() {
        let cfg = FeatureConfig { sample_rate: 16_000, n_mels: 32, ..FeatureConfig::default() };
        let clip = AudioClip::new(tone(523.0, 1.0, 16_000), 16_000, "det").unwrap();
        let a = log_mel(&clip, &cfg).unwrap();
        let b = log_mel(&clip, &cfg).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn frame_count_depends_only_on_length(len in 1usize..40_000, fill in -1.0f64..1.0) {
            let cfg = FeatureConfig { sample_rate: 16_000, n_mels: 8, ..FeatureConfig::default() };
            let a = AudioClip::new(vec![fill; len], 16_000, "a").unwrap();
            let b = AudioClip::new((0..len).map(|i| (i as f64 * 0.37).sin()).collect(), 16_000, "b").unwrap();
            prop_assert_eq!(frame_signal(&a, &cfg).unwrap().count(), frame_signal(&b, &cfg).unwrap().count());
        }

        #[test]
        fn scaling_up_never_decreases_log_mel(seed in 0u64..1000) {
            let cfg = FeatureConfig { sample_rate: 8000, n_mels: 12, ..FeatureConfig::default() };
            let samples: Vec<f64> = (0..4000)
                .map(|i| ((i as f64 + seed as f64) * 0.71).sin() * 0.3)
                .collect();
            let clip = AudioClip::new(samples.clone(), 8000, "s").unwrap();
            let scaled = AudioClip::new(samples.iter().map(|s| s * 2.5).collect(), 8000, "s2").unwrap();
            let base = log_mel(&clip, &cfg).unwrap();
            let loud = log_mel(&scaled, &cfg).unwrap();
            for (a, b) in base.data.data().iter().zip(loud.data.data()) {
                prop_assert!(b >= a);
            }
        }
    }
}

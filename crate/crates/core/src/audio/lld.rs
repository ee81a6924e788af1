use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{AudioError, AudioSignal};

pub const MEL_BANDS: usize = 26;
pub const MFCC_COUNT: usize = 12;
pub const PITCH_MIN_HZ: f64 = 50.0;
pub const PITCH_MAX_HZ: f64 = 500.0;
const LOG_FLOOR: f64 = 1e-12;

/// Overlapping frames of one signal. `raw` holds the plain samples,
/// `windowed` the Hann-weighted ones.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatrix {
    pub raw: Vec<Vec<f64>>,
    pub windowed: Vec<Vec<f64>>,
    pub frame_len: usize,
    pub hop: usize,
    pub sample_rate: u32,
}

impl FrameMatrix {
    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn hop_seconds(&self) -> f64 {
        self.hop as f64 / f64::from(self.sample_rate)
    }
}

/// Periodic-free (symmetric) Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// `floor((len - frame_len) / hop) + 1` frames.
pub fn frame_signal(signal: &AudioSignal, frame_len: f64, hop: f64) -> Result<FrameMatrix, AudioError> {
    let sr = f64::from(signal.sample_rate);
    let flen = (frame_len * sr).round() as usize;
    let hlen = (hop * sr).round() as usize;
    if flen == 0 || hlen == 0 {
        return Err(AudioError::InvalidConfig(format!("frame {frame_len}s / hop {hop}s round to zero samples")));
    }
    if signal.samples.len() < flen {
        return Err(AudioError::TooShort {
            samples: signal.samples.len(),
            frame_len: flen,
        });
    }
    let count = (signal.samples.len() - flen) / hlen + 1;
    let window = hann(flen);
    let raw: Vec<Vec<f64>> = (0..count)
        .map(|i| signal.samples[i * hlen..i * hlen + flen].to_vec())
        .collect();
    let windowed = raw
        .iter()
        .map(|f| f.iter().zip(&window).map(|(s, w)| s * w).collect())
        .collect();
    Ok(FrameMatrix {
        raw,
        windowed,
        frame_len: flen,
        hop: hlen,
        sample_rate: signal.sample_rate,
    })
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters on the mel scale from 0 Hz to Nyquist, evaluated at
/// the centre frequency of every DFT bin. `bands × (n_fft/2 + 1)`.
pub fn mel_filterbank(bands: usize, n_fft: usize, sample_rate: u32) -> Vec<Vec<f64>> {
    let sr = f64::from(sample_rate);
    let top = hz_to_mel(sr / 2.0);
    let edges: Vec<f64> = (0..bands + 2).map(|i| mel_to_hz(top * i as f64 / (bands + 1) as f64)).collect();
    let bins = n_fft / 2 + 1;
    (0..bands)
        .map(|b| {
            let (lo, mid, hi) = (edges[b], edges[b + 1], edges[b + 2]);
            (0..bins)
                .map(|k| {
                    let f = k as f64 * sr / n_fft as f64;
                    if f <= lo || f >= hi {
                        0.0
                    } else if f <= mid {
                        (f - lo) / (mid - lo)
                    } else {
                        (hi - f) / (hi - mid)
                    }
                })
                .collect()
        })
        .collect()
}

/// Orthonormal DCT-II matrix, `rows × n`.
pub fn dct_matrix(rows: usize, n: usize) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|k| {
            let scale = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
            (0..n)
                .map(|i| scale * (PI * k as f64 * (2 * i + 1) as f64 / (2 * n) as f64).cos())
                .collect()
        })
        .collect()
}

pub fn descriptor_names() -> Vec<String> {
    let mut names: Vec<String> = [
        "rms",
        "intensity",
        "loudness",
        "pitch",
        "voicing",
        "spectral_centroid",
        "spectral_flux",
        "spectral_flatness",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    names.extend((1..=MFCC_COUNT).map(|i| format!("mfcc{i}")));
    names
}

/// Column index of the voicing probability.
pub const VOICING: usize = 4;
pub const PITCH: usize = 3;

/// Per-frame descriptors, one row per frame, columns as
/// [`descriptor_names`].
#[derive(Debug, Clone, PartialEq)]
pub struct LldMatrix {
    pub rows: Vec<Vec<f64>>,
    pub descriptor_names: Vec<String>,
    pub frame_hop: f64,
}

impl LldMatrix {
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }
}

/// Reusable FFT plans and filterbanks for one frame length.
pub struct LldExtractor {
    sample_rate: u32,
    frame_len: usize,
    fft: Arc<dyn Fft<f64>>,
    acf_fft: Arc<dyn Fft<f64>>,
    acf_ifft: Arc<dyn Fft<f64>>,
    acf_len: usize,
    window_acf: Vec<f64>,
    mel: Vec<Vec<f64>>,
    dct: Vec<Vec<f64>>,
    voicing_threshold: f64,
}

impl LldExtractor {
    pub fn new(sample_rate: u32, frame_len: usize, voicing_threshold: f64) -> Self {
        let mut planner = FftPlanner::new();
        let acf_len = (2 * frame_len).next_power_of_two();
        let mut ex = Self {
            sample_rate,
            frame_len,
            fft: planner.plan_fft_forward(frame_len),
            acf_fft: planner.plan_fft_forward(acf_len),
            acf_ifft: planner.plan_fft_inverse(acf_len),
            acf_len,
            window_acf: Vec::new(),
            mel: mel_filterbank(MEL_BANDS, frame_len, sample_rate),
            dct: dct_matrix(MFCC_COUNT + 1, MEL_BANDS),
            voicing_threshold,
        };
        ex.window_acf = ex.autocorrelation(&hann(frame_len));
        ex
    }

    /// `|X_k|^2` for `k = 0..=N/2`.
    pub fn power_spectrum(&self, frame: &[f64]) -> Vec<f64> {
        let mut buf: Vec<Complex<f64>> = frame.iter().map(|&x| Complex::new(x, 0.0)).collect();
        self.fft.process(&mut buf);
        buf[..self.frame_len / 2 + 1].iter().map(|c| c.norm_sqr()).collect()
    }

    /// Unnormalized autocorrelation `r(τ) = Σ x[n] x[n+τ]` for lags
    /// `0..frame_len`.
    fn autocorrelation(&self, frame: &[f64]) -> Vec<f64> {
        let mut buf = vec![Complex::new(0.0, 0.0); self.acf_len];
        for (b, &x) in buf.iter_mut().zip(frame) {
            b.re = x;
        }
        self.acf_fft.process(&mut buf);
        for b in buf.iter_mut() {
            *b = Complex::new(b.norm_sqr(), 0.0);
        }
        self.acf_ifft.process(&mut buf);
        let scale = 1.0 / self.acf_len as f64;
        buf[..self.frame_len].iter().map(|c| c.re * scale).collect()
    }

    /// `(pitch_hz, voicing)`: the window-corrected autocorrelation peak in the
    /// 50–500 Hz lag range. The earliest local maximum within 90% of the best
    /// peak is taken to avoid octave errors; pitch is 0 below the voicing
    /// threshold.
    pub fn pitch(&self, windowed: &[f64]) -> (f64, f64) {
        let r = self.autocorrelation(windowed);
        if r[0] <= 0.0 {
            return (0.0, 0.0);
        }
        let sr = f64::from(self.sample_rate);
        let lo = (sr / PITCH_MAX_HZ).floor().max(1.0) as usize;
        let hi = ((sr / PITCH_MIN_HZ).ceil() as usize).min(self.frame_len - 2);
        if lo + 1 >= hi {
            return (0.0, 0.0);
        }
        let norm = |t: usize| (r[t] / r[0]) / (self.window_acf[t] / self.window_acf[0]);
        let values: Vec<f64> = (lo - 1..=hi + 1).map(norm).collect();
        let at = |t: usize| values[t + 1 - lo];
        let peaks: Vec<usize> = (lo..=hi).filter(|&t| at(t) > at(t - 1) && at(t) >= at(t + 1)).collect();
        let Some(best) = peaks.iter().map(|&t| at(t)).fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v)))) else {
            return (0.0, 0.0);
        };
        let t = *peaks.iter().find(|&&t| at(t) >= 0.9 * best).expect("best is among the peaks");
        let (a, b, c) = (at(t - 1), at(t), at(t + 1));
        let denom = a - 2.0 * b + c;
        let shift = if denom.abs() > 1e-15 { (0.5 * (a - c) / denom).clamp(-0.5, 0.5) } else { 0.0 };
        let peak = (b - 0.25 * (a - c) * shift).clamp(0.0, 1.0);
        if peak < self.voicing_threshold {
            return (0.0, peak);
        }
        (sr / (t as f64 + shift), peak)
    }

    pub fn mfcc_from_power(&self, power: &[f64]) -> Vec<f64> {
        let log_mel: Vec<f64> = self
            .mel
            .iter()
            .map(|f| f.iter().zip(power).map(|(w, p)| w * p).sum::<f64>().max(LOG_FLOOR).ln())
            .collect();
        self.dct[1..]
            .iter()
            .map(|row| row.iter().zip(&log_mel).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn extract(&self, frames: &FrameMatrix) -> LldMatrix {
        let sr = f64::from(self.sample_rate);
        let n = self.frame_len as f64;
        let mut prev_mag: Option<Vec<f64>> = None;
        let rows = frames
            .raw
            .iter()
            .zip(&frames.windowed)
            .map(|(raw, win)| {
                let ms = raw.iter().map(|x| x * x).sum::<f64>() / raw.len() as f64;
                let rms = ms.sqrt();
                let intensity = 10.0 * (ms + LOG_FLOOR).log10();
                let loudness = rms.powf(0.3);
                let (pitch, voicing) = self.pitch(win);
                let power = self.power_spectrum(win);
                let mag: Vec<f64> = power.iter().map(|p| p.sqrt()).collect();
                let mag_sum: f64 = mag.iter().sum();
                let centroid = if mag_sum > 0.0 {
                    mag.iter().enumerate().map(|(k, m)| k as f64 * sr / n * m).sum::<f64>() / mag_sum
                } else {
                    0.0
                };
                let flux = match &prev_mag {
                    Some(p) => p.iter().zip(&mag).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt(),
                    None => 0.0,
                };
                let flatness = spectral_flatness(&power);
                let mut row = vec![rms, intensity, loudness, pitch, voicing, centroid, flux, flatness];
                row.extend(self.mfcc_from_power(&power));
                prev_mag = Some(mag);
                row
            })
            .collect();
        LldMatrix {
            rows,
            descriptor_names: descriptor_names(),
            frame_hop: frames.hop_seconds(),
        }
    }
}

/// Geometric over arithmetic mean of the power spectrum; 0 when any bin is
/// zero.
pub fn spectral_flatness(power: &[f64]) -> f64 {
    let mean = power.iter().sum::<f64>() / power.len() as f64;
    if mean <= 0.0 || power.iter().any(|&p| p <= 0.0) {
        return 0.0;
    }
    let log_mean = power.iter().map(|p| p.ln()).sum::<f64>() / power.len() as f64;
    log_mean.exp() / mean
}

pub fn extract_llds(frames: &FrameMatrix, voicing_threshold: f64) -> Result<LldMatrix, AudioError> {
    if frames.is_empty() {
        return Err(AudioError::TooShort {
            samples: 0,
            frame_len: frames.frame_len,
        });
    }
    Ok(LldExtractor::new(frames.sample_rate, frames.frame_len, voicing_threshold).extract(frames))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sine(freq: f64, seconds: f64, amp: f64) -> AudioSignal {
        let n = (16000.0 * seconds) as usize;
        let s = (0..n).map(|i| amp * (2.0 * PI * freq * i as f64 / 16000.0).sin()).collect();
        AudioSignal::new(s, 16000).unwrap()
    }

    // Independent reference: O(N^2) DFT, filterbank and DCT written out
    // directly from their definitions.
    fn brute_power(frame: &[f64]) -> Vec<f64> {
        let n = frame.len();
        (0..=n / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (i, x) in frame.iter().enumerate() {
                    let a = -2.0 * PI * (k * i % n) as f64 / n as f64;
                    re += x * a.cos();
                    im += x * a.sin();
                }
                re * re + im * im
            })
            .collect()
    }

    fn brute_mfcc(frame: &[f64], sr: f64) -> Vec<f64> {
        let n = frame.len();
        let power = brute_power(frame);
        let mel = |f: f64| 2595.0 * (1.0 + f / 700.0).log10();
        let inv = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
        let top = mel(sr / 2.0);
        let mut log_e = Vec::new();
        for b in 0..26 {
            let lo = inv(top * b as f64 / 27.0);
            let mid = inv(top * (b + 1) as f64 / 27.0);
            let hi = inv(top * (b + 2) as f64 / 27.0);
            let mut e = 0.0;
            for (k, p) in power.iter().enumerate() {
                let f = k as f64 * sr / n as f64;
                let w = if f > lo && f <= mid {
                    (f - lo) / (mid - lo)
                } else if f > mid && f < hi {
                    (hi - f) / (hi - mid)
                } else {
                    0.0
                };
                e += w * p;
            }
            log_e.push(e.max(1e-12).ln());
        }
        (1..=12)
            .map(|k| {
                let s: f64 = (0..26)
                    .map(|i| log_e[i] * (PI * k as f64 * (i as f64 + 0.5) / 26.0).cos())
                    .sum();
                s * (2.0 / 26.0f64).sqrt()
            })
            .collect()
    }

    fn rel_inf(a: &[f64], b: &[f64]) -> f64 {
        let num = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let den = b.iter().map(|y| y.abs()).fold(0.0, f64::max).max(1e-300);
        num / den
    }

    #[test]
    fn one_second_at_16k_gives_39_frames() {
        let f = frame_signal(&sine(100.0, 1.0, 0.5), 0.05, 0.025).unwrap();
        assert_eq!(f.len(), 39);
        assert_eq!(f.frame_len, 800);
        assert_eq!(f.hop, 400);
        assert_eq!(f.hop_seconds(), 0.025);
        assert_eq!(1.0 / f.hop_seconds(), 40.0);
    }

    #[test]
    fn single_frame_and_too_short() {
        let s = AudioSignal::new(vec![0.1; 800], 16000).unwrap();
        assert_eq!(frame_signal(&s, 0.05, 0.025).unwrap().len(), 1);
        let s = AudioSignal::new(vec![0.1; 799], 16000).unwrap();
        assert!(matches!(frame_signal(&s, 0.05, 0.025), Err(AudioError::TooShort { .. })));
    }

    #[test]
    fn constant_frame_rms_is_its_amplitude() {
        let s = AudioSignal::new(vec![0.3; 800], 16000).unwrap();
        let l = extract_llds(&frame_signal(&s, 0.05, 0.025).unwrap(), 0.45).unwrap();
        assert!((l.rows[0][0] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn silence_follows_conventions() {
        let s = AudioSignal::new(vec![0.0; 1600], 16000).unwrap();
        let l = extract_llds(&frame_signal(&s, 0.05, 0.025).unwrap(), 0.45).unwrap();
        for row in &l.rows {
            assert_eq!(row[PITCH], 0.0);
            assert_eq!(row[VOICING], 0.0);
            assert_eq!(row[5], 0.0);
            assert!(row.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn pure_tone_pitch_and_centroid() {
        let l = extract_llds(&frame_signal(&sine(220.0, 1.0, 0.5), 0.05, 0.025).unwrap(), 0.45).unwrap();
        for row in &l.rows {
            assert!((row[PITCH] - 220.0).abs() <= 5.0, "pitch {}", row[PITCH]);
            assert!((row[5] - 220.0).abs() <= 10.0, "centroid {}", row[5]);
            assert!(row[VOICING] > 0.9);
        }
    }

    #[test]
    fn tone_centroid_matches_brute_force_dft() {
        let frames = frame_signal(&sine(220.0, 0.1, 0.5), 0.05, 0.025).unwrap();
        let p = brute_power(&frames.windowed[0]);
        let mag: Vec<f64> = p.iter().map(|v| v.sqrt()).collect();
        let c = mag.iter().enumerate().map(|(k, m)| k as f64 * 20.0 * m).sum::<f64>() / mag.iter().sum::<f64>();
        let l = extract_llds(&frames, 0.45).unwrap();
        assert!((l.rows[0][5] - c).abs() / c < 1e-9);
        assert!((c - 220.0).abs() <= 10.0);
    }

    #[test]
    fn other_pitches_are_tracked() {
        for f0 in [80.0, 150.0, 310.0, 450.0] {
            let l = extract_llds(&frame_signal(&sine(f0, 0.3, 0.4), 0.05, 0.025).unwrap(), 0.45).unwrap();
            for row in &l.rows {
                assert!((row[PITCH] - f0).abs() <= 5.0, "{f0}: {}", row[PITCH]);
            }
        }
    }

    #[test]
    fn mfcc_matches_brute_force_reference_on_random_frames() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let ex = LldExtractor::new(16000, 800, 0.45);
        let window = hann(800);
        let mut worst = 0.0f64;
        for _ in 0..100 {
            let frame: Vec<f64> = (0..800).map(|i| rng.gen_range(-1.0..1.0) * window[i]).collect();
            let fast = ex.mfcc_from_power(&ex.power_spectrum(&frame));
            worst = worst.max(rel_inf(&fast, &brute_mfcc(&frame, 16000.0)));
            let pf = ex.power_spectrum(&frame);
            worst = worst.max(rel_inf(&pf, &brute_power(&frame)));
        }
        assert!(worst <= 1e-6, "worst relative error {worst}");
    }

    #[test]
    fn amplitude_scaling_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let base: Vec<f64> = (0..8000)
            .map(|i| 0.3 * (2.0 * PI * 180.0 * i as f64 / 16000.0).sin() + 0.05 * rng.gen_range(-1.0..1.0))
            .collect();
        let sig = AudioSignal::new(base, 16000).unwrap();
        let a = extract_llds(&frame_signal(&sig, 0.05, 0.025).unwrap(), 0.45).unwrap();
        for k in [0.5, 2.0, 3.7] {
            let b = extract_llds(&frame_signal(&sig.scaled(k), 0.05, 0.025).unwrap(), 0.45).unwrap();
            for (ra, rb) in a.rows.iter().zip(&b.rows) {
                assert!((rb[0] - k * ra[0]).abs() <= 1e-9 * k * ra[0].max(1.0));
                assert!((rb[PITCH] - ra[PITCH]).abs() <= 1e-9 * ra[PITCH].max(1.0));
                assert!((rb[5] - ra[5]).abs() <= 1e-9 * ra[5].max(1.0));
                assert!((rb[7] - ra[7]).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn descriptor_layout() {
        let names = descriptor_names();
        assert_eq!(names.len(), 20);
        assert_eq!(names[VOICING], "voicing");
        assert_eq!(names[19], "mfcc12");
    }
}

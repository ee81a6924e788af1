use std::path::Path;

use super::AudioError;

pub const SUPPORTED_RATES: [u32; 4] = [8000, 16000, 44100, 48000];

/// Mono samples in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioSignal {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioSignal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self, AudioError> {
        if !SUPPORTED_RATES.contains(&sample_rate) {
            return Err(AudioError::UnsupportedRate(sample_rate));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(AudioError::NonFinite);
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    /// Samples in `[start, end)` seconds, clamped to the signal.
    pub fn slice(&self, start: f64, end: f64) -> AudioSignal {
        let sr = f64::from(self.sample_rate);
        let a = ((start * sr).round().max(0.0) as usize).min(self.samples.len());
        let b = ((end * sr).round().max(0.0) as usize).clamp(a, self.samples.len());
        AudioSignal {
            samples: self.samples[a..b].to_vec(),
            sample_rate: self.sample_rate,
        }
    }

    pub fn scaled(&self, k: f64) -> AudioSignal {
        AudioSignal {
            samples: self.samples.iter().map(|s| s * k).collect(),
            sample_rate: self.sample_rate,
        }
    }
}

/// Reads 8/16/24/32-bit integer or 32-bit float PCM WAV, averaging channels.
pub fn read_wav(path: &Path) -> Result<AudioSignal, AudioError> {
    let bad = |e: hound::Error| AudioError::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut reader = hound::WavReader::open(path).map_err(bad)?;
    let spec = reader.spec();
    let channels = usize::from(spec.channels.max(1));
    let interleaved: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(bad)?,
        hound::SampleFormat::Int => {
            let scale = f64::from(1u32 << (spec.bits_per_sample - 1));
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| f64::from(v) / scale))
                .collect::<Result<_, _>>()
                .map_err(bad)?
        }
    };
    let samples = interleaved
        .chunks(channels)
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect();
    AudioSignal::new(samples, spec.sample_rate)
}

/// Encodes 16-bit mono PCM WAV bytes.
pub fn encode_wav(signal: &AudioSignal) -> Vec<u8> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: signal.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut out = std::io::Cursor::new(Vec::with_capacity(44 + 2 * signal.samples.len()));
    {
        let mut w = hound::WavWriter::new(&mut out, spec).expect("in-memory writer");
        for s in &signal.samples {
            let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
            w.write_sample(v).expect("in-memory writer");
        }
        w.finalize().expect("in-memory writer");
    }
    out.into_inner()
}

/// Writes 16-bit mono PCM.
pub fn write_wav(path: &Path, signal: &AudioSignal) -> Result<(), AudioError> {
    std::fs::write(path, encode_wav(signal)).map_err(|source| AudioError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wav_round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.wav");
        let s: Vec<f64> = (0..1600).map(|i| (i as f64 * 0.01).sin() * 0.5).collect();
        let sig = AudioSignal::new(s.clone(), 16000).unwrap();
        write_wav(&path, &sig).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.sample_rate, 16000);
        assert_eq!(back.samples.len(), 1600);
        for (a, b) in s.iter().zip(&back.samples) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn garbage_file_is_a_decode_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.wav");
        std::fs::write(&path, b"not a wav file at all").unwrap();
        assert!(matches!(read_wav(&path), Err(AudioError::Decode { .. })));
    }

    #[test]
    fn rejects_unsupported_rate() {
        assert!(matches!(AudioSignal::new(vec![0.0], 22050), Err(AudioError::UnsupportedRate(22050))));
    }

    #[test]
    fn slice_is_clamped() {
        let sig = AudioSignal::new(vec![0.0; 16000], 16000).unwrap();
        assert_eq!(sig.slice(0.25, 0.5).samples.len(), 4000);
        assert_eq!(sig.slice(0.9, 3.0).samples.len(), 1600);
    }
}

use std::path::PathBuf;

use polyfuse_core::audio::{encode_wav, read_wav, AudioError};
use polyfuse_core::corpus::CorpusManifest;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MediaKind {
    Wav,
    Mp4,
}

/// Splits `u007.wav` into the utterance id and the requested kind.
pub fn parse_media_name(name: &str) -> Option<(&str, MediaKind)> {
    let (id, ext) = name.rsplit_once('.')?;
    let kind = match ext {
        "wav" => MediaKind::Wav,
        "mp4" => MediaKind::Mp4,
        _ => return None,
    };
    (!id.is_empty()).then_some((id, kind))
}

/// The utterance's audio, cut to its time window and re-encoded as 16-bit
/// mono WAV.
pub fn audio_clip(manifest: &CorpusManifest, utterance_id: &str) -> Result<Option<Vec<u8>>, AudioError> {
    let Some(u) = manifest.utterance(utterance_id) else {
        return Ok(None);
    };
    let Some(video) = manifest.video(&u.video_id) else {
        return Ok(None);
    };
    let signal = read_wav(&manifest.resolve_media(&video.audio_path))?;
    Ok(Some(encode_wav(&signal.slice(u.start, u.end))))
}

/// Path of the parent video file and its content type. Video is served
/// whole; clients seek to the window given in the task.
pub fn video_file(manifest: &CorpusManifest, utterance_id: &str) -> Option<(PathBuf, &'static str)> {
    let u = manifest.utterance(utterance_id)?;
    let video = manifest.video(&u.video_id)?;
    let path = manifest.resolve_media(&video.video_path);
    let content_type = match path.extension().and_then(|e| e.to_str()) {
        Some("mp4") => "video/mp4",
        Some("webm") => "video/webm",
        Some("y4m") => "video/x-yuv4mpeg",
        _ => "application/octet-stream",
    };
    Some((path, content_type))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RangeRequest {
    Full,
    /// Inclusive byte bounds.
    Partial(u64, u64),
    Unsatisfiable,
}

/// Interprets a `Range` header against a body of `len` bytes. Only single
/// byte ranges are honoured; anything else falls back to the full body.
pub fn parse_range(header: Option<&str>, len: u64) -> RangeRequest {
    let Some(spec) = header.and_then(|h| h.trim().strip_prefix("bytes=")) else {
        return RangeRequest::Full;
    };
    if spec.contains(',') {
        return RangeRequest::Full;
    }
    let Some((a, b)) = spec.trim().split_once('-') else {
        return RangeRequest::Full;
    };
    let (a, b) = (a.trim(), b.trim());
    let range = match (a.is_empty(), b.is_empty()) {
        (true, true) => return RangeRequest::Full,
        (true, false) => match b.parse::<u64>() {
            Ok(0) => return RangeRequest::Unsatisfiable,
            Ok(n) => (len.saturating_sub(n), len.saturating_sub(1)),
            Err(_) => return RangeRequest::Full,
        },
        (false, _) => {
            let Ok(start) = a.parse::<u64>() else {
                return RangeRequest::Full;
            };
            let end = if b.is_empty() {
                len.saturating_sub(1)
            } else {
                match b.parse::<u64>() {
                    Ok(e) if e >= start => e.min(len.saturating_sub(1)),
                    _ => return RangeRequest::Full,
                }
            };
            (start, end)
        }
    };
    if len == 0 || range.0 >= len {
        RangeRequest::Unsatisfiable
    } else {
        RangeRequest::Partial(range.0, range.1)
    }
}

use std::path::Path;

use image::imageops::{self, FilterType};

use super::decode::{DecodedVideo, VideoDecoder};
use super::{FrameTensor, VisualError};

/// `start + (end − start)·(i + 0.5)/T` for `i` in `0..T`.
pub fn frame_timestamps(start: f64, end: f64, t: usize) -> Vec<f64> {
    (0..t)
        .map(|i| start + (end - start) * (i as f64 + 0.5) / t as f64)
        .collect()
}

/// Decodes `path` and samples a `T × H × W × 3` clip from `[start, end)`.
pub fn sample_frames(
    decoder: &dyn VideoDecoder,
    path: &Path,
    start: f64,
    end: f64,
    shape: [usize; 3],
) -> Result<FrameTensor, VisualError> {
    let video = decoder.decode(path)?;
    sample_decoded(&video, start, end, shape)
}

/// Nearest frame per timestamp, centre-cropped to a square and resized.
pub fn sample_decoded(video: &DecodedVideo, start: f64, end: f64, shape: [usize; 3]) -> Result<FrameTensor, VisualError> {
    let [t, h, w] = shape;
    if t == 0 || h == 0 || w == 0 {
        return Err(VisualError::InvalidConfig("frame tensor dimensions must be positive".into()));
    }
    let duration = video.duration();
    // half a frame of slack absorbs rounding in manifest timestamps
    let slack = 0.5 / video.fps;
    if video.frames.is_empty() || !(start >= 0.0 && start < end && end <= duration + slack) {
        return Err(VisualError::WindowOutOfRange { start, end, duration });
    }
    let mut tensor = FrameTensor::zeros([t, h, w]);
    let last = video.frames.len() - 1;
    for (i, ts) in frame_timestamps(start, end, t).into_iter().enumerate() {
        let k = ((ts * video.fps).round() as usize).min(last);
        let frame = &video.frames[k];
        let (fw, fh) = frame.dimensions();
        let side = fw.min(fh);
        let crop = imageops::crop_imm(frame, (fw - side) / 2, (fh - side) / 2, side, side).to_image();
        let img = if (side as usize, side as usize) == (w, h) {
            crop
        } else {
            imageops::resize(&crop, w as u32, h as u32, FilterType::Triangle)
        };
        let base = i * h * w * 3;
        for (dst, &src) in tensor.values[base..base + h * w * 3].iter_mut().zip(img.as_raw()) {
            *dst = src as f32 / 255.0;
        }
    }
    Ok(tensor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::visual::decode::{write_pfv, PfvDecoder};
    use image::RgbImage;

    #[test]
    fn uniform_timestamps() {
        let ts = frame_timestamps(0.0, 6.0, 16);
        for (i, t) in ts.iter().enumerate() {
            assert!((t - 6.0 * (i as f64 + 0.5) / 16.0).abs() < 1e-12);
        }
        assert_eq!(frame_timestamps(2.0, 4.0, 2), vec![2.5, 3.5]);
    }

    #[test]
    fn constant_colour_clip() {
        let video = DecodedVideo {
            fps: 25.0,
            frames: vec![RgbImage::from_pixel(40, 30, image::Rgb([51, 102, 204])); 50],
        };
        let clip = sample_decoded(&video, 0.3, 1.7, [8, 16, 16]).unwrap();
        assert_eq!(clip.dims, [8, 16, 16, 3]);
        for px in clip.values.chunks(3) {
            assert_eq!(px, [0.2, 0.4, 0.8]);
        }
    }

    #[test]
    fn brightness_ramp_gives_increasing_means() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ramp.pfv");
        let frames: Vec<RgbImage> = (0..60)
            .map(|i| RgbImage::from_pixel(24, 32, image::Rgb([(i * 4) as u8; 3])))
            .collect();
        write_pfv(&path, 20, &frames).unwrap();
        let clip = sample_frames(&PfvDecoder, &path, 0.5, 2.5, [16, 8, 8]).unwrap();
        let means: Vec<f64> = (0..16).map(|t| clip.frame_mean(t)).collect();
        assert!(means.windows(2).all(|p| p[1] > p[0]), "{means:?}");
    }

    #[test]
    fn centre_crop_keeps_the_middle() {
        let frame = RgbImage::from_fn(30, 10, |x, _| image::Rgb([if (10..20).contains(&x) { 255 } else { 0 }; 3]));
        let video = DecodedVideo {
            fps: 10.0,
            frames: vec![frame; 10],
        };
        let clip = sample_decoded(&video, 0.0, 1.0, [1, 10, 10]).unwrap();
        assert!(clip.values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn window_checks() {
        let video = DecodedVideo {
            fps: 10.0,
            frames: vec![RgbImage::new(4, 4); 10],
        };
        for (s, e) in [(-0.1, 0.5), (0.5, 0.5), (0.2, 1.2), (0.8, 0.3)] {
            assert!(matches!(
                sample_decoded(&video, s, e, [2, 2, 2]),
                Err(VisualError::WindowOutOfRange { .. })
            ));
        }
        assert!(sample_decoded(&video, 0.0, 1.0, [2, 2, 2]).is_ok());
    }
}

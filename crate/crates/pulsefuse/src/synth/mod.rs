//! Synthetic dual-view recordings with known ground truth.
//!
//! Every photometric quantity (baseline, pulse amplitude, drift, noise) is a
//! pixel fraction in [0, 1]; frames are quantized to bytes only at the end.
//! A noise_sd around 0.008 is enough to dither the quantizer so the three
//! color channels stay linearly independent at the trace level.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::ingest::{
    write_frame_tensor, write_series_csv, FrameTensor, IngestError, RecordingLayout,
};
use crate::signal::SampledSignal;

/// Per-channel pulse strength for the facial view (R, G, B).
pub const FACE_CHANNEL_WEIGHTS: [f64; 3] = [0.3, 1.0, 0.5];
/// Per-channel pulse strength for the fingertip view (R, G, B).
pub const FINGER_CHANNEL_WEIGHTS: [f64; 3] = [1.0, 0.6, 0.2];

const BVP_RATE_HZ: f64 = 20.0;
const RESP_RATE_HZ: f64 = 50.0;
const RESP_FREQ_HZ: f64 = 0.25;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArtifactKind {
    /// Frames in the window are zeroed out entirely.
    Dropout,
    /// A constant offset of `magnitude` is added to every channel.
    IlluminationStep,
    /// Extra gaussian noise with sd `magnitude` on top of the sensor noise.
    AdditiveNoise,
    /// Frames in the window are driven to full scale.
    Saturation,
}

/// A localized corruption of one view, in seconds from the start.
#[derive(Debug, Clone, Copy)]
pub struct ArtifactSpec {
    pub kind: ArtifactKind,
    pub start_s: f64,
    pub len_s: f64,
    pub magnitude: f64,
}

impl ArtifactSpec {
    fn validate(&self, duration_s: f64) -> Result<(), SynthError> {
        if !self.start_s.is_finite() || !self.len_s.is_finite() || !self.magnitude.is_finite() {
            return Err(SynthError::InvalidConfig(
                "artifact fields must be finite".into(),
            ));
        }
        if self.start_s < 0.0 || self.len_s <= 0.0 || self.start_s + self.len_s > duration_s {
            return Err(SynthError::InvalidConfig(format!(
                "artifact window [{}, {}) falls outside the {duration_s} s recording",
                self.start_s,
                self.start_s + self.len_s
            )));
        }
        Ok(())
    }

    fn covers(&self, t_s: f64) -> bool {
        t_s >= self.start_s && t_s < self.start_s + self.len_s
    }
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub hr_bpm: f64,
    pub duration_s: f64,
    pub fps: f64,
    pub width: usize,
    pub height: usize,
    /// Pulse amplitude of the facial view as a pixel fraction.
    pub face_amplitude: f64,
    /// Pulse amplitude of the fingertip view as a pixel fraction.
    pub finger_amplitude: f64,
    pub face_baseline: [f64; 3],
    pub finger_baseline: [f64; 3],
    /// Gaussian sensor noise sd, pixel fraction.
    pub noise_sd: f64,
    /// Linear brightness drift per second, pixel fraction.
    pub drift: f64,
    pub seed: u64,
}

impl SynthConfig {
    pub fn new(hr_bpm: f64, duration_s: f64, seed: u64) -> Self {
        Self {
            hr_bpm,
            duration_s,
            fps: 30.0,
            width: 32,
            height: 32,
            face_amplitude: 0.05,
            finger_amplitude: 0.08,
            face_baseline: [0.42, 0.50, 0.38],
            finger_baseline: [0.62, 0.33, 0.24],
            noise_sd: 0.008,
            drift: 0.0,
            seed,
        }
    }

    pub fn n_frames(&self) -> usize {
        (self.duration_s * self.fps + 1e-9).floor() as usize
    }

    fn validate(&self) -> Result<(), SynthError> {
        if !(30.0..=180.0).contains(&self.hr_bpm) {
            return Err(SynthError::InvalidConfig(format!(
                "hr_bpm {} outside [30, 180]",
                self.hr_bpm
            )));
        }
        if !self.fps.is_finite() || self.fps <= 0.0 {
            return Err(SynthError::InvalidConfig(format!("fps {} invalid", self.fps)));
        }
        if self.n_frames() < 160 {
            return Err(SynthError::InvalidConfig(format!(
                "duration {} s at {} fps yields {} frames, need at least 160",
                self.duration_s,
                self.fps,
                self.n_frames()
            )));
        }
        if self.width < 2 || self.height < 2 {
            return Err(SynthError::InvalidConfig(format!(
                "frame size {}x{} too small",
                self.width, self.height
            )));
        }
        if !self.noise_sd.is_finite() || self.noise_sd < 0.0 {
            return Err(SynthError::InvalidConfig("noise_sd must be >= 0".into()));
        }
        if !self.drift.is_finite() {
            return Err(SynthError::InvalidConfig("drift must be finite".into()));
        }
        for v in self
            .face_baseline
            .iter()
            .chain(self.finger_baseline.iter())
            .chain([self.face_amplitude, self.finger_amplitude].iter())
        {
            if !v.is_finite() {
                return Err(SynthError::InvalidConfig(
                    "photometric fields must be finite".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Pulse waveform scaled to unit peak-to-peak before phase offset.
///
/// Fundamental at hr/60 Hz plus a second harmonic at a quarter of its
/// amplitude. The seed only rotates the global phase, so the spectrum is
/// seed-independent.
struct PulseWave {
    freq_hz: f64,
    phase: f64,
    scale: f64,
}

impl PulseWave {
    fn new(hr_bpm: f64, seed: u64) -> Self {
        let phase = (crate::nn::splitmix64(seed.wrapping_add(0x9e1a_7f3b)) >> 11) as f64
            / (1u64 << 53) as f64
            * 2.0
            * PI;
        // Peak-to-peak of sin(u) + 0.25 sin(2u), found numerically once on a
        // dense grid; the waveform is periodic so one period suffices.
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for k in 0..20_000 {
            let u = 2.0 * PI * k as f64 / 20_000.0;
            let v = u.sin() + 0.25 * (2.0 * u).sin();
            lo = lo.min(v);
            hi = hi.max(v);
        }
        Self {
            freq_hz: hr_bpm / 60.0,
            phase,
            scale: 1.0 / (hi - lo),
        }
    }

    fn value(&self, t_s: f64) -> f64 {
        let u = 2.0 * PI * self.freq_hz * t_s + self.phase;
        (u.sin() + 0.25 * (2.0 * u).sin()) * self.scale
    }
}

/// Clean pulse waveform sampled at the frame rate, unit peak-to-peak.
pub fn gen_ppg(cfg: &SynthConfig) -> Result<SampledSignal, SynthError> {
    cfg.validate()?;
    let wave = PulseWave::new(cfg.hr_bpm, cfg.seed);
    let samples = (0..cfg.n_frames())
        .map(|i| wave.value(i as f64 / cfg.fps))
        .collect();
    Ok(SampledSignal {
        samples,
        rate_hz: cfg.fps,
        t0_ms: 0,
    })
}

struct ViewPainter<'a> {
    baseline: [f64; 3],
    amplitude: f64,
    weights: [f64; 3],
    artifacts: &'a [ArtifactSpec],
}

fn paint_view(
    cfg: &SynthConfig,
    wave: &PulseWave,
    view: &ViewPainter,
    rng: &mut ChaCha8Rng,
) -> Result<FrameTensor, SynthError> {
    let (t, h, w) = (cfg.n_frames(), cfg.height, cfg.width);
    let mut pixels = vec![0u8; t * h * w * 3];
    let mut timestamps = Vec::with_capacity(t);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    for fi in 0..t {
        let t_s = fi as f64 / cfg.fps;
        timestamps.push((1000.0 * t_s).round() as i64);
        let pulse = view.amplitude * wave.value(t_s);
        let drift = cfg.drift * t_s;
        let mut hard_override: Option<u8> = None;
        let mut offset = 0.0;
        let mut extra_sd = 0.0;
        for a in view.artifacts {
            if !a.covers(t_s) {
                continue;
            }
            match a.kind {
                ArtifactKind::Dropout => hard_override = Some(0),
                ArtifactKind::Saturation => hard_override = Some(255),
                ArtifactKind::IlluminationStep => offset += a.magnitude,
                ArtifactKind::AdditiveNoise => extra_sd += a.magnitude.abs(),
            }
        }
        let sd = (cfg.noise_sd * cfg.noise_sd + extra_sd * extra_sd).sqrt();
        let frame = &mut pixels[fi * h * w * 3..(fi + 1) * h * w * 3];
        if let Some(v) = hard_override {
            // Noise is still drawn so the stream position stays independent
            // of the artifact schedule.
            for _ in 0..frame.len() {
                noise.sample(rng);
            }
            frame.fill(v);
            continue;
        }
        for px in frame.chunks_exact_mut(3) {
            for (c, slot) in px.iter_mut().enumerate() {
                let clean = view.baseline[c] + pulse * view.weights[c] + drift + offset;
                let noisy = clean + sd * noise.sample(rng);
                *slot = (255.0 * noisy).round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    Ok(FrameTensor::new(t, h, w, 3, pixels, timestamps)?)
}

fn label_rows(rate_hz: f64, duration_s: f64, f: impl Fn(f64) -> f64) -> Vec<(i64, f64)> {
    let n = (duration_s * rate_hz).floor() as i64;
    (0..=n)
        .map(|j| {
            let t_s = j as f64 / rate_hz;
            ((1000.0 * t_s).round() as i64, f(t_s))
        })
        .collect()
}

/// Renders both views plus the full label directory under
/// `<out_dir>/<subject_id>/<session_id>/`.
pub fn gen_dual_view(
    cfg: &SynthConfig,
    face_artifacts: &[ArtifactSpec],
    finger_artifacts: &[ArtifactSpec],
    out_dir: &Path,
    subject_id: &str,
    session_id: &str,
) -> Result<(FrameTensor, FrameTensor, RecordingLayout), SynthError> {
    cfg.validate()?;
    for a in face_artifacts.iter().chain(finger_artifacts.iter()) {
        a.validate(cfg.duration_s)?;
    }
    let wave = PulseWave::new(cfg.hr_bpm, cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let face = paint_view(
        cfg,
        &wave,
        &ViewPainter {
            baseline: cfg.face_baseline,
            amplitude: cfg.face_amplitude,
            weights: FACE_CHANNEL_WEIGHTS,
            artifacts: face_artifacts,
        },
        &mut rng,
    )?;
    let finger = paint_view(
        cfg,
        &wave,
        &ViewPainter {
            baseline: cfg.finger_baseline,
            amplitude: cfg.finger_amplitude,
            weights: FINGER_CHANNEL_WEIGHTS,
            artifacts: finger_artifacts,
        },
        &mut rng,
    )?;

    let session_dir: PathBuf = out_dir.join(subject_id).join(session_id);
    let label_dir = session_dir.join("labels");
    std::fs::create_dir_all(&label_dir)?;

    let face_path = session_dir.join("face.m3ft");
    let finger_path = session_dir.join("finger.m3ft");
    write_frame_tensor(&face_path, &face)?;
    write_frame_tensor(&finger_path, &finger)?;

    let d = cfg.duration_s;
    write_series_csv(
        &label_dir.join("BVP.csv"),
        "bvp",
        &label_rows(BVP_RATE_HZ, d, |t| wave.value(t)),
    )?;
    write_series_csv(
        &label_dir.join("HR.csv"),
        "hr_bpm",
        &label_rows(1.0, d, |_| cfg.hr_bpm),
    )?;
    write_series_csv(
        &label_dir.join("SpO2.csv"),
        "spo2_pct",
        &label_rows(1.0, d, |_| 98.0),
    )?;
    write_series_csv(
        &label_dir.join("RR.csv"),
        "resp",
        &label_rows(RESP_RATE_HZ, d, |t| (2.0 * PI * RESP_FREQ_HZ * t).sin()),
    )?;
    write_frame_index_csv(&session_dir.join("frames_timestamp.csv"), &face.timestamps_ms)?;

    let layout = RecordingLayout {
        subject_id: subject_id.to_string(),
        face_path,
        finger_path,
        label_dir,
    };
    Ok((face, finger, layout))
}

fn write_frame_index_csv(path: &Path, timestamps_ms: &[i64]) -> Result<(), SynthError> {
    let tmp = path.with_extension("csv.tmp");
    {
        let mut w = csv::Writer::from_path(&tmp)?;
        w.write_record(["frame_index", "timestamp_ms"])?;
        for (i, ts) in timestamps_ms.iter().enumerate() {
            w.write_record([i.to_string(), ts.to_string()])?;
        }
        w.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

impl From<csv::Error> for SynthError {
    fn from(e: csv::Error) -> Self {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => SynthError::Io(io),
            other => SynthError::InvalidConfig(format!("csv write failed: {other:?}")),
        }
    }
}

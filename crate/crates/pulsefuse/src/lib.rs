//! Pulse extraction from paired face and fingertip video.
//!
//! The crate is organized as a pipeline of independent layers:
//!
//! * [`signal`] — band-pass filtering, Welch spectra, heart-rate estimation,
//!   peak detection, HRV descriptors, and agreement metrics.
//! * [`ingest`] — the `.m3ft` frame container, label CSV parsing, temporal
//!   alignment, and chunking into fixed-length training windows.
//! * [`synth`] — a deterministic dual-view recording generator with
//!   controllable heart rate, noise, drift, and injected artifacts.
//! * [`rppg`] — classical single-view extractors (GREEN, ICA, POS, OMIT).
//! * [`nn`] — a minimal reverse-mode autodiff engine on f64 tensors, with
//!   Adam, a one-cycle schedule, finite-difference checking, and checkpoints.
//! * [`ssm`] — the single-view branch: temporal-difference convolution,
//!   selective state-space scans, and Mamba-style blocks.
//! * [`fusion`] — the cross-view scan, fusion blocks, the full dual-view
//!   network, and its training losses.
//! * [`harness`] — fold splitting, training and evaluation loops, reports,
//!   and the model summary.
//!
//! Every capability has a runnable demo under `examples/`; start with
//! `cargo run --release --example classical_hr`.

pub mod fusion;
pub mod harness;
pub mod ingest;
pub mod nn;
pub mod rppg;
pub mod signal;
pub mod ssm;
pub mod synth;

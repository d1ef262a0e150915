//! Synthetic corpus generator: a simple HMM whose states are AU prototype
//! vectors, with Gaussian frame noise and a label derived from state
//! occupancy. Desk-scale stand-in for real recordings.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ingest::{AuFrame, AuSequence, FrameCorpus, NUM_AUS};

pub const LABEL_SCALE: f64 = 24.0;

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub n_states: usize,
    pub n_videos: usize,
    pub frames_per_video: usize,
    pub fps: f64,
    pub noise_sigma: f64,
    /// Probability of staying in the current state each step; the remainder
    /// spreads uniformly over the other states.
    pub transition_stay_prob: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_states: 20,
            n_videos: 200,
            frames_per_video: 300,
            fps: 5.0,
            noise_sigma: 0.1,
            transition_stay_prob: 0.9,
            seed: 0,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.n_states == 0 {
            return Err(Error::InvalidArgument("n_states must be ≥ 1".into()));
        }
        if self.n_videos == 0 {
            return Err(Error::InvalidArgument("n_videos must be ≥ 1".into()));
        }
        if self.frames_per_video == 0 {
            return Err(Error::InvalidArgument("frames_per_video must be ≥ 1".into()));
        }
        if !(self.fps > 0.0) {
            return Err(Error::InvalidArgument(format!("bad fps {}", self.fps)));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "bad noise sigma {}",
                self.noise_sigma
            )));
        }
        if !(0.0..=1.0).contains(&self.transition_stay_prob) {
            return Err(Error::InvalidArgument(format!(
                "stay probability {} outside [0, 1]",
                self.transition_stay_prob
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub corpus: FrameCorpus,
    /// Per-state AU prototype vectors, in state order.
    pub prototypes: Vec<[f64; NUM_AUS]>,
    /// Per-video hidden state path, aligned with the corpus sequences.
    pub state_paths: Vec<Vec<usize>>,
    /// Per-video regression label: fraction of frames spent in state 0,
    /// scaled to [0, 24].
    pub labels: Vec<(String, f64)>,
}

fn sample_prototypes(n_states: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; NUM_AUS]> {
    (0..n_states)
        .map(|_| {
            let mut p = [0.0; NUM_AUS];
            for v in &mut p {
                *v = 0.5 + rng.gen::<f64>() * 4.0;
            }
            p
        })
        .collect()
}

fn generate_video(
    cfg: &SynthConfig,
    prototypes: &[[f64; NUM_AUS]],
    index: usize,
    seed: u64,
) -> (AuSequence, Vec<usize>, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Zero sigma means noiseless prototype playback.
    let noise = if cfg.noise_sigma > 0.0 {
        Some(Normal::new(0.0, cfg.noise_sigma).expect("validated sigma"))
    } else {
        None
    };
    let n_states = cfg.n_states;
    let mut state = rng.gen_range(0..n_states);
    let mut path = Vec::with_capacity(cfg.frames_per_video);
    let mut frames = Vec::with_capacity(cfg.frames_per_video);
    let mut in_state0 = 0usize;
    for t in 0..cfg.frames_per_video {
        if t > 0 && n_states > 1 && rng.gen::<f64>() >= cfg.transition_stay_prob {
            // Uniform switch over the other states.
            let step = rng.gen_range(1..n_states);
            state = (state + step) % n_states;
        }
        path.push(state);
        if state == 0 {
            in_state0 += 1;
        }
        let mut au = prototypes[state];
        if let Some(n) = &noise {
            for v in &mut au {
                *v = (*v + n.sample(&mut rng)).clamp(0.0, 5.0);
            }
        }
        frames.push(AuFrame {
            timestamp: t as f64 / cfg.fps,
            confidence: 1.0,
            au,
        });
    }
    let label = in_state0 as f64 / cfg.frames_per_video as f64 * LABEL_SCALE;
    (
        AuSequence {
            video_id: format!("video_{index:03}"),
            source_fps: cfg.fps,
            frames,
        },
        path,
        label,
    )
}

/// Generates the full synthetic corpus. Prototypes come from the master
/// seed; each video runs from its own derived seed, so `workers` only
/// changes wall time, never output.
pub fn generate(cfg: &SynthConfig, workers: usize) -> Result<SynthOutput> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let prototypes = sample_prototypes(cfg.n_states, &mut rng);
    let video_seeds: Vec<u64> = (0..cfg.n_videos).map(|_| rng.gen()).collect();

    let generated: Vec<(AuSequence, Vec<usize>, f64)> = if workers.max(1) == 1 {
        video_seeds
            .iter()
            .enumerate()
            .map(|(i, &s)| generate_video(cfg, &prototypes, i, s))
            .collect()
    } else {
        video_seeds
            .par_iter()
            .enumerate()
            .map(|(i, &s)| generate_video(cfg, &prototypes, i, s))
            .collect()
    };

    let mut sequences = Vec::with_capacity(cfg.n_videos);
    let mut state_paths = Vec::with_capacity(cfg.n_videos);
    let mut labels = Vec::with_capacity(cfg.n_videos);
    for (seq, path, label) in generated {
        labels.push((seq.video_id.clone(), label));
        state_paths.push(path);
        sequences.push(seq);
    }
    Ok(SynthOutput {
        corpus: FrameCorpus { sequences },
        prototypes,
        state_paths,
        labels,
    })
}

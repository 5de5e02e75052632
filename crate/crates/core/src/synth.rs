//! Seeded synthetic tactile trials.
//!
//! Each trial holds a grasp, then slides at constant velocity for 100 mm,
//! then holds again. Strain-gauge channels carry a grasp offset with slow
//! drift and ramp up while sliding; PVDF channels are quiet until a
//! damped-sinusoid burst marks the onset. Rough materials keep emitting
//! Poisson-timed bursts for the whole slide.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{standard_layout, Finger, SeKind, SegmentAnnotation, TactileTrial};
use crate::error::{Error, Result};

/// Sliding distance of every segment.
pub const SLIDE_MM: f64 = 100.0;
/// Velocity at which the amplitude bases are specified.
pub const REFERENCE_VELOCITY_MM_S: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    pub name: String,
    pub roughness: f64,
    pub friction_gain: f64,
    pub burst_carrier_hz: f64,
    pub burst_decay_s: f64,
    pub continuous_burst: bool,
}

impl MaterialParams {
    pub fn validate(&self, sample_rate_hz: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&self.roughness) {
            return Err(Error::Config(format!("{}: roughness {} outside [0, 1]", self.name, self.roughness)));
        }
        if !(self.friction_gain > 0.0) || !(self.burst_decay_s > 0.0) {
            return Err(Error::Config(format!("{}: friction gain and burst decay must be positive", self.name)));
        }
        if !(self.burst_carrier_hz > 0.0 && self.burst_carrier_hz < sample_rate_hz / 2.0) {
            return Err(Error::Config(format!(
                "{}: burst carrier {} Hz is not below the Nyquist frequency {} Hz",
                self.name,
                self.burst_carrier_hz,
                sample_rate_hz / 2.0
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub sample_rate_hz: f64,
    pub velocities_mm_s: Vec<f64>,
    pub trials_per_case: usize,
    /// Probability that a finger, and so each of its channels, touches the
    /// object in a given trial.
    pub contact_mask_prob: f64,
    pub noise_sg: f64,
    pub noise_pvdf: f64,
    pub seed: u64,
    pub grasp_offset: f64,
    /// SG ramp slope (units/s) per unit friction gain at the reference velocity.
    pub sg_slope_base: f64,
    /// PVDF burst amplitude at the reference velocity.
    pub burst_amp_base: f64,
    /// Largest pre-slip SG drift rate (units/s), drawn per channel.
    pub drift_max: f64,
    /// Expected ongoing bursts per mm of sliding at roughness 1.
    pub burst_rate_per_mm: f64,
    /// Range of per-channel contact gains.
    pub channel_gain: (f64, f64),
    /// Range of the pre-slip hold duration.
    pub hold_s: (f64, f64),
    /// Hold after the slide ends.
    pub tail_s: f64,
    /// Pause between segments of a cycle trial.
    pub pause_s: f64,
    /// Time constant of an SG return to the grasp offset after sliding;
    /// `None` holds the accumulated load.
    pub sg_relax_s: Option<f64>,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            sample_rate_hz: 2000.0,
            velocities_mm_s: vec![20.0, 40.0, 60.0],
            trials_per_case: 28,
            contact_mask_prob: 0.7,
            noise_sg: 0.01,
            noise_pvdf: 0.01,
            seed: 7,
            grasp_offset: 1.0,
            sg_slope_base: 0.2,
            burst_amp_base: 0.5,
            drift_max: 0.01,
            burst_rate_per_mm: 1.5,
            channel_gain: (0.8, 1.2),
            hold_s: (1.0, 1.5),
            tail_s: 0.5,
            pause_s: 2.0,
            sg_relax_s: None,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.sample_rate_hz > 0.0) {
            return bad(format!("sample rate must be positive, got {}", self.sample_rate_hz));
        }
        if self.velocities_mm_s.is_empty() || self.velocities_mm_s.iter().any(|&v| !(v > 0.0)) {
            return bad("velocities must be a non-empty list of positive values".into());
        }
        if self.trials_per_case == 0 {
            return bad("trials per case must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.contact_mask_prob) {
            return bad(format!("contact probability {} outside [0, 1]", self.contact_mask_prob));
        }
        if !(self.noise_sg >= 0.0 && self.noise_pvdf >= 0.0) {
            return bad("noise levels must be non-negative".into());
        }
        let (g0, g1) = self.channel_gain;
        let (h0, h1) = self.hold_s;
        if !(g0 > 0.0 && g1 >= g0 && h0 > 0.0 && h1 >= h0) {
            return bad("gain and hold ranges must be positive and ordered".into());
        }
        if !(self.tail_s >= 0.0 && self.pause_s >= 0.0 && self.sg_relax_s.map_or(true, |r| r > 0.0) && self.drift_max >= 0.0) {
            return bad("tail, pause, relaxation and drift must be non-negative".into());
        }
        Ok(())
    }

    fn velocity_scale(&self, velocity: f64) -> f64 {
        velocity / REFERENCE_VELOCITY_MM_S
    }
}

pub fn slip_duration_s(velocity_mm_s: f64) -> f64 {
    SLIDE_MM / velocity_mm_s
}

/// Six training materials (two rough, four smooth) and four unseen ones.
pub fn default_materials() -> (Vec<MaterialParams>, Vec<MaterialParams>) {
    let m = |name: &str, roughness, friction_gain, burst_carrier_hz, burst_decay_s, continuous_burst| MaterialParams {
        name: name.to_string(),
        roughness,
        friction_gain,
        burst_carrier_hz,
        burst_decay_s,
        continuous_burst,
    };
    let training = vec![
        m("M1", 0.8, 9.0, 250.0, 0.40, true),
        m("M2", 0.2, 7.8, 150.0, 2.5, false),
        m("M3", 0.3, 9.6, 200.0, 3.0, false),
        m("M4", 0.15, 10.5, 300.0, 2.0, false),
        m("M5", 0.25, 8.4, 350.0, 3.5, false),
        m("M6", 0.7, 10.2, 180.0, 0.55, true),
    ];
    let unseen = vec![
        m("Wood", 0.5, 9.3, 220.0, 0.50, true),
        m("Iron", 0.1, 11.1, 320.0, 2.2, false),
        m("Copper", 0.12, 8.1, 380.0, 3.2, false),
        m("Cloth", 0.9, 7.5, 130.0, 0.75, true),
    ];
    (training, unseen)
}

/// Per-trial random state shared by all segments of a trial.
struct ChannelState {
    contacted: bool,
    gain: f64,
    drift: f64,
}

/// Contact is drawn per finger: a touching finger loads every element on
/// it, so each channel is in contact with `contact_mask_prob`. At least one
/// finger always touches.
fn draw_channels(config: &GenConfig, rng: &mut ChaCha8Rng) -> Vec<ChannelState> {
    let layout = standard_layout();
    let mut touching: Vec<bool> = Finger::ALL.iter().map(|_| rng.gen_bool(config.contact_mask_prob)).collect();
    if !touching.iter().any(|&t| t) {
        let pick = rng.gen_range(0..touching.len());
        touching[pick] = true;
    }
    layout
        .iter()
        .map(|meta| ChannelState {
            contacted: touching[Finger::ALL.iter().position(|&f| f == meta.finger).unwrap_or(0)],
            gain: rng.gen_range(config.channel_gain.0..=config.channel_gain.1),
            drift: rng.gen_range(-config.drift_max..=config.drift_max),
        })
        .collect()
}

/// Add `amp * exp(-t/decay) * sin(2 pi f t)` starting at sample `start`.
/// Damping time constant applied once sliding stops.
const STICK_DAMPING_S: f64 = 0.02;

/// Damped sinusoid starting at sample `start`; after sample `stop` the
/// vibration dies out with the much shorter stick damping.
fn add_burst(x: &mut [f64], start: usize, stop: usize, amp: f64, carrier_hz: f64, decay_s: f64, fs: f64) {
    let span = ((8.0 * decay_s * fs).ceil() as usize).max(1);
    let stop = stop.max(start);
    let end = (start + span).min(stop + (8.0 * STICK_DAMPING_S * fs).ceil() as usize).min(x.len());
    for (k, v) in x[start.min(end)..end].iter_mut().enumerate() {
        let t = k as f64 / fs;
        let after = (start + k).saturating_sub(stop) as f64 / fs;
        *v += amp * (-t / decay_s - after / STICK_DAMPING_S).exp() * (2.0 * PI * carrier_hz * t).sin();
    }
}

/// Noise-free SG level relative to the grasp offset: ramps during each
/// slide, then holds or relaxes back.
fn sg_profile(n: usize, fs: f64, segments: &[SegmentAnnotation], slopes: &[f64], relax_s: Option<f64>) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for (seg, &slope) in segments.iter().zip(slopes) {
        let peak = slope * (seg.slip_end_s - seg.slip_onset_s);
        let a = (seg.slip_onset_s * fs).round() as usize;
        for (i, v) in out.iter_mut().enumerate().skip(a) {
            let t = i as f64 / fs;
            *v += if t < seg.slip_end_s {
                slope * (t - seg.slip_onset_s)
            } else {
                relax_s.map_or(peak, |r| peak * (-(t - seg.slip_end_s) / r).exp())
            };
        }
    }
    out
}

/// Build a trial from a list of (velocity, hold before the onset) pairs.
fn synthesize(
    id: String,
    material: &MaterialParams,
    plan: &[(f64, f64)],
    config: &GenConfig,
    rng: &mut ChaCha8Rng,
) -> Result<TactileTrial> {
    config.validate()?;
    material.validate(config.sample_rate_hz)?;
    let fs = config.sample_rate_hz;

    let mut segments = Vec::with_capacity(plan.len());
    let mut t = 0.0;
    for &(velocity, hold) in plan {
        let onset = t + hold;
        let end = onset + slip_duration_s(velocity);
        segments.push(SegmentAnnotation { velocity_mm_s: velocity, slip_onset_s: onset, slip_end_s: end });
        t = end;
    }
    let n = ((t + config.tail_s) * fs).round() as usize;

    let layout = standard_layout();
    let states = draw_channels(config, rng);
    let sg_noise = Normal::new(0.0, config.noise_sg).map_err(|e| Error::Config(e.to_string()))?;
    let pvdf_noise = Normal::new(0.0, config.noise_pvdf).map_err(|e| Error::Config(e.to_string()))?;

    // burst schedule shared by every contacted PVDF element: (time, amplitude, slide end)
    let mut bursts = Vec::new();
    for seg in &segments {
        let scale = config.velocity_scale(seg.velocity_mm_s);
        bursts.push((seg.slip_onset_s, config.burst_amp_base * scale, seg.slip_end_s));
        let rate = material.roughness * seg.velocity_mm_s * config.burst_rate_per_mm;
        if material.continuous_burst && rate > 0.0 {
            let gap = Exp::new(rate).map_err(|e| Error::Config(e.to_string()))?;
            let mut tb = seg.slip_onset_s + gap.sample(rng);
            while tb < seg.slip_end_s {
                bursts.push((tb, config.burst_amp_base * scale * rng.gen_range(0.5..1.0), seg.slip_end_s));
                tb += gap.sample(rng);
            }
        }
    }

    let slopes: Vec<f64> = segments
        .iter()
        .map(|s| config.sg_slope_base * material.friction_gain * config.velocity_scale(s.velocity_mm_s))
        .collect();
    let ramp = sg_profile(n, fs, &segments, &slopes, config.sg_relax_s);

    let mut samples = Vec::with_capacity(layout.len());
    for (meta, st) in layout.iter().zip(&states) {
        let mut x = vec![0.0; n];
        match meta.kind {
            SeKind::SG => {
                if st.contacted {
                    for (i, v) in x.iter_mut().enumerate() {
                        let ti = i as f64 / fs;
                        *v = config.grasp_offset + st.drift * ti + st.gain * ramp[i];
                    }
                }
                for v in x.iter_mut() {
                    *v += sg_noise.sample(rng);
                }
            }
            SeKind::PVDF => {
                if st.contacted {
                    for &(tb, amp, stop) in &bursts {
                        let start = (tb * fs).round() as usize;
                        let stop = (stop * fs).round() as usize;
                        add_burst(&mut x, start, stop, st.gain * amp, material.burst_carrier_hz, material.burst_decay_s, fs);
                    }
                }
                for v in x.iter_mut() {
                    *v += pvdf_noise.sample(rng);
                }
            }
        }
        samples.push(x);
    }
    TactileTrial::new(id, material.name.clone(), fs, layout, samples, segments)
}

fn velocity_tag(v: f64) -> String {
    format!("{v}").replace('.', "p")
}

/// One single-segment trial: hold, slide 100 mm at `velocity`, hold.
pub fn gen_trial(material: &MaterialParams, velocity: f64, config: &GenConfig, trial_seed: u64) -> Result<TactileTrial> {
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
    let hold = rng.gen_range(config.hold_s.0..=config.hold_s.1);
    let id = format!("{}_v{}_s{trial_seed:016x}", material.name, velocity_tag(velocity));
    synthesize(id, material, &[(velocity, hold)], config, &mut rng)
}

/// Three (or however many velocities are configured) slides in one trial,
/// separated by `pause_s` holds.
pub fn gen_cycle(material: &MaterialParams, config: &GenConfig, trial_seed: u64) -> Result<TactileTrial> {
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
    let first_hold = rng.gen_range(config.hold_s.0..=config.hold_s.1);
    let plan: Vec<(f64, f64)> = config
        .velocities_mm_s
        .iter()
        .enumerate()
        .map(|(i, &v)| (v, if i == 0 { first_hold } else { config.pause_s }))
        .collect();
    let id = format!("{}_cycle_s{trial_seed:016x}", material.name);
    synthesize(id, material, &plan, config, &mut rng)
}

/// Seed of the `index`-th trial drawn from a master seed.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng.next_u64()
}

/// One scheduled trial of a corpus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannedTrial {
    pub material_index: usize,
    pub velocity_mm_s: f64,
    pub repetition: usize,
    pub seed: u64,
}

impl PlannedTrial {
    pub fn id(&self, materials: &[MaterialParams]) -> String {
        format!(
            "{}_v{}_{:02}",
            materials[self.material_index].name,
            velocity_tag(self.velocity_mm_s),
            self.repetition
        )
    }

    pub fn generate(&self, materials: &[MaterialParams], config: &GenConfig) -> Result<TactileTrial> {
        let mut t = gen_trial(&materials[self.material_index], self.velocity_mm_s, config, self.seed)?;
        t.id = self.id(materials);
        Ok(t)
    }
}

/// Every trial of a corpus in material, velocity, repetition order, each
/// with its own seed derived from the master seed.
pub fn corpus_plan(materials: &[MaterialParams], config: &GenConfig) -> Vec<PlannedTrial> {
    let mut plan = Vec::new();
    for material_index in 0..materials.len() {
        for &velocity_mm_s in &config.velocities_mm_s {
            for repetition in 0..config.trials_per_case {
                let seed = derive_seed(config.seed, plan.len() as u64);
                plan.push(PlannedTrial { material_index, velocity_mm_s, repetition, seed });
            }
        }
    }
    plan
}

pub fn gen_corpus(materials: &[MaterialParams], config: &GenConfig) -> Result<Vec<TactileTrial>> {
    if materials.is_empty() {
        return Err(Error::Config("at least one material is required".into()));
    }
    corpus_plan(materials, config)
        .into_par_iter()
        .map(|p| p.generate(materials, config))
        .collect()
}

pub fn save_registry(materials: &[MaterialParams], path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(materials)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_registry(path: &Path) -> Result<Vec<MaterialParams>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet() -> GenConfig {
        GenConfig { noise_sg: 0.0, noise_pvdf: 0.0, ..GenConfig::default() }
    }

    #[test]
    fn slip_durations() {
        assert_eq!(slip_duration_s(20.0), 5.0);
        assert!((slip_duration_s(60.0) - 1.6666666666666667).abs() < 1e-15);
        let (tr, _) = default_materials();
        let t = gen_trial(&tr[1], 20.0, &GenConfig::default(), 3).unwrap();
        let s = t.segments[0];
        assert!((s.slip_end_s - s.slip_onset_s - 5.0).abs() < 1e-12);
        assert!(s.slip_onset_s >= 1.0);
    }

    #[test]
    fn default_material_sets() {
        let (tr, un) = default_materials();
        assert_eq!(tr.len(), 6);
        assert_eq!(un.len(), 4);
        assert_eq!(tr.iter().filter(|m| m.continuous_burst).count(), 2);
        let names: Vec<&str> = un.iter().map(|m| m.name.as_str()).collect();
        assert_eq!(names, ["Wood", "Iron", "Copper", "Cloth"]);
        for m in tr.iter().chain(&un) {
            m.validate(2000.0).unwrap();
        }
    }

    #[test]
    fn smooth_pvdf_is_zero_outside_onset_burst() {
        let mat = MaterialParams {
            name: "S".into(),
            roughness: 0.0,
            friction_gain: 1.0,
            burst_carrier_hz: 200.0,
            burst_decay_s: 0.02,
            continuous_burst: true,
        };
        let t = gen_trial(&mat, 40.0, &quiet(), 9).unwrap();
        let fs = t.sample_rate_hz;
        let onset = (t.segments[0].slip_onset_s * fs).round() as usize;
        let span = (8.0 * 0.02 * fs).ceil() as usize;
        for (meta, col) in t.channels.iter().zip(&t.samples) {
            if meta.kind != SeKind::PVDF {
                continue;
            }
            assert!(col[..onset].iter().all(|&v| v == 0.0));
            assert!(col[onset + span..].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let (tr, _) = default_materials();
        let a = gen_trial(&tr[0], 60.0, &GenConfig::default(), 42).unwrap();
        let b = gen_trial(&tr[0], 60.0, &GenConfig::default(), 42).unwrap();
        assert_eq!(a, b);
        let c = gen_trial(&tr[0], 60.0, &GenConfig::default(), 43).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn carrier_above_nyquist_rejected() {
        let (mut tr, _) = default_materials();
        tr[0].burst_carrier_hz = 1500.0;
        assert!(matches!(gen_trial(&tr[0], 20.0, &GenConfig::default(), 1), Err(Error::Config(_))));
    }

    #[test]
    fn corpus_counts() {
        let (_, un) = default_materials();
        let cfg = GenConfig { trials_per_case: 1, ..GenConfig::default() };
        assert_eq!(corpus_plan(&un, &cfg).len(), 12);
        let (tr, _) = default_materials();
        assert_eq!(corpus_plan(&tr, &GenConfig::default()).len(), 504);
    }

    #[test]
    fn corpus_seeds_are_distinct() {
        let (tr, _) = default_materials();
        let mut seeds: Vec<u64> = corpus_plan(&tr, &GenConfig::default()).iter().map(|p| p.seed).collect();
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), 504);
    }

    #[test]
    fn cycle_has_three_separated_segments() {
        let (tr, _) = default_materials();
        let t = gen_cycle(&tr[2], &GenConfig::default(), 5).unwrap();
        assert_eq!(t.segments.len(), 3);
        for w in t.segments.windows(2) {
            assert!((w[1].slip_onset_s - w[0].slip_end_s - 2.0).abs() < 1e-12);
        }
        let v: Vec<f64> = t.segments.iter().map(|s| s.velocity_mm_s).collect();
        assert_eq!(v, vec![20.0, 40.0, 60.0]);
    }

    #[test]
    fn sg_ramps_during_slide() {
        let (tr, _) = default_materials();
        let t = gen_trial(&tr[3], 40.0, &quiet(), 11).unwrap();
        let fs = t.sample_rate_hz;
        let s = t.segments[0];
        let a = (s.slip_onset_s * fs).round() as usize + 10;
        let b = (s.slip_end_s * fs).round() as usize - 10;
        for (meta, col) in t.channels.iter().zip(&t.samples) {
            if meta.kind == SeKind::SG && col[0] != 0.0 {
                assert!(col[b] > col[a]);
            }
        }
    }

    #[test]
    fn registry_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("materials.json");
        let (tr, _) = default_materials();
        save_registry(&tr, &path).unwrap();
        assert_eq!(load_registry(&path).unwrap(), tr);
    }
}

//! Seeded synthetic corpus: audio, near-one-hot posteriors, pseudo
//! contextual frames and labels that are deterministic functions of the
//! generator's duration and pitch parameters.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::align::{Alignment, Span};
use crate::duration::{DurationFitter, DurationModel};
use crate::error::{Error, Result};
use crate::inventory::{self, SIL};
use crate::io::tsv::format_duration_model;
use crate::io::{write_alignment, write_manifest, write_matrix, write_wav};
use crate::io::{AudioBuffer, DenseMatrix, UtteranceManifestEntry};
use crate::lld::{extract_frame_features, FrameFeatures, SEMITONE_REF_HZ};
use crate::io::wav::SAMPLE_RATE;

const HOP: usize = 160;
const WINDOW: usize = 400;
const PROJECTION_SEED: u64 = 0x1D7A_5EED;
const CUE_FEATURES: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_utterances: usize,
    pub seed: u64,
    pub min_phones: usize,
    pub max_phones: usize,
    /// Largest per-utterance elongation, in generator standard deviations.
    pub max_elongation: f64,
    /// Largest pitch-contour amplitude, in semitones.
    pub max_excursion_st: f64,
    /// Contour standard deviation per prosody point.
    pub prosody_step_st: f64,
    pub posterior_boost: f64,
    pub posterior_noise: f64,
    pub context_width: usize,
    /// Native draws per phone used to fit the reference duration model.
    pub native_draws: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_utterances: 64,
            seed: 0,
            min_phones: 3,
            max_phones: 5,
            max_elongation: 3.0,
            max_excursion_st: 5.0,
            prosody_step_st: 0.35,
            posterior_boost: 4.0,
            posterior_noise: 0.7,
            context_width: 1024,
            native_draws: 50,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_utterances == 0 {
            return Err(Error::Config("n_utterances must be at least 1".into()));
        }
        if self.min_phones == 0 || self.min_phones > self.max_phones {
            return Err(Error::Config(format!(
                "phone range {}..={} is empty",
                self.min_phones, self.max_phones
            )));
        }
        if self.context_width == 0 || self.native_draws < 2 {
            return Err(Error::Config("context_width and native_draws too small".into()));
        }
        let finite = [
            self.max_elongation,
            self.max_excursion_st,
            self.prosody_step_st,
            self.posterior_boost,
            self.posterior_noise,
        ];
        if finite.iter().any(|v| !v.is_finite() || *v < 0.0) || self.prosody_step_st == 0.0 {
            return Err(Error::Config("generator parameters must be finite and >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhoneGenerator {
    pub mean_ms: f64,
    pub std_ms: f64,
}

/// Shared by every phone so that GoPD differs from the fluency rule's
/// per-phone term only by a constant.
pub const GENERATOR_STD_MS: f64 = 40.0;

/// Native duration generator for a phone index: voiced phones are longer
/// than unvoiced ones, with a small per-phone spread.
pub fn phone_generator(index: usize) -> PhoneGenerator {
    let spread = (index % 7) as f64;
    let mean_ms = if inventory::is_voiced(index) {
        120.0 + 2.0 * spread
    } else {
        80.0 + 1.0 * spread
    };
    PhoneGenerator {
        mean_ms,
        std_ms: GENERATOR_STD_MS,
    }
}

/// `clamp(round(10 + 2 * mean(-(d - mu)^2 / (2 sigma^2))), 0, 10)`.
pub fn fluency_label(durations_ms: &[f64], generators: &[PhoneGenerator]) -> u8 {
    let n = durations_ms.len().max(1) as f64;
    let mean: f64 = durations_ms
        .iter()
        .zip(generators)
        .map(|(d, g)| -(d - g.mean_ms).powi(2) / (2.0 * g.std_ms * g.std_ms))
        .sum::<f64>()
        / n;
    (10.0 + 2.0 * mean).round().clamp(0.0, 10.0) as u8
}

pub fn prosody_label(contour_std_st: f64, step_st: f64) -> u8 {
    (contour_std_st / step_st).round().clamp(0.0, 10.0) as u8
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticUtterance {
    pub id: String,
    pub phones: Vec<String>,
    pub alignment: Alignment,
    pub audio: AudioBuffer,
    /// Row-normalized log-posteriors, frames x inventory.
    pub posteriors: DenseMatrix,
    pub context: DenseMatrix,
    pub fluency: u8,
    pub prosody: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub utterances: Vec<SyntheticUtterance>,
    pub durations: DurationModel,
}

fn quantize_frames(duration_ms: f64) -> usize {
    ((duration_ms / 10.0).round() as i64).max(1) as usize
}

/// Alternates unvoiced and voiced phones so that voicing segments follow
/// phone boundaries; single-phone utterances are voiced.
fn draw_phones(rng: &mut ChaCha8Rng, spec: &SyntheticSpec) -> Vec<usize> {
    let len = rng.random_range(spec.min_phones..=spec.max_phones);
    let (voiced, unvoiced): (Vec<usize>, Vec<usize>) = (0..SIL).partition(|&p| inventory::is_voiced(p));
    let mut want_voiced = len == 1 || rng.random::<bool>();
    (0..len)
        .map(|_| {
            let pool = if want_voiced { &voiced } else { &unvoiced };
            want_voiced = !want_voiced;
            pool[rng.random_range(0..pool.len())]
        })
        .collect()
}

/// Fixed Gaussian projection from per-frame cue features to the contextual
/// width, scaled by `1/sqrt(6)`.
pub fn context_projection(width: usize) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(PROJECTION_SEED);
    let scale = 1.0 / (CUE_FEATURES as f64).sqrt();
    Array2::from_shape_simple_fn((width, CUE_FEATURES), || {
        let z: f64 = StandardNormal.sample(&mut rng);
        z * scale
    })
}

/// Projects frame features to a pseudo contextual sequence at half the
/// frame rate: pairs of frames are averaged, then `tanh(P phi)`.
pub fn pseudo_context(features: &FrameFeatures, projection: &Array2<f64>) -> Result<DenseMatrix> {
    let n = features.len();
    if n == 0 {
        return Err(Error::Empty("no frames to project".into()));
    }
    let rows = n.div_ceil(2);
    let mut phi = Array2::<f64>::zeros((rows, CUE_FEATURES));
    for r in 0..rows {
        let frames = (2 * r)..(2 * r + 2).min(n);
        let count = frames.len() as f64;
        for t in frames {
            let v = [
                features.loudness[t].ln_1p(),
                features.alpha_ratio_db[t] / 10.0,
                features.f0_semitones[t] / 12.0,
                10.0 * features.jitter_local[t],
                if features.voiced[t] { 1.0 } else { 0.0 },
                1.0,
            ];
            for (c, x) in v.iter().enumerate() {
                phi[[r, c]] += x / count;
            }
        }
    }
    let out = phi.dot(&projection.t()).mapv(f64::tanh);
    DenseMatrix::from_array(&out)
}

/// Fits the reference model from native draws of every regular phone.
pub fn native_durations(spec: &SyntheticSpec) -> Result<DurationModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(0);
    let mut fitter = DurationFitter::default();
    for p in 0..SIL {
        let g = phone_generator(p);
        let normal = Normal::new(g.mean_ms, g.std_ms).expect("positive std");
        for _ in 0..spec.native_draws {
            let d = quantize_frames(normal.sample(&mut rng)) as f64 * 10.0;
            fitter.push(inventory::SYMBOLS[p], d);
        }
    }
    fitter.finish()
}

fn generate_utterance(
    index: usize,
    spec: &SyntheticSpec,
    projection: &Array2<f64>,
) -> Result<SyntheticUtterance> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64 + 1);
    let phones = draw_phones(&mut rng, spec);
    let generators: Vec<PhoneGenerator> = phones.iter().map(|&p| phone_generator(p)).collect();

    let elongation = spec.max_elongation * rng.random::<f64>().sqrt();
    let mut spans = Vec::with_capacity(phones.len());
    let mut durations_ms = Vec::with_capacity(phones.len());
    let mut start = 0;
    for (&p, g) in phones.iter().zip(&generators) {
        let jitter: f64 = StandardNormal.sample(&mut rng);
        let d = g.mean_ms + elongation * g.std_ms + 0.1 * g.std_ms * jitter;
        let frames = quantize_frames(d);
        durations_ms.push(frames as f64 * 10.0);
        spans.push(Span {
            phone: inventory::SYMBOLS[p].to_string(),
            start,
            end: start + frames - 1,
        });
        start += frames;
    }
    let num_frames = start;
    let alignment = Alignment::new(spans)?;

    // Pitch contour in semitones, as a function of time in seconds.
    let base = rng.random_range(33.0..37.0);
    let amplitude = spec.max_excursion_st * rng.random::<f64>();
    let phase = rng.random_range(0.0..2.0 * PI);
    let contour = |t: f64| base + amplitude * (2.0 * PI * t / 0.3 + phase).sin();

    let mut frame_phone = vec![0usize; num_frames];
    for (span, &p) in alignment.spans().iter().zip(&phones) {
        frame_phone[span.start..=span.end].fill(p);
    }
    let voiced_pitch: Vec<f64> = (0..num_frames)
        .filter(|&t| inventory::is_voiced(frame_phone[t]))
        .map(|t| contour((t * HOP + WINDOW / 2) as f64 / SAMPLE_RATE as f64))
        .collect();
    let (_, pitch_std) = crate::functionals::mean_std(&voiced_pitch);

    let num_samples = (num_frames - 1) * HOP + WINDOW;
    let noise = Normal::new(0.0, 0.05).expect("positive std");
    let mut samples = Vec::with_capacity(num_samples);
    let mut angle = 0.0;
    for s in 0..num_samples {
        let frame = ((s as f64 - (WINDOW / 2) as f64) / HOP as f64)
            .round()
            .clamp(0.0, (num_frames - 1) as f64) as usize;
        let t = s as f64 / SAMPLE_RATE as f64;
        let hz = SEMITONE_REF_HZ * 2f64.powf(contour(t) / 12.0);
        angle = (angle + 2.0 * PI * hz / SAMPLE_RATE as f64) % (2.0 * PI);
        let x = if inventory::is_voiced(frame_phone[frame]) {
            0.5 * angle.sin()
        } else {
            noise.sample(&mut rng)
        };
        // Match what a 16-bit round trip would produce.
        samples.push((x * 32768.0).round().clamp(-32768.0, 32767.0) / 32768.0);
    }
    let audio = AudioBuffer::new(samples, SAMPLE_RATE)?;

    let mut logits = Array2::<f64>::zeros((num_frames, inventory::SIZE));
    for t in 0..num_frames {
        for k in 0..inventory::SIZE {
            let z: f64 = StandardNormal.sample(&mut rng);
            logits[[t, k]] = spec.posterior_noise * z;
        }
        logits[[t, frame_phone[t]]] += spec.posterior_boost;
        let row = logits.row(t);
        let lse = crate::align::log_sum_exp(row.iter().copied());
        logits.row_mut(t).mapv_inplace(|v| v - lse);
    }

    let features = extract_frame_features(&audio)?;
    Ok(SyntheticUtterance {
        id: format!("utt{index:04}"),
        phones: phones.iter().map(|&p| inventory::SYMBOLS[p].to_string()).collect(),
        alignment,
        audio,
        posteriors: DenseMatrix::from_array(&logits)?,
        context: pseudo_context(&features, projection)?,
        fluency: fluency_label(&durations_ms, &generators),
        prosody: prosody_label(pitch_std, spec.prosody_step_st),
    })
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let projection = context_projection(spec.context_width);
    let utterances = (0..spec.n_utterances)
        .map(|i| generate_utterance(i, spec, &projection))
        .collect::<Result<Vec<_>>>()?;
    Ok(SyntheticCorpus {
        utterances,
        durations: native_durations(spec)?,
    })
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `wav/`, `posteriors/`, `ct/`, `align/`, `manifest.jsonl`,
/// `gold.csv`, `durations.tsv` and `train.cfg` under `dir`. Manifest paths
/// are relative to `dir`.
pub fn write_corpus(corpus: &SyntheticCorpus, seed: u64, dir: &Path) -> Result<()> {
    for sub in ["wav", "posteriors", "ct", "align"] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    let mut entries = Vec::with_capacity(corpus.utterances.len());
    let mut gold = String::from("id,fluency,prosody\n");
    for u in &corpus.utterances {
        let rel = |sub: &str, ext: &str| PathBuf::from(sub).join(format!("{}.{ext}", u.id));
        write_wav(dir.join(rel("wav", "wav")), &u.audio)?;
        write_matrix(dir.join(rel("posteriors", "mtx")), &u.posteriors)?;
        write_matrix(dir.join(rel("ct", "mtx")), &u.context)?;
        write_alignment(dir.join(rel("align", "tsv")), &u.alignment)?;
        let _ = writeln!(gold, "{},{},{}", u.id, u.fluency, u.prosody);
        entries.push(UtteranceManifestEntry {
            id: u.id.clone(),
            wav_path: rel("wav", "wav"),
            ct_path: rel("ct", "mtx"),
            posterior_path: rel("posteriors", "mtx"),
            phones: u.phones.clone(),
            fluency: u.fluency,
            prosody: u.prosody,
        });
    }
    write_manifest(dir.join("manifest.jsonl"), &entries)?;
    write_file(&dir.join("gold.csv"), gold)?;
    write_file(&dir.join("durations.tsv"), format_duration_model(&corpus.durations))?;
    let width = corpus.utterances.first().map_or(1024, |u| u.context.cols());
    write_file(
        &dir.join("train.cfg"),
        format!(
            "lr=0.0001\nbatch=32\nepochs=50\npatience=2\nseed={seed}\nhidden={}\nduration_model=durations.tsv\n",
            width / 2
        ),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticSpec {
        SyntheticSpec {
            n_utterances: 3,
            seed: 7,
            context_width: 16,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn zero_deviation_scores_ten() {
        let g = [phone_generator(0), phone_generator(20)];
        assert_eq!(fluency_label(&[g[0].mean_ms, g[1].mean_ms], &g), 10);
        let far = [g[0].mean_ms + 3.0 * g[0].std_ms, g[1].mean_ms + 3.0 * g[1].std_ms];
        assert_eq!(fluency_label(&far, &g), 1);
        assert_eq!(prosody_label(0.0, 0.35), 0);
        assert_eq!(prosody_label(100.0, 0.35), 10);
    }

    #[test]
    fn corpus_is_consistent() {
        let c = generate(&small()).unwrap();
        assert_eq!(c.utterances.len(), 3);
        for u in &c.utterances {
            let t = u.alignment.num_frames();
            assert_eq!(u.posteriors.rows(), t);
            assert_eq!(u.posteriors.cols(), inventory::SIZE);
            assert_eq!(u.context.rows(), t.div_ceil(2));
            assert_eq!(u.context.cols(), 16);
            assert_eq!(u.audio.samples.len(), (t - 1) * HOP + WINDOW);
            assert_eq!(u.alignment.phones(), u.phones);
            assert!(u.phones.windows(2).all(|w| w[0] != w[1]));
            assert!(u.fluency <= 10 && u.prosody <= 10);
        }
        assert!(c.durations.entry("AA").unwrap().count >= 10);
    }

    #[test]
    fn same_seed_same_corpus() {
        assert_eq!(generate(&small()).unwrap(), generate(&small()).unwrap());
        let other = SyntheticSpec { seed: 8, ..small() };
        assert_ne!(generate(&small()).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(generate(&SyntheticSpec { n_utterances: 0, ..small() }).is_err());
        assert!(generate(&SyntheticSpec { min_phones: 5, max_phones: 4, ..small() }).is_err());
    }
}

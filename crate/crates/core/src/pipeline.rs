//! Glue from raw artifacts (audio, posteriors, contextual frames) to the
//! network's per-utterance input.

use rayon::prelude::*;

use crate::align::{dtw_align, Alignment, PosteriorMatrix};
use crate::assembly::{build_fusion_input, pool_to_phonemes};
use crate::duration::{gopd_vector, DurationModel};
use crate::error::{Error, Result};
use crate::functionals::compute_functionals;
use crate::io::{load_wav, read_matrix, AudioBuffer, DenseMatrix, UtteranceManifestEntry};
use crate::lld::extract_frame_features;
use crate::net::{Labels, ModelInput};

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedUtterance {
    pub id: String,
    pub input: ModelInput,
    pub alignment: Alignment,
    pub labels: Labels,
}

/// Runs extraction, alignment, GoPD and pooling for one utterance.
pub fn prepare_input<S: AsRef<str>>(
    audio: &AudioBuffer,
    posteriors: &PosteriorMatrix,
    context: &DenseMatrix,
    phones: &[S],
    durations: &DurationModel,
) -> Result<(ModelInput, Alignment)> {
    let frames = extract_frame_features(audio)?;
    let functionals = compute_functionals(&frames);
    let (alignment, _) = dtw_align(posteriors, phones)?;
    if alignment.num_frames() != frames.len() {
        return Err(Error::Shape(format!(
            "posteriors have {} frames, audio has {}",
            alignment.num_frames(),
            frames.len()
        )));
    }
    let pooled = pool_to_phonemes(&frames, &alignment)?;
    let gopd = gopd_vector(&alignment, durations)?;
    let fusion = build_fusion_input(&pooled, &gopd, phones)?;
    Ok((
        ModelInput {
            fusion,
            context: context.to_array(),
            utterance: functionals.to_array(),
        },
        alignment,
    ))
}

pub fn prepare_entry(
    entry: &UtteranceManifestEntry,
    durations: &DurationModel,
) -> Result<PreparedUtterance> {
    let audio = load_wav(&entry.wav_path)?;
    let posteriors = PosteriorMatrix::from_normalized(&read_matrix(&entry.posterior_path)?)?;
    let context = read_matrix(&entry.ct_path)?;
    let (input, alignment) = prepare_input(&audio, &posteriors, &context, &entry.phones, durations)?;
    Ok(PreparedUtterance {
        id: entry.id.clone(),
        input,
        alignment,
        labels: Labels::new(entry.fluency as i64, entry.prosody as i64)?,
    })
}

/// Prepares every entry, in manifest order, using up to `jobs` threads.
pub fn prepare_manifest(
    entries: &[UtteranceManifestEntry],
    durations: &DurationModel,
    jobs: usize,
) -> Result<Vec<PreparedUtterance>> {
    let with_context = |e: &UtteranceManifestEntry| {
        prepare_entry(e, durations).map_err(|err| annotate(&e.id, err))
    };
    if jobs <= 1 {
        return entries.iter().map(with_context).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| entries.par_iter().map(with_context).collect())
}

fn annotate(id: &str, err: Error) -> Error {
    log::error!("utterance {id}: {err}");
    err
}

//! `intraverbal` command-line front end.
//!
//! Exit codes: 0 success, 1 other failure, 2 missing file, 3 malformed or
//! unsupported input, 4 infeasible alignment, 5 empty input.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use intraverbal::align::{dtw_align, spans_to_durations, PosteriorMatrix, HOP_MS};
use intraverbal::assembly::{build_fusion_input, pool_to_phonemes};
use intraverbal::duration::{gopd, gopd_vector, DurationFitter};
use intraverbal::eval::{pcc, predict_score};
use intraverbal::functionals::compute_functionals;
use intraverbal::inventory;
use intraverbal::io::tsv::parse_alignment;
use intraverbal::io::{
    load_wav, read_alignment, read_duration_model, read_manifest, read_matrix, write_alignment,
    write_duration_model, write_matrix,
};
use intraverbal::lld::extract_frame_features;
use intraverbal::net::{checkpoint, ModelInput};
use intraverbal::pipeline::prepare_manifest;
use intraverbal::synth::{self, SyntheticSpec};
use intraverbal::train::{history_csv, train, TrainConfig};
use intraverbal::{Error, Result};

#[derive(Parser)]
#[command(name = "intraverbal", version, about = "Pronunciation assessment from non-verbal cues")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Frame-level descriptors and utterance functionals of a WAV file.
    Extract {
        #[arg(long)]
        wav: PathBuf,
        /// Frames x 5 matrix: loudness, alpha ratio (dB), F0 (st), jitter, voiced.
        #[arg(long)]
        frames_out: PathBuf,
        /// 1 x 13 functionals matrix.
        #[arg(long)]
        functionals_out: PathBuf,
    },
    /// Force-align a phone sequence to frame log-posteriors; prints the score.
    Align {
        #[arg(long)]
        posteriors: PathBuf,
        /// Space-separated phone symbols.
        #[arg(long)]
        phones: String,
        #[arg(long)]
        out: PathBuf,
        /// Treat the matrix as unnormalized scores and log-softmax each row.
        #[arg(long)]
        logits: bool,
    },
    /// Fit a phone duration model from every `.tsv` alignment in a directory.
    FitDurations {
        #[arg(long)]
        alignments: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Per-phone duration and GoPD of an alignment, as TSV on stdout.
    Gopd {
        #[arg(long)]
        alignment: PathBuf,
        #[arg(long)]
        durations: PathBuf,
    },
    /// Build the phone-level fusion input of one utterance.
    Assemble {
        #[arg(long)]
        wav: PathBuf,
        #[arg(long)]
        posteriors: PathBuf,
        #[arg(long)]
        phones: String,
        #[arg(long)]
        durations: PathBuf,
        /// L x 5 numeric block: GoPD, loudness, alpha ratio, F0, jitter.
        #[arg(long)]
        numeric_out: PathBuf,
        /// L x 1 phone-index sidecar.
        #[arg(long)]
        phones_out: PathBuf,
    },
    /// Train the scorer on a manifest.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch loss history CSV.
        #[arg(long)]
        history: Option<PathBuf>,
        /// Overrides `duration_model` from the config.
        #[arg(long)]
        durations: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Score every manifest utterance; CSV `id,fluency,prosody` on stdout.
    Score {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        durations: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// PCC of prediction CSVs against a gold CSV, per head.
    Eval {
        #[arg(long)]
        gold: PathBuf,
        /// Up to three runs; their average PCC is reported as well.
        #[arg(long, required = true, num_args = 1)]
        pred: Vec<PathBuf>,
    },
    /// Write a seeded synthetic corpus.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 64)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        min_phones: usize,
        #[arg(long, default_value_t = 5)]
        max_phones: usize,
        /// Width of the contextual frames; twice the model's hidden size.
        #[arg(long, default_value_t = 1024)]
        context_width: usize,
    },
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 2,
        Error::Io { .. } | Error::Domain(_) | Error::NonFiniteLoss(_) => 1,
        Error::Infeasible { .. } => 4,
        Error::Empty(_) => 5,
        _ => 3,
    }
}

fn describe(err: &Error) -> String {
    match err {
        Error::Io { path, source } if source.kind() == std::io::ErrorKind::NotFound => {
            format!("no such file: {}", path.display())
        }
        other => other.to_string(),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn load_posteriors(path: &Path, logits: bool) -> Result<PosteriorMatrix> {
    let m = read_matrix(path)?;
    if logits {
        PosteriorMatrix::from_logits(&m)
    } else {
        PosteriorMatrix::from_normalized(&m)
    }
}

fn cmd_extract(wav: &Path, frames_out: &Path, functionals_out: &Path) -> Result<()> {
    let audio = load_wav(wav)?;
    let frames = extract_frame_features(&audio)?;
    write_matrix(frames_out, &frames.to_matrix()?)?;
    write_matrix(functionals_out, &compute_functionals(&frames).to_matrix()?)
}

fn cmd_align(posteriors: &Path, phones: &str, out: &Path, logits: bool) -> Result<()> {
    let post = load_posteriors(posteriors, logits)?;
    let phones = inventory::parse_sequence(phones)?;
    let (alignment, score) = dtw_align(&post, &phones)?;
    write_alignment(out, &alignment)?;
    println!("{score}");
    Ok(())
}

fn cmd_fit_durations(dir: &Path, out: &Path, jobs: usize) -> Result<()> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "tsv"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Empty(format!("no .tsv alignments in {}", dir.display())));
    }
    let alignments: Vec<_> = thread_pool(jobs)?.install(|| {
        paths
            .par_iter()
            .map(|p| read_text(p).and_then(|t| parse_alignment(&t)))
            .collect::<Result<_>>()
    })?;
    let mut fitter = DurationFitter::default();
    for a in &alignments {
        fitter.push_alignment(a);
    }
    let model = fitter.finish()?;
    write_duration_model(out, &model)?;
    log::info!("fitted {} phones from {} alignments", model.phones.len(), paths.len());
    Ok(())
}

fn cmd_gopd(alignment: &Path, durations: &Path) -> Result<()> {
    let alignment = read_alignment(alignment)?;
    let model = read_duration_model(durations)?;
    let mut out = String::from("phone\tduration_ms\tgopd\n");
    for (phone, d) in spans_to_durations(&alignment, HOP_MS) {
        let _ = writeln!(out, "{phone}\t{d}\t{}", gopd(d, &phone, &model)?);
    }
    print!("{out}");
    Ok(())
}

fn cmd_assemble(
    wav: &Path,
    posteriors: &Path,
    phones: &str,
    durations: &Path,
    numeric_out: &Path,
    phones_out: &Path,
) -> Result<()> {
    let audio = load_wav(wav)?;
    let post = PosteriorMatrix::from_normalized(&read_matrix(posteriors)?)?;
    let phones = inventory::parse_sequence(phones)?;
    let model = read_duration_model(durations)?;
    let frames = extract_frame_features(&audio)?;
    let (alignment, _) = dtw_align(&post, &phones)?;
    if alignment.num_frames() != frames.len() {
        return Err(Error::Shape(format!(
            "posteriors have {} frames, audio has {}",
            alignment.num_frames(),
            frames.len()
        )));
    }
    let pooled = pool_to_phonemes(&frames, &alignment)?;
    let fusion = build_fusion_input(&pooled, &gopd_vector(&alignment, &model)?, &phones)?;
    let (numeric, sidecar) = fusion.to_matrices()?;
    write_matrix(numeric_out, &numeric)?;
    write_matrix(phones_out, &sidecar)
}

fn cmd_train(
    manifest: &Path,
    config: &Path,
    out: &Path,
    history: Option<&Path>,
    durations: Option<&Path>,
    jobs: usize,
) -> Result<()> {
    let config = TrainConfig::load(config)?;
    let durations_path = durations
        .map(Path::to_path_buf)
        .or_else(|| config.duration_model.clone())
        .ok_or_else(|| Error::Config("no duration model: set duration_model or --durations".into()))?;
    let entries = read_manifest(manifest)?;
    if entries.is_empty() {
        return Err(Error::Empty(format!("{} lists no utterances", manifest.display())));
    }
    let model = read_duration_model(&durations_path)?;
    let prepared = prepare_manifest(&entries, &model, jobs)?;
    let inputs: Vec<ModelInput> = prepared.iter().map(|p| p.input.clone()).collect();
    let labels: Vec<_> = prepared.iter().map(|p| p.labels).collect();
    let outcome = train(&inputs, &labels, &config, config.dims())?;
    checkpoint::save(out, &outcome.model)?;
    if let Some(h) = history {
        write_text(h, &history_csv(&outcome.history))?;
    }
    log::info!(
        "best epoch {} of {}, checkpoint {}",
        outcome.best_epoch,
        outcome.history.len(),
        out.display()
    );
    Ok(())
}

fn cmd_score(checkpoint_path: &Path, manifest: &Path, durations: &Path, jobs: usize) -> Result<()> {
    let model = checkpoint::load(checkpoint_path)?;
    let entries = read_manifest(manifest)?;
    if entries.is_empty() {
        return Err(Error::Empty(format!("{} lists no utterances", manifest.display())));
    }
    let durations = read_duration_model(durations)?;
    let mut prepared = prepare_manifest(&entries, &durations, jobs)?;
    prepared.sort_by(|a, b| a.id.cmp(&b.id));
    let mut out = String::from("id,fluency,prosody\n");
    for p in &prepared {
        let d = &model.predict(&[&p.input])?[0];
        let _ = writeln!(out, "{},{},{}", p.id, predict_score(&d.fluency), predict_score(&d.prosody));
    }
    print!("{out}");
    Ok(())
}

type Scores = std::collections::BTreeMap<String, (f64, f64)>;

fn read_scores(path: &Path) -> Result<Scores> {
    let text = read_text(path)?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == "id,fluency,prosody" => {}
        _ => {
            return Err(Error::Validation {
                line: 1,
                message: format!("{}: expected header id,fluency,prosody", path.display()),
            })
        }
    }
    let mut out = Scores::new();
    for (i, line) in lines {
        let bad = |m: &str| Error::Validation {
            line: i + 1,
            message: format!("{}: {m}", path.display()),
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let [id, f, p] = fields[..] else {
            return Err(bad("expected 3 fields"));
        };
        let parse = |s: &str| s.parse::<f64>().ok().filter(|v| v.is_finite());
        let (Some(f), Some(p)) = (parse(f), parse(p)) else {
            return Err(bad("scores must be finite numbers"));
        };
        if out.insert(id.to_string(), (f, p)).is_some() {
            return Err(bad(&format!("duplicate id {id}")));
        }
    }
    if out.is_empty() {
        return Err(Error::Empty(format!("{} has no rows", path.display())));
    }
    Ok(out)
}

fn cmd_eval(gold: &Path, preds: &[PathBuf]) -> Result<()> {
    if preds.len() > 3 {
        return Err(Error::Config("at most three --pred files".into()));
    }
    let gold = read_scores(gold)?;
    let mut runs = Vec::new();
    for path in preds {
        let pred = read_scores(path)?;
        let (mut pf, mut pp, mut gf, mut gp) = (vec![], vec![], vec![], vec![]);
        for (id, &(f, p)) in &pred {
            let &(g_f, g_p) = gold
                .get(id)
                .ok_or_else(|| Error::Format(format!("{}: id {id} not in gold", path.display())))?;
            pf.push(f);
            pp.push(p);
            gf.push(g_f);
            gp.push(g_p);
        }
        let (f, p) = (pcc(&pf, &gf)?, pcc(&pp, &gp)?);
        println!("{}\tfluency\t{f:.4}\tprosody\t{p:.4}", path.display());
        runs.push((f, p));
    }
    if runs.len() > 1 {
        let n = runs.len() as f64;
        let f = runs.iter().map(|r| r.0).sum::<f64>() / n;
        let p = runs.iter().map(|r| r.1).sum::<f64>() / n;
        println!("average\tfluency\t{f:.4}\tprosody\t{p:.4}");
    }
    Ok(())
}

fn cmd_synth(out: &Path, spec: SyntheticSpec) -> Result<()> {
    let corpus = synth::generate(&spec)?;
    synth::write_corpus(&corpus, spec.seed, out)?;
    log::info!("wrote {} utterances to {}", corpus.utterances.len(), out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Extract { wav, frames_out, functionals_out } => cmd_extract(&wav, &frames_out, &functionals_out),
        Command::Align { posteriors, phones, out, logits } => cmd_align(&posteriors, &phones, &out, logits),
        Command::FitDurations { alignments, out, jobs } => cmd_fit_durations(&alignments, &out, jobs),
        Command::Gopd { alignment, durations } => cmd_gopd(&alignment, &durations),
        Command::Assemble { wav, posteriors, phones, durations, numeric_out, phones_out } => {
            cmd_assemble(&wav, &posteriors, &phones, &durations, &numeric_out, &phones_out)
        }
        Command::Train { manifest, config, out, history, durations, jobs } => {
            cmd_train(&manifest, &config, &out, history.as_deref(), durations.as_deref(), jobs)
        }
        Command::Score { checkpoint, manifest, durations, jobs } => cmd_score(&checkpoint, &manifest, &durations, jobs),
        Command::Eval { gold, pred } => cmd_eval(&gold, &pred),
        Command::Synth { out, n, seed, min_phones, max_phones, context_width } => cmd_synth(
            &out,
            SyntheticSpec {
                n_utterances: n,
                seed,
                min_phones,
                max_phones,
                context_width,
                ..SyntheticSpec::default()
            },
        ),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", describe(&err));
            ExitCode::from(exit_code(&err))
        }
    }
}

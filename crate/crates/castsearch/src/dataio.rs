//! Wire formats and file layout. Parsers take untrusted bytes and return
//! line-tagged errors; writers produce exactly what the parsers accept, so
//! every format round-trips. Formats:
//!
//! * movie manifest: JSONL, one header line then one line per instance;
//! * value-network checkpoint: JSON, bit-exact float round-trip;
//! * controller config: JSON;
//! * rankings and cache-occupancy series: CSV;
//! * decision trace: JSONL, one line per step plus a flush line.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::controller::{
    Controller, ControllerKind, LearnedController, ManualThresholds, StateMode,
};
use crate::engine::{
    CachePoint, CastPortrait, DecisionTrace, EngineConfig, Finalization, GroundTruth, MovieResult,
    MovieStream, RankedInstance, StepTrace, StreamInstance,
};
use crate::error::{Error, Result};
use crate::feature::{normalize_feature, Modality, MultiModalFeature};
use crate::memory::MemorySnapshot;
use crate::metrics::{EvalReport, RecallPoint};
use crate::qlearn::{QNetwork, TrainLog};

/// Upper bound on the feature dimension accepted from files; keeps a hostile
/// header from requesting absurd allocations.
pub const MAX_DIM: usize = 1 << 16;

pub const UPDATE_CHECKPOINT_FILE: &str = "update_gate.json";
pub const CACHE_CHECKPOINT_FILE: &str = "cache_gate.json";
pub const TRAIN_LOG_FILE: &str = "train_log.json";
pub const RUN_META_FILE: &str = "meta.json";

// ---------------------------------------------------------------------------
// movie manifests

#[derive(Serialize, Deserialize)]
struct ManifestHeader {
    movie_id: String,
    d: usize,
    cast: Vec<ManifestCast>,
}

#[derive(Serialize, Deserialize)]
struct ManifestCast {
    cast_id: String,
    face: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ManifestInstance {
    instance_id: String,
    t: u64,
    #[serde(default)]
    cast_id: Option<String>,
    #[serde(default)]
    face: Option<Vec<f64>>,
    #[serde(default)]
    body: Option<Vec<f64>>,
    #[serde(default)]
    audio: Option<Vec<f64>>,
}

/// The "cast_id" wire value: null means unlabeled, "other" means a distractor,
/// anything else must name a cast from the header.
fn truth_from_wire(cast_id: Option<String>) -> Option<GroundTruth> {
    match cast_id {
        None => None,
        Some(s) if s == "other" => Some(GroundTruth::Other),
        Some(s) => Some(GroundTruth::Cast(s)),
    }
}

fn truth_to_wire(truth: &Option<GroundTruth>) -> Option<String> {
    match truth {
        None => None,
        Some(GroundTruth::Other) => Some("other".to_string()),
        Some(GroundTruth::Cast(c)) => Some(c.clone()),
    }
}

/// Parses one movie manifest from text. `origin` names the source (usually a
/// path) in error messages.
pub fn parse_manifest(text: &str, origin: &str) -> Result<MovieStream> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty());

    let (header_no, header_line) = lines
        .next()
        .ok_or_else(|| Error::parse(origin, 1, "missing header line"))?;
    let header: ManifestHeader = serde_json::from_str(header_line)
        .map_err(|e| Error::parse(origin, header_no, format!("bad header: {e}")))?;
    if header.d == 0 {
        return Err(Error::parse(
            origin,
            header_no,
            "dimension must be at least 1",
        ));
    }
    if header.d > MAX_DIM {
        return Err(Error::parse(
            origin,
            header_no,
            format!("dimension {} exceeds the limit {MAX_DIM}", header.d),
        ));
    }
    if header.cast.is_empty() {
        return Err(Error::parse(origin, header_no, "cast list is empty"));
    }

    let mut cast = Vec::with_capacity(header.cast.len());
    for c in header.cast {
        let portrait = MultiModalFeature::new(header.d, Some(c.face), None, None)
            .and_then(|f| normalize_feature(&f))
            .map_err(|e| Error::parse(origin, header_no, format!("cast {}: {e}", c.cast_id)))?;
        cast.push(CastPortrait {
            cast_id: c.cast_id,
            portrait,
        });
    }

    let mut instances = Vec::new();
    for (line_no, line) in lines {
        let rec: ManifestInstance = serde_json::from_str(line)
            .map_err(|e| Error::parse(origin, line_no, format!("bad instance: {e}")))?;
        if rec.t != instances.len() as u64 {
            return Err(Error::parse(
                origin,
                line_no,
                format!(
                    "instance t={} out of order, expected {}",
                    rec.t,
                    instances.len()
                ),
            ));
        }
        let feature = MultiModalFeature::new(header.d, rec.face, rec.body, rec.audio)
            .and_then(|f| normalize_feature(&f))
            .map_err(|e| {
                Error::parse(
                    origin,
                    line_no,
                    format!("instance {}: {e}", rec.instance_id),
                )
            })?;
        instances.push(StreamInstance {
            instance_id: rec.instance_id,
            feature,
            truth: truth_from_wire(rec.cast_id),
        });
    }

    let stream = MovieStream {
        movie_id: header.movie_id,
        dim: header.d,
        cast,
        instances,
    };
    stream
        .validate()
        .map_err(|e| Error::parse(origin, 1, e.to_string()))?;
    Ok(stream)
}

pub fn write_manifest<W: Write>(stream: &MovieStream, mut w: W) -> Result<()> {
    let header = ManifestHeader {
        movie_id: stream.movie_id.clone(),
        d: stream.dim,
        cast: stream
            .cast
            .iter()
            .map(|c| ManifestCast {
                cast_id: c.cast_id.clone(),
                face: c.portrait.vector(Modality::Face).to_vec(),
            })
            .collect(),
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for (t, i) in stream.instances.iter().enumerate() {
        let rec = ManifestInstance {
            instance_id: i.instance_id.clone(),
            t: t as u64,
            cast_id: truth_to_wire(&i.truth),
            face: i.feature.get(Modality::Face).map(<[f64]>::to_vec),
            body: i.feature.get(Modality::Body).map(<[f64]>::to_vec),
            audio: i.feature.get(Modality::Audio).map(<[f64]>::to_vec),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_manifest(stream: &MovieStream, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_manifest(stream, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_manifest(path: &Path) -> Result<MovieStream> {
    let text = fs::read_to_string(path)?;
    parse_manifest(&text, &path.display().to_string())
}

/// Loads one manifest file, or every `*.jsonl` in a directory in filename
/// order.
pub fn load_movies(path: &Path) -> Result<Vec<MovieStream>> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)?
            .collect::<io::Result<Vec<_>>>()?
            .into_iter()
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "no .jsonl manifests in {}",
                path.display()
            )));
        }
        files.iter().map(|p| load_manifest(p)).collect()
    } else {
        Ok(vec![load_manifest(path)?])
    }
}

// ---------------------------------------------------------------------------
// value-network checkpoints

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub state_mode: StateMode,
    pub seed: u64,
    pub epoch: u64,
}

impl Checkpoint {
    pub fn from_network(net: &QNetwork, state_mode: StateMode, seed: u64, epoch: u64) -> Self {
        let (w1, b1, w2, b2) = net.parts();
        Checkpoint {
            input_dim: net.input_dim(),
            hidden_dim: net.hidden_dim(),
            w1: w1.to_vec(),
            b1: b1.to_vec(),
            w2: w2.to_vec(),
            b2: b2.to_vec(),
            state_mode,
            seed,
            epoch,
        }
    }

    pub fn to_network(&self) -> Result<QNetwork> {
        QNetwork::from_parts(
            self.input_dim,
            self.hidden_dim,
            self.w1.clone(),
            self.b1.clone(),
            self.w2.clone(),
            self.b2.clone(),
        )
    }
}

pub fn checkpoint_from_slice(bytes: &[u8]) -> Result<Checkpoint> {
    Ok(serde_json::from_slice(bytes)?)
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_vec_pretty(ckpt)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    checkpoint_from_slice(&fs::read(path)?)
        .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// controller configs

/// On-disk controller description. Threshold fields default to the tuned
/// operating point when omitted; `checkpoint` names the directory holding
/// the two trained gate networks for the learned kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerSpec {
    pub kind: ControllerKind,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default)]
    pub state_mode: Option<StateMode>,
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
}

impl ControllerSpec {
    pub fn manual(thresholds: ManualThresholds) -> Self {
        ControllerSpec {
            kind: ControllerKind::Manual,
            alpha: Some(thresholds.alpha),
            beta: Some(thresholds.beta),
            gamma: Some(thresholds.gamma),
            tau: Some(thresholds.tau),
            state_mode: None,
            checkpoint: None,
        }
    }

    pub fn thresholds(&self) -> ManualThresholds {
        let d = ManualThresholds::default();
        ManualThresholds {
            alpha: self.alpha.unwrap_or(d.alpha),
            beta: self.beta.unwrap_or(d.beta),
            gamma: self.gamma.unwrap_or(d.gamma),
            tau: self.tau.unwrap_or(d.tau),
        }
    }

    /// Builds the controller, loading checkpoints for the learned kind.
    pub fn build(&self) -> Result<Controller> {
        match self.kind {
            ControllerKind::Manual => Controller::manual(self.thresholds()),
            ControllerKind::Learned => {
                let dir = self.checkpoint.as_deref().ok_or_else(|| {
                    Error::InvalidConfig("learned controller needs a checkpoint directory".into())
                })?;
                let update = load_checkpoint(&dir.join(UPDATE_CHECKPOINT_FILE))?;
                let cache = load_checkpoint(&dir.join(CACHE_CHECKPOINT_FILE))?;
                if update.state_mode != cache.state_mode {
                    return Err(Error::InvalidConfig(
                        "gate checkpoints disagree on state mode".into(),
                    ));
                }
                if update.input_dim != cache.input_dim {
                    return Err(Error::InvalidConfig(
                        "gate checkpoints disagree on input dimension".into(),
                    ));
                }
                let state_mode = self.state_mode.unwrap_or(update.state_mode);
                if state_mode != update.state_mode {
                    return Err(Error::InvalidConfig(format!(
                        "config wants {state_mode:?} states but the checkpoint was trained on {:?}",
                        update.state_mode
                    )));
                }
                let t = self.thresholds();
                t.validate()?;
                Ok(Controller::Learned(LearnedController {
                    update_net: update.to_network()?,
                    cache_net: cache.to_network()?,
                    state_mode,
                    gamma: t.gamma,
                    tau: t.tau,
                }))
            }
        }
    }
}

pub fn controller_spec_from_slice(bytes: &[u8]) -> Result<ControllerSpec> {
    Ok(serde_json::from_slice(bytes)?)
}

pub fn load_controller_spec(path: &Path) -> Result<ControllerSpec> {
    controller_spec_from_slice(&fs::read(path)?)
        .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
}

pub fn save_controller_spec(spec: &ControllerSpec, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_vec_pretty(spec)?)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// rankings CSV

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingRow {
    pub movie_id: String,
    pub cast_id: String,
    pub rank: u64,
    pub instance_id: String,
    pub score: f64,
}

pub fn write_rankings_csv<W: Write>(result: &MovieResult, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for (cast_id, ranking) in result.cast_ids.iter().zip(&result.rankings) {
        for (i, r) in ranking.iter().enumerate() {
            wtr.serialize(RankingRow {
                movie_id: result.movie_id.clone(),
                cast_id: cast_id.clone(),
                rank: i as u64 + 1,
                instance_id: r.instance_id.clone(),
                score: r.score,
            })?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn rankings_from_reader<R: Read>(r: R) -> Result<Vec<RankingRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut rows = Vec::new();
    for rec in rdr.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}

/// Regroups ranking rows into per-cast rankings, validating that ranks are
/// contiguous from 1 within each cast and the movie id is uniform.
pub fn group_rankings(
    rows: &[RankingRow],
) -> Result<(String, Vec<String>, Vec<Vec<RankedInstance>>)> {
    let movie_id = match rows.first() {
        Some(r) => r.movie_id.clone(),
        None => return Err(Error::InvalidConfig("empty rankings".into())),
    };
    let mut cast_ids: Vec<String> = Vec::new();
    let mut per_cast: Vec<Vec<&RankingRow>> = Vec::new();
    for row in rows {
        if row.movie_id != movie_id {
            return Err(Error::InvalidConfig(format!(
                "rankings mix movies {} and {}",
                movie_id, row.movie_id
            )));
        }
        let idx = match cast_ids.iter().position(|c| *c == row.cast_id) {
            Some(i) => i,
            None => {
                cast_ids.push(row.cast_id.clone());
                per_cast.push(Vec::new());
                cast_ids.len() - 1
            }
        };
        per_cast[idx].push(row);
    }
    let mut rankings = Vec::with_capacity(per_cast.len());
    for (cast_id, mut rows) in cast_ids.iter().zip(per_cast) {
        rows.sort_by_key(|r| r.rank);
        for (i, r) in rows.iter().enumerate() {
            if r.rank != i as u64 + 1 {
                return Err(Error::InvalidConfig(format!(
                    "cast {cast_id}: rank {} out of sequence (expected {})",
                    r.rank,
                    i + 1
                )));
            }
        }
        rankings.push(
            rows.into_iter()
                .map(|r| RankedInstance {
                    instance_id: r.instance_id.clone(),
                    score: r.score,
                })
                .collect(),
        );
    }
    Ok((movie_id, cast_ids, rankings))
}

// ---------------------------------------------------------------------------
// decision traces

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TraceLine {
    Step(StepTrace),
    Flush { flushed: Vec<Finalization> },
}

pub fn write_trace_jsonl<W: Write>(trace: &DecisionTrace, mut w: W) -> Result<()> {
    for step in &trace.steps {
        serde_json::to_writer(&mut w, step)?;
        w.write_all(b"\n")?;
    }
    serde_json::to_writer(
        &mut w,
        &TraceLine::Flush {
            flushed: trace.flushed.clone(),
        },
    )?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn trace_from_str(text: &str, origin: &str) -> Result<DecisionTrace> {
    let mut trace = DecisionTrace::default();
    let mut saw_flush = false;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = i + 1;
        if saw_flush {
            return Err(Error::parse(
                origin,
                line_no,
                "content after the flush line",
            ));
        }
        let parsed: TraceLine = serde_json::from_str(line)
            .map_err(|e| Error::parse(origin, line_no, format!("bad trace line: {e}")))?;
        match parsed {
            TraceLine::Step(s) => trace.steps.push(s),
            TraceLine::Flush { flushed } => {
                trace.flushed = flushed;
                saw_flush = true;
            }
        }
    }
    Ok(trace)
}

pub fn load_trace(path: &Path) -> Result<DecisionTrace> {
    let text = fs::read_to_string(path)?;
    trace_from_str(&text, &path.display().to_string())
}

// ---------------------------------------------------------------------------
// cache occupancy CSV

pub fn write_cache_csv<W: Write>(series: &[CachePoint], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for p in series {
        wtr.serialize(p)?;
    }
    // An empty series still gets its header so the file identifies itself.
    if series.is_empty() {
        wtr.write_record(["step", "total_pushes", "current_size"])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn cache_series_from_reader<R: Read>(r: R) -> Result<Vec<CachePoint>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut rows = Vec::new();
    for rec in rdr.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// recall curves CSV

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub movie_id: String,
    pub k: usize,
    pub event_index: usize,
    pub step: u64,
    pub recall: f64,
}

pub fn curve_rows(movie_id: &str, k: usize, points: &[RecallPoint]) -> Vec<CurveRow> {
    points
        .iter()
        .map(|p| CurveRow {
            movie_id: movie_id.to_string(),
            k,
            event_index: p.event_index,
            step: p.step,
            recall: p.value,
        })
        .collect()
}

pub fn write_curves_csv<W: Write>(rows: &[CurveRow], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for row in rows {
        wtr.serialize(row)?;
    }
    if rows.is_empty() {
        wtr.write_record(["movie_id", "k", "event_index", "step", "recall"])?;
    }
    wtr.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// run directories

/// Run-level description saved next to the per-movie files, so results stay
/// interpretable without the command line that made them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub method: String,
    pub offline: bool,
    pub engine: EngineConfig,
    /// Which instance modalities were kept (face, body, audio).
    pub modalities: [bool; 3],
    #[serde(default)]
    pub notes: Vec<String>,
}

/// File stem used for a movie's output files inside a run directory.
pub fn sanitize_file_stem(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Writes rankings, trace, and cache series for one movie into `dir`.
pub fn save_movie_result(dir: &Path, result: &MovieResult) -> Result<()> {
    let stem = sanitize_file_stem(&result.movie_id);
    let mut buf = Vec::new();
    write_rankings_csv(result, &mut buf)?;
    fs::write(dir.join(format!("{stem}.rankings.csv")), &buf)?;
    buf.clear();
    write_trace_jsonl(&result.trace, &mut buf)?;
    fs::write(dir.join(format!("{stem}.trace.jsonl")), &buf)?;
    buf.clear();
    write_cache_csv(&result.cache_series, &mut buf)?;
    fs::write(dir.join(format!("{stem}.cache.csv")), &buf)?;
    Ok(())
}

pub fn save_run(dir: &Path, meta: &RunMeta, results: &[MovieResult]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut stems: Vec<String> = results
        .iter()
        .map(|r| sanitize_file_stem(&r.movie_id))
        .collect();
    stems.sort_unstable();
    stems.dedup();
    if stems.len() != results.len() {
        return Err(Error::InvalidConfig(
            "movie ids collide after filename sanitization".into(),
        ));
    }
    fs::write(dir.join(RUN_META_FILE), serde_json::to_vec_pretty(meta)?)?;
    for r in results {
        save_movie_result(dir, r)?;
    }
    Ok(())
}

/// Reads a run directory back into movie results. The update log is not
/// persisted separately; update-time scores are recovered from the trace.
pub fn load_run(dir: &Path) -> Result<(RunMeta, Vec<MovieResult>)> {
    let meta: RunMeta = serde_json::from_slice(&fs::read(dir.join(RUN_META_FILE))?)
        .map_err(|e| Error::InvalidConfig(format!("{}: {e}", dir.join(RUN_META_FILE).display())))?;
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .collect::<io::Result<Vec<_>>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.to_string_lossy().ends_with(".rankings.csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "no rankings in {}",
            dir.display()
        )));
    }
    let mut results = Vec::with_capacity(files.len());
    for f in files {
        let rows = rankings_from_reader(fs::File::open(&f)?)?;
        let (movie_id, cast_ids, rankings) = group_rankings(&rows)?;
        let stem = f
            .file_name()
            .unwrap_or_default()
            .to_string_lossy()
            .trim_end_matches(".rankings.csv")
            .to_string();
        let trace = load_trace(&dir.join(format!("{stem}.trace.jsonl")))?;
        let cache_path = dir.join(format!("{stem}.cache.csv"));
        let cache_series = if cache_path.exists() {
            cache_series_from_reader(fs::File::open(&cache_path)?)?
        } else {
            Vec::new()
        };
        results.push(MovieResult {
            movie_id,
            method: meta.method.clone(),
            offline: meta.offline,
            cast_ids,
            rankings,
            trace,
            update_log: Vec::new(),
            cache_series,
            notes: Vec::new(),
        });
    }
    Ok((meta, results))
}

// ---------------------------------------------------------------------------
// misc JSON payloads

pub fn save_report(report: &EvalReport, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_vec_pretty(report)?)?;
    Ok(())
}

pub fn load_report(path: &Path) -> Result<EvalReport> {
    Ok(serde_json::from_slice(&fs::read(path)?)
        .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?)
}

pub fn save_snapshot(snapshot: &MemorySnapshot, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_vec_pretty(snapshot)?)?;
    Ok(())
}

pub fn save_train_log(log: &TrainLog, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_vec_pretty(log)?)?;
    Ok(())
}

//! Corpus handling: annotation files, clip indexes, label vocabularies, and
//! frame-level target construction.
//!
//! Annotations are tab-separated, one event per line, `onset<TAB>offset<TAB>
//! label`; a four-column variant with a leading scene field is accepted and
//! cross-checked against the clip index. The clip index is
//! `clip_id<TAB>audio_path<TAB>scene<TAB>fold`. Blank lines and `#` comments
//! are ignored everywhere.

pub mod synth;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{log_mel, FeatureConfig};
use crate::metrics::EventRoll;
use crate::tensor::Scalar;
use crate::train::TrainItem;

/// One annotated event instance.
#[derive(Debug, Clone, PartialEq)]
pub struct EventAnnotation {
    pub onset: f64,
    pub offset: f64,
    pub label: String,
}

impl EventAnnotation {
    pub fn new(onset: f64, offset: f64, label: impl Into<String>) -> Result<Self> {
        if !(onset >= 0.0 && onset < offset) {
            return Err(Error::InvalidConfig(format!("event interval [{onset}, {offset}) is not valid")));
        }
        Ok(EventAnnotation { onset, offset, label: label.into() })
    }
}

/// Ordered label list with index lookup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    names: Vec<String>,
}

impl Vocab {
    pub fn new(names: Vec<String>) -> Result<Self> {
        let unique: BTreeSet<&String> = names.iter().collect();
        if unique.len() != names.len() {
            return Err(Error::Corpus("vocabulary contains duplicate labels".into()));
        }
        if names.is_empty() {
            return Err(Error::EmptyInput("vocabulary"));
        }
        Ok(Vocab { names })
    }

    /// Sorted vocabulary from an arbitrary label collection.
    pub fn from_labels<'a>(labels: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let set: BTreeSet<&str> = labels.into_iter().collect();
        Vocab::new(set.into_iter().map(String::from).collect())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// A scene assignment resolved against a scene vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SceneLabel {
    pub index: usize,
    pub name: String,
}

/// One clip of the corpus index.
#[derive(Debug, Clone)]
pub struct ClipRecord {
    pub clip_id: String,
    pub audio_path: PathBuf,
    pub scene: SceneLabel,
    pub events: Vec<EventAnnotation>,
    pub fold: usize,
}

/// Parse annotation text into events sorted by onset.
pub fn parse_event_annotations(text: &str) -> Result<Vec<EventAnnotation>> {
    parse_annotations_with_scene(text).map(|(events, _)| events)
}

/// As [`parse_event_annotations`], also returning the scene named by
/// four-column lines (which must agree within the file).
pub fn parse_annotations_with_scene(text: &str) -> Result<(Vec<EventAnnotation>, Option<String>)> {
    let mut events = Vec::new();
    let mut scene: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let (scene_field, onset_s, offset_s, label) = match fields.as_slice() {
            [onset, offset, label] => (None, *onset, *offset, *label),
            [scene, onset, offset, label] => (Some(*scene), *onset, *offset, *label),
            _ => {
                return Err(Error::AnnotationParse {
                    line: line_no,
                    message: format!("expected 3 or 4 tab-separated fields, got {}", fields.len()),
                })
            }
        };
        if let Some(s) = scene_field {
            match &scene {
                None => scene = Some(s.to_string()),
                Some(prev) if prev != s => {
                    return Err(Error::AnnotationParse {
                        line: line_no,
                        message: format!("scene field {s:?} contradicts earlier {prev:?}"),
                    })
                }
                _ => {}
            }
        }
        let onset: f64 = onset_s.parse().map_err(|_| Error::AnnotationParse {
            line: line_no,
            message: format!("unparseable onset {onset_s:?}"),
        })?;
        let offset: f64 = offset_s.parse().map_err(|_| Error::AnnotationParse {
            line: line_no,
            message: format!("unparseable offset {offset_s:?}"),
        })?;
        if label.is_empty() {
            return Err(Error::AnnotationParse { line: line_no, message: "empty label".into() });
        }
        if !onset.is_finite() || !offset.is_finite() || onset < 0.0 {
            return Err(Error::AnnotationParse {
                line: line_no,
                message: format!("invalid interval [{onset}, {offset})"),
            });
        }
        if offset <= onset {
            return Err(Error::AnnotationParse {
                line: line_no,
                message: format!("offset {offset} is not after onset {onset}"),
            });
        }
        events.push(EventAnnotation { onset, offset, label: label.to_string() });
    }
    events.sort_by(|a, b| a.onset.partial_cmp(&b.onset).unwrap().then(a.label.cmp(&b.label)));
    Ok((events, scene))
}

/// Serialize events as three-column annotation text (sorted by onset).
pub fn serialize_event_annotations(events: &[EventAnnotation]) -> String {
    let mut sorted: Vec<&EventAnnotation> = events.iter().collect();
    sorted.sort_by(|a, b| a.onset.partial_cmp(&b.onset).unwrap().then(a.label.cmp(&b.label)));
    let mut out = String::new();
    for e in sorted {
        // `{}` prints the shortest exactly round-tripping decimal, so
        // parse(serialize(events)) reproduces the original intervals bit-for-bit.
        out.push_str(&format!("{}\t{}\t{}\n", e.onset, e.offset, e.label));
    }
    out
}

/// Build the binary target roll: cell `(m, t)` is active iff event `m`'s
/// `[onset, offset)` interval intersects the hop-grid interval
/// `[t*hop, (t+1)*hop)`.
pub fn event_roll(events: &[EventAnnotation], vocab: &Vocab, frames: usize, cfg: &FeatureConfig) -> Result<EventRoll> {
    let hop = cfg.hop_seconds();
    let mut roll = EventRoll::zeros(vocab.len(), frames);
    for e in events {
        let m = vocab.index_of(&e.label).ok_or_else(|| Error::UnknownLabel {
            label: e.label.clone(),
            known: vocab.names().to_vec(),
        })?;
        let mut t = (e.onset / hop).floor() as usize;
        while t < frames && (t as f64) * hop < e.offset {
            if e.onset < (t as f64 + 1.0) * hop {
                roll.set(m, t, true);
            }
            t += 1;
        }
    }
    Ok(roll)
}

/// Inverse of [`event_roll`] for prediction output: contiguous active runs
/// become `[run_start * hop, (run_end + 1) * hop)` intervals. Onsets and
/// offsets are computed in milliseconds so grid points serialize cleanly.
pub fn roll_to_annotations(roll: &EventRoll, vocab: &Vocab, cfg: &FeatureConfig) -> Vec<EventAnnotation> {
    let mut out = Vec::new();
    for m in 0..roll.events() {
        let mut run_start: Option<usize> = None;
        for t in 0..=roll.frames() {
            let active = t < roll.frames() && roll.get(m, t);
            match (active, run_start) {
                (true, None) => run_start = Some(t),
                (false, Some(start)) => {
                    out.push(EventAnnotation {
                        onset: start as f64 * cfg.hop_ms / 1000.0,
                        offset: t as f64 * cfg.hop_ms / 1000.0,
                        label: vocab.name(m).to_string(),
                    });
                    run_start = None;
                }
                _ => {}
            }
        }
    }
    out.sort_by(|a, b| a.onset.partial_cmp(&b.onset).unwrap().then(a.label.cmp(&b.label)));
    out
}

/// A corpus rooted at a directory:
///
/// ```text
/// corpus/
///   index.tsv      clip_id <TAB> audio_path <TAB> scene <TAB> fold
///   events.txt     event vocabulary, one label per line (optional)
///   scenes.txt     scene vocabulary, one label per line (optional)
///   audio/*.wav
///   ann/<clip_id>.ann
/// ```
#[derive(Debug, Clone)]
pub struct Corpus {
    pub root: PathBuf,
    pub clips: Vec<ClipRecord>,
    pub scenes: Vocab,
    pub events: Vocab,
}

pub fn load_corpus(root: impl AsRef<Path>) -> Result<Corpus> {
    let root = root.as_ref().to_path_buf();
    let index_path = root.join("index.tsv");
    let index_text =
        std::fs::read_to_string(&index_path).map_err(|e| Error::io(index_path.display().to_string(), e))?;

    struct Row {
        clip_id: String,
        audio_path: PathBuf,
        scene: String,
        fold: usize,
    }
    let mut rows = Vec::new();
    for (i, raw) in index_text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::Corpus(format!(
                "index line {}: expected clip_id/audio_path/scene/fold, got {} fields",
                i + 1,
                fields.len()
            )));
        }
        let fold: usize = fields[3]
            .parse()
            .map_err(|_| Error::Corpus(format!("index line {}: unparseable fold {:?}", i + 1, fields[3])))?;
        if fold == 0 {
            return Err(Error::Corpus(format!("index line {}: folds are numbered from 1", i + 1)));
        }
        rows.push(Row {
            clip_id: fields[0].to_string(),
            audio_path: root.join(fields[1]),
            scene: fields[2].to_string(),
            fold,
        });
    }
    if rows.is_empty() {
        return Err(Error::Corpus(format!("{} lists no clips", index_path.display())));
    }

    let scenes = match read_vocab_file(root.join("scenes.txt"))? {
        Some(v) => v,
        None => Vocab::from_labels(rows.iter().map(|r| r.scene.as_str()))?,
    };

    let mut clips = Vec::with_capacity(rows.len());
    let mut seen_labels: BTreeSet<String> = BTreeSet::new();
    for row in rows {
        let scene_index = scenes
            .index_of(&row.scene)
            .ok_or_else(|| Error::UnknownLabel { label: row.scene.clone(), known: scenes.names().to_vec() })?;
        let ann_path = root.join("ann").join(format!("{}.ann", row.clip_id));
        let ann_text =
            std::fs::read_to_string(&ann_path).map_err(|e| Error::io(ann_path.display().to_string(), e))?;
        let (events, ann_scene) = parse_annotations_with_scene(&ann_text)
            .map_err(|e| Error::Corpus(format!("{}: {e}", ann_path.display())))?;
        if let Some(s) = ann_scene {
            if s != row.scene {
                return Err(Error::Corpus(format!(
                    "{}: annotation scene {s:?} contradicts index scene {:?}",
                    ann_path.display(),
                    row.scene
                )));
            }
        }
        seen_labels.extend(events.iter().map(|e| e.label.clone()));
        clips.push(ClipRecord {
            clip_id: row.clip_id,
            audio_path: row.audio_path,
            scene: SceneLabel { index: scene_index, name: row.scene },
            events,
            fold: row.fold,
        });
    }

    let events = match read_vocab_file(root.join("events.txt"))? {
        Some(v) => v,
        None => Vocab::from_labels(seen_labels.iter().map(String::as_str))?,
    };
    for clip in &clips {
        for e in &clip.events {
            if events.index_of(&e.label).is_none() {
                return Err(Error::UnknownLabel { label: e.label.clone(), known: events.names().to_vec() });
            }
        }
    }
    Ok(Corpus { root, clips, scenes, events })
}

fn read_vocab_file(path: PathBuf) -> Result<Option<Vocab>> {
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let names: Vec<String> =
        text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).map(String::from).collect();
    Vocab::new(names).map(Some)
}

/// Extract features and build targets for every clip, in parallel.
pub fn prepare_items<F: Scalar>(corpus: &Corpus, cfg: &FeatureConfig) -> Result<Vec<TrainItem<F>>> {
    corpus
        .clips
        .par_iter()
        .map(|clip| {
            let audio = crate::audio::read_wav(&clip.audio_path, clip.clip_id.clone())?;
            let feats = log_mel(&audio, cfg)?;
            let frames = feats.frames();
            let targets = event_roll(&clip.events, &corpus.events, frames, cfg)?;
            Ok(TrainItem {
                clip_id: clip.clip_id.clone(),
                features: feats.data.convert::<F>(),
                targets,
                scene: clip.scene.index,
                fold: clip.fold,
            })
        })
        .collect()
}

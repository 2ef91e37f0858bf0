//! Image-wrench datasets: significance gating during collection, manifests,
//! normalization and the two splitting strategies.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::input::{downsample_triple, InputTensor, INPUT_HEIGHT, INPUT_WIDTH};
use crate::deform::{compose_triple, detect_contact, save_channel, DeformationTriple, TripleSidecar, DEFAULT_CONTACT_ENERGY};
use crate::error::{Error, Result};
use crate::gelsim::Session;
use crate::image::Wrench;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// Triple sidecar, relative to the manifest's directory.
    pub triple_path: String,
    pub wrench: Wrench,
    pub object_id: String,
    pub session_id: String,
}

/// Per-component standardization of wrenches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: [f64; 6],
    pub std: [f64; 6],
}

/// Smallest standard deviation used for scaling.
pub const MIN_STD: f64 = 1e-6;

impl Normalization {
    pub fn identity() -> Self {
        Self { mean: [0.0; 6], std: [1.0; 6] }
    }

    /// Population mean and standard deviation, the latter floored at
    /// [`MIN_STD`].
    pub fn from_wrenches(wrenches: &[Wrench]) -> Result<Self> {
        if wrenches.is_empty() {
            return Err(Error::EmptyDataset("no wrenches to normalize".into()));
        }
        let n = wrenches.len() as f64;
        let mut mean = [0.0; 6];
        for w in wrenches {
            for (m, v) in mean.iter_mut().zip(w.to_array()) {
                *m += v / n;
            }
        }
        let mut std = [0.0; 6];
        for w in wrenches {
            for ((s, v), m) in std.iter_mut().zip(w.to_array()).zip(mean) {
                *s += (v - m).powi(2) / n;
            }
        }
        Ok(Self { mean, std: std.map(|v| v.sqrt().max(MIN_STD)) })
    }

    pub fn normalize(&self, w: &Wrench) -> [f64; 6] {
        let a = w.to_array();
        std::array::from_fn(|k| (a[k] - self.mean[k]) / self.std[k])
    }

    pub fn denormalize(&self, v: &[f64; 6]) -> Wrench {
        Wrench::from_array(std::array::from_fn(|k| v[k] * self.std[k] + self.mean[k]))
    }
}

/// Keep `current` only if it is at least `epsilon` (normalized Euclidean
/// distance) away from every wrench already saved in this contact period.
pub fn gate_sample(current: &Wrench, saved: &[Wrench], norm: &Normalization, epsilon: f64) -> bool {
    let c = norm.normalize(current);
    saved.iter().all(|s| {
        let v = norm.normalize(s);
        c.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() >= epsilon
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ManifestHeader {
    samples: usize,
    normalization: Normalization,
}

/// Ordered samples plus the wrench normalization of the training subset
/// they belong to. Serialized as JSON lines: a header line, then one line
/// per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub samples: Vec<Sample>,
    pub normalization: Normalization,
    root: PathBuf,
}

impl DatasetManifest {
    /// Normalization is computed over `samples`.
    pub fn new(samples: Vec<Sample>, root: impl Into<PathBuf>) -> Result<Self> {
        let wrenches: Vec<Wrench> = samples.iter().map(|s| s.wrench).collect();
        let normalization = Normalization::from_wrenches(&wrenches)?;
        Ok(Self { samples, normalization, root: root.into() })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Directory that sample paths are relative to.
    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn wrenches(&self) -> Vec<Wrench> {
        self.samples.iter().map(|s| s.wrench).collect()
    }

    pub fn object_ids(&self) -> BTreeSet<String> {
        self.samples.iter().map(|s| s.object_id.clone()).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = BufWriter::new(fs::File::create(path)?);
        let header = ManifestHeader { samples: self.samples.len(), normalization: self.normalization };
        serde_json::to_writer(&mut f, &header)?;
        f.write_all(b"\n")?;
        for s in &self.samples {
            serde_json::to_writer(&mut f, s)?;
            f.write_all(b"\n")?;
        }
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut lines = BufReader::new(fs::File::open(path)?).lines();
        let first = lines.next().ok_or_else(|| Error::Format("empty manifest".into()))??;
        let header: ManifestHeader = serde_json::from_str(&first)?;
        let mut samples = Vec::with_capacity(header.samples);
        for line in lines {
            let line = line?;
            if !line.trim().is_empty() {
                samples.push(serde_json::from_str(&line)?);
            }
        }
        if samples.len() != header.samples {
            return Err(Error::Format(format!(
                "manifest header lists {} samples, found {}",
                header.samples,
                samples.len()
            )));
        }
        if samples.is_empty() {
            return Err(Error::EmptyDataset("manifest has no samples".into()));
        }
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { samples, normalization: header.normalization, root })
    }

    pub fn load_triple(&self, sample: &Sample) -> Result<DeformationTriple> {
        DeformationTriple::load(&self.root.join(&sample.triple_path))
    }

    /// Regressor inputs of every sample, in order.
    pub fn load_inputs(&self) -> Result<Vec<InputTensor>> {
        self.samples
            .iter()
            .map(|s| {
                let t = self.load_triple(s)?;
                if t.dims() != (INPUT_WIDTH, INPUT_HEIGHT) {
                    return Err(Error::Dimension(format!(
                        "sample {} is {:?}, expected {INPUT_WIDTH}x{INPUT_HEIGHT}",
                        s.triple_path,
                        t.dims()
                    )));
                }
                InputTensor::from_triple(&t)
            })
            .collect()
    }

    fn subset(&self, idx: &[usize]) -> Vec<Sample> {
        idx.iter().map(|&i| self.samples[i].clone()).collect()
    }
}

/// Both halves carry the training half's normalization.
fn finish_split(root: &Path, train: Vec<Sample>, test: Vec<Sample>) -> Result<(DatasetManifest, DatasetManifest)> {
    let train = DatasetManifest::new(train, root)?;
    if test.is_empty() {
        return Err(Error::Parameter("split leaves the test set empty".into()));
    }
    let test = DatasetManifest { samples: test, normalization: train.normalization, root: root.to_path_buf() };
    Ok((train, test))
}

/// Uniform random hold-out of `n_test` samples; both halves keep manifest
/// order.
pub fn split_standard(
    manifest: &DatasetManifest,
    n_test: usize,
    seed: u64,
) -> Result<(DatasetManifest, DatasetManifest)> {
    if n_test == 0 || n_test >= manifest.len() {
        return Err(Error::Parameter(format!(
            "test size must be in 1..{}, got {n_test}",
            manifest.len()
        )));
    }
    let mut idx: Vec<usize> = (0..manifest.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (test, train) = idx.split_at_mut(n_test);
    test.sort_unstable();
    train.sort_unstable();
    finish_split(&manifest.root, manifest.subset(train), manifest.subset(test))
}

/// Every sample of the listed objects goes to the test half.
pub fn split_by_object(
    manifest: &DatasetManifest,
    test_object_ids: &[String],
) -> Result<(DatasetManifest, DatasetManifest)> {
    if test_object_ids.is_empty() {
        return Err(Error::Parameter("no test objects given".into()));
    }
    let present = manifest.object_ids();
    if let Some(missing) = test_object_ids.iter().find(|id| !present.contains(*id)) {
        return Err(Error::Parameter(format!("unknown test object {missing}")));
    }
    let (test, train): (Vec<Sample>, Vec<Sample>) =
        manifest.samples.iter().cloned().partition(|s| test_object_ids.contains(&s.object_id));
    if train.is_empty() {
        return Err(Error::Parameter("object split leaves no training samples".into()));
    }
    finish_split(&manifest.root, train, test)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CollectOptions {
    /// Gate distance in normalized wrench space.
    pub epsilon: f64,
    /// Darker-channel energy above which a frame is in contact.
    pub contact_energy: f64,
}

impl Default for CollectOptions {
    fn default() -> Self {
        Self { epsilon: 0.15, contact_energy: DEFAULT_CONTACT_ENERGY }
    }
}

/// Runs every session, keeps frames in contact whose wrench passes the gate
/// for the current contact period, and writes their downsampled triples
/// under `out_dir/samples` plus `out_dir/manifest.jsonl`.
///
/// A contact period ends when the detector reports no contact or the
/// trajectory changes. `gate_norm` scales wrenches for gating; the
/// manifest's own normalization is computed from the saved samples.
pub fn collect_dataset<'a>(
    sessions: impl IntoIterator<Item = Session<'a>>,
    gate_norm: &Normalization,
    opts: &CollectOptions,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    if !(opts.epsilon > 0.0 && opts.contact_energy > 0.0) {
        return Err(Error::Parameter("gate epsilon and contact energy must be positive".into()));
    }
    let sample_dir = out_dir.join("samples");
    fs::create_dir_all(&sample_dir)?;
    let mut samples = Vec::new();
    for session in sessions {
        let sid = session.id().to_string();
        let reference = session.reference();
        let small_ref = downsample_triple(&compose_triple(reference, reference)?, INPUT_WIDTH, INPUT_HEIGHT)?.reference;
        let ref_name = format!("{sid}_reference.pfm");
        save_channel(&sample_dir.join(&ref_name), &small_ref)?;

        let mut saved: Vec<Wrench> = Vec::new();
        let mut period_traj = None;
        for frame in session {
            let frame = frame?;
            let triple = compose_triple(reference, &frame.tactile)?;
            let contact = detect_contact(&triple.darker, opts.contact_energy);
            if !contact || period_traj != Some(frame.trajectory) {
                saved.clear();
            }
            if !contact {
                period_traj = None;
                continue;
            }
            period_traj = Some(frame.trajectory);
            if !gate_sample(&frame.wrench, &saved, gate_norm, opts.epsilon) {
                continue;
            }
            saved.push(frame.wrench);

            let small = downsample_triple(&triple, INPUT_WIDTH, INPUT_HEIGHT)?;
            let stem = format!("{sid}_{:06}", frame.index);
            let sidecar = TripleSidecar {
                width: INPUT_WIDTH,
                height: INPUT_HEIGHT,
                darker: format!("{stem}_darker.pfm"),
                brighter: format!("{stem}_brighter.pfm"),
                reference: ref_name.clone(),
            };
            save_channel(&sample_dir.join(&sidecar.darker), &small.darker)?;
            save_channel(&sample_dir.join(&sidecar.brighter), &small.brighter)?;
            sidecar.write(&sample_dir.join(format!("{stem}.json")))?;
            samples.push(Sample {
                triple_path: format!("samples/{stem}.json"),
                wrench: frame.wrench,
                object_id: frame.object_id,
                session_id: sid.clone(),
            });
        }
    }
    if samples.is_empty() {
        return Err(Error::EmptyDataset("no frame passed contact detection and gating".into()));
    }
    let manifest = DatasetManifest::new(samples, out_dir)?;
    manifest.save(&out_dir.join("manifest.jsonl"))?;
    Ok(manifest)
}

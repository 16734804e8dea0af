//! On-disk datasets: stratified splits, session blocks, PGM files and the
//! CSV manifest.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::label::{map_ph_to_class, HealthLabel};
use super::render::{synth_pair_in_session, GasFramePair, Session};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::net::Modality;

pub const MANIFEST_FILE: &str = "manifest.csv";
pub const MANIFEST_HEADER: &str = "id,split,ph,label,co2_frame,ch4_frame,co2_mask,ch4_mask,has_co2,has_ch4";
/// Consecutive samples of one split sharing a session.
pub const SESSION_LENGTH: usize = 20;
pub const MIN_COUNT_PER_PH: usize = 10;
pub const SPLIT_FRACTIONS: [f64; 3] = [0.70, 0.15, 0.15];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown split `{s}` (train, val or test)")))
    }
}

/// Split sizes for `n` samples: floors of the 70/15/15 quotas, with the
/// leftover samples going to the largest fractional parts; equal parts are
/// served in train, val, test order.
pub fn split_counts(n: usize) -> [usize; 3] {
    let quotas = SPLIT_FRACTIONS.map(|f| f * n as f64);
    let mut counts = quotas.map(|q| q.floor() as usize);
    let mut left = n - counts.iter().sum::<usize>();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| (quotas[b] - counts[b] as f64).total_cmp(&(quotas[a] - counts[a] as f64)).then(a.cmp(&b)));
    for &k in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[k] += 1;
        left -= 1;
    }
    counts
}

/// Number of samples per pH level.
#[derive(Debug, Clone, PartialEq)]
pub struct PhCounts(pub Vec<(f64, usize)>);

impl PhCounts {
    /// Roughly 600 training pairs, close to balanced across the three
    /// health classes.
    pub fn desk_default() -> Self {
        PhCounts(vec![(6.5, 140), (6.2, 140), (5.9, 280), (5.6, 100), (5.3, 100), (5.0, 97)])
    }

    pub fn total(&self) -> usize {
        self.0.iter().map(|&(_, n)| n).sum()
    }
}

impl FromStr for PhCounts {
    type Err = Error;

    /// `ph:count` pairs separated by commas, e.g. `6.5:140,5.0:97`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("counts must look like `6.5:140,5.0:97`, got `{s}`"));
        let pairs = s
            .split(',')
            .map(|p| {
                let (ph, n) = p.trim().split_once(':').ok_or_else(bad)?;
                Ok((ph.trim().parse().map_err(|_| bad())?, n.trim().parse().map_err(|_| bad())?))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PhCounts(pairs))
    }
}

impl fmt::Display for PhCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|(ph, n)| format!("{ph:.1}:{n}")).collect();
        f.write_str(&parts.join(","))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub id: String,
    pub split: Split,
    pub ph: f64,
    pub label: HealthLabel,
    /// Paths relative to the dataset root.
    pub frames: [String; 2],
    pub masks: [String; 2],
    pub present: [bool; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub rows: Vec<ManifestRow>,
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

impl DatasetManifest {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(MANIFEST_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{:.1},{},{},{},{},{},{},{}\n",
                r.id,
                r.split,
                r.ph,
                r.label,
                r.frames[0],
                r.frames[1],
                r.masks[0],
                r.masks[1],
                flag(r.present[0]),
                flag(r.present[1])
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(MANIFEST_HEADER) {
            return Err(Error::Data("manifest header mismatch".into()));
        }
        let mut rows = Vec::new();
        for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let bad = |what: &str| Error::Data(format!("manifest line {}: {what}", n + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 10 {
                return Err(bad("expected 10 fields"));
            }
            let ph: f64 = f[2].parse().map_err(|_| bad("pH"))?;
            let label: HealthLabel = f[3].parse()?;
            if map_ph_to_class(ph).map_err(|_| bad("pH out of range"))? != label {
                return Err(bad("label disagrees with pH"));
            }
            let flag = |s: &str| match s {
                "1" => Ok(true),
                "0" => Ok(false),
                _ => Err(bad("modality flag")),
            };
            rows.push(ManifestRow {
                id: f[0].to_string(),
                split: f[1].parse().map_err(|_| bad("split"))?,
                ph,
                label,
                frames: [f[4].to_string(), f[5].to_string()],
                masks: [f[6].to_string(), f[7].to_string()],
                present: [flag(f[8])?, flag(f[9])?],
            });
        }
        Ok(DatasetManifest { rows })
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestRow> {
        self.rows.iter().filter(move |r| r.split == split)
    }
}

/// SplitMix64 step, for deriving independent seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn derive(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(mix(seed), |h, &p| mix(h ^ p))
}

/// One planned sample before rendering.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedSample {
    pub id: String,
    pub split: Split,
    pub ph: f64,
    pub seed: u64,
    pub session_seed: u64,
}

/// Assign ids, splits, sessions and seeds without rendering anything.
pub fn plan_dataset(counts: &PhCounts, seed: u64) -> Result<Vec<PlannedSample>> {
    let mut plan = Vec::new();
    for (level, &(ph, n)) in counts.0.iter().enumerate() {
        map_ph_to_class(ph)?;
        if n < MIN_COUNT_PER_PH {
            return Err(Error::Config(format!(
                "pH {ph:.1} has {n} samples; at least {MIN_COUNT_PER_PH} are needed"
            )));
        }
        let mut index = 0;
        for (s, &size) in split_counts(n).iter().enumerate() {
            for i in 0..size {
                let session = (i / SESSION_LENGTH) as u64;
                plan.push(PlannedSample {
                    id: format!("ph{:02}_{index:04}", (ph * 10.0).round() as i64),
                    split: Split::ALL[s],
                    ph,
                    seed: derive(seed, &[level as u64, index as u64, 1]),
                    session_seed: derive(seed, &[level as u64, s as u64, session, 2]),
                });
                index += 1;
            }
        }
    }
    Ok(plan)
}

fn paths(id: &str) -> ([String; 2], [String; 2]) {
    (
        Modality::BOTH.map(|m| format!("frames/{id}_{}.pgm", m.key())),
        Modality::BOTH.map(|m| format!("masks/{id}_{}.pgm", m.key())),
    )
}

/// Render a planned sample.
pub fn render_planned(p: &PlannedSample, size: usize) -> Result<GasFramePair> {
    synth_pair_in_session(p.ph, p.seed, &Session::from_seed(p.session_seed, size), size)
}

/// Render every sample, write frames, masks and the manifest under
/// `out_dir`, and return the manifest.
pub fn build_dataset(counts: &PhCounts, seed: u64, size: usize, out_dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    let root = out_dir.as_ref();
    let plan = plan_dataset(counts, seed)?;
    for sub in ["frames", "masks"] {
        let dir = root.join(sub);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let mut rows = Vec::with_capacity(plan.len());
    for p in &plan {
        let pair = render_planned(p, size)?;
        let (frames, masks) = paths(&p.id);
        for k in 0..2 {
            pair.frames[k].save_pgm(root.join(&frames[k]))?;
            pair.masks[k].save_pgm(root.join(&masks[k]))?;
        }
        rows.push(ManifestRow {
            id: p.id.clone(),
            split: p.split,
            ph: p.ph,
            label: pair.label,
            frames,
            masks,
            present: pair.present,
        });
    }
    let manifest = DatasetManifest { rows };
    let path = root.join(MANIFEST_FILE);
    fs::write(&path, manifest.to_csv()).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// A loaded sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub split: Split,
    pub pair: GasFramePair,
}

/// Every sample of a dataset directory, in manifest order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub root: PathBuf,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn load(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let path = root.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path)
            .map_err(|e| Error::Data(format!("cannot read dataset manifest {}: {e}", path.display())))?;
        let manifest = DatasetManifest::from_csv(&text)?;
        let mut samples = Vec::with_capacity(manifest.rows.len());
        let mut size = None;
        for r in &manifest.rows {
            let load = |p: &String| -> Result<Image> {
                Image::load_pgm(root.join(p)).map_err(|e| Error::Data(format!("sample {}: {e}", r.id)))
            };
            let frames = [load(&r.frames[0])?, load(&r.frames[1])?];
            let masks = [load(&r.masks[0])?, load(&r.masks[1])?];
            for img in frames.iter().chain(&masks) {
                let dims = (img.width(), img.height());
                if dims.0 != dims.1 || *size.get_or_insert(dims.0) != dims.0 {
                    return Err(Error::Data(format!("sample {} has inconsistent {}x{} images", r.id, dims.0, dims.1)));
                }
            }
            if masks.iter().any(|m| m.data().iter().any(|&l| l > 2)) {
                return Err(Error::Data(format!("sample {} has labels outside 0..=2", r.id)));
            }
            samples.push(Sample {
                id: r.id.clone(),
                split: r.split,
                pair: GasFramePair {
                    frames,
                    masks,
                    present: r.present,
                    ph: r.ph,
                    label: r.label,
                },
            });
        }
        Ok(Dataset { root, samples })
    }

    pub fn split(&self, split: Split) -> Vec<&Sample> {
        self.samples.iter().filter(|s| s.split == split).collect()
    }

    /// Build in memory without touching the filesystem.
    pub fn generate(counts: &PhCounts, seed: u64, size: usize) -> Result<Self> {
        let samples = plan_dataset(counts, seed)?
            .iter()
            .map(|p| {
                Ok(Sample {
                    id: p.id.clone(),
                    split: p.split,
                    pair: render_planned(p, size)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            root: PathBuf::new(),
            samples,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_arithmetic() {
        assert_eq!(split_counts(1008), [706, 151, 151]);
        assert_eq!(split_counts(10), [7, 2, 1]);
        assert_eq!(split_counts(97), [68, 15, 14]);
    }

    #[test]
    fn default_counts_give_six_hundred_training_pairs() {
        let plan = plan_dataset(&PhCounts::desk_default(), 0).unwrap();
        assert_eq!(plan.iter().filter(|p| p.split == Split::Train).count(), 600);
    }

    #[test]
    fn counts_parse_and_print() {
        let c: PhCounts = "6.5:140, 5.0:97".parse().unwrap();
        assert_eq!(c.to_string(), "6.5:140,5.0:97");
        assert!("6.5-140".parse::<PhCounts>().is_err());
    }
}

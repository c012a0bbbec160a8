//! Corpus preparation: every painting under an input tree is tiled, each
//! tile gets an edge map, both are written as PNG, and a JSON manifest lists
//! the pairs.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use sapgan_core::data::preprocess_painting;
use sapgan_core::edge::{edge_map, EdgeParams};
use sapgan_core::image::RawImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{is_image_file, load_image, save_png};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Smithsonian,
    Harvard,
    Princeton,
    Met,
    Synthetic,
    Other,
}

impl Source {
    pub const ALL: [Source; 6] =
        [Source::Smithsonian, Source::Harvard, Source::Princeton, Source::Met, Source::Synthetic, Source::Other];

    pub fn as_str(self) -> &'static str {
        match self {
            Source::Smithsonian => "smithsonian",
            Source::Harvard => "harvard",
            Source::Princeton => "princeton",
            Source::Met => "met",
            Source::Synthetic => "synthetic",
            Source::Other => "other",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Source {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Source::ALL.into_iter().find(|v| v.as_str() == s).ok_or_else(|| Error::Config(format!("unknown source {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: String,
    pub source: Source,
    /// Tile image, relative to the manifest's directory.
    pub painting: PathBuf,
    /// Edge map of the tile, relative to the manifest's directory.
    pub edge: PathBuf,
    pub tile_index: usize,
    /// Input path of the painting the tile was cut from, relative to the input root.
    pub original_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub records: Vec<ImageRecord>,
    pub tile_size: usize,
    pub counts_by_source: BTreeMap<Source, usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManifestOptions {
    pub tile: usize,
    pub ratio_threshold: f64,
    pub edge: EdgeParams,
}

impl Default for ManifestOptions {
    fn default() -> Self {
        ManifestOptions {
            tile: sapgan_core::data::DEFAULT_TILE,
            ratio_threshold: sapgan_core::data::DEFAULT_RATIO_THRESHOLD,
            edge: EdgeParams::default(),
        }
    }
}

/// One painting found under the input root.
#[derive(Debug, Clone)]
struct Input {
    path: PathBuf,
    /// Subdirectory name, or `other` for files at the root.
    group: String,
    source: Source,
    stem: String,
    original_id: String,
}

fn read_dir_sorted(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<Vec<_>>>()?;
    entries.sort();
    Ok(entries)
}

fn file_stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Images directly under `root` (source `other`) and one level down, where
/// the subdirectory name selects the source. `only` restricts the groups.
fn discover(root: &Path, only: Option<&[String]>) -> Result<Vec<Input>> {
    let mut found = Vec::new();
    let wanted = |g: &str| only.is_none_or(|o| o.iter().any(|x| x == g));
    for entry in read_dir_sorted(root)? {
        if entry.is_dir() {
            let group = entry.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            if !wanted(&group) {
                continue;
            }
            let source = group.parse().unwrap_or(Source::Other);
            for file in read_dir_sorted(&entry)?.into_iter().filter(|f| f.is_file() && is_image_file(f)) {
                let name = file.file_name().unwrap().to_string_lossy();
                found.push(Input {
                    original_id: format!("{group}/{name}"),
                    stem: file_stem(&file),
                    path: file,
                    group: group.clone(),
                    source,
                });
            }
        } else if entry.is_file() && is_image_file(&entry) && wanted("other") {
            found.push(Input {
                original_id: entry.file_name().unwrap().to_string_lossy().into_owned(),
                stem: file_stem(&entry),
                path: entry.clone(),
                group: "other".into(),
                source: Source::Other,
            });
        }
    }
    Ok(found)
}

fn process(input: &Input, out_dir: &Path, opts: &ManifestOptions) -> Result<Vec<ImageRecord>> {
    let img = load_image(&input.path)?;
    let tiles =
        preprocess_painting(&img, opts.tile, opts.ratio_threshold).map_err(|e| Error::format(&input.path, e))?;
    let mut records = Vec::with_capacity(tiles.len());
    for (tile_index, tile) in tiles.iter().enumerate() {
        let id = format!("{}-{}-{tile_index}", input.group, input.stem);
        let painting = PathBuf::from("paintings").join(format!("{id}.png"));
        let edge = PathBuf::from("edges").join(format!("{id}.png"));
        save_png(&out_dir.join(&painting), tile)?;
        save_png(&out_dir.join(&edge), &edge_map(tile, &opts.edge)?)?;
        records.push(ImageRecord {
            id,
            source: input.source,
            painting,
            edge,
            tile_index,
            original_id: input.original_id.clone(),
        });
    }
    Ok(records)
}

/// Preprocesses every painting under `input_dir` into `out_dir` and writes
/// `out_dir/manifest.json`. Paintings that fail to load or tile are logged
/// and skipped; an empty result is an error.
pub fn build_manifest(
    input_dir: &Path,
    out_dir: &Path,
    opts: &ManifestOptions,
    only: Option<&[String]>,
) -> Result<DatasetManifest> {
    opts.edge.validate()?;
    let inputs = discover(input_dir, only)?;
    let results: Vec<(usize, Result<Vec<ImageRecord>>)> =
        inputs.par_iter().enumerate().map(|(i, input)| (i, process(input, out_dir, opts))).collect();
    let mut records = Vec::new();
    let mut skipped = 0usize;
    for (i, r) in results {
        match r {
            Ok(rs) => records.extend(rs),
            Err(e) => {
                skipped += 1;
                log::warn!("skipping {}: {e}", inputs[i].path.display());
            }
        }
    }
    if records.is_empty() {
        return Err(Error::format(
            input_dir,
            format!("no usable paintings ({} found, {skipped} skipped)", inputs.len()),
        ));
    }
    records.sort_by(|a, b| a.id.cmp(&b.id));
    let mut counts_by_source = BTreeMap::new();
    for r in &records {
        *counts_by_source.entry(r.source).or_insert(0) += 1;
    }
    let manifest = DatasetManifest { records, tile_size: opts.tile, counts_by_source };
    manifest.save(&out_dir.join(MANIFEST_FILE))?;
    log::info!("{} tiles from {} paintings ({skipped} skipped)", manifest.records.len(), inputs.len());
    Ok(manifest)
}

impl DatasetManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: DatasetManifest = serde_json::from_str(&text).map_err(|e| Error::format(path, e))?;
        let total: usize = m.counts_by_source.values().sum();
        if total != m.records.len() {
            return Err(Error::format(
                path,
                format!("counts sum to {total} but {} records are listed", m.records.len()),
            ));
        }
        Ok(m)
    }

    /// Loads every pair listed in the manifest at `path`, checking that the
    /// two images of a pair have the same size.
    pub fn load_pairs(&self, manifest_path: &Path) -> Result<Vec<(RawImage, RawImage)>> {
        let root = manifest_path.parent().unwrap_or(Path::new("."));
        self.records
            .par_iter()
            .map(|r| {
                let painting = load_image(&root.join(&r.painting))?;
                let edge = load_image(&root.join(&r.edge))?;
                if (painting.width(), painting.height()) != (edge.width(), edge.height()) {
                    return Err(Error::format(
                        root.join(&r.edge),
                        format!("edge map does not match painting {}", r.id),
                    ));
                }
                Ok((painting, edge))
            })
            .collect()
    }
}

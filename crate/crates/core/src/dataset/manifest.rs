use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::features::decode_region_features;
use crate::attention::RegionFeatureGrid;
use crate::error::{FgpError, Result};
use crate::gcn::KnowledgeGraph;
use crate::semantic::{default_stopwords, extract_phrases, WordVectorTable};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub id: u32,
    pub name: String,
}

/// On-disk description of a dataset. Paths are relative to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub classes: Vec<ClassEntry>,
    pub word_vectors: String,
    pub phrases: String,
    pub graph: String,
    pub seen_split: String,
    pub unseen_split: String,
    pub train_features: String,
    pub test_features: String,
    pub d_c: usize,
    pub d_f: usize,
    pub regions: usize,
    #[serde(default)]
    pub grid: Option<(usize, usize)>,
}

impl DatasetManifest {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| FgpError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| FgpError::validation(format!("manifest {}: {e}", path.display())))
    }
}

/// One line of the phrase sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhraseRecord {
    pub class_id: u32,
    pub name: String,
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phrases: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassInfo {
    pub id: u32,
    pub name: String,
    pub seen: bool,
    pub description: String,
    pub phrases: Vec<String>,
}

/// A sample whose label is an index into [`Dataset::classes`].
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub class: usize,
    pub grid: RegionFeatureGrid,
}

/// A loaded, validated dataset. Classes are ordered seen first.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub root: PathBuf,
    pub classes: Vec<ClassInfo>,
    pub num_seen: usize,
    pub words: WordVectorTable,
    pub graph: KnowledgeGraph,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl Dataset {
    pub fn seen_indices(&self) -> Vec<usize> {
        (0..self.num_seen).collect()
    }

    pub fn unseen_indices(&self) -> Vec<usize> {
        (self.num_seen..self.classes.len()).collect()
    }

    pub fn all_indices(&self) -> Vec<usize> {
        (0..self.classes.len()).collect()
    }

    pub fn class_index(&self, id: u32) -> Option<usize> {
        self.classes.iter().position(|c| c.id == id)
    }
}

pub fn parse_split(text: &str, context: &str) -> Result<Vec<u32>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            l.parse::<u32>()
                .map_err(|e| FgpError::format(context, format!("bad class id {l:?}: {e}")))
        })
        .collect()
}

/// Edge list of class-id pairs. Self-loops are implicit.
pub fn parse_edges(text: &str) -> Result<Vec<(u32, u32)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let ids: Vec<&str> = line.split_whitespace().collect();
        let parse = |s: &str| {
            s.parse::<u32>().map_err(|e| {
                FgpError::format(format!("graph line {}", i + 1), format!("{s:?}: {e}"))
            })
        };
        if ids.len() != 2 {
            return Err(FgpError::format(
                format!("graph line {}", i + 1),
                "expected two class ids",
            ));
        }
        out.push((parse(ids[0])?, parse(ids[1])?));
    }
    Ok(out)
}

pub fn parse_phrase_records(text: &str) -> Result<Vec<PhraseRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| FgpError::format(format!("phrases line {}", i + 1), e.to_string()))
        })
        .collect()
}

/// Reads every file the manifest references and checks them against each other.
pub fn load_dataset(manifest_path: impl AsRef<Path>) -> Result<Dataset> {
    let manifest_path = manifest_path.as_ref();
    let manifest = DatasetManifest::read(manifest_path)?;
    let root = manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let read = |rel: &str| {
        let p = root.join(rel);
        fs::read(&p).map_err(|e| FgpError::io(&p, e))
    };
    assemble_dataset(manifest, root.clone(), &read)
}

/// [`load_dataset`] over any file source; `read` maps a manifest-relative
/// path to its bytes.
pub fn assemble_dataset(
    manifest: DatasetManifest,
    root: PathBuf,
    read: &dyn Fn(&str) -> Result<Vec<u8>>,
) -> Result<Dataset> {
    let read_text =
        |rel: &str| String::from_utf8(read(rel)?).map_err(|e| FgpError::format(rel, e.to_string()));

    let mut ids = BTreeSet::new();
    for c in &manifest.classes {
        if !ids.insert(c.id) {
            return Err(FgpError::validation(format!(
                "class id {} listed twice",
                c.id
            )));
        }
    }
    let seen = parse_split(&read_text(&manifest.seen_split)?, "seen split")?;
    let unseen = parse_split(&read_text(&manifest.unseen_split)?, "unseen split")?;
    let seen_set: BTreeSet<u32> = seen.iter().copied().collect();
    let overlap: Vec<u32> = unseen
        .iter()
        .copied()
        .filter(|c| seen_set.contains(c))
        .collect();
    if !overlap.is_empty() {
        return Err(FgpError::validation(format!(
            "classes {overlap:?} appear in both splits; seen and unseen classes must be disjoint (C_tr ∩ C_te = ∅)"
        )));
    }
    for id in seen.iter().chain(&unseen) {
        if !ids.contains(id) {
            return Err(FgpError::validation(format!(
                "split references unknown class {id}"
            )));
        }
    }
    if seen.len() + unseen.len() != ids.len() {
        return Err(FgpError::validation(
            "every class must be in exactly one of the seen and unseen splits",
        ));
    }

    let words = WordVectorTable::parse(&read_text(&manifest.word_vectors)?)?;
    if words.dim() != manifest.d_c {
        return Err(FgpError::validation(format!(
            "word vectors have dimension {} but the manifest declares d_c = {}",
            words.dim(),
            manifest.d_c
        )));
    }

    let records: HashMap<u32, PhraseRecord> = parse_phrase_records(&read_text(&manifest.phrases)?)?
        .into_iter()
        .map(|r| (r.class_id, r))
        .collect();
    let stopwords = default_stopwords();
    let name_of: HashMap<u32, &str> = manifest
        .classes
        .iter()
        .map(|c| (c.id, c.name.as_str()))
        .collect();
    let classes: Vec<ClassInfo> = seen
        .iter()
        .map(|&id| (id, true))
        .chain(unseen.iter().map(|&id| (id, false)))
        .map(|(id, is_seen)| {
            let rec = records
                .get(&id)
                .ok_or_else(|| FgpError::validation(format!("class {id} has no phrase record")))?;
            let phrases = rec
                .phrases
                .clone()
                .unwrap_or_else(|| extract_phrases(&rec.description, &stopwords));
            Ok(ClassInfo {
                id,
                name: name_of[&id].to_string(),
                seen: is_seen,
                description: rec.description.clone(),
                phrases,
            })
        })
        .collect::<Result<_>>()?;
    let index: HashMap<u32, usize> = classes.iter().enumerate().map(|(i, c)| (c.id, i)).collect();

    let edges = parse_edges(&read_text(&manifest.graph)?)?
        .into_iter()
        .map(|(a, b)| match (index.get(&a), index.get(&b)) {
            (Some(&i), Some(&j)) => Ok((i, j)),
            _ => Err(FgpError::validation(format!(
                "graph edge ({a}, {b}) references an unknown class"
            ))),
        })
        .collect::<Result<Vec<_>>>()?;
    let graph = KnowledgeGraph::from_edges(classes.len(), &edges)?;

    if let Some((h, w)) = manifest.grid {
        if h * w != manifest.regions {
            return Err(FgpError::validation(format!(
                "grid {h}x{w} does not cover {} regions",
                manifest.regions
            )));
        }
    }
    let load_samples = |rel: &str, train: bool| -> Result<Vec<Sample>> {
        let set = decode_region_features(&read(rel)?, manifest.grid)?;
        if set.feature_dim != manifest.d_f {
            return Err(FgpError::validation(format!(
                "{rel}: feature dimension {} but the manifest declares d_f = {}",
                set.feature_dim, manifest.d_f
            )));
        }
        if set.regions != manifest.regions {
            return Err(FgpError::validation(format!(
                "{rel}: {} regions but the manifest declares R = {}",
                set.regions, manifest.regions
            )));
        }
        set.samples
            .into_iter()
            .map(|s| {
                let class = *index.get(&s.class_id).ok_or_else(|| {
                    FgpError::validation(format!(
                        "{rel}: sample label {} not in class table",
                        s.class_id
                    ))
                })?;
                if train && !classes[class].seen {
                    return Err(FgpError::validation(format!(
                        "{rel}: training sample labelled with unseen class {}",
                        s.class_id
                    )));
                }
                Ok(Sample {
                    class,
                    grid: s.grid,
                })
            })
            .collect()
    };
    let train = load_samples(&manifest.train_features, true)?;
    let test = load_samples(&manifest.test_features, false)?;

    Ok(Dataset {
        num_seen: seen.len(),
        manifest,
        root,
        classes,
        words,
        graph,
        train,
        test,
    })
}

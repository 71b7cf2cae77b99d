//! Compositional zero-shot world.
//!
//! Each class is a tuple of attribute values. Every attribute has a presence
//! direction and every value a value direction in feature space; a sample
//! drops each attribute's signal into a few random regions and fills the rest
//! with noise. Word vectors mirror the same structure in text space, and
//! unseen classes recombine values that seen classes already cover.

use std::collections::BTreeSet;
use std::f64::consts::FRAC_PI_2;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::features::{encode_region_features, LabeledGrid, RegionFeatureSet};
use super::manifest::{assemble_dataset, ClassEntry, Dataset, DatasetManifest, PhraseRecord};
use crate::attention::RegionFeatureGrid;
use crate::error::{FgpError, Result};
use crate::semantic::WordVectorTable;
use crate::tensor::{dot, seeded_rng, Matrix, Rng};

const NOUNS: &[&str] = &[
    "body", "coat", "tail", "head", "wing", "leg", "ear", "beak", "fin", "horn",
];
const ADJECTIVES: &[&str] = &[
    "round", "striped", "spotted", "long", "short", "curved", "pale", "dark", "glossy", "furry",
    "scaly", "pointed", "broad", "narrow", "thick", "slender", "smooth", "rough", "bright", "dull",
    "tiny", "huge", "flat", "hooked", "forked", "banded", "webbed", "crested", "plain", "mottled",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWorldSpec {
    pub attributes: usize,
    pub values: usize,
    pub seen_classes: usize,
    pub unseen_classes: usize,
    pub samples_per_class: usize,
    /// Fraction of each seen class held out for generalized evaluation.
    pub seen_test_fraction: f64,
    pub grid: (usize, usize),
    pub feature_dim: usize,
    pub word_dim: usize,
    pub regions_per_attribute: usize,
    /// Strength of the attribute presence direction in a signal region.
    pub presence_strength: f64,
    /// Strength of the value direction in a signal region.
    pub signal_strength: f64,
    pub noise: f64,
    pub word_noise: f64,
    /// Adjective offset length. Value `v` turns the offset from a direction
    /// shared by the attribute's values (`v = 0`) toward one of its own.
    pub value_spread: f64,
    /// Feature-side counterpart of the turn: signal regions add
    /// `intensity·cos(turn)` along one direction shared by all attributes.
    pub intensity: f64,
    pub seed: u64,
}

impl Default for SyntheticWorldSpec {
    fn default() -> Self {
        Self {
            attributes: 3,
            values: 3,
            seen_classes: 18,
            unseen_classes: 6,
            samples_per_class: 40,
            seen_test_fraction: 0.25,
            grid: (4, 4),
            feature_dim: 32,
            word_dim: 16,
            regions_per_attribute: 2,
            presence_strength: 3.0,
            signal_strength: 2.0,
            noise: 1.0,
            word_noise: 0.05,
            value_spread: 1.0,
            intensity: 1.0,
            seed: 0,
        }
    }
}

impl SyntheticWorldSpec {
    pub fn regions(&self) -> usize {
        self.grid.0 * self.grid.1
    }

    pub fn validate(&self) -> Result<()> {
        let tuples = (self.values as u128).checked_pow(self.attributes as u32);
        let wanted = (self.seen_classes + self.unseen_classes) as u128;
        if self.attributes == 0 || self.values == 0 {
            return Err(FgpError::domain(
                "need at least one attribute and one value",
            ));
        }
        if tuples.is_none_or(|t| t < wanted) {
            return Err(FgpError::domain(format!(
                "{} attributes x {} values give {} tuples, fewer than the {} classes requested",
                self.attributes,
                self.values,
                tuples.map_or("too many".to_string(), |t| t.to_string()),
                wanted
            )));
        }
        if self.seen_classes == 0 || self.samples_per_class == 0 {
            return Err(FgpError::domain("need seen classes and samples"));
        }
        if self.attributes * self.regions_per_attribute > self.regions() {
            return Err(FgpError::domain(format!(
                "{} signal regions do not fit in {} regions",
                self.attributes * self.regions_per_attribute,
                self.regions()
            )));
        }
        let f_dirs = self.attributes * (self.values + 1) + 1;
        let w_dirs = self.attributes * (self.values + 2);
        if f_dirs > self.feature_dim || w_dirs > self.word_dim {
            return Err(FgpError::domain(format!(
                "need d_f >= {f_dirs} and d_c >= {w_dirs} for orthogonal directions"
            )));
        }
        if !(0.0..1.0).contains(&self.seen_test_fraction) {
            return Err(FgpError::domain("seen_test_fraction must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Generated world: the files of a dataset plus the latent structure that
/// produced them.
#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub spec: SyntheticWorldSpec,
    /// Attribute values of the class with id `i`.
    pub tuples: Vec<Vec<usize>>,
    pub seen: Vec<u32>,
    pub unseen: Vec<u32>,
    pub presence_dirs: Vec<Vec<f64>>,
    /// `value_dirs[a][v]`.
    pub value_dirs: Vec<Vec<Vec<f64>>>,
    pub manifest: DatasetManifest,
    /// Relative path and contents of every file, manifest included.
    pub files: Vec<(String, Vec<u8>)>,
}

impl SyntheticWorld {
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| FgpError::io(dir, e))?;
        for (name, bytes) in &self.files {
            let p = dir.join(name);
            fs::write(&p, bytes).map_err(|e| FgpError::io(&p, e))?;
        }
        Ok(dir.join("manifest.json"))
    }

    /// The dataset straight from memory, validated as if loaded from disk.
    pub fn dataset(&self) -> Result<Dataset> {
        let read = |rel: &str| {
            self.files
                .iter()
                .find(|(name, _)| name == rel)
                .map(|(_, bytes)| bytes.clone())
                .ok_or_else(|| FgpError::validation(format!("no generated file {rel}")))
        };
        assemble_dataset(self.manifest.clone(), PathBuf::new(), &read)
    }

    /// Scores a grid against a class using the latent directions: locate each
    /// attribute's regions by presence, then read off the value.
    pub fn oracle_score(&self, grid: &RegionFeatureGrid, class_id: u32) -> f64 {
        let tuple = &self.tuples[class_id as usize];
        let per = self.spec.regions_per_attribute;
        let mut score = 0.0;
        for (a, &v) in tuple.iter().enumerate() {
            let mut by_presence: Vec<(f64, usize)> = grid
                .features
                .row_iter()
                .enumerate()
                .map(|(r, row)| (dot(row, &self.presence_dirs[a]), r))
                .collect();
            by_presence.sort_by(|x, y| y.0.total_cmp(&x.0));
            score += by_presence[..per]
                .iter()
                .map(|&(_, r)| dot(grid.features.row(r), &self.value_dirs[a][v]))
                .sum::<f64>();
        }
        score
    }

    /// Top-1 accuracy of [`Self::oracle_score`] on the unseen test samples of
    /// a dataset loaded from this world.
    pub fn oracle_unseen_hit1(&self, dataset: &Dataset) -> f64 {
        let unseen = dataset.unseen_indices();
        let samples: Vec<_> = dataset
            .test
            .iter()
            .filter(|s| !dataset.classes[s.class].seen)
            .collect();
        let hits = samples
            .iter()
            .filter(|s| {
                let best = unseen
                    .iter()
                    .copied()
                    .max_by(|&a, &b| {
                        let sa = self.oracle_score(&s.grid, dataset.classes[a].id);
                        let sb = self.oracle_score(&s.grid, dataset.classes[b].id);
                        sa.total_cmp(&sb).then(b.cmp(&a))
                    })
                    .expect("unseen classes");
                best == s.class
            })
            .count();
        hits as f64 / samples.len().max(1) as f64
    }
}

fn gaussian(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// `n` orthonormal vectors in `dim` dimensions by Gram-Schmidt on Gaussians.
fn orthonormal(rng: &mut Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(n);
    while out.len() < n {
        let mut v = gaussian(rng, dim);
        for u in &out {
            let p = dot(&v, u);
            v.iter_mut().zip(u).for_each(|(x, y)| *x -= p * y);
        }
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-6 {
            v.iter_mut().for_each(|x| *x /= norm);
            out.push(v);
        }
    }
    out
}

fn all_tuples(attributes: usize, values: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..attributes {
        out = out
            .into_iter()
            .flat_map(|t| {
                (0..values).map(move |v| {
                    let mut t = t.clone();
                    t.push(v);
                    t
                })
            })
            .collect();
    }
    out
}

fn adjective(a: usize, v: usize, values: usize) -> String {
    let i = a * values + v;
    match ADJECTIVES.get(i) {
        Some(w) => w.to_string(),
        None => format!(
            "{}{}",
            ADJECTIVES[i % ADJECTIVES.len()],
            i / ADJECTIVES.len()
        ),
    }
}

fn noun(a: usize) -> String {
    match NOUNS.get(a) {
        Some(w) => w.to_string(),
        None => format!("{}{}", NOUNS[a % NOUNS.len()], a / NOUNS.len()),
    }
}

/// Pure function of the spec: equal specs give byte-identical files.
pub fn generate_synthetic_world(spec: &SyntheticWorldSpec) -> Result<SyntheticWorld> {
    spec.validate()?;
    let mut rng = seeded_rng(spec.seed);
    let (na, nv) = (spec.attributes, spec.values);
    let n_classes = spec.seen_classes + spec.unseen_classes;

    // pick tuples; every value used by an unseen class must occur among the seen
    let mut pool = all_tuples(na, nv);
    let mut chosen = None;
    for _ in 0..100 {
        pool.shuffle(&mut rng);
        let seen = &pool[..spec.seen_classes];
        let covered: BTreeSet<(usize, usize)> = seen
            .iter()
            .flat_map(|t| t.iter().copied().enumerate())
            .collect();
        let ok = pool[spec.seen_classes..n_classes].iter().all(|t| {
            t.iter()
                .copied()
                .enumerate()
                .all(|av| covered.contains(&av))
        });
        if ok {
            chosen = Some(pool[..n_classes].to_vec());
            break;
        }
    }
    let tuples = chosen.ok_or_else(|| {
        FgpError::domain("could not draw unseen classes composed only of seen attribute values")
    })?;
    let seen: Vec<u32> = (0..spec.seen_classes as u32).collect();
    let unseen: Vec<u32> = (spec.seen_classes as u32..n_classes as u32).collect();

    let feat_dirs = orthonormal(&mut rng, na * (nv + 1) + 1, spec.feature_dim);
    let intensity_dir = feat_dirs[na * (nv + 1)].clone();
    let word_dirs = orthonormal(&mut rng, na * (nv + 2), spec.word_dim);
    let turn: Vec<f64> = (0..nv)
        .map(|v| {
            if nv > 1 {
                FRAC_PI_2 * v as f64 / (nv - 1) as f64
            } else {
                0.0
            }
        })
        .collect();
    let presence_dirs: Vec<Vec<f64>> = (0..na).map(|a| feat_dirs[a].clone()).collect();
    let value_dirs: Vec<Vec<Vec<f64>>> = (0..na)
        .map(|a| {
            (0..nv)
                .map(|v| feat_dirs[na + a * nv + v].clone())
                .collect()
        })
        .collect();

    let mut words = WordVectorTable::new(spec.word_dim);
    for a in 0..na {
        let c_a = &word_dirs[a];
        let noisy = |base: Vec<f64>, rng: &mut Rng| -> Vec<f64> {
            base.iter()
                .zip(gaussian(rng, spec.word_dim))
                .map(|(b, n)| b + spec.word_noise * n)
                .collect()
        };
        let v_noun = noisy(c_a.clone(), &mut rng);
        words.insert(&noun(a), v_noun)?;
        for v in 0..nv {
            let shared = &word_dirs[na + a];
            let own = &word_dirs[2 * na + a * nv + v];
            let (cos, sin) = (turn[v].cos(), turn[v].sin());
            let base: Vec<f64> = (0..spec.word_dim)
                .map(|j| c_a[j] + spec.value_spread * (cos * shared[j] + sin * own[j]))
                .collect();
            let v_adj = noisy(base, &mut rng);
            words.insert(&adjective(a, v, nv), v_adj)?;
        }
    }

    let classes: Vec<ClassEntry> = tuples
        .iter()
        .enumerate()
        .map(|(i, t)| ClassEntry {
            id: i as u32,
            name: t
                .iter()
                .enumerate()
                .map(|(a, &v)| adjective(a, v, nv))
                .collect::<Vec<_>>()
                .join("-"),
        })
        .collect();
    let mut phrases_out = String::new();
    for (c, t) in classes.iter().zip(&tuples) {
        let phrases: Vec<String> = t
            .iter()
            .enumerate()
            .map(|(a, &v)| format!("{} {}", adjective(a, v, nv), noun(a)))
            .collect();
        let record = PhraseRecord {
            class_id: c.id,
            name: c.name.clone(),
            description: format!("A creature with a {}.", phrases.join(", a ")),
            phrases: Some(phrases),
        };
        phrases_out.push_str(&serde_json::to_string(&record)?);
        phrases_out.push('\n');
    }

    let mut graph = String::new();
    for i in 0..n_classes {
        for j in i + 1..n_classes {
            if tuples[i].iter().zip(&tuples[j]).any(|(x, y)| x == y) {
                graph.push_str(&format!("{i} {j}\n"));
            }
        }
    }

    let regions = spec.regions();
    let per_attr = spec.regions_per_attribute;
    let mut region_ids: Vec<usize> = (0..regions).collect();
    let mut train = Vec::new();
    let mut test = Vec::new();
    let n_test_seen = (spec.samples_per_class as f64 * spec.seen_test_fraction).round() as usize;
    for (cid, t) in tuples.iter().enumerate() {
        for s in 0..spec.samples_per_class {
            region_ids.shuffle(&mut rng);
            let mut data: Vec<f64> = (0..regions * spec.feature_dim)
                .map(|_| spec.noise * rng.sample::<f64, _>(StandardNormal))
                .collect();
            for (a, &v) in t.iter().enumerate() {
                for &r in &region_ids[a * per_attr..(a + 1) * per_attr] {
                    let row = &mut data[r * spec.feature_dim..(r + 1) * spec.feature_dim];
                    for (j, x) in row.iter_mut().enumerate() {
                        *x += spec.presence_strength * presence_dirs[a][j]
                            + spec.signal_strength * value_dirs[a][v][j]
                            + spec.intensity * turn[v].cos() * intensity_dir[j];
                    }
                }
            }
            // stored as f32 on disk; round now so memory and file agree
            data.iter_mut().for_each(|x| *x = *x as f32 as f64);
            let is_test = cid >= spec.seen_classes || s < n_test_seen;
            let target = if is_test { &mut test } else { &mut train };
            let grid = RegionFeatureGrid::new(
                target.len() as u32,
                Matrix::new(regions, spec.feature_dim, data)?,
                Some(spec.grid),
            )?;
            target.push(LabeledGrid {
                class_id: cid as u32,
                grid,
            });
        }
    }
    let set = |samples| RegionFeatureSet {
        regions,
        feature_dim: spec.feature_dim,
        samples,
    };

    let manifest = DatasetManifest {
        classes,
        word_vectors: "word_vectors.txt".into(),
        phrases: "phrases.jsonl".into(),
        graph: "graph.txt".into(),
        seen_split: "seen.txt".into(),
        unseen_split: "unseen.txt".into(),
        train_features: "train.fgpf".into(),
        test_features: "test.fgpf".into(),
        d_c: spec.word_dim,
        d_f: spec.feature_dim,
        regions,
        grid: Some(spec.grid),
    };
    let ids = |v: &[u32]| v.iter().map(|i| format!("{i}\n")).collect::<String>();
    let mut manifest_json = serde_json::to_string_pretty(&manifest)?;
    manifest_json.push('\n');
    let files = vec![
        ("manifest.json".to_string(), manifest_json.into_bytes()),
        ("word_vectors.txt".to_string(), words.to_text().into_bytes()),
        ("phrases.jsonl".to_string(), phrases_out.into_bytes()),
        ("graph.txt".to_string(), graph.into_bytes()),
        ("seen.txt".to_string(), ids(&seen).into_bytes()),
        ("unseen.txt".to_string(), ids(&unseen).into_bytes()),
        (
            "train.fgpf".to_string(),
            encode_region_features(&set(train))?,
        ),
        ("test.fgpf".to_string(), encode_region_features(&set(test))?),
    ];

    Ok(SyntheticWorld {
        spec: spec.clone(),
        tuples,
        seen,
        unseen,
        presence_dirs,
        value_dirs,
        manifest,
        files,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticWorldSpec {
        SyntheticWorldSpec {
            attributes: 2,
            values: 3,
            seen_classes: 6,
            unseen_classes: 3,
            samples_per_class: 4,
            ..SyntheticWorldSpec::default()
        }
    }

    #[test]
    fn infeasible_tuple_count() {
        let spec = SyntheticWorldSpec {
            seen_classes: 7,
            ..small()
        };
        let msg = generate_synthetic_world(&spec).unwrap_err().to_string();
        assert!(msg.contains("9 tuples"), "{msg}");
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = generate_synthetic_world(&small()).unwrap();
        let b = generate_synthetic_world(&small()).unwrap();
        assert_eq!(a.files, b.files);
        let c = generate_synthetic_world(&SyntheticWorldSpec { seed: 1, ..small() }).unwrap();
        assert_ne!(a.files, c.files);
    }

    #[test]
    fn unseen_values_are_covered_by_seen() {
        let w = generate_synthetic_world(&SyntheticWorldSpec::default()).unwrap();
        let distinct: BTreeSet<_> = w.tuples.iter().collect();
        assert_eq!(distinct.len(), 24);
        for &u in &w.unseen {
            for (a, &v) in w.tuples[u as usize].iter().enumerate() {
                assert!(w.seen.iter().any(|&s| w.tuples[s as usize][a] == v));
            }
        }
    }

    #[test]
    fn edges_share_a_value() {
        let w = generate_synthetic_world(&small()).unwrap();
        let graph = &w.files.iter().find(|f| f.0 == "graph.txt").unwrap().1;
        for line in std::str::from_utf8(graph).unwrap().lines() {
            let ij: Vec<usize> = line.split(' ').map(|x| x.parse().unwrap()).collect();
            let (ti, tj) = (&w.tuples[ij[0]], &w.tuples[ij[1]]);
            assert!(ti.iter().zip(tj).any(|(x, y)| x == y));
        }
    }
}

//! Multi-view lesion data: a synthetic generator, vector-space augmentation
//! and manifest-based storage of precomputed feature vectors.
//!
//! A manifest is a UTF-8 CSV with header `lesion_id,label,feature_path`.
//! Each row points at a feature file holding one or more views of the
//! lesion; rows sharing a lesion id are concatenated in file order. Feature
//! paths are resolved relative to the manifest's directory.
//!
//! Feature files are either text (one whitespace-separated row of reals per
//! view) or binary: magic `MVC1`, little-endian `u32` view count, `u32`
//! dimension, then `count × dim` little-endian `f64` values.

use std::collections::HashMap;
use std::f64::consts::FRAC_PI_4;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::rng::{seeded, Rng};
use crate::{Error, Label, Result};

/// One lesion and all of its views.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LesionRecord {
    pub lesion_id: String,
    pub label: Label,
    pub views: Vec<Vec<f64>>,
}

impl LesionRecord {
    pub fn view_dim(&self) -> usize {
        self.views.first().map_or(0, Vec::len)
    }
}

/// Checks that every lesion has views of one shared dimension and that ids are unique.
pub fn validate_records(records: &[LesionRecord]) -> Result<usize> {
    let dim = records.first().map_or(0, LesionRecord::view_dim);
    let mut seen = std::collections::HashSet::new();
    for r in records {
        if r.views.is_empty() {
            return Err(Error::DataIntegrity(format!(
                "lesion {} has no views",
                r.lesion_id
            )));
        }
        if r.views.iter().any(|v| v.len() != dim) {
            return Err(Error::DataIntegrity(format!(
                "lesion {} has views of a dimension other than {dim}",
                r.lesion_id
            )));
        }
        if r.views.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::DataIntegrity(format!(
                "lesion {} has non-finite features",
                r.lesion_id
            )));
        }
        if !seen.insert(r.lesion_id.as_str()) {
            return Err(Error::DataIntegrity(format!(
                "duplicate lesion id {}",
                r.lesion_id
            )));
        }
    }
    Ok(dim)
}

pub fn total_views(records: &[LesionRecord]) -> usize {
    records.iter().map(|r| r.views.len()).sum()
}

/// SHA-256 over ids, labels and the exact bits of every feature value.
pub fn fingerprint(records: &[LesionRecord]) -> String {
    let mut h = Sha256::new();
    for r in records {
        h.update((r.lesion_id.len() as u64).to_le_bytes());
        h.update(r.lesion_id.as_bytes());
        h.update([r.label as u8]);
        h.update((r.views.len() as u64).to_le_bytes());
        for v in &r.views {
            h.update((v.len() as u64).to_le_bytes());
            for x in v {
                h.update(x.to_le_bytes());
            }
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub latent_dim: usize,
    pub view_dim: usize,
    /// Distance between the two class means in latent space.
    pub class_separation: f64,
    pub view_noise_sigma: f64,
    /// Lesion count for (benign, malignant).
    pub lesions_per_class: (usize, usize),
    /// Inclusive (min, max) views per lesion.
    pub views_per_lesion: (usize, usize),
    /// Largest rotation angle, in radians, between a view and its lesion latent.
    pub max_view_angle: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            latent_dim: 8,
            view_dim: 16,
            class_separation: 6.0,
            view_noise_sigma: 0.5,
            lesions_per_class: (100, 100),
            views_per_lesion: (2, 6),
            max_view_angle: FRAC_PI_4,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.latent_dim == 0 || self.view_dim == 0 {
            return fail("latent_dim and view_dim must be >= 1".into());
        }
        if self.view_dim < self.latent_dim {
            return fail(format!(
                "view_dim {} is smaller than latent_dim {}",
                self.view_dim, self.latent_dim
            ));
        }
        if !(self.class_separation >= 0.0 && self.class_separation.is_finite()) {
            return fail(format!(
                "class_separation must be >= 0, got {}",
                self.class_separation
            ));
        }
        if !(self.view_noise_sigma >= 0.0 && self.view_noise_sigma.is_finite()) {
            return fail(format!(
                "view_noise_sigma must be >= 0, got {}",
                self.view_noise_sigma
            ));
        }
        if !(self.max_view_angle >= 0.0 && self.max_view_angle.is_finite()) {
            return fail(format!(
                "max_view_angle must be >= 0, got {}",
                self.max_view_angle
            ));
        }
        let (lo, hi) = self.views_per_lesion;
        if lo == 0 || lo > hi {
            return fail(format!(
                "views_per_lesion {lo}:{hi} must satisfy 1 <= min <= max"
            ));
        }
        Ok(())
    }
}

fn gaussian_vec(dim: usize, rng: &mut Rng) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gram-Schmidt: `count` random orthonormal vectors in `dim` dimensions.
fn random_orthonormal(dim: usize, count: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v = gaussian_vec(dim, rng);
        for b in &basis {
            let d = dot(&v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
        }
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    basis
}

/// Rotates `u` by `angle` within the plane spanned by orthonormal `p`, `q`.
fn rotate_in_plane(u: &[f64], p: &[f64], q: &[f64], angle: f64) -> Vec<f64> {
    let (up, uq) = (dot(u, p), dot(u, q));
    let (s, c) = angle.sin_cos();
    u.iter()
        .zip(p.iter().zip(q))
        .map(|(&x, (&pi, &qi))| x + (c - 1.0) * (up * pi + uq * qi) + s * (up * qi - uq * pi))
        .collect()
}

/// Generates lesions whose views are noisy rotations of a per-lesion latent.
///
/// Class means sit at `±separation/2` along a random latent direction. Each
/// lesion draws a latent `u ~ N(μ_c, I)`. Each view rotates `u` in a uniformly
/// random plane by an angle uniform in `[-max_view_angle, max_view_angle]`,
/// embeds it into `view_dim` through a fixed random isometry and adds
/// `N(0, σ²)` noise. Benign lesions come first.
pub fn generate_synthetic(config: &SynthConfig) -> Result<Vec<LesionRecord>> {
    config.validate()?;
    let mut rng = seeded(config.seed);
    let (ld, vd) = (config.latent_dim, config.view_dim);
    // columns of the latent → view isometry
    let embed = random_orthonormal(vd, ld, &mut rng);
    let direction = random_orthonormal(ld, 1, &mut rng).remove(0);
    let half = config.class_separation / 2.0;

    let (n_benign, n_malignant) = config.lesions_per_class;
    let labels = std::iter::repeat_n(Label::Benign, n_benign)
        .chain(std::iter::repeat_n(Label::Malignant, n_malignant));
    let mut records = Vec::with_capacity(n_benign + n_malignant);
    for (idx, label) in labels.enumerate() {
        let sign = if label.is_malignant() { 1.0 } else { -1.0 };
        let latent: Vec<f64> = gaussian_vec(ld, &mut rng)
            .into_iter()
            .zip(&direction)
            .map(|(z, d)| z + sign * half * d)
            .collect();
        let n_views = rng.random_range(config.views_per_lesion.0..=config.views_per_lesion.1);
        let views = (0..n_views)
            .map(|_| {
                let rotated = if ld >= 2 {
                    let plane = random_orthonormal(ld, 2, &mut rng);
                    let angle = if config.max_view_angle > 0.0 {
                        rng.random_range(-config.max_view_angle..=config.max_view_angle)
                    } else {
                        0.0
                    };
                    rotate_in_plane(&latent, &plane[0], &plane[1], angle)
                } else {
                    latent.clone()
                };
                (0..vd)
                    .map(|r| {
                        let clean: f64 =
                            embed.iter().zip(&rotated).map(|(col, x)| col[r] * x).sum();
                        let noise: f64 = StandardNormal.sample(&mut rng);
                        clean + config.view_noise_sigma * noise
                    })
                    .collect()
            })
            .collect();
        records.push(LesionRecord {
            lesion_id: format!("L{idx:05}"),
            label,
            views,
        });
    }
    Ok(records)
}

/// Additive Gaussian noise followed by independent coordinate dropout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub noise_sigma: f64,
    pub dropout_prob: f64,
}

impl AugmentConfig {
    pub const IDENTITY: AugmentConfig = AugmentConfig {
        noise_sigma: 0.0,
        dropout_prob: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(format!(
                "augment noise_sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        if !(0.0..=1.0).contains(&self.dropout_prob) {
            return Err(Error::Config(format!(
                "augment dropout_prob must be in [0, 1], got {}",
                self.dropout_prob
            )));
        }
        Ok(())
    }
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            noise_sigma: 0.2,
            dropout_prob: 0.1,
        }
    }
}

/// `mask ⊙ (v + η)` with `η ~ N(0, σ²)` and each mask entry zero with `dropout_prob`.
///
/// The identity configuration returns `v` unchanged without consuming randomness.
pub fn augment_view(v: &[f64], config: &AugmentConfig, rng: &mut Rng) -> Vec<f64> {
    if *config == AugmentConfig::IDENTITY {
        return v.to_vec();
    }
    v.iter()
        .map(|&x| {
            let noise: f64 = if config.noise_sigma > 0.0 {
                config.noise_sigma * Distribution::<f64>::sample(&StandardNormal, rng)
            } else {
                0.0
            };
            let keep = config.dropout_prob <= 0.0 || !rng.random_bool(config.dropout_prob);
            if keep {
                x + noise
            } else {
                0.0
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureFormat {
    #[default]
    Text,
    Binary,
}

pub const BINARY_MAGIC: &[u8; 4] = b"MVC1";

pub fn encode_features(views: &[Vec<f64>], format: FeatureFormat) -> Result<Vec<u8>> {
    let dim = views.first().map_or(0, Vec::len);
    if views.iter().any(|v| v.len() != dim) {
        return Err(Error::Shape("views differ in dimension".into()));
    }
    Ok(match format {
        FeatureFormat::Text => {
            let mut s = String::new();
            for v in views {
                let row: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                s.push_str(&row.join(" "));
                s.push('\n');
            }
            s.into_bytes()
        }
        FeatureFormat::Binary => {
            let count = u32::try_from(views.len())
                .map_err(|_| Error::Shape("too many views for binary format".into()))?;
            let dim32 = u32::try_from(dim)
                .map_err(|_| Error::Shape("dimension too large for binary format".into()))?;
            let mut out = Vec::with_capacity(12 + 8 * views.len() * dim);
            out.extend_from_slice(BINARY_MAGIC);
            out.extend_from_slice(&count.to_le_bytes());
            out.extend_from_slice(&dim32.to_le_bytes());
            for x in views.iter().flatten() {
                out.extend_from_slice(&x.to_le_bytes());
            }
            out
        }
    })
}

/// Decodes either feature format, detected by the binary magic.
pub fn decode_features(bytes: &[u8]) -> Result<Vec<Vec<f64>>> {
    if bytes.starts_with(BINARY_MAGIC) {
        let header = |at: usize| -> Result<usize> {
            let b: [u8; 4] = bytes
                .get(at..at + 4)
                .and_then(|s| s.try_into().ok())
                .ok_or_else(|| Error::Parse("truncated binary feature header".into()))?;
            Ok(u32::from_le_bytes(b) as usize)
        };
        let count = header(4)?;
        let dim = header(8)?;
        let body = &bytes[12..];
        if body.len() != count * dim * 8 {
            return Err(Error::Parse(format!(
                "binary feature body has {} bytes, expected {}",
                body.len(),
                count * dim * 8
            )));
        }
        let values: Vec<f64> = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        return Ok(if dim == 0 {
            vec![Vec::new(); count]
        } else {
            values.chunks(dim).map(<[f64]>::to_vec).collect()
        });
    }
    let text = std::str::from_utf8(bytes)
        .map_err(|e| Error::Parse(format!("feature file is neither MVC1 nor UTF-8: {e}")))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            line.split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>()
                        .map_err(|e| Error::Parse(format!("feature row {i}: {tok:?}: {e}")))
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestRow {
    lesion_id: String,
    label: u8,
    feature_path: String,
}

pub const MANIFEST_FILE: &str = "manifest.csv";

/// Writes `dir/manifest.csv` and one feature file per lesion under `dir/features/`.
pub fn save_manifest(
    records: &[LesionRecord],
    dir: &Path,
    format: FeatureFormat,
) -> Result<PathBuf> {
    validate_records(records)?;
    let feat_dir = dir.join("features");
    fs::create_dir_all(&feat_dir).map_err(|e| Error::io(&feat_dir, e))?;
    let ext = match format {
        FeatureFormat::Text => "txt",
        FeatureFormat::Binary => "bin",
    };
    let manifest_path = dir.join(MANIFEST_FILE);
    let mut writer = csv::Writer::from_path(&manifest_path)
        .map_err(|e| Error::DataIntegrity(format!("{}: {e}", manifest_path.display())))?;
    for r in records {
        if r.lesion_id.contains(['/', '\\']) || r.lesion_id.starts_with('.') {
            return Err(Error::DataIntegrity(format!(
                "lesion id {:?} cannot be used as a file name",
                r.lesion_id
            )));
        }
        let rel = format!("features/{}.{ext}", r.lesion_id);
        let path = dir.join(&rel);
        fs::write(&path, encode_features(&r.views, format)?).map_err(|e| Error::io(&path, e))?;
        writer
            .serialize(ManifestRow {
                lesion_id: r.lesion_id.clone(),
                label: r.label as u8,
                feature_path: rel,
            })
            .map_err(|e| Error::DataIntegrity(e.to_string()))?;
    }
    writer.flush().map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest_path)
}

/// Resolves a data location: a manifest file, or a directory containing `manifest.csv`.
pub fn manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    }
}

/// Reads a manifest and its feature files, grouping rows by lesion id in
/// order of first appearance.
pub fn load_manifest(path: &Path) -> Result<Vec<LesionRecord>> {
    let path = manifest_path(path);
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["lesion_id", "label", "feature_path"] {
        return Err(Error::Parse(format!(
            "{}: expected header lesion_id,label,feature_path",
            path.display()
        )));
    }
    let mut records: Vec<LesionRecord> = Vec::new();
    let mut by_id: HashMap<String, usize> = HashMap::new();
    for (line, row) in reader.deserialize::<ManifestRow>().enumerate() {
        let row =
            row.map_err(|e| Error::Parse(format!("{} row {}: {e}", path.display(), line + 1)))?;
        let label = Label::try_from(row.label)?;
        let feat_path = base.join(&row.feature_path);
        let bytes = fs::read(&feat_path).map_err(|e| Error::io(&feat_path, e))?;
        let views = decode_features(&bytes)?;
        match by_id.get(&row.lesion_id) {
            Some(&i) => {
                if records[i].label != label {
                    return Err(Error::DataIntegrity(format!(
                        "lesion {} is labelled both {} and {}",
                        row.lesion_id, records[i].label as u8, label as u8
                    )));
                }
                records[i].views.extend(views);
            }
            None => {
                by_id.insert(row.lesion_id.clone(), records.len());
                records.push(LesionRecord {
                    lesion_id: row.lesion_id,
                    label,
                    views,
                });
            }
        }
    }
    validate_records(&records)?;
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn norm(v: &[f64]) -> f64 {
        dot(v, v).sqrt()
    }

    #[test]
    fn counts_lesions_and_views() {
        let cfg = SynthConfig {
            lesions_per_class: (2, 2),
            views_per_lesion: (3, 3),
            ..SynthConfig::default()
        };
        let recs = generate_synthetic(&cfg).unwrap();
        assert_eq!(recs.len(), 4);
        assert_eq!(total_views(&recs), 12);
        assert_eq!(recs.iter().filter(|r| r.label.is_malignant()).count(), 2);
    }

    #[test]
    fn noiseless_views_share_norm() {
        let cfg = SynthConfig {
            latent_dim: 5,
            view_dim: 5,
            view_noise_sigma: 0.0,
            views_per_lesion: (2, 2),
            lesions_per_class: (3, 3),
            max_view_angle: std::f64::consts::PI,
            ..SynthConfig::default()
        };
        for r in generate_synthetic(&cfg).unwrap() {
            assert!((norm(&r.views[0]) - norm(&r.views[1])).abs() < 1e-12);
            assert_ne!(r.views[0], r.views[1]);
        }
    }

    #[test]
    fn generation_is_bitwise_reproducible() {
        let cfg = SynthConfig {
            lesions_per_class: (5, 7),
            seed: 42,
            ..SynthConfig::default()
        };
        let a = generate_synthetic(&cfg).unwrap();
        let b = generate_synthetic(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(fingerprint(&a), fingerprint(&b));
        let c = generate_synthetic(&SynthConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(fingerprint(&a), fingerprint(&c));
    }

    #[test]
    fn view_dim_below_latent_is_rejected() {
        let cfg = SynthConfig {
            latent_dim: 8,
            view_dim: 4,
            ..SynthConfig::default()
        };
        assert!(matches!(generate_synthetic(&cfg), Err(Error::Config(_))));
    }

    /// Logistic regression by full-batch gradient descent, trained on half the
    /// lesions and scored on the other half.
    fn linear_probe_accuracy(recs: &[LesionRecord]) -> f64 {
        let (train, test): (Vec<_>, Vec<_>) =
            recs.iter().enumerate().partition(|(i, _)| i % 2 == 0);
        let flatten = |part: &[(usize, &LesionRecord)]| -> Vec<(Vec<f64>, f64)> {
            part.iter()
                .flat_map(|(_, r)| r.views.iter().map(|v| (v.clone(), r.label.as_f64())))
                .collect()
        };
        let (train, test) = (flatten(&train), flatten(&test));
        let dim = train[0].0.len();
        let mut w = vec![0.0; dim + 1];
        for _ in 0..500 {
            let mut g = vec![0.0; dim + 1];
            for (x, y) in &train {
                let z = w[dim] + dot(&w[..dim], x);
                let p = 1.0 / (1.0 + (-z).exp());
                for j in 0..dim {
                    g[j] += (p - y) * x[j];
                }
                g[dim] += p - y;
            }
            for j in 0..=dim {
                w[j] -= 0.1 * g[j] / train.len() as f64;
            }
        }
        let correct = test
            .iter()
            .filter(|(x, y)| ((w[dim] + dot(&w[..dim], x) > 0.0) as u8 as f64) == *y)
            .count();
        correct as f64 / test.len() as f64
    }

    #[test]
    fn separated_classes_are_linearly_separable() {
        for seed in 0..3 {
            let cfg = SynthConfig {
                seed,
                ..SynthConfig::default()
            };
            let acc = linear_probe_accuracy(&generate_synthetic(&cfg).unwrap());
            assert!(acc > 0.9, "seed {seed}: linear probe accuracy {acc}");
        }
    }

    #[test]
    fn identity_augmentation() {
        let v = vec![1.5, -2.0, 0.25];
        assert_eq!(
            augment_view(&v, &AugmentConfig::IDENTITY, &mut seeded(0)),
            v
        );
    }

    #[test]
    fn full_dropout_zeroes_everything() {
        let cfg = AugmentConfig {
            noise_sigma: 0.3,
            dropout_prob: 1.0,
        };
        assert!(augment_view(&[1.0, 2.0, 3.0], &cfg, &mut seeded(0))
            .iter()
            .all(|&x| x == 0.0));
    }

    #[test]
    fn augmentation_replays_with_seed() {
        let cfg = AugmentConfig::default();
        let v: Vec<f64> = (0..16).map(|i| i as f64 * 0.1).collect();
        let a = augment_view(&v, &cfg, &mut seeded(5));
        let b = augment_view(&v, &cfg, &mut seeded(5));
        assert_eq!(a, b);
        assert_ne!(a, v);
        assert!(AugmentConfig {
            noise_sigma: 0.0,
            dropout_prob: 1.5
        }
        .validate()
        .is_err());
    }

    #[test]
    fn feature_formats_round_trip_exactly() {
        let views = vec![
            vec![0.1, -1.0 / 3.0, f64::MIN_POSITIVE, 1e300],
            vec![std::f64::consts::PI, -0.0, 2.5e-310, 7.0],
        ];
        for fmt in [FeatureFormat::Text, FeatureFormat::Binary] {
            let bytes = encode_features(&views, fmt).unwrap();
            let back = decode_features(&bytes).unwrap();
            for (a, b) in views.iter().flatten().zip(back.iter().flatten()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
        let bin = encode_features(&views, FeatureFormat::Binary).unwrap();
        assert_eq!(&bin[..4], b"MVC1");
        assert_eq!(u32::from_le_bytes(bin[4..8].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bin[8..12].try_into().unwrap()), 4);
        assert!(decode_features(&bin[..20]).is_err());
    }

    #[test]
    fn manifest_groups_rows_and_rejects_conflicts() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        fs::write(d.join("a1.txt"), "1 2\n3 4\n").unwrap();
        fs::write(d.join("a2.txt"), "5 6\n").unwrap();
        fs::write(d.join("b.txt"), "7 8\n").unwrap();
        fs::write(
            d.join("manifest.csv"),
            "lesion_id,label,feature_path\nA,1,a1.txt\nB,0,b.txt\nA,1,a2.txt\n",
        )
        .unwrap();
        let recs = load_manifest(&d.join("manifest.csv")).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].lesion_id, "A");
        assert_eq!(
            recs[0].views,
            vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]
        );
        assert_eq!(recs[1].label, Label::Benign);

        fs::write(
            d.join("manifest.csv"),
            "lesion_id,label,feature_path\nA,1,a1.txt\nA,0,a2.txt\n",
        )
        .unwrap();
        assert!(matches!(load_manifest(d), Err(Error::DataIntegrity(_))));

        fs::write(
            d.join("manifest.csv"),
            "lesion_id,label,feature_path\nA,1,missing.txt\n",
        )
        .unwrap();
        assert!(matches!(load_manifest(d), Err(Error::Io { .. })));
    }

    #[test]
    fn save_and_load_round_trip() {
        let recs = generate_synthetic(&SynthConfig {
            lesions_per_class: (4, 3),
            seed: 9,
            ..SynthConfig::default()
        })
        .unwrap();
        for fmt in [FeatureFormat::Text, FeatureFormat::Binary] {
            let dir = tempfile::tempdir().unwrap();
            save_manifest(&recs, dir.path(), fmt).unwrap();
            let back = load_manifest(dir.path()).unwrap();
            assert_eq!(fingerprint(&back), fingerprint(&recs));
            assert_eq!(back, recs);
        }
    }
}

//! Flat `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are the field
//! names of the training and synthetic-data configurations; a file may mix
//! both, and each command reads the keys it understands.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use mvc_core::dataset::SynthConfig;
use mvc_core::trainer::TrainConfig;
use mvc_core::{Error, Result};

pub const SEED_ENV: &str = "MVC_SEED";

pub const TRAIN_KEYS: &[&str] = &[
    "variant",
    "alpha",
    "temperature",
    "epochs",
    "base_lr",
    "groups_per_batch",
    "views_per_group",
    "noise_sigma",
    "dropout_prob",
    "seed",
    "dual_view",
    "normalize_positives",
    "hidden",
    "embed_dim",
    "threshold",
    "knn_ks",
    "knn_temperature",
    "folds",
];

pub const SYNTH_KEYS: &[&str] = &[
    "latent_dim",
    "view_dim",
    "class_separation",
    "view_noise_sigma",
    "lesions_per_class",
    "views_per_lesion",
    "max_view_angle",
    "seed",
    "format",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    pub values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("config line {}: expected key = value", n + 1))
            })?;
            let key = k.trim().to_string();
            if !TRAIN_KEYS.contains(&key.as_str()) && !SYNTH_KEYS.contains(&key.as_str()) {
                return Err(Error::Config(format!(
                    "config line {}: unknown key {key:?}",
                    n + 1
                )));
            }
            values.insert(key, v.trim().trim_matches('"').to_string());
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.values
            .get(key)
            .map(|v| parse_value(key, v))
            .transpose()
    }
}

pub fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.trim()
        .parse()
        .map_err(|e| Error::Config(format!("{key} = {v:?}: {e}")))
}

pub fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    v.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

/// Parses `a:b`, or a single `a` meaning `a:a`.
pub fn parse_pair(key: &str, v: &str) -> Result<(usize, usize)> {
    match v.split_once(':') {
        Some((a, b)) => Ok((parse_value(key, a)?, parse_value(key, b)?)),
        None => {
            let a = parse_value(key, v)?;
            Ok((a, a))
        }
    }
}

/// Seed from `MVC_SEED`, if set.
pub fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => parse_value(SEED_ENV, &v).map(Some),
        Err(_) => Ok(None),
    }
}

/// Defaults, then `MVC_SEED`, then the config file. Flags are applied by the caller.
pub fn base_train_config(file: &ConfigFile) -> Result<(TrainConfig, Option<usize>)> {
    let mut c = TrainConfig::default();
    if let Some(seed) = env_seed()? {
        c.seed = seed;
    }
    if let Some(v) = file.values.get("variant") {
        c.variant = v.parse()?;
    }
    macro_rules! set {
        ($key:literal => $($field:ident).+) => {
            if let Some(v) = file.get($key)? {
                c.$($field).+ = v;
            }
        };
    }
    set!("alpha" => alpha);
    set!("temperature" => temperature);
    set!("epochs" => epochs);
    set!("base_lr" => base_lr);
    set!("groups_per_batch" => batch.groups_per_batch);
    set!("views_per_group" => batch.views_per_group);
    set!("noise_sigma" => augment.noise_sigma);
    set!("dropout_prob" => augment.dropout_prob);
    set!("seed" => seed);
    set!("dual_view" => dual_view);
    set!("normalize_positives" => normalize_positives);
    set!("embed_dim" => embed_dim);
    set!("threshold" => threshold);
    set!("knn_temperature" => knn_temperature);
    if let Some(v) = file.values.get("hidden") {
        c.hidden = parse_list("hidden", v)?;
    }
    if let Some(v) = file.values.get("knn_ks") {
        c.knn_ks = parse_list("knn_ks", v)?;
    }
    Ok((c, file.get("folds")?))
}

/// Defaults, then `MVC_SEED`, then the config file.
pub fn base_synth_config(file: &ConfigFile) -> Result<SynthConfig> {
    let mut c = SynthConfig::default();
    if let Some(seed) = env_seed()? {
        c.seed = seed;
    }
    if let Some(v) = file.get("latent_dim")? {
        c.latent_dim = v;
    }
    if let Some(v) = file.get("view_dim")? {
        c.view_dim = v;
    }
    if let Some(v) = file.get("class_separation")? {
        c.class_separation = v;
    }
    if let Some(v) = file.get("view_noise_sigma")? {
        c.view_noise_sigma = v;
    }
    if let Some(v) = file.get("max_view_angle")? {
        c.max_view_angle = v;
    }
    if let Some(v) = file.get("seed")? {
        c.seed = v;
    }
    if let Some(v) = file.values.get("lesions_per_class") {
        c.lesions_per_class = parse_pair("lesions_per_class", v)?;
    }
    if let Some(v) = file.values.get("views_per_lesion") {
        c.views_per_lesion = parse_pair("views_per_lesion", v)?;
    }
    Ok(c)
}

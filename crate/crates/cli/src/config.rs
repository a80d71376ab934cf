//! Flat `section.key = value` experiment configuration.
//!
//! Relative input paths resolve against the output directory, so a config
//! can refer to files written by earlier commands of the same experiment.
//! The resolved form lists every key with defaults expanded. Input paths
//! are absolute; output paths inside the output directory stay relative, so
//! replaying a resolved config with another `--out` writes there instead.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use gcmt_core::model::{DEFAULT_FEATURE_DIM, DEFAULT_HIDDEN};
use gcmt_core::rng::derive_seed;
use gcmt_core::synthdata::DomainSpec;
use gcmt_core::trainer::{PretrainConfig, TrainConfig};

use crate::error::CliError;

pub const RESOLVED_CONFIG: &str = "resolved_config.conf";

/// Raw key/value pairs with the line each came from.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    pub entries: BTreeMap<String, (usize, String)>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        let mut problems = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((k, v)) = content.split_once('=') else {
                problems.push(format!("line {line_no}: expected `key = value`"));
                continue;
            };
            let key = k.trim().to_string();
            if key.is_empty() || !key.contains('.') {
                problems.push(format!("line {line_no}: key {key:?} needs a section prefix"));
                continue;
            }
            if let Some((first, _)) = entries.insert(key.clone(), (line_no, v.trim().to_string())) {
                problems.push(format!("line {line_no}: duplicate key {key} (first on line {first})"));
            }
        }
        if problems.is_empty() {
            Ok(Self { entries })
        } else {
            Err(CliError::Config(problems))
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e.to_string()))?;
        Self::parse(&text)
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainSection {
    pub dataset: PathBuf,
    pub output: PathBuf,
    pub hidden: usize,
    pub feature_dim: usize,
    /// `dims` is filled in from the dataset width when the command runs.
    pub config: PretrainConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptSection {
    pub dataset: PathBuf,
    pub checkpoints: Vec<PathBuf>,
    pub metrics: PathBuf,
    pub config: TrainConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSection {
    pub dataset: PathBuf,
    pub checkpoints: Vec<PathBuf>,
    pub output: PathBuf,
}

/// Fully resolved experiment: every default filled in, every path absolute.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub domains: Vec<DomainSpec>,
    pub pretrain: PretrainSection,
    pub adapt: AdaptSection,
    pub eval: EvalSection,
}

const DOMAIN_FIELDS: [&str; 11] = [
    "identity_count",
    "cameras",
    "images_per_identity_per_camera",
    "latent_dim",
    "input_dim",
    "noise_sigma",
    "camera_strength",
    "offset_scale",
    "eval",
    "seed",
    "identity_seed",
];

const PRETRAIN_FIELDS: [&str; 10] = [
    "dataset",
    "output",
    "epochs",
    "batch_size",
    "learning_rate",
    "aug_noise_sigma",
    "aug_drop_prob",
    "hidden",
    "feature_dim",
    "seed",
];

fn parse_value<T: std::str::FromStr>(key: &str, v: &str, what: &str, bad: &mut Vec<String>) -> Option<T> {
    match v.parse() {
        Ok(x) => Some(x),
        Err(_) => {
            bad.push(format!("{key}: expected {what}, got {v:?}"));
            None
        }
    }
}

fn list(v: &str) -> Vec<String> {
    v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
}

fn absolute(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn set_domain_field(spec: &mut DomainSpec, key: &str, field: &str, v: &str, bad: &mut Vec<String>) {
    let int = "a non-negative integer";
    let num = "a number";
    match field {
        "identity_count" => spec.identity_count = parse_value(key, v, int, bad).unwrap_or(spec.identity_count),
        "cameras" => spec.cameras = parse_value(key, v, int, bad).unwrap_or(spec.cameras),
        "images_per_identity_per_camera" => {
            spec.images_per_identity_per_camera =
                parse_value(key, v, int, bad).unwrap_or(spec.images_per_identity_per_camera)
        }
        "latent_dim" => spec.latent_dim = parse_value(key, v, int, bad).unwrap_or(spec.latent_dim),
        "input_dim" => spec.input_dim = parse_value(key, v, int, bad).unwrap_or(spec.input_dim),
        "noise_sigma" => spec.noise_sigma = parse_value(key, v, num, bad).unwrap_or(spec.noise_sigma),
        "camera_strength" => spec.camera_strength = parse_value(key, v, num, bad).unwrap_or(spec.camera_strength),
        "offset_scale" => spec.offset_scale = parse_value(key, v, num, bad).unwrap_or(spec.offset_scale),
        "eval" => spec.eval = parse_value(key, v, "true or false", bad).unwrap_or(spec.eval),
        "seed" => spec.seed = parse_value(key, v, int, bad).unwrap_or(spec.seed),
        "identity_seed" => spec.identity_seed = parse_value(key, v, int, bad).unwrap_or(spec.identity_seed),
        _ => unreachable!("field list checked by caller"),
    }
}

impl ExperimentConfig {
    /// Resolves `raw` against defaults. `config_dir` anchors a relative
    /// `run.out`; `--out` replaces it.
    pub fn resolve(raw: &RawConfig, overrides: &Overrides, config_dir: &Path) -> Result<Self, CliError> {
        let mut bad = Vec::new();
        let mut unknown = Vec::new();

        let seed = match overrides.seed {
            Some(s) => s,
            None => raw
                .get("run.seed")
                .and_then(|v| parse_value("run.seed", v, "an unsigned integer", &mut bad))
                .unwrap_or(0),
        };
        let out = match (&overrides.out, raw.get("run.out")) {
            (Some(o), _) => o.clone(),
            (None, Some(o)) => absolute(config_dir, o),
            (None, None) => config_dir.to_path_buf(),
        };
        let out = if out.is_absolute() {
            out
        } else {
            std::env::current_dir()
                .map_err(|e| CliError::Io(out.clone(), e.to_string()))?
                .join(out)
        };

        let domain_names = raw.get("data.domains").map(list).unwrap_or_else(|| vec!["source".into(), "target".into()]);
        if domain_names.is_empty() {
            bad.push("data.domains: at least one domain is required".into());
        }
        // domain i gets the seed of slot i of the default task, so the
        // default config reproduces `default_task(run.seed)`
        let mut domains: Vec<DomainSpec> = domain_names
            .iter()
            .enumerate()
            .map(|(i, name)| DomainSpec {
                eval: name.starts_with("target"),
                ..DomainSpec::desk(name, derive_seed(seed, 100 + i as u64))
            })
            .collect();

        let mut pretrain = PretrainConfig::desk(0, seed);
        let mut hidden = DEFAULT_HIDDEN;
        let mut feature_dim = DEFAULT_FEATURE_DIM;
        let mut pre_dataset = "source.csv".to_string();
        let mut pre_output = "source.ckpt".to_string();

        let mut train = TrainConfig {
            seed,
            ..TrainConfig::desk()
        };
        let mut pairs_given: Option<usize> = None;
        let mut adapt_dataset = "target.csv".to_string();
        let mut adapt_checkpoints = vec!["source.ckpt".to_string()];
        let mut metrics = "metrics.csv".to_string();

        let mut eval_dataset = "target.csv".to_string();
        let mut eval_checkpoints = vec!["pair_0.ckpt".to_string()];
        let mut eval_output = "eval.txt".to_string();

        for (key, (_, v)) in &raw.entries {
            let (section, rest) = key.split_once('.').expect("parser requires a section");
            match section {
                "run" if rest == "seed" || rest == "out" => {}
                "data" if rest == "domains" => {}
                "domain" => match rest.rsplit_once('.') {
                    Some((name, field)) if DOMAIN_FIELDS.contains(&field) => {
                        match domains.iter_mut().find(|d| d.name == name) {
                            Some(spec) => set_domain_field(spec, key, field, v, &mut bad),
                            None => bad.push(format!("{key}: domain {name:?} is not listed in data.domains")),
                        }
                    }
                    _ => unknown.push(key.clone()),
                },
                "pretrain" if PRETRAIN_FIELDS.contains(&rest) => {
                    let int = "a non-negative integer";
                    let num = "a number";
                    match rest {
                        "dataset" => pre_dataset = v.clone(),
                        "output" => pre_output = v.clone(),
                        "epochs" => pretrain.epochs = parse_value(key, v, int, &mut bad).unwrap_or(pretrain.epochs),
                        "batch_size" => {
                            pretrain.batch_size = parse_value(key, v, int, &mut bad).unwrap_or(pretrain.batch_size)
                        }
                        "learning_rate" => {
                            pretrain.learning_rate =
                                parse_value(key, v, num, &mut bad).unwrap_or(pretrain.learning_rate)
                        }
                        "aug_noise_sigma" => {
                            pretrain.aug_noise_sigma =
                                parse_value(key, v, num, &mut bad).unwrap_or(pretrain.aug_noise_sigma)
                        }
                        "aug_drop_prob" => {
                            pretrain.aug_drop_prob =
                                parse_value(key, v, num, &mut bad).unwrap_or(pretrain.aug_drop_prob)
                        }
                        "hidden" => hidden = parse_value(key, v, int, &mut bad).unwrap_or(hidden),
                        "feature_dim" => feature_dim = parse_value(key, v, int, &mut bad).unwrap_or(feature_dim),
                        "seed" => pretrain.seed = parse_value(key, v, int, &mut bad).unwrap_or(pretrain.seed),
                        _ => unreachable!(),
                    }
                }
                "adapt" => match rest {
                    "dataset" => adapt_dataset = v.clone(),
                    "checkpoints" => adapt_checkpoints = list(v),
                    "metrics" => metrics = v.clone(),
                    "pairs" => pairs_given = parse_value(key, v, "a positive integer", &mut bad),
                    _ if TrainConfig::KEYS.contains(&rest) => {
                        if let Err(e) = train.set(rest, v) {
                            bad.push(format!("adapt.{e}"));
                        }
                    }
                    _ => unknown.push(key.clone()),
                },
                "eval" => match rest {
                    "dataset" => eval_dataset = v.clone(),
                    "checkpoints" => eval_checkpoints = list(v),
                    "output" => eval_output = v.clone(),
                    _ => unknown.push(key.clone()),
                },
                _ => unknown.push(key.clone()),
            }
        }
        if !unknown.is_empty() {
            bad.insert(0, format!("unknown keys: {}", unknown.join(", ")));
        }

        for d in &domains {
            if let Err(e) = d.validate() {
                bad.push(format!("domain.{}: {e}", d.name));
            }
        }
        pretrain.dims = Vec::new();
        if hidden == 0 || feature_dim == 0 {
            bad.push("pretrain.hidden and pretrain.feature_dim must be positive".into());
        }
        if adapt_checkpoints.is_empty() {
            bad.push("adapt.checkpoints: at least one checkpoint is required".into());
        }
        match pairs_given {
            Some(p) if p != adapt_checkpoints.len() => bad.push(format!(
                "adapt.pairs = {p} but adapt.checkpoints lists {} files",
                adapt_checkpoints.len()
            )),
            _ => train.pairs = adapt_checkpoints.len().max(1),
        }
        if let Err(e) = train.validate() {
            bad.push(format!("adapt: {e}"));
        }
        if eval_checkpoints.is_empty() {
            bad.push("eval.checkpoints: at least one checkpoint is required".into());
        }
        if !bad.is_empty() {
            return Err(CliError::Config(bad));
        }
        Ok(Self {
            seed,
            domains,
            pretrain: PretrainSection {
                dataset: absolute(&out, &pre_dataset),
                output: absolute(&out, &pre_output),
                hidden,
                feature_dim,
                config: pretrain,
            },
            adapt: AdaptSection {
                dataset: absolute(&out, &adapt_dataset),
                checkpoints: adapt_checkpoints.iter().map(|c| absolute(&out, c)).collect(),
                metrics: absolute(&out, &metrics),
                config: train,
            },
            eval: EvalSection {
                dataset: absolute(&out, &eval_dataset),
                checkpoints: eval_checkpoints.iter().map(|c| absolute(&out, c)).collect(),
                output: absolute(&out, &eval_output),
            },
            out,
        })
    }

    /// Every key with its effective value; parses back to the same config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let path = |p: &Path| p.display().to_string();
        let output = |p: &Path| p.strip_prefix(&self.out).map_or_else(|_| path(p), path);
        let join = |ps: &[PathBuf]| ps.iter().map(|p| path(p)).collect::<Vec<_>>().join(", ");
        let _ = writeln!(s, "run.seed = {}", self.seed);
        let _ = writeln!(s, "run.out = {}", path(&self.out));
        let names: Vec<&str> = self.domains.iter().map(|d| d.name.as_str()).collect();
        let _ = writeln!(s, "data.domains = {}", names.join(", "));
        for d in &self.domains {
            let n = &d.name;
            let _ = writeln!(s, "domain.{n}.identity_count = {}", d.identity_count);
            let _ = writeln!(s, "domain.{n}.cameras = {}", d.cameras);
            let _ = writeln!(s, "domain.{n}.images_per_identity_per_camera = {}", d.images_per_identity_per_camera);
            let _ = writeln!(s, "domain.{n}.latent_dim = {}", d.latent_dim);
            let _ = writeln!(s, "domain.{n}.input_dim = {}", d.input_dim);
            let _ = writeln!(s, "domain.{n}.noise_sigma = {:?}", d.noise_sigma);
            let _ = writeln!(s, "domain.{n}.camera_strength = {:?}", d.camera_strength);
            let _ = writeln!(s, "domain.{n}.offset_scale = {:?}", d.offset_scale);
            let _ = writeln!(s, "domain.{n}.eval = {}", d.eval);
            let _ = writeln!(s, "domain.{n}.seed = {}", d.seed);
            let _ = writeln!(s, "domain.{n}.identity_seed = {}", d.identity_seed);
        }
        let p = &self.pretrain;
        let _ = writeln!(s, "pretrain.dataset = {}", path(&p.dataset));
        let _ = writeln!(s, "pretrain.output = {}", output(&p.output));
        let _ = writeln!(s, "pretrain.epochs = {}", p.config.epochs);
        let _ = writeln!(s, "pretrain.batch_size = {}", p.config.batch_size);
        let _ = writeln!(s, "pretrain.learning_rate = {:?}", p.config.learning_rate);
        let _ = writeln!(s, "pretrain.aug_noise_sigma = {:?}", p.config.aug_noise_sigma);
        let _ = writeln!(s, "pretrain.aug_drop_prob = {:?}", p.config.aug_drop_prob);
        let _ = writeln!(s, "pretrain.hidden = {}", p.hidden);
        let _ = writeln!(s, "pretrain.feature_dim = {}", p.feature_dim);
        let _ = writeln!(s, "pretrain.seed = {}", p.config.seed);
        let a = &self.adapt;
        let _ = writeln!(s, "adapt.dataset = {}", path(&a.dataset));
        let _ = writeln!(s, "adapt.checkpoints = {}", join(&a.checkpoints));
        let _ = writeln!(s, "adapt.metrics = {}", output(&a.metrics));
        for (k, v) in a.config.to_pairs() {
            let _ = writeln!(s, "adapt.{k} = {v}");
        }
        let e = &self.eval;
        let _ = writeln!(s, "eval.dataset = {}", path(&e.dataset));
        let _ = writeln!(s, "eval.checkpoints = {}", join(&e.checkpoints));
        let _ = writeln!(s, "eval.output = {}", output(&e.output));
        s
    }
}

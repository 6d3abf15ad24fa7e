//! Flat `key = value` config files with `[model]`, `[trainer]` and
//! `[data]` sections. Every field of the model and trainer configs is
//! addressable; validation collects every problem instead of stopping
//! at the first.

use jsp_core::BuildMode;
use jsp_policy::{ModelConfig, Precision};
use jsp_trainer::TrainerConfig;
use std::collections::BTreeMap;

#[derive(Debug, Clone)]
pub struct ConfigFile {
    pub model: ModelConfig,
    pub trainer: TrainerConfig,
    /// Generator shape, when the run generates its own instances.
    pub data_shape: Option<(usize, usize)>,
    /// FNV-1a hash of the raw file bytes, for provenance.
    pub hash: String,
}

/// FNV-1a over raw bytes, rendered as 16 hex digits.
pub fn fnv1a_hex(bytes: &[u8]) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
    }
    format!("{hash:016x}")
}

type Sections = BTreeMap<String, BTreeMap<String, (String, usize)>>;

fn split_sections(text: &str, errors: &mut Vec<String>) -> Sections {
    let mut sections: Sections = BTreeMap::new();
    let mut current = String::from("");
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') && line.ends_with(']') {
            current = line[1..line.len() - 1].trim().to_string();
            sections.entry(current.clone()).or_default();
            continue;
        }
        match line.split_once('=') {
            Some((key, value)) => {
                let key = key.trim().to_string();
                let value = value.trim().to_string();
                if current.is_empty() {
                    errors.push(format!(
                        "line {}: key `{key}` appears before any [section]",
                        lineno + 1
                    ));
                } else {
                    sections
                        .entry(current.clone())
                        .or_default()
                        .insert(key, (value, lineno + 1));
                }
            }
            None => errors.push(format!("line {}: expected `key = value`", lineno + 1)),
        }
    }
    sections
}

struct Section<'a> {
    name: &'a str,
    entries: Option<&'a BTreeMap<String, (String, usize)>>,
    errors: &'a mut Vec<String>,
    seen: Vec<String>,
}

impl<'a> Section<'a> {
    fn required<T: std::str::FromStr>(&mut self, key: &str) -> Option<T>
    where
        T::Err: std::fmt::Display,
    {
        self.seen.push(key.to_string());
        match self.entries.and_then(|e| e.get(key)) {
            None => {
                self.errors
                    .push(format!("[{}] missing required key `{key}`", self.name));
                None
            }
            Some((value, line)) => match value.parse::<T>() {
                Ok(v) => Some(v),
                Err(e) => {
                    self.errors.push(format!(
                        "[{}] line {line}: `{key} = {value}`: {e}",
                        self.name
                    ));
                    None
                }
            },
        }
    }

    fn optional<T: std::str::FromStr>(&mut self, key: &str, default: T) -> T
    where
        T::Err: std::fmt::Display,
    {
        self.seen.push(key.to_string());
        match self.entries.and_then(|e| e.get(key)) {
            None => default,
            Some((value, line)) => match value.parse::<T>() {
                Ok(v) => v,
                Err(e) => {
                    self.errors.push(format!(
                        "[{}] line {line}: `{key} = {value}`: {e}",
                        self.name
                    ));
                    default
                }
            },
        }
    }

    /// `none` or a float.
    fn optional_clip(&mut self, key: &str) -> Option<f64> {
        self.seen.push(key.to_string());
        match self.entries.and_then(|e| e.get(key)) {
            None => None,
            Some((value, line)) => {
                if value == "none" {
                    None
                } else {
                    match value.parse::<f64>() {
                        Ok(v) => Some(v),
                        Err(_) => {
                            self.errors.push(format!(
                                "[{}] line {line}: `{key} = {value}`: expected `none` or a number",
                                self.name
                            ));
                            None
                        }
                    }
                }
            }
        }
    }

    fn reject_unknown(&mut self) {
        if let Some(entries) = self.entries {
            for (key, (_, line)) in entries {
                if !self.seen.contains(key) {
                    self.errors
                        .push(format!("[{}] line {line}: unknown key `{key}`", self.name));
                }
            }
        }
    }
}

/// Parses and validates a config file. On failure the error lists every
/// problem found, one per line.
pub fn parse_config(text: &str) -> Result<ConfigFile, String> {
    let mut errors = Vec::new();
    let sections = split_sections(text, &mut errors);

    let mut model_sec = Section {
        name: "model",
        entries: sections.get("model"),
        errors: &mut errors,
        seen: Vec::new(),
    };
    if model_sec.entries.is_none() {
        model_sec.errors.push("missing [model] section".into());
    }
    let d_h = model_sec.required::<usize>("d_h");
    let n_heads = model_sec.required::<usize>("n_heads");
    let n_layers = model_sec.required::<usize>("n_layers");
    let ff_width = model_sec.required::<usize>("ff_width");
    let score_clip = model_sec.optional_clip("score_clip");
    let precision = model_sec.optional("precision", Precision::F64);
    model_sec.reject_unknown();

    let mut trainer_sec = Section {
        name: "trainer",
        entries: sections.get("trainer"),
        errors: &mut errors,
        seen: Vec::new(),
    };
    if trainer_sec.entries.is_none() {
        trainer_sec.errors.push("missing [trainer] section".into());
    }
    let learning_rate = trainer_sec.required::<f64>("learning_rate");
    let grad_clip = trainer_sec.required::<f64>("grad_clip");
    let batch_size = trainer_sec.required::<usize>("batch_size");
    let epoch_size = trainer_sec.required::<usize>("epoch_size");
    let n_epochs = trainer_sec.required::<usize>("n_epochs");
    let baseline_eval_size = trainer_sec.required::<usize>("baseline_eval_size");
    let ttest_alpha = trainer_sec.required::<f64>("ttest_alpha");
    let seed = trainer_sec.required::<u64>("seed");
    let adam_beta1 = trainer_sec.optional("adam_beta1", 0.9);
    let adam_beta2 = trainer_sec.optional("adam_beta2", 0.999);
    let adam_eps = trainer_sec.optional("adam_eps", 1e-8);
    let discount = trainer_sec.optional("discount", 1.0);
    let build_mode = trainer_sec.optional("build_mode", BuildMode::GapInsert);
    trainer_sec.reject_unknown();

    let mut data_sec = Section {
        name: "data",
        entries: sections.get("data"),
        errors: &mut errors,
        seen: Vec::new(),
    };
    let data_shape = if data_sec.entries.is_some() {
        let n = data_sec.required::<usize>("n_jobs");
        let m = data_sec.required::<usize>("n_machines");
        data_sec.reject_unknown();
        n.zip(m)
    } else {
        None
    };

    for name in sections.keys() {
        if !["model", "trainer", "data"].contains(&name.as_str()) {
            errors.push(format!("unknown section [{name}]"));
        }
    }

    let model = ModelConfig {
        d_h: d_h.unwrap_or(1),
        n_heads: n_heads.unwrap_or(1),
        n_layers: n_layers.unwrap_or(1),
        ff_width: ff_width.unwrap_or(1),
        score_clip,
        precision,
    };
    let trainer = TrainerConfig {
        learning_rate: learning_rate.unwrap_or(1e-5),
        grad_clip: grad_clip.unwrap_or(0.5),
        batch_size: batch_size.unwrap_or(1),
        epoch_size: epoch_size.unwrap_or(1),
        n_epochs: n_epochs.unwrap_or(1),
        baseline_eval_size: baseline_eval_size.unwrap_or(1),
        ttest_alpha: ttest_alpha.unwrap_or(0.05),
        adam_beta1,
        adam_beta2,
        adam_eps,
        discount,
        seed: seed.unwrap_or(0),
        build_mode,
    };
    if errors.is_empty() {
        if let Err(e) = model.validate() {
            errors.push(e.to_string());
        }
        if let Err(e) = trainer.validate() {
            errors.push(e.to_string());
        }
    }

    if errors.is_empty() {
        Ok(ConfigFile {
            model,
            trainer,
            data_shape,
            hash: fnv1a_hex(text.as_bytes()),
        })
    } else {
        Err(errors.join("\n"))
    }
}

/// Canonical rendering of a config, used when generating profiles.
pub fn render_config(
    model: &ModelConfig,
    trainer: &TrainerConfig,
    data_shape: Option<(usize, usize)>,
) -> String {
    let mut out = String::new();
    out.push_str("[model]\n");
    out.push_str(&format!("d_h = {}\n", model.d_h));
    out.push_str(&format!("n_heads = {}\n", model.n_heads));
    out.push_str(&format!("n_layers = {}\n", model.n_layers));
    out.push_str(&format!("ff_width = {}\n", model.ff_width));
    match model.score_clip {
        None => out.push_str("score_clip = none\n"),
        Some(c) => out.push_str(&format!("score_clip = {c}\n")),
    }
    out.push_str(&format!("precision = {}\n\n", model.precision));
    out.push_str("[trainer]\n");
    out.push_str(&format!("learning_rate = {}\n", trainer.learning_rate));
    out.push_str(&format!("grad_clip = {}\n", trainer.grad_clip));
    out.push_str(&format!("batch_size = {}\n", trainer.batch_size));
    out.push_str(&format!("epoch_size = {}\n", trainer.epoch_size));
    out.push_str(&format!("n_epochs = {}\n", trainer.n_epochs));
    out.push_str(&format!(
        "baseline_eval_size = {}\n",
        trainer.baseline_eval_size
    ));
    out.push_str(&format!("ttest_alpha = {}\n", trainer.ttest_alpha));
    out.push_str(&format!("adam_beta1 = {}\n", trainer.adam_beta1));
    out.push_str(&format!("adam_beta2 = {}\n", trainer.adam_beta2));
    out.push_str(&format!("adam_eps = {}\n", trainer.adam_eps));
    out.push_str(&format!("discount = {}\n", trainer.discount));
    out.push_str(&format!("seed = {}\n", trainer.seed));
    out.push_str(&format!("build_mode = {}\n", trainer.build_mode));
    if let Some((n, m)) = data_shape {
        out.push_str("\n[data]\n");
        out.push_str(&format!("n_jobs = {n}\n"));
        out.push_str(&format!("n_machines = {m}\n"));
    }
    out
}

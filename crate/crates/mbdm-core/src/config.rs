//! Run configuration: a flat `key = value` format with bracketed
//! sections `[data]`, `[model]`, `[diffusion]`, repeatable `[bridge.*]`,
//! `[sampler]` and `[train]`.
//!
//! Keys come from a closed vocabulary; unknown sections or keys are
//! rejected by name. Resolution materializes the dataset, fills every
//! default (including a data-estimated `sigma_data`) and produces a
//! canonical text whose hash ties checkpoints to their configuration.
//! Canonicalization is idempotent: resolving the canonical text
//! reproduces it byte-for-byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::bridge::{BridgeSet, GammaSchedule, ManualBridge};
use crate::constraint::{
    Checkerboard, CollisionField, DistanceField, DrivableMap, Normalized, OffroadField,
    OrthonormalPolytope, SceneSpec,
};
use crate::datagen;
use crate::error::{Error, Result};
use crate::liu::{LiuBoxBridge, LiuPotentialField};
use crate::real::Real;
use crate::sampler::{SamplerConfig, Solver};
use crate::schedule::NoiseSchedule;
use crate::score::ArchTag;
use crate::tensor::Tensor;
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DataKind {
    Checkerboard,
    Polytope,
    Scenes,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleMode {
    Model,
    Prior,
    Guidance,
}

impl SampleMode {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "model" => SampleMode::Model,
            "prior" => SampleMode::Prior,
            "guidance" => SampleMode::Guidance,
            other => {
                return Err(Error::config(format!(
                    "unknown mode '{other}' (expected model|prior|guidance)"
                )))
            }
        })
    }
    pub fn name(self) -> &'static str {
        match self {
            SampleMode::Model => "model",
            SampleMode::Prior => "prior",
            SampleMode::Guidance => "guidance",
        }
    }
}

#[derive(Debug, Clone)]
pub struct DataSection {
    pub kind: DataKind,
    pub n: usize,
    pub seed: u64,
    pub d: usize,
    pub m: usize,
    pub agents: usize,
    pub path: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ModelSection {
    pub arch: ArchTag,
    pub hidden: usize,
    pub blocks: usize,
    pub embed_dim: usize,
}

#[derive(Debug, Clone)]
pub struct BridgeSection {
    pub name: String,
    pub constraint: String,
    pub kind: String,
    pub gamma: String,
    pub gamma_scale: f64,
    pub sigma_data: f64,
    pub clamp: Option<f64>,
    pub normalize: bool,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone)]
pub struct SamplerSection {
    pub steps: usize,
    pub solver: Solver,
    pub churn: f64,
    pub mode: SampleMode,
    pub n: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct TrainSection {
    pub iterations: u64,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
    pub eval_every: u64,
    pub checkpoint_every: u64,
}

/// How constraints attach to the dataset (fields are rebuilt on demand
/// because distance fields are not clonable trait objects).
pub enum DataContext<T> {
    Plain,
    Checkerboard,
    Polytope(OrthonormalPolytope<T>),
    Scenes {
        spec: SceneSpec,
        map: DrivableMap<T>,
    },
}

/// Fully resolved run configuration.
pub struct Resolved<T> {
    pub canonical: String,
    pub hash: u64,
    pub data: DataSection,
    pub dataset: Tensor<T>,
    pub sched: NoiseSchedule<T>,
    pub model: ModelSection,
    pub bridge_sections: Vec<BridgeSection>,
    pub context: DataContext<T>,
    pub sampler: SamplerSection,
    pub train: TrainSection,
}

const SECTIONS: [&str; 5] = ["data", "model", "diffusion", "sampler", "train"];
const DATA_KEYS: [&str; 7] = ["kind", "n", "seed", "d", "m", "agents", "path"];
const MODEL_KEYS: [&str; 4] = ["arch", "hidden", "blocks", "embed_dim"];
const DIFFUSION_KEYS: [&str; 3] = ["sigma_min", "sigma_max", "sigma_data"];
const BRIDGE_KEYS: [&str; 9] = [
    "constraint",
    "kind",
    "gamma",
    "gamma_scale",
    "sigma_data",
    "clamp",
    "normalize",
    "lo",
    "hi",
];
const SAMPLER_KEYS: [&str; 6] = ["steps", "solver", "churn", "mode", "n", "seed"];
const TRAIN_KEYS: [&str; 6] = [
    "iterations",
    "batch",
    "lr",
    "seed",
    "eval_every",
    "checkpoint_every",
];

type Section = BTreeMap<String, String>;

struct RawConfig {
    sections: BTreeMap<String, Section>,
    bridges: Vec<(String, Section)>,
}

fn parse_raw(text: &str) -> Result<RawConfig> {
    let mut sections: BTreeMap<String, Section> = BTreeMap::new();
    let mut bridges: Vec<(String, Section)> = Vec::new();
    let mut current: Option<(String, bool)> = None; // (name, is_bridge)
    for (lineno, raw_line) in text.lines().enumerate() {
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            let name = name.trim();
            if let Some(bridge_name) = name.strip_prefix("bridge.") {
                if bridge_name.is_empty() {
                    return Err(Error::config(format!(
                        "line {}: bridge section needs a name",
                        lineno + 1
                    )));
                }
                if bridges.iter().any(|(n, _)| n == bridge_name) {
                    return Err(Error::config(format!(
                        "line {}: duplicate bridge section '{bridge_name}'",
                        lineno + 1
                    )));
                }
                bridges.push((bridge_name.to_string(), Section::new()));
                current = Some((bridge_name.to_string(), true));
            } else if SECTIONS.contains(&name) {
                if sections.contains_key(name) {
                    return Err(Error::config(format!(
                        "line {}: duplicate section '[{name}]'",
                        lineno + 1
                    )));
                }
                sections.insert(name.to_string(), Section::new());
                current = Some((name.to_string(), false));
            } else {
                return Err(Error::config(format!(
                    "line {}: unknown section '[{name}]'",
                    lineno + 1
                )));
            }
            continue;
        }
        let Some(eq) = line.find('=') else {
            return Err(Error::config(format!(
                "line {}: expected 'key = value', got '{line}'",
                lineno + 1
            )));
        };
        let key = line[..eq].trim().to_string();
        let value = line[eq + 1..].trim().to_string();
        let Some((section_name, is_bridge)) = &current else {
            return Err(Error::config(format!(
                "line {}: key '{key}' outside any section",
                lineno + 1
            )));
        };
        let (vocab, section): (&[&str], &mut Section) = if *is_bridge {
            let entry = bridges
                .iter_mut()
                .find(|(n, _)| n == section_name)
                .expect("current bridge exists");
            (&BRIDGE_KEYS, &mut entry.1)
        } else {
            let vocab: &[&str] = match section_name.as_str() {
                "data" => &DATA_KEYS,
                "model" => &MODEL_KEYS,
                "diffusion" => &DIFFUSION_KEYS,
                "sampler" => &SAMPLER_KEYS,
                "train" => &TRAIN_KEYS,
                _ => unreachable!(),
            };
            (vocab, sections.get_mut(section_name).expect("current section"))
        };
        if !vocab.contains(&key.as_str()) {
            return Err(Error::config(format!(
                "line {}: unknown key '{key}' in section '[{}{}]'",
                lineno + 1,
                if *is_bridge { "bridge." } else { "" },
                section_name
            )));
        }
        if section.insert(key.clone(), value).is_some() {
            return Err(Error::config(format!(
                "line {}: duplicate key '{key}'",
                lineno + 1
            )));
        }
    }
    Ok(RawConfig { sections, bridges })
}

fn get_parsed<T: std::str::FromStr>(
    section: &Section,
    section_name: &str,
    key: &str,
    default: T,
) -> Result<T> {
    match section.get(key) {
        None => Ok(default),
        Some(v) => v.parse().map_err(|_| {
            Error::config(format!(
                "[{section_name}] {key} = '{v}' is not a valid value"
            ))
        }),
    }
}

fn require<'a>(section: &'a Section, section_name: &str, key: &str) -> Result<&'a str> {
    section
        .get(key)
        .map(String::as_str)
        .ok_or_else(|| Error::config(format!("missing required key '{key}' in [{section_name}]")))
}

/// Pooled per-column standard deviation of the dataset.
fn pooled_std<T: Real>(data: &Tensor<T>) -> f64 {
    let (n, d) = (data.rows(), data.cols());
    if n < 2 {
        return 1.0;
    }
    let mut total_var = 0.0;
    for c in 0..d {
        let mut mean = 0.0;
        for r in 0..n {
            mean += data.row(r)[c].as_f64();
        }
        mean /= n as f64;
        let mut var = 0.0;
        for r in 0..n {
            let dv = data.row(r)[c].as_f64() - mean;
            var += dv * dv;
        }
        total_var += var / n as f64;
    }
    (total_var / d as f64).sqrt().max(1e-12)
}

pub fn parse_and_resolve<T: Real>(text: &str, base_dir: &Path) -> Result<Resolved<T>> {
    let raw = parse_raw(text)?;
    let empty = Section::new();
    let data_sec = raw.sections.get("data").unwrap_or(&empty);
    let model_sec = raw.sections.get("model").unwrap_or(&empty);
    let diff_sec = raw.sections.get("diffusion").unwrap_or(&empty);
    let sampler_sec = raw.sections.get("sampler").unwrap_or(&empty);
    let train_sec = raw.sections.get("train").unwrap_or(&empty);

    // [data]
    let kind = match require(data_sec, "data", "kind")? {
        "checkerboard" => DataKind::Checkerboard,
        "polytope" => DataKind::Polytope,
        "scenes" => DataKind::Scenes,
        "csv" => DataKind::Csv,
        other => {
            return Err(Error::config(format!(
                "[data] kind = '{other}' (expected checkerboard|polytope|scenes|csv)"
            )))
        }
    };
    let data = DataSection {
        kind: kind.clone(),
        n: get_parsed(data_sec, "data", "n", 1000usize)?,
        seed: get_parsed(data_sec, "data", "seed", 0u64)?,
        d: get_parsed(data_sec, "data", "d", 16usize)?,
        m: get_parsed(data_sec, "data", "m", 4usize)?,
        agents: get_parsed(data_sec, "data", "agents", 4usize)?,
        path: data_sec.get("path").cloned(),
    };

    let (dataset, context): (Tensor<T>, DataContext<T>) = match data.kind {
        DataKind::Checkerboard => (
            datagen::checkerboard_triangles(data.n, data.seed),
            DataContext::Checkerboard,
        ),
        DataKind::Polytope => {
            let (ds, poly) = datagen::polytope_dataset(data.n, data.d, data.m, data.seed)?;
            (ds, DataContext::Polytope(poly))
        }
        DataKind::Scenes => {
            let ds = datagen::toy_scenes(data.n, data.agents, data.seed)?;
            (
                ds.scenes,
                DataContext::Scenes {
                    spec: ds.spec,
                    map: ds.map,
                },
            )
        }
        DataKind::Csv => {
            let rel = data
                .path
                .as_ref()
                .ok_or_else(|| Error::config("missing required key 'path' in [data]"))?;
            let path = base_dir.join(rel);
            let (_, ds) = crate::io::read_matrix_csv(&path)?;
            (ds, DataContext::Plain)
        }
    };

    // [diffusion]
    let sigma_min = get_parsed(diff_sec, "diffusion", "sigma_min", 3e-5f64)?;
    let sigma_max = get_parsed(diff_sec, "diffusion", "sigma_max", 80.0f64)?;
    let sigma_data = match diff_sec.get("sigma_data").map(String::as_str) {
        None | Some("auto") => pooled_std(&dataset),
        Some(v) => v
            .parse()
            .map_err(|_| Error::config(format!("[diffusion] sigma_data = '{v}' invalid")))?,
    };
    let sched = NoiseSchedule::new(T::of(sigma_min), T::of(sigma_max), T::of(sigma_data))?;

    // [model]
    let model = ModelSection {
        arch: ArchTag::parse(require(model_sec, "model", "arch")?)?,
        hidden: get_parsed(model_sec, "model", "hidden", 256usize)?,
        blocks: get_parsed(model_sec, "model", "blocks", 2usize)?,
        embed_dim: get_parsed(model_sec, "model", "embed_dim", 128usize)?,
    };

    // [bridge.*]
    let mut bridge_sections = Vec::new();
    for (name, sec) in &raw.bridges {
        let constraint = require(sec, &format!("bridge.{name}"), "constraint")?.to_string();
        let b = BridgeSection {
            name: name.clone(),
            kind: sec.get("kind").cloned().unwrap_or_else(|| "manual".into()),
            gamma: sec
                .get("gamma")
                .cloned()
                .unwrap_or_else(|| "inverse_sigma_sq".into()),
            gamma_scale: get_parsed(sec, name, "gamma_scale", 1.0f64)?,
            sigma_data: get_parsed(sec, name, "sigma_data", sigma_data)?,
            clamp: match sec.get("clamp").map(String::as_str) {
                None | Some("none") => None,
                Some(v) => Some(v.parse().map_err(|_| {
                    Error::config(format!("[bridge.{name}] clamp = '{v}' invalid"))
                })?),
            },
            normalize: get_parsed(sec, name, "normalize", false)?,
            lo: get_parsed(sec, name, "lo", -1.0f64)?,
            hi: get_parsed(sec, name, "hi", 1.0f64)?,
            constraint,
        };
        validate_bridge_section(&b, &context, dataset.cols())?;
        bridge_sections.push(b);
    }
    bridge_sections.sort_by(|a, b| a.name.cmp(&b.name));

    // [sampler]
    let sampler = SamplerSection {
        steps: get_parsed(sampler_sec, "sampler", "steps", 100usize)?,
        solver: Solver::parse(
            sampler_sec
                .get("solver")
                .map(String::as_str)
                .unwrap_or("heun"),
        )?,
        churn: get_parsed(sampler_sec, "sampler", "churn", 10.0f64)?,
        mode: SampleMode::parse(
            sampler_sec
                .get("mode")
                .map(String::as_str)
                .unwrap_or("model"),
        )?,
        n: get_parsed(sampler_sec, "sampler", "n", 10000usize)?,
        seed: get_parsed(sampler_sec, "sampler", "seed", 0u64)?,
    };

    // [train]
    let train = TrainSection {
        iterations: get_parsed(train_sec, "train", "iterations", 20000u64)?,
        batch: get_parsed(train_sec, "train", "batch", 1000usize)?,
        lr: get_parsed(train_sec, "train", "lr", 3e-4f64)?,
        seed: get_parsed(train_sec, "train", "seed", 0u64)?,
        eval_every: get_parsed(train_sec, "train", "eval_every", 1000u64)?,
        checkpoint_every: get_parsed(train_sec, "train", "checkpoint_every", 0u64)?,
    };

    let canonical = canonical_text(&data, sigma_min, sigma_max, sigma_data, &model, &bridge_sections, &sampler, &train);
    let hash = crate::checkpoint::config_hash(&canonical);

    Ok(Resolved {
        canonical,
        hash,
        data,
        dataset,
        sched,
        model,
        bridge_sections,
        context,
        sampler,
        train,
    })
}

fn validate_bridge_section<T: Real>(
    b: &BridgeSection,
    context: &DataContext<T>,
    data_dim: usize,
) -> Result<()> {
    match b.constraint.as_str() {
        "checkerboard" => {
            if data_dim != 2 {
                return Err(Error::config(format!(
                    "[bridge.{}] checkerboard constraint needs 2-d data, have {data_dim}",
                    b.name
                )));
            }
        }
        "polytope" => {
            if !matches!(context, DataContext::Polytope(_)) {
                return Err(Error::config(format!(
                    "[bridge.{}] polytope constraint requires [data] kind = polytope",
                    b.name
                )));
            }
        }
        "collision" | "offroad" => {
            if !matches!(context, DataContext::Scenes { .. }) {
                return Err(Error::config(format!(
                    "[bridge.{}] {} constraint requires [data] kind = scenes",
                    b.name, b.constraint
                )));
            }
        }
        "box" => {
            if !(b.lo < b.hi) {
                return Err(Error::config(format!(
                    "[bridge.{}] needs lo < hi",
                    b.name
                )));
            }
        }
        other => {
            return Err(Error::config(format!(
                "[bridge.{}] unknown constraint '{other}'",
                b.name
            )))
        }
    }
    match b.kind.as_str() {
        "manual" => {}
        "liu" => {
            if b.constraint != "box" {
                return Err(Error::config(format!(
                    "[bridge.{}] kind = liu is only available for box constraints",
                    b.name
                )));
            }
        }
        other => {
            return Err(Error::config(format!(
                "[bridge.{}] unknown kind '{other}' (expected manual|liu)",
                b.name
            )))
        }
    }
    match b.gamma.as_str() {
        "inverse_sigma_sq" | "watermark" => Ok(()),
        other => Err(Error::config(format!(
            "[bridge.{}] unknown gamma '{other}' (expected inverse_sigma_sq|watermark)",
            b.name
        ))),
    }
}

#[allow(clippy::too_many_arguments)]
fn canonical_text(
    data: &DataSection,
    sigma_min: f64,
    sigma_max: f64,
    sigma_data: f64,
    model: &ModelSection,
    bridges: &[BridgeSection],
    sampler: &SamplerSection,
    train: &TrainSection,
) -> String {
    let mut out = String::new();
    let kind = match data.kind {
        DataKind::Checkerboard => "checkerboard",
        DataKind::Polytope => "polytope",
        DataKind::Scenes => "scenes",
        DataKind::Csv => "csv",
    };
    let _ = writeln!(out, "[data]");
    let _ = writeln!(out, "kind = {kind}");
    if data.kind != DataKind::Csv {
        let _ = writeln!(out, "n = {}", data.n);
        let _ = writeln!(out, "seed = {}", data.seed);
    }
    match data.kind {
        DataKind::Polytope => {
            let _ = writeln!(out, "d = {}", data.d);
            let _ = writeln!(out, "m = {}", data.m);
        }
        DataKind::Scenes => {
            let _ = writeln!(out, "agents = {}", data.agents);
        }
        DataKind::Csv => {
            let _ = writeln!(out, "path = {}", data.path.as_deref().unwrap_or(""));
        }
        DataKind::Checkerboard => {}
    }
    let _ = writeln!(out, "\n[model]");
    let _ = writeln!(out, "arch = {}", model.arch.name());
    let _ = writeln!(out, "hidden = {}", model.hidden);
    let _ = writeln!(out, "blocks = {}", model.blocks);
    let _ = writeln!(out, "embed_dim = {}", model.embed_dim);
    let _ = writeln!(out, "\n[diffusion]");
    let _ = writeln!(out, "sigma_min = {sigma_min}");
    let _ = writeln!(out, "sigma_max = {sigma_max}");
    let _ = writeln!(out, "sigma_data = {sigma_data}");
    for b in bridges {
        let _ = writeln!(out, "\n[bridge.{}]", b.name);
        let _ = writeln!(out, "constraint = {}", b.constraint);
        let _ = writeln!(out, "kind = {}", b.kind);
        let _ = writeln!(out, "gamma = {}", b.gamma);
        let _ = writeln!(out, "gamma_scale = {}", b.gamma_scale);
        let _ = writeln!(out, "sigma_data = {}", b.sigma_data);
        match b.clamp {
            Some(c) => {
                let _ = writeln!(out, "clamp = {c}");
            }
            None => {
                let _ = writeln!(out, "clamp = none");
            }
        }
        let _ = writeln!(out, "normalize = {}", b.normalize);
        if b.constraint == "box" {
            let _ = writeln!(out, "lo = {}", b.lo);
            let _ = writeln!(out, "hi = {}", b.hi);
        }
    }
    let solver = match sampler.solver {
        Solver::Heun => "heun",
        Solver::EulerMaruyama => "em",
    };
    let _ = writeln!(out, "\n[sampler]");
    let _ = writeln!(out, "steps = {}", sampler.steps);
    let _ = writeln!(out, "solver = {solver}");
    let _ = writeln!(out, "churn = {}", sampler.churn);
    let _ = writeln!(out, "mode = {}", sampler.mode.name());
    let _ = writeln!(out, "n = {}", sampler.n);
    let _ = writeln!(out, "seed = {}", sampler.seed);
    let _ = writeln!(out, "\n[train]");
    let _ = writeln!(out, "iterations = {}", train.iterations);
    let _ = writeln!(out, "batch = {}", train.batch);
    let _ = writeln!(out, "lr = {}", train.lr);
    let _ = writeln!(out, "seed = {}", train.seed);
    let _ = writeln!(out, "eval_every = {}", train.eval_every);
    let _ = writeln!(out, "checkpoint_every = {}", train.checkpoint_every);
    out
}

impl<T: Real> Resolved<T> {
    /// Construct the configured bridges (fields are rebuilt each call).
    pub fn build_bridges(&self) -> Result<BridgeSet<T>> {
        let mut bridges = Vec::new();
        for b in &self.bridge_sections {
            bridges.push(self.build_one_bridge(b)?);
        }
        BridgeSet::combine(bridges)
    }

    fn build_one_bridge(&self, b: &BridgeSection) -> Result<ManualBridge<T>> {
        let dim = self.dataset.cols();
        let field: Box<dyn DistanceField<T>> = match (b.constraint.as_str(), b.kind.as_str()) {
            ("checkerboard", _) => wrap(Checkerboard::standard(), b.normalize),
            ("polytope", _) => match &self.context {
                DataContext::Polytope(p) => wrap(p.clone(), b.normalize),
                _ => unreachable!("validated at parse time"),
            },
            ("collision", _) => match &self.context {
                DataContext::Scenes { spec, .. } => wrap(CollisionField::new(*spec), b.normalize),
                _ => unreachable!("validated at parse time"),
            },
            ("offroad", _) => match &self.context {
                DataContext::Scenes { spec, map } => {
                    wrap(OffroadField::new(*spec, map.clone()), b.normalize)
                }
                _ => unreachable!("validated at parse time"),
            },
            ("box", "liu") => {
                let bridge =
                    LiuBoxBridge::new(vec![T::of(b.lo); dim], vec![T::of(b.hi); dim])?;
                wrap(LiuPotentialField::new(bridge), b.normalize)
            }
            ("box", _) => wrap(
                OrthonormalPolytope::axis_box(
                    &vec![T::of(b.lo); dim],
                    &vec![T::of(b.hi); dim],
                )?,
                b.normalize,
            ),
            _ => unreachable!("validated at parse time"),
        };
        let gamma = match (b.kind.as_str(), b.gamma.as_str()) {
            // The analytic box bridge is exactly -gamma grad l with
            // gamma = 1/sigma^2.
            ("liu", _) => GammaSchedule::InverseSquared { scale: T::one() },
            (_, "inverse_sigma_sq") => GammaSchedule::InverseSquared {
                scale: T::of(b.gamma_scale),
            },
            (_, "watermark") => GammaSchedule::Watermark {
                sigma_data: T::of(b.sigma_data),
            },
            _ => unreachable!("validated at parse time"),
        };
        Ok(
            ManualBridge::new(b.name.clone(), field, gamma)
                .with_clamp(b.clamp.map(T::of))
                .with_sigma_data(T::of(b.sigma_data)),
        )
    }

    pub fn sampler_config(&self) -> SamplerConfig<T> {
        SamplerConfig {
            steps: self.sampler.steps,
            solver: self.sampler.solver,
            s_churn: T::of(self.sampler.churn),
            sigma_min: self.sched.sigma_min,
            sigma_max: self.sched.sigma_max,
            seed: self.sampler.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig<T> {
        TrainConfig {
            iterations: self.train.iterations,
            batch: self.train.batch,
            lr: T::of(self.train.lr),
            seed: self.train.seed,
            eval_every: self.train.eval_every,
            checkpoint_every: self.train.checkpoint_every,
        }
    }
}

fn wrap<T: Real, F: DistanceField<T> + 'static>(
    field: F,
    normalize: bool,
) -> Box<dyn DistanceField<T>> {
    if normalize {
        Box::new(Normalized::new(field))
    } else {
        Box::new(field)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "\
[data]
kind = checkerboard
n = 200
seed = 3

[model]
arch = mbm
hidden = 32
blocks = 1
embed_dim = 16

[bridge.main]
constraint = checkerboard

[train]
iterations = 10
batch = 16
";

    fn resolve(text: &str) -> Result<Resolved<f64>> {
        parse_and_resolve(text, Path::new("."))
    }

    fn resolve_err(text: &str) -> Error {
        match resolve(text) {
            Err(e) => e,
            Ok(_) => panic!("expected a config error"),
        }
    }

    #[test]
    fn parses_and_fills_defaults() {
        let r = resolve(BASE).unwrap();
        assert_eq!(r.data.n, 200);
        assert_eq!(r.model.arch, ArchTag::Mbm);
        assert_eq!(r.sampler.steps, 100);
        assert_eq!(r.train.lr, 3e-4);
        assert_eq!(r.bridge_sections.len(), 1);
        assert_eq!(r.dataset.shape(), &[200, 2]);
        // sigma_data resolved from data.
        assert!(r.sched.sigma_data > 0.5 && r.sched.sigma_data < 2.0);
        let bridges = r.build_bridges().unwrap();
        assert_eq!(bridges.len(), 1);
    }

    #[test]
    fn unknown_key_is_rejected_by_name() {
        let bad = BASE.replace("n = 200", "banana = 200");
        let err = resolve_err(&bad);
        assert!(err.to_string().contains("banana"), "{err}");
        let bad2 = format!("{BASE}\n[oops]\nx = 1\n");
        assert!(resolve(&bad2).is_err());
    }

    #[test]
    fn missing_required_key_is_named() {
        let err = resolve_err("[data]\nn = 5\n[model]\narch = plain\n");
        assert!(err.to_string().contains("kind"), "{err}");
        let err = resolve_err("[data]\nkind = checkerboard\n[model]\nhidden = 2\n");
        assert!(err.to_string().contains("arch"), "{err}");
    }

    #[test]
    fn canonicalization_is_idempotent() {
        let r = resolve(BASE).unwrap();
        let r2 = resolve(&r.canonical).unwrap();
        assert_eq!(r.canonical, r2.canonical);
        assert_eq!(r.hash, r2.hash);
    }

    #[test]
    fn bridge_constraint_data_compatibility() {
        let bad = BASE.replace("constraint = checkerboard", "constraint = collision");
        let err = resolve_err(&bad);
        assert!(err.to_string().contains("scenes"), "{err}");
        let bad = BASE.replace("constraint = checkerboard", "constraint = polytope");
        assert!(resolve(&bad).is_err());
    }

    #[test]
    fn liu_kind_requires_box() {
        let bad = BASE.replace(
            "constraint = checkerboard",
            "constraint = checkerboard\nkind = liu",
        );
        let err = resolve_err(&bad);
        assert!(err.to_string().contains("liu"), "{err}");
    }

    #[test]
    fn scenes_and_polytope_contexts_build() {
        let scenes = "\
[data]
kind = scenes
n = 5
agents = 3
seed = 1

[model]
arch = db
hidden = 16
blocks = 1
embed_dim = 8

[bridge.coll]
constraint = collision
gamma_scale = 10
normalize = true
clamp = 1000

[bridge.off]
constraint = offroad
gamma_scale = 100
normalize = true
clamp = 1000
";
        let r = resolve(scenes).unwrap();
        assert_eq!(r.dataset.cols(), 21);
        let bridges = r.build_bridges().unwrap();
        assert_eq!(bridges.len(), 2);
        assert!(bridges.member_all(r.dataset.row(0)));

        let poly = "\
[data]
kind = polytope
n = 20
d = 6
m = 2
seed = 2

[model]
arch = c
hidden = 16
blocks = 1
embed_dim = 8

[bridge.wm]
constraint = polytope
gamma = watermark
";
        let r = resolve(poly).unwrap();
        let bridges = r.build_bridges().unwrap();
        assert!(bridges.member_all(r.dataset.row(3)));
    }

    #[test]
    fn duplicate_keys_and_sections_rejected() {
        let dup = format!("{BASE}\n[data]\nkind = csv\n");
        assert!(resolve(&dup).is_err());
        let dup2 = BASE.replace("n = 200", "n = 200\nn = 300");
        assert!(resolve(&dup2).is_err());
    }
}

//! Run descriptors.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use urnwalk::analysis::Averaging;
use urnwalk::{AtomicMeasure, NodeSet, OffsetSpec, PairSpec, Point, TreeKind};

use crate::error::{CliError, CliResult};

fn one() -> usize {
    1
}

fn unit_weight() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(flatten)]
    pub experiment: Experiment,
    #[serde(alias = "master_seed")]
    pub seed: u64,
    #[serde(default = "one")]
    pub replicates: usize,
    /// Worker threads; results do not depend on it.
    #[serde(default = "one", skip_serializing)]
    pub workers: usize,
    #[serde(default, skip_serializing)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "snake_case")]
pub enum Experiment {
    Urn(UrnParams),
    Tree(TreeParams),
    Moments(MomentsParams),
    Normality(NormalityParams),
    Gem(GemParams),
    Coupling(CouplingParams),
    #[serde(alias = "initial-drift")]
    InitialDrift(DriftParams),
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Urn(_) => "urn",
            Experiment::Tree(_) => "tree",
            Experiment::Moments(_) => "moments",
            Experiment::Normality(_) => "normality",
            Experiment::Gem(_) => "gem",
            Experiment::Coupling(_) => "coupling",
            Experiment::InitialDrift(_) => "initial_drift",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UrnKind {
    Srw,
    Drw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UrnParams {
    pub urn: UrnKind,
    pub mu0: AtomicMeasure,
    pub offset: OffsetSpec,
    pub steps: usize,
    /// Any of `"mass"`, `"cf:s=<s>"` (components separated by `;`), `"trace"`.
    #[serde(default)]
    pub record: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub kind: TreeKind,
    #[serde(default = "unit_weight")]
    pub rho: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<OffsetSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair: Option<PairSpec>,
    /// Write the first replicate as JSON lines.
    #[serde(default)]
    pub export: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentModel {
    Yule,
    Wrrt,
    BinaryYule,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentsParams {
    pub model: MomentModel,
    #[serde(default = "unit_weight")]
    pub rho: f64,
    /// Times `t`, or sizes `n` for the recursive tree.
    pub times: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<OffsetSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair: Option<PairSpec>,
    /// Frequencies for first moments and martingale means.
    #[serde(default)]
    pub s: Vec<Point>,
    /// Frequency pairs for second moments.
    #[serde(default)]
    pub s_pairs: Vec<(Point, Point)>,
    #[serde(default)]
    pub martingale: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalityParams {
    pub kind: TreeKind,
    #[serde(default = "unit_weight")]
    pub rho: f64,
    /// Sizes `n` (discrete kinds) or times `t` (continuous kinds).
    pub sizes: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<OffsetSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair: Option<PairSpec>,
    pub direction: Point,
    #[serde(default = "all_nodes")]
    pub nodes: NodeSet,
    #[serde(default = "quenched")]
    pub averaging: Averaging,
}

fn all_nodes() -> NodeSet {
    NodeSet::All
}

fn quenched() -> Averaging {
    Averaging::Quenched
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GemParams {
    #[serde(default = "unit_weight")]
    pub rho: f64,
    pub n: usize,
    /// Number of branch fractions compared.
    #[serde(default = "one")]
    pub k: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingModel {
    /// Yule tree stopped at its n-th birth vs a recursive tree; root degrees.
    YuleWrrt,
    /// Binary Yule tree stopped at its n-th death vs a binary search tree;
    /// depth of the last split node.
    BinaryBst,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingParams {
    pub model: CouplingModel,
    pub n: usize,
    #[serde(default = "unit_weight")]
    pub rho: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftParams {
    pub mu0_a: AtomicMeasure,
    pub mu0_b: AtomicMeasure,
    pub offset: OffsetSpec,
    pub n_grid: Vec<usize>,
    pub s: Point,
}

/// Required keys per experiment; `a|b` means one of the two.
fn required_fields(experiment: &str) -> &'static [&'static str] {
    match experiment {
        "urn" => &["urn", "mu0", "offset", "steps"],
        "tree" => &["kind", "n|t"],
        "moments" => &["model", "times", "offset|pair"],
        "normality" => &["kind", "sizes", "direction", "offset|pair"],
        "gem" => &["n"],
        "coupling" => &["model", "n"],
        "initial_drift" | "initial-drift" => &["mu0_a", "mu0_b", "offset", "n_grid", "s"],
        _ => &[],
    }
}

/// Lists every missing required key, instead of stopping at the first one.
pub fn missing_fields(v: &Value) -> Vec<String> {
    let Some(obj) = v.as_object() else {
        return vec!["experiment".into(), "seed".into()];
    };
    let mut missing = Vec::new();
    if !obj.contains_key("experiment") {
        missing.push("experiment".to_string());
    }
    if !obj.contains_key("seed") && !obj.contains_key("master_seed") {
        missing.push("seed".to_string());
    }
    if let Some(exp) = obj.get("experiment").and_then(Value::as_str) {
        for spec in required_fields(exp) {
            if !spec.split('|').any(|k| obj.contains_key(k)) {
                missing.push(spec.to_string());
            }
        }
    }
    missing
}

/// A manifest written by a previous run also works as a config.
pub fn unwrap_manifest(v: Value) -> Value {
    match v {
        Value::Object(mut obj) if obj.contains_key("manifest_version") => obj.remove("config").unwrap_or(Value::Null),
        other => other,
    }
}

pub fn parse_config(text: &str) -> CliResult<RunConfig> {
    let value: Value = serde_json::from_str(text)?;
    parse_value(value)
}

pub fn parse_value(value: Value) -> CliResult<RunConfig> {
    let value = unwrap_manifest(value);
    let missing = missing_fields(&value);
    if !missing.is_empty() {
        return Err(CliError::MissingFields(missing));
    }
    let cfg: RunConfig = serde_json::from_value(value)?;
    check(&cfg)?;
    Ok(cfg)
}

pub fn load_config(path: &std::path::Path) -> CliResult<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Semantic checks serde cannot express.
pub fn check(cfg: &RunConfig) -> CliResult<()> {
    if cfg.replicates == 0 {
        return Err(bad("replicates must be >= 1"));
    }
    if cfg.workers == 0 {
        return Err(bad("workers must be >= 1"));
    }
    match &cfg.experiment {
        Experiment::Tree(p) => {
            if p.n.is_some() == p.t.is_some() {
                return Err(bad("give exactly one of n and t"));
            }
            if p.t.is_some() && matches!(p.kind, TreeKind::Wrrt | TreeKind::Bst) {
                return Err(bad("discrete tree kinds take n, not t"));
            }
            if p.offset.is_some() && p.pair.is_some() {
                return Err(bad("give at most one of offset and pair"));
            }
            if p.pair.is_some() && !p.kind.is_binary() {
                return Err(bad("paired offsets need a binary tree kind"));
            }
            if p.offset.is_some() && p.kind.is_binary() {
                return Err(bad("binary tree kinds take a pair, not an offset"));
            }
        }
        Experiment::Moments(p) => {
            let binary = p.model == MomentModel::BinaryYule;
            match (&p.offset, &p.pair) {
                (Some(_), None) if !binary => {}
                (None, Some(_)) if binary => {}
                _ => return Err(bad("yule and wrrt take an offset, binary_yule takes a pair")),
            }
            if p.times.is_empty() {
                return Err(bad("times must not be empty"));
            }
            if p.model == MomentModel::Wrrt && p.times.iter().any(|t| t.fract() != 0.0 || *t < 0.0) {
                return Err(bad("wrrt times are sizes and must be non-negative integers"));
            }
            if p.s.is_empty() && p.s_pairs.is_empty() {
                return Err(bad("give at least one s or s_pairs entry"));
            }
        }
        Experiment::Normality(p) => {
            match (&p.offset, &p.pair) {
                (Some(_), None) if !p.kind.is_binary() => {}
                (None, Some(_)) if p.kind.is_binary() => {}
                _ => return Err(bad("plain tree kinds take an offset, binary kinds take a pair")),
            }
            if p.sizes.is_empty() {
                return Err(bad("sizes must not be empty"));
            }
        }
        Experiment::Gem(p) => {
            if p.k == 0 || p.n == 0 {
                return Err(bad("n and k must be >= 1"));
            }
        }
        Experiment::Urn(p) => {
            for r in &p.record {
                if r != "mass" && r != "trace" && !r.starts_with("cf:s=") {
                    return Err(bad(format!("unknown record entry {r:?}")));
                }
            }
        }
        Experiment::Coupling(_) | Experiment::InitialDrift(_) => {}
    }
    Ok(())
}

/// Parses `"0.3"` or `"0.1;0.2"`.
pub fn parse_point(text: &str) -> CliResult<Point> {
    text.split(';')
        .map(|x| x.trim().parse::<f64>().map_err(|e| bad(format!("bad frequency {text:?}: {e}"))))
        .collect::<CliResult<Vec<f64>>>()
        .map(Point)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_lists_missing_fields() {
        let err = parse_config("{}").unwrap_err();
        assert_eq!(err.to_string(), "missing fields: experiment, seed");
        assert_eq!(err.exit_code(), 2);
        let err = parse_config(r#"{"experiment":"moments","seed":1}"#).unwrap_err();
        assert_eq!(err.to_string(), "missing fields: model, times, offset|pair");
    }

    #[test]
    fn parses_a_moments_config() {
        let cfg = parse_config(
            r#"{"experiment":"moments","seed":7,"replicates":10,"model":"yule","rho":2.0,
                "times":[1.0],"offset":{"type":"gaussian","mean":[0],"cov":[[1]]},
                "s":[0.0,[0.2]],"s_pairs":[[0.2,0.1]]}"#,
        )
        .unwrap();
        let Experiment::Moments(p) = &cfg.experiment else { panic!("wrong experiment") };
        assert_eq!(p.s, vec![Point::from(0.0), Point::from(0.2)]);
        assert_eq!(cfg.workers, 1);
    }

    #[test]
    fn master_seed_is_an_alias() {
        let cfg = parse_config(r#"{"experiment":"gem","master_seed":9,"n":10}"#).unwrap();
        assert_eq!(cfg.seed, 9);
    }

    #[test]
    fn manifests_are_accepted() {
        let manifest = r#"{"manifest_version":1,"config":{"experiment":"gem","seed":3,"n":10}}"#;
        let cfg = parse_config(manifest).unwrap();
        assert_eq!(cfg.experiment.name(), "gem");
    }

    #[test]
    fn semantic_errors() {
        assert!(parse_config(r#"{"experiment":"gem","seed":3,"n":10,"replicates":0}"#).is_err());
        assert!(parse_config(r#"{"experiment":"tree","seed":3,"kind":"wrrt","t":1.0}"#).is_err());
        assert!(parse_config(r#"{"experiment":"tree","seed":3,"kind":"wrrt","n":1,"t":1.0}"#).is_err());
        assert!(parse_config(r#"{"experiment":"nope","seed":3}"#).is_err());
    }

    #[test]
    fn point_parsing() {
        assert_eq!(parse_point("0.3").unwrap(), Point::from(0.3));
        assert_eq!(parse_point("0.1;-2").unwrap(), Point::from(vec![0.1, -2.0]));
        assert!(parse_point("x").is_err());
    }
}

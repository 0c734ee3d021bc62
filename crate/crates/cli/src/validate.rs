//! Static checks of a run descriptor, without simulating.

use serde::Serialize;
use serde_json::Value;
use urnwalk::analysis::MomentOracle;
use urnwalk::trees::DEFAULT_NODE_CAP;
use urnwalk::{OffsetDistribution, PairedOffset, TreeKind};

use crate::config::{check, missing_fields, unwrap_manifest, Experiment, MomentModel, RunConfig};
use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Error,
    Warning,
    Info,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Diagnostic {
    pub level: Level,
    pub message: String,
}

impl Diagnostic {
    fn new(level: Level, message: impl Into<String>) -> Self {
        Diagnostic { level, message: message.into() }
    }
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = match self.level {
            Level::Error => "error",
            Level::Warning => "warning",
            Level::Info => "info",
        };
        write!(f, "{tag}: {}", self.message)
    }
}

/// Collects every problem found in a config value.
pub fn validate_value(value: Value) -> Vec<Diagnostic> {
    let value = unwrap_manifest(value);
    let missing = missing_fields(&value);
    if !missing.is_empty() {
        return vec![Diagnostic::new(Level::Error, CliError::MissingFields(missing).to_string())];
    }
    let cfg: RunConfig = match serde_json::from_value(value) {
        Ok(cfg) => cfg,
        Err(e) => return vec![Diagnostic::new(Level::Error, format!("schema: {e}"))],
    };
    let mut out = Vec::new();
    if let Err(e) = check(&cfg) {
        out.push(Diagnostic::new(Level::Error, e.to_string()));
    }
    out.extend(domain_warnings(&cfg));
    out.extend(memory_warnings(&cfg));
    if out.is_empty() {
        out.push(Diagnostic::new(Level::Info, format!("{} config looks fine", cfg.experiment.name())));
    }
    out
}

pub fn validate_text(text: &str) -> Vec<Diagnostic> {
    match serde_json::from_str(text) {
        Ok(v) => validate_value(v),
        Err(e) => vec![Diagnostic::new(Level::Error, format!("not valid JSON: {e}"))],
    }
}

fn domain_warnings(cfg: &RunConfig) -> Vec<Diagnostic> {
    let Experiment::Moments(p) = &cfg.experiment else {
        return Vec::new();
    };
    let oracle = match (p.model, &p.offset, &p.pair) {
        (MomentModel::Yule, Some(o), _) => OffsetDistribution::from_spec(o.clone()).and_then(|d| MomentOracle::yule(d, p.rho)),
        (MomentModel::Wrrt, Some(o), _) => OffsetDistribution::from_spec(o.clone()).and_then(|d| MomentOracle::rrt(d, p.rho)),
        (MomentModel::BinaryYule, _, Some(pr)) => PairedOffset::from_spec(pr.clone()).and_then(MomentOracle::binary),
        _ => return Vec::new(),
    };
    let oracle = match oracle {
        Ok(o) => o,
        Err(e) => return vec![Diagnostic::new(Level::Error, e.to_string())],
    };
    let mut freqs: Vec<&[f64]> = p.s.iter().map(|s| s.0.as_slice()).collect();
    for (a, b) in &p.s_pairs {
        freqs.push(a);
        freqs.push(b);
    }
    let mut out = Vec::new();
    for s in freqs {
        let r = s.iter().map(|x| x * x).sum::<f64>().sqrt();
        if r == 0.0 {
            continue;
        }
        match oracle.domain_radius(s) {
            Ok(delta) if r > delta => out.push(Diagnostic::new(
                Level::Warning,
                format!("s = {s:?} has |s| = {r:.4} outside the domain radius delta = {delta:.4} along its direction"),
            )),
            Ok(_) => {}
            Err(e) => out.push(Diagnostic::new(Level::Warning, format!("s = {s:?}: {e}"))),
        }
    }
    out
}

fn expected_nodes(kind: TreeKind, rho: f64, t: f64) -> f64 {
    if kind.is_binary() { 2.0 * t.exp() } else { rho * t.exp() }
}

fn memory_warnings(cfg: &RunConfig) -> Vec<Diagnostic> {
    let (kind, rho, times): (TreeKind, f64, Vec<f64>) = match &cfg.experiment {
        Experiment::Tree(p) => (p.kind, p.rho, p.t.into_iter().collect()),
        Experiment::Moments(p) => match p.model {
            MomentModel::Yule => (TreeKind::Yule, p.rho, p.times.clone()),
            MomentModel::BinaryYule => (TreeKind::BinaryYule, 1.0, p.times.clone()),
            MomentModel::Wrrt => return Vec::new(),
        },
        Experiment::Normality(p) if p.kind.is_continuous() => (p.kind, p.rho, p.sizes.clone()),
        _ => return Vec::new(),
    };
    let mut out = Vec::new();
    for t in times {
        let nodes = expected_nodes(kind, rho, t);
        if nodes > DEFAULT_NODE_CAP as f64 / 4.0 {
            out.push(Diagnostic::new(
                Level::Warning,
                format!("t = {t} expects about {nodes:.3e} nodes per tree; the cap is {DEFAULT_NODE_CAP}"),
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reports_missing_fields() {
        let d = validate_text("{}");
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].level, Level::Error);
        assert!(d[0].message.contains("experiment, seed"));
    }

    #[test]
    fn warns_outside_the_domain() {
        let d = validate_text(
            r#"{"experiment":"moments","seed":1,"model":"yule","times":[1.0],
                "offset":{"type":"point","c":[1.0]},"s":[5.0]}"#,
        );
        assert!(d.iter().any(|x| x.level == Level::Warning && x.message.contains("delta")), "{d:?}");
    }

    #[test]
    fn warns_about_large_yule_trees() {
        let d = validate_text(r#"{"experiment":"tree","seed":1,"kind":"yule","t":20.0}"#);
        assert!(d.iter().any(|x| x.level == Level::Warning && x.message.contains("nodes")), "{d:?}");
    }

    #[test]
    fn clean_config_is_fine() {
        let d = validate_text(r#"{"experiment":"gem","seed":1,"n":10}"#);
        assert_eq!(d[0].level, Level::Info);
    }
}

//! Executes a run descriptor and writes its reports.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use urnwalk::analysis::normality::{normality_report, normality_report_pooled, Averaging, NormalityReport, Scaling};
use urnwalk::analysis::report::{format_point, ReportRow};
use urnwalk::analysis::stats::{chi_square_two_sample, complex_mean, ks_statistic, mean_se, median, ComplexMean};
use urnwalk::analysis::MomentOracle;
use urnwalk::measures::Measure;
use urnwalk::trees::{grow_binary_yule, grow_bst, grow_wrrt, grow_yule};
use urnwalk::{
    assign_labels, assign_labels_binary, run_replicates, Complex64, DrwUrn, GrowingTree, LabelledTree, NodeSet,
    OffsetDistribution, PairedOffset, Point, SrwUrn, Stream, Streams, TreeKind, Until,
};

use crate::config::*;
use crate::error::{CliError, CliResult};
use crate::manifest::Manifest;

pub const REPORT_FILE: &str = "report.csv";
pub const SUMMARY_FILE: &str = "summary.json";

/// What an experiment produces before it is written out.
#[derive(Debug, Default)]
pub struct Output {
    pub rows: Vec<ReportRow>,
    pub summary: Value,
    /// Extra files `(name, bytes)`.
    pub files: Vec<(String, Vec<u8>)>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub manifest: Manifest,
    pub rows: Vec<ReportRow>,
}

/// Runs `cfg` and writes `report.csv`, `summary.json`, any extra files and
/// `manifest.json` into `out_dir`.
pub fn run(cfg: &RunConfig, out_dir: &Path) -> CliResult<RunOutcome> {
    let output = execute(cfg)?;
    std::fs::create_dir_all(out_dir)?;
    let mut names: Vec<String> = vec![REPORT_FILE.into(), SUMMARY_FILE.into()];

    let mut csv_out = csv::Writer::from_path(out_dir.join(REPORT_FILE))?;
    for row in &output.rows {
        csv_out.serialize(row)?;
    }
    csv_out.flush()?;

    let mut summary = serde_json::to_string_pretty(&output.summary)?;
    summary.push('\n');
    std::fs::write(out_dir.join(SUMMARY_FILE), summary)?;

    for (name, bytes) in &output.files {
        std::fs::write(out_dir.join(name), bytes)?;
        names.push(name.clone());
    }
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let manifest = Manifest::new(cfg, out_dir, &refs)?;
    manifest.write(out_dir)?;
    Ok(RunOutcome { out_dir: out_dir.to_path_buf(), manifest, rows: output.rows })
}

/// Runs the experiment without touching the file system.
pub fn execute(cfg: &RunConfig) -> CliResult<Output> {
    let streams = Streams::new(cfg.seed);
    match &cfg.experiment {
        Experiment::Urn(p) => run_urn(p, cfg, &streams),
        Experiment::Tree(p) => run_tree(p, cfg, &streams),
        Experiment::Moments(p) => run_moments(p, cfg, &streams),
        Experiment::Normality(p) => run_normality(p, cfg, &streams),
        Experiment::Gem(p) => run_gem(p, cfg, &streams),
        Experiment::Coupling(p) => run_coupling(p, cfg, &streams),
        Experiment::InitialDrift(p) => run_drift(p, cfg, &streams),
    }
}

fn collect<T>(results: Vec<urnwalk::Result<T>>) -> CliResult<Vec<T>> {
    results.into_iter().map(|r| r.map_err(CliError::from)).collect()
}

fn real_mean(xs: &[f64]) -> ComplexMean {
    let zs: Vec<Complex64> = xs.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    complex_mean(&zs)
}

fn to_json<T: Serialize>(x: &T) -> CliResult<Value> {
    Ok(serde_json::to_value(x)?)
}

fn run_urn(p: &UrnParams, cfg: &RunConfig, streams: &Streams) -> CliResult<Output> {
    let offset = OffsetDistribution::from_spec(p.offset.clone())?;
    let records: Vec<String> = if p.record.is_empty() { vec!["mass".into()] } else { p.record.clone() };
    let freqs: Vec<Point> =
        records.iter().filter_map(|r| r.strip_prefix("cf:s=")).map(parse_point).collect::<CliResult<_>>()?;
    let trace = records.iter().any(|r| r == "trace");
    let rho = p.mu0.total_mass()?;
    let oracle = MomentOracle::rrt(offset.clone(), rho)?;
    let cf_oracles: Vec<Complex64> = freqs
        .iter()
        .map(|s| Ok(p.mu0.fourier(s) / rho * oracle.expected_f_rrt(p.steps, s)?))
        .collect::<urnwalk::Result<_>>()?;

    let per_rep = run_replicates(cfg.replicates, cfg.workers, |rep| -> urnwalk::Result<(f64, Vec<Complex64>, Option<Measure>)> {
        let mut select = streams.rng(rep, Stream::Tree);
        let mut offsets = streams.rng(rep, Stream::Offsets);
        let keep = trace && rep == 0;
        match p.urn {
            UrnKind::Srw => {
                let mut urn = SrwUrn::new(p.mu0.clone(), offset.clone())?;
                urn.run(p.steps, &mut select, &mut offsets)?;
                let comp = urn.composition();
                let cfs = freqs.iter().map(|s| comp.fourier(s)).collect();
                Ok((comp.mass(), cfs, keep.then(|| Measure::Atomic(comp.clone()))))
            }
            UrnKind::Drw => {
                let mut urn = DrwUrn::from_atomic(p.mu0.clone(), offset.clone())?;
                urn.run(p.steps, &mut select, &mut offsets)?;
                let comp = urn.composition();
                let cfs = freqs.iter().map(|s| comp.fourier(s)).collect::<urnwalk::Result<_>>()?;
                Ok((comp.mass(), cfs, keep.then(|| Measure::Convolved(comp.clone()))))
            }
        }
    });
    let per_rep = collect(per_rep)?;

    let mut out = Output::default();
    let n = p.steps as f64;
    for r in &records {
        if r == "mass" {
            let masses: Vec<f64> = per_rep.iter().map(|x| x.0).collect();
            out.rows.push(ReportRow::new("mass", n, "", &real_mean(&masses), Complex64::new(rho + n, 0.0)));
        }
    }
    for (j, s) in freqs.iter().enumerate() {
        let zs: Vec<Complex64> = per_rep.iter().map(|x| x.1[j]).collect();
        out.rows.push(ReportRow::new("cf", n, format_point(s), &complex_mean(&zs), cf_oracles[j]));
    }
    if let Some(m) = per_rep.first().and_then(|x| x.2.as_ref()) {
        let mut bytes = serde_json::to_vec(m)?;
        bytes.push(b'\n');
        out.files.push(("composition.json".into(), bytes));
    }
    out.summary = json!({ "experiment": "urn", "urn": p.urn, "steps": p.steps, "replicates": cfg.replicates });
    Ok(out)
}

fn grow(kind: TreeKind, rho: f64, until: Until, rng: &mut urnwalk::SimRng) -> urnwalk::Result<GrowingTree> {
    match (kind, until) {
        (TreeKind::Wrrt, Until::Size(n)) => grow_wrrt(n, rho, rng),
        (TreeKind::Bst, Until::Size(n)) => grow_bst(n, rng),
        (TreeKind::Yule, u) => grow_yule(u, rho, rng).map(|(t, _)| t),
        (TreeKind::BinaryYule, u) => grow_binary_yule(u, rng),
        _ => Err(urnwalk::Error::InvalidParameter("discrete tree kinds need a size".into())),
    }
}

fn expected_nodes(kind: TreeKind, rho: f64, until: Until) -> f64 {
    match (kind, until) {
        (TreeKind::Wrrt | TreeKind::Yule, Until::Size(n)) => n as f64 + 1.0,
        (TreeKind::Bst | TreeKind::BinaryYule, Until::Size(n)) => 2.0 * n as f64 + 1.0,
        (TreeKind::Yule, Until::Time(t)) => 1.0 + rho * t.exp_m1(),
        (TreeKind::BinaryYule, Until::Time(t)) => 2.0 * t.exp() - 1.0,
        _ => f64::NAN,
    }
}

enum Labels {
    None,
    Single(OffsetDistribution),
    Paired(PairedOffset),
}

impl Labels {
    fn new(offset: &Option<urnwalk::OffsetSpec>, pair: &Option<urnwalk::PairSpec>) -> CliResult<Self> {
        Ok(match (offset, pair) {
            (Some(o), _) => Labels::Single(OffsetDistribution::from_spec(o.clone())?),
            (None, Some(p)) => Labels::Paired(PairedOffset::from_spec(p.clone())?),
            (None, None) => Labels::None,
        })
    }

    fn apply(&self, tree: GrowingTree, rng: &mut urnwalk::SimRng) -> urnwalk::Result<Option<LabelledTree>> {
        match self {
            Labels::None => Ok(None),
            Labels::Single(d) => Ok(Some(assign_labels(tree, d, rng))),
            Labels::Paired(p) => assign_labels_binary(tree, p, rng).map(Some),
        }
    }

    fn moments(&self) -> urnwalk::Result<(Point, Vec<f64>)> {
        match self {
            Labels::Single(d) => Ok((d.mean()?.clone(), d.second_moment()?.to_vec())),
            Labels::Paired(p) => Ok((p.mean()?.clone(), p.second_moment()?.to_vec())),
            Labels::None => Err(urnwalk::Error::InvalidParameter("no offset law given".into())),
        }
    }
}

fn run_tree(p: &TreeParams, cfg: &RunConfig, streams: &Streams) -> CliResult<Output> {
    let until = match (p.n, p.t) {
        (Some(n), _) => Until::Size(n),
        (None, Some(t)) => Until::Time(t),
        (None, None) => return Err(CliError::Config("give n or t".into())),
    };
    let labels = Labels::new(&p.offset, &p.pair)?;
    let per_rep = run_replicates(cfg.replicates, cfg.workers, |rep| -> urnwalk::Result<(f64, Option<Vec<u8>>)> {
        let tree = grow(p.kind, p.rho, until, &mut streams.rng(rep, Stream::Tree))?;
        let size = tree.len() as f64;
        if !(p.export && rep == 0) {
            return Ok((size, None));
        }
        let mut bytes = Vec::new();
        match labels.apply(tree.clone(), &mut streams.rng(rep, Stream::Offsets))? {
            Some(lt) => lt.write_jsonl(&mut bytes)?,
            None => tree.write_jsonl(&mut bytes)?,
        }
        Ok((size, Some(bytes)))
    });
    let per_rep = collect(per_rep)?;
    let sizes: Vec<f64> = per_rep.iter().map(|x| x.0).collect();
    let time = match until {
        Until::Size(n) => n as f64,
        Until::Time(t) => t,
    };
    let mut out = Output::default();
    out.rows.push(ReportRow::new("nodes", time, "", &real_mean(&sizes), Complex64::new(expected_nodes(p.kind, p.rho, until), 0.0)));
    if let Some(bytes) = per_rep.into_iter().next().and_then(|x| x.1) {
        out.files.push(("tree.jsonl".into(), bytes));
    }
    out.summary = json!({ "experiment": "tree", "kind": p.kind, "replicates": cfg.replicates });
    Ok(out)
}

fn run_moments(p: &MomentsParams, cfg: &RunConfig, streams: &Streams) -> CliResult<Output> {
    let labels = Labels::new(&p.offset, &p.pair)?;
    let oracle = match (&labels, p.model) {
        (Labels::Single(d), MomentModel::Yule) => MomentOracle::yule(d.clone(), p.rho)?,
        (Labels::Single(d), MomentModel::Wrrt) => MomentOracle::rrt(d.clone(), p.rho)?,
        (Labels::Paired(pr), MomentModel::BinaryYule) => MomentOracle::binary(pr.clone())?,
        _ => return Err(CliError::Config("offset law does not match the model".into())),
    };
    let (kind, which) = match p.model {
        MomentModel::Yule => (TreeKind::Yule, NodeSet::All),
        MomentModel::Wrrt => (TreeKind::Wrrt, NodeSet::All),
        MomentModel::BinaryYule => (TreeKind::BinaryYule, NodeSet::External),
    };
    let mut oracles_f = Vec::new();
    let mut oracles_ff = Vec::new();
    for &time in &p.times {
        oracles_f.push(p.s.iter().map(|s| oracle.expected_f(time, s)).collect::<urnwalk::Result<Vec<_>>>()?);
        oracles_ff.push(p.s_pairs.iter().map(|(a, b)| oracle.expected_ff(time, a, b)).collect::<urnwalk::Result<Vec<_>>>()?);
    }

    let mut out = Output::default();
    for (ti, &time) in p.times.iter().enumerate() {
        let cell = streams.fork(ti as u64);
        let until = match p.model {
            MomentModel::Wrrt => Until::Size(time as usize),
            _ => Until::Time(time),
        };
        type Sample = (Vec<Complex64>, Vec<Complex64>, Vec<Complex64>);
        let per_rep = run_replicates(cfg.replicates, cfg.workers, |rep| -> urnwalk::Result<Sample> {
            let tree = grow(kind, p.rho, until, &mut cell.rng(rep, Stream::Tree))?;
            let lt = labels.apply(tree, &mut cell.rng(rep, Stream::Offsets))?.expect("labels given");
            let f: Vec<Complex64> = p.s.iter().map(|s| lt.char_sum(which, s)).collect::<urnwalk::Result<_>>()?;
            let ff: Vec<Complex64> = p
                .s_pairs
                .iter()
                .map(|(a, b)| Ok(lt.char_sum(which, a)? * lt.char_sum(which, b)?))
                .collect::<urnwalk::Result<_>>()?;
            let m: Vec<Complex64> = if p.martingale {
                p.s.iter().zip(&f).map(|(s, &fv)| oracle.martingale_value(fv, time, s).map(|x| x.value)).collect::<urnwalk::Result<_>>()?
            } else {
                Vec::new()
            };
            Ok((f, ff, m))
        });
        let per_rep = collect(per_rep)?;
        for (j, s) in p.s.iter().enumerate() {
            let zs: Vec<Complex64> = per_rep.iter().map(|x| x.0[j]).collect();
            out.rows.push(ReportRow::new("F", time, format_point(s), &complex_mean(&zs), oracles_f[ti][j]));
        }
        for (j, (a, b)) in p.s_pairs.iter().enumerate() {
            let zs: Vec<Complex64> = per_rep.iter().map(|x| x.1[j]).collect();
            let label = format!("{}|{}", format_point(a), format_point(b));
            out.rows.push(ReportRow::new("FF", time, label, &complex_mean(&zs), oracles_ff[ti][j]));
        }
        if p.martingale {
            for (j, s) in p.s.iter().enumerate() {
                let zs: Vec<Complex64> = per_rep.iter().map(|x| x.2[j]).collect();
                out.rows.push(ReportRow::new("M", time, format_point(s), &complex_mean(&zs), Complex64::new(1.0, 0.0)));
            }
        }
    }
    out.summary = json!({
        "experiment": "moments",
        "model": p.model,
        "replicates": cfg.replicates,
        "max_abs_z": out.rows.iter().map(|r| r.z.abs()).fold(0.0, f64::max),
    });
    Ok(out)
}

fn run_normality(p: &NormalityParams, cfg: &RunConfig, streams: &Streams) -> CliResult<Output> {
    let labels = Labels::new(&p.offset, &p.pair)?;
    let (mean, sigma) = labels.moments()?;
    let mut report = NormalityReport::default();
    let mut out = Output::default();
    for (i, &size) in p.sizes.iter().enumerate() {
        let cell = streams.fork(i as u64);
        let (until, scaling) = if p.kind.is_continuous() {
            (Until::Time(size), Scaling::Continuous { t: size })
        } else {
            if size.fract() != 0.0 || size < 0.0 {
                return Err(CliError::Config(format!("size {size} is not a non-negative integer")));
            }
            (Until::Size(size as usize), Scaling::Discrete { n: size as usize })
        };
        let build = |rep: u64| -> urnwalk::Result<LabelledTree> {
            let tree = grow(p.kind, p.rho, until, &mut cell.rng(rep, Stream::Tree))?;
            let mut lt = labels.apply(tree, &mut cell.rng(rep, Stream::Offsets))?.expect("labels given");
            lt.drop_offsets();
            Ok(lt)
        };
        match p.averaging {
            Averaging::Quenched => {
                let rows = run_replicates(cfg.replicates, cfg.workers, |rep| {
                    let lt = build(rep)?;
                    let mut row = normality_report(&lt, p.nodes, &p.direction, &scaling, &mean, &sigma)?;
                    row.seeds = vec![cell.derived_seed(rep, Stream::Tree), cell.derived_seed(rep, Stream::Offsets)];
                    Ok(row)
                });
                let rows = collect(rows)?;
                let ks: Vec<f64> = rows.iter().map(|r| r.ks).collect();
                let est = mean_se(&ks);
                out.rows.push(ReportRow {
                    kind: "ks_quenched_median".into(),
                    n_or_t: size,
                    s_or_u: format_point(&p.direction),
                    estimate_re: median(&ks),
                    estimate_im: 0.0,
                    oracle_re: 0.0,
                    oracle_im: 0.0,
                    se: est.se,
                    z: f64::NAN,
                });
                report.rows.extend(rows);
            }
            Averaging::Annealed => {
                let trees = collect(run_replicates(cfg.replicates, cfg.workers, build))?;
                let refs: Vec<&LabelledTree> = trees.iter().collect();
                let mut row = normality_report_pooled(&refs, p.nodes, &p.direction, &scaling, &mean, &sigma)?;
                row.averaging = Averaging::Annealed;
                out.rows.push(ReportRow {
                    kind: "ks_annealed".into(),
                    n_or_t: size,
                    s_or_u: format_point(&p.direction),
                    estimate_re: row.ks,
                    estimate_im: 0.0,
                    oracle_re: 0.0,
                    oracle_im: 0.0,
                    se: f64::NAN,
                    z: f64::NAN,
                });
                report.rows.push(row);
            }
        }
    }
    out.summary = json!({ "experiment": "normality", "kind": p.kind, "report": to_json(&report)? });
    Ok(out)
}

fn run_gem(p: &GemParams, cfg: &RunConfig, streams: &Streams) -> CliResult<Output> {
    let per_rep = run_replicates(cfg.replicates, cfg.workers, |rep| -> urnwalk::Result<Vec<f64>> {
        let tree = grow_wrrt(p.n, p.rho, &mut streams.rng(rep, Stream::Tree))?;
        let mut f = tree.branch_fractions()?.fractions;
        f.resize(p.k, 0.0);
        Ok(f)
    });
    let per_rep = collect(per_rep)?;
    let mut out = Output::default();
    for j in 0..p.k {
        let xs: Vec<f64> = per_rep.iter().map(|f| f[j]).collect();
        // E V_j = rho^{j-1} / (1 + rho)^j
        let expect = p.rho.powi(j as i32) / (1.0 + p.rho).powi(j as i32 + 1);
        out.rows.push(ReportRow::new(format!("gem_v{}", j + 1), p.n as f64, "", &real_mean(&xs), Complex64::new(expect, 0.0)));
    }
    let first: Vec<f64> = per_rep.iter().map(|f| f[0]).collect();
    let rho = p.rho;
    let ks = ks_statistic(&first, |x| if x <= 0.0 { 0.0 } else if x >= 1.0 { 1.0 } else { 1.0 - (1.0 - x).powf(rho) });
    out.summary = json!({ "experiment": "gem", "rho": p.rho, "n": p.n, "trees": cfg.replicates, "ks_first_vs_beta": ks });
    Ok(out)
}

/// Depth of the parent of the last node, i.e. of the last node to split.
pub fn last_split_depth(tree: &GrowingTree) -> usize {
    match tree.parent(tree.len() - 1) {
        Some(v) => tree.depths()[v] as usize,
        None => 0,
    }
}

fn run_coupling(p: &CouplingParams, cfg: &RunConfig, streams: &Streams) -> CliResult<Output> {
    let per_rep = run_replicates(cfg.replicates, cfg.workers, |rep| -> urnwalk::Result<(usize, usize)> {
        let mut a = streams.rng(rep, Stream::Tree);
        let mut b = streams.rng(rep, Stream::Aux);
        Ok(match p.model {
            CouplingModel::YuleWrrt => {
                (grow_yule(Until::Size(p.n), p.rho, &mut a)?.0.root_degree(), grow_wrrt(p.n, p.rho, &mut b)?.root_degree())
            }
            CouplingModel::BinaryBst => (
                last_split_depth(&grow_binary_yule(Until::Size(p.n), &mut a)?),
                last_split_depth(&grow_bst(p.n, &mut b)?),
            ),
        })
    });
    let per_rep = collect(per_rep)?;
    let top = per_rep.iter().map(|x| x.0.max(x.1)).max().unwrap_or(0);
    let mut ha = vec![0u64; top + 1];
    let mut hb = vec![0u64; top + 1];
    for &(x, y) in &per_rep {
        ha[x] += 1;
        hb[y] += 1;
    }
    let test = chi_square_two_sample(&ha, &hb)?;
    let dof = test.dof as f64;
    let mut out = Output::default();
    // Statistic against its null mean and standard deviation.
    out.rows.push(ReportRow {
        kind: "chi2".into(),
        n_or_t: p.n as f64,
        s_or_u: String::new(),
        estimate_re: test.statistic,
        estimate_im: 0.0,
        oracle_re: dof,
        oracle_im: 0.0,
        se: (2.0 * dof).sqrt(),
        z: if dof > 0.0 { (test.statistic - dof) / (2.0 * dof).sqrt() } else { 0.0 },
    });
    out.summary = json!({
        "experiment": "coupling",
        "model": p.model,
        "test": to_json(&test)?,
        "histogram_continuous": ha,
        "histogram_discrete": hb,
    });
    Ok(out)
}

fn run_drift(p: &DriftParams, cfg: &RunConfig, streams: &Streams) -> CliResult<Output> {
    let offset = OffsetDistribution::from_spec(p.offset.clone())?;
    let table =
        urnwalk::urns::initial_condition_drift(&p.mu0_a, &p.mu0_b, &offset, &p.n_grid, &p.s, cfg.replicates, streams, cfg.workers)?;
    let mut out = Output::default();
    for r in &table.rows {
        out.rows.push(ReportRow {
            kind: "drift_median".into(),
            n_or_t: r.n as f64,
            s_or_u: format_point(&r.s_n),
            estimate_re: r.median,
            estimate_im: 0.0,
            oracle_re: 0.0,
            oracle_im: 0.0,
            se: r.se,
            z: f64::NAN,
        });
    }
    out.summary = json!({ "experiment": "initial_drift", "table": to_json(&table)? });
    Ok(out)
}

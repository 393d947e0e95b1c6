use metasurface::bloch::{bands_at_with, connect, BandSet, KGrid, Polarization};
use metasurface::dispersion::{
    classify, find_degeneracies, pair_gap, refine, tilt_transition_scan, DegeneracyReport,
    DispersionConfig, SearchRegion,
};
use metasurface::error::Error;
use metasurface::greens::GreenMode;
use metasurface::lattice::{LatticeSpec, Vec2};
use metasurface::latticesums::sum_diagnostics;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{BlockChoice, ConfigError, Format, ModeChoice, Region, RunConfig};

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Numerical(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::BetaOutOfRange(_)
            | Error::InvalidSpacing(_)
            | Error::UnknownLabel(_)
            | Error::InvalidArgument(_) => Failure::Config(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Bands,
    Surface,
    FindCones,
    Classify,
    SweepBeta,
    Convergence,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Bands => "bands",
            Command::Surface => "surface",
            Command::FindCones => "find-cones",
            Command::Classify => "classify",
            Command::SweepBeta => "sweep-beta",
            Command::Convergence => "convergence",
        }
    }
}

pub fn run(cmd: Command, cfg: &RunConfig) -> Result<String, Failure> {
    cfg.validate()?;
    let spec = LatticeSpec::new(cfg.d0, cfg.beta)?;
    match cmd {
        Command::Bands => bands(cfg, &spec),
        Command::Surface => surface(cfg, &spec),
        Command::FindCones => find_cones(cfg, &spec),
        Command::Classify => classify_points(cfg, &spec),
        Command::SweepBeta => sweep_beta(cfg),
        Command::Convergence => convergence(cfg, &spec),
    }
}

enum Cell {
    Num(f64),
    Int(usize),
    Text(String),
    Bool(bool),
    Opt(Option<f64>),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(x) => num(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
            Cell::Opt(o) => o.map_or_else(|| "none".to_string(), num),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(x) => json_num(*x),
            Cell::Int(i) => json!(i),
            Cell::Text(s) => json!(s),
            Cell::Bool(b) => json!(b),
            Cell::Opt(o) => o.map_or(Value::Null, json_num),
        }
    }
}

/// 17 significant digits.
fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{:.16e}", x + 0.0)
    } else {
        "NaN".into()
    }
}

fn json_num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

struct Table {
    columns: Vec<&'static str>,
    rows: Vec<Vec<Cell>>,
}

impl Table {
    fn render(&self, cmd: Command, cfg: &RunConfig) -> String {
        match cfg.format {
            Format::Csv => {
                let mut out = format!("# metasurface {}\n", cmd.name());
                for (k, v) in cfg.resolved() {
                    out.push_str(&format!("# {k} = {v}\n"));
                }
                out.push_str(&self.columns.join(","));
                out.push('\n');
                for row in &self.rows {
                    let cells: Vec<String> = row.iter().map(Cell::csv).collect();
                    out.push_str(&cells.join(","));
                    out.push('\n');
                }
                out
            }
            Format::Json => {
                let rows: Vec<Value> = self
                    .rows
                    .iter()
                    .map(|r| Value::Array(r.iter().map(Cell::json).collect()))
                    .collect();
                document(cmd, cfg, json!({ "columns": self.columns, "rows": rows }))
            }
        }
    }
}

fn document(cmd: Command, cfg: &RunConfig, body: Value) -> String {
    let mut doc = json!({
        "command": cmd.name(),
        "config": cfg.resolved_map(),
    });
    if let (Value::Object(d), Value::Object(b)) = (&mut doc, body) {
        d.extend(b);
    }
    let mut s = serde_json::to_string_pretty(&doc).expect("serializable");
    s.push('\n');
    s
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable")
}

fn mode_name(m: GreenMode) -> &'static str {
    match m {
        GreenMode::Retarded => "retarded",
        GreenMode::Quasistatic => "quasistatic",
    }
}

fn block_name(p: Polarization) -> &'static str {
    match p {
        Polarization::OutOfPlane => "out_of_plane",
        Polarization::InPlane => "in_plane",
    }
}

/// Band slots in a `BandSet`: two out-of-plane bands, then four in-plane.
fn slots(block: BlockChoice) -> Vec<(usize, Polarization, usize)> {
    let all = [
        (0, Polarization::OutOfPlane, 0),
        (1, Polarization::OutOfPlane, 1),
        (2, Polarization::InPlane, 0),
        (3, Polarization::InPlane, 1),
        (4, Polarization::InPlane, 2),
        (5, Polarization::InPlane, 3),
    ];
    let blocks = block.blocks();
    all.into_iter().filter(|s| blocks.contains(&s.1)).collect()
}

fn value_columns(mode: ModeChoice) -> Vec<&'static str> {
    match mode {
        ModeChoice::Both => vec![
            "detuning_retarded",
            "decay_retarded",
            "detuning_quasistatic",
            "decay_quasistatic",
        ],
        _ => vec!["detuning", "decay"],
    }
}

fn anomaly(sets: &[&Result<BandSet, Error>]) -> &'static str {
    if sets.iter().any(|s| s.is_err()) {
        "error"
    } else if sets.iter().any(|s| s.as_ref().is_ok_and(|s| s.nudged)) {
        "nudged"
    } else {
        "none"
    }
}

/// Band cells for one k-point, one entry per mode.
fn band_cells(
    k: Vec2,
    spec: &LatticeSpec,
    sets: &[&Result<BandSet, Error>],
    slot: usize,
) -> Vec<Cell> {
    let mut cells = Vec::new();
    for s in sets {
        match s {
            Ok(set) => {
                cells.push(Cell::Num(set.bands[slot].detuning));
                cells.push(Cell::Num(set.bands[slot].decay));
            }
            Err(_) => {
                cells.push(Cell::Num(f64::NAN));
                cells.push(Cell::Num(f64::NAN));
            }
        }
    }
    let in_cone = spec.reciprocal().reduce_to_bz(k).norm() < metasurface::greens::K0;
    cells.push(Cell::Bool(in_cone));
    cells.push(Cell::Text(anomaly(sets).into()));
    cells
}

fn compute_sets(spec: &LatticeSpec, points: &[Vec2], mode: GreenMode, cfg: &RunConfig) -> Vec<Result<BandSet, Error>> {
    points
        .par_iter()
        .map(|&k| bands_at_with(spec, k, mode, &cfg.ewald))
        .collect()
}

fn all_failed(per_mode: &[Vec<Result<BandSet, Error>>]) -> Option<Failure> {
    for sets in per_mode {
        if !sets.is_empty() && sets.iter().all(|s| s.is_err()) {
            let e = sets[0].as_ref().unwrap_err().clone();
            return Some(Failure::Numerical(format!("no k-point could be evaluated: {e}")));
        }
    }
    None
}

fn bands(cfg: &RunConfig, spec: &LatticeSpec) -> Result<String, Failure> {
    if cfg.path.is_empty() {
        return Err(Failure::Config("path is empty".into()));
    }
    let path = spec.reciprocal().sample_path(&cfg.path, cfg.n_per_segment)?;
    let points: Vec<Vec2> = path.iter().map(|p| p.k).collect();
    let mut per_mode: Vec<Vec<Result<BandSet, Error>>> = cfg
        .mode
        .modes()
        .into_iter()
        .map(|m| compute_sets(spec, &points, m, cfg))
        .collect();
    if let Some(f) = all_failed(&per_mode) {
        return Err(f);
    }
    for sets in per_mode.iter_mut() {
        let mut prev: Option<usize> = None;
        for i in 0..sets.len() {
            if sets[i].is_err() {
                continue;
            }
            if let Some(j) = prev {
                let (head, tail) = sets.split_at_mut(i);
                if let (Ok(p), Ok(c)) = (&head[j], &mut tail[0]) {
                    connect(p, c);
                }
            }
            prev = Some(i);
        }
    }

    let mut columns = vec!["arclength", "kx", "ky", "band_index", "block"];
    columns.extend(value_columns(cfg.mode));
    columns.extend(["in_light_cone", "anomaly"]);
    let mut rows = Vec::new();
    for (i, p) in path.iter().enumerate() {
        let sets: Vec<&Result<BandSet, Error>> = per_mode.iter().map(|s| &s[i]).collect();
        for (slot, block, index) in slots(cfg.block) {
            let mut row = vec![
                Cell::Num(p.arclength),
                Cell::Num(p.k.x),
                Cell::Num(p.k.y),
                Cell::Int(index),
                Cell::Text(block_name(block).into()),
            ];
            row.extend(band_cells(p.k, spec, &sets, slot));
            rows.push(row);
        }
    }
    Ok(Table { columns, rows }.render(Command::Bands, cfg))
}

fn surface(cfg: &RunConfig, spec: &LatticeSpec) -> Result<String, Failure> {
    let b = spec.reciprocal().b1.norm();
    let grid = KGrid::around(cfg.grid_center.resolve(spec), cfg.grid_half_width * b, cfg.grid_n);
    let points = grid.points();
    let per_mode: Vec<Vec<Result<BandSet, Error>>> = cfg
        .mode
        .modes()
        .into_iter()
        .map(|m| compute_sets(spec, &points, m, cfg))
        .collect();
    if let Some(f) = all_failed(&per_mode) {
        return Err(f);
    }
    let mut columns = vec!["ix", "iy", "kx", "ky", "band_index", "block"];
    columns.extend(value_columns(cfg.mode));
    columns.extend(["in_light_cone", "anomaly"]);
    let mut rows = Vec::new();
    for (i, k) in points.iter().enumerate() {
        let sets: Vec<&Result<BandSet, Error>> = per_mode.iter().map(|s| &s[i]).collect();
        for (slot, block, index) in slots(cfg.block) {
            let mut row = vec![
                Cell::Int(i % grid.nx),
                Cell::Int(i / grid.nx),
                Cell::Num(k.x),
                Cell::Num(k.y),
                Cell::Int(index),
                Cell::Text(block_name(block).into()),
            ];
            row.extend(band_cells(*k, spec, &sets, slot));
            rows.push(row);
        }
    }
    Ok(Table { columns, rows }.render(Command::Surface, cfg))
}

/// `(block, pair)` combinations selected by the configuration.
fn selections(cfg: &RunConfig) -> Vec<(Polarization, [usize; 2])> {
    let mut out = Vec::new();
    for block in cfg.block.blocks() {
        match cfg.pair {
            Some(p) => out.push((block, p)),
            None => match block {
                Polarization::OutOfPlane => out.push((block, [0, 1])),
                Polarization::InPlane => out.extend([[0, 1], [1, 2], [2, 3]].map(|p| (block, p))),
            },
        }
    }
    out
}

fn dispersion_config(cfg: &RunConfig, mode: GreenMode) -> DispersionConfig {
    DispersionConfig {
        mode,
        ..cfg.dispersion
    }
}

fn region(cfg: &RunConfig, spec: &LatticeSpec) -> SearchRegion {
    match &cfg.region {
        Region::HalfBz => SearchRegion::half_bz(spec),
        Region::Around(p) => SearchRegion::around(
            p.resolve(spec),
            cfg.region_half_width * spec.reciprocal().b1.norm(),
        ),
    }
}

/// Classify `report`, keeping it unclassified (with a warning) if the fit fails.
fn try_classify(spec: &LatticeSpec, report: &DegeneracyReport, dcfg: &DispersionConfig) -> Value {
    match classify(spec, report, dcfg) {
        Ok(r) => to_value(&r),
        Err(e) => {
            eprintln!("warning: classification at ({}, {}) failed: {e}", report.k_star.x, report.k_star.y);
            let mut v = to_value(report);
            if let Value::Object(m) = &mut v {
                m.insert("error".into(), json!(e.to_string()));
            }
            v
        }
    }
}

fn find_cones(cfg: &RunConfig, spec: &LatticeSpec) -> Result<String, Failure> {
    let region = region(cfg, spec);
    let mut results = Vec::new();
    for mode in cfg.mode.modes() {
        let dcfg = dispersion_config(cfg, mode);
        for (block, pair) in selections(cfg) {
            let found = find_degeneracies(spec, block, pair, &region, &dcfg)?;
            let reports: Vec<Value> = found.iter().map(|r| try_classify(spec, r, &dcfg)).collect();
            results.push(json!({
                "mode": mode_name(mode),
                "block": block_name(block),
                "band_pair": pair,
                "reports": reports,
            }));
        }
    }
    Ok(document(Command::FindCones, cfg, json!({ "results": results })))
}

fn classify_points(cfg: &RunConfig, spec: &LatticeSpec) -> Result<String, Failure> {
    if cfg.k.is_empty() {
        return Err(Failure::Config("classify needs at least one k-point".into()));
    }
    let b = spec.reciprocal().b1.norm();
    let mut results = Vec::new();
    let mut any_ok = false;
    let mut last_err = None;
    for mode in cfg.mode.modes() {
        let dcfg = dispersion_config(cfg, mode);
        for (block, pair) in selections(cfg) {
            for point in &cfg.k {
                let start = point.resolve(spec);
                let located = if cfg.refine {
                    Ok(refine(spec, block, pair, start, 0.01 * b, &dcfg))
                } else {
                    pair_gap(spec, start, mode, block, pair).map(|g| (start, g))
                };
                let entry = located.and_then(|(k, gap)| {
                    let report = DegeneracyReport {
                        k_star: k,
                        block,
                        band_pair: pair,
                        gap_min: gap,
                        beta: spec.beta,
                        d0: spec.d0,
                        classification: None,
                    };
                    classify(spec, &report, &dcfg)
                });
                let value = match entry {
                    Ok(r) => {
                        any_ok = true;
                        to_value(&r)
                    }
                    Err(e) => {
                        let v = json!({ "error": e.to_string() });
                        last_err = Some(e);
                        v
                    }
                };
                results.push(json!({
                    "mode": mode_name(mode),
                    "block": block_name(block),
                    "band_pair": pair,
                    "start": point.to_string(),
                    "report": value,
                }));
            }
        }
    }
    if !any_ok {
        if let Some(e) = last_err {
            return Err(e.into());
        }
    }
    Ok(document(Command::Classify, cfg, json!({ "results": results })))
}

fn sweep_beta(cfg: &RunConfig) -> Result<String, Failure> {
    let Some(range) = cfg.beta_range else {
        return Err(Failure::Config("sweep-beta needs beta_range = lo,hi".into()));
    };
    let block = match cfg.block {
        BlockChoice::OutOfPlane => Polarization::OutOfPlane,
        BlockChoice::InPlane => Polarization::InPlane,
        BlockChoice::All => {
            return Err(Failure::Config("sweep-beta needs block = out_of_plane or in_plane".into()))
        }
    };
    let pair = cfg.pair.unwrap_or([0, 1]);
    let spec = LatticeSpec::new(cfg.d0, range.0)?;
    let region = match cfg.region {
        Region::HalfBz => None,
        Region::Around(_) => Some(region(cfg, &spec)),
    };
    let seed = cfg.seed.as_ref().map(|p| p.resolve(&spec));
    let mut results = Vec::new();
    for mode in cfg.mode.modes() {
        let dcfg = dispersion_config(cfg, mode);
        let traj = tilt_transition_scan(cfg.d0, range, block, pair, region, seed, &dcfg)?;
        results.push(json!({ "mode": mode_name(mode), "trajectory": to_value(&traj) }));
    }
    Ok(document(Command::SweepBeta, cfg, json!({ "results": results })))
}

fn convergence(cfg: &RunConfig, spec: &LatticeSpec) -> Result<String, Failure> {
    if cfg.k.is_empty() {
        return Err(Failure::Config("convergence needs at least one k-point".into()));
    }
    let columns = vec![
        "point",
        "kx",
        "ky",
        "splitting",
        "quasistatic_splitting",
        "quasistatic_direct",
        "retarded_splitting",
        "rayleigh_distance",
        "max_deviation",
    ];
    let mut rows = Vec::new();
    for point in &cfg.k {
        let k = point.resolve(spec);
        let d = sum_diagnostics(spec, k)?;
        rows.push(vec![
            Cell::Text(point.to_string().replace(',', " ")),
            Cell::Num(k.x),
            Cell::Num(k.y),
            Cell::Num(d.splitting),
            Cell::Num(d.quasistatic_splitting),
            Cell::Num(d.quasistatic_direct),
            Cell::Opt(d.retarded_splitting),
            Cell::Opt(d.rayleigh_distance),
            Cell::Num(d.max_deviation()),
        ]);
    }
    Ok(Table { columns, rows }.render(Command::Convergence, cfg))
}

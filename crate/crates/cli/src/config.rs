//! Run configuration: `key = value` lines, `#` comments, unknown keys rejected.

use std::collections::BTreeMap;
use std::fmt;

use metasurface::dispersion::DispersionConfig;
use metasurface::greens::GreenMode;
use metasurface::lattice::{LatticeSpec, SymmetryPoint, Vec2, BETA_MAX, BETA_MIN};
use metasurface::latticesums::EwaldSettings;
use metasurface::bloch::Polarization;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeChoice {
    Retarded,
    Quasistatic,
    Both,
}

impl ModeChoice {
    pub fn modes(self) -> Vec<GreenMode> {
        match self {
            ModeChoice::Retarded => vec![GreenMode::Retarded],
            ModeChoice::Quasistatic => vec![GreenMode::Quasistatic],
            ModeChoice::Both => vec![GreenMode::Retarded, GreenMode::Quasistatic],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockChoice {
    OutOfPlane,
    InPlane,
    All,
}

impl BlockChoice {
    pub fn blocks(self) -> Vec<Polarization> {
        match self {
            BlockChoice::OutOfPlane => vec![Polarization::OutOfPlane],
            BlockChoice::InPlane => vec![Polarization::InPlane],
            BlockChoice::All => vec![Polarization::OutOfPlane, Polarization::InPlane],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

/// A k-point given either by symmetry label (optionally `-` prefixed) or as `kx,ky`.
#[derive(Debug, Clone, PartialEq)]
pub enum Point {
    Label(String),
    Coords(Vec2),
}

impl Point {
    pub fn resolve(&self, spec: &LatticeSpec) -> Vec2 {
        match self {
            Point::Label(l) => spec.reciprocal().resolve(l).expect("label validated at parse time"),
            Point::Coords(k) => *k,
        }
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Point::Label(l) => f.write_str(l),
            Point::Coords(k) => write!(f, "{},{}", k.x, k.y),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    HalfBz,
    Around(Point),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub d0: f64,
    pub beta: f64,
    pub beta_range: Option<(f64, f64)>,
    pub mode: ModeChoice,
    pub block: BlockChoice,
    pub pair: Option<[usize; 2]>,
    pub path: Vec<String>,
    pub n_per_segment: usize,
    pub grid_center: Point,
    /// Units of `|b1|`.
    pub grid_half_width: f64,
    pub grid_n: usize,
    pub region: Region,
    /// Units of `|b1|`.
    pub region_half_width: f64,
    pub k: Vec<Point>,
    pub refine: bool,
    pub seed: Option<Point>,
    pub ewald: EwaldSettings,
    pub dispersion: DispersionConfig,
    pub format: Format,
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            d0: 0.1,
            beta: 1.0,
            beta_range: None,
            mode: ModeChoice::Retarded,
            block: BlockChoice::All,
            pair: None,
            path: ["M", "Kp", "G", "K", "M"].iter().map(|s| s.to_string()).collect(),
            n_per_segment: 40,
            grid_center: Point::Label("G".into()),
            grid_half_width: 0.5,
            grid_n: 41,
            region: Region::HalfBz,
            region_half_width: 0.1,
            k: vec![Point::Label("G".into()), Point::Label("M".into()), Point::Label("K".into())],
            refine: true,
            seed: None,
            ewald: EwaldSettings::default(),
            dispersion: DispersionConfig::default(),
            format: Format::Csv,
            threads: None,
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64, ConfigError> {
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => err(format!("{key}: expected a finite number, got `{v}`")),
    }
}

fn parse_positive(key: &str, v: &str) -> Result<f64, ConfigError> {
    let x = parse_f64(key, v)?;
    if x <= 0.0 {
        return err(format!("{key}: must be positive, got {x}"));
    }
    Ok(x)
}

fn parse_usize(key: &str, v: &str) -> Result<usize, ConfigError> {
    v.parse::<usize>()
        .or_else(|_| err(format!("{key}: expected a non-negative integer, got `{v}`")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => err(format!("{key}: expected true or false, got `{v}`")),
    }
}

fn split_two<'a>(key: &str, v: &'a str) -> Result<(&'a str, &'a str), ConfigError> {
    match v.split(',').map(str::trim).collect::<Vec<_>>()[..] {
        [a, b] => Ok((a, b)),
        _ => err(format!("{key}: expected two comma-separated values, got `{v}`")),
    }
}

fn check_label(key: &str, label: &str) -> Result<(), ConfigError> {
    let name = label.strip_prefix('-').unwrap_or(label);
    if SymmetryPoint::parse(name).is_none() {
        return err(format!("{key}: unknown k-point label `{label}` (use G, M, K, Kp, Mv, Kv)"));
    }
    Ok(())
}

fn parse_point(key: &str, v: &str) -> Result<Point, ConfigError> {
    if v.contains(',') {
        let (a, b) = split_two(key, v)?;
        Ok(Point::Coords(Vec2::new(parse_f64(key, a)?, parse_f64(key, b)?)))
    } else {
        check_label(key, v)?;
        Ok(Point::Label(v.to_string()))
    }
}

/// Points separated by `;`, a single `kx,ky`, or labels separated by `,`.
fn parse_points(key: &str, v: &str) -> Result<Vec<Point>, ConfigError> {
    let numeric = v.split(',').all(|p| p.trim().parse::<f64>().is_ok());
    let parts: Vec<&str> = if v.contains(';') || numeric {
        v.split(';').map(str::trim).collect()
    } else {
        v.split(',').map(str::trim).collect()
    };
    parts
        .into_iter()
        .filter(|p| !p.is_empty())
        .map(|p| parse_point(key, p))
        .collect()
}

fn fmt_opt<T: fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".to_string(), |x| x.to_string())
}

impl RunConfig {
    /// Apply one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        let d = &mut self.dispersion;
        match key {
            "d0" => self.d0 = parse_positive(key, v)?,
            "beta" => self.beta = parse_f64(key, v)?,
            "beta_range" => {
                self.beta_range = if v == "none" {
                    None
                } else {
                    let (a, b) = split_two(key, v)?;
                    Some((parse_f64(key, a)?, parse_f64(key, b)?))
                }
            }
            "mode" => {
                self.mode = match v {
                    "retarded" => ModeChoice::Retarded,
                    "quasistatic" => ModeChoice::Quasistatic,
                    "both" => ModeChoice::Both,
                    _ => return err(format!("mode: expected retarded, quasistatic or both, got `{v}`")),
                }
            }
            "block" => {
                self.block = match v {
                    "out_of_plane" | "out-of-plane" => BlockChoice::OutOfPlane,
                    "in_plane" | "in-plane" => BlockChoice::InPlane,
                    "all" => BlockChoice::All,
                    _ => return err(format!("block: expected out_of_plane, in_plane or all, got `{v}`")),
                }
            }
            "pair" => {
                self.pair = if v == "none" {
                    None
                } else {
                    let (a, b) = split_two(key, v)?;
                    Some([parse_usize(key, a)?, parse_usize(key, b)?])
                }
            }
            "path" => {
                let labels: Vec<String> = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::to_string)
                    .collect();
                for l in &labels {
                    check_label(key, l)?;
                }
                self.path = labels;
            }
            "n_per_segment" => self.n_per_segment = parse_usize(key, v)?,
            "grid_center" => self.grid_center = parse_point(key, v)?,
            "grid_half_width" => self.grid_half_width = parse_positive(key, v)?,
            "grid_n" => self.grid_n = parse_usize(key, v)?,
            "region" => {
                self.region = if v == "half_bz" {
                    Region::HalfBz
                } else {
                    Region::Around(parse_point(key, v)?)
                }
            }
            "region_half_width" => self.region_half_width = parse_positive(key, v)?,
            "k" => self.k = parse_points(key, v)?,
            "refine" => self.refine = parse_bool(key, v)?,
            "seed" => self.seed = if v == "none" { None } else { Some(parse_point(key, v)?) },
            "ewald_splitting" => {
                self.ewald.splitting = if v == "default" { None } else { Some(parse_positive(key, v)?) }
            }
            "ewald_tolerance" => self.ewald.tolerance = parse_positive(key, v)?,
            "eps_deg" => d.eps_deg = parse_f64(key, v)?,
            "search_n" => d.grid_n = parse_usize(key, v)?,
            "refine_tol" => d.refine_tol = parse_f64(key, v)?,
            "merge_tol" => d.merge_tol = parse_f64(key, v)?,
            "fit_radius" => d.fit_radius = parse_f64(key, v)?,
            "fit_radius_min" => d.fit_radius_min = parse_f64(key, v)?,
            "n_directions" => d.n_directions = parse_usize(key, v)?,
            "n_radii" => d.n_radii = parse_usize(key, v)?,
            "tilt_tolerance" => d.tilt_tolerance = parse_f64(key, v)?,
            "linear_window" => d.linear_window = parse_f64(key, v)?,
            "quadratic_window" => d.quadratic_window = parse_f64(key, v)?,
            "max_condition" => d.max_condition = parse_f64(key, v)?,
            "light_line_margin" => d.light_line_margin = parse_f64(key, v)?,
            "beta_step" => d.beta_step = parse_f64(key, v)?,
            "beta_step_min" => d.beta_step_min = parse_f64(key, v)?,
            "critical_tol" => d.critical_tol = parse_f64(key, v)?,
            "format" => {
                self.format = match v {
                    "csv" => Format::Csv,
                    "json" => Format::Json,
                    _ => return err(format!("format: expected csv or json, got `{v}`")),
                }
            }
            "threads" => {
                self.threads = match parse_usize(key, v)? {
                    0 => None,
                    n => Some(n),
                }
            }
            _ => return err(format!("unknown configuration key `{key}`")),
        }
        Ok(())
    }

    /// Parse the contents of a configuration file on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return err(format!("line {}: expected `key = value`, got `{}`", n + 1, raw.trim()));
            };
            self.set(key.trim(), value)
                .map_err(|e| ConfigError(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    /// Cross-field checks that do not depend on the command.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(BETA_MIN..=BETA_MAX).contains(&self.beta) {
            return err(format!("beta = {} outside [{BETA_MIN}, {BETA_MAX}]", self.beta));
        }
        if let Some((lo, hi)) = self.beta_range {
            if !(lo <= hi) || lo < BETA_MIN || hi > BETA_MAX {
                return err(format!(
                    "beta_range = {lo},{hi} must be ordered and within [{BETA_MIN}, {BETA_MAX}]"
                ));
            }
        }
        if self.n_per_segment < 2 {
            return err("n_per_segment must be at least 2");
        }
        if self.grid_n == 0 {
            return err("grid_n must be at least 1");
        }
        self.dispersion.validate().map_err(|e| ConfigError(e.to_string()))
    }

    /// Every setting as `(key, value)`, in a fixed order, re-parseable by [`RunConfig::set`].
    pub fn resolved(&self) -> Vec<(&'static str, String)> {
        let d = &self.dispersion;
        let mode = match self.mode {
            ModeChoice::Retarded => "retarded",
            ModeChoice::Quasistatic => "quasistatic",
            ModeChoice::Both => "both",
        };
        let block = match self.block {
            BlockChoice::OutOfPlane => "out_of_plane",
            BlockChoice::InPlane => "in_plane",
            BlockChoice::All => "all",
        };
        let region = match &self.region {
            Region::HalfBz => "half_bz".to_string(),
            Region::Around(p) => p.to_string(),
        };
        vec![
            ("d0", self.d0.to_string()),
            ("beta", self.beta.to_string()),
            ("beta_range", fmt_opt(&self.beta_range.map(|(a, b)| format!("{a},{b}")))),
            ("mode", mode.into()),
            ("block", block.into()),
            ("pair", fmt_opt(&self.pair.map(|p| format!("{},{}", p[0], p[1])))),
            ("path", self.path.join(",")),
            ("n_per_segment", self.n_per_segment.to_string()),
            ("grid_center", self.grid_center.to_string()),
            ("grid_half_width", self.grid_half_width.to_string()),
            ("grid_n", self.grid_n.to_string()),
            ("region", region),
            ("region_half_width", self.region_half_width.to_string()),
            ("k", self.k.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(";")),
            ("refine", self.refine.to_string()),
            ("seed", fmt_opt(&self.seed)),
            ("ewald_splitting", self.ewald.splitting.map_or("default".into(), |e| e.to_string())),
            ("ewald_tolerance", self.ewald.tolerance.to_string()),
            ("eps_deg", d.eps_deg.to_string()),
            ("search_n", d.grid_n.to_string()),
            ("refine_tol", d.refine_tol.to_string()),
            ("merge_tol", d.merge_tol.to_string()),
            ("fit_radius", d.fit_radius.to_string()),
            ("fit_radius_min", d.fit_radius_min.to_string()),
            ("n_directions", d.n_directions.to_string()),
            ("n_radii", d.n_radii.to_string()),
            ("tilt_tolerance", d.tilt_tolerance.to_string()),
            ("linear_window", d.linear_window.to_string()),
            ("quadratic_window", d.quadratic_window.to_string()),
            ("max_condition", d.max_condition.to_string()),
            ("light_line_margin", d.light_line_margin.to_string()),
            ("beta_step", d.beta_step.to_string()),
            ("beta_step_min", d.beta_step_min.to_string()),
            ("critical_tol", d.critical_tol.to_string()),
            ("format", if self.format == Format::Csv { "csv" } else { "json" }.into()),
            ("threads", self.threads.map_or(0, |n| n).to_string()),
        ]
    }

    pub fn resolved_map(&self) -> BTreeMap<&'static str, String> {
        self.resolved().into_iter().collect()
    }
}

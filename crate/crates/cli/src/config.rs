//! Run configuration: TOML text with `key = value` lines and `[section]` headers.
//!
//! ```toml
//! case = "taylor"          # taylor | patch | custom-level-set | transient-cavity
//! order = 1
//! n = [10, 20, 40, 80]     # one size or an increasing list
//! mu = 0.1
//! sigma = 1.0
//!
//! [stabilization]          # any subset; defaults depend on `order`
//! gamma = 30.0
//!
//! [output]
//! emit_vtk = true
//! ```

use serde::{Deserialize, Serialize};

use cutfem::forms::StabilizationConfig;
use cutfem::geometry::LevelSet;
use cutfem::navier_stokes::PicardSettings;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CaseKind {
    Taylor,
    Patch,
    CustomLevelSet,
    TransientCavity,
}

/// A single mesh size or a list of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MeshSizes {
    One(usize),
    Many(Vec<usize>),
}

impl MeshSizes {
    pub fn to_vec(&self) -> Vec<usize> {
        match self {
            MeshSizes::One(n) => vec![*n],
            MeshSizes::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shape {
    Circle,
    Ellipse,
    Square,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LevelSetConfig {
    pub shape: Shape,
    pub center: [f64; 2],
    /// Circle radius.
    pub radius: f64,
    /// Ellipse semi-axes along `x` and `y`.
    pub semi_axes: [f64; 2],
    /// Half side length of the square.
    pub half_width: f64,
    /// Translation applied to the shape.
    pub offset: [f64; 2],
}

impl Default for LevelSetConfig {
    fn default() -> Self {
        Self {
            shape: Shape::Circle,
            center: [0.5, 0.5],
            radius: 0.45,
            semi_axes: [0.45, 0.35],
            half_width: 0.41,
            offset: [0.0, 0.0],
        }
    }
}

impl LevelSetConfig {
    pub fn build(&self) -> LevelSet {
        let c = [self.center[0] + self.offset[0], self.center[1] + self.offset[1]];
        match self.shape {
            Shape::Circle => LevelSet::circle(c, self.radius),
            Shape::Ellipse => {
                let [a, b] = self.semi_axes;
                LevelSet::new(move |x| {
                    let (u, v) = ((x[0] - c[0]) / a, (x[1] - c[1]) / b);
                    (u * u + v * v).sqrt() - 1.0
                })
            }
            Shape::Square => {
                let r = self.half_width;
                LevelSet::new(move |x| (x[0] - c[0]).abs().max((x[1] - c[1]).abs()) - r)
            }
        }
    }

    fn validate(&self) -> Result<(), CliError> {
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(CliError::config(format!("level_set.{key}"), format!("must be positive, got {v}")))
            }
        };
        match self.shape {
            Shape::Circle => positive("radius", self.radius),
            Shape::Ellipse => positive("semi_axes", self.semi_axes[0].min(self.semi_axes[1])),
            Shape::Square => positive("half_width", self.half_width),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub emit_vtk: bool,
    pub condition_estimate: bool,
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub enabled: bool,
    pub n: usize,
    /// Centre shifts along `x` in units of `h`; the standard set when absent.
    pub offsets_h: Option<Vec<f64>>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            n: 40,
            offsets_h: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransientConfig {
    pub dt: f64,
    pub theta: f64,
    pub steps: usize,
    /// Ramp duration of the boundary data; zero disables the ramp.
    pub ramp_time: f64,
    /// Write a VTK snapshot every `vtk_stride` steps when VTK output is on.
    pub vtk_stride: usize,
    pub picard: PicardSettings,
}

impl Default for TransientConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            theta: 0.5,
            steps: 100,
            ramp_time: 0.1,
            vtk_stride: 10,
            picard: PicardSettings::default(),
        }
    }
}

/// Keys as written in the file; `stabilization` is merged onto order-dependent defaults.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    case: CaseKind,
    #[serde(default = "default_order")]
    order: usize,
    n: Option<MeshSizes>,
    mu: Option<f64>,
    #[serde(default)]
    sigma: f64,
    subdivision: Option<usize>,
    beta: Option<[f64; 2]>,
    output_dir: Option<String>,
    level_set: Option<LevelSetConfig>,
    stabilization: Option<toml::Table>,
    #[serde(default)]
    output: OutputConfig,
    #[serde(default)]
    sweep: SweepConfig,
    #[serde(default)]
    transient: TransientConfig,
}

fn default_order() -> usize {
    1
}

/// The fully resolved configuration of one run.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub case: CaseKind,
    pub order: usize,
    pub n: Vec<usize>,
    pub mu: f64,
    pub sigma: f64,
    pub subdivision: usize,
    pub beta: [f64; 2],
    pub output_dir: String,
    pub level_set: LevelSetConfig,
    pub stabilization: StabilizationConfig,
    pub output: OutputConfig,
    pub sweep: SweepConfig,
    pub transient: TransientConfig,
}

/// Parsed file together with the resolved configuration.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    /// The key-value table exactly as read.
    pub raw: toml::Table,
    pub resolved: RunConfig,
}

/// Dotted key of the entry whose value starts at byte `pos` of `source`.
fn key_at(source: &str, pos: usize, field: Option<&str>) -> Option<String> {
    let pos = pos.min(source.len());
    let line_start = source[..pos].rfind('\n').map_or(0, |i| i + 1);
    let line_end = source[pos..].find('\n').map_or(source.len(), |i| pos + i);
    let line = source[line_start..line_end].trim();
    let section = source[..line_start]
        .lines()
        .rev()
        .map(str::trim)
        .find(|l| l.starts_with('['))
        .map(|l| l.trim_matches(|c| c == '[' || c == ']').trim().to_string());
    let (section, key) = if line.starts_with('[') {
        (Some(line.trim_matches(|c| c == '[' || c == ']').trim().to_string()), field.map(str::to_string))
    } else {
        let key = field
            .map(str::to_string)
            .or_else(|| line.split('=').next().map(|k| k.trim().to_string()))
            .filter(|k| !k.is_empty());
        (section, key)
    };
    match (section, key) {
        (Some(s), Some(k)) => Some(format!("{s}.{k}")),
        (None, Some(k)) => Some(k),
        (Some(s), None) => Some(s),
        (None, None) => None,
    }
}

/// Field name quoted in a serde message such as "unknown field `foo`".
fn quoted_field(message: &str) -> Option<&str> {
    let start = message.find('`')? + 1;
    let end = start + message[start..].find('`')?;
    Some(&message[start..end])
}

fn toml_error(source: &str, err: toml::de::Error) -> CliError {
    let message = err.message().trim().to_string();
    let field = (message.starts_with("unknown field") || message.starts_with("missing field"))
        .then(|| quoted_field(&message))
        .flatten();
    let key = err.span().and_then(|s| key_at(source, s.start, field));
    CliError::Config { key, message }
}

/// Overlays `user` onto `base`, recursing into nested tables.
fn overlay(base: &mut toml::Table, user: &toml::Table) {
    for (k, v) in user {
        match (base.get_mut(k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(u)) => overlay(b, u),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

/// Dotted paths of the leaf values of `table`, each paired with a table holding only that leaf.
fn leaves(table: &toml::Table, prefix: &str) -> Vec<(String, toml::Table)> {
    let mut out = Vec::new();
    for (k, v) in table {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            toml::Value::Table(inner) => {
                for (p, sub) in leaves(inner, &path) {
                    let mut t = toml::Table::new();
                    t.insert(k.clone(), toml::Value::Table(sub));
                    out.push((p, t));
                }
            }
            _ => {
                let mut t = toml::Table::new();
                t.insert(k.clone(), v.clone());
                out.push((path, t));
            }
        }
    }
    out
}

fn stabilization(order: usize, user: Option<&toml::Table>) -> Result<StabilizationConfig, CliError> {
    let defaults = StabilizationConfig::for_order(order);
    let Some(user) = user else {
        return Ok(defaults);
    };
    let base = toml::Table::try_from(defaults)
        .map_err(|e| CliError::Runtime(format!("serializing stabilization defaults: {e}")))?;
    let merged = |extra: &toml::Table| -> Result<StabilizationConfig, toml::de::Error> {
        let mut table = base.clone();
        overlay(&mut table, extra);
        table.try_into()
    };
    merged(user).map_err(|e| {
        let message = e.message().trim().to_string();
        // Locate the first user entry that fails on its own; unknown keys are named in the message.
        let key = leaves(user, "")
            .into_iter()
            .find(|(_, single)| merged(single).is_err())
            .map(|(path, _)| format!("stabilization.{path}"))
            .or_else(|| {
                quoted_field(&message)
                    .filter(|_| message.contains("field"))
                    .map(|f| format!("stabilization.{f}"))
            })
            .unwrap_or_else(|| "stabilization".into());
        CliError::Config {
            key: Some(key),
            message,
        }
    })
}

fn positive(key: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::config(key, format!("must be positive, got {v}")))
    }
}

/// Parses and validates a configuration text.
pub fn parse_config(source: &str) -> Result<LoadedConfig, CliError> {
    let raw: toml::Table = toml::from_str(source).map_err(|e| toml_error(source, e))?;
    let cfg: RawConfig = toml::from_str(source).map_err(|e| toml_error(source, e))?;

    if !(1..=2).contains(&cfg.order) {
        return Err(CliError::config("order", format!("must be 1 or 2, got {}", cfg.order)));
    }
    let transient = cfg.case == CaseKind::TransientCavity;
    let mu = match (cfg.mu, cfg.case) {
        (Some(mu), _) => mu,
        (None, CaseKind::TransientCavity) => 0.0082,
        (None, _) => return Err(CliError::config("mu", "missing required key")),
    };
    positive("mu", mu)?;
    if !(cfg.sigma >= 0.0 && cfg.sigma.is_finite()) {
        return Err(CliError::config("sigma", format!("must be nonnegative, got {}", cfg.sigma)));
    }
    let n = match &cfg.n {
        Some(n) => n.to_vec(),
        None if transient => vec![32],
        None => return Err(CliError::config("n", "missing required key")),
    };
    if n.is_empty() || n.contains(&0) || n.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::config("n", format!("must be positive and strictly increasing, got {n:?}")));
    }
    if transient && n.len() != 1 {
        return Err(CliError::config("n", "the transient case takes a single mesh size"));
    }
    if cfg.case == CaseKind::CustomLevelSet && cfg.level_set.is_none() {
        return Err(CliError::config("level_set", "custom-level-set requires a [level_set] section"));
    }
    let level_set = cfg.level_set.clone().unwrap_or_else(|| {
        if transient {
            LevelSetConfig {
                shape: Shape::Square,
                ..LevelSetConfig::default()
            }
        } else {
            LevelSetConfig::default()
        }
    });
    level_set.validate()?;
    let stab = stabilization(cfg.order, cfg.stabilization.as_ref())?;
    stab.validate().map_err(|e| {
        let message = e.to_string();
        let name = message
            .trim_start_matches("invalid input: ")
            .split_whitespace()
            .next()
            .unwrap_or("")
            .to_string();
        CliError::config(format!("stabilization.{name}"), message)
    })?;
    if cfg.sweep.enabled && cfg.sweep.n == 0 {
        return Err(CliError::config("sweep.n", "must be positive"));
    }
    let t = &cfg.transient;
    positive("transient.dt", t.dt)?;
    if !(t.theta > 0.0 && t.theta <= 1.0) {
        return Err(CliError::config("transient.theta", format!("must lie in (0, 1], got {}", t.theta)));
    }
    if !(t.ramp_time >= 0.0) {
        return Err(CliError::config("transient.ramp_time", "must be nonnegative"));
    }
    positive("transient.picard.tolerance", t.picard.tolerance)?;
    if t.picard.max_iterations == 0 {
        return Err(CliError::config("transient.picard.max_iterations", "must be positive"));
    }
    if t.vtk_stride == 0 {
        return Err(CliError::config("transient.vtk_stride", "must be positive"));
    }
    let resolved = RunConfig {
        case: cfg.case,
        order: cfg.order,
        n,
        mu,
        sigma: cfg.sigma,
        subdivision: cfg
            .subdivision
            .unwrap_or_else(|| cutfem::verification::default_subdivision(cfg.order)),
        beta: cfg.beta.unwrap_or([1.0, 0.5]),
        output_dir: cfg.output_dir.clone().unwrap_or_else(|| "output".into()),
        level_set,
        stabilization: stab,
        output: cfg.output.clone(),
        sweep: cfg.sweep.clone(),
        transient: cfg.transient.clone(),
    };
    Ok(LoadedConfig { raw, resolved })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key_of(src: &str) -> Option<String> {
        match parse_config(src) {
            Err(CliError::Config { key, .. }) => key,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn defaults_reproduce_the_reference_parameters() {
        let cfg = parse_config("case = \"taylor\"\nn = [10, 20]\nmu = 0.1\n").unwrap().resolved;
        let s = cfg.stabilization;
        assert_eq!((s.gamma, s.gamma_beta, s.gamma_p, s.gamma_mu, s.gamma_sigma), (30.0, 0.05, 0.05, 0.05, 0.001));
        assert!((s.gamma_u - 0.05 * 0.05).abs() < 1e-18);
        assert_eq!((s.c_u, s.c_sigma), (1.0 / 6.0, 1.0 / 12.0));
        assert!(!s.use_simplified_gbeta);
        assert_eq!(cfg.subdivision, 0);
        assert_eq!(cfg.level_set, LevelSetConfig::default());
    }

    #[test]
    fn quadratic_order_switches_on_simplified_forms() {
        let cfg = parse_config("case = \"taylor\"\norder = 2\nn = 10\nmu = 0.1\n").unwrap().resolved;
        assert!(cfg.stabilization.use_simplified_gbeta);
        assert_eq!(cfg.subdivision, 2);
        assert_eq!(cfg.n, vec![10]);
    }

    #[test]
    fn stabilization_overrides_merge_onto_defaults() {
        let src = "case = \"taylor\"\nn = 10\nmu = 0.1\n[stabilization]\ngamma = 12.5\n[stabilization.ghost]\nmu = false\n";
        let s = parse_config(src).unwrap().resolved.stabilization;
        assert_eq!(s.gamma, 12.5);
        assert!(!s.ghost.mu && s.ghost.p);
        assert_eq!(s.gamma_p, 0.05);
    }

    #[test]
    fn errors_name_the_offending_key() {
        assert_eq!(key_of("case = \"taylor\"\nn = 10\nmu = 0.1\nbogus = 1\n").as_deref(), Some("bogus"));
        assert_eq!(key_of("case = \"taylor\"\nn = 10\nmu = \"x\"\n").as_deref(), Some("mu"));
        assert_eq!(key_of("case = \"taylor\"\nn = 10\n").as_deref(), Some("mu"));
        assert_eq!(key_of("case = \"taylor\"\nn = [20, 10]\nmu = 0.1\n").as_deref(), Some("n"));
        assert_eq!(
            key_of("case = \"taylor\"\nn = 10\nmu = 0.1\n[output]\nemit = true\n").as_deref(),
            Some("output.emit")
        );
        assert_eq!(
            key_of("case = \"taylor\"\nn = 10\nmu = 0.1\n[stabilization]\ngama = 1.0\n").as_deref(),
            Some("stabilization.gama")
        );
        assert_eq!(
            key_of("case = \"taylor\"\nn = 10\nmu = 0.1\n[stabilization]\ngamma_p = 0.0\n").as_deref(),
            Some("stabilization.gamma_p")
        );
        assert_eq!(
            key_of("case = \"transient-cavity\"\n[transient]\ntheta = 1.5\n").as_deref(),
            Some("transient.theta")
        );
        assert_eq!(key_of("case = \"custom-level-set\"\nn = 10\nmu = 0.1\n").as_deref(), Some("level_set"));
        assert_eq!(key_of("case = \"unknown\"\nn = 10\nmu = 0.1\n").as_deref(), Some("case"));
    }

    #[test]
    fn transient_defaults() {
        let cfg = parse_config("case = \"transient-cavity\"\n").unwrap().resolved;
        assert_eq!(cfg.n, vec![32]);
        assert_eq!(cfg.mu, 0.0082);
        assert_eq!((cfg.transient.dt, cfg.transient.theta, cfg.transient.steps), (0.01, 0.5, 100));
        assert_eq!(cfg.level_set.shape, Shape::Square);
    }

    #[test]
    fn level_sets_have_the_requested_zero_sets() {
        let mut ls = LevelSetConfig {
            shape: Shape::Ellipse,
            semi_axes: [0.4, 0.2],
            ..LevelSetConfig::default()
        };
        assert!(ls.build().eval([0.9, 0.5]).abs() < 1e-12);
        assert!(ls.build().eval([0.5, 0.7]).abs() < 1e-12);
        ls.shape = Shape::Square;
        ls.offset = [0.01, 0.0];
        assert!((ls.build().eval([0.51, 0.5]) + 0.41).abs() < 1e-12);
    }
}

//! Hyperparameter values, model specs and the grid configuration.
//!
//! Grids are written in TOML with one table per family. Values keep their
//! original shape (numbers, strings, lists, maps) so a grid file can mirror a
//! scikit-learn style parameter dictionary. The string `"None"` stands for
//! Python's `None`.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TabularError};

/// The grid file shipped with the crate.
pub const DEFAULT_GRID_TOML: &str = include_str!("grids.toml");

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HyperValue {
    None,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    List(Vec<HyperValue>),
    Map(BTreeMap<String, HyperValue>),
}

impl HyperValue {
    fn rank(&self) -> u8 {
        match self {
            HyperValue::None => 0,
            HyperValue::Bool(_) => 1,
            HyperValue::Int(_) | HyperValue::Float(_) => 2,
            HyperValue::Str(_) => 3,
            HyperValue::List(_) => 4,
            HyperValue::Map(_) => 5,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            HyperValue::Int(i) => Some(*i as f64),
            HyperValue::Float(f) => Some(*f),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            HyperValue::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, HyperValue::None)
    }

    pub fn str(s: &str) -> Self {
        HyperValue::Str(s.to_string())
    }

    fn from_toml(v: &toml::Value) -> Result<Self> {
        Ok(match v {
            toml::Value::String(s) if s == "None" => HyperValue::None,
            toml::Value::String(s) => HyperValue::Str(s.clone()),
            toml::Value::Integer(i) => HyperValue::Int(*i),
            toml::Value::Float(f) => HyperValue::Float(*f),
            toml::Value::Boolean(b) => HyperValue::Bool(*b),
            toml::Value::Array(a) => {
                HyperValue::List(a.iter().map(Self::from_toml).collect::<Result<_>>()?)
            }
            toml::Value::Table(t) => HyperValue::Map(
                t.iter()
                    .map(|(k, v)| Ok((k.clone(), Self::from_toml(v)?)))
                    .collect::<Result<_>>()?,
            ),
            toml::Value::Datetime(d) => {
                return Err(TabularError::GridConfig(format!("unsupported value {d}")))
            }
        })
    }
}

impl PartialEq for HyperValue {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for HyperValue {}

impl PartialOrd for HyperValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// None < bools < numbers < strings < lists < maps; numbers compare by value
/// (an integer sorts before an equal float), containers lexicographically.
impl Ord for HyperValue {
    fn cmp(&self, other: &Self) -> Ordering {
        use HyperValue::*;
        match (self, other) {
            (None, None) => Ordering::Equal,
            (Bool(a), Bool(b)) => a.cmp(b),
            (Str(a), Str(b)) => a.cmp(b),
            (List(a), List(b)) => a.cmp(b),
            (Map(a), Map(b)) => a.iter().cmp(b.iter()),
            (a, b) if a.rank() == 2 && b.rank() == 2 => {
                let (x, y) = (a.as_f64().unwrap(), b.as_f64().unwrap());
                x.total_cmp(&y).then_with(|| {
                    let int_first = |v: &HyperValue| u8::from(!matches!(v, Int(_)));
                    int_first(a).cmp(&int_first(b))
                })
            }
            (a, b) => a.rank().cmp(&b.rank()),
        }
    }
}

impl fmt::Display for HyperValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HyperValue::None => write!(f, "None"),
            HyperValue::Bool(b) => write!(f, "{}", if *b { "True" } else { "False" }),
            HyperValue::Int(i) => write!(f, "{i}"),
            HyperValue::Float(x) => write!(f, "{x}"),
            HyperValue::Str(s) => write!(f, "{s}"),
            HyperValue::List(items) => {
                write!(f, "(")?;
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{v}")?;
                }
                if items.len() == 1 {
                    write!(f, ",")?;
                }
                write!(f, ")")
            }
            HyperValue::Map(m) => {
                write!(f, "{{")?;
                for (i, (k, v)) in m.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{k}: {v}")?;
                }
                write!(f, "}}")
            }
        }
    }
}

/// Named hyperparameters; iteration (and therefore comparison) is by name.
pub type Hyperparams = BTreeMap<String, HyperValue>;

/// Lexicographic order over `(name, value)` pairs, used for tie-breaking.
pub fn cmp_params(a: &Hyperparams, b: &Hyperparams) -> Ordering {
    a.iter().cmp(b.iter())
}

pub fn format_params(p: &Hyperparams) -> String {
    let body: Vec<String> = p.iter().map(|(k, v)| format!("{k}={v}")).collect();
    body.join(", ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Dtree,
    Gboost,
    Knn,
    Logreg,
    Mlp,
    Rforest,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::Logreg,
        Family::Knn,
        Family::Mlp,
        Family::Dtree,
        Family::Gboost,
        Family::Rforest,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Family::Logreg => "logreg",
            Family::Knn => "knn",
            Family::Mlp => "mlp",
            Family::Dtree => "dtree",
            Family::Gboost => "gboost",
            Family::Rforest => "rforest",
        }
    }

    pub fn parse(s: &str) -> Option<Family> {
        Family::ALL.into_iter().find(|f| f.as_str() == s)
    }

    /// Families that can be fit on single-class data.
    pub fn tolerates_single_class(&self) -> bool {
        matches!(self, Family::Dtree | Family::Knn)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    pub hyperparameters: Hyperparams,
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(family: Family, hyperparameters: Hyperparams, seed: u64) -> Self {
        Self {
            family,
            hyperparameters,
            seed,
        }
    }
}

/// Rewrites settings that cannot change the fitted model into one spelling,
/// so equivalent grid points are trained once.
pub fn canonicalize(family: Family, params: &Hyperparams) -> Hyperparams {
    let mut p = params.clone();
    if let Some(HyperValue::Map(m)) = p.get("class_weight") {
        let unit = m.len() == 2
            && ["0", "1"].iter().all(|k| {
                m.get(*k)
                    .and_then(HyperValue::as_f64)
                    .is_some_and(|w| w == 1.0)
            });
        if unit {
            p.insert("class_weight".into(), HyperValue::None);
        }
    }
    if family == Family::Mlp && p.get("solver").and_then(HyperValue::as_str) == Some("adam") {
        // the learning-rate schedule only applies to sgd
        p.insert("learning_rate".into(), HyperValue::str("constant"));
    }
    p
}

/// Whether training with this configuration consumes randomness.
pub fn seed_dependent(family: Family, params: &Hyperparams) -> bool {
    let all_features = params.get("max_features").map_or(true, HyperValue::is_none);
    match family {
        Family::Logreg | Family::Knn => false,
        Family::Mlp => true,
        Family::Dtree => {
            !all_features || params.get("splitter").and_then(HyperValue::as_str) == Some("random")
        }
        Family::Gboost => !all_features,
        Family::Rforest => {
            !all_features || !matches!(params.get("bootstrap"), Some(HyperValue::Bool(false)))
        }
    }
}

// Typed accessors used by the family modules.

pub(crate) fn get_f64(p: &Hyperparams, name: &str, default: f64) -> Result<f64> {
    match p.get(name) {
        None => Ok(default),
        Some(v) => v
            .as_f64()
            .filter(|x| x.is_finite())
            .ok_or_else(|| TabularError::invalid(name, format!("expected a number, got {v}"))),
    }
}

pub(crate) fn get_positive_f64(p: &Hyperparams, name: &str, default: f64) -> Result<f64> {
    let v = get_f64(p, name, default)?;
    if v <= 0.0 {
        return Err(TabularError::invalid(name, format!("must be > 0, got {v}")));
    }
    Ok(v)
}

pub(crate) fn get_usize(p: &Hyperparams, name: &str, default: usize) -> Result<usize> {
    match p.get(name) {
        None => Ok(default),
        Some(HyperValue::Int(i)) if *i >= 1 => Ok(*i as usize),
        Some(v) => Err(TabularError::invalid(
            name,
            format!("expected a positive integer, got {v}"),
        )),
    }
}

/// Positive integer or `None` (unbounded).
pub(crate) fn get_opt_usize(p: &Hyperparams, name: &str) -> Result<Option<usize>> {
    match p.get(name) {
        None | Some(HyperValue::None) => Ok(None),
        Some(_) => get_usize(p, name, 1).map(Some),
    }
}

pub(crate) fn get_bool(p: &Hyperparams, name: &str, default: bool) -> Result<bool> {
    match p.get(name) {
        None => Ok(default),
        Some(HyperValue::Bool(b)) => Ok(*b),
        Some(v) => Err(TabularError::invalid(name, format!("expected a bool, got {v}"))),
    }
}

pub(crate) fn get_choice<'a>(
    p: &'a Hyperparams,
    name: &str,
    allowed: &[&'a str],
    default: &'a str,
) -> Result<&'a str> {
    match p.get(name) {
        None => Ok(default),
        Some(HyperValue::Str(s)) if allowed.contains(&s.as_str()) => Ok(s),
        Some(v) => Err(TabularError::invalid(
            name,
            format!("expected one of {allowed:?}, got {v}"),
        )),
    }
}

pub(crate) fn reject_unknown(p: &Hyperparams, known: &[&str]) -> Result<()> {
    match p.keys().find(|k| !known.contains(&k.as_str())) {
        Some(k) => Err(TabularError::invalid(k, "unknown hyperparameter")),
        None => Ok(()),
    }
}

/// Class weighting as in scikit-learn: `balanced` gives class c the weight
/// n / (2 n_c); a map gives explicit weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ClassWeight {
    Uniform,
    Balanced,
    Explicit([f64; 2]),
}

impl ClassWeight {
    pub(crate) fn from_hyper(p: &Hyperparams) -> Result<Self> {
        match p.get("class_weight") {
            None | Some(HyperValue::None) => Ok(ClassWeight::Uniform),
            Some(HyperValue::Str(s)) if s == "balanced" => Ok(ClassWeight::Balanced),
            Some(HyperValue::Map(m)) => {
                let w = |k: &str| -> Result<f64> {
                    match m.get(k).and_then(HyperValue::as_f64) {
                        Some(v) if v >= 0.0 && v.is_finite() => Ok(v),
                        _ => Err(TabularError::invalid(
                            "class_weight",
                            format!("missing or invalid weight for class {k}"),
                        )),
                    }
                };
                if m.len() != 2 {
                    return Err(TabularError::invalid("class_weight", "expects keys 0 and 1"));
                }
                Ok(ClassWeight::Explicit([w("0")?, w("1")?]))
            }
            Some(v) => Err(TabularError::invalid(
                "class_weight",
                format!("expected balanced, None or a map, got {v}"),
            )),
        }
    }

    /// Per-class weights for labels `y`.
    pub fn weights(&self, y: &[u8]) -> [f64; 2] {
        match self {
            ClassWeight::Uniform => [1.0, 1.0],
            ClassWeight::Explicit(w) => *w,
            ClassWeight::Balanced => {
                let n = y.len() as f64;
                let pos = y.iter().filter(|&&v| v == 1).count() as f64;
                let neg = n - pos;
                let bal = |c: f64| if c > 0.0 { n / (2.0 * c) } else { 1.0 };
                [bal(neg), bal(pos)]
            }
        }
    }
}

/// One table of the grid file: parameter name to candidate values.
pub type ParamGrid = BTreeMap<String, Vec<HyperValue>>;

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub sections: BTreeMap<String, ParamGrid>,
}

impl GridConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| TabularError::GridConfig(e.to_string()))?;
        let mut sections = BTreeMap::new();
        for (name, value) in &table {
            let toml::Value::Table(t) = value else {
                return Err(TabularError::GridConfig(format!(
                    "`{name}` must be a table"
                )));
            };
            if name != "catboost" && Family::parse(name).is_none() {
                return Err(TabularError::GridConfig(format!("unknown family `{name}`")));
            }
            let mut grid = ParamGrid::new();
            for (param, v) in t {
                let values = match HyperValue::from_toml(v)? {
                    HyperValue::List(items) => items,
                    scalar => vec![scalar],
                };
                if values.is_empty() {
                    return Err(TabularError::GridConfig(format!(
                        "`{name}.{param}` has no values"
                    )));
                }
                grid.insert(param.clone(), values);
            }
            sections.insert(name.clone(), grid);
        }
        Ok(Self { sections })
    }

    pub fn default_grids() -> Self {
        Self::parse(DEFAULT_GRID_TOML).expect("bundled grid file parses")
    }

    /// Canonical, de-duplicated candidate points for `family`, sorted by
    /// [`cmp_params`]. Gradient boosting also receives the catboost table.
    pub fn candidates(&self, family: Family) -> Vec<Hyperparams> {
        let mut points: Vec<Hyperparams> = Vec::new();
        if let Some(grid) = self.sections.get(family.as_str()) {
            points.extend(expand(grid));
        }
        if family == Family::Gboost {
            if let Some(grid) = self.sections.get("catboost") {
                points.extend(expand(grid).iter().map(map_catboost));
            }
        }
        let mut canon: Vec<Hyperparams> =
            points.iter().map(|p| canonicalize(family, p)).collect();
        canon.sort_by(cmp_params);
        canon.dedup();
        canon
    }
}

/// Cartesian product of a parameter grid, varying the last name fastest.
pub fn expand(grid: &ParamGrid) -> Vec<Hyperparams> {
    let mut out = vec![Hyperparams::new()];
    for (name, values) in grid {
        let mut next = Vec::with_capacity(out.len() * values.len());
        for base in &out {
            for v in values {
                let mut p = base.clone();
                p.insert(name.clone(), v.clone());
                next.push(p);
            }
        }
        out = next;
    }
    out
}

fn map_catboost(p: &Hyperparams) -> Hyperparams {
    let mut out = Hyperparams::new();
    for (k, v) in p {
        match k.as_str() {
            "iterations" => {
                out.insert("n_estimators".into(), v.clone());
            }
            "depth" => {
                out.insert("max_depth".into(), v.clone());
            }
            "learning_rate" => {
                out.insert(k.clone(), v.clone());
            }
            // no native counterpart
            "bootstrap_type" => {}
            other => {
                out.insert(other.to_string(), v.clone());
            }
        }
    }
    out.entry("max_features".into()).or_insert(HyperValue::None);
    out
}

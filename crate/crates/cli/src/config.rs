//! Run configuration file. Relative paths resolve against the directory of
//! the configuration file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use extgate_core::{CostModel, ReportFormat, SchemaOptions};
use extgate_tabular::{Family, GridConfig, SearchOptions};
use serde::Deserialize;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StorePaths {
    pub triples: Option<PathBuf>,
    pub pageviews: Option<PathBuf>,
    pub frequency: Option<PathBuf>,
    pub knowledgability: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkerPaths {
    pub gazetteer: Option<PathBuf>,
    /// Pre-linked entities; questions listed here bypass the gazetteer.
    pub sidecar: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelPaths {
    pub qtype: Option<PathBuf>,
    pub complexity: Option<PathBuf>,
    /// Train the bundled toy classifiers when no artifact path is given.
    pub bundled: bool,
}

impl Default for ModelPaths {
    fn default() -> Self {
        Self {
            qtype: None,
            complexity: None,
            bundled: true,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    /// Grid file; the bundled grids when absent.
    pub grids: Option<PathBuf>,
    pub families: Vec<String>,
    pub n_seeds: usize,
    pub validation_rows: usize,
    pub top_k: usize,
    pub parallel: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = SearchOptions::default();
        Self {
            grids: None,
            families: d.families.iter().map(|f| f.as_str().to_string()).collect(),
            n_seeds: d.n_seeds,
            validation_rows: d.validation_rows,
            top_k: d.top_k,
            parallel: d.parallel,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    /// Report row name of the trained gate; also selects `[cost.<method>]`.
    pub method: String,
    pub importance_repeats: usize,
    pub format: ReportFormat,
    /// Append the published Natural Questions rows to the Markdown report.
    pub reference: bool,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        Self {
            method: "gate".into(),
            importance_repeats: 20,
            format: ReportFormat::Markdown,
            reference: true,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub threshold: f64,
    pub out: PathBuf,
    pub stores: StorePaths,
    pub linker: LinkerPaths,
    pub features: SchemaOptions,
    pub models: ModelPaths,
    pub train: TrainSection,
    pub evaluate: EvaluateSection,
    pub cost: BTreeMap<String, CostModel>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            threshold: 0.5,
            out: PathBuf::from("out"),
            stores: StorePaths::default(),
            linker: LinkerPaths::default(),
            features: SchemaOptions::default(),
            models: ModelPaths::default(),
            train: TrainSection::default(),
            evaluate: EvaluateSection::default(),
            cost: BTreeMap::new(),
        }
    }
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.stores.triples,
            &mut cfg.stores.pageviews,
            &mut cfg.stores.frequency,
            &mut cfg.stores.knowledgability,
            &mut cfg.linker.gazetteer,
            &mut cfg.linker.sidecar,
            &mut cfg.models.qtype,
            &mut cfg.models.complexity,
            &mut cfg.train.grids,
        ] {
            resolve(base, p);
        }
        if cfg.out.is_relative() {
            cfg.out = base.join(&cfg.out);
        }
        cfg.validate().with_context(|| format!("invalid config {}", path.display()))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let paths = [
            &self.stores.triples,
            &self.stores.pageviews,
            &self.stores.frequency,
            &self.stores.knowledgability,
            &self.linker.gazetteer,
            &self.linker.sidecar,
            &self.models.qtype,
            &self.models.complexity,
            &self.train.grids,
        ];
        for p in paths.into_iter().flatten() {
            if !p.exists() {
                bail!("referenced path {} does not exist", p.display());
            }
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            bail!("threshold {} is outside [0, 1]", self.threshold);
        }
        for (name, c) in &self.cost {
            c.validate().with_context(|| format!("[cost.{name}]"))?;
        }
        self.search_options()?;
        Ok(())
    }

    pub fn search_options(&self) -> Result<SearchOptions> {
        let t = &self.train;
        let grids = match &t.grids {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading grids {}", p.display()))?;
                GridConfig::parse(&text).with_context(|| format!("parsing grids {}", p.display()))?
            }
            None => GridConfig::default_grids(),
        };
        let families = t
            .families
            .iter()
            .map(|f| Family::parse(f).with_context(|| format!("unknown family `{f}`")))
            .collect::<Result<Vec<_>>>()?;
        if families.is_empty() {
            bail!("[train] families is empty");
        }
        Ok(SearchOptions {
            grids,
            families,
            n_seeds: t.n_seeds,
            validation_rows: t.validation_rows,
            top_k: t.top_k,
            threshold: self.threshold,
            parallel: t.parallel,
        })
    }

    /// The cost entry for `method`, or the external-feature default.
    pub fn cost_for(&self, method: &str) -> CostModel {
        self.cost.get(method).copied().unwrap_or_default()
    }
}

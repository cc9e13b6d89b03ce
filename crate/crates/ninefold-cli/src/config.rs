//! Run configuration: the TOML schema, validation, and the content hash
//! that ties every emitted record to the exact configuration that produced
//! it.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use ninefold::tensor::SetTag;
use ninefold::MetricConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub run: RunSection,
    pub corpus: CorpusSection,
    #[serde(default)]
    pub ontology: OntologySection,
    #[serde(default)]
    pub backend: BackendSection,
    pub models: Vec<ModelSection>,
    #[serde(default)]
    pub hwpq: HwpqSection,
    #[serde(default)]
    pub metrics: MetricConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunSection {
    pub out_dir: PathBuf,
    pub seed: u64,
    /// Advisory cost ceiling; exceeding it warns, never aborts.
    pub budget_usd_per_1000: f64,
    /// Refuse any adapter that is not an in-process stub or a local command.
    pub offline: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("out"),
            seed: 0,
            budget_usd_per_1000: 5.0,
            offline: false,
        }
    }
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub corpus: Option<PathBuf>,
    pub set: Option<SetTag>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub offline: bool,
    pub models: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusSection {
    pub path: PathBuf,
    #[serde(default = "default_set")]
    pub set: SetTag,
}

fn default_set() -> SetTag {
    SetTag::Core
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct OntologySection {
    /// Ontology file; the built-in default is used when absent.
    pub path: Option<PathBuf>,
    /// Light-direction anchor table; the built-in 16 entries when absent.
    pub anchors: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendSection {
    /// Deterministic fixture-driven backend; unknown image ids derive
    /// procedurally.
    Synthetic {
        #[serde(default)]
        fixtures: Option<PathBuf>,
    },
    /// Local adapter processes speaking scene JSON on stdin/stdout.
    Command { providers: Vec<ProviderSection> },
}

impl Default for BackendSection {
    fn default() -> Self {
        BackendSection::Synthetic { fixtures: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProviderSection {
    pub argv: Vec<String>,
    /// Capability tokens this provider serves (e.g. `["persons"]` to keep
    /// expression analysis in its own process).
    pub capabilities: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSection {
    pub id: String,
    #[serde(flatten)]
    pub adapter: AdapterKind,
    #[serde(default)]
    pub price_per_call: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AdapterKind {
    /// In-process deterministic stub.
    Stub,
    /// Local process adapter speaking JSON on stdin/stdout.
    Command { argv: Vec<String> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct HwpqSection {
    pub k: u32,
    pub generator: ClientSection,
    pub answerer: ClientSection,
}

impl Default for HwpqSection {
    fn default() -> Self {
        Self {
            k: 3,
            generator: ClientSection::default(),
            answerer: ClientSection::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClientSection {
    #[serde(flatten)]
    pub adapter: AdapterKind,
    #[serde(default)]
    pub price_per_call: f64,
}

impl Default for ClientSection {
    fn default() -> Self {
        Self {
            adapter: AdapterKind::Stub,
            price_per_call: 0.0,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut config: RunConfig = toml::from_str(&text)
            .with_context(|| format!("cannot parse config {}", path.display()))?;
        config.resolve_paths(base);
        config.validate()?;
        Ok(config)
    }

    /// Interpret relative paths as relative to the config file.
    fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&p);
            }
        };
        resolve(&mut self.corpus.path);
        resolve(&mut self.run.out_dir);
        if let Some(p) = self.ontology.path.as_mut() {
            resolve(p);
        }
        if let Some(p) = self.ontology.anchors.as_mut() {
            resolve(p);
        }
        if let BackendSection::Synthetic { fixtures: Some(p) } = &mut self.backend {
            resolve(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.run.budget_usd_per_1000 <= 0.0 {
            bail!("budget_usd_per_1000 must be positive");
        }
        if self.models.is_empty() {
            bail!("at least one model is required");
        }
        if self.run.offline {
            let command_adapters = self
                .models
                .iter()
                .map(|m| &m.adapter)
                .chain([&self.hwpq.generator.adapter, &self.hwpq.answerer.adapter])
                .any(|a| matches!(a, AdapterKind::Command { .. }))
                || matches!(self.backend, BackendSection::Command { .. });
            if command_adapters {
                bail!("offline mode permits only stub adapters and the synthetic backend");
            }
        }
        for (i, model) in self.models.iter().enumerate() {
            if self.models[..i].iter().any(|m| m.id == model.id) {
                bail!("duplicate model id `{}`", model.id);
            }
        }
        if self.hwpq.k == 0 || self.hwpq.k.is_multiple_of(2) {
            bail!("hwpq.k must be odd and >= 1, got {}", self.hwpq.k);
        }
        let must_exist: Vec<&Path> = [Some(self.corpus.path.as_path())]
            .into_iter()
            .flatten()
            .chain(self.ontology.path.as_deref())
            .chain(self.ontology.anchors.as_deref())
            .chain(match &self.backend {
                BackendSection::Synthetic { fixtures } => fixtures.as_deref(),
                BackendSection::Command { .. } => None,
            })
            .collect();
        for path in must_exist {
            if !path.exists() {
                bail!("referenced path does not exist: {}", path.display());
            }
        }
        Ok(())
    }

    /// Stable digest of everything that determines scoring semantics: seed,
    /// ontology, backend, models, questionnaire clients, and metric
    /// constants. Records carry it so mismatched runs refuse to aggregate.
    /// The corpus and output paths are deliberately excluded; scoring the
    /// core and hard sets under one configuration must aggregate cleanly.
    pub fn content_hash(&self) -> String {
        #[derive(Serialize)]
        struct HashView<'a> {
            seed: u64,
            ontology: &'a OntologySection,
            backend: &'a BackendSection,
            models: &'a [ModelSection],
            hwpq: &'a HwpqSection,
            metrics: &'a MetricConfig,
        }
        let view = HashView {
            seed: self.run.seed,
            ontology: &self.ontology,
            backend: &self.backend,
            models: &self.models,
            hwpq: &self.hwpq,
            metrics: &self.metrics,
        };
        let canonical = serde_json::to_string(&view).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Apply command-line overrides, then re-validate.
    pub fn apply_overrides(&mut self, overrides: &Overrides) -> Result<()> {
        if let Some(corpus) = &overrides.corpus {
            self.corpus.path = corpus.clone();
        }
        if let Some(set) = overrides.set {
            self.corpus.set = set;
        }
        if let Some(out) = &overrides.out {
            self.run.out_dir = out.clone();
        }
        if let Some(seed) = overrides.seed {
            self.run.seed = seed;
        }
        if overrides.offline {
            self.run.offline = true;
        }
        if let Some(wanted) = &overrides.models {
            let wanted: Vec<&str> = wanted.split(',').map(str::trim).collect();
            for id in &wanted {
                if !self.models.iter().any(|m| &m.id == id) {
                    bail!("--models names unknown model `{id}`");
                }
            }
            self.models.retain(|m| wanted.contains(&m.id.as_str()));
        }
        self.validate()
    }

    pub fn run_id(&self) -> String {
        format!("run-{}-s{}", self.content_hash(), self.run.seed)
    }
}

//! On-disk formats: prompt corpora, ontology and fixture files, the anchor
//! table, tensor records (JSONL), preference corpora (JSONL), and persisted
//! questionnaires.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use ninefold::align::PreferencePair;
use ninefold::metrics::MetricScore;
use ninefold::ontology::{Aspect, Ontology, Role, RoleId};
use ninefold::prompt::{parse_prompt, StructuredPrompt};
use ninefold::synthetic::SceneFixture;
use ninefold::tensor::{CellCoords, EvaluationTensor, SetTag};
use ninefold::{LightAnchor, Questionnaire};

/// One parse failure in a corpus file.
#[derive(Debug, Clone)]
pub struct CorpusLineError {
    pub line: usize,
    pub offset: usize,
    pub message: String,
}

impl fmt::Display for CorpusLineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, offset {}: {}", self.line, self.offset, self.message)
    }
}

/// A loaded corpus: prompts with their stable ids, in file order.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub prompts: Vec<(String, StructuredPrompt)>,
}

/// Parse a corpus file: one prompt per line, UTF-8, `#` comments and blank
/// lines skipped. Prompt ids are `p0001`-style, numbered over prompt lines.
/// All parse errors are collected, not just the first.
pub fn read_corpus(path: &Path, ontology: &Ontology) -> Result<(Corpus, Vec<CorpusLineError>)> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read corpus {}", path.display()))?;
    let mut prompts = Vec::new();
    let mut errors = Vec::new();
    let mut index = 0usize;
    for (line_no, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        index += 1;
        match parse_prompt(ontology, trimmed) {
            Ok(prompt) => prompts.push((format!("p{index:04}"), prompt)),
            Err(e) => errors.push(CorpusLineError {
                line: line_no + 1,
                offset: e.offset(),
                message: e.to_string(),
            }),
        }
    }
    Ok((Corpus { prompts }, errors))
}

#[derive(Debug, Deserialize)]
struct OntologyFile {
    #[serde(default)]
    #[allow(dead_code)]
    version: u32,
    roles: Vec<Role>,
    mask: Vec<(String, String)>,
}

/// Load a role/mask ontology from TOML. Violating any cardinality invariant
/// (7 roles, 9 aspects, 28 mask pairs) fails fast.
pub fn read_ontology(path: &Path) -> Result<Ontology> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read ontology {}", path.display()))?;
    let file: OntologyFile = toml::from_str(&text)
        .with_context(|| format!("cannot parse ontology {}", path.display()))?;
    let mut pairs = Vec::with_capacity(file.mask.len());
    for (role, aspect) in &file.mask {
        let aspect = Aspect::from_token(aspect)
            .with_context(|| format!("unknown aspect `{aspect}` in mask"))?;
        pairs.push((RoleId::new(role.as_str()), aspect));
    }
    Ontology::from_parts(file.roles, &pairs).map_err(|e| anyhow::anyhow!("{e}"))
}

#[derive(Debug, Deserialize)]
struct FixtureFile {
    #[serde(default)]
    #[allow(dead_code)]
    version: u32,
    #[serde(default)]
    scenes: Vec<SceneFixture>,
}

/// Load scene fixtures from TOML (schema: `[[scenes]]` entries mirroring
/// [`SceneFixture`]).
pub fn read_fixtures(path: &Path) -> Result<Vec<SceneFixture>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read fixtures {}", path.display()))?;
    let file: FixtureFile = toml::from_str(&text)
        .with_context(|| format!("cannot parse fixtures {}", path.display()))?;
    Ok(file.scenes)
}

#[derive(Debug, Deserialize)]
struct AnchorFile {
    anchors: Vec<AnchorEntry>,
}

#[derive(Debug, Deserialize)]
struct AnchorEntry {
    phrase: String,
    direction: [f64; 3],
}

/// Load a light-anchor table from TOML; exactly 16 unit-norm entries.
pub fn read_anchors(path: &Path) -> Result<Vec<LightAnchor>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read anchors {}", path.display()))?;
    let file: AnchorFile = toml::from_str(&text)
        .with_context(|| format!("cannot parse anchors {}", path.display()))?;
    if file.anchors.len() != 16 {
        bail!("anchor table must list exactly 16 entries, got {}", file.anchors.len());
    }
    let anchors: Vec<LightAnchor> = file
        .anchors
        .into_iter()
        .map(|a| LightAnchor {
            phrase: a.phrase,
            direction: ninefold::Vec3::new(a.direction[0], a.direction[1], a.direction[2]),
        })
        .collect();
    for anchor in &anchors {
        anchor
            .validate()
            .map_err(|_| anyhow::anyhow!("anchor `{}` is not unit norm", anchor.phrase))?;
    }
    Ok(anchors)
}

/// One line of the results file: a tensor cell plus run provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorRecord {
    pub run_id: String,
    pub config_hash: String,
    pub model: String,
    pub prompt_id: String,
    pub role: String,
    pub aspect: Aspect,
    pub set_tag: SetTag,
    pub value: Option<f64>,
    pub failure: Option<String>,
    #[serde(default)]
    pub diagnostics: std::collections::BTreeMap<String, f64>,
}

impl TensorRecord {
    pub fn from_score(
        run_id: &str,
        config_hash: &str,
        coords: &CellCoords,
        tag: SetTag,
        score: &MetricScore,
    ) -> Self {
        Self {
            run_id: run_id.to_string(),
            config_hash: config_hash.to_string(),
            model: coords.model.clone(),
            prompt_id: coords.prompt.clone(),
            role: coords.role.as_str().to_string(),
            aspect: coords.aspect,
            set_tag: tag,
            value: score.value,
            failure: score.failure.clone(),
            diagnostics: score.diagnostics.clone(),
        }
    }
}

pub fn write_records(path: &Path, records: &[TensorRecord]) -> Result<()> {
    let mut out = String::new();
    for record in records {
        out.push_str(&serde_json::to_string(record)?);
        out.push('\n');
    }
    std::fs::write(path, out).with_context(|| format!("cannot write {}", path.display()))
}

pub fn read_records(path: &Path) -> Result<Vec<TensorRecord>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read records {}", path.display()))?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: TensorRecord = serde_json::from_str(line)
            .with_context(|| format!("{}:{}: bad record", path.display(), i + 1))?;
        records.push(record);
    }
    Ok(records)
}

/// Rebuild a tensor from records. Refuses to mix records from different
/// configurations.
pub fn tensor_from_records(
    records: &[TensorRecord],
    ontology: &Ontology,
) -> Result<EvaluationTensor> {
    let hashes: BTreeSet<&str> = records.iter().map(|r| r.config_hash.as_str()).collect();
    if hashes.len() > 1 {
        bail!(
            "records span {} different config hashes ({}); refusing to aggregate",
            hashes.len(),
            hashes.into_iter().collect::<Vec<_>>().join(", ")
        );
    }
    let mut tensor = EvaluationTensor::new(ontology.clone());
    for record in records {
        let mut score = match (&record.value, &record.failure) {
            (Some(v), None) => MetricScore::ok(record.aspect, *v),
            (None, Some(why)) => MetricScore::failed(record.aspect, why.clone()),
            (v, f) => bail!(
                "record for ({}, {}) must have exactly one of value/failure, got {v:?}/{f:?}",
                record.model,
                record.prompt_id
            ),
        };
        score.diagnostics = record.diagnostics.clone();
        let coords = CellCoords::new(
            record.role.as_str(),
            record.aspect,
            &record.model,
            &record.prompt_id,
        );
        tensor
            .record(coords, record.set_tag, score)
            .map_err(|e| anyhow::anyhow!("record ({}, {}): {e}", record.model, record.prompt_id))?;
    }
    Ok(tensor)
}

/// Preference corpus: one JSON object per line, mirroring
/// [`PreferencePair`].
pub fn read_preferences(path: &Path) -> Result<Vec<PreferencePair>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read preferences {}", path.display()))?;
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let pair: PreferencePair = serde_json::from_str(line)
            .with_context(|| format!("{}:{}: bad preference pair", path.display(), i + 1))?;
        pairs.push(pair);
    }
    Ok(pairs)
}

pub fn write_preferences(path: &Path, pairs: &[PreferencePair]) -> Result<()> {
    let mut out = String::new();
    for pair in pairs {
        out.push_str(&serde_json::to_string(pair)?);
        out.push('\n');
    }
    std::fs::write(path, out).with_context(|| format!("cannot write {}", path.display()))
}

/// Persist a questionnaire under `<dir>/<prompt_hash>.json`.
pub fn write_questionnaire(dir: &Path, questionnaire: &Questionnaire) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("{}.json", questionnaire.prompt_hash));
    let json = serde_json::to_string_pretty(questionnaire)?;
    std::fs::write(&path, json).with_context(|| format!("cannot write {}", path.display()))
}

/// Load every persisted questionnaire in a directory into a cache map.
pub fn load_questionnaires(dir: &Path) -> Result<ninefold::QuestionnaireCache> {
    let mut cache = ninefold::QuestionnaireCache::new();
    if !dir.exists() {
        return Ok(cache);
    }
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
        .collect();
    paths.sort();
    for path in paths {
        let text = std::fs::read_to_string(&path)?;
        let questionnaire: Questionnaire = serde_json::from_str(&text)
            .with_context(|| format!("bad questionnaire {}", path.display()))?;
        cache.insert(questionnaire.prompt_hash.clone(), questionnaire);
    }
    Ok(cache)
}

/// Serialize the built-in default ontology in the documented file format,
/// for `--emit-default-ontology`.
pub fn default_ontology_toml() -> String {
    let ontology = ninefold::ontology::default_ontology();
    // Top-level keys must precede the role tables in TOML.
    let mut out = String::from("version = 1\n\nmask = [\n");
    for (role, aspect) in ontology.relevant_pairs() {
        out.push_str(&format!("  [\"{role}\", \"{aspect}\"],\n"));
    }
    out.push_str("]\n\n");
    for role in ontology.roles() {
        out.push_str(&format!(
            "[[roles]]\ntoken = \"{}\"\nname = \"{}\"\ncanonical = {}\n\n",
            role.token, role.name, role.canonical
        ));
    }
    out
}

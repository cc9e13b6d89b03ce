//! End-to-end run orchestration: resolve a corpus against the configured
//! models and backend, route every prompt to its aspect's scorer, and emit
//! tensor records, the cost ledger, and reports into the run directory.
//!
//! Per-cell failures (missing evidence, bad ground-truth parameters,
//! adapter hiccups) are recorded as failed cells and the run continues;
//! only configuration and IO problems abort. Output ordering is fixed to
//! (model, prompt) with sequential execution, so two runs of the same
//! config and seed produce byte-identical records.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use ninefold::features::{Capability, CapabilitySet, FeatureBackend, ImageRef, TextEmbedder};
use ninefold::hwpq::{self, BooleanProbe, QuestionGenerator};
use ninefold::metrics::{
    self, cpa_score, cse_con, cse_cov, cse_coverage_matrix, cse_score, find_anchor, gc_score,
    li_infer_direction, li_score, psc_score, tr_score, MetricScore,
};
use ninefold::ontology::Aspect;
use ninefold::prompt::StructuredPrompt;
use ninefold::synthetic::SyntheticBackend;
use ninefold::tensor::{CellCoords, EvaluationTensor};
use ninefold::{EmbeddingSpace, LightAnchor, Ontology, QuestionnaireCache};

use crate::clients::{
    CommandAnswerer, CommandBackend, CommandImageGenerator, CommandTextClient, ImageGenerator,
    StubAnswerer, StubImageGenerator, StubQuestionGenerator,
};
use crate::config::{AdapterKind, BackendSection, RunConfig};
use crate::formats::{
    self, read_corpus, read_fixtures, write_questionnaire, write_records, Corpus, TensorRecord,
};
use crate::ledger::CostLedger;
use crate::report;

#[derive(Debug)]
pub struct RunOutcome {
    pub run_id: String,
    pub config_hash: String,
    pub out_dir: PathBuf,
    pub records_written: usize,
    pub failed_cells: usize,
    pub budget_warning: Option<String>,
    pub total_cost_usd: f64,
}

/// Everything resolved from configuration and ready to execute.
pub struct Pipeline {
    config: RunConfig,
    ontology: Ontology,
    anchors: Vec<LightAnchor>,
    backend: Box<dyn FeatureBackend>,
    embedder: SyntheticBackend,
    generators: BTreeMap<String, Box<dyn ImageGenerator>>,
    question_generator: Box<dyn QuestionGenerator>,
    answerer: Box<dyn BooleanProbe>,
}

impl Pipeline {
    pub fn from_config(config: RunConfig) -> Result<Self> {
        let ontology = match &config.ontology.path {
            Some(path) => formats::read_ontology(path)?,
            None => ninefold::ontology::default_ontology(),
        };
        let anchors = match &config.ontology.anchors {
            Some(path) => formats::read_anchors(path)?,
            None => metrics::default_anchors(),
        };
        let backend: Box<dyn FeatureBackend> = match &config.backend {
            BackendSection::Synthetic { fixtures } => {
                let scenes = match fixtures {
                    Some(path) => read_fixtures(path)?,
                    None => Vec::new(),
                };
                Box::new(
                    SyntheticBackend::from_fixtures(scenes)
                        .map_err(|e| anyhow::anyhow!("{e}"))?,
                )
            }
            BackendSection::Command { providers } => {
                let specs: Vec<(Vec<String>, Vec<String>)> = providers
                    .iter()
                    .map(|p| (p.capabilities.clone(), p.argv.clone()))
                    .collect();
                Box::new(CommandBackend::from_specs(&specs)?)
            }
        };
        let mut generators: BTreeMap<String, Box<dyn ImageGenerator>> = BTreeMap::new();
        for model in &config.models {
            let generator: Box<dyn ImageGenerator> = match &model.adapter {
                AdapterKind::Stub => Box::new(StubImageGenerator {
                    model_id: model.id.clone(),
                    price_per_call: model.price_per_call,
                }),
                AdapterKind::Command { argv } => {
                    Box::new(CommandImageGenerator { argv: argv.clone() })
                }
            };
            generators.insert(model.id.clone(), generator);
        }
        let question_generator: Box<dyn QuestionGenerator> =
            match &config.hwpq.generator.adapter {
                AdapterKind::Stub => Box::new(StubQuestionGenerator),
                AdapterKind::Command { argv } => {
                    Box::new(CommandTextClient { argv: argv.clone() })
                }
            };
        let answerer: Box<dyn BooleanProbe> = match &config.hwpq.answerer.adapter {
            AdapterKind::Stub => Box::new(StubAnswerer),
            AdapterKind::Command { argv } => Box::new(CommandAnswerer { argv: argv.clone() }),
        };
        Ok(Self {
            config,
            ontology,
            anchors,
            backend,
            embedder: SyntheticBackend::procedural(),
            generators,
            question_generator,
            answerer,
        })
    }

    pub fn ontology(&self) -> &Ontology {
        &self.ontology
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    /// Generate (or reuse) the image for one (model, prompt) pair. Outcomes
    /// are cached content-addressed under `images/`, so re-scoring never
    /// regenerates.
    fn obtain_image(
        &self,
        images_dir: &Path,
        model_id: &str,
        prompt: &StructuredPrompt,
        ledger: &mut CostLedger,
    ) -> Result<String> {
        let key = ninefold::fnv64_hex(
            format!("{model_id}|{}|{}", prompt.serialize(), self.config.run.seed).as_bytes(),
        );
        let cache_path = images_dir.join(format!("{key}.json"));
        if cache_path.exists() {
            let cached: crate::clients::GenOutcome =
                serde_json::from_str(&std::fs::read_to_string(&cache_path)?)
                    .context("corrupt image cache entry")?;
            return Ok(cached.image_id);
        }
        let generator = self
            .generators
            .get(model_id)
            .context("unknown model id")?;
        let outcome = generator.generate(&prompt.core_text, self.config.run.seed)?;
        ledger.charge(&format!("t2i:{model_id}"), 1, outcome.cost_usd);
        std::fs::write(&cache_path, serde_json::to_string(&outcome)?)?;
        Ok(outcome.image_id)
    }

    fn needs_for(aspect: Aspect) -> CapabilitySet {
        match aspect {
            Aspect::Tr => CapabilitySet::of(&[Capability::Ocr]),
            Aspect::Li => CapabilitySet::of(&[Capability::Objects, Capability::Shadows]),
            Aspect::Cse => CapabilitySet::of(&[Capability::Embeddings]),
            Aspect::Cpa => CapabilitySet::of(&[Capability::Persons]),
            Aspect::Psc => CapabilitySet::of(&[Capability::Objects, Capability::Depth]),
            Aspect::Gc => CapabilitySet::of(&[Capability::GcCues]),
            Aspect::Sf | Aspect::Cul | Aspect::Ma => CapabilitySet::EMPTY,
        }
    }

    /// Score one prompt against one image. Never errors: every problem
    /// becomes a failed score for that cell.
    fn score_cell(
        &self,
        prompt: &StructuredPrompt,
        image: &ImageRef,
        cache: &mut QuestionnaireCache,
        ledger: &mut CostLedger,
    ) -> MetricScore {
        let aspect = prompt.aspect;
        if !aspect.is_deterministic() {
            return self.score_questionnaire(prompt, image, cache, ledger);
        }
        let needs = Self::needs_for(aspect);
        let bundle = match self.backend.extract(image, needs) {
            Ok(bundle) => bundle,
            Err(e) => return MetricScore::failed(aspect, format!("extraction failed: {e}")),
        };
        if let Err(e) = bundle.validate() {
            return MetricScore::failed(aspect, format!("inconsistent bundle: {e}"));
        }
        match aspect {
            Aspect::Tr => {
                let Some(gt) = prompt.param("text") else {
                    return MetricScore::failed(aspect, "missing ground-truth parameter `text`");
                };
                if gt.trim().is_empty() {
                    return MetricScore::failed(aspect, "ground-truth `text` is blank");
                }
                match bundle.ocr.ready() {
                    Some(ocr) => tr_score(ocr, gt, self.config.metrics.tr_char_weight),
                    None => MetricScore::failed(aspect, bundle_failure(&bundle.ocr)),
                }
            }
            Aspect::Li => {
                let Some(phrase) = prompt.param("light") else {
                    return MetricScore::failed(aspect, "missing ground-truth parameter `light`");
                };
                let Some(anchor) = find_anchor(&self.anchors, phrase) else {
                    return MetricScore::failed(
                        aspect,
                        format!("`{phrase}` is not a registered light anchor"),
                    );
                };
                match li_infer_direction(&bundle) {
                    Ok(direction) => li_score(&direction, &anchor.direction)
                        .unwrap_or_else(|e| MetricScore::failed(aspect, e.to_string())),
                    Err(e) => MetricScore::failed(aspect, e.to_string()),
                }
            }
            Aspect::Cse => {
                let Some(subs) = prompt.param("subs") else {
                    return MetricScore::failed(aspect, "missing ground-truth parameter `subs`");
                };
                let sub_prompts: Vec<&str> =
                    subs.split(';').map(str::trim).filter(|s| !s.is_empty()).collect();
                if sub_prompts.is_empty() {
                    return MetricScore::failed(aspect, "parameter `subs` lists no sub-prompts");
                }
                let Some(embeddings) = bundle.embeddings.ready() else {
                    return MetricScore::failed(aspect, bundle_failure(&bundle.embeddings));
                };
                let regions: Vec<_> = embeddings
                    .iter()
                    .filter(|(_, e)| e.space_tag == EmbeddingSpace::JointTextImage)
                    .map(|(_, e)| e.clone())
                    .collect();
                if regions.is_empty() {
                    return MetricScore::failed(aspect, "no joint-space region embeddings");
                }
                let prompt_vectors: Vec<_> = sub_prompts
                    .iter()
                    .map(|s| self.embedder.embed_text(s))
                    .collect();
                let matrix = cse_coverage_matrix(&regions, &prompt_vectors);
                let cov = match cse_cov(&matrix) {
                    Ok(cov) => cov,
                    Err(e) => return MetricScore::failed(aspect, e.to_string()),
                };
                let subjects: Vec<_> = embeddings
                    .iter()
                    .filter(|(_, e)| e.space_tag == EmbeddingSpace::SelfSupervisedImage)
                    .map(|(_, e)| e.clone())
                    .collect();
                let con = cse_con(&subjects);
                cse_score(cov, con, subjects.len() >= 2)
            }
            Aspect::Cpa => {
                let Some(count_text) = prompt.param("count") else {
                    return MetricScore::failed(aspect, "missing ground-truth parameter `count`");
                };
                let Ok(count) = count_text.parse::<usize>() else {
                    return MetricScore::failed(aspect, format!("bad `count` value `{count_text}`"));
                };
                let postures = match parse_labels(prompt.param("postures"), |s| {
                    ninefold::features::PostureLabel::from_token(s)
                }) {
                    Ok(labels) => labels,
                    Err(bad) => {
                        return MetricScore::failed(aspect, format!("unknown posture `{bad}`"))
                    }
                };
                let expressions = match parse_labels(prompt.param("expressions"), |s| {
                    ninefold::features::ExpressionLabel::from_token(s)
                }) {
                    Ok(labels) => labels,
                    Err(bad) => {
                        return MetricScore::failed(aspect, format!("unknown expression `{bad}`"))
                    }
                };
                let Some(persons) = bundle.persons.ready() else {
                    return MetricScore::failed(aspect, bundle_failure(&bundle.persons));
                };
                let gt = metrics::CpaGroundTruth::from_labels(count, &postures, &expressions);
                cpa_score(persons, &gt, &self.config.metrics.cpa_weights)
            }
            Aspect::Psc => psc_score(
                &bundle,
                self.config.metrics.psc_epsilon,
                self.config.metrics.psc_attachment_threshold,
            ),
            Aspect::Gc => match bundle.gc_cues.ready() {
                Some(cues) => gc_score(cues, &self.config.metrics.gc),
                None => MetricScore::failed(aspect, bundle_failure(&bundle.gc_cues)),
            },
            Aspect::Sf | Aspect::Cul | Aspect::Ma => unreachable!("routed above"),
        }
    }

    fn score_questionnaire(
        &self,
        prompt: &StructuredPrompt,
        image: &ImageRef,
        cache: &mut QuestionnaireCache,
        ledger: &mut CostLedger,
    ) -> MetricScore {
        let aspect = prompt.aspect;
        let newly_generated = cache.get(&prompt.content_hash()).is_none();
        let questionnaire = match hwpq::generate_questionnaire(
            prompt,
            self.question_generator.as_ref(),
            self.config.metrics.hwpq_weight_tolerance,
            cache,
        ) {
            Ok(q) => q,
            Err(e) => return MetricScore::failed(aspect, e.to_string()),
        };
        if newly_generated {
            ledger.charge("llm:questionnaire", 1, self.config.hwpq.generator.price_per_call);
        }
        let k = self.config.hwpq.k;
        let sheet = match hwpq::administer(image, &questionnaire, self.answerer.as_ref(), k) {
            Ok(sheet) => sheet,
            Err(e) => return MetricScore::failed(aspect, e.to_string()),
        };
        let queries = (questionnaire.pair_count() * 2) as u64 * u64::from(k);
        ledger.charge(
            "vlm:answers",
            queries,
            self.config.hwpq.answerer.price_per_call * queries as f64,
        );
        hwpq::score(aspect, &questionnaire, &sheet)
            .unwrap_or_else(|e| MetricScore::failed(aspect, e.to_string()))
    }

    /// Execute the full pipeline and write all artifacts.
    pub fn run(&self) -> Result<RunOutcome> {
        self.execute(true)
    }

    /// Score only: records and ledger, no report artifacts.
    pub fn score_only(&self) -> Result<RunOutcome> {
        self.execute(false)
    }

    /// Offline phase on its own: generate and persist questionnaires for
    /// every questionnaire-scored prompt in the corpus. Returns how many
    /// distinct questionnaires exist afterwards.
    pub fn generate_questionnaires(&self, out_dir: &Path) -> Result<usize> {
        let (corpus, errors) = read_corpus(&self.config.corpus.path, &self.ontology)?;
        if !errors.is_empty() {
            anyhow::bail!("corpus has {} malformed prompt(s)", errors.len());
        }
        let mut cache = formats::load_questionnaires(out_dir)?;
        for (_, prompt) in &corpus.prompts {
            if prompt.aspect.is_deterministic() {
                continue;
            }
            hwpq::generate_questionnaire(
                prompt,
                self.question_generator.as_ref(),
                self.config.metrics.hwpq_weight_tolerance,
                &mut cache,
            )
            .map_err(|e| anyhow::anyhow!("{}: {e}", prompt.serialize()))?;
        }
        for (_, questionnaire) in cache.iter() {
            write_questionnaire(out_dir, questionnaire)?;
        }
        Ok(cache.len())
    }

    fn execute(&self, emit_report: bool) -> Result<RunOutcome> {
        let out_dir = self.config.run.out_dir.clone();
        let images_dir = out_dir.join("images");
        let questionnaires_dir = out_dir.join("questionnaires");
        std::fs::create_dir_all(&images_dir)?;
        std::fs::create_dir_all(&questionnaires_dir)?;

        let (corpus, errors) = read_corpus(&self.config.corpus.path, &self.ontology)?;
        if !errors.is_empty() {
            let listing: Vec<String> = errors.iter().map(|e| e.to_string()).collect();
            anyhow::bail!(
                "corpus has {} malformed prompt(s):\n{}",
                errors.len(),
                listing.join("\n")
            );
        }
        if corpus.prompts.is_empty() {
            anyhow::bail!("corpus contains no prompts");
        }

        let run_id = self.config.run_id();
        let config_hash = self.config.content_hash();
        let set_tag = self.config.corpus.set;
        // Prompt ids are namespaced by set so core and hard records from
        // one configuration can aggregate into a single tensor.
        let corpus: Corpus = Corpus {
            prompts: corpus
                .prompts
                .into_iter()
                .map(|(id, p)| (format!("{set_tag}-{id}"), p))
                .collect(),
        };
        let mut ledger = CostLedger::new();
        let mut cache = formats::load_questionnaires(&questionnaires_dir)?;
        let mut tensor = EvaluationTensor::new(self.ontology.clone());
        let mut records: Vec<TensorRecord> = Vec::new();
        let mut failed_cells = 0usize;

        let mut model_ids: Vec<String> = self.generators.keys().cloned().collect();
        model_ids.sort();
        for model_id in &model_ids {
            for (prompt_id, prompt) in &corpus.prompts {
                let score = match self.obtain_image(&images_dir, model_id, prompt, &mut ledger) {
                    Ok(image_id) => {
                        let image = ImageRef::Id(image_id);
                        self.score_cell(prompt, &image, &mut cache, &mut ledger)
                    }
                    Err(e) => MetricScore::failed(
                        prompt.aspect,
                        format!("image generation failed: {e}"),
                    ),
                };
                if !score.is_ok() {
                    failed_cells += 1;
                }
                let coords =
                    CellCoords::new(prompt.role.clone(), prompt.aspect, model_id, prompt_id);
                records.push(TensorRecord::from_score(
                    &run_id,
                    &config_hash,
                    &coords,
                    set_tag,
                    &score,
                ));
                tensor
                    .record(coords, set_tag, score)
                    .map_err(|e| anyhow::anyhow!("tensor write failed: {e}"))?;
            }
        }

        for (_, questionnaire) in cache.iter() {
            write_questionnaire(&questionnaires_dir, questionnaire)?;
        }
        write_records(&out_dir.join("records.jsonl"), &records)?;
        ledger.write(&out_dir.join("ledger.jsonl"))?;

        let projected = ledger.projected_per_1000(corpus.prompts.len());
        let budget = self.config.run.budget_usd_per_1000;
        let budget_warning = (projected > budget).then(|| {
            format!(
                "projected cost ${projected:.4} per 1,000 prompts exceeds budget ${budget:.4}"
            )
        });

        if emit_report {
            let summary = report::Summary::build(
                &run_id,
                &config_hash,
                &tensor,
                &ledger,
                projected,
                budget,
                budget_warning.clone(),
                records.len(),
                failed_cells,
            )?;
            std::fs::write(
                out_dir.join("report.json"),
                serde_json::to_string_pretty(&summary)?,
            )?;
            std::fs::write(out_dir.join("report.txt"), report::render_text(&summary))?;
        }

        Ok(RunOutcome {
            run_id,
            config_hash,
            out_dir,
            records_written: records.len(),
            failed_cells,
            budget_warning,
            total_cost_usd: ledger.total_usd(),
        })
    }
}

fn bundle_failure<T>(slot: &ninefold::CapabilityResult<T>) -> String {
    match slot.failure() {
        Some(why) => format!("extraction failed: {why}"),
        None => "capability was not requested".to_string(),
    }
}

fn parse_labels<L>(
    param: Option<&str>,
    parse: impl Fn(&str) -> Option<L>,
) -> Result<Vec<L>, String> {
    let Some(text) = param else {
        return Ok(Vec::new());
    };
    let mut labels = Vec::new();
    for token in text.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        match parse(token) {
            Some(label) => labels.push(label),
            None => return Err(token.to_string()),
        }
    }
    Ok(labels)
}

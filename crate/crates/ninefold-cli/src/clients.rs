//! Adapters for the three external services a run may call: the image
//! generator, the questionnaire-generation client, and the boolean answer
//! client — each available as a deterministic in-process stub (for fully
//! offline runs) or as a local child process speaking JSON on stdin/stdout.
//! Command adapters inherit the environment, so credentials travel via env
//! vars without appearing in any config file.

use std::io::Write;
use std::process::{Command, Stdio};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use ninefold::features::{Capability, CapabilityResult, CapabilitySet, ExtractError, FeatureBackend, FeatureBundle, ImageRef};
use ninefold::hwpq::{BooleanProbe, ClientError, QuestionGenerator};
use ninefold::synthetic::{bundle_from_scene, SceneFixture};
use ninefold::{fnv64, fnv64_hex, SplitMix64};

pub const COMMAND_ATTEMPTS: u32 = 3;
const BACKOFF_BASE_MS: u64 = 50;

/// What a generator adapter returns for one prompt.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenOutcome {
    pub image_id: String,
    #[serde(default)]
    pub cost_usd: f64,
    #[serde(default)]
    pub latency_ms: u64,
}

/// A text-to-image model adapter.
pub trait ImageGenerator {
    fn generate(&self, prompt_core: &str, seed: u64) -> Result<GenOutcome>;
}

/// Deterministic offline generator: the image id is a digest of
/// (model, prompt, seed), which the synthetic backend expands into a scene.
pub struct StubImageGenerator {
    pub model_id: String,
    pub price_per_call: f64,
}

impl ImageGenerator for StubImageGenerator {
    fn generate(&self, prompt_core: &str, seed: u64) -> Result<GenOutcome> {
        let key = format!("gen|{}|{}|{}", self.model_id, prompt_core, seed);
        Ok(GenOutcome {
            image_id: format!("img-{}", fnv64_hex(key.as_bytes())),
            cost_usd: self.price_per_call,
            latency_ms: 0,
        })
    }
}

fn run_command(argv: &[String], request: &str) -> Result<String> {
    let (program, args) = argv.split_first().context("adapter argv is empty")?;
    let mut last_err = None;
    for attempt in 0..COMMAND_ATTEMPTS {
        if attempt > 0 {
            std::thread::sleep(Duration::from_millis(BACKOFF_BASE_MS << (attempt - 1)));
        }
        let spawn = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn();
        let mut child = match spawn {
            Ok(child) => child,
            Err(e) => {
                last_err = Some(anyhow::anyhow!("cannot spawn {program}: {e}"));
                continue;
            }
        };
        if let Some(stdin) = child.stdin.as_mut() {
            if let Err(e) = stdin.write_all(request.as_bytes()) {
                last_err = Some(anyhow::anyhow!("cannot write to {program}: {e}"));
                continue;
            }
        }
        match child.wait_with_output() {
            Ok(output) if output.status.success() => {
                return Ok(String::from_utf8_lossy(&output.stdout).into_owned());
            }
            Ok(output) => {
                last_err = Some(anyhow::anyhow!(
                    "{program} exited with {}: {}",
                    output.status,
                    String::from_utf8_lossy(&output.stderr)
                ));
            }
            Err(e) => last_err = Some(anyhow::anyhow!("{program} failed: {e}")),
        }
    }
    Err(last_err.unwrap_or_else(|| anyhow::anyhow!("adapter failed")))
}

/// Generator adapter as a local process. Request and response are one JSON
/// object each: `{"prompt": ..., "seed": ...}` in,
/// `{"image_id": ..., "cost_usd": ..., "latency_ms": ...}` out.
pub struct CommandImageGenerator {
    pub argv: Vec<String>,
}

impl ImageGenerator for CommandImageGenerator {
    fn generate(&self, prompt_core: &str, seed: u64) -> Result<GenOutcome> {
        let request = serde_json::json!({ "prompt": prompt_core, "seed": seed }).to_string();
        let response = run_command(&self.argv, &request)?;
        serde_json::from_str(&response).context("generator adapter returned invalid JSON")
    }
}

/// Deterministic offline questionnaire generator. The emitted questionnaire
/// is a pure function of the request text: four levels, two pairs each,
/// uniform weights, question text drawn from the prompt's words.
pub struct StubQuestionGenerator;

impl QuestionGenerator for StubQuestionGenerator {
    fn generate(&self, request: &str) -> Result<String, ClientError> {
        let prompt_line = request
            .lines()
            .rev()
            .find(|l| !l.trim().is_empty())
            .unwrap_or("")
            .trim_start_matches("Prompt:")
            .trim()
            .to_string();
        let mut words: Vec<&str> = prompt_line
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| w.len() > 2)
            .collect();
        if words.is_empty() {
            words.push("scene");
        }
        let level_names = ninefold::hwpq::LEVEL_NAMES;
        let mut rng = SplitMix64::new(fnv64(prompt_line.as_bytes()));
        let levels: Vec<serde_json::Value> = (0..4)
            .map(|l| {
                let pairs: Vec<serde_json::Value> = (0..2)
                    .map(|p| {
                        let word = words[(rng.next_below(words.len() as u64)) as usize];
                        serde_json::json!({
                            "positive": format!("Q{l}.{p}: does the image clearly show {word}?"),
                            "negative": format!("Q{l}.{p}: is {word} missing or contradicted?"),
                            "question_weight": 0.5,
                        })
                    })
                    .collect();
                serde_json::json!({
                    "name": level_names[l],
                    "level_weight": 0.25,
                    "pairs": pairs,
                })
            })
            .collect();
        Ok(serde_json::json!({ "levels": levels }).to_string())
    }
}

/// Questionnaire generation over a local process:
/// `{"kind": "generate", "request": ...}` in, `{"text": ...}` out.
pub struct CommandTextClient {
    pub argv: Vec<String>,
}

#[derive(Deserialize)]
struct TextResponse {
    text: String,
}

impl QuestionGenerator for CommandTextClient {
    fn generate(&self, request: &str) -> Result<String, ClientError> {
        let body = serde_json::json!({ "kind": "generate", "request": request }).to_string();
        let response = run_command(&self.argv, &body).map_err(|e| ClientError(e.to_string()))?;
        let parsed: TextResponse =
            serde_json::from_str(&response).map_err(|e| ClientError(e.to_string()))?;
        Ok(parsed.text)
    }
}

/// Deterministic offline boolean answerer: the reply is a pure function of
/// (image id, question), biased toward "true" so stub runs resemble a
/// passable model rather than a catastrophic one.
pub struct StubAnswerer;

impl BooleanProbe for StubAnswerer {
    fn answer(&self, image: &ImageRef, question: &str) -> Result<String, ClientError> {
        let image_key = match image {
            ImageRef::Id(id) => fnv64(id.as_bytes()),
            ImageRef::Bytes(bytes) => fnv64(bytes),
        };
        let h = fnv64(format!("{image_key}|{question}").as_bytes());
        // Negative questions read as probing a failure; answer them "no"
        // more often than "yes".
        let looks_negative = question.contains("missing") || question.contains("contradict");
        let threshold = if looks_negative { 4 } else { 1 };
        Ok(if h % 5 >= threshold { "true".into() } else { "false".into() })
    }
}

/// Boolean probing over a local process:
/// `{"kind": "answer", "image_id": ..., "question": ...}` in,
/// `{"text": ...}` out.
pub struct CommandAnswerer {
    pub argv: Vec<String>,
}

impl BooleanProbe for CommandAnswerer {
    fn answer(&self, image: &ImageRef, question: &str) -> Result<String, ClientError> {
        let image_id = match image {
            ImageRef::Id(id) => id.clone(),
            ImageRef::Bytes(_) => "<inline bytes>".to_string(),
        };
        let body = serde_json::json!({
            "kind": "answer",
            "image_id": image_id,
            "question": question,
        })
        .to_string();
        let response = run_command(&self.argv, &body).map_err(|e| ClientError(e.to_string()))?;
        let parsed: TextResponse =
            serde_json::from_str(&response).map_err(|e| ClientError(e.to_string()))?;
        Ok(parsed.text)
    }
}

/// Feature extraction via local adapter processes. Each provider serves a
/// set of capabilities and replies to `{"image_id": ..., "capabilities":
/// [...]}` with a scene JSON matching the fixture schema; the bundle is
/// fabricated from that scene exactly as the synthetic backend would.
/// Keeping providers separate lets fragile analyses (expression
/// classification, say) run isolated in their own process.
pub struct CommandBackend {
    pub providers: Vec<(CapabilitySet, Vec<String>)>,
}

impl CommandBackend {
    pub fn from_specs(specs: &[(Vec<String>, Vec<String>)]) -> Result<Self> {
        let mut providers = Vec::new();
        for (tokens, argv) in specs {
            let mut set = CapabilitySet::EMPTY;
            for token in tokens {
                let cap = Capability::ALL
                    .into_iter()
                    .find(|c| c.token() == token)
                    .with_context(|| format!("unknown capability `{token}`"))?;
                set = set.with(cap);
            }
            if argv.is_empty() {
                bail!("provider argv is empty");
            }
            providers.push((set, argv.clone()));
        }
        Ok(Self { providers })
    }
}

impl FeatureBackend for CommandBackend {
    fn extract(&self, image: &ImageRef, needs: CapabilitySet) -> Result<FeatureBundle, ExtractError> {
        let image_id = match image {
            ImageRef::Id(id) => id.clone(),
            ImageRef::Bytes(_) => {
                return Err(ExtractError::DecodeError(
                    "command backend takes image ids, not inline bytes".into(),
                ))
            }
        };
        let mut bundle = FeatureBundle::default();
        for cap in needs.iter() {
            let provider = self.providers.iter().find(|(set, _)| set.contains(cap));
            let Some((provider_caps, argv)) = provider else {
                return Err(ExtractError::BackendUnavailable(cap));
            };
            // One call per provider fills all its requested capabilities.
            let wanted: Vec<&str> = provider_caps
                .iter()
                .filter(|c| needs.contains(*c))
                .map(|c| c.token())
                .collect();
            let request = serde_json::json!({
                "image_id": image_id,
                "capabilities": wanted,
            })
            .to_string();
            let fill = |bundle: &mut FeatureBundle, result: Result<SceneFixture>| {
                match result {
                    Ok(scene) => {
                        let sub = bundle_from_scene(&scene, CapabilitySet::of(&[cap]));
                        merge_capability(bundle, &sub, cap);
                    }
                    Err(e) => {
                        set_failed(bundle, cap, format!("adapter failed: {e}"));
                    }
                }
            };
            if capability_slot_filled(&bundle, cap) {
                continue;
            }
            let scene = run_command(argv, &request).and_then(|response| {
                serde_json::from_str::<SceneFixture>(&response)
                    .context("adapter returned invalid scene JSON")
                    .and_then(|s| {
                        s.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
                        Ok(s)
                    })
            });
            fill(&mut bundle, scene);
        }
        Ok(bundle)
    }

    fn reentrant(&self) -> bool {
        // Each extraction spawns fresh processes; nothing shared.
        true
    }
}

fn capability_slot_filled(bundle: &FeatureBundle, cap: Capability) -> bool {
    match cap {
        Capability::Ocr => bundle.ocr.is_requested(),
        Capability::Objects => bundle.objects.is_requested(),
        Capability::Depth => bundle.depth.is_requested(),
        Capability::Shadows => bundle.shadows.is_requested(),
        Capability::Embeddings => bundle.embeddings.is_requested(),
        Capability::Persons => bundle.persons.is_requested(),
        Capability::GcCues => bundle.gc_cues.is_requested(),
    }
}

fn merge_capability(into: &mut FeatureBundle, from: &FeatureBundle, cap: Capability) {
    match cap {
        Capability::Ocr => into.ocr = from.ocr.clone(),
        Capability::Objects => into.objects = from.objects.clone(),
        Capability::Depth => into.depth = from.depth.clone(),
        Capability::Shadows => into.shadows = from.shadows.clone(),
        Capability::Embeddings => into.embeddings = from.embeddings.clone(),
        Capability::Persons => into.persons = from.persons.clone(),
        Capability::GcCues => into.gc_cues = from.gc_cues.clone(),
    }
}

fn set_failed(bundle: &mut FeatureBundle, cap: Capability, why: String) {
    match cap {
        Capability::Ocr => bundle.ocr = CapabilityResult::Failed(why),
        Capability::Objects => bundle.objects = CapabilityResult::Failed(why),
        Capability::Depth => bundle.depth = CapabilityResult::Failed(why),
        Capability::Shadows => bundle.shadows = CapabilityResult::Failed(why),
        Capability::Embeddings => bundle.embeddings = CapabilityResult::Failed(why),
        Capability::Persons => bundle.persons = CapabilityResult::Failed(why),
        Capability::GcCues => bundle.gc_cues = CapabilityResult::Failed(why),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stub_generator_is_deterministic_and_seed_sensitive() {
        let generator = StubImageGenerator {
            model_id: "m1".into(),
            price_per_call: 0.0005,
        };
        let a = generator.generate("a cat", 42).unwrap();
        let b = generator.generate("a cat", 42).unwrap();
        let c = generator.generate("a cat", 43).unwrap();
        assert_eq!(a.image_id, b.image_id);
        assert_ne!(a.image_id, c.image_id);
        assert_eq!(a.cost_usd, 0.0005);
    }

    #[test]
    fn stub_question_generator_emits_valid_questionnaires() {
        let request = format!("{}\n", ninefold::hwpq::GENERATION_TEMPLATE.replace("{PROMPT}", "[GD|SF] a watercolor castle"));
        let text = StubQuestionGenerator.generate(&request).unwrap();
        let questionnaire: ninefold::Questionnaire = serde_json::from_str(&text).unwrap();
        assert_eq!(questionnaire.levels().len(), 4);
        assert!(questionnaire.check_weights(1e-9));
        // Deterministic.
        assert_eq!(text, StubQuestionGenerator.generate(&request).unwrap());
    }

    #[test]
    fn stub_answerer_is_deterministic_boolean() {
        let image = ImageRef::id("img-1");
        let a = StubAnswerer.answer(&image, "is there a cat?").unwrap();
        let b = StubAnswerer.answer(&image, "is there a cat?").unwrap();
        assert_eq!(a, b);
        assert!(a == "true" || a == "false");
    }

    #[test]
    fn command_roundtrip_via_shell() {
        // A minimal adapter: echoes a fixed generator response.
        let argv = vec![
            "/bin/sh".to_string(),
            "-c".to_string(),
            r#"cat > /dev/null; printf '{"image_id": "img-x", "cost_usd": 0.25}'"#.to_string(),
        ];
        let generator = CommandImageGenerator { argv };
        let outcome = generator.generate("prompt", 1).unwrap();
        assert_eq!(outcome.image_id, "img-x");
        assert_eq!(outcome.cost_usd, 0.25);
    }

    #[test]
    fn command_backend_serves_scene_json() {
        let scene = serde_json::json!({
            "id": "adapter-scene",
            "width": 64,
            "height": 64,
            "objects": [],
            "gc_cues": {
                "normals_dispersion": 0.1,
                "curvature_energy": 0.1,
                "highlight_breaks": 0.0,
                "contour_fragmentation": 0.1,
                "texture_irregularity": 0.1,
                "anomaly_score": 0.05
            }
        });
        let argv = vec![
            "/bin/sh".to_string(),
            "-c".to_string(),
            format!("cat > /dev/null; printf '%s' '{scene}'"),
        ];
        let backend = CommandBackend::from_specs(&[(
            vec!["depth".into(), "gc_cues".into()],
            argv,
        )])
        .unwrap();
        let bundle = backend
            .extract(
                &ImageRef::id("whatever"),
                CapabilitySet::of(&[Capability::Depth, Capability::GcCues]),
            )
            .unwrap();
        let depth = bundle.depth.ready().unwrap();
        assert_eq!((depth.width(), depth.height()), (64, 64));
        assert!(bundle.gc_cues.ready().is_some());
        // Unserved capability is a hard error, not a silent absence.
        assert!(matches!(
            backend.extract(&ImageRef::id("x"), CapabilitySet::of(&[Capability::Ocr])),
            Err(ExtractError::BackendUnavailable(Capability::Ocr))
        ));
    }

    #[test]
    fn failing_adapter_becomes_explicit_capability_failure() {
        let argv = vec![
            "/bin/sh".to_string(),
            "-c".to_string(),
            "cat > /dev/null; printf 'not json'".to_string(),
        ];
        let backend =
            CommandBackend::from_specs(&[(vec!["depth".into()], argv)]).unwrap();
        let bundle = backend
            .extract(&ImageRef::id("x"), CapabilitySet::of(&[Capability::Depth]))
            .unwrap();
        assert!(bundle.depth.failure().unwrap().contains("adapter failed"));
    }
}

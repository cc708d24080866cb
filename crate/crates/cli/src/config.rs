//! Run configuration: one TOML file with a section per subsystem, every
//! field defaulted, CLI flags overriding file values.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use pdgen_core::backend::prompts;
use pdgen_core::backend::remote::RemoteBackend;
use pdgen_core::backend::scripted::rules::RulePack;
use pdgen_core::backend::scripted::ScriptedBackend;
use pdgen_core::backend::{BackendConfig, BackendKind, ModelBackend};
use pdgen_core::domain::SearchParams;
use pdgen_core::prototype::AblationFlags;
use pdgen_core::synthetic::SimulateConfig;

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct RunConfig {
    pub search: SearchSection,
    pub backend: BackendSection,
    pub paths: PathsSection,
    pub flags: AblationFlags,
    pub run: RunSection,
    pub simulate: SimulateSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchSection {
    pub max_depth: u32,
    pub branching: u32,
    pub exploration_constant: f64,
    pub iterations: u32,
    pub plausibility_weight: f64,
    pub rollout_cap: u32,
    pub seed: u64,
}

impl Default for SearchSection {
    fn default() -> Self {
        let params = SearchParams::default();
        SearchSection {
            max_depth: params.max_depth,
            branching: params.branching,
            exploration_constant: params.exploration_constant,
            iterations: params.iterations,
            plausibility_weight: params.plausibility_weight,
            rollout_cap: params.rollout_cap,
            seed: params.seed,
        }
    }
}

impl SearchSection {
    pub fn to_params(&self) -> SearchParams {
        SearchParams {
            max_depth: self.max_depth,
            branching: self.branching,
            exploration_constant: self.exploration_constant,
            iterations: self.iterations,
            plausibility_weight: self.plausibility_weight,
            rollout_cap: self.rollout_cap,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendSection {
    pub kind: BackendKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    /// Directory of `<operation>.txt` template overrides.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub templates_dir: Option<PathBuf>,
    /// Alternative rule pack for the scripted backend.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rulepack: Option<PathBuf>,
    pub request_timeout_s: u64,
}

impl Default for BackendSection {
    fn default() -> Self {
        BackendSection {
            kind: BackendKind::Scripted,
            endpoint: None,
            model_name: None,
            cache_dir: None,
            templates_dir: None,
            rulepack: None,
            request_timeout_s: 60,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsSection {
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
}

impl Default for PathsSection {
    fn default() -> Self {
        PathsSection {
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunSection {
    /// Worker-pool width; 0 means available parallelism.
    pub workers: usize,
    /// Group aggregation size.
    pub top_k: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            workers: 0,
            top_k: 3,
        }
    }
}

impl RunSection {
    pub fn effective_workers(&self) -> usize {
        if self.workers == 0 {
            pdgen_core::par::default_workers()
        } else {
            self.workers
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateSection {
    pub n_students: usize,
    pub n_past: usize,
    pub n_test: usize,
    pub rules_per_student: usize,
    pub shared_test: bool,
}

impl Default for SimulateSection {
    fn default() -> Self {
        let config = SimulateConfig::default();
        SimulateSection {
            n_students: config.n_students,
            n_past: config.n_past,
            n_test: config.n_test,
            rules_per_student: config.rules_per_student,
            shared_test: config.shared_test,
        }
    }
}

impl SimulateSection {
    pub fn to_config(&self, seed: u64) -> SimulateConfig {
        SimulateConfig {
            n_students: self.n_students,
            n_past: self.n_past,
            n_test: self.n_test,
            rules_per_student: self.rules_per_student,
            seed,
            shared_test: self.shared_test,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let config: RunConfig = toml::from_str(&text)
            .with_context(|| format!("cannot parse config file {}", path.display()))?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.search
            .to_params()
            .validate()
            .map_err(|e| anyhow::anyhow!("search config: {e}"))?;
        let backend_config = self.backend_config();
        backend_config
            .validate()
            .map_err(|e| anyhow::anyhow!("backend config: {e}"))?;
        Ok(())
    }

    fn backend_config(&self) -> BackendConfig {
        BackendConfig {
            kind: self.backend.kind,
            endpoint: self.backend.endpoint.clone(),
            model_name: self.backend.model_name.clone(),
            prompt_templates: BTreeMap::new(),
            cache_dir: self.backend.cache_dir.clone(),
            request_timeout_s: self.backend.request_timeout_s,
        }
    }

    /// Instantiates the configured backend.
    pub fn build_backend(&self) -> Result<Box<dyn ModelBackend>> {
        match self.backend.kind {
            BackendKind::Scripted => {
                let pack = match &self.backend.rulepack {
                    Some(path) => RulePack::load(path)
                        .with_context(|| format!("loading rule pack {}", path.display()))?,
                    None => RulePack::default_pack(),
                };
                Ok(Box::new(ScriptedBackend::new(pack)))
            }
            BackendKind::Remote => {
                let mut config = self.backend_config();
                if let Some(dir) = &self.backend.templates_dir {
                    config.prompt_templates = load_template_dir(dir)?;
                }
                let backend = RemoteBackend::from_config(&config)
                    .map_err(|e| anyhow::anyhow!("remote backend: {e}"))?;
                Ok(Box::new(backend))
            }
        }
    }

    /// The scripted rule pack in use (needed by simulate and the reports).
    pub fn rule_pack(&self) -> Result<RulePack> {
        match &self.backend.rulepack {
            Some(path) => RulePack::load(path)
                .with_context(|| format!("loading rule pack {}", path.display())),
            None => Ok(RulePack::default_pack()),
        }
    }
}

fn load_template_dir(dir: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    if !dir.is_dir() {
        bail!("prompt template directory {} does not exist", dir.display());
    }
    for op in [
        prompts::OP_EXTRACT_CONCEPTS,
        prompts::OP_PROPOSE_CHILDREN,
        prompts::OP_ROLLOUT,
        prompts::OP_SCORE_PLAUSIBILITY,
        prompts::OP_SUMMARIZE,
        prompts::OP_PREDICT_DISTRACTOR,
    ] {
        let path = dir.join(format!("{op}.txt"));
        if path.exists() {
            let text = std::fs::read_to_string(&path)
                .with_context(|| format!("reading template {}", path.display()))?;
            out.insert(op.to_string(), text);
        }
    }
    Ok(out)
}

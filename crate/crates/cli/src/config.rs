use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use treeseq::decode::DEFAULT_BEAM;
use treeseq::train::TrainConfig;

/// Everything a run needs, as read from a TOML file and then overridden by
/// command-line flags.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub decode: DecodeConfig,
    pub eval: EvalSection,
    pub output: OutputConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// word2vec text file used to initialize the input embeddings.
    pub embeddings: Option<PathBuf>,
    /// Prebuilt vocabularies; built from the training trees when absent.
    pub input_vocab: Option<PathBuf>,
    pub output_vocab: Option<PathBuf>,
    pub input_vocab_cap: usize,
    pub checkpoint: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub layers: usize,
    pub hidden: usize,
    pub embed: usize,
    /// "f32" or "f64".
    pub dtype: String,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            layers: 3,
            hidden: 256,
            embed: 256,
            dtype: "f32".into(),
        }
    }
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            train: None,
            dev: None,
            test: None,
            embeddings: None,
            input_vocab: None,
            output_vocab: None,
            input_vocab_cap: 90_000,
            checkpoint: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeConfig {
    pub beam: usize,
    pub max_len: Option<usize>,
    /// Decoding threads; 0 uses every available core.
    pub threads: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            beam: DEFAULT_BEAM,
            max_len: None,
            threads: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub delete_punct: bool,
    /// Length bounds for the per-bucket breakdown.
    pub buckets: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub buckets: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg.relative_to(path.parent().unwrap_or(Path::new(""))))
    }

    /// Resolves relative paths in the file against the file's directory.
    fn relative_to(mut self, base: &Path) -> Self {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&path);
                }
            }
        };
        let d = &mut self.data;
        for p in [
            &mut d.train,
            &mut d.dev,
            &mut d.test,
            &mut d.embeddings,
            &mut d.input_vocab,
            &mut d.output_vocab,
            &mut d.checkpoint,
            &mut self.output.dir,
            &mut self.output.report,
            &mut self.output.buckets,
        ] {
            fix(p);
        }
        self
    }

    pub fn validate_for_train(&self) -> Result<()> {
        self.train.validate()?;
        let Some(train) = &self.data.train else {
            bail!("no training treebank given (data.train or --train)")
        };
        let Some(dev) = &self.data.dev else {
            bail!("no dev treebank given (data.dev or --dev)")
        };
        for p in [Some(train), Some(dev), self.data.embeddings.as_ref()].into_iter().flatten() {
            if !p.is_file() {
                bail!("input file {} does not exist", p.display());
            }
        }
        if self.output.dir.is_none() {
            bail!("no output directory given (output.dir, --output-dir or TREESEQ_OUTPUT_DIR)");
        }
        if !matches!(self.model.dtype.as_str(), "f32" | "f64") {
            bail!("model.dtype must be f32 or f64, got {:?}", self.model.dtype);
        }
        if self.data.input_vocab.is_some() != self.data.output_vocab.is_some() {
            bail!("give both data.input_vocab and data.output_vocab, or neither");
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn write_resolved(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_toml()?).with_context(|| format!("writing {}", path.display()))
    }
}

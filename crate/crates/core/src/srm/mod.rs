//! State representation: telemetry → rule-based domain prompt → fused with
//! learnable prompt rows → frozen encoder → adapters into a shared latent
//! space, plus a second frozen encoder that serves as the distillation
//! teacher.

mod adapter;
mod distill;
mod encoder;
mod prompt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{Binding, Graph, NumericsError, Param, Tensor, Var};

pub use adapter::{train_adapters_offline, AdapterConfig, AdapterPair, AlignmentReport};
pub use distill::{distill_loss, distill_value};
pub use encoder::{encode, fuse, fuse_on_tape, EncoderConfig, FrozenEncoder, LearnablePrompts, PromptSequence};
pub use prompt::{generate_domain_prompt, DomainTelemetry, PromptRules, PromptVocab, PAD};

#[derive(Debug, Error, PartialEq)]
pub enum SrmError {
    #[error("vocabulary: {0}")]
    Vocab(String),
    #[error("token id {0} is outside the vocabulary")]
    UnknownToken(usize),
    #[error("sequence of {len} rows exceeds the encoder limit of {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("empty prompt sequence")]
    EmptySequence,
    #[error("adapter training needs at least one pair")]
    EmptyPairs,
    #[error("state has {found} features, expected {expected}")]
    StateDim { expected: usize, found: usize },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// How the policy input is assembled from the observation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SrmWiring {
    /// Student encoder over `[domain, learnable]`, adapters, distilled to the teacher.
    DualPromptKd,
    /// Teacher encoder over the domain prompt, adapters, nothing learnable.
    DomainPromptOnly,
    /// Student encoder over learnable rows alone, adapters, no distillation.
    LearnablePromptOnly,
    /// Teacher embedding concatenated with the raw observation.
    DomainEncoderRaw,
    /// Raw observation only.
    Bypass,
}

impl SrmWiring {
    pub fn uses_learnable_prompts(self) -> bool {
        matches!(self, SrmWiring::DualPromptKd | SrmWiring::LearnablePromptOnly)
    }

    pub fn uses_adapters(self) -> bool {
        matches!(
            self,
            SrmWiring::DualPromptKd | SrmWiring::DomainPromptOnly | SrmWiring::LearnablePromptOnly
        )
    }

    /// Whether the student encoder sees the domain prompt.
    pub fn student_sees_domain(self) -> bool {
        self == SrmWiring::DualPromptKd
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SrmConfig {
    pub n_learnable: usize,
    pub encoder: EncoderConfig,
    pub adapter: AdapterConfig,
    pub kd_temperature: f64,
    pub student_seed: u64,
    pub teacher_seed: u64,
    /// Forces distillation on or off; `None` follows the wiring.
    pub distill: Option<bool>,
    pub rules: PromptRules,
    pub vocab: PromptVocab,
}

impl Default for SrmConfig {
    fn default() -> Self {
        Self {
            n_learnable: 8,
            encoder: EncoderConfig::default(),
            adapter: AdapterConfig::default(),
            kd_temperature: 2.0,
            student_seed: 0x5EED_0001,
            teacher_seed: 0x5EED_0002,
            distill: None,
            rules: PromptRules::default(),
            vocab: PromptVocab::default(),
        }
    }
}

/// Output of [`Srm::represent`]: the aligned policy input `[1, dim]` and,
/// when distillation is active, the KD loss.
#[derive(Clone, Copy, Debug)]
pub struct Representation {
    pub aligned: Var,
    pub kd: Option<Var>,
}

#[derive(Debug)]
pub struct Srm {
    wiring: SrmWiring,
    config: SrmConfig,
    state_dim: usize,
    pub student: FrozenEncoder,
    pub teacher: FrozenEncoder,
    pub prompts: LearnablePrompts,
    pub adapters: AdapterPair,
}

impl Srm {
    pub fn new<R: Rng + ?Sized>(wiring: SrmWiring, config: SrmConfig, state_dim: usize, rng: &mut R) -> Self {
        let v = config.vocab.len();
        let student = FrozenEncoder::new("student", v, config.encoder.clone(), config.student_seed);
        let teacher = FrozenEncoder::new("teacher", v, config.encoder.clone(), config.teacher_seed);
        let d = config.encoder.d_model;
        let n = if wiring.uses_learnable_prompts() { config.n_learnable } else { 0 };
        let prompts = LearnablePrompts::new(n, d, rng);
        let adapters = AdapterPair::new(state_dim, d, &config.adapter, rng);
        Self {
            wiring,
            config,
            state_dim,
            student,
            teacher,
            prompts,
            adapters,
        }
    }

    pub fn wiring(&self) -> SrmWiring {
        self.wiring
    }

    pub fn config(&self) -> &SrmConfig {
        &self.config
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn distills(&self) -> bool {
        self.config
            .distill
            .unwrap_or(self.wiring == SrmWiring::DualPromptKd)
            && self.wiring.uses_learnable_prompts()
    }

    pub fn aligned_dim(&self) -> usize {
        match self.wiring {
            SrmWiring::Bypass => self.state_dim,
            SrmWiring::DomainEncoderRaw => self.config.encoder.d_model + self.state_dim,
            _ => 2 * self.adapters.d_align(),
        }
    }

    pub fn domain_tokens(&self, t: &DomainTelemetry) -> Result<Vec<usize>, SrmError> {
        generate_domain_prompt(t, &self.config.rules, &self.config.vocab)
    }

    /// Teacher embedding of the domain prompt alone.
    pub fn domain_reference_embedding(&self, tokens: &[usize]) -> Result<Vec<f64>, SrmError> {
        self.teacher.encode_rows(&self.teacher.embed_tokens(tokens)?)
    }

    /// The token sequence the student sees under this wiring.
    pub fn student_tokens<'a>(&self, tokens: &'a [usize]) -> &'a [usize] {
        if self.wiring.student_sees_domain() {
            tokens
        } else {
            &[]
        }
    }

    /// Builds the aligned state on the tape. Learnable prompts and adapters
    /// are bound as trainable parameters; both encoders stay constant.
    pub fn represent(&self, g: &mut Graph, features: &[f64], tokens: &[usize]) -> Result<Representation, SrmError> {
        if features.len() != self.state_dim {
            return Err(SrmError::StateDim {
                expected: self.state_dim,
                found: features.len(),
            });
        }
        let x = g.constant(Tensor::row(features));
        let (h, kd) = match self.wiring {
            SrmWiring::Bypass => return Ok(Representation { aligned: x, kd: None }),
            SrmWiring::DomainEncoderRaw | SrmWiring::DomainPromptOnly => {
                let h = g.constant(Tensor::row(&self.domain_reference_embedding(tokens)?));
                (h, None)
            }
            SrmWiring::DualPromptKd | SrmWiring::LearnablePromptOnly => {
                let seq = fuse_on_tape(g, self.student_tokens(tokens), Some(&self.prompts), &self.student)?;
                let h = self.student.forward(g, seq)?;
                let kd = if self.distills() {
                    let teacher = self.domain_reference_embedding(tokens)?;
                    Some(distill_loss(g, h, &teacher, self.config.kd_temperature)?)
                } else {
                    None
                };
                (h, kd)
            }
        };
        let aligned = if self.wiring.uses_adapters() {
            let (s_prime, s_r) = self.adapters.adapt(g, x, h, Binding::Trainable)?;
            g.concat_cols(&[s_r, s_prime])?
        } else {
            g.concat_cols(&[h, x])?
        };
        Ok(Representation { aligned, kd })
    }

    /// Tape-free aligned state.
    pub fn represent_eval(&self, features: &[f64], tokens: &[usize]) -> Result<Vec<f64>, SrmError> {
        let mut g = Graph::new();
        let r = self.represent(&mut g, features, tokens)?;
        Ok(g.value(r.aligned).data().to_vec())
    }

    /// Student embedding `h_t` (teacher embedding for teacher-driven wirings).
    pub fn embedding(&self, tokens: &[usize]) -> Result<Option<Vec<f64>>, SrmError> {
        match self.wiring {
            SrmWiring::Bypass => Ok(None),
            SrmWiring::DomainEncoderRaw | SrmWiring::DomainPromptOnly => Ok(Some(self.domain_reference_embedding(tokens)?)),
            _ => {
                let seq = fuse(self.student_tokens(tokens), Some(&self.prompts), &self.student)?;
                Ok(Some(encode(&seq, &self.student)?))
            }
        }
    }

    /// Parameters that may receive gradient through [`Srm::represent`].
    pub fn trainable_params(&self) -> Vec<&Param> {
        let mut out = Vec::new();
        if self.wiring.uses_learnable_prompts() {
            out.push(&self.prompts.param);
        }
        if self.wiring.uses_adapters() {
            out.extend(self.adapters.params());
        }
        out
    }

    pub fn frozen_hashes(&self) -> (String, String) {
        (self.student.hash(), self.teacher.hash())
    }
}

use std::fmt;
use std::str::FromStr;

use oranguide_core::srm::SrmWiring;
use serde::{Deserialize, Serialize};

/// The compared methods and their fixed state-representation wiring.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
pub enum VariantId {
    #[serde(rename = "ORAN_GUIDE")]
    #[value(name = "ORAN_GUIDE")]
    OranGuide,
    #[serde(rename = "ORANSIGHT_PA_MARL")]
    #[value(name = "ORANSIGHT_PA_MARL")]
    OransightPaMarl,
    #[serde(rename = "GPT_PA_MARL")]
    #[value(name = "GPT_PA_MARL")]
    GptPaMarl,
    #[serde(rename = "ORANSIGHT_MARL")]
    #[value(name = "ORANSIGHT_MARL")]
    OransightMarl,
    #[serde(rename = "PLAIN_MARL")]
    #[value(name = "PLAIN_MARL")]
    PlainMarl,
}

impl VariantId {
    pub const ALL: [VariantId; 5] = [
        VariantId::OranGuide,
        VariantId::OransightPaMarl,
        VariantId::GptPaMarl,
        VariantId::OransightMarl,
        VariantId::PlainMarl,
    ];

    /// The RPI reference.
    pub const BASELINE: VariantId = VariantId::PlainMarl;

    pub fn name(self) -> &'static str {
        match self {
            VariantId::OranGuide => "ORAN_GUIDE",
            VariantId::OransightPaMarl => "ORANSIGHT_PA_MARL",
            VariantId::GptPaMarl => "GPT_PA_MARL",
            VariantId::OransightMarl => "ORANSIGHT_MARL",
            VariantId::PlainMarl => "PLAIN_MARL",
        }
    }

    pub fn wiring(self) -> SrmWiring {
        match self {
            VariantId::OranGuide => SrmWiring::DualPromptKd,
            VariantId::OransightPaMarl => SrmWiring::DomainPromptOnly,
            VariantId::GptPaMarl => SrmWiring::LearnablePromptOnly,
            VariantId::OransightMarl => SrmWiring::DomainEncoderRaw,
            VariantId::PlainMarl => SrmWiring::Bypass,
        }
    }
}

impl fmt::Display for VariantId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for VariantId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        VariantId::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown variant {:?}", s))
    }
}

//! Built-in datasets with two or three studies, reconstructed from
//! published study-level confidence intervals.

use metafx_core::EffectScale;

use crate::ingest::{ingest_str, IngestError, Ingested};

#[derive(Debug, Clone, Copy)]
pub struct Example {
    pub name: &'static str,
    pub title: &'static str,
    pub measure: &'static str,
    pub scale: EffectScale,
    pub csv: &'static str,
}

pub const EXAMPLES: [Example; 4] = [
    Example {
        name: "ding2018",
        title: "KLK3 rs1058205 (TT vs CC) and prostate cancer risk",
        measure: "OR",
        scale: EffectScale::Log,
        csv: include_str!("../data/ding2018.csv"),
    },
    Example {
        name: "shrestha2019-2",
        title: "Interventions for nonoccupational sedentary behaviour (two studies)",
        measure: "MD",
        scale: EffectScale::Identity,
        csv: include_str!("../data/shrestha2019-2.csv"),
    },
    Example {
        name: "armitage2019",
        title: "Statin therapy in older people",
        measure: "RR",
        scale: EffectScale::Log,
        csv: include_str!("../data/armitage2019.csv"),
    },
    Example {
        name: "shrestha2019-3",
        title: "Interventions for nonoccupational sedentary behaviour (three studies)",
        measure: "MD",
        scale: EffectScale::Identity,
        csv: include_str!("../data/shrestha2019-3.csv"),
    },
];

pub fn find(name: &str) -> Option<&'static Example> {
    EXAMPLES.iter().find(|e| e.name.eq_ignore_ascii_case(name))
}

pub fn names() -> Vec<&'static str> {
    EXAMPLES.iter().map(|e| e.name).collect()
}

impl Example {
    pub fn ingest(&self) -> Result<Ingested, IngestError> {
        ingest_str(self.csv, self.scale)
    }
}

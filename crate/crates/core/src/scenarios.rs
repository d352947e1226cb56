//! The four transfer scenarios and the sealed view of target-domain labels.

use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};

use crate::data::{load_csv, synth_generate, ActuationPattern, ContactMode, Domain, SequenceDataset, SynthConfig};
use crate::diffcore::Tensor;
use crate::error::{DsvbError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub mode: ContactMode,
    pub actuation: ActuationPattern,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: u32,
    pub name: String,
    pub source: DomainSpec,
    pub target: DomainSpec,
}

/// Scenario definitions. 1: tip → surface contact; 2: surface → tip;
/// 3: oscillatory → random actuation; 4: random → oscillatory. Scenarios 3
/// and 4 keep tip contact.
pub fn scenario(id: u32) -> Result<Scenario> {
    use ActuationPattern::{Oscillatory, Random};
    use ContactMode::{Surface, Tip};
    let spec = |mode, actuation| DomainSpec { mode, actuation };
    let (name, source, target) = match id {
        1 => ("tip-to-surface", spec(Tip, Oscillatory), spec(Surface, Oscillatory)),
        2 => ("surface-to-tip", spec(Surface, Oscillatory), spec(Tip, Oscillatory)),
        3 => ("oscillatory-to-random", spec(Tip, Oscillatory), spec(Tip, Random)),
        4 => ("random-to-oscillatory", spec(Tip, Random), spec(Tip, Oscillatory)),
        _ => return Err(DsvbError::UnknownScenario(id)),
    };
    Ok(Scenario {
        id,
        name: name.to_string(),
        source,
        target,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Synthetic {
        base: SynthConfig,
        train_len: usize,
        test_len: usize,
    },
    Csv {
        source_train: PathBuf,
        source_test: PathBuf,
        target_train: PathBuf,
        target_test: PathBuf,
    },
}

impl DataSource {
    /// Default synthetic sizes: 5000 training and 1000 test samples per domain.
    pub fn synthetic(seed: u64) -> Self {
        DataSource::Synthetic {
            base: SynthConfig {
                seed,
                ..SynthConfig::default()
            },
            train_len: 5000,
            test_len: 1000,
        }
    }
}

/// Target-domain labels held back from training. Reading them flips an
/// audit flag.
#[derive(Debug)]
pub struct SealedLabels {
    train: Option<Tensor>,
    test: Tensor,
    accessed: AtomicBool,
}

impl SealedLabels {
    pub fn new(train: Option<Tensor>, test: Tensor) -> Self {
        SealedLabels {
            train,
            test,
            accessed: AtomicBool::new(false),
        }
    }

    /// Held-out test labels, for evaluation only.
    pub fn open_test(&self) -> &Tensor {
        self.accessed.store(true, Ordering::SeqCst);
        &self.test
    }

    pub fn open_train(&self) -> Option<&Tensor> {
        self.accessed.store(true, Ordering::SeqCst);
        self.train.as_ref()
    }

    pub fn was_accessed(&self) -> bool {
        self.accessed.load(Ordering::SeqCst)
    }
}

/// Everything one scenario run needs. The target splits carry no labels.
#[derive(Debug)]
pub struct ScenarioData {
    pub scenario: Scenario,
    pub source_train: SequenceDataset,
    pub source_test: SequenceDataset,
    pub target_train: SequenceDataset,
    pub target_test: SequenceDataset,
    pub sealed: SealedLabels,
}

impl ScenarioData {
    /// Target test split with its labels restored.
    pub fn target_test_labelled(&self) -> SequenceDataset {
        SequenceDataset {
            states: Some(self.sealed.open_test().clone()),
            ..self.target_test.clone()
        }
    }
}

fn synth_split(base: &SynthConfig, spec: DomainSpec, seed: u64, train_len: usize, test_len: usize) -> Result<(SequenceDataset, SequenceDataset)> {
    let cfg = SynthConfig {
        contact_mode: spec.mode,
        actuation: spec.actuation,
        seed,
        samples: train_len + test_len,
        ..base.clone()
    };
    synth_generate(&cfg)?.split_at(train_len)
}

/// Per-domain simulator seed: source and target draw from distinct streams.
pub fn domain_seed(seed: u64, domain: Domain) -> u64 {
    match domain {
        Domain::Source => seed.wrapping_mul(2),
        Domain::Target => seed.wrapping_mul(2) + 1,
    }
}

pub fn build_scenario(id: u32, data: &DataSource) -> Result<ScenarioData> {
    let scenario = scenario(id)?;
    let (source_train, source_test, target_train, target_test) = match data {
        DataSource::Synthetic {
            base,
            train_len,
            test_len,
        } => {
            let (s_train, s_test) = synth_split(
                base,
                scenario.source,
                domain_seed(base.seed, Domain::Source),
                *train_len,
                *test_len,
            )?;
            let (t_train, t_test) = synth_split(
                base,
                scenario.target,
                domain_seed(base.seed, Domain::Target),
                *train_len,
                *test_len,
            )?;
            (s_train, s_test, t_train, t_test)
        }
        DataSource::Csv {
            source_train,
            source_test,
            target_train,
            target_test,
        } => (
            load_csv(source_train, Domain::Source)?,
            load_csv(source_test, Domain::Source)?,
            load_csv(target_train, Domain::Target)?,
            load_csv(target_test, Domain::Target)?,
        ),
    };
    if !source_train.has_labels() || !source_test.has_labels() {
        return Err(DsvbError::InvalidConfig("source splits must carry state labels".into()));
    }
    let Some(test_labels) = target_test.states.clone() else {
        return Err(DsvbError::InvalidConfig(
            "target test split needs state labels for evaluation".into(),
        ));
    };
    let sealed = SealedLabels::new(target_train.states.clone(), test_labels);
    Ok(ScenarioData {
        scenario,
        source_train: source_train.with_domain(Domain::Source),
        source_test: source_test.with_domain(Domain::Source),
        target_train: target_train.without_labels().with_domain(Domain::Target),
        target_test: target_test.without_labels().with_domain(Domain::Target),
        sealed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn definitions() {
        let s1 = scenario(1).unwrap();
        assert_eq!(s1.source.mode, ContactMode::Tip);
        assert_eq!(s1.target.mode, ContactMode::Surface);
        let s3 = scenario(3).unwrap();
        assert_eq!(s3.source.actuation, ActuationPattern::Oscillatory);
        assert_eq!(s3.target.actuation, ActuationPattern::Random);
        for id in 1..=4 {
            let s = scenario(id).unwrap();
            assert_ne!(s.source, s.target);
        }
        assert!(matches!(scenario(5), Err(DsvbError::UnknownScenario(5))));
        assert!(matches!(scenario(0), Err(DsvbError::UnknownScenario(0))));
    }

    #[test]
    fn training_view_is_unlabelled() {
        let data = DataSource::Synthetic {
            base: SynthConfig {
                substeps: 20,
                contact_stiffness: 2.0,
                ..SynthConfig::default()
            },
            train_len: 60,
            test_len: 20,
        };
        let d = build_scenario(2, &data).unwrap();
        assert!(d.target_train.states.is_none());
        assert!(d.target_test.states.is_none());
        assert!(d.source_train.has_labels());
        assert!(!d.sealed.was_accessed());
        assert_eq!(d.target_test_labelled().len(), 20);
        assert!(d.sealed.was_accessed());
    }
}

//! Normal/anomaly class splits for multi-trial experiments.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::read_file;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trial {
    pub trial_id: usize,
    pub normal_classes: Vec<String>,
    pub anomaly_classes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub dataset: String,
    pub trials: Vec<Trial>,
}

/// A user-supplied split. A missing anomaly list means "every other class".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedSplit {
    pub normal_classes: Vec<String>,
    #[serde(default)]
    pub anomaly_classes: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedSplitFile {
    #[serde(default)]
    pub dataset: Option<String>,
    pub splits: Vec<FixedSplit>,
}

impl FixedSplitFile {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&read_file(path)?)?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SplitMode {
    /// One trial per class, that class being the only normal one.
    OneClass,
    /// One trial per class, that class being the only anomaly.
    LeaveOneOut,
    Fixed(Vec<FixedSplit>),
}

pub fn enumerate_splits(
    dataset: &str,
    dataset_classes: &[impl AsRef<str>],
    mode: &SplitMode,
) -> Result<SplitPlan> {
    let classes: Vec<String> = dataset_classes.iter().map(|c| c.as_ref().to_owned()).collect();
    if classes.is_empty() {
        return Err(Error::InvalidSplit("no dataset classes".into()));
    }
    let mut seen = HashSet::new();
    for c in &classes {
        if !seen.insert(c.as_str()) {
            return Err(Error::InvalidSplit(format!("class {c:?} listed twice")));
        }
    }
    let others = |i: usize| -> Vec<String> {
        classes.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, c)| c.clone()).collect()
    };
    let trials = match mode {
        SplitMode::OneClass | SplitMode::LeaveOneOut if classes.len() < 2 => {
            return Err(Error::InvalidSplit("need at least two classes".into()));
        }
        SplitMode::OneClass => (0..classes.len())
            .map(|i| Trial {
                trial_id: i,
                normal_classes: vec![classes[i].clone()],
                anomaly_classes: others(i),
            })
            .collect(),
        SplitMode::LeaveOneOut => (0..classes.len())
            .map(|i| Trial {
                trial_id: i,
                normal_classes: others(i),
                anomaly_classes: vec![classes[i].clone()],
            })
            .collect(),
        SplitMode::Fixed(splits) => splits
            .iter()
            .enumerate()
            .map(|(i, s)| fixed_trial(i, s, &classes))
            .collect::<Result<_>>()?,
    };
    Ok(SplitPlan {
        dataset: dataset.to_owned(),
        trials,
    })
}

fn fixed_trial(trial_id: usize, split: &FixedSplit, classes: &[String]) -> Result<Trial> {
    let all: HashSet<&str> = classes.iter().map(String::as_str).collect();
    let normal: HashSet<&str> = split.normal_classes.iter().map(String::as_str).collect();
    if normal.len() != split.normal_classes.len() {
        return Err(Error::InvalidSplit(format!("trial {trial_id}: repeated normal class")));
    }
    if normal.is_empty() {
        return Err(Error::InvalidSplit(format!("trial {trial_id}: no normal classes")));
    }
    if let Some(c) = normal.iter().find(|c| !all.contains(*c)) {
        return Err(Error::InvalidSplit(format!("trial {trial_id}: unknown class {c:?}")));
    }
    let anomaly_classes = match &split.anomaly_classes {
        None => classes.iter().filter(|c| !normal.contains(c.as_str())).cloned().collect(),
        Some(anom) => {
            let set: HashSet<&str> = anom.iter().map(String::as_str).collect();
            if set.len() != anom.len() {
                return Err(Error::InvalidSplit(format!("trial {trial_id}: repeated anomaly class")));
            }
            if let Some(c) = set.iter().find(|c| normal.contains(*c)) {
                return Err(Error::InvalidSplit(format!(
                    "trial {trial_id}: class {c:?} is both normal and anomalous"
                )));
            }
            if let Some(c) = set.iter().find(|c| !all.contains(*c)) {
                return Err(Error::InvalidSplit(format!("trial {trial_id}: unknown class {c:?}")));
            }
            if normal.len() + set.len() != all.len() {
                return Err(Error::InvalidSplit(format!(
                    "trial {trial_id}: split does not cover every class"
                )));
            }
            anom.clone()
        }
    };
    if anomaly_classes.is_empty() {
        return Err(Error::InvalidSplit(format!("trial {trial_id}: no anomaly classes")));
    }
    Ok(Trial {
        trial_id,
        normal_classes: split.normal_classes.clone(),
        anomaly_classes,
    })
}

//! On-disk JSON documents read by the command-line front end.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::Failure;
use crate::kernel::ObservableFn;
use crate::kgibbs::KJoint;
use crate::space::{Event, FiniteJoint, JointSpec};

/// `{"values": [[...], ...]}`, one row per `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableFile {
    pub values: Vec<Vec<f64>>,
}

/// `{"sets": [[[x, y], ...], ...]}` with cells given as index pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetsFile {
    pub sets: Vec<Vec<[usize; 2]>>,
}

/// `{"shape": [...], "weights": [...]}` with weights flat, last axis fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KJointFile {
    pub shape: Vec<usize>,
    pub weights: Vec<f64>,
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text =
        fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn invalid(path: &Path, e: crate::Error) -> Failure {
    Failure::Input(format!("{}: {e}", path.display()))
}

pub fn read_joint(path: &Path) -> Result<FiniteJoint, Failure> {
    let spec: JointSpec = read_json(path)?;
    spec.build().map_err(|e| invalid(path, e))
}

pub fn read_observable(path: &Path, j: &FiniteJoint) -> Result<ObservableFn, Failure> {
    let file: ObservableFile = read_json(path)?;
    let phi = ObservableFn::from_rows(&file.values).map_err(|e| invalid(path, e))?;
    if phi.x_size() != j.x_size() || phi.y_size() != j.y_size() {
        return Err(Failure::Input(format!(
            "{}: observable is {}x{}, joint is {}x{}",
            path.display(),
            phi.x_size(),
            phi.y_size(),
            j.x_size(),
            j.y_size()
        )));
    }
    Ok(phi)
}

pub fn read_sets(path: &Path, j: &FiniteJoint) -> Result<Vec<Event>, Failure> {
    let file: SetsFile = read_json(path)?;
    if file.sets.is_empty() {
        return Err(Failure::Input(format!("{}: no sets given", path.display())));
    }
    file.sets
        .iter()
        .map(|cells| {
            let pairs: Vec<(usize, usize)> = cells.iter().map(|c| (c[0], c[1])).collect();
            Event::from_cells(j.x_size(), j.y_size(), &pairs).map_err(|e| invalid(path, e))
        })
        .collect()
}

pub fn read_k_joint(path: &Path) -> Result<KJoint, Failure> {
    let file: KJointFile = read_json(path)?;
    KJoint::from_weights(file.shape, file.weights).map_err(|e| invalid(path, e))
}

/// A start cell written `X,Y`, each part a label or an index.
pub fn parse_cell(j: &FiniteJoint, text: &str) -> Result<(usize, usize), Failure> {
    let (xt, yt) = text
        .split_once(',')
        .ok_or_else(|| Failure::Input(format!("start '{text}' is not of the form X,Y")))?;
    let lookup = |labels: &[String], t: &str| {
        let t = t.trim();
        labels
            .iter()
            .position(|l| l == t)
            .or_else(|| t.parse::<usize>().ok().filter(|i| *i < labels.len()))
            .ok_or_else(|| Failure::Input(format!("unknown coordinate '{t}' in start")))
    };
    Ok((lookup(j.x_labels(), xt)?, lookup(j.y_labels(), yt)?))
}

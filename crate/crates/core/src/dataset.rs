//! Session pools, ratio-controlled augmentation and the train/test guard.

use crate::labeler::{Label, Provenance, Session};
use crate::{Error, Result};
use num_rational::Ratio;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<Session>,
    pub test: Vec<Session>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugPlan {
    /// `numer/denom`.
    pub ratio: String,
    pub n_real: u64,
    pub n_syn_target: u64,
    pub picks: Vec<String>,
    pub normal_picked: u64,
    pub anomalous_picked: u64,
    /// One class ran short and the other made up the difference.
    pub pool_limited: bool,
}

/// `R × n` rounded half up, exactly.
pub fn round_half_up(r: Ratio<u64>, n: u64) -> u64 {
    let (p, q) = (u128::from(*r.numer()), u128::from(*r.denom()));
    let v = (2 * p * u128::from(n) + q) / (2 * q);
    u64::try_from(v).expect("target fits in u64")
}

fn sample_ids(pool: &[&Session], k: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    rand::seq::index::sample(rng, pool.len(), k).into_iter().map(|i| pool[i].session_id.clone()).collect()
}

/// Picks `round_half_up(R·n_real)` synthetic sessions, half normal (rounded
/// up) and half anomalous, sampling each class without replacement.
pub fn plan_augmentation(n_real: u64, pool: &[Session], ratio: Ratio<u64>, seed: u64) -> Result<AugPlan> {
    let target = round_half_up(ratio, n_real);
    let mut normal: Vec<&Session> = pool.iter().filter(|s| s.label == Label::Normal).collect();
    let mut anomalous: Vec<&Session> = pool.iter().filter(|s| s.label == Label::Anomalous).collect();
    normal.sort_by(|a, b| a.session_id.cmp(&b.session_id));
    anomalous.sort_by(|a, b| a.session_id.cmp(&b.session_id));
    let available = (normal.len() + anomalous.len()) as u64;
    if available < target {
        return Err(Error::Data(format!(
            "synthetic pool holds {available} sessions but the plan needs {target} (short by {})",
            target - available
        )));
    }
    let t = usize::try_from(target).expect("bounded by pool size");
    let (mut want_n, mut want_a) = (t.div_ceil(2), t / 2);
    let mut pool_limited = false;
    if want_n > normal.len() {
        want_a += want_n - normal.len();
        want_n = normal.len();
        pool_limited = true;
    } else if want_a > anomalous.len() {
        want_n += want_a - anomalous.len();
        want_a = anomalous.len();
        pool_limited = true;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = sample_ids(&normal, want_n, &mut rng);
    picks.extend(sample_ids(&anomalous, want_a, &mut rng));
    Ok(AugPlan {
        ratio: format!("{}/{}", ratio.numer(), ratio.denom()),
        n_real,
        n_syn_target: target,
        picks,
        normal_picked: want_n as u64,
        anomalous_picked: want_a as u64,
        pool_limited,
    })
}

/// Appends the planned picks to the training split in plan order.
pub fn apply_augmentation(split: &DatasetSplit, pool: &[Session], plan: &AugPlan) -> Result<DatasetSplit> {
    let by_id: HashMap<&str, &Session> = pool.iter().map(|s| (s.session_id.as_str(), s)).collect();
    let mut train = split.train.clone();
    for id in &plan.picks {
        let s = by_id.get(id.as_str()).ok_or_else(|| Error::Data(format!("planned session {id} is not in the pool")))?;
        train.push((*s).clone());
    }
    Ok(DatasetSplit { train, test: split.test.clone() })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuardReport {
    pub synthetic_in_test: Vec<String>,
    /// Ids repeated inside the test split or shared with the training split.
    pub duplicated: Vec<String>,
}

impl GuardReport {
    pub fn ok(&self) -> bool {
        self.synthetic_in_test.is_empty() && self.duplicated.is_empty()
    }

    pub fn into_result(self) -> Result<GuardReport> {
        if self.ok() {
            return Ok(self);
        }
        let mut msg = Vec::new();
        if !self.synthetic_in_test.is_empty() {
            msg.push(format!("synthetic sessions in test: {}", self.synthetic_in_test.join(", ")));
        }
        if !self.duplicated.is_empty() {
            msg.push(format!("duplicated ids: {}", self.duplicated.join(", ")));
        }
        Err(Error::Guard(msg.join("; ")))
    }
}

pub fn split_guard(split: &DatasetSplit) -> GuardReport {
    let synthetic_in_test = split.test.iter().filter(|s| s.provenance == Provenance::Synthetic).map(|s| s.session_id.clone()).collect();
    let train: BTreeSet<&str> = split.train.iter().map(|s| s.session_id.as_str()).collect();
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for s in &split.test {
        *counts.entry(&s.session_id).or_default() += 1;
    }
    let duplicated = counts.into_iter().filter(|(id, n)| *n > 1 || train.contains(id)).map(|(id, _)| id.to_string()).collect();
    GuardReport { synthetic_in_test, duplicated }
}

pub fn parse_sessions(text: &str) -> std::result::Result<Vec<Session>, (usize, String)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| (i + 1, e.to_string())))
        .collect()
}

pub fn read_sessions(path: &Path) -> Result<Vec<Session>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_sessions(&text).map_err(|(line, message)| Error::Malformed { path: path.to_path_buf(), line, message })
}

pub fn sessions_to_string(sessions: &[Session]) -> String {
    sessions.iter().map(|s| serde_json::to_string(s).expect("serializable") + "\n").collect()
}

pub fn write_sessions(sessions: &[Session], path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(sessions_to_string(sessions).as_bytes()).map_err(|e| Error::io(path, e))
}

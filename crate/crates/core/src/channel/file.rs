//! JSON channel files.
//!
//! ```json
//! {"name": "bsc", "input_alphabet_size": 2,
//!  "users": [{"name": "u1", "matrix": [[0.89, 0.11], [0.11, 0.89]]}]}
//! ```
//! Rows must sum to 1 within 1e-9 and are renormalised.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BroadcastChannel, Dmc};
use crate::{Error, Result};

const LOAD_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UserFile {
    pub name: String,
    pub matrix: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelFile {
    pub name: String,
    pub input_alphabet_size: usize,
    pub users: Vec<UserFile>,
}

impl ChannelFile {
    pub fn into_channel(self) -> Result<BroadcastChannel> {
        let mut users = Vec::with_capacity(self.users.len());
        for u in self.users {
            if u.matrix.len() != self.input_alphabet_size {
                return Err(Error::Dimension(format!(
                    "user '{}' has {} rows but input_alphabet_size is {}",
                    u.name,
                    u.matrix.len(),
                    self.input_alphabet_size
                )));
            }
            let mut rows = Vec::with_capacity(u.matrix.len());
            for (x, row) in u.matrix.into_iter().enumerate() {
                let s: f64 = row.iter().sum();
                if (s - 1.0).abs() > LOAD_SLACK {
                    return Err(Error::InvalidDistribution(format!(
                        "user '{}' row {x} sums to {s}",
                        u.name
                    )));
                }
                rows.push(row.into_iter().map(|p| p / s).collect());
            }
            users.push(Dmc::new(rows)?);
        }
        BroadcastChannel::new(self.name, users)
    }

    pub fn from_channel(ch: &BroadcastChannel) -> Self {
        Self {
            name: ch.name.clone(),
            input_alphabet_size: ch.input_size(),
            users: ch
                .users()
                .iter()
                .enumerate()
                .map(|(k, w)| UserFile { name: format!("user{}", k + 1), matrix: w.rows().to_vec() })
                .collect(),
        }
    }
}

impl BroadcastChannel {
    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str::<ChannelFile>(s)?.into_channel()
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&ChannelFile::from_channel(self)).expect("channel serialises")
    }
}

pub fn load_channel(path: impl AsRef<Path>) -> Result<BroadcastChannel> {
    BroadcastChannel::from_json_str(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renormalises_within_slack() {
        let s = r#"{"name":"t","input_alphabet_size":2,
            "users":[{"name":"a","matrix":[[0.8899999999,0.11],[0.11,0.89]]}]}"#;
        let ch = BroadcastChannel::from_json_str(s).unwrap();
        let r = ch.user(0).row(0);
        assert!((r[0] + r[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_outside_slack() {
        let s = r#"{"name":"t","input_alphabet_size":2,
            "users":[{"name":"a","matrix":[[0.8,0.11],[0.11,0.89]]}]}"#;
        assert!(BroadcastChannel::from_json_str(s).is_err());
    }

    #[test]
    fn round_trip() {
        let ch = crate::channel::make_common_output_pair(0.01, 0.4, 0.15, 0.1).unwrap();
        let back = BroadcastChannel::from_json_str(&ch.to_json_string()).unwrap();
        assert_eq!(back.users(), ch.users());
    }
}

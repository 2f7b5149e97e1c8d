//! Retained MCMC states and their JSON-lines file format.
//!
//! Line 1 is a header (format version, configuration echo, checksum, unit
//! count, acceptance rates, state count); each further line is one state.
//! Labels are written 1-based.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{ClusterParams, HyperState, McmcConfig};
use crate::data::ResponseKind;
use crate::error::{Error, Result};
use crate::ppmx::Partition;
use crate::seed::sha256_hex;

pub const DRAWS_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceRates {
    /// Post-burn-in acceptance of the cluster standard deviation proposals.
    pub sigma_star: f64,
    pub sigma0: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoredState {
    #[serde(with = "one_based")]
    pub labels: Vec<u32>,
    pub params: Vec<ClusterParams>,
    pub hyper: HyperState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent: Option<Vec<f64>>,
}

impl StoredState {
    pub fn n_clusters(&self) -> usize {
        self.params.len()
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i] as usize
    }

    pub fn partition(&self) -> Partition {
        Partition::canonical(&self.labels.iter().map(|&l| l as usize).collect::<Vec<_>>())
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.params.len()];
        for &l in &self.labels {
            sizes[l as usize] += 1;
        }
        sizes
    }
}

mod one_based {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(labels: &[u32], s: S) -> Result<S::Ok, S::Error> {
        labels.iter().map(|l| l + 1).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u32>, D::Error> {
        let raw = Vec::<u32>::deserialize(d)?;
        raw.into_iter()
            .map(|l| {
                l.checked_sub(1)
                    .ok_or_else(|| serde::de::Error::custom("labels are 1-based"))
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: McmcConfig,
    checksum: String,
    response: ResponseKind,
    n_units: usize,
    acceptance: AcceptanceRates,
    n_states: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorDraws {
    pub config: McmcConfig,
    pub checksum: String,
    pub response: ResponseKind,
    pub n_units: usize,
    pub acceptance: AcceptanceRates,
    pub states: Vec<StoredState>,
}

/// SHA-256 of the serialized configuration, which includes the seed.
pub fn config_checksum(cfg: &McmcConfig) -> String {
    sha256_hex(&serde_json::to_vec(cfg).expect("config serializes"))
}

impl PosteriorDraws {
    pub fn new(
        config: McmcConfig,
        response: ResponseKind,
        n_units: usize,
        acceptance: AcceptanceRates,
        states: Vec<StoredState>,
    ) -> Self {
        Self {
            checksum: config_checksum(&config),
            config,
            response,
            n_units,
            acceptance,
            states,
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn mean_clusters(&self) -> f64 {
        if self.states.is_empty() {
            return f64::NAN;
        }
        self.states.iter().map(|s| s.n_clusters() as f64).sum::<f64>() / self.states.len() as f64
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        let header = Header {
            format_version: DRAWS_FORMAT_VERSION,
            config: self.config.clone(),
            checksum: self.checksum.clone(),
            response: self.response,
            n_units: self.n_units,
            acceptance: self.acceptance,
            n_states: self.states.len(),
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for s in &self.states {
            serde_json::to_writer(&mut w, s)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let first = lines.next().ok_or_else(|| Error::Draws("missing header".into()))??;
        let header: Header = serde_json::from_str(&first)?;
        if header.format_version != DRAWS_FORMAT_VERSION {
            return Err(Error::Draws(format!("unsupported format version {}", header.format_version)));
        }
        if header.checksum != config_checksum(&header.config) {
            return Err(Error::Draws("checksum does not match configuration".into()));
        }
        let mut states = Vec::with_capacity(header.n_states);
        for (k, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let s: StoredState = serde_json::from_str(&line)?;
            if s.labels.len() != header.n_units || s.labels.iter().any(|&l| l as usize >= s.params.len()) {
                return Err(Error::Draws(format!("state {} is inconsistent", k + 1)));
            }
            states.push(s);
        }
        if states.len() != header.n_states {
            return Err(Error::Draws(format!(
                "header announces {} states, found {}",
                header.n_states,
                states.len()
            )));
        }
        Ok(Self {
            config: header.config,
            checksum: header.checksum,
            response: header.response,
            n_units: header.n_units,
            acceptance: header.acceptance,
            states,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> PosteriorDraws {
        let state = StoredState {
            labels: vec![0, 1, 0],
            params: vec![
                ClusterParams { mu: 0.1, sigma: 0.3 },
                ClusterParams { mu: -2.0 / 3.0, sigma: 0.01 },
            ],
            hyper: HyperState { mu0: 1e-17, sigma0: 2.5 },
            latent: None,
        };
        PosteriorDraws::new(
            McmcConfig::default(),
            ResponseKind::Continuous,
            3,
            AcceptanceRates { sigma_star: 0.4, sigma0: 0.5 },
            vec![state.clone(), state],
        )
    }

    #[test]
    fn round_trip_is_exact() {
        let d = sample();
        let mut buf = Vec::new();
        d.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().nth(1).unwrap().contains("\"labels\":[1,2,1]"));
        let back = PosteriorDraws::read_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn tampered_config_is_rejected() {
        let mut buf = Vec::new();
        sample().write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap().replacen("\"n_iter\":2000", "\"n_iter\":2001", 1);
        assert!(matches!(PosteriorDraws::read_jsonl(text.as_bytes()), Err(Error::Draws(_))));
    }

    #[test]
    fn zero_label_is_rejected() {
        let mut buf = Vec::new();
        sample().write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap().replacen("[1,2,1]", "[0,2,1]", 1);
        assert!(PosteriorDraws::read_jsonl(text.as_bytes()).is_err());
    }
}

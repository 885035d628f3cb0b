//! Model bundles: one text file carrying the manifest, the Bayesian-network
//! view, the circuit, and a trailing SHA-256 checksum.
//!
//! The two views are saved redundantly and cross-checked on load: same
//! arities, same live leaves, and bit-identical leaf distributions/parameter
//! weights. Serialization is deterministic, so save → load → save is
//! byte-identical; wall-clock measurements deliberately stay out of the
//! bundle.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bn::{read_bn, write_bn, BayesNet};
use crate::circuit::text::{read_circuit, write_circuit};
use crate::circuit::{check_properties, Circuit, NodeKind};
use crate::error::{Error, Result};
use crate::learn::{LearnConfig, LearnOutcome, StopReason};

const MAGIC: &str = "acmodel 1";

/// Reproducibility metadata saved with a model.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelMeta {
    pub config: LearnConfig,
    pub stop_reason: StopReason,
    pub splits: u64,
    pub score: f64,
    pub train_log_likelihood: f64,
    pub initial_log_likelihood: f64,
    pub training_rows: u64,
    /// SHA-256 of the training data file, when known.
    pub dataset_digest: Option<String>,
}

#[derive(Debug)]
pub struct Model {
    pub bn: BayesNet,
    pub circuit: Circuit,
    pub meta: ModelMeta,
}

impl Model {
    pub fn from_outcome(
        outcome: LearnOutcome,
        training_rows: u64,
        dataset_digest: Option<String>,
    ) -> Model {
        Model {
            meta: ModelMeta {
                config: outcome.config,
                stop_reason: outcome.stop_reason,
                splits: outcome.iterations.len() as u64,
                score: outcome.score,
                train_log_likelihood: outcome.train_log_likelihood,
                initial_log_likelihood: outcome.initial_log_likelihood,
                training_rows,
                dataset_digest,
            },
            bn: outcome.bn,
            circuit: outcome.circuit,
        }
    }

    /// Renders the bundle, checksum trailer included.
    pub fn to_text(&self) -> String {
        let mut body = String::new();
        body.push_str(MAGIC);
        body.push('\n');
        body.push_str("manifest ");
        body.push_str(&serde_json::to_string(&self.meta).expect("meta serializes"));
        body.push('\n');
        write_bn(&self.bn, &mut body);
        write_circuit(&self.circuit, &mut body);
        let digest = hex(&Sha256::digest(body.as_bytes()));
        body.push_str("checksum ");
        body.push_str(&digest);
        body.push('\n');
        body
    }

    /// Parses and fully cross-checks a bundle.
    pub fn from_text(text: &str) -> Result<Model> {
        let trailer_at = text
            .rfind("\nchecksum ")
            .ok_or_else(|| Error::Format("model bundle has no checksum trailer".into()))?
            + 1;
        let body = &text[..trailer_at];
        let stated = text[trailer_at..]
            .trim_end()
            .strip_prefix("checksum ")
            .expect("rfind matched");
        let actual = hex(&Sha256::digest(body.as_bytes()));
        if stated != actual {
            return Err(Error::ChecksumMismatch {
                expected: stated.into(),
                actual,
            });
        }

        let mut lines = body.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, l)) if l == MAGIC => {}
            Some((_, l)) => {
                return Err(Error::Format(format!(
                    "unsupported model version: {l:?} (expected {MAGIC:?})"
                )))
            }
            None => return Err(Error::Format("empty model bundle".into())),
        }
        let meta: ModelMeta = match lines.next() {
            Some((_, l)) => {
                let json = l.strip_prefix("manifest ").ok_or_else(|| {
                    Error::Format(format!("expected manifest line, got {l:?}"))
                })?;
                serde_json::from_str(json)
                    .map_err(|e| Error::Format(format!("bad manifest: {e}")))?
            }
            None => return Err(Error::Format("model bundle ends before manifest".into())),
        };
        let bn = read_bn(&mut lines)?;
        let circuit = read_circuit(&mut lines)?;
        if let Some((n, l)) = lines.next() {
            return Err(Error::Format(format!(
                "unexpected content after circuit section at line {n}: {l:?}"
            )));
        }
        let model = Model { bn, circuit, meta };
        model.cross_check()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        // Atomic publish: write a sibling temp file, then rename over.
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_text())?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Model> {
        Model::from_text(&fs::read_to_string(path)?)
    }

    /// The two views must describe the same distribution: same variables,
    /// same live leaves, and the circuit's parameter weights bit-identical
    /// to the leaf distributions.
    fn cross_check(&self) -> Result<()> {
        self.circuit.validate()?;
        let report = check_properties(&self.circuit);
        if !report.all_hold() {
            return Err(Error::Format(format!(
                "loaded circuit violates structural properties: {report:?}"
            )));
        }
        if self.bn.arities() != self.circuit.arities() {
            return Err(Error::Format(
                "network and circuit disagree on variable arities".into(),
            ));
        }
        let mut bn_leaves: Vec<u32> = self.bn.live_leaves().map(|l| l.0).collect();
        let mut ac_leaves: Vec<u32> = self.circuit.parameter_leaves().map(|l| l.0).collect();
        bn_leaves.sort_unstable();
        ac_leaves.sort_unstable();
        if bn_leaves != ac_leaves {
            return Err(Error::Format(
                "network and circuit disagree on the set of distribution leaves".into(),
            ));
        }
        for &l in &bn_leaves {
            let leaf = crate::circuit::LeafId(l);
            let info = self.bn.leaf(leaf);
            let params = self
                .circuit
                .leaf_parameters(leaf)
                .expect("leaf set equality checked");
            for (value, &p) in params.iter().enumerate() {
                let NodeKind::Parameter { var, weight, .. } = *self.circuit.kind(p) else {
                    return Err(Error::Format("parameter index broken".into()));
                };
                if var != info.var || weight.to_bits() != info.theta[value].to_bits() {
                    return Err(Error::Format(format!(
                        "leaf {l}: circuit weight {weight} does not match \
                         network distribution entry {}",
                        info.theta[value]
                    )));
                }
            }
        }
        Ok(())
    }
}

fn hex(digest: &[u8]) -> String {
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 of a file's raw bytes, for dataset digests in manifests.
pub fn file_digest(path: &Path) -> Result<String> {
    Ok(hex(&Sha256::digest(fs::read(path)?)))
}

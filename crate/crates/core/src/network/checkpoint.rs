use std::path::Path;

use serde::{Deserialize, Serialize};

use super::spec::{NetworkSpec, ParameterVector};
use crate::error::{Error, Result};
use crate::io::write_atomic;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// A trained parameter point together with how it was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub spec: NetworkSpec,
    pub beta: f64,
    pub seed: u64,
    pub epoch: usize,
    pub params: ParameterVector,
}

impl Checkpoint {
    pub fn new(spec: NetworkSpec, params: ParameterVector, beta: f64, seed: u64, epoch: usize) -> Self {
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            spec,
            beta,
            seed,
            epoch,
            params,
        }
    }

    fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        self.spec.check_params(&self.params)?;
        if !self.params.is_finite() || !self.beta.is_finite() {
            return Err(Error::InvalidArgument("checkpoint holds non-finite values".into()));
        }
        Ok(())
    }

    /// JSON text; floats use the shortest representation that parses back to
    /// the identical double.
    pub fn to_json(&self) -> Result<String> {
        self.validate()?;
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::MalformedFile(e.to_string()))?;
        let version = value
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::MalformedFile("missing integer field `format_version`".into()))?;
        if version != CHECKPOINT_FORMAT_VERSION as u64 {
            return Err(Error::VersionMismatch {
                expected: CHECKPOINT_FORMAT_VERSION,
                found: version.min(u32::MAX as u64) as u32,
            });
        }
        let ckpt: Checkpoint = serde_json::from_value(value).map_err(|e| Error::MalformedFile(e.to_string()))?;
        ckpt.validate().map_err(|e| Error::MalformedFile(e.to_string()))?;
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), self.to_json()?.as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Checkpoint::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Regularizer;
    use crate::rng::Rng;

    fn sample() -> Checkpoint {
        let spec = NetworkSpec::regression(2, &[15, 15], 1, Regularizer::L2);
        let mut params = spec.init_params(&mut Rng::new(3));
        params.0[0] = 0.1 + 0.2; // not exactly representable in short decimal
        params.0[1] = 1e-300;
        Checkpoint::new(spec, params, 3.5e-4, 7, 2000)
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        let c = sample();
        c.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, c);
        for (a, b) in back.params.0.iter().zip(&c.params.0) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn wrong_version() {
        let text = sample().to_json().unwrap().replace("\"format_version\": 1", "\"format_version\": 2");
        assert!(matches!(
            Checkpoint::from_json(&text),
            Err(Error::VersionMismatch { expected: 1, found: 2 })
        ));
    }

    #[test]
    fn truncated_file() {
        let text = sample().to_json().unwrap();
        let cut = &text[..text.len() / 2];
        assert!(matches!(Checkpoint::from_json(cut), Err(Error::MalformedFile(_))));
    }

    #[test]
    fn wrong_param_count() {
        let mut c = sample();
        c.params.0.pop();
        let text = serde_json::to_string(&c).unwrap();
        assert!(matches!(Checkpoint::from_json(&text), Err(Error::MalformedFile(_))));
    }

    #[test]
    fn non_finite_params_cannot_be_saved() {
        let mut c = sample();
        c.params.0[0] = f64::NAN;
        assert!(c.to_json().is_err());
    }
}

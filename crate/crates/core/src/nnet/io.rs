use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::network::Network;
use crate::error::{Error, Result};

pub const NETWORK_FORMAT: &str = "moldloop-network";
pub const NETWORK_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    format: String,
    version: u32,
    network: Network,
}

impl Network {
    /// Versioned JSON document. Floats use shortest round-trip decimals,
    /// so reading it back reproduces every weight bit for bit.
    pub fn to_json(&self) -> Result<String> {
        let doc = Document {
            format: NETWORK_FORMAT.into(),
            version: NETWORK_VERSION,
            network: self.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: Document = serde_json::from_str(s)?;
        Self::from_document(doc)
    }

    pub fn write_json<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.to_json()?.as_bytes())?;
        Ok(())
    }

    pub fn read_json<R: Read>(mut r: R) -> Result<Self> {
        let mut s = String::new();
        r.read_to_string(&mut s)?;
        Self::from_json(&s)
    }

    fn from_document(doc: Document) -> Result<Self> {
        if doc.format != NETWORK_FORMAT {
            return Err(Error::Invalid(format!("not a network document: format {:?}", doc.format)));
        }
        if doc.version != NETWORK_VERSION {
            return Err(Error::Invalid(format!("unsupported network version {}", doc.version)));
        }
        let net = doc.network;
        net.check_shapes()?;
        Ok(net)
    }

    /// Weight shapes agree with the topology.
    pub fn check_shapes(&self) -> Result<()> {
        self.topology.validate()?;
        let sizes = &self.topology.layer_sizes;
        if self.layers.len() != sizes.len() - 1 {
            return Err(Error::Shape("layer count does not match topology".into()));
        }
        for (l, w) in self.layers.iter().zip(sizes.windows(2)) {
            if l.rows != w[1] || l.cols != w[0] || l.weights.len() != l.rows * l.cols || l.bias.len() != l.rows {
                return Err(Error::Shape(format!("layer {}x{} does not match {}→{}", l.rows, l.cols, w[0], w[1])));
            }
        }
        let ctx = self.topology.context_len();
        match &self.context_weights {
            None if ctx == 0 => {}
            Some(c) if c.rows == sizes[1] && c.cols == ctx && c.weights.len() == c.rows * c.cols => {}
            _ => return Err(Error::Shape("context weights do not match topology".into())),
        }
        for (norm, n) in [(&self.input_norm, self.n_inputs()), (&self.output_norm, self.n_outputs())] {
            if let Some(norm) = norm {
                if norm.mean.len() != n || norm.scale.len() != n {
                    return Err(Error::Shape("normalization width does not match topology".into()));
                }
            }
        }
        Ok(())
    }
}

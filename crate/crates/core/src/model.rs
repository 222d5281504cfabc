//! Plain-text model files.
//!
//! ```text
//! layers: 2 3 2 1
//! hidden_activation: tanh
//! output_activation: identity
//! 0.123
//! ...one weight per line, flat order...
//! ```
//!
//! Weights are written with the shortest decimal that parses back to the
//! same `f64`, so a save/load cycle is bit-exact.

use std::fmt::Write as _;

use crate::network::{forward, ActivationKind, ForwardTrace, Topology, WeightVector};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub topology: Topology,
    pub weights: WeightVector,
    pub hidden: ActivationKind,
    pub output: ActivationKind,
}

impl Model {
    pub fn new(
        topology: Topology,
        weights: WeightVector,
        hidden: ActivationKind,
        output: ActivationKind,
    ) -> Result<Self> {
        weights.check(&topology)?;
        Ok(Self {
            topology,
            weights,
            hidden,
            output,
        })
    }

    pub fn forward(&self, x: &[f64]) -> Result<ForwardTrace> {
        forward(&self.topology, &self.weights, x, self.hidden, self.output)
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.output().to_vec())
    }
}

const LAYERS_HEADER: &str = "layers: h0 h1 ... hL";
const HIDDEN_HEADER: &str = "hidden_activation: <name>";
const OUTPUT_HEADER: &str = "output_activation: <name>";

pub fn save_model(model: &Model) -> String {
    let mut out = String::new();
    let widths: Vec<String> = model
        .topology
        .widths()
        .iter()
        .map(|h| h.to_string())
        .collect();
    writeln!(out, "layers: {}", widths.join(" ")).unwrap();
    writeln!(out, "hidden_activation: {}", model.hidden).unwrap();
    writeln!(out, "output_activation: {}", model.output).unwrap();
    for w in model.weights.as_slice() {
        writeln!(out, "{w:?}").unwrap();
    }
    out
}

pub fn load_model(text: &str) -> Result<Model> {
    let mut lines = text.lines();

    let layers_line = lines.next().unwrap_or_default();
    let widths = layers_line
        .strip_prefix("layers:")
        .and_then(|rest| {
            rest.split_whitespace()
                .map(|tok| tok.parse::<usize>().ok())
                .collect::<Option<Vec<usize>>>()
        })
        .ok_or(Error::MalformedHeader {
            line: 1,
            expected: LAYERS_HEADER,
        })?;
    let topology = Topology::new(&widths)?;

    let hidden = parse_activation(lines.next(), "hidden_activation:", 2, HIDDEN_HEADER)?;
    let output = parse_activation(lines.next(), "output_activation:", 3, OUTPUT_HEADER)?;

    let mut values = Vec::with_capacity(topology.weight_count());
    for (k, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v = line.parse::<f64>().map_err(|_| Error::MalformedWeight {
            line: k + 4,
            value: line.to_owned(),
        })?;
        values.push(v);
    }
    if values.len() != topology.weight_count() {
        return Err(Error::WeightCountMismatch {
            expected: topology.weight_count(),
            found: values.len(),
        });
    }
    let weights = WeightVector::new(&topology, values)?;
    Model::new(topology, weights, hidden, output)
}

fn parse_activation(
    line: Option<&str>,
    key: &str,
    number: usize,
    expected: &'static str,
) -> Result<ActivationKind> {
    let malformed = Error::MalformedHeader {
        line: number,
        expected,
    };
    let rest = line
        .and_then(|l| l.strip_prefix(key))
        .ok_or(malformed.clone())?;
    let token = rest.trim();
    if token.is_empty() || token.contains(char::is_whitespace) {
        return Err(malformed);
    }
    token.parse()
}

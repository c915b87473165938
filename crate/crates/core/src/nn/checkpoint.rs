//! Plain-text network checkpoints.
//!
//! ```text
//! kddg-network 1
//! layers <L>
//! layer <in> <out> <relu|identity>      (L lines)
//! params <P>
//! <value>                                (P lines, shortest round-trip decimal)
//! ```
//!
//! Parameters follow [`Network::params`] order: each layer's weights row-major
//! (`out × in`) followed by its bias. Values are written with Rust's shortest
//! round-trip formatting, so a save/load cycle is bit-exact.

use std::fmt::Write as _;
use std::path::Path;

use super::network::{Activation, Layer, Network};
use super::tensor::ParamVector;
use crate::error::{Error, Result};

pub const MAGIC: &str = "kddg-network";
pub const VERSION: u32 = 1;

pub fn to_string(net: &Network) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{MAGIC} {VERSION}");
    let _ = writeln!(s, "layers {}", net.layers().len());
    for l in net.layers() {
        let _ = writeln!(
            s,
            "layer {} {} {}",
            l.input_dim(),
            l.output_dim(),
            l.activation.name()
        );
    }
    let params = net.params();
    let _ = writeln!(s, "params {}", params.len());
    for v in &params.0 {
        let _ = writeln!(s, "{v:?}");
    }
    s
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

pub fn from_str(text: &str) -> Result<Network> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let mut next = |what: &str| lines.next().ok_or_else(|| bad(format!("missing {what}")));

    let header = next("header")?;
    let version = header
        .strip_prefix(MAGIC)
        .map(str::trim)
        .ok_or_else(|| bad("not a network checkpoint"))?;
    if version != VERSION.to_string() {
        return Err(bad(format!("unsupported checkpoint version {version}")));
    }
    let n_layers: usize = parse_tagged(next("layer count")?, "layers")?;
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let line = next("layer line")?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "layer" {
            return Err(bad(format!("bad layer line: {line}")));
        }
        let input: usize = parts[1].parse().map_err(|_| bad("bad layer input dim"))?;
        let output: usize = parts[2].parse().map_err(|_| bad("bad layer output dim"))?;
        let act = match parts[3] {
            "relu" => Activation::Relu,
            "identity" => Activation::Identity,
            other => return Err(bad(format!("unknown activation {other}"))),
        };
        layers.push(Layer::zeros(input, output, act));
    }
    let mut net = Network::new(layers)?;
    let n_params: usize = parse_tagged(next("param count")?, "params")?;
    if n_params != net.param_count() {
        return Err(bad(format!(
            "header declares {n_params} params but layers need {}",
            net.param_count()
        )));
    }
    let mut values = Vec::with_capacity(n_params);
    for _ in 0..n_params {
        let v: f64 = next("parameter value")?
            .parse()
            .map_err(|_| bad("bad parameter value"))?;
        values.push(v);
    }
    if lines.next().is_some() {
        return Err(bad("trailing data after parameters"));
    }
    net.set_params(&ParamVector(values))?;
    Ok(net)
}

fn parse_tagged(line: &str, tag: &str) -> Result<usize> {
    line.strip_prefix(tag)
        .and_then(|r| r.trim().parse().ok())
        .ok_or_else(|| bad(format!("expected `{tag} <n>`, got `{line}`")))
}

pub fn save(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_string(net))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Network> {
    from_str(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Architecture;
    use crate::rng::rng_for;

    #[test]
    fn round_trip_is_bit_exact() {
        let arch = Architecture {
            input: 4,
            hidden: vec![6, 3],
            output: 2,
        };
        let net = Network::init(&arch, &mut rng_for(11, 1)).unwrap();
        let back = from_str(&to_string(&net)).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn header_layout() {
        let arch = Architecture {
            input: 2,
            hidden: vec![],
            output: 1,
        };
        let net = Network::init(&arch, &mut rng_for(0, 1)).unwrap();
        let text = to_string(&net);
        let head: Vec<&str> = text.lines().take(4).collect();
        assert_eq!(
            head,
            [
                "kddg-network 1",
                "layers 1",
                "layer 2 1 identity",
                "params 3"
            ]
        );
    }

    #[test]
    fn rejects_truncated_and_foreign_files() {
        let arch = Architecture {
            input: 2,
            hidden: vec![3],
            output: 2,
        };
        let text = to_string(&Network::init(&arch, &mut rng_for(0, 1)).unwrap());
        let truncated: String = text.lines().take(6).collect::<Vec<_>>().join("\n");
        assert!(from_str(&truncated).is_err());
        assert!(from_str("hello 1\n").is_err());
        assert!(from_str(&text.replace("kddg-network 1", "kddg-network 9")).is_err());
    }
}

//! Binary network checkpoints.
//!
//! Layout, all integers `u32` and all floats `f64`, little-endian:
//!
//! ```text
//! "RSHP" | version | layer count | head (0 = softmax-CE, 1 = L2)
//! per layer: in | out | activation (0 = ReLU, 1 = identity)
//!            weights (in x out, row-major) | bias (out)
//! ```

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::net::{Activation, Layer, Network, TaskHead};
use crate::tensor::Matrix;

pub const MAGIC: &[u8; 4] = b"RSHP";
pub const VERSION: u32 = 1;

pub fn write_network<W: Write>(net: &Network, mut out: W) -> io::Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(net.num_layers() as u32).to_le_bytes())?;
    let head: u32 = match net.head() {
        TaskHead::SoftmaxCrossEntropy => 0,
        TaskHead::L2Reconstruction => 1,
    };
    out.write_all(&head.to_le_bytes())?;
    for layer in net.layers() {
        out.write_all(&(layer.input_width() as u32).to_le_bytes())?;
        out.write_all(&(layer.output_width() as u32).to_le_bytes())?;
        let act: u32 = match layer.activation {
            Activation::Relu => 0,
            Activation::Identity => 1,
        };
        out.write_all(&act.to_le_bytes())?;
        for v in layer.weights.as_slice().iter().chain(&layer.bias) {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(truncated)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64s<R: Read>(r: &mut R, count: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; count * 8];
    r.read_exact(&mut bytes).map_err(truncated)?;
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
}

fn truncated(e: io::Error) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        Error::Checkpoint("truncated".into())
    } else {
        Error::Io(e)
    }
}

pub fn read_network<R: Read>(mut input: R) -> Result<Network> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint(format!("bad magic {magic:?}")));
    }
    let version = read_u32(&mut input)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = read_u32(&mut input)? as usize;
    let head = match read_u32(&mut input)? {
        0 => TaskHead::SoftmaxCrossEntropy,
        1 => TaskHead::L2Reconstruction,
        other => return Err(Error::Checkpoint(format!("unknown head tag {other}"))),
    };
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let fan_in = read_u32(&mut input)? as usize;
        let fan_out = read_u32(&mut input)? as usize;
        let activation = match read_u32(&mut input)? {
            0 => Activation::Relu,
            1 => Activation::Identity,
            other => return Err(Error::Checkpoint(format!("unknown activation tag {other}"))),
        };
        let weights = Matrix::from_vec(fan_in, fan_out, read_f64s(&mut input, fan_in * fan_out)?)?;
        let bias = read_f64s(&mut input, fan_out)?;
        layers.push(Layer { weights, bias, activation });
    }
    Network::new(layers, head)
}

pub fn save(net: &Network, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_network(net, &mut buf)?;
    let tmp = path.with_extension("rshp.tmp");
    fs::write(&tmp, &buf)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Network> {
    read_network(io::BufReader::new(fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let net = Network::mlp(5, &[4, 3], 2, 17).unwrap();
        let mut buf = Vec::new();
        write_network(&net, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"RSHP");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 3);
        assert_eq!(read_network(buf.as_slice()).unwrap(), net);

        let ae = Network::autoencoder(&[6, 3, 6], 1).unwrap();
        let mut buf = Vec::new();
        write_network(&ae, &mut buf).unwrap();
        assert_eq!(read_network(buf.as_slice()).unwrap(), ae);
    }

    #[test]
    fn detects_corruption() {
        let net = Network::mlp(3, &[2], 2, 1).unwrap();
        let mut buf = Vec::new();
        write_network(&net, &mut buf).unwrap();
        assert!(matches!(read_network(&buf[..buf.len() - 3]), Err(Error::Checkpoint(_))));
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_network(bad.as_slice()), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.rshp");
        let net = Network::mlp(4, &[3], 2, 5).unwrap();
        save(&net, &path).unwrap();
        assert_eq!(load(&path).unwrap(), net);
    }
}

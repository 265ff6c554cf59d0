//! Binary checkpoint: magic, format version, JSON network config, then the
//! flat parameter vector as little-endian f32.

use std::fs;
use std::path::Path;

use super::config::NetworkConfig;
use super::network::Network;
use super::real::Real;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SUBVOXNN";
pub const VERSION: u32 = 1;

pub fn encode<T: Real>(net: &Network<T>) -> Vec<u8> {
    let config = serde_json::to_vec(net.config()).expect("network config serialises");
    let mut out = Vec::with_capacity(32 + config.len() + 4 * net.n_params());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(config.len() as u64).to_le_bytes());
    out.extend_from_slice(&config);
    out.extend_from_slice(&(net.n_params() as u64).to_le_bytes());
    for p in net.params() {
        out.extend_from_slice(&(p.as_f64() as f32).to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode<T: Real>(bytes: &[u8], path: &Path) -> Result<Network<T>> {
    let fail = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8).map_err(fail)? != MAGIC {
        return Err(fail("not a model checkpoint".into()));
    }
    let version = u32::from_le_bytes(r.take(4).map_err(fail)?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(fail(format!("unsupported checkpoint version {version}")));
    }
    let len = r.u64().map_err(fail)? as usize;
    let config: NetworkConfig = serde_json::from_slice(r.take(len).map_err(fail)?).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    let n = r.u64().map_err(fail)? as usize;
    let blob = r.take(n.checked_mul(4).ok_or_else(|| fail("parameter count overflows".into()))?).map_err(fail)?;
    if r.pos != bytes.len() {
        return Err(fail(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let params = blob
        .chunks_exact(4)
        .map(|c| T::from_f64(f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64))
        .collect();
    Network::from_params(config, params)
}

pub fn save<T: Real>(net: &Network<T>, path: &Path) -> Result<()> {
    fs::write(path, encode(net)).map_err(|e| Error::io(path, e))
}

pub fn load<T: Real>(path: &Path) -> Result<Network<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::Kind;

    #[test]
    fn round_trip() {
        let net = Network::<f32>::init(NetworkConfig::desk(Kind::Airway), 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        save(&net, &path).unwrap();
        let back: Network<f32> = load(&path).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn rejects_corruption() {
        let net = Network::<f32>::init(NetworkConfig::tiny(Kind::Vessel), 9).unwrap();
        let bytes = encode(&net);
        let p = Path::new("x");
        assert!(decode::<f32>(&bytes[..bytes.len() - 1], p).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode::<f32>(&bad, p).is_err());
        let mut bad = bytes;
        bad[8] = 7;
        assert!(decode::<f32>(&bad, p).is_err());
    }
}

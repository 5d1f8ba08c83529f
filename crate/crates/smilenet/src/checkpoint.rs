//! `NETv0001` checkpoints: magic, the network config, then every
//! parametric layer's weights and bias in stack order as `TNSRv001` blobs.
//!
//! Config layout (little-endian): `u32` convs, `u32` hidden layers, `u32`
//! hidden units, `f64` dropout, `u32` input height, `u32` input width,
//! `u32` classes, `u32` feature maps.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use smilenet_core::nn::{Layer, Network, NetworkConfig, Params};

use crate::binio::{checked_u32, put_f64, put_u32, Reader};
use crate::error::{Error, Result};
use crate::tensor_io::{read_tensor, write_tensor};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"NETv0001";

pub fn write_network<W: Write>(w: &mut W, net: &Network) -> Result<()> {
    let c = net.config();
    w.write_all(CHECKPOINT_MAGIC)?;
    put_u32(w, checked_u32(c.num_convs, "convs")?)?;
    put_u32(w, checked_u32(c.num_hidden_layers, "hidden layers")?)?;
    put_u32(w, checked_u32(c.hidden_units, "hidden units")?)?;
    put_f64(w, c.dropout_p)?;
    put_u32(w, checked_u32(c.input_height, "input height")?)?;
    put_u32(w, checked_u32(c.input_width, "input width")?)?;
    put_u32(w, checked_u32(c.num_classes, "classes")?)?;
    put_u32(w, checked_u32(c.feature_maps, "feature maps")?)?;
    for p in net.layers().iter().filter_map(Layer::params) {
        write_tensor(w, &p.weights)?;
        write_tensor(w, &p.bias)?;
    }
    Ok(())
}

pub fn read_network<R: Read>(r: R) -> Result<Network> {
    let mut r = Reader::new(r);
    r.magic(CHECKPOINT_MAGIC)?;
    let config = NetworkConfig {
        num_convs: r.u32("convs")? as usize,
        num_hidden_layers: r.u32("hidden layers")? as usize,
        hidden_units: r.u32("hidden units")? as usize,
        dropout_p: r.f64("dropout")?,
        input_height: r.u32("input height")? as usize,
        input_width: r.u32("input width")? as usize,
        num_classes: r.u32("classes")? as usize,
        feature_maps: r.u32("feature maps")? as usize,
    };
    let header_end = r.offset();
    config.validate().map_err(|e| Error::Malformed { offset: header_end, reason: e.to_string() })?;
    let layers = config.num_convs + config.num_hidden_layers + 1;
    let mut params = Vec::with_capacity(layers);
    for _ in 0..layers {
        let weights = read_tensor(&mut r)?;
        let bias = read_tensor(&mut r)?;
        params.push(Params { weights, bias });
    }
    if !r.at_end()? {
        return Err(r.malformed("trailing bytes after the last layer"));
    }
    Network::from_parts(config, params).map_err(|e| Error::Malformed { offset: header_end, reason: e.to_string() })
}

pub fn save_network(path: &Path, net: &Network) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_network(&mut w, net)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_network(path: &Path) -> Result<Network> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_network(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use smilenet_core::seeded;

    #[test]
    fn round_trip_and_truncation() {
        let cfg =
            NetworkConfig { feature_maps: 2, hidden_units: 5, dropout_p: 0.1, ..Default::default() }.with_input(14, 12);
        let net = Network::build(cfg, &mut seeded(3)).unwrap();
        let mut buf = Vec::new();
        write_network(&mut buf, &net).unwrap();
        assert_eq!(&buf[..8], b"NETv0001");
        assert_eq!(read_network(&buf[..]).unwrap(), net);

        buf.truncate(buf.len() - 1);
        assert!(matches!(read_network(&buf[..]), Err(Error::Malformed { .. })));
        assert!(matches!(read_network(&buf[..20]), Err(Error::Malformed { .. })));
    }
}

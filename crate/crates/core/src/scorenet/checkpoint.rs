//! Checkpoint layout after the common frame (`DDSCKPT\0`, version 1):
//!
//! ```text
//! data_dim u64 | hidden u64 | center f64 | scale f64 | params f64 × n
//! seed u64 | epochs u64 | sigma_min f64 | sigma_max f64 | mode str
//! distribution: kind u8 (0 fixed, 1 empirical) + f64 | vec f64
//! loss_history vec f64
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ScoreNet, SigmaConditioning};
use crate::binio::{Reader, Writer};
use crate::error::{Error, Result};
use crate::smoothing::SigmaDistribution;

const MAGIC: &[u8; 8] = b"DDSCKPT\0";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub epochs: usize,
    pub sigma_range: (f64, f64),
    pub sigma_mode: String,
    /// Noise law used at sampling time.
    pub sigma_distribution: SigmaDistribution,
    pub loss_history: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub net: ScoreNet,
    pub meta: CheckpointMeta,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(MAGIC, VERSION);
        let net = &self.net;
        w.u64(net.data_dim() as u64);
        w.u64(net.hidden() as u64);
        w.f64(net.conditioning.center);
        w.f64(net.conditioning.scale);
        w.f64s(&net.params());
        let m = &self.meta;
        w.u64(m.seed);
        w.u64(m.epochs as u64);
        w.f64(m.sigma_range.0);
        w.f64(m.sigma_range.1);
        w.str(&m.sigma_mode);
        match &m.sigma_distribution {
            SigmaDistribution::Fixed(s) => {
                w.u8(0);
                w.f64(*s);
            }
            SigmaDistribution::Empirical(v) => {
                w.u8(1);
                w.vec_f64(v);
            }
        }
        w.vec_f64(&m.loss_history);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open(bytes, MAGIC, VERSION)?;
        let data_dim = r.usize()?;
        let hidden = r.usize()?;
        let conditioning = SigmaConditioning {
            center: r.f64()?,
            scale: r.f64()?,
        };
        let mut net = ScoreNet::new(data_dim, hidden, conditioning, 0);
        let params = r.f64s(net.n_params())?;
        net.set_params(&params)?;
        let seed = r.u64()?;
        let epochs = r.usize()?;
        let sigma_range = (r.f64()?, r.f64()?);
        let sigma_mode = r.str()?;
        let sigma_distribution = match r.u8()? {
            0 => SigmaDistribution::Fixed(r.f64()?),
            1 => SigmaDistribution::Empirical(r.vec_f64()?),
            k => return Err(Error::Corrupt(format!("unknown sigma distribution kind {k}"))),
        };
        let loss_history = r.vec_f64()?;
        r.finish()?;
        Ok(Checkpoint {
            net,
            meta: CheckpointMeta {
                seed,
                epochs,
                sigma_range,
                sigma_mode,
                sigma_distribution,
                loss_history,
            },
        })
    }
}

pub fn save_checkpoint(checkpoint: &Checkpoint, path: &Path) -> Result<()> {
    crate::util::write_atomic(path, &checkpoint.to_bytes())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    Checkpoint::from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng as _;

    fn sample() -> Checkpoint {
        Checkpoint {
            net: ScoreNet::random(10, 5, SigmaConditioning::from_range(0.4, 0.6), 3),
            meta: CheckpointMeta {
                seed: 9,
                epochs: 40,
                sigma_range: (0.4, 0.6),
                sigma_mode: "dds".into(),
                sigma_distribution: SigmaDistribution::Empirical(vec![0.4, 0.55, 0.6]),
                loss_history: vec![3.0, 2.0],
            },
        }
    }

    #[test]
    fn roundtrip_is_bit_identical() {
        let ck = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        save_checkpoint(&ck, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.meta.sigma_range, (0.4, 0.6));
        let mut rng = rng_from_seed(0);
        for _ in 0..100 {
            let y: Vec<f64> = (0..10).map(|_| rng.random_range(-2.0..2.0)).collect();
            let s = rng.random_range(0.4..0.6);
            let a = ck.net.forward(&y, s).unwrap();
            let b = back.net.forward(&y, s).unwrap();
            assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn corruption_is_rejected() {
        let bytes = sample().to_bytes();
        assert!(matches!(
            Checkpoint::from_bytes(&bytes[..bytes.len() - 10]),
            Err(Error::Checksum(_))
        ));
        let mut flipped = bytes.clone();
        flipped[40] ^= 1;
        assert!(matches!(Checkpoint::from_bytes(&flipped), Err(Error::Checksum(_))));
        assert!(matches!(
            load_checkpoint(Path::new("/nonexistent/ckpt")),
            Err(Error::MissingFile(_))
        ));
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let mut w = Writer::new(MAGIC, VERSION + 1);
        w.u64(1);
        assert!(matches!(
            Checkpoint::from_bytes(&w.finish()),
            Err(Error::Version { .. })
        ));
    }
}

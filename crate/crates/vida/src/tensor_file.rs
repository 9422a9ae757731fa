//! `pano.bin`: a little-endian panorama container.
//!
//! Layout: magic `VPAN`, u32 version, u32 height, u32 width, then the depth,
//! albedo and speaker-mask planes as row-major f32.

use std::io::{Read, Write};
use std::path::Path;

use vida_core::view::Panorama;

use crate::error::{Result, VidaError};

const MAGIC: &[u8; 4] = b"VPAN";
const VERSION: u32 = 1;

pub fn encode_panorama(p: &Panorama) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 12 * p.width * p.height);
    out.extend_from_slice(MAGIC);
    for v in [VERSION, p.height as u32, p.width as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for plane in p.channels() {
        for &v in plane {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_panorama(bytes: &[u8], path: &Path) -> Result<Panorama> {
    let bad = |d: &str| VidaError::format(path, d);
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(bad("not a panorama file"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    if word(0) != VERSION {
        return Err(bad(&format!("unsupported version {}", word(0))));
    }
    let (h, w) = (word(1) as usize, word(2) as usize);
    let n = h * w;
    if bytes.len() != 16 + 12 * n {
        return Err(bad(&format!("{} bytes for a {h}x{w} panorama", bytes.len())));
    }
    let plane = |k: usize| -> Vec<f64> {
        bytes[16 + 4 * n * k..16 + 4 * n * (k + 1)].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect()
    };
    Ok(Panorama::from_channels(w, h, [plane(0), plane(1), plane(2)])?)
}

pub fn write_panorama(path: &Path, p: &Panorama) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| VidaError::io(path, e))?;
    f.write_all(&encode_panorama(p)).map_err(|e| VidaError::io(path, e))
}

pub fn read_panorama(path: &Path) -> Result<Panorama> {
    let mut bytes = Vec::new();
    std::fs::File::open(path).and_then(|mut f| f.read_to_end(&mut bytes)).map_err(|e| VidaError::io(path, e))?;
    decode_panorama(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip(h in 1usize..6, w in 1usize..9, seed in any::<u64>()) {
            let v = |k: u64| (0..h * w).map(|i| ((seed.wrapping_mul(31).wrapping_add(k * 7 + i as u64) % 1000) as f32 / 100.0) as f64).collect::<Vec<_>>();
            let p = Panorama::from_channels(w, h, [v(1), v(2), v(3)]).unwrap();
            let back = decode_panorama(&encode_panorama(&p), Path::new("mem")).unwrap();
            prop_assert_eq!(back, p);
        }
    }

    #[test]
    fn truncated_file_is_rejected() {
        let p = Panorama::from_channels(2, 2, [vec![1.0; 4], vec![0.5; 4], vec![0.0; 4]]).unwrap();
        let bytes = encode_panorama(&p);
        assert!(decode_panorama(&bytes[..bytes.len() - 1], Path::new("mem")).is_err());
        assert!(decode_panorama(b"NOPE0000000000000000", Path::new("mem")).is_err());
    }
}

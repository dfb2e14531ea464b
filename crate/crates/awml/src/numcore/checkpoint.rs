//! Bit-exact parameter checkpoints.
//!
//! A checkpoint is a directory holding a text manifest and one binary blob:
//!
//! ```text
//! manifest.txt   format/dtype/byte-order header, then one line per entry:
//!                entry <set>/<name> shape <d0>x<d1> offset <bytes> count <elems>
//! data.bin       raw little-endian IEEE-754 f64 arrays, concatenated in
//!                manifest order
//! ```
//!
//! Several named [`ParamSet`]s are stored together (world-model components
//! and the Q-net each get their own namespace). Loading reproduces every bit
//! of every value, which the round-trip test asserts via `to_bits`.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{NumError, ParamSet, Tensor};

const FORMAT_LINE: &str = "format awml-checkpoint 1";

/// Writes `sets` to `dir` (created if missing) as manifest + data blob.
pub fn save_checkpoint(dir: &Path, sets: &[(&str, &ParamSet)]) -> Result<(), NumError> {
    fs::create_dir_all(dir)?;
    let mut manifest = String::new();
    manifest.push_str(FORMAT_LINE);
    manifest.push('\n');
    manifest.push_str("dtype f64\nbyte_order little_endian\n");

    let mut blob: Vec<u8> = Vec::new();
    for (set_name, set) in sets {
        for (name, tensor) in set.iter() {
            let shape = tensor
                .shape()
                .iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join("x");
            manifest.push_str(&format!(
                "entry {set_name}/{name} shape {shape} offset {} count {}\n",
                blob.len(),
                tensor.len()
            ));
            for v in tensor.as_slice() {
                blob.extend_from_slice(&v.to_le_bytes());
            }
        }
    }

    let mut mf = fs::File::create(dir.join("manifest.txt"))?;
    mf.write_all(manifest.as_bytes())?;
    fs::write(dir.join("data.bin"), blob)?;
    Ok(())
}

/// Loads every set stored in `dir`, in manifest order.
pub fn load_checkpoint(dir: &Path) -> Result<Vec<(String, ParamSet)>, NumError> {
    let manifest = fs::read_to_string(dir.join("manifest.txt"))?;
    let blob = fs::read(dir.join("data.bin"))?;
    let mut lines = manifest.lines();
    if lines.next() != Some(FORMAT_LINE) {
        return Err(NumError::Parse("unrecognized checkpoint format line".into()));
    }

    let mut sets: Vec<(String, ParamSet)> = Vec::new();
    for line in lines {
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            ["dtype", "f64"] | ["byte_order", "little_endian"] => {}
            ["dtype", other] => {
                return Err(NumError::Parse(format!("unsupported dtype {other}")));
            }
            ["byte_order", other] => {
                return Err(NumError::Parse(format!("unsupported byte order {other}")));
            }
            ["entry", path, "shape", shape, "offset", offset, "count", count] => {
                let (set_name, param_name) = path
                    .split_once('/')
                    .ok_or_else(|| NumError::Parse(format!("entry path {path:?} lacks a namespace")))?;
                let shape: Vec<usize> = shape
                    .split('x')
                    .map(|d| d.parse().map_err(|_| NumError::Parse(format!("bad shape {shape:?}"))))
                    .collect::<Result<_, _>>()?;
                let offset: usize =
                    offset.parse().map_err(|_| NumError::Parse(format!("bad offset {offset:?}")))?;
                let count: usize =
                    count.parse().map_err(|_| NumError::Parse(format!("bad count {count:?}")))?;
                let end = offset + count * 8;
                if end > blob.len() {
                    return Err(NumError::Parse(format!(
                        "entry {path} spans bytes {offset}..{end} but blob has {}",
                        blob.len()
                    )));
                }
                let data: Vec<f64> = blob[offset..end]
                    .chunks_exact(8)
                    .map(|b| f64::from_le_bytes(b.try_into().expect("chunk of 8")))
                    .collect();
                let tensor = Tensor::from_vec(&shape, data)?;
                if sets.last().map(|(n, _)| n.as_str()) != Some(set_name) {
                    sets.push((set_name.to_string(), ParamSet::new()));
                }
                sets.last_mut().expect("just pushed").1.insert(param_name, tensor)?;
            }
            [] => {}
            _ => return Err(NumError::Parse(format!("unparseable manifest line {line:?}"))),
        }
    }
    Ok(sets)
}

#[cfg(test)]
mod tests {
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn roundtrip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut a = ParamSet::new();
        let mut w = Tensor::zeros(&[3, 5]);
        for v in w.as_mut_slice() {
            *v = rng.gen_range(-10.0..10.0);
        }
        // Include values that stress the text path if anyone ever tried to
        // print them: subnormal, negative zero, extremes.
        a.insert("w", w).unwrap();
        a.insert(
            "edge",
            Tensor::from_vec(&[1, 4], vec![f64::MIN_POSITIVE / 8.0, -0.0, 1e300, -1e-300]).unwrap(),
        )
        .unwrap();
        let mut b = ParamSet::new();
        b.insert("q", Tensor::filled(&[2, 2], 0.125)).unwrap();

        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(dir.path(), &[("wm", &a), ("dqn", &b)]).unwrap();
        let loaded = load_checkpoint(dir.path()).unwrap();

        assert_eq!(loaded.len(), 2);
        assert_eq!(loaded[0].0, "wm");
        assert_eq!(loaded[1].0, "dqn");
        for (orig, (_, got)) in [&a, &b].iter().zip(&loaded) {
            assert!(orig.same_schema(got));
            for ((_, x), (_, y)) in orig.iter().zip(got.iter()) {
                for (xv, yv) in x.as_slice().iter().zip(y.as_slice()) {
                    assert_eq!(xv.to_bits(), yv.to_bits());
                }
            }
        }
    }

    #[test]
    fn rejects_corrupt_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = ParamSet::new();
        p.insert("w", Tensor::scalar(1.0)).unwrap();
        save_checkpoint(dir.path(), &[("m", &p)]).unwrap();
        let manifest = dir.path().join("manifest.txt");
        let text = std::fs::read_to_string(&manifest).unwrap();
        std::fs::write(&manifest, text.replace("count 1", "count 99")).unwrap();
        assert!(load_checkpoint(dir.path()).is_err());
    }
}

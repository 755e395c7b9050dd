//! Raw record files: an 8-byte magic, then `dim: u64`, `dt_fine: f64`,
//! `n_per_bin: u64`, `count: u64`, then `count` samples. All fields are
//! little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{FineRecordSegment, RecordError};

pub const RECORD_MAGIC: &[u8; 8] = b"QTRJREC1";

/// A replayable fine-grained record.
#[derive(Clone, Debug, PartialEq)]
pub struct RecordFile {
    pub dim: u64,
    pub dt_fine: f64,
    pub n_per_bin: u64,
    pub samples: Vec<f64>,
}

impl RecordFile {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), RecordError> {
        w.write_all(RECORD_MAGIC)?;
        w.write_all(&self.dim.to_le_bytes())?;
        w.write_all(&self.dt_fine.to_le_bytes())?;
        w.write_all(&self.n_per_bin.to_le_bytes())?;
        w.write_all(&(self.samples.len() as u64).to_le_bytes())?;
        for y in &self.samples {
            w.write_all(&y.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, RecordError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != RECORD_MAGIC {
            return Err(RecordError::BadMagic);
        }
        let mut word = [0u8; 8];
        let mut next = |r: &mut R| -> Result<[u8; 8], RecordError> {
            r.read_exact(&mut word)?;
            Ok(word)
        };
        let dim = u64::from_le_bytes(next(&mut r)?);
        let dt_fine = f64::from_le_bytes(next(&mut r)?);
        let n_per_bin = u64::from_le_bytes(next(&mut r)?);
        let count = u64::from_le_bytes(next(&mut r)?);
        if !(dt_fine > 0.0 && dt_fine.is_finite()) {
            return Err(RecordError::NonPositiveStep(dt_fine));
        }
        if n_per_bin == 0 {
            return Err(RecordError::Corrupt("zero samples per bin".into()));
        }
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() as u64 != count.saturating_mul(8) {
            return Err(RecordError::Corrupt(format!(
                "header announces {count} samples, payload holds {} bytes",
                bytes.len()
            )));
        }
        let samples = bytes
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("chunk of 8")))
            .collect();
        Ok(Self {
            dim,
            dt_fine,
            n_per_bin,
            samples,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), RecordError> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RecordError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }

    /// Splits the samples into whole bins; a trailing partial bin is an error.
    pub fn segments(&self) -> Result<Vec<FineRecordSegment>, RecordError> {
        let n = self.n_per_bin as usize;
        if self.samples.len() % n != 0 {
            return Err(RecordError::Corrupt(format!(
                "{} samples do not fill bins of {n}",
                self.samples.len()
            )));
        }
        let dt_bin = n as f64 * self.dt_fine;
        self.samples
            .chunks(n)
            .enumerate()
            .map(|(j, chunk)| {
                FineRecordSegment::new(j as f64 * dt_bin, self.dt_fine, chunk.to_vec())
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_file() -> RecordFile {
        RecordFile {
            dim: 2,
            dt_fine: 1e-4,
            n_per_bin: 3,
            samples: vec![0.5, -1.25, 3.0, 1e-300, -0.0, 42.0],
        }
    }

    #[test]
    fn round_trip_in_memory() {
        let f = sample_file();
        let mut buf = Vec::new();
        f.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..8], RECORD_MAGIC);
        assert_eq!(buf.len(), 8 + 32 + 6 * 8);
        let back = RecordFile::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, f);
        let segs = back.segments().unwrap();
        assert_eq!(segs.len(), 2);
        assert!((segs[1].t0() - 3e-4).abs() < 1e-18);
    }

    #[test]
    fn round_trip_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rec.bin");
        let f = sample_file();
        f.save(&path).unwrap();
        assert_eq!(RecordFile::load(&path).unwrap(), f);
    }

    #[test]
    fn rejects_bad_input() {
        let f = sample_file();
        let mut buf = Vec::new();
        f.write_to(&mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(
            RecordFile::read_from(bad.as_slice()),
            Err(RecordError::BadMagic)
        ));
        let short = &buf[..buf.len() - 4];
        assert!(matches!(
            RecordFile::read_from(short),
            Err(RecordError::Corrupt(_))
        ));
        let partial = RecordFile { n_per_bin: 4, ..f };
        assert!(partial.segments().is_err());
    }
}

//! Versioned, checksummed single-section files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "CSRCHIDX"
//! kind     4 bytes  ASCII section kind, e.g. "TERM"
//! version  u32
//! length   u64      payload length in bytes
//! sha256   32 bytes digest of the payload
//! payload  `length` bytes
//! ```

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

const MAGIC: &[u8; 8] = b"CSRCHIDX";
const HEADER_LEN: usize = 8 + 4 + 4 + 8 + 32;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: not an index file")]
    BadMagic { path: PathBuf },
    #[error("{path}: expected section {expected}, found {found}")]
    WrongKind {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("{path}: unsupported format version {found} (expected {expected})")]
    Version { path: PathBuf, found: u32, expected: u32 },
    #[error("{path}: checksum mismatch (file truncated or corrupted)")]
    Checksum { path: PathBuf },
    #[error("{path}: corrupt payload: {reason}")]
    Corrupt { path: PathBuf, reason: String },
}

impl PersistError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        PersistError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `payload` as a section file, returning the payload digest.
pub fn write_section(path: &Path, kind: &[u8; 4], version: u32, payload: &[u8]) -> Result<String, PersistError> {
    let digest = Sha256::digest(payload);
    let file = File::create(path).map_err(|e| PersistError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(kind)?;
        w.write_all(&version.to_le_bytes())?;
        w.write_all(&(payload.len() as u64).to_le_bytes())?;
        w.write_all(&digest)?;
        w.write_all(payload)?;
        w.flush()?;
        w.get_ref().sync_all()
    };
    write(&mut w).map_err(|e| PersistError::io(path, e))?;
    Ok(hex::encode(digest))
}

/// Reads and verifies a section file.
pub fn read_section(path: &Path, kind: &[u8; 4], version: u32) -> Result<Vec<u8>, PersistError> {
    let mut file = File::open(path).map_err(|e| PersistError::io(path, e))?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes).map_err(|e| PersistError::io(path, e))?;
    if bytes.len() < HEADER_LEN {
        if bytes.len() >= 8 && &bytes[..8] != MAGIC {
            return Err(PersistError::BadMagic { path: path.into() });
        }
        return Err(PersistError::Checksum { path: path.into() });
    }
    if &bytes[..8] != MAGIC {
        return Err(PersistError::BadMagic { path: path.into() });
    }
    if &bytes[8..12] != kind {
        return Err(PersistError::WrongKind {
            path: path.into(),
            expected: String::from_utf8_lossy(kind).into_owned(),
            found: String::from_utf8_lossy(&bytes[8..12]).into_owned(),
        });
    }
    let found = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes"));
    if found != version {
        return Err(PersistError::Version {
            path: path.into(),
            found,
            expected: version,
        });
    }
    let len = u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes"));
    let digest: [u8; 32] = bytes[24..56].try_into().expect("32 bytes");
    let mut payload = bytes.split_off(HEADER_LEN);
    if payload.len() as u64 != len || Sha256::digest(&payload).as_slice() != digest {
        return Err(PersistError::Checksum { path: path.into() });
    }
    payload.shrink_to_fit();
    Ok(payload)
}

/// Little-endian payload encoder.
#[derive(Default)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn str(&mut self, s: &str) -> &mut Self {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
        self
    }

    pub fn opt_str(&mut self, s: Option<&str>) -> &mut Self {
        match s {
            Some(s) => {
                self.buf.push(1);
                self.str(s)
            }
            None => {
                self.buf.push(0);
                self
            }
        }
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

/// Bounds-checked counterpart of [`Encoder`].
pub struct Decoder<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Decoder<'a> {
    pub fn new(buf: &'a [u8], path: &'a Path) -> Self {
        Decoder { buf, pos: 0, path }
    }

    fn corrupt(&self, reason: &str) -> PersistError {
        PersistError::Corrupt {
            path: self.path.to_path_buf(),
            reason: format!("{reason} at byte {}", self.pos),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], PersistError> {
        if self.buf.len() - self.pos < n {
            return Err(self.corrupt("unexpected end of payload"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8, PersistError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, PersistError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self) -> Result<u64, PersistError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn str(&mut self) -> Result<String, PersistError> {
        let n = self.u32()? as usize;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| self.corrupt("invalid UTF-8 string"))
    }

    pub fn opt_str(&mut self) -> Result<Option<String>, PersistError> {
        match self.u8()? {
            0 => Ok(None),
            1 => self.str().map(Some),
            _ => Err(self.corrupt("invalid option tag")),
        }
    }

    pub fn finish(self) -> Result<(), PersistError> {
        if self.pos != self.buf.len() {
            return Err(self.corrupt("trailing bytes"));
        }
        Ok(())
    }

    pub fn error(&self, reason: &str) -> PersistError {
        self.corrupt(reason)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_failures() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.bin");
        let mut e = Encoder::new();
        e.u32(7).u64(9).str("héllo").opt_str(None).opt_str(Some("u"));
        let payload = e.finish();
        write_section(&p, b"TEST", 1, &payload).unwrap();

        let got = read_section(&p, b"TEST", 1).unwrap();
        let mut d = Decoder::new(&got, &p);
        assert_eq!(d.u32().unwrap(), 7);
        assert_eq!(d.u64().unwrap(), 9);
        assert_eq!(d.str().unwrap(), "héllo");
        assert_eq!(d.opt_str().unwrap(), None);
        assert_eq!(d.opt_str().unwrap().as_deref(), Some("u"));
        d.finish().unwrap();

        assert!(matches!(
            read_section(&p, b"TEST", 2),
            Err(PersistError::Version { found: 1, .. })
        ));
        assert!(matches!(
            read_section(&p, b"OTHR", 1),
            Err(PersistError::WrongKind { .. })
        ));

        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(
            read_section(&p, b"TEST", 1),
            Err(PersistError::Checksum { .. })
        ));

        let mut flipped = bytes.clone();
        *flipped.last_mut().unwrap() ^= 1;
        std::fs::write(&p, &flipped).unwrap();
        assert!(matches!(
            read_section(&p, b"TEST", 1),
            Err(PersistError::Checksum { .. })
        ));

        std::fs::write(&p, b"garbage garbage garbage garbage garbage garbage garbage").unwrap();
        assert!(matches!(
            read_section(&p, b"TEST", 1),
            Err(PersistError::BadMagic { .. })
        ));
    }

    #[test]
    fn decoder_rejects_overrun() {
        let p = Path::new("mem");
        let mut d = Decoder::new(&[1, 0], p);
        assert!(d.u32().is_err());
    }
}

//! Little-endian binary framing shared by all on-disk artifacts.
//!
//! Every artifact starts with a 4-byte magic and a u32 version; the rest is
//! fixed-width integers, IEEE doubles, and length-prefixed UTF-8 strings.
//! Readers must reject wrong magics and unknown versions, and report
//! truncation as a format error rather than panicking.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// A reader that tracks the path it came from so errors can name it.
pub(crate) struct ArtifactReader<R: Read> {
    inner: R,
    path: PathBuf,
}

impl ArtifactReader<BufReader<File>> {
    pub(crate) fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(ArtifactReader {
            inner: BufReader::new(file),
            path: path.to_path_buf(),
        })
    }
}

impl<R: Read> ArtifactReader<R> {
    fn fill(&mut self, buf: &mut [u8]) -> Result<()> {
        self.inner.read_exact(buf).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                Error::format(self.path.display().to_string(), "truncated file")
            } else {
                Error::io(&self.path, e)
            }
        })
    }

    /// Checks the magic/version header. Wrong magic is a format error naming
    /// the path; a right magic with an unknown version is a version error.
    pub(crate) fn expect_header(&mut self, magic: &[u8; 4], version: u32) -> Result<()> {
        let mut found = [0u8; 4];
        self.fill(&mut found)?;
        if &found != magic {
            return Err(Error::format(
                self.path.display().to_string(),
                format!(
                    "bad magic bytes {:?} (expected {:?})",
                    String::from_utf8_lossy(&found),
                    String::from_utf8_lossy(magic)
                ),
            ));
        }
        let got = self.read_u32()?;
        if got != version {
            return Err(Error::Version {
                path: self.path.clone(),
                found: got,
                expected: version,
            });
        }
        Ok(())
    }

    pub(crate) fn read_u8(&mut self) -> Result<u8> {
        let mut b = [0u8; 1];
        self.fill(&mut b)?;
        Ok(b[0])
    }

    pub(crate) fn read_u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.fill(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    pub(crate) fn read_u64(&mut self) -> Result<u64> {
        let mut b = [0u8; 8];
        self.fill(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }

    pub(crate) fn read_i64(&mut self) -> Result<i64> {
        let mut b = [0u8; 8];
        self.fill(&mut b)?;
        Ok(i64::from_le_bytes(b))
    }

    pub(crate) fn read_f64(&mut self) -> Result<f64> {
        let mut b = [0u8; 8];
        self.fill(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }

    pub(crate) fn read_f64_vec(&mut self, len: usize) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            out.push(self.read_f64()?);
        }
        Ok(out)
    }

    /// Length-prefixed UTF-8: u32 byte count, then the bytes.
    pub(crate) fn read_string(&mut self) -> Result<String> {
        let len = self.read_u32()? as usize;
        // A corrupt length would otherwise ask for gigabytes; anything this
        // long is bogus for a video id.
        if len > 1 << 20 {
            return Err(Error::format(
                self.path.display().to_string(),
                format!("implausible string length {len}"),
            ));
        }
        let mut buf = vec![0u8; len];
        self.fill(&mut buf)?;
        String::from_utf8(buf).map_err(|_| {
            Error::format(self.path.display().to_string(), "string is not valid UTF-8")
        })
    }

    /// Fails if any bytes remain, so trailing garbage is caught.
    pub(crate) fn expect_eof(&mut self) -> Result<()> {
        let mut b = [0u8; 1];
        match self.inner.read(&mut b) {
            Ok(0) => Ok(()),
            Ok(_) => Err(Error::format(
                self.path.display().to_string(),
                "trailing bytes after expected end of file",
            )),
            Err(e) => Err(Error::io(&self.path, e)),
        }
    }

    pub(crate) fn label(&self) -> String {
        self.path.display().to_string()
    }
}

pub(crate) struct ArtifactWriter<W: Write> {
    inner: W,
    path: PathBuf,
}

impl ArtifactWriter<BufWriter<File>> {
    pub(crate) fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(ArtifactWriter {
            inner: BufWriter::new(file),
            path: path.to_path_buf(),
        })
    }
}

impl<W: Write> ArtifactWriter<W> {
    fn put(&mut self, bytes: &[u8]) -> Result<()> {
        self.inner
            .write_all(bytes)
            .map_err(|e| Error::io(&self.path, e))
    }

    pub(crate) fn write_header(&mut self, magic: &[u8; 4], version: u32) -> Result<()> {
        self.put(magic)?;
        self.write_u32(version)
    }

    pub(crate) fn write_u8(&mut self, v: u8) -> Result<()> {
        self.put(&[v])
    }

    pub(crate) fn write_u32(&mut self, v: u32) -> Result<()> {
        self.put(&v.to_le_bytes())
    }

    pub(crate) fn write_u64(&mut self, v: u64) -> Result<()> {
        self.put(&v.to_le_bytes())
    }

    pub(crate) fn write_i64(&mut self, v: i64) -> Result<()> {
        self.put(&v.to_le_bytes())
    }

    pub(crate) fn write_f64(&mut self, v: f64) -> Result<()> {
        self.put(&v.to_le_bytes())
    }

    pub(crate) fn write_string(&mut self, s: &str) -> Result<()> {
        self.write_u32(s.len() as u32)?;
        self.put(s.as_bytes())
    }

    pub(crate) fn finish(mut self) -> Result<()> {
        self.inner.flush().map_err(|e| Error::io(&self.path, e))
    }
}

//! Reader and writer for the word2vec text and binary formats, plus the
//! tab-separated frequencies sidecar.
//!
//! Binary entries are `token ' ' <dim little-endian f32> ['\n']`. Text rows
//! are `token v1 .. vdim`, written with the shortest decimal rendering that
//! round-trips.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use crate::embedding::EmbeddingModel;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Text,
    Binary,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" | "txt" => Ok(Format::Text),
            "binary" | "bin" => Ok(Format::Binary),
            other => Err(Error::Config(format!("unknown model format {other:?}"))),
        }
    }
}

impl Format {
    pub fn name(self) -> &'static str {
        match self {
            Format::Text => "text",
            Format::Binary => "binary",
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Format::Text => "txt",
            Format::Binary => "bin",
        }
    }
}

pub fn load_model<F: Scalar>(path: impl AsRef<Path>, format: Format) -> Result<EmbeddingModel<F>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    match format {
        Format::Text => read_text(&mut reader),
        Format::Binary => read_binary(&mut reader),
    }
}

pub fn save_model<F: Scalar>(model: &EmbeddingModel<F>, path: impl AsRef<Path>, format: Format) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    match format {
        Format::Text => write_text(model, &mut writer),
        Format::Binary => write_binary(model, &mut writer),
    }
    .and_then(|()| writer.flush().map_err(Error::from))
    .map_err(|e| match e {
        Error::Stream(io) => Error::io(path, io),
        other => other,
    })
}

fn parse_header(line: &str) -> Option<(usize, usize)> {
    let mut parts = line.split_whitespace();
    let count = parts.next()?.parse().ok()?;
    let dim = parts.next()?.parse().ok()?;
    parts.next().is_none().then_some((count, dim))
}

/// Read the text format. A leading `"<count> <dim>"` header is optional.
pub fn read_text<F: Scalar, R: BufRead>(reader: &mut R) -> Result<EmbeddingModel<F>> {
    let mut lines = reader.lines().enumerate();
    let mut expected = None;
    let mut model: Option<EmbeddingModel<F>> = None;
    let mut row = Vec::new();

    for (i, line) in &mut lines {
        let lineno = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if lineno == 1 {
            if let Some((count, dim)) = parse_header(&line) {
                expected = Some(count);
                model = Some(EmbeddingModel::new(dim));
                continue;
            }
        }
        let mut fields = line.split_whitespace();
        let token = fields.next().expect("non-empty line has a field");
        row.clear();
        for field in fields {
            let v: F = field.parse().map_err(|_| Error::parse_at_line(lineno, format!("invalid number {field:?}")))?;
            if !v.is_finite() {
                return Err(Error::parse_at_line(lineno, format!("non-finite value {field:?}")));
            }
            row.push(v);
        }
        let m = model.get_or_insert_with(|| EmbeddingModel::new(row.len()));
        if row.len() != m.dim() {
            return Err(Error::parse_at_line(lineno, format!("expected {} components, found {}", m.dim(), row.len())));
        }
        if expected.is_some_and(|n| m.len() >= n) {
            return Err(Error::parse_at_line(lineno, "more rows than the header declares"));
        }
        m.push(token, &row, 0).map_err(|e| Error::parse_at_line(lineno, e.to_string()))?;
    }

    let model = model.unwrap_or_else(|| EmbeddingModel::new(0));
    if let Some(n) = expected {
        if model.len() != n {
            return Err(Error::Parse {
                location: "end of file".into(),
                message: format!("header declares {n} rows, found {}", model.len()),
            });
        }
    }
    Ok(model)
}

pub fn write_text<F: Scalar, W: Write>(model: &EmbeddingModel<F>, w: &mut W) -> Result<()> {
    writeln!(w, "{} {}", model.len(), model.dim())?;
    for (i, token) in model.tokens().iter().enumerate() {
        w.write_all(token.as_bytes())?;
        for v in model.vector(i) {
            write!(w, " {v}")?;
        }
        w.write_all(b"\n")?;
    }
    Ok(())
}

struct CountingReader<R> {
    inner: R,
    offset: u64,
}

impl<R: BufRead> CountingReader<R> {
    fn peek(&mut self) -> Result<Option<u8>> {
        Ok(self.inner.fill_buf()?.first().copied())
    }

    fn consume(&mut self, n: usize) {
        self.inner.consume(n);
        self.offset += n as u64;
    }

    fn read_until(&mut self, delim: u8, buf: &mut Vec<u8>) -> Result<bool> {
        let n = self.inner.read_until(delim, buf)?;
        self.offset += n as u64;
        if buf.last() == Some(&delim) {
            buf.pop();
            Ok(true)
        } else {
            Ok(false)
        }
    }

    fn read_exact(&mut self, buf: &mut [u8]) -> Result<()> {
        self.inner.read_exact(buf).map_err(|_| Error::parse_at_byte(self.offset, "truncated vector data"))?;
        self.offset += buf.len() as u64;
        Ok(())
    }
}

pub fn read_binary<F: Scalar, R: BufRead>(reader: &mut R) -> Result<EmbeddingModel<F>> {
    let mut r = CountingReader { inner: reader, offset: 0 };
    let mut buf = Vec::new();
    if !r.read_until(b'\n', &mut buf)? {
        return Err(Error::parse_at_byte(0, "missing header line"));
    }
    let header = String::from_utf8_lossy(&buf);
    let (count, dim) =
        parse_header(&header).ok_or_else(|| Error::parse_at_byte(0, format!("malformed header {header:?}")))?;

    let mut vocab = Vec::with_capacity(count);
    let mut data = Vec::with_capacity(count * dim);
    let mut bytes = vec![0u8; dim * 4];
    for entry in 0..count {
        while let Some(b) = r.peek()? {
            if b == b'\n' || b == b'\r' {
                r.consume(1);
            } else {
                break;
            }
        }
        let start = r.offset;
        buf.clear();
        if !r.read_until(b' ', &mut buf)? {
            return Err(Error::parse_at_byte(start, format!("header declares {count} entries, found {entry}")));
        }
        let token =
            String::from_utf8(buf.clone()).map_err(|_| Error::parse_at_byte(start, "token is not valid UTF-8"))?;
        if token.is_empty() {
            return Err(Error::parse_at_byte(start, "empty token"));
        }
        let vec_start = r.offset;
        r.read_exact(&mut bytes)?;
        for chunk in bytes.chunks_exact(4) {
            let v = f32::from_le_bytes(chunk.try_into().expect("chunk of 4"));
            if !v.is_finite() {
                return Err(Error::parse_at_byte(vec_start, format!("non-finite value in {token:?}")));
            }
            data.push(F::from_f64_lossy(v as f64));
        }
        vocab.push(token);
    }
    let vectors = Matrix::from_vec(count, dim, data)?;
    EmbeddingModel::from_parts(vocab, vectors, vec![0; count])
        .map_err(|e| Error::parse_at_byte(r.offset, e.to_string()))
}

pub fn write_binary<F: Scalar, W: Write>(model: &EmbeddingModel<F>, w: &mut W) -> Result<()> {
    writeln!(w, "{} {}", model.len(), model.dim())?;
    for (i, token) in model.tokens().iter().enumerate() {
        w.write_all(token.as_bytes())?;
        w.write_all(b" ")?;
        for &v in model.vector(i) {
            w.write_all(&v.as_f32().to_le_bytes())?;
        }
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Write `token\tcount` lines in vocabulary order.
pub fn save_freqs<F: Scalar>(model: &EmbeddingModel<F>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let write = || -> std::io::Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for (token, count) in model.tokens().iter().zip(model.freqs()) {
            writeln!(w, "{token}\t{count}")?;
        }
        w.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

/// Read a frequencies sidecar into `model`. Tokens missing from the model
/// are an error; model tokens missing from the sidecar keep their count.
pub fn load_freqs<F: Scalar>(model: &mut EmbeddingModel<F>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let (token, count) =
            line.split_once('\t').ok_or_else(|| Error::parse_at_line(i + 1, "expected token<TAB>count"))?;
        let count: u64 =
            count.trim().parse().map_err(|_| Error::parse_at_line(i + 1, format!("invalid count {count:?}")))?;
        let idx = model.lookup(token).ok_or_else(|| Error::parse_at_line(i + 1, format!("unknown token {token:?}")))?;
        model.set_freq(idx, count);
    }
    Ok(())
}

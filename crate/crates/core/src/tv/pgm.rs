//! Grayscale PGM images (P2 ASCII and P5 binary, 8 or 16 bit).

use crate::error::{PimError, Result};
use std::io::Write;
use std::path::Path;

/// Grayscale image with values scaled to `[0, 1]` by the file's maxval.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    /// Row-major pixel values.
    pub values: Vec<f64>,
    pub maxval: u16,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(PimError::Validation("image must be nonempty".into()));
        }
        if values.len() != width * height {
            return Err(PimError::Dimension {
                what: "pixel values",
                expected: width * height,
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(PimError::Validation(format!("pixel {i} is not finite")));
        }
        Ok(Self {
            width,
            height,
            values,
            maxval: 255,
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let values = (0..height)
            .flat_map(|r| (0..width).map(move |c| (r, c)))
            .map(|(r, c)| f(r, c))
            .collect();
        Self::new(width, height, values)
    }

    pub fn with_maxval(mut self, maxval: u16) -> Self {
        self.maxval = maxval.max(1);
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    /// Values rounded to the `maxval` grid, as they are written to disk.
    pub fn quantize(&self) -> Self {
        let m = self.maxval as f64;
        let values = self.quantized().map(|v| v as f64 / m).collect();
        Self { values, ..self.clone() }
    }

    fn quantized(&self) -> impl Iterator<Item = u16> + '_ {
        let m = self.maxval as f64;
        self.values.iter().map(move |v| (v.clamp(0.0, 1.0) * m).round() as u16)
    }

    /// Binary P5 with the given header comments.
    pub fn write_p5<W: Write>(&self, comments: &[String], mut w: W) -> std::io::Result<()> {
        write!(w, "P5\n")?;
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        write!(w, "{} {}\n{}\n", self.width, self.height, self.maxval)?;
        let bytes: Vec<u8> = if self.maxval < 256 {
            self.quantized().map(|v| v as u8).collect()
        } else {
            self.quantized().flat_map(u16::to_be_bytes).collect()
        };
        w.write_all(&bytes)
    }

    /// ASCII P2 with the given header comments.
    pub fn write_p2<W: Write>(&self, comments: &[String], mut w: W) -> std::io::Result<()> {
        writeln!(w, "P2")?;
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        writeln!(w, "{} {}\n{}", self.width, self.height, self.maxval)?;
        let q: Vec<u16> = self.quantized().collect();
        for row in q.chunks(self.width) {
            let line: Vec<String> = row.iter().map(u16::to_string).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>, comments: &[String]) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write_p5(comments, &mut buf).map_err(|e| PimError::io(path, e))?;
        std::fs::write(path, buf).map_err(|e| PimError::io(path, e))
    }
}

pub fn load_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| PimError::io(path, e))?;
    parse_pgm(&bytes)
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
    line: usize,
}

impl Header<'_> {
    fn token(&mut self) -> Result<&str> {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                if self.bytes[self.pos] == b'\n' {
                    self.line += 1;
                }
                self.pos += 1;
            }
            if self.pos < self.bytes.len() && self.bytes[self.pos] == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            break;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.error("unexpected end of file"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).map_err(|_| self.error("non-ASCII header"))
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        let tok = self.token()?.to_string();
        tok.parse().map_err(|_| self.error(&format!("bad {what} '{tok}'")))
    }

    fn error(&self, message: &str) -> PimError {
        PimError::Parse {
            line: self.line,
            message: message.to_string(),
        }
    }
}

pub fn parse_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut h = Header { bytes, pos: 0, line: 1 };
    let magic = h.token()?.to_string();
    if magic != "P2" && magic != "P5" {
        return Err(h.error(&format!("expected P2 or P5, found '{magic}'")));
    }
    let width = h.number("width")?;
    let height = h.number("height")?;
    let maxval = h.number("maxval")?;
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(h.error(&format!("invalid header {width}x{height} maxval {maxval}")));
    }
    let n = width * height;
    let raw: Vec<u16> = if magic == "P2" {
        (0..n)
            .map(|_| h.number("pixel").map(|v| v as u16))
            .collect::<Result<_>>()?
    } else {
        let data = &bytes[(h.pos + 1).min(bytes.len())..];
        let wide = maxval > 255;
        let need = if wide { 2 * n } else { n };
        if data.len() < need {
            return Err(h.error(&format!("pixel data has {} bytes, expected {need}", data.len())));
        }
        if wide {
            data[..need]
                .chunks(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]))
                .collect()
        } else {
            data[..need].iter().map(|&b| b as u16).collect()
        }
    };
    if let Some(i) = raw.iter().position(|&v| v as usize > maxval) {
        return Err(h.error(&format!("pixel {i} exceeds maxval {maxval}")));
    }
    let m = maxval as f64;
    Ok(GrayImage {
        width,
        height,
        values: raw.iter().map(|&v| v as f64 / m).collect(),
        maxval: maxval as u16,
    })
}

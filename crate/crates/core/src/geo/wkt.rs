//! Well Known Text polygons.
//!
//! Accepted grammar, case-insensitive keyword, arbitrary whitespace:
//!
//! ```text
//! [SRID=<int>;] POLYGON ( ring [, ring]* )
//! ring := ( x y [, x y]* )
//! ```

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Polygon with an outer ring followed by holes. Every ring is closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WktGeometry {
    pub rings: Vec<Vec<(f64, f64)>>,
    /// Set when the text carried an `SRID=` prefix.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crs: Option<String>,
}

impl WktGeometry {
    /// Validates ring closure and vertex counts.
    pub fn polygon(rings: Vec<Vec<(f64, f64)>>) -> Result<Self> {
        if rings.is_empty() {
            return Err(Error::param("polygon needs an outer ring"));
        }
        for (i, ring) in rings.iter().enumerate() {
            if ring.len() < 4 {
                return Err(Error::param(format!("ring {i} has {} vertices, need at least 4", ring.len())));
            }
            if ring.first() != ring.last() {
                return Err(Error::param(format!("ring {i} is not closed")));
            }
        }
        Ok(Self { rings, crs: None })
    }

    /// Axis-aligned rectangle, counter-clockwise from the lower-left corner.
    pub fn rectangle(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Self {
            rings: vec![vec![(min_x, min_y), (max_x, min_y), (max_x, max_y), (min_x, max_y), (min_x, min_y)]],
            crs: None,
        }
    }

    pub fn with_crs(mut self, crs: impl Into<String>) -> Self {
        self.crs = Some(crs.into());
        self
    }

    pub fn exterior(&self) -> &[(f64, f64)] {
        &self.rings[0]
    }

    pub fn holes(&self) -> &[Vec<(f64, f64)>] {
        &self.rings[1..]
    }

    /// `(min_x, min_y, max_x, max_y)` over the outer ring.
    pub fn envelope(&self) -> (f64, f64, f64, f64) {
        self.exterior().iter().fold(
            (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
            |(a, b, c, d), &(x, y)| (a.min(x), b.min(y), c.max(x), d.max(y)),
        )
    }
}

/// Compact form, `POLYGON((x y,x y,...))`, shortest round-trip decimals.
impl fmt::Display for WktGeometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "POLYGON(")?;
        for (i, ring) in self.rings.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "(")?;
            for (j, (x, y)) in ring.iter().enumerate() {
                if j > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{x} {y}")?;
            }
            write!(f, ")")?;
        }
        write!(f, ")")
    }
}

struct Cursor<'a> {
    text: &'a str,
    pos: usize,
}

impl Cursor<'_> {
    fn err(&self, offset: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            offset,
            message: message.into(),
        }
    }

    fn skip_ws(&mut self) {
        let rest = &self.text[self.pos..];
        self.pos += rest.len() - rest.trim_start().len();
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.text.as_bytes().get(self.pos).copied()
    }

    fn expect(&mut self, ch: u8) -> Result<()> {
        match self.peek() {
            Some(c) if c == ch => {
                self.pos += 1;
                Ok(())
            }
            Some(c) => Err(self.err(self.pos, format!("expected `{}`, found `{}`", ch as char, c as char))),
            None => Err(self.err(self.pos, format!("expected `{}`, found end of input", ch as char))),
        }
    }

    fn word(&mut self) -> (usize, &str) {
        self.skip_ws();
        let start = self.pos;
        let len = self.text[start..]
            .bytes()
            .take_while(|b| b.is_ascii_alphanumeric() || *b == b'_')
            .count();
        self.pos += len;
        (start, &self.text[start..start + len])
    }

    fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let start = self.pos;
        let len = self.text[start..]
            .bytes()
            .take_while(|b| b.is_ascii_digit() || matches!(b, b'+' | b'-' | b'.' | b'e' | b'E'))
            .count();
        let token = &self.text[start..start + len];
        if token.is_empty() {
            let found = self.text[start..].chars().next().map_or("end of input".to_string(), |c| format!("`{c}`"));
            return Err(self.err(start, format!("expected a number, found {found}")));
        }
        self.pos += len;
        token
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| self.err(start, format!("bad number `{token}`")))
    }

    fn ring(&mut self) -> Result<Vec<(f64, f64)>> {
        let start = self.pos;
        self.expect(b'(')?;
        let mut pts = Vec::new();
        loop {
            let x = self.number()?;
            let y = self.number()?;
            pts.push((x, y));
            match self.peek() {
                Some(b',') => self.pos += 1,
                Some(b')') => {
                    self.pos += 1;
                    break;
                }
                Some(c) => return Err(self.err(self.pos, format!("expected `,` or `)`, found `{}`", c as char))),
                None => return Err(self.err(self.pos, "unterminated ring")),
            }
        }
        if pts.len() < 4 {
            return Err(self.err(start, format!("ring has {} vertices, need at least 4", pts.len())));
        }
        if pts.first() != pts.last() {
            return Err(self.err(start, "ring is not closed"));
        }
        Ok(pts)
    }
}

/// Parses a single polygon. Errors report the byte offset of the problem.
pub fn parse_wkt(text: &str) -> Result<WktGeometry> {
    let mut cur = Cursor { text, pos: 0 };
    let mut crs = None;
    let (start, kw) = cur.word();
    let kw = kw.to_ascii_uppercase();
    let kind = if kw == "SRID" {
        cur.expect(b'=')?;
        cur.skip_ws();
        let at = cur.pos;
        let digits = cur.text[at..].bytes().take_while(u8::is_ascii_digit).count();
        if digits == 0 {
            return Err(cur.err(at, "expected an SRID number"));
        }
        crs = Some(format!("EPSG:{}", &cur.text[at..at + digits]));
        cur.pos += digits;
        cur.expect(b';')?;
        let (s, k) = cur.word();
        (s, k.to_ascii_uppercase())
    } else {
        (start, kw)
    };
    match kind.1.as_str() {
        "POLYGON" => {}
        "" => return Err(cur.err(kind.0, "expected a geometry keyword")),
        other => return Err(cur.err(kind.0, format!("unsupported geometry kind `{other}`"))),
    }
    cur.expect(b'(')?;
    let mut rings = vec![cur.ring()?];
    loop {
        match cur.peek() {
            Some(b',') => {
                cur.pos += 1;
                rings.push(cur.ring()?);
            }
            Some(b')') => {
                cur.pos += 1;
                break;
            }
            Some(c) => return Err(cur.err(cur.pos, format!("expected `,` or `)`, found `{}`", c as char))),
            None => return Err(cur.err(cur.pos, "unterminated polygon")),
        }
    }
    if cur.peek().is_some() {
        return Err(cur.err(cur.pos, "trailing characters after polygon"));
    }
    Ok(WktGeometry { rings, crs })
}

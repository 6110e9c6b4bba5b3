//! Versioned text checkpoint for an [`Ensemble`].
//!
//! ```text
//! hgdagger-checkpoint v1
//! layers 7 64 64 2
//! members 5
//! input_mean <7 reals>
//! input_scale <7 reals>
//! output_mean <2 reals>
//! output_scale <2 reals>
//! member 0
//! weights 0 <fan_in·fan_out reals, row-major (fan_in, fan_out)>
//! biases 0 <fan_out reals>
//! weights 1 ...
//! member 1
//! ...
//! ```

use std::fmt::Write as _;
use std::path::Path;

use super::{Ensemble, Mlp, Normalizer};
use crate::error::{Error, Result};

pub const CHECKPOINT_HEADER: &str = "hgdagger-checkpoint v1";
const WHAT: &str = "checkpoint";

struct Reader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Reader<'a> {
    fn next(&mut self, expect: &str) -> Result<(usize, Vec<&'a str>)> {
        let (i, line) = self
            .lines
            .next()
            .ok_or_else(|| Error::format(WHAT, 0, format!("truncated before {expect:?}")))?;
        Ok((i + 1, line.split_whitespace().collect()))
    }

    /// Reads a line `<key words...> <len reals>`.
    fn reals(&mut self, key: &str, len: usize) -> Result<Vec<f64>> {
        let (n, f) = self.next(key)?;
        let kw: Vec<&str> = key.split(' ').collect();
        if f.len() < kw.len() || f[..kw.len()] != kw[..] {
            return Err(Error::format(WHAT, n, format!("expected {key:?}")));
        }
        let vals: Vec<f64> = f[kw.len()..]
            .iter()
            .map(|v| v.parse::<f64>().map_err(|_| Error::format(WHAT, n, "bad real")))
            .collect::<Result<_>>()?;
        if vals.len() != len {
            return Err(Error::format(WHAT, n, format!("{key:?} expects {len} values, got {}", vals.len())));
        }
        Ok(vals)
    }
}

fn push_reals(out: &mut String, key: &str, vals: &[f64]) {
    out.push_str(key);
    for v in vals {
        let _ = write!(out, " {v}");
    }
    out.push('\n');
}

impl Ensemble {
    pub fn to_checkpoint_text(&self) -> String {
        let mut out = format!("{CHECKPOINT_HEADER}\nlayers");
        for s in self.layer_sizes() {
            let _ = write!(out, " {s}");
        }
        let _ = writeln!(out, "\nmembers {}", self.members.len());
        push_reals(&mut out, "input_mean", &self.input_norm.mean);
        push_reals(&mut out, "input_scale", &self.input_norm.scale);
        push_reals(&mut out, "output_mean", &self.output_norm.mean);
        push_reals(&mut out, "output_scale", &self.output_norm.scale);
        for (k, m) in self.members.iter().enumerate() {
            let _ = writeln!(out, "member {k}");
            for l in 0..m.num_layers() {
                let (w, b) = m.layer(l);
                push_reals(&mut out, &format!("weights {l}"), w);
                push_reals(&mut out, &format!("biases {l}"), b);
            }
        }
        out
    }

    pub fn from_checkpoint_text(text: &str) -> Result<Self> {
        let mut r = Reader {
            lines: text.lines().enumerate(),
        };
        let (n, header) = r.next("header")?;
        if header.join(" ") != CHECKPOINT_HEADER {
            return Err(Error::format(WHAT, n, "missing or unsupported header"));
        }
        let (n, f) = r.next("layers")?;
        if f.first() != Some(&"layers") {
            return Err(Error::format(WHAT, n, "expected layers"));
        }
        let sizes: Vec<usize> = f[1..]
            .iter()
            .map(|v| v.parse().map_err(|_| Error::format(WHAT, n, "bad layer size")))
            .collect::<Result<_>>()?;
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::format(WHAT, n, "bad layer sizes"));
        }
        let (n, f) = r.next("members")?;
        let count: usize = match f.as_slice() {
            ["members", c] => c.parse().map_err(|_| Error::format(WHAT, n, "bad member count"))?,
            _ => return Err(Error::format(WHAT, n, "expected members")),
        };
        let d_in = sizes[0];
        let d_out = *sizes.last().unwrap();
        let input_norm = Normalizer {
            mean: r.reals("input_mean", d_in)?,
            scale: r.reals("input_scale", d_in)?,
        };
        let output_norm = Normalizer {
            mean: r.reals("output_mean", d_out)?,
            scale: r.reals("output_scale", d_out)?,
        };
        let mut members = Vec::with_capacity(count);
        for k in 0..count {
            let (n, f) = r.next("member")?;
            if f != ["member", k.to_string().as_str()] {
                return Err(Error::format(WHAT, n, format!("expected member {k}")));
            }
            let mut params = Vec::new();
            for l in 0..sizes.len() - 1 {
                params.extend(r.reals(&format!("weights {l}"), sizes[l] * sizes[l + 1])?);
                params.extend(r.reals(&format!("biases {l}"), sizes[l + 1])?);
            }
            members.push(Mlp::from_params(&sizes, params).expect("parameter count checked per layer"));
        }
        Ensemble::from_parts(members, input_norm, output_norm).map_err(|e| Error::format(WHAT, 0, e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_checkpoint_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint_text(&text)
    }
}

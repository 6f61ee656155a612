//! Run configuration: a small TOML file with the model parameters, the grid
//! and per-command options.

use serde::Serialize;
use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::grid::{GridMode, TorusGrid};
use crate::model::ExampleParams;

pub const KNOWN_KEYS: &[&str] = &[
    "mu1",
    "mu2",
    "c1",
    "c2",
    "c3",
    "d1",
    "d2",
    "d3",
    "w0",
    "v0_amplitude",
    "grid.n",
    "grid.mode",
    "grid.offset",
    "sweep.n",
    "refine",
    "z_list",
    "tol",
    "seed",
    "mu_factors",
];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub params: ExampleParams,
    pub grid_n: usize,
    pub grid_mode: GridMode,
    pub grid_offset: bool,
    /// Points per axis of the p-sweep.
    pub sweep_n: usize,
    /// Grid sizes for refinement studies.
    pub refine: Vec<usize>,
    pub z_list: Vec<f64>,
    pub tol: Option<f64>,
    pub seed: u64,
    /// Multiples of the lower coupling threshold swept by `classify`.
    pub mu_factors: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            params: ExampleParams::default(),
            grid_n: 8,
            grid_mode: GridMode::DoubleCover,
            grid_offset: true,
            sweep_n: 9,
            refine: vec![2, 4],
            z_list: vec![],
            tol: None,
            seed: 7,
            mu_factors: vec![],
        }
    }
}

fn flatten(prefix: &str, table: &Table, out: &mut Vec<(String, Value)>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => out.push((key, other.clone())),
        }
    }
}

fn line_of_offset(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].matches('\n').count() + 1
}

/// Line where a dotted key is defined, either directly or below its table header.
fn line_of_key(src: &str, key: &str) -> usize {
    let mut section = String::new();
    for (i, raw) in src.lines().enumerate() {
        let line = raw.trim();
        if let Some(h) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = h.trim().to_string();
            continue;
        }
        let Some((lhs, _)) = line.split_once('=') else { continue };
        let lhs: String = lhs.split('.').map(|s| s.trim().trim_matches('"')).collect::<Vec<_>>().join(".");
        let full = if section.is_empty() { lhs } else { format!("{section}.{lhs}") };
        if full == key || key.starts_with(&format!("{full}.")) {
            return i + 1;
        }
    }
    0
}

fn number(key: &str, v: &Value, line: usize) -> Result<f64> {
    match v {
        Value::Float(x) => Ok(*x),
        Value::Integer(x) => Ok(*x as f64),
        _ => Err(Error::Config {
            line,
            message: format!("`{key}` must be a number"),
        }),
    }
}

fn count(key: &str, v: &Value, line: usize) -> Result<usize> {
    match v {
        Value::Integer(x) if *x >= 0 => Ok(*x as usize),
        _ => Err(Error::Config {
            line,
            message: format!("`{key}` must be a non-negative integer"),
        }),
    }
}

fn list<T>(key: &str, v: &Value, line: usize, item: impl Fn(&str, &Value, usize) -> Result<T>) -> Result<Vec<T>> {
    match v {
        Value::Array(a) => a.iter().map(|x| item(key, x, line)).collect(),
        _ => Err(Error::Config {
            line,
            message: format!("`{key}` must be an array"),
        }),
    }
}

impl RunConfig {
    pub fn parse(src: &str) -> Result<Self> {
        let table: Table = toml::from_str(src).map_err(|e| Error::Config {
            line: e.span().map_or(0, |s| line_of_offset(src, s.start)),
            message: e.message().trim().to_string(),
        })?;
        let mut entries = Vec::new();
        flatten("", &table, &mut entries);
        let mut unknown: Vec<(usize, &str)> = entries
            .iter()
            .filter(|(k, _)| !KNOWN_KEYS.contains(&k.as_str()))
            .map(|(k, _)| (line_of_key(src, k), k.as_str()))
            .collect();
        unknown.sort();
        if let Some(&(line, _)) = unknown.first() {
            let names: Vec<&str> = unknown.iter().map(|(_, k)| *k).collect();
            return Err(Error::Config {
                line,
                message: format!("unknown keys: {}", names.join(", ")),
            });
        }
        let mut cfg = RunConfig::default();
        for (key, v) in &entries {
            let line = line_of_key(src, key);
            let p = &mut cfg.params;
            match key.as_str() {
                "mu1" => p.mu1 = number(key, v, line)?,
                "mu2" => p.mu2 = number(key, v, line)?,
                "c1" | "c2" | "c3" => p.c[key[1..].parse::<usize>().unwrap() - 1] = number(key, v, line)?,
                "d1" | "d2" | "d3" => p.d[key[1..].parse::<usize>().unwrap() - 1] = number(key, v, line)?,
                "w0" => p.w0 = number(key, v, line)?,
                "v0_amplitude" => p.v0_amplitude = number(key, v, line)?,
                "grid.n" => cfg.grid_n = count(key, v, line)?,
                "grid.mode" => {
                    let s = v.as_str().ok_or_else(|| Error::Config {
                        line,
                        message: "`grid.mode` must be a string".into(),
                    })?;
                    cfg.grid_mode = GridMode::parse(s).map_err(|e| Error::Config {
                        line,
                        message: e.to_string(),
                    })?;
                }
                "grid.offset" => {
                    cfg.grid_offset = v.as_bool().ok_or_else(|| Error::Config {
                        line,
                        message: "`grid.offset` must be true or false".into(),
                    })?
                }
                "sweep.n" => cfg.sweep_n = count(key, v, line)?,
                "refine" => cfg.refine = list(key, v, line, count)?,
                "z_list" => cfg.z_list = list(key, v, line, number)?,
                "tol" => cfg.tol = Some(number(key, v, line)?),
                "seed" => cfg.seed = count(key, v, line)? as u64,
                "mu_factors" => cfg.mu_factors = list(key, v, line, number)?,
                _ => unreachable!(),
            }
        }
        cfg.validate().map_err(|e| match e {
            Error::Config { .. } => e,
            other => Error::Config {
                line: 0,
                message: other.to_string(),
            },
        })?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let src = std::fs::read_to_string(path)?;
        Self::parse(&src)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |message: String| Err(Error::Config { line: 0, message });
        self.params.validate()?;
        if self.grid_n == 0 || self.grid_n % 2 != 0 {
            return bad(format!("grid.n must be a positive even number, got {}", self.grid_n));
        }
        if self.sweep_n < 2 {
            return bad(format!("sweep.n must be at least 2, got {}", self.sweep_n));
        }
        if self.refine.iter().any(|&n| n == 0) {
            return bad("refine entries must be positive".into());
        }
        if let Some(t) = self.tol {
            if !(t > 0.0 && t.is_finite()) {
                return bad(format!("tol must be positive, got {t}"));
            }
        }
        if self.z_list.iter().chain(&self.mu_factors).any(|x| !x.is_finite()) {
            return bad("z_list and mu_factors must be finite".into());
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<TorusGrid> {
        TorusGrid::new(self.grid_n, self.grid_mode, self.grid_offset)
    }

    /// Equivalent TOML text, so that a report can be re-run from its echo.
    pub fn to_toml(&self) -> String {
        let p = &self.params;
        let list = |v: &[String]| v.join(", ");
        let mode = match self.grid_mode {
            GridMode::Base => "base",
            GridMode::DoubleCover => "double",
        };
        let mut s = format!(
            "mu1 = {:?}\nmu2 = {:?}\nc1 = {:?}\nc2 = {:?}\nc3 = {:?}\nd1 = {:?}\nd2 = {:?}\nd3 = {:?}\nw0 = {:?}\nv0_amplitude = {:?}\nseed = {}\nrefine = [{}]\nz_list = [{}]\nmu_factors = [{}]\n",
            p.mu1,
            p.mu2,
            p.c[0],
            p.c[1],
            p.c[2],
            p.d[0],
            p.d[1],
            p.d[2],
            p.w0,
            p.v0_amplitude,
            self.seed,
            list(&self.refine.iter().map(|n| n.to_string()).collect::<Vec<_>>()),
            list(&self.z_list.iter().map(|z| format!("{z:?}")).collect::<Vec<_>>()),
            list(&self.mu_factors.iter().map(|z| format!("{z:?}")).collect::<Vec<_>>()),
        );
        if let Some(t) = self.tol {
            s.push_str(&format!("tol = {t:?}\n"));
        }
        s.push_str(&format!(
            "\n[grid]\nn = {}\nmode = \"{mode}\"\noffset = {}\n\n[sweep]\nn = {}\n",
            self.grid_n, self.grid_offset, self.sweep_n
        ));
        s
    }
}

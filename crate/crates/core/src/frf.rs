//! Sets of local frequency response functions (lFRFs) and their file format.
//!
//! Files store frequencies in Hz and responses as `[re, im]` pairs indexed
//! `[frequency][output][input]`. In memory the grid is kept in rad/s.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{CMat, Error, Result, C64};

pub const FORMAT_VERSION: u32 = 1;

/// Strictly increasing, strictly positive angular frequencies in rad/s.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyGrid {
    values: Vec<f64>,
}

impl FrequencyGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidGrid(format!(
                "at least 2 frequencies required, got {}",
                values.len()
            )));
        }
        for (i, &w) in values.iter().enumerate() {
            if !w.is_finite() {
                return Err(Error::NonFinite(format!("frequency grid[{i}]")));
            }
            if w <= 0.0 {
                return Err(Error::InvalidGrid(format!(
                    "frequency grid[{i}] = {w} is not positive"
                )));
            }
            if i > 0 && values[i - 1] >= w {
                return Err(Error::NonIncreasingGrid { index: i, previous: values[i - 1], value: w });
            }
        }
        Ok(Self { values })
    }

    /// `n` logarithmically spaced points in `[lo, hi]` rad/s.
    pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(lo > 0.0 && hi > lo) {
            return Err(Error::InvalidGrid(format!("log grid bounds [{lo}, {hi}]")));
        }
        let (a, b) = (lo.log10(), hi.log10());
        let denom = (n.max(2) - 1) as f64;
        Self::new((0..n).map(|k| 10f64.powf(a + (b - a) * k as f64 / denom)).collect())
    }

    pub fn from_hz(hz: &[f64]) -> Result<Self> {
        Self::new(hz.iter().map(|f| 2.0 * PI * f).collect())
    }

    pub fn to_hz(&self) -> Vec<f64> {
        self.values.iter().map(|w| w / (2.0 * PI)).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }
}

/// Frozen value of the scheduling vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OperatingPoint(pub Vec<f64>);

impl OperatingPoint {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// One complex `ny × nu` matrix per grid frequency.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexResponse {
    pub outputs: usize,
    pub inputs: usize,
    pub data: Vec<CMat>,
}

impl ComplexResponse {
    pub fn new(outputs: usize, inputs: usize, data: Vec<CMat>) -> Result<Self> {
        for (k, m) in data.iter().enumerate() {
            if m.shape() != (outputs, inputs) {
                return Err(Error::Dimension(format!(
                    "response[{k}] is {:?}, expected {:?}",
                    m.shape(),
                    (outputs, inputs)
                )));
            }
            if let Some(pos) = m.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
                let (r, c) = (pos % outputs, pos / outputs);
                return Err(Error::NonFinite(format!("response[{k}][{r}][{c}]")));
            }
        }
        Ok(Self { outputs, inputs, data })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Entry `(row, col)` across all frequencies.
    pub fn entry(&self, row: usize, col: usize) -> Vec<C64> {
        self.data.iter().map(|m| m[(row, col)]).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalFrf {
    pub point: OperatingPoint,
    pub response: ComplexResponse,
}

/// A set of lFRFs sharing one grid. Responses are RB-decoupled and square.
#[derive(Clone, Debug, PartialEq)]
pub struct FrfSet {
    pub grid: FrequencyGrid,
    pub locals: Vec<LocalFrf>,
    pub n_rb: usize,
    pub np: usize,
    /// Sampling time when the responses are discrete-time measurements
    /// evaluated at `z = e^{jωTs}`; `None` for continuous-time data.
    pub sample_time: Option<f64>,
    /// Box bounds of the scheduling set; defaults to the bounding box of the
    /// stored operating points.
    pub scheduling_box: Option<Vec<(f64, f64)>>,
}

impl FrfSet {
    pub fn new(grid: FrequencyGrid, locals: Vec<LocalFrf>) -> Result<Self> {
        let first = locals.first().ok_or(Error::EmptySet)?;
        let n_rb = first.response.outputs;
        let np = first.point.dim();
        let set = Self { grid, locals, n_rb, np, sample_time: None, scheduling_box: None };
        set.validate()?;
        Ok(set)
    }

    pub fn with_sample_time(mut self, ts: Option<f64>) -> Result<Self> {
        if let Some(t) = ts {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Config(format!("sample time {t} must be positive")));
            }
        }
        self.sample_time = ts;
        self.validate()?;
        Ok(self)
    }

    pub fn with_scheduling_box(mut self, bounds: Vec<(f64, f64)>) -> Result<Self> {
        self.scheduling_box = Some(bounds);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.locals.is_empty() {
            return Err(Error::EmptySet);
        }
        for (i, local) in self.locals.iter().enumerate() {
            let r = &local.response;
            if r.outputs != self.n_rb || r.inputs != self.n_rb {
                return Err(Error::Dimension(format!(
                    "locals[{i}] response is {}×{}, expected {}×{} (square, n_rb)",
                    r.outputs, r.inputs, self.n_rb, self.n_rb
                )));
            }
            if r.len() != self.grid.len() {
                return Err(Error::Dimension(format!(
                    "locals[{i}] has {} frequency records, grid has {}",
                    r.len(),
                    self.grid.len()
                )));
            }
            if local.point.dim() != self.np {
                return Err(Error::Dimension(format!(
                    "locals[{i}].p has dimension {}, expected {}",
                    local.point.dim(),
                    self.np
                )));
            }
            if let Some(pos) = local.point.0.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("locals[{i}].p[{pos}]")));
            }
        }
        if let Some(bounds) = &self.scheduling_box {
            if bounds.len() != self.np {
                return Err(Error::Dimension(format!(
                    "scheduling box has {} intervals, np = {}",
                    bounds.len(),
                    self.np
                )));
            }
            for (i, local) in self.locals.iter().enumerate() {
                for (k, (&v, &(lo, hi))) in local.point.0.iter().zip(bounds).enumerate() {
                    if v < lo || v > hi {
                        return Err(Error::Config(format!(
                            "locals[{i}].p[{k}] = {v} outside scheduling box [{lo}, {hi}]"
                        )));
                    }
                }
            }
        }
        if let Some(ts) = self.sample_time {
            let limit = PI / ts;
            if self.grid.max() > limit * (1.0 + 1e-12) {
                return Err(Error::AboveNyquist { omega: self.grid.max(), limit });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.locals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locals.is_empty()
    }

    /// Declared scheduling box, or the bounding box of the operating points.
    pub fn scheduling_bounds(&self) -> Vec<(f64, f64)> {
        if let Some(b) = &self.scheduling_box {
            return b.clone();
        }
        (0..self.np)
            .map(|k| {
                self.locals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), l| {
                    (lo.min(l.point.0[k]), hi.max(l.point.0[k]))
                })
            })
            .collect()
    }
}

#[derive(Serialize, Deserialize)]
struct FrfFile {
    format_version: u32,
    rb_decoupled: bool,
    n_rb: usize,
    np: usize,
    frequencies_hz: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sample_time_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scheduling_box: Option<Vec<[f64; 2]>>,
    locals: Vec<LocalFile>,
}

#[derive(Serialize, Deserialize)]
struct LocalFile {
    p: Vec<f64>,
    response: Vec<Vec<Vec<[f64; 2]>>>,
}

pub fn load_frf_set(path: impl AsRef<Path>) -> Result<FrfSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_frf_set(&text).map_err(|e| match e {
        Error::Parse { location, message } => Error::Parse {
            location: format!("{}: {location}", path.display()),
            message,
        },
        other => other,
    })
}

pub fn parse_frf_set(text: &str) -> Result<FrfSet> {
    let file: FrfFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        location: format!("line {} column {}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    if file.format_version != FORMAT_VERSION {
        return Err(Error::Parse {
            location: "format_version".into(),
            message: format!("unsupported format version {}", file.format_version),
        });
    }
    if !file.rb_decoupled {
        return Err(Error::Config("FRF file is not flagged rb_decoupled".into()));
    }
    let grid = FrequencyGrid::from_hz(&file.frequencies_hz)?;
    let mut locals = Vec::with_capacity(file.locals.len());
    for (i, local) in file.locals.into_iter().enumerate() {
        if local.response.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "locals[{i}] has {} frequency records, grid has {}",
                local.response.len(),
                grid.len()
            )));
        }
        let mut data = Vec::with_capacity(grid.len());
        for (k, rows) in local.response.iter().enumerate() {
            if rows.len() != file.n_rb || rows.iter().any(|r| r.len() != file.n_rb) {
                return Err(Error::Dimension(format!(
                    "locals[{i}].response[{k}] is not {n}×{n}",
                    n = file.n_rb
                )));
            }
            data.push(CMat::from_fn(file.n_rb, file.n_rb, |r, c| {
                C64::new(rows[r][c][0], rows[r][c][1])
            }));
        }
        let response = ComplexResponse::new(file.n_rb, file.n_rb, data).map_err(|e| match e {
            Error::NonFinite(loc) => Error::NonFinite(format!("locals[{i}].{loc}")),
            other => other,
        })?;
        locals.push(LocalFrf { point: OperatingPoint(local.p), response });
    }
    if locals.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut set = FrfSet {
        grid,
        locals,
        n_rb: file.n_rb,
        np: file.np,
        sample_time: file.sample_time_s,
        scheduling_box: file.scheduling_box.map(|b| b.iter().map(|i| (i[0], i[1])).collect()),
    };
    set.validate()?;
    set = set.with_sample_time(file.sample_time_s)?;
    Ok(set)
}

pub fn frf_set_to_json(set: &FrfSet) -> Result<String> {
    set.validate()?;
    let file = FrfFile {
        format_version: FORMAT_VERSION,
        rb_decoupled: true,
        n_rb: set.n_rb,
        np: set.np,
        frequencies_hz: set.grid.to_hz(),
        sample_time_s: set.sample_time,
        scheduling_box: set.scheduling_box.as_ref().map(|b| b.iter().map(|&(l, h)| [l, h]).collect()),
        locals: set
            .locals
            .iter()
            .map(|l| LocalFile {
                p: l.point.0.clone(),
                response: l
                    .response
                    .data
                    .iter()
                    .map(|m| {
                        (0..m.nrows())
                            .map(|r| (0..m.ncols()).map(|c| [m[(r, c)].re, m[(r, c)].im]).collect())
                            .collect()
                    })
                    .collect(),
            })
            .collect(),
    };
    serde_json::to_string(&file).map_err(|e| Error::Parse { location: "serialize".into(), message: e.to_string() })
}

pub fn save_frf_set(set: &FrfSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = frf_set_to_json(set)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
